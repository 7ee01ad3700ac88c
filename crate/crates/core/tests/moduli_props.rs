use proptest::prelude::*;

mod common;
use common::seeded;

use toda_brane::lie_cartan::{cartan_matrix, Family};
use toda_brane::moduli_poly::*;

fn a_problem(m: usize, mu: f64, bbar: Vec<f64>) -> ModuliProblem {
    ModuliProblem::new(cartan_matrix(Family::A, m).unwrap(), mu, bbar).unwrap()
}

fn flat(p: &ModuliPolynomial) -> Vec<f64> {
    p.coeffs.iter().flatten().copied().collect()
}

proptest! {
    #![proptest_config(seeded(100, 3))]

    #[test]
    fn a2_closed_form_solves_the_system(mu in 0.05f64..3.0, p1 in 0.0f64..3.0, p2 in 0.0f64..3.0) {
        let c = closed_form_a2(mu, p1, p2).unwrap();
        let prob = a_problem(2, mu, c.bbar.to_vec());
        let sys = poly_system(&prob).unwrap();
        let x = flat(&c.to_polynomial(mu));
        let scale = 1.0 + p1.max(p2).max(mu).powi(4);
        let worst = sys.residuals(&x).iter().chain(&sys.overflow(&x)).fold(0.0f64, |a, r| a.max(r.abs()));
        prop_assert!(worst <= 1e-13 * scale, "residual {} (scale {})", worst, scale);
    }
}

proptest! {
    #![proptest_config(seeded(40, 4))]

    #[test]
    fn solved_functions_are_normalised_and_positive(
        m in 1usize..=4,
        mu in 0.1f64..2.0,
        raw in prop::collection::vec(0.05f64..4.0, 4),
    ) {
        let bbar: Vec<f64> = raw[..m].iter().map(|b| -b).collect();
        let sol = solve_poly(&a_problem(m, mu, bbar)).unwrap();
        for s in 0..m {
            prop_assert_eq!(sol.poly.eval(s, 0.0), 1.0);
        }
        prop_assert!(sol.poly.check_positive().is_ok());
        for h0 in sol.poly.horizon_values() {
            prop_assert!(h0.is_finite() && h0 > 0.0);
        }
    }

    #[test]
    fn mirror_symmetric_data_gives_mirror_symmetric_solution(
        m in 2usize..=4,
        mu in 0.2f64..2.0,
        raw in prop::collection::vec(0.05f64..4.0, 2),
    ) {
        let bbar: Vec<f64> = (0..m).map(|s| -raw[s.min(m - 1 - s)]).collect();
        let sol = solve_poly(&a_problem(m, mu, bbar)).unwrap();
        for s in 0..m {
            for (x, y) in sol.poly.coeffs[s].iter().zip(&sol.poly.coeffs[m - 1 - s]) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn equal_a2_charges_reduce_to_squares(mu in 0.1f64..2.0, b in 0.05f64..5.0) {
        let sol = solve_poly(&a_problem(2, mu, vec![-b, -b])).unwrap();
        let block = closed_form_block_orthogonal(&[vec![0, 1]], mu, &[-b, -b], &[2, 2]).unwrap();
        prop_assert!(sol.poly.max_coeff_diff(&block) <= 1e-12 * (1.0 + b));
    }
}

proptest! {
    #![proptest_config(seeded(12, 5))]

    #[test]
    fn solutions_vary_continuously_as_mu_shrinks(raw in prop::collection::vec(0.05f64..3.0, 3)) {
        let bbar: Vec<f64> = raw.iter().map(|b| -b).collect();
        let mut mu = 1.0;
        let mut prev = solve_poly(&a_problem(3, mu, bbar.clone())).unwrap().poly;
        for _ in 0..10 {
            let next_mu = mu / 2.0;
            let next = solve_poly(&a_problem(3, next_mu, bbar.clone())).unwrap().poly;
            let drift = next.max_coeff_diff(&prev);
            let size = flat(&prev).iter().fold(1.0f64, |a, c| a.max(c.abs()));
            // Lipschitz in mu with a constant set by the coefficient size
            prop_assert!(drift <= 20.0 * size * (mu - next_mu), "drift {} at mu {}", drift, next_mu);
            prev = next;
            mu = next_mu;
        }
    }
}

#[test]
fn a1_closed_form_matches_solver() {
    for bbar in [-0.1, -1.0, -7.5, 0.3] {
        let sol = solve_poly(&a_problem(1, 1.0, vec![bbar])).unwrap();
        let roots = closed_form_a1(1.0, bbar).unwrap();
        assert!((sol.poly.coeffs[0][0] - roots.p).abs() < 1e-12);
        assert!(sol.alternates.iter().any(|a| (a.poly.coeffs[0][0] - roots.alternate).abs() < 1e-9));
    }
}

#[test]
fn special_a2_branch_satisfies_the_system() {
    let mu = 0.7;
    let c = closed_form_a2_special(mu, 0.5, 4.0 * mu * mu - 0.5).unwrap();
    let prob = a_problem(2, mu, c.bbar.to_vec());
    let sys = poly_system(&prob).unwrap();
    let x = flat(&c.to_polynomial(mu));
    assert!(sys.residuals(&x).iter().all(|r| r.abs() < 1e-13));
    assert!(closed_form_a2_special(mu, 0.5, 0.5).is_err());
}
