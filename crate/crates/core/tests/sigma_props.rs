use nalgebra::DMatrix;
use num_traits::Zero;
use proptest::prelude::*;

mod common;
use common::{config_strategy, coupled, seeded};

use toda_brane::lie_cartan::{polynomial_degrees, rat};
use toda_brane::sigma_model::*;

proptest! {
    #![proptest_config(seeded(160, 1))]

    #[test]
    fn formula_matches_contraction((config, coupling) in coupled()) {
        let metric = target_metric(&config).unwrap();
        let ginv = metric.full_inverse();
        let us: Vec<Vec<f64>> = brane_u_vectors(&config).iter().map(UVector::to_f64).collect();
        let dm2 = f64::from(config.total_dimension()) - 2.0;
        for s in 0..config.branes.len() {
            for t in 0..config.branes.len() {
                let (bs, bt) = (&config.branes[s], &config.branes[t]);
                let ds = f64::from(config.index_dim(&bs.index_set));
                let dt = f64::from(config.index_dim(&bt.index_set));
                let lam: f64 = (0..config.l()).map(|a| bs.lambda[a] * bt.lambda[a] / config.h_metric[a][a]).sum();
                let formula = f64::from(config.intersection_dim(s, t)) - ds * dt / dm2
                    + f64::from(bs.chi() * bt.chi()) * lam;
                let u = DMatrix::from_row_slice(1, us[s].len(), &us[s]);
                let v = DMatrix::from_column_slice(us[t].len(), 1, &us[t]);
                let contraction = (u * &ginv * v)[(0, 0)];
                prop_assert!((formula - contraction).abs() <= 1e-12 * formula.abs().max(1.0));
                prop_assert!((coupling.b[(s, t)] - formula).abs() <= 1e-12 * formula.abs().max(1.0));
            }
        }
    }

    #[test]
    fn branes_orthogonal_to_curvature(config in config_strategy()) {
        let metric = target_metric(&config).unwrap();
        let u1 = curvature_u_vector(&config);
        for u in brane_u_vectors(&config) {
            prop_assert!(u.space_dot(&u1, &metric.g_inv).is_zero());
            prop_assert_eq!(u.scalar_dot(&u1, &metric.h_inv), 0.0);
        }
    }

    #[test]
    fn symmetric_b_and_unit_diagonal((_config, coupling) in coupled()) {
        let n = coupling.len();
        for s in 0..n {
            prop_assert_eq!(coupling.a.entry(s, s), &rat(2));
            for t in 0..n {
                prop_assert_eq!(coupling.b[(s, t)], coupling.b[(t, s)]);
            }
        }
    }

    #[test]
    fn positive_b_gives_positive_ha((_config, coupling) in coupled()) {
        if is_positive_definite(&coupling.b) {
            prop_assert!(is_positive_definite(&coupling.ha_matrix()));
        }
    }

    #[test]
    fn b0_matches_degrees((config, coupling) in coupled()) {
        let b0 = b0_parameters(&coupling.a, &config, &coupling).unwrap();
        let degrees = polynomial_degrees(&coupling.a).unwrap();
        prop_assert_eq!(&b0.b0_s, &degrees);
        // b_0 is orthogonal to every brane covector
        for (s, u) in brane_u_vectors(&config).iter().enumerate() {
            let dot: f64 = u.to_f64().iter().zip(&b0.b0_a).map(|(x, y)| x * y).sum();
            prop_assert!(dot.abs() < 1e-8, "brane {} gives {}", s, dot);
        }
    }
}
