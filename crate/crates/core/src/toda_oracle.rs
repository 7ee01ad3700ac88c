//! Independent checks of the moduli polynomials.
//!
//! * The exact `A_m` open Toda chain solution
//!   `C_s e^{-q^s} = sum_{|R| = s} v_R Delta^2(w_R) e^{(sum w_R) u}`,
//!   whose black-hole spectrum turns `e^{-q^s - n_s mubar u}` into a polynomial
//!   in `F = e^{-2 mubar u} = 1 - 2 mu z`.
//! * The folding of the `C_{m+1}` system into a mirror-symmetric `A_{2m+1}`
//!   system.
//! * A direct initial-value integration of the moduli equation and a shooting
//!   method for the slopes `H_s'(0)`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::lie_cartan::{cartan_matrix, mat_mul, polynomial_degrees, rat, Family, QuasiCartan, RationalMatrix};
use crate::moduli_poly::{ModuliError, ModuliPolynomial, ModuliProblem};
use crate::ode::{integrate, OdeError, OdeOptions};
use crate::poly::Poly;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TodaError {
    #[error("chain length m must be at least 1")]
    EmptyChain,
    #[error("expected {expected} spectral parameters, got {got}")]
    Length { expected: usize, got: usize },
    #[error("spectral parameters w_{i} and w_{j} coincide")]
    NonDistinct { i: usize, j: usize },
    #[error("spectral parameters must sum to zero, got {0}")]
    NonzeroSum(f64),
    #[error("amplitude v_{0} vanishes")]
    ZeroAmplitude(usize),
    #[error("amplitudes violate prod v = Delta^-2(w): prod v Delta^2 = {0}")]
    ProductConstraint(f64),
    #[error("C_{s} e^(-q^{s}) is not positive at u = {u}")]
    Domain { s: usize, u: f64 },
    #[error("H_{s}(0) = {value} differs from 1")]
    Normalization { s: usize, value: f64 },
    #[error("spectrum is not the black-hole spectrum: exponent {exponent} of brane {s} is not in 0..=n_s")]
    NotBlackHole { s: usize, exponent: f64 },
    #[error("could not calibrate amplitudes to the requested B (residual {0:e})")]
    Calibration(f64),
    #[error("B_{0} must be positive for real Toda parameters")]
    NonPositiveB(usize),
    #[error("dbar must be positive")]
    BadDbar,
    #[error("mubar must be positive and finite, got {0}")]
    BadMuBar(f64),
    #[error("integration end z = {z_end} must lie in (0, {limit})")]
    BeyondDomain { z_end: f64, limit: f64 },
    #[error("H_{brane} left the positive region near z = {z}")]
    Positivity { brane: usize, z: f64 },
    #[error("step size underflow near z = {z}")]
    StepUnderflow { z: f64 },
    #[error("step budget exhausted near z = {z}")]
    TooManySteps { z: f64 },
    #[error("shooting supports at most {max} branes, got {got}")]
    ShootingDimension { max: usize, got: usize },
    #[error("no bounded trajectory found in the search box (best |G0| = {residual:e}){}", diagnostic.as_ref().map(|d| format!("; {d}")).unwrap_or_default())]
    NoBoundedTrajectory { residual: f64, diagnostic: Option<String> },
    #[error(transparent)]
    Moduli(#[from] ModuliError),
}

/// `A_m` Cartan matrix as floats.
fn a_matrix(m: usize) -> DMatrix<f64> {
    cartan_matrix(Family::A, m).expect("A_m exists for m >= 1").to_f64()
}

/// One subset term: `log |v_R Delta^2(w_R)|`, its sign and `sum w_R`.
#[derive(Clone, Debug)]
struct Term {
    log_coef: f64,
    sign: f64,
    rate: f64,
    members: Vec<usize>,
}

/// Exact solution of the `A_m` open Toda chain
/// `q''^s = -B_s exp(sum_t A_st q^t)` with `q^s(0) = 0`.
#[derive(Clone, Debug)]
pub struct TodaChainSolution {
    m: usize,
    v: Vec<f64>,
    w: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    terms: Vec<Vec<Term>>,
}

fn check_spectrum(w: &[f64]) -> Result<(), TodaError> {
    if w.len() < 2 {
        return Err(TodaError::EmptyChain);
    }
    let scale = w.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    let sum: f64 = w.iter().sum();
    if sum.abs() > 1e-12 * scale * w.len() as f64 {
        return Err(TodaError::NonzeroSum(sum));
    }
    for i in 0..w.len() {
        for j in i + 1..w.len() {
            if (w[i] - w[j]).abs() <= 1e-12 * scale {
                return Err(TodaError::NonDistinct { i, j });
            }
        }
    }
    Ok(())
}

fn subset_terms(v: &[f64], w: &[f64], s: usize) -> Vec<Term> {
    let n = w.len();
    let mut out = Vec::new();
    for mask in 0u64..1 << n {
        if mask.count_ones() as usize != s {
            continue;
        }
        let members: Vec<usize> = (0..n).filter(|&r| mask >> r & 1 == 1).collect();
        let mut log_coef = 0.0;
        let mut sign = 1.0;
        let mut rate = 0.0;
        for (i, &r) in members.iter().enumerate() {
            log_coef += v[r].abs().ln();
            sign *= v[r].signum();
            rate += w[r];
            for &t in &members[i + 1..] {
                log_coef += 2.0 * (w[r] - w[t]).abs().ln();
            }
        }
        out.push(Term { log_coef, sign, rate, members });
    }
    out
}

/// `ln Delta^2(w)` over all parameters.
fn log_vandermonde_sq(w: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..w.len() {
        for j in i + 1..w.len() {
            acc += 2.0 * (w[i] - w[j]).abs().ln();
        }
    }
    acc
}

/// `ln sum_R sign_R exp(log_coef_R + rate_R u)` and the rate-weighted mean;
/// `None` if the sum is not positive.
fn log_sum(terms: &[Term], u: f64) -> Option<(f64, f64)> {
    let top = terms.iter().map(|t| t.log_coef + t.rate * u).fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    let mut weighted = 0.0;
    for t in terms {
        let e = t.sign * (t.log_coef + t.rate * u - top).exp();
        sum += e;
        weighted += e * t.rate;
    }
    (sum > 0.0).then(|| (top + sum.ln(), weighted / sum))
}

/// `v_r = Delta^{-2/(m+1)}(w)`, the symmetric choice satisfying the product
/// constraint.
pub fn uniform_amplitudes(w: &[f64]) -> Vec<f64> {
    let v = (-log_vandermonde_sq(w) / w.len() as f64).exp();
    vec![v; w.len()]
}

impl TodaChainSolution {
    /// Solution with spectral data `(w, v)`; `C_s` is fixed by `q(0) = 0` and
    /// `B_s = prod_t C_t^{-A_st}` follows.
    pub fn from_amplitudes(w: Vec<f64>, v: Vec<f64>) -> Result<Self, TodaError> {
        check_spectrum(&w)?;
        if v.len() != w.len() {
            return Err(TodaError::Length { expected: w.len(), got: v.len() });
        }
        if let Some(r) = v.iter().position(|&x| x == 0.0 || !x.is_finite()) {
            return Err(TodaError::ZeroAmplitude(r));
        }
        let m = w.len() - 1;
        let log_prod: f64 = v.iter().map(|x| x.abs().ln()).sum::<f64>() + log_vandermonde_sq(&w);
        let sign: f64 = v.iter().map(|x| x.signum()).product();
        if sign < 0.0 || log_prod.abs() > 1e-10 {
            return Err(TodaError::ProductConstraint(sign * log_prod.exp()));
        }
        let terms: Vec<Vec<Term>> = (1..=m).map(|s| subset_terms(&v, &w, s)).collect();
        let mut log_c = Vec::with_capacity(m);
        for (s, t) in terms.iter().enumerate() {
            let (l, _) = log_sum(t, 0.0).ok_or(TodaError::Domain { s: s + 1, u: 0.0 })?;
            log_c.push(l);
        }
        let a = a_matrix(m);
        let b = (0..m).map(|s| (-(0..m).map(|t| a[(s, t)] * log_c[t]).sum::<f64>()).exp()).collect();
        let c = log_c.iter().map(|l| l.exp()).collect();
        Ok(TodaChainSolution { m, v, w, b, c, terms })
    }

    /// Solution with spectrum `w` and prescribed `B_s > 0`, obtained by
    /// Newton continuation in `ln v`. Since the energy bounds the potential at
    /// `u = 0`, large `B` are unreachable for a given spectrum and yield
    /// [`TodaError::Calibration`].
    pub fn calibrated(w: Vec<f64>, b: &[f64]) -> Result<Self, TodaError> {
        check_spectrum(&w)?;
        let m = w.len() - 1;
        if b.len() != m {
            return Err(TodaError::Length { expected: m, got: b.len() });
        }
        if let Some(s) = b.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(TodaError::NonPositiveB(s));
        }
        // uniform amplitudes give q'(0) = 0, a fold of v -> B; start off it
        let mut v0 = uniform_amplitudes(&w);
        let mid = m as f64 / 2.0;
        for (r, v) in v0.iter_mut().enumerate() {
            *v *= (0.5 * (r as f64 - mid)).exp();
        }
        let start = TodaChainSolution::from_amplitudes(w.clone(), v0)?;
        let ainv = a_matrix(m).try_inverse().expect("Cartan matrix is invertible");
        let log_c_of = |lb: &[f64]| -> Vec<f64> {
            (0..m).map(|s| -(0..m).map(|t| ainv[(s, t)] * lb[t]).sum::<f64>()).collect()
        };
        let lb0: Vec<f64> = start.b.iter().map(|x| x.ln()).collect();
        let lb1: Vec<f64> = b.iter().map(|x| x.ln()).collect();
        let log_d2 = log_vandermonde_sq(&w);
        let mut x: Vec<f64> = start.v.iter().map(|v| v.ln()).collect();

        const STEPS: usize = 16;
        for step in 1..=STEPS {
            let t = step as f64 / STEPS as f64;
            let lb: Vec<f64> = lb0.iter().zip(&lb1).map(|(a, b)| a + t * (b - a)).collect();
            let target = log_c_of(&lb);
            let mut converged = false;
            let mut res = f64::INFINITY;
            for _ in 0..50 {
                let v: Vec<f64> = x.iter().map(|l| l.exp()).collect();
                let mut r = vec![0.0; m + 1];
                let mut jac = DMatrix::zeros(m + 1, m + 1);
                for s in 1..=m {
                    let terms = subset_terms(&v, &w, s);
                    let (ls, _) = log_sum(&terms, 0.0).ok_or(TodaError::Calibration(f64::INFINITY))?;
                    r[s - 1] = ls - target[s - 1];
                    for term in &terms {
                        let share = (term.log_coef - ls).exp();
                        for &k in &term.members {
                            jac[(s - 1, k)] += share;
                        }
                    }
                }
                r[m] = x.iter().sum::<f64>() + log_d2;
                for k in 0..=m {
                    jac[(m, k)] = 1.0;
                }
                res = r.iter().fold(0.0f64, |a, b| a.max(b.abs()));
                if res <= 1e-14 {
                    converged = true;
                    break;
                }
                let dx = jac.lu().solve(&-DVector::from_vec(r)).ok_or(TodaError::Calibration(res))?;
                for (xi, d) in x.iter_mut().zip(dx.iter()) {
                    *xi += d;
                }
            }
            if !converged && res > 1e-11 {
                return Err(TodaError::Calibration(res));
            }
        }
        let mut v: Vec<f64> = x.iter().map(|l| l.exp()).collect();
        // absorb rounding so the product constraint holds to machine precision
        let drift = (v.iter().map(|x| x.ln()).sum::<f64>() + log_d2) / v.len() as f64;
        for vi in &mut v {
            *vi *= (-drift).exp();
        }
        TodaChainSolution::from_amplitudes(w, v)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn cartan(&self) -> DMatrix<f64> {
        a_matrix(self.m)
    }
}

/// `q^s(u)`, `s = 1..m`.
pub fn anderson_q(sol: &TodaChainSolution, u: f64) -> Result<Vec<f64>, TodaError> {
    sol.terms
        .iter()
        .enumerate()
        .map(|(s, t)| {
            let (l, _) = log_sum(t, u).ok_or(TodaError::Domain { s: s + 1, u })?;
            Ok(sol.c[s].ln() - l)
        })
        .collect()
}

/// Analytic velocities `dq^s/du`.
pub fn anderson_qdot(sol: &TodaChainSolution, u: f64) -> Result<Vec<f64>, TodaError> {
    sol.terms
        .iter()
        .enumerate()
        .map(|(s, t)| {
            let (_, rate) = log_sum(t, u).ok_or(TodaError::Domain { s: s + 1, u })?;
            Ok(-rate)
        })
        .collect()
}

/// `-B_s exp(sum_t A_st q^t)`, the right-hand side of the chain equations.
pub fn toda_force(sol: &TodaChainSolution, q: &[f64]) -> Vec<f64> {
    let a = sol.cartan();
    (0..sol.m).map(|s| -sol.b[s] * (0..sol.m).map(|t| a[(s, t)] * q[t]).sum::<f64>().exp()).collect()
}

/// Pointwise residual of the chain equations from central second differences
/// with step `h`; with `richardson` the combination `(4 D(h) - D(2h)) / 3` is
/// used instead of `D(h)`.
pub fn toda_residual(sol: &TodaChainSolution, u: f64, h: f64, richardson: bool) -> Result<Vec<f64>, TodaError> {
    let q0 = anderson_q(sol, u)?;
    let second = |step: f64| -> Result<Vec<f64>, TodaError> {
        let qp = anderson_q(sol, u + step)?;
        let qm = anderson_q(sol, u - step)?;
        Ok((0..sol.m).map(|s| (qp[s] - 2.0 * q0[s] + qm[s]) / (step * step)).collect())
    };
    let d = if richardson {
        let (d1, d2) = (second(h)?, second(2.0 * h)?);
        d1.iter().zip(&d2).map(|(a, b)| (4.0 * a - b) / 3.0).collect()
    } else {
        second(h)?
    };
    let f = toda_force(sol, &q0);
    Ok(d.iter().zip(&f).map(|(a, b)| a - b).collect())
}

/// Kinetic plus potential energy at `u` with velocities from central
/// differences of step `h`.
pub fn energy_along(sol: &TodaChainSolution, u: f64, h: f64) -> Result<f64, TodaError> {
    let qp = anderson_q(sol, u + h)?;
    let qm = anderson_q(sol, u - h)?;
    let qdot: Vec<f64> = qp.iter().zip(&qm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
    Ok(energy_at(sol, &anderson_q(sol, u)?, &qdot))
}

/// `(1/2) A_st q'^s q'^t + sum_s B_s exp(sum_t A_st q^t)`.
pub fn energy_at(sol: &TodaChainSolution, q: &[f64], qdot: &[f64]) -> f64 {
    let a = sol.cartan();
    let m = sol.m;
    let mut kinetic = 0.0;
    for s in 0..m {
        for t in 0..m {
            kinetic += 0.5 * a[(s, t)] * qdot[s] * qdot[t];
        }
    }
    kinetic - toda_force(sol, q).iter().sum::<f64>()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TodaEnergy {
    /// `(1/2) sum w_r^2`.
    pub e_t: f64,
    /// `(h/4) sum w_r^2`.
    pub e_tl: f64,
}

pub fn toda_energy(sol: &TodaChainSolution, h: f64) -> TodaEnergy {
    let sq: f64 = sol.w.iter().map(|w| w * w).sum();
    TodaEnergy { e_t: 0.5 * sq, e_tl: 0.25 * h * sq }
}

/// `w_j = (2 j - m - 2) mubar`, `j = 1..m+1`.
pub fn black_hole_spectrum(m: usize, mu_bar: f64) -> Vec<f64> {
    (1..=m + 1).map(|j| (2.0 * j as f64 - m as f64 - 2.0) * mu_bar).collect()
}

/// Samples `H_s(u) = exp(-q^s(u) - n_s mubar u)` on `u_grid`.
pub fn h_from_toda(
    sol: &TodaChainSolution,
    n: &[usize],
    mu_bar: f64,
    u_grid: &[f64],
) -> Result<Vec<Vec<f64>>, TodaError> {
    if n.len() != sol.m {
        return Err(TodaError::Length { expected: sol.m, got: n.len() });
    }
    let q0 = anderson_q(sol, 0.0)?;
    for (s, q) in q0.iter().enumerate() {
        let value = (-q).exp();
        if (value - 1.0).abs() > 1e-9 {
            return Err(TodaError::Normalization { s: s + 1, value });
        }
    }
    u_grid
        .iter()
        .map(|&u| {
            let q = anderson_q(sol, u)?;
            Ok(q.iter().zip(n).map(|(q, &ns)| (-q - ns as f64 * mu_bar * u).exp()).collect())
        })
        .collect()
}

/// `z = (1 - e^{-2 mubar u}) / (2 mu)` with `mu = mubar / dbar`.
pub fn z_of_u(u: f64, mu_bar: f64, dbar: f64) -> f64 {
    -(-2.0 * mu_bar * u).exp_m1() * dbar / (2.0 * mu_bar)
}

/// Exact moduli polynomials carried by a black-hole-spectrum solution.
///
/// The coefficient of `F^k` in `H_s` collects the subsets with
/// `sum w_R = (n_s - 2k) mubar`; expanding `F = 1 - 2 mu z` gives the
/// coefficients in `z`. The result has `mu = mubar / dbar` and
/// `Bbar_s = B_s / dbar^2`.
pub fn toda_polynomial(
    sol: &TodaChainSolution,
    n: &[usize],
    mu_bar: f64,
    dbar: f64,
) -> Result<ModuliPolynomial, TodaError> {
    if !(mu_bar > 0.0 && mu_bar.is_finite()) {
        return Err(TodaError::BadMuBar(mu_bar));
    }
    if !(dbar > 0.0) {
        return Err(TodaError::BadDbar);
    }
    if n.len() != sol.m {
        return Err(TodaError::Length { expected: sol.m, got: n.len() });
    }
    let mu = mu_bar / dbar;
    let f = Poly(vec![1.0, -2.0 * mu]);
    let mut coeffs = Vec::with_capacity(sol.m);
    for (s, terms) in sol.terms.iter().enumerate() {
        let ns = n[s];
        let mut alpha = vec![0.0; ns + 1];
        for t in terms {
            let exponent = (ns as f64 - t.rate / mu_bar) / 2.0;
            let k = exponent.round();
            if (exponent - k).abs() > 1e-9 || k < 0.0 || k > ns as f64 {
                return Err(TodaError::NotBlackHole { s: s + 1, exponent });
            }
            alpha[k as usize] += t.sign * (t.log_coef - sol.c[s].ln()).exp();
        }
        let mut h = Poly::zero();
        for (k, a) in alpha.iter().enumerate() {
            h = &h + &f.powi(k as u32).scale(*a);
        }
        let c0 = h.coeff(0);
        if (c0 - 1.0).abs() > 1e-9 {
            return Err(TodaError::Normalization { s: s + 1, value: c0 });
        }
        coeffs.push((1..=ns).map(|k| h.coeff(k)).collect());
    }
    Ok(ModuliPolynomial { coeffs, mu, bbar: sol.b.iter().map(|b| b / (dbar * dbar)).collect() })
}

/// Least-squares fit of a degree-`degree` polynomial in `z` (on the scaled
/// variable `z / z_scale`); returns coefficients in `z` and the max residual.
pub fn fit_polynomial(z: &[f64], values: &[f64], degree: usize, z_scale: f64) -> (Vec<f64>, f64) {
    let rows = z.len();
    let vander = DMatrix::from_fn(rows, degree + 1, |i, k| (z[i] / z_scale).powi(k as i32));
    let rhs = DVector::from_column_slice(values);
    let svd = vander.clone().svd(true, true);
    let c = svd.solve(&rhs, 1e-14).expect("SVD with vectors computed");
    let fitted = &vander * &c;
    let worst = fitted.iter().zip(values).fold(0.0f64, |a, (f, v)| a.max((f - v).abs()));
    let coeffs = c.iter().enumerate().map(|(k, x)| x / z_scale.powi(k as i32)).collect();
    (coeffs, worst)
}

/// Embedding of the `C_{m+1}` system into `A_{2m+1}`.
///
/// `A` indices `j = 0..=2m` correspond to the symmetric labels `s = j - m`
/// in `-m..=m`; the `C` index of `j` is `|j - m|`.
#[derive(Clone, Debug)]
pub struct Folding {
    pub m: usize,
    /// `map[j]` = `C` index of `A` index `j`.
    pub map: Vec<usize>,
    pub a: QuasiCartan,
    pub c: QuasiCartan,
}

pub fn fold_c_to_a(m: usize) -> Result<Folding, TodaError> {
    if m == 0 {
        return Err(TodaError::EmptyChain);
    }
    let a = cartan_matrix(Family::A, 2 * m + 1).map_err(ModuliError::from)?;
    let c = cartan_matrix(Family::C, m + 1).map_err(ModuliError::from)?;
    let map = (0..=2 * m).map(|j| j.abs_diff(m)).collect();
    Ok(Folding { m, map, a, c })
}

impl Folding {
    /// `Bbar` on the `A` side with `Bbar_{-k} = Bbar_k`.
    pub fn unfold_bbar(&self, bbar_c: &[f64]) -> Vec<f64> {
        self.map.iter().map(|&k| bbar_c[k]).collect()
    }

    /// Symmetric sector `H_k = H_{m+k}` as a `C_{m+1}` solution.
    pub fn extract(&self, sol_a: &ModuliPolynomial) -> ModuliPolynomial {
        let coeffs: Vec<Vec<f64>> = (0..=self.m).map(|k| sol_a.coeffs[self.m + k].clone()).collect();
        let bbar = (0..=self.m).map(|k| sol_a.bbar[self.m + k]).collect();
        ModuliPolynomial { coeffs, mu: sol_a.mu, bbar }
    }

    /// Largest `|H_{m+k} - H_{m-k}|` coefficient difference.
    pub fn mirror_defect(&self, sol_a: &ModuliPolynomial) -> f64 {
        let mut worst = 0.0f64;
        for k in 1..=self.m {
            for (x, y) in sol_a.coeffs[self.m + k].iter().zip(&sol_a.coeffs[self.m - k]) {
                worst = worst.max((x - y).abs());
            }
        }
        worst
    }

    /// `C_{kl} = sum_{j : map[j] = l} A_{m+k, j}`, the matrix seen by the
    /// symmetric sector; equals the `C_{m+1}` Cartan matrix.
    pub fn folded_matrix(&self) -> RationalMatrix {
        let n = self.m + 1;
        let mut out = vec![vec![rat(0); n]; n];
        for (k, row) in out.iter_mut().enumerate() {
            for (j, &l) in self.map.iter().enumerate() {
                row[l] += self.a.entry(self.m + k, j);
            }
        }
        out
    }

    /// The folding operator `P` (`(2m+1) x (m+1)`, `P_{j l} = [map j = l]`).
    pub fn projector(&self) -> RationalMatrix {
        self.map.iter().map(|&l| (0..=self.m).map(|k| rat(i64::from(k == l))).collect()).collect()
    }

    /// `A P`, restricted to the rows `m..=2m`; equal to [`Folding::folded_matrix`].
    pub fn folded_by_product(&self) -> RationalMatrix {
        let ap = mat_mul(self.a.entries(), &self.projector());
        ap[self.m..].to_vec()
    }

    /// Degrees of the `C_{m+1}` system read off the `A_{2m+1}` degrees.
    pub fn folded_degrees(&self) -> Result<Vec<usize>, TodaError> {
        let d = polynomial_degrees(&self.a).map_err(ModuliError::from)?;
        let ints = d.integers().expect("A_m degrees are integers");
        Ok((0..=self.m).map(|k| ints[self.m + k]).collect())
    }
}

/// Samples of a direct integration of the moduli equation.
#[derive(Clone, Debug, PartialEq)]
pub struct OdeRun {
    pub z: Vec<f64>,
    /// `h[i][s] = H_s(z_i)`.
    pub h: Vec<Vec<f64>>,
    /// `dh[i][s] = H_s'(z_i)`.
    pub dh: Vec<Vec<f64>>,
    pub slopes: Vec<f64>,
}

impl OdeRun {
    /// Largest `|H_s(z_i) - poly_s(z_i)|`.
    pub fn max_discrepancy(&self, poly: &ModuliPolynomial) -> f64 {
        let mut worst = 0.0f64;
        for (z, row) in self.z.iter().zip(&self.h) {
            for (s, v) in row.iter().enumerate() {
                worst = worst.max((v - poly.eval(s, *z)).abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct RhsFailure(usize);

fn ode_options() -> OdeOptions {
    OdeOptions { rtol: 1e-12, atol: 1e-12, initial_step: 1e-4, max_steps: 2_000_000 }
}

/// Integrates `(H_s, G_s = F H_s'/H_s)` from `z = 0` and returns the states at
/// the increasing positive `outputs`.
fn integrate_state(
    problem: &ModuliProblem,
    slopes: &[f64],
    outputs: &[f64],
) -> Result<Vec<Vec<f64>>, TodaError> {
    let n = problem.len();
    let mu = problem.mu();
    let a = problem.a_float().clone();
    let bbar = problem.bbar().to_vec();
    let mut y0 = vec![1.0; n];
    y0.extend_from_slice(slopes);
    let rhs = |z: f64, y: &[f64], dy: &mut [f64]| -> Result<(), RhsFailure> {
        let f = 1.0 - 2.0 * mu * z;
        for s in 0..n {
            if !(y[s] > 0.0 && y[s].is_finite()) {
                return Err(RhsFailure(s));
            }
        }
        for s in 0..n {
            dy[s] = y[n + s] * y[s] / f;
            let mut prod = 1.0;
            for t in 0..n {
                if a[(s, t)] != 0.0 {
                    prod *= y[t].powf(-a[(s, t)]);
                }
            }
            dy[n + s] = bbar[s] * prod;
            if !dy[s].is_finite() || !dy[n + s].is_finite() {
                return Err(RhsFailure(s));
            }
        }
        Ok(())
    };
    integrate(rhs, 0.0, &y0, outputs, &ode_options()).map_err(|e| match e {
        OdeError::Rhs { t, cause: RhsFailure(s) } => TodaError::Positivity { brane: s, z: t },
        OdeError::StepUnderflow { t, .. } => TodaError::StepUnderflow { z: t },
        OdeError::TooManySteps { t } => TodaError::TooManySteps { z: t },
    })
}

/// Initial-value integration of the moduli equation with `H(0) = 1`,
/// `H'(0) = slopes`, sampled on `grid_points` equally spaced points of
/// `[0, z_end]`.
pub fn integrate_ode(
    problem: &ModuliProblem,
    slopes: &[f64],
    z_end: f64,
    grid_points: usize,
) -> Result<OdeRun, TodaError> {
    let limit = problem.z_end();
    if !(z_end > 0.0 && z_end < limit) {
        return Err(TodaError::BeyondDomain { z_end, limit });
    }
    if slopes.len() != problem.len() {
        return Err(TodaError::Length { expected: problem.len(), got: slopes.len() });
    }
    let count = grid_points.max(2);
    let z: Vec<f64> = (0..count).map(|i| z_end * i as f64 / (count - 1) as f64).collect();
    let states = integrate_state(problem, slopes, &z[1..])?;
    let n = problem.len();
    let mu = problem.mu();
    let mut h = vec![vec![1.0; n]];
    let mut dh = vec![slopes.to_vec()];
    for (zi, y) in z[1..].iter().zip(&states) {
        let f = 1.0 - 2.0 * mu * zi;
        h.push(y[..n].to_vec());
        dh.push((0..n).map(|s| y[n + s] * y[s] / f).collect());
    }
    Ok(OdeRun { z, h, dh, slopes: slopes.to_vec() })
}

#[derive(Clone, Copy, Debug)]
pub struct ShootOptions {
    /// Distance from the horizon in `z`; `None` means `1e-4 / (2 mu)`.
    pub delta: Option<f64>,
    /// Half-width of the slope search box; `None` picks one from `mu` and `Bbar`.
    pub search_radius: Option<f64>,
    /// Required `|G_s(horizon)|`.
    pub tol: f64,
}

impl Default for ShootOptions {
    fn default() -> Self {
        ShootOptions { delta: None, search_radius: None, tol: 1e-10 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShootResult {
    pub slopes: Vec<f64>,
    /// Extrapolated horizon values `H_{s0}`.
    pub h0: Vec<f64>,
    /// Max extrapolated `|G_s|` at the horizon.
    pub residual: f64,
}

pub const MAX_SHOOTING_BRANES: usize = 3;

/// Horizon limits of `G_s` and `H_s`, extrapolated quadratically in `F` from
/// `F = 4 d, 2 d, d`.
fn horizon_limits(problem: &ModuliProblem, slopes: &[f64], d: f64) -> Result<(Vec<f64>, Vec<f64>), TodaError> {
    let n = problem.len();
    let two_mu = 2.0 * problem.mu();
    let zs: Vec<f64> = [4.0 * d, 2.0 * d, d].iter().map(|f| (1.0 - f) / two_mu).collect();
    let states = integrate_state(problem, slopes, &zs)?;
    let extrap = |i: usize| 8.0 / 3.0 * states[2][i] - 2.0 * states[1][i] + states[0][i] / 3.0;
    Ok(((0..n).map(|s| extrap(n + s)).collect(), (0..n).map(extrap).collect()))
}

fn g_residual(problem: &ModuliProblem, x: &[f64], d: f64) -> Option<Vec<f64>> {
    let (g, h) = horizon_limits(problem, x, d).ok()?;
    (g.iter().chain(&h).all(|v| v.is_finite()) && h.iter().all(|&v| v > 0.0)).then_some(g)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn shoot_newton(problem: &ModuliProblem, mut x: Vec<f64>, d: f64, tol: f64) -> Option<Vec<f64>> {
    let n = x.len();
    let mut r = g_residual(problem, &x, d)?;
    for _ in 0..40 {
        if max_abs(&r) <= tol {
            return Some(x);
        }
        let mut jac = DMatrix::zeros(n, n);
        for c in 0..n {
            let step = 1e-6 * x[c].abs().max(1.0);
            let mut xp = x.clone();
            xp[c] += step;
            let mut xm = x.clone();
            xm[c] -= step;
            let (rp, rm) = (g_residual(problem, &xp, d)?, g_residual(problem, &xm, d)?);
            for k in 0..n {
                jac[(k, c)] = (rp[k] - rm[k]) / (2.0 * step);
            }
        }
        let dx = jac.lu().solve(&-DVector::from_vec(r.clone()))?;
        let base = max_abs(&r);
        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda > 1e-4 {
            let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, b)| a + lambda * b).collect();
            if let Some(rt) = g_residual(problem, &trial, d) {
                if max_abs(&rt) < base {
                    x = trial;
                    r = rt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (max_abs(&r) <= tol).then_some(x)
}

/// Finds slopes `H_s'(0)` for which every `H_s` stays positive and bounded up
/// to `(2 mu)^{-1} - delta`, i.e. the extrapolated `G_s = F H_s'/H_s`
/// vanishes at the horizon.
///
/// Continuation from `Bbar = 0` (slopes 0) is tried first, then Newton from
/// the best point of a coarse scan of the search box.
pub fn shoot(problem: &ModuliProblem, opts: &ShootOptions) -> Result<ShootResult, TodaError> {
    let n = problem.len();
    if n > MAX_SHOOTING_BRANES {
        return Err(TodaError::ShootingDimension { max: MAX_SHOOTING_BRANES, got: n });
    }
    let mu = problem.mu();
    let delta = opts.delta.unwrap_or(1e-4 / (2.0 * mu));
    let d = 2.0 * mu * delta;
    let finish = |x: Vec<f64>| -> Result<ShootResult, TodaError> {
        let (g, h0) = horizon_limits(problem, &x, d)?;
        Ok(ShootResult { slopes: x, h0, residual: max_abs(&g) })
    };

    let target = problem.bbar().to_vec();
    let mut x = vec![0.0; n];
    let mut ok = true;
    const STEPS: usize = 8;
    for j in 1..=STEPS {
        let t = j as f64 / STEPS as f64;
        let stage = problem.with_bbar(target.iter().map(|b| b * t).collect())?;
        match shoot_newton(&stage, x.clone(), d, opts.tol) {
            Some(xn) => x = xn,
            None => {
                ok = false;
                break;
            }
        }
    }
    if ok {
        return finish(x);
    }

    let scale = target.iter().fold(mu, |a, b| a.max(b.abs().sqrt()));
    let radius = opts.search_radius.unwrap_or(4.0 * scale);
    let per_dim = [41usize, 13, 7][n.saturating_sub(1).min(2)];
    let mut best: Option<(f64, Vec<f64>)> = None;
    let total = per_dim.pow(n as u32);
    for idx in 0..total {
        let mut rest = idx;
        let point: Vec<f64> = (0..n)
            .map(|_| {
                let i = rest % per_dim;
                rest /= per_dim;
                -radius + 2.0 * radius * i as f64 / (per_dim - 1) as f64
            })
            .collect();
        if let Some(r) = g_residual(problem, &point, d) {
            let v = max_abs(&r);
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, point));
            }
        }
    }
    let best_residual = best.as_ref().map_or(f64::INFINITY, |b| b.0);
    if let Some((_, seed)) = best {
        if let Some(x) = shoot_newton(problem, seed, d, opts.tol) {
            return finish(x);
        }
    }
    Err(TodaError::NoBoundedTrajectory { residual: best_residual, diagnostic: problem.existence_diagnostic() })
}
