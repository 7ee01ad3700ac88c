//! Moduli functions `H_s(z)` as polynomials.
//!
//! The boundary-value problem is
//!
//! ```text
//! d/dz [ (1 - 2 mu z) H_s' / H_s ] = Bbar_s  prod_t H_t^{-A_st},
//! H_s(0) = 1,   H_s((2 mu)^{-1}) finite and positive,
//! ```
//!
//! on `z in (0, (2 mu)^{-1})`. With `H_s = 1 + sum_k P_s^(k) z^k` of degree
//! `n_s` the equation becomes a finite algebraic system, solved here by Newton
//! continuation from the trivial solution at `Bbar = 0`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::lie_cartan::{components, polynomial_degrees, CartanError, DegreeVector, QuasiCartan};
use crate::poly::Poly;
use crate::sigma_model::{BraneConfig, CouplingData, SigmaError};

/// Required bound on the scaled primary residual after a solve.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Required bound on the scaled overflow coefficients after a solve.
pub const OVERFLOW_TOL: f64 = 1e-9;
const NEWTON_TOL: f64 = 1e-13;
const NEWTON_MAX_ITER: usize = 60;
/// Corrector displacement limits (relative to `max(1, |x|)`) for the first
/// continuation attempt and the retry.
const DISPLACEMENT: [f64; 2] = [0.25, 0.02];
const CORRECTOR_ITER: usize = 12;
const MIN_STEP: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModuliError {
    #[error("extremality parameter mu must be positive and finite, got {0}")]
    BadMu(f64),
    #[error("expected {expected} charge parameters Bbar_s, got {got}")]
    BbarLength { expected: usize, got: usize },
    #[error("Bbar_{brane} = {value} is not finite")]
    NonFiniteBbar { brane: usize, value: f64 },
    #[error("polynomial degrees {0} are not positive integers; use the ODE oracle")]
    NonIntegerDegree(String),
    #[error("matrix entry A[{s}][{t}] = {value} is not an integer; the polynomial system needs integer powers")]
    NonIntegerEntry { s: usize, t: usize, value: String },
    #[error("Newton continuation stalled at t = {t} after {steps} steps (residual {residual:e}){}", diagnostic.as_ref().map(|d| format!("; {d}")).unwrap_or_default())]
    NoConvergence { t: f64, steps: usize, residual: f64, diagnostic: Option<String> },
    #[error("overflow equations do not vanish (max {overflow:e}); the polynomial ansatz is inconsistent for this matrix")]
    Inconsistent { overflow: f64 },
    #[error("H_{brane}({z}) = {value} is not positive")]
    Positivity { brane: usize, z: f64, value: f64 },
    #[error("no real root: mu^2 - Bbar = {discriminant} < 0")]
    NoRealRoot { discriminant: f64 },
    #[error("generic A2 branch is singular at P1 + P2 + 4 mu = 0")]
    Branch,
    #[error("special A2 branch needs Bbar_s > 0 and Bbar_1 + Bbar_2 = 4 mu^2, got ({0}, {1})")]
    SpecialBranch(f64, f64),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("grid point z = {z} lies outside (0, {end})")]
    GridOutsideDomain { z: f64, end: f64 },
    #[error(transparent)]
    Cartan(#[from] CartanError),
    #[error(transparent)]
    Sigma(#[from] SigmaError),
}

/// The boundary-value problem for a given matrix, `mu` and `Bbar`.
#[derive(Clone, Debug)]
pub struct ModuliProblem {
    a: QuasiCartan,
    a_float: DMatrix<f64>,
    mu: f64,
    bbar: Vec<f64>,
    degrees: DegreeVector,
    /// `h_s` up to an overall factor, used only for existence diagnostics.
    h: Option<Vec<f64>>,
}

impl ModuliProblem {
    pub fn new(a: QuasiCartan, mu: f64, bbar: Vec<f64>) -> Result<Self, ModuliError> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(ModuliError::BadMu(mu));
        }
        if bbar.len() != a.size() {
            return Err(ModuliError::BbarLength { expected: a.size(), got: bbar.len() });
        }
        if let Some((s, &v)) = bbar.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(ModuliError::NonFiniteBbar { brane: s, value: v });
        }
        let degrees = polynomial_degrees(&a)?;
        let h = symmetrizer(&a.to_f64());
        Ok(ModuliProblem { a_float: a.to_f64(), a, mu, bbar, degrees, h })
    }

    /// `Bbar_s = K_s eps_s Q_s^2 / dbar^2` taken from a brane configuration.
    pub fn from_config(config: &BraneConfig, coupling: &CouplingData, mu: f64) -> Result<Self, ModuliError> {
        let dbar = f64::from(config.dbar());
        let bbar = config
            .branes
            .iter()
            .zip(&coupling.k)
            .map(|(b, k)| k * f64::from(b.epsilon) * b.charge * b.charge / (dbar * dbar))
            .collect();
        let mut p = ModuliProblem::new(coupling.a.clone(), mu, bbar)?;
        p.h = Some(coupling.h.clone());
        Ok(p)
    }

    pub fn a(&self) -> &QuasiCartan {
        &self.a
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn bbar(&self) -> &[f64] {
        &self.bbar
    }

    pub fn degrees(&self) -> &DegreeVector {
        &self.degrees
    }

    pub fn len(&self) -> usize {
        self.bbar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bbar.is_empty()
    }

    /// Right end of the domain, `(2 mu)^{-1}`.
    pub fn z_end(&self) -> f64 {
        0.5 / self.mu
    }

    pub fn with_bbar(&self, bbar: Vec<f64>) -> Result<Self, ModuliError> {
        let mut p = ModuliProblem::new(self.a.clone(), self.mu, bbar)?;
        p.h.clone_from(&self.h);
        Ok(p)
    }

    pub fn with_mu(&self, mu: f64) -> Result<Self, ModuliError> {
        let mut p = ModuliProblem::new(self.a.clone(), mu, self.bbar.clone())?;
        p.h.clone_from(&self.h);
        Ok(p)
    }

    pub fn a_float(&self) -> &DMatrix<f64> {
        &self.a_float
    }

    /// Positive integer degrees or the refusal error.
    pub fn integer_degrees(&self) -> Result<Vec<usize>, ModuliError> {
        match self.degrees.integers() {
            Some(v) if v.iter().all(|&n| n > 0) => Ok(v),
            _ => Err(ModuliError::NonIntegerDegree(self.degrees.to_string())),
        }
    }

    /// Message when `(mu, Bbar)` lies in the region where no solution exists:
    /// `0 < mu^2 sum h_s A^{st} < (1/2) sum h_s Bbar_s` on some connected
    /// component of `A` (components decouple).
    pub fn existence_diagnostic(&self) -> Option<String> {
        let h = self.h.as_ref()?;
        for comp in components(self.a.entries()) {
            let k = comp.len();
            let sub = DMatrix::from_fn(k, k, |i, j| self.a_float[(comp[i], comp[j])]);
            let inv = sub.try_inverse()?;
            let lhs: f64 = (0..k).map(|i| h[comp[i]] * inv.row(i).sum()).sum::<f64>() * self.mu * self.mu;
            let rhs: f64 = 0.5 * comp.iter().map(|&s| h[s] * self.bbar[s]).sum::<f64>();
            if lhs > 0.0 && lhs < rhs {
                return Some(format!(
                    "branes {comp:?} lie in the non-existence region: mu^2 sum h A^-1 = {lhs} < {rhs}"
                ));
            }
        }
        None
    }
}

/// Positive `d_s` with `d_s A_st` symmetric, normalised to `d_0 = 1` on each
/// connected component; `None` if `A` is not symmetrizable that way.
pub fn symmetrizer(a: &DMatrix<f64>) -> Option<Vec<f64>> {
    let n = a.nrows();
    let mut d = vec![0.0; n];
    for root in 0..n {
        if d[root] != 0.0 {
            continue;
        }
        d[root] = 1.0;
        let mut stack = vec![root];
        while let Some(s) = stack.pop() {
            for t in 0..n {
                if t == s || a[(s, t)] == 0.0 {
                    continue;
                }
                if a[(t, s)] == 0.0 {
                    return None;
                }
                let want = d[s] * a[(s, t)] / a[(t, s)];
                if d[t] == 0.0 {
                    if !(want > 0.0) {
                        return None;
                    }
                    d[t] = want;
                    stack.push(t);
                } else if (d[t] - want).abs() > 1e-12 * want.abs().max(1.0) {
                    return None;
                }
            }
        }
    }
    Some(d)
}

/// Solved (or closed-form) moduli polynomials.
#[derive(Clone, Debug, PartialEq)]
pub struct ModuliPolynomial {
    /// `coeffs[s][k - 1] = P_s^(k)`, `k = 1..n_s`.
    pub coeffs: Vec<Vec<f64>>,
    pub mu: f64,
    pub bbar: Vec<f64>,
}

impl ModuliPolynomial {
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn z_end(&self) -> f64 {
        0.5 / self.mu
    }

    /// `H_s` as a polynomial with constant term 1.
    pub fn h(&self, s: usize) -> Poly {
        let mut c = Vec::with_capacity(self.coeffs[s].len() + 1);
        c.push(1.0);
        c.extend_from_slice(&self.coeffs[s]);
        Poly(c)
    }

    pub fn eval(&self, s: usize, z: f64) -> f64 {
        self.h(s).eval(z)
    }

    pub fn eval_derivative(&self, s: usize, z: f64) -> f64 {
        self.h(s).derivative().eval(z)
    }

    /// `H_s'(0) = P_s^(1)`.
    pub fn slopes(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.first().copied().unwrap_or(0.0)).collect()
    }

    /// `H_{s0} = H_s((2 mu)^{-1})`, evaluated directly.
    pub fn horizon_values(&self) -> Vec<f64> {
        (0..self.len()).map(|s| self.eval(s, self.z_end())).collect()
    }

    /// Largest coefficient difference to another solution of the same shape.
    pub fn max_coeff_diff(&self, other: &ModuliPolynomial) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .flat_map(|(a, b)| {
                let n = a.len().max(b.len());
                (0..n).map(move |k| {
                    (a.get(k).copied().unwrap_or(0.0) - b.get(k).copied().unwrap_or(0.0)).abs()
                })
            })
            .fold(0.0, f64::max)
    }

    /// Checks `H_s > 0` on the closed domain `[0, (2 mu)^{-1}]`.
    pub fn check_positive(&self) -> Result<(), ModuliError> {
        const SAMPLES: usize = 4096;
        let end = self.z_end();
        for s in 0..self.len() {
            let h = self.h(s);
            for i in 0..=SAMPLES {
                let z = end * i as f64 / SAMPLES as f64;
                let v = h.eval(z);
                if !(v > 0.0) {
                    return Err(ModuliError::Positivity { brane: s, z, value: v });
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for ModuliPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (s, c) in self.coeffs.iter().enumerate() {
            if s > 0 {
                writeln!(f)?;
            }
            write!(f, "H_{} = 1", s + 1)?;
            for (k, p) in c.iter().enumerate() {
                write!(f, " {} {}", if *p < 0.0 { '-' } else { '+' }, p.abs())?;
                match k {
                    0 => write!(f, " z")?,
                    _ => write!(f, " z^{}", k + 1)?,
                }
            }
        }
        Ok(())
    }
}

/// Coefficient system obtained by inserting the ansatz into the equation.
///
/// For each brane the cleared equation is
/// `E_s = L_s M_s - Bbar_s N_s` with `L_s = (F H_s')' H_s - F H_s'^2`,
/// `M_s = prod_{t != s, A_st > 0} H_t^{A_st}` and
/// `N_s = prod_{t != s, A_st < 0} H_t^{-A_st}`.
/// Its coefficients of `z^0..z^{n_s - 1}` are the primary equations; every
/// higher coefficient is an overflow equation.
#[derive(Clone, Debug)]
pub struct PolySystem {
    mu: f64,
    bbar: Vec<f64>,
    degrees: Vec<usize>,
    a: Vec<Vec<i64>>,
    offsets: Vec<usize>,
}

pub fn poly_system(problem: &ModuliProblem) -> Result<PolySystem, ModuliError> {
    let degrees = problem.integer_degrees()?;
    let a = integer_matrix(problem.a())?;
    let mut offsets = Vec::with_capacity(degrees.len() + 1);
    let mut acc = 0;
    for &n in &degrees {
        offsets.push(acc);
        acc += n;
    }
    offsets.push(acc);
    Ok(PolySystem { mu: problem.mu(), bbar: problem.bbar().to_vec(), degrees, a, offsets })
}

fn integer_matrix(a: &QuasiCartan) -> Result<Vec<Vec<i64>>, ModuliError> {
    if let Some(v) = a.integer_entries() {
        return Ok(v);
    }
    for s in 0..a.size() {
        for t in 0..a.size() {
            if !a.entry(s, t).is_integer() {
                return Err(ModuliError::NonIntegerEntry { s, t, value: a.entry(s, t).to_string() });
            }
        }
    }
    unreachable!("integer_entries failed on an integer matrix")
}

impl PolySystem {
    pub fn unknowns(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn bbar(&self) -> &[f64] {
        &self.bbar
    }

    pub fn with_bbar(&self, bbar: Vec<f64>) -> PolySystem {
        PolySystem { bbar, ..self.clone() }
    }

    fn f_poly(&self) -> Poly {
        Poly(vec![1.0, -2.0 * self.mu])
    }

    pub fn polys(&self, x: &[f64]) -> Vec<Poly> {
        (0..self.degrees.len())
            .map(|s| {
                let mut c = vec![1.0];
                c.extend_from_slice(&x[self.offsets[s]..self.offsets[s + 1]]);
                Poly(c)
            })
            .collect()
    }

    pub fn to_polynomial(&self, x: &[f64]) -> ModuliPolynomial {
        ModuliPolynomial {
            coeffs: (0..self.degrees.len()).map(|s| x[self.offsets[s]..self.offsets[s + 1]].to_vec()).collect(),
            mu: self.mu,
            bbar: self.bbar.clone(),
        }
    }

    fn bracket(&self, h: &Poly) -> Poly {
        let f = self.f_poly();
        let hp = h.derivative();
        let fhp = &f * &hp;
        &(&fhp.derivative() * h) - &(&f * &(&hp * &hp))
    }

    fn products(&self, hs: &[Poly], s: usize, skip: Option<usize>) -> (Poly, Poly) {
        let mut m = Poly::one();
        let mut nn = Poly::one();
        for (t, ht) in hs.iter().enumerate() {
            if t == s || Some(t) == skip {
                continue;
            }
            let e = self.a[s][t];
            if e > 0 {
                m = &m * &ht.powi(e as u32);
            } else if e < 0 {
                nn = &nn * &ht.powi((-e) as u32);
            }
        }
        (m, nn)
    }

    /// Full cleared equations `E_s` as polynomials.
    pub fn equations(&self, x: &[f64]) -> Vec<Poly> {
        let hs = self.polys(x);
        (0..hs.len())
            .map(|s| {
                let (m, nn) = self.products(&hs, s, None);
                &(&self.bracket(&hs[s]) * &m) - &nn.scale(self.bbar[s])
            })
            .collect()
    }

    fn scale(&self, s: usize) -> f64 {
        1.0 / self.bbar[s].abs().max(1.0)
    }

    /// Primary coefficients, scaled by `1 / max(1, |Bbar_s|)`.
    pub fn residuals(&self, x: &[f64]) -> Vec<f64> {
        let eqs = self.equations(x);
        let mut r = Vec::with_capacity(self.unknowns());
        for (s, e) in eqs.iter().enumerate() {
            let w = self.scale(s);
            r.extend((0..self.degrees[s]).map(|k| e.coeff(k) * w));
        }
        r
    }

    /// Overflow coefficients (powers `n_s` and above), scaled like the residuals.
    pub fn overflow(&self, x: &[f64]) -> Vec<f64> {
        let eqs = self.equations(x);
        let mut r = Vec::new();
        for (s, e) in eqs.iter().enumerate() {
            let w = self.scale(s);
            r.extend((self.degrees[s]..e.len()).map(|k| e.coeff(k) * w));
        }
        r
    }

    /// Primary and overflow coefficients together, grouped by brane.
    pub fn full_residuals(&self, x: &[f64]) -> Vec<f64> {
        self.equations(x)
            .iter()
            .enumerate()
            .flat_map(|(s, e)| {
                let w = self.scale(s);
                e.0.iter().map(move |c| c * w).collect::<Vec<_>>()
            })
            .collect()
    }

    /// Analytic Jacobian of [`PolySystem::residuals`].
    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        self.jacobian_rows(x, &self.degrees)
    }

    /// Analytic Jacobian of [`PolySystem::full_residuals`].
    pub fn full_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        self.jacobian_rows(x, &self.equation_lengths())
    }

    /// Number of coefficients of each cleared equation.
    fn equation_lengths(&self) -> Vec<usize> {
        (0..self.degrees.len())
            .map(|s| {
                let (mut deg_m, mut deg_n) = (0, 0);
                for (t, &e) in self.a[s].iter().enumerate() {
                    if t != s && e > 0 {
                        deg_m += e as usize * self.degrees[t];
                    } else if e < 0 {
                        deg_n += e.unsigned_abs() as usize * self.degrees[t];
                    }
                }
                (2 * self.degrees[s] + deg_m).max(deg_n + 1)
            })
            .collect()
    }

    // Derivatives with respect to the coefficient of z^k are shifted copies
    // of a few products, so each column is assembled by shifting.
    fn jacobian_rows(&self, x: &[f64], counts: &[usize]) -> DMatrix<f64> {
        let n = self.unknowns();
        let hs = self.polys(x);
        let f = self.f_poly();
        let mu = self.mu;
        let mut j = DMatrix::zeros(counts.iter().sum(), n);
        let mut row0 = 0;
        for s in 0..hs.len() {
            let w = self.scale(s);
            let rows = counts[s];
            let mut put = |col: usize, p: &Poly, shift: isize, factor: f64| {
                for (i, c) in p.0.iter().enumerate() {
                    let r = i as isize + shift;
                    if r >= 0 && (r as usize) < rows {
                        j[(row0 + r as usize, col)] += c * factor * w;
                    }
                }
            };
            let (m, _) = self.products(&hs, s, None);
            let hp = hs[s].derivative();
            let a_self = &m * &hs[s];
            let b_self = &m * &(&f * &hp);
            let c_self = &m * &(&f * &hp).derivative();
            for k in 1..=self.degrees[s] {
                let col = self.offsets[s] + k - 1;
                let (ki, kf) = (k as isize, k as f64);
                if k >= 2 {
                    put(col, &a_self, ki - 2, kf * (kf - 1.0));
                }
                put(col, &a_self, ki - 1, -2.0 * mu * kf * kf);
                put(col, &b_self, ki - 1, -2.0 * kf);
                put(col, &c_self, ki, 1.0);
            }
            let bracket = self.bracket(&hs[s]);
            for t in 0..hs.len() {
                let e = self.a[s][t];
                if t == s || e == 0 {
                    continue;
                }
                let (m_rest, n_rest) = self.products(&hs, s, Some(t));
                let dpow = hs[t].powi(e.unsigned_abs() as u32 - 1).scale(e.abs() as f64);
                let base = if e > 0 { &bracket * &(&m_rest * &dpow) } else { (&n_rest * &dpow).scale(-self.bbar[s]) };
                for k in 1..=self.degrees[t] {
                    put(self.offsets[t] + k - 1, &base, k as isize, 1.0);
                }
            }
            row0 += rows;
        }
        j
    }
}

/// Minimum-residual solution of the tall system `j dx = rhs` by thin QR.
fn least_squares(j: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let qr = j.qr();
    let qtb = qr.q().transpose() * rhs;
    qr.r().solve_upper_triangular(&qtb)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Damped Gauss-Newton on primary and overflow equations together;
/// `Ok((x, residual, iterations))` on convergence. The primary block alone
/// becomes singular like `mu^n` as `mu -> 0`, the full system does not.
fn newton(sys: &PolySystem, x: Vec<f64>) -> Result<(Vec<f64>, f64, usize), f64> {
    newton_capped(sys, x, NEWTON_MAX_ITER)
}

fn newton_capped(sys: &PolySystem, mut x: Vec<f64>, max_iter: usize) -> Result<(Vec<f64>, f64, usize), f64> {
    let mut r = sys.full_residuals(&x);
    for it in 0..max_iter {
        let res = max_abs(&r);
        if res <= NEWTON_TOL {
            return Ok((x, res, it));
        }
        let j = sys.full_jacobian(&x);
        let rhs = -DVector::from_vec(r.clone());
        let Some(dx) = least_squares(j, &rhs) else {
            return if res <= RESIDUAL_TOL { Ok((x, res, it)) } else { Err(res) };
        };
        let base = norm2(&r);
        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda > 1e-6 {
            let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, b)| a + lambda * b).collect();
            let rt = sys.full_residuals(&trial);
            let nt = norm2(&rt);
            if nt.is_finite() && nt < base * (1.0 - 1e-4 * lambda) {
                x = trial;
                r = rt;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return if res <= RESIDUAL_TOL { Ok((x, res, it)) } else { Err(res) };
        }
    }
    let res = max_abs(&r);
    if res <= RESIDUAL_TOL {
        Ok((x, res, max_iter))
    } else {
        Err(res)
    }
}

/// A further converged root of the coefficient system.
#[derive(Clone, Debug, PartialEq)]
pub struct Alternate {
    pub poly: ModuliPolynomial,
    pub residual: f64,
    pub positive: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolySolution {
    pub poly: ModuliPolynomial,
    /// Max scaled primary residual.
    pub residual: f64,
    /// Max scaled overflow coefficient.
    pub overflow: f64,
    /// Homotopy increments used.
    pub steps: usize,
    pub newton_iterations: usize,
    pub alternates: Vec<Alternate>,
}

/// Adaptive natural-parameter continuation from `x0` (a root of `stage(0)`)
/// to a root of `stage(1)`. Steps are halved whenever the corrector needs
/// many iterations or lands far from the secant prediction.
fn continuation(
    x0: Vec<f64>,
    stage: impl Fn(f64) -> PolySystem,
    max_move: f64,
) -> Result<(Vec<f64>, usize, usize), ModuliError> {
    let mut x = x0;
    let mut prev: Option<(Vec<f64>, f64)> = None;
    let (mut tau, mut h) = (0.0f64, 0.125f64);
    let (mut steps, mut iterations) = (0, 0);
    let mut last_residual = 0.0;
    while tau < 1.0 {
        let h_try = h.min(1.0 - tau);
        let next = if 1.0 - tau - h_try < 1e-12 { 1.0 } else { tau + h_try };
        let sys = stage(next);
        let guess: Vec<f64> = match &prev {
            Some((p, hp)) => x.iter().zip(p).map(|(a, b)| a + (a - b) * h_try / hp).collect(),
            None => x.clone(),
        };
        let limit = max_move * max_abs(&guess).max(1.0);
        match newton_capped(&sys, guess.clone(), CORRECTOR_ITER) {
            Ok((xn, _, it)) if max_abs(&sub(&xn, &guess)) <= limit => {
                prev = Some((std::mem::replace(&mut x, xn), next - tau));
                tau = next;
                steps += 1;
                iterations += it;
                if it <= 4 {
                    h = (h * 1.5).min(0.25);
                }
            }
            other => {
                if let Err(r) = other {
                    last_residual = r;
                }
                h = h_try * 0.5;
                if h < MIN_STEP {
                    return Err(ModuliError::NoConvergence { t: tau, steps, residual: last_residual, diagnostic: None });
                }
            }
        }
    }
    Ok((x, steps, iterations))
}

/// From `H = 1` at `Bbar = 0`: continuation in `Bbar tau^2` at
/// `mu_c = max(mu, sqrt(max |Bbar|) / 4)`, then in `log mu` down to `mu`.
///
/// Near `Bbar = 0` the coefficients move like `sqrt(mu^2 - Bbar t)`, smooth
/// in `tau` on a scale `mu / sqrt|Bbar|`; for small `mu` that scale collapses,
/// while the `mu` direction stays regular down to the extremal limit.
fn homotopy(sys: &PolySystem, max_move: f64) -> Result<(Vec<f64>, usize, usize), ModuliError> {
    let target = sys.bbar().to_vec();
    let mu = sys.mu;
    let mu_c = mu.max(max_abs(&target).sqrt() / 4.0);
    let at_mu_c = PolySystem { mu: mu_c, ..sys.clone() };
    let (x, s1, i1) = continuation(
        vec![0.0; sys.unknowns()],
        |tau| at_mu_c.with_bbar(target.iter().map(|b| b * tau * tau).collect()),
        max_move,
    )?;
    if mu_c == mu {
        return Ok((x, s1, i1));
    }
    let ratio = mu / mu_c;
    let (x, s2, i2) = continuation(x, |tau| PolySystem { mu: mu_c * ratio.powf(tau), ..sys.clone() }, max_move)?;
    Ok((x, s1 + s2, i1 + i2))
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Solves the coefficient system on the branch connected to `H = 1` at
/// `Bbar = 0`.
pub fn solve_poly(problem: &ModuliProblem) -> Result<PolySolution, ModuliError> {
    let sys = poly_system(problem)?;
    let mut failure = None;
    for max_move in DISPLACEMENT {
        let (x, steps, newton_iterations) = match homotopy(&sys, max_move) {
            Ok(v) => v,
            Err(ModuliError::NoConvergence { t, steps, residual, .. }) => {
                failure = Some(ModuliError::NoConvergence {
                    t,
                    steps,
                    residual,
                    diagnostic: problem.existence_diagnostic(),
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        let residual = max_abs(&sys.residuals(&x));
        let overflow = max_abs(&sys.overflow(&x));
        if overflow > OVERFLOW_TOL {
            failure = Some(ModuliError::Inconsistent { overflow });
            continue;
        }
        let poly = sys.to_polynomial(&x);
        if let Err(e) = poly.check_positive() {
            failure = Some(e);
            continue;
        }
        let alternates = find_alternates(&sys, &poly);
        return Ok(PolySolution { poly, residual, overflow, steps, newton_iterations, alternates });
    }
    Err(failure.expect("at least one continuation attempt"))
}

/// Newton from the block-form seeds `(1 + p z)^{n_s}` on the other quadratic
/// root; returns distinct converged solutions.
fn find_alternates(sys: &PolySystem, main: &ModuliPolynomial) -> Vec<Alternate> {
    let mu = sys.mu;
    let mut seed = Vec::with_capacity(sys.unknowns());
    for (s, &n) in sys.degrees().iter().enumerate() {
        let disc = mu * mu - sys.bbar()[s] / n as f64;
        if disc < 0.0 {
            return Vec::new();
        }
        let p = -mu - disc.sqrt();
        seed.extend(binomial_powers(n, p));
    }
    let mut out = Vec::new();
    if let Ok((x, _, _)) = newton(sys, seed) {
        let residual = max_abs(&sys.residuals(&x));
        if max_abs(&sys.overflow(&x)) <= OVERFLOW_TOL {
            let poly = sys.to_polynomial(&x);
            if poly.max_coeff_diff(main) > 1e-6 {
                let positive = poly.check_positive().is_ok();
                out.push(Alternate { poly, residual, positive });
            }
        }
    }
    out
}

/// Coefficients of `z^1..z^n` in `(1 + p z)^n`.
fn binomial_powers(n: usize, p: f64) -> Vec<f64> {
    let mut c = Vec::with_capacity(n);
    let mut binom = 1.0;
    for k in 1..=n {
        binom *= (n + 1 - k) as f64 / k as f64;
        c.push(binom * p.powi(k as i32));
    }
    c
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct A1Roots {
    /// `-mu + sqrt(mu^2 - Bbar)`, continuous with `P = 0` at `Bbar = 0`.
    pub p: f64,
    pub alternate: f64,
}

/// Roots of `-P (P + 2 mu) = Bbar`.
pub fn closed_form_a1(mu: f64, bbar: f64) -> Result<A1Roots, ModuliError> {
    let disc = mu * mu - bbar;
    if disc < 0.0 {
        return Err(ModuliError::NoRealRoot { discriminant: disc });
    }
    let r = disc.sqrt();
    Ok(A1Roots { p: -mu + r, alternate: -mu - r })
}

/// `H_s = (1 + P_s z)^{b0_s}` with `P_s (P_s + 2 mu) = -Bbar_s / b0_s`, one
/// `P` per block of mutually non-orthogonal branes.
pub fn closed_form_block_orthogonal(
    blocks: &[Vec<usize>],
    mu: f64,
    bbar: &[f64],
    b0: &[usize],
) -> Result<ModuliPolynomial, ModuliError> {
    if bbar.len() != b0.len() {
        return Err(ModuliError::BbarLength { expected: b0.len(), got: bbar.len() });
    }
    let mut coeffs = vec![Vec::new(); bbar.len()];
    let mut covered = vec![false; bbar.len()];
    for block in blocks {
        let Some(&first) = block.first() else { continue };
        let ratio = bbar[first] / b0[first] as f64;
        for &s in block {
            if s >= bbar.len() || covered[s] {
                return Err(ModuliError::Precondition(format!("brane {s} missing or in two blocks")));
            }
            let r = bbar[s] / b0[s] as f64;
            if (r - ratio).abs() > 1e-12 * ratio.abs().max(1.0) {
                return Err(ModuliError::Precondition(format!(
                    "Bbar_s / b0_s differs inside a block: {ratio} vs {r} (brane {s})"
                )));
            }
            covered[s] = true;
        }
        let p = closed_form_a1(mu, ratio)?.p;
        for &s in block {
            coeffs[s] = binomial_powers(b0[s], p);
        }
    }
    if let Some(s) = covered.iter().position(|c| !c) {
        return Err(ModuliError::Precondition(format!("brane {s} belongs to no block")));
    }
    Ok(ModuliPolynomial { coeffs, mu, bbar: bbar.to_vec() })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct A2Closed {
    pub p1: [f64; 2],
    pub p2: [f64; 2],
    pub bbar: [f64; 2],
}

impl A2Closed {
    pub fn to_polynomial(&self, mu: f64) -> ModuliPolynomial {
        ModuliPolynomial {
            coeffs: vec![vec![self.p1[0], self.p2[0]], vec![self.p1[1], self.p2[1]]],
            mu,
            bbar: self.bbar.to_vec(),
        }
    }
}

/// Generic A2 branch parametrised by the slopes `P_1, P_2`.
pub fn closed_form_a2(mu: f64, p1: f64, p2: f64) -> Result<A2Closed, ModuliError> {
    let den = p1 + p2 + 4.0 * mu;
    if den.abs() <= 1e-14 * (p1.abs() + p2.abs() + mu).max(1.0) {
        return Err(ModuliError::Branch);
    }
    let p = [p1, p2];
    let second = |s: usize| p[s] * p[1 - s] * (p[s] + 2.0 * mu) / (2.0 * den);
    let bbar = |s: usize| -p[s] * (p[s] + 2.0 * mu) * (p[s] + 4.0 * mu) / den;
    Ok(A2Closed { p1: p, p2: [second(0), second(1)], bbar: [bbar(0), bbar(1)] })
}

/// Special A2 branch `P_1 = P_2 = -2 mu`, `P_s^(2) = Bbar_s / 2`, which needs
/// `Bbar_s > 0` and `Bbar_1 + Bbar_2 = 4 mu^2`.
pub fn closed_form_a2_special(mu: f64, bbar1: f64, bbar2: f64) -> Result<A2Closed, ModuliError> {
    let sum = 4.0 * mu * mu;
    if !(bbar1 > 0.0 && bbar2 > 0.0) || (bbar1 + bbar2 - sum).abs() > 1e-12 * sum.max(1.0) {
        return Err(ModuliError::SpecialBranch(bbar1, bbar2));
    }
    Ok(A2Closed { p1: [-2.0 * mu; 2], p2: [bbar1 / 2.0, bbar2 / 2.0], bbar: [bbar1, bbar2] })
}

/// Max over grid and branes of
/// `| d/dz[F H_s'/H_s] - Bbar_s prod_t H_t^{-A_st} |`.
pub fn residual(h: &ModuliPolynomial, problem: &ModuliProblem, grid: &[f64]) -> Result<f64, ModuliError> {
    let end = problem.z_end();
    let a = problem.a_float();
    let hs: Vec<Poly> = (0..h.len()).map(|s| h.h(s)).collect();
    let d1: Vec<Poly> = hs.iter().map(Poly::derivative).collect();
    let d2: Vec<Poly> = d1.iter().map(Poly::derivative).collect();
    let mu = problem.mu();
    let mut worst: f64 = 0.0;
    for &z in grid {
        if !(z > 0.0 && z < end) {
            return Err(ModuliError::GridOutsideDomain { z, end });
        }
        let f = 1.0 - 2.0 * mu * z;
        let vals: Vec<f64> = hs.iter().map(|p| p.eval(z)).collect();
        for (s, &v) in vals.iter().enumerate() {
            if !(v > 0.0) {
                return Err(ModuliError::Positivity { brane: s, z, value: v });
            }
        }
        for s in 0..hs.len() {
            let (hv, h1, h2) = (vals[s], d1[s].eval(z), d2[s].eval(z));
            let lhs = (-2.0 * mu * h1 + f * h2) / hv - f * h1 * h1 / (hv * hv);
            let rhs = problem.bbar()[s]
                * vals.iter().enumerate().map(|(t, ht)| ht.powf(-a[(s, t)])).product::<f64>();
            worst = worst.max((lhs - rhs).abs());
        }
    }
    Ok(worst)
}

/// `count` interior points of `(0, (2 mu)^{-1})`.
pub fn interior_grid(mu: f64, count: usize) -> Vec<f64> {
    let end = 0.5 / mu;
    (1..=count).map(|i| end * i as f64 / (count + 1) as f64).collect()
}
