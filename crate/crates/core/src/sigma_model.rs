//! Sigma-model data for a set of intersecting branes.
//!
//! A [`BraneConfig`] lists the factor-space dimensions `d_1..d_n` (factor 1 is
//! the sphere `S^{d_1}`, factor 2 the time line), the scalar-field metric
//! `h_{ab}` and the branes. From it we build the brane covectors `U^s`, the
//! target-space metric, the scalar products `B_{ss'} = (U^s, U^{s'})` and the
//! quasi-Cartan matrix `A_{ss'} = 2 B_{ss'} / B_{s's'}`.
//!
//! The space block of every scalar product is computed in exact rational
//! arithmetic; the dilaton block uses `f64` because couplings such as
//! `-sqrt(3/2)` are irrational.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::DMatrix;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lie_cartan::{
    inverse_cartan, polynomial_degrees, rat, ratio, to_f64, CartanError, DegreeVector, QuasiCartan,
    Rational, RationalMatrix,
};

/// Comparison tolerance for quantities that mix exact and floating parts.
pub const FLOAT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SigmaError {
    #[error("config parse error at line {line}, column {column}: {message}\n  | {snippet}")]
    ConfigParse { line: usize, column: usize, message: String, snippet: String },
    #[error("need at least 2 factor spaces (sphere and time), got {0}")]
    TooFewFactors(usize),
    #[error("factor space {index} has dimension 0")]
    ZeroDimension { index: usize },
    #[error("sphere dimension d_1 must be at least 2, got {0}")]
    SphereDimension(u32),
    #[error("factor space 2 is the time line and must have d_2 = 1, got {0}")]
    TimeDimension(u32),
    #[error("total dimension D = 2 makes the target metric degenerate (1/(2-D) pole)")]
    DegenerateDimension,
    #[error("brane {brane}: index set must be non-empty")]
    EmptyIndexSet { brane: usize },
    #[error("brane {brane}: index 1 (the sphere) may not belong to a brane worldvolume")]
    BraneInSphere { brane: usize },
    #[error("brane {brane}: factor index {index} out of range 2..={n}")]
    IndexOutOfRange { brane: usize, index: usize, n: usize },
    #[error("brane {brane}: factor index {index} repeated")]
    DuplicateIndex { brane: usize, index: usize },
    #[error("brane {brane}: coupling vector has length {got}, expected l = {expected}")]
    LambdaLength { brane: usize, expected: usize, got: usize },
    #[error("brane {brane}: epsilon must be +1 or -1, got {value}")]
    BadEpsilon { brane: usize, value: i32 },
    #[error("brane {brane}: charge must be nonzero and finite")]
    BadCharge { brane: usize },
    #[error("scalar metric h: {0}")]
    ScalarMetric(String),
    #[error("B_ss = 0 for brane {brane}: the self scalar product must not vanish")]
    ZeroSelfProduct { brane: usize },
    #[error("det B = 0: brane covectors are linearly dependent (det = {det:e})")]
    DegenerateCoupling { det: f64 },
    #[error("{branes} branes exceed the bound |S| <= n + l = {bound}")]
    TooManyBranes { branes: usize, bound: usize },
    #[error("B[{s}][{t}]: closed formula {formula} disagrees with metric contraction {contraction}")]
    RouteMismatch { s: usize, t: usize, formula: f64, contraction: f64 },
    #[error("(U^{brane}, U^1) = {value} is not zero")]
    CurvatureNotOrthogonal { brane: usize, value: String },
    #[error("predicted intersection dimension d(I_{s} n I_{t}) = {value} is not an integer")]
    NonIntegerIntersection { s: usize, t: usize, value: f64 },
    #[error("brane {brane} does not contain the time direction (factor 2)")]
    MissingTime { brane: usize },
    #[error(transparent)]
    Cartan(#[from] CartanError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BraneType {
    Electric,
    Magnetic,
}

impl BraneType {
    /// `chi_s`: +1 for electric, -1 for magnetic branes.
    pub fn chi(self) -> i32 {
        match self {
            BraneType::Electric => 1,
            BraneType::Magnetic => -1,
        }
    }
}

impl fmt::Display for BraneType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BraneType::Electric => "electric",
            BraneType::Magnetic => "magnetic",
        })
    }
}

/// One brane `s = (a_s, v_s, I_s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Brane {
    /// Form-field label `a_s`; branes sharing a color couple to the same form.
    pub color: String,
    #[serde(rename = "type")]
    pub kind: BraneType,
    /// 1-based factor-space indices of the worldvolume, a subset of `2..=n`.
    pub index_set: Vec<usize>,
    /// Dilaton coupling `lambda_{a a_s}` with lower index, length `l`.
    #[serde(default)]
    pub lambda: Vec<f64>,
    /// Overall sign `epsilon_s`. It folds together the form sign `theta_a`,
    /// the sign of the worldvolume metric determinant `epsilon(I_s)` and, for
    /// magnetic branes, `-sign det g`; the caller supplies the product.
    pub epsilon: i32,
    pub charge: f64,
}

impl Brane {
    pub fn chi(&self) -> i32 {
        self.kind.chi()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.index_set.contains(&i)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BraneConfig {
    /// `d_1, ..., d_n`.
    pub dims: Vec<u32>,
    /// `h_{ab}`, `l x l`; empty when there are no scalar fields.
    #[serde(default)]
    pub h_metric: Vec<Vec<f64>>,
    pub branes: Vec<Brane>,
}

impl BraneConfig {
    pub fn new(dims: Vec<u32>, h_metric: Vec<Vec<f64>>, branes: Vec<Brane>) -> Result<Self, SigmaError> {
        let c = BraneConfig { dims, h_metric, branes };
        c.validate()?;
        Ok(c)
    }

    pub fn from_json(text: &str) -> Result<Self, SigmaError> {
        let c: BraneConfig = serde_json::from_str(text).map_err(|e| {
            let line = e.line();
            let snippet = text.lines().nth(line.saturating_sub(1)).unwrap_or("").trim_end().to_string();
            SigmaError::ConfigParse { line, column: e.column(), message: e.to_string(), snippet }
        })?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), SigmaError> {
        let n = self.dims.len();
        if n < 2 {
            return Err(SigmaError::TooFewFactors(n));
        }
        if let Some(i) = self.dims.iter().position(|&d| d == 0) {
            return Err(SigmaError::ZeroDimension { index: i + 1 });
        }
        if self.dims[0] < 2 {
            return Err(SigmaError::SphereDimension(self.dims[0]));
        }
        if self.dims[1] != 1 {
            return Err(SigmaError::TimeDimension(self.dims[1]));
        }
        let l = self.l();
        for (r, row) in self.h_metric.iter().enumerate() {
            if row.len() != l {
                return Err(SigmaError::ScalarMetric(format!("row {r} has length {}, expected {l}", row.len())));
            }
            for (c, &x) in row.iter().enumerate() {
                if !x.is_finite() || (x - self.h_metric[c][r]).abs() > FLOAT_TOL * x.abs().max(1.0) {
                    return Err(SigmaError::ScalarMetric("matrix must be finite and symmetric".into()));
                }
            }
        }
        if l > 0 && self.h_matrix().try_inverse().is_none() {
            return Err(SigmaError::ScalarMetric("matrix is degenerate".into()));
        }
        for (s, b) in self.branes.iter().enumerate() {
            if b.index_set.is_empty() {
                return Err(SigmaError::EmptyIndexSet { brane: s });
            }
            let mut seen = BTreeSet::new();
            for &i in &b.index_set {
                if i == 1 {
                    return Err(SigmaError::BraneInSphere { brane: s });
                }
                if i < 1 || i > n {
                    return Err(SigmaError::IndexOutOfRange { brane: s, index: i, n });
                }
                if !seen.insert(i) {
                    return Err(SigmaError::DuplicateIndex { brane: s, index: i });
                }
            }
            if b.lambda.len() != l {
                return Err(SigmaError::LambdaLength { brane: s, expected: l, got: b.lambda.len() });
            }
            if b.epsilon != 1 && b.epsilon != -1 {
                return Err(SigmaError::BadEpsilon { brane: s, value: b.epsilon });
            }
            if b.charge == 0.0 || !b.charge.is_finite() {
                return Err(SigmaError::BadCharge { brane: s });
            }
        }
        Ok(())
    }

    /// Number of factor spaces `n`.
    pub fn n(&self) -> usize {
        self.dims.len()
    }

    /// Number of scalar fields `l`.
    pub fn l(&self) -> usize {
        self.h_metric.len()
    }

    /// `D = 1 + sum_i d_i`.
    pub fn total_dimension(&self) -> u32 {
        1 + self.dims.iter().sum::<u32>()
    }

    /// `dbar = d_1 - 1`.
    pub fn dbar(&self) -> u32 {
        self.dims[0] - 1
    }

    pub fn d(&self, i: usize) -> u32 {
        self.dims[i - 1]
    }

    /// `d(I) = sum_{i in I} d_i`.
    pub fn index_dim(&self, set: &[usize]) -> u32 {
        set.iter().map(|&i| self.d(i)).sum()
    }

    pub fn intersection_dim(&self, s: usize, t: usize) -> u32 {
        let other = &self.branes[t].index_set;
        self.branes[s].index_set.iter().filter(|i| other.contains(i)).map(|&i| self.d(i)).sum()
    }

    pub fn h_matrix(&self) -> DMatrix<f64> {
        let l = self.l();
        DMatrix::from_fn(l, l, |i, j| self.h_metric[i][j])
    }

    pub fn h_inverse(&self) -> DMatrix<f64> {
        let l = self.l();
        if l == 0 {
            return DMatrix::zeros(0, 0);
        }
        self.h_matrix().try_inverse().expect("validated scalar metric is invertible")
    }

    /// `lambda_{a_s} . lambda_{a_t} = lambda_{a a_s} lambda_{b a_t} h^{ab}`.
    pub fn lambda_dot(&self, s: usize, t: usize) -> f64 {
        let hinv = self.h_inverse();
        let (ls, lt) = (&self.branes[s].lambda, &self.branes[t].lambda);
        let mut acc = 0.0;
        for a in 0..self.l() {
            for b in 0..self.l() {
                acc += ls[a] * lt[b] * hinv[(a, b)];
            }
        }
        acc
    }

    /// Raised coupling `lambda^a_{a_s} = h^{ab} lambda_{b a_s}`.
    pub fn lambda_up(&self, s: usize) -> Vec<f64> {
        let hinv = self.h_inverse();
        let ls = &self.branes[s].lambda;
        (0..self.l()).map(|a| (0..self.l()).map(|b| hinv[(a, b)] * ls[b]).sum()).collect()
    }
}

/// Target-space metric. The space block is exact.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetMetric {
    /// `G_ij = d_i delta_ij - d_i d_j`.
    pub g: RationalMatrix,
    /// `G^ij = delta^ij / d_i + 1/(2 - D)`.
    pub g_inv: RationalMatrix,
    pub h: DMatrix<f64>,
    pub h_inv: DMatrix<f64>,
}

impl TargetMetric {
    /// Full `(n+l) x (n+l)` metric `diag(G, h)`.
    pub fn full(&self) -> DMatrix<f64> {
        block_diag(&self.g, &self.h)
    }

    pub fn full_inverse(&self) -> DMatrix<f64> {
        block_diag(&self.g_inv, &self.h_inv)
    }
}

fn block_diag(space: &RationalMatrix, scalar: &DMatrix<f64>) -> DMatrix<f64> {
    let n = space.len();
    let l = scalar.nrows();
    let mut m = DMatrix::zeros(n + l, n + l);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = to_f64(&space[i][j]);
        }
    }
    for a in 0..l {
        for b in 0..l {
            m[(n + a, n + b)] = scalar[(a, b)];
        }
    }
    m
}

/// `(G, G^{-1})` for factor dimensions `dims`.
pub fn space_metric(dims: &[u32]) -> Result<(RationalMatrix, RationalMatrix), SigmaError> {
    let total = 1 + dims.iter().map(|&d| i64::from(d)).sum::<i64>();
    if total == 2 {
        return Err(SigmaError::DegenerateDimension);
    }
    if let Some(i) = dims.iter().position(|&d| d == 0) {
        return Err(SigmaError::ZeroDimension { index: i + 1 });
    }
    let n = dims.len();
    let d: Vec<i64> = dims.iter().map(|&x| i64::from(x)).collect();
    let g = (0..n)
        .map(|i| (0..n).map(|j| rat(if i == j { d[i] } else { 0 } - d[i] * d[j])).collect())
        .collect();
    let pole = ratio(1, 2 - total);
    let g_inv = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { ratio(1, d[i]) + &pole } else { pole.clone() })
                .collect()
        })
        .collect();
    Ok((g, g_inv))
}

pub fn target_metric(config: &BraneConfig) -> Result<TargetMetric, SigmaError> {
    let (g, g_inv) = space_metric(&config.dims)?;
    Ok(TargetMetric { g, g_inv, h: config.h_matrix(), h_inv: config.h_inverse() })
}

/// A covector on `R^{n+l}`: exact space part, floating scalar part.
#[derive(Clone, Debug, PartialEq)]
pub struct UVector {
    pub space: Vec<Rational>,
    pub scalar: Vec<f64>,
}

impl UVector {
    pub fn to_f64(&self) -> Vec<f64> {
        self.space.iter().map(to_f64).chain(self.scalar.iter().copied()).collect()
    }

    /// Exact space part of the scalar product with `G^{ij}`.
    pub fn space_dot(&self, other: &UVector, g_inv: &RationalMatrix) -> Rational {
        let mut acc = Rational::zero();
        for (i, ui) in self.space.iter().enumerate() {
            if ui.is_zero() {
                continue;
            }
            for (j, vj) in other.space.iter().enumerate() {
                acc += ui * vj * &g_inv[i][j];
            }
        }
        acc
    }

    pub fn scalar_dot(&self, other: &UVector, h_inv: &DMatrix<f64>) -> f64 {
        let mut acc = 0.0;
        for (a, ua) in self.scalar.iter().enumerate() {
            for (b, vb) in other.scalar.iter().enumerate() {
                acc += ua * vb * h_inv[(a, b)];
            }
        }
        acc
    }

    pub fn dot(&self, other: &UVector, metric: &TargetMetric) -> f64 {
        to_f64(&self.space_dot(other, &metric.g_inv)) + self.scalar_dot(other, &metric.h_inv)
    }
}

/// Brane covectors `U^s_A = (d_i delta_{i I_s}, -chi_s lambda_{a a_s})`.
pub fn brane_u_vectors(config: &BraneConfig) -> Vec<UVector> {
    config
        .branes
        .iter()
        .map(|b| UVector {
            space: (1..=config.n())
                .map(|i| if b.contains(i) { rat(i64::from(config.d(i))) } else { rat(0) })
                .collect(),
            scalar: b.lambda.iter().map(|&x| -f64::from(b.chi()) * x).collect(),
        })
        .collect()
}

/// Curvature covector `U^1_A = (-delta^1_i + d_i, 0)`.
pub fn curvature_u_vector(config: &BraneConfig) -> UVector {
    UVector {
        space: (1..=config.n())
            .map(|i| rat(i64::from(config.d(i)) - i64::from(i == 1)))
            .collect(),
        scalar: vec![0.0; config.l()],
    }
}

/// Brane vectors followed by `U^1` as the last entry.
pub fn build_u_vectors(config: &BraneConfig) -> Vec<UVector> {
    let mut v = brane_u_vectors(config);
    v.push(curvature_u_vector(config));
    v
}

/// Contravariant space components `U^{si} = delta_{i I_s} - d(I_s)/(D-2)`.
pub fn contravariant_space(config: &BraneConfig, s: usize) -> Vec<Rational> {
    let b = &config.branes[s];
    let frac = ratio(i64::from(config.index_dim(&b.index_set)), i64::from(config.total_dimension()) - 2);
    (1..=config.n()).map(|i| rat(i64::from(b.contains(i))) - &frac).collect()
}

#[derive(Clone, Debug)]
pub struct CouplingData {
    pub b: DMatrix<f64>,
    /// Exact space block `d(I_s n I_t) + d(I_s) d(I_t)/(2-D)`.
    pub b_space: RationalMatrix,
    /// `K_s = B_ss`.
    pub k: Vec<f64>,
    /// `h_s = 1/K_s`.
    pub h: Vec<f64>,
    pub a: QuasiCartan,
    /// Unrounded `2 B_st / B_tt`.
    pub a_float: DMatrix<f64>,
}

impl CouplingData {
    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    /// The matrix `(h_s A_{st})`, symmetric by construction.
    pub fn ha_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |s, t| self.h[s] * self.a_float[(s, t)])
    }

    pub fn degrees(&self) -> Result<DegreeVector, SigmaError> {
        Ok(polynomial_degrees(&self.a)?)
    }
}

pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    m.nrows() == 0 || nalgebra::Cholesky::new(m.clone()).is_some()
}

/// Scalar products `B_{ss'}`, `K_s`, `h_s` and the quasi-Cartan matrix.
///
/// Every entry is computed twice, from the closed formula and by contracting
/// the covectors with the inverse target metric; the routes must agree exactly
/// on the space block and to `1e-12` overall.
pub fn scalar_products(config: &BraneConfig) -> Result<CouplingData, SigmaError> {
    config.validate()?;
    let metric = target_metric(config)?;
    let us = brane_u_vectors(config);
    let u1 = curvature_u_vector(config);
    let ns = config.branes.len();

    let bound = config.n() + config.l();
    if ns > bound {
        return Err(SigmaError::TooManyBranes { branes: ns, bound });
    }

    for (s, u) in us.iter().enumerate() {
        let v = u.space_dot(&u1, &metric.g_inv);
        if !v.is_zero() {
            return Err(SigmaError::CurvatureNotOrthogonal { brane: s, value: v.to_string() });
        }
    }

    let big_d = i64::from(config.total_dimension());
    let mut b = DMatrix::zeros(ns, ns);
    let mut b_space = vec![vec![Rational::zero(); ns]; ns];
    for s in 0..ns {
        for t in 0..ns {
            let (bs, bt) = (&config.branes[s], &config.branes[t]);
            let ds = i64::from(config.index_dim(&bs.index_set));
            let dt = i64::from(config.index_dim(&bt.index_set));
            let space = rat(i64::from(config.intersection_dim(s, t))) + ratio(ds * dt, 2 - big_d);
            let formula = to_f64(&space) + f64::from(bs.chi() * bt.chi()) * config.lambda_dot(s, t);

            let space_c = us[s].space_dot(&us[t], &metric.g_inv);
            let contraction = to_f64(&space_c) + us[s].scalar_dot(&us[t], &metric.h_inv);
            if space_c != space
                || (formula - contraction).abs() > FLOAT_TOL * formula.abs().max(1.0)
            {
                return Err(SigmaError::RouteMismatch { s, t, formula, contraction });
            }
            b[(s, t)] = formula;
            b_space[s][t] = space;
        }
    }

    let k: Vec<f64> = (0..ns).map(|s| b[(s, s)]).collect();
    for (s, &ks) in k.iter().enumerate() {
        if ks.abs() <= FLOAT_TOL {
            return Err(SigmaError::ZeroSelfProduct { brane: s });
        }
    }
    if ns > 0 {
        let det = b.determinant();
        let scale: f64 = (0..ns).map(|s| b.row(s).norm().max(1.0)).product();
        if det.abs() <= 1e-10 * scale {
            return Err(SigmaError::DegenerateCoupling { det });
        }
    }
    let h = k.iter().map(|x| 1.0 / x).collect();
    let a_float = DMatrix::from_fn(ns, ns, |s, t| 2.0 * b[(s, t)] / b[(t, t)]);
    let a = match QuasiCartan::from_f64(&a_float) {
        Ok(a) => a,
        Err(CartanError::Singular { .. }) => return Err(SigmaError::DegenerateCoupling { det: 0.0 }),
        Err(e) => return Err(e.into()),
    };
    Ok(CouplingData { b, b_space, k, h, a, a_float })
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntersectionReport {
    /// Dimensions predicted by the intersection rule.
    pub predicted: Vec<Vec<f64>>,
    /// `d(I_s n I_t)` from the index sets.
    pub actual: Vec<Vec<u32>>,
    /// `(s, t, predicted, actual)` for every disagreeing pair.
    pub mismatches: Vec<(usize, usize, f64, u32)>,
}

impl IntersectionReport {
    pub fn is_consistent(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Intersection rule
/// `d(I_s n I_t) = d(I_s) d(I_t)/(D-2) - chi_s chi_t lambda_s.lambda_t + K_t A_st / 2`
/// evaluated for the supplied matrix and compared with the actual index sets.
pub fn intersection_dims(
    config: &BraneConfig,
    coupling: &CouplingData,
    a: &QuasiCartan,
) -> Result<IntersectionReport, SigmaError> {
    let ns = config.branes.len();
    let dm2 = f64::from(config.total_dimension()) - 2.0;
    let mut predicted = vec![vec![0.0; ns]; ns];
    let mut actual = vec![vec![0; ns]; ns];
    let mut mismatches = Vec::new();
    for s in 0..ns {
        for t in 0..ns {
            let (bs, bt) = (&config.branes[s], &config.branes[t]);
            let ds = f64::from(config.index_dim(&bs.index_set));
            let dt = f64::from(config.index_dim(&bt.index_set));
            let value = ds * dt / dm2 - f64::from(bs.chi() * bt.chi()) * config.lambda_dot(s, t)
                + 0.5 * coupling.k[t] * to_f64(a.entry(s, t));
            let rounded = value.round();
            if (value - rounded).abs() > 1e-9 || rounded < 0.0 {
                return Err(SigmaError::NonIntegerIntersection { s, t, value });
            }
            predicted[s][t] = rounded;
            actual[s][t] = config.intersection_dim(s, t);
            if rounded as u32 != actual[s][t] {
                mismatches.push((s, t, rounded, actual[s][t]));
            }
        }
    }
    Ok(IntersectionReport { predicted, actual, mismatches })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RestrictionCode {
    /// Two same-colour, same-type branes differing only by swapping two
    /// one-dimensional factors.
    Restriction1,
    /// A magnetic brane whose complement is an electric same-colour brane plus
    /// one one-dimensional factor.
    Restriction2,
    /// A brane that does not contain factor 2; no horizon is possible.
    CommonTime,
}

impl fmt::Display for RestrictionCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RestrictionCode::Restriction1 => "R1",
            RestrictionCode::Restriction2 => "R2",
            RestrictionCode::CommonTime => "TIME",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Finding {
    pub code: RestrictionCode,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct AdmissibilityReport {
    /// Number of one-dimensional factor spaces among `2..=n`.
    pub n1: usize,
    pub findings: Vec<Finding>,
}

impl AdmissibilityReport {
    pub fn passes(&self) -> bool {
        self.findings.is_empty()
    }

    /// Only the common-time requirement is a hard failure.
    pub fn blocks_black_hole(&self) -> bool {
        self.findings.iter().any(|f| f.code == RestrictionCode::CommonTime)
    }

    pub fn has(&self, code: RestrictionCode) -> bool {
        self.findings.iter().any(|f| f.code == code)
    }
}

impl fmt::Display for AdmissibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "one-dimensional factors n1 = {}", self.n1)?;
        if self.findings.is_empty() {
            return write!(f, "all restrictions satisfied");
        }
        for (i, x) in self.findings.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "[{}] {}", x.code, x.message)?;
        }
        Ok(())
    }
}

pub fn check_restrictions(config: &BraneConfig) -> AdmissibilityReport {
    let n = config.n();
    let w1: Vec<usize> = (2..=n).filter(|&i| config.d(i) == 1).collect();
    let mut findings = Vec::new();
    let sets: Vec<BTreeSet<usize>> =
        config.branes.iter().map(|b| b.index_set.iter().copied().collect()).collect();

    if w1.len() >= 2 {
        for (s, bs) in config.branes.iter().enumerate() {
            for (t, bt) in config.branes.iter().enumerate() {
                if bs.color != bt.color || bs.kind != bt.kind {
                    continue;
                }
                for (x, &i) in w1.iter().enumerate() {
                    for &j in &w1[x + 1..] {
                        if !sets[s].contains(&i) || !sets[t].contains(&j) {
                            continue;
                        }
                        let mut a = sets[s].clone();
                        a.remove(&i);
                        let mut b = sets[t].clone();
                        b.remove(&j);
                        if a == b {
                            findings.push(Finding {
                                code: RestrictionCode::Restriction1,
                                message: format!(
                                    "branes {s} and {t} (colour {}, {}) differ only by one-dimensional factors {i} and {j}",
                                    bs.color, bs.kind
                                ),
                            });
                        }
                    }
                }
            }
        }
    }

    if !w1.is_empty() {
        let all: BTreeSet<usize> = (1..=n).collect();
        for (s, bs) in config.branes.iter().enumerate() {
            if bs.kind != BraneType::Magnetic {
                continue;
            }
            let complement: BTreeSet<usize> = all.difference(&sets[s]).copied().collect();
            for (t, bt) in config.branes.iter().enumerate() {
                if bt.kind != BraneType::Electric || bt.color != bs.color {
                    continue;
                }
                for &i in &w1 {
                    if sets[t].contains(&i) {
                        continue;
                    }
                    let mut joined = sets[t].clone();
                    joined.insert(i);
                    if joined == complement {
                        findings.push(Finding {
                            code: RestrictionCode::Restriction2,
                            message: format!(
                                "magnetic brane {s} complement equals electric brane {t} plus factor {i}"
                            ),
                        });
                    }
                }
            }
        }
    }

    for (s, b) in config.branes.iter().enumerate() {
        if !b.contains(2) {
            findings.push(Finding {
                code: RestrictionCode::CommonTime,
                message: format!("brane {s} does not contain the time factor 2"),
            });
        }
    }
    AdmissibilityReport { n1: w1.len(), findings }
}

#[derive(Clone, Debug, PartialEq)]
pub struct B0Parameters {
    /// `b_0^s = 2 sum_t A^{st}`.
    pub b0_s: DegreeVector,
    /// `b_0^A`, space components `i = 1..n` followed by scalar components.
    pub b0_a: Vec<f64>,
}

/// Horizon parameters `b_0`: `b_0^s = 2 sum A^{st}` and
/// `b_0^A = -delta^A_2 + h_1 U^{1A} + sum_s h_s b_0^s U^{sA}`.
pub fn b0_parameters(
    a: &QuasiCartan,
    config: &BraneConfig,
    coupling: &CouplingData,
) -> Result<B0Parameters, SigmaError> {
    if let Some(s) = config.branes.iter().position(|b| !b.contains(2)) {
        return Err(SigmaError::MissingTime { brane: s });
    }
    let inv = inverse_cartan(a)?;
    let b0_s = DegreeVector {
        values: inv.iter().map(|row| row.iter().fold(Rational::zero(), |acc, x| acc + x) * rat(2)).collect(),
    };
    let n = config.n();
    let d1 = f64::from(config.dims[0]);
    let h1 = d1 / (1.0 - d1);
    let mut b0_a = vec![0.0; n + config.l()];
    b0_a[1] -= 1.0;
    b0_a[0] += h1 * (-1.0 / d1);
    for s in 0..config.branes.len() {
        let w = coupling.h[s] * to_f64(&b0_s.values[s]);
        for (i, u) in contravariant_space(config, s).iter().enumerate() {
            b0_a[i] += w * to_f64(u);
        }
        let chi = f64::from(config.branes[s].chi());
        for (a_idx, lam) in config.lambda_up(s).iter().enumerate() {
            b0_a[n + a_idx] += w * (-chi * lam);
        }
    }
    Ok(B0Parameters { b0_s, b0_a })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie_cartan::{cartan_matrix, Family};

    fn brane(kind: BraneType, set: &[usize], lambda: Vec<f64>) -> Brane {
        Brane { color: "F".into(), kind, index_set: set.to_vec(), lambda, epsilon: -1, charge: 1.0 }
    }

    fn dyon11() -> BraneConfig {
        BraneConfig::new(
            vec![2, 1, 2, 5],
            vec![],
            vec![brane(BraneType::Electric, &[2, 3], vec![]), brane(BraneType::Magnetic, &[2, 4], vec![])],
        )
        .unwrap()
    }

    fn kk() -> BraneConfig {
        let lam = -(1.5f64).sqrt();
        BraneConfig::new(
            vec![2, 1],
            vec![vec![1.0]],
            vec![brane(BraneType::Electric, &[2], vec![lam]), brane(BraneType::Magnetic, &[2], vec![lam])],
        )
        .unwrap()
    }

    #[test]
    fn target_metric_four_dimensions() {
        let (g, g_inv) = space_metric(&[2, 1]).unwrap();
        assert_eq!(g, vec![vec![rat(-2), rat(-2)], vec![rat(-2), rat(0)]]);
        assert_eq!(g_inv, vec![vec![rat(0), ratio(-1, 2)], vec![ratio(-1, 2), ratio(1, 2)]]);
        let prod = crate::lie_cartan::mat_mul(&g, &g_inv);
        assert_eq!(prod, vec![vec![rat(1), rat(0)], vec![rat(0), rat(1)]]);
    }

    #[test]
    fn target_metric_pole() {
        assert_eq!(space_metric(&[1]), Err(SigmaError::DegenerateDimension));
    }

    #[test]
    fn target_metric_eleven_dimensions() {
        let dims = [2, 1, 2, 5];
        let (g, g_inv) = space_metric(&dims).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { ratio(1, i64::from(dims[i])) } else { rat(0) } - ratio(1, 9);
                assert_eq!(g_inv[i][j], want);
            }
        }
        let prod = crate::lie_cartan::mat_mul(&g, &g_inv);
        for (i, row) in prod.iter().enumerate() {
            for (j, x) in row.iter().enumerate() {
                assert_eq!(*x, rat(i64::from(i == j)));
            }
        }
    }

    #[test]
    fn u_vectors() {
        let c = dyon11();
        let us = build_u_vectors(&c);
        assert_eq!(us[0].space, vec![rat(0), rat(1), rat(2), rat(0)]);
        assert!(us[0].scalar.is_empty());
        assert_eq!(us[2].space, vec![rat(1), rat(1), rat(2), rat(5)]);
    }

    #[test]
    fn dyon11_couplings() {
        let c = dyon11();
        let cd = scalar_products(&c).unwrap();
        assert_eq!(cd.b_space, vec![vec![rat(2), rat(-1)], vec![rat(-1), rat(2)]]);
        assert_eq!(cd.k, vec![2.0, 2.0]);
        assert_eq!(cd.a, cartan_matrix(Family::A, 2).unwrap());
        assert_eq!(cd.a.tag().unwrap().to_string(), "A2");
        let rep = intersection_dims(&c, &cd, &cd.a).unwrap();
        assert_eq!(rep.predicted[0][1], 1.0);
        assert!(rep.is_consistent());
    }

    #[test]
    fn kk_couplings() {
        let c = kk();
        assert!((c.lambda_dot(0, 1) - 1.5).abs() < FLOAT_TOL);
        let cd = scalar_products(&c).unwrap();
        let want = [[2.0, -1.0], [-1.0, 2.0]];
        for s in 0..2 {
            for t in 0..2 {
                assert!((cd.b[(s, t)] - want[s][t]).abs() < FLOAT_TOL);
            }
        }
        assert_eq!(cd.a.tag().unwrap().to_string(), "A2");
        let rep = intersection_dims(&c, &cd, &cd.a).unwrap();
        assert_eq!(rep.predicted[0][1], 1.0);
    }

    #[test]
    fn single_brane_and_dilaton_products() {
        let c = BraneConfig::new(vec![2, 1, 3], vec![], vec![brane(BraneType::Electric, &[2, 3], vec![])]).unwrap();
        let cd = scalar_products(&c).unwrap();
        assert_eq!(cd.a.size(), 1);
        assert_eq!(cd.a.entries()[0][0], rat(2));

        // D = 6: B_12 = 1 - 2*2/4 + (1)(-1)
        let c = BraneConfig::new(
            vec![2, 1, 1, 1],
            vec![vec![1.0]],
            vec![brane(BraneType::Electric, &[2, 3], vec![1.0]), brane(BraneType::Electric, &[2, 4], vec![-1.0])],
        )
        .unwrap();
        let cd = scalar_products(&c).unwrap();
        assert!((cd.b[(0, 1)] + 1.0).abs() < FLOAT_TOL);
        assert!((cd.b[(0, 0)] - 2.0).abs() < FLOAT_TOL);
    }

    #[test]
    fn orthogonal_pair_has_diagonal_cartan() {
        // B_12 = 1 - 2*2/4 + 0
        let c = BraneConfig::new(
            vec![2, 1, 1, 1],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![brane(BraneType::Electric, &[2, 3], vec![1.0, 0.0]), brane(BraneType::Electric, &[2, 4], vec![0.0, 1.0])],
        )
        .unwrap();
        let cd = scalar_products(&c).unwrap();
        assert_eq!(cd.a.tag().unwrap().to_string(), "A1+A1");
        let rep = intersection_dims(&c, &cd, &cd.a).unwrap();
        assert_eq!(rep.predicted[0][1], 1.0);
    }

    #[test]
    fn restrictions() {
        let r = check_restrictions(&dyon11());
        assert!(r.passes());
        assert_eq!(r.n1, 1);

        let c = BraneConfig::new(vec![2, 1, 3], vec![], vec![brane(BraneType::Electric, &[3], vec![])]).unwrap();
        let r = check_restrictions(&c);
        assert!(r.blocks_black_hole());

        // n1 <= 1 makes Restriction 1 vacuous even for look-alike branes
        let c = BraneConfig::new(
            vec![2, 1, 2],
            vec![],
            vec![brane(BraneType::Electric, &[2], vec![]), brane(BraneType::Electric, &[3], vec![])],
        )
        .unwrap();
        assert!(!check_restrictions(&c).has(RestrictionCode::Restriction1));

        // n1 = 2 with I = {2,4}, J = {3,4}: I\{2} = J\{3}
        let c = BraneConfig::new(
            vec![2, 1, 1, 2],
            vec![],
            vec![brane(BraneType::Electric, &[2, 4], vec![]), brane(BraneType::Electric, &[3, 4], vec![])],
        )
        .unwrap();
        let r = check_restrictions(&c);
        assert!(r.has(RestrictionCode::Restriction1));
        assert!(r.blocks_black_hole());
    }

    #[test]
    fn b0_values() {
        let c = dyon11();
        let cd = scalar_products(&c).unwrap();
        let b0 = b0_parameters(&cd.a, &c, &cd).unwrap();
        assert_eq!(b0.b0_s.integers().unwrap(), vec![2, 2]);
        // U^r_A b^A = 0 for the brane and curvature covectors
        for u in build_u_vectors(&c) {
            let dot: f64 = u.to_f64().iter().zip(&b0.b0_a).map(|(x, y)| x * y).sum();
            assert!(dot.abs() < 1e-12, "{dot}");
        }

        let a1 = cartan_matrix(Family::A, 1).unwrap();
        let single = BraneConfig::new(vec![2, 1, 3], vec![], vec![brane(BraneType::Electric, &[2, 3], vec![])]).unwrap();
        let cd1 = scalar_products(&single).unwrap();
        assert_eq!(b0_parameters(&a1, &single, &cd1).unwrap().b0_s.integers().unwrap(), vec![1]);

        let a3 = cartan_matrix(Family::A, 3).unwrap();
        let b0 = b0_parameters(&a3, &BraneConfig::new(vec![2, 1], vec![], vec![]).unwrap(), &cd1);
        assert_eq!(b0.unwrap().b0_s.integers().unwrap(), vec![3, 4, 3]);
    }

    #[test]
    fn config_rejections() {
        let e = BraneConfig::new(vec![2, 1, 2], vec![], vec![brane(BraneType::Electric, &[1, 2], vec![])]);
        assert_eq!(e, Err(SigmaError::BraneInSphere { brane: 0 }));
        assert_eq!(BraneConfig::new(vec![2, 2], vec![], vec![]), Err(SigmaError::TimeDimension(2)));
        assert_eq!(BraneConfig::new(vec![1, 1], vec![], vec![]), Err(SigmaError::SphereDimension(1)));
        let mut b = brane(BraneType::Electric, &[2], vec![]);
        b.charge = 0.0;
        assert_eq!(BraneConfig::new(vec![2, 1], vec![], vec![b]), Err(SigmaError::BadCharge { brane: 0 }));
    }

    #[test]
    fn zero_self_product_and_degeneracy() {
        // D = 4: B_11 = 1 - 1/2 + lambda^2 / h with h = -2
        let c = BraneConfig::new(vec![2, 1], vec![vec![-2.0]], vec![brane(BraneType::Electric, &[2], vec![1.0])]).unwrap();
        assert_eq!(scalar_products(&c).unwrap_err(), SigmaError::ZeroSelfProduct { brane: 0 });

        // two identical branes: det B = 0
        let c = BraneConfig::new(
            vec![2, 1, 2],
            vec![],
            vec![brane(BraneType::Electric, &[2, 3], vec![]), brane(BraneType::Electric, &[2, 3], vec![])],
        )
        .unwrap();
        assert!(matches!(scalar_products(&c), Err(SigmaError::DegenerateCoupling { .. })));
    }

    #[test]
    fn json_parse_errors_carry_line() {
        let text = "{\n \"dims\": [2, 1],\n \"branes\": [ oops ]\n}";
        match BraneConfig::from_json(text) {
            Err(SigmaError::ConfigParse { line, snippet, .. }) => {
                assert_eq!(line, 3);
                assert!(snippet.contains("oops"));
            }
            other => panic!("{other:?}"),
        }
    }
}
