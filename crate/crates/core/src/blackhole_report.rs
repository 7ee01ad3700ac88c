//! Black-hole observables assembled from solved moduli functions.
//!
//! The metric is
//!
//! ```text
//! g = prod_s H_s^{2 h_s d(I_s)/(D-2)} { F^{-1} dR^2 + R^2 dOmega^2
//!       - prod_s H_s^{-2 h_s} F dt^2 + sum_{i>=3} prod_s H_s^{-2 h_s [i in I_s]} g^i }
//! ```
//!
//! with `F = 1 - 2 mu / R^dbar` and `z = R^{-dbar}`. The power of `H_s` on the
//! block of factor `i` is `-2 h_s U^{si}`.

use std::fmt;
use std::str::FromStr;

use num_traits::Zero;
use thiserror::Error;

use crate::lie_cartan::{inverse_cartan, rat, ratio, to_f64, QuasiCartan, Rational};
use crate::moduli_poly::{ModuliError, ModuliPolynomial};
use crate::sigma_model::{
    check_restrictions, is_positive_definite, scalar_products, Brane, BraneConfig, BraneType, CouplingData,
    SigmaError,
};
use crate::toda_oracle::OdeRun;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("black-hole assembly refused: {0}")]
    CommonTime(String),
    #[error("moduli function H_{brane} is not positive (value {value} at z = {z})")]
    Positivity { brane: usize, z: f64, value: f64 },
    #[error("horizon value H_{brane}0 = {value} must be finite and positive")]
    HorizonValue { brane: usize, value: f64 },
    #[error("moduli describe {got} branes, configuration has {expected}")]
    Shape { expected: usize, got: usize },
    #[error("mu must be positive and finite, got {0}")]
    BadMu(f64),
    #[error("unknown preset {0:?} (expected m2m5_dyon or kk_dyon)")]
    UnknownPreset(String),
    #[error("the Kaluza-Klein lift needs a solution built from the kk_dyon preset")]
    NotKkPreset,
    #[error(transparent)]
    Sigma(#[from] SigmaError),
    #[error(transparent)]
    Moduli(#[from] ModuliError),
}

/// Moduli functions backing a solution.
#[derive(Clone, Debug, PartialEq)]
pub enum Moduli {
    Polynomial(ModuliPolynomial),
    /// Integrated run plus extrapolated horizon values.
    Numerical { run: OdeRun, h0: Vec<f64> },
}

impl Moduli {
    pub fn len(&self) -> usize {
        match self {
            Moduli::Polynomial(p) => p.len(),
            Moduli::Numerical { h0, .. } => h0.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Horizon limits `H_{s0}`.
    pub fn horizon_values(&self) -> Vec<f64> {
        match self {
            Moduli::Polynomial(p) => p.horizon_values(),
            Moduli::Numerical { h0, .. } => h0.clone(),
        }
    }

    fn check_positive(&self) -> Result<(), ReportError> {
        match self {
            Moduli::Polynomial(p) => p.check_positive().map_err(|e| match e {
                ModuliError::Positivity { brane, z, value } => ReportError::Positivity { brane, z, value },
                other => other.into(),
            }),
            Moduli::Numerical { run, .. } => {
                for (z, row) in run.z.iter().zip(&run.h) {
                    if let Some((s, &v)) = row.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
                        return Err(ReportError::Positivity { brane: s, z: *z, value: v });
                    }
                }
                Ok(())
            }
        }
    }

    /// `(z, H(z))` pairs available for sampling: a uniform interior grid for
    /// polynomials, the run's own points (without `z = 0`) otherwise.
    fn samples(&self, mu: f64, count: usize) -> Vec<(f64, Vec<f64>)> {
        match self {
            Moduli::Polynomial(p) => crate::moduli_poly::interior_grid(mu, count)
                .into_iter()
                .map(|z| (z, (0..p.len()).map(|s| p.eval(s, z)).collect()))
                .collect(),
            Moduli::Numerical { run, .. } => {
                run.z.iter().zip(&run.h).filter(|(z, _)| **z > 0.0).map(|(z, h)| (*z, h.clone())).collect()
            }
        }
    }
}

/// Which block of the metric a row of the exponent table multiplies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    Radial,
    Sphere,
    Time,
    /// Internal factor `i >= 3` (1-based).
    Internal(usize),
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Block::Radial => f.write_str("radial"),
            Block::Sphere => f.write_str("sphere"),
            Block::Time => f.write_str("time"),
            Block::Internal(i) => write!(f, "g{i}"),
        }
    }
}

impl Block {
    /// 1-based factor-space index of the block.
    pub fn factor(self) -> usize {
        match self {
            Block::Radial | Block::Sphere => 1,
            Block::Time => 2,
            Block::Internal(i) => i,
        }
    }
}

/// Powers of `H_s` in the metric. The power of `H_s` on `block` is
/// `coeffs[row][s] * h_s`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExponentTable {
    pub blocks: Vec<Block>,
    pub coeffs: Vec<Vec<Rational>>,
    pub h: Vec<f64>,
    /// `2 d(I_s) / (D - 2)`, the overall conformal coefficient.
    pub conformal: Vec<Rational>,
}

impl ExponentTable {
    pub fn build(config: &BraneConfig, h: &[f64]) -> Self {
        let dm2 = i64::from(config.total_dimension()) - 2;
        let conformal: Vec<Rational> = config
            .branes
            .iter()
            .map(|b| ratio(2 * i64::from(config.index_dim(&b.index_set)), dm2))
            .collect();
        let mut blocks = vec![Block::Radial, Block::Sphere, Block::Time];
        blocks.extend((3..=config.n()).map(Block::Internal));
        let coeffs = blocks
            .iter()
            .map(|blk| {
                config
                    .branes
                    .iter()
                    .zip(&conformal)
                    .map(|(b, c)| c - rat(2 * i64::from(b.contains(blk.factor()))))
                    .collect()
            })
            .collect();
        ExponentTable { blocks, coeffs, h: h.to_vec(), conformal }
    }

    pub fn exponent(&self, row: usize, s: usize) -> f64 {
        to_f64(&self.coeffs[row][s]) * self.h[s]
    }

    /// `prod_s H_s^{exponent(row, s)}`.
    pub fn factor(&self, row: usize, hs: &[f64]) -> f64 {
        hs.iter().enumerate().map(|(s, h)| h.powf(self.exponent(row, s))).product()
    }

    pub fn is_vacuum(&self) -> bool {
        self.coeffs.iter().flatten().all(Zero::is_zero)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FormAmplitude {
    pub brane: usize,
    pub kind: BraneType,
    pub charge: f64,
    /// Powers `-A_{ss'}` of `H_{s'}` for electric branes; empty for magnetic.
    pub powers: Vec<f64>,
}

impl FormAmplitude {
    /// Electric: `-Q_s R^{-d_1} prod H^{-A_ss'}`; magnetic: `Q_s`.
    pub fn value(&self, r: f64, d1: u32, hs: &[f64]) -> f64 {
        match self.kind {
            BraneType::Magnetic => self.charge,
            BraneType::Electric => {
                -self.charge / r.powi(d1 as i32)
                    * hs.iter().zip(&self.powers).map(|(h, p)| h.powf(*p)).product::<f64>()
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct BlackHoleSolution {
    pub config: BraneConfig,
    pub coupling: CouplingData,
    pub mu: f64,
    pub moduli: Moduli,
    pub exponent_table: ExponentTable,
    /// `scalar_exponents[alpha][s] = h_s chi_s lambda^alpha_{a_s}`.
    pub scalar_exponents: Vec<Vec<f64>>,
    pub form_amplitudes: Vec<FormAmplitude>,
    pub h0: Vec<f64>,
    pub t_hawking: f64,
}

/// One row of metric coefficient samples.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricSample {
    pub z: f64,
    pub r: f64,
    /// Coefficient of `dR^2`.
    pub radial: f64,
    /// Coefficient of `dOmega^2`.
    pub sphere: f64,
    /// Coefficient of `dt^2` (negative).
    pub time: f64,
    /// Coefficients of `g^i`, `i = 3..n`.
    pub internal: Vec<f64>,
}

impl MetricSample {
    pub fn values(&self) -> Vec<f64> {
        let mut v = vec![self.z, self.r, self.radial, self.sphere, self.time];
        v.extend_from_slice(&self.internal);
        v
    }
}

pub fn assemble_solution(
    config: &BraneConfig,
    coupling: &CouplingData,
    moduli: Moduli,
    mu: f64,
) -> Result<BlackHoleSolution, ReportError> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(ReportError::BadMu(mu));
    }
    let report = check_restrictions(config);
    if report.blocks_black_hole() {
        return Err(ReportError::CommonTime(report.to_string()));
    }
    let ns = config.branes.len();
    if moduli.len() != ns {
        return Err(ReportError::Shape { expected: ns, got: moduli.len() });
    }
    moduli.check_positive()?;
    let h0 = moduli.horizon_values();
    let t_hawking = hawking_temperature(config.dims[0], mu, &h0, &coupling.h)?;
    let exponent_table = ExponentTable::build(config, &coupling.h);
    let scalar_exponents = (0..config.l())
        .map(|alpha| {
            (0..ns)
                .map(|s| coupling.h[s] * f64::from(config.branes[s].chi()) * config.lambda_up(s)[alpha])
                .collect()
        })
        .collect();
    let form_amplitudes = config
        .branes
        .iter()
        .enumerate()
        .map(|(s, b)| FormAmplitude {
            brane: s,
            kind: b.kind,
            charge: b.charge,
            powers: match b.kind {
                BraneType::Electric => (0..ns).map(|t| -coupling.a_float[(s, t)]).collect(),
                BraneType::Magnetic => Vec::new(),
            },
        })
        .collect();
    Ok(BlackHoleSolution {
        config: config.clone(),
        coupling: coupling.clone(),
        mu,
        moduli,
        exponent_table,
        scalar_exponents,
        form_amplitudes,
        h0,
        t_hawking,
    })
}

/// `T_H = dbar / (4 pi (2 mu)^{1/dbar}) prod_s H_{s0}^{-h_s}`, `dbar = d_1 - 1`.
pub fn hawking_temperature(d1: u32, mu: f64, h0: &[f64], h: &[f64]) -> Result<f64, ReportError> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(ReportError::BadMu(mu));
    }
    if h0.len() != h.len() {
        return Err(ReportError::Shape { expected: h.len(), got: h0.len() });
    }
    let dbar = f64::from(d1) - 1.0;
    let mut t = dbar / (4.0 * std::f64::consts::PI * (2.0 * mu).powf(1.0 / dbar));
    for (s, (&v, &hs)) in h0.iter().zip(h).enumerate() {
        if !(v > 0.0 && v.is_finite()) {
            return Err(ReportError::HorizonValue { brane: s, value: v });
        }
        t *= v.powf(-hs);
    }
    Ok(t)
}

impl BlackHoleSolution {
    pub fn dbar(&self) -> f64 {
        f64::from(self.config.dbar())
    }

    /// Metric coefficients at one point.
    pub fn metric_at(&self, z: f64, hs: &[f64]) -> MetricSample {
        let t = &self.exponent_table;
        let r = z.powf(-1.0 / self.dbar());
        let f = 1.0 - 2.0 * self.mu * z;
        let conformal: f64 = hs
            .iter()
            .enumerate()
            .map(|(s, h)| h.powf(to_f64(&t.conformal[s]) * t.h[s]))
            .product();
        let rel = |row: usize| t.factor(row, hs) / conformal;
        MetricSample {
            z,
            r,
            radial: t.factor(0, hs) / f,
            sphere: t.factor(1, hs) * r * r,
            time: -conformal * rel(2) * f,
            internal: (3..t.blocks.len()).map(|row| t.factor(row, hs)).collect(),
        }
    }

    /// Metric coefficients on `count` interior points (or the run grid).
    pub fn metric_samples(&self, count: usize) -> Vec<MetricSample> {
        self.moduli.samples(self.mu, count).into_iter().map(|(z, hs)| self.metric_at(z, &hs)).collect()
    }

    pub fn metric_header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["z", "R", "radial", "sphere", "time"].iter().map(|s| s.to_string()).collect();
        h.extend((3..=self.config.n()).map(|i| format!("g{i}")));
        h
    }

    pub fn metric_csv(&self, count: usize) -> String {
        let rows: Vec<Vec<f64>> = self.metric_samples(count).iter().map(MetricSample::values).collect();
        format_csv(&self.metric_header(), &rows)
    }

    /// `exp(phi^alpha) = prod_s H_s^{h_s chi_s lambda^alpha}`.
    pub fn scalar_fields(&self, hs: &[f64]) -> Vec<f64> {
        self.scalar_exponents
            .iter()
            .map(|row| hs.iter().zip(row).map(|(h, e)| h.powf(*e)).product())
            .collect()
    }
}

impl fmt::Display for BlackHoleSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mu = {}", self.mu)?;
        writeln!(f, "T_H = {:.16e}", self.t_hawking)?;
        for (s, v) in self.h0.iter().enumerate() {
            writeln!(f, "H_{}0 = {:.16e}", s + 1, v)?;
        }
        let t = &self.exponent_table;
        write!(f, "exponents (coefficient x h_s):")?;
        for (row, blk) in t.blocks.iter().enumerate() {
            write!(f, "\n  {blk:<7}")?;
            for (s, c) in t.coeffs[row].iter().enumerate() {
                write!(f, " H_{}: {c} (= {})", s + 1, t.exponent(row, s))?;
            }
        }
        for (alpha, row) in self.scalar_exponents.iter().enumerate() {
            write!(f, "\n  phi^{}   ", alpha + 1)?;
            for (s, e) in row.iter().enumerate() {
                write!(f, " H_{}: {e}", s + 1)?;
            }
        }
        Ok(())
    }
}

/// CSV with a header row; every value printed with 17 significant digits.
pub fn format_csv(header: &[String], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    /// Not excluded by the energy bound.
    ExistsCandidate,
    Excluded,
    /// Bound and charge sum agree to rounding.
    Boundary,
    /// `(h_s A_ss')` is not positive definite.
    Withheld(String),
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::ExistsCandidate => f.write_str("exists-candidate"),
            Verdict::Excluded => f.write_str("excluded"),
            Verdict::Boundary => f.write_str("boundary"),
            Verdict::Withheld(why) => write!(f, "withheld ({why})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExistenceReport {
    /// `E_TL = mubar^2 sum h_s A^{ss'}`.
    pub e_tl: f64,
    pub bound: f64,
    /// `sum (1/2) eps_s Q_s^2`.
    pub charge_sum: f64,
    pub verdict: Verdict,
}

impl fmt::Display for ExistenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "E_TL = mubar^2 sum h A^-1 = {:.16e}; sum eps Q^2 / 2 = {:.16e}; verdict: {}",
            self.e_tl, self.charge_sum, self.verdict
        )
    }
}

/// Energy bound: no solution exists when
/// `0 < mubar^2 sum h_s A^{ss'} < sum eps_s Q_s^2 / 2`.
pub fn existence_check(coupling: &CouplingData, mu_bar: f64, branes: &[Brane]) -> Result<ExistenceReport, ReportError> {
    if branes.len() != coupling.len() {
        return Err(ReportError::Shape { expected: coupling.len(), got: branes.len() });
    }
    let inv = inverse_cartan(&coupling.a).map_err(SigmaError::from)?;
    let sum: f64 = inv.iter().enumerate().map(|(s, row)| coupling.h[s] * row.iter().map(to_f64).sum::<f64>()).sum();
    let e_tl = mu_bar * mu_bar * sum;
    let charge_sum: f64 = branes.iter().map(|b| 0.5 * f64::from(b.epsilon) * b.charge * b.charge).sum();
    let verdict = if !is_positive_definite(&coupling.ha_matrix()) {
        Verdict::Withheld("(h_s A_ss') is not positive definite".into())
    } else if (e_tl - charge_sum).abs() <= 1e-12 * e_tl.abs().max(charge_sum.abs()).max(1e-300) {
        Verdict::Boundary
    } else if e_tl > 0.0 && e_tl < charge_sum {
        Verdict::Excluded
    } else {
        Verdict::ExistsCandidate
    };
    Ok(ExistenceReport { e_tl, bound: e_tl, charge_sum, verdict })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    M2M5Dyon,
    KkDyon,
}

impl FromStr for Preset {
    type Err = ReportError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "m2m5_dyon" => Ok(Preset::M2M5Dyon),
            "kk_dyon" => Ok(Preset::KkDyon),
            other => Err(ReportError::UnknownPreset(other.to_string())),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::M2M5Dyon => "m2m5_dyon",
            Preset::KkDyon => "kk_dyon",
        })
    }
}

/// Dilaton coupling of the Kaluza-Klein model.
pub fn kk_lambda() -> f64 {
    -(1.5f64).sqrt()
}

#[derive(Clone, Debug)]
pub struct PresetData {
    pub config: BraneConfig,
    pub coupling: CouplingData,
    pub expected_b: [[f64; 2]; 2],
    pub expected_a: QuasiCartan,
}

/// Dyon configurations with charges `q1` (electric) and `q2` (magnetic);
/// both pin `epsilon_s = -1`.
pub fn preset(which: Preset, q1: f64, q2: f64) -> Result<PresetData, ReportError> {
    let brane = |kind, set: &[usize], lambda: Vec<f64>, charge, color: &str| Brane {
        color: color.into(),
        kind,
        index_set: set.to_vec(),
        lambda,
        epsilon: -1,
        charge,
    };
    let config = match which {
        Preset::M2M5Dyon => BraneConfig::new(
            vec![2, 1, 2, 5],
            vec![],
            vec![
                brane(BraneType::Electric, &[2, 3], vec![], q1, "F4"),
                brane(BraneType::Magnetic, &[2, 4], vec![], q2, "F4"),
            ],
        )?,
        Preset::KkDyon => BraneConfig::new(
            vec![2, 1],
            vec![vec![1.0]],
            vec![
                brane(BraneType::Electric, &[2], vec![kk_lambda()], q1, "F2"),
                brane(BraneType::Magnetic, &[2], vec![kk_lambda()], q2, "F2"),
            ],
        )?,
    };
    let coupling = scalar_products(&config)?;
    let expected_a = QuasiCartan::from_integers(&[&[2, -1], &[-1, 2]]).map_err(SigmaError::from)?;
    Ok(PresetData { config, coupling, expected_b: [[2.0, -1.0], [-1.0, 2.0]], expected_a })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LiftKind {
    Dyon,
    /// Magnetic charge negligible (`|Q_2| < 1e-6 |Q_1|`).
    ElectricOnly,
    /// Electric charge negligible.
    Monopole,
}

impl fmt::Display for LiftKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LiftKind::Dyon => "dyon",
            LiftKind::ElectricOnly => "electric-only",
            LiftKind::Monopole => "monopole",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KkLiftSample {
    pub z: f64,
    /// `H_2`, multiplying the four-dimensional block.
    pub four_block: f64,
    /// `H_1 / H_2`, multiplying `(dy + A)^2`.
    pub fifth_block: f64,
    /// `exp(2 varphi / sqrt 6)`.
    pub phi: f64,
}

#[derive(Clone, Debug)]
pub struct KkLift {
    pub kind: LiftKind,
    pub samples: Vec<KkLiftSample>,
}

fn is_kk(config: &BraneConfig) -> bool {
    let lam = kk_lambda();
    config.dims == [2, 1]
        && config.h_metric == [vec![1.0]]
        && config.branes.len() == 2
        && config.branes[0].kind == BraneType::Electric
        && config.branes[1].kind == BraneType::Magnetic
        && config.branes.iter().all(|b| b.index_set == [2] && (b.lambda[0] - lam).abs() < 1e-12)
}

/// Five-dimensional metric coefficients of the Kaluza-Klein dyon.
pub fn kk_lift(sol: &BlackHoleSolution, count: usize) -> Result<KkLift, ReportError> {
    if !is_kk(&sol.config) {
        return Err(ReportError::NotKkPreset);
    }
    let (q1, q2) = (sol.config.branes[0].charge.abs(), sol.config.branes[1].charge.abs());
    let kind = if q2 < 1e-6 * q1 {
        LiftKind::ElectricOnly
    } else if q1 < 1e-6 * q2 {
        LiftKind::Monopole
    } else {
        LiftKind::Dyon
    };
    let sqrt6 = 6f64.sqrt();
    let samples = sol
        .moduli
        .samples(sol.mu, count)
        .into_iter()
        .map(|(z, hs)| {
            let varphi = sol.scalar_fields(&hs)[0].ln();
            KkLiftSample { z, four_block: hs[1], fifth_block: hs[0] / hs[1], phi: (2.0 * varphi / sqrt6).exp() }
        })
        .collect();
    Ok(KkLift { kind, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moduli_poly::{solve_poly, ModuliProblem};

    #[test]
    fn dyon_exponents() {
        let p = preset(Preset::M2M5Dyon, 1.0, 1.0).unwrap();
        let t = ExponentTable::build(&p.config, &p.coupling.h);
        assert_eq!(t.conformal, vec![ratio(2, 3), ratio(4, 3)]);
        // overall H_1^{1/3} H_2^{2/3}
        assert!((t.exponent(1, 0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((t.exponent(1, 1) - 2.0 / 3.0).abs() < 1e-15);
        // M_3 carries H_1^{-1} relative to the conformal factor
        assert_eq!(t.coeffs[3][0], ratio(2, 3) - rat(2));
        assert_eq!(t.coeffs[3][1], ratio(4, 3));

        let kk = preset(Preset::KkDyon, 1.0, 1.0).unwrap();
        let t = ExponentTable::build(&kk.config, &kk.coupling.h);
        assert!((t.exponent(1, 0) - 0.5).abs() < 1e-15);
        assert!((t.exponent(1, 1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn vacuum_temperature() {
        let c = BraneConfig::new(vec![2, 1], vec![], vec![]).unwrap();
        let t = ExponentTable::build(&c, &[]);
        assert!(t.is_vacuum());
        assert_eq!(hawking_temperature(2, 0.5, &[], &[]).unwrap(), 1.0 / (4.0 * std::f64::consts::PI));
        let p = 0.3;
        let t = hawking_temperature(2, 0.5, &[1.0 + p], &[0.5]).unwrap();
        assert!((t - (1.0 + p).powf(-0.5) / (4.0 * std::f64::consts::PI)).abs() < 1e-16);
        assert!(hawking_temperature(2, 0.5, &[0.0], &[0.5]).is_err());
    }

    #[test]
    fn existence_examples() {
        let p = preset(Preset::M2M5Dyon, 1.0, 1.0).unwrap();
        let r = existence_check(&p.coupling, 1.0, &p.config.branes).unwrap();
        assert!((r.e_tl - 1.0).abs() < 1e-14);
        assert_eq!(r.verdict, Verdict::ExistsCandidate);
        let mut branes = p.config.branes.clone();
        for b in &mut branes {
            b.epsilon = 1;
            b.charge = 3.0;
        }
        assert_eq!(existence_check(&p.coupling, 1.0, &branes).unwrap().verdict, Verdict::Excluded);
    }

    #[test]
    fn kk_lift_ratios() {
        let p = preset(Preset::KkDyon, 1.0, 1.0).unwrap();
        let prob = ModuliProblem::from_config(&p.config, &p.coupling, 1.0).unwrap();
        let sol = solve_poly(&prob).unwrap();
        let bh = assemble_solution(&p.config, &p.coupling, Moduli::Polynomial(sol.poly), 1.0).unwrap();
        let lift = kk_lift(&bh, 50).unwrap();
        assert_eq!(lift.kind, LiftKind::Dyon);
        for s in &lift.samples {
            assert!((s.fifth_block - 1.0).abs() < 1e-12);
            assert!((s.phi - 1.0).abs() < 1e-12);
        }
        let m2 = preset(Preset::M2M5Dyon, 1.0, 1.0).unwrap();
        let prob = ModuliProblem::from_config(&m2.config, &m2.coupling, 1.0).unwrap();
        let sol = solve_poly(&prob).unwrap();
        let bh = assemble_solution(&m2.config, &m2.coupling, Moduli::Polynomial(sol.poly), 1.0).unwrap();
        assert_eq!(kk_lift(&bh, 5).unwrap_err(), ReportError::NotKkPreset);
    }

    #[test]
    fn csv_format() {
        let s = format_csv(&["a".into(), "b".into()], &[vec![0.1, 1.0 / 3.0]]);
        assert_eq!(s, "a,b\n1.0000000000000001e-1,3.3333333333333331e-1\n");
        let back: f64 = "3.3333333333333331e-1".parse().unwrap();
        assert_eq!(back, 1.0 / 3.0);
    }
}
