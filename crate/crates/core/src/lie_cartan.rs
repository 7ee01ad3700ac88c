//! Cartan and quasi-Cartan matrices.
//!
//! Everything in this module is exact: entries are [`BigRational`], inverses
//! are computed by Gauss-Jordan elimination over the rationals and the
//! polynomial degrees `n_s = 2 * sum_t A^{st}` are certified integers rather
//! than floats that happen to be close to integers.
//!
//! Index conventions follow the matrices as they are usually written for the
//! moduli problem: `A_m` is the tridiagonal chain, and for `C_{m+1}` index 0 is
//! the row carrying the `-2` entry (`A_01 = -2`, `A_10 = -1`).

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

pub type Rational = BigRational;
pub type RationalMatrix = Vec<Vec<Rational>>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CartanError {
    #[error("no catalog entry for {family}{rank}")]
    CatalogMiss { family: String, rank: usize },
    #[error("cannot parse algebra label {0:?} (expected e.g. A3, C2)")]
    BadLabel(String),
    #[error("matrix is not square: row {row} has {len} entries, expected {expected}")]
    NotSquare { row: usize, len: usize, expected: usize },
    #[error("diagonal entry {index} equals {value}, expected 2")]
    Diagonal { index: usize, value: String },
    #[error("matrix is degenerate; null direction ({})", fmt_vector(.direction))]
    Singular { direction: Vec<Rational> },
}

fn fmt_vector(v: &[Rational]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

pub fn rat(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn to_f64(x: &Rational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Best rational approximation of `x` with the smallest denominator whose
/// error is at most `tol`, found by walking the continued-fraction convergents.
pub fn rationalize(x: f64, tol: f64) -> Rational {
    if !x.is_finite() {
        return Rational::zero();
    }
    let (mut h0, mut h1) = (0i128, 1i128);
    let (mut k0, mut k1) = (1i128, 0i128);
    let mut rest = x;
    for _ in 0..64 {
        let a = rest.floor();
        if a.abs() > 1e15 {
            break;
        }
        let a_i = a as i128;
        let h2 = a_i * h1 + h0;
        let k2 = a_i * k1 + k0;
        if k2.abs() > 1_000_000_000_000 {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if (h1 as f64 / k1 as f64 - x).abs() <= tol {
            break;
        }
        let frac = rest - a;
        if frac.abs() < 1e-300 {
            break;
        }
        rest = 1.0 / frac;
    }
    if k1 == 0 {
        return Rational::zero();
    }
    Rational::new(BigInt::from(h1), BigInt::from(k1))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    A,
    B,
    C,
    D,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Family::A => "A",
            Family::B => "B",
            Family::C => "C",
            Family::D => "D",
        };
        f.write_str(c)
    }
}

/// Label attached to a quasi-Cartan matrix that matches a known algebra.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AlgebraTag {
    Simple { family: Family, rank: usize },
    /// Block-diagonal (up to ordering) sum of catalog matrices, in order of
    /// the smallest index of each block.
    DirectSum(Vec<AlgebraTag>),
    Custom(String),
}

impl AlgebraTag {
    pub fn simple(family: Family, rank: usize) -> Self {
        AlgebraTag::Simple { family, rank }
    }

    /// Whether the polynomial structure of the moduli functions is a proven
    /// statement for this algebra (A_m, C_{m+1} and direct sums of them).
    pub fn conjecture_guaranteed(&self) -> bool {
        match self {
            AlgebraTag::Simple { family: Family::A, .. } => true,
            AlgebraTag::Simple { family: Family::C, .. } => true,
            AlgebraTag::Simple { .. } => false,
            AlgebraTag::DirectSum(parts) => parts.iter().all(AlgebraTag::conjecture_guaranteed),
            AlgebraTag::Custom(_) => false,
        }
    }
}

impl fmt::Display for AlgebraTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlgebraTag::Simple { family, rank } => write!(f, "{family}{rank}"),
            AlgebraTag::DirectSum(parts) => {
                let s: Vec<String> = parts.iter().map(|p| p.to_string()).collect();
                f.write_str(&s.join("+"))
            }
            AlgebraTag::Custom(name) => f.write_str(name),
        }
    }
}

impl FromStr for AlgebraTag {
    type Err = CartanError;

    /// Parses labels like `A3`, `C2`, `A1+A1`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(['+', '⊕']).map(str::trim).collect();
        let mut tags = Vec::with_capacity(parts.len());
        for p in &parts {
            let mut chars = p.chars();
            let family = match chars.next().map(|c| c.to_ascii_uppercase()) {
                Some('A') => Family::A,
                Some('B') => Family::B,
                Some('C') => Family::C,
                Some('D') => Family::D,
                _ => return Err(CartanError::BadLabel(s.to_string())),
            };
            let rank: usize = chars
                .as_str()
                .trim_start_matches('_')
                .parse()
                .map_err(|_| CartanError::BadLabel(s.to_string()))?;
            tags.push(AlgebraTag::simple(family, rank));
        }
        if tags.len() == 1 {
            Ok(tags.pop().unwrap())
        } else {
            Ok(AlgebraTag::DirectSum(tags))
        }
    }
}

/// An `|S| x |S|` matrix with all diagonal entries equal to 2 and nonzero
/// determinant.
#[derive(Clone, Debug, PartialEq)]
pub struct QuasiCartan {
    entries: RationalMatrix,
    tag: Option<AlgebraTag>,
}

impl QuasiCartan {
    /// Validates the matrix and attaches the catalog tag when one matches
    /// exactly.
    pub fn new(entries: RationalMatrix) -> Result<Self, CartanError> {
        check_square(&entries)?;
        for (i, row) in entries.iter().enumerate() {
            if row[i] != rat(2) {
                return Err(CartanError::Diagonal { index: i, value: row[i].to_string() });
            }
        }
        if let Some(direction) = null_vector(&entries) {
            return Err(CartanError::Singular { direction });
        }
        let tag = Catalog::default().classify(&entries);
        Ok(QuasiCartan { entries, tag })
    }

    pub fn from_integers(rows: &[&[i64]]) -> Result<Self, CartanError> {
        Self::new(rows.iter().map(|r| r.iter().map(|&x| rat(x)).collect()).collect())
    }

    /// Rationalizes each entry (tolerance `1e-10`) before validation.
    pub fn from_f64(m: &DMatrix<f64>) -> Result<Self, CartanError> {
        let entries = (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| rationalize(m[(i, j)], 1e-10)).collect())
            .collect();
        Self::new(entries)
    }

    pub fn size(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &RationalMatrix {
        &self.entries
    }

    pub fn entry(&self, s: usize, t: usize) -> &Rational {
        &self.entries[s][t]
    }

    pub fn tag(&self) -> Option<&AlgebraTag> {
        self.tag.as_ref()
    }

    pub fn with_tag(mut self, tag: AlgebraTag) -> Self {
        self.tag = Some(tag);
        self
    }

    pub fn conjecture_guaranteed(&self) -> bool {
        self.tag.as_ref().is_some_and(AlgebraTag::conjecture_guaranteed)
    }

    /// Entries as integers, if they all are.
    pub fn integer_entries(&self) -> Option<Vec<Vec<i64>>> {
        self.entries
            .iter()
            .map(|row| {
                row.iter()
                    .map(|x| if x.is_integer() { x.to_integer().to_i64() } else { None })
                    .collect()
            })
            .collect()
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        let n = self.size();
        DMatrix::from_fn(n, n, |i, j| to_f64(&self.entries[i][j]))
    }
}

impl fmt::Display for QuasiCartan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in &self.entries {
            let cells: Vec<String> = row.iter().map(|x| format!("{x:>5}")).collect();
            writeln!(f, "[{}]", cells.join(" "))?;
        }
        Ok(())
    }
}

fn check_square(m: &RationalMatrix) -> Result<(), CartanError> {
    let n = m.len();
    for (row, r) in m.iter().enumerate() {
        if r.len() != n {
            return Err(CartanError::NotSquare { row, len: r.len(), expected: n });
        }
    }
    Ok(())
}

/// Catalog matrix for `family` and `rank`.
pub fn cartan_matrix(family: Family, rank: usize) -> Result<QuasiCartan, CartanError> {
    let entries = catalog_entries(family, rank)?;
    Ok(QuasiCartan { entries, tag: Some(AlgebraTag::simple(family, rank)) })
}

/// Catalog lookup by label such as `"A3"` or `"A1+A2"`.
pub fn cartan_matrix_for(tag: &AlgebraTag) -> Result<QuasiCartan, CartanError> {
    match tag {
        AlgebraTag::Simple { family, rank } => cartan_matrix(*family, *rank),
        AlgebraTag::DirectSum(parts) => {
            let blocks = parts
                .iter()
                .map(|p| cartan_matrix_for(p).map(|q| q.entries))
                .collect::<Result<Vec<_>, _>>()?;
            let n: usize = blocks.iter().map(Vec::len).sum();
            let mut entries = vec![vec![Rational::zero(); n]; n];
            let mut offset = 0;
            for b in &blocks {
                for (i, row) in b.iter().enumerate() {
                    for (j, x) in row.iter().enumerate() {
                        entries[offset + i][offset + j] = x.clone();
                    }
                }
                offset += b.len();
            }
            Ok(QuasiCartan { entries, tag: Some(tag.clone()) })
        }
        AlgebraTag::Custom(name) => Err(CartanError::CatalogMiss { family: name.clone(), rank: 0 }),
    }
}

fn catalog_entries(family: Family, rank: usize) -> Result<RationalMatrix, CartanError> {
    let min_rank = match family {
        Family::A => 1,
        Family::B | Family::C => 2,
        Family::D => 4,
    };
    if rank < min_rank {
        return Err(CartanError::CatalogMiss { family: family.to_string(), rank });
    }
    let mut m = vec![vec![rat(0); rank]; rank];
    for i in 0..rank {
        m[i][i] = rat(2);
        if i + 1 < rank {
            m[i][i + 1] = rat(-1);
            m[i + 1][i] = rat(-1);
        }
    }
    match family {
        Family::A => {}
        // index 0 is the long root
        Family::C => m[0][1] = rat(-2),
        // index 0 is the short root
        Family::B => m[1][0] = rat(-2),
        Family::D => {
            // fork at node rank-3: it links to both rank-2 and rank-1
            let (f, a, b) = (rank - 3, rank - 2, rank - 1);
            m[a][b] = rat(0);
            m[b][a] = rat(0);
            m[f][b] = rat(-1);
            m[b][f] = rat(-1);
        }
    }
    Ok(m)
}

/// Catalog of simple blocks used to classify validated matrices. Besides the
/// classical families it can hold user-registered custom entries, which never
/// carry a polynomial-structure guarantee.
#[derive(Clone, Debug, Default)]
pub struct Catalog {
    custom: Vec<(String, RationalMatrix)>,
}

impl Catalog {
    pub fn register(&mut self, name: impl Into<String>, entries: RationalMatrix) {
        self.custom.push((name.into(), entries));
    }

    fn match_block(&self, block: &RationalMatrix) -> Option<AlgebraTag> {
        let rank = block.len();
        for family in [Family::A, Family::C, Family::B, Family::D] {
            if let Ok(m) = catalog_entries(family, rank) {
                if &m == block {
                    return Some(AlgebraTag::simple(family, rank));
                }
            }
        }
        self.custom
            .iter()
            .find(|(_, m)| m == block)
            .map(|(name, _)| AlgebraTag::Custom(name.clone()))
    }

    /// Exact-equality classification. The matrix is split into connected
    /// components of its off-diagonal pattern; every component must match a
    /// catalog block literally (in its own index order).
    pub fn classify(&self, m: &RationalMatrix) -> Option<AlgebraTag> {
        if m.is_empty() {
            return None;
        }
        let mut parts = Vec::new();
        for comp in components(m) {
            let block: RationalMatrix = comp
                .iter()
                .map(|&i| comp.iter().map(|&j| m[i][j].clone()).collect())
                .collect();
            parts.push(self.match_block(&block)?);
        }
        if parts.len() == 1 {
            parts.pop()
        } else {
            Some(AlgebraTag::DirectSum(parts))
        }
    }
}

/// Connected components of the graph with an edge whenever `m[i][j]` or
/// `m[j][i]` is nonzero; each component is sorted, components ordered by their
/// smallest index.
pub fn components(m: &RationalMatrix) -> Vec<Vec<usize>> {
    let n = m.len();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut stack = vec![start];
        let mut comp = Vec::new();
        seen[start] = true;
        while let Some(i) = stack.pop() {
            comp.push(i);
            for j in 0..n {
                if !seen[j] && (!m[i][j].is_zero() || !m[j][i].is_zero()) {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

pub fn determinant(m: &RationalMatrix) -> Rational {
    let n = m.len();
    let mut a = m.clone();
    let mut det = Rational::one();
    for col in 0..n {
        let Some(p) = (col..n).find(|&r| !a[r][col].is_zero()) else {
            return Rational::zero();
        };
        if p != col {
            a.swap(p, col);
            det = -det;
        }
        let pivot = a[col][col].clone();
        det *= &pivot;
        for r in col + 1..n {
            if a[r][col].is_zero() {
                continue;
            }
            let factor = &a[r][col] / &pivot;
            for c in col..n {
                let delta = &factor * &a[col][c];
                a[r][c] -= delta;
            }
        }
    }
    det
}

/// A nonzero vector `x` with `m x = 0`, or `None` when `m` is nonsingular.
/// The vector is scaled to have integer entries with positive leading entry.
pub fn null_vector(m: &RationalMatrix) -> Option<Vec<Rational>> {
    let n = m.len();
    let mut a = m.clone();
    let mut pivot_cols = Vec::new();
    let mut row = 0;
    for col in 0..n {
        let Some(p) = (row..n).find(|&r| !a[r][col].is_zero()) else {
            continue;
        };
        a.swap(p, row);
        let pivot = a[row][col].clone();
        for c in 0..n {
            a[row][c] = &a[row][c] / &pivot;
        }
        for r in 0..n {
            if r != row && !a[r][col].is_zero() {
                let factor = a[r][col].clone();
                for c in 0..n {
                    let delta = &factor * &a[row][c];
                    a[r][c] -= delta;
                }
            }
        }
        pivot_cols.push(col);
        row += 1;
    }
    let free = (0..n).find(|c| !pivot_cols.contains(c))?;
    let mut x = vec![Rational::zero(); n];
    x[free] = Rational::one();
    for (r, &pc) in pivot_cols.iter().enumerate() {
        x[pc] = -a[r][free].clone();
    }
    // clear denominators
    let lcm = x.iter().fold(BigInt::one(), |acc, v| num_integer::Integer::lcm(&acc, v.denom()));
    let scale = Rational::from_integer(lcm);
    let mut x: Vec<Rational> = x.into_iter().map(|v| v * &scale).collect();
    if x.iter().find(|v| !v.is_zero()).is_some_and(|v| v.is_negative()) {
        x.iter_mut().for_each(|v| *v = -v.clone());
    }
    Some(x)
}

/// Exact inverse of a nonsingular rational matrix.
pub fn invert(m: &RationalMatrix) -> Result<RationalMatrix, CartanError> {
    check_square(m)?;
    let n = m.len();
    let mut a: RationalMatrix = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { Rational::one() } else { Rational::zero() }));
            r
        })
        .collect();
    for col in 0..n {
        let Some(p) = (col..n).find(|&r| !a[r][col].is_zero()) else {
            let direction = null_vector(m).unwrap_or_default();
            return Err(CartanError::Singular { direction });
        };
        a.swap(p, col);
        let pivot = a[col][col].clone();
        for c in 0..2 * n {
            a[col][c] = &a[col][c] / &pivot;
        }
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let factor = a[r][col].clone();
                for c in 0..2 * n {
                    let delta = &factor * &a[col][c];
                    a[r][c] -= delta;
                }
            }
        }
    }
    Ok(a.into_iter().map(|row| row[n..].to_vec()).collect())
}

pub fn inverse_cartan(a: &QuasiCartan) -> Result<RationalMatrix, CartanError> {
    invert(&a.entries)
}

pub fn mat_mul(a: &RationalMatrix, b: &RationalMatrix) -> RationalMatrix {
    let n = a.len();
    let k = b.len();
    let m = b.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| {
            (0..m)
                .map(|j| (0..k).fold(Rational::zero(), |acc, t| acc + &a[i][t] * &b[t][j]))
                .collect()
        })
        .collect()
}

/// `n_s = 2 * sum_t A^{st}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DegreeVector {
    pub values: Vec<Rational>,
}

impl DegreeVector {
    /// The degrees as positive integers, if every entry is one.
    pub fn integers(&self) -> Option<Vec<usize>> {
        self.values
            .iter()
            .map(|v| {
                if v.is_integer() && v.is_positive() {
                    v.to_integer().to_usize()
                } else {
                    None
                }
            })
            .collect()
    }

    /// True when all degrees are positive integers, the precondition for the
    /// polynomial ansatz.
    pub fn conjecture_applicable(&self) -> bool {
        self.integers().is_some()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(to_f64).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl fmt::Display for DegreeVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.values.iter().map(|v| v.to_string()).collect();
        f.write_str(&s.join(" "))
    }
}

pub fn polynomial_degrees(a: &QuasiCartan) -> Result<DegreeVector, CartanError> {
    let inv = inverse_cartan(a)?;
    let values = inv
        .iter()
        .map(|row| row.iter().fold(Rational::zero(), |acc, x| acc + x) * rat(2))
        .collect();
    Ok(DegreeVector { values })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub size: usize,
    /// `(index, value)` for every diagonal entry different from 2.
    pub diagonal_violations: Vec<(usize, Rational)>,
    pub determinant: Rational,
    /// Present when the matrix is degenerate.
    pub null_direction: Option<Vec<Rational>>,
    pub catalog_match: Option<AlgebraTag>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.diagonal_violations.is_empty() && !self.determinant.is_zero()
    }

    pub fn is_degenerate(&self) -> bool {
        self.determinant.is_zero()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "size: {}", self.size)?;
        writeln!(f, "determinant: {}", self.determinant)?;
        for (i, v) in &self.diagonal_violations {
            writeln!(f, "diagonal violation: A[{i}][{i}] = {v}")?;
        }
        if let Some(dir) = &self.null_direction {
            writeln!(f, "degenerate; null direction ({})", fmt_vector(dir))?;
        }
        match &self.catalog_match {
            Some(tag) => writeln!(f, "catalog match: {tag}")?,
            None => writeln!(f, "catalog match: none")?,
        }
        write!(f, "valid: {}", self.is_valid())
    }
}

pub fn validate_quasi_cartan(m: &RationalMatrix) -> Result<ValidationReport, CartanError> {
    validate_with_catalog(m, &Catalog::default())
}

pub fn validate_with_catalog(
    m: &RationalMatrix,
    catalog: &Catalog,
) -> Result<ValidationReport, CartanError> {
    check_square(m)?;
    let diagonal_violations = m
        .iter()
        .enumerate()
        .filter(|(i, row)| row[*i] != rat(2))
        .map(|(i, row)| (i, row[i].clone()))
        .collect();
    let determinant = determinant(m);
    let null_direction = if determinant.is_zero() { null_vector(m) } else { None };
    Ok(ValidationReport {
        size: m.len(),
        diagonal_violations,
        determinant,
        null_direction,
        catalog_match: catalog.classify(m),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ints(rows: &[&[i64]]) -> RationalMatrix {
        rows.iter().map(|r| r.iter().map(|&x| rat(x)).collect()).collect()
    }

    #[test]
    fn catalog_examples() {
        assert_eq!(cartan_matrix(Family::A, 2).unwrap().entries, ints(&[&[2, -1], &[-1, 2]]));
        assert_eq!(cartan_matrix(Family::A, 1).unwrap().entries, ints(&[&[2]]));
        assert_eq!(cartan_matrix(Family::C, 2).unwrap().entries, ints(&[&[2, -2], &[-1, 2]]));
        let c3 = cartan_matrix(Family::C, 3).unwrap();
        assert_eq!(c3.entries, ints(&[&[2, -2, 0], &[-1, 2, -1], &[0, -1, 2]]));
    }

    #[test]
    fn catalog_misses() {
        assert!(matches!(cartan_matrix(Family::A, 0), Err(CartanError::CatalogMiss { .. })));
        assert!(matches!(cartan_matrix(Family::C, 1), Err(CartanError::CatalogMiss { .. })));
        assert!(matches!("E8".parse::<AlgebraTag>(), Err(CartanError::BadLabel(_))));
    }

    #[test]
    fn inverse_examples() {
        let a2 = cartan_matrix(Family::A, 2).unwrap();
        let inv = inverse_cartan(&a2).unwrap();
        assert_eq!(inv, vec![vec![ratio(2, 3), ratio(1, 3)], vec![ratio(1, 3), ratio(2, 3)]]);
        let a1 = cartan_matrix(Family::A, 1).unwrap();
        assert_eq!(inverse_cartan(&a1).unwrap(), vec![vec![ratio(1, 2)]]);
        let c2 = cartan_matrix(Family::C, 2).unwrap();
        assert_eq!(
            inverse_cartan(&c2).unwrap(),
            vec![vec![rat(1), rat(1)], vec![ratio(1, 2), rat(1)]]
        );
    }

    #[test]
    fn singular_inverse_names_null_direction() {
        let m = ints(&[&[2, -1], &[-4, 2]]);
        match invert(&m) {
            Err(CartanError::Singular { direction }) => assert_eq!(direction, vec![rat(1), rat(2)]),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn degree_examples() {
        let d = |f, r| polynomial_degrees(&cartan_matrix(f, r).unwrap()).unwrap().integers().unwrap();
        assert_eq!(d(Family::A, 3), vec![3, 4, 3]);
        assert_eq!(d(Family::A, 2), vec![2, 2]);
        assert_eq!(d(Family::C, 2), vec![4, 3]);
        assert_eq!(d(Family::B, 2), vec![3, 4]);
        // D4: 2 rho^vee = (6, 10, 6, 6) in the chain-then-fork ordering
        assert_eq!(d(Family::D, 4), vec![6, 10, 6, 6]);
    }

    #[test]
    fn validation_examples() {
        let r = validate_quasi_cartan(&ints(&[&[2, -1], &[-1, 2]])).unwrap();
        assert!(r.is_valid());
        assert_eq!(r.catalog_match.unwrap().to_string(), "A2");

        let r = validate_quasi_cartan(&ints(&[&[2, 0], &[0, 2]])).unwrap();
        assert!(r.is_valid());
        assert_eq!(r.catalog_match.unwrap().to_string(), "A1+A1");

        let r = validate_quasi_cartan(&ints(&[&[2, -1], &[-4, 2]])).unwrap();
        assert!(!r.is_valid());
        assert!(r.is_degenerate());
        assert_eq!(r.null_direction.unwrap(), vec![rat(1), rat(2)]);

        let r = validate_quasi_cartan(&ints(&[&[3, 0], &[0, 2]])).unwrap();
        assert_eq!(r.diagonal_violations, vec![(0, rat(3))]);
        assert!(!r.is_valid());
    }

    #[test]
    fn validation_rejects_ragged() {
        let m = vec![vec![rat(2), rat(0)], vec![rat(2)]];
        assert!(matches!(validate_quasi_cartan(&m), Err(CartanError::NotSquare { .. })));
    }

    #[test]
    fn custom_catalog_entries_carry_no_guarantee() {
        let mut cat = Catalog::default();
        let g2 = ints(&[&[2, -1], &[-3, 2]]);
        cat.register("G2", g2.clone());
        let tag = cat.classify(&g2).unwrap();
        assert_eq!(tag, AlgebraTag::Custom("G2".into()));
        assert!(!tag.conjecture_guaranteed());
        assert!(AlgebraTag::simple(Family::C, 3).conjecture_guaranteed());
        assert!(!AlgebraTag::simple(Family::B, 3).conjecture_guaranteed());
    }

    #[test]
    fn label_roundtrip() {
        for s in ["A3", "C2", "A1+A1", "D5"] {
            assert_eq!(s.parse::<AlgebraTag>().unwrap().to_string(), s);
        }
        let sum = cartan_matrix_for(&"A1+A2".parse().unwrap()).unwrap();
        assert_eq!(sum.entries, ints(&[&[2, 0, 0], &[0, 2, -1], &[0, -1, 2]]));
    }

    #[test]
    fn rationalize_recovers_small_fractions() {
        assert_eq!(rationalize(-1.0000000000000002, 1e-10), rat(-1));
        assert_eq!(rationalize(2.0 / 3.0, 1e-10), ratio(2, 3));
        assert_eq!(rationalize(-0.5, 1e-10), ratio(-1, 2));
        let r = rationalize(std::f64::consts::SQRT_2, 1e-10);
        assert!((to_f64(&r) - std::f64::consts::SQRT_2).abs() <= 1e-10);
    }

    #[test]
    fn quasi_cartan_rejects_bad_diagonal() {
        assert!(matches!(
            QuasiCartan::from_integers(&[&[2, 1], &[1, 1]]),
            Err(CartanError::Diagonal { index: 1, .. })
        ));
    }
}
