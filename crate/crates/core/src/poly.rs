//! Dense univariate polynomials with `f64` coefficients in ascending order.

use std::ops::{Add, Mul, Sub};

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn zero() -> Self {
        Poly(vec![])
    }

    pub fn one() -> Self {
        Poly(vec![1.0])
    }

    pub fn monomial(k: usize, c: f64) -> Self {
        let mut v = vec![0.0; k + 1];
        v[k] = c;
        Poly(v)
    }

    pub fn coeff(&self, k: usize) -> f64 {
        self.0.get(k).copied().unwrap_or(0.0)
    }

    /// Number of stored coefficients (degree + 1, ignoring trailing zeros).
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Poly {
        Poly(self.0.iter().enumerate().skip(1).map(|(k, &c)| k as f64 * c).collect())
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly(self.0.iter().map(|c| c * s).collect())
    }

    pub fn powi(&self, e: u32) -> Poly {
        let mut out = Poly::one();
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                out = &out * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        out
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let n = self.len().max(rhs.len());
        Poly((0..n).map(|k| self.coeff(k) + rhs.coeff(k)).collect())
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        let n = self.len().max(rhs.len());
        Poly((0..n).map(|k| self.coeff(k) - rhs.coeff(k)).collect())
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        if self.is_empty() || rhs.is_empty() {
            return Poly::zero();
        }
        let mut out = vec![0.0; self.len() + rhs.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            for (j, b) in rhs.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic() {
        let p = Poly(vec![1.0, 2.0]);
        let q = Poly(vec![0.0, 1.0, 3.0]);
        assert_eq!((&p * &q).0, vec![0.0, 1.0, 5.0, 6.0]);
        assert_eq!((&p + &q).0, vec![1.0, 3.0, 3.0]);
        assert_eq!((&q - &p).0, vec![-1.0, -1.0, 3.0]);
        assert_eq!(p.powi(3).0, vec![1.0, 6.0, 12.0, 8.0]);
        assert_eq!(q.derivative().0, vec![1.0, 6.0]);
        assert_eq!(q.eval(2.0), 14.0);
        assert_eq!(p.powi(0).0, vec![1.0]);
    }
}
