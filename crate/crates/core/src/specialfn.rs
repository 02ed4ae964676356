//! Bernoulli polynomials, the only special functions the Sobolev kernel needs.
//!
//! Coefficients are produced in exact rational arithmetic from the identity
//! `∫_x^{x+1} B_v(t) dt = x^v`, which unrolls to
//! `B_v(x) = x^v - Σ_{k<v} C(v,k) B_k(x) / (v - k + 1)`, and are then rounded
//! once to `f64`.

use num_rational::Ratio;

use crate::error::{Error, Result};

type Rational = Ratio<i128>;

/// Highest degree the exact recurrence is allowed to reach. Denominators stay
/// far from `i128` overflow up to here.
pub const MAX_TABLE_DEGREE: usize = 24;

/// Monomial coefficients of `B_0 .. B_max_degree`. Row `v` stores
/// `[c_0, c_1, .., c_v]` with `B_v(x) = Σ c_k x^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliTable {
    rows: Vec<Vec<f64>>,
}

impl BernoulliTable {
    pub fn new(max_degree: usize) -> Result<Self> {
        if max_degree > MAX_TABLE_DEGREE {
            return Err(Error::DegreeOutOfRange {
                degree: max_degree,
                max_degree: MAX_TABLE_DEGREE,
            });
        }
        let exact = exact_rows(max_degree);
        let rows = exact
            .iter()
            .map(|row| row.iter().map(rational_to_f64).collect())
            .collect();
        Ok(Self { rows })
    }

    pub fn max_degree(&self) -> usize {
        self.rows.len() - 1
    }

    /// Coefficients of `B_v`, lowest power first.
    pub fn coeffs(&self, v: usize) -> Result<&[f64]> {
        self.rows.get(v).map(Vec::as_slice).ok_or(Error::DegreeOutOfRange {
            degree: v,
            max_degree: self.max_degree(),
        })
    }

    /// `B_v(x)` by Horner's scheme. Any finite `x` is accepted.
    pub fn eval(&self, v: usize, x: f64) -> Result<f64> {
        Ok(horner(self.coeffs(v)?, x))
    }

    /// `d^k/dx^k B_v(x) = v!/(v-k)! · B_{v-k}(x)`, and zero once `k > v`.
    pub fn eval_deriv(&self, v: usize, k: usize, x: f64) -> Result<f64> {
        let row = self.coeffs(v)?;
        if k > v {
            return Ok(0.0);
        }
        if k == 0 {
            return Ok(horner(row, x));
        }
        Ok(falling_factorial(v, k) * horner(&self.rows[v - k], x))
    }
}

/// `v (v-1) .. (v-k+1)` as a float.
pub fn falling_factorial(v: usize, k: usize) -> f64 {
    (0..k).map(|i| (v - i) as f64).product()
}

pub fn factorial(v: usize) -> f64 {
    falling_factorial(v, v)
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

fn rational_to_f64(r: &Rational) -> f64 {
    // Numerators and denominators here are exactly representable up to 2^53.
    *r.numer() as f64 / *r.denom() as f64
}

fn binomial(n: usize, k: usize) -> i128 {
    let k = k.min(n - k);
    (0..k).fold(1i128, |acc, i| acc * (n - i) as i128 / (i + 1) as i128)
}

fn exact_rows(max_degree: usize) -> Vec<Vec<Rational>> {
    let mut rows: Vec<Vec<Rational>> = Vec::with_capacity(max_degree + 1);
    for v in 0..=max_degree {
        let mut row = vec![Rational::from_integer(0); v + 1];
        row[v] = Rational::from_integer(1);
        for (k, lower) in rows.iter().enumerate() {
            let weight = Rational::new(binomial(v, k), (v - k + 1) as i128);
            for (dst, &src) in row.iter_mut().zip(lower) {
                *dst -= weight * src;
            }
        }
        rows.push(row);
    }
    rows
}
