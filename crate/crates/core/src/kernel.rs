//! Sobolev reproducing kernels on `[0, 1]` and the ANOVA tensor-product kernel
//! on `[0, 1]^r`.
//!
//! The univariate kernel of the order-`m` Sobolev space is
//!
//! ```text
//! R(x, y) = 1 + Σ_{v=1}^{m} B_v(x) B_v(y) / (v!)^2 + (-1)^{m-1} B_{2m}(|x - y|) / (2m)!
//! ```
//!
//! and the ANOVA kernel truncates the expansion of `Π_s (1 + R̃(x_s, y_s))`
//! to products of at most `q` factors, where `R̃ = R - 1`.
//!
//! Derivatives are only ever taken in the first argument.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specialfn::{factorial, BernoulliTable, MAX_TABLE_DEGREE};

/// Largest supported smoothness; the kernel needs Bernoulli polynomials up to degree `2m`.
pub const MAX_SMOOTHNESS: usize = MAX_TABLE_DEGREE / 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelSpec {
    /// Sobolev smoothness.
    pub m: usize,
    /// Highest interaction order kept in the ANOVA expansion.
    pub q: usize,
    /// Covariate dimension.
    pub r: usize,
}

impl KernelSpec {
    pub fn new(m: usize, q: usize, r: usize) -> Result<Self> {
        let spec = Self { m, q, r };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.m > MAX_SMOOTHNESS {
            return Err(Error::Parameter(format!(
                "smoothness m = {} must lie in 1..={MAX_SMOOTHNESS}",
                self.m
            )));
        }
        if self.r == 0 {
            return Err(Error::Parameter("dimension r must be at least 1".into()));
        }
        if self.q == 0 || self.q > self.r {
            return Err(Error::Parameter(format!(
                "interaction order q = {} must lie in 1..={}",
                self.q, self.r
            )));
        }
        Ok(())
    }
}

/// Multi-index `β = (β_1, .., β_r)` of a partial derivative.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DerivativeOrder(Vec<usize>);

impl DerivativeOrder {
    pub fn new(beta: Vec<usize>) -> Self {
        Self(beta)
    }

    pub fn zero(r: usize) -> Self {
        Self(vec![0; r])
    }

    /// First-order derivative along coordinate `s`.
    pub fn unit(r: usize, s: usize) -> Self {
        let mut beta = vec![0; r];
        beta[s] = 1;
        Self(beta)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&b| b == 0)
    }

    /// Number of coordinates differentiated at least once.
    pub fn support_size(&self) -> usize {
        self.0.iter().filter(|&&b| b > 0).count()
    }

    pub fn max_order(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0)
    }

    /// `|β|`.
    pub fn total_order(&self) -> usize {
        self.0.iter().sum()
    }

    /// Checks the length against `spec.r` and every order against `spec.m - 1`.
    pub fn check(&self, spec: &KernelSpec) -> Result<()> {
        if self.0.len() != spec.r {
            return Err(Error::Shape(format!(
                "derivative order has {} entries but the covariate dimension is {}",
                self.0.len(),
                spec.r
            )));
        }
        let order = self.max_order();
        if order >= spec.m {
            return Err(Error::UnsupportedDerivativeOrder { order, m: spec.m });
        }
        Ok(())
    }
}

impl fmt::Display for DerivativeOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(usize::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for DerivativeOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Parameter(format!("bad derivative order entry {t:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}

/// A validated [`KernelSpec`] together with its cached Bernoulli table.
#[derive(Debug, Clone)]
pub struct SsAnovaKernel {
    spec: KernelSpec,
    table: BernoulliTable,
    /// `1 / (v!)^2` for `v = 0..=m`.
    inv_fact_sq: Vec<f64>,
    /// `(-1)^{m-1} / (2m - a)!` for `a = 0..m`.
    tail_scale: Vec<f64>,
}

impl SsAnovaKernel {
    pub fn new(spec: KernelSpec) -> Result<Self> {
        spec.validate()?;
        let m = spec.m;
        let table = BernoulliTable::new(2 * m)?;
        let inv_fact_sq = (0..=m).map(|v| 1.0 / factorial(v).powi(2)).collect();
        let sign = if (m - 1).is_multiple_of(2) { 1.0 } else { -1.0 };
        let tail_scale = (0..m).map(|a| sign / factorial(2 * m - a)).collect();
        Ok(Self {
            spec,
            table,
            inv_fact_sq,
            tail_scale,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn table(&self) -> &BernoulliTable {
        &self.table
    }

    /// `∂^a_x R(x, y)`.
    pub fn sobolev_r(&self, a: usize, x: f64, y: f64) -> Result<f64> {
        check_unit("x", x)?;
        check_unit("y", y)?;
        if a >= self.spec.m {
            return Err(Error::UnsupportedDerivativeOrder {
                order: a,
                m: self.spec.m,
            });
        }
        Ok(self.sobolev_r_unchecked(a, x, y))
    }

    /// `∂^a_x R̃(x, y)` where `R̃ = R - 1`.
    pub fn centered_r(&self, a: usize, x: f64, y: f64) -> Result<f64> {
        check_unit("x", x)?;
        check_unit("y", y)?;
        if a >= self.spec.m {
            return Err(Error::UnsupportedDerivativeOrder {
                order: a,
                m: self.spec.m,
            });
        }
        Ok(self.centered_r_unchecked(a, x, y))
    }

    /// `R^(q)(x, y)`.
    pub fn anova(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_point("x", x)?;
        self.check_point("y", y)?;
        Ok(self.anova_unchecked(x, y))
    }

    /// `∂^β_x R^(q)(x, y)`.
    pub fn anova_deriv(&self, beta: &DerivativeOrder, x: &[f64], y: &[f64]) -> Result<f64> {
        beta.check(&self.spec)?;
        self.check_point("x", x)?;
        self.check_point("y", y)?;
        Ok(self.anova_deriv_unchecked(beta.as_slice(), x, y))
    }

    pub fn check_point(&self, what: &str, p: &[f64]) -> Result<()> {
        if p.len() != self.spec.r {
            return Err(Error::Shape(format!(
                "{what} has {} coordinates, expected {}",
                p.len(),
                self.spec.r
            )));
        }
        p.iter().try_for_each(|&v| check_unit(what, v))
    }

    pub(crate) fn centered_r_unchecked(&self, a: usize, x: f64, y: f64) -> f64 {
        let t = &self.table;
        let mut acc = 0.0;
        for v in 1..=self.spec.m {
            // B_v^{(a)} vanishes for a > v.
            if a <= v {
                let bx = t.eval_deriv(v, a, x).unwrap_or(0.0);
                let by = t.eval(v, y).unwrap_or(0.0);
                acc += bx * by * self.inv_fact_sq[v];
            }
        }
        let d = x - y;
        let s: f64 = if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        };
        let sa = if a == 0 { 1.0 } else { s.powi(a as i32) };
        let tail = t.eval(2 * self.spec.m - a, d.abs()).unwrap_or(0.0);
        acc + sa * tail * self.tail_scale[a]
    }

    pub(crate) fn sobolev_r_unchecked(&self, a: usize, x: f64, y: f64) -> f64 {
        let c = self.centered_r_unchecked(a, x, y);
        if a == 0 {
            1.0 + c
        } else {
            c
        }
    }

    pub(crate) fn anova_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let q = self.spec.q;
        truncated_esf_sum(
            q,
            x.iter().zip(y).map(|(&xs, &ys)| self.centered_r_unchecked(0, xs, ys)),
        )
    }

    pub(crate) fn anova_deriv_unchecked(&self, beta: &[usize], x: &[f64], y: &[f64]) -> f64 {
        let support = beta.iter().filter(|&&b| b > 0).count();
        let q = self.spec.q;
        if support > q {
            return 0.0;
        }
        if support == 0 {
            return self.anova_unchecked(x, y);
        }
        let mut lead = 1.0;
        for s in 0..beta.len() {
            if beta[s] > 0 {
                lead *= self.centered_r_unchecked(beta[s], x[s], y[s]);
            }
        }
        if support == q {
            return lead;
        }
        let rest = (0..beta.len())
            .filter(|&s| beta[s] == 0)
            .map(|s| self.centered_r_unchecked(0, x[s], y[s]));
        lead * truncated_esf_sum(q - support, rest)
    }
}

/// `Σ_{k=0}^{q} e_k(t_1, .., t_r)` where `e_k` is the k-th elementary symmetric polynomial.
fn truncated_esf_sum(q: usize, factors: impl Iterator<Item = f64>) -> f64 {
    // q <= r <= a few dozen in practice; a small stack buffer would also do.
    let mut e = vec![0.0; q + 1];
    e[0] = 1.0;
    for (seen, t) in factors.enumerate() {
        let top = q.min(seen + 1);
        for k in (1..=top).rev() {
            e[k] += e[k - 1] * t;
        }
    }
    e.iter().sum()
}

fn check_unit(what: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::domain(what, v))
    }
}
