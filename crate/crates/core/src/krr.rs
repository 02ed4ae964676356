//! Kernel ridge regression in the ANOVA space.
//!
//! The fit is `f̂(x) = Φ(x)ᵀ (R + nλI)⁻¹ Y` with `Φ(x)_i = R^(q)(x, X_i)` and
//! Gram matrix `R_ij = R^(q)(X_i, X_j)`. Derivatives are plug-in:
//! `∂^β f̂(x) = (∂^β Φ(x))ᵀ c`. The multiplier-bootstrap refit replaces the
//! coefficient vector with `(WR + nλI)⁻¹ W Y`.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{DerivativeOrder, SsAnovaKernel};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightFamily {
    /// `W ~ Exp(1)`.
    #[default]
    #[serde(rename = "exp")]
    Exponential,
    /// `P(W = 0) = P(W = 2) = 1/2`.
    #[serde(rename = "two-point")]
    TwoPoint,
}

impl WeightFamily {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            WeightFamily::Exponential => Exp1.sample(rng),
            WeightFamily::TwoPoint => {
                if rng.random::<bool>() {
                    2.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl std::str::FromStr for WeightFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp" | "exponential" => Ok(Self::Exponential),
            "two-point" | "rademacher" => Ok(Self::TwoPoint),
            other => Err(Error::Parameter(format!(
                "unknown weight family {other:?} (expected exp or two-point)"
            ))),
        }
    }
}

/// Nonnegative multiplier weights for one bootstrap refit.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapWeights {
    w: Vec<f64>,
    family: Option<WeightFamily>,
}

impl BootstrapWeights {
    /// Explicit weights, e.g. for a hand-checked computation.
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if let Some(i) = w.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Parameter(format!(
                "bootstrap weight {i} is {} (must be finite and >= 0)",
                w[i]
            )));
        }
        Ok(Self { w, family: None })
    }

    pub fn draw<R: Rng + ?Sized>(family: WeightFamily, n: usize, rng: &mut R) -> Self {
        let w = (0..n).map(|_| family.sample(rng)).collect();
        Self {
            w,
            family: Some(family),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn family(&self) -> Option<WeightFamily> {
        self.family
    }
}

/// `R_ij = R^(q)(X_i, X_j)`, built from the upper triangle and mirrored.
pub fn gram_matrix(kernel: &SsAnovaKernel, data: &Dataset) -> Result<DMatrix<f64>> {
    if data.r() != kernel.spec().r {
        return Err(Error::Shape(format!(
            "dataset has {} covariates, kernel expects {}",
            data.r(),
            kernel.spec().r
        )));
    }
    let n = data.n();
    let row = |i: usize| -> Vec<f64> {
        let xi = data.point(i);
        (i..n).map(|j| kernel.anova_unchecked(xi, data.point(j))).collect()
    };
    #[cfg(feature = "parallel")]
    let upper: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(row).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let upper: Vec<Vec<f64>> = (0..n).map(row).collect();

    let mut g = DMatrix::zeros(n, n);
    for (i, vals) in upper.iter().enumerate() {
        for (off, &v) in vals.iter().enumerate() {
            let j = i + off;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

/// A fitted KRR model. Immutable; bootstrap refits share design and Gram matrix.
#[derive(Debug, Clone)]
pub struct FittedModel {
    kernel: Arc<SsAnovaKernel>,
    lambda: f64,
    x: Arc<Vec<f64>>,
    y: Arc<Vec<f64>>,
    gram: Arc<DMatrix<f64>>,
    coeffs: DVector<f64>,
    residual_norm: f64,
}

impl FittedModel {
    /// Solves `(R + nλI) c = Y` by Cholesky factorization.
    pub fn fit(kernel: &SsAnovaKernel, data: &Dataset, lambda: f64) -> Result<Self> {
        let gram = gram_matrix(kernel, data)?;
        Self::fit_with_gram(Arc::new(kernel.clone()), data, Arc::new(gram), lambda)
    }

    /// Like [`FittedModel::fit`] with a precomputed Gram matrix for `data`.
    pub fn fit_with_gram(
        kernel: Arc<SsAnovaKernel>,
        data: &Dataset,
        gram: Arc<DMatrix<f64>>,
        lambda: f64,
    ) -> Result<Self> {
        check_lambda(lambda)?;
        let n = data.n();
        if gram.shape() != (n, n) {
            return Err(Error::Shape(format!(
                "Gram matrix is {:?}, expected {n}x{n}",
                gram.shape()
            )));
        }
        if data.r() != kernel.spec().r {
            return Err(Error::Shape(format!(
                "dataset has {} covariates, kernel expects {}",
                data.r(),
                kernel.spec().r
            )));
        }
        let mut system = (*gram).clone();
        add_ridge(&mut system, n as f64 * lambda);
        if system.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("Gram matrix has non-finite entries".into()));
        }
        let y = DVector::from_column_slice(data.y());
        let chol = Cholesky::new(system.clone()).ok_or_else(|| {
            Error::Numerical(format!(
                "Cholesky factorization of R + nλI failed (n = {n}, λ = {lambda:e}); the matrix is not positive definite"
            ))
        })?;
        let coeffs = chol.solve(&y);
        let residual_norm = (&system * &coeffs - &y).norm();
        Ok(Self {
            kernel,
            lambda,
            x: Arc::new(data.x().to_vec()),
            y: Arc::new(data.y().to_vec()),
            gram,
            coeffs,
            residual_norm,
        })
    }

    pub fn kernel(&self) -> &SsAnovaKernel {
        &self.kernel
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn train_point(&self, i: usize) -> &[f64] {
        let r = self.kernel.spec().r;
        &self.x[i * r..(i + 1) * r]
    }

    /// `‖A c - b‖` of the linear system this model's coefficients solve.
    pub fn residual_norm(&self) -> f64 {
        self.residual_norm
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.kernel.check_point("x", x)?;
        Ok(self.dot_features(x, |k, a, b| k.anova_unchecked(a, b)))
    }

    pub fn predict_derivative(&self, beta: &DerivativeOrder, x: &[f64]) -> Result<f64> {
        beta.check(self.kernel.spec())?;
        self.kernel.check_point("x", x)?;
        let b = beta.as_slice();
        Ok(self.dot_features(x, |k, a, t| k.anova_deriv_unchecked(b, a, t)))
    }

    /// Rows are `∂^β Φ(x_i)ᵀ` for each evaluation point.
    pub fn derivative_features(&self, beta: &DerivativeOrder, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        beta.check(self.kernel.spec())?;
        for p in points {
            self.kernel.check_point("evaluation point", p)?;
        }
        let n = self.n();
        let b = beta.as_slice();
        Ok(DMatrix::from_fn(points.len(), n, |i, j| {
            self.kernel.anova_deriv_unchecked(b, &points[i], self.train_point(j))
        }))
    }

    /// Coefficients `(WR + nλI)⁻¹ W Y` of the weighted refit, by LU with partial pivoting.
    pub fn bootstrap_coeffs(&self, weights: &BootstrapWeights) -> Result<(DVector<f64>, f64)> {
        let w = weights.as_slice();
        let n = self.n();
        if w.len() != n {
            return Err(Error::Shape(format!(
                "{} bootstrap weights for {n} observations",
                w.len()
            )));
        }
        let mut system = DMatrix::from_fn(n, n, |i, j| w[i] * self.gram[(i, j)]);
        add_ridge(&mut system, n as f64 * self.lambda);
        let rhs = DVector::from_iterator(n, w.iter().zip(self.y.iter()).map(|(a, b)| a * b));
        let coeffs = system.clone().lu().solve(&rhs).ok_or_else(|| {
            Error::Numerical(format!(
                "weighted system WR + nλI is singular (n = {n}, λ = {:e})",
                self.lambda
            ))
        })?;
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "weighted solve produced non-finite coefficients".into(),
            ));
        }
        let residual = (&system * &coeffs - &rhs).norm();
        Ok((coeffs, residual))
    }

    /// The multiplier-bootstrap refit at the same λ.
    pub fn bootstrap_fit(&self, weights: &BootstrapWeights) -> Result<Self> {
        let (coeffs, residual_norm) = self.bootstrap_coeffs(weights)?;
        Ok(Self {
            coeffs,
            residual_norm,
            ..self.clone()
        })
    }

    fn dot_features(&self, x: &[f64], feature: impl Fn(&SsAnovaKernel, &[f64], &[f64]) -> f64) -> f64 {
        (0..self.n())
            .map(|i| self.coeffs[i] * feature(&self.kernel, x, self.train_point(i)))
            .sum()
    }
}

fn add_ridge(m: &mut DMatrix<f64>, ridge: f64) {
    for i in 0..m.nrows() {
        m[(i, i)] += ridge;
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "smoothing parameter λ = {lambda} must be positive and finite"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;
    use nalgebra::SymmetricEigen;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn kernel(m: usize, q: usize, r: usize) -> SsAnovaKernel {
        SsAnovaKernel::new(KernelSpec::new(m, q, r).unwrap()).unwrap()
    }

    fn random_data(rng: &mut ChaCha8Rng, n: usize, r: usize) -> Dataset {
        let x: Vec<f64> = (0..n * r).map(|_| rng.random()).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| (3.0 * x[i * r]).sin() + rng.random_range(-0.3..0.3))
            .collect();
        Dataset::new(r, x, y).unwrap()
    }

    #[test]
    fn single_observation_gram_and_fit() {
        let k = kernel(2, 1, 1);
        let ds = Dataset::new(1, vec![0.0], vec![2.0]).unwrap();
        let g = gram_matrix(&k, &ds).unwrap();
        assert_eq!(g.shape(), (1, 1));
        assert!((g[(0, 0)] - 1.258_333_333_333_333).abs() < 1e-12);

        let lambda = 0.3;
        let model = FittedModel::fit(&k, &ds, lambda).unwrap();
        let c = 2.0 / (g[(0, 0)] + lambda);
        assert!((model.coeffs()[0] - c).abs() < 1e-14);
        let x = [0.6];
        let expected = k.anova(&x, &[0.0]).unwrap() * c;
        assert!((model.predict(&x).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn gram_is_exactly_symmetric_and_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ds = random_data(&mut rng, 200, 3);
        let g = gram_matrix(&kernel(2, 2, 3), &ds).unwrap();
        assert_eq!(&g - g.transpose(), DMatrix::zeros(200, 200));
        let eig = SymmetricEigen::new(g).eigenvalues;
        assert!(eig.min() >= -1e-8 * eig.max());
    }

    #[test]
    fn rejects_nonpositive_lambda() {
        let ds = Dataset::new(1, vec![0.5], vec![1.0]).unwrap();
        for bad in [0.0, -1.0, f64::NAN] {
            assert!(matches!(
                FittedModel::fit(&kernel(2, 1, 1), &ds, bad),
                Err(Error::Parameter(_))
            ));
        }
    }

    #[test]
    fn solve_residual_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for &lambda in &[1e-8, 1e-4, 1.0] {
            let ds = random_data(&mut rng, 80, 2);
            let model = FittedModel::fit(&kernel(2, 2, 2), &ds, lambda).unwrap();
            let ynorm = DVector::from_column_slice(ds.y()).norm();
            assert!(
                model.residual_norm() <= 1e-8 * ynorm,
                "λ = {lambda}: {}",
                model.residual_norm()
            );
        }
    }

    #[test]
    fn heavy_ridge_shrinks_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let ds = random_data(&mut rng, 40, 2);
        let k = kernel(2, 2, 2);
        let lambda = 1e6;
        let model = FittedModel::fit(&k, &ds, lambda).unwrap();
        let g = model.gram();
        let rmax = g.iter().cloned().fold(0.0, f64::max);
        let ynorm = DVector::from_column_slice(ds.y()).norm();
        let bound = ynorm * rmax * (ds.n() as f64).sqrt() / (ds.n() as f64 * lambda);
        for p in ds.points() {
            assert!(model.predict(p).unwrap().abs() <= bound);
        }
    }

    #[test]
    fn zero_response_gives_zero_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let ds = random_data(&mut rng, 20, 2);
        let ds = ds.with_response(vec![0.0; 20]).unwrap();
        let model = FittedModel::fit(&kernel(2, 1, 2), &ds, 1e-3).unwrap();
        assert_eq!(model.predict(&[0.3, 0.9]).unwrap(), 0.0);
    }

    #[test]
    fn derivative_matches_central_difference_of_predict() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let ds = random_data(&mut rng, 30, 3);
        let model = FittedModel::fit(&kernel(2, 2, 3), &ds, 1e-3).unwrap();
        let h = 1e-5;
        for _ in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..0.95)).collect();
            for s in 0..3 {
                let beta = DerivativeOrder::unit(3, s);
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[s] += h;
                xm[s] -= h;
                let fd = (model.predict(&xp).unwrap() - model.predict(&xm).unwrap()) / (2.0 * h);
                let d = model.predict_derivative(&beta, &x).unwrap();
                assert!((d - fd).abs() <= 1e-4 * d.abs().max(1e-2), "{d} vs {fd}");
            }
        }
    }

    #[test]
    fn derivative_zero_order_and_structural_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let ds = random_data(&mut rng, 25, 3);
        let additive = FittedModel::fit(&kernel(2, 1, 3), &ds, 1e-3).unwrap();
        let x = [0.2, 0.4, 0.6];
        assert_eq!(
            additive.predict_derivative(&DerivativeOrder::zero(3), &x).unwrap(),
            additive.predict(&x).unwrap()
        );
        let cross = DerivativeOrder::new(vec![1, 0, 1]);
        for p in ds.points() {
            assert_eq!(
                additive.predict_derivative(&cross, p).unwrap().to_bits(),
                0.0f64.to_bits()
            );
        }
        assert!(matches!(
            additive.predict_derivative(&DerivativeOrder::new(vec![2, 0, 0]), &x),
            Err(Error::UnsupportedDerivativeOrder { order: 2, m: 2 })
        ));
    }

    #[test]
    fn unit_weights_reproduce_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let ds = random_data(&mut rng, 50, 2);
        let model = FittedModel::fit(&kernel(2, 2, 2), &ds, 1e-3).unwrap();
        let boot = model
            .bootstrap_fit(&BootstrapWeights::new(vec![1.0; 50]).unwrap())
            .unwrap();
        let diff = (boot.coeffs() - model.coeffs()).norm();
        assert!(diff < 1e-10 * model.coeffs().norm());
    }

    #[test]
    fn zero_weights_give_zero_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let ds = random_data(&mut rng, 20, 2);
        let model = FittedModel::fit(&kernel(2, 1, 2), &ds, 1e-2).unwrap();
        let boot = model
            .bootstrap_fit(&BootstrapWeights::new(vec![0.0; 20]).unwrap())
            .unwrap();
        assert!(boot.coeffs().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn bootstrap_is_linear_in_response() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let ds = random_data(&mut rng, 30, 2);
        let k = kernel(2, 2, 2);
        let w = BootstrapWeights::draw(WeightFamily::TwoPoint, 30, &mut rng);
        let base = FittedModel::fit(&k, &ds, 1e-3).unwrap().bootstrap_fit(&w).unwrap();
        let tripled = ds.with_response(ds.y().iter().map(|v| 3.0 * v).collect()).unwrap();
        let scaled = FittedModel::fit(&k, &tripled, 1e-3).unwrap().bootstrap_fit(&w).unwrap();
        let diff = (scaled.coeffs() - base.coeffs() * 3.0).norm();
        assert!(diff < 1e-10 * scaled.coeffs().norm());
    }

    #[test]
    fn weights_validation() {
        assert!(BootstrapWeights::new(vec![1.0, -0.1]).is_err());
        assert!(BootstrapWeights::new(vec![1.0, f64::NAN]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let ds = random_data(&mut rng, 5, 1);
        let model = FittedModel::fit(&kernel(2, 1, 1), &ds, 1e-2).unwrap();
        assert!(matches!(
            model.bootstrap_fit(&BootstrapWeights::new(vec![1.0; 4]).unwrap()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn weight_families_have_unit_mean_and_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for family in [WeightFamily::Exponential, WeightFamily::TwoPoint] {
            let w = BootstrapWeights::draw(family, 200_000, &mut rng);
            assert!(w.as_slice().iter().all(|&v| v >= 0.0));
            let n = w.as_slice().len() as f64;
            let mean = w.as_slice().iter().sum::<f64>() / n;
            let var = w.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!((mean - 1.0).abs() < 0.01, "{family:?} mean {mean}");
            assert!((var - 1.0).abs() < 0.02, "{family:?} var {var}");
        }
    }
}
