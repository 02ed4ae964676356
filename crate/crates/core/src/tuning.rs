//! Smoothing-parameter selection by the pseudo marginal likelihood
//! `Y | X ~ N(0, σ̂²(nλ)⁻¹ R + σ̂² I)` with plug-in `σ̂² = λ Yᵀ(R + nλI)⁻¹Y`.
//!
//! With `Σ = σ̂²(nλ)⁻¹(R + nλI)` the quadratic form `YᵀΣ⁻¹Y` is identically
//! `n`, so after one eigendecomposition `R = U D Uᵀ` every grid point costs
//! `O(n)`:
//!
//! ```text
//! log L(λ) = -½ [ n log σ̂² - n log(nλ) + Σ_i log(d_i + nλ) + n + n log 2π ]
//! ```

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::SsAnovaKernel;
use crate::krr::{check_lambda, gram_matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningGrid {
    lambdas: Vec<f64>,
}

impl TuningGrid {
    pub fn new(lambdas: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::Parameter("tuning grid is empty".into()));
        }
        for &l in &lambdas {
            check_lambda(l)?;
        }
        if lambdas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter("tuning grid must be strictly increasing".into()));
        }
        Ok(Self { lambdas })
    }

    /// `count` log-spaced points from `lo` to `hi` inclusive.
    pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::Parameter("tuning grid needs at least one point".into()));
        }
        check_lambda(lo)?;
        check_lambda(hi)?;
        if count == 1 {
            return Self::new(vec![lo]);
        }
        let (a, b) = (lo.ln(), hi.ln());
        let step = (b - a) / (count - 1) as f64;
        let mut lambdas: Vec<f64> = (0..count).map(|i| (a + step * i as f64).exp()).collect();
        lambdas[0] = lo;
        lambdas[count - 1] = hi;
        Self::new(lambdas)
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }
}

impl Default for TuningGrid {
    /// 50 log-spaced points on `[1e-8, 1]`.
    fn default() -> Self {
        Self::log_spaced(1e-8, 1.0, 50).expect("default grid is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub lambda: f64,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub best_lambda: f64,
    pub sigma_hat_sq: f64,
    pub profile: Vec<ProfilePoint>,
}

/// Eigendecomposition of a Gram matrix projected onto a response.
#[derive(Debug, Clone)]
pub struct SpectralProfile {
    /// Eigenvalues of `R`, clamped at zero from below.
    pub eigvals: DVector<f64>,
    /// `z = Uᵀ Y`.
    pub z: DVector<f64>,
}

impl SpectralProfile {
    pub fn new(gram: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        let n = y.len();
        if gram.shape() != (n, n) {
            return Err(Error::Shape(format!(
                "Gram matrix is {:?}, response has length {n}",
                gram.shape()
            )));
        }
        if y.iter().all(|&v| v == 0.0) {
            return Err(Error::DegenerateResponse);
        }
        if gram.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("Gram matrix has non-finite entries".into()));
        }
        let eig = SymmetricEigen::new(gram.clone());
        let eigvals = eig.eigenvalues.map(|d| d.max(0.0));
        let z = eig.eigenvectors.tr_mul(&DVector::from_column_slice(y));
        Ok(Self { eigvals, z })
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn sigma_hat_sq(&self, lambda: f64) -> Result<f64> {
        check_lambda(lambda)?;
        let nl = self.n() as f64 * lambda;
        Ok(lambda
            * self
                .eigvals
                .iter()
                .zip(self.z.iter())
                .map(|(d, z)| z * z / (d + nl))
                .sum::<f64>())
    }

    pub fn loglik(&self, lambda: f64) -> Result<f64> {
        profile_loglik(&self.eigvals, &self.z, lambda)
    }
}

/// `σ̂² = λ Yᵀ(R + nλI)⁻¹Y`.
pub fn sigma_hat_sq(gram: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<f64> {
    SpectralProfile::new(gram, y)?.sigma_hat_sq(lambda)
}

/// Gaussian log-likelihood profiled over `σ̂²`, from the spectrum `d` of `R`
/// and `z = UᵀY`.
pub fn profile_loglik(eigvals: &DVector<f64>, z: &DVector<f64>, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if eigvals.len() != z.len() {
        return Err(Error::Shape(format!(
            "{} eigenvalues but {} projections",
            eigvals.len(),
            z.len()
        )));
    }
    let n = z.len() as f64;
    let nl = n * lambda;
    let mut quad = 0.0;
    let mut logdet = 0.0;
    for (&d, &zi) in eigvals.iter().zip(z.iter()) {
        let shifted = d + nl;
        if shifted.is_nan() || shifted <= 0.0 {
            return Err(Error::Numerical(format!(
                "eigenvalue {d} + nλ = {shifted} is not positive"
            )));
        }
        quad += zi * zi / shifted;
        logdet += shifted.ln();
    }
    let sigma2 = lambda * quad;
    if sigma2.is_nan() || sigma2 <= 0.0 {
        return Err(Error::DegenerateResponse);
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    Ok(-0.5 * (n * sigma2.ln() - n * nl.ln() + logdet + n + n * two_pi.ln()))
}

pub fn select_lambda(kernel: &SsAnovaKernel, data: &Dataset, grid: &TuningGrid) -> Result<TuningResult> {
    let gram = gram_matrix(kernel, data)?;
    select_lambda_with_gram(&gram, data.y(), grid)
}

/// Grid maximizer of the profile likelihood; ties go to the larger λ.
pub fn select_lambda_with_gram(gram: &DMatrix<f64>, y: &[f64], grid: &TuningGrid) -> Result<TuningResult> {
    let spectral = SpectralProfile::new(gram, y)?;
    let profile = grid
        .lambdas()
        .iter()
        .map(|&lambda| {
            Ok(ProfilePoint {
                lambda,
                log_likelihood: spectral.loglik(lambda)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = argmax_prefer_larger(&profile);
    Ok(TuningResult {
        best_lambda: best.lambda,
        sigma_hat_sq: spectral.sigma_hat_sq(best.lambda)?,
        profile,
    })
}

/// Profile values this close to the maximum count as ties.
const TIE_TOLERANCE: f64 = 1e-12;

fn argmax_prefer_larger(profile: &[ProfilePoint]) -> ProfilePoint {
    let max = profile
        .iter()
        .map(|p| p.log_likelihood)
        .fold(f64::NEG_INFINITY, f64::max);
    let cutoff = max - TIE_TOLERANCE * (1.0 + max.abs());
    *profile
        .iter()
        .rev()
        .find(|p| p.log_likelihood >= cutoff)
        .expect("profile is nonempty")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn kernel(m: usize, q: usize, r: usize) -> SsAnovaKernel {
        SsAnovaKernel::new(KernelSpec::new(m, q, r).unwrap()).unwrap()
    }

    fn instance(seed: u64, n: usize, r: usize) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n * r).map(|_| rng.random()).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| (2.0 * PI * x[i * r]).sin() + 0.5 * rng.random_range(-1.0..1.0))
            .collect();
        let ds = Dataset::new(r, x, y.clone()).unwrap();
        (gram_matrix(&kernel(2, r.min(2), r), &ds).unwrap(), y)
    }

    /// `-½ log det Σ - ½ YᵀΣ⁻¹Y - (n/2) log 2π`, all dense.
    fn dense_gaussian(gram: &DMatrix<f64>, y: &[f64], lambda: f64) -> (f64, f64) {
        let n = y.len();
        let yv = DVector::from_column_slice(y);
        let mut a = gram.clone();
        for i in 0..n {
            a[(i, i)] += n as f64 * lambda;
        }
        let sigma2 = lambda * yv.dot(&a.clone().lu().solve(&yv).unwrap());
        let cov = a * (sigma2 / (n as f64 * lambda));
        let chol = nalgebra::Cholesky::new(cov).unwrap();
        let logdet: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        let quad = yv.dot(&chol.solve(&yv));
        (-0.5 * logdet - 0.5 * quad - 0.5 * n as f64 * (2.0 * PI).ln(), quad)
    }

    #[test]
    fn scalar_sigma() {
        let g = DMatrix::from_element(1, 1, 1.7);
        let s = sigma_hat_sq(&g, &[2.0], 0.4).unwrap();
        assert!((s - 0.4 * 4.0 / (1.7 + 0.4)).abs() < 1e-15);
    }

    #[test]
    fn sigma_matches_dense_solve_and_increases() {
        for seed in 0..3 {
            let (g, y) = instance(seed, 50, 2);
            let spectral = SpectralProfile::new(&g, &y).unwrap();
            let yv = DVector::from_column_slice(&y);
            let mut last = 0.0;
            for &lambda in TuningGrid::default().lambdas() {
                let mut a = g.clone();
                for i in 0..50 {
                    a[(i, i)] += 50.0 * lambda;
                }
                let dense = lambda * yv.dot(&a.lu().solve(&yv).unwrap());
                let s = spectral.sigma_hat_sq(lambda).unwrap();
                assert!((s - dense).abs() <= 1e-9 * dense, "λ = {lambda}: {s} vs {dense}");
                assert!(s > last);
                last = s;
            }
        }
    }

    #[test]
    fn profile_matches_dense_density() {
        for seed in 10..14 {
            let (g, y) = instance(seed, 40, 3);
            let spectral = SpectralProfile::new(&g, &y).unwrap();
            let lambdas = [1e-6, 1e-4, 1e-3, 1e-2, 0.3];
            let ours: Vec<f64> = lambdas.iter().map(|&l| spectral.loglik(l).unwrap()).collect();
            let dense: Vec<(f64, f64)> = lambdas.iter().map(|&l| dense_gaussian(&g, &y, l)).collect();
            for (i, (dl, quad)) in dense.iter().enumerate() {
                assert!((quad - 40.0).abs() <= 1e-8 * 40.0, "quad {quad}");
                let d_ours = ours[i] - ours[0];
                let d_dense = dl - dense[0].0;
                assert!((d_ours - d_dense).abs() < 1e-7, "{d_ours} vs {d_dense}");
            }
        }
    }

    #[test]
    fn scalar_maximizer_matches_brute_force() {
        let (g11, y1) = (1.3, 0.8);
        let g = DMatrix::from_element(1, 1, g11);
        let grid = TuningGrid::log_spaced(1e-4, 10.0, 400).unwrap();
        let tuned = select_lambda_with_gram(&g, &[y1], &grid).unwrap();
        // Density of N(0, s) with s = σ̂²(R + λ)/λ.
        let exact = |l: f64| {
            let sigma2 = l * y1 * y1 / (g11 + l);
            let var = sigma2 * (g11 + l) / l;
            -0.5 * (2.0 * PI * var).ln() - 0.5 * y1 * y1 / var
        };
        let values: Vec<f64> = grid.lambdas().iter().map(|&l| exact(l)).collect();
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let winner = (0..values.len())
            .rev()
            .find(|&i| values[i] >= max - 1e-12 * (1.0 + max.abs()))
            .unwrap();
        let best = (values[winner], grid.lambdas()[winner]);
        assert_eq!(tuned.best_lambda, best.1);
    }

    #[test]
    fn noiseless_constant_response_selects_smallest_lambda() {
        // Exactly interpolable data: log det(R + nλI) diverges as λ -> 0 while
        // the residual factor stays bounded.
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let x: Vec<f64> = (0..60).map(|_| rng.random()).collect();
        let ds = Dataset::new(2, x, vec![3.5; 30]).unwrap();
        let grid = TuningGrid::default();
        let tuned = select_lambda(&kernel(2, 2, 2), &ds, &grid).unwrap();
        assert_eq!(tuned.best_lambda, grid.lambdas()[0]);
    }

    #[test]
    fn noisier_response_selects_larger_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let x: Vec<f64> = (0..60).map(|_| rng.random()).collect();
        let noise: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let k = kernel(2, 2, 2);
        let grid = TuningGrid::default();
        let pick = |scale: f64| {
            let y = noise.iter().map(|e| 3.5 + scale * e).collect();
            select_lambda(&k, &Dataset::new(2, x.clone(), y).unwrap(), &grid)
                .unwrap()
                .best_lambda
        };
        assert!(pick(1.0) > pick(0.1));
    }

    #[test]
    fn duplicated_rows_agree_with_dense_ordering() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut rows: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.random(), rng.random()]).collect();
        let mut y: Vec<f64> = rows
            .iter()
            .map(|r| (4.0 * r[0]).cos() + 0.3 * rng.random::<f64>())
            .collect();
        rows.extend(rows.clone());
        y.extend(y.clone());
        let ds = Dataset::from_rows(&rows, y.clone()).unwrap();
        let grid = TuningGrid::log_spaced(1e-6, 1.0, 13).unwrap();
        let tuned = select_lambda(&kernel(2, 2, 2), &ds, &grid).unwrap();
        let g = gram_matrix(&kernel(2, 2, 2), &ds).unwrap();
        let dense: Vec<f64> = grid.lambdas().iter().map(|&l| dense_gaussian(&g, &y, l).0).collect();
        for i in 0..dense.len() {
            for j in 0..dense.len() {
                if (dense[i] - dense[j]).abs() > 1e-6 {
                    let ours = tuned.profile[i].log_likelihood > tuned.profile[j].log_likelihood;
                    assert_eq!(ours, dense[i] > dense[j]);
                }
            }
        }
    }

    #[test]
    fn single_point_grid() {
        let (g, y) = instance(40, 15, 2);
        let grid = TuningGrid::new(vec![0.01]).unwrap();
        let tuned = select_lambda_with_gram(&g, &y, &grid).unwrap();
        assert_eq!(tuned.best_lambda, 0.01);
        assert_eq!(tuned.profile.len(), 1);
    }

    #[test]
    fn permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let rows: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.random(), rng.random()]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] * r[1] + 0.2 * rng.random::<f64>()).collect();
        let k = kernel(2, 2, 2);
        let grid = TuningGrid::default();
        let a = select_lambda(&k, &Dataset::from_rows(&rows, y.clone()).unwrap(), &grid).unwrap();
        let perm: Vec<usize> = (0..40).rev().collect();
        let rows_p: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let y_p: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let b = select_lambda(&k, &Dataset::from_rows(&rows_p, y_p).unwrap(), &grid).unwrap();
        assert_eq!(a.best_lambda, b.best_lambda);
    }

    #[test]
    fn grid_validation_and_degenerate_response() {
        assert!(TuningGrid::new(vec![]).is_err());
        assert!(TuningGrid::new(vec![0.1, 0.1]).is_err());
        assert!(TuningGrid::new(vec![-1.0]).is_err());
        let g = TuningGrid::default();
        assert_eq!(g.lambdas().len(), 50);
        assert_eq!(g.lambdas()[0], 1e-8);
        assert_eq!(g.lambdas()[49], 1.0);
        let gram = DMatrix::identity(3, 3);
        assert_eq!(sigma_hat_sq(&gram, &[0.0; 3], 0.1), Err(Error::DegenerateResponse));
    }
}
