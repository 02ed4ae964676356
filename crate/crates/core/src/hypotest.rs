//! Multiplier-bootstrap test of `H₀: ∂^β f₀ ≡ 0`.
//!
//! 1. Draw `p` evaluation points and compute `φ_n = max_i |∂^β f̂(x_i)|`.
//! 2. For `k = 1..B`, draw weights `W⁽ᵏ⁾`, refit with `(WR + nλI)⁻¹WY`, draw
//!    fresh points `x⁽ᵏ⁾` and record `φ*_k = max_i |∂^β f̂*_k(x_i⁽ᵏ⁾) - ∂^β f̂(x_i⁽ᵏ⁾)|`.
//! 3. Reject when `φ_n` exceeds the upper-α quantile of `φ*`; the p-value is
//!    `#{k : φ*_k ≥ φ_n} / B`.
//!
//! Both statistics are left unscaled; the quantile comparison does not need
//! the normalizing rate.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernel::{DerivativeOrder, KernelSpec, SsAnovaKernel};
use crate::krr::{BootstrapWeights, FittedModel, WeightFamily};
use crate::rng::{substream, Purpose};

/// Density the evaluation points are drawn from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingDensity {
    #[default]
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub beta: DerivativeOrder,
    /// Bootstrap replicate count `B`.
    pub replicates: usize,
    /// Evaluation points per statistic `p`.
    pub points: usize,
    pub alpha: f64,
    pub weights: WeightFamily,
    pub density: SamplingDensity,
    pub seed: u64,
}

impl TestConfig {
    pub fn new(beta: DerivativeOrder, seed: u64) -> Self {
        Self {
            beta,
            replicates: 500,
            points: 100,
            alpha: 0.1,
            weights: WeightFamily::Exponential,
            density: SamplingDensity::Uniform,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Parameter(
                "bootstrap replicate count B must be at least 1".into(),
            ));
        }
        if self.points == 0 {
            return Err(Error::Parameter("evaluation point count p must be at least 1".into()));
        }
        check_alpha(self.alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub beta: DerivativeOrder,
    pub lambda: f64,
    pub alpha: f64,
    pub replicates: usize,
    pub points: usize,
    pub weights: WeightFamily,
    pub seed: u64,
    pub phi_n: f64,
    pub t_alpha: f64,
    pub p_value: f64,
    pub reject: bool,
    pub boot: Vec<f64>,
}

impl TestOutcome {
    fn assemble(cfg: &TestConfig, beta: DerivativeOrder, lambda: f64, phi_n: f64, boot: Vec<f64>) -> Result<Self> {
        let t_alpha = upper_quantile(&boot, cfg.alpha)?;
        let p_value = p_value(&boot, phi_n);
        Ok(Self {
            beta,
            lambda,
            alpha: cfg.alpha,
            replicates: cfg.replicates,
            points: cfg.points,
            weights: cfg.weights,
            seed: cfg.seed,
            phi_n,
            t_alpha,
            p_value,
            reject: phi_n > t_alpha,
            boot,
        })
    }
}

/// `p` i.i.d. draws from `density` on `[0, 1]^r`.
pub fn sample_eval_points<R: Rng + ?Sized>(density: SamplingDensity, r: usize, p: usize, rng: &mut R) -> Vec<Vec<f64>> {
    match density {
        SamplingDensity::Uniform => (0..p).map(|_| (0..r).map(|_| rng.random::<f64>()).collect()).collect(),
    }
}

/// `φ = max_i |∂^β f̂(x_i)|`.
pub fn test_statistic(model: &FittedModel, beta: &DerivativeOrder, points: &[Vec<f64>]) -> Result<f64> {
    let features = model.derivative_features(beta, points)?;
    Ok(max_abs(&(features * model.coeffs())))
}

/// `φ* = max_i |∂^β f̂*(x_i) - ∂^β f̂(x_i)|` for one explicit weight vector and point set.
pub fn bootstrap_replicate(
    model: &FittedModel,
    beta: &DerivativeOrder,
    weights: &BootstrapWeights,
    points: &[Vec<f64>],
) -> Result<f64> {
    let (boot_coeffs, _) = model.bootstrap_coeffs(weights)?;
    let features = model.derivative_features(beta, points)?;
    Ok(max_abs(&(features * (boot_coeffs - model.coeffs()))))
}

/// The `⌈αB⌉`-th largest sample.
pub fn upper_quantile(samples: &[f64], alpha: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Parameter("cannot take a quantile of an empty sample".into()));
    }
    check_alpha(alpha)?;
    let b = samples.len();
    // Guard against αB landing a hair above an integer through roundoff.
    let rank = ((alpha * b as f64 - 1e-9).ceil() as usize).clamp(1, b);
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(sorted[rank - 1])
}

/// `#{k : φ*_k ≥ φ_n} / B`.
pub fn p_value(boot: &[f64], phi_n: f64) -> f64 {
    boot.iter().filter(|&&v| v >= phi_n).count() as f64 / boot.len() as f64
}

/// Fits at `lambda` and runs the full bootstrap test.
pub fn bootstrap_test(kernel: &SsAnovaKernel, data: &Dataset, lambda: f64, cfg: &TestConfig) -> Result<TestOutcome> {
    cfg.validate()?;
    cfg.beta.check(kernel.spec())?;
    let model = FittedModel::fit(kernel, data, lambda)?;
    bootstrap_test_model(&model, cfg)
}

pub fn bootstrap_test_model(model: &FittedModel, cfg: &TestConfig) -> Result<TestOutcome> {
    let mut out = bootstrap_test_suite(model, std::slice::from_ref(&cfg.beta), cfg)?;
    Ok(out.remove(0))
}

/// Tests several derivative directions against the same bootstrap refits.
/// `cfg.beta` is ignored; each outcome carries its own direction. Results for a
/// direction are identical to testing it alone with the same seed.
pub fn bootstrap_test_suite(
    model: &FittedModel,
    betas: &[DerivativeOrder],
    cfg: &TestConfig,
) -> Result<Vec<TestOutcome>> {
    cfg.validate()?;
    if betas.is_empty() {
        return Err(Error::Parameter("no derivative directions to test".into()));
    }
    for beta in betas {
        beta.check(model.kernel().spec())?;
    }
    let r = model.kernel().spec().r;
    let n = model.n();

    let original = sample_eval_points(
        cfg.density,
        r,
        cfg.points,
        &mut substream(cfg.seed, 0, Purpose::EvalPoints),
    );
    let phi: Vec<f64> = betas
        .iter()
        .map(|beta| test_statistic(model, beta, &original))
        .collect::<Result<_>>()?;

    let replicate = |k: usize| -> Result<Vec<f64>> {
        let mut wrng = substream(cfg.seed, k as u64, Purpose::BootstrapWeights);
        let weights = BootstrapWeights::draw(cfg.weights, n, &mut wrng);
        let (boot_coeffs, _) = model
            .bootstrap_coeffs(&weights)
            .map_err(|e| Error::Numerical(format!("bootstrap replicate {k}: {e}")))?;
        let delta: DVector<f64> = boot_coeffs - model.coeffs();
        let points = sample_eval_points(
            cfg.density,
            r,
            cfg.points,
            &mut substream(cfg.seed, k as u64, Purpose::EvalPoints),
        );
        betas
            .iter()
            .map(|beta| Ok(max_abs(&(model.derivative_features(beta, &points)? * &delta))))
            .collect()
    };

    #[cfg(feature = "parallel")]
    let per_replicate: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        (1..=cfg.replicates)
            .into_par_iter()
            .map(replicate)
            .collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let per_replicate: Vec<Vec<f64>> = (1..=cfg.replicates).map(replicate).collect::<Result<_>>()?;

    betas
        .iter()
        .enumerate()
        .map(|(j, beta)| {
            let boot: Vec<f64> = per_replicate.iter().map(|row| row[j]).collect();
            TestOutcome::assemble(cfg, beta.clone(), model.lambda(), phi[j], boot)
        })
        .collect()
}

/// Every direction with unit orders on a coordinate subset of size `1..=q`,
/// ordered by subset size then lexicographically: main effects, pairwise
/// interactions, and so on up to order `q`.
pub fn interaction_directions(spec: &KernelSpec) -> Vec<DerivativeOrder> {
    let r = spec.r;
    let mut out = Vec::new();
    for size in 1..=spec.q {
        let mut subset: Vec<usize> = (0..size).collect();
        loop {
            let mut beta = vec![0; r];
            for &s in &subset {
                beta[s] = 1;
            }
            out.push(DerivativeOrder::new(beta));
            // Advance to the next combination in lexicographic order.
            let mut i = size;
            while i > 0 && subset[i - 1] == r - size + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            subset[i - 1] += 1;
            for j in i..size {
                subset[j] = subset[j - 1] + 1;
            }
        }
    }
    out
}

fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "significance level α = {alpha} must lie in (0, 1)"
        )))
    }
}
