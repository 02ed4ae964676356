//! Monte Carlo harness: the three benchmark data-generating processes, RMSE of
//! derivative estimates, and empirical rejection rates of the bootstrap test.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::hypotest::{bootstrap_test_model, sample_eval_points, SamplingDensity, TestConfig};
use crate::kernel::{DerivativeOrder, KernelSpec, SsAnovaKernel};
use crate::krr::{gram_matrix, FittedModel};
use crate::rng::{child_seed, substream, Purpose};
use crate::tuning::{select_lambda_with_gram, TuningGrid};

/// Evaluation points per RMSE replicate.
pub const RMSE_POINTS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub id: u8,
    /// Signal strength multiplying the tested component.
    pub b: f64,
    pub sigma: f64,
    pub n: usize,
}

impl DgpSpec {
    pub fn new(id: u8, b: f64, sigma: f64, n: usize) -> Result<Self> {
        let spec = Self { id, b, sigma, n };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.id) {
            return Err(Error::Parameter(format!(
                "unknown DGP id {} (expected 1, 2 or 3)",
                self.id
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Parameter(format!(
                "noise level σ = {} must be finite and >= 0",
                self.sigma
            )));
        }
        if !self.b.is_finite() {
            return Err(Error::Parameter("signal strength b must be finite".into()));
        }
        if self.n == 0 {
            return Err(Error::Parameter("sample size n must be at least 1".into()));
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        match self.id {
            1 => 2,
            2 => 5,
            _ => 3,
        }
    }

    /// Interaction order the process is built with.
    pub fn interaction_order(&self) -> usize {
        match self.id {
            1 => 2,
            2 => 1,
            _ => 3,
        }
    }

    /// The derivative direction the process is designed to probe.
    pub fn direction(&self) -> DerivativeOrder {
        match self.id {
            1 => DerivativeOrder::new(vec![1, 1]),
            2 => DerivativeOrder::unit(5, 0),
            _ => DerivativeOrder::unit(3, 0),
        }
    }

    pub fn kernel_spec(&self, m: usize) -> Result<KernelSpec> {
        KernelSpec::new(m, self.interaction_order(), self.dimension())
    }

    /// The regression function `f₀`.
    pub fn f0(&self, x: &[f64]) -> f64 {
        let b = self.b;
        match self.id {
            1 => {
                let (x1, x2) = (x[0], x[1]);
                let g1 = (-4.0 * (1.0 - 2.0 * x1 * x1)).exp() * (1.0 - 2.0 * x1);
                let g2 = (8.0 * x2).sin() + (8.0 * x2).cos() + (4.0 / 3.0 + x2).ln();
                g1 + g2 + b * 1.5 * (x1 + x2).exp()
            }
            2 => {
                let g1 = 5.0 * x[0];
                let g2 = 3.0 * (2.0 * x[1] - 1.0).powi(2);
                let s3 = (2.0 * PI * x[2]).sin();
                let g3 = 4.0 * s3 / (2.0 - s3);
                let x4 = x[3];
                let g4 = 2.0 * x4.powi(3) + x4.min(0.2) + x4.max(0.8);
                let (s5, c5) = (2.0 * PI * x[4]).sin_cos();
                let g5 = 0.6 * s5 + 1.2 * c5 + 1.8 * s5 * s5 + 2.4 * c5.powi(3) + 3.0 * s5.powi(3);
                b * g1 + g2 + g3 + g4 + g5
            }
            _ => {
                let (x1, x2, x3) = (x[0], x[1], x[2]);
                let tested = x1 + x1 * x2.sin() + x3 * x1.sin() + x1 / (x2 + x3);
                b * tested + (2.0 * x2 - 1.0).powi(2) + (x3 - 0.5).exp() + x2 * x2 * x3
            }
        }
    }

    /// Analytic `∂^β f₀(x)` for the designated direction.
    pub fn true_derivative(&self, beta: &DerivativeOrder, x: &[f64]) -> Result<f64> {
        if *beta != self.direction() {
            return Err(Error::Parameter(format!(
                "DGP {} only has an analytic derivative along ({}), not ({beta})",
                self.id,
                self.direction()
            )));
        }
        let b = self.b;
        Ok(match self.id {
            1 => b * 1.5 * (x[0] + x[1]).exp(),
            2 => b * 5.0,
            _ => {
                let (x1, x2, x3) = (x[0], x[1], x[2]);
                b * (1.0 + x2.sin() + x3 * x1.cos() + 1.0 / (x2 + x3))
            }
        })
    }

    /// Uniform design on `[0, 1]^r` with Gaussian noise.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Dataset> {
        self.validate()?;
        let r = self.dimension();
        let x: Vec<f64> = (0..self.n * r).map(|_| rng.random::<f64>()).collect();
        let mut y: Vec<f64> = x.chunks_exact(r).map(|p| self.f0(p)).collect();
        if self.sigma > 0.0 {
            for v in &mut y {
                let e: f64 = rng.sample(StandardNormal);
                *v += self.sigma * e;
            }
        }
        Dataset::new(r, x, y)
    }
}

/// Kernel smoothness and λ grid shared by all replicates of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSettings {
    pub m: usize,
    pub grid: TuningGrid,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            m: 2,
            grid: TuningGrid::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Rmse,
    Err,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateValue {
    pub replicate: usize,
    pub seed: u64,
    pub lambda: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; zero for a single replicate.
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dgp: DgpSpec,
    pub metric: Metric,
    pub beta: DerivativeOrder,
    pub m: usize,
    pub replicates: usize,
    pub seed: u64,
    pub values: Vec<ReplicateValue>,
    pub summary: Summary,
}

impl ExperimentReport {
    fn new(dgp: DgpSpec, metric: Metric, m: usize, seed: u64, values: Vec<ReplicateValue>) -> Self {
        let raw: Vec<f64> = values.iter().map(|v| v.value).collect();
        Self {
            dgp,
            metric,
            beta: dgp.direction(),
            m,
            replicates: values.len(),
            seed,
            summary: Summary::of(&raw),
            values,
        }
    }

    /// One row per replicate: `replicate,seed,lambda,value`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let io = |e: csv::Error| Error::Ingestion(format!("write failed: {e}"));
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["replicate", "seed", "lambda", "value"]).map_err(io)?;
        for v in &self.values {
            w.write_record([
                v.replicate.to_string(),
                v.seed.to_string(),
                v.lambda.to_string(),
                v.value.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Ingestion(format!("write failed: {e}")))
    }
}

/// Dataset of the replicate whose own seed is `replicate_seed`.
///
/// Replicate `k` of an experiment seeded with `seed` uses
/// `child_seed(seed, k)`, and every random draw inside it (design, noise,
/// evaluation points, bootstrap weights) hangs off that one value.
pub fn replicate_dataset(dgp: &DgpSpec, replicate_seed: u64) -> Result<Dataset> {
    dgp.generate(&mut substream(replicate_seed, 0, Purpose::Design))
}

/// Tunes λ on a dataset and fits, sharing one Gram matrix.
pub fn tuned_fit(kernel: &SsAnovaKernel, data: &Dataset, grid: &TuningGrid) -> Result<FittedModel> {
    let gram = gram_matrix(kernel, data)?;
    let tuned = select_lambda_with_gram(&gram, data.y(), grid)?;
    FittedModel::fit_with_gram(
        std::sync::Arc::new(kernel.clone()),
        data,
        std::sync::Arc::new(gram),
        tuned.best_lambda,
    )
}

pub fn rmse_experiment(
    dgp: &DgpSpec,
    replicates: usize,
    seed: u64,
    settings: &ExperimentSettings,
) -> Result<ExperimentReport> {
    dgp.validate()?;
    if replicates == 0 {
        return Err(Error::Parameter("replicates must be at least 1".into()));
    }
    let kernel = SsAnovaKernel::new(dgp.kernel_spec(settings.m)?)?;
    let beta = dgp.direction();
    beta.check(kernel.spec())?;

    let run = |k: usize| -> Result<ReplicateValue> {
        let replicate_seed = child_seed(seed, k as u64);
        let data = replicate_dataset(dgp, replicate_seed)?;
        let model = tuned_fit(&kernel, &data, &settings.grid)?;
        let pts = sample_eval_points(
            SamplingDensity::Uniform,
            dgp.dimension(),
            RMSE_POINTS,
            &mut substream(replicate_seed, 0, Purpose::RmsePoints),
        );
        let est = model.derivative_features(&beta, &pts)? * model.coeffs();
        let mut sq = 0.0;
        for (p, e) in pts.iter().zip(est.iter()) {
            sq += (e - dgp.true_derivative(&beta, p)?).powi(2);
        }
        Ok(ReplicateValue {
            replicate: k,
            seed: replicate_seed,
            lambda: model.lambda(),
            value: (sq / RMSE_POINTS as f64).sqrt(),
        })
    };
    let values = run_replicates(replicates, run)?;
    Ok(ExperimentReport::new(*dgp, Metric::Rmse, settings.m, seed, values))
}

/// Fraction of replicates in which the bootstrap test rejects. `cfg.beta` is
/// replaced by the process's designated direction and `cfg.seed` seeds the
/// whole experiment; each replicate's test runs on a derived child seed.
pub fn err_experiment(
    dgp: &DgpSpec,
    cfg: &TestConfig,
    replicates: usize,
    settings: &ExperimentSettings,
) -> Result<ExperimentReport> {
    dgp.validate()?;
    cfg.validate()?;
    if replicates == 0 {
        return Err(Error::Parameter("replicates must be at least 1".into()));
    }
    let kernel = SsAnovaKernel::new(dgp.kernel_spec(settings.m)?)?;
    let beta = dgp.direction();
    beta.check(kernel.spec())?;

    let run = |k: usize| -> Result<ReplicateValue> {
        let test_seed = child_seed(cfg.seed, k as u64);
        let data = replicate_dataset(dgp, test_seed)?;
        let model = tuned_fit(&kernel, &data, &settings.grid)?;
        let replicate_cfg = TestConfig {
            beta: beta.clone(),
            seed: test_seed,
            ..cfg.clone()
        };
        let outcome = bootstrap_test_model(&model, &replicate_cfg)?;
        Ok(ReplicateValue {
            replicate: k,
            seed: test_seed,
            lambda: model.lambda(),
            value: if outcome.reject { 1.0 } else { 0.0 },
        })
    };
    let values = run_replicates(replicates, run)?;
    Ok(ExperimentReport::new(*dgp, Metric::Err, settings.m, cfg.seed, values))
}

fn run_replicates<F>(replicates: usize, run: F) -> Result<Vec<ReplicateValue>>
where
    F: Fn(usize) -> Result<ReplicateValue> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (1..=replicates).into_par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (1..=replicates).map(run).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Central difference of `f₀` along `beta`, one coordinate at a time.
    fn fd(dgp: &DgpSpec, beta: &[usize], x: &[f64], h: f64) -> f64 {
        match beta.iter().position(|&b| b > 0) {
            None => dgp.f0(x),
            Some(s) => {
                let mut lower = beta.to_vec();
                lower[s] -= 1;
                let (mut xp, mut xm) = (x.to_vec(), x.to_vec());
                xp[s] += h;
                xm[s] -= h;
                (fd(dgp, &lower, &xp, h) - fd(dgp, &lower, &xm, h)) / (2.0 * h)
            }
        }
    }

    #[test]
    fn analytic_derivatives_match_numerical_differentiation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for id in 1..=3 {
            let dgp = DgpSpec::new(id, 0.7, 1.0, 10).unwrap();
            let beta = dgp.direction();
            for _ in 0..25 {
                let x: Vec<f64> = (0..dgp.dimension()).map(|_| rng.random_range(0.1..0.9)).collect();
                let exact = dgp.true_derivative(&beta, &x).unwrap();
                let numeric = fd(&dgp, beta.as_slice(), &x, 1e-4);
                assert!(
                    (exact - numeric).abs() < 1e-5 * exact.abs().max(1.0),
                    "DGP {id}: {exact} vs {numeric}"
                );
            }
        }
    }

    #[test]
    fn dgp3_derivative_fixture() {
        // b (1 + sin x2 + x3 cos x1 + 1/(x2 + x3)) at (0.3, 0.5, 0.2), b = 1
        let dgp = DgpSpec::new(3, 1.0, 1.0, 1).unwrap();
        let v = dgp.true_derivative(&dgp.direction(), &[0.3, 0.5, 0.2]).unwrap();
        let expected = 1.0 + 0.5f64.sin() + 0.2 * 0.3f64.cos() + 1.0 / 0.7;
        assert!((v - expected).abs() < 1e-15);
    }

    #[test]
    fn dgp2_null_does_not_depend_on_first_coordinate() {
        let dgp = DgpSpec::new(2, 0.0, 1.0, 50).unwrap();
        let data = dgp.generate(&mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        for p in data.points() {
            let mut q = p.to_vec();
            q[0] = 1.0 - q[0];
            assert_eq!(dgp.f0(p), dgp.f0(&q));
        }
        for p in data.points().take(5) {
            assert_eq!(dgp.true_derivative(&dgp.direction(), p).unwrap(), 0.0);
        }
    }

    #[test]
    fn dgp2_slope_under_alternative() {
        let dgp = DgpSpec::new(2, 1.0, 1.0, 5).unwrap();
        assert_eq!(
            dgp.true_derivative(&dgp.direction(), &[0.1, 0.2, 0.3, 0.4, 0.5])
                .unwrap(),
            5.0
        );
    }

    #[test]
    fn dgp1_mixed_derivative_at_origin() {
        let dgp = DgpSpec::new(1, 1.0, 1.0, 5).unwrap();
        assert_eq!(dgp.true_derivative(&dgp.direction(), &[0.0, 0.0]).unwrap(), 1.5);
        assert!(dgp.true_derivative(&DerivativeOrder::unit(2, 0), &[0.0, 0.0]).is_err());
    }

    #[test]
    fn dgp1_noiseless_hand_values() {
        let dgp = DgpSpec::new(1, 1.0, 0.0, 10).unwrap();
        let data = dgp.generate(&mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        for (p, &y) in data.points().zip(data.y()) {
            let (x1, x2) = (p[0], p[1]);
            let hand = (-4.0 * (1.0 - 2.0 * x1 * x1)).exp() * (1.0 - 2.0 * x1)
                + (8.0 * x2).sin()
                + (8.0 * x2).cos()
                + (4.0 / 3.0 + x2).ln()
                + 1.5 * (x1 + x2).exp();
            assert!((y - hand).abs() < 1e-13);
            assert_eq!(y.to_bits(), dgp.f0(p).to_bits());
        }
    }

    #[test]
    fn generation_is_reproducible_and_in_range() {
        for id in 1..=3 {
            let dgp = DgpSpec::new(id, 0.5, 1.0, 40).unwrap();
            let a = replicate_dataset(&dgp, 11).unwrap();
            let b = replicate_dataset(&dgp, 11).unwrap();
            assert_eq!(a, b);
            assert!(a.x().iter().all(|v| (0.0..=1.0).contains(v)));
            assert!(a.y().iter().all(|v| v.is_finite()));
            assert_ne!(a, replicate_dataset(&dgp, 12).unwrap());
        }
    }

    #[test]
    fn spec_validation() {
        assert!(DgpSpec::new(4, 0.0, 1.0, 10).is_err());
        assert!(DgpSpec::new(1, 0.0, -1.0, 10).is_err());
        assert!(DgpSpec::new(1, 0.0, 1.0, 0).is_err());
    }

    #[test]
    fn fit_nearly_interpolates_smooth_noiseless_data() {
        let dgp = DgpSpec::new(2, 1.0, 0.0, 20).unwrap();
        let data = dgp.generate(&mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let kernel = SsAnovaKernel::new(dgp.kernel_spec(2).unwrap()).unwrap();
        let model = FittedModel::fit(&kernel, &data, 1e-8).unwrap();
        for (p, &y) in data.points().zip(data.y()) {
            assert!((model.predict(p).unwrap() - y).abs() < 1e-3);
        }
    }

    #[test]
    fn single_replicate_summary() {
        let dgp = DgpSpec::new(2, 1.0, 0.5, 40).unwrap();
        let report = rmse_experiment(&dgp, 1, 5, &ExperimentSettings::default()).unwrap();
        assert_eq!(report.replicates, 1);
        assert_eq!(report.summary.mean, report.values[0].value);
        assert_eq!(report.summary.std, 0.0);
    }

    #[test]
    fn low_noise_rmse_is_small() {
        let dgp = DgpSpec::new(2, 1.0, 0.01, 200).unwrap();
        let report = rmse_experiment(&dgp, 5, 6, &ExperimentSettings::default()).unwrap();
        assert!(report.summary.mean < 1.0, "{:?}", report.summary);
    }

    #[test]
    fn err_report_is_reproducible() {
        let dgp = DgpSpec::new(2, 1.0, 0.5, 40).unwrap();
        let mut cfg = TestConfig::new(dgp.direction(), 8);
        cfg.replicates = 20;
        cfg.points = 20;
        let a = err_experiment(&dgp, &cfg, 4, &ExperimentSettings::default()).unwrap();
        let b = err_experiment(&dgp, &cfg, 4, &ExperimentSettings::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.values.iter().all(|v| v.value == 0.0 || v.value == 1.0));
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("replicate,seed,lambda,value"));
    }

    #[test]
    fn summary_recomputable() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
