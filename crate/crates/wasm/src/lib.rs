//! Browser bindings. Every export takes plain numbers and returns a JSON
//! string; the `*_json` functions underneath are ordinary Rust and are what
//! the native tests exercise.

use serde::Serialize;
use ssanova::hypotest::bootstrap_test_model;
use ssanova::simlab::{replicate_dataset, tuned_fit};
use ssanova::{DerivativeOrder, DgpSpec, KernelSpec, SsAnovaKernel, TestConfig, TuningGrid};
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct KernelCurve {
    t: Vec<f64>,
    value: Vec<f64>,
    derivative: Vec<f64>,
}

#[derive(Serialize)]
struct FitCurve {
    lambda: f64,
    t: Vec<f64>,
    fitted: Vec<f64>,
    truth: Vec<f64>,
    derivative: Vec<f64>,
    true_derivative: Vec<f64>,
    sample_t: Vec<f64>,
    sample_y: Vec<f64>,
}

#[derive(Serialize)]
struct TestSummary {
    lambda: f64,
    phi_n: f64,
    t_alpha: f64,
    p_value: f64,
    reject: bool,
    bin_edges: Vec<f64>,
    counts: Vec<usize>,
}

#[derive(Serialize)]
struct Failure {
    error: String,
}

fn respond<T: Serialize>(r: ssanova::Result<T>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v),
        Err(e) => serde_json::to_string(&Failure { error: e.to_string() }),
    }
    .unwrap_or_else(|e| format!("{{\"error\":\"{e}\"}}"))
}

fn grid(points: usize) -> Vec<f64> {
    let k = points.max(2);
    (0..k).map(|i| i as f64 / (k - 1) as f64).collect()
}

/// `t ↦ R(t, y)` in one dimension for smoothness `m`, plus `∂R/∂t`.
pub fn kernel_curve_json(m: usize, y: f64, points: usize) -> String {
    respond((|| {
        let k = SsAnovaKernel::new(KernelSpec::new(m, 1, 1)?)?;
        let t = grid(points);
        let value = t
            .iter()
            .map(|&x| k.sobolev_r(0, x, y))
            .collect::<ssanova::Result<_>>()?;
        let derivative = if m >= 2 {
            t.iter()
                .map(|&x| k.sobolev_r(1, x, y))
                .collect::<ssanova::Result<_>>()?
        } else {
            Vec::new()
        };
        Ok(KernelCurve { t, value, derivative })
    })())
}

/// Simulates one dataset, tunes λ, and traces the fit and its derivative
/// along the designated direction's axis with the other coordinates at 0.5.
pub fn fit_curve_json(dgp: u8, b: f64, sigma: f64, n: usize, seed: u64, points: usize) -> String {
    respond((|| {
        let spec = DgpSpec::new(dgp, b, sigma, n)?;
        let kernel = SsAnovaKernel::new(spec.kernel_spec(2)?)?;
        let data = replicate_dataset(&spec, seed)?;
        let model = tuned_fit(&kernel, &data, &TuningGrid::default())?;
        let beta = spec.direction();
        let axis = beta.as_slice().iter().position(|&v| v > 0).unwrap_or(0);
        let first = DerivativeOrder::unit(spec.dimension(), axis);
        let t = grid(points);
        let mut out = FitCurve {
            lambda: model.lambda(),
            t: t.clone(),
            fitted: Vec::new(),
            truth: Vec::new(),
            derivative: Vec::new(),
            true_derivative: Vec::new(),
            sample_t: data.points().map(|p| p[axis]).collect(),
            sample_y: data.y().to_vec(),
        };
        for &s in &t {
            let mut x = vec![0.5; spec.dimension()];
            x[axis] = s;
            out.fitted.push(model.predict(&x)?);
            out.truth.push(spec.f0(&x));
            out.derivative.push(model.predict_derivative(&first, &x)?);
            if first == beta {
                out.true_derivative.push(spec.true_derivative(&beta, &x)?);
            }
        }
        Ok(out)
    })())
}

/// Runs the bootstrap test on one simulated dataset and bins the bootstrap sample.
#[allow(clippy::too_many_arguments)]
pub fn bootstrap_test_json(
    dgp: u8,
    b: f64,
    sigma: f64,
    n: usize,
    replicates: usize,
    alpha: f64,
    seed: u64,
    bins: usize,
) -> String {
    respond((|| {
        let spec = DgpSpec::new(dgp, b, sigma, n)?;
        let kernel = SsAnovaKernel::new(spec.kernel_spec(2)?)?;
        let data = replicate_dataset(&spec, seed)?;
        let model = tuned_fit(&kernel, &data, &TuningGrid::default())?;
        let cfg = TestConfig {
            replicates,
            alpha,
            ..TestConfig::new(spec.direction(), seed)
        };
        let o = bootstrap_test_model(&model, &cfg)?;
        let bins = bins.max(1);
        let hi = o.boot.iter().cloned().fold(o.phi_n, f64::max).max(f64::MIN_POSITIVE);
        let width = hi / bins as f64;
        let mut counts = vec![0; bins];
        for v in &o.boot {
            counts[((v / width) as usize).min(bins - 1)] += 1;
        }
        Ok(TestSummary {
            lambda: model.lambda(),
            phi_n: o.phi_n,
            t_alpha: o.t_alpha,
            p_value: o.p_value,
            reject: o.reject,
            bin_edges: (0..=bins).map(|i| i as f64 * width).collect(),
            counts,
        })
    })())
}

#[wasm_bindgen]
pub fn kernel_curve(m: usize, y: f64, points: usize) -> String {
    kernel_curve_json(m, y, points)
}

#[wasm_bindgen]
pub fn fit_curve(dgp: u8, b: f64, sigma: f64, n: usize, seed: u32, points: usize) -> String {
    fit_curve_json(dgp, b, sigma, n, seed as u64, points)
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn bootstrap_test(
    dgp: u8,
    b: f64,
    sigma: f64,
    n: usize,
    replicates: usize,
    alpha: f64,
    seed: u32,
    bins: usize,
) -> String {
    bootstrap_test_json(dgp, b, sigma, n, replicates, alpha, seed as u64, bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn parse(s: &str) -> Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn kernel_curve_shape() {
        let v = parse(&kernel_curve_json(2, 0.3, 11));
        assert_eq!(v["t"].as_array().unwrap().len(), 11);
        assert_eq!(v["derivative"].as_array().unwrap().len(), 11);
        let t3 = v["t"][3].as_f64().unwrap();
        let direct = SsAnovaKernel::new(KernelSpec::new(2, 1, 1).unwrap())
            .unwrap()
            .sobolev_r(0, t3, 0.3)
            .unwrap();
        assert!((v["value"][3].as_f64().unwrap() - direct).abs() < 1e-14);
    }

    #[test]
    fn errors_come_back_as_json() {
        let v = parse(&kernel_curve_json(0, 0.3, 5));
        assert!(v["error"].as_str().unwrap().len() > 3);
        let v = parse(&fit_curve_json(9, 1.0, 1.0, 20, 1, 5));
        assert!(v.get("error").is_some());
    }

    #[test]
    fn fit_curve_tracks_truth() {
        let v = parse(&fit_curve_json(2, 1.0, 0.1, 80, 3, 21));
        let d: Vec<f64> = v["derivative"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .collect();
        let truth: Vec<f64> = v["true_derivative"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .collect();
        assert_eq!(d.len(), 21);
        assert!(truth.iter().all(|&t| t == 5.0));
        let mid = d[5..16].iter().sum::<f64>() / 11.0;
        assert!((mid - 5.0).abs() < 1.5, "{mid}");
        assert_eq!(v["sample_y"].as_array().unwrap().len(), 80);
    }

    #[test]
    fn test_histogram_counts_every_replicate() {
        let v = parse(&bootstrap_test_json(2, 1.0, 0.5, 40, 30, 0.1, 2, 8));
        let counts: usize = v["counts"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| c.as_u64().unwrap() as usize)
            .sum();
        assert_eq!(counts, 30);
        assert_eq!(v["bin_edges"].as_array().unwrap().len(), 9);
        assert_eq!(v["reject"], true);
    }
}
