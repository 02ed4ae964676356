//! Smoothing spline ANOVA kernel ridge regression.
//!
//! Covers the tensor-product Sobolev kernel on `[0, 1]^r` truncated at a
//! chosen interaction order, closed-form KRR fits with plug-in estimates of
//! mixed partial derivatives, λ selection by a pseudo marginal likelihood,
//! and a multiplier-bootstrap test of whether a partial derivative vanishes
//! identically.
//!
//! ```
//! use ssanova::{Dataset, DerivativeOrder, FittedModel, KernelSpec, SsAnovaKernel};
//!
//! let x = vec![0.1, 0.3, 0.5, 0.7, 0.9];
//! let y: Vec<f64> = x.iter().map(|v| v * v).collect();
//! let data = Dataset::new(1, x, y)?;
//! let kernel = SsAnovaKernel::new(KernelSpec::new(2, 1, 1)?)?;
//! let model = FittedModel::fit(&kernel, &data, 1e-6)?;
//! let slope = model.predict_derivative(&DerivativeOrder::unit(1, 0), &[0.5])?;
//! assert!((slope - 1.0).abs() < 0.1);
//! # Ok::<(), ssanova::Error>(())
//! ```

pub mod data;
pub mod error;
pub mod hypotest;
pub mod kernel;
pub mod krr;
pub mod rng;
pub mod simlab;
pub mod specialfn;
pub mod tuning;

pub use data::{Dataset, Provenance};
pub use error::{Error, Result};
pub use hypotest::{
    bootstrap_test, bootstrap_test_model, bootstrap_test_suite, interaction_directions, SamplingDensity, TestConfig,
    TestOutcome,
};
pub use kernel::{DerivativeOrder, KernelSpec, SsAnovaKernel};
pub use krr::{gram_matrix, BootstrapWeights, FittedModel, WeightFamily};
pub use simlab::{DgpSpec, ExperimentReport, ExperimentSettings, Metric};
pub use specialfn::BernoulliTable;
pub use tuning::{select_lambda, TuningGrid, TuningResult};
