//! The `ssanova` command-line tool.
//!
//! Every subcommand writes its results into `--out` (a directory, or a file
//! for `generate`). Structured results are JSON and bulk vectors are CSV.
//! On failure an `error.json` is written instead and the process exits
//! nonzero; see [`CliError::exit_code`].

pub mod args;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;
use ssanova::simlab::{err_experiment, replicate_dataset, rmse_experiment};
use ssanova::tuning::select_lambda_with_gram;
use ssanova::{
    bootstrap_test_suite, gram_matrix, interaction_directions, Dataset, DerivativeOrder, DgpSpec, ExperimentReport,
    ExperimentSettings, FittedModel, KernelSpec, SsAnovaKernel, TestConfig, TestOutcome, TuningGrid, TuningResult,
};

use crate::args::{
    BootstrapArgs, Cli, Command, DataArgs, FitArgs, GenerateArgs, GridArgs, LambdaArg, MetricArg, ModelArgs,
    SimulateArgs, Suite, TestArgs, TuneArgs,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    pub code: String,
    pub message: String,
}

impl CliError {
    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self {
            code: "io".into(),
            message: format!("{}: {e}", path.display()),
        }
    }

    /// Distinct nonzero exit status per error code.
    pub fn exit_code(&self) -> i32 {
        match self.code.as_str() {
            "degree_out_of_range" => 10,
            "domain" => 11,
            "unsupported_derivative_order" => 12,
            "shape" => 13,
            "parameter" => 14,
            "numerical" => 15,
            "degenerate_response" => 16,
            "ingestion" => 17,
            "io" => 18,
            _ => 1,
        }
    }
}

impl From<ssanova::Error> for CliError {
    fn from(e: ssanova::Error) -> Self {
        Self {
            code: e.code().into(),
            message: e.to_string(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

type CliResult<T> = Result<T, CliError>;

/// Runs a parsed command line. On error, `error.json` is written next to where
/// the results would have gone.
pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        // Only fails if a global pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let error_dir = match &cli.command {
        Command::Fit(a) => a.out.clone(),
        Command::Tune(a) => a.out.clone(),
        Command::Test(a) => a.out.clone(),
        Command::Simulate(a) => a.out.clone(),
        Command::Generate(a) => a.out.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let result = match cli.command {
        Command::Fit(a) => fit(&a),
        Command::Tune(a) => tune(&a),
        Command::Test(a) => test(&a),
        Command::Simulate(a) => simulate(&a),
        Command::Generate(a) => generate(&a),
    };
    if let Err(e) = &result {
        write_error(&error_dir, e);
    }
    result
}

fn write_error(dir: &Path, e: &CliError) {
    let target = if dir.as_os_str().is_empty() {
        PathBuf::from(".")
    } else {
        dir.to_path_buf()
    };
    if fs::create_dir_all(&target).is_ok() {
        if let Ok(json) = serde_json::to_string_pretty(e) {
            let _ = fs::write(target.join("error.json"), json + "\n");
        }
    }
}

#[derive(Debug, Serialize)]
struct DataSummary {
    input: String,
    response: String,
    covariates: Vec<String>,
    n: usize,
    r: usize,
    standardized: bool,
    scale: Option<Vec<f64>>,
}

impl DataSummary {
    fn of(data: &Dataset, args: &DataArgs) -> Self {
        Self {
            input: args.input.display().to_string(),
            response: args.response.clone(),
            covariates: data.names().to_vec(),
            n: data.n(),
            r: data.r(),
            standardized: args.standardize,
            scale: data.provenance().scale.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
struct FitReport {
    command: &'static str,
    data: DataSummary,
    kernel: KernelSpec,
    lambda: f64,
    lambda_source: &'static str,
    residual_norm: f64,
    coefficient_norm: f64,
    training_rmse: f64,
}

#[derive(Debug, Serialize)]
struct TuneReport {
    command: &'static str,
    data: DataSummary,
    kernel: KernelSpec,
    #[serde(flatten)]
    result: TuningResult,
}

#[derive(Debug, Serialize)]
struct TestReport {
    command: &'static str,
    data: DataSummary,
    kernel: KernelSpec,
    lambda: f64,
    lambda_source: &'static str,
    outcomes: Vec<TestOutcome>,
}

#[derive(Debug, Serialize)]
struct SimulateReport {
    command: &'static str,
    #[serde(flatten)]
    report: ExperimentReport,
}

/// Dataset, kernel and Gram matrix shared by the data-driven commands.
struct Prepared {
    data: Dataset,
    kernel: Arc<SsAnovaKernel>,
    gram: Arc<DMatrix<f64>>,
}

fn prepare(data_args: &DataArgs, model: &ModelArgs) -> CliResult<Prepared> {
    let data = Dataset::load_csv(&data_args.input, &data_args.response, data_args.standardize)?;
    let q = model.q.unwrap_or(data.r());
    let kernel = SsAnovaKernel::new(KernelSpec::new(model.m, q, data.r())?)?;
    let gram = gram_matrix(&kernel, &data)?;
    Ok(Prepared {
        data,
        kernel: Arc::new(kernel),
        gram: Arc::new(gram),
    })
}

fn grid(args: &GridArgs) -> CliResult<TuningGrid> {
    Ok(TuningGrid::log_spaced(args.grid_min, args.grid_max, args.grid_points)?)
}

fn resolve_lambda(p: &Prepared, lambda: LambdaArg, grid_args: &GridArgs) -> CliResult<(f64, &'static str)> {
    match lambda {
        LambdaArg::Fixed(v) => Ok((v, "fixed")),
        LambdaArg::Auto => {
            let tuned = select_lambda_with_gram(&p.gram, p.data.y(), &grid(grid_args)?)?;
            Ok((tuned.best_lambda, "auto"))
        }
    }
}

fn fit(a: &FitArgs) -> CliResult<()> {
    let p = prepare(&a.data, &a.model)?;
    let (lambda, source) = resolve_lambda(&p, a.lambda, &a.grid)?;
    let model = FittedModel::fit_with_gram(p.kernel.clone(), &p.data, p.gram.clone(), lambda)?;
    let mut sq = 0.0;
    for (x, y) in p.data.points().zip(p.data.y()) {
        sq += (model.predict(x)? - y).powi(2);
    }
    let report = FitReport {
        command: "fit",
        data: DataSummary::of(&p.data, &a.data),
        kernel: *p.kernel.spec(),
        lambda,
        lambda_source: source,
        residual_norm: model.residual_norm(),
        coefficient_norm: model.coeffs().norm(),
        training_rmse: (sq / p.data.n() as f64).sqrt(),
    };
    ensure_dir(&a.out)?;
    write_json(&a.out.join("fit.json"), &report)?;
    if let Some(k) = a.predict_grid {
        write_predictions(&a.out.join("predictions.csv"), &model, &p.data, k)?;
    }
    Ok(())
}

/// Profiles along each axis through the centre of the cube: the prediction and
/// the first derivative along that axis.
fn write_predictions(path: &Path, model: &FittedModel, data: &Dataset, k: usize) -> CliResult<()> {
    if k < 2 {
        return Err(ssanova::Error::Parameter("--predict-grid needs at least 2 points".into()).into());
    }
    let r = data.r();
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    let mut header = vec!["axis".to_string(), "t".to_string()];
    header.extend(data.names().iter().cloned());
    header.extend(["prediction".to_string(), "derivative".to_string()]);
    w.write_record(&header).map_err(|e| CliError::io(path, e))?;
    for axis in 0..r {
        let beta = DerivativeOrder::unit(r, axis);
        for i in 0..k {
            let t = i as f64 / (k - 1) as f64;
            let mut x = vec![0.5; r];
            x[axis] = t;
            let mut row = vec![data.names()[axis].clone(), t.to_string()];
            row.extend(x.iter().map(f64::to_string));
            row.push(model.predict(&x)?.to_string());
            let d = if beta.check(model.kernel().spec()).is_ok() {
                model.predict_derivative(&beta, &x)?.to_string()
            } else {
                String::new()
            };
            row.push(d);
            w.write_record(&row).map_err(|e| CliError::io(path, e))?;
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn tune(a: &TuneArgs) -> CliResult<()> {
    let p = prepare(&a.data, &a.model)?;
    let result = select_lambda_with_gram(&p.gram, p.data.y(), &grid(&a.grid)?)?;
    ensure_dir(&a.out)?;
    let csv_path = a.out.join("profile.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| CliError::io(&csv_path, e))?;
    w.write_record(["lambda", "log_likelihood"])
        .map_err(|e| CliError::io(&csv_path, e))?;
    for pt in &result.profile {
        w.write_record([pt.lambda.to_string(), pt.log_likelihood.to_string()])
            .map_err(|e| CliError::io(&csv_path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&csv_path, e))?;
    let report = TuneReport {
        command: "tune",
        data: DataSummary::of(&p.data, &a.data),
        kernel: *p.kernel.spec(),
        result,
    };
    write_json(&a.out.join("tune.json"), &report)
}

fn test_config(boot: &BootstrapArgs, beta: DerivativeOrder, default_replicates: usize) -> TestConfig {
    TestConfig {
        replicates: boot.bootstrap.unwrap_or(default_replicates),
        points: boot.points,
        alpha: boot.alpha,
        weights: boot.weights.into(),
        ..TestConfig::new(beta, boot.seed)
    }
}

fn test(a: &TestArgs) -> CliResult<()> {
    let p = prepare(&a.data, &a.model)?;
    let spec = *p.kernel.spec();
    let betas = match (&a.beta, a.suite) {
        (Some(beta), _) => vec![beta.clone()],
        (None, Some(Suite::Interactions)) => interaction_directions(&spec),
        (None, None) => unreachable!("clap requires --beta or --suite"),
    };
    let cfg = test_config(&a.boot, betas[0].clone(), 500);
    cfg.validate()?;
    for beta in &betas {
        beta.check(&spec)?;
    }
    let (lambda, source) = resolve_lambda(&p, a.lambda, &a.grid)?;
    let model = FittedModel::fit_with_gram(p.kernel.clone(), &p.data, p.gram.clone(), lambda)?;
    let outcomes = bootstrap_test_suite(&model, &betas, &cfg)?;

    ensure_dir(&a.out)?;
    let csv_path = a.out.join("bootstrap.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| CliError::io(&csv_path, e))?;
    w.write_record(["beta", "replicate", "phi_star"])
        .map_err(|e| CliError::io(&csv_path, e))?;
    for o in &outcomes {
        let label = o.beta.to_string();
        for (k, v) in o.boot.iter().enumerate() {
            w.write_record([label.clone(), (k + 1).to_string(), v.to_string()])
                .map_err(|e| CliError::io(&csv_path, e))?;
        }
    }
    w.flush().map_err(|e| CliError::io(&csv_path, e))?;

    let report = TestReport {
        command: "test",
        data: DataSummary::of(&p.data, &a.data),
        kernel: spec,
        lambda,
        lambda_source: source,
        outcomes,
    };
    write_json(&a.out.join("test.json"), &report)
}

fn dgp(a: &crate::args::DgpArgs) -> CliResult<DgpSpec> {
    Ok(DgpSpec::new(a.dgp, a.b, a.sigma, a.n)?)
}

fn simulate(a: &SimulateArgs) -> CliResult<()> {
    let spec = dgp(&a.dgp)?;
    let settings = ExperimentSettings {
        m: a.m,
        grid: grid(&a.grid)?,
    };
    let report = match a.metric {
        MetricArg::Rmse => rmse_experiment(&spec, a.replicates, a.boot.seed, &settings)?,
        MetricArg::Err => {
            let cfg = test_config(&a.boot, spec.direction(), 200);
            err_experiment(&spec, &cfg, a.replicates, &settings)?
        }
    };
    ensure_dir(&a.out)?;
    let csv_path = a.out.join("replicates.csv");
    let file = fs::File::create(&csv_path).map_err(|e| CliError::io(&csv_path, e))?;
    report.write_csv(file)?;
    write_json(
        &a.out.join("report.json"),
        &SimulateReport {
            command: "simulate",
            report,
        },
    )
}

fn generate(a: &GenerateArgs) -> CliResult<()> {
    let spec = dgp(&a.dgp)?;
    let data = replicate_dataset(&spec, a.seed)?;
    if let Some(parent) = a.out.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    let file = fs::File::create(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    Ok(data.write_csv(file)?)
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let json = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))?;
    fs::write(path, json + "\n").map_err(|e| CliError::io(path, e))
}
