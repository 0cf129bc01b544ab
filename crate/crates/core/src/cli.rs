//! Command-line workflows: fit, cv, forecast, evaluate, compare and simulate.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::benchmarks::{
    bgr_lambda_grid, BenchmarkKind, BgrForecaster, Criterion, FactorForecaster, IcForecaster, MeanForecaster,
    RandomWalkForecaster,
};
use crate::error::{Result, VarxError};
use crate::mcs::{mcs, LossMatrix, McsOptions, McsResult};
use crate::penalties::{PenaltyKind, PenaltyStructure};
use crate::simulation::{run_study, ScenarioConfig, StudyOptions, StudyReport};
use crate::solvers::{fit_with_partition, MinnesotaTarget};
use crate::validation::{
    evaluate, origin_design, rolling_cv, select_and_evaluate, selection_grid, split_indices, CvOptions, CvResult,
    EvaluationReport, Forecaster, PreparedData,
};
use crate::varx::{latest_regressors, CoefficientSet, MultivariateSeries, VarxSpec};

#[derive(Debug, Parser)]
#[command(name = "varxl", version, about = "Structured-penalty VARX estimation and forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select the penalty and report the coefficients fit on the training span.
    Fit(RunArgs),
    /// Report the rolling-origin penalty selection only.
    Cv(RunArgs),
    /// Forecast `h` steps past the end of the sample.
    Forecast(RunArgs),
    /// Out-of-sample evaluation of one structure.
    Evaluate(RunArgs),
    /// Evaluate several structures and benchmarks on shared origins.
    Compare(RunArgs),
    /// Run a replicated simulation study.
    Simulate(SimArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML file with run settings; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub endog: Option<PathBuf>,
    #[arg(long)]
    pub exog: Option<PathBuf>,
    /// basic, lag, own_other, sparse_lag, sparse_own_other, endo_first.
    #[arg(long)]
    pub structure: Option<String>,
    /// Comma-separated structures for `compare`.
    #[arg(long)]
    pub structures: Option<String>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub s: Option<usize>,
    #[arg(long)]
    pub h: Option<usize>,
    #[arg(long)]
    pub gridpoints: Option<usize>,
    #[arg(long = "grid-depth")]
    pub grid_depth: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Shrink toward a random walk instead of zero.
    #[arg(long)]
    pub minnesota: bool,
    /// Comma-separated benchmarks: mean, rw, aic, bic, bgr, factor.
    #[arg(long)]
    pub benchmarks: Option<String>,
    /// Report the model confidence set in `compare`.
    #[arg(long)]
    pub mcs: bool,
    #[arg(long = "mcs-alpha")]
    pub mcs_alpha: Option<f64>,
    #[arg(long = "n-boot")]
    pub n_boot: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON output path; JSON goes to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SimArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub scenario: Option<u8>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// CSV file holding a (k+m) x (k+m) noise covariance without header.
    #[arg(long = "noise-cov")]
    pub noise_cov: Option<PathBuf>,
}

/// Settings shared by every command, read from a config file and flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub endog_path: Option<PathBuf>,
    pub exog_path: Option<PathBuf>,
    pub structure: String,
    pub structures: Vec<String>,
    pub p: usize,
    /// Defaults to `p` with exogenous data and 0 without.
    pub s: Option<usize>,
    pub h: usize,
    pub gridpoints: usize,
    pub grid_depth: f64,
    pub alpha: Option<f64>,
    pub minnesota: bool,
    pub benchmarks: Vec<String>,
    pub mcs: bool,
    pub mcs_alpha: f64,
    pub n_boot: usize,
    pub seed: u64,
    pub output_path: Option<PathBuf>,
    pub scenario: Option<u8>,
    pub reps: Option<usize>,
    pub noise_cov_path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            endog_path: None,
            exog_path: None,
            structure: PenaltyKind::Basic.name().to_string(),
            structures: PenaltyKind::ALL.iter().map(|k| k.name().to_string()).collect(),
            p: 4,
            s: None,
            h: 1,
            gridpoints: 10,
            grid_depth: 25.0,
            alpha: None,
            minnesota: false,
            benchmarks: ["mean", "rw", "aic", "bic", "bgr"].iter().map(|s| s.to_string()).collect(),
            mcs: false,
            mcs_alpha: 0.15,
            n_boot: 5000,
            seed: 0,
            output_path: None,
            scenario: None,
            reps: None,
            noise_cov_path: None,
        }
    }
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect()
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| VarxError::Invalid(format!("config: {e}")))
    }

    /// Loads the config file named in `args`, if any, and applies the flags on top.
    pub fn resolve(args: &RunArgs) -> Result<Self> {
        let mut cfg = match &args.config {
            Some(path) => Self::from_toml(&fs::read_to_string(path)?)?,
            None => Self::default(),
        };
        if let Some(v) = &args.endog {
            cfg.endog_path = Some(v.clone());
        }
        if let Some(v) = &args.exog {
            cfg.exog_path = Some(v.clone());
        }
        if let Some(v) = &args.structure {
            cfg.structure = v.clone();
        }
        if let Some(v) = &args.structures {
            cfg.structures = split_list(v);
        }
        if let Some(v) = args.p {
            cfg.p = v;
        }
        if args.s.is_some() {
            cfg.s = args.s;
        }
        if let Some(v) = args.h {
            cfg.h = v;
        }
        if let Some(v) = args.gridpoints {
            cfg.gridpoints = v;
        }
        if let Some(v) = args.grid_depth {
            cfg.grid_depth = v;
        }
        if args.alpha.is_some() {
            cfg.alpha = args.alpha;
        }
        cfg.minnesota |= args.minnesota;
        if let Some(v) = &args.benchmarks {
            cfg.benchmarks = split_list(v);
        }
        cfg.mcs |= args.mcs;
        if let Some(v) = args.mcs_alpha {
            cfg.mcs_alpha = v;
        }
        if let Some(v) = args.n_boot {
            cfg.n_boot = v;
        }
        if let Some(v) = args.seed {
            cfg.seed = v;
        }
        if let Some(v) = &args.out {
            cfg.output_path = Some(v.clone());
        }
        Ok(cfg)
    }

    fn resolve_sim(args: &SimArgs) -> Result<Self> {
        let mut cfg = Self::resolve(&args.run)?;
        if args.scenario.is_some() {
            cfg.scenario = args.scenario;
        }
        if args.reps.is_some() {
            cfg.reps = args.reps;
        }
        if let Some(v) = &args.noise_cov {
            cfg.noise_cov_path = Some(v.clone());
        }
        Ok(cfg)
    }

    fn structure_for(&self, name: &str, k: usize) -> Result<PenaltyStructure> {
        let kind: PenaltyKind = name.parse()?;
        match self.alpha {
            Some(a) if kind.is_sparse_group() => PenaltyStructure::new(kind, a),
            _ => Ok(PenaltyStructure::with_default_alpha(kind, k)),
        }
    }

    fn benchmark_kinds(&self) -> Result<Vec<BenchmarkKind>> {
        self.benchmarks.iter().map(|b| b.parse()).collect()
    }
}

/// Loaded series with the spec implied by the config.
struct Inputs {
    endog: MultivariateSeries,
    exog: Option<MultivariateSeries>,
    spec: VarxSpec,
}

impl Inputs {
    fn load(cfg: &RunConfig) -> Result<Self> {
        let path = cfg
            .endog_path
            .as_ref()
            .ok_or_else(|| VarxError::Invalid("an endogenous data file is required (--endog)".into()))?;
        let endog = MultivariateSeries::from_csv_path(path)?;
        let exog = cfg.exog_path.as_ref().map(MultivariateSeries::from_csv_path).transpose()?;
        let s = match (cfg.s, &exog) {
            (Some(s), None) if s > 0 => {
                return Err(VarxError::Invalid("exogenous lag order requires exogenous data".into()));
            }
            (Some(s), _) => s,
            (None, Some(_)) => cfg.p,
            (None, None) => 0,
        };
        if let Some(x) = &exog {
            if x.len() != endog.len() {
                return Err(VarxError::Dimension(format!(
                    "endogenous data has {} rows, exogenous data has {}",
                    endog.len(),
                    x.len()
                )));
            }
        }
        let m = if s > 0 { exog.as_ref().map_or(0, |x| x.dim()) } else { 0 };
        let exog = if m > 0 { exog } else { None };
        let spec = VarxSpec::new(endog.dim(), m, cfg.p, s, cfg.h)?;
        Ok(Self { endog, exog, spec })
    }

    /// Standardized data, or raw data when shrinking toward a random walk.
    fn prepared(&self, cfg: &RunConfig) -> Result<PreparedData> {
        if cfg.minnesota {
            Ok(PreparedData::raw(&self.endog, self.exog.as_ref()))
        } else {
            PreparedData::standardized(&self.endog, self.exog.as_ref())
        }
    }

    fn cv_options(&self, cfg: &RunConfig) -> CvOptions {
        CvOptions {
            minnesota: cfg.minnesota.then(|| MinnesotaTarget::random_walk(&self.spec)),
            ..CvOptions::default()
        }
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[derive(Debug, Serialize)]
struct SpecReport {
    k: usize,
    m: usize,
    p: usize,
    s: usize,
    h: usize,
}

impl From<&VarxSpec> for SpecReport {
    fn from(s: &VarxSpec) -> Self {
        Self {
            k: s.k,
            m: s.m,
            p: s.p,
            s: s.s,
            h: s.h,
        }
    }
}

#[derive(Debug, Serialize)]
struct CoefficientReport {
    /// Scale the coefficients apply to.
    scale: &'static str,
    nu: Vec<f64>,
    phi: Vec<Vec<f64>>,
    beta: Vec<Vec<f64>>,
}

impl CoefficientReport {
    fn new(c: &CoefficientSet, standardized: bool) -> Self {
        Self {
            scale: if standardized { "standardized" } else { "original" },
            nu: c.nu.iter().copied().collect(),
            phi: rows(&c.phi),
            beta: rows(&c.beta),
        }
    }
}

#[derive(Debug, Serialize)]
struct FitReport {
    structure: String,
    alpha: f64,
    spec: SpecReport,
    labels: Vec<String>,
    lambda_hat: f64,
    lambda_index: usize,
    grid: Vec<f64>,
    msfe_curve: Vec<Option<f64>>,
    training_rows: usize,
    coefficients: CoefficientReport,
    sparsity_ratio: f64,
    converged: bool,
    means: Option<Vec<f64>>,
    sds: Option<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct ForecastReport {
    structure: String,
    spec: SpecReport,
    labels: Vec<String>,
    lambda_hat: f64,
    origin_rows: usize,
    forecast: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct CompareReport {
    spec: SpecReport,
    models: Vec<EvaluationReport>,
    mcs: Option<McsResult>,
}

fn select(cfg: &RunConfig, inputs: &Inputs, prepared: &PreparedData) -> Result<(PenaltyStructure, CvResult)> {
    let structure = cfg.structure_for(&cfg.structure, inputs.spec.k)?;
    let opts = inputs.cv_options(cfg);
    let grid = selection_grid(prepared, &inputs.spec, &structure, opts.minnesota.as_ref(), cfg.gridpoints, cfg.grid_depth)?;
    let cv = rolling_cv(&prepared.endog, prepared.exog.as_ref(), &inputs.spec, &structure, &grid, &opts)?;
    Ok((structure, cv))
}

/// Fits at `lambda` on the first `t` rows of the prepared data.
fn fit_through(
    inputs: &Inputs,
    prepared: &PreparedData,
    structure: &PenaltyStructure,
    opts: &CvOptions,
    lambda: f64,
    t: usize,
) -> Result<crate::solvers::FitResult> {
    let spec = &inputs.spec;
    let target = opts.minnesota.as_ref().map(|m| m.b());
    let design = origin_design(&prepared.endog, prepared.exog.as_ref(), spec, t, target.as_ref())?;
    let partition = crate::penalties::group_partition(spec, structure)?;
    match target {
        None => fit_with_partition(&design, spec, structure, &partition, lambda, &opts.solver),
        Some(c) => crate::solvers::fit_design_with_target(&design, spec, structure, lambda, &c, &opts.solver),
    }
}

fn cmd_fit(cfg: &RunConfig) -> Result<(String, String)> {
    let inputs = Inputs::load(cfg)?;
    let prepared = inputs.prepared(cfg)?;
    let (structure, cv) = select(cfg, &inputs, &prepared)?;
    let (_, t2) = split_indices(prepared.endog.nrows(), inputs.spec.h)?;
    let fit = fit_through(&inputs, &prepared, &structure, &inputs.cv_options(cfg), cv.lambda_hat, t2)?;
    let report = FitReport {
        structure: structure.kind.name().to_string(),
        alpha: structure.alpha,
        spec: (&inputs.spec).into(),
        labels: inputs.endog.labels().to_vec(),
        lambda_hat: cv.lambda_hat,
        lambda_index: cv.lambda_index,
        grid: cv.grid.clone(),
        msfe_curve: cv.msfe_curve.clone(),
        training_rows: t2,
        coefficients: CoefficientReport::new(&fit.coeffs, prepared.scale.is_some()),
        sparsity_ratio: fit.sparsity_ratio,
        converged: fit.converged,
        means: prepared.scale.as_ref().map(|(m, _)| m.iter().copied().collect()),
        sds: prepared.scale.as_ref().map(|(_, s)| s.iter().copied().collect()),
    };
    let table = format!(
        "structure {}  lambda {:.6e} (grid index {})  sparsity {:.3}\n",
        report.structure, report.lambda_hat, report.lambda_index, report.sparsity_ratio
    );
    Ok((to_json(&report)?, table))
}

fn cmd_cv(cfg: &RunConfig) -> Result<(String, String)> {
    let inputs = Inputs::load(cfg)?;
    let prepared = inputs.prepared(cfg)?;
    let (structure, cv) = select(cfg, &inputs, &prepared)?;
    let mut table = format!("structure {}\n{:>14} {:>12}\n", structure.kind.name(), "lambda", "msfe");
    for (l, v) in cv.grid.iter().zip(&cv.msfe_curve) {
        let v = v.map_or("failed".to_string(), |v| format!("{v:.6}"));
        table.push_str(&format!("{l:>14.6e} {v:>12}\n"));
    }
    Ok((to_json(&cv)?, table))
}

fn cmd_forecast(cfg: &RunConfig) -> Result<(String, String)> {
    let inputs = Inputs::load(cfg)?;
    let prepared = inputs.prepared(cfg)?;
    let (structure, cv) = select(cfg, &inputs, &prepared)?;
    let t = prepared.endog.nrows();
    let fit = fit_through(&inputs, &prepared, &structure, &inputs.cv_options(cfg), cv.lambda_hat, t)?;
    let z = latest_regressors(&prepared.endog, prepared.exog.as_ref(), inputs.spec.p, inputs.spec.s)?;
    let value: DVector<f64> = &fit.coeffs.nu + fit.coeffs.b() * z;
    let value = prepared.unscale(value);
    let labels = inputs.endog.labels().to_vec();
    let report = ForecastReport {
        structure: structure.kind.name().to_string(),
        spec: (&inputs.spec).into(),
        labels: labels.clone(),
        lambda_hat: cv.lambda_hat,
        origin_rows: t,
        forecast: value.iter().copied().collect(),
    };
    let mut table = format!("{}-step forecast ({})\n", inputs.spec.h, report.structure);
    for (l, v) in labels.iter().zip(value.iter()) {
        table.push_str(&format!("{l:<16} {v:>14.6}\n"));
    }
    Ok((to_json(&report)?, table))
}

fn cmd_evaluate(cfg: &RunConfig) -> Result<(String, String)> {
    let inputs = Inputs::load(cfg)?;
    let prepared = inputs.prepared(cfg)?;
    let structure = cfg.structure_for(&cfg.structure, inputs.spec.k)?;
    let run = select_and_evaluate(
        &prepared,
        inputs.endog.values(),
        &inputs.spec,
        &structure,
        cfg.gridpoints,
        cfg.grid_depth,
        &inputs.cv_options(cfg),
    )?;
    let table = format!(
        "structure {}  lambda {:.6e}  msfe {:.6}  sparsity {}\n",
        run.structure,
        run.cv.lambda_hat,
        run.report.msfe,
        run.report.sparsity_ratio_avg.map_or("-".to_string(), |v| format!("{v:.3}"))
    );
    Ok((to_json(&run)?, table))
}

fn benchmark(kind: BenchmarkKind, data: &PreparedData, spec: &VarxSpec) -> Result<Box<dyn Forecaster>> {
    let h = spec.h;
    Ok(match kind {
        BenchmarkKind::Mean => Box::new(MeanForecaster::new(data)),
        BenchmarkKind::Rw => Box::new(RandomWalkForecaster::new(data)),
        BenchmarkKind::Aic => Box::new(IcForecaster::new(data, spec.p, spec.s, h, Criterion::Aic)),
        BenchmarkKind::Bic => Box::new(IcForecaster::new(data, spec.p, spec.s, h, Criterion::Bic)),
        BenchmarkKind::Bgr => Box::new(BgrForecaster::new(data, spec.p, h, 0.0, &bgr_lambda_grid())?),
        BenchmarkKind::Factor => Box::new(FactorForecaster::new(data, spec.p, h, 0.95)),
    })
}

fn cmd_compare(cfg: &RunConfig) -> Result<(String, String)> {
    let inputs = Inputs::load(cfg)?;
    let prepared = inputs.prepared(cfg)?;
    let truth = inputs.endog.values();
    let opts = inputs.cv_options(cfg);
    let benchmarks = cfg.benchmark_kinds()?;
    if cfg.structures.len() + benchmarks.len() == 0 {
        return Err(VarxError::Invalid("no models to compare".into()));
    }
    let mut models = Vec::new();
    for name in &cfg.structures {
        let structure = cfg.structure_for(name, inputs.spec.k)?;
        let run =
            select_and_evaluate(&prepared, truth, &inputs.spec, &structure, cfg.gridpoints, cfg.grid_depth, &opts)?;
        models.push(run.report);
    }
    for &b in &benchmarks {
        let mut f = benchmark(b, &prepared, &inputs.spec)?;
        models.push(evaluate(truth, f.as_mut(), inputs.spec.h)?);
    }
    let baseline = match models.iter().find(|m| m.model == BenchmarkKind::Mean.name()) {
        Some(m) => m.clone(),
        None => evaluate(truth, &mut MeanForecaster::new(&prepared), inputs.spec.h)?,
    };
    models.iter_mut().for_each(|m| m.relative_to(&baseline));
    let mcs = if cfg.mcs {
        let loss = LossMatrix::from_rows(&models.iter().map(|m| (m.model.clone(), m.per_period_sse.clone())).collect::<Vec<_>>())?;
        let opts = McsOptions {
            alpha: cfg.mcs_alpha,
            n_boot: cfg.n_boot,
            block_len: None,
            seed: cfg.seed,
        };
        Some(mcs(&loss, &opts)?)
    } else {
        None
    };
    let mut table = format!("{:<18} {:>12} {:>10} {:>10}\n", "model", "msfe", "relative", "sparsity");
    for m in &models {
        table.push_str(&format!(
            "{:<18} {:>12.6} {:>10} {:>10}\n",
            m.model,
            m.msfe,
            m.msfe_relative.map_or("-".to_string(), |v| format!("{v:.4}")),
            m.sparsity_ratio_avg.map_or("-".to_string(), |v| format!("{v:.3}"))
        ));
    }
    if let Some(r) = &mcs {
        table.push_str(&format!("model confidence set: {}\n", r.survivors.join(", ")));
    }
    let report = CompareReport {
        spec: (&inputs.spec).into(),
        models,
        mcs,
    };
    Ok((to_json(&report)?, table))
}

fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
    let mut data: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|v| v.parse::<f64>().map_err(|_| VarxError::Invalid(format!("`{v}` is not a number"))))
            .collect::<Result<Vec<f64>>>()?;
        data.push(row);
    }
    let n = data.first().map_or(0, Vec::len);
    if data.is_empty() || data.iter().any(|r| r.len() != n) {
        return Err(VarxError::Invalid("covariance file must be a rectangular numeric table".into()));
    }
    Ok(DMatrix::from_fn(data.len(), n, |i, j| data[i][j]))
}

fn cmd_simulate(cfg: &RunConfig) -> Result<(String, String)> {
    let id = cfg.scenario.ok_or_else(|| VarxError::Invalid("a scenario id is required (--scenario)".into()))?;
    let mut config = ScenarioConfig::new(id, cfg.seed)?;
    if let Some(r) = cfg.reps {
        config.n_reps = r;
    }
    if let Some(path) = &cfg.noise_cov_path {
        config = config.with_noise_cov(read_matrix_csv(path)?)?;
    }
    let mut opts = StudyOptions::full(config.k);
    opts.structures = cfg
        .structures
        .iter()
        .map(|n| cfg.structure_for(n, config.k))
        .collect::<Result<_>>()?;
    opts.benchmarks = cfg.benchmark_kinds()?;
    opts.n_points = cfg.gridpoints;
    opts.depth = cfg.grid_depth;
    let report: StudyReport = run_study(&config, &opts)?;
    Ok((to_json(&report)?, report.to_table()))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| VarxError::Invalid(format!("cannot serialize report: {e}")))
}

/// Runs the parsed command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let outcome = (|| -> Result<(RunConfig, (String, String))> {
        let cfg = match &cli.command {
            Command::Simulate(a) => RunConfig::resolve_sim(a)?,
            Command::Fit(a) | Command::Cv(a) | Command::Forecast(a) | Command::Evaluate(a) | Command::Compare(a) => {
                RunConfig::resolve(a)?
            }
        };
        let out = match &cli.command {
            Command::Fit(_) => cmd_fit(&cfg)?,
            Command::Cv(_) => cmd_cv(&cfg)?,
            Command::Forecast(_) => cmd_forecast(&cfg)?,
            Command::Evaluate(_) => cmd_evaluate(&cfg)?,
            Command::Compare(_) => cmd_compare(&cfg)?,
            Command::Simulate(_) => cmd_simulate(&cfg)?,
        };
        Ok((cfg, out))
    })()
    .and_then(|(cfg, (json, table))| {
        match &cfg.output_path {
            Some(path) => {
                fs::write(path, &json)?;
                print!("{table}");
            }
            None => {
                std::io::stdout().write_all(json.as_bytes())?;
                eprint!("{table}");
            }
        }
        Ok(())
    });
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                2
            } else {
                3
            }
        }
    }
}
