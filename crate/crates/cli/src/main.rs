//! `rmst-eval`: simulate survival data, score RMST predictors, build
//! conformal intervals and run leave-one-covariate-out tests.
//!
//! Every command except `simulate` prints a JSON report (or writes it to
//! `--out`). Exit code 0 on success, 2 on usage errors, 1 when the
//! computation fails.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{Serialize, Serializer};
use serde_json::{json, Value};
use thiserror::Error;

use rmst_core::conformal::{coverage_eval, roo_conformal, split_conformal, ConformalOptions};
use rmst_core::io::{emit_report, read_csv, write_csv, Report};
use rmst_core::loco::{
    global_test_with_censoring, local_importance, multisplit, Aggregation, GlobalTestOptions,
    LocoPair, MultisplitOptions, VarianceForm,
};
use rmst_core::scoring::{cross_validated_wrss, holdout_wrss};
use rmst_core::sim::{Scheme, SchemeConfig, SimulatedSample};
use rmst_core::{
    kaplan_meier, rng, CensoringFit, CensoringKind, Learner, ModelKind, SurvivalDataset, Target,
    TimeHorizon,
};

#[derive(Debug, Error)]
enum Failure {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        source: rmst_core::Error,
    },
    #[error(transparent)]
    Compute(#[from] rmst_core::Error),
}

fn load_csv(path: &Path) -> Result<SurvivalDataset> {
    read_csv(path).map_err(|source| Failure::File {
        path: path.to_path_buf(),
        source,
    })
}

type Result<T> = std::result::Result<T, Failure>;

#[derive(Parser)]
#[command(name = "rmst-eval", version, about = "Evaluation of RMST predictors under right censoring")]
struct Cli {
    /// Worker threads (default: all cores)
    #[arg(long, global = true, env = "RMST_EVAL_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a sample from a simulation scheme and write it as CSV
    Simulate(SimulateArgs),
    /// Cross-validated or hold-out WRSS of a model
    Evaluate(EvaluateArgs),
    /// Conformal prediction intervals
    #[command(subcommand)]
    Conformal(ConformalCommand),
    /// Leave-one-covariate-out inference
    #[command(subcommand)]
    Loco(LocoCommand),
    /// Global LOCO tests aggregated over random splits
    Multisplit(MultisplitArgs),
}

#[derive(Subcommand)]
enum ConformalCommand {
    /// Split conformal intervals for a test set
    Split(ConformalArgs),
    /// In-sample rank-one-out intervals
    Roo(ConformalArgs),
}

#[derive(Subcommand)]
enum LocoCommand {
    /// Censoring-adjusted sign test for each covariate group
    Global(LocoArgs),
    /// Local importance intervals over conformal prediction sets
    Local(LocoArgs),
}

#[derive(Args, Serialize)]
struct Source {
    /// Dataset CSV with header `time,status,z1,...` (status 1 = event)
    #[arg(long, conflicts_with = "scheme", required_unless_present = "scheme")]
    data: Option<PathBuf>,
    /// Simulate the data from scheme A1, A2, B or C instead
    #[arg(long)]
    scheme: Option<Scheme>,
    /// Sample size when simulating
    #[arg(long, default_value_t = 1000, requires = "scheme")]
    n: usize,
}

#[derive(Args, Serialize)]
struct Common {
    #[command(flatten)]
    #[serde(flatten)]
    source: Source,
    /// RMST model: km, cox or pseudo-lm
    #[arg(long, default_value = "cox")]
    model: ModelKind,
    /// Horizon: `auto90` (90th percentile of observed times) or a number
    #[arg(long, default_value = "auto90")]
    tau: TauArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report path (default: stdout)
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    scheme: Scheme,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV path; a JSON summary goes to stdout
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct EvaluateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    /// Censoring model for the weights: km or cox
    #[arg(long, default_value = "km")]
    censoring: CensoringKind,
    /// Fit the censoring model on all data (pooled) or per part (split)
    #[arg(long, default_value = "pooled")]
    censoring_fit: CensoringFit,
    #[arg(long, default_value_t = 10, conflicts_with_all = ["test", "holdout"])]
    folds: usize,
    /// Score on this CSV instead of cross-validating
    #[arg(long, conflicts_with = "holdout")]
    test: Option<PathBuf>,
    /// Score on a random hold-out fraction instead of cross-validating
    #[arg(long)]
    holdout: Option<f64>,
}

#[derive(Args, Serialize)]
struct ConformalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    #[arg(long, default_value = "km")]
    censoring: CensoringKind,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Share of the training data used to fit the model (split only)
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    /// Break residual ties with a tiny seeded perturbation
    #[arg(long)]
    jitter: bool,
    /// Test set CSV (split only)
    #[arg(long, conflicts_with = "holdout")]
    test: Option<PathBuf>,
    /// Random hold-out fraction used as test set (split only)
    #[arg(long)]
    holdout: Option<f64>,
}

#[derive(Args, Serialize)]
struct LocoArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    /// 1-based covariates; `,` separates tests, `+` joins a group (e.g. 1,2+3)
    #[arg(long)]
    vars: VarGroups,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Share of the data used to fit the models
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    /// Randomize the sign of exact zero differences (global test)
    #[arg(long)]
    jitter: bool,
    /// Variance estimator: plug-in or printed
    #[arg(long, default_value = "plug-in")]
    variance: VarianceForm,
    /// Censoring curve from the evaluation part (split) or all data (pooled)
    #[arg(long, default_value = "split")]
    censoring_fit: CensoringFit,
    /// Censoring model for the conformal weights (local)
    #[arg(long, default_value = "km")]
    censoring: CensoringKind,
    /// Evaluation CSV; the models are then fitted on all of the data
    #[arg(long)]
    test: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct MultisplitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    /// 1-based covariate groups (default: every covariate on its own)
    #[arg(long)]
    vars: Option<VarGroups>,
    #[arg(long, default_value_t = 50)]
    splits: usize,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long)]
    jitter: bool,
    #[arg(long, default_value = "plug-in")]
    variance: VarianceForm,
    /// Aggregation of split p-values: median or mean
    #[arg(long, default_value = "median")]
    aggregation: Aggregation,
    #[arg(long, default_value = "split")]
    censoring_fit: CensoringFit,
}

#[derive(Debug, Clone, Copy)]
enum TauArg {
    Auto90,
    Value(f64),
}

impl FromStr for TauArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto90" {
            return Ok(TauArg::Auto90);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() && v > 0.0 => Ok(TauArg::Value(v)),
            _ => Err(format!("expected 'auto90' or a positive number, got '{s}'")),
        }
    }
}

impl fmt::Display for TauArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TauArg::Auto90 => f.write_str("auto90"),
            TauArg::Value(v) => write!(f, "{v:?}"),
        }
    }
}

impl Serialize for TauArg {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Covariate groups, stored 1-based as given on the command line.
#[derive(Debug, Clone, Serialize)]
#[serde(transparent)]
struct VarGroups(Vec<Vec<usize>>);

impl FromStr for VarGroups {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let groups = s
            .split(',')
            .map(|g| {
                g.split('+')
                    .map(|v| match v.trim().parse::<usize>() {
                        Ok(k) if k >= 1 => Ok(k),
                        _ => Err(format!("'{v}' is not a 1-based covariate index")),
                    })
                    .collect::<std::result::Result<Vec<usize>, String>>()
            })
            .collect::<std::result::Result<Vec<_>, String>>()?;
        Ok(VarGroups(groups))
    }
}

impl VarGroups {
    fn zero_based(&self, dim: usize) -> Result<Vec<Vec<usize>>> {
        self.0
            .iter()
            .map(|g| {
                g.iter()
                    .map(|&k| {
                        if k > dim {
                            Err(Failure::Usage(format!("covariate {k} out of range 1..={dim}")))
                        } else {
                            Ok(k - 1)
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

struct Loaded {
    data: SurvivalDataset,
    sample: Option<SimulatedSample>,
}

impl Source {
    fn load(&self, seed: u64) -> Result<Loaded> {
        match (&self.data, self.scheme) {
            (Some(path), _) => Ok(Loaded {
                data: load_csv(path)?,
                sample: None,
            }),
            (None, Some(scheme)) => {
                let sample = SchemeConfig::from(scheme).generate(self.n, seed)?;
                Ok(Loaded {
                    data: sample.dataset.clone(),
                    sample: Some(sample),
                })
            }
            (None, None) => Err(Failure::Usage("one of --data or --scheme is required".into())),
        }
    }
}

impl Common {
    fn load(&self) -> Result<Loaded> {
        self.source.load(self.seed)
    }

    fn horizon(&self, data: &SurvivalDataset) -> Result<TimeHorizon> {
        let tau = match self.tau {
            TauArg::Auto90 => TimeHorizon::from_quantile(data, 0.9)?,
            TauArg::Value(v) => TimeHorizon::new(v)?,
        };
        Ok(tau.check_against(data)?)
    }

    /// Seed of the procedure, kept apart from the one that simulates data.
    fn procedure_seed(&self) -> u64 {
        rng::derive_seed(self.seed, 1)
    }
}

fn params<T: Serialize>(args: &T, tau: TimeHorizon) -> Result<Value> {
    let mut value = serde_json::to_value(args).map_err(rmst_core::Error::from)?;
    value["tau_value"] = json!(tau.value());
    Ok(value)
}

fn check_fraction(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Failure::Usage(format!("--{name} must lie in (0, 1), got {value}")))
    }
}

/// Random train/test partition with `holdout` of the rows in the test part.
fn holdout_split(
    loaded: &Loaded,
    holdout: f64,
    seed: u64,
) -> Result<(SurvivalDataset, SurvivalDataset, Vec<usize>)> {
    check_fraction("holdout", holdout)?;
    let n = loaded.data.len();
    let n_test = (holdout * n as f64).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(Failure::Usage(format!("--holdout {holdout} leaves an empty part of {n} rows")));
    }
    let (train, test) = rng::split_indices(n, n - n_test, seed, 0);
    Ok((loaded.data.subset(&train), loaded.data.subset(&test), test))
}

fn simulate(args: &SimulateArgs) -> Result<Report> {
    let sample = SchemeConfig::from(args.scheme).generate(args.n, args.seed)?;
    write_csv(&sample.dataset, &args.out)?;
    let results = json!({
        "rows": sample.dataset.len(),
        "dim": sample.dataset.dim(),
        "censored_fraction": sample.dataset.censored_fraction(),
        "tau": sample.tau.value(),
    });
    let params = serde_json::to_value(args).map_err(rmst_core::Error::from)?;
    Ok(Report::new("simulate", args.seed, params, results))
}

fn evaluate(args: &EvaluateArgs) -> Result<Report> {
    let c = &args.common;
    let loaded = c.load()?;
    let seed = c.procedure_seed();
    let (report, tau) = if args.test.is_some() || args.holdout.is_some() {
        let (train, test) = match (&args.test, args.holdout) {
            (Some(path), _) => (loaded.data.clone(), load_csv(path)?),
            (None, Some(h)) => {
                let (train, test, _) = holdout_split(&loaded, h, rng::derive_seed(c.seed, 2))?;
                (train, test)
            }
            (None, None) => unreachable!(),
        };
        let tau = c.horizon(&train)?;
        let model = c.model.fit(&train, tau, &vec![true; train.dim()])?;
        let report = holdout_wrss(&train, &test, model.as_ref(), args.censoring, args.censoring_fit, tau)?;
        (report, tau)
    } else {
        let tau = c.horizon(&loaded.data)?;
        let report = cross_validated_wrss(
            &loaded.data,
            &c.model,
            args.censoring,
            tau,
            args.folds,
            seed,
            args.censoring_fit,
        )?;
        (report, tau)
    };
    let results = serde_json::to_value(&report).map_err(rmst_core::Error::from)?;
    Ok(Report::new("evaluate", c.seed, params(args, tau)?, results))
}

fn interval_json(i: &rmst_core::conformal::PredictionInterval) -> Value {
    json!({ "center": i.center, "lower": i.lower(), "upper": i.upper() })
}

fn conformal(command: &ConformalCommand) -> Result<Report> {
    let (name, args) = match command {
        ConformalCommand::Split(a) => ("conformal-split", a),
        ConformalCommand::Roo(a) => ("conformal-roo", a),
    };
    let c = &args.common;
    check_fraction("alpha", args.alpha)?;
    check_fraction("rho", args.rho)?;
    let options = ConformalOptions {
        alpha: args.alpha,
        rho: args.rho,
        tie_jitter: args.jitter,
    };
    let loaded = c.load()?;
    let seed = c.procedure_seed();
    let mut results = serde_json::Map::new();
    let tau;
    match command {
        ConformalCommand::Split(_) => {
            let (train, test, test_rows) = match (&args.test, args.holdout) {
                (Some(path), _) => (loaded.data.clone(), load_csv(path)?, None),
                (None, Some(h)) => {
                    let (train, test, rows) = holdout_split(&loaded, h, rng::derive_seed(c.seed, 2))?;
                    (train, test, Some(rows))
                }
                (None, None) => {
                    return Err(Failure::Usage(
                        "conformal split needs --test or --holdout".into(),
                    ))
                }
            };
            tau = c.horizon(&train)?;
            let fit = split_conformal(&train, &c.model, args.censoring, tau, &options, seed)?;
            let intervals = fit.intervals(&test)?;
            if let (Some(sample), Some(rows)) = (&loaded.sample, &test_rows) {
                let truths: Vec<f64> = rows.iter().map(|&i| sample.event_times[i].min(tau.value())).collect();
                results.insert("latent_coverage".into(), json!(coverage_eval(&intervals, &truths)?));
            }
            results.insert("q_hat".into(), json!(fit.q_hat()));
            results.insert("n_fit".into(), json!(fit.fit_indices().len()));
            results.insert("n_calibration".into(), json!(fit.calibration_indices().len()));
            results.insert("intervals".into(), intervals.iter().map(interval_json).collect());
        }
        ConformalCommand::Roo(_) => {
            if args.test.is_some() || args.holdout.is_some() {
                return Err(Failure::Usage(
                    "conformal roo is in-sample and takes no --test or --holdout".into(),
                ));
            }
            tau = c.horizon(&loaded.data)?;
            let intervals = roo_conformal(&loaded.data, &c.model, args.censoring, tau, &options, seed)?;
            if let Some(sample) = &loaded.sample {
                let truths = sample.restricted_event_times(tau);
                results.insert("latent_coverage".into(), json!(coverage_eval(&intervals, &truths)?));
            }
            results.insert("intervals".into(), intervals.iter().map(interval_json).collect());
        }
    }
    Ok(Report::new(name, c.seed, params(args, tau)?, Value::Object(results)))
}

/// Fitting and evaluation parts: all data and `--test`, or a seeded split.
fn loco_parts(args: &LocoArgs, loaded: &Loaded) -> Result<(SurvivalDataset, SurvivalDataset)> {
    match &args.test {
        Some(path) => Ok((loaded.data.clone(), load_csv(path)?)),
        None => {
            let n = loaded.data.len();
            let n1 = (args.rho * n as f64).floor() as usize;
            let (i1, i2) = rng::split_indices(n, n1, args.common.procedure_seed(), 0);
            Ok((loaded.data.subset(&i1), loaded.data.subset(&i2)))
        }
    }
}

fn loco_global(args: &LocoArgs, loaded: &Loaded, groups: &[Vec<usize>]) -> Result<(Value, TimeHorizon)> {
    let c = &args.common;
    let (d1, d2) = loco_parts(args, loaded)?;
    let tau = c.horizon(&d1)?;
    let options = GlobalTestOptions {
        alpha: args.alpha,
        jitter: args.jitter,
        variance: args.variance,
    };
    let censoring = match args.censoring_fit {
        CensoringFit::Split => kaplan_meier(&d2, Target::Censoring)?,
        CensoringFit::Pooled => kaplan_meier(&d1.concat(&d2)?, Target::Censoring)?,
    };
    let mut tests = Vec::new();
    for (k, (hidden, vars)) in groups.iter().zip(&args.vars.0).enumerate() {
        let pair = LocoPair::fit(&c.model, &d1, tau, hidden)?;
        let jitter_seed = rng::derive_seed(c.procedure_seed(), 1 + k as u64);
        let report = global_test_with_censoring(&pair, &d2, &censoring, &options, jitter_seed)?;
        let mut value = serde_json::to_value(&report).map_err(rmst_core::Error::from)?;
        value["vars"] = json!(vars);
        tests.push(value);
    }
    Ok((json!({ "n_fit": d1.len(), "n_eval": d2.len(), "tests": tests }), tau))
}

/// Conformal split of the data; the LOCO pairs share its fitting part and
/// are evaluated on `--test` or on the calibration part.
fn loco_local(args: &LocoArgs, loaded: &Loaded, groups: &[Vec<usize>]) -> Result<(Value, TimeHorizon)> {
    let c = &args.common;
    let data = &loaded.data;
    let tau = c.horizon(data)?;
    let options = ConformalOptions {
        alpha: args.alpha,
        rho: args.rho,
        tie_jitter: false,
    };
    let fit = split_conformal(data, &c.model, args.censoring, tau, &options, c.procedure_seed())?;
    let d_fit = data.subset(fit.fit_indices());
    let points = match &args.test {
        Some(path) => load_csv(path)?,
        None => data.subset(fit.calibration_indices()),
    };
    let pairs = groups
        .iter()
        .map(|g| LocoPair::fit(&c.model, &d_fit, tau, g))
        .collect::<rmst_core::Result<Vec<_>>>()?;
    let out = (0..points.len())
        .map(|i| {
            let z = points.covariates(i);
            let interval = fit.interval(z)?;
            let importance = pairs
                .iter()
                .zip(&args.vars.0)
                .map(|(pair, vars)| {
                    let w = local_importance(pair, &interval, z)?;
                    Ok(json!({ "vars": vars, "lower": w.lower, "upper": w.upper }))
                })
                .collect::<rmst_core::Result<Vec<Value>>>()?;
            let mut value = interval_json(&interval);
            value["importance"] = Value::Array(importance);
            Ok(value)
        })
        .collect::<rmst_core::Result<Vec<Value>>>()?;
    Ok((json!({ "q_hat": fit.q_hat(), "points": out }), tau))
}

fn loco(command: &LocoCommand) -> Result<Report> {
    let (name, args) = match command {
        LocoCommand::Global(a) => ("loco-global", a),
        LocoCommand::Local(a) => ("loco-local", a),
    };
    check_fraction("alpha", args.alpha)?;
    check_fraction("rho", args.rho)?;
    let loaded = args.common.load()?;
    let groups = args.vars.zero_based(loaded.data.dim())?;
    let (results, tau) = match command {
        LocoCommand::Global(_) => loco_global(args, &loaded, &groups)?,
        LocoCommand::Local(_) => loco_local(args, &loaded, &groups)?,
    };
    Ok(Report::new(name, args.common.seed, params(args, tau)?, results))
}

fn multisplit_command(args: &MultisplitArgs) -> Result<Report> {
    let c = &args.common;
    check_fraction("alpha", args.alpha)?;
    check_fraction("rho", args.rho)?;
    let loaded = c.load()?;
    let dim = loaded.data.dim();
    let vars = args
        .vars
        .clone()
        .unwrap_or_else(|| VarGroups((1..=dim).map(|k| vec![k]).collect()));
    let groups = vars.zero_based(dim)?;
    let tau = c.horizon(&loaded.data)?;
    let options = MultisplitOptions {
        test: GlobalTestOptions {
            alpha: args.alpha,
            jitter: args.jitter,
            variance: args.variance,
        },
        rho: args.rho,
        aggregation: args.aggregation,
        censoring_fit: args.censoring_fit,
    };
    let res = multisplit(&loaded.data, &c.model, tau, &groups, args.splits, &options, c.procedure_seed())?;
    let results: Vec<Value> = res
        .iter()
        .zip(&vars.0)
        .map(|(r, v)| json!({ "vars": v, "aggregate": r.aggregate, "p_values": r.p_values }))
        .collect();
    Ok(Report::new("multisplit", c.seed, params(args, tau)?, Value::Array(results)))
}

fn run(cli: &Cli) -> Result<()> {
    let (report, out) = match &cli.command {
        Command::Simulate(a) => (simulate(a)?, None),
        Command::Evaluate(a) => (evaluate(a)?, a.common.out.as_deref()),
        Command::Conformal(cmd) => {
            let (ConformalCommand::Split(a) | ConformalCommand::Roo(a)) = cmd;
            (conformal(cmd)?, a.common.out.as_deref())
        }
        Command::Loco(cmd) => {
            let (LocoCommand::Global(a) | LocoCommand::Local(a)) = cmd;
            (loco(cmd)?, a.common.out.as_deref())
        }
        Command::Multisplit(a) => (multisplit_command(a)?, a.common.out.as_deref()),
    };
    emit_report(&report, out)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Failure::Usage(_) => 2,
                Failure::File { .. } | Failure::Compute(_) => 1,
            })
        }
    }
}
