//! Subcommands of the `rbfprune` binary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use rbfprune::conformance::Suite;
use rbfprune::io::config::{DistSpec, RunConfigFile};
use rbfprune::io::csv::{load_csv, load_inputs, save_csv};
use rbfprune::io::model_file::{load_network, ModelFile, Provenance};
use rbfprune::io::report::{fit_report_lines, prune_report_lines, write_lines};
use rbfprune::{make_toy_dataset, prune, split_dataset, train, Dataset, EvalMode, RbfNetwork, SplitSpec};

#[derive(Debug, Parser)]
#[command(name = "rbfprune", version, about = "Train Gaussian RBF networks and prune them under an input distribution")]
pub struct Cli {
    /// Seed for every random choice; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Size of the worker thread pool.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Force sequential evaluation and restarts.
    #[arg(long, global = true)]
    deterministic: bool,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the one-dimensional toy data set as CSV.
    GenToy {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a network on a CSV data set.
    Train(TrainArgs),
    /// Prune a trained network to fewer centroids.
    Prune(PruneArgs),
    /// Predict on a CSV file and report RMSE when responses are present.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write one CSV row per centroid: index, beta, theta.
    ExportCentroids {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a one-dimensional model on an even grid.
    Curve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        from: f64,
        #[arg(long, allow_hyphen_values = true)]
        to: f64,
        #[arg(long, default_value_t = 201)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the closed forms against the oracles.
    Verify {
        #[arg(long, value_enum, default_value_t = SuiteArg::All)]
        suite: SuiteArg,
    },
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Validation CSV; without it a share of `--data` is held out.
    #[arg(long)]
    val_data: Option<PathBuf>,
    #[arg(long)]
    model_out: Option<PathBuf>,
    #[arg(long)]
    report_out: Option<PathBuf>,
    #[arg(long)]
    num_centroids: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Map 0/1 feature columns to -1/+1.
    #[arg(long)]
    binary_to_pm1: bool,
}

#[derive(Debug, Args)]
struct PruneArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    /// Distribution preset such as `std_normal`, `uniform(-4,4)` or `bernoulli(0.5)`.
    #[arg(long)]
    dist: Option<String>,
    #[arg(long)]
    model_out: Option<PathBuf>,
    #[arg(long)]
    report_out: Option<PathBuf>,
    #[arg(long)]
    target_centroids: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Run restarts on the thread pool.
    #[arg(long)]
    parallel: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SuiteArg {
    Bernoulli,
    Uniform,
    Gaussian,
    Objective,
    Gradients,
    All,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Lib(#[from] rbfprune::Error),
    #[error("missing {0}: pass it as a flag or set it in the config file")]
    Missing(&'static str),
    #[error("verification failed: {0}")]
    Verify(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Lib(e) => e.kind(),
            CliError::Missing(_) => "missing_argument",
            CliError::Verify(_) => "verification_failed",
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

pub fn report_error(kind: &str, message: &str) {
    eprintln!("{}", json!({"error": kind, "message": message.trim_end()}));
}

fn required(value: Option<PathBuf>, fallback: &Option<PathBuf>, what: &'static str) -> CliResult<PathBuf> {
    value.or_else(|| fallback.clone()).ok_or(CliError::Missing(what))
}

pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| rbfprune::Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    let mut config = match &cli.config {
        Some(path) => RunConfigFile::load(path)?,
        None => RunConfigFile::default(),
    };
    if let Some(seed) = cli.seed {
        config.train.seed = seed;
        config.prune.seed = seed;
    }
    if cli.deterministic {
        config.train.deterministic = true;
        config.prune.parallel = false;
    }
    match cli.command {
        Command::GenToy { n, out } => gen_toy(n, cli.seed.unwrap_or(0), &out),
        Command::Train(args) => train_cmd(config, args),
        Command::Prune(args) => prune_cmd(config, args, cli.deterministic),
        Command::Eval { model, data, out } => eval_cmd(&config, &model, &data, out.as_deref()),
        Command::ExportCentroids { model, out } => export_centroids(&model, &out),
        Command::Curve { model, from, to, steps, out } => curve(&model, from, to, steps, &out),
        Command::Verify { suite } => verify(suite, cli.seed.unwrap_or(0)),
    }
}

fn gen_toy(n: usize, seed: u64, out: &Path) -> CliResult<()> {
    let data = make_toy_dataset(n, seed)?;
    save_csv(out, &data)?;
    println!("{}", json!({"command": "gen-toy", "rows": n, "seed": seed, "out": out.display().to_string()}));
    Ok(())
}

/// Hash of the effective configuration, ignoring file locations.
fn config_hash(config: &RunConfigFile) -> String {
    let mut c = config.clone();
    c.paths = Default::default();
    c.hash()
}

fn holdout_split(data: &Dataset<f64>, fraction: f64, seed: u64) -> CliResult<(Dataset<f64>, Dataset<f64>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(rbfprune::Error::Config(format!("data.val_fraction must lie in (0, 1), got {fraction}")).into());
    }
    let n = data.len();
    let val = ((fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    if val >= n {
        return Err(rbfprune::Error::EmptyData("training set after validation split").into());
    }
    let (tr, va, _) = split_dataset(data, SplitSpec::Counts { train: n - val, val, test: Some(0) }, seed)?;
    Ok((tr, va))
}

fn train_cmd(mut config: RunConfigFile, args: TrainArgs) -> CliResult<()> {
    if let Some(k) = args.num_centroids {
        config.train.num_centroids = k;
    }
    if let Some(b) = args.batch_size {
        config.train.batch_size = b;
    }
    if let Some(e) = args.max_epochs {
        config.train.max_epochs = e;
    }
    if args.binary_to_pm1 {
        config.data.binary_to_pm1 = true;
    }
    let data_path = required(args.data, &config.paths.data, "--data")?;
    let model_out = required(args.model_out, &config.paths.model_out, "--model-out")?;
    let report_out = args.report_out.or_else(|| config.paths.report_out.clone());
    let csv = config.data.csv_options();
    let data = load_csv(&data_path, &csv)?;
    let (train_set, val_set) = match args.val_data.or_else(|| config.paths.val_data.clone()) {
        Some(path) => {
            let val = load_csv(&path, &csv)?;
            (data, val)
        }
        None => holdout_split(&data, config.data.val_fraction, config.train.seed)?,
    };
    let (net, report) = train(&train_set, &val_set, &config.train)?;
    let mut metrics = BTreeMap::new();
    metrics.insert("final_validation_mse".to_string(), report.final_validation_mse);
    metrics.insert("epochs".to_string(), report.epochs.len() as f64);
    metrics.insert("train_rows".to_string(), train_set.len() as f64);
    metrics.insert("validation_rows".to_string(), val_set.len() as f64);
    let provenance = Provenance {
        command: "train".into(),
        config_hash: config_hash(&config),
        seed: config.train.seed,
        metrics,
    };
    ModelFile::from_network(&net, provenance).save(&model_out)?;
    if let Some(path) = report_out {
        write_lines(&path, &fit_report_lines(&report))?;
    }
    eprintln!("train: {} epochs in {:.2}s", report.epochs.len(), report.wall_time_s);
    println!(
        "{}",
        json!({
            "command": "train",
            "epochs": report.epochs.len(),
            "stop_reason": report.stop_reason,
            "final_validation_mse": report.final_validation_mse,
            "validation_rmse": report.final_validation_mse.sqrt(),
        })
    );
    Ok(())
}

fn prune_cmd(mut config: RunConfigFile, args: PruneArgs, deterministic: bool) -> CliResult<()> {
    if let Some(m) = args.target_centroids {
        config.prune.target_centroids = m;
    }
    if let Some(r) = args.restarts {
        config.prune.restarts = r;
    }
    if let Some(i) = args.max_iterations {
        config.prune.max_iterations = i;
    }
    if args.parallel && !deterministic {
        config.prune.parallel = true;
    }
    if let Some(preset) = args.dist {
        config.dist = Some(DistSpec::preset(&preset));
    }
    let model_path = required(args.model, &config.paths.model, "--model")?;
    let model_out = required(args.model_out, &config.paths.model_out, "--model-out")?;
    let report_out = args.report_out.or_else(|| config.paths.report_out.clone());
    let spec = config.dist.clone().ok_or(CliError::Missing("--dist"))?;
    let large = load_network(&model_path)?;
    let dist = spec.to_distribution(large.dim())?;
    let result = prune(&large, &dist, &config.prune)?;
    let mut metrics = BTreeMap::new();
    metrics.insert("objective".to_string(), result.objective);
    metrics.insert("sqrt_objective".to_string(), result.sqrt_objective());
    metrics.insert("best_restart".to_string(), result.best_restart as f64);
    metrics.insert("source_num_centroids".to_string(), large.num_centroids() as f64);
    let provenance = Provenance {
        command: "prune".into(),
        config_hash: config_hash(&config),
        seed: config.prune.seed,
        metrics,
    };
    ModelFile::from_network(&result.small, provenance).save(&model_out)?;
    if let Some(path) = report_out {
        write_lines(&path, &prune_report_lines(&result))?;
    }
    println!(
        "{}",
        json!({
            "command": "prune",
            "dist": dist.kind(),
            "target_centroids": result.small.num_centroids(),
            "best_restart": result.best_restart,
            "objective": result.objective,
            "sqrt_objective": result.sqrt_objective(),
        })
    );
    Ok(())
}

fn eval_cmd(config: &RunConfigFile, model: &Path, data: &Path, out: Option<&Path>) -> CliResult<()> {
    let net = load_network(model)?;
    let (inputs, responses) = load_inputs(data, &config.data.csv_options(), net.dim())?;
    let pred = net.forward_batch(&inputs, EvalMode::Sequential)?;
    let mut csv = String::from(if responses.is_some() { "row,prediction,response\n" } else { "row,prediction\n" });
    for (i, p) in pred.iter().enumerate() {
        match &responses {
            Some(y) => writeln!(csv, "{i},{p},{}", y[i]),
            None => writeln!(csv, "{i},{p}"),
        }
        .expect("string write");
    }
    if let Some(path) = out {
        std::fs::write(path, csv).map_err(|source| rbfprune::Error::Io { path: path.display().to_string(), source })?;
    }
    let mut summary = json!({"command": "eval", "rows": pred.len()});
    if let Some(y) = responses {
        let mse = net.mse_loss(&Dataset::new(inputs, y)?)?;
        summary["mse"] = json!(mse);
        summary["rmse"] = json!(mse.sqrt());
    }
    println!("{summary}");
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents)
        .map_err(|source| rbfprune::Error::Io { path: path.display().to_string(), source }.into())
}

fn export_centroids(model: &Path, out: &Path) -> CliResult<()> {
    let net = load_network(model)?;
    let mut csv = String::from("index,beta");
    for c in 0..net.dim() {
        write!(csv, ",theta{c}").expect("string write");
    }
    csv.push('\n');
    for (i, (b, row)) in net.beta().iter().zip(net.theta().iter_rows()).enumerate() {
        write!(csv, "{i},{b}").expect("string write");
        for v in row {
            write!(csv, ",{v}").expect("string write");
        }
        csv.push('\n');
    }
    write_file(out, &csv)?;
    println!("{}", json!({"command": "export-centroids", "centroids": net.num_centroids(), "dim": net.dim()}));
    Ok(())
}

/// `steps` evenly spaced points from `from` to `to`, both ends included.
pub fn grid(from: f64, to: f64, steps: usize) -> Vec<f64> {
    if steps == 1 {
        return vec![from];
    }
    let h = (to - from) / (steps - 1) as f64;
    (0..steps).map(|i| if i + 1 == steps { to } else { from + h * i as f64 }).collect()
}

fn curve(model: &Path, from: f64, to: f64, steps: usize, out: &Path) -> CliResult<()> {
    let net: RbfNetwork<f64> = load_network(model)?;
    if net.dim() != 1 {
        return Err(rbfprune::Error::dim("curve model dimension", 1, net.dim()).into());
    }
    if steps == 0 || !from.is_finite() || !to.is_finite() {
        return Err(rbfprune::Error::InvalidArgument("curve needs finite bounds and steps >= 1".into()).into());
    }
    let mut csv = String::from("x,prediction\n");
    for x in grid(from, to, steps) {
        writeln!(csv, "{x},{}", net.forward(&[x])?).expect("string write");
    }
    write_file(out, &csv)?;
    println!("{}", json!({"command": "curve", "points": steps}));
    Ok(())
}

fn verify(suite: SuiteArg, seed: u64) -> CliResult<()> {
    let suites: Vec<Suite> = match suite {
        SuiteArg::Bernoulli => vec![Suite::Bernoulli],
        SuiteArg::Uniform => vec![Suite::Uniform],
        SuiteArg::Gaussian => vec![Suite::Gaussian],
        SuiteArg::Objective => vec![Suite::Objective],
        SuiteArg::Gradients => vec![Suite::Gradients],
        SuiteArg::All => Suite::ALL.to_vec(),
    };
    let mut failed = Vec::new();
    for s in suites {
        let report = s.run(seed)?;
        println!("{}", serde_json::to_string(&report).expect("report serializes"));
        if !report.passed {
            failed.push(format!("{} ({:e} > {:e})", report.suite, report.max_rel_error, report.tolerance));
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verify(failed.join(", ")))
    }
}
