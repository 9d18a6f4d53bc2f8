//! `prime` — trajectory-prediction pipeline driver.
//!
//! Subcommands: predict / train / eval / audit / sweep. Each writes its
//! result files plus a run manifest into `--out`. Exit codes: 0 success,
//! 2 empty feasible set, 1 any input or processing error. Set `PRIME_LOG`
//! to `info` or `debug` for stage logging on standard error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use prime_core::config::validate_config;
use prime_core::error::Error;
use prime_core::evaluator::{loss, score, train, ModelParams, TrainExample};
use prime_core::harness::{build_example, predict_scenario, run_harness, RunOptions};
use prime_core::scene::{load_scenario, save_predictions, Scenario};

const DEFAULT_WIDTH: usize = 16;

#[derive(Parser)]
#[command(
    name = "prime",
    version,
    about = "Two-stage vehicle trajectory prediction pipeline",
    long_about = "Two-stage vehicle trajectory prediction: a model-based generator \
samples feasible futures along reachable lane paths and a learned evaluator \
scores them.\n\n\
Exit codes: 0 success, 2 no feasible trajectory on any path, 1 input or \
processing error.\n\n\
CSV column orders:\n\
  trajectories.csv: trajectory,probability,step,t,x,y,v,a,kappa,theta,s,d\n\
  loss_history.csv: epoch,loss\n\
  audit.csv:        scenario,selected,infeasible,infeasibility\n\
  sweep.csv:        drop_rate,miss_rate,min_ade,min_fde\n\n\
Set PRIME_LOG=info or PRIME_LOG=debug for stage logging on stderr."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Predict futures for one scenario file.
    Predict(PredictArgs),
    /// Train evaluator parameters on a dataset directory.
    Train(TrainArgs),
    /// Evaluate a model over a dataset; emits aggregate metrics JSON.
    Eval(DatasetArgs),
    /// Audit predicted trajectories for curvature feasibility; emits
    /// a per-scenario CSV.
    Audit(DatasetArgs),
    /// Sweep track drop rates {0, 0.2, 0.4, 0.6} and emit the drop-rate
    /// vs miss-rate curve CSV.
    Sweep(DatasetArgs),
}

#[derive(Args)]
struct PredictArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Evaluator parameters JSON; omitted = fresh seeded initialization.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Output directory (created if absent).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Probability of dropping each observed track sample.
    #[arg(long, default_value_t = 0.0)]
    drop_rate: f64,
    /// Override the scenario's number of output modes K.
    #[arg(long)]
    k: Option<usize>,
    /// Override the scenario's NMS suppression distance [m].
    #[arg(long)]
    nms_threshold: Option<f64>,
    /// Evaluator width for fresh initialization (ignored with --params).
    #[arg(long, default_value_t = DEFAULT_WIDTH)]
    width: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory of scenario JSON files (every one needs ground truth).
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory (created if absent).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Soft-label temperature.
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Evaluator width.
    #[arg(long, default_value_t = DEFAULT_WIDTH)]
    width: usize,
    /// Drop rate applied to training tracks.
    #[arg(long, default_value_t = 0.0)]
    drop_rate: f64,
    /// Warm-start parameters instead of a fresh initialization.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Args)]
struct DatasetArgs {
    /// Directory of scenario JSON files.
    #[arg(long)]
    dataset: PathBuf,
    /// Evaluator parameters JSON; omitted = fresh seeded initialization.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Output directory (created if absent).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Drop rate (ignored by sweep, which uses its fixed grid).
    #[arg(long, default_value_t = 0.0)]
    drop_rate: f64,
    /// Evaluator width for fresh initialization (ignored with --params).
    #[arg(long, default_value_t = DEFAULT_WIDTH)]
    width: usize,
}

/// Everything needed to reproduce a run, written next to the results.
#[derive(Serialize)]
struct RunManifest {
    subcommand: String,
    inputs: Vec<String>,
    config: prime_core::Config,
    seed: u64,
    version: String,
    /// Seconds since the Unix epoch at completion; the only
    /// non-deterministic field in any output.
    timestamp: f64,
    timings: Vec<(String, f64)>,
}

fn log_enabled(level: &str) -> bool {
    match std::env::var("PRIME_LOG").as_deref() {
        Ok("debug") => true,
        Ok("info") => level == "info",
        _ => false,
    }
}

macro_rules! log_info {
    ($($arg:tt)*) => {
        if log_enabled("info") {
            eprintln!("[prime] {}", format!($($arg)*));
        }
    };
}

/// Stage timer: runs a closure, records its wall time and logs it.
struct Stages {
    timings: Vec<(String, f64)>,
}

impl Stages {
    fn new() -> Self {
        Stages { timings: Vec::new() }
    }

    fn run<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        let secs = start.elapsed().as_secs_f64();
        log_info!("stage {name}: {secs:.3} s");
        self.timings.push((name.to_string(), secs));
        out
    }
}

fn read_to_string(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn load_params(path: Option<&Path>, width: usize, seed: u64) -> Result<ModelParams, Error> {
    match path {
        Some(p) => ModelParams::from_json(&read_to_string(p)?),
        None => Ok(ModelParams::new(width, seed)),
    }
}

/// Scenario files of a dataset directory, in name order for determinism.
fn load_dataset(dir: &Path) -> Result<(Vec<String>, Vec<Scenario>), Error> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::Parse(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::invalid("dataset", "no .json scenario files found"));
    }
    let mut names = Vec::new();
    let mut scenarios = Vec::new();
    for f in &files {
        let scenario = load_scenario(&read_to_string(f)?)
            .map_err(|e| Error::Parse(format!("{}: {e}", f.display())))?;
        names.push(f.file_name().unwrap().to_string_lossy().into_owned());
        scenarios.push(scenario);
    }
    log_info!("loaded {} scenarios from {}", scenarios.len(), dir.display());
    Ok((names, scenarios))
}

fn write_file(path: &Path, content: &str) -> Result<(), Error> {
    std::fs::write(path, content)?;
    log_info!("wrote {}", path.display());
    Ok(())
}

fn write_manifest(
    out: &Path,
    subcommand: &str,
    inputs: &[&Path],
    config: &prime_core::Config,
    seed: u64,
    stages: Stages,
) -> Result<(), Error> {
    let manifest = RunManifest {
        subcommand: subcommand.into(),
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        config: config.clone(),
        seed,
        version: env!("CARGO_PKG_VERSION").into(),
        timestamp: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0),
        timings: stages.timings,
    };
    write_file(
        &out.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest).unwrap(),
    )
}

fn cmd_predict(args: &PredictArgs) -> Result<(), Error> {
    let mut stages = Stages::new();
    let mut scenario = stages.run("load", || -> Result<Scenario, Error> {
        load_scenario(&read_to_string(&args.scenario)?)
    })?;
    if let Some(k) = args.k {
        scenario.config.num_modes = k;
    }
    if let Some(t) = args.nms_threshold {
        scenario.config.nms_threshold = t;
    }
    scenario.config = validate_config(scenario.config)?;
    let params = load_params(args.params.as_deref(), args.width, args.seed)?;
    let opts = RunOptions {
        drop_rate: args.drop_rate,
        seed: args.seed,
        ..RunOptions::default()
    };
    let out = stages.run("predict", || predict_scenario(&scenario, &params, &opts))?;
    log_info!(
        "{} reachable paths, {} feasible trajectories, {} selected",
        out.feasible.reachable_paths.len(),
        out.feasible.len(),
        out.prediction.len()
    );
    std::fs::create_dir_all(&args.out)?;
    stages.run("write", || -> Result<(), Error> {
        save_predictions(&out.prediction, &args.out.join("prediction.json"))?;
        let dt = scenario.config.traj_time_step;
        let mut csv = String::from("trajectory,probability,step,t,x,y,v,a,kappa,theta,s,d\n");
        for (i, (traj, p)) in out
            .prediction
            .trajectories
            .iter()
            .zip(&out.prediction.probabilities)
            .enumerate()
        {
            for (k, s) in traj.steps.iter().enumerate() {
                csv.push_str(&format!(
                    "{i},{p},{k},{t},{},{},{},{},{},{},{},{}\n",
                    s.x,
                    s.y,
                    s.v,
                    s.a,
                    s.kappa,
                    s.theta,
                    s.s,
                    s.d,
                    t = (k + 1) as f64 * dt,
                ));
            }
        }
        write_file(&args.out.join("trajectories.csv"), &csv)
    })?;
    let mut inputs = vec![args.scenario.as_path()];
    inputs.extend(args.params.as_deref());
    write_manifest(&args.out, "predict", &inputs, &scenario.config, args.seed, stages)
}

/// Mean cross-entropy loss of `params` over `examples` without updating.
fn dataset_loss(examples: &[TrainExample], params: &ModelParams) -> f64 {
    examples
        .iter()
        .map(|ex| loss(&score(params, &ex.inputs), &ex.labels))
        .sum::<f64>()
        / examples.len() as f64
}

fn cmd_train(args: &TrainArgs) -> Result<(), Error> {
    let mut stages = Stages::new();
    let (_, scenarios) = stages.run("load", || load_dataset(&args.dataset))?;
    let opts = RunOptions {
        drop_rate: args.drop_rate,
        seed: args.seed,
        ..RunOptions::default()
    };
    let examples = stages.run("encode", || -> Result<Vec<TrainExample>, Error> {
        scenarios
            .iter()
            .map(|s| build_example(s, &opts, args.tau))
            .collect()
    })?;
    let mut params = load_params(args.params.as_deref(), args.width, args.seed)?;
    // history rows are the loss *before* each update plus the final loss,
    // so --epochs 0 still yields one row
    let mut history = stages.run("train", || {
        train(&examples, &mut params, args.epochs, args.lr)
    })?;
    history.push(dataset_loss(&examples, &params));
    log_info!(
        "trained {} epochs: loss {:.6} -> {:.6}",
        args.epochs,
        history[0],
        history.last().unwrap()
    );
    std::fs::create_dir_all(&args.out)?;
    stages.run("write", || -> Result<(), Error> {
        write_file(&args.out.join("params.json"), &params.to_json())?;
        let mut csv = String::from("epoch,loss\n");
        for (i, l) in history.iter().enumerate() {
            csv.push_str(&format!("{i},{l}\n"));
        }
        write_file(&args.out.join("loss_history.csv"), &csv)
    })?;
    let mut inputs = vec![args.dataset.as_path()];
    inputs.extend(args.params.as_deref());
    write_manifest(
        &args.out,
        "train",
        &inputs,
        &scenarios[0].config,
        args.seed,
        stages,
    )
}

fn dataset_run_options(args: &DatasetArgs) -> RunOptions {
    RunOptions {
        drop_rate: args.drop_rate,
        seed: args.seed,
        ..RunOptions::default()
    }
}

fn cmd_eval(args: &DatasetArgs) -> Result<(), Error> {
    let mut stages = Stages::new();
    let (names, scenarios) = stages.run("load", || load_dataset(&args.dataset))?;
    let params = load_params(args.params.as_deref(), args.width, args.seed)?;
    let report = stages.run("eval", || {
        run_harness(&scenarios, &params, &dataset_run_options(args))
    })?;
    log_info!(
        "MR {:.4}, minADE {:.4}, minFDE {:.4} over {} scenarios ({} failures)",
        report.aggregate.miss_rate,
        report.aggregate.min_ade,
        report.aggregate.min_fde,
        report.scenarios,
        report.failures
    );
    std::fs::create_dir_all(&args.out)?;
    #[derive(Serialize)]
    struct EvalDoc<'a> {
        aggregate: &'a prime_core::metrics::MetricsReport,
        scenarios: usize,
        failures: usize,
        per_scenario: Vec<(&'a str, Option<&'a prime_core::metrics::MetricsReport>)>,
    }
    let doc = EvalDoc {
        aggregate: &report.aggregate,
        scenarios: report.scenarios,
        failures: report.failures,
        per_scenario: names
            .iter()
            .map(String::as_str)
            .zip(report.per_scenario.iter().map(Option::as_ref))
            .collect(),
    };
    stages.run("write", || {
        write_file(
            &args.out.join("metrics.json"),
            &serde_json::to_string_pretty(&doc).unwrap(),
        )
    })?;
    let mut inputs = vec![args.dataset.as_path()];
    inputs.extend(args.params.as_deref());
    write_manifest(&args.out, "eval", &inputs, &scenarios[0].config, args.seed, stages)
}

fn cmd_audit(args: &DatasetArgs) -> Result<(), Error> {
    use prime_core::metrics::{audit_curvature, Feasibility};
    let mut stages = Stages::new();
    let (names, scenarios) = stages.run("load", || load_dataset(&args.dataset))?;
    let params = load_params(args.params.as_deref(), args.width, args.seed)?;
    let opts = dataset_run_options(args);
    let mut csv = String::from("scenario,selected,infeasible,infeasibility\n");
    let mut total_infeasible = 0usize;
    stages.run("audit", || -> Result<(), Error> {
        for (name, scenario) in names.iter().zip(&scenarios) {
            let out = predict_scenario(scenario, &params, &opts)?;
            let mut infeasible = 0usize;
            for t in &out.prediction.trajectories {
                if audit_curvature(&t.positions(), scenario.config.kappa_max)?
                    == Feasibility::Infeasible
                {
                    infeasible += 1;
                }
            }
            total_infeasible += infeasible;
            csv.push_str(&format!(
                "{name},{},{infeasible},{}\n",
                out.prediction.len(),
                infeasible as f64 / out.prediction.len() as f64
            ));
        }
        Ok(())
    })?;
    log_info!("{total_infeasible} infeasible selected trajectories in total");
    std::fs::create_dir_all(&args.out)?;
    stages.run("write", || write_file(&args.out.join("audit.csv"), &csv))?;
    let mut inputs = vec![args.dataset.as_path()];
    inputs.extend(args.params.as_deref());
    write_manifest(&args.out, "audit", &inputs, &scenarios[0].config, args.seed, stages)
}

fn cmd_sweep(args: &DatasetArgs) -> Result<(), Error> {
    let mut stages = Stages::new();
    let (_, scenarios) = stages.run("load", || load_dataset(&args.dataset))?;
    let params = load_params(args.params.as_deref(), args.width, args.seed)?;
    let mut csv = String::from("drop_rate,miss_rate,min_ade,min_fde\n");
    for rate in [0.0, 0.2, 0.4, 0.6] {
        let opts = RunOptions {
            drop_rate: rate,
            seed: args.seed,
            ..RunOptions::default()
        };
        let report = stages.run(&format!("drop_{rate}"), || {
            run_harness(&scenarios, &params, &opts)
        })?;
        log_info!("drop {rate}: MR {:.4}", report.aggregate.miss_rate);
        csv.push_str(&format!(
            "{rate},{},{},{}\n",
            report.aggregate.miss_rate, report.aggregate.min_ade, report.aggregate.min_fde
        ));
    }
    std::fs::create_dir_all(&args.out)?;
    stages.run("write", || write_file(&args.out.join("sweep.csv"), &csv))?;
    let mut inputs = vec![args.dataset.as_path()];
    inputs.extend(args.params.as_deref());
    write_manifest(&args.out, "sweep", &inputs, &scenarios[0].config, args.seed, stages)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Predict(a) => cmd_predict(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::EmptyFeasibleSet) => {
            eprintln!("error: {}", Error::EmptyFeasibleSet);
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
