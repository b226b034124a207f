//! The `morl` command line: `train`, `eval`, `metrics` and `oracle`.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 usage or configuration error,
//! 3 numeric failure during training.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::envs::{self, lqr_oracle, make_env, pointmass_front_oracle};
use crate::error::{Error, Result};
use crate::pareto::{hypervolume, linear_dominance_filter, nondominated_filter, sparsity, ParetoFront};
use crate::rng::Rng;
use crate::simplex::TradeoffVector;
use crate::trainer::{self, Checkpoint, EvalConfig, EvalRow, NetworkConfig, TrainJob, TrainOptions, TrainerConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Numeric { .. } => EXIT_NUMERIC,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

#[derive(Debug, Parser)]
#[command(name = "morl", version, about = "Hypernetwork multi-objective PPO")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train both hypernetworks from a TOML run configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `trainer.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Single-threaded rollouts and zeroed wall-clock column.
        #[arg(long)]
        deterministic: bool,
        /// Caps the worker threads used for rollouts and evaluation.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Evaluate a checkpoint over a simplex grid and write the front CSV.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        grid: usize,
        #[arg(long, default_value_t = 8)]
        episodes: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Environment to evaluate on; defaults to the checkpoint's.
        #[arg(long)]
        env: Option<String>,
    },
    /// Report dominance counts, hypervolume and sparsity of a front CSV.
    Metrics {
        #[arg(long)]
        front: PathBuf,
        /// Reference point, e.g. "-50,-20".
        #[arg(long = "ref", allow_hyphen_values = true)]
        reference: String,
    },
    /// Print the analytic optimum of an environment.
    Oracle {
        #[arg(long)]
        env: String,
        /// Trade-off for mo-lqr1d, e.g. "0.5,0.5".
        #[arg(long, allow_hyphen_values = true)]
        w: Option<String>,
        #[arg(long, default_value_t = 200)]
        horizon: usize,
        #[arg(long, default_value_t = 0.99)]
        gamma: f64,
        /// Constant-action grid for mo-pointmass.
        #[arg(long, default_value_t = 10)]
        grid: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub name: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParetoSection {
    /// Hypervolume reference override.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<f64>>,
}

/// The TOML run configuration. Every section except `env` may be omitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvSection,
    #[serde(default)]
    pub trainer: TrainerConfig,
    #[serde(default)]
    pub hypernet: NetworkConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub pareto: ParetoSection,
}

impl RunConfig {
    /// Parses a config, naming the offending key path on failure and logging
    /// every key that falls back to its default.
    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::Config(e.to_string()))?;
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("at `{path}`: {}", e.into_inner().message()))
        })?;
        let raw: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let resolved = toml::Table::try_from(&cfg).map_err(|e| Error::Config(e.to_string()))?;
        for key in missing_keys(&raw, &resolved, "") {
            info!("config: `{key}` not set, using its default");
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn job(&self) -> TrainJob {
        TrainJob {
            env_name: self.env.name.clone(),
            trainer: self.trainer.clone(),
            network: self.hypernet.clone(),
            eval: self.eval.clone(),
            reference: self.pareto.reference.clone(),
        }
    }
}

fn missing_keys(raw: &toml::Table, resolved: &toml::Table, prefix: &str) -> Vec<String> {
    let mut out = Vec::new();
    for (key, value) in resolved {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match (raw.get(key), value) {
            (None, _) => out.push(path),
            (Some(toml::Value::Table(r)), toml::Value::Table(v)) => out.extend(missing_keys(r, v, &path)),
            _ => {}
        }
    }
    out
}

pub fn parse_floats(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("`{}` is not a number", s.trim())))
        })
        .collect()
}

/// Front CSV: header `w_1..w_m,J_1..J_m`, 17 significant digits per value.
pub fn write_front_csv(path: &Path, rows: &[EvalRow], objectives: usize) -> Result<()> {
    let mut out = String::new();
    let header: Vec<String> = (1..=objectives)
        .map(|j| format!("w_{j}"))
        .chain((1..=objectives).map(|j| format!("J_{j}")))
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let fields: Vec<String> = row
            .tradeoff
            .weights()
            .iter()
            .chain(&row.returns)
            .map(|v| format!("{v:.16e}"))
            .collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads the objective columns of a front CSV. Columns named `J_*` are
/// objectives; without such a header every column is.
pub fn read_front_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)?;
    let csv_err = |line: usize, message: String| Error::Csv {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut columns: Option<Vec<usize>> = None;
    let mut width: Option<usize> = None;
    let mut points = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Vec<Option<f64>> = fields.iter().map(|f| f.parse::<f64>().ok()).collect();
        if width.is_none() && parsed.iter().any(Option::is_none) {
            let objective: Vec<usize> = fields
                .iter()
                .enumerate()
                .filter(|(_, f)| f.starts_with("J_"))
                .map(|(i, _)| i)
                .collect();
            columns = Some(if objective.is_empty() { (0..fields.len()).collect() } else { objective });
            width = Some(fields.len());
            continue;
        }
        let expected = *width.get_or_insert(fields.len());
        if fields.len() != expected {
            return Err(csv_err(lineno, format!("expected {expected} fields, found {}", fields.len())));
        }
        let cols = columns.get_or_insert_with(|| (0..fields.len()).collect());
        let mut point = Vec::with_capacity(cols.len());
        for &c in cols.iter() {
            match parsed[c] {
                Some(v) if v.is_finite() => point.push(v),
                _ => return Err(csv_err(lineno, format!("field {} is not a finite number: `{}`", c + 1, fields[c]))),
            }
        }
        points.push(point);
    }
    Ok(points)
}

fn cmd_train(
    config: &Path,
    out: &Path,
    seed: Option<u64>,
    deterministic: bool,
    threads: Option<usize>,
) -> Result<()> {
    let text = fs::read_to_string(config)?;
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(seed) = seed {
        cfg.trainer.seed = seed;
    }
    let env = make_env(&cfg.env.name)?;
    cfg.trainer.validate(env.spec().objectives)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.resolved.toml"), cfg.to_toml()?)?;
    let job = cfg.job();
    let opts = TrainOptions {
        deterministic,
        out_dir: Some(out.to_path_buf()),
    };
    let outcome = with_threads(threads, || trainer::train(&job, &opts))?;
    if let Some(last) = outcome.metrics.last() {
        println!("iterations: {}", last.iteration);
        println!("archive hypervolume: {}", last.archive_hv);
    }
    println!("checkpoint: {}", out.join("checkpoint.json").display());
    Ok(())
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(0) => Err(Error::Config("--threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(f),
    }
}

fn cmd_eval(checkpoint: &Path, grid: usize, episodes: usize, out: &Path, seed: u64, env: Option<&str>) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let env_name = env.unwrap_or(&ckpt.env_name).to_string();
    let rows = trainer::evaluate(&ckpt, &env_name, grid, episodes, &Rng::new(seed))?;
    write_front_csv(out, &rows, ckpt.actor_spec.objectives())?;
    println!("rows: {}", rows.len());
    Ok(())
}

fn cmd_metrics(front: &Path, reference: &str) -> Result<()> {
    let reference = parse_floats(reference)?;
    let points = read_front_csv(front)?;
    if let Some(bad) = points.iter().find(|p| p.len() != reference.len()) {
        return Err(Error::Config(format!(
            "front has {} objectives but the reference has {}",
            bad.len(),
            reference.len()
        )));
    }
    if points.is_empty() {
        warn!("front is empty");
    }
    let nondominated = nondominated_filter(&points);
    let convex = linear_dominance_filter(&points);
    let hv = hypervolume(&ParetoFront::new(points.clone(), reference))?;
    println!("points: {}", points.len());
    println!("nondominated: {}", nondominated.len());
    println!("convex front: {}", convex.len());
    match hv.std_error {
        None => println!("hypervolume: {}", hv.value),
        Some(se) => println!("hypervolume: {} +/- {se} (monte carlo)", hv.value),
    }
    match sparsity(&nondominated) {
        Ok(s) => println!("sparsity: {s}"),
        Err(_) => println!("sparsity: undefined (fewer than 2 nondominated points)"),
    }
    Ok(())
}

fn cmd_oracle(env: &str, w: Option<&str>, horizon: usize, gamma: f64, grid: usize) -> Result<()> {
    match env {
        "mo-lqr1d" => {
            let w = TradeoffVector::new(parse_floats(w.unwrap_or("0.5,0.5"))?)?;
            let value = lqr_oracle(&w, horizon, gamma)?;
            println!("w_1,w_2,value");
            // print the limiting zero-cost case as 0 rather than −0
            println!("{},{},{}", w.weights()[0], w.weights()[1], value + 0.0);
            if w.weights()[0] == 0.0 {
                println!("# note: w_1 = 0 is the limiting case; zero control is optimal");
            }
        }
        "mo-lqr1d-scalar" => {
            let w = TradeoffVector::new(vec![0.5, 0.5])?;
            println!("value");
            println!("{}", lqr_oracle(&w, horizon, gamma)?);
        }
        "mo-pointmass" => {
            let front = pointmass_front_oracle(grid);
            println!("J_1,J_2");
            for p in &front.points {
                println!("{},{}", p[0], p[1]);
            }
        }
        other => {
            // an unknown name is a different error from a known env without an oracle
            envs::make_env(other)?;
            return Err(Error::NoOracle(other.to_string()));
        }
    }
    Ok(())
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            out,
            seed,
            deterministic,
            threads,
        } => cmd_train(&config, &out, seed, deterministic, threads),
        Command::Eval {
            checkpoint,
            grid,
            episodes,
            out,
            seed,
            env,
        } => cmd_eval(&checkpoint, grid, episodes, &out, seed, env.as_deref()),
        Command::Metrics { front, reference } => cmd_metrics(&front, &reference),
        Command::Oracle {
            env,
            w,
            horizon,
            gamma,
            grid,
        } => cmd_oracle(&env, w.as_deref(), horizon, gamma, grid),
    }
}

/// Parses `args` (including the program name), runs the command, and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => {
            let _ = std::io::stdout().flush();
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
