//! Batch front-end: `dicke-twist <experiment> [--config FILE] [--set k=v]...`.
//!
//! Each run writes the data tables (CSV or JSON), `summary.json` and
//! `config.toml` (the resolved configuration) into the output directory.
//! Exit status is 0 on success, 2 for configuration errors, 3 for numerical
//! failures and 4 when a resource limit would be exceeded.

pub mod config;
pub mod experiments;
pub mod table;

use std::fmt;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use log::info;
use serde_json::{json, Value};

use crate::error::Error;
pub use config::{Experiment, Format, Overrides, RunConfig};
pub use experiments::Outcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Numeric,
    Limit,
}

impl Category {
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Config => 2,
            Category::Numeric => 3,
            Category::Limit => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Config => "CONFIG",
            Category::Numeric => "NUMERIC",
            Category::Limit => "LIMIT",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

impl CliError {
    pub fn new(category: Category, message: impl Into<String>) -> Self {
        Self { category, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(Category::Config, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.category.as_str(), self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let category = match e {
            Error::InvalidInput(_) | Error::DimensionMismatch { .. } | Error::BasisMismatch | Error::SplitStepTooLarge { .. } => {
                Category::Config
            }
            Error::StepBudget(_) => Category::Limit,
            Error::NotHermitian(_) | Error::StepUnderflow { .. } | Error::TraceDrift { .. } | Error::Positivity(_) | Error::Numeric(_) => {
                Category::Numeric
            }
        };
        Self::new(category, e.to_string())
    }
}

fn io_error(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::new(Category::Limit, format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(
    name = "dicke-twist",
    version,
    about = "Spin-cat preparation by one-axis twisting: sweeps, master equations and trajectory ensembles"
)]
pub struct Args {
    #[arg(value_enum)]
    pub experiment: Experiment,
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set spin=20` or `--set times.count=11`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Seed for the trajectory experiments (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to DICKE_TWIST_THREADS, then to all cores.
    #[arg(long, env = "DICKE_TWIST_THREADS")]
    pub threads: Option<usize>,
    /// Output directory (default `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Only report errors on stderr.
    #[arg(short, long)]
    pub quiet: bool,
}

/// Resolves the configuration from the arguments and the optional file.
pub fn resolve_args(args: &Args) -> Result<RunConfig, CliError> {
    let text = match &args.config {
        Some(path) => Some(fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?),
        None => None,
    };
    let overrides =
        Overrides { sets: args.sets.clone(), seed: args.seed, threads: args.threads, out: args.out.clone(), format: args.format };
    config::resolve(args.experiment, text.as_deref(), &overrides)
}

/// Runs the experiment on a dedicated worker pool. Results are assembled by
/// index, so the thread count never changes the output.
pub fn execute(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::new(Category::Limit, format!("thread pool: {e}")))?;
    pool.install(|| experiments::run(cfg))
}

fn write_table(dir: &Path, table: &table::Table, format: Format) -> Result<PathBuf, CliError> {
    let path = dir.join(match format {
        Format::Csv => format!("{}.csv", table.name),
        Format::Json => format!("{}.json", table.name),
    });
    let file = fs::File::create(&path).map_err(|e| io_error(&path, e))?;
    let writer = BufWriter::new(file);
    match format {
        Format::Csv => table.write_csv(writer).map_err(|e| io_error(&path, e))?,
        Format::Json => serde_json::to_writer_pretty(writer, &table.to_json()).map_err(|e| io_error(&path, e))?,
    }
    Ok(path)
}

/// Writes tables, `config.toml` and `summary.json`; returns the summary.
pub fn write_outputs(cfg: &RunConfig, outcome: &Outcome, wall_time: f64) -> Result<Value, CliError> {
    fs::create_dir_all(&cfg.out).map_err(|e| io_error(&cfg.out, e))?;
    let mut files = Vec::new();
    for t in &outcome.tables {
        let path = write_table(&cfg.out, t, cfg.format)?;
        files.push(path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default());
    }
    let config_path = cfg.out.join("config.toml");
    fs::write(&config_path, cfg.to_toml()?).map_err(|e| io_error(&config_path, e))?;

    let written = outcome.tables.first().map_or(0, |t| t.rows.len());
    let mut checks: Vec<Value> = vec![json!({
        "name": "grid_complete",
        "passed": written == outcome.grid_requested,
        "detail": format!("requested {} points, wrote {written}", outcome.grid_requested),
    })];
    checks.extend(outcome.checks.iter().map(|c| json!({ "name": c.name, "passed": c.passed, "detail": c.detail })));
    let summary = json!({
        "experiment": cfg.experiment.name(),
        "seed": cfg.seed,
        "threads": cfg.threads.unwrap_or_else(rayon::current_num_threads),
        "wall_time_s": wall_time,
        "files": files,
        "grid": { "requested": outcome.grid_requested, "written": written },
        "checks": checks,
        "results": Value::Object(outcome.results.clone()),
    });
    let summary_path = cfg.out.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).expect("summary is plain data");
    fs::write(&summary_path, text + "\n").map_err(|e| io_error(&summary_path, e))?;
    Ok(summary)
}

/// Full run from parsed arguments.
pub fn run(args: &Args) -> Result<Value, CliError> {
    let cfg = resolve_args(args)?;
    info!("running {} (seed {}) into {}", cfg.experiment.name(), cfg.seed, cfg.out.display());
    let start = Instant::now();
    let outcome = execute(&cfg)?;
    let wall = start.elapsed().as_secs_f64();
    let summary = write_outputs(&cfg, &outcome, wall)?;
    for c in &outcome.checks {
        info!("check {}: {} ({})", c.name, if c.passed { "ok" } else { "FAILED" }, c.detail);
    }
    info!("done in {wall:.2} s");
    Ok(summary)
}

/// Binary entry point; returns the process exit status.
pub fn main_entry() -> i32 {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { Category::Config.exit_code() } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = if args.quiet { log::LevelFilter::Error } else { log::LevelFilter::Info };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match run(&args) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("dicke-twist: {e}");
            e.category.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_errors_map_to_exit_codes() {
        let code = |e: Error| CliError::from(e).category.exit_code();
        assert_eq!(code(Error::InvalidInput("x".into())), 2);
        assert_eq!(code(Error::SplitStepTooLarge { dt: 0.1, estimate: 1.0 }), 2);
        assert_eq!(code(Error::Positivity(-1e-3)), 3);
        assert_eq!(code(Error::StepUnderflow { t: 1.0 }), 3);
        assert_eq!(code(Error::StepBudget(10)), 4);
        let shown = CliError::from(Error::TraceDrift { trace: 1.5 }).to_string();
        assert!(shown.starts_with("error[NUMERIC]: "), "{shown}");
    }
}
