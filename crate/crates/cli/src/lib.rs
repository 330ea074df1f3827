//! Batch experiment runner: parses a TOML configuration, dispatches to the
//! core estimators and quadratures, and writes a CSV table, a TOML summary
//! and an SVG plot per run.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use thiserror::Error;

pub mod commands;
pub mod config;
pub mod output;

pub use config::ExperimentConfig;

/// `git describe`-style version of this binary.
pub const VERSION: &str = env!("JUMPLAB_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] jumplab_core::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use jumplab_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Io(_) => 1,
            CliError::Config(_) | CliError::Validation(_) => 2,
            CliError::Core(E::Domain(_) | E::InvalidInput(_) | E::NoCone | E::Infeasible(_)) => 2,
            CliError::Core(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Validate,
    ExitTime,
    Survival,
    Hitting,
    Harmonic,
    Harnack,
    RestrictedHarnack,
    Hoelder,
    LevyCheck,
    Nondegeneracy,
    Eta,
    ApplyL,
    Karamata,
    GeometryCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::ExitTime => "exit-time",
            Command::Survival => "survival",
            Command::Hitting => "hitting",
            Command::Harmonic => "harmonic",
            Command::Harnack => "harnack",
            Command::RestrictedHarnack => "restricted-harnack",
            Command::Hoelder => "hoelder",
            Command::LevyCheck => "levy-check",
            Command::Nondegeneracy => "nondegeneracy",
            Command::Eta => "eta",
            Command::ApplyL => "apply-l",
            Command::Karamata => "karamata",
            Command::GeometryCheck => "geometry-check",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "jumplab", version = VERSION, about = "Experiments with anisotropic jump processes")]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    /// TOML experiment configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configuration's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for replicas (0: all cores). Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Output directory (overrides the configuration's `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides a configuration key, e.g. `--set simulation.epsilon=0.01`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Also write per-event logs of the first replicas (exit-time, survival).
    #[arg(long)]
    pub dump_paths: bool,
}

/// Artifacts of one command before they are written.
pub struct Outcome {
    pub table: output::Table,
    pub summary: toml::Table,
    pub plot: Option<output::Plot>,
    /// Event logs written next to the primary table, by file stem, in the
    /// fixed `replica,time,x_pre…,x_post…,fictitious` layout.
    pub extra: Vec<(String, output::Table)>,
    /// Validation checks that failed (exit status 2), if any.
    pub failures: Vec<String>,
    /// ε reported in the metadata columns.
    pub epsilon: f64,
}

impl Outcome {
    pub fn new(table: output::Table, epsilon: f64) -> Self {
        Self { table, summary: toml::Table::new(), plot: None, extra: Vec::new(), failures: Vec::new(), epsilon }
    }

    pub fn set(&mut self, key: &str, value: impl Into<toml::Value>) {
        self.summary.insert(key.to_string(), value.into());
    }

    /// Stores a float, skipping non-finite values that TOML cannot represent
    /// portably.
    pub fn set_f(&mut self, key: &str, value: f64) {
        if value.is_finite() {
            self.set(key, value);
        }
    }
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>, CliError> {
    raw.iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got '{s}'")))
        })
        .collect()
}

pub fn execute(args: &Args) -> Result<(PathBuf, Outcome), CliError> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", args.config.display())))?;
    let mut cfg = config::parse(&text, &parse_overrides(&args.overrides)?)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = args.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("jumplab-out"));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let outcome = pool.install(|| commands::dispatch(args.command, &cfg, args.dump_paths))?;

    fs::create_dir_all(&out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let name = args.command.name();
    let meta = output::RunMeta { seed: cfg.seed, epsilon: outcome.epsilon, n: cfg.simulation.n, version: VERSION };
    output::write_csv(&out.join(format!("{name}.csv")), &outcome.table, Some(&meta))?;
    for (stem, table) in &outcome.extra {
        output::write_csv(&out.join(format!("{stem}.csv")), table, None)?;
    }
    let mut summary = toml::Table::new();
    summary.insert("command".into(), name.into());
    summary.insert("version".into(), VERSION.into());
    summary.insert("seed".into(), toml::Value::Integer(cfg.seed as i64));
    summary.insert("epsilon".into(), outcome.epsilon.into());
    summary.insert("n".into(), toml::Value::Integer(cfg.simulation.n as i64));
    summary.insert("passed".into(), outcome.failures.is_empty().into());
    summary.insert("results".into(), toml::Value::Table(outcome.summary.clone()));
    output::write_summary(&out.join("summary.toml"), &summary)?;
    if let Some(plot) = &outcome.plot {
        plot.write(&out.join(format!("{name}.svg")))?;
    }
    Ok((out, outcome))
}

/// Runs the command line `argv` (including the program name) and returns the
/// process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&args) {
        Ok((out, outcome)) => {
            let body = toml::to_string(&outcome.summary).unwrap_or_default();
            print!("{body}");
            eprintln!("wrote {}", out.display());
            if outcome.failures.is_empty() {
                0
            } else {
                for f in &outcome.failures {
                    eprintln!("check failed: {f}");
                }
                2
            }
        }
        Err(e) => {
            eprintln!("jumplab: {e}");
            e.exit_code()
        }
    }
}
