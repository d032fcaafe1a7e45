//! `ergomax`: run polynomial ergodic-average experiments from TOML or JSON configs.
//!
//! Exit status: 0 on success, 1 when a verification fails, 2 on a config error.

mod commands;
mod config;
mod golden;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Outcome;
use crate::config::{ConfigError, ExperimentConfig, Format};
use crate::report::Table;

#[derive(Parser)]
#[command(name = "ergomax", version, about = "Polynomial ergodic averages on finite systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML, or JSON by `.json` extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    /// Reduction policy: default, paper-ex62 or paper-ex78.
    #[arg(long, global = true)]
    policy: Option<String>,
    /// Averaging length.
    #[arg(long = "N", global = true)]
    n: Option<u64>,
    /// Box side length for seminorms.
    #[arg(long = "H", global = true)]
    h: Option<u64>,
    /// Seminorm degree.
    #[arg(long, global = true)]
    s: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the fully merged config as JSON and exit.
    #[arg(long, global = true)]
    dump_config: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Indexing data, type, controllable indices and goodness obligations of a tuple.
    Analyze,
    /// Run the type-reduction induction and print the trace.
    Reduce,
    /// Check each goodness obligation on the configured system.
    CheckGoodness,
    /// Multiple ergodic average against its exact limit.
    Average,
    /// Box or Host–Kra seminorm, exact at full period.
    Seminorm,
    /// Exact Weyl mean of `e(Σ α_j p_j(n))`.
    Weyl,
    /// Weak joint ergodicity: both criteria and the direct check.
    VerifyWje,
    /// Joint ergodicity: both criteria and the direct check.
    VerifyJe,
    /// Pairwise and product-space conditions against joint ergodicity.
    VerifyDks,
    /// Re-run the built-in worked examples.
    Golden,
}

impl Cli {
    fn merged_config(&self) -> Result<ExperimentConfig, ConfigError> {
        let mut cfg = match &self.config {
            Some(path) => config::load(path)?,
            None => ExperimentConfig::default(),
        };
        let p = &mut cfg.params;
        p.tolerance = self.tolerance.or(p.tolerance);
        p.policy = self.policy.clone().or(p.policy.take());
        p.n = self.n.or(p.n);
        p.h = self.h.or(p.h);
        p.s = self.s.or(p.s);
        p.seed = self.seed.or(p.seed);
        cfg.output.path = self.out.clone().or(cfg.output.path.take());
        cfg.output.format = self.format.or(cfg.output.format);
        Ok(cfg)
    }
}

fn run(command: Command, cfg: &ExperimentConfig) -> Result<Outcome, ConfigError> {
    match command {
        Command::Analyze => commands::analyze(cfg),
        Command::Reduce => commands::reduce(cfg),
        Command::CheckGoodness => commands::check_goodness(cfg),
        Command::Average => commands::average(cfg),
        Command::Seminorm => commands::seminorm(cfg),
        Command::Weyl => commands::weyl(cfg),
        Command::VerifyWje => commands::verify_wje(cfg),
        Command::VerifyJe => commands::verify_je(cfg),
        Command::VerifyDks => commands::verify_dks(cfg),
        Command::Golden => Ok(golden::run()),
    }
}

fn emit(text: &str, cfg: &ExperimentConfig) -> Result<(), ConfigError> {
    match &cfg.output.path {
        Some(path) => std::fs::write(path, text).map_err(|e| ConfigError::at(path.display().to_string(), e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn init_threads() -> Result<(), ConfigError> {
    let Ok(v) = std::env::var("ERGOMAX_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .map_err(|_| ConfigError::at("ERGOMAX_THREADS", format!("`{v}` is not a thread count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| ConfigError::at("ERGOMAX_THREADS", e))
}

fn main_inner(cli: &Cli) -> Result<bool, ConfigError> {
    init_threads()?;
    let cfg = cli.merged_config()?;
    if cli.dump_config {
        emit(&config::to_json(&cfg), &cfg)?;
        return Ok(true);
    }
    let mut outcome = run(cli.command, &cfg)?;
    if let serde_json::Value::Object(map) = &mut outcome.report {
        map.insert("failures".into(), serde_json::json!(outcome.failures));
    }
    let text = match cfg.output.format.unwrap_or_default() {
        Format::Json => report::to_json(&outcome.report),
        Format::Csv => outcome
            .table
            .unwrap_or_else(|| Table::from_scalars(&outcome.report))
            .to_csv(),
    };
    emit(&text, &cfg)?;
    for f in &outcome.failures {
        eprintln!("verification failed: {f}");
    }
    Ok(outcome.failures.is_empty())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
    }
}
