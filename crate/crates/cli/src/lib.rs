//! Command-line pipeline for `dualtail`: ingest a casualty corpus, run the
//! diagnostics, fits, shadow moments, robustness checks and arrival tests,
//! and write JSON reports and CSV plot data.

pub mod commands;
pub mod config;

use clap::{Parser, Subcommand};
use serde::Serialize;

pub use commands::ErrorReport;
pub use config::{Flags, RunConfig, SynthFlags};

#[derive(Debug, Parser)]
#[command(name = "dualtail", version, about = "Tail risk of bounded heavy-tailed severities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate the corpus; list rejects and per-view extremes.
    Ingest,
    /// Mean-excess, QQ, Zipf, max-to-sum and record plot data.
    Diagnose,
    /// GPD fit, goodness of fit, Pickands curve and residual QQ per threshold.
    Fit,
    /// Shadow and sample moments across a ladder of minimum thresholds.
    Shadow,
    /// Bootstrap, jackknife and fuzzy Monte Carlo distributions of the shape.
    Robust,
    /// Inter-arrival table and homogeneous Poisson tests.
    Arrivals,
    /// Generate a synthetic event history.
    Synth(SynthFlags),
    /// Run everything and write one aggregate JSON.
    Report,
}

/// Runs a parsed command line and returns the JSON printed on stdout.
pub fn run(cli: &Cli) -> anyhow::Result<String> {
    let cfg = RunConfig::resolve(&cli.flags)?;
    fn text<T: Serialize>(v: &T) -> anyhow::Result<String> {
        Ok(serde_json::to_string_pretty(v)?)
    }
    match &cli.command {
        Command::Ingest => text(&commands::ingest(&cfg)?),
        Command::Diagnose => text(&commands::diagnose(&cfg)?),
        Command::Fit => text(&commands::fit(&cfg)?),
        Command::Shadow => text(&commands::shadow(&cfg)?),
        Command::Robust => text(&commands::robust(&cfg)?),
        Command::Arrivals => text(&commands::arrivals(&cfg)?),
        Command::Synth(s) => text(&commands::synth(&cfg, &s.apply(&cfg))?),
        Command::Report => {
            commands::report(&cfg)?;
            text(&serde_json::json!({
                "report": cfg.out.join(commands::REPORT_FILE),
                "seed": cfg.seed,
            }))
        }
    }
}

/// `{"error": {"kind": ..., "message": ...}}`
pub fn error_json(report: &ErrorReport) -> String {
    serde_json::json!({ "error": report }).to_string()
}
