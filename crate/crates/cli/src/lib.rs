//! Command-line front end: synthetic data, ingest, graph export, training,
//! walk-forward evaluation, forecasting, feature importance and gradient
//! checks.

pub mod commands;
pub mod config;
pub mod exit;
pub mod manifest;
pub mod svg;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::Run;
use crate::config::RunConfig;
use crate::exit::CliError;

fn parse_horizon(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(h @ (2 | 4 | 8 | 16)) => Ok(h),
        _ => Err(format!("horizon must be one of 2, 4, 8, 16 (got {s})")),
    }
}

#[derive(Debug, Parser)]
#[command(name = "epigraph", version, about = "Weekly case-count forecasting with a gated graph-attention Transformer")]
pub struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "epigraph-out")]
    pub out: PathBuf,
    #[arg(long, global = true, value_parser = parse_horizon)]
    pub horizon: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic table with a known lagged driver.
    Synth {
        /// `key = value` generator spec; defaults when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Build the canonical weekly table from raw source files.
    Ingest {
        #[arg(long)]
        surveillance: Option<PathBuf>,
        #[arg(long)]
        weather: Option<PathBuf>,
        #[arg(long)]
        air_quality: Option<PathBuf>,
    },
    /// Export the correlation graph and the feature mask.
    Graph {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train a model and write its checkpoint.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Walk-forward evaluation over the test range.
    Eval {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Forecast the weeks after the end of the table.
    Forecast {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Multi-seed feature-selection stability.
    Importance {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Number of seeds, counting up from `--seed`.
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Finite-difference gradient check of every layer type.
    Gradcheck,
}

fn path_str(p: &std::path::Path) -> String {
    p.display().to_string()
}

/// Resolves configuration and dispatches one command.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", p.display())))?;
            RunConfig::from_text(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.override_key("seed", &s.to_string())?;
    }
    if let Some(h) = cli.horizon {
        cfg.override_key("horizon", &h.to_string())?;
    }
    let set_path = |cfg: &mut RunConfig, key: &str, p: &Option<PathBuf>| -> Result<(), CliError> {
        match p {
            Some(p) => cfg.override_key(key, &path_str(p)),
            None => Ok(()),
        }
    };
    let name = match &cli.command {
        Command::Synth { .. } => "synth",
        Command::Ingest { surveillance, weather, air_quality } => {
            set_path(&mut cfg, "surveillance", surveillance)?;
            set_path(&mut cfg, "weather", weather)?;
            set_path(&mut cfg, "air_quality", air_quality)?;
            "ingest"
        }
        Command::Graph { data, checkpoint }
        | Command::Train { data, checkpoint }
        | Command::Eval { data, checkpoint }
        | Command::Forecast { data, checkpoint } => {
            set_path(&mut cfg, "data", data)?;
            set_path(&mut cfg, "checkpoint", checkpoint)?;
            match cli.command {
                Command::Graph { .. } => "graph",
                Command::Train { .. } => "train",
                Command::Eval { .. } => "eval",
                _ => "forecast",
            }
        }
        Command::Importance { data, seeds } => {
            set_path(&mut cfg, "data", data)?;
            if let Some(n) = seeds {
                cfg.override_key("importance_seeds", &n.to_string())?;
            }
            "importance"
        }
        Command::Gradcheck => "gradcheck",
    };
    cfg.validate()?;
    let run = Run::new(name, cfg, cli.out.clone())?;
    match &cli.command {
        Command::Synth { spec } => commands::cmd_synth(run, spec.as_deref()),
        Command::Ingest { .. } => commands::cmd_ingest(run),
        Command::Graph { .. } => commands::cmd_graph(run),
        Command::Train { .. } => commands::cmd_train(run),
        Command::Eval { .. } => commands::cmd_eval(run),
        Command::Forecast { .. } => commands::cmd_forecast(run),
        Command::Importance { .. } => commands::cmd_importance(run),
        Command::Gradcheck => commands::cmd_gradcheck(run),
    }
}

/// Parses `args` and runs, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
