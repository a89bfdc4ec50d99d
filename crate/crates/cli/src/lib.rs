//! Command line front end: `solve`, `eigen`, `check`, `converge` and `ibp-test`
//! driven by a flat text config, writing CSV data and `key = value` reports.
//!
//! Exit codes: 0 success, 1 run finished but failed its criterion, 2 invalid
//! configuration.

pub mod commands;
pub mod config;
pub mod error;
pub mod expr;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use psilap_core::Theorem;

use crate::commands::eigen::Sweep;
use crate::config::{RawConfig, RunConfig};
use crate::error::{config_err, CliResult};
use crate::output::Outputs;

#[derive(Debug, Parser)]
#[command(name = "psilap", version, about = "ψ-Hilfer fractional p-Laplacian toolkit")]
pub struct Cli {
    /// Config file of `section.key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Main CSV output path; the report goes next to it with extension `.report`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides `solver.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, short, global = true)]
    pub verbose: bool,
    /// Also write the left integral weight matrix as CSV.
    #[arg(long, global = true)]
    pub dump_weights: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search for a critical point of the energy.
    Solve {
        #[arg(long)]
        multistart: Option<usize>,
    },
    /// Estimate the first or second variational eigenvalue.
    Eigen {
        #[arg(long, default_value_t = 1)]
        level: usize,
        /// `alpha=start:stop:step` (also `beta`, `p`).
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Audit the bracket and Θ hypotheses on the configured nonlinearity.
    Check {
        /// 1.2 (ε on the lower bracket) or 1.3 (ε on the upper bracket).
        #[arg(long)]
        theorem: Option<String>,
    },
    /// Grid refinement study for `converge.case`.
    Converge,
    /// Integration-by-parts defects over a catalog of function pairs.
    IbpTest,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Solve { .. } => "solve",
            Self::Eigen { .. } => "eigen",
            Self::Check { .. } => "check",
            Self::Converge => "converge",
            Self::IbpTest => "ibp-test",
        }
    }
}

fn load(cli: &Cli) -> CliResult<RunConfig> {
    let raw = match &cli.config {
        Some(p) => RawConfig::load(p)?,
        None => RawConfig::default(),
    };
    let rc = RunConfig::from_raw(raw)?;
    Ok(match cli.seed {
        Some(s) => rc.with_seed(s),
        None => rc,
    })
}

fn dispatch(cli: &Cli) -> CliResult<i32> {
    let rc = load(cli)?;
    let out = Outputs::new(cli.out.as_deref(), &rc.out_dir, &rc.label, cli.command.name());
    // Flag values are validated together with the config.
    let sweep = match &cli.command {
        Command::Eigen { sweep: Some(s), .. } => Some(Sweep::parse(s)?),
        _ => None,
    };
    let theorem = match &cli.command {
        Command::Check { theorem: Some(t) } => Some(
            Theorem::parse(t).ok_or_else(|| config_err(format!("--theorem must be 1.2 or 1.3, got `{t}`")))?,
        ),
        _ => None,
    };
    if let Some(path) = &cli.dump_weights {
        commands::dump_weights(&rc, path)?;
    }
    match &cli.command {
        Command::Solve { multistart } => commands::solve::cmd_solve(&rc, &out, *multistart),
        Command::Eigen { level, .. } => commands::eigen::cmd_eigen(&rc, &out, *level, sweep.as_ref()),
        Command::Check { .. } => commands::check::cmd_check(&rc, &out, theorem),
        Command::Converge => commands::converge::cmd_converge(&rc, &out),
        Command::IbpTest => commands::ibp::cmd_ibp_test(&rc, &out),
    }
}

/// Run a parsed command line and return the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("psilap {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}
