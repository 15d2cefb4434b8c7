//! `pgarch` command-line driver.
//!
//! Subcommands:
//! - `simulate` runs Monte Carlo studies on the factor-GARCH design
//! - `fit` estimates the factor GARCH on the last window of a panel
//! - `forecast` emits one-step VaR and the covariance forecast split
//! - `backtest` runs the rolling-window VaR backtest
//! - `compare` runs the backtest and ranks the models
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{CommonArgs, Defaults, Inputs, PortfolioArgs, RollingArgs, SimArgs};
use error::CliError;

#[derive(Parser)]
#[command(name = "pgarch", version, about = "Factor GARCH covariance forecasting and VaR backtesting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo study on simulated factor-GARCH panels.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Estimate the factor GARCH on the last window of a panel.
    Fit {
        /// Wide CSV panel: date column then one column per asset.
        #[arg(long)]
        panel: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        rolling: RollingArgs,
    },
    /// One-step-ahead VaR and covariance forecast.
    Forecast {
        #[arg(long)]
        panel: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        rolling: RollingArgs,
        #[command(flatten)]
        portfolios: PortfolioArgs,
    },
    /// Rolling-window VaR backtest.
    Backtest {
        #[arg(long)]
        panel: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        rolling: RollingArgs,
        #[command(flatten)]
        portfolios: PortfolioArgs,
    },
    /// Rolling backtest of several models with a coverage ranking.
    Compare {
        #[arg(long)]
        panel: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        rolling: RollingArgs,
        #[command(flatten)]
        portfolios: PortfolioArgs,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common, sim } => {
            let cfg = config::resolve(
                Inputs {
                    common: &common,
                    panel: None,
                    rolling: None,
                    portfolios: None,
                    sim: Some(&sim),
                },
                Defaults::SIMULATION,
            )?;
            commands::simulate(cfg, sim.emit_panel)
        }
        Command::Fit { panel, common, rolling } => {
            let cfg = config::resolve(
                Inputs {
                    common: &common,
                    panel: panel.as_ref(),
                    rolling: Some(&rolling),
                    portfolios: None,
                    sim: None,
                },
                Defaults::SINGLE,
            )?;
            commands::fit(cfg)
        }
        Command::Forecast {
            panel,
            common,
            rolling,
            portfolios,
        } => {
            let cfg = config::resolve(
                Inputs {
                    common: &common,
                    panel: panel.as_ref(),
                    rolling: Some(&rolling),
                    portfolios: Some(&portfolios),
                    sim: None,
                },
                Defaults::SINGLE,
            )?;
            commands::forecast(cfg)
        }
        Command::Backtest {
            panel,
            common,
            rolling,
            portfolios,
        } => {
            let cfg = config::resolve(
                Inputs {
                    common: &common,
                    panel: panel.as_ref(),
                    rolling: Some(&rolling),
                    portfolios: Some(&portfolios),
                    sim: None,
                },
                Defaults::EMPIRICAL,
            )?;
            commands::backtest(cfg)
        }
        Command::Compare {
            panel,
            common,
            rolling,
            portfolios,
        } => {
            let cfg = config::resolve(
                Inputs {
                    common: &common,
                    panel: panel.as_ref(),
                    rolling: Some(&rolling),
                    portfolios: Some(&portfolios),
                    sim: None,
                },
                Defaults::EMPIRICAL,
            )?;
            commands::compare(cfg)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
