//! Command-line flags, the optional TOML config file, and their merge into a
//! fully resolved [`RunConfig`]. Flags always win over the file.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use pgarch::exec::Execution;
use pgarch::forecast::QuantileKind;
use pgarch::pipeline::{ModelConfig, ModelKind, RankChoice};
use pgarch::rolling::DEFAULT_ALPHAS;
use pgarch::shrink::{ThresholdMode, ThresholdSpec};

use crate::error::CliError;

/// Estimation and output flags shared by every subcommand.
#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// TOML config file; command-line flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of factors, or `auto` for the eigenvalue-ratio estimator.
    #[arg(long)]
    pub rank: Option<String>,
    /// Threshold constant C_τ.
    #[arg(long)]
    pub c_tau: Option<f64>,
    /// Sparsity measure s_p in the threshold level.
    #[arg(long)]
    pub s_p: Option<f64>,
    /// soft, hard or sector_block.
    #[arg(long)]
    pub threshold_mode: Option<String>,
    /// CSV `asset_id,group` used by sector-block thresholding.
    #[arg(long)]
    pub groups: Option<PathBuf>,
    /// Comma-separated models, or `all`.
    #[arg(long)]
    pub models: Option<String>,
    /// Comma-separated quantile rules: normal, t6, empirical.
    #[arg(long)]
    pub quantiles: Option<String>,
    /// VaR level; repeat for several.
    #[arg(long = "alpha")]
    pub alphas: Vec<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Run every loop on the calling thread.
    #[arg(long)]
    pub sequential: bool,
}

/// Rolling-window flags.
#[derive(Args, Debug, Clone, Default)]
pub struct RollingArgs {
    /// Estimation window length in days.
    #[arg(long)]
    pub window: Option<usize>,
    /// Re-estimate the GARCH parameters every this many forecasts.
    #[arg(long)]
    pub refit_every: Option<usize>,
    /// Number of lagged hits in the DQ regression.
    #[arg(long)]
    pub dq_lags: Option<usize>,
}

/// Where the portfolios come from.
#[derive(Args, Debug, Clone, Default)]
pub struct PortfolioArgs {
    /// CSV `portfolio,asset_id,weight`.
    #[arg(long)]
    pub portfolios: Option<PathBuf>,
    /// Inline weights `ID=w,ID=w,...`.
    #[arg(long, conflicts_with = "portfolios")]
    pub weights: Option<String>,
    /// Draw this many equal-weighted random portfolios per size.
    #[arg(long, conflicts_with_all = ["portfolios", "weights"])]
    pub random_portfolios: Option<usize>,
    /// Sizes of the random portfolios (comma-separated).
    #[arg(long, value_delimiter = ',')]
    pub portfolio_size: Vec<usize>,
}

/// Monte Carlo flags.
#[derive(Args, Debug, Clone, Default)]
pub struct SimArgs {
    /// Cross-section sizes (comma-separated).
    #[arg(long = "p", value_delimiter = ',')]
    pub p: Vec<usize>,
    /// Sample lengths (comma-separated).
    #[arg(long = "T", value_delimiter = ',')]
    pub t: Vec<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Keep only these metrics (comma-separated).
    #[arg(long, value_delimiter = ',')]
    pub metric: Vec<String>,
    /// Assets per random portfolio.
    #[arg(long)]
    pub portfolio_size: Option<usize>,
    /// Also write the first simulated panel as a CSV.
    #[arg(long)]
    pub emit_panel: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    data: DataSection,
    rolling: RollingSection,
    model: ModelSection,
    simulation: SimSection,
    output: OutputSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DataSection {
    panel: Option<PathBuf>,
    portfolios: Option<PathBuf>,
    groups: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RollingSection {
    window: Option<usize>,
    refit_every: Option<usize>,
    alphas: Option<Vec<f64>>,
    dq_lags: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ModelSection {
    rank: Option<toml::Value>,
    c_tau: Option<f64>,
    s_p: Option<f64>,
    threshold_mode: Option<String>,
    models: Option<Vec<String>>,
    quantiles: Option<Vec<String>>,
    psd_repair: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimSection {
    p: Option<Vec<usize>>,
    #[serde(rename = "T")]
    t: Option<Vec<usize>>,
    reps: Option<usize>,
    seed: Option<u64>,
    portfolio_size: Option<usize>,
    metrics: Option<Vec<String>>,
    random_portfolios: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct OutputSection {
    out_dir: Option<PathBuf>,
}

fn read_file_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("bad config file {}: {e}", path.display())))
}

/// Per-command defaults that differ between the empirical and simulation paths.
#[derive(Debug, Clone, Copy)]
pub struct Defaults {
    pub models: &'static [ModelKind],
    pub rank: RankChoice,
    pub alphas: &'static [f64],
}

impl Defaults {
    pub const EMPIRICAL: Self = Self {
        models: &ModelKind::ALL,
        rank: RankChoice::Auto,
        alphas: &DEFAULT_ALPHAS,
    };
    pub const SINGLE: Self = Self {
        models: &[ModelKind::Pgarch],
        rank: RankChoice::Auto,
        alphas: &DEFAULT_ALPHAS,
    };
    pub const SIMULATION: Self = Self {
        models: &[ModelKind::Pgarch],
        rank: RankChoice::Fixed(3),
        alphas: &[0.01],
    };
}

/// Everything a run needs, echoed into the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub panel: Option<PathBuf>,
    pub portfolios: Option<PathBuf>,
    pub weights: Option<String>,
    pub groups: Option<PathBuf>,
    pub random_portfolios: Option<usize>,
    pub portfolio_sizes: Vec<usize>,
    pub window: usize,
    pub window_given: bool,
    pub refit_every: usize,
    pub dq_lags: usize,
    pub alphas: Vec<f64>,
    pub models: Vec<ModelKind>,
    pub quantiles: Vec<QuantileKind>,
    pub model: ModelConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub execution: Execution,
    pub p: Vec<usize>,
    #[serde(rename = "T")]
    pub t: Vec<usize>,
    pub reps: usize,
    pub metrics: Option<Vec<String>>,
    pub sim_portfolio_size: usize,
}

fn parse_models(s: &str) -> Result<Vec<ModelKind>, CliError> {
    Ok(ModelKind::parse_list(s)?)
}

fn parse_quantiles<S: AsRef<str>>(items: &[S]) -> Result<Vec<QuantileKind>, CliError> {
    items
        .iter()
        .flat_map(|s| s.as_ref().split(','))
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse::<QuantileKind>().map_err(CliError::from))
        .collect()
}

fn rank_from_toml(v: &toml::Value) -> Result<RankChoice, CliError> {
    match v {
        toml::Value::Integer(i) if *i >= 1 => Ok(RankChoice::Fixed(*i as usize)),
        toml::Value::String(s) => Ok(s.parse()?),
        other => Err(CliError::Usage(format!("rank must be a positive integer or \"auto\", got {other}"))),
    }
}

pub struct Inputs<'a> {
    pub common: &'a CommonArgs,
    pub panel: Option<&'a PathBuf>,
    pub rolling: Option<&'a RollingArgs>,
    pub portfolios: Option<&'a PortfolioArgs>,
    pub sim: Option<&'a SimArgs>,
}

pub fn resolve(inputs: Inputs<'_>, defaults: Defaults) -> Result<RunConfig, CliError> {
    let c = inputs.common;
    let file = read_file_config(c.config.as_deref())?;
    let rolling = inputs.rolling.cloned().unwrap_or_default();
    let ports = inputs.portfolios.cloned().unwrap_or_default();
    let sim = inputs.sim.cloned().unwrap_or_default();

    let models = match (&c.models, &file.model.models) {
        (Some(s), _) => parse_models(s)?,
        (None, Some(list)) => parse_models(&list.join(","))?,
        (None, None) => defaults.models.to_vec(),
    };
    let quantiles = match (&c.quantiles, &file.model.quantiles) {
        (Some(s), _) => parse_quantiles(&[s])?,
        (None, Some(list)) => parse_quantiles(list)?,
        (None, None) => vec![
            QuantileKind::Normal,
            QuantileKind::StudentT { nu: 6.0 },
            QuantileKind::Empirical,
        ],
    };
    if quantiles.is_empty() || models.is_empty() {
        return Err(CliError::Usage("need at least one model and one quantile rule".to_string()));
    }
    let rank = match (&c.rank, &file.model.rank) {
        (Some(s), _) => s.parse()?,
        (None, Some(v)) => rank_from_toml(v)?,
        (None, None) => defaults.rank,
    };
    let mode: ThresholdMode = match c.threshold_mode.as_ref().or(file.model.threshold_mode.as_ref()) {
        Some(s) => s.parse()?,
        None => ThresholdMode::Soft,
    };
    let threshold = ThresholdSpec {
        c_tau: c.c_tau.or(file.model.c_tau).unwrap_or(1.0),
        s_p: c.s_p.or(file.model.s_p).unwrap_or(1.0),
        mode,
        groups: None,
    };
    let alphas = if !c.alphas.is_empty() {
        c.alphas.clone()
    } else {
        file.rolling.alphas.clone().unwrap_or_else(|| defaults.alphas.to_vec())
    };
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(CliError::Usage(format!("alpha must lie in (0, 1), got {a}")));
    }
    let window_flag = rolling.window.or(file.rolling.window);
    let cfg = RunConfig {
        panel: inputs.panel.cloned().or(file.data.panel),
        portfolios: ports.portfolios.or(file.data.portfolios),
        weights: ports.weights,
        groups: c.groups.clone().or(file.data.groups),
        random_portfolios: ports.random_portfolios.or(file.simulation.random_portfolios),
        portfolio_sizes: if ports.portfolio_size.is_empty() {
            vec![5]
        } else {
            ports.portfolio_size
        },
        window: window_flag.unwrap_or(252),
        window_given: window_flag.is_some(),
        refit_every: rolling.refit_every.or(file.rolling.refit_every).unwrap_or(10),
        dq_lags: rolling.dq_lags.or(file.rolling.dq_lags).unwrap_or(pgarch::backtest::DEFAULT_DQ_LAGS),
        alphas,
        models,
        quantiles,
        model: ModelConfig {
            rank,
            threshold,
            psd_repair: file.model.psd_repair.unwrap_or(true),
            ..ModelConfig::default()
        },
        seed: c.seed.or(file.simulation.seed).unwrap_or(1),
        out_dir: c
            .out_dir
            .clone()
            .or(file.output.out_dir)
            .unwrap_or_else(|| PathBuf::from("out")),
        execution: if c.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        },
        p: if sim.p.is_empty() {
            file.simulation.p.unwrap_or_else(|| vec![20])
        } else {
            sim.p
        },
        t: if sim.t.is_empty() {
            file.simulation.t.unwrap_or_else(|| vec![500])
        } else {
            sim.t
        },
        reps: sim.reps.or(file.simulation.reps).unwrap_or(50),
        metrics: if sim.metric.is_empty() {
            file.simulation.metrics
        } else {
            Some(sim.metric)
        },
        sim_portfolio_size: sim.portfolio_size.or(file.simulation.portfolio_size).unwrap_or(5),
    };
    if cfg.window < 30 {
        return Err(CliError::Usage(format!("window must be at least 30, got {}", cfg.window)));
    }
    if cfg.refit_every == 0 {
        return Err(CliError::Usage("refit-every must be at least 1".to_string()));
    }
    Ok(cfg)
}
