//! Rolling-window forecasting and backtesting.
//!
//! For a panel of length `T` and window `W`, forecasts are made for rows
//! `d = W+1, …, T−1` (zero-based), each from the `W` rows `[d−W, d)`, giving
//! `N = T − W − 1` forecasts. Model parameters are re-estimated on every
//! `refit_every`-th forecast; in between they are frozen while the window
//! statistics (loadings, idiosyncratic part, mean, variance states) are
//! recomputed daily.

use std::collections::HashMap;
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::backtest::{self, BacktestResult, ReportRow, DEFAULT_DQ_LAGS};
use crate::bench::BenchModel;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fgarch::GarchParams;
use crate::forecast::{QuantileKind, QuantileRule};
use crate::panel::{Portfolio, ReturnPanel};
use crate::pipeline::{self, FittedModel, ModelConfig, ModelKind, PanelWindow, PgarchFit, PgarchState, SharedForecasts};

pub const DEFAULT_ALPHAS: [f64; 4] = [0.10, 0.05, 0.02, 0.01];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RollingConfig {
    pub window: usize,
    pub refit_every: usize,
    pub models: Vec<ModelKind>,
    pub rules: Vec<QuantileKind>,
    pub alphas: Vec<f64>,
    pub model: ModelConfig,
    pub dq_lags: usize,
    pub execution: Execution,
}

impl Default for RollingConfig {
    fn default() -> Self {
        Self {
            window: 252,
            refit_every: 10,
            models: ModelKind::ALL.to_vec(),
            rules: vec![
                QuantileKind::Normal,
                QuantileKind::StudentT { nu: 6.0 },
                QuantileKind::Empirical,
            ],
            alphas: DEFAULT_ALPHAS.to_vec(),
            model: ModelConfig::default(),
            dq_lags: DEFAULT_DQ_LAGS,
            execution: Execution::default(),
        }
    }
}

impl RollingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 30 {
            return Err(Error::InvalidArgument(format!(
                "window must be at least 30, got {}",
                self.window
            )));
        }
        if self.refit_every == 0 {
            return Err(Error::InvalidArgument("refit_every must be at least 1".to_string()));
        }
        if self.models.is_empty() || self.rules.is_empty() || self.alphas.is_empty() {
            return Err(Error::InvalidArgument(
                "models, quantile rules and alphas must be nonempty".to_string(),
            ));
        }
        for &a in &self.alphas {
            QuantileRule::new(QuantileKind::Normal, a)?;
        }
        if self.rules.contains(&QuantileKind::Empirical) {
            let smallest = self.alphas.iter().copied().fold(1.0, f64::min);
            let needed = (1.0 / smallest - 1e-9).ceil() as usize;
            if self.window < needed {
                return Err(Error::InvalidArgument(format!(
                    "the empirical rule at alpha={smallest} needs a window of at least {needed}"
                )));
            }
        }
        self.model.threshold.validate()
    }
}

/// Zero-based rows that receive a forecast.
pub fn forecast_origins(n_periods: usize, window: usize) -> Result<Range<usize>> {
    if n_periods <= window + 1 {
        return Err(Error::InsufficientData {
            required: window + 2,
            actual: n_periods,
        });
    }
    Ok(window + 1..n_periods)
}

/// `N = T − W − 1`.
pub fn forecast_count(n_periods: usize, window: usize) -> usize {
    n_periods.saturating_sub(window + 1)
}

/// Daily forecasts of one model for one portfolio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSeries {
    pub model: ModelKind,
    pub portfolio: usize,
    pub portfolio_size: usize,
    pub mean: Vec<f64>,
    pub sigma: Vec<f64>,
    pub realized: Vec<f64>,
    /// Empirical `c_α`, indexed `[alpha][day]`; empty without the empirical rule.
    pub empirical_c: Vec<Vec<f64>>,
    /// Days whose forecast failed and was carried forward from the previous day.
    pub failures: usize,
}

impl ForecastSeries {
    fn new(model: ModelKind, portfolio: usize, portfolio_size: usize, n_alpha: usize) -> Self {
        Self {
            model,
            portfolio,
            portfolio_size,
            mean: Vec::new(),
            sigma: Vec::new(),
            realized: Vec::new(),
            empirical_c: vec![Vec::new(); n_alpha],
            failures: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Every day has a finite forecast.
    pub fn is_complete(&self) -> bool {
        self.mean.iter().chain(&self.sigma).all(|v| v.is_finite())
            && self.empirical_c.iter().flatten().all(|v| v.is_finite())
    }

    /// `VaRₜ = −meanₜ − c_α σₜ` for `alphas[alpha_idx]`.
    pub fn var_series(&self, kind: QuantileKind, alphas: &[f64], alpha_idx: usize) -> Result<Vec<f64>> {
        let rule = QuantileRule::new(kind, alphas[alpha_idx])?;
        match kind {
            QuantileKind::Empirical => {
                let c = self.empirical_c.get(alpha_idx).filter(|c| c.len() == self.len()).ok_or_else(|| {
                    Error::InvalidArgument("series was produced without the empirical rule".to_string())
                })?;
                Ok((0..self.len()).map(|t| -self.mean[t] - c[t] * self.sigma[t]).collect())
            }
            _ => {
                let c = crate::forecast::quantile_value(&rule, None)?;
                Ok(self.mean.iter().zip(&self.sigma).map(|(m, s)| -m - c * s).collect())
            }
        }
    }

    fn push(&mut self, day: Result<DayForecast>, realized: f64) {
        self.realized.push(realized);
        match day {
            Ok(d) => {
                self.mean.push(d.mean);
                self.sigma.push(d.sigma);
                for (series, c) in self.empirical_c.iter_mut().zip(d.empirical_c) {
                    series.push(c);
                }
            }
            Err(e) => {
                log::warn!("{} forecast failed for portfolio {}: {e}", self.model, self.portfolio);
                self.failures += 1;
                let last = |v: &Vec<f64>| v.last().copied().unwrap_or(f64::NAN);
                self.mean.push(last(&self.mean));
                self.sigma.push(last(&self.sigma));
                for series in &mut self.empirical_c {
                    series.push(last(series));
                }
            }
        }
    }
}

struct DayForecast {
    mean: f64,
    sigma: f64,
    empirical_c: Vec<f64>,
}

/// Output of [`run_rolling`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RollingResult {
    pub dates: Vec<NaiveDate>,
    pub alphas: Vec<f64>,
    pub rules: Vec<QuantileKind>,
    pub series: Vec<ForecastSeries>,
    /// P-GARCH estimates with the index of the forecast at which they were fitted.
    pub pgarch_params: Vec<(usize, GarchParams)>,
    pub refit_failures: usize,
}

impl RollingResult {
    pub fn n_forecasts(&self) -> usize {
        self.dates.len()
    }
}

fn forecast_day(
    model: &FittedModel,
    window: &PanelWindow,
    w: &Portfolio,
    cfg: &RollingConfig,
    shared: &SharedForecasts,
) -> Result<DayForecast> {
    let pf = pipeline::forecast_portfolio(model, window, w, &cfg.model, Some(shared))?;
    if !(pf.var_next > 0.0) || !pf.var_next.is_finite() {
        return Err(Error::Numerical(format!("portfolio variance {}", pf.var_next)));
    }
    let empirical_c = if cfg.rules.contains(&QuantileKind::Empirical) {
        let hist = pf.standardized()?;
        cfg.alphas
            .iter()
            .map(|&a| crate::forecast::quantile_value(&QuantileRule::new(QuantileKind::Empirical, a)?, Some(&hist)))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(DayForecast {
        mean: pf.mean,
        sigma: pf.var_next.sqrt(),
        empirical_c,
    })
}

/// Rolling one-step forecasts for every portfolio and model.
pub fn run_rolling(panel: &ReturnPanel, portfolios: &[Portfolio], cfg: &RollingConfig) -> Result<RollingResult> {
    cfg.validate()?;
    if portfolios.is_empty() {
        return Err(Error::InvalidArgument("no portfolios given".to_string()));
    }
    let y = panel.returns();
    let p = panel.n_assets();
    for w in portfolios {
        w.check_width(p)?;
    }
    let origins = forecast_origins(panel.n_periods(), cfg.window)?;
    let n_models = cfg.models.len();
    let n_alpha = cfg.alphas.len();
    let needs_eigen = cfg.models.iter().any(|m| m.uses_full_panel());
    let has = |k: ModelKind| cfg.models.contains(&k);

    let mut series: Vec<ForecastSeries> = portfolios
        .iter()
        .enumerate()
        .flat_map(|(pi, w)| {
            cfg.models
                .iter()
                .map(move |&m| ForecastSeries::new(m, pi, w.support().len(), n_alpha))
        })
        .collect();
    let mut fitted: Vec<Option<FittedModel>> = vec![None; series.len()];
    let mut pg_fit: Option<PgarchFit> = None;
    let mut poet_rank: Option<usize> = None;
    let mut pgarch_params = Vec::new();
    let mut refit_failures = 0;

    for (k, d) in origins.clone().enumerate() {
        let raw: DMatrix<f64> = y.rows(d - cfg.window, cfg.window).into_owned();
        let window = PanelWindow::new(&raw, needs_eigen)?;

        if k % cfg.refit_every == 0 {
            if has(ModelKind::Pgarch) {
                match pipeline::fit_pgarch(&window, &cfg.model) {
                    Ok(f) => {
                        pgarch_params.push((k, f.params().clone()));
                        pg_fit = Some(f);
                    }
                    Err(e) => {
                        log::warn!("P-GARCH refit failed at forecast {k}: {e}");
                        refit_failures += 1;
                    }
                }
            }
            if has(ModelKind::StaticPoet) {
                match pipeline::resolve_rank(&window, &cfg.model) {
                    Ok(r) => poet_rank = Some(r),
                    Err(e) => {
                        log::warn!("static POET rank failed at forecast {k}: {e}");
                        refit_failures += 1;
                    }
                }
            }
            let refits = cfg.execution.map_range(series.len(), |i| {
                let (pi, kind) = (i / n_models, cfg.models[i % n_models]);
                match kind {
                    ModelKind::Ccc | ModelKind::BekkDiagVt | ModelKind::PortGarch => {
                        Some(pipeline::fit_model(kind, &window, &portfolios[pi], &cfg.model))
                    }
                    _ => None,
                }
            });
            for (i, r) in refits.into_iter().enumerate() {
                let kind = cfg.models[i % n_models];
                match r {
                    Some(Ok(m)) => fitted[i] = Some(m),
                    Some(Err(e)) => {
                        log::warn!("{kind} refit failed at forecast {k}: {e}");
                        refit_failures += 1;
                    }
                    None => {
                        fitted[i] = match kind {
                            ModelKind::Pgarch => pg_fit.clone().map(FittedModel::Pgarch),
                            ModelKind::HistVol => Some(FittedModel::Bench(BenchModel::HistVol)),
                            ModelKind::StaticPoet => {
                                poet_rank.map(|rank| FittedModel::Bench(BenchModel::StaticPoet { rank }))
                            }
                            _ => unreachable!(),
                        }
                    }
                }
            }
        }

        let shared = SharedForecasts {
            pgarch: pg_fit.as_ref().and_then(|f| match PgarchState::new(&window, f.params(), &cfg.model) {
                Ok(s) => Some(s),
                Err(e) => {
                    log::warn!("P-GARCH state failed at forecast {k}: {e}");
                    None
                }
            }),
            static_poet: poet_rank.and_then(|r| pipeline::static_poet_sigma(&window, r, &cfg.model).ok()),
        };
        let days = cfg.execution.map_range(series.len(), |i| {
            let w = &portfolios[i / n_models];
            match &fitted[i] {
                Some(m) => forecast_day(m, &window, w, cfg, &shared),
                None => Err(Error::Numerical("model has not been fitted".to_string())),
            }
        });
        let row = y.row(d);
        for (i, day) in days.into_iter().enumerate() {
            let w = portfolios[i / n_models].weights();
            let realized: f64 = w.iter().zip(row.iter()).map(|(a, b)| a * b).sum();
            series[i].push(day, realized);
        }
    }

    Ok(RollingResult {
        dates: origins.map(|d| panel.timestamps()[d]).collect(),
        alphas: cfg.alphas.clone(),
        rules: cfg.rules.clone(),
        series,
        pgarch_params,
        refit_failures,
    })
}

/// Backtest of one series under one rule and level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeriesBacktest {
    pub model: ModelKind,
    pub portfolio: usize,
    pub portfolio_size: usize,
    pub rule: QuantileKind,
    pub alpha: f64,
    pub result: BacktestResult,
}

/// Run every test on every complete series; incomplete series are skipped.
pub fn evaluate(result: &RollingResult, dq_lags: usize, exec: Execution) -> Result<Vec<SeriesBacktest>> {
    let jobs: Vec<(usize, QuantileKind, usize)> = result
        .series
        .iter()
        .enumerate()
        .filter(|(_, s)| {
            let ok = s.is_complete();
            if !ok {
                log::warn!("skipping {} for portfolio {}: no usable forecast", s.model, s.portfolio);
            }
            ok
        })
        .flat_map(|(i, _)| {
            result
                .rules
                .iter()
                .flat_map(move |&r| (0..result.alphas.len()).map(move |a| (i, r, a)))
        })
        .collect();
    exec.map(jobs, |(i, rule, a)| {
        let s = &result.series[i];
        let var = s.var_series(rule, &result.alphas, a)?;
        Ok(SeriesBacktest {
            model: s.model,
            portfolio: s.portfolio,
            portfolio_size: s.portfolio_size,
            rule,
            alpha: result.alphas[a],
            result: backtest::evaluate(&s.realized, &var, result.alphas[a], dq_lags)?,
        })
    })
    .into_iter()
    .collect()
}

/// Average hit rates and p-values by model, rule, level and portfolio size.
pub fn aggregate(backtests: &[SeriesBacktest]) -> Vec<ReportRow> {
    let mut order: Vec<(ModelKind, String, u64, usize)> = Vec::new();
    let mut groups: HashMap<(ModelKind, String, u64, usize), Vec<&BacktestResult>> = HashMap::new();
    for b in backtests {
        let key = (b.model, b.rule.label(), b.alpha.to_bits(), b.portfolio_size);
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(&b.result);
    }
    order
        .into_iter()
        .map(|key| {
            ReportRow::average(key.0.name(), &key.1, f64::from_bits(key.2), key.3, &groups[&key])
        })
        .collect()
}

/// One row per forecast day of a series, for external plotting.
#[derive(Debug, Clone, Serialize)]
struct VarRow<'a> {
    date: NaiveDate,
    portfolio: usize,
    model: &'a str,
    quantile_rule: String,
    alpha: f64,
    var: f64,
    realized: f64,
    hit: u8,
}

/// Long-format daily VaR series of every complete series.
pub fn write_var_series(result: &RollingResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    for s in result.series.iter().filter(|s| s.is_complete()) {
        for &rule in &result.rules {
            for (a, &alpha) in result.alphas.iter().enumerate() {
                let var = s.var_series(rule, &result.alphas, a)?;
                for (t, v) in var.iter().enumerate() {
                    w.serialize(VarRow {
                        date: result.dates[t],
                        portfolio: s.portfolio,
                        model: s.model.name(),
                        quantile_rule: rule.label(),
                        alpha,
                        var: *v,
                        realized: s.realized[t],
                        hit: u8::from(s.realized[t] < -v),
                    })?;
                }
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
