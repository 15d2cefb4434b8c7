use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use pgarch::backtest::ReportRow;
use pgarch::fgarch::{FitDiagnostics, GarchParams};
use pgarch::forecast::{self, QuantileKind, QuantileRule, VarForecast};
use pgarch::panel::{self, PanelFormat, Portfolio, ReturnPanel};
use pgarch::pipeline::{self, FittedModel, ModelKind, PanelWindow, PgarchState};
use pgarch::rolling::{self, RollingConfig, RollingResult, SeriesBacktest};
use pgarch::shrink::ThresholdMode;
use pgarch::simul::{self, DgpSpec, MetricTable, ReplicationConfig};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{InputInfo, OutDir};

fn load(cfg: &mut RunConfig) -> Result<(ReturnPanel, InputInfo), CliError> {
    let path = cfg
        .panel
        .clone()
        .ok_or_else(|| CliError::Usage("--panel is required".to_string()))?;
    let loaded = panel::load_panel(&path, PanelFormat::Csv)?;
    for id in &loaded.dropped {
        log::warn!("dropped asset {id} (missing values)");
    }
    let mut panel = loaded.panel;
    if let Some(g) = &cfg.groups {
        panel = panel.with_group_map(&panel::load_groups(g)?)?;
    }
    if cfg.model.threshold.mode == ThresholdMode::SectorBlock {
        let groups = panel
            .groups()
            .ok_or_else(|| CliError::Usage("sector_block thresholding needs --groups".to_string()))?;
        cfg.model.threshold.groups = Some(groups.to_vec());
    }
    let dates = panel.timestamps();
    let info = InputInfo {
        panel: path,
        n_periods: panel.n_periods(),
        n_assets: panel.n_assets(),
        first_date: dates[0].to_string(),
        last_date: dates[dates.len() - 1].to_string(),
        dropped_assets: loaded.dropped,
    };
    Ok((panel, info))
}

/// Rows used by the single-shot commands: the last `window` days, or the
/// whole panel when it is shorter and no window was requested.
fn last_window(panel: &ReturnPanel, cfg: &RunConfig) -> Result<DMatrix<f64>, CliError> {
    let n = panel.n_periods();
    let w = if cfg.window_given { cfg.window } else { cfg.window.min(n) };
    if w > n {
        return Err(pgarch::Error::InsufficientData { required: w, actual: n }.into());
    }
    Ok(panel.returns().rows(n - w, w).into_owned())
}

fn parse_weights(spec: &str, panel: &ReturnPanel) -> Result<Portfolio, CliError> {
    let mut w = vec![0.0; panel.n_assets()];
    for item in spec.split(',').filter(|s| !s.trim().is_empty()) {
        let (id, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("weights must look like ID=w, got {item:?}")))?;
        let idx = panel
            .asset_index(id.trim())
            .ok_or_else(|| pgarch::Error::Data(format!("unknown asset {:?} in --weights", id.trim())))?;
        w[idx] += value
            .trim()
            .parse::<f64>()
            .map_err(|_| CliError::Usage(format!("bad weight {value:?}")))?;
    }
    Ok(Portfolio::new(w)?)
}

fn portfolios(cfg: &RunConfig, panel: &ReturnPanel) -> Result<Vec<(String, Portfolio)>, CliError> {
    let p = panel.n_assets();
    if let Some(path) = &cfg.portfolios {
        return Ok(panel::load_portfolios(path, panel)?);
    }
    if let Some(spec) = &cfg.weights {
        return Ok(vec![("weights".to_string(), parse_weights(spec, panel)?)]);
    }
    if let Some(n) = cfg.random_portfolios {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut out = Vec::new();
        for &size in &cfg.portfolio_sizes {
            if size == 0 || size > p {
                return Err(CliError::Usage(format!("portfolio size {size} must lie in 1..={p}")));
            }
            for i in 0..n {
                let assets = rand::seq::index::sample(&mut rng, p, size).into_vec();
                out.push((format!("random{size}_{i:04}"), Portfolio::equal_weighted(p, &assets)?));
            }
        }
        return Ok(out);
    }
    let all: Vec<usize> = (0..p).collect();
    Ok(vec![("equal_weight".to_string(), Portfolio::equal_weighted(p, &all)?)])
}

fn rules(cfg: &RunConfig) -> Result<Vec<QuantileRule>, CliError> {
    let mut out = Vec::new();
    for &kind in &cfg.quantiles {
        for &alpha in &cfg.alphas {
            out.push(QuantileRule::new(kind, alpha)?);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- simulate

pub fn simulate(cfg: RunConfig, emit_panel: bool) -> Result<(), CliError> {
    let mut out = OutDir::create(&cfg.out_dir)?;
    let mut table = MetricTable::default();
    for &p in &cfg.p {
        for &t in &cfg.t {
            let spec = DgpSpec::reference(p, t);
            spec.validate()?;
            let rc = ReplicationConfig {
                n_reps: cfg.reps,
                seed: cfg.seed,
                models: cfg.models.clone(),
                metrics: cfg.metrics.clone(),
                portfolio_size: cfg.sim_portfolio_size,
                alpha: cfg.alphas[0],
                rules: cfg.quantiles.clone(),
                model: cfg.model.clone(),
                execution: cfg.execution,
            };
            log::info!("simulating p={p} T={t} with {} replications", cfg.reps);
            table.extend(simul::run_replications(&spec, &rc)?);
        }
    }
    if emit_panel {
        let data = simul::generate(&DgpSpec::reference(cfg.p[0], cfg.t[0]), cfg.seed, 0)?;
        panel::write_panel(&data.panel, out.file("panel.csv"))?;
    }
    table.write_csv(out.file("metrics.csv"))?;
    println!("{:>5} {:>6} {:<13} {:<22} {:>12} {:>12} {:>5}", "p", "T", "model", "metric", "mean", "sd", "fail");
    for r in &table.rows {
        let shown = cfg.metrics.is_some()
            || r.metric.starts_with("mae_omega")
            || r.metric == "rel_frobenius"
            || r.metric == "port_frobenius"
            || r.metric.starts_with("var_mae_");
        if shown {
            println!(
                "{:>5} {:>6} {:<13} {:<22} {:>12.5e} {:>12.5e} {:>5}",
                r.p, r.t, r.model, r.metric, r.mean, r.sd, r.failures
            );
        }
    }
    out.finish("simulate", &cfg, None)
}

// --------------------------------------------------------------------- fit

#[derive(Serialize)]
struct FitReport {
    rank: usize,
    n_periods: usize,
    param_names: Vec<String>,
    params: Vec<f64>,
    omega: Vec<f64>,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    mean_factor_vol: Vec<f64>,
    h_next: Vec<f64>,
    diagnostics: FitDiagnostics,
}

#[derive(Serialize)]
struct ParamRow<'a> {
    name: &'a str,
    value: f64,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn fit_report(window: &PanelWindow, theta: &GarchParams, state: &PgarchState, diag: &FitDiagnostics) -> FitReport {
    let r = theta.rank();
    FitReport {
        rank: r,
        n_periods: window.n_periods(),
        param_names: GarchParams::param_names(r),
        params: theta.to_vec(),
        omega: theta.omega.iter().copied().collect(),
        a: rows_of(&theta.a),
        b: rows_of(&theta.b),
        mean_factor_vol: state.decomp.mean_factor_vol().iter().copied().collect(),
        h_next: state.forecast.h_next.iter().copied().collect(),
        diagnostics: diag.clone(),
    }
}

fn warn_diagnostics(d: &FitDiagnostics) {
    if d.short_sample {
        log::warn!("the window is short for the number of GARCH parameters; estimates may be noisy");
    }
    if !d.converged {
        log::warn!("optimizer stopped before convergence (gradient norm {:.3e})", d.grad_norm);
    }
}

pub fn fit(mut cfg: RunConfig) -> Result<(), CliError> {
    let (panel, info) = load(&mut cfg)?;
    let raw = last_window(&panel, &cfg)?;
    let window = PanelWindow::new(&raw, true)?;
    let fit = pipeline::fit_pgarch(&window, &cfg.model)?;
    let state = PgarchState::new(&window, fit.params(), &cfg.model)?;
    let report = fit_report(&window, fit.params(), &state, &fit.qmle.diagnostics);
    warn_diagnostics(&report.diagnostics);

    let mut out = OutDir::create(&cfg.out_dir)?;
    out.json("fit.json", &report)?;
    out.csv(
        "params.csv",
        report
            .param_names
            .iter()
            .zip(&report.params)
            .map(|(name, &value)| ParamRow { name, value }),
    )?;
    println!("rank {} on {} days, objective {:.6}", report.rank, report.n_periods, report.diagnostics.objective);
    for (name, value) in report.param_names.iter().zip(&report.params) {
        println!("  {name:<8} {value:>12.6}");
    }
    out.finish("fit", &cfg, Some(info))
}

// ---------------------------------------------------------------- forecast

#[derive(Debug, Clone, Serialize)]
pub struct ForecastRow {
    pub portfolio: String,
    pub model: String,
    pub quantile_rule: String,
    pub alpha: f64,
    pub mean: f64,
    pub sigma: f64,
    pub c_alpha: f64,
    pub var: f64,
}

#[derive(Serialize)]
struct SigmaRow<'a> {
    asset_i: &'a str,
    asset_j: &'a str,
    total: f64,
    factor: f64,
    idio: f64,
}

/// VaR of a P-GARCH forecast through the library's `var_forecast`.
fn pgarch_var(
    state: &PgarchState,
    window: &PanelWindow,
    w: &Portfolio,
    rule: &QuantileRule,
) -> Result<VarForecast, CliError> {
    let history = if rule.kind == QuantileKind::Empirical {
        let path = forecast::pgarch_port_var_path(
            &state.decomp.loadings,
            &state.path,
            &state.forecast.idio_part,
            &w.as_vector(),
        );
        Some(forecast::standardize(&window.portfolio_centered(w)?, &path)?)
    } else {
        None
    };
    Ok(forecast::var_forecast(&state.forecast, w, &window.mean, rule, history.as_deref())?)
}

pub fn forecast(mut cfg: RunConfig) -> Result<(), CliError> {
    let (panel, info) = load(&mut cfg)?;
    let raw = last_window(&panel, &cfg)?;
    let needs_eigen = cfg.models.iter().any(|m| m.uses_full_panel());
    let window = PanelWindow::new(&raw, needs_eigen)?;
    let ports = portfolios(&cfg, &panel)?;
    let rules = rules(&cfg)?;
    let mut out = OutDir::create(&cfg.out_dir)?;

    let pgarch_state = if cfg.models.contains(&ModelKind::Pgarch) {
        let fit = pipeline::fit_pgarch(&window, &cfg.model)?;
        let state = PgarchState::new(&window, fit.params(), &cfg.model)?;
        warn_diagnostics(&fit.qmle.diagnostics);
        out.json("fit.json", &fit_report(&window, fit.params(), &state, &fit.qmle.diagnostics))?;
        let ids = panel.asset_ids();
        let f = &state.forecast;
        let p = ids.len();
        out.csv(
            "sigma.csv",
            (0..p).flat_map(|i| (i..p).map(move |j| (i, j))).map(|(i, j)| SigmaRow {
                asset_i: &ids[i],
                asset_j: &ids[j],
                total: f.sigma[(i, j)],
                factor: f.factor_part[(i, j)],
                idio: f.idio_part[(i, j)],
            }),
        )?;
        Some(state)
    } else {
        None
    };

    let mut rows = Vec::new();
    for (name, w) in &ports {
        for &kind in &cfg.models {
            let fitted = match (kind, &pgarch_state) {
                (ModelKind::Pgarch, Some(_)) => None,
                _ => Some(pipeline::fit_model(kind, &window, w, &cfg.model)?),
            };
            let pf = match &fitted {
                Some(m @ FittedModel::Bench(_)) => Some(pipeline::forecast_portfolio(m, &window, w, &cfg.model, None)?),
                _ => None,
            };
            for rule in &rules {
                let v = match (&pf, &pgarch_state) {
                    (Some(pf), _) => pf.var(rule)?,
                    (None, Some(state)) => pgarch_var(state, &window, w, rule)?,
                    (None, None) => unreachable!("every model yields a forecast"),
                };
                rows.push(ForecastRow {
                    portfolio: name.clone(),
                    model: kind.name().to_string(),
                    quantile_rule: rule.kind.label(),
                    alpha: rule.alpha,
                    mean: v.mean_port,
                    sigma: v.sigma_port,
                    c_alpha: v.c_alpha,
                    var: v.var_value,
                });
            }
        }
    }
    out.csv("forecast.csv", &rows)?;
    println!(
        "one-step forecast after {} from {} days",
        info.last_date,
        window.n_periods()
    );
    println!("{:<16} {:<13} {:<10} {:>6} {:>12} {:>12}", "portfolio", "model", "rule", "alpha", "sigma", "VaR");
    for r in &rows {
        println!(
            "{:<16} {:<13} {:<10} {:>6} {:>12.6} {:>12.6}",
            r.portfolio, r.model, r.quantile_rule, r.alpha, r.sigma, r.var
        );
    }
    out.finish("forecast", &cfg, Some(info))
}

// ------------------------------------------------------ backtest / compare

#[derive(Serialize)]
struct SeriesRow<'a> {
    portfolio: &'a str,
    portfolio_size: usize,
    model: &'a str,
    quantile_rule: String,
    alpha: f64,
    n: usize,
    n_hits: usize,
    hit_rate: f64,
    lr_uc: f64,
    lr_uc_p: f64,
    lr_ind: f64,
    lr_ind_p: f64,
    lr_cc: f64,
    lr_cc_p: f64,
    dq_hit: f64,
    dq_hit_p: f64,
    dq_var: f64,
    dq_var_p: f64,
    dq_dropped: usize,
}

#[derive(Serialize)]
struct DailyRow<'a> {
    date: String,
    portfolio: &'a str,
    model: &'a str,
    mean: f64,
    sigma: f64,
    realized: f64,
}

#[derive(Serialize)]
struct RefitRow<'a> {
    forecast_index: usize,
    date: String,
    param: &'a str,
    value: f64,
}

struct Backtest {
    result: RollingResult,
    rows: Vec<ReportRow>,
    info: InputInfo,
    out: OutDir,
}

fn run_backtest(cfg: &mut RunConfig) -> Result<Backtest, CliError> {
    let (panel, info) = load(cfg)?;
    let ports = portfolios(cfg, &panel)?;
    let rc = RollingConfig {
        window: cfg.window,
        refit_every: cfg.refit_every,
        models: cfg.models.clone(),
        rules: cfg.quantiles.clone(),
        alphas: cfg.alphas.clone(),
        model: cfg.model.clone(),
        dq_lags: cfg.dq_lags,
        execution: cfg.execution,
    };
    let weights: Vec<Portfolio> = ports.iter().map(|(_, w)| w.clone()).collect();
    log::info!("rolling {} portfolios over {} days", ports.len(), panel.n_periods());
    let result = rolling::run_rolling(&panel, &weights, &rc)?;
    let tests: Vec<SeriesBacktest> = rolling::evaluate(&result, cfg.dq_lags, cfg.execution)?;
    let rows = rolling::aggregate(&tests);

    let mut out = OutDir::create(&cfg.out_dir)?;
    let names: Vec<&str> = ports.iter().map(|(n, _)| n.as_str()).collect();
    out.csv(
        "backtests.csv",
        tests.iter().map(|t| SeriesRow {
            portfolio: names[t.portfolio],
            portfolio_size: t.portfolio_size,
            model: t.model.name(),
            quantile_rule: t.rule.label(),
            alpha: t.alpha,
            n: t.result.n,
            n_hits: t.result.n_hits,
            hit_rate: t.result.hit_rate,
            lr_uc: t.result.lr_uc.stat,
            lr_uc_p: t.result.lr_uc.p_value,
            lr_ind: t.result.lr_cc.ind.stat,
            lr_ind_p: t.result.lr_cc.ind.p_value,
            lr_cc: t.result.lr_cc.cc.stat,
            lr_cc_p: t.result.lr_cc.cc.p_value,
            dq_hit: t.result.dq_hit.test.stat,
            dq_hit_p: t.result.dq_hit.test.p_value,
            dq_var: t.result.dq_var.test.stat,
            dq_var_p: t.result.dq_var.test.p_value,
            dq_dropped: t.result.dq_hit.dropped.len() + t.result.dq_var.dropped.len(),
        }),
    )?;
    out.csv("report.csv", &rows)?;
    rolling::write_var_series(&result, out.file("var_series.csv"))?;
    out.csv(
        "daily.csv",
        result.series.iter().flat_map(|s| {
            let dates = &result.dates;
            let name = names[s.portfolio];
            (0..s.len()).map(move |t| DailyRow {
                date: dates[t].to_string(),
                portfolio: name,
                model: s.model.name(),
                mean: s.mean[t],
                sigma: s.sigma[t],
                realized: s.realized[t],
            })
        }),
    )?;
    let param_names = result
        .pgarch_params
        .first()
        .map(|(_, th)| GarchParams::param_names(th.rank()))
        .unwrap_or_default();
    out.csv(
        "refits.csv",
        result.pgarch_params.iter().flat_map(|(k, th)| {
            let date = result.dates[*k].to_string();
            param_names
                .iter()
                .zip(th.to_vec())
                .map(move |(name, value)| RefitRow {
                    forecast_index: *k,
                    date: date.clone(),
                    param: name,
                    value,
                })
                .collect::<Vec<_>>()
        }),
    )?;
    let failures: usize = result.series.iter().map(|s| s.failures).sum();
    println!(
        "{} forecasts per series, {} series, {} failed forecast days, {} failed refits",
        result.n_forecasts(),
        result.series.len(),
        failures,
        result.refit_failures
    );
    Ok(Backtest {
        result,
        rows,
        info,
        out,
    })
}

fn print_report(rows: &[ReportRow]) {
    println!(
        "{:<13} {:<10} {:>6} {:>5} {:>9} {:>8} {:>8} {:>8} {:>8}",
        "model", "rule", "alpha", "size", "hit", "LRuc p", "LRcc p", "DQhit p", "DQvar p"
    );
    for r in rows {
        println!(
            "{:<13} {:<10} {:>6} {:>5} {:>9.5} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            r.model, r.quantile_rule, r.alpha, r.portfolio_size, r.hit_rate, r.lr_uc_p, r.lr_cc_p, r.dq_hit_p, r.dq_var_p
        );
    }
}

pub fn backtest(mut cfg: RunConfig) -> Result<(), CliError> {
    let bt = run_backtest(&mut cfg)?;
    print_report(&bt.rows);
    bt.out.finish("backtest", &cfg, Some(bt.info))
}

#[derive(Debug, Clone, Serialize)]
struct RankRow {
    rank: usize,
    model: String,
    quantile_rule: String,
    /// Mean of `|hit rate − α| / α` over levels and portfolio sizes.
    coverage_error: f64,
    lr_uc_p: f64,
    lr_cc_p: f64,
    dq_hit_p: f64,
    dq_var_p: f64,
}

fn rank_models(rows: &[ReportRow]) -> Vec<RankRow> {
    let mut groups: BTreeMap<(String, String), Vec<&ReportRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.model.clone(), r.quantile_rule.clone())).or_default().push(r);
    }
    let mut out: Vec<RankRow> = groups
        .into_iter()
        .map(|((model, rule), g)| {
            let n = g.len() as f64;
            let avg = |f: fn(&ReportRow) -> f64| g.iter().map(|r| f(r)).sum::<f64>() / n;
            RankRow {
                rank: 0,
                model,
                quantile_rule: rule,
                coverage_error: avg(|r| (r.hit_rate - r.alpha).abs() / r.alpha),
                lr_uc_p: avg(|r| r.lr_uc_p),
                lr_cc_p: avg(|r| r.lr_cc_p),
                dq_hit_p: avg(|r| r.dq_hit_p),
                dq_var_p: avg(|r| r.dq_var_p),
            }
        })
        .collect();
    out.sort_by(|a, b| a.coverage_error.total_cmp(&b.coverage_error));
    for (i, r) in out.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    out
}

pub fn compare(mut cfg: RunConfig) -> Result<(), CliError> {
    let mut bt = run_backtest(&mut cfg)?;
    let ranking = rank_models(&bt.rows);
    bt.out.csv("ranking.csv", &ranking)?;
    print_report(&bt.rows);
    println!();
    println!("{:>4} {:<13} {:<10} {:>10} {:>8} {:>8}", "rank", "model", "rule", "cov.err", "LRuc p", "DQhit p");
    for r in &ranking {
        println!(
            "{:>4} {:<13} {:<10} {:>10.4} {:>8.4} {:>8.4}",
            r.rank, r.model, r.quantile_rule, r.coverage_error, r.lr_uc_p, r.dq_hit_p
        );
    }
    log::debug!("{} dates compared", bt.result.dates.len());
    bt.out.finish("compare", &cfg, Some(bt.info))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(model: &str, hit: f64) -> ReportRow {
        ReportRow {
            model: model.to_string(),
            quantile_rule: "normal".to_string(),
            alpha: 0.01,
            portfolio_size: 5,
            hit_rate: hit,
            lr_uc_p: 0.5,
            lr_cc_p: 0.5,
            dq_hit_p: 0.5,
            dq_var_p: 0.5,
        }
    }

    #[test]
    fn ranking_orders_by_coverage_error() {
        let ranked = rank_models(&[row("hist_vol", 0.03), row("pgarch", 0.011), row("ccc", 0.005)]);
        let order: Vec<&str> = ranked.iter().map(|r| r.model.as_str()).collect();
        assert_eq!(order, ["pgarch", "ccc", "hist_vol"]);
        assert!((ranked[0].coverage_error - 0.1).abs() < 1e-12);
        assert_eq!(ranked[2].rank, 3);
    }

    #[test]
    fn inline_weights() {
        let x = DMatrix::from_fn(40, 3, |i, j| ((i * 7 + j * 3) % 11) as f64 * 0.01);
        let panel = ReturnPanel::with_synthetic_dates(x).unwrap();
        let w = parse_weights("A0000=0.25, A0002=0.75", &panel).unwrap();
        assert_eq!(w.weights(), &[0.25, 0.0, 0.75]);
        assert!(parse_weights("ZZZ=1", &panel).is_err());
        assert!(matches!(parse_weights("A0000", &panel), Err(CliError::Usage(_))));
    }
}
