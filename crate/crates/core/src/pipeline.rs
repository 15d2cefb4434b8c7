//! Model dispatch: fit any supported model on a window of returns and turn it
//! into a portfolio-level one-step forecast.
//!
//! P-GARCH and static POET work on the whole panel; CCC and BEKK on the
//! portfolio's assets; port-GARCH on the portfolio return series; Hist-Vol is
//! the window covariance.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bench::{self, BekkConfig, BenchModel};
use crate::error::{Error, Result};
use crate::fgarch::{self, FitConfig, GarchParams, QmleFit, VolPath};
use crate::forecast::{self, QuantileKind, QuantileRule, VarForecast, VolForecast};
use crate::linalg;
use crate::panel::{self, Portfolio};
use crate::shrink::ThresholdSpec;
use crate::spectral::{self, FactorDecomposition, RankConfig, SymEigen};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Pgarch,
    Ccc,
    BekkDiagVt,
    PortGarch,
    HistVol,
    StaticPoet,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        Self::Pgarch,
        Self::Ccc,
        Self::BekkDiagVt,
        Self::PortGarch,
        Self::HistVol,
        Self::StaticPoet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Pgarch => "pgarch",
            Self::Ccc => "ccc",
            Self::BekkDiagVt => "bekk_diag_vt",
            Self::PortGarch => "port_garch",
            Self::HistVol => "hist_vol",
            Self::StaticPoet => "static_poet",
        }
    }

    /// Produces an asset-level covariance forecast (everything but port-GARCH).
    pub fn has_matrix(self) -> bool {
        self != Self::PortGarch
    }

    /// Uses the eigendecomposition of the whole panel.
    pub fn uses_full_panel(self) -> bool {
        matches!(self, Self::Pgarch | Self::StaticPoet)
    }

    /// Parse a comma-separated list; `all` selects every model.
    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if part.eq_ignore_ascii_case("all") {
                out.extend(Self::ALL);
            } else {
                out.push(part.parse()?);
            }
        }
        out.dedup();
        if out.is_empty() {
            return Err(Error::InvalidArgument("empty model list".to_string()));
        }
        Ok(out)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        match key.as_str() {
            "pgarch" | "p_garch" => Ok(Self::Pgarch),
            "ccc" => Ok(Self::Ccc),
            "bekk" | "bekk_diag_vt" => Ok(Self::BekkDiagVt),
            "port_garch" | "portgarch" => Ok(Self::PortGarch),
            "hist_vol" | "histvol" => Ok(Self::HistVol),
            "static_poet" | "poet" => Ok(Self::StaticPoet),
            _ => Err(Error::InvalidArgument(format!("unknown model {s:?}"))),
        }
    }
}

/// Number of factors: fixed, or chosen by the eigenvalue criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum RankChoice {
    #[default]
    Auto,
    Fixed(usize),
}

impl fmt::Display for RankChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Auto => f.write_str("auto"),
            Self::Fixed(r) => write!(f, "{r}"),
        }
    }
}

impl FromStr for RankChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Self::Auto);
        }
        match s.parse::<usize>() {
            Ok(r) if r >= 1 => Ok(Self::Fixed(r)),
            _ => Err(Error::InvalidArgument(format!(
                "rank must be a positive integer or \"auto\", got {s:?}"
            ))),
        }
    }
}

impl From<RankChoice> for String {
    fn from(r: RankChoice) -> Self {
        r.to_string()
    }
}

impl TryFrom<String> for RankChoice {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Estimation settings shared by every model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub rank: RankChoice,
    pub rank_config: RankConfig,
    pub threshold: ThresholdSpec,
    pub fit: FitConfig,
    pub bekk: BekkConfig,
    /// Clip negative eigenvalues of the thresholded idiosyncratic part.
    pub psd_repair: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            rank: RankChoice::Auto,
            rank_config: RankConfig::default(),
            threshold: ThresholdSpec::default(),
            fit: FitConfig::default(),
            bekk: BekkConfig::default(),
            psd_repair: true,
        }
    }
}

/// A centered estimation window with its (optional) eigendecomposition.
#[derive(Debug, Clone)]
pub struct PanelWindow {
    pub centered: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub cov: Option<DMatrix<f64>>,
    pub eig: Option<SymEigen>,
}

impl PanelWindow {
    pub fn new(raw: &DMatrix<f64>, with_eigen: bool) -> Result<Self> {
        if raw.nrows() < 2 {
            return Err(Error::InsufficientData {
                required: 2,
                actual: raw.nrows(),
            });
        }
        let (centered, mean) = panel::demean_matrix(raw);
        let (cov, eig) = if with_eigen {
            let s = spectral::sample_cov(&centered)?;
            let e = spectral::eigh(&s)?;
            (Some(s), Some(e))
        } else {
            (None, None)
        };
        Ok(Self {
            centered,
            mean,
            cov,
            eig,
        })
    }

    pub fn n_periods(&self) -> usize {
        self.centered.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.centered.ncols()
    }

    fn spectral_parts(&self) -> Result<(&DMatrix<f64>, &SymEigen)> {
        match (&self.cov, &self.eig) {
            (Some(c), Some(e)) => Ok((c, e)),
            _ => Err(Error::InvalidArgument(
                "window was built without its eigendecomposition".to_string(),
            )),
        }
    }

    pub fn decompose(&self, r: usize) -> Result<FactorDecomposition> {
        let p = self.n_assets();
        if r == 0 || r >= p {
            return Err(Error::InvalidArgument(format!(
                "rank must satisfy 1 <= r < p, got r={r}, p={p}"
            )));
        }
        let (cov, eig) = self.spectral_parts()?;
        spectral::decomposition_from_eigen(cov, eig, r).with_factors(&self.centered)
    }

    /// Centered portfolio returns `wᵀ(yₜ − ȳ)`.
    pub fn portfolio_centered(&self, w: &Portfolio) -> Result<Vec<f64>> {
        Ok(panel::portfolio_returns_matrix(&self.centered, w)?
            .iter()
            .copied()
            .collect())
    }
}

pub fn resolve_rank(window: &PanelWindow, cfg: &ModelConfig) -> Result<usize> {
    let p = window.n_assets();
    match cfg.rank {
        RankChoice::Fixed(r) if r < p => Ok(r),
        RankChoice::Fixed(r) => Err(Error::InvalidArgument(format!(
            "rank {r} must be below the number of assets {p}"
        ))),
        RankChoice::Auto => {
            let (_, eig) = window.spectral_parts()?;
            let rc = RankConfig {
                r_max: cfg.rank_config.r_max.min(p - 1),
                ..cfg.rank_config
            };
            spectral::rank_from_eigvals(&eig.values, &rc, window.n_periods())
        }
    }
}

fn squared(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(|v| v * v)
}

/// Factor-GARCH parameters estimated on one window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PgarchFit {
    pub rank: usize,
    pub qmle: QmleFit,
}

impl PgarchFit {
    pub fn params(&self) -> &GarchParams {
        &self.qmle.params
    }
}

pub fn fit_pgarch(window: &PanelWindow, cfg: &ModelConfig) -> Result<PgarchFit> {
    let rank = resolve_rank(window, cfg)?;
    let decomp = window.decompose(rank)?;
    let fsq = squared(decomp.factors.as_ref().expect("factors extracted"));
    Ok(PgarchFit {
        rank,
        qmle: fgarch::qmle_fit(&fsq, &cfg.fit)?,
    })
}

/// P-GARCH state on one window for fixed `θ`.
#[derive(Debug, Clone)]
pub struct PgarchState {
    pub decomp: FactorDecomposition,
    pub fsq: DMatrix<f64>,
    pub path: VolPath,
    pub forecast: VolForecast,
}

impl PgarchState {
    pub fn new(window: &PanelWindow, theta: &GarchParams, cfg: &ModelConfig) -> Result<Self> {
        let decomp = window.decompose(theta.rank())?;
        let fsq = squared(decomp.factors.as_ref().expect("factors extracted"));
        let path = fgarch::recurse_h(theta, &fsq)?;
        let idio = forecast::idiosyncratic_part(
            &decomp.residual_cov,
            &cfg.threshold,
            window.n_periods(),
            cfg.psd_repair,
        )?;
        let forecast = forecast::assemble(&decomp, &path, &fsq, idio);
        Ok(Self {
            decomp,
            fsq,
            path,
            forecast,
        })
    }
}

/// Panel-wide static POET forecast.
pub fn static_poet_sigma(window: &PanelWindow, rank: usize, cfg: &ModelConfig) -> Result<DMatrix<f64>> {
    let decomp = window.decompose(rank)?;
    let idio = forecast::idiosyncratic_part(
        &decomp.residual_cov,
        &cfg.threshold,
        window.n_periods(),
        cfg.psd_repair,
    )?;
    Ok(forecast::factor_covariance(&decomp.loadings, &decomp.mean_factor_vol()) + idio)
}

/// Parameters of one model estimated on one window.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum FittedModel {
    Pgarch(PgarchFit),
    Bench(BenchModel),
}

impl FittedModel {
    pub fn flagged(&self) -> bool {
        match self {
            Self::Pgarch(f) => !f.qmle.diagnostics.converged,
            Self::Bench(b) => b.flagged(),
        }
    }
}

fn support_window(window: &PanelWindow, w: &Portfolio) -> (DMatrix<f64>, DVector<f64>, Vec<usize>) {
    let idx = w.support();
    let x = linalg::select_columns(&window.centered, &idx);
    let ws = DVector::from_iterator(idx.len(), idx.iter().map(|&i| w.weights()[i]));
    (x, ws, idx)
}

/// Estimate `kind` on a window for portfolio `w`.
pub fn fit_model(
    kind: ModelKind,
    window: &PanelWindow,
    w: &Portfolio,
    cfg: &ModelConfig,
) -> Result<FittedModel> {
    w.check_width(window.n_assets())?;
    Ok(match kind {
        ModelKind::Pgarch => FittedModel::Pgarch(fit_pgarch(window, cfg)?),
        ModelKind::Ccc => {
            let (x, _, _) = support_window(window, w);
            FittedModel::Bench(BenchModel::Ccc(bench::fit_ccc(&x, &cfg.fit)?))
        }
        ModelKind::BekkDiagVt => {
            let (x, _, _) = support_window(window, w);
            FittedModel::Bench(BenchModel::BekkDiagVt(bench::fit_bekk_diag_vt(&x, &cfg.bekk)?))
        }
        ModelKind::PortGarch => {
            let x = window.portfolio_centered(w)?;
            FittedModel::Bench(BenchModel::PortGarch(bench::fit_garch11(&x, &cfg.fit)?))
        }
        ModelKind::HistVol => FittedModel::Bench(BenchModel::HistVol),
        ModelKind::StaticPoet => FittedModel::Bench(BenchModel::StaticPoet {
            rank: resolve_rank(window, cfg)?,
        }),
    })
}

/// One-step forecast for one portfolio.
#[derive(Debug, Clone)]
pub struct PortfolioForecast {
    /// `wᵀȳ`.
    pub mean: f64,
    /// Forecast `wᵀΣ̂_{T+1}w`.
    pub var_next: f64,
    /// In-window conditional portfolio variances.
    pub var_path: Vec<f64>,
    /// In-window centered portfolio returns.
    pub centered: Vec<f64>,
    /// Forecast covariance of the portfolio's assets, when the model has one.
    pub sigma: Option<DMatrix<f64>>,
}

impl PortfolioForecast {
    pub fn standardized(&self) -> Result<Vec<f64>> {
        forecast::standardize(&self.centered, &self.var_path)
    }

    pub fn c_alpha(&self, rule: &QuantileRule) -> Result<f64> {
        match rule.kind {
            QuantileKind::Empirical => forecast::quantile_value(rule, Some(&self.standardized()?)),
            _ => forecast::quantile_value(rule, None),
        }
    }

    pub fn var(&self, rule: &QuantileRule) -> Result<VarForecast> {
        if !(self.var_next > 0.0) || !self.var_next.is_finite() {
            return Err(Error::Numerical(format!(
                "portfolio variance must be positive, got {}",
                self.var_next
            )));
        }
        Ok(VarForecast::from_parts(self.mean, self.var_next.sqrt(), self.c_alpha(rule)?))
    }
}

/// Window-level quantities shared by every portfolio.
#[derive(Debug, Default)]
pub struct SharedForecasts {
    pub pgarch: Option<PgarchState>,
    pub static_poet: Option<DMatrix<f64>>,
}

fn constant_path(var: f64, t: usize) -> Vec<f64> {
    vec![var; t]
}

/// Turn a fitted model into a portfolio forecast on `window`.
///
/// P-GARCH and static POET read their panel-level forecasts from `shared`
/// when present and compute them otherwise.
pub fn forecast_portfolio(
    model: &FittedModel,
    window: &PanelWindow,
    w: &Portfolio,
    cfg: &ModelConfig,
    shared: Option<&SharedForecasts>,
) -> Result<PortfolioForecast> {
    w.check_width(window.n_assets())?;
    let mean = w.as_vector().dot(&window.mean);
    let centered = window.portfolio_centered(w)?;
    let t = window.n_periods();
    let full_w = w.as_vector();
    let (var_next, var_path, sigma) = match model {
        FittedModel::Pgarch(fit) => {
            let owned;
            let state = match shared.and_then(|s| s.pgarch.as_ref()) {
                Some(s) => s,
                None => {
                    owned = PgarchState::new(window, fit.params(), cfg)?;
                    &owned
                }
            };
            let vf = &state.forecast;
            let path = forecast::pgarch_port_var_path(&state.decomp.loadings, &state.path, &vf.idio_part, &full_w);
            (
                linalg::quad_form(&full_w, &vf.sigma),
                path,
                Some(linalg::submatrix(&vf.sigma, &w.support())),
            )
        }
        FittedModel::Bench(BenchModel::StaticPoet { rank }) => {
            let owned;
            let sig = match shared.and_then(|s| s.static_poet.as_ref()) {
                Some(s) => s,
                None => {
                    owned = static_poet_sigma(window, *rank, cfg)?;
                    &owned
                }
            };
            let v = linalg::quad_form(&full_w, sig);
            (v, constant_path(v, t), Some(linalg::submatrix(sig, &w.support())))
        }
        FittedModel::Bench(BenchModel::HistVol) => {
            let (x, ws, _) = support_window(window, w);
            let s = bench::hist_vol(&x)?;
            let v = linalg::quad_form(&ws, &s);
            (v, constant_path(v, t), Some(s))
        }
        FittedModel::Bench(BenchModel::Ccc(fit)) => {
            let (x, ws, _) = support_window(window, w);
            let st = fit.state(&x)?;
            let s = st.sigma_next();
            (linalg::quad_form(&ws, &s), st.port_var_path(&ws), Some(s))
        }
        FittedModel::Bench(BenchModel::BekkDiagVt(fit)) => {
            let (x, ws, _) = support_window(window, w);
            let st = fit.state(&x)?;
            (linalg::quad_form(&ws, &st.sigma_next), st.port_var_path(&ws), Some(st.sigma_next))
        }
        FittedModel::Bench(BenchModel::PortGarch(fit)) => {
            let (path, next) = fit.params.filter(&centered);
            (next, path, None)
        }
    };
    Ok(PortfolioForecast {
        mean,
        var_next,
        var_path,
        centered,
        sigma,
    })
}
