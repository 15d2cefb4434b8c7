//! One-step-ahead covariance forecast and σ-based Value-at-Risk.
//!
//! The forecast is `Σ̂_{T+1} = V̂ diag(ĥ_{T+1}) V̂ᵀ + 𝒯(Σ̂_u)` where `𝒯` is the
//! thresholding operator of [`crate::shrink`]. VaR at level `α` is
//! `−wᵀȳ − c_α √(wᵀ Σ̂_{T+1} w)` with `c_α` taken from a normal, a
//! variance-standardised Student-t, or the empirical distribution of
//! in-window standardised portfolio returns.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::fgarch::{self, GarchParams, VolPath};
use crate::linalg;
use crate::panel::Portfolio;
use crate::shrink::{self, ThresholdSpec};
use crate::spectral::FactorDecomposition;

/// Predicted covariance with its factor / idiosyncratic split.
#[derive(Debug, Clone)]
pub struct VolForecast {
    pub sigma: DMatrix<f64>,
    pub factor_part: DMatrix<f64>,
    pub idio_part: DMatrix<f64>,
    pub h_next: DVector<f64>,
}

impl VolForecast {
    /// Restrict every matrix to the given assets.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            sigma: linalg::submatrix(&self.sigma, idx),
            factor_part: linalg::submatrix(&self.factor_part, idx),
            idio_part: linalg::submatrix(&self.idio_part, idx),
            h_next: self.h_next.clone(),
        }
    }
}

/// `V diag(h) Vᵀ`.
pub fn factor_covariance(loadings: &DMatrix<f64>, h: &DVector<f64>) -> DMatrix<f64> {
    let scaled = DMatrix::from_fn(loadings.nrows(), loadings.ncols(), |i, j| {
        loadings[(i, j)] * h[j]
    });
    let mut out = scaled * loadings.transpose();
    linalg::symmetrize(&mut out);
    out
}

/// Thresholded (and optionally PSD-repaired) idiosyncratic covariance.
pub fn idiosyncratic_part(
    residual_cov: &DMatrix<f64>,
    spec: &ThresholdSpec,
    t: usize,
    repair: bool,
) -> Result<DMatrix<f64>> {
    let p = residual_cov.nrows();
    let tau = shrink::threshold_level(spec, p.max(2), t);
    let thresholded = shrink::apply_threshold(residual_cov, tau, spec)?;
    Ok(if repair {
        shrink::psd_repair(&thresholded, None)
    } else {
        thresholded
    })
}

/// P-GARCH one-step-ahead forecast.
///
/// `fsq` holds the squared in-window factors (`T × r`); `t` is the window
/// length used for the threshold level. The idiosyncratic part is PSD-repaired
/// when `repair` is set, so `sigma` stays PSD.
pub fn pgarch_forecast(
    decomp: &FactorDecomposition,
    theta: &GarchParams,
    fsq: &DMatrix<f64>,
    spec: &ThresholdSpec,
    t: usize,
    repair: bool,
) -> Result<VolForecast> {
    let path = fgarch::recurse_h(theta, fsq)?;
    let idio_part = idiosyncratic_part(&decomp.residual_cov, spec, t, repair)?;
    Ok(assemble(decomp, &path, fsq, idio_part))
}

/// Like [`pgarch_forecast`] with a precomputed variance path and idiosyncratic part.
pub fn assemble(
    decomp: &FactorDecomposition,
    path: &VolPath,
    fsq: &DMatrix<f64>,
    idio_part: DMatrix<f64>,
) -> VolForecast {
    let h_next = path.next(fsq);
    let factor_part = factor_covariance(&decomp.loadings, &h_next);
    let sigma = &factor_part + &idio_part;
    VolForecast {
        sigma,
        factor_part,
        idio_part,
        h_next,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum QuantileKind {
    Normal,
    StudentT { nu: f64 },
    Empirical,
}

impl QuantileKind {
    /// Label used in report files.
    pub fn label(&self) -> String {
        match self {
            Self::Normal => "normal".to_string(),
            Self::StudentT { nu } => format!("t{nu}"),
            Self::Empirical => "empirical".to_string(),
        }
    }
}

impl fmt::Display for QuantileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for QuantileKind {
    type Err = Error;

    /// Accepts `normal`, `empirical`, `t` (ν = 6) or `tNU` / `student_t:NU`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "normal" | "gaussian" | "z" => return Ok(Self::Normal),
            "empirical" | "sample" | "nonparametric" => return Ok(Self::Empirical),
            "t" | "student_t" => return Ok(Self::StudentT { nu: 6.0 }),
            _ => {}
        }
        let rest = s
            .strip_prefix("student_t:")
            .or_else(|| s.strip_prefix('t'))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown quantile rule {s:?}")))?;
        let nu: f64 = rest
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad degrees of freedom in {s:?}")))?;
        Ok(Self::StudentT { nu })
    }
}

/// How `c_α` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileRule {
    pub kind: QuantileKind,
    pub alpha: f64,
}

impl QuantileRule {
    pub fn new(kind: QuantileKind, alpha: f64) -> Result<Self> {
        let rule = Self { kind, alpha };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if let QuantileKind::StudentT { nu } = self.kind {
            if !(nu > 2.0) || !nu.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "Student-t rule needs nu > 2, got {nu}"
                )));
            }
        }
        Ok(())
    }
}

/// `⌈α n⌉`, robust to `α n` landing a rounding error above an integer.
pub fn ceil_rank(alpha: f64, n: usize) -> usize {
    let x = alpha * n as f64;
    let k = (x - 1e-9 * x.max(1.0)).ceil() as usize;
    k.max(1)
}

/// `c_α` for the given rule.
pub fn quantile_value(rule: &QuantileRule, history: Option<&[f64]>) -> Result<f64> {
    rule.validate()?;
    match rule.kind {
        QuantileKind::Normal => Ok(Normal::standard().inverse_cdf(rule.alpha)),
        QuantileKind::StudentT { nu } => {
            let dist = StudentsT::new(0.0, 1.0, nu)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            Ok(dist.inverse_cdf(rule.alpha) * ((nu - 2.0) / nu).sqrt())
        }
        QuantileKind::Empirical => {
            let h = history.ok_or_else(|| {
                Error::InvalidArgument("empirical rule needs a standardized history".to_string())
            })?;
            let needed = (1.0 / rule.alpha - 1e-9).ceil() as usize;
            if h.len() < needed {
                return Err(Error::InsufficientData {
                    required: needed,
                    actual: h.len(),
                });
            }
            if h.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical("non-finite standardized return".to_string()));
            }
            let k = ceil_rank(rule.alpha, h.len());
            let mut sorted = h.to_vec();
            let (_, kth, _) = sorted.select_nth_unstable_by(k - 1, f64::total_cmp);
            Ok(*kth)
        }
    }
}

/// Point VaR forecast and its ingredients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarForecast {
    pub var_value: f64,
    pub sigma_port: f64,
    pub mean_port: f64,
    pub c_alpha: f64,
}

impl VarForecast {
    pub fn from_parts(mean_port: f64, sigma_port: f64, c_alpha: f64) -> Self {
        Self {
            var_value: -mean_port - c_alpha * sigma_port,
            sigma_port,
            mean_port,
            c_alpha,
        }
    }
}

/// `wᵀ(yₜ − ȳ) / √(wᵀ Σ̂ₜ w)` over a window, from portfolio-level series.
pub fn standardize(centered_port: &[f64], port_var_path: &[f64]) -> Result<Vec<f64>> {
    if centered_port.len() != port_var_path.len() {
        return Err(Error::DimensionMismatch {
            context: "standardized history",
            expected: centered_port.len(),
            actual: port_var_path.len(),
        });
    }
    centered_port
        .iter()
        .zip(port_var_path)
        .map(|(&x, &v)| {
            if v > 0.0 && v.is_finite() {
                Ok(x / v.sqrt())
            } else {
                Err(Error::Numerical("non-positive in-window portfolio variance".to_string()))
            }
        })
        .collect()
}

/// In-window portfolio variances `wᵀ(V̂ diag(ĥₜ) V̂ᵀ + 𝒯(Σ̂_u))w` of a P-GARCH fit.
pub fn pgarch_port_var_path(
    loadings: &DMatrix<f64>,
    path: &VolPath,
    idio_part: &DMatrix<f64>,
    w: &DVector<f64>,
) -> Vec<f64> {
    let vw = loadings.transpose() * w;
    let idio = linalg::quad_form(w, idio_part);
    path.h
        .row_iter()
        .map(|h| h.iter().zip(vw.iter()).map(|(hj, b)| hj * b * b).sum::<f64>() + idio)
        .collect()
}

/// σ-based VaR for portfolio `w` given the forecast and the window mean.
///
/// `history` is the in-window standardised portfolio return series and is
/// only consulted by the empirical rule.
pub fn var_forecast(
    vol: &VolForecast,
    w: &Portfolio,
    mean: &DVector<f64>,
    rule: &QuantileRule,
    history: Option<&[f64]>,
) -> Result<VarForecast> {
    let p = vol.sigma.nrows();
    w.check_width(p)?;
    if mean.len() != p {
        return Err(Error::DimensionMismatch {
            context: "mean vector",
            expected: p,
            actual: mean.len(),
        });
    }
    let wv = w.as_vector();
    let var = linalg::quad_form(&wv, &vol.sigma);
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::Numerical(format!(
            "portfolio variance must be positive, got {var}"
        )));
    }
    let c = quantile_value(rule, history)?;
    Ok(VarForecast::from_parts(wv.dot(mean), var.sqrt(), c))
}
