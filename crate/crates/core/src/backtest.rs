//! VaR exceedance tests.
//!
//! Zero-count conventions: `0 · log 0 = 0` everywhere, so the likelihood-ratio
//! statistics stay finite when there are no hits, only hits, or no transitions
//! out of a state.

use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Default number of lagged hits in the DQ regression.
pub const DEFAULT_DQ_LAGS: usize = 4;

/// `hitₜ = 1{returnₜ < −VaRₜ}` together with its inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct HitSeries {
    pub hits: Vec<u8>,
    pub alpha: f64,
    pub var_series: Vec<f64>,
    pub returns: Vec<f64>,
}

impl HitSeries {
    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn n_hits(&self) -> usize {
        self.hits.iter().map(|&h| h as usize).sum()
    }

    pub fn hit_rate(&self) -> f64 {
        if self.hits.is_empty() {
            0.0
        } else {
            self.n_hits() as f64 / self.hits.len() as f64
        }
    }
}

pub fn hit_series(returns: &[f64], var_forecasts: &[f64], alpha: f64) -> Result<HitSeries> {
    if returns.len() != var_forecasts.len() {
        return Err(Error::DimensionMismatch {
            context: "hit series",
            expected: returns.len(),
            actual: var_forecasts.len(),
        });
    }
    let hits = returns
        .iter()
        .zip(var_forecasts)
        .map(|(&r, &v)| u8::from(r < -v))
        .collect();
    Ok(HitSeries {
        hits,
        alpha,
        var_series: var_forecasts.to_vec(),
        returns: returns.to_vec(),
    })
}

/// A test statistic with its asymptotic χ² p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub stat: f64,
    pub p_value: f64,
    pub df: usize,
}

/// Upper tail of χ²(df).
pub fn chi2_sf(x: f64, df: usize) -> f64 {
    if df == 0 {
        return 1.0;
    }
    if !(x > 0.0) {
        return 1.0;
    }
    let dist = ChiSquared::new(df as f64).expect("positive degrees of freedom");
    dist.sf(x).clamp(0.0, 1.0)
}

fn with_p(stat: f64, df: usize) -> TestResult {
    let stat = stat.max(0.0);
    TestResult {
        stat,
        p_value: chi2_sf(stat, df),
        df,
    }
}

/// `n · log(p)` with `0 · log 0 = 0`.
fn xlogy(n: f64, p: f64) -> f64 {
    if n == 0.0 {
        0.0
    } else {
        n * p.ln()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0,1), got {alpha}")));
    }
    Ok(())
}

/// Kupiec unconditional coverage test.
pub fn lr_uc(hits: &[u8], alpha: f64) -> Result<TestResult> {
    check_alpha(alpha)?;
    if hits.is_empty() {
        return Err(Error::InsufficientData {
            required: 1,
            actual: 0,
        });
    }
    let n = hits.len() as f64;
    let x = hits.iter().map(|&h| h as f64).sum::<f64>();
    let pi = x / n;
    let null = xlogy(n - x, 1.0 - alpha) + xlogy(x, alpha);
    let alt = xlogy(n - x, 1.0 - pi) + xlogy(x, pi);
    Ok(with_p(-2.0 * (null - alt), 1))
}

/// Transition counts `[n00, n01, n10, n11]` of a 0/1 sequence.
pub fn transition_counts(hits: &[u8]) -> [usize; 4] {
    let mut c = [0usize; 4];
    for w in hits.windows(2) {
        c[(w[0] as usize) * 2 + w[1] as usize] += 1;
    }
    c
}

/// Christoffersen first-order Markov independence test.
pub fn lr_ind(hits: &[u8]) -> Result<TestResult> {
    if hits.len() < 2 {
        return Err(Error::InsufficientData {
            required: 2,
            actual: hits.len(),
        });
    }
    let [n00, n01, n10, n11] = transition_counts(hits).map(|v| v as f64);
    let pi01 = if n00 + n01 > 0.0 { n01 / (n00 + n01) } else { 0.0 };
    let pi11 = if n10 + n11 > 0.0 { n11 / (n10 + n11) } else { 0.0 };
    let pi = (n01 + n11) / (n00 + n01 + n10 + n11);
    let null = xlogy(n00 + n10, 1.0 - pi) + xlogy(n01 + n11, pi);
    let alt = xlogy(n00, 1.0 - pi01) + xlogy(n01, pi01) + xlogy(n10, 1.0 - pi11) + xlogy(n11, pi11);
    Ok(with_p(-2.0 * (null - alt), 1))
}

/// Conditional coverage: `LR_cc = LR_uc + LR_ind` on χ²(2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalCoverage {
    pub uc: TestResult,
    pub ind: TestResult,
    pub cc: TestResult,
}

pub fn lr_cc(hits: &[u8], alpha: f64) -> Result<ConditionalCoverage> {
    let uc = lr_uc(hits, alpha)?;
    let ind = lr_ind(hits)?;
    let cc = with_p(uc.stat + ind.stat, 2);
    Ok(ConditionalCoverage { uc, ind, cc })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DqVariant {
    /// Constant and lagged hits.
    Hit,
    /// Constant, lagged hits and the VaR forecast itself.
    Var,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqResult {
    pub test: TestResult,
    /// Regressor columns dropped as collinear.
    pub dropped: Vec<usize>,
}

/// Engle–Manganelli dynamic quantile test.
///
/// Regresses `hitₜ − α` on a constant, `hitₜ₋₁ … hitₜ₋ₗ` and (for
/// [`DqVariant::Var`]) `VaRₜ`; the statistic is `β̂ᵀXᵀXβ̂ / (α(1−α))`, compared
/// with χ² on the number of retained regressors. Collinear columns are dropped
/// in order and reported.
pub fn dq_test(
    hits: &[u8],
    var_series: &[f64],
    alpha: f64,
    lags: usize,
    variant: DqVariant,
) -> Result<DqResult> {
    check_alpha(alpha)?;
    let n = hits.len();
    if var_series.len() != n {
        return Err(Error::DimensionMismatch {
            context: "DQ VaR series",
            expected: n,
            actual: var_series.len(),
        });
    }
    if n <= lags + 2 {
        return Err(Error::InsufficientData {
            required: lags + 3,
            actual: n,
        });
    }
    let rows = n - lags;
    let y: Vec<f64> = (lags..n).map(|t| hits[t] as f64 - alpha).collect();
    let mut columns: Vec<Vec<f64>> = vec![vec![1.0; rows]];
    for l in 1..=lags {
        columns.push((lags..n).map(|t| hits[t - l] as f64).collect());
    }
    if variant == DqVariant::Var {
        columns.push(var_series[lags..].to_vec());
    }

    // Modified Gram–Schmidt; ‖projection of y‖² equals β̂ᵀXᵀXβ̂.
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut dropped = Vec::new();
    for (k, col) in columns.into_iter().enumerate() {
        let norm0 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut v = col;
        for q in &basis {
            let d: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(x, qi)| *x -= d * qi);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm0 == 0.0 || norm <= 1e-9 * norm0 {
            dropped.push(k);
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    let explained: f64 = basis
        .iter()
        .map(|q| q.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>().powi(2))
        .sum();
    if !dropped.is_empty() {
        log::debug!("DQ regression dropped collinear columns {dropped:?}");
    }
    Ok(DqResult {
        test: with_p(explained / (alpha * (1.0 - alpha)), basis.len()),
        dropped,
    })
}

/// Every test on one VaR series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestResult {
    pub n: usize,
    pub n_hits: usize,
    pub hit_rate: f64,
    pub lr_uc: TestResult,
    pub lr_cc: ConditionalCoverage,
    pub dq_hit: DqResult,
    pub dq_var: DqResult,
}

pub fn evaluate(returns: &[f64], var_forecasts: &[f64], alpha: f64, lags: usize) -> Result<BacktestResult> {
    let hs = hit_series(returns, var_forecasts, alpha)?;
    let cc = lr_cc(&hs.hits, alpha)?;
    Ok(BacktestResult {
        n: hs.len(),
        n_hits: hs.n_hits(),
        hit_rate: hs.hit_rate(),
        lr_uc: cc.uc,
        lr_cc: cc,
        dq_hit: dq_test(&hs.hits, &hs.var_series, alpha, lags, DqVariant::Hit)?,
        dq_var: dq_test(&hs.hits, &hs.var_series, alpha, lags, DqVariant::Var)?,
    })
}

/// One aggregated line of a backtest report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub quantile_rule: String,
    pub alpha: f64,
    pub portfolio_size: usize,
    pub hit_rate: f64,
    pub lr_uc_p: f64,
    pub lr_cc_p: f64,
    pub dq_hit_p: f64,
    pub dq_var_p: f64,
}

impl ReportRow {
    /// Average hit rates and raw p-values over a group of results.
    pub fn average(
        model: &str,
        quantile_rule: &str,
        alpha: f64,
        portfolio_size: usize,
        results: &[&BacktestResult],
    ) -> Self {
        let n = results.len().max(1) as f64;
        let mean = |f: &dyn Fn(&BacktestResult) -> f64| results.iter().map(|r| f(r)).sum::<f64>() / n;
        Self {
            model: model.to_string(),
            quantile_rule: quantile_rule.to_string(),
            alpha,
            portfolio_size,
            hit_rate: mean(&|r| r.hit_rate),
            lr_uc_p: mean(&|r| r.lr_uc.p_value),
            lr_cc_p: mean(&|r| r.lr_cc.cc.p_value),
            dq_hit_p: mean(&|r| r.dq_hit.test.p_value),
            dq_var_p: mean(&|r| r.dq_var.test.p_value),
        }
    }
}

pub fn write_report_csv(rows: &[ReportRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
