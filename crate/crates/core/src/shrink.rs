//! Correlation-scaled thresholding of the idiosyncratic covariance.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// `x − sign(x)·τ√(σᵢᵢσⱼⱼ)` on surviving entries.
    #[default]
    Soft,
    /// Surviving entries are kept as is.
    Hard,
    /// Keep every within-group entry, zero every cross-group entry.
    SectorBlock,
}

impl FromStr for ThresholdMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "soft" => Ok(Self::Soft),
            "hard" => Ok(Self::Hard),
            "sector_block" | "sector" => Ok(Self::SectorBlock),
            other => Err(Error::InvalidArgument(format!("unknown threshold mode {other:?}"))),
        }
    }
}

/// Threshold level constants, mode and (for sector blocking) group labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub c_tau: f64,
    pub s_p: f64,
    pub mode: ThresholdMode,
    pub groups: Option<Vec<String>>,
}

impl Default for ThresholdSpec {
    fn default() -> Self {
        Self {
            c_tau: 1.0,
            s_p: 1.0,
            mode: ThresholdMode::Soft,
            groups: None,
        }
    }
}

impl ThresholdSpec {
    pub fn new(c_tau: f64, s_p: f64, mode: ThresholdMode) -> Result<Self> {
        let spec = Self {
            c_tau,
            s_p,
            mode,
            groups: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn sector_block(groups: Vec<String>) -> Self {
        Self {
            mode: ThresholdMode::SectorBlock,
            groups: Some(groups),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_tau > 0.0) || !self.c_tau.is_finite() {
            return Err(Error::InvalidArgument("c_tau must be positive".to_string()));
        }
        if !(self.s_p >= 0.0) || !self.s_p.is_finite() {
            return Err(Error::InvalidArgument("s_p must be nonnegative".to_string()));
        }
        if self.mode == ThresholdMode::SectorBlock && self.groups.is_none() {
            return Err(Error::InvalidArgument(
                "sector-block thresholding needs group labels".to_string(),
            ));
        }
        Ok(())
    }

    /// Restrict group labels to a subset of assets.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            groups: self
                .groups
                .as_ref()
                .map(|g| idx.iter().map(|&i| g[i].clone()).collect()),
            ..self.clone()
        }
    }
}

/// `τ = C_τ (√(log p / T) + √(s_p / p))`.
pub fn threshold_level(spec: &ThresholdSpec, p: usize, t: usize) -> f64 {
    let (p, t) = (p as f64, t as f64);
    spec.c_tau * ((p.ln() / t).sqrt() + (spec.s_p / p).sqrt())
}

/// Diagonal used for correlation scaling, with nonpositive entries floored at
/// `1e-10 · trace / p`.
fn scaling_diagonal(sigma: &DMatrix<f64>) -> DVector<f64> {
    let p = sigma.nrows();
    let trace_floor = (sigma.trace() / p as f64).abs() * 1e-10;
    let floor = if trace_floor > 0.0 { trace_floor } else { f64::MIN_POSITIVE };
    DVector::from_fn(p, |i, _| sigma[(i, i)].max(floor))
}

/// Threshold the off-diagonal entries of `sigma_u`; the diagonal is kept.
pub fn apply_threshold(
    sigma_u: &DMatrix<f64>,
    tau: f64,
    spec: &ThresholdSpec,
) -> Result<DMatrix<f64>> {
    linalg::check_symmetric(sigma_u, 1e-10)?;
    spec.validate()?;
    let p = sigma_u.nrows();
    let mut out = sigma_u.clone();
    match spec.mode {
        ThresholdMode::SectorBlock => {
            let groups = spec.groups.as_ref().expect("validated");
            if groups.len() != p {
                return Err(Error::DimensionMismatch {
                    context: "sector groups",
                    expected: p,
                    actual: groups.len(),
                });
            }
            for j in 0..p {
                for i in 0..p {
                    if i != j && groups[i] != groups[j] {
                        out[(i, j)] = 0.0;
                    }
                }
            }
        }
        ThresholdMode::Soft | ThresholdMode::Hard => {
            let d = scaling_diagonal(sigma_u);
            for j in 0..p {
                for i in (j + 1)..p {
                    // Use the upper-triangle value so symmetry is exact.
                    let x = sigma_u[(j, i)];
                    let level = tau * (d[i] * d[j]).sqrt();
                    let v = if x.abs() >= level {
                        match spec.mode {
                            ThresholdMode::Soft => x - x.signum() * level,
                            _ => x,
                        }
                    } else {
                        0.0
                    };
                    out[(i, j)] = v;
                    out[(j, i)] = v;
                }
            }
        }
    }
    Ok(out)
}

/// Clip eigenvalues at `floor` (default `1e-8 · λ_max`) and reassemble.
pub fn psd_repair(m: &DMatrix<f64>, floor: Option<f64>) -> DMatrix<f64> {
    let mut sym = m.clone();
    linalg::symmetrize(&mut sym);
    let eig = sym.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0_f64, |a, &v| a.max(v));
    let floor = floor.unwrap_or(1e-8 * lmax);
    if eig.eigenvalues.iter().all(|&v| v >= floor) {
        return sym;
    }
    let clipped = eig.eigenvalues.map(|v| v.max(floor));
    let q = &eig.eigenvectors;
    let mut out = q * DMatrix::from_diagonal(&clipped) * q.transpose();
    linalg::symmetrize(&mut out);
    out
}
