//! Sample covariance, symmetric eigendecomposition and latent-factor
//! extraction by principal components.
//!
//! Conventions used throughout:
//!
//! * the covariance divisor is `T`, not `T - 1`;
//! * eigenvalues are returned in nonincreasing order;
//! * every eigenvector column is signed so that its entries sum to a
//!   nonnegative number (if the sum is zero, the first nonzero entry is made
//!   positive);
//! * loadings are scaled so that `VᵀV = p I_r`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

const SYMMETRY_TOL: f64 = 1e-10;
const EIGEN_MAX_ITER: usize = 10_000;

/// `XᵀX / T` of an already centered `T × p` matrix.
pub fn sample_cov(centered: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let t = centered.nrows();
    if t < 2 {
        return Err(Error::InsufficientData {
            required: 2,
            actual: t,
        });
    }
    let mut s = centered.tr_mul(centered);
    s /= t as f64;
    linalg::symmetrize(&mut s);
    Ok(s)
}

/// Eigenvalues (descending) and the matching orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    /// Column `i` is the eigenvector of `values[i]`.
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    /// `Σ λᵢ qᵢ qᵢᵀ` over the components `range`.
    pub fn partial_sum(&self, range: std::ops::Range<usize>) -> DMatrix<f64> {
        let n = self.vectors.nrows();
        let mut out = DMatrix::zeros(n, n);
        for i in range {
            let q = self.vectors.column(i);
            out.ger(self.values[i], &q, &q, 1.0);
        }
        linalg::symmetrize(&mut out);
        out
    }
}

fn normalize_sign(mut col: nalgebra::DVectorViewMut<'_, f64>) {
    let sum: f64 = col.sum();
    let scale = col.amax().max(f64::MIN_POSITIVE);
    let flip = if sum.abs() > 1e-12 * scale * (col.len() as f64) {
        sum < 0.0
    } else {
        col.iter()
            .find(|v| v.abs() > 1e-12 * scale)
            .is_some_and(|&v| v < 0.0)
    };
    if flip {
        col.neg_mut();
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
pub fn eigh(s: &DMatrix<f64>) -> Result<SymEigen> {
    linalg::check_symmetric(s, SYMMETRY_TOL)?;
    let mut sym = s.clone();
    linalg::symmetrize(&mut sym);
    let eig = nalgebra::SymmetricEigen::try_new(sym, f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".to_string()))?;
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    for c in 0..n {
        normalize_sign(vectors.column_mut(c));
    }
    Ok(SymEigen { values, vectors })
}

/// Output of the principal-component split of a covariance matrix.
#[derive(Debug, Clone)]
pub struct FactorDecomposition {
    /// `p × r` loadings `√p (q₁, …, q_r)`.
    pub loadings: DMatrix<f64>,
    /// Leading `r` eigenvalues.
    pub eigvals: DVector<f64>,
    /// `S − Σ_{i ≤ r} λᵢ qᵢ qᵢᵀ`, the input to thresholding.
    pub residual_cov: DMatrix<f64>,
    /// `T × r` factor series, when extracted.
    pub factors: Option<DMatrix<f64>>,
}

impl FactorDecomposition {
    pub fn rank(&self) -> usize {
        self.loadings.ncols()
    }

    pub fn n_assets(&self) -> usize {
        self.loadings.nrows()
    }

    /// Mean factor variances `p⁻¹ (λ₁, …, λ_r)`.
    pub fn mean_factor_vol(&self) -> DVector<f64> {
        &self.eigvals / self.n_assets() as f64
    }

    /// Extract the factor series from `centered` and keep them.
    pub fn with_factors(mut self, centered: &DMatrix<f64>) -> Result<Self> {
        self.factors = Some(extract_factors(&self, centered)?);
        Ok(self)
    }
}

/// Split `S` into `r` pervasive components plus a residual covariance.
pub fn poet_decompose(s: &DMatrix<f64>, r: usize) -> Result<FactorDecomposition> {
    let p = s.nrows();
    if r == 0 || r >= p {
        return Err(Error::InvalidArgument(format!(
            "rank must satisfy 1 <= r < p, got r={r}, p={p}"
        )));
    }
    let eig = eigh(s)?;
    Ok(decomposition_from_eigen(s, &eig, r))
}

pub(crate) fn decomposition_from_eigen(
    s: &DMatrix<f64>,
    eig: &SymEigen,
    r: usize,
) -> FactorDecomposition {
    let p = s.nrows();
    let loadings = eig.vectors.columns(0, r) * (p as f64).sqrt();
    let eigvals = eig.values.rows(0, r).into_owned();
    let mut residual_cov = s - eig.partial_sum(0..r);
    linalg::symmetrize(&mut residual_cov);
    FactorDecomposition {
        loadings,
        eigvals,
        residual_cov,
        factors: None,
    }
}

/// `f̂ₜ = p⁻¹ V̂ᵀ (yₜ − ȳ)` for every row of the centered matrix.
pub fn extract_factors(
    decomp: &FactorDecomposition,
    centered: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let p = decomp.n_assets();
    if centered.ncols() != p {
        return Err(Error::DimensionMismatch {
            context: "extract_factors columns",
            expected: p,
            actual: centered.ncols(),
        });
    }
    Ok(centered * &decomp.loadings / p as f64)
}

/// Tuning constants of the eigenvalue-ratio rank estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankConfig {
    pub r_max: usize,
    pub c1: f64,
    pub c2: f64,
}

impl Default for RankConfig {
    fn default() -> Self {
        Self {
            r_max: 10,
            c1: 1.0,
            c2: 0.5,
        }
    }
}

/// Penalised eigenvalue criterion `p⁻¹ λⱼ + j c₁ (√(log p / T) + p⁻¹ log p)^{c₂}`
/// for `j = 1..=r_max`.
pub fn rank_criterion(eigvals: &DVector<f64>, cfg: &RankConfig, t: usize) -> Vec<f64> {
    let p = eigvals.len() as f64;
    let lp = p.ln();
    let penalty = cfg.c1 * ((lp / t as f64).sqrt() + lp / p).powf(cfg.c2);
    (1..=cfg.r_max)
        .map(|j| eigvals[j - 1] / p + j as f64 * penalty)
        .collect()
}

/// Number of pervasive factors.
///
/// The criterion is minimised at the first non-pervasive component, so the
/// rank is the minimiser minus one, floored at 1. Ties go to the smaller `j`.
pub fn estimate_rank(s: &DMatrix<f64>, cfg: &RankConfig, t: usize) -> Result<usize> {
    check_rank_config(cfg, s.nrows(), t)?;
    rank_from_eigvals(&eigh(s)?.values, cfg, t)
}

fn check_rank_config(cfg: &RankConfig, p: usize, t: usize) -> Result<()> {
    if cfg.r_max == 0 || cfg.r_max >= p {
        return Err(Error::InvalidArgument(format!(
            "r_max must satisfy 1 <= r_max < p (r_max={}, p={p})",
            cfg.r_max
        )));
    }
    if cfg.c1 <= 0.0 || cfg.c2 <= 0.0 || cfg.c2 > 1.0 {
        return Err(Error::InvalidArgument(
            "rank tuning requires c1 > 0 and 0 < c2 <= 1".to_string(),
        ));
    }
    if t < 2 {
        return Err(Error::InsufficientData {
            required: 2,
            actual: t,
        });
    }
    Ok(())
}

/// [`estimate_rank`] from eigenvalues already sorted in descending order.
pub fn rank_from_eigvals(eigvals: &DVector<f64>, cfg: &RankConfig, t: usize) -> Result<usize> {
    check_rank_config(cfg, eigvals.len(), t)?;
    if eigvals.iter().all(|v| v.abs() <= f64::MIN_POSITIVE) {
        return Err(Error::Numerical("degenerate matrix: all eigenvalues zero".to_string()));
    }
    let crit = rank_criterion(eigvals, cfg, t);
    let mut best = 0;
    for (j, &c) in crit.iter().enumerate() {
        if c < crit[best] {
            best = j;
        }
    }
    // `best` is zero-based, so `best` is already "argmin − 1".
    Ok(best.max(1))
}
