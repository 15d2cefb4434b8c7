//! Benchmark volatility models for small portfolios: constant conditional
//! correlation (CCC), diagonal BEKK with variance targeting, univariate
//! GARCH(1,1) on portfolio returns, historical covariance and static POET.
//!
//! Every fitter takes a centered `T × s` window. Fitted parameters can be
//! re-applied to a later window through the `state` methods, which recompute
//! window statistics (correlation, targeting matrix) and the variance path.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fgarch::{self, FitConfig};
use crate::forecast;
use crate::linalg;
use crate::optim::{self, BfgsOptions};
use crate::shrink::{self, ThresholdSpec};
use crate::spectral;

/// `(a, b)` used when a univariate fit fails.
pub const FALLBACK_AB: (f64, f64) = (0.05, 0.9);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchKind {
    Ccc,
    BekkDiagVt,
    PortGarch,
    HistVol,
    StaticPoet,
}

/// Scalar GARCH(1,1): `hₜ = ω + a x²ₜ₋₁ + b hₜ₋₁`, `h₁ = ω / (1 − a − b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Garch11 {
    pub omega: f64,
    pub a: f64,
    pub b: f64,
}

impl Garch11 {
    pub fn new(omega: f64, a: f64, b: f64) -> Result<Self> {
        if !(omega > 0.0) || !(a >= 0.0) || !(b >= 0.0) || !(a + b < 1.0) || !omega.is_finite() {
            return Err(Error::InvalidParameters(format!(
                "GARCH(1,1) needs omega > 0, a, b >= 0, a + b < 1; got ({omega}, {a}, {b})"
            )));
        }
        Ok(Self { omega, a, b })
    }

    /// Variance-targeted parameters with unconditional variance `var`.
    pub fn targeted(var: f64, a: f64, b: f64) -> Result<Self> {
        Self::new(var * (1.0 - a - b), a, b)
    }

    pub fn unconditional(&self) -> f64 {
        self.omega / (1.0 - self.a - self.b)
    }

    /// In-sample variances `h₁ … h_T` and the forecast `h_{T+1}`.
    pub fn filter(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let mut path = Vec::with_capacity(x.len());
        let mut h = self.unconditional();
        for &v in x {
            path.push(h);
            h = self.omega + self.a * v * v + self.b * h;
        }
        (path, h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnivariateFit {
    pub params: Garch11,
    pub converged: bool,
    /// The QMLE failed and [`FALLBACK_AB`] with variance targeting was used.
    pub fallback: bool,
}

fn mean_square(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Gaussian QMLE of a GARCH(1,1) on a centered series, through the shared
/// factor-GARCH fitter with `r = 1`.
pub fn fit_garch11(x: &[f64], cfg: &FitConfig) -> Result<UnivariateFit> {
    if x.len() < 2 {
        return Err(Error::InsufficientData {
            required: 2,
            actual: x.len(),
        });
    }
    let var = mean_square(x);
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::Data("series has zero or non-finite variance".to_string()));
    }
    let fsq = DMatrix::from_iterator(x.len(), 1, x.iter().map(|v| v * v));
    let fitted = fgarch::qmle_fit(&fsq, cfg).and_then(|fit| {
        let p = &fit.params;
        Garch11::new(p.omega[0], p.a[(0, 0)], p.b[(0, 0)]).map(|g| (g, fit.diagnostics.converged))
    });
    Ok(match fitted {
        Ok((params, converged)) => UnivariateFit {
            params,
            converged,
            fallback: false,
        },
        Err(e) => {
            log::debug!("GARCH(1,1) fit failed ({e}); using variance targeting fallback");
            UnivariateFit {
                params: Garch11::targeted(var, FALLBACK_AB.0, FALLBACK_AB.1)?,
                converged: false,
                fallback: true,
            }
        }
    })
}

/// Correlation matrix of standardized residuals (divisor `T`).
fn correlation(z: &DMatrix<f64>) -> DMatrix<f64> {
    let q = z.transpose() * z / z.nrows() as f64;
    let d: Vec<f64> = (0..q.nrows()).map(|i| q[(i, i)].sqrt()).collect();
    let mut r = DMatrix::from_fn(q.nrows(), q.ncols(), |i, j| {
        if i == j {
            1.0
        } else {
            (q[(i, j)] / (d[i] * d[j])).clamp(-1.0, 1.0)
        }
    });
    linalg::symmetrize(&mut r);
    r
}

fn check_window(centered: &DMatrix<f64>) -> Result<()> {
    if centered.ncols() == 0 {
        return Err(Error::InvalidArgument("window has no assets".to_string()));
    }
    if centered.nrows() < 2 {
        return Err(Error::InsufficientData {
            required: 2,
            actual: centered.nrows(),
        });
    }
    Ok(())
}

/// CCC margins; the correlation is recomputed from each window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CccFit {
    pub margins: Vec<UnivariateFit>,
}

/// CCC conditional standard deviations and correlation over one window.
#[derive(Debug, Clone)]
pub struct CccState {
    /// `T × s` in-sample conditional standard deviations.
    pub sd_path: DMatrix<f64>,
    pub sd_next: DVector<f64>,
    pub corr: DMatrix<f64>,
}

impl CccState {
    /// `D_{T+1} R D_{T+1}`.
    pub fn sigma_next(&self) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&self.sd_next);
        let mut s = &d * &self.corr * &d;
        linalg::symmetrize(&mut s);
        s
    }

    /// In-window `wᵀ D_t R D_t w`.
    pub fn port_var_path(&self, w: &DVector<f64>) -> Vec<f64> {
        self.sd_path
            .row_iter()
            .map(|sd| {
                let v = DVector::from_fn(w.len(), |i, _| w[i] * sd[i]);
                linalg::quad_form(&v, &self.corr)
            })
            .collect()
    }
}

pub fn fit_ccc(centered: &DMatrix<f64>, cfg: &FitConfig) -> Result<CccFit> {
    check_window(centered)?;
    let margins = centered
        .column_iter()
        .map(|c| fit_garch11(c.as_slice(), cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(CccFit { margins })
}

impl CccFit {
    pub fn state(&self, centered: &DMatrix<f64>) -> Result<CccState> {
        check_window(centered)?;
        let s = centered.ncols();
        if s != self.margins.len() {
            return Err(Error::DimensionMismatch {
                context: "CCC window",
                expected: self.margins.len(),
                actual: s,
            });
        }
        let t = centered.nrows();
        let mut sd_path = DMatrix::zeros(t, s);
        let mut sd_next = DVector::zeros(s);
        for (j, m) in self.margins.iter().enumerate() {
            let (path, next) = m.params.filter(centered.column(j).as_slice());
            for (i, h) in path.into_iter().enumerate() {
                sd_path[(i, j)] = h.sqrt();
            }
            sd_next[j] = next.sqrt();
        }
        let z = centered.component_div(&sd_path);
        Ok(CccState {
            corr: correlation(&z),
            sd_path,
            sd_next,
        })
    }

    pub fn any_fallback(&self) -> bool {
        self.margins.iter().any(|m| m.fallback)
    }
}

/// Diagonal BEKK with variance targeting:
///
/// ```text
/// Σₜ = C + (a aᵀ) ∘ xₜ₋₁xₜ₋₁ᵀ + (b bᵀ) ∘ Σₜ₋₁,   C = Σ̄ ∘ (11ᵀ − aaᵀ − bbᵀ)
/// ```
///
/// with `Σ₁ = Σ̄` the window sample covariance and `aᵢ² + bᵢ² < 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BekkFit {
    pub a: DVector<f64>,
    pub b: DVector<f64>,
    pub objective: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct BekkState {
    /// `Σ₁ … Σ_T`.
    pub path: Vec<DMatrix<f64>>,
    pub sigma_next: DMatrix<f64>,
    /// The targeting intercept `C` was not PSD and was repaired.
    pub repaired: bool,
}

impl BekkState {
    pub fn port_var_path(&self, w: &DVector<f64>) -> Vec<f64> {
        self.path.iter().map(|s| linalg::quad_form(w, s)).collect()
    }
}

fn bekk_intercept(sbar: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(sbar.nrows(), sbar.ncols(), |i, j| {
        sbar[(i, j)] * (1.0 - a[i] * a[j] - b[i] * b[j])
    })
}

fn bekk_step(
    c: &DMatrix<f64>,
    a: &DVector<f64>,
    b: &DVector<f64>,
    x: &[f64],
    prev: &DMatrix<f64>,
    out: &mut DMatrix<f64>,
) {
    let s = c.nrows();
    for j in 0..s {
        for i in 0..s {
            out[(i, j)] = c[(i, j)] + a[i] * a[j] * x[i] * x[j] + b[i] * b[j] * prev[(i, j)];
        }
    }
}

/// Gaussian quasi-likelihood `Σₜ log det Σₜ + xₜᵀ Σₜ⁻¹ xₜ`; `+∞` when some
/// `Σₜ` is not positive definite.
pub fn bekk_objective(centered: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let Ok(sbar) = spectral::sample_cov(centered) else {
        return f64::INFINITY;
    };
    objective_with(centered, &sbar, a, b)
}

fn objective_with(centered: &DMatrix<f64>, sbar: &DMatrix<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let (t, s) = centered.shape();
    let c = bekk_intercept(sbar, a, b);
    let mut sigma = sbar.clone();
    let mut next = DMatrix::zeros(s, s);
    let mut x = vec![0.0; s];
    let mut total = 0.0;
    for row in 0..t {
        for j in 0..s {
            x[j] = centered[(row, j)];
        }
        let Some(chol) = sigma.clone().cholesky() else {
            return f64::INFINITY;
        };
        let logdet: f64 = chol.l_dirty().diagonal().iter().take(s).map(|d| 2.0 * d.ln()).sum();
        let sol = chol.solve(&DVector::from_column_slice(&x));
        let quad: f64 = sol.iter().zip(&x).map(|(u, v)| u * v).sum();
        total += logdet + quad;
        if !total.is_finite() {
            return f64::INFINITY;
        }
        bekk_step(&c, a, b, &x, &sigma, &mut next);
        std::mem::swap(&mut sigma, &mut next);
    }
    total
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-10, 1.0 - 1e-10);
    (p / (1.0 - p)).ln()
}

/// `(aᵢ, bᵢ) = ρᵢ (cos φᵢ, sin φᵢ)` with `ρ = 0.9999·sigmoid`, `φ = (π/2)·sigmoid`.
fn bekk_from_z(z: &[f64]) -> (DVector<f64>, DVector<f64>) {
    let s = z.len() / 2;
    let mut a = DVector::zeros(s);
    let mut b = DVector::zeros(s);
    for i in 0..s {
        let rho = fgarch::COEF_UPPER * sigmoid(z[i]);
        let phi = FRAC_PI_2 * sigmoid(z[s + i]);
        a[i] = rho * phi.cos();
        b[i] = rho * phi.sin();
    }
    (a, b)
}

fn bekk_to_z(a: &[f64], b: &[f64]) -> Vec<f64> {
    let rho: Vec<f64> = a.iter().zip(b).map(|(x, y)| x.hypot(*y)).collect();
    let mut z: Vec<f64> = rho.iter().map(|r| logit(r / fgarch::COEF_UPPER)).collect();
    z.extend(a.iter().zip(b).map(|(x, y)| logit(y.atan2(*x) / FRAC_PI_2)));
    z
}

/// Starting values and optimiser settings for [`fit_bekk_diag_vt`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BekkConfig {
    pub init_a: f64,
    pub init_b: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for BekkConfig {
    fn default() -> Self {
        Self {
            init_a: 0.2,
            init_b: 0.95,
            max_iter: 200,
            grad_tol: 1e-5,
        }
    }
}

/// QMLE over the `2s` diagonal entries, with a central-difference gradient.
pub fn fit_bekk_diag_vt(centered: &DMatrix<f64>, cfg: &BekkConfig) -> Result<BekkFit> {
    check_window(centered)?;
    let s = centered.ncols();
    let sbar = spectral::sample_cov(centered)?;
    if (0..s).any(|i| !(sbar[(i, i)] > 0.0)) {
        return Err(Error::Data("a BEKK series has zero variance".to_string()));
    }
    let f = |z: &[f64]| {
        let (a, b) = bekk_from_z(z);
        objective_with(centered, &sbar, &a, &b)
    };
    let mut eval = |z: &[f64], g: &mut [f64]| -> f64 {
        let fx = f(z);
        if !fx.is_finite() {
            return f64::INFINITY;
        }
        let mut zz = z.to_vec();
        for k in 0..z.len() {
            let h = 1e-5 * z[k].abs().max(1.0);
            zz[k] = z[k] + h;
            let up = f(&zz);
            zz[k] = z[k] - h;
            let down = f(&zz);
            zz[k] = z[k];
            g[k] = if up.is_finite() && down.is_finite() {
                (up - down) / (2.0 * h)
            } else if up.is_finite() {
                (up - fx) / h
            } else if down.is_finite() {
                (fx - down) / h
            } else {
                0.0
            };
        }
        fx
    };
    let z0 = bekk_to_z(&vec![cfg.init_a; s], &vec![cfg.init_b; s]);
    let mut g0 = vec![0.0; 2 * s];
    let f0 = eval(&z0, &mut g0);
    if !f0.is_finite() {
        return Err(Error::Numerical("BEKK starting point is infeasible".to_string()));
    }
    let opts = BfgsOptions {
        max_iter: cfg.max_iter,
        grad_tol: cfg.grad_tol,
        f_tol: 1e-10,
        ..BfgsOptions::default()
    };
    let res = optim::minimize(&mut eval, &z0, &opts);
    let (z, objective) = if res.f <= f0 { (res.x, res.f) } else { (z0, f0) };
    let (a, b) = bekk_from_z(&z);
    Ok(BekkFit {
        a,
        b,
        objective,
        converged: res.converged,
    })
}

impl BekkFit {
    pub fn state(&self, centered: &DMatrix<f64>) -> Result<BekkState> {
        check_window(centered)?;
        let s = centered.ncols();
        if s != self.a.len() {
            return Err(Error::DimensionMismatch {
                context: "BEKK window",
                expected: self.a.len(),
                actual: s,
            });
        }
        let sbar = spectral::sample_cov(centered)?;
        let mut c = bekk_intercept(&sbar, &self.a, &self.b);
        let min_eig = c.clone().symmetric_eigenvalues().min();
        let repaired = min_eig < 0.0;
        if repaired {
            c = shrink::psd_repair(&c, None);
        }
        let mut path = Vec::with_capacity(centered.nrows());
        let mut sigma = sbar;
        let mut next = DMatrix::zeros(s, s);
        let mut x = vec![0.0; s];
        for row in 0..centered.nrows() {
            for j in 0..s {
                x[j] = centered[(row, j)];
            }
            bekk_step(&c, &self.a, &self.b, &x, &sigma, &mut next);
            path.push(std::mem::replace(&mut sigma, next.clone()));
        }
        Ok(BekkState {
            path,
            sigma_next: sigma,
            repaired,
        })
    }
}

/// Sample covariance of the window, used directly as the forecast.
pub fn hist_vol(centered: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spectral::sample_cov(centered)
}

/// POET with the mean factor variances `p⁻¹λ̂` in place of GARCH dynamics.
pub fn static_poet(
    centered: &DMatrix<f64>,
    r: usize,
    spec: &ThresholdSpec,
    repair: bool,
) -> Result<DMatrix<f64>> {
    let s = spectral::sample_cov(centered)?;
    let decomp = spectral::poet_decompose(&s, r)?;
    let idio = forecast::idiosyncratic_part(&decomp.residual_cov, spec, centered.nrows(), repair)?;
    Ok(forecast::factor_covariance(&decomp.loadings, &decomp.mean_factor_vol()) + idio)
}

/// A fitted benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BenchModel {
    Ccc(CccFit),
    BekkDiagVt(BekkFit),
    PortGarch(UnivariateFit),
    HistVol,
    StaticPoet { rank: usize },
}

impl BenchModel {
    pub fn kind(&self) -> BenchKind {
        match self {
            Self::Ccc(_) => BenchKind::Ccc,
            Self::BekkDiagVt(_) => BenchKind::BekkDiagVt,
            Self::PortGarch(_) => BenchKind::PortGarch,
            Self::HistVol => BenchKind::HistVol,
            Self::StaticPoet { .. } => BenchKind::StaticPoet,
        }
    }

    /// Whether any fallback or repair path was taken during fitting.
    pub fn flagged(&self) -> bool {
        match self {
            Self::Ccc(f) => f.any_fallback(),
            Self::PortGarch(f) => f.fallback,
            Self::BekkDiagVt(f) => !f.converged,
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn simulate_garch(g: Garch11, t: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut h = g.unconditional();
        (0..t)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                let x = h.sqrt() * z;
                h = g.omega + g.a * x * x + g.b * h;
                x
            })
            .collect()
    }

    fn white_noise(t: usize, s: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(t, s, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn filter_matches_factor_recursion() {
        let g = Garch11::new(0.1, 0.1, 0.8).unwrap();
        let x = [0.5, -1.0, 2.0, 0.1];
        let (path, next) = g.filter(&x);
        let theta = fgarch::GarchParams::univariate(0.1, 0.1, 0.8).unwrap();
        let fsq = DMatrix::from_iterator(4, 1, x.iter().map(|v| v * v));
        let vp = fgarch::recurse_h(&theta, &fsq).unwrap();
        for (i, h) in path.iter().enumerate() {
            assert_relative_eq!(*h, vp.h[(i, 0)], max_relative = 1e-14);
        }
        assert_relative_eq!(next, vp.next(&fsq)[0], max_relative = 1e-14);
        assert!(Garch11::new(0.1, 0.5, 0.5).is_err());
    }

    #[test]
    fn garch11_recovers_parameters() {
        let truth = Garch11::new(0.1, 0.1, 0.8).unwrap();
        let x = simulate_garch(truth, 10_000, 11);
        let fit = fit_garch11(&x, &FitConfig::default()).unwrap();
        assert!(!fit.fallback);
        let p = fit.params;
        assert!((p.omega - 0.1).abs() < 0.05, "{p:?}");
        assert!((p.a - 0.1).abs() < 0.05, "{p:?}");
        assert!((p.b - 0.8).abs() < 0.05, "{p:?}");
    }

    #[test]
    fn garch11_scale_equivariance() {
        let x = simulate_garch(Garch11::new(0.1, 0.1, 0.8).unwrap(), 1500, 5);
        let k = 3.0;
        let xk: Vec<f64> = x.iter().map(|v| v * k).collect();
        let f1 = fit_garch11(&x, &FitConfig::default()).unwrap().params;
        let f2 = fit_garch11(&xk, &FitConfig::default()).unwrap().params;
        let (_, h1) = f1.filter(&x);
        let (_, h2) = f2.filter(&xk);
        assert_relative_eq!(h2, k * k * h1, max_relative = 1e-3);
    }

    #[test]
    fn constant_variance_gives_small_arch_term() {
        let x: Vec<f64> = white_noise(4000, 1, 3).column(0).iter().copied().collect();
        let fit = fit_garch11(&x, &FitConfig::default()).unwrap();
        let (_, next) = fit.params.filter(&x);
        let var = mean_square(&x);
        assert!(fit.params.a < 0.05, "{:?}", fit.params);
        // Sampling sd of the variance estimate is about var·√(2/T).
        assert!((next - var).abs() < 3.0 * var * (2.0 / 4000.0_f64).sqrt() + 0.05 * var);
    }

    #[test]
    fn ccc_white_noise_correlation_is_near_identity() {
        let t = 2000;
        let x = white_noise(t, 4, 21);
        let fit = fit_ccc(&x, &FitConfig::default()).unwrap();
        let st = fit.state(&x).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(st.corr[(i, j)].abs() < 3.0 / (t as f64).sqrt());
                }
            }
        }
        assert!(st.sigma_next().clone().cholesky().is_some());
    }

    #[test]
    fn ccc_single_asset_equals_univariate() {
        let x = simulate_garch(Garch11::new(0.1, 0.1, 0.8).unwrap(), 800, 4);
        let m = DMatrix::from_column_slice(800, 1, &x);
        let st = fit_ccc(&m, &FitConfig::default()).unwrap().state(&m).unwrap();
        let uni = fit_garch11(&x, &FitConfig::default()).unwrap();
        let (_, next) = uni.params.filter(&x);
        assert_relative_eq!(st.sigma_next()[(0, 0)], next, max_relative = 1e-12);
    }

    #[test]
    fn ccc_duplicated_column_has_unit_correlation() {
        let x = simulate_garch(Garch11::new(0.1, 0.1, 0.8).unwrap(), 600, 8);
        let m = DMatrix::from_fn(600, 2, |i, _| x[i]);
        let st = fit_ccc(&m, &FitConfig::default()).unwrap().state(&m).unwrap();
        assert_relative_eq!(st.corr[(0, 1)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn bekk_zero_dynamics_reproduces_sample_covariance() {
        let x = white_noise(300, 3, 2);
        let fit = BekkFit {
            a: DVector::zeros(3),
            b: DVector::zeros(3),
            objective: 0.0,
            converged: true,
        };
        let st = fit.state(&x).unwrap();
        assert_relative_eq!(st.sigma_next, hist_vol(&x).unwrap(), max_relative = 1e-12);
        assert!(!st.repaired);
    }

    #[test]
    fn bekk_single_asset_is_targeted_garch() {
        let x = simulate_garch(Garch11::new(0.1, 0.1, 0.8).unwrap(), 500, 9);
        let m = DMatrix::from_column_slice(500, 1, &x);
        let (a, b) = (0.3, 0.9);
        let bekk = BekkFit {
            a: DVector::from_element(1, a),
            b: DVector::from_element(1, b),
            objective: 0.0,
            converged: true,
        };
        let st = bekk.state(&m).unwrap();
        let g = Garch11::targeted(mean_square(&x), a * a, b * b).unwrap();
        let (path, next) = g.filter(&x);
        assert_relative_eq!(st.sigma_next[(0, 0)], next, max_relative = 1e-12);
        assert_relative_eq!(st.port_var_path(&DVector::from_element(1, 1.0))[7], path[7], max_relative = 1e-12);
    }

    #[test]
    fn bekk_fit_is_stationary_and_psd() {
        let mut x = white_noise(800, 3, 17);
        let common = simulate_garch(Garch11::new(0.05, 0.15, 0.8).unwrap(), 800, 18);
        for i in 0..800 {
            for j in 0..3 {
                x[(i, j)] = 0.5 * x[(i, j)] + common[i];
            }
        }
        let fit = fit_bekk_diag_vt(&x, &BekkConfig::default()).unwrap();
        for i in 0..3 {
            assert!(fit.a[i].powi(2) + fit.b[i].powi(2) < 1.0);
        }
        let start = bekk_objective(&x, &DVector::from_element(3, 0.2), &DVector::from_element(3, 0.95));
        assert!(fit.objective <= start);
        let st = fit.state(&x).unwrap();
        assert!(st.sigma_next.clone().cholesky().is_some());
    }

    #[test]
    fn reparam_round_trip() {
        let z = bekk_to_z(&[0.2, 0.05], &[0.9, 0.3]);
        let (a, b) = bekk_from_z(&z);
        assert_relative_eq!(a[0], 0.2, epsilon = 1e-9);
        assert_relative_eq!(b[1], 0.3, epsilon = 1e-9);
    }

    #[test]
    fn static_poet_white_noise_is_nearly_diagonal() {
        let x = white_noise(2000, 10, 6);
        let s = hist_vol(&x).unwrap();
        let est = static_poet(&x, 1, &ThresholdSpec::default(), true).unwrap();
        for i in 0..10 {
            assert!((est[(i, i)] - s[(i, i)]).abs() < 0.05);
        }
        assert!(est.clone().cholesky().is_some());
    }
}
