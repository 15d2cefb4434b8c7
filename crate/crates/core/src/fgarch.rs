//! Factor GARCH: conditional variances of the latent factors and their
//! quasi-maximum-likelihood estimation.
//!
//! For `r` factors the conditional variance vector follows
//!
//! ```text
//! h_t = ω + A f²_{t−1} + B h_{t−1},        h_1 = (I − A − B)⁻¹ ω
//! ```
//!
//! with `ω > 0` and `A, B ≥ 0` elementwise. Parameters are packed as
//! `θ = (ω, vec(A), vec(B))` with column-major `vec`, giving `r + 2r²` values.
//! The quasi-likelihood minimised by [`qmle_fit`] is
//! `Σ_t Σ_i log h_it + f²_it / h_it`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::optim::{self, BfgsOptions};

/// Floor applied to `h` inside the likelihood.
pub const H_FLOOR: f64 = 1e-12;
/// Upper bound of every `A`, `B` entry during fitting.
pub const COEF_UPPER: f64 = 0.9999;
const OMEGA_LOWER: f64 = 1e-10;
const B_NORM_LIMIT: f64 = 1.0 - 1e-4;

/// `θ = (ω, A, B)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    pub omega: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl GarchParams {
    /// Build parameters, checking shapes, `ω > 0` and `A, B ≥ 0`.
    pub fn new(omega: DVector<f64>, a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let r = omega.len();
        if r == 0 {
            return Err(Error::InvalidParameters("rank must be at least 1".to_string()));
        }
        if a.shape() != (r, r) || b.shape() != (r, r) {
            return Err(Error::DimensionMismatch {
                context: "GARCH coefficient matrices",
                expected: r,
                actual: a.nrows().max(b.nrows()),
            });
        }
        if omega.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameters("omega must be positive".to_string()));
        }
        if a.iter().chain(b.iter()).any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameters(
                "A and B must be nonnegative".to_string(),
            ));
        }
        Ok(Self { omega, a, b })
    }

    /// Scalar GARCH(1,1).
    pub fn univariate(omega: f64, a: f64, b: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(1, omega),
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
        )
    }

    /// Three-factor parameters used by the simulation design.
    pub fn simulation_truth() -> Self {
        Self {
            omega: DVector::from_vec(vec![0.003, 0.002, 0.001]),
            a: DMatrix::from_row_slice(
                3,
                3,
                &[0.2, 0.3, 0.4, 0.15, 0.12, 0.2, 0.1, 0.1, 0.1],
            ),
            b: DMatrix::from_row_slice(3, 3, &[0.2, 0.1, 0.1, 0.2, 0.05, 0.07, 0.1, 0.0, 0.05]),
        }
    }

    pub fn rank(&self) -> usize {
        self.omega.len()
    }

    /// Number of free parameters for rank `r`.
    pub fn n_params(r: usize) -> usize {
        r + 2 * r * r
    }

    /// `(ω, vec(A), vec(B))`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::n_params(self.rank()));
        v.extend(self.omega.iter());
        v.extend(self.a.iter());
        v.extend(self.b.iter());
        v
    }

    pub fn from_vec(r: usize, v: &[f64]) -> Result<Self> {
        if v.len() != Self::n_params(r) {
            return Err(Error::DimensionMismatch {
                context: "GARCH parameter vector",
                expected: Self::n_params(r),
                actual: v.len(),
            });
        }
        let rr = r * r;
        Self::new(
            DVector::from_column_slice(&v[..r]),
            DMatrix::from_column_slice(r, r, &v[r..r + rr]),
            DMatrix::from_column_slice(r, r, &v[r + rr..]),
        )
    }

    /// Names matching [`to_vec`](Self::to_vec), e.g. `omega1`, `A12`, `B31`.
    pub fn param_names(r: usize) -> Vec<String> {
        let mut names: Vec<String> = (1..=r).map(|i| format!("omega{i}")).collect();
        for m in ["A", "B"] {
            for l in 1..=r {
                for k in 1..=r {
                    names.push(format!("{m}{k}{l}"));
                }
            }
        }
        names
    }

    /// Check `‖B‖ < 1` and that the unconditional variance exists and is positive.
    pub fn validate(&self) -> Result<()> {
        let nb = linalg::spectral_norm(&self.b);
        if nb >= 1.0 {
            return Err(Error::InvalidParameters(format!(
                "spectral norm of B is {nb:.6} (must be < 1)"
            )));
        }
        h_init(self).map(|_| ())
    }

    /// `ω + A f² + B h`.
    pub fn step(&self, fsq_prev: &[f64], h_prev: &[f64]) -> DVector<f64> {
        let r = self.rank();
        DVector::from_fn(r, |i, _| {
            let mut v = self.omega[i];
            for j in 0..r {
                v += self.a[(i, j)] * fsq_prev[j] + self.b[(i, j)] * h_prev[j];
            }
            v
        })
    }
}

/// Unconditional factor variance `(I − A − B)⁻¹ ω`.
pub fn h_init(theta: &GarchParams) -> Result<DVector<f64>> {
    let r = theta.rank();
    let m = DMatrix::identity(r, r) - &theta.a - &theta.b;
    let h = m
        .lu()
        .solve(&theta.omega)
        .ok_or_else(|| Error::InvalidParameters("I - A - B is singular".to_string()))?;
    if h.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidParameters(
            "unconditional variance is not positive (nonstationary parameters)".to_string(),
        ));
    }
    Ok(h)
}

/// Conditional variance path `h_1, …, h_T` (row `t` of `h`).
#[derive(Debug, Clone)]
pub struct VolPath {
    pub h: DMatrix<f64>,
    pub theta: GarchParams,
}

impl VolPath {
    /// `h_{T+1}` given the last squared factor.
    pub fn next(&self, fsq: &DMatrix<f64>) -> DVector<f64> {
        let t = self.h.nrows();
        let last_f: Vec<f64> = fsq.row(t - 1).iter().copied().collect();
        let last_h: Vec<f64> = self.h.row(t - 1).iter().copied().collect();
        self.theta.step(&last_f, &last_h)
    }
}

fn check_fsq(fsq: &DMatrix<f64>, r: usize) -> Result<()> {
    if fsq.ncols() != r {
        return Err(Error::DimensionMismatch {
            context: "squared factors",
            expected: r,
            actual: fsq.ncols(),
        });
    }
    if fsq.nrows() == 0 {
        return Err(Error::InsufficientData {
            required: 1,
            actual: 0,
        });
    }
    if fsq.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "squared factors must be finite and nonnegative".to_string(),
        ));
    }
    Ok(())
}

/// Run the variance recursion over the observed squared factors.
pub fn recurse_h(theta: &GarchParams, fsq: &DMatrix<f64>) -> Result<VolPath> {
    let r = theta.rank();
    check_fsq(fsq, r)?;
    let t_len = fsq.nrows();
    let mut h = DMatrix::zeros(t_len, r);
    let h1 = h_init(theta)?;
    h.row_mut(0).copy_from(&h1.transpose());
    let mut prev_h: Vec<f64> = h1.iter().copied().collect();
    let mut prev_f = vec![0.0; r];
    for t in 1..t_len {
        for j in 0..r {
            prev_f[j] = fsq[(t - 1, j)];
        }
        let next = theta.step(&prev_f, &prev_h);
        for i in 0..r {
            h[(t, i)] = next[i];
            prev_h[i] = next[i];
        }
    }
    Ok(VolPath {
        h,
        theta: theta.clone(),
    })
}

/// Row-major copy of the squared factors for the hot loops.
struct FsqRows {
    data: Vec<f64>,
    t: usize,
    r: usize,
}

impl FsqRows {
    fn new(fsq: &DMatrix<f64>) -> Self {
        let (t, r) = fsq.shape();
        let mut data = Vec::with_capacity(t * r);
        for i in 0..t {
            data.extend(fsq.row(i).iter());
        }
        Self { data, t, r }
    }

    fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.r..(t + 1) * self.r]
    }
}

/// Quasi-likelihood and (optionally) its gradient with respect to `θ`.
///
/// Returns `+∞` when `θ` has no positive unconditional variance.
fn objective_impl(theta: &GarchParams, fsq: &FsqRows, grad: Option<&mut [f64]>) -> f64 {
    let r = fsq.r;
    let rr = r * r;
    let np = GarchParams::n_params(r);
    let m = DMatrix::identity(r, r) - &theta.a - &theta.b;
    let Some(m_inv) = m.try_inverse() else {
        return f64::INFINITY;
    };
    let h1 = &m_inv * &theta.omega;
    if h1.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return f64::INFINITY;
    }
    let a = theta.a.as_slice();
    let b = theta.b.as_slice();
    let omega = theta.omega.as_slice();
    let mut h: Vec<f64> = h1.iter().copied().collect();
    let mut h_next = vec![0.0; r];
    let mut total = 0.0;

    let Some(grad) = grad else {
        for t in 0..fsq.t {
            let f = fsq.row(t);
            for i in 0..r {
                let hi = h[i].max(H_FLOOR);
                total += hi.ln() + f[i] / hi;
            }
            if t + 1 < fsq.t {
                for i in 0..r {
                    let mut v = omega[i];
                    for j in 0..r {
                        v += a[i + j * r] * f[j] + b[i + j * r] * h[j];
                    }
                    h_next[i] = v;
                }
                std::mem::swap(&mut h, &mut h_next);
            }
            if !total.is_finite() {
                return f64::INFINITY;
            }
        }
        return total;
    };

    // Forward sensitivities D[i, k] = ∂h_i / ∂θ_k, row-major r × np.
    let mut d = vec![0.0; r * np];
    let mut d_next = vec![0.0; r * np];
    for i in 0..r {
        for k in 0..r {
            // ∂h₁/∂ω = M⁻¹
            d[i * np + k] = m_inv[(i, k)];
        }
        for l in 0..r {
            for k in 0..r {
                // ∂h₁/∂A_kl = ∂h₁/∂B_kl = M⁻¹ e_k h₁_l
                let v = m_inv[(i, k)] * h1[l];
                d[i * np + r + k + l * r] = v;
                d[i * np + r + rr + k + l * r] = v;
            }
        }
    }
    grad.iter_mut().for_each(|g| *g = 0.0);

    for t in 0..fsq.t {
        let f = fsq.row(t);
        for i in 0..r {
            let hi = h[i];
            let (term, dl) = if hi > H_FLOOR {
                (hi.ln() + f[i] / hi, 1.0 / hi - f[i] / (hi * hi))
            } else {
                (H_FLOOR.ln() + f[i] / H_FLOOR, 0.0)
            };
            total += term;
            if dl != 0.0 {
                let row = &d[i * np..(i + 1) * np];
                for (g, &dv) in grad.iter_mut().zip(row) {
                    *g += dl * dv;
                }
            }
        }
        if !total.is_finite() {
            return f64::INFINITY;
        }
        if t + 1 == fsq.t {
            break;
        }
        for i in 0..r {
            let mut v = omega[i];
            for j in 0..r {
                v += a[i + j * r] * f[j] + b[i + j * r] * h[j];
            }
            h_next[i] = v;
            // D_next[i,:] = Σ_j B_ij D[j,:] + direct terms.
            let out = &mut d_next[i * np..(i + 1) * np];
            out.iter_mut().for_each(|v| *v = 0.0);
            for j in 0..r {
                let bij = b[i + j * r];
                if bij != 0.0 {
                    let src = &d[j * np..(j + 1) * np];
                    for (o, &s) in out.iter_mut().zip(src) {
                        *o += bij * s;
                    }
                }
            }
            out[i] += 1.0;
            for l in 0..r {
                out[r + i + l * r] += f[l];
                out[r + rr + i + l * r] += h[l];
            }
        }
        std::mem::swap(&mut h, &mut h_next);
        std::mem::swap(&mut d, &mut d_next);
    }
    total
}

/// `Σ_t Σ_i log h_it(θ) + f²_it / h_it(θ)`; `+∞` for parameters without a
/// positive unconditional variance.
pub fn qmle_objective(theta: &GarchParams, fsq: &DMatrix<f64>) -> Result<f64> {
    check_fsq(fsq, theta.rank())?;
    Ok(objective_impl(theta, &FsqRows::new(fsq), None))
}

/// Objective and analytic gradient with respect to `(ω, vec A, vec B)`.
pub fn qmle_gradient(theta: &GarchParams, fsq: &DMatrix<f64>) -> Result<(f64, Vec<f64>)> {
    check_fsq(fsq, theta.rank())?;
    let mut g = vec![0.0; GarchParams::n_params(theta.rank())];
    let f = objective_impl(theta, &FsqRows::new(fsq), Some(&mut g));
    Ok((f, g))
}

/// Optimiser settings and starting values for [`qmle_fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub f_tol: f64,
    /// Diagonal of the starting `A`.
    pub init_a: f64,
    /// Diagonal of the starting `B`.
    pub init_b: f64,
    /// Off-diagonal entries of the starting `A` and `B`.
    pub init_offdiag: f64,
    /// Explicit starting point `(ω, vec A, vec B)`; overrides the defaults.
    pub initial: Option<Vec<f64>>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-6,
            f_tol: 1e-12,
            init_a: 0.1,
            init_b: 0.8,
            init_offdiag: 0.01,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    pub objective: f64,
    pub initial_objective: f64,
    /// `T` is below the recommended `20 (r + 2r²)`.
    pub short_sample: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QmleFit {
    pub params: GarchParams,
    pub diagnostics: FitDiagnostics,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Map between natural parameters and the unconstrained optimisation space:
/// `ω = exp(z)` and `A, B = 0.9999·sigmoid(z)` entrywise.
struct Reparam {
    r: usize,
    omega_upper: Vec<f64>,
}

impl Reparam {
    fn to_theta(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(k, &v)| {
                if k < self.r {
                    v.exp()
                } else {
                    COEF_UPPER * sigmoid(v)
                }
            })
            .collect()
    }

    fn jacobian_diag(&self, z: &[f64], theta: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(k, &v)| {
                if k < self.r {
                    theta[k]
                } else {
                    let s = sigmoid(v);
                    COEF_UPPER * s * (1.0 - s)
                }
            })
            .collect()
    }

    fn to_z(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                if k < self.r {
                    v.max(OMEGA_LOWER).ln()
                } else {
                    logit((v / COEF_UPPER).clamp(1e-8, 1.0 - 1e-8))
                }
            })
            .collect()
    }

    fn feasible(&self, theta: &[f64]) -> bool {
        let r = self.r;
        if (0..r).any(|i| theta[i] < OMEGA_LOWER || theta[i] > self.omega_upper[i]) {
            return false;
        }
        let b = DMatrix::from_column_slice(r, r, &theta[r + r * r..]);
        linalg::spectral_norm(&b) < B_NORM_LIMIT
    }
}

fn default_start(mean_fsq: &[f64], cfg: &FitConfig) -> Vec<f64> {
    let r = mean_fsq.len();
    let mut v = Vec::with_capacity(GarchParams::n_params(r));
    let persistence = cfg.init_a + cfg.init_b + 2.0 * cfg.init_offdiag * (r as f64 - 1.0);
    let shrink = (1.0 - persistence).max(1e-3);
    v.extend(mean_fsq.iter().map(|m| m * shrink));
    for diag in [cfg.init_a, cfg.init_b] {
        for l in 0..r {
            for k in 0..r {
                v.push(if k == l { diag } else { cfg.init_offdiag });
            }
        }
    }
    v
}

/// Quasi-maximum-likelihood estimate of `θ` from squared factors (`T × r`).
///
/// The optimiser is BFGS in a reparameterised space that keeps `ω > 0` and
/// `A, B ∈ (0, 0.9999)`; points with `‖B‖ ≥ 1 − 10⁻⁴`, `ω` outside
/// `[10⁻¹⁰, 10·mean(f²)]` or no positive unconditional variance are rejected
/// by the line search. If the optimiser stops early the best point found is
/// returned with `converged = false`.
pub fn qmle_fit(fsq: &DMatrix<f64>, cfg: &FitConfig) -> Result<QmleFit> {
    let (t_len, r) = fsq.shape();
    if r == 0 {
        return Err(Error::InvalidArgument("no factors to fit".to_string()));
    }
    check_fsq(fsq, r)?;
    if t_len < 2 {
        return Err(Error::InsufficientData {
            required: 2,
            actual: t_len,
        });
    }
    let mean_fsq: Vec<f64> = fsq.column_iter().map(|c| c.sum() / t_len as f64).collect();
    if mean_fsq.iter().any(|&m| m <= 0.0) {
        return Err(Error::InvalidArgument(
            "a factor series is identically zero".to_string(),
        ));
    }
    let short_sample = t_len < 20 * GarchParams::n_params(r);
    if short_sample {
        log::debug!(
            "QMLE with T={t_len} is below the recommended {} observations",
            20 * GarchParams::n_params(r)
        );
    }

    let rows = FsqRows::new(fsq);
    let rep = Reparam {
        r,
        omega_upper: mean_fsq.iter().map(|m| 10.0 * m).collect(),
    };
    let start = match &cfg.initial {
        Some(v) => {
            GarchParams::from_vec(r, v)?;
            v.clone()
        }
        None => default_start(&mean_fsq, cfg),
    };
    let z0 = rep.to_z(&start);
    let np = GarchParams::n_params(r);
    let mut grad_theta = vec![0.0; np];

    let mut eval = |z: &[f64], g: &mut [f64]| -> f64 {
        let th = rep.to_theta(z);
        if !rep.feasible(&th) {
            return f64::INFINITY;
        }
        let Ok(params) = GarchParams::from_vec(r, &th) else {
            return f64::INFINITY;
        };
        let f = objective_impl(&params, &rows, Some(&mut grad_theta));
        if !f.is_finite() {
            return f64::INFINITY;
        }
        let jac = rep.jacobian_diag(z, &th);
        for k in 0..np {
            g[k] = grad_theta[k] * jac[k];
        }
        f
    };

    let mut g0 = vec![0.0; np];
    let initial_objective = eval(&z0, &mut g0);
    if !initial_objective.is_finite() {
        return Err(Error::Numerical(
            "QMLE starting point is infeasible".to_string(),
        ));
    }
    let opts = BfgsOptions {
        max_iter: cfg.max_iter,
        grad_tol: cfg.grad_tol,
        f_tol: cfg.f_tol,
        ..BfgsOptions::default()
    };
    let res = optim::minimize(&mut eval, &z0, &opts);
    let (z, objective) = if res.f <= initial_objective {
        (res.x, res.f)
    } else {
        (z0, initial_objective)
    };
    let params = GarchParams::from_vec(r, &rep.to_theta(&z))?;
    params.validate()?;
    Ok(QmleFit {
        params,
        diagnostics: FitDiagnostics {
            iterations: res.iterations,
            grad_norm: res.grad_norm,
            converged: res.converged,
            objective,
            initial_objective,
            short_sample,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(omega: f64, a: f64, b: f64) -> GarchParams {
        GarchParams::univariate(omega, a, b).unwrap()
    }

    #[test]
    fn h_init_examples() {
        assert_relative_eq!(h_init(&scalar(0.1, 0.2, 0.3)).unwrap()[0], 0.2, epsilon = 1e-15);
        assert_relative_eq!(h_init(&scalar(0.1, 0.0, 0.0)).unwrap()[0], 0.1);
        assert!(h_init(&scalar(0.1, 0.6, 0.5)).is_err());

        let h = h_init(&GarchParams::simulation_truth()).unwrap();
        // Linear-solve oracle computed independently (numpy.linalg.solve).
        let expected = [0.020111445783132530, 0.013322289156626506, 0.007475903614457833];
        for i in 0..3 {
            assert_relative_eq!(h[i], expected[i], max_relative = 1e-12);
        }
    }

    #[test]
    fn recursion_examples() {
        let theta = scalar(0.1, 0.2, 0.3);
        let fsq = DMatrix::from_column_slice(3, 1, &[0.2, 1.0, 0.5]);
        let path = recurse_h(&theta, &fsq).unwrap();
        // h = (0.2, 0.1 + 0.2·0.2 + 0.3·0.2, 0.1 + 0.2·1.0 + 0.3·0.2)
        assert_relative_eq!(path.h[(0, 0)], 0.2, epsilon = 1e-15);
        assert_relative_eq!(path.h[(1, 0)], 0.2, epsilon = 1e-15);
        assert_relative_eq!(path.h[(2, 0)], 0.36, epsilon = 1e-15);

        let theta = GarchParams::simulation_truth();
        let h1 = h_init(&theta).unwrap();
        let fsq = DMatrix::from_fn(20, 3, |_, j| h1[j]);
        let path = recurse_h(&theta, &fsq).unwrap();
        for t in 0..20 {
            for j in 0..3 {
                assert_relative_eq!(path.h[(t, j)], h1[j], max_relative = 1e-12);
            }
        }

        let theta = GarchParams::new(
            DVector::from_vec(vec![0.5, 0.25]),
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 2),
        )
        .unwrap();
        let fsq = DMatrix::from_fn(6, 2, |i, j| (i + j) as f64);
        let path = recurse_h(&theta, &fsq).unwrap();
        assert!(path.h.row_iter().all(|r| r[0] == 0.5 && r[1] == 0.25));
    }

    #[test]
    fn objective_examples() {
        let theta = scalar(1.0, 0.0, 0.0);
        let fsq = DMatrix::from_element(5, 1, 1.0);
        assert_relative_eq!(qmle_objective(&theta, &fsq).unwrap(), 5.0, epsilon = 1e-14);
        let fsq10 = DMatrix::from_element(10, 1, 1.0);
        assert_relative_eq!(qmle_objective(&theta, &fsq10).unwrap(), 10.0, epsilon = 1e-14);
        let explosive = scalar(1.0, 0.7, 0.5);
        assert!(qmle_objective(&explosive, &fsq).unwrap().is_infinite());
    }

    #[test]
    fn gradient_matches_value_path() {
        let theta = GarchParams::simulation_truth();
        let fsq = DMatrix::from_fn(50, 3, |i, j| 0.01 * (1.0 + ((i * 3 + j) as f64).sin()));
        let (f, _) = qmle_gradient(&theta, &fsq).unwrap();
        assert_relative_eq!(f, qmle_objective(&theta, &fsq).unwrap(), max_relative = 1e-14);
    }

    #[test]
    fn parameter_vector_roundtrip_and_names() {
        let theta = GarchParams::simulation_truth();
        let v = theta.to_vec();
        // Column-major: A21 is the second entry of vec(A).
        assert_eq!(v[4], 0.15);
        assert_eq!(GarchParams::from_vec(3, &v).unwrap(), theta);
        let names = GarchParams::param_names(3);
        assert_eq!(names[4], "A21");
        assert_eq!(names.len(), 21);
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(GarchParams::univariate(0.0, 0.1, 0.1).is_err());
        assert!(GarchParams::univariate(0.1, -0.1, 0.1).is_err());
        let big_b = GarchParams::univariate(0.1, 0.0, 1.2).unwrap();
        assert!(big_b.validate().is_err());
        assert!(GarchParams::simulation_truth().validate().is_ok());
    }

    #[test]
    fn fit_rejects_zero_factors() {
        let fsq = DMatrix::zeros(100, 1);
        assert!(qmle_fit(&fsq, &FitConfig::default()).is_err());
    }

    #[test]
    fn flat_likelihood_recovers_unconditional_variance() {
        let c = 0.04;
        let fsq = DMatrix::from_element(400, 1, c);
        let fit = qmle_fit(&fsq, &FitConfig::default()).unwrap();
        let h = h_init(&fit.params).unwrap()[0];
        assert_relative_eq!(h, c, max_relative = 1e-3);
        assert!(fit.diagnostics.objective <= fit.diagnostics.initial_objective);
    }
}
