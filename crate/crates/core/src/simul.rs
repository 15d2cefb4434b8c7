//! Simulation design for Monte Carlo validation: a three-factor GARCH panel
//! with banded idiosyncratic covariance, and a replication driver that scores
//! every model against the true one-step-ahead covariance and VaR.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fgarch::{self, GarchParams};
use crate::forecast::{QuantileKind, QuantileRule};
use crate::linalg;
use crate::panel::{Portfolio, ReturnPanel};
use crate::pipeline::{self, FittedModel, ModelConfig, ModelKind, PanelWindow, RankChoice};
use crate::spectral;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Noise {
    #[default]
    Gaussian,
}

/// Data-generating process `yₜ = V fₜ + uₜ`, `fₜ ~ N(0, diag(hₜ))`,
/// `uₜ ~ N(0, Σᵤ)` with `Σᵤ,ᵢⱼ = scale · decay^|i−j|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub p: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub theta0: GarchParams,
    pub idio_scale: f64,
    pub idio_decay: f64,
    /// Recursion steps discarded before recording.
    pub burn_in: usize,
    pub noise: Noise,
}

impl DgpSpec {
    /// The reference design with `p` assets and `t` periods.
    pub fn reference(p: usize, t: usize) -> Self {
        Self {
            p,
            t,
            theta0: GarchParams::simulation_truth(),
            idio_scale: 0.01,
            idio_decay: 0.5,
            burn_in: 0,
            noise: Noise::Gaussian,
        }
    }

    pub fn rank(&self) -> usize {
        self.theta0.rank()
    }

    pub fn validate(&self) -> Result<()> {
        if self.p <= self.rank() {
            return Err(Error::InvalidArgument(format!(
                "need more assets than factors (p={}, r={})",
                self.p,
                self.rank()
            )));
        }
        if self.t < 2 {
            return Err(Error::InsufficientData {
                required: 2,
                actual: self.t,
            });
        }
        if !(self.idio_scale > 0.0) || !(self.idio_decay.abs() < 1.0) {
            return Err(Error::InvalidArgument(
                "idiosyncratic covariance needs scale > 0 and |decay| < 1".to_string(),
            ));
        }
        self.theta0.validate()
    }

    pub fn sigma_u(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.p, self.p, |i, j| {
            self.idio_scale * self.idio_decay.powi(i.abs_diff(j) as i32)
        })
    }
}

/// Everything needed to score a forecast.
#[derive(Debug, Clone)]
pub struct Truth {
    pub loadings: DMatrix<f64>,
    /// `T × r` factors.
    pub factors: DMatrix<f64>,
    /// `(T + 1) × r` conditional variances; the last row is `h_{T+1}`.
    pub h: DMatrix<f64>,
    pub sigma_u: DMatrix<f64>,
}

impl Truth {
    /// `V diag(h) Vᵀ + Σᵤ` at zero-based row `t` of `h`.
    pub fn sigma_at(&self, t: usize) -> DMatrix<f64> {
        let h = self.h.row(t).transpose();
        crate::forecast::factor_covariance(&self.loadings, &h) + &self.sigma_u
    }

    /// `Σ_{T+1}`.
    pub fn sigma_next(&self) -> DMatrix<f64> {
        self.sigma_at(self.h.nrows() - 1)
    }
}

#[derive(Debug, Clone)]
pub struct SimData {
    pub panel: ReturnPanel,
    pub truth: Truth,
}

/// Loadings from the top-`r` right singular vectors of a `T × p` Unif(0,1)
/// matrix, scaled so that `VᵀV = pI`.
fn sample_loadings(p: usize, t: usize, r: usize, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    let u = DMatrix::from_fn(t, p, |_, _| rng.random::<f64>());
    let mut gram = u.transpose() * &u;
    linalg::symmetrize(&mut gram);
    let eig = spectral::eigh(&gram)?;
    Ok(eig.vectors.columns(0, r) * (p as f64).sqrt())
}

/// Draw one panel from stream `stream` of `seed`.
pub fn generate(spec: &DgpSpec, seed: u64, stream: u64) -> Result<SimData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    generate_with(spec, &mut rng)
}

pub fn generate_with(spec: &DgpSpec, rng: &mut ChaCha8Rng) -> Result<SimData> {
    spec.validate()?;
    let (p, t_len, r) = (spec.p, spec.t, spec.rank());
    let theta = &spec.theta0;
    let loadings = sample_loadings(p, t_len, r, rng)?;
    let sigma_u = spec.sigma_u();
    let chol = sigma_u
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("idiosyncratic covariance is not PD".to_string()))?
        .unpack();

    let mut h: Vec<f64> = fgarch::h_init(theta)?.iter().copied().collect();
    let mut f = vec![0.0; r];
    let mut fsq = vec![0.0; r];
    let draw_factors = |h: &[f64], f: &mut [f64], fsq: &mut [f64], rng: &mut ChaCha8Rng| {
        for i in 0..r {
            f[i] = h[i].sqrt() * rng.sample::<f64, _>(StandardNormal);
            fsq[i] = f[i] * f[i];
        }
    };
    for _ in 0..spec.burn_in {
        draw_factors(&h, &mut f, &mut fsq, rng);
        h = theta.step(&fsq, &h).iter().copied().collect();
    }

    let mut hs = DMatrix::zeros(t_len + 1, r);
    let mut factors = DMatrix::zeros(t_len, r);
    let mut y = DMatrix::zeros(t_len, p);
    let mut e = DVector::zeros(p);
    for t in 0..t_len {
        for i in 0..r {
            hs[(t, i)] = h[i];
        }
        draw_factors(&h, &mut f, &mut fsq, rng);
        for v in e.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let u = &chol * &e;
        for j in 0..p {
            let mut v = u[j];
            for i in 0..r {
                v += loadings[(j, i)] * f[i];
            }
            y[(t, j)] = v;
        }
        for i in 0..r {
            factors[(t, i)] = f[i];
        }
        h = theta.step(&fsq, &h).iter().copied().collect();
    }
    for i in 0..r {
        hs[(t_len, i)] = h[i];
    }
    Ok(SimData {
        panel: ReturnPanel::with_synthetic_dates(y)?,
        truth: Truth {
            loadings,
            factors,
            h: hs,
            sigma_u,
        },
    })
}

/// Settings of a Monte Carlo study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplicationConfig {
    pub n_reps: usize,
    pub seed: u64,
    pub models: Vec<ModelKind>,
    /// Keep only these metrics (see [`metric_selected`]); `None` keeps all.
    pub metrics: Option<Vec<String>>,
    pub portfolio_size: usize,
    pub alpha: f64,
    pub rules: Vec<QuantileKind>,
    pub model: ModelConfig,
    pub execution: Execution,
}

impl Default for ReplicationConfig {
    fn default() -> Self {
        Self {
            n_reps: 50,
            seed: 1,
            models: vec![ModelKind::Pgarch],
            metrics: None,
            portfolio_size: 5,
            alpha: 0.01,
            rules: vec![
                QuantileKind::Normal,
                QuantileKind::StudentT { nu: 6.0 },
                QuantileKind::Empirical,
            ],
            model: ModelConfig {
                rank: RankChoice::Fixed(3),
                ..ModelConfig::default()
            },
            execution: Execution::default(),
        }
    }
}

/// Whether `name` is selected by the filter `wanted`.
///
/// A filter entry matches the metric itself, its `port_` variant, and for
/// `theta_mae` / `var_mae` every per-parameter / per-rule metric.
pub fn metric_selected(name: &str, wanted: &[String]) -> bool {
    wanted.iter().any(|m| {
        name == m
            || name.strip_prefix("port_") == Some(m.as_str())
            || (m == "theta_mae" && name.starts_with("mae_"))
            || (m == "var_mae" && name.starts_with("var_mae_"))
    })
}

fn matrix_metrics(prefix: &str, est: &DMatrix<f64>, truth: &DMatrix<f64>, out: &mut Vec<(String, f64)>) -> Result<()> {
    let d = est - truth;
    out.push((format!("{prefix}frobenius"), linalg::frobenius_norm(&d)));
    out.push((format!("{prefix}spectral"), linalg::spectral_norm(&d)));
    out.push((format!("{prefix}max"), linalg::max_norm(&d)));
    out.push((format!("{prefix}rel_frobenius"), linalg::relative_frobenius(est, truth)?));
    Ok(())
}

/// Metric values of one model in one replication.
pub type ModelOutcome = Result<Vec<(String, f64)>>;

/// Run replication `rep`: one panel, one random portfolio, every model.
pub fn replicate_once(spec: &DgpSpec, cfg: &ReplicationConfig, rep: usize) -> Result<Vec<(ModelKind, ModelOutcome)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(rep as u64);
    let data = generate_with(spec, &mut rng)?;
    let s = cfg.portfolio_size.min(spec.p);
    let assets = rand::seq::index::sample(&mut rng, spec.p, s).into_vec();
    let w = Portfolio::equal_weighted(spec.p, &assets)?;
    let support = w.support();

    let sigma_true = data.truth.sigma_next();
    let sub_true = linalg::submatrix(&sigma_true, &support);
    let wv = w.as_vector();
    let z = Normal::standard().inverse_cdf(cfg.alpha);
    let var_true = -z * linalg::quad_form(&wv, &sigma_true).sqrt();

    let needs_eigen = cfg.models.iter().any(|m| m.uses_full_panel());
    let window = PanelWindow::new(data.panel.returns(), needs_eigen)?;
    let truth_theta = spec.theta0.to_vec();
    let names = GarchParams::param_names(spec.rank());

    let outcomes = cfg
        .models
        .iter()
        .map(|&kind| {
            let outcome = (|| -> ModelOutcome {
                let fitted = pipeline::fit_model(kind, &window, &w, &cfg.model)?;
                let fc = pipeline::forecast_portfolio(&fitted, &window, &w, &cfg.model, None)?;
                let mut out = Vec::new();
                match &fitted {
                    FittedModel::Pgarch(fit) => {
                        let st = pipeline::PgarchState::new(&window, fit.params(), &cfg.model)?;
                        matrix_metrics("", &st.forecast.sigma, &sigma_true, &mut out)?;
                        if fit.rank == spec.rank() {
                            for ((name, est), truth) in names.iter().zip(fit.params().to_vec()).zip(&truth_theta) {
                                out.push((format!("mae_{name}"), (est - truth).abs()));
                            }
                        }
                    }
                    FittedModel::Bench(crate::bench::BenchModel::StaticPoet { rank }) => {
                        let full = pipeline::static_poet_sigma(&window, *rank, &cfg.model)?;
                        matrix_metrics("", &full, &sigma_true, &mut out)?;
                    }
                    FittedModel::Bench(crate::bench::BenchModel::HistVol) => {
                        let full = window.cov.clone().map_or_else(|| spectral::sample_cov(&window.centered), Ok)?;
                        matrix_metrics("", &full, &sigma_true, &mut out)?;
                    }
                    _ => {}
                }
                if let Some(sig) = &fc.sigma {
                    matrix_metrics("port_", sig, &sub_true, &mut out)?;
                }
                for kind in &cfg.rules {
                    let rule = QuantileRule::new(*kind, cfg.alpha)?;
                    let v = fc.var(&rule)?;
                    out.push((format!("var_mae_{}", kind.label()), (v.var_value - var_true).abs()));
                }
                if let Some(wanted) = &cfg.metrics {
                    out.retain(|(n, _)| metric_selected(n, wanted));
                }
                Ok(out)
            })();
            (kind, outcome)
        })
        .collect();
    Ok(outcomes)
}

/// One aggregated line: mean and standard deviation across replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub p: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub model: String,
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
    pub n_reps: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub rows: Vec<MetricRow>,
}

impl MetricTable {
    pub fn get(&self, model: ModelKind, metric: &str) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.model == model.name() && r.metric == metric)
    }

    pub fn mean(&self, model: ModelKind, metric: &str) -> Option<f64> {
        self.get(model, metric).map(|r| r.mean)
    }

    pub fn extend(&mut self, other: MetricTable) {
        self.rows.extend(other.rows);
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Monte Carlo study: `n_reps` independent replications, each on its own
/// random stream, aggregated per model and metric. Model failures are counted
/// in the `failures` column instead of aborting the study.
pub fn run_replications(spec: &DgpSpec, cfg: &ReplicationConfig) -> Result<MetricTable> {
    if cfg.n_reps == 0 {
        return Err(Error::InvalidArgument("n_reps must be at least 1".to_string()));
    }
    spec.validate()?;
    let reps = cfg.execution.map_range(cfg.n_reps, |rep| replicate_once(spec, cfg, rep));

    let mut values: BTreeMap<(ModelKind, String), Vec<f64>> = BTreeMap::new();
    let mut failures: BTreeMap<ModelKind, usize> = BTreeMap::new();
    let mut order: Vec<(ModelKind, String)> = Vec::new();
    for rep in reps {
        for (kind, outcome) in rep? {
            match outcome {
                Ok(metrics) => {
                    for (name, v) in metrics {
                        let key = (kind, name);
                        if !values.contains_key(&key) {
                            order.push(key.clone());
                        }
                        values.entry(key).or_default().push(v);
                    }
                }
                Err(e) => {
                    log::warn!("{kind} failed in a replication: {e}");
                    *failures.entry(kind).or_default() += 1;
                }
            }
        }
    }
    let mut rows: Vec<MetricRow> = order
        .into_iter()
        .map(|key| {
            let v = &values[&key];
            let (mean, sd) = mean_sd(v);
            MetricRow {
                p: spec.p,
                t: spec.t,
                model: key.0.name().to_string(),
                metric: key.1,
                mean,
                sd,
                n_reps: v.len(),
                failures: failures.get(&key.0).copied().unwrap_or(0),
            }
        })
        .collect();
    rows.sort_by_key(|r| cfg.models.iter().position(|m| m.name() == r.model));
    for kind in &cfg.models {
        if let Some(&n) = failures.get(kind) {
            if n == cfg.n_reps {
                rows.push(MetricRow {
                    p: spec.p,
                    t: spec.t,
                    model: kind.name().to_string(),
                    metric: "failed".to_string(),
                    mean: f64::NAN,
                    sd: f64::NAN,
                    n_reps: 0,
                    failures: n,
                });
            }
        }
    }
    Ok(MetricTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn banded_idiosyncratic_covariance() {
        let s = DgpSpec::reference(5, 10).sigma_u();
        assert_relative_eq!(s[(0, 2)], 0.0025, epsilon = 1e-15);
        assert_relative_eq!(s[(4, 4)], 0.01, epsilon = 1e-15);
        assert!(s.cholesky().is_some());
    }

    #[test]
    fn loadings_satisfy_identification() {
        let d = generate(&DgpSpec::reference(30, 200), 3, 0).unwrap();
        let vtv = d.truth.loadings.transpose() * &d.truth.loadings;
        assert_relative_eq!(vtv, DMatrix::identity(3, 3) * 30.0, epsilon = 1e-8);
        assert_eq!(d.truth.h.nrows(), 201);
        assert_eq!(d.panel.returns().shape(), (200, 30));
    }

    #[test]
    fn same_seed_same_stream_is_bit_identical() {
        let spec = DgpSpec::reference(10, 100);
        let a = generate(&spec, 9, 4).unwrap();
        let b = generate(&spec, 9, 4).unwrap();
        let c = generate(&spec, 9, 5).unwrap();
        assert_eq!(a.panel.returns(), b.panel.returns());
        assert_eq!(a.truth.h, b.truth.h);
        assert_ne!(a.panel.returns(), c.panel.returns());
    }

    #[test]
    fn constant_variance_without_dynamics() {
        let mut spec = DgpSpec::reference(10, 10_000);
        spec.theta0 = GarchParams::new(
            DVector::from_vec(vec![0.003, 0.002, 0.001]),
            DMatrix::zeros(3, 3),
            DMatrix::zeros(3, 3),
        )
        .unwrap();
        let d = generate(&spec, 1, 0).unwrap();
        assert!(d.truth.h.row_iter().all(|h| h[0] == 0.003 && h[2] == 0.001));
        for (i, w) in [0.003, 0.002, 0.001].iter().enumerate() {
            let col = d.truth.factors.column(i);
            let var = col.iter().map(|v| v * v).sum::<f64>() / 10_000.0;
            // sd of the sample variance is w·√(2/T).
            assert!((var - w).abs() < 3.0 * w * (2.0 / 10_000.0_f64).sqrt());
        }
    }

    #[test]
    fn truth_follows_recursion() {
        let spec = DgpSpec::reference(8, 50);
        let d = generate(&spec, 2, 0).unwrap();
        let fsq = d.truth.factors.map(|v| v * v);
        let path = fgarch::recurse_h(&spec.theta0, &fsq).unwrap();
        assert_relative_eq!(path.h, d.truth.h.rows(0, 50).into_owned(), max_relative = 1e-12);
        assert_relative_eq!(path.next(&fsq), d.truth.h.row(50).transpose(), max_relative = 1e-12);
    }

    #[test]
    fn single_replication_hist_vol() {
        let cfg = ReplicationConfig {
            n_reps: 1,
            models: vec![ModelKind::HistVol],
            metrics: Some(vec!["frobenius".to_string()]),
            ..ReplicationConfig::default()
        };
        let table = run_replications(&DgpSpec::reference(10, 200), &cfg).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert!(table.rows.iter().all(|r| r.n_reps == 1 && r.sd == 0.0));
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let base = ReplicationConfig {
            n_reps: 3,
            models: vec![ModelKind::Pgarch, ModelKind::HistVol],
            ..ReplicationConfig::default()
        };
        let spec = DgpSpec::reference(12, 300);
        let a = run_replications(&spec, &ReplicationConfig { execution: Execution::Sequential, ..base.clone() }).unwrap();
        let b = run_replications(&spec, &ReplicationConfig { execution: Execution::Parallel, ..base }).unwrap();
        assert_eq!(a, b);
        assert!(a.mean(ModelKind::Pgarch, "mae_omega1").is_some());
        assert!(a.mean(ModelKind::Pgarch, "var_mae_t6").is_some());
    }

    #[test]
    fn metric_filter() {
        let w = vec!["rel_frobenius".to_string(), "theta_mae".to_string()];
        assert!(metric_selected("rel_frobenius", &w));
        assert!(metric_selected("port_rel_frobenius", &w));
        assert!(metric_selected("mae_A12", &w));
        assert!(!metric_selected("frobenius", &w));
        assert!(!metric_selected("var_mae_normal", &w));
    }
}
