//! Property checks shared by the invariants test target and the acceptance
//! runner. Each check takes a generated case and returns `Err` with a short
//! explanation on violation.

#![allow(dead_code)]

use nalgebra::DMatrix;
use pgarch::backtest;
use pgarch::exec::Execution;
use pgarch::forecast::{quantile_value, QuantileKind, QuantileRule};
use pgarch::panel::Portfolio;
use pgarch::pipeline::{fit_model, forecast_portfolio, ModelConfig, ModelKind, PanelWindow, PgarchState, RankChoice};
use pgarch::shrink::{apply_threshold, ThresholdMode, ThresholdSpec};
use pgarch::simul::{generate, run_replications, DgpSpec, ReplicationConfig};
use pgarch::spectral::{eigh, poet_decompose, sample_cov};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type CheckResult = std::result::Result<(), TestCaseError>;

fn fail(msg: String) -> CheckResult {
    Err(TestCaseError::fail(msg))
}

/// `t × p` matrix of a few common factors plus noise, drawn from `seed`.
pub fn factor_panel(t: usize, p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = 2.min(p);
    let load = DMatrix::from_fn(p, k, |_, _| rng.random_range(0.2..1.5));
    let f = DMatrix::from_fn(t, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let noise = DMatrix::from_fn(t, p, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
    f * load.transpose() + noise
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, &v| a.max(v.abs()))
}

/// Panel shape and seed for the spectral checks.
pub fn panel_case() -> impl Strategy<Value = (usize, usize, u64)> {
    (4usize..30, 40usize..200, any::<u64>())
}

pub fn check_loadings_orthogonal((p, t, seed): (usize, usize, u64), r: usize) -> CheckResult {
    let r = r.clamp(1, p - 1);
    let s = sample_cov(&factor_panel(t, p, seed)).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let d = poet_decompose(&s, r).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let gram = d.loadings.transpose() * &d.loadings;
    let err = max_abs(&(gram - DMatrix::identity(r, r) * p as f64));
    if err > 1e-8 {
        return fail(format!("max |VᵀV − pI| = {err:e}"));
    }
    Ok(())
}

pub fn check_eigen_reconstruction((p, t, seed): (usize, usize, u64)) -> CheckResult {
    let s = sample_cov(&factor_panel(t, p, seed)).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let eig = eigh(&s).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let rebuilt = &eig.vectors * DMatrix::from_diagonal(&eig.values) * eig.vectors.transpose();
    let err = max_abs(&(rebuilt - &s));
    if err > 1e-8 {
        return fail(format!("max |QΛQᵀ − S| = {err:e}"));
    }
    if eig.values.as_slice().windows(2).any(|w| w[0] < w[1]) {
        return fail("eigenvalues not in descending order".to_string());
    }
    Ok(())
}

/// Residual-like symmetric matrix with unit-scale diagonal.
pub fn symmetric_case() -> impl Strategy<Value = (usize, u64, f64, f64)> {
    (3usize..20, any::<u64>(), 0.0f64..1.5, 0.0f64..1.5)
}

fn random_cov(p: usize, seed: u64) -> DMatrix<f64> {
    let x = factor_panel(3 * p + 10, p, seed);
    sample_cov(&x).expect("valid panel")
}

pub fn check_threshold_properties((p, seed, tau1, tau2): (usize, u64, f64, f64)) -> CheckResult {
    let s = random_cov(p, seed);
    let (lo, hi) = if tau1 <= tau2 { (tau1, tau2) } else { (tau2, tau1) };
    for mode in [ThresholdMode::Soft, ThresholdMode::Hard] {
        let spec = ThresholdSpec::new(1.0, 0.0, mode).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let a = apply_threshold(&s, lo, &spec).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let b = apply_threshold(&s, hi, &spec).map_err(|e| TestCaseError::fail(e.to_string()))?;
        for m in [&a, &b] {
            if m != &m.transpose() {
                return fail(format!("{mode:?} output not symmetric"));
            }
            if (0..p).any(|i| m[(i, i)] != s[(i, i)]) {
                return fail(format!("{mode:?} changed the diagonal"));
            }
        }
        let nnz = |m: &DMatrix<f64>| m.iter().filter(|v| **v != 0.0).count();
        if nnz(&b) > nnz(&a) {
            return fail(format!("{mode:?}: {} nonzeros at tau={hi} vs {} at tau={lo}", nnz(&b), nnz(&a)));
        }
    }
    Ok(())
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

/// Small simulated panel and a portfolio drawn from it.
pub fn forecast_case() -> impl Strategy<Value = (usize, u64, Vec<usize>)> {
    (8usize..14, any::<u64>(), proptest::sample::subsequence((0..8).collect::<Vec<_>>(), 2..5))
}

pub fn check_forecasts_psd((p, seed, assets): (usize, u64, Vec<usize>)) -> CheckResult {
    let data = generate(&DgpSpec::reference(p, 160), seed, 0).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let cfg = ModelConfig {
        rank: RankChoice::Fixed(3),
        ..Default::default()
    };
    let window = PanelWindow::new(data.panel.returns(), true).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let w = Portfolio::equal_weighted(p, &assets).map_err(|e| TestCaseError::fail(e.to_string()))?;
    for kind in ModelKind::ALL {
        let fit = fit_model(kind, &window, &w, &cfg).map_err(|e| TestCaseError::fail(format!("{kind}: {e}")))?;
        if let pgarch::pipeline::FittedModel::Pgarch(pf) = &fit {
            let st = PgarchState::new(&window, pf.params(), &cfg).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let sig = &st.forecast.sigma;
            let tol = 1e-10 * sig.diagonal().max();
            if min_eig(sig) < -tol {
                return fail(format!("pgarch full forecast has eigenvalue {:e}", min_eig(sig)));
            }
        }
        let fc = forecast_portfolio(&fit, &window, &w, &cfg, None).map_err(|e| TestCaseError::fail(e.to_string()))?;
        if !(fc.var_next > 0.0) {
            return fail(format!("{kind}: portfolio variance {}", fc.var_next));
        }
        if fc.var_path.iter().any(|v| !(*v > 0.0)) {
            return fail(format!("{kind}: nonpositive in-window variance"));
        }
        if let Some(sig) = &fc.sigma {
            let tol = 1e-10 * sig.diagonal().max();
            if min_eig(sig) < -tol {
                return fail(format!("{kind}: forecast has eigenvalue {:e}", min_eig(sig)));
            }
        }
    }
    Ok(())
}

/// Standardized history length, alpha and seed.
pub fn coverage_case() -> impl Strategy<Value = (usize, f64, u64)> {
    (0.005f64..0.2, any::<u64>(), 0usize..400).prop_map(|(alpha, seed, extra)| {
        let n = (1.0 / alpha).ceil() as usize + extra;
        (n, alpha, seed)
    })
}

pub fn check_empirical_coverage((n, alpha, seed): (usize, f64, u64)) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let rule = QuantileRule::new(QuantileKind::Empirical, alpha).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let c = quantile_value(&rule, Some(&z)).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let cover = z.iter().filter(|v| **v <= c).count() as f64 / n as f64;
    if (cover - alpha).abs() > 1.0 / n as f64 {
        return fail(format!("coverage {cover} vs alpha {alpha} with n={n}"));
    }
    Ok(())
}

pub fn seed_case() -> impl Strategy<Value = (u64, usize)> {
    (any::<u64>(), 6usize..12)
}

/// Simulation and estimation give bit-identical output for a fixed seed,
/// whatever the execution strategy.
pub fn check_seed_determinism((seed, p): (u64, usize)) -> CheckResult {
    let spec = DgpSpec::reference(p, 150);
    let a = generate(&spec, seed, 3).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let b = generate(&spec, seed, 3).map_err(|e| TestCaseError::fail(e.to_string()))?;
    if a.panel.returns() != b.panel.returns() || a.truth.h != b.truth.h {
        return fail("generate is not deterministic".to_string());
    }
    let cfg = |execution| ReplicationConfig {
        n_reps: 2,
        seed,
        models: vec![ModelKind::Pgarch, ModelKind::HistVol],
        portfolio_size: 3,
        execution,
        ..Default::default()
    };
    let x = run_replications(&spec, &cfg(Execution::Sequential)).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let y = run_replications(&spec, &cfg(Execution::Parallel)).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let key = |t: &pgarch::simul::MetricTable| -> Vec<(String, String, u64)> {
        t.rows.iter().map(|r| (r.model.clone(), r.metric.clone(), r.mean.to_bits())).collect()
    };
    if key(&x) != key(&y) {
        return fail("replication output depends on execution strategy".to_string());
    }
    Ok(())
}

/// Hit sequence with a given length and hit probability.
pub fn hits_case() -> impl Strategy<Value = (Vec<u8>, f64)> {
    (proptest::collection::vec(0.0f64..1.0, 20..400), 0.001f64..0.3, 0.0f64..0.5).prop_map(|(u, alpha, q)| {
        (u.iter().map(|&x| u8::from(x < q)).collect(), alpha)
    })
}

pub fn check_pvalues_in_unit_interval((hits, alpha): (Vec<u8>, f64)) -> CheckResult {
    let in_unit = |p: f64| (0.0..=1.0).contains(&p);
    let uc = backtest::lr_uc(&hits, alpha).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let cc = backtest::lr_cc(&hits, alpha).map_err(|e| TestCaseError::fail(e.to_string()))?;
    for (name, p) in [("uc", uc.p_value), ("ind", cc.ind.p_value), ("cc", cc.cc.p_value)] {
        if !in_unit(p) {
            return fail(format!("{name} p-value {p}"));
        }
    }
    if uc.stat < -1e-12 || cc.ind.stat < -1e-12 {
        return fail("negative LR statistic".to_string());
    }
    Ok(())
}

/// With `n` fixed and hits above `αn`, adding one more hit cannot lower `LR_uc`.
pub fn check_kupiec_monotone((n, alpha, k): (usize, f64, usize)) -> CheckResult {
    let make = |k: usize| -> Vec<u8> { (0..n).map(|i| u8::from(i < k)).collect() };
    let lo = backtest::lr_uc(&make(k), alpha).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let hi = backtest::lr_uc(&make(k + 1), alpha).map_err(|e| TestCaseError::fail(e.to_string()))?;
    if (k as f64) >= alpha * n as f64 && hi.stat < lo.stat - 1e-9 {
        return fail(format!("LR_uc fell from {} to {} at k={k}", lo.stat, hi.stat));
    }
    if ((k + 1) as f64) <= alpha * n as f64 && hi.stat > lo.stat + 1e-9 {
        return fail(format!("LR_uc rose from {} to {} below the expected count", lo.stat, hi.stat));
    }
    Ok(())
}

pub fn kupiec_case() -> impl Strategy<Value = (usize, f64, usize)> {
    (50usize..600, 0.005f64..0.2).prop_flat_map(|(n, a)| (Just(n), Just(a), 0..n))
}
