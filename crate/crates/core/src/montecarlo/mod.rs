//! Replicated trajectories and the ensemble estimators compared against the
//! limit theorems.
//!
//! Replication `r` draws from stream `r` of the master seed and the per-path
//! results are reduced in replication order, so every statistic is identical
//! whether the replications run on one thread or many.

mod diagnostics;
pub mod stats;

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::asymptotics::{asymptotics, AsymptoticsBundle, Regime};
use crate::error::{Error, Result};
use crate::models::{phi_of_ratios, ModelKind, ModelSpec};
use crate::rng::stream_rng;
use crate::spectral::Matrix;
use crate::urn::{theorem_remainders, validate_checkpoints, Checkpoint, UrnState};

pub use diagnostics::{
    conditional_covariance_probe, consistency_check, rate_fit, regime_b_stabilization,
    regime_c_stabilization, ConsistencyReport, ProbeResult, RateFit, RegimeBReport, RegimeCReport,
};
use stats::{compensated_mean, covariance, ks_normal, mean_vector, norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Statistic {
    #[serde(rename = "consistency")]
    Consistency,
    #[serde(rename = "clt")]
    Clt,
    #[serde(rename = "regime_b")]
    RegimeB,
    #[serde(rename = "regime_c")]
    RegimeC,
    #[serde(rename = "gammaH")]
    GammaH,
    #[serde(rename = "remainder_decay")]
    RemainderDecay,
}

impl FromStr for Statistic {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown statistic '{s}'")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicationPlan {
    pub horizon: u64,
    pub replications: usize,
    pub checkpoints: Vec<u64>,
    pub seed: u64,
    pub statistics: Vec<Statistic>,
    /// Worker threads; `None` uses every available core, `Some(1)` the sequential path.
    pub workers: Option<usize>,
}

impl ReplicationPlan {
    pub fn new(horizon: u64, replications: usize, checkpoints: Vec<u64>, seed: u64) -> Self {
        Self {
            horizon,
            replications,
            checkpoints,
            seed,
            statistics: vec![Statistic::Consistency, Statistic::Clt],
            workers: None,
        }
    }

    pub fn with_statistics(mut self, s: &[Statistic]) -> Self {
        self.statistics = s.to_vec();
        self
    }

    pub fn with_workers(mut self, workers: Option<usize>) -> Self {
        self.workers = workers;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::input("at least one replication is required"));
        }
        if self.checkpoints.is_empty() || self.checkpoints[0] == 0 {
            return Err(Error::input("checkpoints must be nonempty and start at n ≥ 1"));
        }
        if self.workers == Some(0) {
            return Err(Error::input("worker count must be positive"));
        }
        validate_checkpoints(self.horizon, &self.checkpoints)
    }
}

/// Applies `f` to every replication index, returning results in index order.
pub fn map_replications<T, F>(replications: usize, workers: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if workers != Some(1) {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.unwrap_or(0))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        return Ok(pool.install(|| {
            (0..replications as u64)
                .into_par_iter()
                .map(&f)
                .collect()
        }));
    }
    let _ = workers;
    Ok((0..replications as u64).map(f).collect())
}

/// Simulates replication `r` and records the checkpoints.
pub fn run_path(model: &ModelSpec, seed: u64, r: u64, horizon: u64, checkpoints: &[u64]) -> Result<Vec<Checkpoint>> {
    let mut rng = stream_rng(seed, r);
    let mut state = UrnState::initial(model);
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut scratch = vec![0.0; model.arms()];
    let mut next = checkpoints.iter().copied().peekable();
    while state.n < horizon {
        state.advance(model, &mut rng, &mut scratch)?;
        if next.peek() == Some(&state.n) {
            out.push(Checkpoint::from(&state));
            next.next();
        }
    }
    Ok(out)
}

/// Per-replication checkpoint records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ensemble {
    pub seed: u64,
    pub checkpoints: Vec<u64>,
    /// Checkpoints of every replication that survived, in replication order.
    pub paths: Vec<Vec<Checkpoint>>,
    /// Replications that went extinct (removal designs only).
    pub extinct: Vec<u64>,
}

pub fn run_ensemble(model: &ModelSpec, plan: &ReplicationPlan) -> Result<Ensemble> {
    plan.validate()?;
    let results = map_replications(plan.replications, plan.workers, |r| {
        run_path(model, plan.seed, r, plan.horizon, &plan.checkpoints)
    })?;
    let mut paths = Vec::with_capacity(results.len());
    let mut extinct = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(p) => paths.push(p),
            Err(Error::Extinction { .. }) => extinct.push(r as u64),
            Err(e) => return Err(e),
        }
    }
    Ok(Ensemble {
        seed: plan.seed,
        checkpoints: plan.checkpoints.clone(),
        paths,
        extinct,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    SqrtN,
    SqrtNOverLogN,
    NBeta,
}

impl Scaling {
    pub fn for_regime(regime: Regime) -> Self {
        match regime {
            Regime::A => Scaling::SqrtN,
            Regime::B => Scaling::SqrtNOverLogN,
            Regime::C => Scaling::NBeta,
        }
    }

    pub fn factor(self, n: u64, beta: f64) -> f64 {
        let n = n as f64;
        match self {
            Scaling::SqrtN => n.sqrt(),
            Scaling::SqrtNOverLogN => (n / n.ln()).sqrt(),
            Scaling::NBeta => n.powf(beta),
        }
    }
}

/// `θ_n = (Ỹ, Ñ)`, or `θ̃_n = (Ỹ, Ñ, S̃)` when `extended`.
pub fn state_vector(c: &Checkpoint, extended: bool) -> Vec<f64> {
    let mut v = c.y_tilde();
    v.extend(c.n_tilde());
    if extended {
        v.extend(c.s_tilde());
    }
    v
}

/// Column-major `vec(H_n)` for the success-rate driven design.
pub fn vec_h(c: &Checkpoint, p: &[f64]) -> Result<Vec<f64>> {
    let h = phi_of_ratios(&c.pi(), p)?;
    let d = p.len();
    Ok((0..d * d).map(|r| h[(r % d, r / d)]).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaHStats {
    pub covariance: Matrix,
    pub rel_error: Option<f64>,
    /// Frobenius norm of the empirical covariance and its standard error.
    pub norm: f64,
    pub norm_se: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointStats {
    pub n: u64,
    pub samples: usize,
    /// Mean of the scaled errors.
    pub mean: Vec<f64>,
    /// Covariance of the scaled errors; absent for a single replication.
    pub covariance: Option<Matrix>,
    /// `‖Σ̂ − Σ‖_F / ‖Σ‖_F` against the theoretical covariance (regime a).
    pub sigma_rel_error: Option<f64>,
    /// KS distance of each coordinate to `N(0, Σᵢᵢ)`.
    pub ks_theory: Option<Vec<f64>>,
    /// KS distance of each coordinate to the fitted normal.
    pub ks_fitted: Option<Vec<f64>>,
    /// Mean whitened squared norm on the non-degenerate coordinates, its
    /// standard error and the expected value (the dimension).
    pub chi2_mean: Option<(f64, f64, usize)>,
    /// Ensemble mean of the unscaled `‖θ_n − θ*‖`.
    pub mean_error_norm: f64,
    /// Root mean square of the scaled error norm.
    pub rms_scaled: f64,
    pub consistency: Option<ConsistencyAt>,
    pub gamma_h: Option<GammaHStats>,
    /// `n·E‖r̄_{n+1}‖²`.
    pub remainder_decay: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistencyAt {
    pub y: f64,
    pub n: f64,
    pub s: Option<f64>,
    pub pi: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub replications: usize,
    pub extinct: usize,
    pub extended: bool,
    pub scaling: Scaling,
    pub beta: f64,
    pub checkpoints: Vec<CheckpointStats>,
}

impl EnsembleStats {
    pub fn last(&self) -> &CheckpointStats {
        self.checkpoints.last().expect("plans have at least one checkpoint")
    }
}

/// Simulates the plan and computes the requested statistics.
pub fn run_replications(model: &ModelSpec, plan: &ReplicationPlan) -> Result<EnsembleStats> {
    let bundle = asymptotics(model)?;
    let ensemble = run_ensemble(model, plan)?;
    ensemble_stats(model, &bundle, &ensemble, &plan.statistics)
}

pub fn ensemble_stats(
    model: &ModelSpec,
    bundle: &AsymptoticsBundle,
    ensemble: &Ensemble,
    statistics: &[Statistic],
) -> Result<EnsembleStats> {
    let plan_wants = |s| statistics.contains(&s);
    let extended = model.kind() == ModelKind::Bhs && bundle.extended.is_some();
    let (theta_star, sigma) = match (&bundle.extended, extended) {
        (Some(ext), true) => (ext.theta_tilde_star.clone(), ext.sigma_tilde.clone()),
        _ => (bundle.theta_star.clone(), bundle.sigma.clone()),
    };
    let scaling = Scaling::for_regime(bundle.regime);
    let beta = 1.0 - bundle.lambda_max.re;
    let d = model.arms();
    let v = &bundle.v_star;
    let p = model.p();

    let mut out = Vec::with_capacity(ensemble.checkpoints.len());
    for (k, &n) in ensemble.checkpoints.iter().enumerate() {
        let factor = scaling.factor(n, beta);
        let errors: Vec<Vec<f64>> = ensemble
            .paths
            .iter()
            .map(|path| {
                state_vector(&path[k], extended)
                    .iter()
                    .zip(&theta_star)
                    .map(|(a, b)| a - b)
                    .collect()
            })
            .collect();
        let scaled: Vec<Vec<f64>> = errors
            .iter()
            .map(|e| e.iter().map(|x| x * factor).collect())
            .collect();
        let samples = scaled.len();
        let mean = mean_vector(&scaled);
        let cov = covariance(&scaled);
        let clt = plan_wants(Statistic::Clt);
        let sigma_rel_error = match (&cov, &sigma, clt) {
            (Some(c), Some(s), true) => Some(c.relative_error(s)),
            _ => None,
        };
        let column = |i: usize| scaled.iter().map(|z| z[i]).collect::<Vec<f64>>();
        let ks_theory = match (&sigma, clt && samples > 0) {
            (Some(s), true) => Some(
                (0..theta_star.len())
                    .map(|i| ks_normal(&column(i), 0.0, s[(i, i)].max(0.0).sqrt()))
                    .collect(),
            ),
            _ => None,
        };
        let ks_fitted = match (&cov, clt) {
            (Some(c), true) => Some(
                (0..theta_star.len())
                    .map(|i| ks_normal(&column(i), mean[i], c[(i, i)].max(0.0).sqrt()))
                    .collect(),
            ),
            _ => None,
        };
        let chi2_mean = match (&sigma, clt && samples > 1) {
            (Some(s), true) => whitened_norm_mean(&scaled, s, d, extended),
            _ => None,
        };
        let mean_error_norm = compensated_mean(errors.iter().map(|e| norm(e)));
        let rms_scaled = compensated_mean(scaled.iter().map(|e| e.iter().map(|x| x * x).sum())).sqrt();

        let consistency = plan_wants(Statistic::Consistency).then(|| {
            let at = |f: &dyn Fn(&Checkpoint) -> f64| compensated_mean(ensemble.paths.iter().map(|path| f(&path[k])));
            let dist = |a: &[f64], b: &[f64]| norm(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>());
            ConsistencyAt {
                y: at(&|c| dist(&c.y_tilde(), v)),
                n: at(&|c| dist(&c.n_tilde(), v)),
                s: p.map(|p| {
                    let u: Vec<f64> = p.iter().zip(v).map(|(a, b)| a * b).collect();
                    at(&|c| dist(&c.s_tilde(), &u))
                }),
                pi: p.map(|p| at(&|c| dist(&c.pi(), p))),
            }
        });

        let gamma_h = match (plan_wants(Statistic::GammaH), model.kind(), p) {
            (true, ModelKind::Bhs, Some(p)) => Some(gamma_h_stats(ensemble, k, n, p, bundle)?),
            _ => None,
        };

        let remainder_decay = if plan_wants(Statistic::RemainderDecay) {
            let vals: Result<Vec<f64>> = ensemble
                .paths
                .iter()
                .map(|path| {
                    let c = &path[k];
                    let state = UrnState {
                        n: c.n,
                        y: c.y.clone(),
                        counts: c.counts.clone(),
                        successes: c.successes.clone(),
                        w: c.w,
                        w0: model.y0().iter().sum(),
                    };
                    let h_next = model.generating_matrix(&c.counts, &c.successes)?;
                    let r = theorem_remainders(&state, model, &h_next)?;
                    Ok(n as f64 * r.r_bar.iter().map(|x| x * x).sum::<f64>())
                })
                .collect();
            Some(compensated_mean(vals?))
        } else {
            None
        };

        out.push(CheckpointStats {
            n,
            samples,
            mean,
            covariance: cov,
            sigma_rel_error,
            ks_theory,
            ks_fitted,
            chi2_mean,
            mean_error_norm,
            rms_scaled,
            consistency,
            gamma_h,
            remainder_decay,
        });
    }
    Ok(EnsembleStats {
        replications: ensemble.paths.len() + ensemble.extinct.len(),
        extinct: ensemble.extinct.len(),
        extended,
        scaling,
        beta,
        checkpoints: out,
    })
}

fn gamma_h_stats(
    ensemble: &Ensemble,
    k: usize,
    n: u64,
    p: &[f64],
    bundle: &AsymptoticsBundle,
) -> Result<GammaHStats> {
    let d = p.len();
    let h = phi_of_ratios(p, p)?;
    let root = (n as f64).sqrt();
    let rows: Vec<Vec<f64>> = ensemble
        .paths
        .iter()
        .map(|path| {
            vec_h(&path[k], p).map(|vh| {
                vh.iter()
                    .enumerate()
                    .map(|(r, x)| root * (x - h[(r % d, r / d)]))
                    .collect()
            })
        })
        .collect::<Result<_>>()?;
    let cov = covariance(&rows).unwrap_or_else(|| Matrix::zeros(d * d, d * d));
    let target = bundle.extended.as_ref().and_then(|e| e.gamma_h.as_ref());
    let rel_error = target
        .filter(|t| t.frobenius_norm() > 0.0)
        .map(|t| cov.relative_error(t));
    // standard error of ‖Ĉ‖_F from the entrywise product variances
    let m = mean_vector(&rows);
    let centered: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&m).map(|(a, b)| a - b).collect())
        .collect();
    let (_, se) = stats::raw_second_moment(&centered);
    Ok(GammaHStats {
        norm: cov.frobenius_norm(),
        norm_se: se.frobenius_norm(),
        covariance: cov,
        rel_error,
    })
}

/// Mean of `zᵀ Σ_r⁻¹ z` over the coordinates that are not pinned by the
/// weight constraints (the last entry of the `Ỹ` and `Ñ` blocks is dropped).
fn whitened_norm_mean(rows: &[Vec<f64>], sigma: &Matrix, d: usize, extended: bool) -> Option<(f64, f64, usize)> {
    let blocks = if extended { 3 } else { 2 };
    let keep: Vec<usize> = (0..blocks * d)
        .filter(|&i| !(i == d - 1 || i == 2 * d - 1))
        .collect();
    let k = keep.len();
    let reduced = Matrix::from_fn(k, k, |i, j| sigma[(keep[i], keep[j])]);
    let inv = reduced.inverse().ok()?;
    let q: Vec<f64> = rows
        .iter()
        .map(|z| {
            let zr: Vec<f64> = keep.iter().map(|&i| z[i]).collect();
            zr.iter().zip(inv.mul_vec(&zr)).map(|(a, b)| a * b).sum()
        })
        .collect();
    let m = compensated_mean(q.iter().copied());
    let var = compensated_mean(q.iter().map(|x| (x - m).powi(2)));
    Some((m, (var / q.len() as f64).sqrt(), k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{bhs_model, wei_model};

    #[test]
    fn statistic_names() {
        assert_eq!("gammaH".parse::<Statistic>().unwrap(), Statistic::GammaH);
        assert_eq!("regime_b".parse::<Statistic>().unwrap(), Statistic::RegimeB);
        assert!(matches!("bogus".parse::<Statistic>(), Err(Error::Config(_))));
    }

    #[test]
    fn single_replication_has_no_covariance() {
        let m = wei_model(&[0.5, 0.7]).unwrap();
        let plan = ReplicationPlan::new(100, 1, vec![100], 3).with_workers(Some(1));
        let s = run_replications(&m, &plan).unwrap();
        assert!(s.last().covariance.is_none());
        assert!(s.last().sigma_rel_error.is_none());
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise() {
        let m = bhs_model(&[0.5, 0.6, 0.7], &[1.0 / 3.0; 3]).unwrap();
        let plan = ReplicationPlan::new(500, 40, vec![50, 500], 17)
            .with_statistics(&[Statistic::Clt, Statistic::Consistency, Statistic::GammaH]);
        let a = run_replications(&m, &plan.clone().with_workers(Some(1))).unwrap();
        let b = run_replications(&m, &plan.with_workers(Some(3))).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn ensemble_is_reproducible() {
        let m = wei_model(&[0.5, 0.7]).unwrap();
        let plan = ReplicationPlan::new(200, 8, vec![10, 200], 5);
        let a = run_ensemble(&m, &plan).unwrap();
        let b = run_ensemble(&m, &plan).unwrap();
        assert_eq!(a.paths, b.paths);
        assert_ne!(a.paths[0], a.paths[1]);
    }

    #[test]
    fn pathwise_weight_in_checkpoints() {
        let m = wei_model(&[0.5, 0.7]).unwrap();
        let plan = ReplicationPlan::new(1000, 4, vec![10, 100, 1000], 1);
        for path in run_ensemble(&m, &plan).unwrap().paths {
            for c in path {
                let w: f64 = c.y_tilde().iter().sum();
                assert!((w - (1.0 + c.n as f64) / c.n as f64).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn plan_validation() {
        let m = wei_model(&[0.5, 0.7]).unwrap();
        assert!(run_ensemble(&m, &ReplicationPlan::new(10, 0, vec![10], 0)).is_err());
        assert!(run_ensemble(&m, &ReplicationPlan::new(10, 2, vec![20], 0)).is_err());
        assert!(run_ensemble(&m, &ReplicationPlan::new(10, 2, vec![], 0)).is_err());
        assert!(run_ensemble(&m, &ReplicationPlan::new(10, 2, vec![10], 0).with_workers(Some(0))).is_err());
    }

    #[test]
    fn two_arm_gamma_h_is_zero() {
        let m = bhs_model(&[0.5, 0.7], &[0.5, 0.5]).unwrap();
        let plan = ReplicationPlan::new(300, 20, vec![300], 9).with_statistics(&[Statistic::GammaH]);
        let s = run_replications(&m, &plan).unwrap();
        let g = s.last().gamma_h.as_ref().unwrap();
        assert!(g.norm <= 3.0 * g.norm_se + 1e-20);
        assert!(g.rel_error.is_none());
    }
}
