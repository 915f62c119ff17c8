//! Ensemble diagnostics: strong consistency, convergence rates, regime b/c
//! stabilization and the one-step conditional covariance probe.

use serde::{Deserialize, Serialize};

use super::stats::{compensated_mean, median, norm, ols_slope, raw_second_moment};
use super::{state_vector, ConsistencyAt, Ensemble};
use crate::error::{Error, Result};
use crate::models::{ModelSpec, Response};
use crate::oracle::one_step_moments;
use crate::rng::{stream_rng, uniform_open_closed};
use crate::spectral::Matrix;
use crate::urn::{draw_weighted, UrnState};

fn dist(a: &[f64], b: &[f64]) -> f64 {
    norm(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>())
}

fn ensemble_mean(ensemble: &Ensemble, k: usize, f: impl Fn(&super::Checkpoint) -> f64) -> f64 {
    compensated_mean(ensemble.paths.iter().map(|path| f(&path[k])))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub checkpoints: Vec<u64>,
    pub per_checkpoint: Vec<ConsistencyAt>,
    /// Largest of the four ensemble-mean distances at the last checkpoint.
    pub latest_max: f64,
    /// Whether the largest distance never increases from one checkpoint to the next.
    pub monotone: bool,
}

/// Ensemble-mean distances of `Ỹ`, `Ñ`, `S̃` and `Π` to their limits
/// `v*`, `v*`, `diag(p)v*` and `p`.
pub fn consistency_check(ensemble: &Ensemble, v_star: &[f64], p: Option<&[f64]>) -> Result<ConsistencyReport> {
    let cps = &ensemble.checkpoints;
    if ensemble.paths.is_empty() {
        return Err(Error::input("consistency check needs at least one surviving path"));
    }
    let span = cps.last().copied().unwrap_or(0) as f64 / cps.first().copied().unwrap_or(1).max(1) as f64;
    if span < 100.0 * (1.0 - 1e-12) {
        return Err(Error::input("consistency check needs checkpoints spanning two decades"));
    }
    let target_s: Option<Vec<f64>> = p.map(|p| p.iter().zip(v_star).map(|(a, b)| a * b).collect());
    let per_checkpoint: Vec<ConsistencyAt> = (0..cps.len())
        .map(|k| ConsistencyAt {
            y: ensemble_mean(ensemble, k, |c| dist(&c.y_tilde(), v_star)),
            n: ensemble_mean(ensemble, k, |c| dist(&c.n_tilde(), v_star)),
            s: target_s.as_ref().map(|t| ensemble_mean(ensemble, k, |c| dist(&c.s_tilde(), t))),
            pi: p.map(|p| ensemble_mean(ensemble, k, |c| dist(&c.pi(), p))),
        })
        .collect();
    let worst = |c: &ConsistencyAt| c.y.max(c.n).max(c.s.unwrap_or(0.0)).max(c.pi.unwrap_or(0.0));
    let series: Vec<f64> = per_checkpoint.iter().map(worst).collect();
    Ok(ConsistencyReport {
        checkpoints: cps.clone(),
        latest_max: *series.last().unwrap(),
        monotone: series.windows(2).all(|w| w[1] <= w[0]),
        per_checkpoint,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub stderr: f64,
    pub n: Vec<u64>,
    pub mean_error: Vec<f64>,
}

/// Least-squares slope of `log E‖θ_n − θ*‖` against `log n`.
pub fn rate_fit(ensemble: &Ensemble, theta_star: &[f64], extended: bool) -> Result<RateFit> {
    if ensemble.checkpoints.len() < 5 {
        return Err(Error::input("rate fit needs at least five checkpoints"));
    }
    if ensemble.paths.is_empty() {
        return Err(Error::input("rate fit needs at least one surviving path"));
    }
    let mean_error: Vec<f64> = (0..ensemble.checkpoints.len())
        .map(|k| ensemble_mean(ensemble, k, |c| dist(&state_vector(c, extended), theta_star)))
        .collect();
    let x: Vec<f64> = ensemble.checkpoints.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = mean_error.iter().map(|e| e.ln()).collect();
    let (slope, stderr) = ols_slope(&x, &y);
    Ok(RateFit {
        slope,
        stderr,
        n: ensemble.checkpoints.clone(),
        mean_error,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegimeBReport {
    pub n: Vec<u64>,
    /// Ensemble RMS of `√(n/ln n)(θ_n − θ*)` per checkpoint.
    pub rms_log_scaled: Vec<f64>,
    /// Ensemble RMS of `√n(θ_n − θ*)`, for comparison.
    pub rms_sqrt_scaled: Vec<f64>,
    /// `(max − min)/mean` of `rms_log_scaled`.
    pub drift: f64,
    pub sqrt_drift: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn relative_drift(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    (max - min) / compensated_mean(xs.iter().copied())
}

/// The `√(n/ln n)`-scaled ensemble RMS must stay within `tolerance` relative
/// drift across the checkpoints.
pub fn regime_b_stabilization(
    ensemble: &Ensemble,
    theta_star: &[f64],
    extended: bool,
    tolerance: f64,
) -> Result<RegimeBReport> {
    if ensemble.checkpoints.len() < 2 || ensemble.checkpoints[0] < 3 {
        return Err(Error::input("regime b diagnostic needs two checkpoints with n ≥ 3"));
    }
    let ms: Vec<f64> = (0..ensemble.checkpoints.len())
        .map(|k| {
            ensemble_mean(ensemble, k, |c| {
                dist(&state_vector(c, extended), theta_star).powi(2)
            })
        })
        .collect();
    let rms_log_scaled: Vec<f64> = ensemble
        .checkpoints
        .iter()
        .zip(&ms)
        .map(|(&n, m)| (m * n as f64 / (n as f64).ln()).sqrt())
        .collect();
    let rms_sqrt_scaled: Vec<f64> = ensemble
        .checkpoints
        .iter()
        .zip(&ms)
        .map(|(&n, m)| (m * n as f64).sqrt())
        .collect();
    let drift = relative_drift(&rms_log_scaled);
    Ok(RegimeBReport {
        n: ensemble.checkpoints.clone(),
        sqrt_drift: relative_drift(&rms_sqrt_scaled),
        rms_log_scaled,
        rms_sqrt_scaled,
        drift,
        tolerance,
        pass: drift <= tolerance,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegimeCReport {
    pub beta: f64,
    /// First checkpoint of the last decade.
    pub window_start: u64,
    pub median_oscillation: f64,
    pub median_magnitude: f64,
    pub ratio: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Per path, the largest `‖z_k − z_last‖` over the last decade of checkpoints,
/// with `z = n^β(θ_n − θ*)`; stabilizes when the median oscillation is small
/// relative to the median `‖z_last‖`.
pub fn regime_c_stabilization(
    ensemble: &Ensemble,
    theta_star: &[f64],
    extended: bool,
    beta: f64,
    tolerance: f64,
) -> Result<RegimeCReport> {
    let cps = &ensemble.checkpoints;
    let last = *cps.last().ok_or_else(|| Error::input("no checkpoints"))?;
    let window: Vec<usize> = (0..cps.len()).filter(|&k| cps[k] * 10 >= last).collect();
    if window.len() < 2 {
        return Err(Error::input("regime c diagnostic needs two checkpoints in the last decade"));
    }
    if ensemble.paths.is_empty() {
        return Err(Error::input("regime c diagnostic needs at least one surviving path"));
    }
    let scaled = |c: &super::Checkpoint| -> Vec<f64> {
        let f = (c.n as f64).powf(beta);
        state_vector(c, extended)
            .iter()
            .zip(theta_star)
            .map(|(a, b)| f * (a - b))
            .collect()
    };
    let mut osc = Vec::with_capacity(ensemble.paths.len());
    let mut mag = Vec::with_capacity(ensemble.paths.len());
    for path in &ensemble.paths {
        let z_last = scaled(&path[cps.len() - 1]);
        let o = window
            .iter()
            .map(|&k| dist(&scaled(&path[k]), &z_last))
            .fold(0.0, f64::max);
        osc.push(o);
        mag.push(norm(&z_last));
    }
    let median_oscillation = median(&osc);
    let median_magnitude = median(&mag);
    let ratio = median_oscillation / median_magnitude;
    Ok(RegimeCReport {
        beta,
        window_start: cps[window[0]],
        median_oscillation,
        median_magnitude,
        ratio,
        tolerance,
        pass: ratio <= tolerance,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeResult {
    pub samples: usize,
    /// Empirical `E[ZZᵀ]` of the stacked increments `(ΔM, ΔÑ, ΔS̃)`.
    pub covariance: Matrix,
    pub std_error: Matrix,
    /// Exact one-step second moment at the same state.
    pub target: Matrix,
    /// Largest `|estimate − target|` in standard errors over entries with a
    /// nonzero standard error.
    pub max_z: f64,
    /// Largest `|estimate − target|` over entries with zero standard error.
    pub max_degenerate_error: f64,
}

/// Resamples one step from `state` `r_inner` times and estimates the
/// conditional second moment of the martingale increments.
pub fn conditional_covariance_probe(
    model: &ModelSpec,
    state: &UrnState,
    r_inner: usize,
    seed: u64,
) -> Result<ProbeResult> {
    let d = model.arms();
    let p = model
        .p()
        .ok_or_else(|| Error::input("the probe needs a Bernoulli design"))?;
    if r_inner < 2 {
        return Err(Error::input("the probe needs at least two resamples"));
    }
    if !(state.w > 0.0) {
        return Err(Error::Extinction { step: state.n });
    }
    let target = one_step_moments(model, state)?.covariance;
    let h = model.generating_matrix(&state.counts, &state.successes)?;
    let yw: Vec<f64> = state.y.iter().map(|y| y / state.w).collect();
    let comp = h.mul_vec(&yw);
    let mut rng = stream_rng(seed, 0);
    let mut col = vec![0.0; d];
    let mut rows = Vec::with_capacity(r_inner);
    for _ in 0..r_inner {
        let u = uniform_open_closed(&mut rng);
        let arm = draw_weighted(&state.y, state.w, u);
        let resp = model.sample_response(arm, &mut rng);
        model.addition_column_into(arm, resp, &state.counts, &state.successes, &mut col)?;
        let success = resp == Response::Bernoulli(true);
        let mut z: Vec<f64> = col.iter().zip(&comp).map(|(a, b)| a - b).collect();
        z.extend((0..d).map(|i| (i == arm) as u8 as f64 - yw[i]));
        z.extend((0..d).map(|i| ((i == arm && success) as u8 as f64) - p[i] * yw[i]));
        rows.push(z);
    }
    let (covariance, std_error) = raw_second_moment(&rows);
    let mut max_z: f64 = 0.0;
    let mut max_degenerate_error: f64 = 0.0;
    for i in 0..3 * d {
        for j in 0..3 * d {
            let e = (covariance[(i, j)] - target[(i, j)]).abs();
            let se = std_error[(i, j)];
            if se > 1e-14 {
                max_z = max_z.max(e / se);
            } else {
                max_degenerate_error = max_degenerate_error.max(e);
            }
        }
    }
    Ok(ProbeResult {
        samples: r_inner,
        covariance,
        std_error,
        target,
        max_z,
        max_degenerate_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::asymptotics;
    use crate::models::{bhs_model, wei_model};
    use crate::montecarlo::{run_ensemble, ReplicationPlan};

    fn at_limit(model: &ModelSpec, n: u64, counts: Vec<u64>, successes: Vec<u64>) -> UrnState {
        let v = model.v_star().unwrap();
        UrnState {
            n,
            y: v.iter().map(|x| x * n as f64).collect(),
            counts,
            successes,
            w: n as f64,
            w0: 1.0,
        }
    }

    #[test]
    fn probe_matches_gamma_at_limit_wei() {
        let m = wei_model(&[0.5, 0.7]).unwrap();
        let state = at_limit(&m, 100, vec![50, 50], vec![25, 35]);
        let r = conditional_covariance_probe(&m, &state, 200_000, 11).unwrap();
        assert!(r.max_z < 4.5, "max z {}", r.max_z);
        let g = asymptotics(&m).unwrap().gamma;
        assert!(r.target.block(0, 0, 4, 4).max_abs_diff(&g) < 1e-12);
    }

    #[test]
    fn probe_matches_gamma_tilde_bhs() {
        let m = bhs_model(&[0.5, 0.7], &[0.5, 0.5]).unwrap();
        let state = at_limit(&m, 40, vec![20, 20], vec![10, 14]);
        let r = conditional_covariance_probe(&m, &state, 200_000, 12).unwrap();
        assert!(r.max_z < 4.5, "max z {}", r.max_z);
        let g = asymptotics(&m).unwrap().extended.unwrap().gamma_tilde;
        assert!(r.target.max_abs_diff(&g) < 1e-12);
    }

    #[test]
    fn degenerate_draw_has_no_allocation_noise() {
        let m = bhs_model(&[0.5, 0.7], &[0.5, 0.5]).unwrap();
        let state = UrnState {
            n: 3,
            y: vec![4.0, 0.0],
            counts: vec![2, 1],
            successes: vec![1, 1],
            w: 4.0,
            w0: 1.0,
        };
        let r = conditional_covariance_probe(&m, &state, 5000, 1).unwrap();
        for j in 0..6 {
            assert_eq!(r.covariance[(3, j)], 0.0);
            assert_eq!(r.covariance[(j, 3)], 0.0);
        }
        assert!(r.max_degenerate_error < 1e-15);
    }

    #[test]
    fn consistency_needs_two_decades() {
        let m = wei_model(&[0.5, 0.7]).unwrap();
        let e = run_ensemble(&m, &ReplicationPlan::new(100, 4, vec![10, 100], 0)).unwrap();
        assert!(consistency_check(&e, &[0.375, 0.625], None).is_err());
    }

    #[test]
    fn permuted_limit_fails_consistency() {
        let m = wei_model(&[0.5, 0.7]).unwrap();
        let e = run_ensemble(&m, &ReplicationPlan::new(2000, 50, vec![20, 200, 2000], 4)).unwrap();
        let good = consistency_check(&e, &[0.375, 0.625], Some(&[0.5, 0.7])).unwrap();
        let bad = consistency_check(&e, &[0.625, 0.375], Some(&[0.5, 0.7])).unwrap();
        assert!(good.per_checkpoint[2].y < 0.05);
        assert!(bad.per_checkpoint[2].y > 0.3);
    }

    #[test]
    fn rate_fit_needs_five_checkpoints() {
        let m = wei_model(&[0.5, 0.7]).unwrap();
        let e = run_ensemble(&m, &ReplicationPlan::new(1000, 4, vec![10, 100, 1000], 0)).unwrap();
        assert!(rate_fit(&e, &[0.0; 4], false).is_err());
    }

    #[test]
    fn relative_drift_of_constant_is_zero() {
        assert_eq!(relative_drift(&[2.0, 2.0, 2.0]), 0.0);
        assert!((relative_drift(&[1.0, 2.0, 3.0]) - 1.0).abs() < 1e-15);
    }
}
