//! The acceptance suite: nine criteria, each returning its measured values,
//! tolerances and runtime.

use std::collections::HashMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{
    asymptotics, dh_tilde_star, dphi_vec, linearized_covariance, shifted_generator,
    SigmaCandidates,
};
use crate::error::{Error, Result};
use crate::models::{bhs_model, phi, wei_model, ModelSpec, Status};
use crate::montecarlo::{
    consistency_check, ensemble_stats, rate_fit, regime_b_stabilization, regime_c_stabilization,
    run_ensemble, run_path, ReplicationPlan, Statistic,
};
use crate::oracle::{enumerate_exact, Arithmetic};
use crate::rng::stream_rng;
use crate::spectral::{self, ComplexSpectrum, Matrix};
use crate::urn::UrnState;
use num_complex::Complex64;

/// Master seed of every acceptance experiment.
pub const ACCEPTANCE_SEED: u64 = 20240601;
/// `--quick` divides replication counts by this factor.
pub const QUICK_REPLICATION_FACTOR: usize = 10;
/// `--quick` multiplies Monte Carlo tolerances by `√10`.
pub const QUICK_TOLERANCE_FACTOR: f64 = 3.1622776601683795;
/// `--quick` divides horizons of the long-run criteria (3 and 7) by this factor.
pub const QUICK_HORIZON_FACTOR: u64 = 10;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AcceptanceOptions {
    pub quick: bool,
    pub workers: Option<usize>,
    pub seed: u64,
}

impl Default for AcceptanceOptions {
    fn default() -> Self {
        Self {
            quick: false,
            workers: None,
            seed: ACCEPTANCE_SEED,
        }
    }
}

impl AcceptanceOptions {
    fn reps(&self, full: usize) -> usize {
        if self.quick {
            (full / QUICK_REPLICATION_FACTOR).max(2)
        } else {
            full
        }
    }

    fn horizon(&self, full: u64) -> u64 {
        if self.quick {
            full / QUICK_HORIZON_FACTOR
        } else {
            full
        }
    }

    fn mc_tol(&self, full: f64) -> f64 {
        if self.quick {
            full * QUICK_TOLERANCE_FACTOR
        } else {
            full
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Bound {
    AtMost(f64),
    AtLeast(f64),
    /// `|value − target| ≤ tol`, stored as `[target, tol]`.
    Within(f64, f64),
    /// Reported, not gated.
    Info,
}

impl Bound {
    fn holds(self, x: f64) -> bool {
        match self {
            Bound::AtMost(t) => x <= t,
            Bound::AtLeast(t) => x >= t,
            Bound::Within(c, t) => (x - c).abs() <= t,
            Bound::Info => true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Measurement {
    pub name: String,
    pub value: f64,
    pub bound: Bound,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u8,
    pub title: String,
    pub pass: bool,
    pub measurements: Vec<Measurement>,
    pub runtime_s: f64,
    pub budget_s: f64,
    pub notes: Vec<String>,
}

impl CriterionResult {
    fn new(id: u8, title: &str, budget_s: f64) -> Self {
        Self {
            id,
            title: title.to_string(),
            pass: true,
            measurements: Vec::new(),
            runtime_s: 0.0,
            budget_s,
            notes: Vec::new(),
        }
    }

    fn measure(&mut self, name: impl Into<String>, value: f64, bound: Bound) {
        let pass = !value.is_nan() && bound.holds(value);
        self.pass &= pass;
        self.measurements.push(Measurement {
            name: name.into(),
            value,
            bound,
            pass,
        });
    }

    fn finish(mut self, started: Instant) -> Self {
        self.runtime_s = started.elapsed().as_secs_f64();
        let budget = self.budget_s;
        self.measure("runtime_s", self.runtime_s, Bound::AtMost(budget));
        self
    }

    /// Failing gated measurements.
    pub fn failures(&self) -> Vec<&Measurement> {
        self.measurements.iter().filter(|m| !m.pass).collect()
    }

    /// One-line summary.
    pub fn summary(&self) -> String {
        let status = if self.pass { "PASS" } else { "FAIL" };
        let mut line = format!("criterion {} [{status}] {} ({:.2}s)", self.id, self.title, self.runtime_s);
        for m in self.failures() {
            line.push_str(&format!("; {} = {:.6} violates {:?}", m.name, m.value, m.bound));
        }
        line
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AcceptanceReport {
    pub options: AcceptanceOptions,
    pub criteria: Vec<CriterionResult>,
    pub all_pass: bool,
}

pub const ALL_CRITERIA: [u8; 9] = [1, 2, 3, 4, 5, 6, 7, 8, 9];

/// Runs the selected criteria in order. Criteria 5 and 6 share one ensemble.
pub fn run_acceptance(opts: &AcceptanceOptions, selection: &[u8]) -> Result<AcceptanceReport> {
    if let Some(bad) = selection.iter().find(|&&c| !(1..=9).contains(&c)) {
        return Err(Error::Config(format!("no acceptance criterion {bad}")));
    }
    let want = |c: u8| selection.contains(&c);
    let mut criteria = Vec::new();
    if want(1) {
        criteria.push(criterion_1(opts)?);
    }
    if want(2) {
        criteria.push(criterion_2(opts)?);
    }
    if want(3) {
        criteria.push(criterion_3(opts)?);
    }
    if want(4) {
        criteria.push(criterion_4(opts)?);
    }
    if want(5) || want(6) {
        let (c5, c6) = criteria_5_6(opts)?;
        if want(5) {
            criteria.push(c5);
        }
        if want(6) {
            criteria.push(c6);
        }
    }
    if want(7) {
        criteria.push(criterion_7(opts)?);
    }
    if want(8) {
        criteria.push(criterion_8()?);
    }
    if want(9) {
        criteria.push(criterion_9(opts)?);
    }
    Ok(AcceptanceReport {
        options: *opts,
        all_pass: criteria.iter().all(|c| c.pass),
        criteria,
    })
}

fn figure1_model() -> Result<ModelSpec> {
    bhs_model(&[0.5, 0.7], &[0.5, 0.5])?.with_initial_counts(&[1, 1], &[1, 1])
}

/// Two-arm allocation picture: `Ỹ_n` and `Ñ_n` close to `v*` at `n = 2000` over 100 seeds.
pub fn criterion_1(opts: &AcceptanceOptions) -> Result<CriterionResult> {
    let t = Instant::now();
    let mut c = CriterionResult::new(1, "Allocation limit at n = 2000", 5.0);
    let model = figure1_model()?;
    let v = model.v_star()?;
    let plan = ReplicationPlan::new(2000, 100, vec![20, 200, 2000], opts.seed).with_workers(opts.workers);
    let ens = run_ensemble(&model, &plan)?;
    let report = consistency_check(&ens, &v, model.p())?;
    let last = report.per_checkpoint.last().unwrap();
    c.measure("mean |Ytilde_n - v*|", last.y, Bound::AtMost(0.02));
    c.measure("mean |Ntilde_n - v*|", last.n, Bound::AtMost(0.02));
    let worst_w = ens
        .paths
        .iter()
        .flat_map(|p| p.iter())
        .map(|cp| (cp.y.iter().sum::<f64>() - (1.0 + cp.n as f64)).abs())
        .fold(0.0, f64::max);
    c.measure("max |w(Y_n) - (w(Y_0) + n)|", worst_w, Bound::AtMost(1e-12 * 2001.0));
    c.measure("consistency monotone across decades", report.monotone as u8 as f64, Bound::Info);
    // With two arms each error vector lies on a line, so a centred Gaussian
    // with covariance C/n has mean norm sqrt(2/π)·sqrt(tr C / n).
    let b = asymptotics(&model)?;
    let lin = linearized_covariance(&b.dh_star, &b.gamma, 2000)?;
    let predicted = |r0: usize| {
        let tr = lin[(r0, r0)] + lin[(r0 + 1, r0 + 1)];
        (2.0 / std::f64::consts::PI).sqrt() * (tr / 2000.0).sqrt()
    };
    c.measure("predicted mean |Ytilde_n - v*| (n=2000 linearized covariance)", predicted(0), Bound::Info);
    c.measure("predicted mean |Ntilde_n - v*| (n=2000 linearized covariance)", predicted(2), Bound::Info);
    Ok(c.finish(t))
}

/// Oracle against simulator: merged outcome frequencies and the exact
/// conditional-mean identity.
pub fn criterion_2(opts: &AcceptanceOptions) -> Result<CriterionResult> {
    let t = Instant::now();
    let mut c = CriterionResult::new(2, "Oracle exactness", 10.0);
    let reps = opts.reps(100_000);
    let horizon = 4;
    for (label, model) in [
        ("wei", wei_model(&[0.5, 0.7])?),
        ("bhs", bhs_model(&[0.3, 0.8], &[0.5, 0.5])?),
    ] {
        let law = enumerate_exact(&model, horizon, Arithmetic::auto(2, horizon))?;
        let key = |y: &[f64], counts: &[u64], successes: &[u64]| {
            let q: Vec<i64> = y.iter().map(|x| (x * 1e9).round() as i64).collect();
            (q, counts.to_vec(), successes.to_vec())
        };
        let index: HashMap<_, usize> = law
            .outcomes
            .iter()
            .enumerate()
            .map(|(i, o)| (key(&o.y, &o.counts, &o.successes), i))
            .collect();
        let mut hits = vec![0u64; law.outcomes.len()];
        let mut unmatched = 0u64;
        let ends = crate::montecarlo::map_replications(reps, opts.workers, |r| {
            run_path(&model, opts.seed, r, horizon, &[horizon]).map(|mut v| v.pop().unwrap())
        })?;
        for end in ends {
            let end = end?;
            match index.get(&key(&end.y, &end.counts, &end.successes)) {
                Some(&i) => hits[i] += 1,
                None => unmatched += 1,
            }
        }
        let mut worst_z: f64 = 0.0;
        let mut checked = 0;
        for (o, &h) in law.outcomes.iter().zip(&hits) {
            if o.prob < 1e-3 {
                continue;
            }
            checked += 1;
            let se = (o.prob * (1.0 - o.prob) / reps as f64).sqrt();
            worst_z = worst_z.max((h as f64 / reps as f64 - o.prob).abs() / se);
        }
        c.measure(format!("{label}: outcomes with prob >= 1e-3"), checked as f64, Bound::Info);
        c.measure(format!("{label}: max |freq - prob| in binomial SEs"), worst_z, Bound::AtMost(3.0));
        c.measure(format!("{label}: simulated paths outside the law"), unmatched as f64, Bound::AtMost(0.0));
        c.measure(
            format!("{label}: |1 - total mass|"),
            (1.0 - law.total_mass).abs(),
            Bound::AtMost(1e-12),
        );
        c.measure(
            format!("{label}: max conditional-mean residual over tree nodes"),
            law.max_conditional_mean_residual,
            Bound::AtMost(1e-14),
        );
        // float mode as a second arithmetic path
        let float_law = enumerate_exact(&model, horizon, Arithmetic::Float)?;
        c.measure(
            format!("{label}: max conditional-mean residual (float mode)"),
            float_law.max_conditional_mean_residual,
            Bound::AtMost(1e-14),
        );
    }
    Ok(c.finish(t))
}

/// Pathwise balance over a long trajectory, checked after every step.
pub fn criterion_3(opts: &AcceptanceOptions) -> Result<CriterionResult> {
    let t = Instant::now();
    let mut c = CriterionResult::new(3, "Pathwise balance invariant", 5.0);
    let steps = opts.horizon(1_000_000);
    for (label, model) in [
        ("wei", wei_model(&[0.5, 0.7])?),
        ("bhs", bhs_model(&[0.5, 0.7], &[0.5, 0.5])?),
        ("bhs d=3", bhs_model(&[0.5, 0.6, 0.7], &[1.0 / 3.0; 3])?),
    ] {
        let mut rng = stream_rng(opts.seed, 0);
        let mut state = UrnState::initial(&model);
        let w0: f64 = model.y0().iter().sum();
        let mut scratch = vec![0.0; model.arms()];
        let (mut worst_rel, mut worst_tracked): (f64, f64) = (0.0, 0.0);
        while state.n < steps {
            state.advance(&model, &mut rng, &mut scratch)?;
            let target = w0 + state.n as f64;
            let sum: f64 = state.y.iter().sum();
            worst_rel = worst_rel.max((sum - target).abs() / target);
            worst_tracked = worst_tracked.max((state.w - target).abs());
        }
        c.measure(format!("{label}: max |w(Y_n) - w(Y_0) - n| / (w(Y_0) + n)"), worst_rel, Bound::AtMost(1e-12));
        c.measure(format!("{label}: max |tracked weight - w(Y_0) - n|"), worst_tracked, Bound::AtMost(1e-12));
    }
    Ok(c.finish(t))
}

/// CLT in regime a for Wei's design, including the covariance convention.
pub fn criterion_4(opts: &AcceptanceOptions) -> Result<CriterionResult> {
    let t = Instant::now();
    let mut c = CriterionResult::new(4, "CLT for (Ytilde, Ntilde), regime a", 180.0);
    let model = wei_model(&[0.5, 0.7])?;
    let bundle = asymptotics(&model)?;
    let plan = ReplicationPlan::new(10_000, opts.reps(10_000), vec![10_000], opts.seed)
        .with_statistics(&[Statistic::Clt])
        .with_workers(opts.workers);
    let ens = run_ensemble(&model, &plan)?;
    let stats = ensemble_stats(&model, &bundle, &ens, &plan.statistics)?;
    let last = stats.last();
    let cov = last
        .covariance
        .as_ref()
        .ok_or_else(|| Error::Numerical("empirical covariance unavailable".into()))?;
    let tol = opts.mc_tol(0.10);
    let cands = SigmaCandidates::new(&bundle.dh_star, &bundle.gamma)?;
    let mut passing = Vec::new();
    for (label, sigma) in cands.labelled() {
        let err = cov.relative_error(&sigma);
        c.measure(format!("rel. Frobenius error vs Sigma ({label})"), err, Bound::Info);
        if err <= tol {
            passing.push(label);
        }
    }
    c.measure("conventions within tolerance", passing.len() as f64, Bound::Within(1.0, 0.0));
    c.measure(
        "rel. Frobenius error vs Sigma (reported convention)",
        last.sigma_rel_error.unwrap_or(f64::NAN),
        Bound::AtMost(tol),
    );
    c.notes.push(format!("conventions passing: {passing:?}"));
    let lin = linearized_covariance(&bundle.dh_star, &bundle.gamma, 10_000)?;
    c.measure("rel. error of the n=1e4 linearized covariance vs Sigma", lin.relative_error(&cands.forward), Bound::Info);
    c.measure("rel. error vs the n=1e4 linearized covariance", cov.relative_error(&lin), Bound::Info);
    let names = ["Ytilde_1", "Ytilde_2", "Ntilde_1", "Ntilde_2"];
    let ks_tol = opts.mc_tol(0.02);
    for (i, ks) in last.ks_theory.iter().flatten().enumerate() {
        c.measure(format!("KS vs N(0, Sigma_ii): {}", names[i]), *ks, Bound::AtMost(ks_tol));
    }
    for (i, ks) in last.ks_fitted.iter().flatten().enumerate() {
        c.measure(format!("KS vs fitted normal: {}", names[i]), *ks, Bound::Info);
    }
    for (i, m) in last.mean.iter().enumerate() {
        c.measure(format!("mean scaled error: {}", names[i]), *m, Bound::Info);
    }
    if let Some((m, se, k)) = last.chi2_mean {
        c.measure(format!("whitened chi2 mean (dof {k})"), m, Bound::Info);
        c.measure("whitened chi2 mean SE", se, Bound::Info);
    }
    let bias = wei_mean_bias(&model, 10_000)?;
    for (i, b) in bias.iter().enumerate() {
        c.measure(format!("exact sqrt(n)-scaled mean bias: {}", names[i]), *b, Bound::Info);
    }
    Ok(c.finish(t))
}

/// `√n(E θ_n − θ*)` for Wei's design from the exact linear mean recursion
/// `E Y_{n+1} = (I + H/(w₀+n)) E Y_n`, `E N_{n+1} = E N_n + E Y_n/(w₀+n)`.
pub fn wei_mean_bias(model: &ModelSpec, n: u64) -> Result<Vec<f64>> {
    let h = model.limit_h();
    let v = model.v_star()?;
    let mut y = model.y0().to_vec();
    let mut counts: Vec<f64> = model.n0().iter().map(|&c| c as f64).collect();
    let w0: f64 = y.iter().sum();
    for k in 0..n {
        let w = w0 + k as f64;
        let hy = h.mul_vec(&y);
        for i in 0..y.len() {
            counts[i] += y[i] / w;
            y[i] += hy[i] / w;
        }
    }
    let nf = n as f64;
    Ok(y.iter()
        .chain(&counts)
        .zip(v.iter().chain(&v))
        .map(|(x, t)| nf.sqrt() * (x / nf - t))
        .collect())
}

/// CLT for the BHS design with `d = 3` and the delta-method covariance of `H_n`.
pub fn criteria_5_6(opts: &AcceptanceOptions) -> Result<(CriterionResult, CriterionResult)> {
    let t5 = Instant::now();
    let mut c5 = CriterionResult::new(5, "CLT for (Ytilde, Ntilde, Stilde), BHS d=3", 300.0);
    let model = bhs_model(&[0.5, 0.6, 0.7], &[1.0 / 3.0; 3])?;
    let bundle = asymptotics(&model)?;
    let plan = ReplicationPlan::new(10_000, opts.reps(10_000), vec![10_000], opts.seed)
        .with_statistics(&[Statistic::Clt, Statistic::GammaH])
        .with_workers(opts.workers);
    let ens = run_ensemble(&model, &plan)?;
    let stats = ensemble_stats(&model, &bundle, &ens, &plan.statistics)?;
    let last = stats.last();
    c5.measure(
        "rel. Frobenius error vs Sigma-tilde (9x9)",
        last.sigma_rel_error.unwrap_or(f64::NAN),
        Bound::AtMost(opts.mc_tol(0.15)),
    );
    let ext = bundle
        .extended
        .as_ref()
        .ok_or_else(|| Error::Numerical("extended asymptotics unavailable".into()))?;
    let lin = linearized_covariance(&ext.dh_tilde_star, &ext.gamma_tilde, 10_000)?;
    if let (Some(st), Some(cov)) = (&ext.sigma_tilde, &last.covariance) {
        c5.measure("rel. error of the n=1e4 linearized covariance vs Sigma-tilde", lin.relative_error(st), Bound::Info);
        c5.measure("rel. error vs the n=1e4 linearized covariance", cov.relative_error(&lin), Bound::Info);
    }
    let slow = spectral::min_real_part(&ext.dh_tilde_star)?;
    c5.measure("min Re Sp(Dh-tilde)", slow, Bound::Info);
    for (i, ks) in last.ks_theory.iter().flatten().enumerate() {
        c5.measure(format!("KS vs N(0, Sigma_ii): coordinate {}", i + 1), *ks, Bound::Info);
    }
    if let Some((m, se, k)) = last.chi2_mean {
        c5.measure(format!("whitened chi2 mean (dof {k})"), m, Bound::Info);
        c5.measure("whitened chi2 mean SE", se, Bound::Info);
    }
    let c5 = c5.finish(t5);

    let t6 = Instant::now();
    let mut c6 = CriterionResult::new(6, "Delta-method covariance of H_n", 300.0);
    let g = last
        .gamma_h
        .as_ref()
        .ok_or_else(|| Error::Numerical("gamma_H statistics missing".into()))?;
    let target = bundle
        .extended
        .as_ref()
        .and_then(|e| e.gamma_h.clone())
        .ok_or_else(|| Error::Numerical("Gamma_H unavailable".into()))?;
    let d = 3;
    let off: Vec<usize> = (0..d * d).filter(|r| r % d != r / d).collect();
    let sub = |m: &Matrix| Matrix::from_fn(off.len(), off.len(), |i, j| m[(off[i], off[j])]);
    c6.measure(
        "rel. Frobenius error vs Gamma_H on the off-diagonal entries",
        sub(&g.covariance).relative_error(&sub(&target)),
        Bound::AtMost(opts.mc_tol(0.20)),
    );
    let diag_rows = (0..d).map(|i| i + i * d);
    let diag_norm = diag_rows
        .flat_map(|r| (0..d * d).map(move |k| (r, k)))
        .map(|(r, k)| g.covariance[(r, k)].abs())
        .fold(0.0, f64::max);
    c6.measure("max |empirical entry| on rows of diagonal entries", diag_norm, Bound::AtMost(0.0));

    let control = bhs_model(&[0.5, 0.7], &[0.5, 0.5])?;
    let cb = asymptotics(&control)?;
    let control_plan = ReplicationPlan::new(10_000, opts.reps(1_000), vec![10_000], opts.seed)
        .with_statistics(&[Statistic::GammaH])
        .with_workers(opts.workers);
    let cens = run_ensemble(&control, &control_plan)?;
    let cstats = ensemble_stats(&control, &cb, &cens, &control_plan.statistics)?;
    let cg = cstats
        .last()
        .gamma_h
        .as_ref()
        .ok_or_else(|| Error::Numerical("gamma_H statistics missing".into()))?;
    let theory = cb
        .extended
        .as_ref()
        .and_then(|e| e.gamma_h.as_ref())
        .map(|m| m.frobenius_norm())
        .unwrap_or(f64::NAN);
    c6.measure("d=2 control: |Gamma_H|_F", theory, Bound::AtMost(1e-14));
    c6.measure(
        "d=2 control: empirical norm minus 3 SE",
        cg.norm - 3.0 * cg.norm_se,
        Bound::AtMost(0.0),
    );
    c6.notes.push("shares the criterion 5 ensemble; runtime covers the d=2 control only".into());
    Ok((c5, c6.finish(t6)))
}

/// Geometric checkpoints `10^(lo + k/4)` up to `top`.
fn quarter_decades(lo: u32, top: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut k = 0;
    loop {
        let n = 10f64.powf(lo as f64 + k as f64 / 4.0).round() as u64;
        if n > top {
            break;
        }
        out.push(n);
        k += 1;
    }
    out
}

/// Convergence rates in all three regimes.
pub fn criterion_7(opts: &AcceptanceOptions) -> Result<CriterionResult> {
    let t = Instant::now();
    let mut c = CriterionResult::new(7, "Regime rates", 300.0);
    let top = opts.horizon(1_000_000);
    let checkpoints = quarter_decades(3, top);
    let paths = 200;
    let plan = |n| ReplicationPlan::new(n, paths, checkpoints.clone(), opts.seed).with_workers(opts.workers);

    let a = wei_model(&[0.5, 0.7])?;
    let ab = asymptotics(&a)?;
    let ens_a = run_ensemble(&a, &plan(top))?;
    let fit_a = rate_fit(&ens_a, &ab.theta_star, false)?;
    c.measure("regime a slope", fit_a.slope, Bound::Within(-0.5, 0.05));
    c.measure("regime a slope SE", fit_a.stderr, Bound::Info);

    let cm = wei_model(&[0.9, 0.8])?;
    let cbun = asymptotics(&cm)?;
    let beta = cbun.beta.unwrap_or(f64::NAN);
    let ens_c = run_ensemble(&cm, &plan(top))?;
    let fit_c = rate_fit(&ens_c, &cbun.theta_star, false)?;
    c.measure("regime c slope", fit_c.slope, Bound::Within(-beta, 0.05));
    c.measure("regime c slope SE", fit_c.stderr, Bound::Info);
    c.measure("beta = 1 - lambda_max", beta, Bound::Within(0.3, 1e-12));
    let stab = regime_c_stabilization(&ens_c, &cbun.theta_star, false, beta, 0.25)?;
    c.measure("regime c: median oscillation / median magnitude", stab.ratio, Bound::AtMost(stab.tolerance));
    let control = regime_c_stabilization(&ens_a, &ab.theta_star, false, 1.0 - ab.lambda_max.re, 0.25)?;
    c.measure("regime c negative control (regime a model) ratio", control.ratio, Bound::AtLeast(control.tolerance));

    let b = wei_model(&[0.7, 0.8])?;
    let bb = asymptotics(&b)?;
    let ens_b = run_ensemble(&b, &plan(top))?;
    let fit_b = rate_fit(&ens_b, &bb.theta_star, false)?;
    c.measure("regime b slope", fit_b.slope, Bound::Info);
    let late: Vec<usize> = (0..checkpoints.len()).filter(|&k| checkpoints[k] * 100 >= top).collect();
    let sub = crate::montecarlo::Ensemble {
        seed: ens_b.seed,
        checkpoints: late.iter().map(|&k| checkpoints[k]).collect(),
        paths: ens_b.paths.iter().map(|p| late.iter().map(|&k| p[k].clone()).collect()).collect(),
        extinct: ens_b.extinct.clone(),
    };
    let stab_b = regime_b_stabilization(&sub, &bb.theta_star, false, 0.20)?;
    c.measure("regime b: drift of sqrt(n/ln n)-scaled RMS", stab_b.drift, Bound::AtMost(stab_b.tolerance));
    c.measure("regime b: drift of sqrt(n)-scaled RMS", stab_b.sqrt_drift, Bound::Info);
    Ok(c.finish(t))
}

fn spectrum_of(values: impl IntoIterator<Item = Complex64>) -> ComplexSpectrum {
    ComplexSpectrum {
        eigenvalues: values.into_iter().collect(),
    }
}

/// Analytic consistency without simulation.
pub fn criterion_8() -> Result<CriterionResult> {
    let t = Instant::now();
    let mut c = CriterionResult::new(8, "Analytic consistency suite", 1.0);
    let models = vec![
        wei_model(&[0.5, 0.7])?,
        wei_model(&[0.5, 0.6, 0.7])?,
        wei_model(&[0.9, 0.8])?,
        bhs_model(&[0.5, 0.7], &[0.5, 0.5])?,
        bhs_model(&[0.5, 0.6, 0.7], &[1.0 / 3.0; 3])?,
        bhs_model(&[0.2, 0.45, 0.9, 0.6], &[0.25; 4])?,
    ];
    let (mut perron_err, mut quad_err, mut spec_err, mut det_err, mut psd_min): (f64, f64, f64, f64, f64) =
        (0.0, 0.0, 0.0, 0.0, f64::INFINITY);
    let mut a5_flags = true;
    for m in &models {
        let h = m.limit_h();
        let closed = m.closed_form_v().ok_or_else(|| Error::Numerical("no closed form".into()))?;
        let (perron, _) = spectral::perron_vector(h, 1e-14, 100_000)?;
        let diff = closed.iter().zip(&perron).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        perron_err = perron_err.max(diff);

        let b = asymptotics(m)?;
        let d = b.d;
        let unit = Complex64::new(1.0, 0.0);
        let mut expect: Vec<Complex64> = vec![unit; d + 1];
        let mut dropped = false;
        for &l in &b.spectrum_h.eigenvalues {
            if !dropped && (l - unit).norm() < 1e-8 {
                dropped = true;
                continue;
            }
            expect.push(unit - l);
        }
        let got = spectral::spectrum(&b.dh_star)?;
        spec_err = spec_err.max(got.multiset_distance(&spectrum_of(expect)).unwrap_or(f64::INFINITY));

        let mut psd = vec![b.gamma.clone()];
        psd.extend(b.c_matrices.iter().cloned());
        if let Some(s) = &b.sigma {
            let mm = &b.dh_star - &Matrix::identity(2 * d).scale(0.5);
            let q = spectral::sigma_by_quadrature(&mm, &b.gamma, spectral::default_horizon(&mm)?, 20_000)?;
            quad_err = quad_err.max(q.sigma.relative_error(s));
            psd.push(s.clone());
        }
        if let (Some(ext), Some(p)) = (&b.extended, m.p()) {
            psd.push(ext.gamma_tilde.clone());
            if let Some(st) = &ext.sigma_tilde {
                let mm = &ext.dh_tilde_star - &Matrix::identity(3 * d).scale(0.5);
                let q = spectral::sigma_by_quadrature(&mm, &ext.gamma_tilde, spectral::default_horizon(&mm)?, 20_000)?;
                quad_err = quad_err.max(q.sigma.relative_error(st));
                psd.push(st.clone());
            }
            let dht = dh_tilde_star(h, &b.v_star, p)?;
            let a = shifted_generator(h, &b.v_star).determinant()?;
            det_err = det_err.max((dht.determinant()? - a).abs() / a.abs());
            a5_flags &= b.assumptions.status("A5") == Some(Status::Fails);
        }
        for s in &psd {
            let scale = s.frobenius_norm().max(1.0);
            psd_min = psd_min.min(spectral::min_symmetric_eigenvalue(s)? / scale);
        }
    }
    c.measure("max |closed-form v* - Perron v*|", perron_err, Bound::AtMost(1e-10));
    c.measure("max rel. error Lyapunov vs quadrature", quad_err, Bound::AtMost(1e-6));
    c.measure("max multiset distance Sp(Dh) vs {1}^(d+1) + (1 - Sp(H)\\{1})", spec_err, Bound::AtMost(1e-8));
    c.measure("max rel. error det(Dh-tilde) vs det(I - H + v*1^T)", det_err, Bound::AtMost(1e-8));
    c.measure("min scaled eigenvalue over Gamma, Gamma-tilde, Sigma, Sigma-tilde, C^k", psd_min, Bound::AtLeast(-1e-10));
    c.measure("BHS models flag A5 as failing", a5_flags as u8 as f64, Bound::AtLeast(1.0));
    c.measure("max rel. error dphi vs central differences", dphi_fd_error()?, Bound::AtMost(1e-6));
    Ok(c.finish(t))
}

fn dphi_fd_error() -> Result<f64> {
    let cases: [(&[f64], &[f64], &[f64]); 3] = [
        (&[0.35, 0.6, 0.8], &[0.4, 1.1, 0.9], &[1.3, 2.0, 1.5]),
        (&[0.5, 0.6, 0.7], &[0.15, 0.2, 0.23], &[0.3, 0.333, 0.33]),
        (&[0.2, 0.45, 0.9, 0.6], &[0.1, 0.2, 0.5, 0.2], &[0.2, 0.3, 0.3, 0.2]),
    ];
    let mut worst: f64 = 0.0;
    for (p, s, nu) in cases {
        let d = p.len();
        let jac = dphi_vec(s, nu, p)?;
        let vec_phi = |s: &[f64], nu: &[f64]| -> Result<Vec<f64>> {
            let m = phi(s, nu, p)?;
            Ok((0..d * d).map(|r| m[(r % d, r / d)]).collect())
        };
        let mut fd = Matrix::zeros(d * d, 2 * d);
        for k in 0..2 * d {
            let (mut sp, mut sm, mut np, mut nm) = (s.to_vec(), s.to_vec(), nu.to_vec(), nu.to_vec());
            let eps = 1e-6;
            if k < d {
                np[k] += eps;
                nm[k] -= eps;
            } else {
                sp[k - d] += eps;
                sm[k - d] -= eps;
            }
            let (a, b) = (vec_phi(&sp, &np)?, vec_phi(&sm, &nm)?);
            for r in 0..d * d {
                fd[(r, k)] = (a[r] - b[r]) / (2.0 * eps);
            }
        }
        worst = worst.max(fd.relative_error(&jac));
    }
    Ok(worst)
}

/// For `pⁱ > pʲ`: `v*ⁱ/v*ʲ` under BHS exceeds the Wei ratio, which exceeds 1.
pub fn criterion_9(opts: &AcceptanceOptions) -> Result<CriterionResult> {
    let t = Instant::now();
    let mut c = CriterionResult::new(9, "Ethical-ratio property", 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let draws = 1000;
    let (mut violations, mut pairs) = (0u64, 0u64);
    let mut min_gap = f64::INFINITY;
    for k in 0..draws {
        let d = 3 + k % 3;
        let p: Vec<f64> = (0..d).map(|_| rng.gen_range(0.05..0.95)).collect();
        let vw = wei_model(&p)?.v_star()?;
        let vb = bhs_model(&p, &vec![1.0 / d as f64; d])?.v_star()?;
        for i in 0..d {
            for j in 0..d {
                if p[i] <= p[j] {
                    continue;
                }
                pairs += 1;
                let (rb, rw) = (vb[i] / vb[j], vw[i] / vw[j]);
                if !(rb > rw && rw > 1.0) {
                    violations += 1;
                }
                min_gap = min_gap.min((rb - rw).min(rw - 1.0));
            }
        }
    }
    c.measure("ordered pairs checked", pairs as f64, Bound::Info);
    c.measure("violations", violations as f64, Bound::AtMost(0.0));
    c.measure("smallest margin", min_gap, Bound::Info);
    Ok(c.finish(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarter_decade_grid() {
        assert_eq!(quarter_decades(3, 10_000), vec![1000, 1778, 3162, 5623, 10_000]);
    }

    #[test]
    fn exact_mean_bias_matches_one_step() {
        let m = wei_model(&[0.5, 0.7]).unwrap();
        let b = wei_mean_bias(&m, 1).unwrap();
        // E Y_1 = (0.9, 1.1), E N_1 = (1.5, 1.5)
        let want = [0.9 - 0.375, 1.1 - 0.625, 1.5 - 0.375, 1.5 - 0.625];
        for (x, y) in b.iter().zip(want) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn analytic_criteria_pass() {
        let c8 = criterion_8().unwrap();
        assert!(c8.measurements.iter().filter(|m| m.name != "runtime_s").all(|m| m.pass), "{}", c8.summary());
        let c9 = criterion_9(&AcceptanceOptions::default()).unwrap();
        assert!(c9.measurements.iter().filter(|m| m.name != "runtime_s").all(|m| m.pass), "{}", c9.summary());
    }

    #[test]
    fn unknown_criterion_is_a_config_error() {
        assert!(matches!(
            run_acceptance(&AcceptanceOptions::default(), &[10]),
            Err(Error::Config(_))
        ));
    }
}
