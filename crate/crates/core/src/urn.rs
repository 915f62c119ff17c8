//! Urn state machine: the draw rule, the composition update and the
//! stochastic-approximation decomposition of one step.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ModelSpec, Response};
use crate::rng::{stream_rng, uniform_open_closed};
use crate::spectral::Matrix;

/// Negative masses above this magnitude are tenability violations; smaller ones
/// are rounding residue of lattice arithmetic and are clamped to zero.
const TENABILITY_SLACK: f64 = 1e-9;

/// Selects the arm `j` with `Σ_{ℓ<j} Yℓ/w < u ≤ Σ_{ℓ≤j} Yℓ/w`.
pub fn draw(y: &[f64], u: f64) -> Result<usize> {
    if !(u > 0.0 && u <= 1.0) {
        return Err(Error::input(format!("u must lie in (0, 1], got {u}")));
    }
    if y.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::input("composition must be nonnegative"));
    }
    let w: f64 = y.iter().sum();
    if !(w > 0.0) {
        return Err(Error::Extinction { step: 0 });
    }
    Ok(draw_weighted(y, w, u))
}

/// Draw with a known positive weight.
#[inline]
pub(crate) fn draw_weighted(y: &[f64], w: f64, u: f64) -> usize {
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (j, &yj) in y.iter().enumerate() {
        if yj > 0.0 {
            last_positive = j;
            cum += yj;
            if u <= cum / w {
                return j;
            }
        }
    }
    // rounding may leave the final cumulative fraction just below 1
    last_positive
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UrnState {
    pub n: u64,
    pub y: Vec<f64>,
    /// Allocation counts `N`, including the initial counts.
    pub counts: Vec<u64>,
    /// Success counts `S`, including the initial counts.
    pub successes: Vec<u64>,
    /// Cached weight `w(Y)`.
    pub w: f64,
    /// `w(Y₀)`, kept for the balance invariant.
    pub w0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Step index before the update.
    pub n: u64,
    pub drawn_arm: usize,
    pub u: f64,
    pub response: Response,
    pub d_column: Vec<f64>,
    /// `ΔM_{n+1} = D_{n+1}X_{n+1} − H_{n+1} Y_n / w(Y_n)`.
    pub delta_m: Vec<f64>,
    /// `r_{n+1}`; undefined at `n = 0` where `Ỹ_n` is not.
    pub remainder: Option<Vec<f64>>,
}

impl UrnState {
    pub fn initial(model: &ModelSpec) -> Self {
        let y = model.y0().to_vec();
        let w: f64 = y.iter().sum();
        Self {
            n: 0,
            y,
            counts: model.n0().to_vec(),
            successes: model.s0().to_vec(),
            w,
            w0: w,
        }
    }

    pub fn arms(&self) -> usize {
        self.y.len()
    }

    fn per_step(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n as f64;
        x.iter().map(|v| v / n).collect()
    }

    /// `Ỹ_n = Y_n / n` (requires `n ≥ 1`).
    pub fn y_tilde(&self) -> Vec<f64> {
        self.per_step(&self.y)
    }

    pub fn n_tilde(&self) -> Vec<f64> {
        self.per_step(&self.counts.iter().map(|&c| c as f64).collect::<Vec<_>>())
    }

    pub fn s_tilde(&self) -> Vec<f64> {
        self.per_step(&self.successes.iter().map(|&c| c as f64).collect::<Vec<_>>())
    }

    /// Success-rate estimates `Π = S/N`.
    pub fn pi(&self) -> Vec<f64> {
        self.successes
            .iter()
            .zip(&self.counts)
            .map(|(&s, &n)| if n == 0 { 0.0 } else { s as f64 / n as f64 })
            .collect()
    }

    /// Relative gap `|Σ Y − (w(Y₀) + n)| / (w(Y₀) + n)`.
    pub fn balance_drift(&self) -> f64 {
        let target = self.w0 + self.n as f64;
        (self.y.iter().sum::<f64>() - target).abs() / target
    }

    /// Applies one step with a given uniform and response and returns its record.
    pub fn step(&mut self, model: &ModelSpec, u: f64, response: Response) -> Result<StepRecord> {
        if !(u > 0.0 && u <= 1.0) {
            return Err(Error::input(format!("u must lie in (0, 1], got {u}")));
        }
        if !(self.w > 0.0) {
            return Err(Error::Extinction { step: self.n });
        }
        let arm = draw_weighted(&self.y, self.w, u);
        let d_column = model.addition_column(arm, response, &self.counts, &self.successes)?;
        let h_next = model.generating_matrix(&self.counts, &self.successes)?;
        let y_over_w: Vec<f64> = self.y.iter().map(|x| x / self.w).collect();
        let compensator = h_next.mul_vec(&y_over_w);
        let delta_m: Vec<f64> = d_column.iter().zip(&compensator).map(|(a, b)| a - b).collect();
        let remainder = (self.n > 0).then(|| step_remainder(self, model, &h_next));
        let n = self.n;
        self.apply(arm, response, &d_column)?;
        Ok(StepRecord {
            n,
            drawn_arm: arm,
            u,
            response,
            d_column,
            delta_m,
            remainder,
        })
    }

    /// Samples and applies one step, writing the added column into `scratch`.
    /// Draw order: the uniform for the arm, then the response of that arm.
    #[inline]
    pub fn advance<R: Rng + ?Sized>(
        &mut self,
        model: &ModelSpec,
        rng: &mut R,
        scratch: &mut [f64],
    ) -> Result<usize> {
        if !(self.w > 0.0) {
            return Err(Error::Extinction { step: self.n });
        }
        let u = uniform_open_closed(rng);
        let arm = draw_weighted(&self.y, self.w, u);
        let response = model.sample_response(arm, rng);
        model.addition_column_into(arm, response, &self.counts, &self.successes, scratch)?;
        self.apply(arm, response, scratch)?;
        Ok(arm)
    }

    fn apply(&mut self, arm: usize, response: Response, column: &[f64]) -> Result<()> {
        for (i, (&yi, &c)) in self.y.iter().zip(column).enumerate() {
            let v = yi + c;
            if v < -TENABILITY_SLACK {
                return Err(Error::Tenability {
                    step: self.n + 1,
                    component: i,
                    value: v,
                });
            }
        }
        let mut added = 0.0;
        for (yi, &c) in self.y.iter_mut().zip(column) {
            *yi = (*yi + c).max(0.0);
            added += c;
        }
        self.w += added;
        self.counts[arm] += 1;
        if response == Response::Bernoulli(true) {
            self.successes[arm] += 1;
        }
        self.n += 1;
        Ok(())
    }
}

fn step_remainder(state: &UrnState, model: &ModelSpec, h_next: &Matrix) -> Vec<f64> {
    let n = state.n as f64;
    let yt = state.y_tilde();
    let hy = h_next.mul_vec(&yt);
    let limit = model.limit_h().mul_vec(&yt);
    let factor = n / state.w - 1.0;
    hy.iter()
        .zip(&limit)
        .map(|(a, b)| factor * a + (a - b))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaTerms {
    /// `−(I − H) Ỹ_n`.
    pub mean_field: Vec<f64>,
    pub martingale: Vec<f64>,
    pub remainder: Vec<f64>,
    /// Relative reconstruction error of `(n+1)(Ỹ_{n+1} − Ỹ_n)`.
    pub residual: f64,
}

pub const SA_TOL: f64 = 1e-12;

/// Splits the step `state → state + record` into the three terms of
/// `Ỹ_{n+1} − Ỹ_n = (−(I−H)Ỹ_n + ΔM_{n+1} + r_{n+1}) / (n+1)`.
///
/// `state` is the state the record was produced from; `n ≥ 1`.
pub fn sa_decompose(record: &StepRecord, state: &UrnState, model: &ModelSpec) -> Result<SaTerms> {
    if state.n == 0 || record.n != state.n {
        return Err(Error::input(
            "decomposition needs the pre-step state of a step with n ≥ 1",
        ));
    }
    let h = model.limit_h();
    let yt = state.y_tilde();
    let hy = h.mul_vec(&yt);
    let mean_field: Vec<f64> = yt.iter().zip(&hy).map(|(y, hy)| hy - y).collect();
    let h_next = model.generating_matrix(&state.counts, &state.successes)?;
    let remainder = step_remainder(state, model, &h_next);
    // (n+1)(Ỹ_{n+1} − Ỹ_n) = D X − Ỹ_n, without the cancellation of the direct difference
    let lhs: Vec<f64> = record.d_column.iter().zip(&yt).map(|(d, y)| d - y).collect();
    let mut err: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for i in 0..yt.len() {
        let rhs = mean_field[i] + record.delta_m[i] + remainder[i];
        err = err.max((lhs[i] - rhs).abs());
        scale = scale.max(lhs[i].abs()).max(record.delta_m[i].abs());
    }
    let residual = err / scale;
    if residual > SA_TOL {
        return Err(Error::Consistency(format!(
            "SA identity residual {residual:e} exceeds {SA_TOL:e}"
        )));
    }
    Ok(SaTerms {
        mean_field,
        martingale: record.delta_m.clone(),
        remainder,
        residual,
    })
}

/// Remainders of the CLT proofs, evaluated at `ỹ = Y_n/n`, `w = w(ỹ)`:
/// `r̄ = ((H_{n+1}−H)/w + (w−1)²/w·H) ỹ`, `r̃ = (w−1)²/w·ỹ`,
/// `ř = (w−1)²/w·H_{n+1} ỹ`, `r̂ = diag(p)(w−1)²/w·ỹ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremRemainders {
    pub r_bar: Vec<f64>,
    pub r_tilde: Vec<f64>,
    pub r_check: Vec<f64>,
    /// Only defined for Bernoulli designs.
    pub r_hat: Option<Vec<f64>>,
}

pub fn theorem_remainders(
    state: &UrnState,
    model: &ModelSpec,
    h_next: &Matrix,
) -> Result<TheoremRemainders> {
    if state.n == 0 {
        return Err(Error::input("remainders need n ≥ 1"));
    }
    let yt = state.y_tilde();
    let w: f64 = yt.iter().sum();
    let k = (w - 1.0).powi(2) / w;
    let h = model.limit_h();
    let diff = h_next - h;
    let a = diff.mul_vec(&yt);
    let b = h.mul_vec(&yt);
    let r_bar = a.iter().zip(&b).map(|(a, b)| a / w + k * b).collect();
    let r_tilde = yt.iter().map(|y| k * y).collect();
    let r_check = h_next.mul_vec(&yt).iter().map(|x| k * x).collect();
    let r_hat = model
        .p()
        .map(|p| yt.iter().zip(p).map(|(y, pi)| k * pi * y).collect());
    Ok(TheoremRemainders {
        r_bar,
        r_tilde,
        r_check,
        r_hat,
    })
}

/// Raw state at one recorded index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub n: u64,
    pub y: Vec<f64>,
    pub counts: Vec<u64>,
    pub successes: Vec<u64>,
    pub w: f64,
}

impl From<&UrnState> for Checkpoint {
    fn from(s: &UrnState) -> Self {
        Self {
            n: s.n,
            y: s.y.clone(),
            counts: s.counts.clone(),
            successes: s.successes.clone(),
            w: s.w,
        }
    }
}

impl Checkpoint {
    fn scaled<T: Copy + Into<f64>>(&self, x: &[T]) -> Vec<f64> {
        let n = self.n as f64;
        x.iter().map(|&v| v.into() / n).collect()
    }

    pub fn y_tilde(&self) -> Vec<f64> {
        self.scaled(&self.y)
    }

    pub fn n_tilde(&self) -> Vec<f64> {
        let c: Vec<f64> = self.counts.iter().map(|&c| c as f64).collect();
        self.scaled(&c)
    }

    pub fn s_tilde(&self) -> Vec<f64> {
        let c: Vec<f64> = self.successes.iter().map(|&c| c as f64).collect();
        self.scaled(&c)
    }

    pub fn pi(&self) -> Vec<f64> {
        self.successes
            .iter()
            .zip(&self.counts)
            .map(|(&s, &n)| if n == 0 { 0.0 } else { s as f64 / n as f64 })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub model: String,
    pub seed: u64,
    pub initial: Checkpoint,
    /// States at the requested indices `n ≥ 1`, in increasing order.
    pub checkpoints: Vec<Checkpoint>,
    /// Every step record, kept only when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<Vec<StepRecord>>,
}

pub(crate) fn validate_checkpoints(horizon: u64, checkpoints: &[u64]) -> Result<()> {
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::input("checkpoints must be strictly increasing"));
    }
    if checkpoints.last().is_some_and(|&c| c > horizon) {
        return Err(Error::input("checkpoints must not exceed the horizon"));
    }
    Ok(())
}

/// Simulates one path on stream 0 of `seed`.
pub fn simulate(model: &ModelSpec, horizon: u64, seed: u64, checkpoints: &[u64]) -> Result<Trajectory> {
    simulate_with(model, horizon, seed, checkpoints, false)
}

pub fn simulate_with(
    model: &ModelSpec,
    horizon: u64,
    seed: u64,
    checkpoints: &[u64],
    record_steps: bool,
) -> Result<Trajectory> {
    validate_checkpoints(horizon, checkpoints)?;
    let mut rng = stream_rng(seed, 0);
    let mut state = UrnState::initial(model);
    let initial = Checkpoint::from(&state);
    let mut recorded = Vec::with_capacity(checkpoints.len());
    let mut steps = record_steps.then(Vec::new);
    let mut next = checkpoints.iter().copied().skip_while(|&c| c == 0).peekable();
    let mut scratch = vec![0.0; model.arms()];
    while state.n < horizon {
        match steps.as_mut() {
            Some(log) => {
                let u = uniform_open_closed(&mut rng);
                let arm = draw_weighted(&state.y, state.w, u);
                let response = model.sample_response(arm, &mut rng);
                log.push(state.step(model, u, response)?);
            }
            None => {
                state.advance(model, &mut rng, &mut scratch)?;
            }
        }
        if next.peek() == Some(&state.n) {
            recorded.push(Checkpoint::from(&state));
            next.next();
        }
    }
    Ok(Trajectory {
        model: model.kind().as_str().to_string(),
        seed,
        initial,
        checkpoints: recorded,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{bhs_model, homogeneous_model, removal_model, wei_model, ColumnDistribution};

    #[test]
    fn draw_cells() {
        assert_eq!(draw(&[1.0, 0.0], 0.9).unwrap(), 0);
        assert_eq!(draw(&[1.0, 1.0], 0.5).unwrap(), 0);
        assert_eq!(draw(&[1.0, 1.0], 0.5000001).unwrap(), 1);
        assert_eq!(draw(&[2.0, 1.0, 1.0], 0.6).unwrap(), 1);
        assert_eq!(draw(&[0.0, 1.0, 0.0], 1.0).unwrap(), 1);
        assert!(matches!(draw(&[0.0, 0.0], 0.5), Err(Error::Extinction { .. })));
        assert!(matches!(draw(&[1.0, 1.0], 0.0), Err(Error::Input(_))));
        assert!(matches!(draw(&[1.0, 1.0], 1.5), Err(Error::Input(_))));
    }

    #[test]
    fn wei_step_examples() {
        let m = wei_model(&[0.5, 0.7]).unwrap();
        let mut s = UrnState::initial(&m);
        let r = s.step(&m, 0.3, Response::Bernoulli(true)).unwrap();
        assert_eq!(r.drawn_arm, 0);
        assert_eq!(s.y, vec![1.5, 0.5]);
        assert_eq!(s.w, 2.0);
        assert_eq!((s.counts.clone(), s.successes.clone()), (vec![2, 1], vec![2, 1]));
        let before = s.y.clone();
        s.step(&m, 0.1, Response::Bernoulli(false)).unwrap();
        assert_eq!(s.y, vec![before[0], before[1] + 1.0]);
        assert_eq!(s.w, 3.0);
    }

    #[test]
    fn martingale_increment_of_first_step() {
        let m = wei_model(&[0.5, 0.7]).unwrap();
        let mut s = UrnState::initial(&m);
        let r = s.step(&m, 0.3, Response::Bernoulli(true)).unwrap();
        // H·Y0/w = (0.4, 0.6)
        assert!((r.delta_m[0] - 0.6).abs() < 1e-15 && (r.delta_m[1] + 0.6).abs() < 1e-15);
        assert!(r.remainder.is_none());
    }

    #[test]
    fn sa_identity_along_bhs_path() {
        let m = bhs_model(&[0.5, 0.6, 0.7], &[0.5, 0.25, 0.25]).unwrap();
        let mut rng = stream_rng(2024, 0);
        let mut s = UrnState::initial(&m);
        for _ in 0..200 {
            let before = s.clone();
            let u = uniform_open_closed(&mut rng);
            let arm = draw_weighted(&s.y, s.w, u);
            let t = m.sample_response(arm, &mut rng);
            let rec = s.step(&m, u, t).unwrap();
            if before.n >= 1 {
                let terms = sa_decompose(&rec, &before, &m).unwrap();
                assert!(terms.residual <= SA_TOL);
                assert_eq!(terms.remainder, rec.remainder.unwrap());
            }
            let dw = s.w - before.w - 1.0;
            assert!((dw - rec.delta_m.iter().sum::<f64>()).abs() < 1e-12);
        }
    }

    #[test]
    fn wei_remainder_has_no_drift_term() {
        let m = wei_model(&[0.5, 0.7]).unwrap();
        let traj = simulate_with(&m, 50, 9, &[], true).unwrap();
        let mut s = UrnState::initial(&m);
        for rec in traj.steps.unwrap() {
            if s.n >= 1 {
                let r = theorem_remainders(&s, &m, m.limit_h()).unwrap();
                let yt = s.y_tilde();
                let w: f64 = yt.iter().sum();
                let hy = m.limit_h().mul_vec(&yt);
                for i in 0..2 {
                    assert!((r.r_bar[i] - (w - 1.0).powi(2) / w * hy[i]).abs() < 1e-15);
                }
            }
            s.step(&m, rec.u, rec.response).unwrap();
        }
    }

    #[test]
    fn remainders_vanish_at_unit_weight() {
        let cols = vec![
            ColumnDistribution::deterministic(vec![0.5, 0.5]),
            ColumnDistribution::deterministic(vec![0.5, 0.5]),
        ];
        let m = homogeneous_model(cols, 1.0).unwrap();
        let s = UrnState {
            n: 4,
            y: vec![1.0, 3.0],
            counts: vec![3, 3],
            successes: vec![0, 0],
            w: 4.0,
            w0: 0.0,
        };
        let r = theorem_remainders(&s, &m, m.limit_h()).unwrap();
        assert!(r.r_bar.iter().chain(&r.r_tilde).chain(&r.r_check).all(|&x| x == 0.0));
        assert!(r.r_hat.is_none());
        assert_eq!(step_remainder(&s, &m, m.limit_h()), vec![0.0, 0.0]);
    }

    #[test]
    fn simulate_is_deterministic_and_balanced() {
        let m = bhs_model(&[0.5, 0.7], &[0.5, 0.5]).unwrap();
        let a = simulate(&m, 2000, 11, &[10, 100, 2000]).unwrap();
        let b = simulate(&m, 2000, 11, &[10, 100, 2000]).unwrap();
        assert_eq!(a, b);
        for c in &a.checkpoints {
            assert!((c.w - (1.0 + c.n as f64)).abs() <= 1e-12 * c.w);
            assert_eq!(c.counts.iter().sum::<u64>(), c.n + 2);
        }
        let empty = simulate(&m, 0, 11, &[]).unwrap();
        assert!(empty.checkpoints.is_empty());
        assert!(simulate(&m, 10, 1, &[5, 3]).is_err());
        assert!(simulate(&m, 10, 1, &[11]).is_err());
    }

    #[test]
    fn recorded_and_lean_paths_agree() {
        let m = wei_model(&[0.3, 0.6, 0.8]).unwrap();
        let a = simulate_with(&m, 300, 5, &[300], true).unwrap();
        let b = simulate_with(&m, 300, 5, &[300], false).unwrap();
        assert_eq!(a.checkpoints, b.checkpoints);
    }

    #[test]
    fn removal_paths() {
        let tenable = removal_model(
            vec![
                ColumnDistribution::deterministic(vec![-1.0, 2.0]),
                ColumnDistribution::deterministic(vec![2.0, -1.0]),
            ],
            1.0,
            vec![1.0, 1.0],
        )
        .unwrap()
        .with_y0(&[1.0, 0.0])
        .unwrap();
        let mut rng = stream_rng(3, 0);
        let mut s = UrnState::initial(&tenable);
        let mut scratch = [0.0; 2];
        for _ in 0..1000 {
            let w = s.w;
            s.advance(&tenable, &mut rng, &mut scratch).unwrap();
            assert!(s.w >= w && s.w > 0.0);
        }

        let untenable = removal_model(
            vec![
                ColumnDistribution::deterministic(vec![-2.0, 3.0]),
                ColumnDistribution::deterministic(vec![3.0, -2.0]),
            ],
            1.0,
            vec![1.0, 1.0],
        )
        .unwrap()
        .with_y0(&[1.0, 0.0])
        .unwrap();
        assert!(matches!(
            simulate(&untenable, 5, 0, &[]),
            Err(Error::Tenability { step: 1, component: 0, .. })
        ));

        let two_point = |j: usize| ColumnDistribution {
            outcomes: [-1.0, 3.0]
                .iter()
                .map(|&x| crate::models::ColumnOutcome {
                    prob: 0.5,
                    column: (0..2).map(|i| if i == j { x } else { 0.0 }).collect(),
                })
                .collect(),
        };
        let fragile = removal_model(vec![two_point(0), two_point(1)], 1.0, vec![1.0, 1.0])
            .unwrap()
            .with_y0(&[1.0, 0.0])
            .unwrap();
        let extinct = (0..20)
            .filter(|&seed| matches!(simulate(&fragile, 50, seed, &[]), Err(Error::Extinction { .. })))
            .count();
        assert!(extinct > 0);
    }

    #[test]
    fn draw_frequencies() {
        let y = [2.0, 1.0, 1.0];
        let mut rng = stream_rng(77, 0);
        let n = 1_000_000;
        let mut hits = [0u32; 3];
        for _ in 0..n {
            hits[draw(&y, uniform_open_closed(&mut rng)).unwrap()] += 1;
        }
        for (j, &h) in hits.iter().enumerate() {
            let p = y[j] / 4.0;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((h as f64 / n as f64 - p).abs() <= 4.0 * se);
        }
    }
}
