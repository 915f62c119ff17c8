//! Exhaustive enumeration of the Bernoulli designs over a few steps.

use std::collections::HashMap;
use std::hash::Hash;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ModelKind, ModelSpec};
use crate::spectral::Matrix;
use crate::urn::UrnState;

pub const MAX_ARMS: usize = 3;
pub const MAX_HORIZON: u64 = 8;
/// Largest horizon enumerated with exact rationals (two arms only).
pub const MAX_RATIONAL_HORIZON: u64 = 6;
const QUANTUM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arithmetic {
    Rational,
    Float,
}

impl Arithmetic {
    /// Rational for two arms up to the rational horizon, float otherwise.
    pub fn auto(d: usize, horizon: u64) -> Self {
        if d == 2 && horizon <= MAX_RATIONAL_HORIZON {
            Arithmetic::Rational
        } else {
            Arithmetic::Float
        }
    }
}

trait Scalar: Clone + PartialOrd + Zero + One + std::ops::Add<Output = Self> + std::ops::Sub<Output = Self> + std::ops::Mul<Output = Self> + std::ops::Div<Output = Self> {
    type Key: Hash + Eq + Ord + Clone;
    fn from_f64(x: f64) -> Self;
    fn from_u64(x: u64) -> Self;
    fn to_f64(&self) -> f64;
    fn key(&self) -> Self::Key;
    fn exact(&self) -> Option<String>;
}

impl Scalar for f64 {
    type Key = i64;
    fn from_f64(x: f64) -> Self {
        x
    }
    fn from_u64(x: u64) -> Self {
        x as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn key(&self) -> i64 {
        (self / QUANTUM).round() as i64
    }
    fn exact(&self) -> Option<String> {
        None
    }
}

impl Scalar for BigRational {
    type Key = BigRational;
    fn from_f64(x: f64) -> Self {
        // exact binary value of the f64 input
        BigRational::from_float(x).expect("finite input")
    }
    fn from_u64(x: u64) -> Self {
        BigRational::from_integer(BigInt::from(x))
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn key(&self) -> BigRational {
        self.clone()
    }
    fn exact(&self) -> Option<String> {
        Some(self.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactOutcome {
    pub prob: f64,
    /// `num/den` in rational mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prob_exact: Option<String>,
    pub y: Vec<f64>,
    pub counts: Vec<u64>,
    pub successes: Vec<u64>,
    pub pi: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExactLaw {
    pub model: String,
    pub horizon: u64,
    pub arithmetic: Arithmetic,
    pub outcomes: Vec<ExactOutcome>,
    pub total_mass: f64,
    /// Root-to-leaf branch count before merging.
    pub paths: u64,
    /// Largest `|E[D X | F] − H_{n+1} Y / w(Y)|` over every visited node.
    pub max_conditional_mean_residual: f64,
}

#[derive(Clone)]
struct Node<T> {
    prob: T,
    paths: u64,
    y: Vec<T>,
    counts: Vec<u64>,
    successes: Vec<u64>,
}

type NodeKey<K> = (Vec<u64>, Vec<u64>, Vec<K>);

fn check_request(model: &ModelSpec, horizon: u64) -> Result<&[f64]> {
    let p = match (model.kind(), model.p()) {
        (ModelKind::Wei | ModelKind::Bhs, Some(p)) => p,
        _ => {
            return Err(Error::input(
                "enumeration covers the Bernoulli designs (wei, bhs) only",
            ))
        }
    };
    let d = model.arms();
    if d > MAX_ARMS || horizon > MAX_HORIZON {
        let bound = (2 * d as u64).checked_pow(horizon as u32).unwrap_or(u64::MAX);
        return Err(Error::SizeGuard(format!(
            "d = {d}, n = {horizon}: up to {bound} paths; limits are d ≤ {MAX_ARMS}, n ≤ {MAX_HORIZON}"
        )));
    }
    Ok(p)
}

pub fn enumerate_exact(model: &ModelSpec, horizon: u64, arithmetic: Arithmetic) -> Result<ExactLaw> {
    let p = check_request(model, horizon)?;
    if arithmetic == Arithmetic::Rational && model.arms() != 2 {
        return Err(Error::input("rational enumeration is limited to two arms"));
    }
    match arithmetic {
        Arithmetic::Float => enumerate::<f64>(model, p, horizon, arithmetic),
        Arithmetic::Rational => enumerate::<BigRational>(model, p, horizon, arithmetic),
    }
}

fn addition_column<T: Scalar>(kind: ModelKind, arm: usize, success: bool, node: &Node<T>) -> Vec<T> {
    let d = node.y.len();
    let mut col = vec![T::zero(); d];
    if success {
        col[arm] = T::one();
        return col;
    }
    match kind {
        ModelKind::Wei => {
            let spread = T::one() / T::from_u64(d as u64 - 1);
            for (i, c) in col.iter_mut().enumerate() {
                if i != arm {
                    *c = spread.clone();
                }
            }
        }
        _ => {
            let ratio = |k: usize| T::from_u64(node.successes[k]) / T::from_u64(node.counts[k]);
            let mut denom = T::zero();
            for k in (0..d).filter(|&k| k != arm) {
                denom = denom + ratio(k);
            }
            for (k, c) in col.iter_mut().enumerate() {
                if k != arm {
                    *c = ratio(k) / denom.clone();
                }
            }
        }
    }
    col
}

fn generating_matrix<T: Scalar>(kind: ModelKind, p: &[T], node: &Node<T>) -> Vec<Vec<T>> {
    let d = p.len();
    let ratio: Vec<T> = match kind {
        ModelKind::Wei => vec![T::one(); d],
        _ => (0..d)
            .map(|k| T::from_u64(node.successes[k]) / T::from_u64(node.counts[k]))
            .collect(),
    };
    let mut total = T::zero();
    for r in &ratio {
        total = total + r.clone();
    }
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    if i == j {
                        p[i].clone()
                    } else {
                        ratio[i].clone() * (T::one() - p[j].clone()) / (total.clone() - ratio[j].clone())
                    }
                })
                .collect()
        })
        .collect()
}

fn enumerate<T: Scalar>(model: &ModelSpec, p: &[f64], horizon: u64, arithmetic: Arithmetic) -> Result<ExactLaw> {
    let kind = model.kind();
    let d = model.arms();
    let pt: Vec<T> = p.iter().map(|&x| T::from_f64(x)).collect();
    let root = Node {
        prob: T::one(),
        paths: 1,
        y: model.y0().iter().map(|&x| T::from_f64(x)).collect(),
        counts: model.n0().to_vec(),
        successes: model.s0().to_vec(),
    };
    let mut level: Vec<Node<T>> = vec![root];
    let mut max_residual: f64 = 0.0;
    for _ in 0..horizon {
        let mut merged: HashMap<NodeKey<T::Key>, Node<T>> = HashMap::new();
        for node in &level {
            let mut w = T::zero();
            for y in &node.y {
                w = w + y.clone();
            }
            let mut cond_mean = vec![T::zero(); d];
            for arm in 0..d {
                if node.y[arm] <= T::zero() {
                    continue;
                }
                let p_arm = node.y[arm].clone() / w.clone();
                for success in [true, false] {
                    let p_t = if success {
                        pt[arm].clone()
                    } else {
                        T::one() - pt[arm].clone()
                    };
                    let col = addition_column(kind, arm, success, node);
                    let branch = p_arm.clone() * p_t;
                    for (m, c) in cond_mean.iter_mut().zip(&col) {
                        *m = m.clone() + branch.clone() * c.clone();
                    }
                    let mut child = Node {
                        prob: node.prob.clone() * branch,
                        paths: node.paths,
                        y: node.y.iter().zip(&col).map(|(a, b)| a.clone() + b.clone()).collect(),
                        counts: node.counts.clone(),
                        successes: node.successes.clone(),
                    };
                    child.counts[arm] += 1;
                    if success {
                        child.successes[arm] += 1;
                    }
                    let key = (
                        child.counts.clone(),
                        child.successes.clone(),
                        child.y.iter().map(Scalar::key).collect(),
                    );
                    match merged.get_mut(&key) {
                        Some(existing) => {
                            existing.prob = existing.prob.clone() + child.prob;
                            existing.paths += child.paths;
                        }
                        None => {
                            merged.insert(key, child);
                        }
                    }
                }
            }
            let h = generating_matrix(kind, &pt, node);
            for (i, m) in cond_mean.iter().enumerate() {
                let mut target = T::zero();
                for (j, y) in node.y.iter().enumerate() {
                    target = target + h[i][j].clone() * y.clone() / w.clone();
                }
                max_residual = max_residual.max((m.clone() - target).to_f64().abs());
            }
        }
        let mut next: Vec<(NodeKey<T::Key>, Node<T>)> = merged.into_iter().collect();
        next.sort_by(|a, b| a.0.cmp(&b.0));
        level = next.into_iter().map(|(_, n)| n).collect();
    }
    let mut total = T::zero();
    for n in &level {
        total = total + n.prob.clone();
    }
    let outcomes = level
        .iter()
        .map(|n| ExactOutcome {
            prob: n.prob.to_f64(),
            prob_exact: n.prob.exact(),
            y: n.y.iter().map(Scalar::to_f64).collect(),
            counts: n.counts.clone(),
            successes: n.successes.clone(),
            pi: n
                .successes
                .iter()
                .zip(&n.counts)
                .map(|(&s, &c)| if c == 0 { 0.0 } else { s as f64 / c as f64 })
                .collect(),
        })
        .collect();
    Ok(ExactLaw {
        model: kind.as_str().to_string(),
        horizon,
        arithmetic,
        outcomes,
        total_mass: total.to_f64(),
        paths: level.iter().map(|n| n.paths).sum(),
        max_conditional_mean_residual: max_residual,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExactMoments {
    /// Mean of `(Y, N, S)`, stacked.
    pub mean: Vec<f64>,
    pub covariance: Matrix,
}

pub fn exact_moments(law: &ExactLaw) -> ExactMoments {
    let d = law.outcomes.first().map_or(0, |o| o.y.len());
    let stacked = |o: &ExactOutcome| -> Vec<f64> {
        o.y.iter()
            .copied()
            .chain(o.counts.iter().map(|&c| c as f64))
            .chain(o.successes.iter().map(|&c| c as f64))
            .collect()
    };
    let mut mean = vec![0.0; 3 * d];
    for o in &law.outcomes {
        for (m, x) in mean.iter_mut().zip(stacked(o)) {
            *m += o.prob * x;
        }
    }
    let mut cov = Matrix::zeros(3 * d, 3 * d);
    for o in &law.outcomes {
        let c: Vec<f64> = stacked(o).iter().zip(&mean).map(|(x, m)| x - m).collect();
        cov = &cov + &Matrix::outer(&c, &c).scale(o.prob);
    }
    ExactMoments {
        mean,
        covariance: cov.symmetrize(),
    }
}

/// One-step law of `(ΔM, ΔÑ, ΔS̃)` from a fixed state, where
/// `ΔÑ = X − Y/w` and `ΔS̃ = T∘X − diag(p) Y/w`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OneStepMoments {
    pub mean: Vec<f64>,
    pub covariance: Matrix,
}

pub fn one_step_moments(model: &ModelSpec, state: &UrnState) -> Result<OneStepMoments> {
    let d = model.arms();
    let p = model
        .p()
        .ok_or_else(|| Error::input("one-step moments need a Bernoulli design"))?;
    if !(state.w > 0.0) {
        return Err(Error::Extinction { step: state.n });
    }
    let h = model.generating_matrix(&state.counts, &state.successes)?;
    let yw: Vec<f64> = state.y.iter().map(|y| y / state.w).collect();
    let comp = h.mul_vec(&yw);
    let mut branches = Vec::new();
    for arm in (0..d).filter(|&j| state.y[j] > 0.0) {
        for (pt, resp) in model.response_law(arm) {
            let col = model.addition_column(arm, resp, &state.counts, &state.successes)?;
            let success = resp == crate::models::Response::Bernoulli(true);
            let mut z: Vec<f64> = col.iter().zip(&comp).map(|(a, b)| a - b).collect();
            z.extend((0..d).map(|i| (i == arm) as u8 as f64 - yw[i]));
            z.extend((0..d).map(|i| ((i == arm && success) as u8 as f64) - p[i] * yw[i]));
            branches.push((yw[arm] * pt, z));
        }
    }
    let mut mean = vec![0.0; 3 * d];
    for (w, z) in &branches {
        for (m, x) in mean.iter_mut().zip(z) {
            *m += w * x;
        }
    }
    let mut cov = Matrix::zeros(3 * d, 3 * d);
    for (w, z) in &branches {
        cov = &cov + &Matrix::outer(z, z).scale(*w);
    }
    Ok(OneStepMoments {
        mean,
        covariance: cov.symmetrize(),
    })
}
