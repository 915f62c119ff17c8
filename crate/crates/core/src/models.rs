//! Concrete urn designs and checks of their structural assumptions.
//!
//! Every design is normalized at construction so that the columns of the
//! generating matrix sum to one (balance `c = 1`): tabulated addition rules and
//! the initial composition are divided by the user-supplied balance.
//!
//! Arms are indexed from zero throughout.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{self, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Wei,
    Bhs,
    Homogeneous,
    Removal,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Wei => "wei",
            ModelKind::Bhs => "bhs",
            ModelKind::Homogeneous => "homogeneous",
            ModelKind::Removal => "removal",
        }
    }

    /// Designs driven by per-arm Bernoulli responses.
    pub fn is_bernoulli(self) -> bool {
        matches!(self, ModelKind::Wei | ModelKind::Bhs)
    }
}

/// Patient response used by one urn step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Response {
    /// Success indicator `T ∈ {0, 1}` of the drawn arm.
    Bernoulli(bool),
    /// Index into the drawn column's finite support.
    Outcome(usize),
}

/// Finite discrete law of one column of the addition rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnDistribution {
    pub outcomes: Vec<ColumnOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnOutcome {
    pub prob: f64,
    pub column: Vec<f64>,
}

impl ColumnDistribution {
    pub fn deterministic(column: Vec<f64>) -> Self {
        Self {
            outcomes: vec![ColumnOutcome { prob: 1.0, column }],
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        let d = self.outcomes[0].column.len();
        let mut m = vec![0.0; d];
        for o in &self.outcomes {
            for (mi, c) in m.iter_mut().zip(&o.column) {
                *mi += o.prob * c;
            }
        }
        m
    }

    /// `E[D·ⱼ D·ⱼᵀ]`.
    pub fn second_moment(&self) -> Matrix {
        let d = self.outcomes[0].column.len();
        let mut m = Matrix::zeros(d, d);
        for o in &self.outcomes {
            m = &m + &Matrix::outer(&o.column, &o.column).scale(o.prob);
        }
        m
    }

    fn scaled(&self, factor: f64) -> Self {
        Self {
            outcomes: self
                .outcomes
                .iter()
                .map(|o| ColumnOutcome {
                    prob: o.prob,
                    column: o.column.iter().map(|x| x * factor).collect(),
                })
                .collect(),
        }
    }
}

/// Immutable description of an urn design after balance normalization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    kind: ModelKind,
    d: usize,
    p: Option<Vec<f64>>,
    columns: Option<Vec<ColumnDistribution>>,
    /// Balance supplied at construction, before normalization.
    balance: f64,
    /// Lattice constants `cᵢ` of the removal variant, after normalization.
    lattice: Option<Vec<f64>>,
    y0: Vec<f64>,
    n0: Vec<u64>,
    s0: Vec<u64>,
    limit_h: Matrix,
    closed_form_v: Option<Vec<f64>>,
}

fn check_p(p: &[f64]) -> Result<()> {
    if p.len() < 2 {
        return Err(Error::input("at least two arms are required"));
    }
    if let Some(x) = p.iter().find(|&&x| !(x > 0.0 && x < 1.0)) {
        return Err(Error::input(format!(
            "success probabilities must lie in (0, 1), got {x}"
        )));
    }
    Ok(())
}

fn check_y0(y0: &[f64], d: usize) -> Result<()> {
    if y0.len() != d {
        return Err(Error::input(format!(
            "initial composition has length {}, expected {d}",
            y0.len()
        )));
    }
    if y0.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) || y0.iter().sum::<f64>() <= 0.0 {
        return Err(Error::input(
            "initial composition must be nonnegative, finite and nonzero",
        ));
    }
    Ok(())
}

/// Default initial composition: total mass one spread evenly, `(0.5, 0.5)` for two arms.
pub fn default_y0(d: usize) -> Vec<f64> {
    vec![1.0 / d as f64; d]
}

/// Wei's design: a success on arm `j` adds one ball of type `j`; a failure
/// adds `1/(d−1)` balls of every other type.
pub fn wei_model(p: &[f64]) -> Result<ModelSpec> {
    check_p(p)?;
    let d = p.len();
    let limit_h = Matrix::from_fn(d, d, |i, j| {
        if i == j {
            p[i]
        } else {
            (1.0 - p[j]) / (d - 1) as f64
        }
    });
    let inv_q: Vec<f64> = p.iter().map(|x| 1.0 / (1.0 - x)).collect();
    let total: f64 = inv_q.iter().sum();
    Ok(ModelSpec {
        kind: ModelKind::Wei,
        d,
        p: Some(p.to_vec()),
        columns: None,
        balance: 1.0,
        lattice: None,
        y0: default_y0(d),
        n0: vec![1; d],
        s0: vec![1; d],
        limit_h,
        closed_form_v: Some(inv_q.iter().map(|x| x / total).collect()),
    })
}

/// Bai–Hu–Shen design: a failure on arm `j` spreads one ball over the other
/// arms in proportion to their current success-rate estimates `Πᵢ = Sᵢ/Nᵢ`.
pub fn bhs_model(p: &[f64], y0: &[f64]) -> Result<ModelSpec> {
    check_p(p)?;
    let d = p.len();
    check_y0(y0, d)?;
    let limit_h = phi(p, &vec![1.0; d], p)?;
    let weights: Vec<f64> = (0..d)
        .map(|i| {
            let others: f64 = (0..d).filter(|&k| k != i).map(|k| p[k]).sum();
            p[i] / (1.0 - p[i]) * others
        })
        .collect();
    let total: f64 = weights.iter().sum();
    Ok(ModelSpec {
        kind: ModelKind::Bhs,
        d,
        p: Some(p.to_vec()),
        columns: None,
        balance: 1.0,
        lattice: None,
        y0: y0.to_vec(),
        n0: vec![1; d],
        s0: vec![1; d],
        limit_h,
        closed_form_v: Some(weights.iter().map(|x| x / total).collect()),
    })
}

/// Homogeneous generalized Friedman urn with i.i.d. columns. The mean of every
/// column must sum to the balance `c`; the returned model is rescaled to `c = 1`.
pub fn homogeneous_model(columns: Vec<ColumnDistribution>, c: f64) -> Result<ModelSpec> {
    tabulated(columns, c, None, ModelKind::Homogeneous)
}

/// Tabulated design allowing removal of the drawn ball. `lattice` holds the
/// constants `cᵢ` of the arithmetic tenability condition (before normalization).
pub fn removal_model(
    columns: Vec<ColumnDistribution>,
    c: f64,
    lattice: Vec<f64>,
) -> Result<ModelSpec> {
    tabulated(columns, c, Some(lattice), ModelKind::Removal)
}

fn tabulated(
    columns: Vec<ColumnDistribution>,
    c: f64,
    lattice: Option<Vec<f64>>,
    kind: ModelKind,
) -> Result<ModelSpec> {
    let d = columns.len();
    if d < 2 {
        return Err(Error::input("at least two arms are required"));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::input(format!("balance must be positive, got {c}")));
    }
    for (j, col) in columns.iter().enumerate() {
        if col.outcomes.is_empty() {
            return Err(Error::input(format!("column {j} has an empty support")));
        }
        let total: f64 = col.outcomes.iter().map(|o| o.prob).sum();
        if (total - 1.0).abs() > 1e-12 || col.outcomes.iter().any(|o| !(o.prob >= 0.0)) {
            return Err(Error::input(format!(
                "column {j} probabilities must be nonnegative and sum to 1"
            )));
        }
        for o in &col.outcomes {
            if o.column.len() != d || o.column.iter().any(|x| !x.is_finite()) {
                return Err(Error::input(format!(
                    "column {j} has an outcome of the wrong length or non-finite entries"
                )));
            }
            if kind == ModelKind::Homogeneous && o.column.iter().any(|&x| x < 0.0) {
                return Err(Error::input(format!(
                    "column {j} has negative entries; use the removal variant"
                )));
            }
        }
    }
    let sums: Vec<f64> = columns.iter().map(|col| col.mean().iter().sum()).collect();
    if sums.iter().any(|s| (s - c).abs() > 1e-12 * c.max(1.0)) {
        return Err(Error::Balance(format!(
            "column mean sums {sums:?}, expected {c}"
        )));
    }
    if let Some(l) = &lattice {
        if l.len() != d || l.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::input("lattice constants must be positive, one per arm"));
        }
    }
    let columns: Vec<ColumnDistribution> = columns.iter().map(|col| col.scaled(1.0 / c)).collect();
    let means: Vec<Vec<f64>> = columns.iter().map(ColumnDistribution::mean).collect();
    let limit_h = Matrix::from_fn(d, d, |i, j| means[j][i]);
    Ok(ModelSpec {
        kind,
        d,
        p: None,
        columns: Some(columns),
        balance: c,
        // D/c lives on the lattice ℕ/(c·cᵢ)
        lattice: lattice.map(|l| l.iter().map(|x| x * c).collect()),
        y0: default_y0(d),
        n0: vec![1; d],
        s0: vec![1; d],
        limit_h,
        closed_form_v: None,
    })
}

/// Generating-matrix map of the Bai–Hu–Shen design:
/// `Φⁱⁱ = pⁱ`, `Φⁱʲ = ρⁱ qʲ / Σ_{k≠j} ρᵏ` with `ρ = s/ν`.
pub fn phi(s: &[f64], nu: &[f64], p: &[f64]) -> Result<Matrix> {
    let d = p.len();
    if d < 2 || s.len() != d || nu.len() != d {
        return Err(Error::input("phi needs matching vectors of length at least 2"));
    }
    if nu.iter().any(|&x| !(x > 0.0)) || s.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::input("phi needs s ≥ 0 and ν > 0"));
    }
    let rho: Vec<f64> = s.iter().zip(nu).map(|(a, b)| a / b).collect();
    phi_of_ratios(&rho, p)
}

pub(crate) fn phi_of_ratios(rho: &[f64], p: &[f64]) -> Result<Matrix> {
    let d = p.len();
    let mut h = Matrix::zeros(d, d);
    for j in 0..d {
        // summed directly rather than as a difference so that the share is
        // exactly 1 when a single other arm receives the ball
        let denom: f64 = (0..d).filter(|&k| k != j).map(|k| rho[k]).sum();
        if !(denom > 0.0) {
            return Err(Error::Singularity(format!(
                "Σ_{{k≠{j}}} ρᵏ = {denom} must be positive"
            )));
        }
        for i in 0..d {
            h[(i, j)] = if i == j {
                p[i]
            } else {
                (1.0 - p[j]) * (rho[i] / denom)
            };
        }
    }
    Ok(h)
}

impl ModelSpec {
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn arms(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> Option<&[f64]> {
        self.p.as_deref()
    }

    pub fn columns(&self) -> Option<&[ColumnDistribution]> {
        self.columns.as_deref()
    }

    pub fn balance(&self) -> f64 {
        self.balance
    }

    pub fn lattice(&self) -> Option<&[f64]> {
        self.lattice.as_deref()
    }

    pub fn y0(&self) -> &[f64] {
        &self.y0
    }

    pub fn n0(&self) -> &[u64] {
        &self.n0
    }

    pub fn s0(&self) -> &[u64] {
        &self.s0
    }

    pub fn limit_h(&self) -> &Matrix {
        &self.limit_h
    }

    pub fn closed_form_v(&self) -> Option<&[f64]> {
        self.closed_form_v.as_deref()
    }

    /// Overrides the initial composition. Tabulated designs divide it by the balance.
    pub fn with_y0(mut self, y0: &[f64]) -> Result<Self> {
        check_y0(y0, self.d)?;
        self.y0 = y0.iter().map(|x| x / self.balance).collect();
        Ok(self)
    }

    pub fn with_initial_counts(mut self, n0: &[u64], s0: &[u64]) -> Result<Self> {
        if n0.len() != self.d || s0.len() != self.d {
            return Err(Error::input("initial counts must have one entry per arm"));
        }
        if n0.iter().zip(s0).any(|(n, s)| s > n) {
            return Err(Error::input("initial successes cannot exceed allocations"));
        }
        if self.kind == ModelKind::Bhs && n0.contains(&0) {
            return Err(Error::input(
                "the success-rate driven design needs N0 ≥ 1 on every arm",
            ));
        }
        self.n0 = n0.to_vec();
        self.s0 = s0.to_vec();
        Ok(self)
    }

    /// Limit allocation `v*`: the closed form when known, otherwise the Perron vector.
    pub fn v_star(&self) -> Result<Vec<f64>> {
        match &self.closed_form_v {
            Some(v) => Ok(v.clone()),
            None if self.kind == ModelKind::Removal => unit_eigenvector(&self.limit_h),
            None => {
                let (v, _) = spectral::perron_vector(
                    &self.limit_h,
                    spectral::DEFAULT_TOL,
                    spectral::DEFAULT_MAX_ITER,
                )?;
                Ok(v)
            }
        }
    }

    /// Generating matrix `H_{n+1} = E[D_{n+1} | F_n]` given the current counts.
    pub fn generating_matrix(&self, counts: &[u64], successes: &[u64]) -> Result<Matrix> {
        match self.kind {
            ModelKind::Bhs => {
                let rho: Vec<f64> = successes
                    .iter()
                    .zip(counts)
                    .map(|(&s, &n)| s as f64 / n as f64)
                    .collect();
                phi_of_ratios(&rho, self.p.as_deref().expect("bhs carries p"))
            }
            _ => Ok(self.limit_h.clone()),
        }
    }

    /// Writes the added-ball column for drawn arm `arm` into `out`.
    pub fn addition_column_into(
        &self,
        arm: usize,
        response: Response,
        counts: &[u64],
        successes: &[u64],
        out: &mut [f64],
    ) -> Result<()> {
        let d = self.d;
        match (self.kind, response) {
            (ModelKind::Wei, Response::Bernoulli(success)) => {
                let spread = 1.0 / (d - 1) as f64;
                for (i, x) in out.iter_mut().enumerate() {
                    *x = match (i == arm, success) {
                        (true, true) => 1.0,
                        (false, false) => spread,
                        _ => 0.0,
                    };
                }
            }
            (ModelKind::Bhs, Response::Bernoulli(success)) => {
                if success {
                    out.iter_mut().for_each(|x| *x = 0.0);
                    out[arm] = 1.0;
                } else {
                    let mut denom = 0.0;
                    for k in 0..d {
                        if k != arm {
                            let r = successes[k] as f64 / counts[k] as f64;
                            out[k] = r;
                            denom += r;
                        }
                    }
                    if !(denom > 0.0) {
                        return Err(Error::Singularity(format!(
                            "all success-rate estimates off arm {arm} vanish"
                        )));
                    }
                    for (k, x) in out.iter_mut().enumerate() {
                        *x = if k == arm { 0.0 } else { *x / denom };
                    }
                }
            }
            (ModelKind::Homogeneous | ModelKind::Removal, Response::Outcome(idx)) => {
                let col = &self.columns.as_ref().expect("tabulated carries columns")[arm];
                let o = col.outcomes.get(idx).ok_or_else(|| {
                    Error::input(format!("outcome {idx} outside column {arm} support"))
                })?;
                out.copy_from_slice(&o.column);
            }
            (kind, r) => {
                return Err(Error::input(format!(
                    "response {r:?} does not apply to a {} design",
                    kind.as_str()
                )))
            }
        }
        Ok(())
    }

    pub fn addition_column(
        &self,
        arm: usize,
        response: Response,
        counts: &[u64],
        successes: &[u64],
    ) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.d];
        self.addition_column_into(arm, response, counts, successes, &mut out)?;
        Ok(out)
    }

    /// Samples the response of `arm` from `[0, 1)` uniforms.
    pub fn sample_response<R: Rng + ?Sized>(&self, arm: usize, rng: &mut R) -> Response {
        match &self.p {
            Some(p) => Response::Bernoulli(rng.gen::<f64>() < p[arm]),
            None => {
                let col = &self.columns.as_ref().expect("tabulated carries columns")[arm];
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (k, o) in col.outcomes.iter().enumerate() {
                    acc += o.prob;
                    if u < acc {
                        return Response::Outcome(k);
                    }
                }
                Response::Outcome(col.outcomes.len() - 1)
            }
        }
    }

    /// All responses of `arm` with their probabilities.
    pub fn response_law(&self, arm: usize) -> Vec<(f64, Response)> {
        match &self.p {
            Some(p) => vec![
                (p[arm], Response::Bernoulli(true)),
                (1.0 - p[arm], Response::Bernoulli(false)),
            ],
            None => self.columns.as_ref().expect("tabulated carries columns")[arm]
                .outcomes
                .iter()
                .enumerate()
                .filter(|(_, o)| o.prob > 0.0)
                .map(|(k, o)| (o.prob, Response::Outcome(k)))
                .collect(),
        }
    }

    /// Limit second moments `Cʲ = lim E[D·ʲ (D·ʲ)ᵀ | F]` for every arm.
    pub fn column_second_moments(&self) -> Vec<Matrix> {
        let d = self.d;
        match self.kind {
            ModelKind::Wei => {
                let p = self.p.as_ref().expect("wei carries p");
                let spread = 1.0 / (d - 1) as f64;
                (0..d)
                    .map(|k| {
                        let e: Vec<f64> = (0..d).map(|i| if i == k { 1.0 } else { 0.0 }).collect();
                        let f: Vec<f64> = (0..d).map(|i| if i == k { 0.0 } else { spread }).collect();
                        &Matrix::outer(&e, &e).scale(p[k])
                            + &Matrix::outer(&f, &f).scale(1.0 - p[k])
                    })
                    .collect()
            }
            ModelKind::Bhs => crate::asymptotics::c_matrices_bhs(self.p.as_ref().expect("bhs carries p")),
            _ => self
                .columns
                .as_ref()
                .expect("tabulated carries columns")
                .iter()
                .map(ColumnDistribution::second_moment)
                .collect(),
        }
    }
}

/// Strong connectivity of the digraph `i → j ⇔ Aᵢⱼ > 0`.
pub fn is_irreducible(a: &Matrix) -> bool {
    let d = a.rows();
    let reach = |forward: bool| {
        let mut seen = vec![false; d];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..d {
                let w = if forward { a[(i, j)] } else { a[(j, i)] };
                if w > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    d > 0 && reach(true) && reach(false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Holds,
    Fails,
    NotCheckable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub status: Status,
    pub detail: String,
    /// Numeric margin where one is meaningful (positive is comfortable).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
}

impl AssumptionCheck {
    fn new(status: Status, detail: impl Into<String>) -> Self {
        Self {
            status,
            detail: detail.into(),
            margin: None,
        }
    }

    fn with_margin(mut self, m: f64) -> Self {
        self.margin = Some(m);
        self
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionReport {
    #[serde(rename = "A1(i)")]
    pub a1_nonnegative: AssumptionCheck,
    #[serde(rename = "A1(ii)")]
    pub a1_balance: AssumptionCheck,
    #[serde(rename = "A1(iii)")]
    pub a1_start: AssumptionCheck,
    #[serde(rename = "A2")]
    pub a2: AssumptionCheck,
    #[serde(rename = "A3")]
    pub a3: AssumptionCheck,
    #[serde(rename = "A4")]
    pub a4: AssumptionCheck,
    #[serde(rename = "A5")]
    pub a5: AssumptionCheck,
    #[serde(rename = "A'1")]
    pub a1_prime: AssumptionCheck,
    #[serde(rename = "A'3")]
    pub a3_prime: AssumptionCheck,
}

impl AssumptionReport {
    /// Short status lookup by the assumption's label.
    pub fn status(&self, name: &str) -> Option<Status> {
        let c = match name {
            "A1(i)" => &self.a1_nonnegative,
            "A1(ii)" => &self.a1_balance,
            "A1(iii)" => &self.a1_start,
            "A2" => &self.a2,
            "A3" => &self.a3,
            "A4" => &self.a4,
            "A5" => &self.a5,
            "A'1" => &self.a1_prime,
            "A'3" => &self.a3_prime,
            _ => return None,
        };
        Some(c.status)
    }

    pub fn a1_holds(&self) -> bool {
        [&self.a1_nonnegative, &self.a1_balance, &self.a1_start]
            .iter()
            .all(|c| c.status == Status::Holds)
    }
}

pub fn check_assumptions(model: &ModelSpec) -> AssumptionReport {
    let h = &model.limit_h;

    let a1_nonnegative = match &model.columns {
        None => AssumptionCheck::new(Status::Holds, "addition columns are built from T ∈ {0,1} and nonnegative ratios"),
        Some(cols) => {
            let min = cols
                .iter()
                .flat_map(|c| c.outcomes.iter().flat_map(|o| o.column.iter().copied()))
                .fold(f64::INFINITY, f64::min);
            let status = if min >= 0.0 { Status::Holds } else { Status::Fails };
            AssumptionCheck::new(status, format!("smallest support entry {min}")).with_margin(min)
        }
    };

    let sums = h.col_sums();
    let dev = sums.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
    let a1_balance = AssumptionCheck::new(
        if dev <= 1e-12 { Status::Holds } else { Status::Fails },
        if model.kind == ModelKind::Bhs {
            format!("every Φ(s,ν) has unit column sums; limit deviation {dev:e}")
        } else {
            format!("column sums of H deviate from 1 by {dev:e} (input balance {})", model.balance)
        },
    )
    .with_margin(-dev);

    let y0_ok = model.y0.iter().all(|&x| x >= 0.0) && model.y0.iter().sum::<f64>() > 0.0;
    let a1_start = AssumptionCheck::new(
        if y0_ok { Status::Holds } else { Status::Fails },
        format!("Y0 = {:?}", model.y0),
    );

    // Finite supports bound every conditional moment.
    let max_col_norm = match &model.columns {
        None => 1.0,
        Some(cols) => cols
            .iter()
            .flat_map(|c| c.outcomes.iter())
            .map(|o| o.column.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max),
    };
    let a2 = AssumptionCheck::new(
        Status::Holds,
        format!("columns are bounded by {max_col_norm} in Euclidean norm; D is drawn independently of X given the past"),
    );

    let nonneg_h = h.as_slice().iter().all(|&x| x >= 0.0);
    let irreducible = nonneg_h && is_irreducible(h);
    let a3 = AssumptionCheck::new(
        if irreducible { Status::Holds } else { Status::Fails },
        if irreducible {
            "limit generating matrix is nonnegative and irreducible".to_string()
        } else if !nonneg_h {
            "limit generating matrix has negative entries".to_string()
        } else {
            "reducible: the positive-entry digraph of H is not strongly connected".to_string()
        },
    );

    let c_mats = model.column_second_moments();
    let min_eig = c_mats
        .iter()
        .map(|c| spectral::min_symmetric_eigenvalue(c).unwrap_or(f64::NAN))
        .fold(f64::INFINITY, f64::min);
    let a4_status = if min_eig >= -1e-12 { Status::Holds } else { Status::Fails };
    let a4 = AssumptionCheck::new(
        a4_status,
        format!(
            "bounded support gives every 2+δ moment; conditional second moments converge to C^j with smallest eigenvalue {min_eig:e}"
        ),
    )
    .with_margin(min_eig);

    let a5 = match model.kind {
        ModelKind::Bhs => AssumptionCheck::new(
            Status::Fails,
            "H_n = Φ(S̃_n, Ñ_n) satisfies its own √n-CLT, so n·E|||H_n − H|||² does not vanish",
        ),
        _ => AssumptionCheck::new(Status::Holds, "H_n = H for every n").with_margin(0.0),
    };

    let a1_prime = match (&model.columns, &model.lattice) {
        (Some(cols), Some(lattice)) => check_lattice(cols, lattice, &model.y0),
        _ => AssumptionCheck::new(
            Status::NotCheckable,
            "no lattice constants supplied (nonnegative design, (A1) applies)",
        ),
    };

    let a3_prime = check_a3_prime(h);

    AssumptionReport {
        a1_nonnegative,
        a1_balance,
        a1_start,
        a2,
        a3,
        a4,
        a5,
        a1_prime,
        a3_prime,
    }
}

fn on_lattice(x: f64) -> bool {
    x >= -1e-9 && (x - x.round()).abs() <= 1e-9
}

fn check_lattice(cols: &[ColumnDistribution], lattice: &[f64], y0: &[f64]) -> AssumptionCheck {
    for (j, col) in cols.iter().enumerate() {
        for o in &col.outcomes {
            for (i, &x) in o.column.iter().enumerate() {
                let delta = if i == j { 1.0 } else { 0.0 };
                if !on_lattice(delta + lattice[i] * x) {
                    return AssumptionCheck::new(
                        Status::Fails,
                        format!("δ_{i}{j}/c_{i} + D^{i}{j} = {} is not in ℕ/c_{i}", delta / lattice[i] + x),
                    );
                }
            }
            let s: f64 = o.column.iter().sum();
            if s < 0.0 {
                return AssumptionCheck::new(
                    Status::Fails,
                    format!("column {j} outcome sums to {s} < 0"),
                );
            }
        }
    }
    if let Some(i) = (0..y0.len()).find(|&i| !on_lattice(lattice[i] * y0[i])) {
        return AssumptionCheck::new(
            Status::Fails,
            format!("Y0[{i}] = {} is not in ℕ/c_{i}", y0[i]),
        );
    }
    AssumptionCheck::new(Status::Holds, "all supports and Y0 lie on the lattice")
}

/// Weight-one solution of `Hv = v`: the null vector of `H − I` with the
/// normalization `𝟙ᵀv = 1` replacing the last equation.
pub(crate) fn unit_eigenvector(h: &Matrix) -> Result<Vec<f64>> {
    let d = h.rows();
    let mut a = h - &Matrix::identity(d);
    let mut rhs = vec![0.0; d];
    for j in 0..d {
        a[(d - 1, j)] = 1.0;
    }
    rhs[d - 1] = 1.0;
    a.solve(&rhs)
}

fn check_a3_prime(h: &Matrix) -> AssumptionCheck {
    let spec = match spectral::spectrum(h) {
        Ok(s) => s,
        Err(e) => return AssumptionCheck::new(Status::NotCheckable, e.to_string()),
    };
    let Some(k) = spec.closest(num_complex::Complex64::new(1.0, 0.0)) else {
        return AssumptionCheck::new(Status::NotCheckable, "empty spectrum");
    };
    if (spec.eigenvalues[k] - 1.0).norm() > 1e-10 {
        return AssumptionCheck::new(Status::Fails, "1 is not an eigenvalue of H");
    }
    let others = spec
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != k)
        .map(|(_, z)| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let v = match unit_eigenvector(h) {
        Ok(v) => v,
        Err(_) => {
            return AssumptionCheck::new(
                Status::NotCheckable,
                "eigenvalue 1 is not simple; eigenvector not unique",
            )
        }
    };
    let min_v = v.iter().copied().fold(f64::INFINITY, f64::min);
    let maximal = others < 1.0 - 1e-10;
    let status = if maximal && min_v >= -1e-12 {
        Status::Holds
    } else {
        Status::Fails
    };
    AssumptionCheck::new(
        status,
        format!("largest real part besides 1: {others}; eigenvector min entry {min_v}"),
    )
    .with_margin((1.0 - others).min(min_v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn wei_two_arms() {
        let m = wei_model(&[0.5, 0.7]).unwrap();
        assert!(m.limit_h().max_abs_diff(&Matrix::from_rows(&[[0.5, 0.3], [0.5, 0.7]])) < 1e-15);
        let v = m.v_star().unwrap();
        assert!(close(&v, &[0.375, 0.625], 1e-15));
        assert!(close(&m.limit_h().mul_vec(&v), &v, 1e-14));
    }

    #[test]
    fn wei_equal_probabilities_uniform() {
        let m = wei_model(&[0.4; 4]).unwrap();
        assert!(close(&m.v_star().unwrap(), &[0.25; 4], 1e-15));
    }

    #[test]
    fn wei_three_arms_ordered() {
        let v = wei_model(&[0.5, 0.6, 0.7]).unwrap().v_star().unwrap();
        assert!(close(&v, &[12.0 / 47.0, 15.0 / 47.0, 20.0 / 47.0], 1e-15));
        assert!(v[0] < v[1] && v[1] < v[2]);
    }

    #[test]
    fn wei_rejects_bad_p() {
        assert!(wei_model(&[0.5, 1.0]).is_err());
        assert!(wei_model(&[0.5]).is_err());
        assert!(wei_model(&[0.0, 0.5]).is_err());
    }

    #[test]
    fn bhs_coincides_with_wei_for_two_arms() {
        for p in [[0.5, 0.7], [0.2, 0.9], [0.65, 0.35]] {
            let b = bhs_model(&p, &[0.5, 0.5]).unwrap();
            let w = wei_model(&p).unwrap();
            assert!(b.limit_h().max_abs_diff(w.limit_h()) < 1e-15);
            assert!(close(&b.v_star().unwrap(), &w.v_star().unwrap(), 1e-15));
        }
    }

    #[test]
    fn bhs_more_ethical_for_three_arms() {
        let p = [0.5, 0.6, 0.7];
        let b = bhs_model(&p, &[1.0 / 3.0; 3]).unwrap().v_star().unwrap();
        let w = wei_model(&p).unwrap().v_star().unwrap();
        assert!(b[2] / b[0] > w[2] / w[0]);
        assert!(w[2] / w[0] > 1.0);
    }

    #[test]
    fn phi_special_cases() {
        let p = [0.5, 0.6, 0.7];
        let nu = [2.0, 3.0, 5.0];
        let s: Vec<f64> = p.iter().zip(&nu).map(|(a, b)| a * b).collect();
        let at_eq = phi(&s, &nu, &p).unwrap();
        let limit = bhs_model(&p, &[1.0; 3]).unwrap().limit_h().clone();
        assert!(at_eq.max_abs_diff(&limit) < 1e-15);

        let ones = phi(&[1.0; 3], &[1.0; 3], &p).unwrap();
        assert!(ones.max_abs_diff(wei_model(&p).unwrap().limit_h()) < 1e-15);

        let two = phi(&[0.3, 2.0], &[1.0, 7.0], &[0.5, 0.7]).unwrap();
        assert!((two[(0, 1)] - 0.3).abs() < 1e-15 && (two[(1, 0)] - 0.5).abs() < 1e-15);
        assert!(close(&ones.col_sums(), &[1.0; 3], 1e-15));

        assert!(matches!(
            phi(&[1.0, 0.0], &[1.0, 1.0], &[0.5, 0.5]),
            Err(Error::Singularity(_))
        ));
    }

    #[test]
    fn homogeneous_identity_is_reducible() {
        let cols = (0..3)
            .map(|j| ColumnDistribution::deterministic((0..3).map(|i| (i == j) as u8 as f64).collect()))
            .collect();
        let m = homogeneous_model(cols, 1.0).unwrap();
        assert_eq!(m.limit_h(), &Matrix::identity(3));
        let r = check_assumptions(&m);
        assert_eq!(r.a3.status, Status::Fails);
        assert!(r.a3.detail.contains("reducible"));
    }

    #[test]
    fn homogeneous_normalizes_balance() {
        let cols = vec![
            ColumnDistribution::deterministic(vec![2.0, 0.0]),
            ColumnDistribution {
                outcomes: vec![
                    ColumnOutcome { prob: 0.5, column: vec![1.0, 1.0] },
                    ColumnOutcome { prob: 0.5, column: vec![0.0, 2.0] },
                ],
            },
        ];
        let m = homogeneous_model(cols, 2.0).unwrap().with_y0(&[1.0, 1.0]).unwrap();
        assert!(close(&m.limit_h().col_sums(), &[1.0, 1.0], 1e-15));
        assert_eq!(m.y0(), &[0.5, 0.5]);
    }

    #[test]
    fn homogeneous_balance_violation() {
        let cols = vec![
            ColumnDistribution::deterministic(vec![1.0, 0.0]),
            ColumnDistribution::deterministic(vec![1.0, 1.0]),
        ];
        assert!(matches!(homogeneous_model(cols, 1.0), Err(Error::Balance(_))));
    }

    #[test]
    fn wei_law_as_tabulated_columns() {
        let p = [0.5, 0.7];
        let cols = (0..2)
            .map(|j| ColumnDistribution {
                outcomes: vec![
                    ColumnOutcome { prob: p[j], column: (0..2).map(|i| (i == j) as u8 as f64).collect() },
                    ColumnOutcome { prob: 1.0 - p[j], column: (0..2).map(|i| (i != j) as u8 as f64).collect() },
                ],
            })
            .collect();
        let m = homogeneous_model(cols, 1.0).unwrap();
        assert!(m.limit_h().max_abs_diff(wei_model(&p).unwrap().limit_h()) < 1e-15);
        let wei_c = wei_model(&p).unwrap().column_second_moments();
        for (a, b) in m.column_second_moments().iter().zip(&wei_c) {
            assert!(a.max_abs_diff(b) < 1e-15);
        }
    }

    #[test]
    fn assumption_reports() {
        let w = check_assumptions(&wei_model(&[0.5, 0.7]).unwrap());
        for name in ["A1(i)", "A1(ii)", "A1(iii)", "A2", "A3", "A4", "A5", "A'3"] {
            assert_eq!(w.status(name), Some(Status::Holds), "{name}");
        }
        let b = check_assumptions(&bhs_model(&[0.5, 0.6, 0.7], &[1.0; 3]).unwrap());
        assert!(b.a1_holds());
        assert_eq!(b.a2.status, Status::Holds);
        assert_eq!(b.a4.status, Status::Holds);
        assert_eq!(b.a5.status, Status::Fails);
    }

    #[test]
    fn removal_lattice_check() {
        // drawing arm j removes it and adds two of the other type: δ + c·D ∈ ℕ with c = 1
        let cols = vec![
            ColumnDistribution::deterministic(vec![-1.0, 2.0]),
            ColumnDistribution::deterministic(vec![2.0, -1.0]),
        ];
        let m = removal_model(cols, 1.0, vec![1.0, 1.0])
            .unwrap()
            .with_y0(&[1.0, 0.0])
            .unwrap();
        let r = check_assumptions(&m);
        assert_eq!(r.a1_prime.status, Status::Holds);
        assert_eq!(r.a1_nonnegative.status, Status::Fails);
        let bad = m.clone().with_y0(&[0.5, 0.0]).unwrap();
        assert_eq!(check_assumptions(&bad).a1_prime.status, Status::Fails);
    }

    #[test]
    fn irreducibility() {
        assert!(is_irreducible(&Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]])));
        assert!(!is_irreducible(&Matrix::from_rows(&[[1.0, 0.5], [0.0, 0.5]])));
    }
}
