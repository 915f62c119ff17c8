//! Limit objects of the central limit theorems for `θ = (Ỹ, Ñ)` and, for the
//! success-rate driven design, `θ̃ = (Ỹ, Ñ, S̃)` together with the delta-method
//! covariance of `vec(H_n)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{check_assumptions, phi, phi_of_ratios, AssumptionReport, ModelKind, ModelSpec, Status};
use crate::spectral::{self, lyapunov_solve, min_real_part, ComplexSpectrum, Matrix};

/// Knife-edge tolerance separating the three regimes.
pub const REGIME_B_TOL: f64 = 1e-10;
/// Tolerance for locating the eigenvalue 1 of a balanced matrix.
pub const UNIT_EIGEN_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    A,
    B,
    C,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::A => "a",
            Regime::B => "b",
            Regime::C => "c",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegimeInfo {
    pub regime: Regime,
    /// Eigenvalue of `H` other than 1 with the largest real part.
    pub lambda_max: Complex64,
    /// `Λ = 1 − Re λ_max`.
    pub lambda: f64,
    /// `β = 1 − Re λ_max`, reported in regime c only.
    pub beta: Option<f64>,
}

pub fn classify_regime(h: &Matrix) -> Result<RegimeInfo> {
    let spec = spectral::spectrum(h)?;
    classify_spectrum(&spec)
}

fn classify_spectrum(spec: &ComplexSpectrum) -> Result<RegimeInfo> {
    let one = Complex64::new(1.0, 0.0);
    let k = spec
        .closest(one)
        .filter(|&k| (spec.eigenvalues[k] - one).norm() <= UNIT_EIGEN_TOL)
        .ok_or_else(|| Error::NotBalanced("1 is not an eigenvalue of H".into()))?;
    let lambda_max = spec
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != k)
        .map(|(_, &z)| z)
        .max_by(|a, b| a.re.total_cmp(&b.re))
        .ok_or_else(|| Error::input("H must have dimension at least 2"))?;
    let re = lambda_max.re;
    let regime = if (re - 0.5).abs() <= REGIME_B_TOL {
        Regime::B
    } else if re < 0.5 {
        Regime::A
    } else {
        Regime::C
    };
    Ok(RegimeInfo {
        regime,
        lambda_max,
        lambda: 1.0 - re,
        beta: (regime == Regime::C).then_some(1.0 - re),
    })
}

fn check_weight_one(v: &[f64]) -> Result<()> {
    let w: f64 = v.iter().sum();
    if (w - 1.0).abs() > 1e-12 {
        return Err(Error::input(format!("v* must have weight 1, got {w}")));
    }
    Ok(())
}

fn check_dims(h: &Matrix, v: &[f64]) -> Result<()> {
    if !h.is_square() || h.rows() != v.len() {
        return Err(Error::input(format!(
            "H is {}x{} but v* has length {}",
            h.rows(),
            h.cols(),
            v.len()
        )));
    }
    Ok(())
}

/// `I − H + v*𝟙ᵀ`.
pub fn shifted_generator(h: &Matrix, v: &[f64]) -> Matrix {
    let d = v.len();
    &(&Matrix::identity(d) - h) + &Matrix::outer(v, &vec![1.0; d])
}

/// `v*𝟙ᵀ − I`.
fn v_one_minus_i(v: &[f64]) -> Matrix {
    let d = v.len();
    &Matrix::outer(v, &vec![1.0; d]) - &Matrix::identity(d)
}

/// Jacobian of `h` at `θ* = (v*, v*)`: `[[I−H+v*𝟙ᵀ, 0], [v*𝟙ᵀ−I, I]]`.
pub fn dh_star(h: &Matrix, v: &[f64]) -> Result<Matrix> {
    check_dims(h, v)?;
    check_weight_one(v)?;
    let d = v.len();
    Ok(Matrix::from_blocks(&[
        vec![shifted_generator(h, v), Matrix::zeros(d, d)],
        vec![v_one_minus_i(v), Matrix::identity(d)],
    ]))
}

/// Mean field `h(y, ν) = ((I − (2−w(y))H) y, ν − (2−w(y)) y)`.
pub fn h_field(h: &Matrix, theta: &[f64]) -> Vec<f64> {
    let d = h.rows();
    let (y, nu) = theta.split_at(d);
    let k = 2.0 - y.iter().sum::<f64>();
    let hy = h.mul_vec(y);
    let mut out: Vec<f64> = y.iter().zip(&hy).map(|(a, b)| a - k * b).collect();
    out.extend(nu.iter().zip(y).map(|(n, y)| n - k * y));
    out
}

/// Mean field of the extended recursion on `θ̃ = (y, ν, s)`.
pub fn h_tilde_field(p: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
    let d = p.len();
    if theta.len() != 3 * d {
        return Err(Error::input("θ̃ must have length 3d"));
    }
    let (y, rest) = theta.split_at(d);
    let (nu, s) = rest.split_at(d);
    let k = 2.0 - y.iter().sum::<f64>();
    let phi_y = phi(s, nu, p)?.mul_vec(y);
    let mut out: Vec<f64> = y.iter().zip(&phi_y).map(|(a, b)| a - k * b).collect();
    out.extend(nu.iter().zip(y).map(|(n, y)| n - k * y));
    out.extend((0..d).map(|i| s[i] - k * p[i] * y[i]));
    Ok(out)
}

fn centered_multinomial(v: &[f64]) -> Matrix {
    &Matrix::from_diag(v) - &Matrix::outer(v, v)
}

/// Noise covariance of `(ΔM, ΔÑ)`:
/// `[[Σ_k v*ᵏCᵏ − v*v*ᵀ, H(diag v* − v*v*ᵀ)], [·ᵀ, diag v* − v*v*ᵀ]]`.
pub fn gamma_blocks(h: &Matrix, v: &[f64], c: &[Matrix]) -> Result<Matrix> {
    check_dims(h, v)?;
    check_weight_one(v)?;
    let d = v.len();
    if c.len() != d || c.iter().any(|m| m.rows() != d || !m.is_square()) {
        return Err(Error::input("need one d×d second-moment matrix per arm"));
    }
    if c.iter().any(|m| !m.is_symmetric(1e-12 * m.frobenius_norm().max(1.0))) {
        return Err(Error::input("second-moment matrices must be symmetric"));
    }
    let mut g1 = Matrix::outer(v, v).scale(-1.0);
    for (vk, ck) in v.iter().zip(c) {
        g1 = &g1 + &ck.scale(*vk);
    }
    let g2 = centered_multinomial(v);
    let g12 = h * &g2;
    Ok(Matrix::from_blocks(&[
        vec![g1, g12.clone()],
        vec![g12.transpose(), g2],
    ])
    .symmetrize())
}

/// Limit second moments of the success-rate driven design:
/// `Cᵏᵢⱼ = pⁱpʲqᵏ/(Σ_{ℓ≠k}pℓ)²` for `i, j ≠ k`, `Cᵏₖₖ = pᵏ`.
pub fn c_matrices_bhs(p: &[f64]) -> Vec<Matrix> {
    let d = p.len();
    let total: f64 = p.iter().sum();
    (0..d)
        .map(|k| {
            let denom = (total - p[k]).powi(2);
            Matrix::from_fn(d, d, |i, j| {
                if i == k && j == k {
                    p[k]
                } else if i == k || j == k {
                    0.0
                } else {
                    p[i] * p[j] * (1.0 - p[k]) / denom
                }
            })
        })
        .collect()
}

/// Analytic Jacobians of `(s, ν) ↦ Φ(s, ν) y`, returned as `(J_s, J_ν)`.
///
/// With `ρ = s/ν`, `R = Σ ρ` and `Gᵢₖ = ∂(Φy)ᵢ/∂ρₖ`, one has
/// `J_s = G diag(1/ν)` and `J_ν = −J_s diag(ρ)`.
pub fn dphi_y(s: &[f64], nu: &[f64], y: &[f64], p: &[f64]) -> Result<(Matrix, Matrix)> {
    let d = p.len();
    if y.len() != d {
        return Err(Error::input("y must have one entry per arm"));
    }
    phi(s, nu, p)?;
    let rho: Vec<f64> = s.iter().zip(nu).map(|(a, b)| a / b).collect();
    let total: f64 = rho.iter().sum();
    let denom: Vec<f64> = rho.iter().map(|r| total - r).collect();
    let mut g = Matrix::zeros(d, d);
    for i in 0..d {
        let a_i: f64 = (0..d)
            .filter(|&j| j != i)
            .map(|j| (1.0 - p[j]) * y[j] / denom[j])
            .sum();
        for k in 0..d {
            let cross: f64 = (0..d)
                .filter(|&j| j != i && j != k)
                .map(|j| (1.0 - p[j]) * y[j] / denom[j].powi(2))
                .sum();
            g[(i, k)] = if i == k { a_i } else { 0.0 } - rho[i] * cross;
        }
    }
    let j_s = &g * &Matrix::from_diag(&nu.iter().map(|x| 1.0 / x).collect::<Vec<_>>());
    let j_nu = (&j_s * &Matrix::from_diag(&rho)).scale(-1.0);
    Ok((j_s, j_nu))
}

/// Jacobian of `h̃` at `θ̃* = (v*, v*, diag(p)v*)`.
pub fn dh_tilde_star(h: &Matrix, v: &[f64], p: &[f64]) -> Result<Matrix> {
    check_dims(h, v)?;
    check_weight_one(v)?;
    let d = v.len();
    if p.len() != d {
        return Err(Error::input("p must have one entry per arm"));
    }
    let u: Vec<f64> = p.iter().zip(v).map(|(a, b)| a * b).collect();
    let (j_s, j_nu) = dphi_y(&u, v, v, p)?;
    let dp = Matrix::from_diag(p);
    let dh = Matrix::from_blocks(&[
        vec![shifted_generator(h, v), j_nu.scale(-1.0), j_s.scale(-1.0)],
        vec![v_one_minus_i(v), Matrix::identity(d), Matrix::zeros(d, d)],
        vec![&dp * &v_one_minus_i(v), Matrix::zeros(d, d), Matrix::identity(d)],
    ]);
    if dh.determinant()?.abs() <= 1e-14 {
        return Err(Error::Numerical("Dh̃(θ̃*) is singular".into()));
    }
    Ok(dh)
}

/// Noise covariance of `(ΔM, ΔÑ, ΔS̃)`.
pub fn gamma_tilde(h: &Matrix, v: &[f64], p: &[f64]) -> Result<Matrix> {
    let d = v.len();
    if p.len() != d {
        return Err(Error::input("p must have one entry per arm"));
    }
    let base = gamma_blocks(h, v, &c_matrices_bhs(p))?;
    let g2 = centered_multinomial(v);
    let dp = Matrix::from_diag(p);
    let g13 = &g2 * &dp;
    let g33 = &dp * &(&Matrix::from_diag(v) - &(&Matrix::outer(v, v) * &dp));
    Ok(Matrix::from_blocks(&[
        vec![base.block(0, 0, d, d), base.block(0, d, d, d), g13.clone()],
        vec![base.block(d, 0, d, d), base.block(d, d, d, d), g13.clone()],
        vec![g13.transpose(), g13.transpose(), g33],
    ])
    .symmetrize())
}

/// `Σ` solving `(Dh − I/2) Σ + Σ (Dh − I/2)ᵀ = Γ`; regime a only.
pub fn sigma_star(dh: &Matrix, gamma: &Matrix) -> Result<Matrix> {
    let m = dh - &Matrix::identity(dh.rows()).scale(0.5);
    let min_re = min_real_part(&m)?;
    if min_re <= REGIME_B_TOL {
        return Err(Error::Stability {
            min_real_part: min_re,
        });
    }
    lyapunov_solve(&m, gamma)
}

/// Jacobian of `(ν, s) ↦ vec Φ(s, ν)` (column-major vec) at `(ν, s)`; shape `d² × 2d`.
pub fn dphi_vec(s: &[f64], nu: &[f64], p: &[f64]) -> Result<Matrix> {
    let d = p.len();
    phi(s, nu, p)?;
    let rho: Vec<f64> = s.iter().zip(nu).map(|(a, b)| a / b).collect();
    let total: f64 = rho.iter().sum();
    let mut jac = Matrix::zeros(d * d, 2 * d);
    for j in 0..d {
        let den = total - rho[j];
        for i in (0..d).filter(|&i| i != j) {
            let row = i + j * d;
            for k in 0..d {
                let direct = if i == k { 1.0 / den } else { 0.0 };
                let through_sum = if k == j { 0.0 } else { rho[i] / den.powi(2) };
                let d_rho = (1.0 - p[j]) * (direct - through_sum);
                jac[(row, k)] = -d_rho * s[k] / (nu[k] * nu[k]);
                jac[(row, d + k)] = d_rho / nu[k];
            }
        }
    }
    Ok(jac)
}

/// Delta-method covariance of `√n vec(H_n − H)`: `DΦ · Σ̃_{(ν,s)} · DΦᵀ`.
pub fn gamma_h(p: &[f64], v: &[f64], sigma_tilde: &Matrix) -> Result<Matrix> {
    let d = p.len();
    if v.len() != d || sigma_tilde.rows() != 3 * d || !sigma_tilde.is_square() {
        return Err(Error::input(format!(
            "gamma_H needs p, v* of length d and a 3d×3d Σ̃, got d={d}, Σ̃ {}x{}",
            sigma_tilde.rows(),
            sigma_tilde.cols()
        )));
    }
    let u: Vec<f64> = p.iter().zip(v).map(|(a, b)| a * b).collect();
    let jac = dphi_vec(&u, v, p)?;
    let sub = sigma_tilde.block(d, d, 2 * d, 2 * d);
    Ok((&(&jac * &sub) * &jac.transpose()).symmetrize())
}

/// `n·Cov(θ_n)` for the linearized recursion
/// `θ_{k+1} = θ_k − (A θ_k − ε_{k+1})/(k+1)` with `Cov(ε) = Γ`, started from a
/// deterministic state at `k = 1`. Tends to `Σ` in regime (a), at the rate
/// `n^{−(2Λ−1)}` of the slowest mode.
pub fn linearized_covariance(a: &Matrix, gamma: &Matrix, n: u64) -> Result<Matrix> {
    if !a.is_square() || !gamma.is_square() || a.rows() != gamma.rows() {
        return Err(Error::input("A and Γ must be square of equal size"));
    }
    if n == 0 {
        return Err(Error::input("n must be at least 1"));
    }
    let k = a.rows();
    let eye = Matrix::identity(k);
    let mut p = Matrix::zeros(k, k);
    for j in 1..n {
        let t = 1.0 / (j + 1) as f64;
        let b = &eye - &a.scale(t);
        p = &(&(&b * &p) * &b.transpose()) + &gamma.scale(t * t);
    }
    Ok(p.scale(n as f64).symmetrize())
}

/// `H` as a function of the ratio vector, used for the limit of `H_n`.
pub fn phi_at_p(p: &[f64]) -> Result<Matrix> {
    phi_of_ratios(p, p)
}

/// Both integral conventions for `Σ` and their `1/(2Λ−1)`-scaled variants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SigmaCandidates {
    /// Solves `MΣ + ΣMᵀ = Γ`, `M = Dh − I/2`.
    pub forward: Matrix,
    /// Solves `MᵀΣ + ΣM = Γ`.
    pub transposed: Matrix,
    /// `Λ` = smallest real part of `Sp(Dh)`.
    pub lambda: f64,
}

impl SigmaCandidates {
    pub fn new(dh: &Matrix, gamma: &Matrix) -> Result<Self> {
        let forward = sigma_star(dh, gamma)?;
        let transposed = sigma_star(&dh.transpose(), gamma)?;
        Ok(Self {
            forward,
            transposed,
            lambda: min_real_part(dh)?,
        })
    }

    /// Named candidates in a fixed order.
    pub fn labelled(&self) -> Vec<(&'static str, Matrix)> {
        let f = 1.0 / (2.0 * self.lambda - 1.0);
        vec![
            ("forward", self.forward.clone()),
            ("transposed", self.transposed.clone()),
            ("forward/(2Λ−1)", self.forward.scale(f)),
            ("transposed/(2Λ−1)", self.transposed.scale(f)),
        ]
    }
}

/// Objects of the extended `(Ỹ, Ñ, S̃)` theorem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtendedAsymptotics {
    pub theta_tilde_star: Vec<f64>,
    pub gamma_tilde: Matrix,
    pub dh_tilde_star: Matrix,
    pub sigma_tilde: Option<Matrix>,
    /// Delta-method covariance of `√n vec(H_n − H)`, column-major vec.
    pub gamma_h: Option<Matrix>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymptoticsBundle {
    pub d: usize,
    pub v_star: Vec<f64>,
    pub theta_star: Vec<f64>,
    pub spectrum_h: ComplexSpectrum,
    pub regime: Regime,
    pub lambda_max: Complex64,
    pub lambda: f64,
    pub beta: Option<f64>,
    pub c_matrices: Vec<Matrix>,
    pub gamma: Matrix,
    pub dh_star: Matrix,
    pub sigma: Option<Matrix>,
    /// Machine-readable reason when `sigma` is absent.
    pub sigma_omitted: Option<String>,
    pub extended: Option<ExtendedAsymptotics>,
    pub assumptions: AssumptionReport,
}

impl AsymptoticsBundle {
    /// `θ*` for the `(Ỹ, Ñ)` theorem.
    pub fn theta(&self) -> &[f64] {
        &self.theta_star
    }
}

/// Computes every limit object for `model`.
pub fn asymptotics(model: &ModelSpec) -> Result<AsymptoticsBundle> {
    let assumptions = check_assumptions(model);
    if assumptions.a3.status == Status::Fails && model.kind() != ModelKind::Removal {
        return Err(Error::input(format!("A3 fails: {}", assumptions.a3.detail)));
    }
    let h = model.limit_h();
    let d = model.arms();
    let v = model.v_star()?;
    let spectrum_h = spectral::spectrum(h)?;
    let info = classify_spectrum(&spectrum_h)?;
    let c_matrices = model.column_second_moments();
    let gamma = gamma_blocks(h, &v, &c_matrices)?;
    let dh = dh_star(h, &v)?;
    let (sigma, sigma_omitted) = match info.regime {
        Regime::A => (Some(sigma_star(&dh, &gamma)?), None),
        Regime::B => (None, Some("regime-b".to_string())),
        Regime::C => (None, Some("regime-c".to_string())),
    };
    let mut theta_star = v.clone();
    theta_star.extend_from_slice(&v);

    let extended = match (model.kind(), model.p()) {
        (ModelKind::Bhs, Some(p)) => {
            let gt = gamma_tilde(h, &v, p)?;
            let dht = dh_tilde_star(h, &v, p)?;
            let sigma_tilde = match info.regime {
                Regime::A => Some(sigma_star(&dht, &gt)?),
                _ => None,
            };
            let gamma_h = sigma_tilde.as_ref().map(|st| gamma_h(p, &v, st)).transpose()?;
            let mut tt = theta_star.clone();
            tt.extend(p.iter().zip(&v).map(|(a, b)| a * b));
            Some(ExtendedAsymptotics {
                theta_tilde_star: tt,
                gamma_tilde: gt,
                dh_tilde_star: dht,
                sigma_tilde,
                gamma_h,
            })
        }
        _ => None,
    };

    Ok(AsymptoticsBundle {
        d,
        v_star: v,
        theta_star,
        spectrum_h,
        regime: info.regime,
        lambda_max: info.lambda_max,
        lambda: info.lambda,
        beta: info.beta,
        c_matrices,
        gamma,
        dh_star: dh,
        sigma,
        sigma_omitted,
        extended,
        assumptions,
    })
}
