use serde::{Deserialize, Serialize};

use super::{matrix_exp, spectrum, Matrix};
use crate::error::{Error, Result};

pub const LYAPUNOV_TOL: f64 = 1e-10;

/// Solves `M Σ + Σ Mᵀ = G` for symmetric `G`.
///
/// Requires every eigenvalue of `M` to have a strictly positive real part, in
/// which case `Σ = ∫₀^∞ e^{−Mu} G e^{−Mᵀu} du` is the unique solution. The
/// system is solved in row-major vectorized form `(M ⊗ I + I ⊗ M) vec Σ = vec G`.
pub fn lyapunov_solve(m: &Matrix, g: &Matrix) -> Result<Matrix> {
    check_pair(m, g)?;
    let d = m.rows();
    let min_re = min_real_part(m)?;
    if min_re <= 0.0 {
        return Err(Error::Stability {
            min_real_part: min_re,
        });
    }
    let id = Matrix::identity(d);
    let op = &m.kron(&id) + &id.kron(m);
    let x = op.solve(g.as_slice())?;
    let sigma = Matrix::from_row_major(d, d, x)?.symmetrize();
    let residual = lyapunov_residual(m, &sigma, g);
    let scale = g.frobenius_norm().max(f64::MIN_POSITIVE);
    if residual > LYAPUNOV_TOL * scale {
        return Err(Error::Numerical(format!(
            "Lyapunov residual {residual:e} exceeds {LYAPUNOV_TOL:e}·‖G‖"
        )));
    }
    Ok(sigma)
}

/// `‖M Σ + Σ Mᵀ − G‖_F`.
pub fn lyapunov_residual(m: &Matrix, sigma: &Matrix, g: &Matrix) -> f64 {
    (&(&(m * sigma) + &(sigma * &m.transpose())) - g).frobenius_norm()
}

/// Smallest real part over the spectrum of `m`.
pub fn min_real_part(m: &Matrix) -> Result<f64> {
    Ok(spectrum(m)?
        .eigenvalues
        .iter()
        .map(|z| z.re)
        .fold(f64::INFINITY, f64::min))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadratureSigma {
    /// `∫ e^{−Mu} G e^{−Mᵀu} du`; solves `MΣ + ΣMᵀ = G`.
    pub sigma: Matrix,
    /// `∫ (e^{−Mu})ᵀ G e^{−Mu} du`; solves `MᵀΣ + ΣM = G`.
    pub sigma_transposed: Matrix,
    /// `‖e^{−M·horizon}‖_F` at the truncation point.
    pub tail_norm: f64,
    /// Set when the tail bound `‖e^{−M·horizon}‖ ≤ 1e−8` is violated.
    pub precision_warning: bool,
}

/// Composite-Simpson evaluation of both integral conventions on `[0, horizon]`.
pub fn sigma_by_quadrature(
    m: &Matrix,
    g: &Matrix,
    horizon: f64,
    steps: usize,
) -> Result<QuadratureSigma> {
    check_pair(m, g)?;
    if !(horizon > 0.0) || steps < 2 {
        return Err(Error::input(
            "quadrature needs a positive horizon and at least 2 steps",
        ));
    }
    let steps = steps + steps % 2;
    let h = horizon / steps as f64;
    let step = matrix_exp(&m.scale(-h))?;
    let d = m.rows();
    let mut e = Matrix::identity(d);
    let mut acc = Matrix::zeros(d, d);
    let mut acc_t = Matrix::zeros(d, d);
    for k in 0..=steps {
        let w = if k == 0 || k == steps {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let et = e.transpose();
        acc = &acc + &(&(&e * g) * &et).scale(w);
        acc_t = &acc_t + &(&(&et * g) * &e).scale(w);
        if k < steps {
            e = &e * &step;
        }
    }
    let tail_norm = e.frobenius_norm();
    Ok(QuadratureSigma {
        sigma: acc.scale(h / 3.0).symmetrize(),
        sigma_transposed: acc_t.scale(h / 3.0).symmetrize(),
        tail_norm,
        precision_warning: tail_norm > 1e-8,
    })
}

/// A truncation horizon at which the slowest mode has decayed below `1e-8`,
/// with headroom for non-normal transients.
pub fn default_horizon(m: &Matrix) -> Result<f64> {
    let min_re = min_real_part(m)?;
    if min_re <= 0.0 {
        return Err(Error::Stability {
            min_real_part: min_re,
        });
    }
    Ok(24.0 / min_re)
}

fn check_pair(m: &Matrix, g: &Matrix) -> Result<()> {
    if !m.is_square() || !g.is_square() || m.rows() != g.rows() {
        return Err(Error::input(format!(
            "Lyapunov operands must be square of equal size, got {}x{} and {}x{}",
            m.rows(),
            m.cols(),
            g.rows(),
            g.cols()
        )));
    }
    if !g.is_symmetric(1e-12 * g.frobenius_norm().max(1.0)) {
        return Err(Error::input("right-hand side must be symmetric"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_case() {
        let s = lyapunov_solve(&Matrix::from_rows(&[[1.0]]), &Matrix::from_rows(&[[2.0]])).unwrap();
        assert!((s[(0, 0)] - 1.0).abs() < 1e-15);
        let q = sigma_by_quadrature(
            &Matrix::from_rows(&[[1.0]]),
            &Matrix::from_rows(&[[2.0]]),
            40.0,
            4000,
        )
        .unwrap();
        assert!((q.sigma[(0, 0)] - 1.0).abs() < 1e-8);
        assert!(!q.precision_warning);
    }

    #[test]
    fn diagonal_identity() {
        let a = [0.7, 2.5];
        let m = Matrix::from_diag(&a);
        let g = Matrix::from_rows(&[[1.0, 0.3], [0.3, 2.0]]);
        let s = lyapunov_solve(&m, &g).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((s[(i, j)] - g[(i, j)] / (a[i] + a[j])).abs() < 1e-14);
            }
        }
        let q = sigma_by_quadrature(&m, &g, default_horizon(&m).unwrap(), 8000).unwrap();
        assert!(q.sigma.relative_error(&s) < 1e-6);
        assert!(q.sigma_transposed.relative_error(&s) < 1e-6);
    }

    #[test]
    fn non_normal_operator_separates_conventions() {
        let m = Matrix::from_rows(&[[1.0, 3.0], [0.0, 0.6]]);
        let g = Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.5]]);
        let s = lyapunov_solve(&m, &g).unwrap();
        assert!(lyapunov_residual(&m, &s, &g) < 1e-12);
        let q = sigma_by_quadrature(&m, &g, default_horizon(&m).unwrap(), 8000).unwrap();
        assert!(q.sigma.relative_error(&s) < 1e-6);
        let st = lyapunov_solve(&m.transpose(), &g).unwrap();
        assert!(q.sigma_transposed.relative_error(&st) < 1e-6);
        assert!(s.relative_error(&st) > 0.1);
    }

    #[test]
    fn short_horizon_warns() {
        let q = sigma_by_quadrature(
            &Matrix::from_rows(&[[1.0]]),
            &Matrix::from_rows(&[[2.0]]),
            2.0,
            100,
        )
        .unwrap();
        assert!(q.precision_warning);
    }

    #[test]
    fn unstable_operator_rejected() {
        let m = Matrix::from_rows(&[[1.0, 0.0], [0.0, -0.1]]);
        assert!(matches!(
            lyapunov_solve(&m, &Matrix::identity(2)),
            Err(Error::Stability { .. })
        ));
    }

    #[test]
    fn asymmetric_rhs_rejected() {
        let g = Matrix::from_rows(&[[1.0, 0.5], [0.0, 1.0]]);
        assert!(matches!(
            lyapunov_solve(&Matrix::identity(2), &g),
            Err(Error::Input(_))
        ));
    }
}
