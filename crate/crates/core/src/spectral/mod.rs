//! Dense linear-algebra kernels for the small matrices (dimension `d`, `2d`,
//! `3d`, `d²`) that appear in the asymptotic analysis.

mod eigen;
mod expm;
mod lyapunov;
pub(crate) mod matrix;
mod perron;

pub use eigen::{eigenpair_residual, spectrum, ComplexSpectrum, MAX_SPECTRUM_DIM};
pub use expm::matrix_exp;
pub use lyapunov::{
    default_horizon, lyapunov_residual, lyapunov_solve, min_real_part, sigma_by_quadrature,
    QuadratureSigma, LYAPUNOV_TOL,
};
pub use matrix::Matrix;
pub use perron::{perron_vector, DEFAULT_MAX_ITER, DEFAULT_TOL};

/// Smallest eigenvalue of a symmetric matrix, from the real parts of its spectrum.
pub fn min_symmetric_eigenvalue(a: &Matrix) -> crate::Result<f64> {
    Ok(spectrum(&a.symmetrize())?
        .eigenvalues
        .iter()
        .map(|z| z.re)
        .fold(f64::INFINITY, f64::min))
}

/// PSD check with the floor `λ_min ≥ −tol·‖A‖_F`.
pub fn is_psd(a: &Matrix, tol: f64) -> crate::Result<bool> {
    let floor = -tol * a.frobenius_norm().max(f64::MIN_POSITIVE);
    Ok(a.is_symmetric(1e-10 * a.frobenius_norm().max(1.0)) && min_symmetric_eigenvalue(a)? >= floor)
}
