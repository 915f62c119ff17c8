use super::Matrix;
use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

/// Right Perron eigenvector of a balanced, nonnegative, irreducible matrix.
///
/// All column sums of `h` must equal a common `c > 0`, so `1ᵀ` is a left
/// eigenvector for `c` and the weight `Σ vᵢ` is invariant under `v ↦ Hv / c`.
/// The iteration runs on the lazy operator `(H + cI) / 2c`, which shares the
/// Perron vector but is aperiodic, starting from the uniform vector.
///
/// Returns the weight-one vector and the final residual `‖Hv − cv‖₂`.
pub fn perron_vector(h: &Matrix, tol: f64, max_iter: usize) -> Result<(Vec<f64>, f64)> {
    if !h.is_square() {
        return Err(Error::input(format!(
            "Perron vector needs a square matrix, got {}x{}",
            h.rows(),
            h.cols()
        )));
    }
    let d = h.rows();
    if d < 2 {
        return Err(Error::input("Perron vector needs dimension at least 2"));
    }
    if h.as_slice().iter().any(|&x| x < 0.0) {
        return Err(Error::input("Perron vector needs nonnegative entries"));
    }
    let sums = h.col_sums();
    let c = sums[0];
    if c <= 0.0 || sums.iter().any(|s| (s - c).abs() > 1e-12 * c.max(1.0)) {
        return Err(Error::input(format!(
            "matrix is not balanced: column sums {sums:?}"
        )));
    }

    let mut v = vec![1.0 / d as f64; d];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let hv = h.mul_vec(&v);
        residual = hv
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - c * b).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= tol {
            break;
        }
        for (x, y) in v.iter_mut().zip(&hv) {
            *x = 0.5 * (*x + y / c);
        }
        let w: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= w);
    }
    if residual > tol {
        return Err(Error::IterationLimit {
            iterations: max_iter,
            residual,
        });
    }
    let w: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= w);
    if v.iter().any(|&x| x <= 0.0) {
        return Err(Error::input(
            "Perron vector has a zero entry; matrix is reducible",
        ));
    }
    Ok((v, residual))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_swap_matrix() {
        let h = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        let (v, res) = perron_vector(&h, DEFAULT_TOL, 100).unwrap();
        assert_eq!(v, vec![0.5, 0.5]);
        assert!(res <= DEFAULT_TOL);
    }

    #[test]
    fn two_arm_wei_matrix() {
        let h = Matrix::from_rows(&[[0.5, 0.3], [0.5, 0.7]]);
        let (v, res) = perron_vector(&h, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!((v[0] - 0.375).abs() < 1e-12);
        assert!((v[1] - 0.625).abs() < 1e-12);
        assert!(res <= 1e-12);
    }

    #[test]
    fn three_arm_wei_matrix() {
        let p = [0.5, 0.6, 0.7];
        let h = Matrix::from_fn(3, 3, |i, j| {
            if i == j {
                p[i]
            } else {
                (1.0 - p[j]) / 2.0
            }
        });
        let (v, _) = perron_vector(&h, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        for (x, e) in v.iter().zip([12.0 / 47.0, 15.0 / 47.0, 20.0 / 47.0]) {
            assert!((x - e).abs() < 1e-11, "{x} vs {e}");
        }
        assert_eq!(v.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn scaled_balance_is_handled() {
        let h = Matrix::from_rows(&[[1.0, 0.6], [1.0, 1.4]]);
        let (v, _) = perron_vector(&h, 1e-12, DEFAULT_MAX_ITER).unwrap();
        assert!((v[0] - 0.375).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let unbalanced = Matrix::from_rows(&[[0.5, 0.3], [0.4, 0.7]]);
        assert!(matches!(
            perron_vector(&unbalanced, 1e-12, 100),
            Err(Error::Input(_))
        ));
        let slow = Matrix::from_rows(&[[0.99, 0.01], [0.01, 0.99]]);
        assert!(matches!(
            perron_vector(&Matrix::from_rows(&[[0.999, 0.3], [0.001, 0.7]]), 1e-15, 2),
            Err(Error::IterationLimit { iterations: 2, .. })
        ));
        assert!(perron_vector(&slow, 1e-12, DEFAULT_MAX_ITER).is_ok());
        assert!(perron_vector(&Matrix::zeros(2, 3), 1e-12, 10).is_err());
    }
}
