//! Eigenvalues of small dense real matrices.
//!
//! Reduction to upper Hessenberg form by stabilized elimination, followed by
//! the implicit double-shift (Francis) QR iteration. Both work on a 1-based
//! scratch buffer so the index arithmetic mirrors the textbook recurrences.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

/// Largest dimension accepted by [`spectrum`].
pub const MAX_SPECTRUM_DIM: usize = 32;

const MAX_QR_ITERATIONS: usize = 60;

/// Eigenvalues of a real square matrix, sorted by descending real part then
/// descending imaginary part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexSpectrum {
    pub eigenvalues: Vec<Complex64>,
}

impl ComplexSpectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Index of the eigenvalue closest to `target`.
    pub fn closest(&self, target: Complex64) -> Option<usize> {
        self.eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - target).norm().total_cmp(&(b.1 - target).norm()))
            .map(|(i, _)| i)
    }

    /// True when each non-real eigenvalue has its conjugate in the list.
    pub fn is_conjugate_closed(&self, tol: f64) -> bool {
        self.eigenvalues.iter().all(|z| {
            z.im.abs() <= tol
                || self
                    .eigenvalues
                    .iter()
                    .any(|w| (w - z.conj()).norm() <= tol)
        })
    }

    /// Compares two spectra as multisets, matching greedily by distance.
    /// Returns the largest matched distance, or `None` if lengths differ.
    pub fn multiset_distance(&self, other: &ComplexSpectrum) -> Option<f64> {
        if self.len() != other.len() {
            return None;
        }
        let mut pool = other.eigenvalues.clone();
        let mut worst: f64 = 0.0;
        for z in &self.eigenvalues {
            let (k, dist) = pool
                .iter()
                .enumerate()
                .map(|(k, w)| (k, (w - z).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))?;
            worst = worst.max(dist);
            pool.swap_remove(k);
        }
        Some(worst)
    }
}

/// Computes all eigenvalues of `a` (dimension at most [`MAX_SPECTRUM_DIM`]).
pub fn spectrum(a: &Matrix) -> Result<ComplexSpectrum> {
    if !a.is_square() {
        return Err(Error::input(format!(
            "spectrum needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let n = a.rows();
    if n > MAX_SPECTRUM_DIM {
        return Err(Error::UnsupportedSize(format!(
            "spectrum is limited to dimension {MAX_SPECTRUM_DIM}, got {n}"
        )));
    }
    // 1-based copy
    let mut h = vec![vec![0.0; n + 1]; n + 1];
    for i in 0..n {
        for j in 0..n {
            h[i + 1][j + 1] = a[(i, j)];
        }
    }
    hessenberg(&mut h, n);
    let mut eig = francis_qr(&mut h, n)?;
    eig.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    Ok(ComplexSpectrum { eigenvalues: eig })
}

fn hessenberg(a: &mut [Vec<f64>], n: usize) {
    for m in 2..n {
        let mut x: f64 = 0.0;
        let mut i = m;
        for j in m..=n {
            if a[j][m - 1].abs() > x.abs() {
                x = a[j][m - 1];
                i = j;
            }
        }
        if i != m {
            for j in (m - 1)..=n {
                let t = a[i][j];
                a[i][j] = a[m][j];
                a[m][j] = t;
            }
            for row in a.iter_mut().take(n + 1).skip(1) {
                row.swap(i, m);
            }
        }
        if x != 0.0 {
            for i in (m + 1)..=n {
                let mut y = a[i][m - 1];
                if y != 0.0 {
                    y /= x;
                    a[i][m - 1] = y;
                    for j in m..=n {
                        a[i][j] -= y * a[m][j];
                    }
                    for j in 1..=n {
                        a[j][m] += y * a[j][i];
                    }
                }
            }
        }
    }
    // drop the stored multipliers
    for (i, row) in a.iter_mut().enumerate().take(n + 1).skip(3) {
        for x in row.iter_mut().take(i - 1).skip(1) {
            *x = 0.0;
        }
    }
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

#[allow(clippy::many_single_char_names)]
fn francis_qr(a: &mut [Vec<f64>], n: usize) -> Result<Vec<Complex64>> {
    let mut wr = vec![0.0; n + 1];
    let mut wi = vec![0.0; n + 1];
    let mut anorm = 0.0;
    for i in 1..=n {
        for j in (i.saturating_sub(1)).max(1)..=n {
            anorm += a[i][j].abs();
        }
    }
    let mut nn = n;
    let mut t = 0.0;
    let (mut p, mut q, mut r): (f64, f64, f64);
    let (mut x, mut y, mut z, mut w);
    while nn >= 1 {
        let mut its = 0;
        loop {
            let mut l = nn;
            while l >= 2 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[l][l - 1].abs() + s == s {
                    a[l][l - 1] = 0.0;
                    break;
                }
                l -= 1;
            }
            x = a[nn][nn];
            if l == nn {
                wr[nn] = x + t;
                wi[nn] = 0.0;
                nn -= 1;
                break;
            }
            y = a[nn - 1][nn - 1];
            w = a[nn][nn - 1] * a[nn - 1][nn];
            if l == nn - 1 {
                p = 0.5 * (y - x);
                q = p * p + w;
                z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    z = p + sign(z, p);
                    wr[nn - 1] = x + z;
                    wr[nn] = x + z;
                    if z != 0.0 {
                        wr[nn] = x - w / z;
                    }
                    wi[nn - 1] = 0.0;
                    wi[nn] = 0.0;
                } else {
                    wr[nn - 1] = x + p;
                    wr[nn] = x + p;
                    wi[nn - 1] = -z;
                    wi[nn] = z;
                }
                nn -= 2;
                break;
            }
            if its == MAX_QR_ITERATIONS {
                return Err(Error::Numerical(format!(
                    "QR iteration did not converge within {MAX_QR_ITERATIONS} sweeps"
                )));
            }
            if its > 0 && its % 10 == 0 {
                // exceptional shift
                t += x;
                for i in 1..=nn {
                    a[i][i] -= x;
                }
                let s = a[nn][nn - 1].abs() + a[nn - 1][nn - 2].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            let mut m = nn - 2;
            loop {
                z = a[m][m];
                r = x - z;
                let s0 = y - z;
                p = (r * s0 - w) / a[m + 1][m] + a[m][m + 1];
                q = a[m + 1][m + 1] - z - r - s0;
                r = a[m + 2][m + 1];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=nn {
                a[i][i - 2] = 0.0;
                if i != m + 2 {
                    a[i][i - 3] = 0.0;
                }
            }
            let mut k = m;
            while k < nn {
                if k != m {
                    p = a[k][k - 1];
                    q = a[k + 1][k - 1];
                    r = 0.0;
                    if k != nn - 1 {
                        r = a[k + 2][k - 1];
                    }
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = sign((p * p + q * q + r * r).sqrt(), p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            a[k][k - 1] = -a[k][k - 1];
                        }
                    } else {
                        a[k][k - 1] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nn {
                        p = a[k][j] + q * a[k + 1][j];
                        if k != nn - 1 {
                            p += r * a[k + 2][j];
                            a[k + 2][j] -= p * z;
                        }
                        a[k + 1][j] -= p * y;
                        a[k][j] -= p * x;
                    }
                    let mmin = nn.min(k + 3);
                    for i in l..=mmin {
                        p = x * a[i][k] + y * a[i][k + 1];
                        if k != nn - 1 {
                            p += z * a[i][k + 2];
                            a[i][k + 2] -= p * r;
                        }
                        a[i][k + 1] -= p * q;
                        a[i][k] -= p;
                    }
                }
                k += 1;
            }
            if l + 1 >= nn {
                break;
            }
        }
    }
    Ok((1..=n).map(|i| Complex64::new(wr[i], wi[i])).collect())
}

/// Recomputes an eigenvector for `lambda` by inverse iteration and returns
/// the normalized residual `‖A x − λ x‖ / ‖x‖`.
pub fn eigenpair_residual(a: &Matrix, lambda: Complex64) -> f64 {
    let n = a.rows();
    let scale = a.frobenius_norm().max(1.0);
    let shift = lambda + Complex64::new(1e-10 * scale, 1e-10 * scale);
    let mut x = vec![Complex64::new(1.0, 0.0); n];
    for _ in 0..4 {
        x = complex_shifted_solve(a, shift, &x);
        let norm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        x.iter_mut().for_each(|z| *z /= norm);
    }
    let mut res = 0.0;
    for i in 0..n {
        let mut acc = -lambda * x[i];
        for j in 0..n {
            acc += a[(i, j)] * x[j];
        }
        res += acc.norm_sqr();
    }
    res.sqrt()
}

/// Solves `(A − σ I) y = b` in complex arithmetic, clamping exact-zero pivots.
fn complex_shifted_solve(a: &Matrix, sigma: Complex64, b: &[Complex64]) -> Vec<Complex64> {
    let n = a.rows();
    let mut m: Vec<Vec<Complex64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let v = Complex64::new(a[(i, j)], 0.0);
                    if i == j {
                        v - sigma
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect();
    let mut rhs = b.to_vec();
    let tiny = 1e-300;
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| m[i][k].norm().total_cmp(&m[j][k].norm()))
            .unwrap_or(k);
        m.swap(k, p);
        rhs.swap(k, p);
        if m[k][k].norm() < tiny {
            m[k][k] = Complex64::new(tiny, 0.0);
        }
        for i in k + 1..n {
            let f = m[i][k] / m[k][k];
            for j in k..n {
                let t = m[k][j];
                m[i][j] -= f * t;
            }
            let t = rhs[k];
            rhs[i] -= f * t;
        }
    }
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    for i in (0..n).rev() {
        let mut acc = rhs[i];
        for j in i + 1..n {
            acc -= m[i][j] * y[j];
        }
        y[i] = acc / m[i][i];
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn identity_spectrum() {
        let s = spectrum(&Matrix::identity(3)).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.eigenvalues.iter().all(|z| (z - c(1.0, 0.0)).norm() < 1e-14));
    }

    #[test]
    fn two_by_two_trace_determinant_rule() {
        // second eigenvalue of the two-arm Wei matrix is p1 + p2 - 1
        for (p1, p2) in [(0.5, 0.7), (0.9, 0.8), (0.7, 0.8)] {
            let h = Matrix::from_rows(&[[p1, 1.0 - p2], [1.0 - p1, p2]]);
            let s = spectrum(&h).unwrap();
            assert!((s.eigenvalues[0] - c(1.0, 0.0)).norm() < 1e-14);
            assert!((s.eigenvalues[1] - c(p1 + p2 - 1.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn rotation_has_conjugate_pair() {
        let a = Matrix::from_rows(&[[0.0, -2.0], [2.0, 0.0]]);
        let s = spectrum(&a).unwrap();
        assert!(s.is_conjugate_closed(1e-12));
        assert!((s.eigenvalues[0] - c(0.0, 2.0)).norm() < 1e-12);
        assert!((s.eigenvalues[1] - c(0.0, -2.0)).norm() < 1e-12);
    }

    #[test]
    fn companion_matrix_roots() {
        // x^4 - 10x^3 + 35x^2 - 50x + 24 = (x-1)(x-2)(x-3)(x-4)
        let a = Matrix::from_rows(&[
            [10.0, -35.0, 50.0, -24.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
        ]);
        let s = spectrum(&a).unwrap();
        for (z, e) in s.eigenvalues.iter().zip([4.0, 3.0, 2.0, 1.0]) {
            assert!((z - c(e, 0.0)).norm() < 1e-9, "{z} vs {e}");
        }
    }

    #[test]
    fn residuals_on_pseudorandom_matrices() {
        let mut state = 0x9E37_79B9_7F4A_7C15u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for n in [2, 3, 5, 8, 13, 21, 32] {
            let a = Matrix::from_fn(n, n, |_, _| next());
            let s = spectrum(&a).unwrap();
            assert!(s.is_conjugate_closed(1e-8));
            let norm = a.frobenius_norm();
            for &z in &s.eigenvalues {
                assert!(eigenpair_residual(&a, z) <= 1e-8 * norm, "n={n} z={z}");
            }
            let trace: f64 = s.eigenvalues.iter().map(|z| z.re).sum();
            assert!((trace - a.trace()).abs() < 1e-10 * norm.max(1.0));
        }
    }

    #[test]
    fn rejects_oversized_and_non_square() {
        assert!(matches!(
            spectrum(&Matrix::identity(33)),
            Err(Error::UnsupportedSize(_))
        ));
        assert!(matches!(
            spectrum(&Matrix::zeros(2, 3)),
            Err(Error::Input(_))
        ));
    }
}
