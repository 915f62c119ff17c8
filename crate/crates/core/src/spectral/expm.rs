//! Matrix exponential by scaling and squaring with diagonal Padé approximants
//! (degrees 3, 5, 7, 9, 13 selected by the 1-norm, Higham 2005).
#![allow(clippy::excessive_precision)]

use super::Matrix;
use crate::error::{Error, Result};

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

pub fn matrix_exp(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::input(format!(
            "matrix exponential needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if a.as_slice().iter().any(|x| !x.is_finite()) {
        return Err(Error::input("matrix exponential needs finite entries"));
    }
    let n = a.rows();
    let norm = a.norm_one();
    if norm == 0.0 {
        return Ok(Matrix::identity(n));
    }
    for (m, theta) in THETA {
        if norm <= theta {
            let coeffs: &[f64] = match m {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            let (u, v) = pade_low(a, coeffs);
            return rational(&u, &v);
        }
    }
    let s = (norm / THETA_13).log2().ceil().max(0.0) as i32;
    let scaled = a.scale(0.5f64.powi(s));
    let (u, v) = pade13(&scaled);
    let mut r = rational(&u, &v)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

fn pade_low(a: &Matrix, b: &[f64]) -> (Matrix, Matrix) {
    let n = a.rows();
    let a2 = a * a;
    let mut u = Matrix::identity(n).scale(b[1]);
    let mut v = Matrix::identity(n).scale(b[0]);
    let mut power = Matrix::identity(n);
    for k in 1..b.len() / 2 {
        power = &power * &a2;
        u = &u + &power.scale(b[2 * k + 1]);
        v = &v + &power.scale(b[2 * k]);
    }
    (a * &u, v)
}

fn pade13(a: &Matrix) -> (Matrix, Matrix) {
    let b = &B13;
    let n = a.rows();
    let id = Matrix::identity(n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &(&a6.scale(b[13]) + &a4.scale(b[11])) + &a2.scale(b[9]);
    let u = &(&(&(&(&a6 * &inner_u) + &a6.scale(b[7])) + &a4.scale(b[5])) + &a2.scale(b[3]))
        + &id.scale(b[1]);
    let u = a * &u;
    let inner_v = &(&a6.scale(b[12]) + &a4.scale(b[10])) + &a2.scale(b[8]);
    let v = &(&(&(&(&a6 * &inner_v) + &a6.scale(b[6])) + &a4.scale(b[4])) + &a2.scale(b[2]))
        + &id.scale(b[0]);
    (u, v)
}

/// Solves `(V − U) X = V + U`.
fn rational(u: &Matrix, v: &Matrix) -> Result<Matrix> {
    let p = v + u;
    let q = v - u;
    let lu = super::matrix::Lu::factor(&q)?;
    let n = u.rows();
    let mut x = Matrix::zeros(n, n);
    for j in 0..n {
        let col = lu.solve(&p.column(j))?;
        for i in 0..n {
            x[(i, j)] = col[i];
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gives_identity_exactly() {
        assert_eq!(matrix_exp(&Matrix::zeros(4, 4)).unwrap(), Matrix::identity(4));
    }

    #[test]
    fn diagonal() {
        let e = matrix_exp(&Matrix::from_diag(&[1.0, -1.0])).unwrap();
        assert!((e[(0, 0)] - std::f64::consts::E).abs() < 1e-14);
        assert!((e[(1, 1)] - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn nilpotent_and_rotation() {
        let n = Matrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]]);
        let e = matrix_exp(&n).unwrap();
        assert!(e.max_abs_diff(&Matrix::from_rows(&[[1.0, 1.0], [0.0, 1.0]])) < 1e-15);
        let t = 2.5;
        let r = matrix_exp(&Matrix::from_rows(&[[0.0, -t], [t, 0.0]])).unwrap();
        let expect = Matrix::from_rows(&[[t.cos(), -t.sin()], [t.sin(), t.cos()]]);
        assert!(r.max_abs_diff(&expect) < 1e-14);
    }

    #[test]
    fn inverse_identity_for_every_pade_degree() {
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for scale in [0.001, 0.05, 0.2, 0.5, 1.0, 4.0] {
            let a = Matrix::from_fn(4, 4, |_, _| scale * next());
            let prod = &matrix_exp(&a).unwrap() * &matrix_exp(&a.scale(-1.0)).unwrap();
            assert!(
                prod.max_abs_diff(&Matrix::identity(4)) < 1e-10,
                "scale {scale}"
            );
        }
    }
}
