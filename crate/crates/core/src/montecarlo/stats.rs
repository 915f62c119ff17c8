//! Order-fixed reductions used by the ensemble estimators.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::spectral::Matrix;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

pub fn compensated_mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = CompensatedSum::default();
    let mut n = 0usize;
    for x in xs {
        s.add(x);
        n += 1;
    }
    s.value() / n as f64
}

/// Sample mean vector of equal-length rows.
pub fn mean_vector(rows: &[Vec<f64>]) -> Vec<f64> {
    let k = rows.first().map_or(0, Vec::len);
    (0..k)
        .map(|i| compensated_mean(rows.iter().map(|r| r[i])))
        .collect()
}

/// Unbiased sample covariance; `None` for fewer than two rows.
pub fn covariance(rows: &[Vec<f64>]) -> Option<Matrix> {
    if rows.len() < 2 {
        return None;
    }
    let k = rows[0].len();
    let mean = mean_vector(rows);
    let mut acc = vec![CompensatedSum::default(); k * k];
    for r in rows {
        for i in 0..k {
            let a = r[i] - mean[i];
            for j in i..k {
                acc[i * k + j].add(a * (r[j] - mean[j]));
            }
        }
    }
    let denom = (rows.len() - 1) as f64;
    Some(Matrix::from_fn(k, k, |i, j| {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        acc[a * k + b].value() / denom
    }))
}

/// Second-moment matrix about zero, `E[zzᵀ]`, with entrywise standard errors.
pub fn raw_second_moment(rows: &[Vec<f64>]) -> (Matrix, Matrix) {
    let k = rows.first().map_or(0, Vec::len);
    let n = rows.len() as f64;
    let mut m = Matrix::zeros(k, k);
    let mut se = Matrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let mean = compensated_mean(rows.iter().map(|r| r[i] * r[j]));
            let var = compensated_mean(rows.iter().map(|r| (r[i] * r[j] - mean).powi(2)))
                * n
                / (n - 1.0).max(1.0);
            m[(i, j)] = mean;
            m[(j, i)] = mean;
            se[(i, j)] = (var / n).sqrt();
            se[(j, i)] = se[(i, j)];
        }
    }
    (m, se)
}

/// Kolmogorov–Smirnov distance between a sample and `N(mean, sd²)`.
/// A zero `sd` compares against a point mass.
pub fn ks_normal(sample: &[f64], mean: f64, sd: f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let normal = (sd > 0.0).then(|| Normal::new(mean, sd).expect("positive sd"));
    let cdf = |x: f64| match &normal {
        Some(d) => d.cdf(x),
        None => (x >= mean) as u8 as f64,
    };
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Least-squares slope of `y` on `x` with its standard error.
pub fn ols_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = compensated_mean(x.iter().copied());
    let my = compensated_mean(y.iter().copied());
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - my - slope * (a - mx)).powi(2))
        .sum();
    let se = if n > 2.0 { (rss / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    (slope, se)
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn compensation_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        for x in [1e16, 1.0, -1e16, 1.0] {
            s.add(x);
        }
        assert_eq!(s.value(), 2.0);
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let n = 1000;
        let d = Normal::new(0.0, 2.0).unwrap();
        let xs: Vec<f64> = (0..n).map(|i| d.inverse_cdf((i as f64 + 0.5) / n as f64)).collect();
        assert!((ks_normal(&xs, 0.0, 2.0) - 0.5 / n as f64).abs() < 1e-9);
        assert!(ks_normal(&xs, 0.0, 1.0) > 0.1);
    }

    #[test]
    fn ols_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.5 * v).collect();
        let (s, se) = ols_slope(&x, &y);
        assert!((s + 0.5).abs() < 1e-14 && se < 1e-12);
    }

    #[test]
    fn covariance_needs_two_rows() {
        assert!(covariance(&[vec![1.0, 2.0]]).is_none());
        let c = covariance(&[vec![1.0, 0.0], vec![3.0, 2.0]]).unwrap();
        assert_eq!(c, Matrix::from_rows(&[[2.0, 2.0], [2.0, 2.0]]));
    }

    proptest! {
        #[test]
        fn permutation_changes_sums_negligibly(xs in prop::collection::vec(-1e6f64..1e6, 2..200), seed in 0u64..1000) {
            let mut perm = xs.clone();
            let k = (seed as usize) % perm.len();
            perm.rotate_left(k);
            perm.reverse();
            let a = compensated_mean(xs.iter().copied());
            let b = compensated_mean(perm.iter().copied());
            let scale = xs.iter().map(|x| x.abs()).fold(1.0, f64::max);
            prop_assert!((a - b).abs() <= 1e-12 * scale);
        }

        #[test]
        fn covariance_is_symmetric_psd(rows in prop::collection::vec(prop::collection::vec(-10f64..10.0, 3), 2..40)) {
            let c = covariance(&rows).unwrap();
            prop_assert!(c.is_symmetric(0.0));
            prop_assert!(crate::spectral::min_symmetric_eigenvalue(&c).unwrap() >= -1e-10 * c.frobenius_norm().max(1.0));
        }
    }
}
