use proptest::prelude::*;

use urnsa_core::asymptotics::{asymptotics, dh_tilde_star, shifted_generator};
use urnsa_core::models::{bhs_model, wei_model, ModelSpec};
use urnsa_core::montecarlo::{map_replications, run_path};
use urnsa_core::oracle::{enumerate_exact, Arithmetic};
use urnsa_core::rng::{stream_rng, uniform_open_closed};
use urnsa_core::spectral::{lyapunov_residual, min_symmetric_eigenvalue, Matrix};
use urnsa_core::urn::{draw, sa_decompose, UrnState};

fn probs(d: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    d.prop_flat_map(|d| prop::collection::vec(0.05f64..0.95, d))
}

fn bhs(p: &[f64]) -> ModelSpec {
    bhs_model(p, &vec![1.0 / p.len() as f64; p.len()]).unwrap()
}

/// Right Perron vector by plain power iteration on a column-stochastic matrix.
fn power_iteration(h: &Matrix) -> Vec<f64> {
    let d = h.rows();
    let mut v = vec![1.0 / d as f64; d];
    for _ in 0..20_000 {
        let mut next = h.mul_vec(&v);
        // damping keeps periodic chains converging
        for (x, old) in next.iter_mut().zip(&v) {
            *x = 0.5 * (*x + old);
        }
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= s);
        let delta: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
        v = next;
        if delta < 1e-15 {
            break;
        }
    }
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wei_allocation_is_inverse_failure_rate(p in probs(2..=5)) {
        let v = wei_model(&p).unwrap().v_star().unwrap();
        let z: f64 = p.iter().map(|pi| 1.0 / (1.0 - pi)).sum();
        for (vi, pi) in v.iter().zip(&p) {
            prop_assert!((vi - 1.0 / (1.0 - pi) / z).abs() < 1e-10);
        }
    }

    #[test]
    fn bhs_allocation_matches_power_iteration(p in probs(2..=5)) {
        let m = bhs(&p);
        let h = m.limit_h();
        for s in h.col_sums() {
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
        let want = power_iteration(h);
        let got = m.v_star().unwrap();
        for (a, b) in got.iter().zip(&want) {
            prop_assert!((a - b).abs() < 1e-9, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn bhs_is_more_ethical_than_wei(p in probs(3..=5)) {
        let vw = wei_model(&p).unwrap().v_star().unwrap();
        let vb = bhs(&p).v_star().unwrap();
        for i in 0..p.len() {
            for j in 0..p.len() {
                if p[i] > p[j] + 1e-6 {
                    prop_assert!(vw[i] / vw[j] > 1.0);
                    prop_assert!(vb[i] / vb[j] > vw[i] / vw[j]);
                }
            }
        }
    }

    #[test]
    fn extended_jacobian_determinant_reduces_to_shifted_generator(p in probs(2..=4)) {
        let m = bhs(&p);
        let v = m.v_star().unwrap();
        let a = shifted_generator(m.limit_h(), &v).determinant().unwrap();
        let b = dh_tilde_star(m.limit_h(), &v, &p).unwrap().determinant().unwrap();
        prop_assert!((a - b).abs() <= 1e-8 * a.abs(), "{a} vs {b}");
    }

    #[test]
    fn limit_covariance_solves_its_lyapunov_equation(p in probs(2..=4)) {
        let b = asymptotics(&wei_model(&p).unwrap()).unwrap();
        if let Some(sigma) = &b.sigma {
            let m = &b.dh_star - &Matrix::identity(b.dh_star.rows()).scale(0.5);
            prop_assert!(lyapunov_residual(&m, sigma, &b.gamma) <= 1e-9 * b.gamma.frobenius_norm());
            prop_assert!(sigma.is_symmetric(1e-12));
            prop_assert!(min_symmetric_eigenvalue(sigma).unwrap() >= -1e-10 * sigma.frobenius_norm());
        }
    }

    #[test]
    fn sa_identity_holds_along_paths(p in probs(2..=4), seed in any::<u64>(), wei in any::<bool>()) {
        let m = if wei { wei_model(&p).unwrap() } else { bhs(&p) };
        let mut rng = stream_rng(seed, 0);
        let mut state = UrnState::initial(&m);
        for _ in 0..200 {
            let pre = state.clone();
            let u = uniform_open_closed(&mut rng);
            let arm = draw(&state.y, u).unwrap();
            let response = m.sample_response(arm, &mut rng);
            let rec = state.step(&m, u, response).unwrap();
            prop_assert_eq!(rec.drawn_arm, arm);
            if pre.n >= 1 {
                prop_assert!(sa_decompose(&rec, &pre, &m).is_ok());
            }
            let total: f64 = state.y.iter().sum();
            prop_assert!((total - (state.w0 + state.n as f64)).abs() <= 1e-12 * total);
        }
    }

    #[test]
    fn replication_streams_do_not_depend_on_scheduling(seed in any::<u64>(), workers in 1usize..5) {
        let m = wei_model(&[0.4, 0.8]).unwrap();
        let cps = [10, 50];
        let all = map_replications(9, Some(workers), |r| run_path(&m, seed, r, 50, &cps).unwrap()).unwrap();
        for r in [0u64, 4, 8] {
            prop_assert_eq!(&all[r as usize], &run_path(&m, seed, r, 50, &cps).unwrap());
        }
    }
}

#[test]
fn simulator_frequencies_match_exact_law() {
    let m = bhs_model(&[0.35, 0.8], &[0.5, 0.5]).unwrap();
    let n = 3;
    let law = enumerate_exact(&m, n, Arithmetic::Rational).unwrap();
    let paths = 40_000;
    let ends = map_replications(paths, None, |r| run_path(&m, 11, r, n, &[n]).unwrap()).unwrap();
    let key = |y: &[f64]| y.iter().map(|x| (x * 1e9).round() as i64).collect::<Vec<_>>();
    for o in &law.outcomes {
        let hits = ends
            .iter()
            .filter(|c| {
                let c = &c[0];
                key(&c.y) == key(&o.y) && c.counts == o.counts && c.successes == o.successes
            })
            .count();
        let f = hits as f64 / paths as f64;
        let se = (o.prob * (1.0 - o.prob) / paths as f64).sqrt();
        assert!((f - o.prob).abs() <= 4.5 * se, "{o:?}: frequency {f}");
    }
    let mass: f64 = law.outcomes.iter().map(|o| o.prob).sum();
    assert!((mass - 1.0).abs() < 1e-14);
}
