use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vertical_cure::glm::{fit_multinomial, fit_weighted_binary, LinkFunction, NewtonOptions};

const LINKS: [LinkFunction; 3] = [LinkFunction::Logit, LinkFunction::Cloglog, LinkFunction::Probit];

fn binary_objective(x: &DMatrix<f64>, y: &[f64], w: &[f64], link: LinkFunction, b: &[f64]) -> f64 {
    (0..x.nrows())
        .map(|i| {
            let s: f64 = (0..b.len()).map(|k| x[(i, k)] * b[k]).sum();
            let p: f64 = link.inverse(s);
            w[i] * (y[i] * p.ln() + (1.0 - y[i]) * (1.0 - p).ln())
        })
        .sum()
}

fn random_design(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, 2, |_, c| if c == 0 { 1.0 } else { rng.random_range(-2.0..2.0) })
}

#[test]
fn integer_weights_equal_replicated_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 30;
    let x = random_design(&mut rng, n);
    let y: Vec<f64> = (0..n).map(|i| f64::from(u8::from(x[(i, 1)] + rng.random_range(-1.5..1.5) > 0.0))).collect();
    let w: Vec<u32> = (0..n).map(|_| rng.random_range(1..4)).collect();
    let rows: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, w[i] as usize)).collect();
    let xr = DMatrix::from_fn(rows.len(), 2, |r, c| x[(rows[r], c)]);
    let yr: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
    for link in LINKS {
        let wf: Vec<f64> = w.iter().map(|&v| f64::from(v)).collect();
        let a = fit_weighted_binary(&x, &y, &wf, link, None, NewtonOptions::default()).unwrap();
        let b = fit_weighted_binary(&xr, &yr, &vec![1.0; rows.len()], link, None, NewtonOptions::default()).unwrap();
        for (u, v) in a.coefficients.iter().zip(&b.coefficients) {
            assert!((u - v).abs() < 1e-8, "{link:?}: {u} vs {v}");
        }
        let (sa, sb) = (a.standard_errors(), b.standard_errors());
        for (u, v) in sa.iter().zip(&sb) {
            assert!((u - v).abs() < 1e-8);
        }
    }
}

#[test]
fn fractional_fit_is_a_maximum() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 40;
    let x = random_design(&mut rng, n);
    let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..2.0)).collect();
    for link in LINKS {
        let fit = fit_weighted_binary(&x, &y, &w, link, None, NewtonOptions::default()).unwrap();
        assert!(fit.converged);
        let b = &fit.coefficients;
        let best = binary_objective(&x, &y, &w, link, b);
        for k in 0..2 {
            for d in [-1e-3, 1e-3] {
                let mut c = b.clone();
                c[k] += d;
                assert!(binary_objective(&x, &y, &w, link, &c) < best);
            }
            let h = 1e-6;
            let mut up = b.clone();
            up[k] += h;
            let mut dn = b.clone();
            dn[k] -= h;
            let g = (binary_objective(&x, &y, &w, link, &up) - binary_objective(&x, &y, &w, link, &dn)) / (2.0 * h);
            assert!(g.abs() < 1e-6, "{link:?} score {g}");
        }
    }
}

#[test]
fn two_cause_multinomial_matches_binary_logit() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 50;
    let x = random_design(&mut rng, n);
    let labels: Vec<u32> = (0..n)
        .map(|i| if rng.random::<f64>() < 1.0 / (1.0 + (-(0.4 - 0.7 * x[(i, 1)])).exp()) { 1 } else { 2 })
        .collect();
    let m = fit_multinomial(&x, &labels, 2, NewtonOptions::default()).unwrap();
    let y: Vec<f64> = labels.iter().map(|&d| f64::from(u8::from(d == 1))).collect();
    let b = fit_weighted_binary(&x, &y, &vec![1.0; n], LinkFunction::Logit, None, NewtonOptions::default()).unwrap();
    for k in 0..2 {
        assert!((m.eta[(0, k)] - b.coefficients[k]).abs() < 1e-8);
        assert_eq!(m.eta[(1, k)], 0.0);
    }
}

#[test]
fn multinomial_beats_intercept_only() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 80;
    let x = random_design(&mut rng, n);
    let labels: Vec<u32> = (0..n).map(|i| 1 + ((x[(i, 1)] + rng.random_range(-1.0..1.0)) > 0.0) as u32 + (rng.random::<f64>() < 0.3) as u32).collect();
    let full = fit_multinomial(&x, &labels, 3, NewtonOptions::default()).unwrap();
    let ones = DMatrix::from_element(n, 1, 1.0);
    let null = fit_multinomial(&ones, &labels, 3, NewtonOptions::default()).unwrap();
    assert!(full.loglik >= null.loglik);
    for i in 0..n {
        let p = full.probabilities(&[x[(i, 0)], x[(i, 1)]]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn multinomial_penrose_conditions(seed in 0u64..10_000, j in 2u32..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 60;
        let x = random_design(&mut rng, n);
        let mut labels: Vec<u32> = (0..n).map(|_| rng.random_range(1..=j)).collect();
        for (c, l) in labels.iter_mut().take(j as usize).enumerate() {
            *l = c as u32 + 1;
        }
        let fit = fit_multinomial(&x, &labels, j, NewtonOptions::default()).unwrap();
        prop_assume!(!fit.diverged);
        let a = &fit.information;
        let g = &fit.pseudo_inverse;
        let scale = 1.0 + a.amax();
        prop_assert!((a * g * a - a).amax() < 1e-8 * scale);
        prop_assert!((g * a * g - g).amax() < 1e-8 * (1.0 + g.amax()));
        prop_assert!(((a * g).transpose() - a * g).amax() < 1e-8);
        prop_assert!(((g * a).transpose() - g * a).amax() < 1e-8);
    }
}
