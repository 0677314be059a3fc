mod common;

use proptest::prelude::*;
use vertical_cure::data::{BasisSpec, DesignMap, EventTable};
use vertical_cure::em::{fit_model, CureData, FitResult, Mode, ModelSpec};
use vertical_cure::predict::PredictionProfile;
use vertical_cure::variance::{
    block_expansion, bootstrap_covariance, cif_delta, delta_cumhaz_covariance, information_blocks, omega,
    stack_index, BootstrapOptions, L1Objective, MIN_REPLICATES,
};
use vertical_cure::latency::weighted_partial_loglik;
use vertical_cure::Error;

fn latency_free_spec(mode: Mode) -> ModelSpec {
    ModelSpec::new(
        mode,
        DesignMap {
            incidence: if mode == Mode::Vmcf { vec!["x1".into()] } else { Vec::new() },
            latency: Vec::new(),
            relhaz: vec!["x2".into()],
        },
        BasisSpec::Constant,
    )
}

fn fit_latency_free(seed: u64, n: usize, mode: Mode) -> (FitResult, vertical_cure::data::Dataset) {
    let data = common::random_cure_data(seed, n);
    let fit = fit_model(&data, &latency_free_spec(mode)).unwrap();
    (fit, data)
}

#[test]
fn relative_hazard_pseudo_inverse_on_melanoma() {
    let (cfg, data) = common::melanoma("melanoma_vmcf.json");
    let fit = fit_model(&data, &cfg.model).unwrap();
    let a = &fit.relhaz.fit.information;
    let g = &fit.relhaz.fit.pseudo_inverse;
    let scale = 1.0 + a.amax();
    assert!((a * g * a - a).amax() < 1e-8 * scale);
    assert!((g * a * g - g).amax() < 1e-8 * (1.0 + g.amax()));
    assert!(((a * g).transpose() - a * g).amax() < 1e-8);
    assert!(((g * a).transpose() - g * a).amax() < 1e-8);
}

proptest! {
    #[test]
    fn omega_rows_sum_to_zero(raw in prop::collection::vec(0.01f64..1.0, 2..6)) {
        let total: f64 = raw.iter().sum();
        let pi: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let om = omega(&pi);
        for r in 0..pi.len() {
            prop_assert!(om.row(r).sum().abs() < 1e-15);
            prop_assert!((om[(r, r)] - pi[r] * (1.0 - pi[r])).abs() < 1e-15);
        }
        prop_assert_eq!(om.transpose(), om.clone());
    }
}

#[test]
fn cumulative_hazard_covariance_matches_block_expansion() {
    for mode in [Mode::Vm, Mode::Vmcf] {
        let (fit, data) = fit_latency_free(3, 150, mode);
        let blocks = information_blocks(&fit, &data).unwrap();
        for u in [0.0, 1.0] {
            let cov = delta_cumhaz_covariance(&fit, &blocks, &[u]).unwrap();
            let jn = cov.num_causes;
            let kn = cov.event_times.len();
            let xi = &cov.xi_lambda;
            assert_eq!(xi.nrows(), kn * jn);
            assert!((xi - xi.transpose()).amax() == 0.0);
            let eig = xi.clone().symmetric_eigen().eigenvalues;
            assert!(eig.min() > -1e-10 * xi.amax(), "min eigenvalue {}", eig.min());
            for k in (0..kn).step_by(7) {
                for l in (0..kn).step_by(5) {
                    let want = block_expansion(&cov, &blocks, k, l);
                    for a in 0..jn {
                        for b in 0..jn {
                            let got = xi[(stack_index(k, a, jn), stack_index(l, b, jn))];
                            assert!((got - want[(a, b)]).abs() <= 1e-10 * (1.0 + want[(a, b)].abs()));
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn latency_covariates_are_rejected_by_the_closed_form() {
    let data = common::random_cure_data(3, 150);
    let fit = fit_model(&data, &common::cure_spec(Mode::Vmcf)).unwrap();
    let blocks = information_blocks(&fit, &data).unwrap();
    assert!(matches!(delta_cumhaz_covariance(&fit, &blocks, &[1.0]), Err(Error::LatencyCovariatesPresent)));
}

#[test]
fn closed_form_cif_se_agrees_with_numerical_delta() {
    for mode in [Mode::Vm, Mode::Vmcf] {
        let (fit, data) = fit_latency_free(5, 200, mode);
        let blocks = information_blocks(&fit, &data).unwrap();
        let mut profile = PredictionProfile::new([("x2", 1.0)]);
        if mode == Mode::Vmcf {
            profile = profile.with("x1", 0.3);
        }
        let resolved = profile.resolve(&fit).unwrap();
        let cov = delta_cumhaz_covariance(&fit, &blocks, &resolved.u).unwrap();
        for t in [0.5, 1.0, 2.0, 4.0] {
            let closed = cov.cif_se(t);
            let numeric = cif_delta(&fit, &blocks, &resolved, t);
            for (a, b) in closed.iter().zip(&numeric.conditional_se) {
                assert!((a - b).abs() <= 1e-5 * b.max(1e-3), "{mode:?} t={t}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn single_event_time() {
    let csv = "id,time,status,x1,x2\n1,1.0,1,0.1,0\n2,1.0,2,-0.4,1\n3,1.0,1,0.7,1\n4,2.0,0,0.2,0\n5,3.0,0,-1.0,1\n6,0.5,0,0.3,0\n";
    let schema = vertical_cure::data::DataSchema::identity(2, &["x1".into(), "x2".into()]);
    let data = vertical_cure::data::parse_dataset(csv.as_bytes(), &schema).unwrap();
    let mut spec = latency_free_spec(Mode::Vm);
    spec.design.relhaz = Vec::new();
    let fit = fit_model(&data, &spec).unwrap();
    assert_eq!(fit.baseline.len(), 1);
    let blocks = information_blocks(&fit, &data).unwrap();
    let cov = delta_cumhaz_covariance(&fit, &blocks, &[]).unwrap();
    // dΛ = 3/5 with variance 3/25; π = (2/3, 1/3)
    assert!((cov.cumhaz[0] - 0.4).abs() < 1e-8);
    assert!((cov.cumhaz[1] - 0.2).abs() < 1e-8);
    assert!((blocks.xi_dlambda()[(0, 0)] - 3.0 / 25.0).abs() < 1e-6);
    let want = block_expansion(&cov, &blocks, 0, 0);
    assert!((&cov.xi_lambda - want).amax() < 1e-12);
}

#[test]
fn cure_free_gamma_block_equals_partial_likelihood_inverse() {
    let data = common::random_cure_data(8, 200);
    let fit = fit_model(&data, &common::cure_spec(Mode::Vm)).unwrap();
    let blocks = information_blocks(&fit, &data).unwrap();
    let cols = ["x1".to_string(), "x2".to_string()];
    let z = data.design_matrix(&cols, false).unwrap();
    let table = EventTable::from_dataset(&data).unwrap();
    let pl = weighted_partial_loglik(&fit.gamma, &vec![1.0; data.len()], &table, &z).unwrap();
    let pl_inv = pl.information.clone().try_inverse().unwrap();
    let got = blocks.xi_gamma();
    for a in 0..2 {
        for b in 0..2 {
            assert!((got[(a, b)] - pl_inv[(a, b)]).abs() <= 1e-5 * pl_inv[(a, a)], "{got} vs {pl_inv}");
        }
    }
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let data = common::random_cure_data(12, 80);
    for mode in [Mode::Vm, Mode::Vmcf] {
        let spec = common::cure_spec(mode);
        let fit = fit_model(&data, &spec).unwrap();
        let cd = CureData::new(&data, &spec.design).unwrap();
        let obj = L1Objective::new(&cd, spec.link, fit.is_cure_model(), fit.baseline.zero_tail);
        let mut theta = obj.pack(&fit);
        // move away from the maximum so the gradient is not zero
        for (i, v) in theta.iter_mut().enumerate() {
            *v *= 1.0 + 0.05 * ((i % 3) as f64 - 1.0);
        }
        let grad = obj.gradient(&theta);
        for k in 0..theta.len() {
            let h = 1e-6 * theta[k].abs().max(1e-2);
            let mut up = theta.clone();
            up[k] += h;
            let mut dn = theta.clone();
            dn[k] -= h;
            let fd = (obj.value(&up) - obj.value(&dn)) / (2.0 * h);
            assert!((fd - grad[k]).abs() <= 1e-5 * grad[k].abs().max(1.0), "{mode:?} k={k}: {fd} vs {}", grad[k]);
        }
        let info = obj.information(&obj.pack(&fit));
        assert!(info.clone().cholesky().is_some());
        assert_eq!(info.clone(), info.transpose());
    }
}

fn gamma_functional(fit: &FitResult, _: &vertical_cure::data::Dataset) -> vertical_cure::Result<Vec<f64>> {
    Ok(fit.gamma.clone())
}

#[test]
fn bootstrap_is_deterministic() {
    let data = common::random_cure_data(4, 100);
    let spec = common::cure_spec(Mode::Vm);
    let mut fixed = BootstrapOptions::new(MIN_REPLICATES, 9);
    fixed.resample = false;
    let same = bootstrap_covariance(&data, &spec, fixed, gamma_functional).unwrap();
    assert_eq!(same.used, MIN_REPLICATES);
    let fit = fit_model(&data, &spec).unwrap();
    for (k, g) in fit.gamma.iter().enumerate() {
        assert!(same.standard_errors[k] < 1e-12);
        assert!((same.mean[k] - g).abs() < 1e-12);
    }

    let a = bootstrap_covariance(&data, &spec, BootstrapOptions::new(MIN_REPLICATES, 9), gamma_functional).unwrap();
    let b = bootstrap_covariance(&data, &spec, BootstrapOptions::new(MIN_REPLICATES, 9), gamma_functional).unwrap();
    let c = bootstrap_covariance(&data, &spec, BootstrapOptions::new(MIN_REPLICATES, 10), gamma_functional).unwrap();
    assert_eq!(a.covariance, b.covariance);
    assert_eq!(a.mean, b.mean);
    assert_ne!(a.mean, c.mean);
    assert!(a.standard_errors.iter().all(|&s| s > 0.0));
}

#[test]
fn too_few_replicates_are_rejected() {
    let data = common::random_cure_data(4, 60);
    let err = bootstrap_covariance(&data, &common::cure_spec(Mode::Vm), BootstrapOptions::new(MIN_REPLICATES - 1, 1), gamma_functional)
        .unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)));
}
