#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use vertical_cure::config::RunConfig;
use vertical_cure::data::{BasisSpec, Dataset, DesignMap, Subject};
use vertical_cure::em::{FitResult, Mode, ModelSpec};
use vertical_cure::predict::PredictionProfile;

pub fn repo_data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn melanoma(config: &str) -> (RunConfig, Dataset) {
    let cfg = RunConfig::load(&repo_data(config)).expect("config");
    let data = cfg.load_data(&repo_data("melanoma.csv")).expect("data");
    (cfg, data)
}

/// Ulcerated patient with mean thickness, age and year.
pub fn melanoma_profile(data: &Dataset, sex: f64) -> PredictionProfile {
    let means = data.covariate_means();
    PredictionProfile::new(["thickness", "age", "year"].map(|k| (k, means[k])))
        .with("ulcer", 1.0)
        .with("sex", sex)
}

/// Two-cause data with a cured fraction, covariates `x1` (normal) and
/// `x2` (binary), uniform censoring.
pub fn random_cure_data(seed: u64, n: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let subjects = (0..n)
        .map(|i| {
            let x1: f64 = rng.sample(StandardNormal);
            let x2 = f64::from(u8::from(rng.random::<f64>() < 0.5));
            let p = 1.0 / (1.0 + (-(0.3 + 0.8 * x1)).exp());
            let susceptible = rng.random::<f64>() < p;
            let rate = 0.5 * (0.4 * x1 - 0.5 * x2).exp();
            let t = -rng.random::<f64>().ln() / rate;
            let c = rng.random_range(1.0..6.0);
            let cause = if rng.random::<f64>() < 0.35 + 0.3 * x2 { 1 } else { 2 };
            let (time, status) = if susceptible && t <= c { (t, cause) } else { (c, 0) };
            Subject {
                id: i.to_string(),
                time,
                status,
                covariates: vec![x1, x2],
            }
        })
        .collect();
    Dataset::new(subjects, 2, vec!["x1".into(), "x2".into()]).expect("dataset")
}

pub fn cure_spec(mode: Mode) -> ModelSpec {
    let both = vec!["x1".to_string(), "x2".to_string()];
    ModelSpec::new(
        mode,
        DesignMap {
            incidence: if mode == Mode::Vmcf { both.clone() } else { Vec::new() },
            latency: both,
            relhaz: vec!["x2".into()],
        },
        BasisSpec::Constant,
    )
}

/// First violation of the mixture, additivity or log-hazard-ratio identity
/// at any event time of a fitted model, if any.
pub fn identity_violation(fit: &FitResult, a: &PredictionProfile, b: &PredictionProfile, tol: f64) -> Option<String> {
    use vertical_cure::predict::{marginal_log_hr, Predictor};
    let pa = Predictor::new(fit, a).expect("profile a");
    let pb = Predictor::new(fit, b).expect("profile b");
    let t_k = fit.baseline.last_time();
    for &t in &fit.baseline.event_times {
        for pred in [&pa, &pb] {
            let s = pred.conditional_survival(t);
            let mix = pred.population_survival(t) - (1.0 - pred.incidence());
            if (mix - pred.incidence() * s).abs() > tol {
                return Some(format!("mixture at {t}"));
            }
            if t <= t_k {
                let f: f64 = pred.cif_conditional(t).iter().sum();
                if (f + s - 1.0).abs() > tol {
                    return Some(format!("additivity at {t}: {}", f + s - 1.0));
                }
            }
        }
        let ha = pa.population_hazard(t);
        let hb = pb.population_hazard(t);
        if ha > 0.0 && hb > 0.0 {
            let lhs = marginal_log_hr(&pa, &pb, t);
            let rhs = (ha / hb).ln();
            if (lhs - rhs).abs() > tol * (1.0 + rhs.abs()) {
                return Some(format!("log HR at {t}: {lhs} vs {rhs}"));
            }
        }
    }
    None
}

pub fn check_identities(fit: &FitResult, a: &PredictionProfile, b: &PredictionProfile, tol: f64) {
    if let Some(v) = identity_violation(fit, a, b, tol) {
        panic!("{v}");
    }
}

/// Observed log-likelihood of the full model written out subject by
/// subject, without the L1/L2 split.
pub fn direct_loglik(fit: &FitResult, data: &Dataset) -> f64 {
    let design = &fit.spec.design;
    let xi = data.column_indices(&design.incidence).unwrap();
    let zi = data.column_indices(&design.latency).unwrap();
    let ui = data.column_indices(&design.relhaz).unwrap();
    let t_k = fit.baseline.last_time();
    data.subjects
        .iter()
        .map(|s| {
            let p = if fit.is_cure_model() {
                let lin = fit.beta[0] + xi.iter().zip(&fit.beta[1..]).map(|(&c, b)| b * s.covariates[c]).sum::<f64>();
                fit.spec.link.inverse(lin)
            } else {
                1.0
            };
            let lp: f64 = zi.iter().zip(&fit.gamma).map(|(&c, g)| g * s.covariates[c]).sum();
            let big_lambda = fit.baseline.cumulative(s.time) * lp.exp();
            if s.status > 0 {
                let u: Vec<f64> = ui.iter().map(|&c| s.covariates[c]).collect();
                let pi: Vec<f64> = fit.relhaz.pi(s.time, &u);
                (p * pi[s.status as usize - 1] * fit.baseline.jump_at(s.time) * lp.exp() * (-big_lambda).exp()).ln()
            } else {
                let surv = if fit.is_cure_model() && s.time >= t_k { 0.0 } else { (-big_lambda).exp() };
                if fit.is_cure_model() {
                    (1.0 - p + p * surv).ln()
                } else {
                    surv.ln()
                }
            }
        })
        .sum()
}
