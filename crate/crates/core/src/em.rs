//! EM estimation of the mixture cure model (VMCF) and the cure-free vertical
//! model (VM).

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{build_time_basis, BasisSpec, Dataset, DesignMap, EventTable};
use crate::error::{Error, Result};
use crate::glm::{fit_weighted_binary, GlmFit, LinkFunction, NewtonOptions};
use crate::latency::{fit_weighted_cox, weighted_breslow, BaselineHazard, CoxFit};
use crate::relhaz::RelativeHazardModel;

/// Number of jittered restarts when [`EmOptions::restarts`] is set.
pub const RESTARTS: usize = 5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Vmcf,
    Vm,
}

/// Starting values for the EM.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// `γ = 0`, unweighted Breslow baseline.
    #[default]
    Default,
    /// `γ` from a Cox fit restricted to the failures (censored weights 0),
    /// baseline from the same weights.
    EventsOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmOptions {
    pub tol_param: f64,
    pub tol_loglik: f64,
    pub max_iter: usize,
    pub init: InitStrategy,
    pub restarts: bool,
    pub restart_seed: u64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            tol_param: 1e-7,
            tol_loglik: 1e-7,
            max_iter: 500,
            init: InitStrategy::Default,
            restarts: false,
            restart_seed: 0,
        }
    }
}

fn default_basis() -> BasisSpec {
    BasisSpec::quartiles()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub link: LinkFunction,
    pub design: DesignMap,
    #[serde(default = "default_basis")]
    pub basis: BasisSpec,
    #[serde(default)]
    pub em: EmOptions,
}

impl ModelSpec {
    pub fn new(mode: Mode, design: DesignMap, basis: BasisSpec) -> Self {
        ModelSpec {
            mode,
            link: LinkFunction::Logit,
            design,
            basis,
            em: EmOptions::default(),
        }
    }
}

/// Design matrices and event structure shared by the EM and the variance code.
#[derive(Debug, Clone)]
pub struct CureData {
    /// Incidence design with a leading intercept column.
    pub x: DMatrix<f64>,
    /// Latency design (no intercept).
    pub z: DMatrix<f64>,
    pub table: EventTable,
    pub times: Vec<f64>,
    pub is_event: Vec<bool>,
}

impl CureData {
    pub fn new(dataset: &Dataset, design: &DesignMap) -> Result<Self> {
        Ok(CureData {
            x: dataset.design_matrix(&design.incidence, true)?,
            z: dataset.design_matrix(&design.latency, false)?,
            table: EventTable::from_dataset(dataset)?,
            times: dataset.times(),
            is_event: dataset.subjects.iter().map(|s| s.status > 0).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn incidence_prob(&self, beta: &[f64], link: LinkFunction, i: usize) -> f64 {
        let s: f64 = (0..beta.len()).map(|k| beta[k] * self.x[(i, k)]).sum();
        link.inverse(s)
    }

    pub fn latency_lp(&self, gamma: &[f64], i: usize) -> f64 {
        (0..gamma.len()).map(|k| gamma[k] * self.z[(i, k)]).sum()
    }
}

/// Conditional survival entering the censored likelihood terms and the
/// E-step: under the zero tail, subjects censored at or beyond `t_K` have
/// outlived every failure and get `S = 0`.
pub fn censored_survival(baseline: &BaselineHazard<f64>, t: f64, lp: f64) -> f64 {
    if baseline.zero_tail && !baseline.is_empty() && t >= baseline.last_time() {
        0.0
    } else {
        baseline.survival(t, lp)
    }
}

/// Posterior susceptibility `p S / (p S + 1 - p)`.
pub fn posterior_weight(p: f64, s: f64) -> f64 {
    let num = p * s;
    let den = num + 1.0 - p;
    if den > 0.0 {
        num / den
    } else {
        1.0
    }
}

/// E-step weights: 1 for failures, the posterior for censored subjects.
pub fn e_step(
    beta: &[f64],
    gamma: &[f64],
    baseline: &BaselineHazard<f64>,
    data: &CureData,
    link: LinkFunction,
) -> Vec<f64> {
    (0..data.len())
        .map(|i| {
            if data.is_event[i] {
                1.0
            } else {
                let p = data.incidence_prob(beta, link, i);
                let s = censored_survival(baseline, data.times[i], data.latency_lp(gamma, i));
                posterior_weight(p, s)
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct MStep {
    pub incidence: GlmFit,
    pub latency: CoxFit,
}

impl MStep {
    pub fn separated(&self) -> bool {
        self.incidence.separated
    }
}

/// M-step: fractional-response incidence GLM and weighted Cox, each started
/// from the current values.
pub fn m_step(
    weights: &[f64],
    data: &CureData,
    link: LinkFunction,
    beta: &[f64],
    gamma: &[f64],
) -> Result<MStep> {
    let ones = vec![1.0; data.len()];
    let incidence = fit_weighted_binary(
        &data.x,
        weights,
        &ones,
        link,
        Some(beta),
        NewtonOptions::default(),
    )?;
    let latency = fit_weighted_cox(
        weights,
        &data.table,
        &data.z,
        Some(gamma),
        true,
        NewtonOptions::default(),
    )?;
    Ok(MStep { incidence, latency })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLik {
    pub l1: f64,
    pub l2: f64,
    pub total: f64,
}

/// `log L1` of the incidence/latency factor. `beta = None` fixes `p = 1`.
pub fn loglik_l1(
    beta: Option<&[f64]>,
    gamma: &[f64],
    baseline: &BaselineHazard<f64>,
    data: &CureData,
    link: LinkFunction,
) -> f64 {
    let mut total = 0.0;
    for i in 0..data.len() {
        let p = beta.map_or(1.0, |b| data.incidence_prob(b, link, i));
        let lp = data.latency_lp(gamma, i);
        let t = data.times[i];
        if data.is_event[i] {
            let jump = baseline.jump_at(t);
            total += p.ln() + jump.ln() + lp - baseline.cumulative(t) * lp.exp();
        } else {
            let s = censored_survival(baseline, t, lp);
            total += if beta.is_some() { (p * s + 1.0 - p).ln() } else { s.ln() };
        }
    }
    total
}

/// `log L2 = sum_{failures} log π_{D_i}(t_i | U_i)`.
pub fn loglik_l2(relhaz: &RelativeHazardModel, dataset: &Dataset) -> Result<f64> {
    let cols = dataset.column_indices(&relhaz.u_columns)?;
    Ok(dataset
        .subjects
        .iter()
        .filter(|s| s.status > 0)
        .map(|s| {
            let u: Vec<f64> = cols.iter().map(|&c| s.covariates[c]).collect();
            let p: Vec<f64> = relhaz.pi(s.time, &u);
            p[s.status as usize - 1].ln()
        })
        .sum())
}

pub fn observed_loglik(
    beta: Option<&[f64]>,
    gamma: &[f64],
    baseline: &BaselineHazard<f64>,
    relhaz: &RelativeHazardModel,
    dataset: &Dataset,
    data: &CureData,
    link: LinkFunction,
) -> Result<LogLik> {
    let l1 = loglik_l1(beta, gamma, baseline, data, link);
    let l2 = loglik_l2(relhaz, dataset)?;
    Ok(LogLik { l1, l2, total: l1 + l2 })
}

/// Iterate of the EM.
#[derive(Debug, Clone)]
pub struct EmState {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub baseline: BaselineHazard<f64>,
    pub weights: Vec<f64>,
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub separated: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub spec: ModelSpec,
    /// Incidence coefficients, intercept first; empty in VM mode.
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub relhaz: RelativeHazardModel,
    pub baseline: BaselineHazard<f64>,
    pub weights: Vec<f64>,
    pub loglik: LogLik,
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub separated: bool,
}

impl FitResult {
    pub fn mode(&self) -> Mode {
        self.spec.mode
    }

    pub fn is_cure_model(&self) -> bool {
        self.spec.mode == Mode::Vmcf
    }

    /// Names of the incidence coefficients, intercept first.
    pub fn incidence_names(&self) -> Vec<String> {
        let mut names = vec!["Intercept".to_string()];
        names.extend(self.spec.design.incidence.iter().cloned());
        names
    }
}

/// Fits the model selected by `spec.mode`.
pub fn fit_model(dataset: &Dataset, spec: &ModelSpec) -> Result<FitResult> {
    match spec.mode {
        Mode::Vmcf => fit_vmcf(dataset, spec),
        Mode::Vm => fit_vm(dataset, spec),
    }
}

fn fit_relhaz(dataset: &Dataset, spec: &ModelSpec) -> Result<RelativeHazardModel> {
    let basis = build_time_basis(&spec.basis, dataset)?;
    RelativeHazardModel::fit(dataset, basis, &spec.design.relhaz)
}

pub fn fit_vm(dataset: &Dataset, spec: &ModelSpec) -> Result<FitResult> {
    let data = CureData::new(dataset, &spec.design)?;
    let weights = vec![1.0; data.len()];
    let cox = fit_weighted_cox(
        &weights,
        &data.table,
        &data.z,
        None,
        false,
        NewtonOptions::default(),
    )?;
    let relhaz = fit_relhaz(dataset, spec)?;
    let loglik = observed_loglik(
        None,
        &cox.gamma,
        &cox.baseline,
        &relhaz,
        dataset,
        &data,
        spec.link,
    )?;
    Ok(FitResult {
        spec: ModelSpec {
            mode: Mode::Vm,
            ..spec.clone()
        },
        beta: Vec::new(),
        gamma: cox.gamma,
        relhaz,
        baseline: cox.baseline,
        weights,
        loglik,
        loglik_trace: vec![loglik.l1],
        converged: cox.converged,
        iterations: cox.iterations,
        separated: false,
    })
}

pub fn fit_vmcf(dataset: &Dataset, spec: &ModelSpec) -> Result<FitResult> {
    let data = CureData::new(dataset, &spec.design)?;
    if data.is_event.iter().all(|&e| e) {
        return Err(Error::NoCensoring);
    }
    let mut state = run_em(&data, spec.link, &spec.em, None)?;
    if spec.em.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.em.restart_seed);
        for _ in 0..RESTARTS {
            let jitter: Vec<f64> = (0..data.x.ncols() + data.z.ncols())
                .map(|_| rng.random_range(-0.5..0.5))
                .collect();
            if let Ok(alt) = run_em(&data, spec.link, &spec.em, Some(&jitter)) {
                let better = alt.loglik_trace.last() > state.loglik_trace.last();
                if better && (alt.converged || !state.converged) {
                    state = alt;
                }
            }
        }
    }
    let relhaz = fit_relhaz(dataset, spec)?;
    let loglik = observed_loglik(
        Some(&state.beta),
        &state.gamma,
        &state.baseline,
        &relhaz,
        dataset,
        &data,
        spec.link,
    )?;
    Ok(FitResult {
        spec: ModelSpec {
            mode: Mode::Vmcf,
            ..spec.clone()
        },
        beta: state.beta,
        gamma: state.gamma,
        relhaz,
        baseline: state.baseline,
        weights: state.weights,
        loglik,
        loglik_trace: state.loglik_trace,
        converged: state.converged,
        iterations: state.iterations,
        separated: state.separated,
    })
}

/// Starting point `(β⁰, γ⁰, Λ⁰)`; `jitter` perturbs `(β⁰, γ⁰)`.
fn initial_state(
    data: &CureData,
    link: LinkFunction,
    init: InitStrategy,
    jitter: Option<&[f64]>,
) -> Result<(Vec<f64>, Vec<f64>, BaselineHazard<f64>)> {
    let indicator: Vec<f64> = data.is_event.iter().map(|&e| f64::from(u8::from(e))).collect();
    let ones = vec![1.0; data.len()];
    let mut beta = fit_weighted_binary(&data.x, &indicator, &ones, link, None, NewtonOptions::default())?
        .coefficients;
    let (mut gamma, base_weights) = match init {
        InitStrategy::Default => (vec![0.0; data.z.ncols()], ones),
        InitStrategy::EventsOnly => {
            let cox = fit_weighted_cox(
                &indicator,
                &data.table,
                &data.z,
                None,
                true,
                NewtonOptions::default(),
            )?;
            (cox.gamma, indicator)
        }
    };
    if let Some(j) = jitter {
        let (jb, jg) = j.split_at(beta.len());
        beta.iter_mut().zip(jb).for_each(|(b, d)| *b += d);
        gamma.iter_mut().zip(jg).for_each(|(g, d)| *g += d);
    }
    let baseline = weighted_breslow(&gamma, &base_weights, &data.table, &data.z, true)?;
    Ok((beta, gamma, baseline))
}

/// Runs the EM from the configured starting values.
pub fn run_em(
    data: &CureData,
    link: LinkFunction,
    opts: &EmOptions,
    jitter: Option<&[f64]>,
) -> Result<EmState> {
    let (mut beta, mut gamma, mut baseline) = initial_state(data, link, opts.init, jitter)?;
    let mut trace = vec![loglik_l1(Some(&beta), &gamma, &baseline, data, link)];
    let mut weights = e_step(&beta, &gamma, &baseline, data, link);
    let mut converged = false;
    let mut separated = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let step = m_step(&weights, data, link, &beta, &gamma)?;
        separated = step.separated();
        let shift = beta
            .iter()
            .zip(&step.incidence.coefficients)
            .chain(gamma.iter().zip(&step.latency.gamma))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        beta = step.incidence.coefficients;
        gamma = step.latency.gamma;
        baseline = step.latency.baseline;
        let ll = loglik_l1(Some(&beta), &gamma, &baseline, data, link);
        let prev = *trace.last().expect("trace starts non-empty");
        trace.push(ll);
        weights = e_step(&beta, &gamma, &baseline, data, link);
        let rel = (ll - prev).abs() / ll.abs().max(f64::MIN_POSITIVE);
        if shift < opts.tol_param && rel < opts.tol_loglik {
            converged = true;
            break;
        }
    }
    Ok(EmState {
        beta,
        gamma,
        baseline,
        weights,
        loglik_trace: trace,
        converged,
        iterations,
        separated,
    })
}
