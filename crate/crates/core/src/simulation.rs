//! Data generator and Monte Carlo harness for the mixture cure
//! competing-risks model with one normal covariate.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{BasisSpec, Dataset, DesignMap, Subject};
use crate::em::{fit_model, FitResult, Mode, ModelSpec};
use crate::error::{Error, Result};
use crate::predict::{PredictionProfile, Predictor};
use crate::rng::block_rng;
use crate::variance::{ci_for_cif, cif_delta, information_blocks, CifWithSe};

/// Name of the simulated covariate.
pub const COVARIATE: &str = "z";

fn default_horizons() -> Vec<f64> {
    vec![1.0, 2.0, 5.0, 7.0, 10.0]
}

fn default_profile() -> f64 {
    1.0
}

fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n: usize,
    pub beta0: f64,
    pub beta1: f64,
    pub gamma: f64,
    pub baseline_rate: f64,
    pub pi1: f64,
    pub censor_low: f64,
    pub censor_high: f64,
    /// Extra administrative censoring time, if any.
    #[serde(default)]
    pub admin_horizon: Option<f64>,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    /// Covariate value of the evaluated profile.
    #[serde(default = "default_profile")]
    pub profile_z: f64,
    #[serde(default = "default_level")]
    pub level: f64,
}

impl ScenarioConfig {
    /// The three incidence settings: `(β0, β1)` = (-0.62, 1.24), (-1.38, 0)
    /// and (1.38, 0).
    pub fn scenario(index: u8) -> Result<Self> {
        let (beta0, beta1) = match index {
            1 => (-0.62, 1.24),
            2 => (-1.38, 0.0),
            3 => (1.38, 0.0),
            _ => return Err(Error::InvalidArgument(format!("unknown scenario {index}"))),
        };
        Ok(ScenarioConfig {
            n: 500,
            beta0,
            beta1,
            gamma: 0.3,
            baseline_rate: 0.4,
            pi1: 0.25,
            censor_low: 7.0,
            censor_high: 15.0,
            admin_horizon: None,
            horizons: default_horizons(),
            replications: 1000,
            seed: 20_240_601,
            profile_z: 1.0,
            level: 0.95,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.replications < 1 {
            return bad("replications must be ≥ 1");
        }
        if self.n < 2 {
            return bad("n must be at least 2");
        }
        if !(self.pi1 > 0.0 && self.pi1 < 1.0) {
            return bad("pi1 must lie in (0, 1)");
        }
        if !(self.censor_low >= 0.0 && self.censor_low <= self.censor_high) {
            return bad("censoring bounds must satisfy 0 <= low <= high");
        }
        if !(self.baseline_rate > 0.0) {
            return bad("baseline_rate must be positive");
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad("level must lie in (0, 1)");
        }
        Ok(())
    }

    pub fn susceptible_probability(&self, z: f64) -> f64 {
        1.0 / (1.0 + (-(self.beta0 + self.beta1 * z)).exp())
    }

    /// Cure model fitted in each replication.
    pub fn vmcf_spec(&self) -> ModelSpec {
        let z = vec![COVARIATE.to_string()];
        ModelSpec::new(
            Mode::Vmcf,
            DesignMap {
                incidence: z.clone(),
                latency: z,
                relhaz: Vec::new(),
            },
            BasisSpec::Constant,
        )
    }

    /// Cure-free comparison model.
    pub fn vm_spec(&self) -> ModelSpec {
        ModelSpec::new(
            Mode::Vm,
            DesignMap {
                incidence: Vec::new(),
                latency: vec![COVARIATE.to_string()],
                relhaz: Vec::new(),
            },
            BasisSpec::Constant,
        )
    }
}

/// One simulated sample. Every subject draws, in order, `Z`, `Y`, `T̃`, the
/// cause and `C` from its own block of the `(seed, replication)` stream.
pub fn generate_dataset(config: &ScenarioConfig, replication: u64) -> Result<Dataset> {
    config.validate()?;
    let subjects = (0..config.n)
        .map(|i| {
            let mut rng = block_rng(config.seed, replication, i as u64);
            let z: f64 = rng.sample(StandardNormal);
            let y = rng.random::<f64>() < config.susceptible_probability(z);
            let e: f64 = rng.random::<f64>();
            let cause = if rng.random::<f64>() < config.pi1 { 1 } else { 2 };
            let mut c = rng.random_range(config.censor_low..=config.censor_high);
            if let Some(a) = config.admin_horizon {
                c = c.min(a);
            }
            let latent = if y {
                -(1.0 - e).ln() / (config.baseline_rate * (config.gamma * z).exp())
            } else {
                f64::INFINITY
            };
            let (time, status) = if latent <= c { (latent, cause) } else { (c, 0) };
            Subject {
                id: (i + 1).to_string(),
                time,
                status,
                covariates: vec![z],
            }
        })
        .collect();
    Dataset::new(subjects, 2, vec![COVARIATE.to_string()])
}

/// True cumulative incidences `F_j(t | Y = 1, z) = π_j (1 - exp(-λ0 e^{γz} t))`,
/// multiplied by `p(z)` for the population version.
pub fn true_cif(config: &ScenarioConfig, t: f64, z: f64, conditional: bool) -> [f64; 2] {
    let mass = 1.0 - (-config.baseline_rate * (config.gamma * z).exp() * t.max(0.0)).exp();
    let scale = if conditional {
        1.0
    } else {
        config.susceptible_probability(z)
    };
    [config.pi1 * mass * scale, (1.0 - config.pi1) * mass * scale]
}

/// Which estimate of which target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// VMCF `F̂_j(t | Y = 1, Z = z)`.
    VmcfConditional,
    /// VMCF `p̂ F̂_j(t | Y = 1, Z = z)`.
    VmcfPopulation,
    /// VM `F̂_j(t | Z = z)`.
    VmPopulation,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [
        Estimator::VmcfConditional,
        Estimator::VmcfPopulation,
        Estimator::VmPopulation,
    ];

    fn conditional_truth(self) -> bool {
        self == Estimator::VmcfConditional
    }
}

/// One estimate with its optional normal interval.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Draw {
    estimate: f64,
    covered: Option<bool>,
}

/// Per-replication output: for each estimator, horizon and cause.
#[derive(Debug, Clone, Default)]
struct ReplicationOutcome {
    vmcf_failed: bool,
    vm_failed: bool,
    se_failed: usize,
    draws: Vec<(Estimator, usize, usize, Draw)>,
}

/// Running moments of the estimation error.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Accumulator {
    pub count: usize,
    pub sum: f64,
    pub sum_sq: f64,
    pub ci_count: usize,
    pub hits: usize,
}

impl Accumulator {
    pub fn push(&mut self, error: f64, covered: Option<bool>) {
        self.count += 1;
        self.sum += error;
        self.sum_sq += error * error;
        if let Some(c) = covered {
            self.ci_count += 1;
            self.hits += usize::from(c);
        }
    }

    pub fn merge(&mut self, other: &Accumulator) {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.ci_count += other.ci_count;
        self.hits += other.hits;
    }

    pub fn bias(&self) -> f64 {
        self.sum / self.count as f64
    }

    pub fn rmse(&self) -> f64 {
        (self.sum_sq / self.count as f64).sqrt()
    }

    /// Variance of the estimates (denominator `count`).
    pub fn variance(&self) -> f64 {
        let b = self.bias();
        (self.sum_sq / self.count as f64 - b * b).max(0.0)
    }

    pub fn coverage(&self) -> Option<f64> {
        (self.ci_count > 0).then(|| self.hits as f64 / self.ci_count as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub estimator: Estimator,
    pub time: f64,
    pub cause: usize,
    pub truth: f64,
    pub bias: f64,
    pub rmse: f64,
    pub coverage: Option<f64>,
    pub moments: Accumulator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub config: ScenarioConfig,
    pub vmcf_failures: usize,
    pub vm_failures: usize,
    /// Replication-level standard-error failures (singular information).
    pub se_failures: usize,
    pub cells: Vec<Cell>,
}

impl StudyReport {
    pub fn cell(&self, estimator: Estimator, time: f64, cause: usize) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.estimator == estimator && c.time == time && c.cause == cause)
    }

    fn fmt_bias(c: Option<&Cell>) -> String {
        c.map_or("NA".into(), |c| format!("{:.4} ({:.4})", c.bias, c.rmse))
    }

    fn fmt_cov(c: Option<&Cell>) -> String {
        c.and_then(|c| c.coverage)
            .map_or("NA".into(), |v| format!("{:.1}", 100.0 * v))
    }

    /// Bias (RMSE) of the conditional incidences, one row per horizon.
    pub fn write_table_conditional<W: Write>(&self, w: W) -> Result<()> {
        self.write_table(
            w,
            &["F1(t|Y=1)", "F2(t|Y=1)"],
            &[(Estimator::VmcfConditional, 1), (Estimator::VmcfConditional, 2)],
            Self::fmt_bias,
        )
    }

    /// Bias (RMSE) of the population incidences under VM and VMCF.
    pub fn write_table_population<W: Write>(&self, w: W) -> Result<()> {
        self.write_table(
            w,
            &["VM F1(t)", "VM F2(t)", "VMCF F1(t)", "VMCF F2(t)"],
            &[
                (Estimator::VmPopulation, 1),
                (Estimator::VmPopulation, 2),
                (Estimator::VmcfPopulation, 1),
                (Estimator::VmcfPopulation, 2),
            ],
            Self::fmt_bias,
        )
    }

    /// Coverage percentages.
    pub fn write_table_coverage<W: Write>(&self, w: W) -> Result<()> {
        self.write_table(
            w,
            &[
                "VMCF F1(t|Y=1)",
                "VMCF F2(t|Y=1)",
                "VM F1(t)",
                "VM F2(t)",
                "VMCF F1(t)",
                "VMCF F2(t)",
            ],
            &[
                (Estimator::VmcfConditional, 1),
                (Estimator::VmcfConditional, 2),
                (Estimator::VmPopulation, 1),
                (Estimator::VmPopulation, 2),
                (Estimator::VmcfPopulation, 1),
                (Estimator::VmcfPopulation, 2),
            ],
            Self::fmt_cov,
        )
    }

    fn write_table<W: Write>(
        &self,
        w: W,
        names: &[&str],
        cols: &[(Estimator, usize)],
        fmt: fn(Option<&Cell>) -> String,
    ) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend(names.iter().map(|s| s.to_string()));
        out.write_record(&header)?;
        for &t in &self.config.horizons {
            let mut rec = vec![t.to_string()];
            rec.extend(cols.iter().map(|&(e, j)| fmt(self.cell(e, t, j))));
            out.write_record(&rec)?;
        }
        out.flush().map_err(|e| Error::Io {
            path: "<csv>".into(),
            source: e,
        })?;
        Ok(())
    }
}

fn draws_for(
    fit: &FitResult,
    dataset: &Dataset,
    config: &ScenarioConfig,
    estimators: &[Estimator],
    out: &mut ReplicationOutcome,
) -> Result<()> {
    let profile = PredictionProfile::new([(COVARIATE, config.profile_z)]);
    let pred = Predictor::new(fit, &profile)?;
    let blocks = information_blocks(fit, dataset);
    if blocks.is_err() {
        out.se_failed += 1;
    }
    for (h, &t) in config.horizons.iter().enumerate() {
        let with_se: Option<CifWithSe> = blocks
            .as_ref()
            .ok()
            .map(|b| cif_delta(fit, b, &pred.profile, t));
        for &est in estimators {
            let (values, ses) = match (est, &with_se) {
                (Estimator::VmcfConditional, Some(w)) => (w.conditional.clone(), Some(&w.conditional_se)),
                (Estimator::VmcfConditional, None) => (pred.cif_conditional(t), None),
                (_, Some(w)) => (w.population.clone(), Some(&w.population_se)),
                (_, None) => (pred.cif_population(t), None),
            };
            let truth = true_cif(config, t, config.profile_z, est.conditional_truth());
            for j in 0..2 {
                let covered = ses.map(|s| {
                    let ci = ci_for_cif(values[j], s[j], config.level);
                    ci.lower <= truth[j] && truth[j] <= ci.upper
                });
                out.draws.push((
                    est,
                    h,
                    j,
                    Draw {
                        estimate: values[j],
                        covered,
                    },
                ));
            }
        }
    }
    Ok(())
}

/// Simulates, fits both models and evaluates one replication.
fn run_replication(config: &ScenarioConfig, replication: u64) -> Result<ReplicationOutcome> {
    let data = generate_dataset(config, replication)?;
    let mut out = ReplicationOutcome::default();
    match fit_model(&data, &config.vmcf_spec()) {
        Ok(fit) if fit.converged => draws_for(
            &fit,
            &data,
            config,
            &[Estimator::VmcfConditional, Estimator::VmcfPopulation],
            &mut out,
        )?,
        _ => out.vmcf_failed = true,
    }
    match fit_model(&data, &config.vm_spec()) {
        Ok(fit) if fit.converged => draws_for(&fit, &data, config, &[Estimator::VmPopulation], &mut out)?,
        _ => out.vm_failed = true,
    }
    Ok(out)
}

/// Runs all replications in parallel and aggregates them in replication
/// order, so the report does not depend on the number of workers.
pub fn run_study(config: &ScenarioConfig) -> Result<StudyReport> {
    config.validate()?;
    let outcomes: Vec<Result<ReplicationOutcome>> = (0..config.replications as u64)
        .into_par_iter()
        .map(|r| run_replication(config, r))
        .collect();
    let nh = config.horizons.len();
    let slot = |e: Estimator, h: usize, j: usize| {
        let ei = Estimator::ALL.iter().position(|&x| x == e).expect("listed");
        (ei * nh + h) * 2 + j
    };
    let mut acc = vec![Accumulator::default(); Estimator::ALL.len() * nh * 2];
    let (mut vmcf_failures, mut vm_failures, mut se_failures) = (0, 0, 0);
    for outcome in outcomes {
        let o = outcome?;
        vmcf_failures += usize::from(o.vmcf_failed);
        vm_failures += usize::from(o.vm_failed);
        se_failures += o.se_failed;
        for (e, h, j, d) in o.draws {
            let truth = true_cif(config, config.horizons[h], config.profile_z, e.conditional_truth())[j];
            acc[slot(e, h, j)].push(d.estimate - truth, d.covered);
        }
    }
    let mut cells = Vec::new();
    for e in Estimator::ALL {
        for (h, &t) in config.horizons.iter().enumerate() {
            for j in 0..2 {
                let a = acc[slot(e, h, j)];
                if a.count == 0 {
                    continue;
                }
                cells.push(Cell {
                    estimator: e,
                    time: t,
                    cause: j + 1,
                    truth: true_cif(config, t, config.profile_z, e.conditional_truth())[j],
                    bias: a.bias(),
                    rmse: a.rmse(),
                    coverage: a.coverage(),
                    moments: a,
                });
            }
        }
    }
    Ok(StudyReport {
        config: config.clone(),
        vmcf_failures,
        vm_failures,
        se_failures,
        cells,
    })
}
