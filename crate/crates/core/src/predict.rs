//! Post-fit quantities for a covariate profile: cure probability, conditional
//! and population survival, cumulative incidences, the posterior of
//! susceptibility, the population hazard and the marginal log hazard ratio.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::em::FitResult;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// `S_pop = p S + 1 - p`.
pub fn mixture_survival<T: Real>(p: T, s: T) -> T {
    p * s + (T::one() - p)
}

/// `E[Y | T >= t] = p S / (p S + 1 - p)`.
pub fn posterior_susceptible<T: Real>(p: T, s: T) -> T {
    let den = mixture_survival(p, s);
    if den > T::zero() {
        p * s / den
    } else {
        T::one()
    }
}

/// Cause-specific cumulative incidences of a step survival curve: the mass
/// `S(t_s-) - S(t_s)` dropped at each event time is split by `π(t_s)`.
pub fn discrete_cif<T: Real>(survival_steps: &[T], pis: &[Vec<T>]) -> Vec<T> {
    let j = pis.first().map_or(0, Vec::len);
    let mut out = vec![T::zero(); j];
    let mut prev = T::one();
    for (s, pi) in survival_steps.iter().zip(pis) {
        let drop = prev - *s;
        for (o, &p) in out.iter_mut().zip(pi) {
            *o = *o + p * drop;
        }
        prev = *s;
    }
    out
}

/// Covariate values by name, plus optional evaluation times.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictionProfile {
    pub covariates: BTreeMap<String, f64>,
    #[serde(default)]
    pub horizons: Vec<f64>,
}

impl PredictionProfile {
    pub fn new<I: IntoIterator<Item = (S, f64)>, S: Into<String>>(values: I) -> Self {
        PredictionProfile {
            covariates: values.into_iter().map(|(k, v)| (k.into(), v)).collect(),
            horizons: Vec::new(),
        }
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.covariates.insert(name.to_string(), value);
        self
    }

    /// Resolves the profile against the fitted design.
    pub fn resolve(&self, fit: &FitResult) -> Result<Resolved> {
        let design = &fit.spec.design;
        let known: BTreeSet<&String> = design
            .incidence
            .iter()
            .chain(&design.latency)
            .chain(&design.relhaz)
            .collect();
        if let Some(name) = self.covariates.keys().find(|k| !known.contains(k)) {
            return Err(Error::UnknownCovariate(name.clone()));
        }
        let pick = |cols: &[String]| -> Result<Vec<f64>> {
            cols.iter()
                .map(|c| {
                    self.covariates
                        .get(c)
                        .copied()
                        .ok_or_else(|| Error::InvalidArgument(format!("profile lacks covariate `{c}`")))
                })
                .collect()
        };
        let mut x = vec![1.0];
        x.extend(pick(&design.incidence)?);
        Ok(Resolved {
            x,
            z: pick(&design.latency)?,
            u: pick(&design.relhaz)?,
        })
    }
}

/// Profile split into the incidence (with intercept), latency and
/// relative-hazard covariate vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub u: Vec<f64>,
}

/// Predictions for one resolved profile.
#[derive(Debug, Clone)]
pub struct Predictor<'a> {
    pub fit: &'a FitResult,
    pub profile: Resolved,
    /// `p`; 1 for the cure-free model.
    pub p: f64,
    /// `γ'z`.
    pub lp: f64,
}

impl<'a> Predictor<'a> {
    pub fn new(fit: &'a FitResult, profile: &PredictionProfile) -> Result<Self> {
        let profile = profile.resolve(fit)?;
        Ok(Self::from_resolved(fit, profile))
    }

    pub fn from_resolved(fit: &'a FitResult, profile: Resolved) -> Self {
        let p = if fit.is_cure_model() {
            let s: f64 = fit.beta.iter().zip(&profile.x).map(|(b, x)| b * x).sum();
            fit.spec.link.inverse(s)
        } else {
            1.0
        };
        let lp = fit.gamma.iter().zip(&profile.z).map(|(g, z)| g * z).sum();
        Predictor { fit, profile, p, lp }
    }

    pub fn incidence(&self) -> f64 {
        self.p
    }

    pub fn cure_probability(&self) -> f64 {
        1.0 - self.p
    }

    /// `S(t | Y = 1, z)`.
    pub fn conditional_survival(&self, t: f64) -> f64 {
        self.fit.baseline.survival(t, self.lp)
    }

    /// `S(t- | Y = 1, z)`.
    pub fn conditional_survival_before(&self, t: f64) -> f64 {
        self.fit.baseline.survival_before(t, self.lp)
    }

    pub fn population_survival(&self, t: f64) -> f64 {
        mixture_survival(self.p, self.conditional_survival(t))
    }

    /// `F_j(t | Y = 1)` for every cause.
    pub fn cif_conditional(&self, t: f64) -> Vec<f64> {
        let base = &self.fit.baseline;
        let k = base.event_times.partition_point(|&e| e <= t);
        let scale = self.lp.exp();
        let mut acc = 0.0;
        let mut steps = Vec::with_capacity(k);
        let mut pis = Vec::with_capacity(k);
        for s in 0..k {
            acc += base.jumps[s];
            steps.push((-acc * scale).exp());
            pis.push(self.pi(base.event_times[s]));
        }
        if k == 0 {
            return vec![0.0; self.fit.relhaz.num_causes];
        }
        discrete_cif(&steps, &pis)
    }

    /// `F_j(t) = p F_j(t | Y = 1)`.
    pub fn cif_population(&self, t: f64) -> Vec<f64> {
        self.cif_conditional(t).into_iter().map(|f| self.p * f).collect()
    }

    pub fn pi(&self, t: f64) -> Vec<f64> {
        self.fit.relhaz.pi(t, &self.profile.u)
    }

    /// `E[Y | T >= t]` evaluated with `S(t)`, matching the E-step weight of a
    /// subject censored at `t`.
    pub fn susceptible_posterior(&self, t: f64) -> f64 {
        posterior_susceptible(self.p, self.conditional_survival(t))
    }

    /// `E[Y | T >= t]` with `S(t-)`, the weight of the population hazard at `t`.
    pub fn at_risk_posterior(&self, t: f64) -> f64 {
        posterior_susceptible(self.p, self.conditional_survival_before(t))
    }

    /// Conditional hazard increment `dΛ0(t) exp(γ'z)`.
    pub fn conditional_hazard(&self, t: f64) -> f64 {
        self.fit.baseline.jump_at(t) * self.lp.exp()
    }

    /// Population hazard increment `E[Y | T >= t] dΛ(t | Y = 1)`.
    pub fn population_hazard(&self, t: f64) -> f64 {
        self.at_risk_posterior(t) * self.conditional_hazard(t)
    }

    /// The same increment written in terms of the baseline survival
    /// `S0(t-) = exp(-Λ0(t-))` raised to `exp(γ'z)`.
    pub fn population_hazard_explicit(&self, t: f64) -> f64 {
        let base = &self.fit.baseline;
        let e = self.lp.exp();
        let s0 = (-base.cumulative_before(t)).exp();
        let s0_pow = s0.powf(e);
        let num = self.p * s0_pow;
        base.jump_at(t) * e * num / (num + 1.0 - self.p)
    }
}

/// Marginal log hazard ratio of profile `a` against `b` at `t`:
/// `γ'(z_a - z_b) + log(E_a[Y | T >= t] / E_b[Y | T >= t])`.
pub fn marginal_log_hr(a: &Predictor<'_>, b: &Predictor<'_>, t: f64) -> f64 {
    if a.profile == b.profile {
        return 0.0;
    }
    let dz = a.lp - b.lp;
    dz + (a.at_risk_posterior(t) / b.at_risk_posterior(t)).ln()
}

/// Point-wise interval for one quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub time: f64,
    pub cure_probability: f64,
    pub conditional_survival: f64,
    pub population_survival: f64,
    pub cif_conditional: Vec<f64>,
    pub cif_population: Vec<f64>,
    pub susceptible_posterior: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cif_conditional_ci: Option<Vec<Interval>>,
}

/// Predictions at a set of horizons, sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSet {
    pub num_causes: usize,
    pub rows: Vec<CurveRow>,
}

pub fn predict_curves(pred: &Predictor<'_>, horizons: &[f64]) -> CurveSet {
    let mut hs = horizons.to_vec();
    hs.sort_by(f64::total_cmp);
    hs.dedup();
    let rows = hs
        .into_iter()
        .map(|t| CurveRow {
            time: t,
            cure_probability: pred.cure_probability(),
            conditional_survival: pred.conditional_survival(t),
            population_survival: pred.population_survival(t),
            cif_conditional: pred.cif_conditional(t),
            cif_population: pred.cif_population(t),
            susceptible_posterior: pred.susceptible_posterior(t),
            cif_conditional_ci: None,
        })
        .collect();
    CurveSet {
        num_causes: pred.fit.relhaz.num_causes,
        rows,
    }
}

impl CurveSet {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![
            "time".to_string(),
            "cure_probability".into(),
            "conditional_survival".into(),
            "population_survival".into(),
            "susceptible_posterior".into(),
        ];
        let with_ci = self.rows.iter().any(|r| r.cif_conditional_ci.is_some());
        for j in 1..=self.num_causes {
            header.push(format!("cif{j}_conditional"));
            header.push(format!("cif{j}_population"));
            if with_ci {
                header.push(format!("cif{j}_conditional_lower"));
                header.push(format!("cif{j}_conditional_upper"));
            }
        }
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.time.to_string(),
                r.cure_probability.to_string(),
                r.conditional_survival.to_string(),
                r.population_survival.to_string(),
                r.susceptible_posterior.to_string(),
            ];
            for j in 0..self.num_causes {
                rec.push(r.cif_conditional[j].to_string());
                rec.push(r.cif_population[j].to_string());
                if with_ci {
                    let ci = r.cif_conditional_ci.as_ref().map(|c| c[j]);
                    rec.push(ci.map_or(String::new(), |c| c.lower.to_string()));
                    rec.push(ci.map_or(String::new(), |c| c.upper.to_string()));
                }
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<csv>".into(),
            source: e,
        })?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_arithmetic() {
        assert!((mixture_survival(0.75, 0.4) - 0.55f64).abs() < 1e-15);
        assert!((posterior_susceptible(0.6, 0.5) - 0.428_571_428_571_428_5f64).abs() < 1e-15);
        assert_eq!(posterior_susceptible(0.6f64, 1.0), 0.6);
        assert_eq!(posterior_susceptible(0.6f64, 0.0), 0.0);
    }

    #[test]
    fn one_step_cif() {
        let s = (-0.4f64).exp();
        let f = discrete_cif(&[s], &[vec![0.25, 0.75]]);
        assert!((f[0] - 0.25 * (1.0 - s)).abs() < 1e-15);
        assert!((f[0] - 0.0824).abs() < 1e-4);
        assert!((f[0] + f[1] + s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cif_kernel_single_precision() {
        let f: Vec<f32> = discrete_cif(&[0.5f32, 0.25], &[vec![0.5, 0.5], vec![1.0, 0.0]]);
        assert_eq!(f, vec![0.5, 0.25]);
    }
}
