//! Weighted Cox machinery for the conditional (on susceptibility) total
//! hazard: weighted partial likelihood, weighted Breslow baseline and the
//! zero-tail survival convention.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::EventTable;
use crate::error::{Error, Result};
use crate::glm::newton::{maximize, Evaluation, NewtonOptions};
use crate::linalg::inverse_spd;
use crate::scalar::Real;

/// Step-function baseline cumulative hazard with jumps at the event times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "BaselineParts<T>",
    bound(deserialize = "T: Real + serde::de::DeserializeOwned")
)]
pub struct BaselineHazard<T: Real> {
    pub event_times: Vec<T>,
    pub jumps: Vec<T>,
    /// Survival is zero strictly beyond the last event time.
    pub zero_tail: bool,
    #[serde(skip)]
    cumulative: Vec<T>,
}

#[derive(Deserialize)]
struct BaselineParts<T> {
    event_times: Vec<T>,
    jumps: Vec<T>,
    zero_tail: bool,
}

impl<T: Real> TryFrom<BaselineParts<T>> for BaselineHazard<T> {
    type Error = String;

    fn try_from(p: BaselineParts<T>) -> std::result::Result<Self, String> {
        if p.event_times.len() != p.jumps.len() {
            return Err("event_times and jumps differ in length".into());
        }
        Ok(BaselineHazard::new(p.event_times, p.jumps, p.zero_tail))
    }
}

impl<T: Real> BaselineHazard<T> {
    pub fn new(event_times: Vec<T>, jumps: Vec<T>, zero_tail: bool) -> Self {
        assert_eq!(event_times.len(), jumps.len());
        let mut b = BaselineHazard {
            event_times,
            jumps,
            zero_tail,
            cumulative: Vec::new(),
        };
        b.rebuild();
        b
    }

    fn rebuild(&mut self) {
        let mut acc = T::zero();
        self.cumulative = self
            .jumps
            .iter()
            .map(|&j| {
                acc = acc + j;
                acc
            })
            .collect();
    }

    pub fn len(&self) -> usize {
        self.event_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.event_times.is_empty()
    }

    pub fn last_time(&self) -> T {
        self.event_times.last().copied().unwrap_or_else(T::zero)
    }

    fn count_le(&self, t: T) -> usize {
        self.event_times.partition_point(|&e| e <= t)
    }

    fn count_lt(&self, t: T) -> usize {
        self.event_times.partition_point(|&e| e < t)
    }

    /// `Λ0(t)`, right-continuous.
    pub fn cumulative(&self, t: T) -> T {
        match self.count_le(t) {
            0 => T::zero(),
            k => self.cumulative[k - 1],
        }
    }

    /// `Λ0(t-)`.
    pub fn cumulative_before(&self, t: T) -> T {
        match self.count_lt(t) {
            0 => T::zero(),
            k => self.cumulative[k - 1],
        }
    }

    /// Jump `dΛ0(t)`; zero away from the event times.
    pub fn jump_at(&self, t: T) -> T {
        let k = self.count_lt(t);
        if k < self.len() && self.event_times[k] == t {
            self.jumps[k]
        } else {
            T::zero()
        }
    }

    fn beyond_tail(&self, t: T) -> bool {
        self.zero_tail && !self.is_empty() && t > self.last_time()
    }

    /// `S(t) = exp(-Λ0(t) e^{lp})`, zero beyond `t_K` under the zero tail.
    pub fn survival(&self, t: T, linear_predictor: T) -> T {
        if self.beyond_tail(t) {
            return T::zero();
        }
        (-self.cumulative(t) * linear_predictor.exp()).exp()
    }

    /// `S(t-)`.
    pub fn survival_before(&self, t: T, linear_predictor: T) -> T {
        if self.zero_tail && !self.is_empty() && t > self.last_time() {
            // t- is still beyond t_K unless t is arbitrarily close; the tail is empty.
            return T::zero();
        }
        (-self.cumulative_before(t) * linear_predictor.exp()).exp()
    }
}

/// Weighted Breslow estimate `dΛ0(t_k) = d_k / sum_{l in R_k} w_l exp(γ'z_l)`.
pub fn weighted_breslow(
    gamma: &[f64],
    weights: &[f64],
    table: &EventTable,
    z: &DMatrix<f64>,
    zero_tail: bool,
) -> Result<BaselineHazard<f64>> {
    let risk = risk_scores(gamma, weights, z);
    let s0 = suffix_sums(&risk, table);
    let mut jumps = Vec::with_capacity(table.len());
    for k in 0..table.len() {
        if !(s0[k] > 0.0) {
            return Err(Error::ZeroRiskSet {
                time: table.event_times[k],
            });
        }
        jumps.push(table.multiplicities[k] as f64 / s0[k]);
    }
    Ok(BaselineHazard::new(table.event_times.clone(), jumps, zero_tail))
}

fn linear_predictors(gamma: &[f64], z: &DMatrix<f64>) -> Vec<f64> {
    (0..z.nrows())
        .map(|i| (0..gamma.len()).map(|k| gamma[k] * z[(i, k)]).sum())
        .collect()
}

fn risk_scores(gamma: &[f64], weights: &[f64], z: &DMatrix<f64>) -> Vec<f64> {
    linear_predictors(gamma, z)
        .into_iter()
        .zip(weights)
        .map(|(lp, w)| w * lp.exp())
        .collect()
}

/// Risk-set sums `sum_{l in R_k} v_l` for every event time.
fn suffix_sums(v: &[f64], table: &EventTable) -> Vec<f64> {
    let mut out = vec![0.0; table.len()];
    let mut acc = 0.0;
    let mut pos = table.order.len();
    for k in (0..table.len()).rev() {
        while pos > table.risk_start[k] {
            pos -= 1;
            acc += v[table.order[pos]];
        }
        out[k] = acc;
    }
    out
}

/// Log weighted partial likelihood with its score and information.
#[derive(Debug, Clone)]
pub struct PartialLikelihood {
    pub value: f64,
    pub score: DVector<f64>,
    pub information: DMatrix<f64>,
}

/// `sum_{events} [γ'z_i - log sum_{l in R_i} w_l exp(γ'z_l)]` (Breslow ties).
pub fn weighted_partial_loglik(
    gamma: &[f64],
    weights: &[f64],
    table: &EventTable,
    z: &DMatrix<f64>,
) -> Result<PartialLikelihood> {
    let p = gamma.len();
    let lp = linear_predictors(gamma, z);
    let mut value = 0.0;
    let mut score = DVector::zeros(p);
    let mut information = DMatrix::zeros(p, p);
    for (i, ev) in table.subject_event.iter().enumerate() {
        if ev.is_some() {
            value += lp[i];
            for k in 0..p {
                score[k] += z[(i, k)];
            }
        }
    }
    let mut s0 = 0.0;
    let mut s1 = vec![0.0; p];
    let mut s2 = vec![0.0; p * p];
    let mut pos = table.order.len();
    for k in (0..table.len()).rev() {
        while pos > table.risk_start[k] {
            pos -= 1;
            let i = table.order[pos];
            let r = weights[i] * lp[i].exp();
            if r == 0.0 {
                continue;
            }
            s0 += r;
            for a in 0..p {
                let za = r * z[(i, a)];
                s1[a] += za;
                for b in 0..p {
                    s2[a * p + b] += za * z[(i, b)];
                }
            }
        }
        if !(s0 > 0.0) {
            return Err(Error::ZeroRiskSet {
                time: table.event_times[k],
            });
        }
        let d = table.multiplicities[k] as f64;
        value -= d * s0.ln();
        for a in 0..p {
            let ma = s1[a] / s0;
            score[a] -= d * ma;
            for b in 0..p {
                information[(a, b)] += d * (s2[a * p + b] / s0 - ma * s1[b] / s0);
            }
        }
    }
    Ok(PartialLikelihood {
        value,
        score,
        information,
    })
}

#[derive(Debug, Clone)]
pub struct CoxFit {
    pub gamma: Vec<f64>,
    pub baseline: BaselineHazard<f64>,
    pub partial_loglik: f64,
    pub information: DMatrix<f64>,
    pub covariance: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl CoxFit {
    pub fn standard_errors(&self) -> Vec<f64> {
        self.covariance.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }
}

/// Newton maximization of the weighted partial likelihood, followed by the
/// weighted Breslow baseline at the estimate.
pub fn fit_weighted_cox(
    weights: &[f64],
    table: &EventTable,
    z: &DMatrix<f64>,
    init_gamma: Option<&[f64]>,
    zero_tail: bool,
    opts: NewtonOptions,
) -> Result<CoxFit> {
    let p = z.ncols();
    let x0 = init_gamma.map_or_else(|| vec![0.0; p], <[f64]>::to_vec);
    // surface a zero risk set before optimizing
    weighted_partial_loglik(&x0, weights, table, z)?;
    let out = maximize(
        &x0,
        |g| {
            let pl = weighted_partial_loglik(g, weights, table, z).expect("risk sets checked");
            Evaluation {
                value: pl.value,
                gradient: pl.score,
                curvature: pl.information,
            }
        },
        |g| {
            weighted_partial_loglik(g, weights, table, z)
                .map(|pl| pl.value)
                .unwrap_or(f64::NEG_INFINITY)
        },
        opts,
    );
    let pl = weighted_partial_loglik(&out.x, weights, table, z)?;
    let baseline = weighted_breslow(&out.x, weights, table, z, zero_tail)?;
    let covariance =
        inverse_spd(&pl.information).unwrap_or_else(|| DMatrix::from_element(p, p, f64::NAN));
    Ok(CoxFit {
        gamma: out.x,
        baseline,
        partial_loglik: pl.value,
        information: pl.information,
        covariance,
        converged: out.converged,
        iterations: out.iterations,
    })
}

/// `S(t | Y = 1, z) = exp(-Λ0(t) exp(γ'z))`, zero beyond `t_K` under the zero tail.
pub fn conditional_survival(t: f64, z: &[f64], fit: &CoxFit) -> f64 {
    let lp: f64 = fit.gamma.iter().zip(z).map(|(g, v)| g * v).sum();
    fit.baseline.survival(t, lp)
}
