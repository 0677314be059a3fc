use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    PiecewiseIndicator,
    Polynomial,
}

/// The vector `B(t)` of time functions entering the relative hazards.
///
/// Piecewise intervals are `(0, b1], (b1, b2], ..., (b_m, max_time]`; times at
/// or below zero fall in the first interval and times beyond `max_time` in the
/// last one. The polynomial basis is `(1, s, ..., s^degree)` with
/// `s = t / max_time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeBasis {
    pub kind: BasisKind,
    #[serde(default)]
    pub breakpoints: Vec<f64>,
    #[serde(default)]
    pub degree: usize,
    pub max_time: f64,
}

impl TimeBasis {
    /// One interval: `B(t) = 1`.
    pub fn constant(max_time: f64) -> Self {
        TimeBasis {
            kind: BasisKind::PiecewiseIndicator,
            breakpoints: Vec::new(),
            degree: 0,
            max_time,
        }
    }

    pub fn piecewise(breakpoints: Vec<f64>, max_time: f64) -> Result<Self> {
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Schema("breakpoints must be strictly ascending".into()));
        }
        if breakpoints.iter().any(|&b| !(b > 0.0 && b < max_time)) {
            return Err(Error::Schema(format!(
                "breakpoints must lie inside (0, {max_time})"
            )));
        }
        Ok(TimeBasis {
            kind: BasisKind::PiecewiseIndicator,
            breakpoints,
            degree: 0,
            max_time,
        })
    }

    pub fn polynomial(degree: usize, max_time: f64) -> Self {
        TimeBasis {
            kind: BasisKind::Polynomial,
            breakpoints: Vec::new(),
            degree,
            max_time,
        }
    }

    /// Basis dimension `r`.
    pub fn dim(&self) -> usize {
        match self.kind {
            BasisKind::PiecewiseIndicator => self.breakpoints.len() + 1,
            BasisKind::Polynomial => self.degree + 1,
        }
    }

    /// Index of the piecewise interval containing `t`.
    pub fn interval_of(&self, t: f64) -> usize {
        self.breakpoints.partition_point(|&b| b < t)
    }

    pub fn eval<T: Real>(&self, t: T) -> Vec<T> {
        let r = self.dim();
        match self.kind {
            BasisKind::PiecewiseIndicator => {
                let mut out = vec![T::zero(); r];
                out[self.interval_of(t.as_f64())] = T::one();
                out
            }
            BasisKind::Polynomial => {
                let s = t / T::lit(self.max_time);
                let mut out = Vec::with_capacity(r);
                let mut acc = T::one();
                for _ in 0..r {
                    out.push(acc);
                    acc = acc * s;
                }
                out
            }
        }
    }

    /// Human-readable names of the basis coordinates, e.g. `1{t in (1.76,2.90]}`.
    pub fn labels(&self) -> Vec<String> {
        match self.kind {
            BasisKind::PiecewiseIndicator => {
                let mut edges = vec![0.0];
                edges.extend(&self.breakpoints);
                edges.push(self.max_time);
                edges
                    .windows(2)
                    .map(|w| format!("1{{t in ({:.2},{:.2}]}}", w[0], w[1]))
                    .collect()
            }
            BasisKind::Polynomial => (0..=self.degree).map(|k| format!("(t/tmax)^{k}")).collect(),
        }
    }
}

/// How to construct a [`TimeBasis`] for a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisSpec {
    Constant,
    /// Either explicit `breakpoints` or `quantiles` (probabilities) of the
    /// uncensored event times.
    Piecewise {
        #[serde(default)]
        breakpoints: Option<Vec<f64>>,
        #[serde(default)]
        quantiles: Option<Vec<f64>>,
    },
    Polynomial {
        degree: usize,
    },
}

impl BasisSpec {
    pub fn quartiles() -> Self {
        BasisSpec::Piecewise {
            breakpoints: None,
            quantiles: Some(vec![0.25, 0.5, 0.75]),
        }
    }
}

/// Sample quantile with linear interpolation between order statistics
/// (`h = (n - 1) p`). `sorted` must be ascending and non-empty.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n as f64 - 1.0) * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn build_time_basis(spec: &BasisSpec, dataset: &Dataset) -> Result<TimeBasis> {
    let max_time = dataset
        .subjects
        .iter()
        .map(|s| s.time)
        .fold(0.0_f64, f64::max);
    match spec {
        BasisSpec::Constant => Ok(TimeBasis::constant(max_time)),
        BasisSpec::Polynomial { degree } => Ok(TimeBasis::polynomial(*degree, max_time)),
        BasisSpec::Piecewise {
            breakpoints: Some(b),
            ..
        } => TimeBasis::piecewise(b.clone(), max_time),
        BasisSpec::Piecewise {
            breakpoints: None,
            quantiles: Some(q),
        } => {
            let mut ev: Vec<f64> = dataset
                .subjects
                .iter()
                .filter(|s| s.is_event())
                .map(|s| s.time)
                .collect();
            ev.sort_by(f64::total_cmp);
            let mut distinct = ev.clone();
            distinct.dedup();
            if distinct.len() < q.len() + 1 {
                return Err(Error::TooFewEventTimes {
                    found: distinct.len(),
                    requested: q.len(),
                });
            }
            let b: Vec<f64> = q.iter().map(|&p| quantile_type7(&ev, p)).collect();
            TimeBasis::piecewise(b, max_time)
        }
        BasisSpec::Piecewise { .. } => Err(Error::Schema(
            "piecewise basis needs `breakpoints` or `quantiles`".into(),
        )),
    }
}
