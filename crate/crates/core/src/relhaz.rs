//! Relative cause-specific hazards `π_j(t | U)`: a multinomial logit in the
//! time basis `B(t)` and covariates `U`, fitted on observed failures only.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{BasisKind, Dataset, TimeBasis};
use crate::error::{Error, Result};
use crate::glm::{fit_multinomial, softmax, MultinomFit, NewtonOptions};
use crate::linalg::quad_form;
use crate::scalar::Real;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelativeHazardModel {
    pub basis: TimeBasis,
    pub u_columns: Vec<String>,
    pub num_causes: usize,
    /// Coefficients are ordered `(κ, υ)`: basis terms first, then covariates.
    pub fit: MultinomFit,
}

impl RelativeHazardModel {
    /// Number of coefficients per cause.
    pub fn dim(&self) -> usize {
        self.basis.dim() + self.u_columns.len()
    }

    /// `(B(t), u)`; times beyond the basis range use the last interval.
    pub fn regressors<T: Real>(&self, t: T, u: &[T]) -> Vec<T> {
        let mut x = self.basis.eval(t);
        x.extend_from_slice(u);
        x
    }

    pub fn linear_predictors<T: Real>(&self, t: T, u: &[T]) -> Vec<T> {
        let x = self.regressors(t, u);
        (0..self.num_causes)
            .map(|j| {
                x.iter()
                    .enumerate()
                    .fold(T::zero(), |acc, (k, &v)| acc + T::lit(self.fit.eta[(j, k)]) * v)
            })
            .collect()
    }

    /// Probability vector over the `J` causes.
    pub fn pi<T: Real>(&self, t: T, u: &[T]) -> Vec<T> {
        softmax(&self.linear_predictors(t, u))
    }

    /// Gradient of `π_j` with respect to the full `J m` coefficient vector
    /// (cause-major).
    pub fn pi_gradient(&self, t: f64, u: &[f64], j: usize) -> Vec<f64> {
        let x = self.regressors(t, u);
        let p = self.pi(t, u);
        let m = x.len();
        let mut g = vec![0.0; self.num_causes * m];
        for l in 0..self.num_causes {
            let d = if l == j { p[j] - p[j] * p[l] } else { -p[j] * p[l] };
            for k in 0..m {
                g[l * m + k] = d * x[k];
            }
        }
        g
    }

    /// Delta-method standard errors of `π_j(t | u)` using the pseudo-inverse
    /// of the full information.
    pub fn pi_standard_errors(&self, t: f64, u: &[f64]) -> Vec<f64> {
        (0..self.num_causes)
            .map(|j| {
                quad_form(&self.pi_gradient(t, u, j), &self.fit.pseudo_inverse)
                    .max(0.0)
                    .sqrt()
            })
            .collect()
    }

    /// The same standard errors computed in the reduced parameterization
    /// `η_J = 0` with the inverse of the free information.
    pub fn pi_standard_errors_reduced(&self, t: f64, u: &[f64]) -> Vec<f64> {
        let free = (self.num_causes - 1) * self.dim();
        (0..self.num_causes)
            .map(|j| {
                let g = self.pi_gradient(t, u, j);
                quad_form(&g[..free], &self.fit.covariance).max(0.0).sqrt()
            })
            .collect()
    }

    /// Fits the model to the failures of `dataset`.
    pub fn fit(dataset: &Dataset, basis: TimeBasis, u_columns: &[String]) -> Result<Self> {
        let j = dataset.num_causes as usize;
        let cols = dataset.column_indices(u_columns)?;
        let events: Vec<_> = dataset.subjects.iter().filter(|s| s.status > 0).collect();
        if events.is_empty() {
            return Err(Error::NoEvents);
        }
        let counts = dataset.cause_counts();
        if let Some(c) = counts.iter().position(|&c| c == 0) {
            return Err(Error::MissingCause { cause: c as u32 + 1 });
        }
        if j > 1 && basis.kind == BasisKind::PiecewiseIndicator {
            check_intervals(&basis, events.iter().map(|s| (s.time, s.status)), j)?;
        }
        let m = basis.dim() + cols.len();
        let mut x = DMatrix::zeros(events.len(), m);
        let mut labels = Vec::with_capacity(events.len());
        for (r, s) in events.iter().enumerate() {
            let b = basis.eval(s.time);
            for (k, v) in b.into_iter().chain(cols.iter().map(|&c| s.covariates[c])).enumerate() {
                x[(r, k)] = v;
            }
            labels.push(s.status);
        }
        let fit = fit_multinomial(&x, &labels, dataset.num_causes, NewtonOptions::default())?;
        if fit.diverged {
            return Err(Error::Solver(
                "relative hazard coefficients diverged (quasi-separation in the cause labels)".into(),
            ));
        }
        Ok(RelativeHazardModel {
            basis,
            u_columns: u_columns.to_vec(),
            num_causes: j,
            fit,
        })
    }
}

/// Every interval must hold failures of at least two causes, otherwise its
/// coefficient runs off to infinity.
fn check_intervals(
    basis: &TimeBasis,
    events: impl Iterator<Item = (f64, u32)>,
    num_causes: usize,
) -> Result<()> {
    let labels = basis.labels();
    let mut seen = vec![vec![false; num_causes]; basis.dim()];
    for (t, d) in events {
        seen[basis.interval_of(t)][d as usize - 1] = true;
    }
    for (k, causes) in seen.iter().enumerate() {
        let present = causes.iter().filter(|&&b| b).count();
        if present < 2 {
            return Err(Error::SingleCauseInterval {
                interval: labels[k].clone(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Subject;

    fn dataset(rows: &[(f64, u32, f64)]) -> Dataset {
        let subjects = rows
            .iter()
            .enumerate()
            .map(|(i, &(time, status, u))| Subject {
                id: i.to_string(),
                time,
                status,
                covariates: vec![u],
            })
            .collect();
        Dataset::new(subjects, 2, vec!["u".into()]).unwrap()
    }

    #[test]
    fn constant_basis_gives_cause_proportion() {
        let mut rows = Vec::new();
        for rep in 0..3 {
            for (k, d) in [1, 2, 2, 2].into_iter().enumerate() {
                rows.push((1.0 + k as f64 + rep as f64 * 0.1, d, 0.0));
            }
        }
        rows.push((9.0, 0, 0.0));
        let data = dataset(&rows);
        let m = RelativeHazardModel::fit(&data, TimeBasis::constant(9.0), &[]).unwrap();
        for t in [0.5, 3.0, 20.0] {
            let p: Vec<f64> = m.pi(t, &[]);
            assert!((p[0] - 0.25).abs() < 1e-10);
            assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
        }
        let se = m.pi_standard_errors(1.0, &[]);
        // binomial proportion standard error
        let expect = (0.25f64 * 0.75 / 12.0).sqrt();
        assert!((se[0] - expect).abs() < 1e-8);
        assert!((se[1] - expect).abs() < 1e-8);
    }

    #[test]
    fn single_cause_interval_is_named() {
        let rows = [(1.0, 1, 0.0), (1.5, 1, 0.0), (3.0, 1, 0.0), (3.5, 2, 0.0)];
        let data = dataset(&rows);
        let basis = TimeBasis::piecewise(vec![2.0], 4.0).unwrap();
        match RelativeHazardModel::fit(&data, basis, &[]) {
            Err(Error::SingleCauseInterval { interval }) => assert_eq!(interval, "1{t in (0.00,2.00]}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_cause_rejected() {
        let rows = [(1.0, 1, 0.0), (2.0, 0, 0.0)];
        let err = RelativeHazardModel::fit(&dataset(&rows), TimeBasis::constant(2.0), &[]).unwrap_err();
        assert!(matches!(err, Error::MissingCause { cause: 2 }));
    }

    #[test]
    fn pseudo_inverse_and_reduced_standard_errors_agree() {
        let rows: Vec<(f64, u32, f64)> = (0..40)
            .map(|i| {
                let t = 0.1 + i as f64 * 0.2;
                let u = ((i * 7) % 5) as f64 - 2.0;
                let d = if (i * 3 + (u as i64 + 2) as usize) % 4 == 0 { 1 } else { 2 };
                (t, d, u)
            })
            .collect();
        let data = dataset(&rows);
        let basis = TimeBasis::piecewise(vec![3.0], 8.0).unwrap();
        let m = RelativeHazardModel::fit(&data, basis, &["u".into()]).unwrap();
        for t in [1.0, 5.0] {
            for u in [-1.0, 0.5] {
                let a = m.pi_standard_errors(t, &[u]);
                let b = m.pi_standard_errors_reduced(t, &[u]);
                for (x, y) in a.iter().zip(&b) {
                    assert!((x - y).abs() < 1e-8 * (1.0 + y), "{x} vs {y}");
                }
            }
        }
    }
}
