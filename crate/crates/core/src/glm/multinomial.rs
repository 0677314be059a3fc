//! Multinomial logistic regression with the last category as reference.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::newton::{maximize, Evaluation, NewtonOptions};
use crate::error::{Error, Result};
use crate::linalg::{inverse_spd, pseudo_inverse, serde_rows};
use crate::scalar::Real;

/// Numerically stable softmax.
pub fn softmax<T: Real>(lin: &[T]) -> Vec<T> {
    let m = lin.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = lin.iter().map(|&v| (v - m).exp()).collect();
    let s = e.iter().copied().fold(T::zero(), |a, b| a + b);
    e.into_iter().map(|v| v / s).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultinomFit {
    /// `J x m` coefficients; row `J - 1` (the reference cause) is zero.
    #[serde(with = "serde_rows")]
    pub eta: DMatrix<f64>,
    /// Observed information of all `J m` coefficients (rank `(J - 1) m`),
    /// cause-major ordering.
    #[serde(with = "serde_rows")]
    pub information: DMatrix<f64>,
    /// Moore–Penrose inverse of `information`.
    #[serde(with = "serde_rows")]
    pub pseudo_inverse: DMatrix<f64>,
    /// Covariance of the free `(J - 1) m` coefficients.
    #[serde(with = "serde_rows")]
    pub covariance: DMatrix<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub diverged: bool,
    pub iterations: usize,
}

impl MultinomFit {
    pub fn num_causes(&self) -> usize {
        self.eta.nrows()
    }

    /// Cause probabilities for one row of the design.
    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let lin: Vec<f64> = (0..self.eta.nrows())
            .map(|j| (0..x.len()).map(|u| self.eta[(j, u)] * x[u]).sum())
            .collect();
        softmax(&lin)
    }

    pub fn standard_errors(&self) -> DMatrix<f64> {
        let (j, m) = self.eta.shape();
        DMatrix::from_fn(j, m, |c, u| {
            if c + 1 == j {
                0.0
            } else {
                self.covariance[(c * m + u, c * m + u)].max(0.0).sqrt()
            }
        })
    }
}

struct Problem<'a> {
    x: &'a DMatrix<f64>,
    labels: &'a [u32],
    j: usize,
}

impl Problem<'_> {
    fn eta_rows(&self, free: &[f64]) -> DMatrix<f64> {
        let m = self.x.ncols();
        DMatrix::from_fn(self.j, m, |c, u| if c + 1 < self.j { free[c * m + u] } else { 0.0 })
    }

    fn probs(&self, eta: &DMatrix<f64>, i: usize) -> Vec<f64> {
        let row = self.x.row(i);
        let lin: Vec<f64> = (0..self.j).map(|c| eta.row(c).dot(&row)).collect();
        softmax(&lin)
    }

    fn loglik(&self, free: &[f64]) -> f64 {
        let eta = self.eta_rows(free);
        let row_count = self.x.nrows();
        (0..row_count)
            .map(|i| {
                let row = self.x.row(i);
                let lin: Vec<f64> = (0..self.j).map(|c| eta.row(c).dot(&row)).collect();
                let m = lin.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + lin.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                lin[self.labels[i] as usize - 1] - lse
            })
            .sum()
    }

    /// Value, free-parameter gradient and the full `J m` information.
    fn derivatives(&self, free: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let m = self.x.ncols();
        let eta = self.eta_rows(free);
        let mut grad = DVector::zeros((self.j - 1) * m);
        let mut info = DMatrix::zeros(self.j * m, self.j * m);
        for i in 0..self.x.nrows() {
            let pi = self.probs(&eta, i);
            let row = self.x.row(i).transpose();
            let outer = &row * row.transpose();
            let d = self.labels[i] as usize - 1;
            for c in 0..self.j {
                if c + 1 < self.j {
                    let coef = f64::from(u8::from(c == d)) - pi[c];
                    for u in 0..m {
                        grad[c * m + u] += coef * row[u];
                    }
                }
                for l in 0..self.j {
                    let om = if c == l { pi[c] - pi[c] * pi[l] } else { -pi[c] * pi[l] };
                    let mut blk = info.view_mut((c * m, l * m), (m, m));
                    blk += &outer * om;
                }
            }
        }
        (self.loglik(free), grad, info)
    }
}

/// Maximizes `sum_i log pi_{D_i}(x_i)` over `eta_1..eta_{J-1}` with
/// `eta_J = 0`. `labels` are causes `1..=J`.
pub fn fit_multinomial(
    x: &DMatrix<f64>,
    labels: &[u32],
    num_causes: u32,
    opts: NewtonOptions,
) -> Result<MultinomFit> {
    let j = num_causes as usize;
    let m = x.ncols();
    if labels.len() != x.nrows() {
        return Err(Error::InvalidArgument("label count does not match rows".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&d| d == 0 || d > num_causes) {
        return Err(Error::InvalidArgument(format!(
            "multinomial rows must be events with cause in 1..={num_causes}, got {bad}"
        )));
    }
    if j == 1 {
        return Ok(MultinomFit {
            eta: DMatrix::zeros(1, m),
            information: DMatrix::zeros(m, m),
            pseudo_inverse: DMatrix::zeros(m, m),
            covariance: DMatrix::zeros(0, 0),
            loglik: 0.0,
            converged: true,
            diverged: false,
            iterations: 0,
        });
    }
    let prob = Problem { x, labels, j };
    let free_dim = (j - 1) * m;
    let out = maximize(
        &vec![0.0; free_dim],
        |f| {
            let (value, gradient, info) = prob.derivatives(f);
            Evaluation {
                value,
                gradient,
                curvature: info.view((0, 0), (free_dim, free_dim)).into_owned(),
            }
        },
        |f| prob.loglik(f),
        opts,
    );
    let (loglik, _, information) = prob.derivatives(&out.x);
    let free_info = information.view((0, 0), (free_dim, free_dim)).into_owned();
    let covariance = inverse_spd(&free_info)
        .ok_or_else(|| Error::Singular("multinomial information".into()))?;
    let pinv = pseudo_inverse(&information);
    Ok(MultinomFit {
        eta: prob.eta_rows(&out.x),
        information,
        pseudo_inverse: pinv,
        covariance,
        loglik,
        converged: out.converged,
        diverged: out.diverged,
        iterations: out.iterations,
    })
}
