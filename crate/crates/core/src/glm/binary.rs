//! Weighted binary regression with fractional responses.

use nalgebra::{DMatrix, DVector};

use super::link::LinkFunction;
use super::newton::{maximize, Evaluation, NewtonOptions};
use crate::error::{Error, Result};
use crate::linalg::inverse_spd;

#[derive(Debug, Clone)]
pub struct GlmFit {
    pub coefficients: Vec<f64>,
    /// Inverse observed information.
    pub covariance: DMatrix<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Linear predictors ran off to the probability boundary.
    pub separated: bool,
}

impl GlmFit {
    pub fn standard_errors(&self) -> Vec<f64> {
        self.covariance.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }
}

struct Problem<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [f64],
    w: &'a [f64],
    link: LinkFunction,
}

impl Problem<'_> {
    fn linear(&self, beta: &[f64]) -> DVector<f64> {
        self.x * DVector::from_column_slice(beta)
    }

    fn loglik(&self, beta: &[f64]) -> f64 {
        let s = self.linear(beta);
        s.iter()
            .enumerate()
            .map(|(i, &si)| {
                if self.w[i] == 0.0 {
                    return 0.0;
                }
                let p: f64 = self.link.inverse(si);
                self.w[i] * (self.y[i] * p.ln() + (1.0 - self.y[i]) * (1.0 - p).ln())
            })
            .sum()
    }

    /// Gradient, observed information and expected information.
    fn derivatives(&self, beta: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
        let k = self.x.ncols();
        let s = self.linear(beta);
        let mut grad = DVector::zeros(k);
        let mut obs = DMatrix::zeros(k, k);
        let mut fisher = DMatrix::zeros(k, k);
        let mut value = 0.0;
        for i in 0..self.x.nrows() {
            let wi = self.w[i];
            if wi == 0.0 {
                continue;
            }
            let si = s[i];
            let p: f64 = self.link.inverse(si);
            let yi = self.y[i];
            value += wi * (yi * p.ln() + (1.0 - yi) * (1.0 - p).ln());
            let h1: f64 = self.link.d_inverse(si);
            let h2: f64 = self.link.d2_inverse(si);
            let v = p * (1.0 - p);
            let r = h1 / v;
            let dr = (h2 * v - h1 * h1 * (1.0 - 2.0 * p)) / (v * v);
            let score = (yi - p) * r;
            let da = -h1 * r + (yi - p) * dr;
            let (c_obs, c_fis) = (wi * da, wi * h1 * r);
            for a in 0..k {
                let xa = self.x[(i, a)];
                grad[a] += wi * score * xa;
                for b in 0..k {
                    let xab = xa * self.x[(i, b)];
                    obs[(a, b)] -= c_obs * xab;
                    fisher[(a, b)] += c_fis * xab;
                }
            }
        }
        (value, grad, obs, fisher)
    }
}

/// Maximizes `sum_i w_i [y_i log p_i + (1 - y_i) log(1 - p_i)]` with
/// `p_i = g^{-1}(x_i' beta)` and responses `y_i in [0, 1]`.
pub fn fit_weighted_binary(
    design: &DMatrix<f64>,
    outcome: &[f64],
    weights: &[f64],
    link: LinkFunction,
    init: Option<&[f64]>,
    opts: NewtonOptions,
) -> Result<GlmFit> {
    let n = design.nrows();
    if outcome.len() != n || weights.len() != n {
        return Err(Error::InvalidArgument("outcome/weight length mismatch".into()));
    }
    if outcome.iter().any(|y| !(0.0..=1.0).contains(y)) {
        return Err(Error::InvalidArgument("outcomes must lie in [0, 1]".into()));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
    }
    let prob = Problem {
        x: design,
        y: outcome,
        w: weights,
        link,
    };
    let k = design.ncols();
    let x0 = init.map_or_else(|| vec![0.0; k], <[f64]>::to_vec);
    let out = maximize(
        &x0,
        |b| {
            let (value, gradient, obs, fisher) = prob.derivatives(b);
            // Observed information when it is positive definite, scoring otherwise.
            let curvature = if obs.clone().cholesky().is_some() { obs } else { fisher };
            Evaluation {
                value,
                gradient,
                curvature,
            }
        },
        |b| prob.loglik(b),
        opts,
    );
    let s = prob.linear(&out.x);
    let separated = out.diverged || s.iter().any(|v| v.abs() > opts.divergence_bound);
    let (_, _, obs, fisher) = prob.derivatives(&out.x);
    let covariance = inverse_spd(&obs)
        .or_else(|| inverse_spd(&fisher))
        .unwrap_or_else(|| DMatrix::from_element(k, k, f64::NAN));
    Ok(GlmFit {
        coefficients: out.x,
        covariance,
        loglik: out.value,
        converged: out.converged && !separated,
        iterations: out.iterations,
        separated,
    })
}
