//! Damped Newton maximizer shared by the regression solvers.

use nalgebra::{DMatrix, DVector};

use crate::linalg::solve_spd;

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub max_iter: usize,
    /// Converged when the accepted step has max-norm below this.
    pub tol: f64,
    pub max_halvings: usize,
    /// Stop and flag divergence when any coefficient exceeds this magnitude.
    pub divergence_bound: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_iter: 100,
            tol: 1e-8,
            max_halvings: 30,
            divergence_bound: 30.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub diverged: bool,
    pub iterations: usize,
}

/// Objective evaluation: value, gradient and a positive (semi)definite
/// curvature matrix used to compute the ascent direction.
pub struct Evaluation {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub curvature: DMatrix<f64>,
}

/// Maximizes an objective by Newton steps with step-halving; the objective
/// never decreases between accepted iterates.
pub fn maximize<F, V>(x0: &[f64], mut eval: F, mut value: V, opts: NewtonOptions) -> NewtonOutcome
where
    F: FnMut(&[f64]) -> Evaluation,
    V: FnMut(&[f64]) -> f64,
{
    let mut x = x0.to_vec();
    let mut converged = false;
    let mut diverged = false;
    let mut iterations = 0;
    let mut current = f64::NAN;
    if x.is_empty() {
        let v = value(&x);
        return NewtonOutcome {
            x,
            value: v,
            converged: true,
            diverged: false,
            iterations: 0,
        };
    }
    for it in 1..=opts.max_iter {
        iterations = it;
        let ev = eval(&x);
        current = ev.value;
        let Some(step) = solve_spd(&ev.curvature, &ev.gradient) else {
            break;
        };
        if !step.iter().all(|s| s.is_finite()) {
            break;
        }
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let cand: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + scale * s).collect();
            let v = value(&cand);
            if v.is_finite() && v >= current {
                accepted = Some((cand, v));
                break;
            }
            scale *= 0.5;
        }
        let full_small = step.amax() < opts.tol;
        match accepted {
            Some((cand, v)) => {
                let moved = step.amax() * scale;
                x = cand;
                current = v;
                if moved < opts.tol {
                    converged = true;
                    break;
                }
            }
            None => {
                // No ascent along the Newton direction: at the optimum up to rounding.
                converged = full_small || ev.gradient.amax() < 1e-8 * (1.0 + current.abs());
                break;
            }
        }
        if x.iter().any(|v| v.abs() > opts.divergence_bound) {
            diverged = true;
            break;
        }
    }
    if current.is_nan() {
        current = value(&x);
    }
    NewtonOutcome {
        x,
        value: current,
        converged: converged && !diverged,
        diverged,
        iterations,
    }
}
