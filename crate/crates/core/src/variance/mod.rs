//! Standard errors: observed information, delta-method covariance of the
//! cumulative hazards, functional delta method for the cumulative incidences
//! and the nonparametric bootstrap.

mod bootstrap;
mod delta;
mod information;

pub use bootstrap::{bootstrap_covariance, BootstrapOptions, BootstrapSummary, MIN_REPLICATES};
pub use delta::{
    block_expansion, delta_cumhaz_covariance, kron_row, omega, prefix_sum_rows, prefix_sum_rows_cols,
    stack_index, CumHazCovariance,
};
pub use information::{information_blocks, InformationBlocks, L1Layout, L1Objective, FD_STEP};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{Dataset, EventTable};
use crate::em::FitResult;
use crate::error::Result;
use crate::glm::softmax;
use crate::latency::weighted_partial_loglik;
use crate::linalg::{central_jacobian, inverse_spd, quad_form};
use crate::predict::{discrete_cif, Interval, Resolved};

/// Two-sided standard normal multiplier for confidence `level`.
pub fn normal_multiplier(level: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + level / 2.0)
}

/// Normal-approximation interval truncated to `[0, 1]`.
pub fn ci_for_cif(estimate: f64, se: f64, level: f64) -> Interval {
    let h = normal_multiplier(level) * se;
    Interval {
        lower: (estimate - h).clamp(0.0, 1.0),
        upper: (estimate + h).clamp(0.0, 1.0),
    }
}

/// Cumulative incidences of a profile and their delta-method standard
/// errors from the full observed information.
#[derive(Debug, Clone, PartialEq)]
pub struct CifWithSe {
    pub conditional: Vec<f64>,
    pub conditional_se: Vec<f64>,
    pub population: Vec<f64>,
    pub population_se: Vec<f64>,
}

/// Delta method for `F_j(t | Y = 1, z)` and `F_j(t | z) = p F_j(t | Y = 1, z)`
/// through a numerical gradient in `(β, γ, dΛ)` and the free relative-hazard
/// coefficients.
pub fn cif_delta(fit: &FitResult, blocks: &InformationBlocks, profile: &Resolved, t: f64) -> CifWithSe {
    let lay = blocks.layout;
    let k = fit.baseline.event_times.partition_point(|&e| e <= t);
    let jn = fit.relhaz.num_causes;
    let m = fit.relhaz.dim();
    let free = (jn - 1) * m;
    // active parameters: β, γ, the first k jumps, free η
    let n1 = lay.n_beta + lay.n_gamma + k;
    let mut theta: Vec<f64> = fit.beta.iter().take(lay.n_beta).copied().collect();
    theta.extend_from_slice(&fit.gamma);
    theta.extend_from_slice(&fit.baseline.jumps[..k]);
    for j in 0..jn - 1 {
        for c in 0..m {
            theta.push(fit.relhaz.fit.eta[(j, c)]);
        }
    }
    let regressors: Vec<Vec<f64>> = fit.baseline.event_times[..k]
        .iter()
        .map(|&ts| fit.relhaz.regressors(ts, &profile.u))
        .collect();
    let pis_for = |eta: &[f64]| -> Vec<Vec<f64>> {
        regressors
            .iter()
            .map(|x| {
                let lin: Vec<f64> = (0..jn)
                    .map(|j| {
                        if j + 1 == jn {
                            0.0
                        } else {
                            (0..m).map(|c| eta[j * m + c] * x[c]).sum()
                        }
                    })
                    .collect();
                softmax(&lin)
            })
            .collect()
    };
    let base_pis = pis_for(&theta[n1..]);
    let eval = |th: &[f64]| -> Vec<f64> {
        let beta = &th[..lay.n_beta];
        let gamma = &th[lay.n_beta..lay.n_beta + lay.n_gamma];
        let jumps = &th[lay.n_beta + lay.n_gamma..n1];
        let eta = &th[n1..];
        let p = if lay.n_beta > 0 {
            let s: f64 = beta.iter().zip(&profile.x).map(|(b, x)| b * x).sum();
            fit.spec.link.inverse(s)
        } else {
            1.0
        };
        let e = gamma.iter().zip(&profile.z).map(|(g, z)| g * z).sum::<f64>().exp();
        let mut acc = 0.0;
        let steps: Vec<f64> = jumps
            .iter()
            .map(|d| {
                acc += d;
                (-acc * e).exp()
            })
            .collect();
        let perturbed;
        let pis = if eta == &theta[n1..] {
            &base_pis
        } else {
            perturbed = pis_for(eta);
            &perturbed
        };
        let cond = if k == 0 { vec![0.0; jn] } else { discrete_cif(&steps, pis) };
        let mut out = cond.clone();
        out.extend(cond.iter().map(|f| p * f));
        out
    };
    let values = eval(&theta);
    let steps: Vec<f64> = theta.iter().map(|v| FD_STEP * v.abs().max(1e-2)).collect();
    let jac = central_jacobian(eval, &theta, &steps);
    // covariance of the active parameters: L1 block restricted, η block
    let active: Vec<usize> = (0..lay.n_beta + lay.n_gamma)
        .chain((0..k).map(|s| lay.jump_offset() + s))
        .collect();
    let cov1 = DMatrix::from_fn(n1, n1, |a, b| blocks.xi_l1[(active[a], active[b])]);
    let cov_eta = &fit.relhaz.fit.covariance;
    let se: Vec<f64> = (0..2 * jn)
        .map(|r| {
            let g: Vec<f64> = jac.row(r).iter().copied().collect();
            let v1 = quad_form(&g[..n1], &cov1);
            let v2 = if free > 0 { quad_form(&g[n1..], cov_eta) } else { 0.0 };
            (v1 + v2).max(0.0).sqrt()
        })
        .collect();
    CifWithSe {
        conditional: values[..jn].to_vec(),
        conditional_se: se[..jn].to_vec(),
        population: values[jn..].to_vec(),
        population_se: se[jn..].to_vec(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefRow {
    pub component: String,
    pub name: String,
    pub estimate: f64,
    pub se: Option<f64>,
}

/// Estimates with standard errors for every model component. The latency SEs
/// come from the partial likelihood in the cure-free model and from the full
/// `L1` information in the cure model.
pub fn coefficient_table(fit: &FitResult, dataset: &Dataset) -> Result<(Vec<CoefRow>, Option<String>)> {
    let mut rows = Vec::new();
    let mut note = None;
    let design = &fit.spec.design;
    let mut push = |component: &str, name: &str, estimate: f64, se: Option<f64>| {
        rows.push(CoefRow {
            component: component.into(),
            name: name.into(),
            estimate,
            se: se.filter(|v| v.is_finite()),
        });
    };
    if fit.is_cure_model() {
        let (beta_se, gamma_se) = match information_blocks(fit, dataset) {
            Ok(b) => (diag_se(&b.xi_beta()), diag_se(&b.xi_gamma())),
            Err(e) => {
                note = Some(e.to_string());
                (vec![None; fit.beta.len()], vec![None; fit.gamma.len()])
            }
        };
        for (k, name) in fit.incidence_names().iter().enumerate() {
            push("incidence", name, fit.beta[k], beta_se[k]);
        }
        for (k, name) in design.latency.iter().enumerate() {
            push("latency", name, fit.gamma[k], gamma_se[k]);
        }
    } else {
        let data = crate::em::CureData::new(dataset, design)?;
        let table = EventTable::from_dataset(dataset)?;
        let pl = weighted_partial_loglik(&fit.gamma, &vec![1.0; data.len()], &table, &data.z)?;
        let se = inverse_spd(&pl.information).map_or_else(|| vec![None; fit.gamma.len()], |c| diag_se(&c));
        for (k, name) in design.latency.iter().enumerate() {
            push("latency", name, fit.gamma[k], se[k]);
        }
    }
    let labels = fit.relhaz.basis.labels();
    let names: Vec<&String> = labels.iter().chain(&design.relhaz).collect();
    let rel_se = fit.relhaz.fit.standard_errors();
    for j in 0..fit.relhaz.num_causes.saturating_sub(1) {
        for (c, name) in names.iter().enumerate() {
            let label = if fit.relhaz.num_causes > 2 {
                format!("{name} [cause {}]", j + 1)
            } else {
                (*name).clone()
            };
            push("relhaz", &label, fit.relhaz.fit.eta[(j, c)], Some(rel_se[(j, c)]));
        }
    }
    Ok((rows, note))
}

fn diag_se(cov: &DMatrix<f64>) -> Vec<Option<f64>> {
    cov.diagonal()
        .iter()
        .map(|&v| (v >= 0.0).then(|| v.sqrt()))
        .collect()
}
