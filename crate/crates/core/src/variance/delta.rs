//! Delta-method covariance of the conditional cause-specific cumulative
//! hazards `Λ_j(t_k | Y = 1) = sum_{s <= k} π_j(t_s) dΛ(t_s)` for a
//! covariate-free latency model.

use nalgebra::{DMatrix, DVector};

use super::information::InformationBlocks;
use crate::em::FitResult;
use crate::error::{Error, Result};
use crate::linalg::symmetrize;

/// `Ω = diag(π) - π πᵀ`.
pub fn omega(pi: &[f64]) -> DMatrix<f64> {
    let j = pi.len();
    DMatrix::from_fn(j, j, |a, b| {
        if a == b {
            pi[a] - pi[a] * pi[b]
        } else {
            -pi[a] * pi[b]
        }
    })
}

/// Index of `Λ_j(t_k)` in the stacked vector (cause fastest).
pub fn stack_index(k: usize, j: usize, num_causes: usize) -> usize {
    k * num_causes + j
}

#[derive(Debug, Clone)]
pub struct CumHazCovariance {
    pub event_times: Vec<f64>,
    pub num_causes: usize,
    /// `Λ_j(t_k)` stacked cause-fastest.
    pub cumhaz: Vec<f64>,
    /// Covariance of the jumps `λ_{js}` (same stacking).
    pub xi_lambda_jumps: DMatrix<f64>,
    /// Covariance of the cumulative hazards.
    pub xi_lambda: DMatrix<f64>,
    pub omega: Vec<DMatrix<f64>>,
    /// `α(t_s) = dΛ(t_s) (B(t_s), u)`.
    pub alpha: Vec<Vec<f64>>,
    pub pi: Vec<Vec<f64>>,
    /// `W_k = sum_{s <= k} Ω(t_s) ⊗ α(t_s)ᵀ`, each `J x J m`.
    pub w: Vec<DMatrix<f64>>,
}

impl CumHazCovariance {
    fn index_at(&self, t: f64) -> Option<usize> {
        self.event_times.partition_point(|&e| e <= t).checked_sub(1)
    }

    /// `Λ_j(t | Y = 1)` for every cause.
    pub fn cumhaz_at(&self, t: f64) -> Vec<f64> {
        match self.index_at(t) {
            None => vec![0.0; self.num_causes],
            Some(k) => (0..self.num_causes)
                .map(|j| self.cumhaz[stack_index(k, j, self.num_causes)])
                .collect(),
        }
    }

    /// Standard errors of `Λ_j(t | Y = 1)`.
    pub fn cumhaz_se(&self, t: f64) -> Vec<f64> {
        match self.index_at(t) {
            None => vec![0.0; self.num_causes],
            Some(k) => (0..self.num_causes)
                .map(|j| {
                    let i = stack_index(k, j, self.num_causes);
                    self.xi_lambda[(i, i)].max(0.0).sqrt()
                })
                .collect(),
        }
    }

    /// Standard errors of `F_j(t | Y = 1)`, by the delta method through
    /// `F_j = sum_s (λ_{js} / dΛ_s) exp(-Λ(t_{s-1})) (1 - exp(-dΛ_s))`.
    pub fn cif_se(&self, t: f64) -> Vec<f64> {
        let Some(k) = self.index_at(t) else {
            return vec![0.0; self.num_causes];
        };
        let jn = self.num_causes;
        let n = (k + 1) * jn;
        let mut jumps: Vec<Vec<f64>> = Vec::with_capacity(k + 1);
        for s in 0..=k {
            let row: Vec<f64> = (0..jn)
                .map(|j| {
                    let i = stack_index(s, j, jn);
                    let prev = if s == 0 { 0.0 } else { self.cumhaz[stack_index(s - 1, j, jn)] };
                    self.cumhaz[i] - prev
                })
                .collect();
            jumps.push(row);
        }
        let totals: Vec<f64> = jumps.iter().map(|r| r.iter().sum()).collect();
        let mut before = vec![0.0; k + 1];
        for s in 1..=k {
            before[s] = before[s - 1] + totals[s - 1];
        }
        (0..jn)
            .map(|j| {
                // dF_j / dλ_{ls}
                let mut g = DVector::zeros(n);
                for s in 0..=k {
                    let d = totals[s];
                    let surv = (-before[s]).exp();
                    let drop = 1.0 - (-d).exp();
                    let share = jumps[s][j] / d;
                    // λ_{js} / d term
                    for l in 0..jn {
                        let dshare = if l == j { 1.0 / d - share / d } else { -share / d };
                        let ddrop = (-d).exp();
                        g[stack_index(s, l, jn)] += surv * (dshare * drop + share * ddrop);
                    }
                    // exp(-Λ(t_{s-1})) depends on the earlier jumps
                    let term = share * surv * drop;
                    for v in 0..s {
                        for l in 0..jn {
                            g[stack_index(v, l, jn)] -= term;
                        }
                    }
                }
                let sub = self.xi_lambda_jumps.view((0, 0), (n, n));
                (g.transpose() * sub * &g)[(0, 0)].max(0.0).sqrt()
            })
            .collect()
    }
}

/// Assembles the covariance for relative-hazard covariates `u`.
pub fn delta_cumhaz_covariance(
    fit: &FitResult,
    blocks: &InformationBlocks,
    u: &[f64],
) -> Result<CumHazCovariance> {
    if !fit.gamma.is_empty() {
        return Err(Error::LatencyCovariatesPresent);
    }
    let jn = fit.relhaz.num_causes;
    let m = fit.relhaz.dim();
    let times = &fit.baseline.event_times;
    let kn = times.len();
    let dl = &fit.baseline.jumps;
    let xi_dl = blocks.xi_dlambda();

    let mut pis = Vec::with_capacity(kn);
    let mut omegas = Vec::with_capacity(kn);
    let mut alphas = Vec::with_capacity(kn);
    // Jacobian of the jumps λ_{js} with respect to τ = (η, dΛ)
    let mut jac = DMatrix::zeros(kn * jn, jn * m + kn);
    for s in 0..kn {
        let pi: Vec<f64> = fit.relhaz.pi(times[s], u);
        let om = omega(&pi);
        let alpha: Vec<f64> = fit.relhaz.regressors(times[s], u).iter().map(|x| dl[s] * x).collect();
        for j in 0..jn {
            let row = stack_index(s, j, jn);
            for l in 0..jn {
                for c in 0..m {
                    jac[(row, l * m + c)] = om[(j, l)] * alpha[c];
                }
            }
            jac[(row, jn * m + s)] = pi[j];
        }
        pis.push(pi);
        omegas.push(om);
        alphas.push(alpha);
    }
    let mut xi_tau = DMatrix::zeros(jn * m + kn, jn * m + kn);
    xi_tau.view_mut((0, 0), (jn * m, jn * m)).copy_from(&blocks.xi_eta);
    xi_tau.view_mut((jn * m, jn * m), (kn, kn)).copy_from(&xi_dl);
    let xi_jumps = symmetrize(&(&jac * xi_tau * jac.transpose()));
    let xi_cum = symmetrize(&prefix_sum_rows_cols(&xi_jumps, jn));

    let mut w = Vec::with_capacity(kn);
    let mut acc = DMatrix::zeros(jn, jn * m);
    for s in 0..kn {
        acc += kron_row(&omegas[s], &alphas[s]);
        w.push(acc.clone());
    }
    let mut cumhaz = vec![0.0; kn * jn];
    for s in 0..kn {
        for j in 0..jn {
            let prev = if s == 0 { 0.0 } else { cumhaz[stack_index(s - 1, j, jn)] };
            cumhaz[stack_index(s, j, jn)] = prev + pis[s][j] * dl[s];
        }
    }
    Ok(CumHazCovariance {
        event_times: times.clone(),
        num_causes: jn,
        cumhaz,
        xi_lambda_jumps: xi_jumps,
        xi_lambda: xi_cum,
        omega: omegas,
        alpha: alphas,
        pi: pis,
        w,
    })
}

/// `Ω ⊗ αᵀ`: a `J x J m` matrix.
pub fn kron_row(om: &DMatrix<f64>, alpha: &[f64]) -> DMatrix<f64> {
    let jn = om.nrows();
    let m = alpha.len();
    DMatrix::from_fn(jn, jn * m, |a, c| om[(a, c / m)] * alpha[c % m])
}

/// Applies the prefix-summation operator `P` on both sides, `P X Pᵀ`, where
/// `P` sums the time blocks `1..=k` for each cause.
pub fn prefix_sum_rows_cols(x: &DMatrix<f64>, num_causes: usize) -> DMatrix<f64> {
    let rows = prefix_sum_rows(x, num_causes);
    prefix_sum_rows(&rows.transpose(), num_causes).transpose()
}

/// `P X`: cumulative sums over time blocks, cause by cause.
pub fn prefix_sum_rows(x: &DMatrix<f64>, num_causes: usize) -> DMatrix<f64> {
    let mut out = x.clone();
    for r in num_causes..x.nrows() {
        let prev = out.row(r - num_causes).into_owned();
        let mut row = out.row_mut(r);
        row += prev;
    }
    out
}

/// The covariance assembled term by term:
/// `W_k Ξ_η W_lᵀ + sum_{s <= k} sum_{v <= l} Ξ_dΛ[s, v] Π(t_s) Π(t_v)ᵀ`.
pub fn block_expansion(cov: &CumHazCovariance, blocks: &InformationBlocks, k: usize, l: usize) -> DMatrix<f64> {
    let xi_dl = blocks.xi_dlambda();
    let mut out = &cov.w[k] * &blocks.xi_eta * cov.w[l].transpose();
    let jn = cov.num_causes;
    for s in 0..=k {
        let ps = DVector::from_column_slice(&cov.pi[s]);
        for v in 0..=l {
            let pv = DVector::from_column_slice(&cov.pi[v]);
            out += &ps * pv.transpose() * xi_dl[(s, v)];
        }
    }
    debug_assert_eq!(out.nrows(), jn);
    out
}
