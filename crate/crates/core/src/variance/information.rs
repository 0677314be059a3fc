//! Observed information of the incidence/latency factor `L1` in
//! `(β, γ, dΛ0(t_1), ..., dΛ0(t_K))`, by central differences of its analytic
//! gradient, and the multinomial block of the relative hazards.

use nalgebra::DMatrix;

use crate::data::Dataset;
use crate::em::{CureData, FitResult};
use crate::error::{Error, Result};
use crate::glm::LinkFunction;
use crate::linalg::{central_jacobian, symmetrize};

/// Relative central-difference step (scaled by `max(|θ_k|, 1e-2)`).
pub const FD_STEP: f64 = 1e-5;

/// Positions of the three parameter groups in the stacked `L1` vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct L1Layout {
    pub n_beta: usize,
    pub n_gamma: usize,
    pub n_jumps: usize,
}

impl L1Layout {
    pub fn dim(&self) -> usize {
        self.n_beta + self.n_gamma + self.n_jumps
    }

    pub fn gamma_offset(&self) -> usize {
        self.n_beta
    }

    pub fn jump_offset(&self) -> usize {
        self.n_beta + self.n_gamma
    }

    pub fn split<'a>(&self, theta: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        let (b, rest) = theta.split_at(self.n_beta);
        let (g, j) = rest.split_at(self.n_gamma);
        (b, g, j)
    }
}

/// `log L1` as a function of the stacked parameter vector.
pub struct L1Objective<'a> {
    pub data: &'a CureData,
    pub link: LinkFunction,
    /// `false` fixes `p = 1` (the cure-free model, no `β` block).
    pub cure: bool,
    pub zero_tail: bool,
    pub layout: L1Layout,
    /// Number of event times `<= t_i` for every subject.
    at_or_before: Vec<usize>,
}

impl<'a> L1Objective<'a> {
    pub fn new(data: &'a CureData, link: LinkFunction, cure: bool, zero_tail: bool) -> Self {
        let layout = L1Layout {
            n_beta: if cure { data.x.ncols() } else { 0 },
            n_gamma: data.z.ncols(),
            n_jumps: data.table.len(),
        };
        let at_or_before = data
            .times
            .iter()
            .map(|&t| data.table.count_at_or_before(t))
            .collect();
        L1Objective {
            data,
            link,
            cure,
            zero_tail,
            layout,
            at_or_before,
        }
    }

    /// Stacks the estimates of a fit.
    pub fn pack(&self, fit: &FitResult) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.layout.dim());
        if self.cure {
            theta.extend_from_slice(&fit.beta);
        }
        theta.extend_from_slice(&fit.gamma);
        theta.extend_from_slice(&fit.baseline.jumps);
        theta
    }

    fn beyond_tail(&self, i: usize) -> bool {
        self.zero_tail && self.at_or_before[i] == self.layout.n_jumps && !self.data.is_event[i]
    }

    fn cumulative(prefix: &[f64], k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            prefix[k - 1]
        }
    }

    fn prefix(jumps: &[f64]) -> Vec<f64> {
        let mut acc = 0.0;
        jumps
            .iter()
            .map(|&j| {
                acc += j;
                acc
            })
            .collect()
    }

    fn linear(m: &DMatrix<f64>, coef: &[f64], i: usize) -> f64 {
        coef.iter().enumerate().map(|(k, c)| c * m[(i, k)]).sum()
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        let (beta, gamma, jumps) = self.layout.split(theta);
        let prefix = Self::prefix(jumps);
        let mut total = 0.0;
        for i in 0..self.data.len() {
            let p = if self.cure {
                self.link.inverse(Self::linear(&self.data.x, beta, i))
            } else {
                1.0
            };
            let lp = Self::linear(&self.data.z, gamma, i);
            let c = Self::cumulative(&prefix, self.at_or_before[i]);
            if self.data.is_event[i] {
                let k = self.at_or_before[i] - 1;
                total += p.ln() + jumps[k].ln() + lp - c * lp.exp();
            } else if self.beyond_tail(i) {
                total += (1.0 - p).ln();
            } else {
                let s = (-c * lp.exp()).exp();
                total += if self.cure {
                    (p * s + 1.0 - p).ln()
                } else {
                    -c * lp.exp()
                };
            }
        }
        total
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let lay = self.layout;
        let (beta, gamma, jumps) = lay.split(theta);
        let prefix = Self::prefix(jumps);
        let mut grad = vec![0.0; lay.dim()];
        // per-subject hazard multiplier entering the jump derivatives
        let mut mult = vec![0.0; self.data.len()];
        for i in 0..self.data.len() {
            let (p, dp) = if self.cure {
                let s = Self::linear(&self.data.x, beta, i);
                (self.link.inverse(s), self.link.d_inverse(s))
            } else {
                (1.0, 0.0)
            };
            let lp = Self::linear(&self.data.z, gamma, i);
            let e = lp.exp();
            let c = Self::cumulative(&prefix, self.at_or_before[i]);
            let (db, dc_coef) = if self.data.is_event[i] {
                grad[lay.jump_offset() + self.at_or_before[i] - 1] += 1.0 / jumps[self.at_or_before[i] - 1];
                mult[i] = e;
                (dp / p, 1.0 - c * e)
            } else if self.beyond_tail(i) {
                (-dp / (1.0 - p), 0.0)
            } else {
                let s = (-c * e).exp();
                let w = if self.cure { p * s / (p * s + 1.0 - p) } else { 1.0 };
                mult[i] = w * e;
                ((s - 1.0) * dp / (p * s + 1.0 - p), -w * c * e)
            };
            if self.cure {
                for k in 0..lay.n_beta {
                    grad[k] += db * self.data.x[(i, k)];
                }
            }
            for k in 0..lay.n_gamma {
                grad[lay.gamma_offset() + k] += dc_coef * self.data.z[(i, k)];
            }
        }
        // risk-set sums of the multipliers
        let table = &self.data.table;
        let mut acc = 0.0;
        let mut pos = table.order.len();
        for k in (0..lay.n_jumps).rev() {
            while pos > table.risk_start[k] {
                pos -= 1;
                acc += mult[table.order[pos]];
            }
            grad[lay.jump_offset() + k] -= acc;
        }
        grad
    }

    /// Minus the central-difference Jacobian of the gradient, symmetrized.
    pub fn information(&self, theta: &[f64]) -> DMatrix<f64> {
        let steps: Vec<f64> = theta.iter().map(|v| FD_STEP * v.abs().max(1e-2)).collect();
        let h = central_jacobian(|t| self.gradient(t), theta, &steps);
        -symmetrize(&h)
    }
}

/// The two diagonal blocks of the observed information; the cross block is
/// zero because the likelihood factorizes.
#[derive(Debug, Clone)]
pub struct InformationBlocks {
    pub layout: L1Layout,
    /// Information of `L1` in `(β, γ, dΛ)`.
    pub info_l1: DMatrix<f64>,
    /// Its inverse.
    pub xi_l1: DMatrix<f64>,
    /// Multinomial information of all `J m` relative-hazard coefficients.
    pub info_eta: DMatrix<f64>,
    /// Moore–Penrose inverse of `info_eta`.
    pub xi_eta: DMatrix<f64>,
}

impl InformationBlocks {
    pub fn xi_beta(&self) -> DMatrix<f64> {
        let n = self.layout.n_beta;
        self.xi_l1.view((0, 0), (n, n)).into_owned()
    }

    pub fn xi_gamma(&self) -> DMatrix<f64> {
        let (o, n) = (self.layout.gamma_offset(), self.layout.n_gamma);
        self.xi_l1.view((o, o), (n, n)).into_owned()
    }

    pub fn xi_dlambda(&self) -> DMatrix<f64> {
        let (o, n) = (self.layout.jump_offset(), self.layout.n_jumps);
        self.xi_l1.view((o, o), (n, n)).into_owned()
    }

    /// Block-diagonal information of `(β, γ, dΛ, η)`.
    pub fn full_information(&self) -> DMatrix<f64> {
        let a = self.info_l1.nrows();
        let b = self.info_eta.nrows();
        let mut m = DMatrix::zeros(a + b, a + b);
        m.view_mut((0, 0), (a, a)).copy_from(&self.info_l1);
        m.view_mut((a, a), (b, b)).copy_from(&self.info_eta);
        m
    }
}

pub fn information_blocks(fit: &FitResult, dataset: &Dataset) -> Result<InformationBlocks> {
    let data = CureData::new(dataset, &fit.spec.design)?;
    let obj = L1Objective::new(&data, fit.spec.link, fit.is_cure_model(), fit.baseline.zero_tail);
    let theta = obj.pack(fit);
    let info_l1 = obj.information(&theta);
    let xi_l1 = info_l1
        .clone()
        .cholesky()
        .map(|c| symmetrize(&c.inverse()))
        .ok_or_else(|| {
            Error::Singular(
                "information of (beta, gamma, dLambda) is not positive definite; use the bootstrap"
                    .into(),
            )
        })?;
    Ok(InformationBlocks {
        layout: obj.layout,
        info_l1,
        xi_l1,
        info_eta: fit.relhaz.fit.information.clone(),
        xi_eta: fit.relhaz.fit.pseudo_inverse.clone(),
    })
}
