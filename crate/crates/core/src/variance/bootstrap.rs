//! Nonparametric bootstrap over subjects.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::em::{fit_model, FitResult, ModelSpec};
use crate::error::{Error, Result};
use crate::linalg::to_rows;
use crate::rng::stream_rng;

/// Minimum number of replicates accepted.
pub const MIN_REPLICATES: usize = 50;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub requested: usize,
    pub used: usize,
    pub dropped: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    pub mean: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub level: f64,
    /// Percentile intervals.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub seed: u64,
    pub level: f64,
    /// `false` refits the original sample every time (a determinism check).
    pub resample: bool,
}

impl BootstrapOptions {
    pub fn new(replicates: usize, seed: u64) -> Self {
        BootstrapOptions {
            replicates,
            seed,
            level: 0.95,
            resample: true,
        }
    }
}

/// Refits `spec` on `B` resamples and summarizes `functional` of each fit.
/// Replicates whose fit fails or does not converge are dropped.
pub fn bootstrap_covariance<F>(
    dataset: &Dataset,
    spec: &ModelSpec,
    opts: BootstrapOptions,
    functional: F,
) -> Result<BootstrapSummary>
where
    F: Fn(&FitResult, &Dataset) -> Result<Vec<f64>> + Sync,
{
    if opts.replicates < MIN_REPLICATES {
        return Err(Error::InvalidArgument(format!(
            "bootstrap needs at least {MIN_REPLICATES} replicates, got {}",
            opts.replicates
        )));
    }
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(Error::InvalidArgument("level must lie in (0, 1)".into()));
    }
    let n = dataset.len();
    let draws: Vec<Option<Vec<f64>>> = (0..opts.replicates)
        .into_par_iter()
        .map(|b| {
            let sample = if opts.resample {
                let mut rng = stream_rng(opts.seed, b as u64);
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                dataset.resample(&idx)
            } else {
                dataset.clone()
            };
            let fit = fit_model(&sample, spec).ok()?;
            if !fit.converged {
                return None;
            }
            functional(&fit, &sample).ok()
        })
        .collect();
    let values: Vec<Vec<f64>> = draws.into_iter().flatten().collect();
    let used = values.len();
    let dropped = opts.replicates - used;
    if used < 2 {
        return Err(Error::Solver(format!(
            "only {used} of {} bootstrap replicates converged",
            opts.replicates
        )));
    }
    let warning = (dropped * 10 > opts.replicates).then(|| {
        format!(
            "{dropped} of {} replicates dropped (more than 10%)",
            opts.replicates
        )
    });
    let dim = values[0].len();
    let mean: Vec<f64> = (0..dim)
        .map(|k| values.iter().map(|v| v[k]).sum::<f64>() / used as f64)
        .collect();
    let cov = DMatrix::from_fn(dim, dim, |a, b| {
        values
            .iter()
            .map(|v| (v[a] - mean[a]) * (v[b] - mean[b]))
            .sum::<f64>()
            / (used - 1) as f64
    });
    let alpha = (1.0 - opts.level) / 2.0;
    let (lower, upper): (Vec<f64>, Vec<f64>) = (0..dim)
        .map(|k| {
            let mut col: Vec<f64> = values.iter().map(|v| v[k]).collect();
            col.sort_by(f64::total_cmp);
            (
                crate::data::quantile_type7(&col, alpha),
                crate::data::quantile_type7(&col, 1.0 - alpha),
            )
        })
        .unzip();
    Ok(BootstrapSummary {
        requested: opts.replicates,
        used,
        dropped,
        warning,
        standard_errors: cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect(),
        covariance: to_rows(&cov),
        mean,
        level: opts.level,
        lower,
        upper,
    })
}
