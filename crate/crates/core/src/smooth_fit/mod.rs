//! Penalised spline regressions for the threshold and generalised Pareto
//! tail, with smoothing parameters chosen by angle-stratified
//! cross-validation over a logarithmic grid.

mod gp_reg;
mod term;
mod threshold;

pub use gp_reg::{fit_gp, gp_gradient, gp_negloglik, GpFit, ShapeBasis, ShapeFunction};
pub use threshold::{ald_gradient, ald_objective, fit_threshold, mod_check, mod_check_deriv, pinball, ThresholdFit};

use crate::error::{Result, SparError};
use crate::optimize::{minimize, LbfgsOptions, Objective, OptimResult, Termination};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const DEFAULT_C: f64 = 0.5;

/// `n` logarithmically spaced values from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

#[derive(Debug, Clone)]
pub struct SmoothingOptions {
    /// Candidate smoothing parameters; a single value skips cross-validation.
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
    pub optimizer: LbfgsOptions,
}

impl Default for SmoothingOptions {
    fn default() -> Self {
        SmoothingOptions { lambda_grid: log_grid(1e-4, 1e4, 12), folds: 5, optimizer: LbfgsOptions::default() }
    }
}

impl SmoothingOptions {
    pub fn fixed(lambda: f64) -> Self {
        SmoothingOptions { lambda_grid: vec![lambda], ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda_grid.is_empty() || self.lambda_grid.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(SparError::Config("smoothing grid must hold finite values >= 0".into()));
        }
        if self.lambda_grid.len() > 1 && self.folds < 2 {
            return Err(SparError::Config("cross-validation needs at least 2 folds".into()));
        }
        Ok(())
    }
}

/// Held-out score of one candidate smoothing parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub lambda: f64,
    pub score: f64,
}

/// Fold labels: rank by angle (ties by index), modulo `folds`, so every
/// fold spans the whole circle.
pub(crate) fn fold_ids(angles: &[f64], folds: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..angles.len()).collect();
    order.sort_by(|&a, &b| angles[a].total_cmp(&angles[b]).then(a.cmp(&b)));
    let mut ids = vec![0; angles.len()];
    for (rank, &i) in order.iter().enumerate() {
        ids[i] = rank % folds;
    }
    ids
}

pub(crate) fn split(ids: &[usize], fold: usize) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, &f) in ids.iter().enumerate() {
        if f == fold {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    (train, test)
}

/// Result of a smoothing-parameter search.
pub(crate) struct Selection {
    pub lambda: f64,
    pub start: Vec<f64>,
    pub scores: Vec<CvScore>,
}

/// Runs each fold's warm-started path from the largest to the smallest
/// smoothing parameter and picks the grid value with the lowest summed
/// held-out score (ties go to the smoother fit).
pub(crate) fn select_lambda<Fit, Score>(
    grid: &[f64],
    folds: usize,
    x0: &[f64],
    fit: Fit,
    score: Score,
) -> Selection
where
    Fit: Fn(usize, f64, &[f64]) -> Option<Vec<f64>> + Sync,
    Score: Fn(usize, &[f64]) -> f64 + Sync,
{
    let mut desc: Vec<f64> = grid.to_vec();
    desc.sort_by(|a, b| b.total_cmp(a));
    desc.dedup();
    if desc.len() == 1 {
        return Selection { lambda: desc[0], start: x0.to_vec(), scores: vec![] };
    }
    let per_fold: Vec<Vec<(f64, Option<Vec<f64>>)>> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let mut start = x0.to_vec();
            desc.iter()
                .map(|&lambda| match fit(f, lambda, &start) {
                    Some(x) => {
                        let s = score(f, &x);
                        start = x.clone();
                        (s, Some(x))
                    }
                    None => (f64::INFINITY, None),
                })
                .collect()
        })
        .collect();
    let mut scores = Vec::with_capacity(desc.len());
    let mut best = 0;
    for (j, &lambda) in desc.iter().enumerate() {
        let s: f64 = per_fold.iter().map(|v| v[j].0).sum();
        let s = if s.is_nan() { f64::INFINITY } else { s };
        scores.push(CvScore { lambda, score: s });
        if s < scores[best].score {
            best = j;
        }
    }
    // average the fold solutions at the chosen value as the final start
    let sols: Vec<&Vec<f64>> = per_fold.iter().filter_map(|v| v[best].1.as_ref()).collect();
    let start = if sols.is_empty() {
        x0.to_vec()
    } else {
        (0..x0.len()).map(|i| sols.iter().map(|s| s[i]).sum::<f64>() / sols.len() as f64).collect()
    };
    scores.reverse();
    Selection { lambda: desc[best], start, scores }
}

/// Final-fit optimisation; hitting the iteration cap is a fitting error.
pub(crate) fn final_minimize<O: Objective>(
    obj: &O,
    starts: &[Vec<f64>],
    opts: &LbfgsOptions,
    what: &str,
) -> Result<OptimResult> {
    let mut last_trace = Vec::new();
    for x0 in starts {
        match minimize(obj, x0, opts) {
            Some(r) if r.termination != Termination::MaxIterations => return Ok(r),
            Some(r) => last_trace = r.trace,
            None => {}
        }
    }
    Err(SparError::Fitting {
        message: format!("{what} did not converge in {} iterations", opts.max_iter),
        trace: last_trace.iter().map(|v| format!("{v:.10e}")).collect(),
    })
}
