//! Bootstrap refitting with percentile bands.
//!
//! Replicate `b` draws its indices from `rng::stream(seed, b)`, so each
//! replicate is reproducible on its own and replicates can run in any
//! order; results are merged by replicate index.

use crate::coords::PolarSample;
use crate::error::{Result, SparError};
use crate::local_diag::empirical_quantile;
use crate::rng::stream;
use crate::spar_model::{FitConfig, Normalization, SparFit};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const DEFAULT_REPLICATES: usize = 100;
/// Four days of hourly observations.
pub const DEFAULT_BLOCK_LEN: usize = 96;
/// Largest tolerated share of failed replicate fits.
pub const MAX_FAILURE_SHARE: f64 = 0.2;
/// Grid positions searched on either side of the point fit's smoothing
/// parameter in each replicate.
pub const LAMBDA_NEIGHBOURS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleMode {
    Iid,
    Block,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapPlan {
    pub replicates: usize,
    pub mode: ResampleMode,
    pub block_len: usize,
    pub seed: u64,
    pub alpha: f64,
}

impl Default for BootstrapPlan {
    fn default() -> Self {
        BootstrapPlan { replicates: DEFAULT_REPLICATES, mode: ResampleMode::Iid, block_len: 1, seed: 0, alpha: 0.05 }
    }
}

impl BootstrapPlan {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.replicates < 2 {
            return Err(SparError::Config(format!("need at least 2 replicates, got {}", self.replicates)));
        }
        if self.mode == ResampleMode::Block && !(self.block_len >= 1 && self.block_len <= n) {
            return Err(SparError::Config(format!("block length must lie in 1..={n}, got {}", self.block_len)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(SparError::Config(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        Ok(())
    }

    fn effective_block(&self) -> usize {
        match self.mode {
            ResampleMode::Iid => 1,
            ResampleMode::Block => self.block_len,
        }
    }
}

/// Indices of replicate `b`: `ceil(n / L)` circular blocks of length `L`
/// with uniform starts, concatenated and cut to `n`. Iid sampling is the
/// case `L = 1`.
pub fn resample_indices(n: usize, plan: &BootstrapPlan, b: u64) -> Result<Vec<usize>> {
    plan.validate(n)?;
    let len = plan.effective_block();
    let mut rng = stream(plan.seed, b);
    let mut idx = Vec::with_capacity(n + len);
    while idx.len() < n {
        let start = rng.random_range(0..n);
        idx.extend((0..len).map(|j| (start + j) % n));
    }
    idx.truncate(n);
    Ok(idx)
}

pub fn resample(data: &PolarSample, plan: &BootstrapPlan, b: u64) -> Result<PolarSample> {
    Ok(data.subset(&resample_indices(data.len(), plan, b)?))
}

/// A model component or derived quantity evaluated on an angle grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    AngularDensity,
    Threshold,
    Scale,
    Shape,
    /// Contour radius at a density level on the modelling scale.
    Isodensity { level: f64 },
    ReturnLevel { a: f64 },
}

impl Target {
    pub fn name(&self) -> String {
        match self {
            Target::AngularDensity => "angular_density".into(),
            Target::Threshold => "threshold".into(),
            Target::Scale => "scale".into(),
            Target::Shape => "shape".into(),
            Target::Isodensity { level } => format!("isodensity_{level:e}"),
            Target::ReturnLevel { a } => format!("return_level_{a:e}"),
        }
    }

    /// Values on `q_grid`; `None` where the quantity does not exist.
    pub fn evaluate(&self, fit: &SparFit, q_grid: &[f64]) -> Result<Vec<Option<f64>>> {
        let each = |f: &dyn Fn(f64) -> f64| q_grid.iter().map(|&q| Some(f(q))).collect();
        Ok(match *self {
            Target::AngularDensity => each(&|q| fit.angular_density(q)),
            Target::Threshold => each(&|q| fit.threshold.u(q)),
            Target::Scale => each(&|q| fit.gp.tau(q)),
            Target::Shape => each(&|q| fit.gp.xi(q)),
            Target::Isodensity { level } => fit.isodensity_contour(level, q_grid)?.radii,
            Target::ReturnLevel { a } => fit.return_level_set(a, q_grid)?.into_iter().map(Some).collect(),
        })
    }
}

/// Pointwise percentile band. Angles where no replicate defines the target
/// hold NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandEstimate {
    pub grid: Vec<f64>,
    pub median: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub n_defined: Vec<usize>,
}

impl BandEstimate {
    /// `values[b][i]` is replicate `b` at angle `i`.
    pub fn from_replicates(grid: &[f64], values: &[Vec<Option<f64>>], alpha: f64) -> BandEstimate {
        let mut band = BandEstimate {
            grid: grid.to_vec(),
            median: Vec::with_capacity(grid.len()),
            lower: Vec::with_capacity(grid.len()),
            upper: Vec::with_capacity(grid.len()),
            n_defined: Vec::with_capacity(grid.len()),
        };
        for i in 0..grid.len() {
            let mut v: Vec<f64> = values.iter().filter_map(|row| row[i]).filter(|x| x.is_finite()).collect();
            v.sort_by(f64::total_cmp);
            band.n_defined.push(v.len());
            if v.is_empty() {
                band.median.push(f64::NAN);
                band.lower.push(f64::NAN);
                band.upper.push(f64::NAN);
            } else {
                band.median.push(empirical_quantile(&v, 0.5));
                band.lower.push(empirical_quantile(&v, alpha / 2.0));
                band.upper.push(empirical_quantile(&v, 1.0 - alpha / 2.0));
            }
        }
        band
    }

    pub fn contains(&self, i: usize, value: f64) -> bool {
        self.lower[i] <= value && value <= self.upper[i]
    }
}

/// Bands for several targets from one set of replicate fits.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    pub targets: Vec<Target>,
    pub bands: Vec<BandEstimate>,
    /// Replicate index and error message of every failed fit.
    pub failures: Vec<(usize, String)>,
}

/// Grid values within `LAMBDA_NEIGHBOURS` positions of the one closest to
/// `chosen` on the log scale.
fn local_window(grid: &[f64], chosen: f64) -> Vec<f64> {
    let mut g = grid.to_vec();
    g.sort_by(f64::total_cmp);
    g.dedup();
    if g.len() <= 1 {
        return g;
    }
    let dist = |l: f64| (l.max(1e-300).ln() - chosen.max(1e-300).ln()).abs();
    let best = (0..g.len()).min_by(|&a, &b| dist(g[a]).total_cmp(&dist(g[b]))).unwrap_or(0);
    let lo = best.saturating_sub(LAMBDA_NEIGHBOURS);
    let hi = (best + LAMBDA_NEIGHBOURS + 1).min(g.len());
    g[lo..hi].to_vec()
}

/// Configuration for replicate fits: smoothing parameters re-selected on a
/// narrow grid window around the point fit's choices.
pub fn replicate_config(config: &FitConfig, point: &SparFit) -> FitConfig {
    let mut c = config.clone();
    c.threshold_lambdas = local_window(&config.threshold_lambdas, point.threshold.lambda_u);
    c.gp_lambdas = local_window(&config.gp_lambdas, point.gp.lambda_tau);
    c
}

/// Refits the full pipeline on each replicate and summarises every target.
pub fn bootstrap(
    data: &PolarSample,
    config: &FitConfig,
    normalization: Normalization,
    point: &SparFit,
    plan: &BootstrapPlan,
    targets: &[Target],
    q_grid: &[f64],
) -> Result<BootstrapResult> {
    plan.validate(data.len())?;
    config.validate()?;
    let rep_config = replicate_config(config, point);
    let outcomes: Vec<Result<Vec<Vec<Option<f64>>>>> = (0..plan.replicates)
        .into_par_iter()
        .map(|b| {
            let sample = resample(data, plan, b as u64)?;
            let fit = SparFit::fit(&sample, &rep_config, normalization)?;
            targets.iter().map(|t| t.evaluate(&fit, q_grid)).collect()
        })
        .collect();
    let mut per_target: Vec<Vec<Vec<Option<f64>>>> = vec![Vec::with_capacity(plan.replicates); targets.len()];
    let mut failures = Vec::new();
    for (b, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(values) => values.into_iter().zip(per_target.iter_mut()).for_each(|(v, acc)| acc.push(v)),
            Err(e) => failures.push((b, e.to_string())),
        }
    }
    if failures.len() as f64 > MAX_FAILURE_SHARE * plan.replicates as f64 {
        return Err(SparError::Fitting {
            message: format!("{} of {} bootstrap replicates failed", failures.len(), plan.replicates),
            trace: failures.iter().map(|(b, e)| format!("replicate {b}: {e}")).collect(),
        });
    }
    let bands = per_target.iter().map(|v| BandEstimate::from_replicates(q_grid, v, plan.alpha)).collect();
    Ok(BootstrapResult { targets: targets.to_vec(), bands, failures })
}

/// Single-target convenience wrapper around [`bootstrap`] that fits the
/// point estimate itself.
pub fn bootstrap_bands(
    data: &PolarSample,
    config: &FitConfig,
    plan: &BootstrapPlan,
    target: Target,
    q_grid: &[f64],
) -> Result<BandEstimate> {
    let point = SparFit::fit(data, config, Normalization::IDENTITY)?;
    let mut out = bootstrap(data, config, Normalization::IDENTITY, &point, plan, &[target], q_grid)?;
    Ok(out.bands.remove(0))
}
