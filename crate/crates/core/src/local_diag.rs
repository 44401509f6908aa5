//! Local stationary inference over angular windows and goodness-of-fit
//! diagnostics: localised QQ pairs and an angular histogram to set against
//! the kernel density estimate.

use crate::coords::PolarSample;
use crate::error::{Result, SparError};
use crate::gp::{fit_gp_mle, gp_quantile};
use crate::spar_model::{angle_grid, SparFit};
pub use crate::special::quantile_sorted as empirical_quantile;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const DEFAULT_M: usize = 200;
pub const DEFAULT_N: usize = 500;
/// Windows with fewer exceedances than this are flagged unreliable.
pub const MIN_EXCEEDANCES: usize = 30;
pub const DEFAULT_QQ_CENTERS: [f64; 8] = [-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0];

/// Circular distance on (-2, 2], in [0, 2].
pub fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    d.min(4.0 - d)
}

fn by_distance(d: &[f64]) -> impl Fn(&usize, &usize) -> std::cmp::Ordering + '_ {
    move |&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b))
}

/// Indices of the `n_nearest` angles closest to `center`, ordered by
/// distance then index. Reference implementation: a full sort.
pub fn nearest_brute_force(angles: &[f64], center: f64, n_nearest: usize) -> Vec<usize> {
    let d: Vec<f64> = angles.iter().map(|&q| angular_distance(q, center)).collect();
    let mut idx: Vec<usize> = (0..angles.len()).collect();
    idx.sort_by(by_distance(&d));
    idx.truncate(n_nearest);
    idx
}

/// Same selection as [`nearest_brute_force`] in linear expected time.
pub fn nearest_indices(angles: &[f64], center: f64, n_nearest: usize) -> Vec<usize> {
    let n_nearest = n_nearest.min(angles.len());
    if n_nearest == 0 {
        return vec![];
    }
    let d: Vec<f64> = angles.iter().map(|&q| angular_distance(q, center)).collect();
    let mut idx: Vec<usize> = (0..angles.len()).collect();
    let cmp = by_distance(&d);
    if n_nearest < idx.len() {
        idx.select_nth_unstable_by(n_nearest - 1, &cmp);
        idx.truncate(n_nearest);
    }
    idx.sort_by(cmp);
    idx
}

/// Stationary estimates for one angular window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalEstimate {
    pub q: f64,
    pub u_local: f64,
    pub tau_local: f64,
    pub xi_local: f64,
    pub se_tau: f64,
    pub se_xi: f64,
    pub window_size: usize,
    pub n_exceedances: usize,
    /// False when the window has too few exceedances or the GP fit failed.
    pub reliable: bool,
}

/// Default reference angles for local fits.
pub fn local_grid(m: usize) -> Vec<f64> {
    angle_grid(m)
}

fn check_window(data: &PolarSample, n_nearest: usize) -> Result<()> {
    if n_nearest == 0 || n_nearest > data.len() {
        return Err(SparError::domain(format!("window size must lie in 1..={}, got {n_nearest}", data.len())));
    }
    Ok(())
}

/// Per grid angle: the `n_nearest` closest observations, their empirical
/// `gamma`-quantile as local threshold and a GP maximum-likelihood fit to
/// the excesses above it.
pub fn local_fit(data: &PolarSample, q_grid: &[f64], n_nearest: usize, gamma: f64) -> Result<Vec<LocalEstimate>> {
    check_window(data, n_nearest)?;
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(SparError::domain(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    Ok(q_grid
        .par_iter()
        .map(|&q| {
            let mut r: Vec<f64> = nearest_indices(&data.q, q, n_nearest).iter().map(|&i| data.r[i]).collect();
            r.sort_by(f64::total_cmp);
            let u = empirical_quantile(&r, gamma);
            let excess: Vec<f64> = r.iter().filter(|&&x| x > u).map(|&x| x - u).collect();
            let fit = fit_gp_mle(&excess).ok();
            LocalEstimate {
                q,
                u_local: u,
                tau_local: fit.map_or(f64::NAN, |f| f.tau),
                xi_local: fit.map_or(f64::NAN, |f| f.xi),
                se_tau: fit.map_or(f64::NAN, |f| f.se_tau),
                se_xi: fit.map_or(f64::NAN, |f| f.se_xi),
                window_size: r.len(),
                n_exceedances: excess.len(),
                reliable: fit.is_some() && excess.len() >= MIN_EXCEEDANCES,
            }
        })
        .collect())
}

/// Paired empirical and model quantiles of the radii above the threshold
/// in one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalQq {
    pub center: f64,
    /// Non-exceedance probabilities conditional on exceeding `u(center)`.
    pub probs: Vec<f64>,
    pub empirical: Vec<f64>,
    pub model: Vec<f64>,
    pub n_exceedances: usize,
}

/// Localised QQ data: for each center, window radii above the fitted
/// threshold at the center against `u(q) + gp_quantile(p)`. Centers with
/// no exceedances yield NaN empirical quantiles.
pub fn local_qq(
    data: &PolarSample,
    fit: &SparFit,
    centers: &[f64],
    n_nearest: usize,
    probs: &[f64],
) -> Result<Vec<LocalQq>> {
    check_window(data, n_nearest)?;
    if probs.iter().any(|p| !(*p >= 0.0 && *p < 1.0)) {
        return Err(SparError::domain("QQ probabilities must lie in [0, 1)"));
    }
    centers
        .iter()
        .map(|&c| {
            let p = fit.params(c);
            let mut r: Vec<f64> =
                nearest_indices(&data.q, c, n_nearest).iter().map(|&i| data.r[i]).filter(|&x| x > p.u).collect();
            r.sort_by(f64::total_cmp);
            let empirical =
                probs.iter().map(|&pr| if r.is_empty() { f64::NAN } else { empirical_quantile(&r, pr) }).collect();
            let model = probs.iter().map(|&pr| Ok(p.u + gp_quantile(pr, p.tau, p.xi)?)).collect::<Result<_>>()?;
            Ok(LocalQq { center: c, probs: probs.to_vec(), empirical, model, n_exceedances: r.len() })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularHistogram {
    pub centers: Vec<f64>,
    pub density: Vec<f64>,
}

impl AngularHistogram {
    pub fn width(&self) -> f64 {
        4.0 / self.density.len() as f64
    }
}

/// Equal-width bins `(-2 + j w, -2 + (j+1) w]` normalised to integrate to 1.
pub fn angular_histogram(angles: &[f64], bins: usize) -> Result<AngularHistogram> {
    if bins < 8 {
        return Err(SparError::domain(format!("need at least 8 bins, got {bins}")));
    }
    if angles.is_empty() {
        return Err(SparError::domain("histogram of an empty sample"));
    }
    let w = 4.0 / bins as f64;
    let mut counts = vec![0usize; bins];
    for &q in angles {
        if !(q > -2.0 && q <= 2.0) {
            return Err(SparError::domain(format!("angle {q} outside (-2, 2]")));
        }
        let j = (((q + 2.0) / w).ceil() as usize).clamp(1, bins) - 1;
        counts[j] += 1;
    }
    let scale = 1.0 / (angles.len() as f64 * w);
    Ok(AngularHistogram {
        centers: (0..bins).map(|j| -2.0 + (j as f64 + 0.5) * w).collect(),
        density: counts.iter().map(|&c| c as f64 * scale).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_examples() {
        assert!(angular_distance(2.0, -2.0 + 1e-9) < 1e-8);
        assert_eq!(angular_distance(0.0, 1.5), 1.5);
        assert!((angular_distance(-1.8, 1.8) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn histogram_examples() {
        let atom = angular_histogram(&[0.3; 10], 16).unwrap();
        assert_eq!(atom.density.iter().filter(|&&d| d > 0.0).count(), 1);
        assert!((atom.density.iter().cloned().fold(0.0, f64::max) - 4.0).abs() < 1e-12);
        let uniform: Vec<f64> = (0..4000).map(|i| -2.0 + (i as f64 + 0.5) * 1e-3).collect();
        let h = angular_histogram(&uniform, 40).unwrap();
        assert!(h.density.iter().all(|d| (d - 0.25).abs() < 1e-12));
        assert!((h.density.iter().sum::<f64>() * h.width() - 1.0).abs() < 1e-12);
        assert!(angular_histogram(&uniform, 7).is_err());
    }

    #[test]
    fn window_ties_by_index() {
        let q = [0.5, -0.5, 0.5, 1.9, -1.9, -0.5];
        assert_eq!(nearest_indices(&q, 0.0, 3), vec![0, 1, 2]);
        assert_eq!(nearest_indices(&q, 2.0, 2), vec![3, 4]);
        assert_eq!(nearest_brute_force(&q, 0.0, 6), nearest_indices(&q, 0.0, 6));
    }
}
