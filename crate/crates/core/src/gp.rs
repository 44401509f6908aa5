//! Generalized Pareto distribution: tail probabilities, quantiles, densities
//! and stationary maximum-likelihood fitting.

use crate::error::{Result, SparError};
use crate::optimize::{minimize, LbfgsOptions, Objective};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Below this |xi| the exponential limit is used.
pub const XI_ZERO: f64 = 1e-6;

/// Threshold, scale and shape of a GP tail at a fixed angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpParams {
    pub u: f64,
    pub tau: f64,
    pub xi: f64,
}

/// Upper end of the excess support (infinite unless xi < 0).
pub fn upper_endpoint(tau: f64, xi: f64) -> f64 {
    if xi < -XI_ZERO {
        -tau / xi
    } else {
        f64::INFINITY
    }
}

/// Survival function of an excess `x >= 0`; zero beyond the support.
pub fn gp_sf(x: f64, tau: f64, xi: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if xi.abs() < XI_ZERO {
        return (-x / tau).exp();
    }
    let z = xi * x / tau;
    if z <= -1.0 {
        return 0.0;
    }
    (-z.ln_1p() / xi).exp()
}

pub fn gp_cdf(x: f64, tau: f64, xi: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if xi.abs() < XI_ZERO {
        return -(-x / tau).exp_m1();
    }
    let z = xi * x / tau;
    if z <= -1.0 {
        return 1.0;
    }
    -(-z.ln_1p() / xi).exp_m1()
}

/// Quantile of the excess distribution at non-exceedance `level` in [0, 1).
pub fn gp_quantile(level: f64, tau: f64, xi: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&level) {
        return Err(SparError::domain(format!("GP quantile level {level} outside [0, 1)")));
    }
    if !(tau > 0.0) {
        return Err(SparError::domain(format!("GP scale must be positive, got {tau}")));
    }
    let log_sf = (-level).ln_1p();
    if xi.abs() < XI_ZERO {
        Ok(-tau * log_sf)
    } else {
        Ok(tau / xi * (-xi * log_sf).exp_m1())
    }
}

pub fn gp_log_pdf(x: f64, tau: f64, xi: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    if xi.abs() < XI_ZERO {
        return -tau.ln() - x / tau;
    }
    let z = xi * x / tau;
    if z <= -1.0 {
        return f64::NEG_INFINITY;
    }
    -tau.ln() - (1.0 / xi + 1.0) * z.ln_1p()
}

pub fn gp_pdf(x: f64, tau: f64, xi: f64) -> f64 {
    gp_log_pdf(x, tau, xi).exp()
}

/// Inverse-transform GP draw.
pub fn gp_sample<R: Rng + ?Sized>(rng: &mut R, tau: f64, xi: f64) -> f64 {
    let u = crate::rng::open_unit(rng);
    // level = 1 - u keeps the draw inside the open support
    let log_sf = u.ln();
    if xi.abs() < XI_ZERO {
        -tau * log_sf
    } else {
        tau / xi * (-xi * log_sf).exp_m1()
    }
}

/// Stationary GP fit: point estimates and asymptotic standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpEstimate {
    pub tau: f64,
    pub xi: f64,
    pub se_tau: f64,
    pub se_xi: f64,
    pub n: usize,
    pub neg_log_lik: f64,
}

struct StationaryGp<'a> {
    excess: &'a [f64],
}

impl Objective for StationaryGp<'_> {
    fn dim(&self) -> usize {
        2
    }

    // parameters: [ln tau, xi]
    fn eval(&self, p: &[f64], g: &mut [f64]) -> f64 {
        let (lt, xi) = (p[0], p[1]);
        let tau = lt.exp();
        let (mut f, mut g0, mut g1) = (0.0, 0.0, 0.0);
        for &y in self.excess {
            let (l, d0, d1) = gp_nll_term(y, lt, tau, xi);
            if !l.is_finite() {
                return f64::INFINITY;
            }
            f += l;
            g0 += d0;
            g1 += d1;
        }
        g[0] = g0;
        g[1] = g1;
        f
    }
}

/// One observation's GP negative log-likelihood and its derivatives with
/// respect to `ln tau` and `xi`. Infinite outside the support.
#[inline]
pub(crate) fn gp_nll_term(y: f64, log_tau: f64, tau: f64, xi: f64) -> (f64, f64, f64) {
    let z = y / tau;
    if xi.abs() < XI_ZERO {
        return (log_tau + z, 1.0 - z, z - 0.5 * z * z);
    }
    let w = xi * z;
    if w <= -1.0 {
        return (f64::INFINITY, 0.0, 0.0);
    }
    let lt = w.ln_1p();
    let t = 1.0 + w;
    let val = log_tau + (1.0 / xi + 1.0) * lt;
    let d_log_tau = 1.0 - (1.0 + xi) * z / t;
    let d_xi = -lt / (xi * xi) + (1.0 / xi + 1.0) * z / t;
    (val, d_log_tau, d_xi)
}

/// Maximum-likelihood fit of a stationary GP to excesses (all `> 0`).
pub fn fit_gp_mle(excess: &[f64]) -> Result<GpEstimate> {
    let n = excess.len();
    if n < 3 {
        return Err(SparError::Fitting {
            message: format!("GP maximum likelihood needs at least 3 excesses, got {n}"),
            trace: vec![],
        });
    }
    if excess.iter().any(|&y| !(y >= 0.0 && y.is_finite())) {
        return Err(SparError::domain("GP excesses must be finite and nonnegative"));
    }
    let mean = excess.iter().sum::<f64>() / n as f64;
    let var = excess.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    if !(mean > 0.0) {
        return Err(SparError::Fitting { message: "all excesses are zero".into(), trace: vec![] });
    }
    // method-of-moments start, kept well inside the support
    let ratio = if var > 0.0 { mean * mean / var } else { 1.0 };
    let xi0 = (0.5 * (1.0 - ratio)).clamp(-0.4, 0.4);
    let tau0 = (0.5 * mean * (ratio + 1.0)).max(1e-8);
    let max_y = excess.iter().cloned().fold(0.0, f64::max);
    let obj = StationaryGp { excess };
    let opts = LbfgsOptions { rel_tol: 1e-14, grad_tol: 1e-9, ..Default::default() };
    let starts = [
        [tau0.ln(), xi0],
        [mean.ln(), 0.0],
        [(max_y * 0.2).max(1e-8).ln(), -0.1],
    ];
    let best = starts
        .iter()
        .filter_map(|s| minimize(&obj, s, &opts))
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or_else(|| SparError::Fitting { message: "no feasible GP starting point".into(), trace: vec![] })?;
    let tau = best.x[0].exp();
    let xi = best.x[1];
    let (se_tau, se_xi) = gp_standard_errors(tau, xi, n);
    Ok(GpEstimate { tau, xi, se_tau, se_xi, n, neg_log_lik: best.value })
}

/// Asymptotic standard errors of (tau, xi) from the inverse expected
/// information; for xi <= -0.5 the regular asymptotics fail and NaN is
/// returned.
pub fn gp_standard_errors(tau: f64, xi: f64, n: usize) -> (f64, f64) {
    if xi <= -0.5 || n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let n = n as f64;
    let var_tau = 2.0 * tau * tau * (1.0 + xi) / n;
    let var_xi = (1.0 + xi).powi(2) / n;
    (var_tau.sqrt(), var_xi.sqrt())
}
