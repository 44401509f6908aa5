//! The assembled model: angular density times a generalised Pareto radial
//! tail above the threshold `u_gamma(q)`, valid on `{(r, q): r >= u_gamma(q)}`.

use crate::circular_kde::{AngularKde, DEFAULT_BANDWIDTH};
use crate::coords::{
    from_polar, jacobian_unchecked, to_polar, CartesianPoint, CoordinateSystem, PolarPoint, PolarSample,
};
use crate::cyclic_spline::CyclicSplineBasis;
use crate::error::{Result, SparError};
use crate::gp::{gp_pdf, gp_quantile, gp_sample, upper_endpoint, GpParams};
use crate::quadrature::integrate;
use crate::rng::{open_unit, seeded};
use crate::smooth_fit::{
    fit_gp, fit_threshold, log_grid, GpFit, ShapeBasis, SmoothingOptions, ThresholdFit, DEFAULT_C,
};
use crate::optimize::LbfgsOptions;
use serde::{Deserialize, Serialize};

/// Affine map from data units to the modelling scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean_x: f64,
    pub mean_y: f64,
    pub sd_x: f64,
    pub sd_y: f64,
}

impl Normalization {
    pub const IDENTITY: Normalization = Normalization { mean_x: 0.0, mean_y: 0.0, sd_x: 1.0, sd_y: 1.0 };

    /// Column means and sample standard deviations.
    pub fn from_points(points: &[CartesianPoint]) -> Result<Self> {
        let n = points.len();
        if n < 2 {
            return Err(SparError::domain("need at least two points to standardise"));
        }
        let nf = n as f64;
        let mean_x = points.iter().map(|p| p.x).sum::<f64>() / nf;
        let mean_y = points.iter().map(|p| p.y).sum::<f64>() / nf;
        let sd_x = (points.iter().map(|p| (p.x - mean_x).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
        let sd_y = (points.iter().map(|p| (p.y - mean_y).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
        if !(sd_x > 0.0 && sd_y > 0.0) {
            return Err(SparError::domain("a column is constant; cannot standardise"));
        }
        Ok(Normalization { mean_x, mean_y, sd_x, sd_y })
    }

    pub fn normalize(&self, p: CartesianPoint) -> CartesianPoint {
        CartesianPoint::new((p.x - self.mean_x) / self.sd_x, (p.y - self.mean_y) / self.sd_y)
    }

    pub fn denormalize(&self, p: CartesianPoint) -> CartesianPoint {
        CartesianPoint::new(self.mean_x + self.sd_x * p.x, self.mean_y + self.sd_y * p.y)
    }

    /// Jacobian of the map to data units.
    pub fn area_factor(&self) -> f64 {
        self.sd_x * self.sd_y
    }
}

/// Whether points and densities are in modelling or data units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Normalized,
    Original,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ShapeMode {
    Constant,
    Spline { k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub system: CoordinateSystem,
    pub gamma: f64,
    /// Check-function smoothing constant.
    pub c: f64,
    pub k_threshold: usize,
    pub k_scale: usize,
    pub shape: ShapeMode,
    pub bandwidth: f64,
    pub threshold_lambdas: Vec<f64>,
    pub gp_lambdas: Vec<f64>,
    pub folds: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            system: CoordinateSystem::L1,
            gamma: 0.8,
            c: DEFAULT_C,
            k_threshold: 25,
            k_scale: 25,
            shape: ShapeMode::Constant,
            bandwidth: DEFAULT_BANDWIDTH,
            threshold_lambdas: log_grid(1e-4, 1e4, 12),
            gp_lambdas: log_grid(1e-4, 1e4, 12),
            folds: 5,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SparError::Config(m));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(self.c > 0.0) {
            return bad(format!("check constant c must be positive, got {}", self.c));
        }
        if self.k_threshold < 4 || self.k_scale < 4 {
            return bad("basis dimensions must be at least 4".into());
        }
        if let ShapeMode::Spline { k } = self.shape {
            if k < 4 {
                return bad(format!("shape basis dimension must be at least 4, got {k}"));
            }
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return bad(format!("bandwidth must be positive, got {}", self.bandwidth));
        }
        self.smoothing(&self.threshold_lambdas).validate()?;
        self.smoothing(&self.gp_lambdas).validate()
    }

    fn smoothing(&self, grid: &[f64]) -> SmoothingOptions {
        SmoothingOptions { lambda_grid: grid.to_vec(), folds: self.folds, optimizer: LbfgsOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub software_version: String,
    pub seed: Option<u64>,
    pub n_observations: usize,
    pub config: FitConfig,
}

/// Per-angle contour radii; `None` where the level is not reached.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    pub angles: Vec<f64>,
    pub radii: Vec<Option<f64>>,
}

impl Contour {
    pub fn all_none(&self) -> bool {
        self.radii.iter().all(Option::is_none)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparFit {
    pub system: CoordinateSystem,
    pub gamma: f64,
    pub normalization: Normalization,
    pub angular: AngularKde,
    pub threshold: ThresholdFit,
    pub gp: GpFit,
    pub metadata: FitMetadata,
}

/// `a = 1 / (n_y K)` for a `K`-year return period with `n_y` observations a year.
pub fn exceedance_probability(obs_per_year: f64, years: f64) -> Result<f64> {
    if !(obs_per_year > 0.0 && years > 0.0) {
        return Err(SparError::domain("observations per year and return period must be positive"));
    }
    Ok(1.0 / (obs_per_year * years))
}

/// `n` equally spaced angles `-2 + 4 i / n`, wrapped into (-2, 2].
pub fn angle_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| crate::coords::wrap_angle(-2.0 + 4.0 * i as f64 / n as f64)).collect()
}

impl SparFit {
    /// Fits the full model to data already on the modelling scale.
    pub fn fit(data: &PolarSample, config: &FitConfig, normalization: Normalization) -> Result<Self> {
        config.validate()?;
        check_system(data, config)?;
        let basis = CyclicSplineBasis::from_data(&data.q, config.k_threshold)?;
        let threshold =
            fit_threshold(data, &basis, config.gamma, config.c, &config.smoothing(&config.threshold_lambdas))?;
        Self::fit_given_threshold(data, config, normalization, threshold)
    }

    /// Fits the angular density and tail with a fixed threshold function,
    /// e.g. to refit a sample simulated from a model (which holds
    /// exceedances only).
    pub fn fit_given_threshold(
        data: &PolarSample,
        config: &FitConfig,
        normalization: Normalization,
        threshold: ThresholdFit,
    ) -> Result<Self> {
        config.validate()?;
        check_system(data, config)?;
        if (threshold.gamma - config.gamma).abs() > 0.0 {
            return Err(SparError::Config(format!(
                "threshold was fitted at gamma={} but the configuration asks for {}",
                threshold.gamma, config.gamma
            )));
        }
        let angular = AngularKde::fit(&data.q, config.bandwidth)?;
        let exceed_q: Vec<f64> =
            data.r.iter().zip(&data.q).filter(|(&r, &q)| r > threshold.u(q)).map(|(_, &q)| q).collect();
        if exceed_q.len() < config.k_scale {
            return Err(SparError::Fitting {
                message: format!("only {} exceedances of the threshold", exceed_q.len()),
                trace: vec![],
            });
        }
        let basis_tau = CyclicSplineBasis::from_data(&exceed_q, config.k_scale)?;
        let shape = match config.shape {
            ShapeMode::Constant => ShapeBasis::Constant,
            ShapeMode::Spline { k } => ShapeBasis::Spline(CyclicSplineBasis::from_data(&exceed_q, k)?),
        };
        let gp = fit_gp(data, &threshold, &basis_tau, &shape, &config.smoothing(&config.gp_lambdas))?;
        let fit = SparFit {
            system: config.system,
            gamma: config.gamma,
            normalization,
            angular,
            threshold,
            gp,
            metadata: FitMetadata {
                software_version: env!("CARGO_PKG_VERSION").to_string(),
                seed: None,
                n_observations: data.len(),
                config: config.clone(),
            },
        };
        fit.check_components()?;
        Ok(fit)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.metadata.seed = Some(seed);
        self
    }

    /// Finite, positive component functions on a 1000-angle grid.
    fn check_components(&self) -> Result<()> {
        for q in angle_grid(1000) {
            let p = self.params(q);
            if !(p.u > 0.0 && p.u.is_finite() && p.tau > 0.0 && p.tau.is_finite() && p.xi.is_finite()) {
                return Err(SparError::numerical(format!("fitted components invalid at q={q}: {p:?}")));
            }
        }
        Ok(())
    }

    pub fn params(&self, q: f64) -> GpParams {
        GpParams { u: self.threshold.u(q), tau: self.gp.tau(q), xi: self.gp.xi(q) }
    }

    pub fn angular_density(&self, q: f64) -> f64 {
        self.angular.density(q)
    }

    pub fn polar_density(&self, r: f64, q: f64) -> Result<f64> {
        let p = self.params(q);
        if !(r >= p.u) {
            return Err(SparError::OutsideRegion { r, q, threshold: p.u });
        }
        Ok((1.0 - self.gamma) * self.angular.density(q) * gp_pdf(r - p.u, p.tau, p.xi))
    }

    pub fn cartesian_density(&self, p: CartesianPoint, scale: Scale) -> Result<f64> {
        let (pn, factor) = match scale {
            Scale::Normalized => (p, 1.0),
            Scale::Original => (self.normalization.normalize(p), self.normalization.area_factor()),
        };
        let pp = to_polar(self.system, pn)?;
        Ok(self.polar_density(pp.r, pp.q)? / jacobian_unchecked(self.system, pp.r) / factor)
    }

    /// Density along the ray at angle `q` (normalised scale, `r >= u`).
    fn ray_density(&self, f_q: f64, p: &GpParams, r: f64) -> f64 {
        (1.0 - self.gamma) * f_q * gp_pdf(r - p.u, p.tau, p.xi) / jacobian_unchecked(self.system, r)
    }

    /// Radius of the isodensity contour at `level` (normalised scale) for
    /// each angle; `None` where the density at the threshold is already
    /// below the level.
    pub fn isodensity_contour(&self, level: f64, q_grid: &[f64]) -> Result<Contour> {
        if !(level > 0.0) {
            return Err(SparError::domain(format!("contour level must be positive, got {level}")));
        }
        let radii = q_grid.iter().map(|&q| self.contour_radius(level, q)).collect();
        Ok(Contour { angles: q_grid.to_vec(), radii })
    }

    fn contour_radius(&self, level: f64, q: f64) -> Option<f64> {
        let p = self.params(q);
        let f_q = self.angular.density(q);
        if self.ray_density(f_q, &p, p.u) < level {
            return None;
        }
        let top = p.u + upper_endpoint(p.tau, p.xi);
        let mut hi = (p.u + 10.0 * p.tau).min(top);
        while hi < top && self.ray_density(f_q, &p, hi) >= level {
            hi = (p.u + 2.0 * (hi - p.u)).min(top);
            if hi > 1e12 {
                return None;
            }
        }
        let mut lo = p.u;
        while hi - lo > 1e-10 * hi.max(1.0) {
            let mid = 0.5 * (lo + hi);
            if self.ray_density(f_q, &p, mid) >= level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }

    /// Boundary of the set whose complement has probability `a`.
    pub fn return_level_set(&self, a: f64, q_grid: &[f64]) -> Result<Vec<f64>> {
        let tail = 1.0 - self.gamma;
        if !(a > 0.0 && a < tail) {
            return Err(SparError::domain(format!(
                "exceedance probability {a} must lie in (0, {tail}); larger values fall inside the body of the distribution below the threshold"
            )));
        }
        let level = (tail - a) / tail;
        q_grid
            .iter()
            .map(|&q| {
                let p = self.params(q);
                Ok(p.u + gp_quantile(level, p.tau, p.xi)?)
            })
            .collect()
    }

    /// Draws `n` points from the model on the normalised scale.
    pub fn simulate_polar(&self, n: usize, seed: u64) -> Result<PolarSample> {
        let mut rng = seeded(seed);
        let mut r = Vec::with_capacity(n);
        let mut q = Vec::with_capacity(n);
        for _ in 0..n {
            let angle = self.angular.cdf_inverse(open_unit(&mut rng))?;
            let p = self.params(angle);
            r.push(p.u + gp_sample(&mut rng, p.tau, p.xi));
            q.push(angle);
        }
        PolarSample::new(self.system, r, q)
    }

    /// Draws `n` points from the model, in data units.
    pub fn simulate(&self, n: usize, seed: u64) -> Result<Vec<CartesianPoint>> {
        let s = self.simulate_polar(n, seed)?;
        Ok(s.to_cartesian().into_iter().map(|p| self.normalization.denormalize(p)).collect())
    }

    /// Numerical integral of the model density over its region of validity;
    /// equals `1 - gamma` for a consistent fit.
    pub fn probability_budget(&self) -> Result<f64> {
        let mut err = None;
        let inner = |q: f64| -> f64 {
            let p = self.params(q);
            let top = gp_quantile(1.0 - 1e-14, p.tau, p.xi).unwrap_or(f64::INFINITY);
            let f_q = self.angular.density(q);
            let breaks = [p.tau, 5.0 * p.tau, 20.0 * p.tau];
            match integrate(|y| gp_pdf(y, p.tau, p.xi), 0.0, top, &breaks, 1e-13, 1e-11) {
                Ok(i) => (1.0 - self.gamma) * f_q * i.value,
                Err(e) => {
                    err = Some(e);
                    f64::NAN
                }
            }
        };
        let mut breaks: Vec<f64> = self.threshold.log_u.basis.knots().to_vec();
        breaks.extend(self.gp.log_tau.basis.knots());
        breaks.sort_by(f64::total_cmp);
        let total = integrate(inner, -2.0, 2.0, &breaks, 1e-10, 1e-9);
        if let Some(e) = err {
            return Err(e);
        }
        Ok(total?.value)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| SparError::Io(format!("cannot serialise model: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let fit: SparFit =
            serde_json::from_str(text).map_err(|e| SparError::Io(format!("cannot parse model file: {e}")))?;
        fit.check_components()?;
        Ok(fit)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| SparError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SparError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Cartesian point (data units) of polar coordinates on the normalised scale.
    pub fn point(&self, r: f64, q: f64) -> CartesianPoint {
        self.normalization.denormalize(from_polar(self.system, PolarPoint::new(r, q)))
    }
}

fn check_system(data: &PolarSample, config: &FitConfig) -> Result<()> {
    if data.system != config.system {
        return Err(SparError::Config(format!(
            "data are in {} coordinates but the configuration asks for {}",
            data.system, config.system
        )));
    }
    Ok(())
}
