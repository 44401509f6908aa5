//! Circular kernel density estimation of the angle on (-2, 2].
//!
//! The von Mises kernel is rescaled from (-pi, pi] to the period-4 domain.
//! Pointwise densities are direct kernel sums (strictly positive). The CDF
//! uses the exact Fourier series of the mixture, whose coefficients are
//! Bessel ratios `I_m(1/h) / I_0(1/h)`; it is tabulated on a regular grid for
//! inversion.

use crate::coords::wrap_angle;
use crate::error::{Result, SparError};
use crate::special::{bessel_i0_scaled, bessel_ratio_series};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

pub const DEFAULT_BANDWIDTH: f64 = 1.0 / 50.0;
pub const DEFAULT_GRID: usize = 4096;
const FOURIER_TOL: f64 = 1e-17;

fn check_bandwidth(h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(SparError::domain(format!("bandwidth must be positive and finite, got {h}")));
    }
    Ok(())
}

/// Von Mises kernel on the period-4 angle domain; integrates to 1 over (-2, 2].
pub fn vm_kernel(q: f64, qi: f64, h: f64) -> Result<f64> {
    check_bandwidth(h)?;
    let kappa = 1.0 / h;
    Ok(scaled_kernel(kappa, bessel_i0_scaled(kappa), q - qi))
}

/// `exp(kappa cos(d pi/2)) / (4 I0(kappa))`, written with the scaled Bessel
/// function so neither factor overflows.
#[inline]
fn scaled_kernel(kappa: f64, i0s: f64, d: f64) -> f64 {
    (kappa * ((d * FRAC_PI_2).cos() - 1.0)).exp() / (4.0 * i0s)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct KdeRecord {
    angles: Vec<f64>,
    bandwidth: f64,
    grid_size: usize,
}

/// A fitted circular KDE. Immutable; serialises as its data and bandwidth.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "KdeRecord", into = "KdeRecord")]
pub struct AngularKde {
    angles: Vec<f64>,
    bandwidth: f64,
    kappa: f64,
    i0s: f64,
    /// Fourier coefficients of the CDF: `F(q) = (q+2)/4 + sum a_m sin(m t) - b_m (cos(m t) - (-1)^m)`,
    /// `t = q pi / 2`.
    cdf_sin: Vec<f64>,
    cdf_cos: Vec<f64>,
    cdf_grid: Vec<f64>,
}

impl PartialEq for AngularKde {
    fn eq(&self, other: &Self) -> bool {
        self.angles == other.angles && self.bandwidth == other.bandwidth && self.cdf_grid.len() == other.cdf_grid.len()
    }
}

impl TryFrom<KdeRecord> for AngularKde {
    type Error = SparError;
    fn try_from(r: KdeRecord) -> Result<Self> {
        AngularKde::with_grid(&r.angles, r.bandwidth, r.grid_size)
    }
}

impl From<AngularKde> for KdeRecord {
    fn from(k: AngularKde) -> Self {
        KdeRecord { grid_size: k.cdf_grid.len() - 1, angles: k.angles, bandwidth: k.bandwidth }
    }
}

pub fn fit_kde(angles: &[f64], h: f64) -> Result<AngularKde> {
    AngularKde::fit(angles, h)
}

impl AngularKde {
    pub fn fit(angles: &[f64], h: f64) -> Result<Self> {
        Self::with_grid(angles, h, DEFAULT_GRID)
    }

    pub fn with_grid(angles: &[f64], h: f64, grid_size: usize) -> Result<Self> {
        check_bandwidth(h)?;
        if angles.is_empty() {
            return Err(SparError::domain("cannot fit a density to no angles"));
        }
        if angles.iter().any(|q| !q.is_finite()) {
            return Err(SparError::domain("angles must be finite"));
        }
        if grid_size < 16 {
            return Err(SparError::domain(format!("CDF grid of {grid_size} points is too coarse")));
        }
        let angles: Vec<f64> = angles.iter().map(|&q| wrap_angle(q)).collect();
        let kappa = 1.0 / h;
        let ratios = bessel_ratio_series(kappa, FOURIER_TOL, 100_000);
        let n = angles.len() as f64;
        let mut cm = vec![0.0; ratios.len()];
        let mut sm = vec![0.0; ratios.len()];
        for &q in &angles {
            let (s1, c1) = (q * FRAC_PI_2).sin_cos();
            let (mut c, mut s) = (1.0, 0.0);
            for m in 0..ratios.len() {
                // rotate (cos m t, sin m t) by t
                let c_next = c * c1 - s * s1;
                s = s * c1 + c * s1;
                c = c_next;
                cm[m] += c;
                sm[m] += s;
            }
        }
        let mut cdf_sin = Vec::with_capacity(ratios.len());
        let mut cdf_cos = Vec::with_capacity(ratios.len());
        for (m, rho) in ratios.iter().enumerate() {
            let scale = rho / ((m + 1) as f64 * PI * n);
            cdf_sin.push(scale * cm[m]);
            cdf_cos.push(scale * sm[m]);
        }
        let mut kde = AngularKde {
            angles,
            bandwidth: h,
            kappa,
            i0s: bessel_i0_scaled(kappa),
            cdf_sin,
            cdf_cos,
            cdf_grid: Vec::new(),
        };
        let mut grid = Vec::with_capacity(grid_size + 1);
        let mut running = 0.0f64;
        for j in 0..=grid_size {
            let q = -2.0 + 4.0 * j as f64 / grid_size as f64;
            // absorb sub-ulp truncation noise so the table is monotone
            running = running.max(kde.fourier_cdf(q)).min(1.0);
            grid.push(running);
        }
        let (first, last) = (kde.fourier_cdf(-2.0), kde.fourier_cdf(2.0));
        if first.abs() > 1e-9 || (last - 1.0).abs() > 1e-9 {
            return Err(SparError::numerical(format!("KDE CDF table spans [{first}, {last}], not [0, 1]")));
        }
        grid[0] = 0.0;
        grid[grid_size] = 1.0;
        kde.cdf_grid = grid;
        Ok(kde)
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn cdf_grid(&self) -> &[f64] {
        &self.cdf_grid
    }

    pub fn density(&self, q: f64) -> f64 {
        let s: f64 = self.angles.iter().map(|&qi| scaled_kernel(self.kappa, self.i0s, q - qi)).sum();
        s / self.angles.len() as f64
    }

    pub fn densities(&self, qs: &[f64]) -> Vec<f64> {
        qs.iter().map(|&q| self.density(q)).collect()
    }

    fn fourier_cdf(&self, q: f64) -> f64 {
        let t = q * FRAC_PI_2;
        let (s1, c1) = t.sin_cos();
        let (mut c, mut s) = (1.0, 0.0);
        let mut sign = 1.0;
        let mut acc = (q + 2.0) / 4.0;
        for (a, b) in self.cdf_sin.iter().zip(&self.cdf_cos) {
            let c_next = c * c1 - s * s1;
            s = s * c1 + c * s1;
            c = c_next;
            sign = -sign;
            acc += a * s - b * (c - sign);
        }
        acc
    }

    fn fourier_density(&self, q: f64) -> f64 {
        let t = q * FRAC_PI_2;
        let (s1, c1) = t.sin_cos();
        let (mut c, mut s) = (1.0, 0.0);
        let mut acc = 0.25;
        for (m, (a, b)) in self.cdf_sin.iter().zip(&self.cdf_cos).enumerate() {
            let c_next = c * c1 - s * s1;
            s = s * c1 + c * s1;
            c = c_next;
            let w = (m + 1) as f64 * FRAC_PI_2;
            acc += w * (a * c + b * s);
        }
        acc
    }

    /// Distribution function from -2, for `q` in (-2, 2].
    pub fn cdf(&self, q: f64) -> f64 {
        let q = wrap_angle(q);
        self.fourier_cdf(q).clamp(0.0, 1.0)
    }

    /// Inverse CDF: bracket on the table, then refine on the exact CDF.
    pub fn cdf_inverse(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(SparError::domain(format!("inverse CDF needs u in (0, 1), got {u}")));
        }
        let g = self.cdf_grid.len() - 1;
        let j = self.cdf_grid.partition_point(|&v| v <= u).clamp(1, g) - 1;
        let step = 4.0 / g as f64;
        let (mut lo, mut hi) = (-2.0 + step * j as f64, -2.0 + step * (j + 1) as f64);
        let (flo, fhi) = (self.cdf_grid[j], self.cdf_grid[j + 1]);
        let mut x = if fhi > flo { lo + (u - flo) / (fhi - flo) * step } else { 0.5 * (lo + hi) };
        // safeguarded Newton
        for _ in 0..60 {
            let f = self.fourier_cdf(x) - u;
            if f.abs() < 1e-15 {
                break;
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let d = self.fourier_density(x);
            let newton = x - f / d;
            x = if d > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo < 1e-15 {
                break;
            }
        }
        Ok(wrap_angle(x))
    }
}

/// Free-function form of [`AngularKde::density`].
pub fn kde_density(model: &AngularKde, q: f64) -> f64 {
    model.density(q)
}

pub fn kde_cdf(model: &AngularKde, q: f64) -> f64 {
    model.cdf(q)
}

pub fn kde_cdf_inverse(model: &AngularKde, u: f64) -> Result<f64> {
    model.cdf_inverse(u)
}
