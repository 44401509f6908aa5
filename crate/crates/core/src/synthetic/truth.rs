//! Numerical truth for copulas on standard Laplace margins.

use super::copula::CopulaSpec;
use crate::coords::{from_polar, jacobian_unchecked, CartesianPoint, CoordinateSystem, PolarPoint};
use crate::error::{Result, SparError};
use crate::quadrature::integrate;
use crate::special::{laplace_pdf, laplace_quantile_tails, laplace_tails, TailProb};

/// Radial integration limit; Laplace-margin densities are negligible beyond it.
pub const R_MAX: f64 = 60.0;
const R_BREAKS: [f64; 5] = [1.0, 3.0, 6.0, 12.0, 24.0];

/// Inverse standard Laplace distribution function.
pub fn laplace_transform(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(SparError::domain(format!("Laplace transform needs u in (0, 1), got {u}")));
    }
    Ok(laplace_quantile_tails(TailProb::from_lower(u)))
}

/// Maps tail-split uniform pairs to standard Laplace coordinates.
pub fn to_laplace(pairs: &[(TailProb, TailProb)]) -> Vec<CartesianPoint> {
    pairs
        .iter()
        .map(|&(u, v)| CartesianPoint::new(laplace_quantile_tails(u), laplace_quantile_tails(v)))
        .collect()
}

/// Draws `n` points of the copula on standard Laplace margins.
pub fn sample_laplace(spec: &CopulaSpec, n: usize, seed: u64) -> Result<Vec<CartesianPoint>> {
    Ok(to_laplace(&spec.sample_tails(n, seed)?))
}

pub fn true_joint_density(spec: &CopulaSpec, p: CartesianPoint) -> f64 {
    spec.density(laplace_tails(p.x), laplace_tails(p.y)) * laplace_pdf(p.x) * laplace_pdf(p.y)
}

pub fn true_polar_density(spec: &CopulaSpec, system: CoordinateSystem, r: f64, q: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    jacobian_unchecked(system, r) * true_joint_density(spec, from_polar(system, PolarPoint::new(r, q)))
}

pub fn true_angular_density(spec: &CopulaSpec, system: CoordinateSystem, q: f64) -> Result<f64> {
    Ok(integrate(|r| true_polar_density(spec, system, r, q), 0.0, R_MAX, &R_BREAKS, 1e-14, 1e-9)?.value)
}

/// Conditional gamma-quantile of the radius at angle `q`.
pub fn true_threshold(spec: &CopulaSpec, system: CoordinateSystem, q: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(SparError::domain(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    let f = |r: f64| true_polar_density(spec, system, r, q);
    let total = true_angular_density(spec, system, q)?;
    let target = gamma * total;
    // bisection keeping the mass below `lo` so each step integrates a short piece
    let (mut lo, mut hi) = (0.0f64, R_MAX);
    let mut mass_lo = 0.0;
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        let piece = integrate(f, lo, mid, &[], 1e-16, 1e-12)?.value;
        if mass_lo + piece < target {
            lo = mid;
            mass_lo += piece;
        } else {
            hi = mid;
        }
    }
    if hi >= R_MAX {
        return Err(SparError::numerical(format!("threshold at q={q} not bracketed within [0, {R_MAX}]")));
    }
    Ok(0.5 * (lo + hi))
}

/// For each angle, the largest radius where the Cartesian density equals
/// `level`; `None` where the ray never reaches it.
pub fn true_isodensity_contour(
    spec: &CopulaSpec,
    system: CoordinateSystem,
    level: f64,
    q_grid: &[f64],
) -> Result<Vec<Option<f64>>> {
    if !(level > 0.0) {
        return Err(SparError::domain(format!("contour level must be positive, got {level}")));
    }
    let step = 0.02;
    Ok(q_grid
        .iter()
        .map(|&q| {
            let dens = |r: f64| true_joint_density(spec, from_polar(system, PolarPoint::new(r, q)));
            // scan inward from the far field to the first crossing
            let mut r = R_MAX;
            while r > 0.0 && dens(r) < level {
                r -= step;
            }
            if r <= 0.0 {
                // the origin itself may sit exactly on the level
                return (dens(1e-12) >= level).then_some(0.0);
            }
            let (mut lo, mut hi) = (r, r + step);
            while hi - lo > 1e-11 {
                let mid = 0.5 * (lo + hi);
                if dens(mid) >= level {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Some(0.5 * (lo + hi))
        })
        .collect())
}

/// Empirical upper tail dependence `P(U > t, V > t) / (1 - t)`.
pub fn empirical_chi(pairs: &[(f64, f64)], t: f64) -> f64 {
    let joint = pairs.iter().filter(|(u, v)| *u > t && *v > t).count();
    joint as f64 / (pairs.len() as f64 * (1.0 - t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{LN_2, PI};

    const L1: CoordinateSystem = CoordinateSystem::L1;
    const L2: CoordinateSystem = CoordinateSystem::L2;

    #[test]
    fn laplace_transform_examples() {
        assert_eq!(laplace_transform(0.5).unwrap(), 0.0);
        assert_relative_eq!(laplace_transform(0.75).unwrap(), LN_2, epsilon = 1e-14);
        assert_relative_eq!(laplace_transform(0.25).unwrap(), -LN_2, epsilon = 1e-14);
        assert!(laplace_transform(1.0).is_err());
        assert!(laplace_transform(0.0).is_err());
    }

    #[test]
    fn joint_density_examples() {
        let ind = CopulaSpec::Independence;
        assert_relative_eq!(true_joint_density(&ind, CartesianPoint::new(0.0, 0.0)), 0.25, epsilon = 1e-15);
        let g0 = CopulaSpec::Gaussian { rho: 0.0 };
        assert_relative_eq!(
            true_joint_density(&g0, CartesianPoint::new(1.0, -1.0)),
            0.25 * (-2f64).exp(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn angular_density_independence() {
        for &q in &[-1.7, -0.3, 0.0, 0.9, 2.0] {
            assert_relative_eq!(true_angular_density(&CopulaSpec::Independence, L1, q).unwrap(), 0.25, epsilon = 1e-10);
        }
        assert_relative_eq!(true_angular_density(&CopulaSpec::Independence, L2, 0.0).unwrap(), PI / 8.0, epsilon = 1e-10);
    }

    #[test]
    fn threshold_independence() {
        // root of e^{-x}(1 + x) = 0.2
        let want = {
            let (mut lo, mut hi) = (0.0f64, 20.0f64);
            for _ in 0..200 {
                let m = 0.5 * (lo + hi);
                if (-m).exp() * (1.0 + m) > 0.2 {
                    lo = m;
                } else {
                    hi = m;
                }
            }
            lo
        };
        let got = true_threshold(&CopulaSpec::Independence, L1, 0.4, 0.8).unwrap();
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        assert_relative_eq!(want, 2.994, epsilon = 5e-4);
        let lower = true_threshold(&CopulaSpec::Independence, L1, 0.4, 1e-9).unwrap();
        assert!(lower < 1e-3);
        let up = true_threshold(&CopulaSpec::Independence, L1, 0.4, 0.9).unwrap();
        assert!(up > got);
    }

    #[test]
    fn contour_independence() {
        let grid: Vec<f64> = (0..16).map(|i| -2.0 + 4.0 * (i as f64 + 0.5) / 16.0).collect();
        let level = 0.25 * (-5f64).exp();
        for r in true_isodensity_contour(&CopulaSpec::Independence, L1, level, &grid).unwrap() {
            assert!((r.unwrap() - 5.0).abs() < 1e-9);
        }
        let none = true_isodensity_contour(&CopulaSpec::Independence, L2, 1.0, &grid).unwrap();
        assert!(none.iter().all(Option::is_none));
    }
}
