//! Angular-radial coordinate systems built on the L1 and L2 norms.
//!
//! Angles live on the periodic interval (-2, 2] and measure the scaled,
//! counter-clockwise arc length along the unit circle of the norm from the
//! point (1, 0). Both systems therefore agree on the axes: q = 0, 1, 2, -1
//! correspond to the directions (1,0), (0,1), (-1,0), (0,-1).

use crate::error::{Result, SparError};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

const ON_CIRCLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoordinateSystem {
    L1,
    L2,
}

impl CoordinateSystem {
    pub fn norm(self, x: f64, y: f64) -> f64 {
        match self {
            CoordinateSystem::L1 => x.abs() + y.abs(),
            CoordinateSystem::L2 => x.hypot(y),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CoordinateSystem::L1 => "l1",
            CoordinateSystem::L2 => "l2",
        }
    }
}

impl std::str::FromStr for CoordinateSystem {
    type Err = SparError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(CoordinateSystem::L1),
            "l2" => Ok(CoordinateSystem::L2),
            other => Err(SparError::Config(format!("unknown coordinate system '{other}' (expected l1 or l2)"))),
        }
    }
}

impl std::fmt::Display for CoordinateSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartesianPoint {
    pub x: f64,
    pub y: f64,
}

impl CartesianPoint {
    pub fn new(x: f64, y: f64) -> Self {
        CartesianPoint { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarPoint {
    pub r: f64,
    pub q: f64,
}

impl PolarPoint {
    /// Builds a polar point, wrapping the angle into (-2, 2].
    pub fn new(r: f64, q: f64) -> Self {
        PolarPoint { r, q: wrap_angle(q) }
    }
}

/// Maps any angle onto the periodic domain (-2, 2].
pub fn wrap_angle(q: f64) -> f64 {
    if q > -2.0 && q <= 2.0 {
        return q;
    }
    let mut w = (q + 2.0).rem_euclid(4.0) - 2.0;
    if w <= -2.0 {
        w += 4.0;
    }
    if w > 2.0 {
        w -= 4.0;
    }
    w
}

/// Angle of a point `(u, v)` on the unit circle of the chosen norm.
pub fn angular_fn(system: CoordinateSystem, u: f64, v: f64) -> Result<f64> {
    let norm = system.norm(u, v);
    if !norm.is_finite() || (norm - 1.0).abs() > ON_CIRCLE_TOL {
        return Err(SparError::domain(format!(
            "({u}, {v}) is not on the {system} unit circle (norm {norm})"
        )));
    }
    Ok(unit_angle(system, u, v))
}

fn unit_angle(system: CoordinateSystem, u: f64, v: f64) -> f64 {
    match system {
        CoordinateSystem::L1 => {
            let eps = if v >= 0.0 { 1.0 } else { -1.0 };
            wrap_angle(eps * (1.0 - u))
        }
        CoordinateSystem::L2 => wrap_angle(v.atan2(u) / FRAC_PI_2),
    }
}

/// Inverse angular function: the point on the unit circle at angle `q`.
pub fn unit_point(system: CoordinateSystem, q: f64) -> (f64, f64) {
    let q = wrap_angle(q);
    match system {
        CoordinateSystem::L1 => {
            let aq = q.abs();
            let u = 1.0 - aq;
            let v = (1.0 - u.abs()).copysign(q);
            (u, if q == 0.0 { 0.0 } else { v })
        }
        CoordinateSystem::L2 => {
            let t = q * FRAC_PI_2;
            (t.cos(), t.sin())
        }
    }
}

pub fn to_polar(system: CoordinateSystem, p: CartesianPoint) -> Result<PolarPoint> {
    if !(p.x.is_finite() && p.y.is_finite()) {
        return Err(SparError::domain(format!("non-finite point ({}, {})", p.x, p.y)));
    }
    let r = system.norm(p.x, p.y);
    if r == 0.0 {
        return Err(SparError::domain("the origin has no angular representation"));
    }
    Ok(PolarPoint { r, q: unit_angle(system, p.x / r, p.y / r) })
}

pub fn from_polar(system: CoordinateSystem, p: PolarPoint) -> CartesianPoint {
    let (u, v) = unit_point(system, p.q);
    CartesianPoint { x: p.r * u, y: p.r * v }
}

/// Jacobian of the map (r, q) -> (x, y): `f_RQ(r, q) = jacobian(r) f_XY(x, y)`.
pub fn jacobian(system: CoordinateSystem, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(SparError::domain(format!("jacobian requires r > 0, got {r}")));
    }
    Ok(jacobian_unchecked(system, r))
}

pub(crate) fn jacobian_unchecked(system: CoordinateSystem, r: f64) -> f64 {
    match system {
        CoordinateSystem::L1 => r,
        CoordinateSystem::L2 => FRAC_PI_2 * r,
    }
}

/// Paired radial and angular observations under one coordinate system.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarSample {
    pub system: CoordinateSystem,
    pub r: Vec<f64>,
    pub q: Vec<f64>,
}

impl PolarSample {
    pub fn new(system: CoordinateSystem, r: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        if r.len() != q.len() {
            return Err(SparError::Config(format!("radii ({}) and angles ({}) differ in length", r.len(), q.len())));
        }
        if let Some(i) = r.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(SparError::domain(format!("radius {} at index {i} is not positive and finite", r[i])));
        }
        let q = q.into_iter().map(wrap_angle).collect();
        Ok(PolarSample { system, r, q })
    }

    pub fn from_cartesian(system: CoordinateSystem, points: &[CartesianPoint]) -> Result<Self> {
        let mut r = Vec::with_capacity(points.len());
        let mut q = Vec::with_capacity(points.len());
        for p in points {
            let pp = to_polar(system, *p)?;
            r.push(pp.r);
            q.push(pp.q);
        }
        Ok(PolarSample { system, r, q })
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> PolarSample {
        PolarSample {
            system: self.system,
            r: idx.iter().map(|&i| self.r[i]).collect(),
            q: idx.iter().map(|&i| self.q[i]).collect(),
        }
    }

    pub fn to_cartesian(&self) -> Vec<CartesianPoint> {
        self.r
            .iter()
            .zip(&self.q)
            .map(|(&r, &q)| from_polar(self.system, PolarPoint { r, q }))
            .collect()
    }
}
