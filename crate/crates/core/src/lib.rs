//! Semi-parametric angular-radial (SPAR) modelling of bivariate extremes.
//!
//! Data are mapped to angular-radial coordinates; the angle gets a circular
//! kernel density and the radius, above an angle-dependent quantile threshold,
//! a generalised Pareto tail whose parameters vary smoothly with angle.

pub mod circular_kde;
pub mod coords;
pub mod cyclic_spline;
pub mod error;
pub mod gp;
pub mod local_diag;
pub mod optimize;
pub mod quadrature;
pub mod rng;
pub mod smooth_fit;
pub mod spar_model;
pub mod special;
pub mod synthetic;
pub mod uncertainty;

pub use coords::{CartesianPoint, CoordinateSystem, PolarPoint, PolarSample};
pub use error::{Result, SparError};
pub use gp::GpParams;
