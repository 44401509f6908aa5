//! Copula samplers on standard Laplace margins and the numerical truth
//! used to check fitted models.

mod copula;
mod truth;

pub use copula::{kendall_tau, CopulaSpec};
pub use truth::{
    empirical_chi, laplace_transform, sample_laplace, to_laplace, true_angular_density, true_isodensity_contour,
    true_joint_density, true_polar_density, true_threshold, R_MAX,
};

use serde::{Deserialize, Serialize};

/// How input data relate to the modelling scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginSpec {
    /// Already on standard Laplace margins; used as is.
    Laplace,
    /// Raw data, standardised to zero mean and unit variance on ingestion.
    Raw,
}

impl std::str::FromStr for MarginSpec {
    type Err = crate::SparError;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "laplace" => Ok(MarginSpec::Laplace),
            "raw" => Ok(MarginSpec::Raw),
            other => Err(crate::SparError::Config(format!("unknown margins '{other}' (expected laplace or raw)"))),
        }
    }
}

/// The four dependence structures of the simulation study, in the order
/// Gaussian, Frank, t, Joe.
pub fn study_copulas() -> [CopulaSpec; 4] {
    [
        CopulaSpec::Gaussian { rho: 0.5 },
        CopulaSpec::Frank { alpha: 5.0 },
        CopulaSpec::T { rho: 0.5, nu: 2.0 },
        CopulaSpec::Joe { alpha: 3.0 },
    ]
}
