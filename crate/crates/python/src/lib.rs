//! Python bindings: coordinate transforms, copula sampling, model fitting
//! and the derived quantities of a fitted model.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use spar_core::coords::{from_polar, to_polar};
use spar_core::local_diag::{local_fit, local_grid, DEFAULT_M, DEFAULT_N};
use spar_core::smooth_fit::log_grid;
use spar_core::spar_model::{self, FitConfig, Normalization, Scale, ShapeMode, SparFit};
use spar_core::synthetic::{sample_laplace, CopulaSpec};
use spar_core::uncertainty::{bootstrap, BootstrapPlan, ResampleMode, Target};
use spar_core::{CartesianPoint, CoordinateSystem, PolarPoint, PolarSample, SparError};

fn py_err(e: SparError) -> PyErr {
    match e {
        SparError::Config(_) | SparError::Domain(_) | SparError::OutsideRegion { .. } => {
            PyValueError::new_err(e.to_string())
        }
        SparError::Numerical(_) | SparError::Fitting { .. } => PyRuntimeError::new_err(e.to_string()),
        SparError::Io(_) => PyIOError::new_err(e.to_string()),
    }
}

fn system(name: &str) -> PyResult<CoordinateSystem> {
    name.parse().map_err(py_err)
}

fn points(xy: &[(f64, f64)]) -> Vec<CartesianPoint> {
    xy.iter().map(|&(x, y)| CartesianPoint::new(x, y)).collect()
}

fn pairs(points: &[CartesianPoint]) -> Vec<(f64, f64)> {
    points.iter().map(|p| (p.x, p.y)).collect()
}

/// Angular-radial coordinates `(r, q)` of a point.
#[pyfunction]
#[pyo3(signature = (x, y, system="l1"))]
fn polar(x: f64, y: f64, system: &str) -> PyResult<(f64, f64)> {
    let p = to_polar(self::system(system)?, CartesianPoint::new(x, y)).map_err(py_err)?;
    Ok((p.r, p.q))
}

/// Cartesian point of angular-radial coordinates.
#[pyfunction]
#[pyo3(signature = (r, q, system="l1"))]
fn cartesian(r: f64, q: f64, system: &str) -> PyResult<(f64, f64)> {
    let p = from_polar(self::system(system)?, PolarPoint::new(r, q));
    Ok((p.x, p.y))
}

/// `n` equally spaced angles in (-2, 2].
#[pyfunction]
fn angle_grid(n: usize) -> Vec<f64> {
    spar_model::angle_grid(n)
}

/// Samples a copula on standard Laplace margins.
#[pyfunction]
#[pyo3(signature = (family, n, seed=0, rho=0.5, alpha=None, nu=2.0))]
fn sample_copula(family: &str, n: usize, seed: u64, rho: f64, alpha: Option<f64>, nu: f64) -> PyResult<Vec<(f64, f64)>> {
    let alpha = || alpha.ok_or_else(|| PyValueError::new_err(format!("the {family} copula needs alpha")));
    let spec = match family.to_ascii_lowercase().as_str() {
        "independence" => CopulaSpec::Independence,
        "gaussian" => CopulaSpec::Gaussian { rho },
        "t" => CopulaSpec::T { rho, nu },
        "frank" => CopulaSpec::Frank { alpha: alpha()? },
        "joe" => CopulaSpec::Joe { alpha: alpha()? },
        other => return Err(PyValueError::new_err(format!("unknown copula family '{other}'"))),
    };
    Ok(pairs(&sample_laplace(&spec, n, seed).map_err(py_err)?))
}

/// Settings of a model fit. `shape_k=None` fits a constant shape.
#[pyclass(name = "FitConfig", from_py_object)]
#[derive(Clone)]
struct PyFitConfig {
    inner: FitConfig,
}

#[pymethods]
impl PyFitConfig {
    #[new]
    #[pyo3(signature = (system="l1", gamma=0.8, k_threshold=25, k_scale=25, shape_k=None, bandwidth=0.02, lambdas=None))]
    fn new(
        system: &str,
        gamma: f64,
        k_threshold: usize,
        k_scale: usize,
        shape_k: Option<usize>,
        bandwidth: f64,
        lambdas: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        let lambdas = lambdas.unwrap_or_else(|| log_grid(1e-4, 1e4, 12));
        let inner = FitConfig {
            system: self::system(system)?,
            gamma,
            k_threshold,
            k_scale,
            shape: shape_k.map_or(ShapeMode::Constant, |k| ShapeMode::Spline { k }),
            bandwidth,
            threshold_lambdas: lambdas.clone(),
            gp_lambdas: lambdas,
            ..FitConfig::default()
        };
        inner.validate().map_err(py_err)?;
        Ok(PyFitConfig { inner })
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    #[getter]
    fn system(&self) -> &'static str {
        self.inner.system.name()
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// A fitted model.
#[pyclass(name = "SparModel")]
struct PySparModel {
    inner: SparFit,
}

#[pymethods]
impl PySparModel {
    /// Fits a model to `(x, y)` pairs. With `standardize=True` each column
    /// is first shifted and scaled to zero mean and unit variance.
    #[staticmethod]
    #[pyo3(signature = (points, config=None, standardize=false, seed=None))]
    fn fit(
        py: Python<'_>,
        points: Vec<(f64, f64)>,
        config: Option<PyFitConfig>,
        standardize: bool,
        seed: Option<u64>,
    ) -> PyResult<Self> {
        let config = config.map_or_else(FitConfig::default, |c| c.inner);
        let raw = self::points(&points);
        let inner = py
            .detach(|| {
                let normalization = if standardize { Normalization::from_points(&raw)? } else { Normalization::IDENTITY };
                let scaled: Vec<_> = raw.iter().map(|&p| normalization.normalize(p)).collect();
                let data = PolarSample::from_cartesian(config.system, &scaled)?;
                let fit = SparFit::fit(&data, &config, normalization)?;
                Ok(match seed {
                    Some(s) => fit.with_seed(s),
                    None => fit,
                })
            })
            .map_err(py_err)?;
        Ok(PySparModel { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PySparModel { inner: SparFit::from_json(text).map_err(py_err)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PySparModel { inner: SparFit::load(path.as_ref()).map_err(py_err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path.as_ref()).map_err(py_err)
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    #[getter]
    fn system(&self) -> &'static str {
        self.inner.system.name()
    }

    #[getter]
    fn n_exceedances(&self) -> usize {
        self.inner.gp.n_exceedances
    }

    /// `(threshold, scale, shape)` at angle `q`.
    fn params(&self, q: f64) -> (f64, f64, f64) {
        let p = self.inner.params(q);
        (p.u, p.tau, p.xi)
    }

    fn angular_density(&self, q: f64) -> f64 {
        self.inner.angular_density(q)
    }

    /// Joint density at `(x, y)`; `original=True` reads the point in data
    /// units. Raises ValueError below the threshold.
    #[pyo3(signature = (x, y, original=false))]
    fn density(&self, x: f64, y: f64, original: bool) -> PyResult<f64> {
        let scale = if original { Scale::Original } else { Scale::Normalized };
        self.inner.cartesian_density(CartesianPoint::new(x, y), scale).map_err(py_err)
    }

    /// Contour radii (modelling scale) at a density level; None where the
    /// level is not reached above the threshold.
    fn isodensity_contour(&self, level: f64, angles: Vec<f64>) -> PyResult<Vec<Option<f64>>> {
        Ok(self.inner.isodensity_contour(level, &angles).map_err(py_err)?.radii)
    }

    /// Radii of the return level set for exceedance probability `a`.
    fn return_level_set(&self, a: f64, angles: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.return_level_set(a, &angles).map_err(py_err)
    }

    /// Data-unit point at modelling-scale polar coordinates.
    fn point(&self, r: f64, q: f64) -> (f64, f64) {
        let p = self.inner.point(r, q);
        (p.x, p.y)
    }

    /// `n` points from the model, in data units.
    #[pyo3(signature = (n, seed=0))]
    fn simulate(&self, py: Python<'_>, n: usize, seed: u64) -> PyResult<Vec<(f64, f64)>> {
        let pts = py.detach(|| self.inner.simulate(n, seed)).map_err(py_err)?;
        Ok(pairs(&pts))
    }

    /// Integral of the density over its region; `1 - gamma` when consistent.
    fn probability_budget(&self, py: Python<'_>) -> PyResult<f64> {
        py.detach(|| self.inner.probability_budget()).map_err(py_err)
    }

    /// Local generalised Pareto fits in windows of the `window` nearest
    /// angles; one dict per centre.
    #[pyo3(signature = (points, centers=DEFAULT_M, window=DEFAULT_N))]
    fn local_estimates<'py>(
        &self,
        py: Python<'py>,
        points: Vec<(f64, f64)>,
        centers: usize,
        window: usize,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let data = self.sample(&points)?;
        let gamma = self.inner.gamma;
        let local = py.detach(|| local_fit(&data, &local_grid(centers), window, gamma)).map_err(py_err)?;
        local
            .iter()
            .map(|e| {
                let d = PyDict::new(py);
                d.set_item("angle", e.q)?;
                d.set_item("threshold", e.u_local)?;
                d.set_item("scale", e.tau_local)?;
                d.set_item("shape", e.xi_local)?;
                d.set_item("se_scale", e.se_tau)?;
                d.set_item("se_shape", e.se_xi)?;
                d.set_item("n_exceedances", e.n_exceedances)?;
                d.set_item("reliable", e.reliable)?;
                Ok(d)
            })
            .collect()
    }

    /// Percentile band of `target` ("angular_density", "threshold",
    /// "scale" or "shape") from refits to resampled data. Returns a dict
    /// of lists: median, lower, upper.
    #[pyo3(signature = (points, angles, target="scale", replicates=100, seed=0, block_len=None, alpha=0.05))]
    #[allow(clippy::too_many_arguments)]
    fn bootstrap<'py>(
        &self,
        py: Python<'py>,
        points: Vec<(f64, f64)>,
        angles: Vec<f64>,
        target: &str,
        replicates: usize,
        seed: u64,
        block_len: Option<usize>,
        alpha: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let target = match target {
            "angular_density" => Target::AngularDensity,
            "threshold" => Target::Threshold,
            "scale" => Target::Scale,
            "shape" => Target::Shape,
            other => return Err(PyValueError::new_err(format!("unknown target '{other}'"))),
        };
        let plan = BootstrapPlan {
            replicates,
            mode: if block_len.is_some() { ResampleMode::Block } else { ResampleMode::Iid },
            block_len: block_len.unwrap_or(1),
            seed,
            alpha,
        };
        let data = self.sample(&points)?;
        let fit = &self.inner;
        let result = py
            .detach(|| bootstrap(&data, &fit.metadata.config, fit.normalization, fit, &plan, &[target], &angles))
            .map_err(py_err)?;
        let band = &result.bands[0];
        let d = PyDict::new(py);
        d.set_item("angle", band.grid.clone())?;
        d.set_item("median", band.median.clone())?;
        d.set_item("lower", band.lower.clone())?;
        d.set_item("upper", band.upper.clone())?;
        d.set_item("n_defined", band.n_defined.clone())?;
        d.set_item("failures", result.failures.len())?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!(
            "SparModel(system={}, gamma={}, n_observations={}, n_exceedances={})",
            self.inner.system,
            self.inner.gamma,
            self.inner.metadata.n_observations,
            self.inner.gp.n_exceedances
        )
    }
}

impl PySparModel {
    /// Data-unit points on this model's modelling scale.
    fn sample(&self, xy: &[(f64, f64)]) -> PyResult<PolarSample> {
        let scaled: Vec<_> = points(xy).into_iter().map(|p| self.inner.normalization.normalize(p)).collect();
        PolarSample::from_cartesian(self.inner.system, &scaled).map_err(py_err)
    }
}

#[pymodule]
fn spar(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(polar, m)?)?;
    m.add_function(wrap_pyfunction!(cartesian, m)?)?;
    m.add_function(wrap_pyfunction!(angle_grid, m)?)?;
    m.add_function(wrap_pyfunction!(sample_copula, m)?)?;
    m.add_class::<PyFitConfig>()?;
    m.add_class::<PySparModel>()?;
    Ok(())
}
