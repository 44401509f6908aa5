//! Run settings from flags and an optional JSON file; flags win.

use crate::error::{CliError, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use spar_core::smooth_fit::log_grid;
use spar_core::spar_model::{FitConfig, ShapeMode};
use spar_core::synthetic::MarginSpec;
use spar_core::uncertainty::{BootstrapPlan, ResampleMode, DEFAULT_BLOCK_LEN, DEFAULT_REPLICATES};
use spar_core::CoordinateSystem;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ShapeChoice {
    Constant,
    Spline,
}

fn parse_coords(s: &str) -> std::result::Result<CoordinateSystem, String> {
    s.parse().map_err(|e: spar_core::SparError| e.to_string())
}

fn parse_margins(s: &str) -> std::result::Result<MarginSpec, String> {
    s.parse().map_err(|e: spar_core::SparError| e.to_string())
}

fn parse_resample(s: &str) -> std::result::Result<ResampleMode, String> {
    match s.to_ascii_lowercase().as_str() {
        "iid" => Ok(ResampleMode::Iid),
        "block" => Ok(ResampleMode::Block),
        other => Err(format!("unknown resampling mode '{other}' (expected iid or block)")),
    }
}

/// Every tunable; each field is a flag and a key of the JSON config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// JSON file with any of these settings
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Input CSV with header x,y or timestamp,x,y
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory (or file, for simulate)
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Coordinate system: l1 or l2
    #[arg(long, value_parser = parse_coords)]
    pub coords: Option<CoordinateSystem>,
    /// Margins of the input: raw (standardised) or laplace (used as is)
    #[arg(long, value_parser = parse_margins)]
    pub margins: Option<MarginSpec>,
    /// Non-exceedance probability of the threshold
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub k_threshold: Option<usize>,
    #[arg(long)]
    pub k_scale: Option<usize>,
    /// Basis dimension of the shape spline
    #[arg(long)]
    pub k_shape: Option<usize>,
    #[arg(long, value_enum)]
    pub shape: Option<ShapeChoice>,
    /// Von Mises bandwidth of the angular density
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Candidate smoothing parameters, comma separated
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Bootstrap replicates
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Bootstrap resampling: iid or block
    #[arg(long, value_parser = parse_resample)]
    pub resample: Option<ResampleMode>,
    #[arg(long)]
    pub block_len: Option<usize>,
    /// Two-sided band level
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Also write an SVG rendering of each CSV
    #[arg(long)]
    #[serde(default)]
    pub svg: bool,
}

impl Settings {
    /// Reads the `--config` file, if any, and lays the flags over it.
    pub fn resolve(self) -> Result<Settings> {
        let Some(path) = self.config.clone() else { return Ok(self) };
        Ok(self.over(Settings::from_file(&path)?))
    }

    pub fn from_file(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// `self` wins wherever it has a value.
    pub fn over(self, base: Settings) -> Settings {
        Settings {
            config: self.config.or(base.config),
            input: self.input.or(base.input),
            output: self.output.or(base.output),
            coords: self.coords.or(base.coords),
            margins: self.margins.or(base.margins),
            gamma: self.gamma.or(base.gamma),
            k_threshold: self.k_threshold.or(base.k_threshold),
            k_scale: self.k_scale.or(base.k_scale),
            k_shape: self.k_shape.or(base.k_shape),
            shape: self.shape.or(base.shape),
            bandwidth: self.bandwidth.or(base.bandwidth),
            lambdas: self.lambdas.or(base.lambdas),
            seed: self.seed.or(base.seed),
            replicates: self.replicates.or(base.replicates),
            resample: self.resample.or(base.resample),
            block_len: self.block_len.or(base.block_len),
            alpha: self.alpha.or(base.alpha),
            svg: self.svg || base.svg,
        }
    }

    pub fn margins(&self) -> MarginSpec {
        self.margins.unwrap_or(MarginSpec::Raw)
    }

    pub fn input(&self) -> Result<&Path> {
        self.input.as_deref().ok_or_else(|| CliError::Config("no input file given (--input)".into()))
    }

    pub fn output(&self) -> Result<&Path> {
        self.output.as_deref().ok_or_else(|| CliError::Config("no output location given (--output)".into()))
    }

    /// Fit configuration defaults by data mode: raw data use gamma 0.7,
    /// 35 knots and a spline shape with 12; Laplace margins use gamma 0.8,
    /// 25 knots and a constant shape.
    pub fn defaults(margins: MarginSpec) -> FitConfig {
        let raw = margins == MarginSpec::Raw;
        let k = if raw { 35 } else { 25 };
        FitConfig {
            gamma: if raw { 0.7 } else { 0.8 },
            k_threshold: k,
            k_scale: k,
            shape: if raw { ShapeMode::Spline { k: 12 } } else { ShapeMode::Constant },
            threshold_lambdas: log_grid(1e-4, 1e4, 12),
            gp_lambdas: log_grid(1e-4, 1e4, 12),
            ..FitConfig::default()
        }
    }

    pub fn fit_config(&self) -> Result<FitConfig> {
        self.apply(Self::defaults(self.margins()))
    }

    /// Overrides the fields of `config` that were set, then validates.
    pub fn apply(&self, mut config: FitConfig) -> Result<FitConfig> {
        if let Some(c) = self.coords {
            config.system = c;
        }
        if let Some(g) = self.gamma {
            config.gamma = g;
        }
        if let Some(k) = self.k_threshold {
            config.k_threshold = k;
        }
        if let Some(k) = self.k_scale {
            config.k_scale = k;
        }
        let current_k = match config.shape {
            ShapeMode::Spline { k } => k,
            ShapeMode::Constant => 12,
        };
        config.shape = match (self.shape, self.k_shape) {
            (Some(ShapeChoice::Constant), _) => ShapeMode::Constant,
            (Some(ShapeChoice::Spline), k) | (None, k @ Some(_)) => ShapeMode::Spline { k: k.unwrap_or(current_k) },
            (None, None) => config.shape,
        };
        if let Some(h) = self.bandwidth {
            config.bandwidth = h;
        }
        match &self.lambdas {
            Some(l) if l.is_empty() => return Err(CliError::Config("empty smoothing parameter list".into())),
            Some(l) => {
                config.threshold_lambdas = l.clone();
                config.gp_lambdas = l.clone();
            }
            None => {}
        }
        config.validate()?;
        Ok(config)
    }

    /// Bootstrap plan. Without an explicit mode, hourly data get blocks
    /// of four days and anything else iid resampling.
    pub fn plan(&self, hourly: bool) -> BootstrapPlan {
        let mode = self.resample.unwrap_or(if hourly || self.block_len.is_some() {
            ResampleMode::Block
        } else {
            ResampleMode::Iid
        });
        BootstrapPlan {
            replicates: self.replicates.unwrap_or(DEFAULT_REPLICATES),
            mode,
            block_len: match mode {
                ResampleMode::Iid => 1,
                ResampleMode::Block => self.block_len.unwrap_or(DEFAULT_BLOCK_LEN),
            },
            seed: self.seed.unwrap_or(0),
            alpha: self.alpha.unwrap_or(0.05),
        }
    }

    /// Errors when a coordinate system was requested that differs from the model's.
    pub fn check_model_system(&self, model: CoordinateSystem) -> Result<()> {
        match self.coords {
            Some(c) if c != model => {
                Err(CliError::Config(format!("model was fitted in {model} coordinates but {c} were requested")))
            }
            _ => Ok(()),
        }
    }
}
