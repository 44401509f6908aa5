//! Subcommand definitions and their implementations.

use crate::config::Settings;
use crate::error::{CliError, Result};
use crate::ingest::{ingest, renormalize, ObservationSet};
use crate::output::{ensure_dir, num, write_json, write_svg, Mark, Series, Table};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use spar_core::coords::from_polar;
use spar_core::local_diag::{
    angular_histogram, local_fit, local_grid, local_qq, DEFAULT_M, DEFAULT_N, DEFAULT_QQ_CENTERS,
};
use spar_core::smooth_fit::CvScore;
use spar_core::spar_model::{exceedance_probability, FitConfig, Normalization, SparFit};
use spar_core::synthetic::{sample_laplace, CopulaSpec, MarginSpec};
use spar_core::uncertainty::{bootstrap, BootstrapPlan, Target};
use spar_core::{CartesianPoint, PolarPoint};
use std::path::{Path, PathBuf};

/// Number of angles in every gridded output.
pub const OUTPUT_ANGLES: usize = 401;

#[derive(Debug, Parser)]
#[command(name = "spar", version, about = "Angular-radial modelling of bivariate extremes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read and validate an input file and print a summary
    Ingest(IngestArgs),
    /// Fit a model and write model.json, report.json and components.csv
    Fit(FitArgs),
    /// Isodensity contours of a fitted model
    Contour(ContourArgs),
    /// Return level set for an exceedance probability or return period
    Rls(RlsArgs),
    /// Simulate points from a fitted model
    Simulate(SimulateArgs),
    /// Local estimates, local QQ plots and the angular histogram
    Diagnose(DiagnoseArgs),
    /// Bootstrap bands for model components and derived sets
    Bootstrap(BootstrapArgs),
    /// Sample a copula on standard Laplace margins
    SimulateCopula(CopulaArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub settings: Settings,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub settings: Settings,
    /// Reuse the threshold and normalisation of this model; only the
    /// angular density and tail are fitted
    #[arg(long)]
    pub threshold_from: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    /// Modelling scale (after standardisation)
    Normalized,
    /// Data units
    Original,
}

#[derive(Debug, Args)]
pub struct ContourArgs {
    #[command(flatten)]
    pub settings: Settings,
    #[arg(long)]
    pub model: PathBuf,
    /// Density levels, comma separated
    #[arg(long, required = true, value_delimiter = ',')]
    pub level: Vec<f64>,
    /// Scale of the levels and of the x,y columns
    #[arg(long, value_enum, default_value = "normalized")]
    pub scale: ScaleArg,
}

#[derive(Debug, Args)]
pub struct RlsArgs {
    #[command(flatten)]
    pub settings: Settings,
    #[arg(long)]
    pub model: PathBuf,
    /// Exceedance probability per observation
    #[arg(long, conflicts_with_all = ["years", "obs_per_year"])]
    pub a: Option<f64>,
    /// Return period in years
    #[arg(long, requires = "obs_per_year")]
    pub years: Option<f64>,
    #[arg(long, requires = "years")]
    pub obs_per_year: Option<f64>,
    #[arg(long, value_enum, default_value = "original")]
    pub scale: ScaleArg,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub settings: Settings,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub settings: Settings,
    #[arg(long)]
    pub model: PathBuf,
    /// Number of local estimation centres
    #[arg(long, default_value_t = DEFAULT_M)]
    pub centers: usize,
    /// Observations in each local window
    #[arg(long, default_value_t = DEFAULT_N)]
    pub window: usize,
    /// Angles of the local QQ plots, comma separated
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_QQ_CENTERS)]
    pub qq_centers: Vec<f64>,
    /// Observations in each local QQ window
    #[arg(long, default_value_t = DEFAULT_N)]
    pub qq_window: usize,
    #[arg(long, default_value_t = 40)]
    pub bins: usize,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub settings: Settings,
    #[arg(long)]
    pub model: PathBuf,
    /// Isodensity levels (modelling scale) to add as targets
    #[arg(long, value_delimiter = ',')]
    pub level: Vec<f64>,
    /// Exceedance probabilities of return level sets to add as targets
    #[arg(long, value_delimiter = ',')]
    pub a: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Independence,
    Gaussian,
    Frank,
    T,
    Joe,
}

#[derive(Debug, Args)]
pub struct CopulaArgs {
    #[arg(long, value_enum)]
    pub family: Family,
    /// Correlation of the Gaussian and t copulas
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    /// Parameter of the Frank and Joe copulas
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Degrees of freedom of the t copula
    #[arg(long, default_value_t = 2.0)]
    pub nu: f64,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub svg: bool,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Contour(a) => cmd_contour(a),
        Command::Rls(a) => cmd_rls(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Bootstrap(a) => cmd_bootstrap(a),
        Command::SimulateCopula(a) => cmd_simulate_copula(a),
    }
}

/// `n` equally spaced angles in (-2, 2], increasing.
pub fn output_grid(n: usize) -> Vec<f64> {
    (1..=n).map(|i| -2.0 + 4.0 * i as f64 / n as f64).collect()
}

fn warn(messages: &[String]) {
    for m in messages {
        eprintln!("warning: {m}");
    }
}

fn read_input(settings: &Settings, margins: MarginSpec) -> Result<ObservationSet> {
    let obs = ingest(settings.input()?, margins)?;
    warn(&obs.warnings);
    Ok(obs)
}

/// Data on the modelling scale of `model`.
fn read_for_model(settings: &Settings, model: &SparFit) -> Result<ObservationSet> {
    let mut obs = read_input(settings, MarginSpec::Raw)?;
    renormalize(&mut obs, model.normalization);
    Ok(obs)
}

fn load_model(settings: &Settings, path: &Path) -> Result<SparFit> {
    let model = SparFit::load(path)?;
    settings.check_model_system(model.system)?;
    Ok(model)
}

fn svg_path(csv: &Path) -> PathBuf {
    csv.with_extension("svg")
}

#[derive(Serialize)]
struct IngestSummary<'a> {
    n_observations: usize,
    dropped_missing: usize,
    dropped_malformed: &'a [u64],
    normalization: Normalization,
    has_timestamps: bool,
    hourly: bool,
}

fn cmd_ingest(args: IngestArgs) -> Result<()> {
    let s = args.settings.resolve()?;
    let obs = read_input(&s, s.margins())?;
    let summary = IngestSummary {
        n_observations: obs.len(),
        dropped_missing: obs.dropped_missing,
        dropped_malformed: &obs.dropped_malformed,
        normalization: obs.normalization,
        has_timestamps: obs.timestamps.is_some(),
        hourly: obs.is_hourly(),
    };
    let text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Config(e.to_string()))?;
    println!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct FitReport<'a> {
    input: &'a Path,
    threshold_from: Option<&'a Path>,
    n_observations: usize,
    n_exceedances: usize,
    non_exceedance_rate: f64,
    dropped_missing: usize,
    dropped_malformed: &'a [u64],
    warnings: &'a [String],
    normalization: Normalization,
    config: &'a FitConfig,
    lambda_threshold: f64,
    lambda_threshold_scale: f64,
    lambda_scale: f64,
    lambda_shape: f64,
    threshold_cv: &'a [CvScore],
    gp_cv: &'a [CvScore],
    threshold_trace: &'a [f64],
    gp_trace: &'a [f64],
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let s = args.settings.resolve()?;
    let out = ensure_dir(s.output()?)?;
    let seed = s.seed.unwrap_or(0);
    let (obs, fit) = match &args.threshold_from {
        None => {
            let config = s.fit_config()?;
            let obs = read_input(&s, s.margins())?;
            let data = obs.polar(config.system)?;
            let fit = SparFit::fit(&data, &config, obs.normalization)?;
            (obs, fit)
        }
        Some(path) => {
            let base = load_model(&s, path)?;
            let config = s.apply(base.metadata.config.clone())?;
            let mut obs = read_input(&s, MarginSpec::Raw)?;
            renormalize(&mut obs, base.normalization);
            let data = obs.polar(config.system)?;
            let fit = SparFit::fit_given_threshold(&data, &config, base.normalization, base.threshold)?;
            (obs, fit)
        }
    };
    let fit = fit.with_seed(seed);
    fit.save(&out.join("model.json"))?;

    let report = FitReport {
        input: s.input()?,
        threshold_from: args.threshold_from.as_deref(),
        n_observations: fit.metadata.n_observations,
        n_exceedances: fit.gp.n_exceedances,
        non_exceedance_rate: fit.threshold.non_exceedance_rate,
        dropped_missing: obs.dropped_missing,
        dropped_malformed: &obs.dropped_malformed,
        warnings: &obs.warnings,
        normalization: fit.normalization,
        config: &fit.metadata.config,
        lambda_threshold: fit.threshold.lambda_u,
        lambda_threshold_scale: fit.threshold.lambda_sigma,
        lambda_scale: fit.gp.lambda_tau,
        lambda_shape: fit.gp.lambda_xi,
        threshold_cv: &fit.threshold.cv,
        gp_cv: &fit.gp.cv,
        threshold_trace: &fit.threshold.trace,
        gp_trace: &fit.gp.trace,
    };
    write_json(&out.join("report.json"), &report)?;

    let grid = output_grid(OUTPUT_ANGLES);
    let mut table = Table::new(&["angle", "angular_density", "threshold", "scale", "shape"]);
    for &q in &grid {
        let p = fit.params(q);
        table.push(vec![num(q), num(fit.angular_density(q)), num(p.u), num(p.tau), num(p.xi)]);
    }
    let csv = out.join("components.csv");
    table.write(&csv)?;
    if s.svg {
        let series: Vec<Series> = ["angular_density", "threshold", "scale", "shape"]
            .iter()
            .map(|c| Series::new(*c, Mark::Line, grid.iter().copied().zip(table.column(c)).collect()))
            .collect();
        write_svg(&svg_path(&csv), "fitted components", "angle", "value", &series)?;
    }
    Ok(())
}

/// Rows `angle, radius, x, y, defined` for radii on the modelling scale.
fn radius_table(fit: &SparFit, angles: &[f64], radii: &[Option<f64>], scale: ScaleArg, extra: &[&str]) -> Table {
    let mut header = vec!["angle", "radius", "x", "y", "defined"];
    header.extend_from_slice(extra);
    let mut table = Table::new(&header);
    for (&q, r) in angles.iter().zip(radii) {
        let mut row = match r {
            Some(r) => {
                let p = match scale {
                    ScaleArg::Normalized => from_polar(fit.system, PolarPoint::new(*r, q)),
                    ScaleArg::Original => fit.point(*r, q),
                };
                vec![num(q), num(*r), num(p.x), num(p.y), "1".into()]
            }
            None => vec![num(q), num(f64::NAN), num(f64::NAN), num(f64::NAN), "0".into()],
        };
        row.resize(header.len(), String::new());
        table.push(row);
    }
    table
}

fn xy_series(label: impl Into<String>, table: &Table) -> Series {
    Series::new(label, Mark::Line, table.column("x").into_iter().zip(table.column("y")).collect())
}

fn cmd_contour(args: ContourArgs) -> Result<()> {
    let s = args.settings.resolve()?;
    let out = ensure_dir(s.output()?)?;
    let fit = load_model(&s, &args.model)?;
    let grid = output_grid(OUTPUT_ANGLES);
    let mut series = Vec::new();
    for &level in &args.level {
        let model_level = match args.scale {
            ScaleArg::Normalized => level,
            ScaleArg::Original => level * fit.normalization.area_factor(),
        };
        let contour = fit.isodensity_contour(model_level, &grid)?;
        if contour.all_none() {
            eprintln!("warning: level {level:e} is not reached above the threshold at any angle");
        }
        let table = radius_table(&fit, &grid, &contour.radii, args.scale, &[]);
        table.write(&out.join(format!("contour_{level:e}.csv")))?;
        series.push(xy_series(format!("{level:e}"), &table));
    }
    if s.svg {
        write_svg(&out.join("contours.svg"), "isodensity contours", "x", "y", &series)?;
    }
    Ok(())
}

fn cmd_rls(args: RlsArgs) -> Result<()> {
    let s = args.settings.resolve()?;
    let out = ensure_dir(s.output()?)?;
    let fit = load_model(&s, &args.model)?;
    let (a, years) = match (args.a, args.years, args.obs_per_year) {
        (Some(a), _, _) => (a, None),
        (None, Some(k), Some(ny)) => (exceedance_probability(ny, k)?, Some(k)),
        _ => return Err(CliError::Config("give --a, or --years with --obs-per-year".into())),
    };
    let grid = output_grid(OUTPUT_ANGLES);
    let radii: Vec<Option<f64>> = fit.return_level_set(a, &grid)?.into_iter().map(Some).collect();
    let mut table = radius_table(&fit, &grid, &radii, args.scale, &["a", "return_period_years"]);
    for row in &mut table.rows {
        row[5] = num(a);
        row[6] = num(years.unwrap_or(f64::NAN));
    }
    let csv = out.join("return_level_set.csv");
    table.write(&csv)?;
    if s.svg {
        write_svg(&svg_path(&csv), &format!("return level set, a = {a:e}"), "x", "y", &[xy_series("rls", &table)])?;
    }
    Ok(())
}

fn points_table(points: &[CartesianPoint]) -> Table {
    let mut table = Table::new(&["x", "y"]);
    for p in points {
        table.push(vec![num(p.x), num(p.y)]);
    }
    table
}

fn scatter(points: &[CartesianPoint]) -> Series {
    Series::new("sample", Mark::Points, points.iter().map(|p| (p.x, p.y)).collect())
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let s = args.settings.resolve()?;
    let path = s.output()?;
    let fit = load_model(&s, &args.model)?;
    let points = fit.simulate(args.n, s.seed.unwrap_or(0))?;
    points_table(&points).write(path)?;
    if s.svg {
        write_svg(&svg_path(path), "simulated sample", "x", "y", &[scatter(&points)])?;
    }
    Ok(())
}

/// Probability levels of the local QQ plots.
fn qq_probs() -> Vec<f64> {
    (0..100).map(|i| i as f64 / 100.0).collect()
}

fn cmd_diagnose(args: DiagnoseArgs) -> Result<()> {
    let s = args.settings.resolve()?;
    let out = ensure_dir(s.output()?)?;
    let fit = load_model(&s, &args.model)?;
    let obs = read_for_model(&s, &fit)?;
    let data = obs.polar(fit.system)?;

    let mut local = local_fit(&data, &local_grid(args.centers), args.window, fit.gamma)?;
    local.sort_by(|a, b| a.q.total_cmp(&b.q));
    let mut table = Table::new(&[
        "angle",
        "threshold_local",
        "scale_local",
        "shape_local",
        "se_scale",
        "se_shape",
        "window_size",
        "n_exceedances",
        "reliable",
        "threshold_model",
        "scale_model",
        "shape_model",
    ]);
    for e in &local {
        let p = fit.params(e.q);
        table.push(vec![
            num(e.q),
            num(e.u_local),
            num(e.tau_local),
            num(e.xi_local),
            num(e.se_tau),
            num(e.se_xi),
            e.window_size.to_string(),
            e.n_exceedances.to_string(),
            u8::from(e.reliable).to_string(),
            num(p.u),
            num(p.tau),
            num(p.xi),
        ]);
    }
    let csv = out.join("local_estimates.csv");
    table.write(&csv)?;
    if s.svg {
        let q = table.column("angle");
        let series = ["scale_local", "scale_model", "shape_local", "shape_model"]
            .iter()
            .map(|c| Series::new(*c, Mark::Line, q.iter().copied().zip(table.column(c)).collect()))
            .collect::<Vec<_>>();
        write_svg(&svg_path(&csv), "local and smooth estimates", "angle", "value", &series)?;
    }

    for qq in local_qq(&data, &fit, &args.qq_centers, args.qq_window, &qq_probs())? {
        let mut t = Table::new(&["prob", "empirical", "model"]);
        for ((p, e), m) in qq.probs.iter().zip(&qq.empirical).zip(&qq.model) {
            t.push(vec![num(*p), num(*e), num(*m)]);
        }
        let csv = out.join(format!("local_qq_{}.csv", qq.center));
        t.write(&csv)?;
        if s.svg {
            let pts: Vec<(f64, f64)> = qq.model.iter().copied().zip(qq.empirical.iter().copied()).collect();
            let lo = pts.iter().map(|p| p.0.min(p.1)).fold(f64::INFINITY, f64::min);
            let hi = pts.iter().map(|p| p.0.max(p.1)).fold(f64::NEG_INFINITY, f64::max);
            write_svg(
                &svg_path(&csv),
                &format!("local QQ at q = {}", qq.center),
                "model",
                "empirical",
                &[Series::new("qq", Mark::Points, pts), Series::new("identity", Mark::Line, vec![(lo, lo), (hi, hi)])],
            )?;
        }
    }

    let hist = angular_histogram(&data.q, args.bins)?;
    let mut t = Table::new(&["angle", "histogram", "kde"]);
    for (&c, &d) in hist.centers.iter().zip(&hist.density) {
        t.push(vec![num(c), num(d), num(fit.angular_density(c))]);
    }
    let csv = out.join("angular_histogram.csv");
    t.write(&csv)?;
    if s.svg {
        let grid = output_grid(OUTPUT_ANGLES);
        let series = [
            Series::new("histogram", Mark::Points, hist.centers.iter().copied().zip(hist.density.iter().copied()).collect()),
            Series::new("kde", Mark::Line, grid.iter().map(|&q| (q, fit.angular_density(q))).collect()),
        ];
        write_svg(&svg_path(&csv), "angular density", "angle", "density", &series)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct BootstrapReport<'a> {
    plan: &'a BootstrapPlan,
    n_observations: usize,
    targets: &'a [Target],
    failures: &'a [(usize, String)],
}

fn cmd_bootstrap(args: BootstrapArgs) -> Result<()> {
    let s = args.settings.resolve()?;
    let out = ensure_dir(s.output()?)?;
    let fit = load_model(&s, &args.model)?;
    let obs = read_for_model(&s, &fit)?;
    let data = obs.polar(fit.system)?;
    let plan = s.plan(obs.is_hourly());
    let mut targets = vec![Target::AngularDensity, Target::Threshold, Target::Scale, Target::Shape];
    targets.extend(args.level.iter().map(|&level| Target::Isodensity { level }));
    targets.extend(args.a.iter().map(|&a| Target::ReturnLevel { a }));
    let grid = output_grid(OUTPUT_ANGLES);
    let result = bootstrap(&data, &fit.metadata.config, fit.normalization, &fit, &plan, &targets, &grid)?;
    if !result.failures.is_empty() {
        eprintln!("warning: {} of {} replicate fits failed", result.failures.len(), plan.replicates);
    }
    for (target, band) in result.targets.iter().zip(&result.bands) {
        let mut t = Table::new(&["angle", "median", "lower", "upper", "n_defined"]);
        for i in 0..grid.len() {
            t.push(vec![num(grid[i]), num(band.median[i]), num(band.lower[i]), num(band.upper[i]), band.n_defined[i].to_string()]);
        }
        let csv = out.join(format!("band_{}.csv", target.name()));
        t.write(&csv)?;
        if s.svg {
            let series = ["median", "lower", "upper"]
                .iter()
                .map(|c| Series::new(*c, Mark::Line, grid.iter().copied().zip(t.column(c)).collect()))
                .collect::<Vec<_>>();
            write_svg(&svg_path(&csv), &format!("bootstrap band: {}", target.name()), "angle", "value", &series)?;
        }
    }
    let report =
        BootstrapReport { plan: &plan, n_observations: data.len(), targets: &result.targets, failures: &result.failures };
    write_json(&out.join("bootstrap_report.json"), &report)
}

fn cmd_simulate_copula(args: CopulaArgs) -> Result<()> {
    let need_alpha = || args.alpha.ok_or_else(|| CliError::Config("this family needs --alpha".into()));
    let spec = match args.family {
        Family::Independence => CopulaSpec::Independence,
        Family::Gaussian => CopulaSpec::Gaussian { rho: args.rho },
        Family::T => CopulaSpec::T { rho: args.rho, nu: args.nu },
        Family::Frank => CopulaSpec::Frank { alpha: need_alpha()? },
        Family::Joe => CopulaSpec::Joe { alpha: need_alpha()? },
    };
    let points = sample_laplace(&spec, args.n, args.seed)?;
    points_table(&points).write(&args.output)?;
    if args.svg {
        write_svg(&svg_path(&args.output), spec.name(), "x", "y", &[scatter(&points)])?;
    }
    Ok(())
}
