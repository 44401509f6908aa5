use proptest::prelude::*;
use spar_core::local_diag::{local_fit, local_grid, nearest_brute_force, nearest_indices, DEFAULT_M, DEFAULT_N};
use spar_core::smooth_fit::log_grid;
use spar_core::spar_model::{angle_grid, FitConfig, Normalization, SparFit};
use spar_core::synthetic::{sample_laplace, CopulaSpec};
use spar_core::uncertainty::{bootstrap, BootstrapPlan, ResampleMode, Target};
use spar_core::{CoordinateSystem, PolarSample, SparError};
use std::sync::OnceLock;

fn independence_sample(n: usize, seed: u64) -> PolarSample {
    let pts = sample_laplace(&CopulaSpec::Independence, n, seed).unwrap();
    PolarSample::from_cartesian(CoordinateSystem::L1, &pts).unwrap()
}

fn shared() -> &'static (PolarSample, SparFit) {
    static FIT: OnceLock<(PolarSample, SparFit)> = OnceLock::new();
    FIT.get_or_init(|| {
        let data = independence_sample(10_000, 1);
        let fit = SparFit::fit(&data, &FitConfig::default(), Normalization::IDENTITY).unwrap();
        (data, fit)
    })
}

fn weakly_decreasing(trace: &[f64]) -> bool {
    trace.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0))
}

#[test]
fn threshold_calibrates_on_held_out_half() {
    let data = independence_sample(10_000, 8);
    let train: Vec<usize> = (0..data.len()).step_by(2).collect();
    let test: Vec<usize> = (1..data.len()).step_by(2).collect();
    let fit = SparFit::fit(&data.subset(&train), &FitConfig::default(), Normalization::IDENTITY).unwrap();
    let held = data.subset(&test);
    let rate = held.r.iter().zip(&held.q).filter(|(&r, &q)| r > fit.threshold.u(q)).count() as f64 / held.len() as f64;
    assert!((rate - 0.2).abs() <= 0.03, "{rate}");
}

#[test]
fn accepted_iterates_never_increase_the_objective() {
    let (_, fit) = shared();
    assert!(weakly_decreasing(&fit.threshold.trace));
    assert!(weakly_decreasing(&fit.gp.trace));
}

#[test]
fn components_are_positive_finite_and_smooth_at_the_wrap() {
    let (_, fit) = shared();
    for q in angle_grid(1000) {
        let p = fit.params(q);
        assert!(p.u > 0.0 && p.u.is_finite() && p.tau > 0.0 && p.tau.is_finite() && p.xi.is_finite());
    }
    for f in [&fit.threshold.log_u, &fit.gp.log_tau] {
        for order in 0..=2 {
            let left = f.derivative(2.0 - 1e-12, order);
            let right = f.derivative(-2.0 + 1e-12, order);
            assert!((left - right).abs() <= 1e-4 * left.abs().max(1.0), "order {order}: {left} vs {right}");
        }
    }
}

#[test]
fn region_consistency() {
    let (_, fit) = shared();
    let grid = angle_grid(100);
    for &q in &grid {
        let u = fit.threshold.u(q);
        assert!(fit.polar_density(u, q).is_ok());
        assert!(matches!(fit.polar_density(u * (1.0 - 1e-9), q), Err(SparError::OutsideRegion { .. })));
    }
    let contour = fit.isodensity_contour(1e-3, &grid).unwrap();
    for (q, r) in grid.iter().zip(&contour.radii) {
        if let Some(r) = r {
            assert!(*r >= fit.threshold.u(*q));
        }
    }
    let rl = fit.return_level_set(1e-3, &grid).unwrap();
    assert!(grid.iter().zip(&rl).all(|(q, r)| *r > fit.threshold.u(*q)));
    let sim = fit.simulate_polar(5000, 12).unwrap();
    assert!(sim.r.iter().zip(&sim.q).all(|(&r, &q)| r >= fit.threshold.u(q)));
}

#[test]
fn contours_nest_and_return_levels_grow() {
    let (_, fit) = shared();
    let grid = angle_grid(100);
    let levels = [1e-2, 1e-3, 1e-4, 1e-6];
    let contours: Vec<_> = levels.iter().map(|&p| fit.isodensity_contour(p, &grid).unwrap()).collect();
    for pair in contours.windows(2) {
        for (a, b) in pair[0].radii.iter().zip(&pair[1].radii) {
            if let (Some(a), Some(b)) = (a, b) {
                assert!(b >= a);
            }
        }
    }
    let mut prev = fit.return_level_set(1e-2, &grid).unwrap();
    for a in [1e-3, 1e-4, 1e-5] {
        let next = fit.return_level_set(a, &grid).unwrap();
        assert!(next.iter().zip(&prev).all(|(n, p)| n > p));
        prev = next;
    }
}

#[test]
fn smooth_fit_sits_inside_local_envelope() {
    let (data, fit) = shared();
    let local = local_fit(data, &local_grid(DEFAULT_M), DEFAULT_N, 0.8).unwrap();
    assert!(local.iter().all(|e| e.reliable && e.window_size == DEFAULT_N));
    let inside = local
        .iter()
        .filter(|e| {
            (fit.gp.tau(e.q) - e.tau_local).abs() <= 3.0 * e.se_tau && (fit.gp.xi(e.q) - e.xi_local).abs() <= 3.0 * e.se_xi
        })
        .count();
    assert!(inside as f64 >= 0.9 * local.len() as f64, "{inside} of {}", local.len());
}

#[test]
fn bootstrap_is_deterministic_and_ordered() {
    let data = independence_sample(3000, 21);
    let config =
        FitConfig { threshold_lambdas: log_grid(1e-1, 1e3, 5), gp_lambdas: log_grid(1e-1, 1e3, 5), ..Default::default() };
    let point = SparFit::fit(&data, &config, Normalization::IDENTITY).unwrap();
    let plan = BootstrapPlan { replicates: 6, mode: ResampleMode::Block, block_len: 50, seed: 4, alpha: 0.1 };
    let targets = [Target::Threshold, Target::Scale, Target::Isodensity { level: 1e-3 }];
    let grid = angle_grid(50);
    let run = || bootstrap(&data, &config, Normalization::IDENTITY, &point, &plan, &targets, &grid).unwrap();
    let a = run();
    let b = run();
    assert_eq!(a, b);
    for band in &a.bands {
        for i in 0..grid.len() {
            if band.n_defined[i] > 0 {
                assert!(band.lower[i] <= band.median[i] && band.median[i] <= band.upper[i]);
            }
        }
    }
}

proptest! {
    #[test]
    fn accelerated_window_matches_brute_force(
        raw in proptest::collection::vec(0u32..400, 1..300),
        center in -2f64..2.0,
        frac in 0f64..1.0,
    ) {
        // coarse angles force many exact distance ties
        let q: Vec<f64> = raw.iter().map(|&i| -2.0 + (i + 1) as f64 * 0.01).collect();
        let n = 1 + ((q.len() - 1) as f64 * frac) as usize;
        prop_assert_eq!(nearest_indices(&q, center, n), nearest_brute_force(&q, center, n));
    }
}
