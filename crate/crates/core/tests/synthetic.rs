use spar_core::quadrature::integrate;
use spar_core::synthetic::{sample_laplace, study_copulas, true_angular_density, CopulaSpec};
use spar_core::{CoordinateSystem, PolarSample};

/// Two-sided KS critical value at the 0.1% level.
fn ks_critical(n: usize) -> f64 {
    1.9495 / (n as f64).sqrt()
}

fn ks_distance(mut x: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn empirical_cdf_matches_copula_cdf() {
    let n = 100_000;
    for spec in study_copulas() {
        let pairs = spec.sample(n, 77).unwrap();
        let mut worst: f64 = 0.0;
        for i in 1..20 {
            for j in 1..20 {
                let (u, v) = (i as f64 / 20.0, j as f64 / 20.0);
                let emp = pairs.iter().filter(|(a, b)| *a <= u && *b <= v).count() as f64 / n as f64;
                worst = worst.max((emp - spec.cdf(u, v).unwrap()).abs());
            }
        }
        assert!(worst <= 0.01, "{}: {worst}", spec.name());
    }
}

#[test]
fn true_angular_densities_integrate_to_one() {
    let breaks = [-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5];
    for spec in study_copulas() {
        for system in [CoordinateSystem::L1, CoordinateSystem::L2] {
            let total =
                integrate(|q| true_angular_density(&spec, system, q).unwrap(), -2.0, 2.0, &breaks, 1e-10, 1e-8)
                    .unwrap()
                    .value;
            assert!((total - 1.0).abs() < 1e-5, "{} {system}: {total}", spec.name());
        }
    }
}

#[test]
fn independence_radius_is_gamma_and_angle_uniform() {
    let n = 20_000;
    let pts = sample_laplace(&CopulaSpec::Independence, n, 5).unwrap();
    let s = PolarSample::from_cartesian(CoordinateSystem::L1, &pts).unwrap();
    let gamma2 = |r: f64| 1.0 - (1.0 + r) * (-r).exp();
    assert!(ks_distance(s.r.clone(), gamma2) < ks_critical(n));
    assert!(ks_distance(s.q.clone(), |q| (q + 2.0) / 4.0) < ks_critical(n));
    // the radius law does not change with the quadrant
    for lo in [-2.0, -1.0, 0.0, 1.0] {
        let r: Vec<f64> = s.r.iter().zip(&s.q).filter(|(_, &q)| q > lo && q <= lo + 1.0).map(|(&r, _)| r).collect();
        assert!(ks_distance(r.clone(), gamma2) < ks_critical(r.len()), "quadrant from {lo}");
    }
}
