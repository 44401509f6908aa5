//! Adaptive Gauss–Kronrod (7/15) quadrature and fixed Gauss–Legendre rules.

use crate::error::{Result, SparError};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Four-point Gauss–Legendre nodes on [-1, 1].
pub const GL4_NODES: [f64; 4] = [
    -0.861_136_311_594_052_575_223_946_488_892_809,
    -0.339_981_043_584_856_264_802_665_759_103_245,
    0.339_981_043_584_856_264_802_665_759_103_245,
    0.861_136_311_594_052_575_223_946_488_892_809,
];
pub const GL4_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_857_373_063_949_221_999,
    0.652_145_154_862_546_142_626_936_050_778_001,
    0.652_145_154_862_546_142_626_936_050_778_001,
    0.347_854_845_137_453_857_373_063_949_221_999,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Segment { a, b, value: kronrod * half, error: ((kronrod - gauss) * half).abs() }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// Globally adaptive Gauss–Kronrod integration of `f` over `[a, b]`.
///
/// Stops when the summed error estimate is below `max(abs_tol, rel_tol * |I|)`.
/// Interior `breaks` (kinks of the integrand) seed the initial partition.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Integral> {
    let mut pts = vec![a];
    pts.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    pts.push(b);
    let mut segs: Vec<Segment> = pts.windows(2).map(|w| gk15(&mut f, w[0], w[1])).collect();
    let mut evals = 15 * segs.len();
    const MAX_SEGMENTS: usize = 2000;
    loop {
        let value: f64 = segs.iter().map(|s| s.value).sum();
        let error: f64 = segs.iter().map(|s| s.error).sum();
        if !value.is_finite() {
            return Err(SparError::numerical("quadrature produced a non-finite value"));
        }
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(Integral { value, error, evaluations: evals });
        }
        if segs.len() >= MAX_SEGMENTS {
            return Err(SparError::numerical(format!(
                "quadrature did not converge on [{a}, {b}]: estimate {value}, error {error}"
            )));
        }
        let (worst, _) = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("at least one segment");
        let s = segs.swap_remove(worst);
        let mid = 0.5 * (s.a + s.b);
        if mid <= s.a || mid >= s.b {
            return Err(SparError::numerical("quadrature interval underflow"));
        }
        segs.push(gk15(&mut f, s.a, mid));
        segs.push(gk15(&mut f, mid, s.b));
        evals += 30;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_and_exponentials() {
        let r = integrate(|x| x * x, 0.0, 3.0, &[], 1e-14, 1e-14).unwrap();
        assert!((r.value - 9.0).abs() < 1e-12);
        let r = integrate(|x| x * (-x).exp(), 0.0, 60.0, &[], 1e-13, 1e-12).unwrap();
        assert!((r.value - 1.0).abs() < 1e-11);
    }

    #[test]
    fn kinked_integrand() {
        let r = integrate(|x: f64| x.abs(), -1.0, 2.0, &[0.0], 1e-14, 1e-14).unwrap();
        assert!((r.value - 2.5).abs() < 1e-13);
        // without the break the adaptive refinement still gets there
        let r = integrate(|x: f64| x.abs(), -1.0, 2.0, &[], 1e-10, 1e-10).unwrap();
        assert!((r.value - 2.5).abs() < 1e-9);
    }

    #[test]
    fn gauss_legendre_exact_for_cubics_and_beyond() {
        let f = |x: f64| 3.0 * x.powi(6) - x.powi(3) + 2.0;
        let q: f64 = GL4_NODES.iter().zip(GL4_WEIGHTS).map(|(&x, w)| w * f(x)).sum();
        assert!((q - (6.0 / 7.0 + 4.0)).abs() < 1e-14);
    }
}
