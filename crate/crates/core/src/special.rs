//! Special functions and distribution helpers used across the crate.

use statrs::function::{beta, erf};
use std::f64::consts::{PI, SQRT_2};

/// Exponentially scaled modified Bessel function `exp(-x) I0(x)` for `x >= 0`.
///
/// Power series below 20, Hankel asymptotic expansion above. Both branches
/// carry the `exp(-x)` factor so the result never overflows.
pub fn bessel_i0_scaled(x: f64) -> f64 {
    let x = x.abs();
    if x <= 20.0 {
        let y = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        while term > 1e-17 * sum {
            term *= y / (k * k);
            sum += term;
            k += 1.0;
        }
        sum * (-x).exp()
    } else {
        let z = 8.0 * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..60 {
            let odd = (2 * k - 1) as f64;
            let next = term * odd * odd / (k as f64 * z);
            if next.abs() >= term.abs() {
                break;
            }
            term = next;
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
        }
        sum / (2.0 * PI * x).sqrt()
    }
}

/// Ratios `I_m(kappa) / I_0(kappa)` for `m = 1..` until they fall below `tol`
/// (or `max_terms` is reached). Miller backward recurrence on `I_m / I_{m-1}`.
pub fn bessel_ratio_series(kappa: f64, tol: f64, max_terms: usize) -> Vec<f64> {
    if kappa <= 0.0 {
        return Vec::new();
    }
    // I_m/I_0 ~ exp(-m^2 / (2 kappa)) for large kappa; start well past the cut.
    let guess = ((-2.0 * kappa * tol.ln()).sqrt() + 2.0 * kappa.sqrt() + 40.0).ceil() as usize;
    let start = guess.min(max_terms + 40).max(50);
    let mut ratios = vec![0.0; start + 1];
    let mut next = 0.0;
    for m in (1..=start).rev() {
        let r = 1.0 / (2.0 * m as f64 / kappa + next);
        ratios[m] = r;
        next = r;
    }
    let mut out = Vec::new();
    let mut prod = 1.0;
    for &r in ratios.iter().skip(1) {
        prod *= r;
        if prod < tol || out.len() >= max_terms {
            break;
        }
        out.push(prod);
    }
    out
}

/// A probability together with its complement, each held to full relative
/// precision so that far-tail quantiles can be recovered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailProb {
    pub lower: f64,
    pub upper: f64,
}

impl TailProb {
    pub fn from_lower(p: f64) -> Self {
        TailProb { lower: p, upper: 1.0 - p }
    }
}

/// Standard Laplace distribution function, split into both tails.
pub fn laplace_tails(x: f64) -> TailProb {
    if x < 0.0 {
        let p = 0.5 * x.exp();
        TailProb { lower: p, upper: 1.0 - p }
    } else {
        let p = 0.5 * (-x).exp();
        TailProb { lower: 1.0 - p, upper: p }
    }
}

pub fn laplace_cdf(x: f64) -> f64 {
    laplace_tails(x).lower
}

pub fn laplace_pdf(x: f64) -> f64 {
    0.5 * (-x.abs()).exp()
}

/// Standard Laplace quantile for a tail-split probability.
pub fn laplace_quantile_tails(p: TailProb) -> f64 {
    if p.lower < 0.5 {
        (2.0 * p.lower).ln()
    } else {
        -(2.0 * p.upper).ln()
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erf::erfc(-z / SQRT_2)
}

pub fn normal_tails(z: f64) -> TailProb {
    TailProb { lower: 0.5 * erf::erfc(-z / SQRT_2), upper: 0.5 * erf::erfc(z / SQRT_2) }
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Standard normal quantile, accurate in both tails.
pub fn normal_quantile_tails(p: TailProb) -> f64 {
    if p.lower <= 0.5 {
        -SQRT_2 * erf::erfc_inv(2.0 * p.lower)
    } else {
        SQRT_2 * erf::erfc_inv(2.0 * p.upper)
    }
}

pub fn normal_quantile(p: f64) -> f64 {
    normal_quantile_tails(TailProb::from_lower(p))
}

/// Student t distribution function with `nu` degrees of freedom, split into tails.
pub fn student_t_tails(t: f64, nu: f64) -> TailProb {
    let h = nu / (nu + t * t);
    let ib = 0.5 * beta::beta_reg(0.5 * nu, 0.5, h);
    if t <= 0.0 {
        TailProb { lower: ib, upper: 1.0 - ib }
    } else {
        TailProb { lower: 1.0 - ib, upper: ib }
    }
}

pub fn student_t_cdf(t: f64, nu: f64) -> f64 {
    student_t_tails(t, nu).lower
}

/// Student t quantile, accurate in both tails.
pub fn student_t_quantile_tails(p: TailProb, nu: f64) -> f64 {
    let (tail, sign) = if p.lower < 0.5 { (p.lower, -1.0) } else { (p.upper, 1.0) };
    if tail >= 0.5 {
        return 0.0;
    }
    if nu == 2.0 {
        // closed form on the upper tail: t = (1 - 2p) / sqrt(2 p (1 - p))
        let t = (1.0 - 2.0 * tail) / (2.0 * tail * (1.0 - tail)).sqrt();
        return sign * t;
    }
    let y = beta::inv_beta_reg(0.5 * nu, 0.5, 2.0 * tail);
    sign * (nu * (1.0 - y) / y).sqrt()
}

/// Log-density of the Student t distribution.
pub fn student_t_ln_pdf(t: f64, nu: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln()
        - 0.5 * (nu + 1.0) * (t * t / nu).ln_1p()
}

/// Linear-interpolation sample quantile (Hyndman-Fan type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// Type-7 sample quantile of unsorted data.
pub fn quantile(data: &[f64], p: f64) -> f64 {
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn i0_series_unscaled(x: f64) -> f64 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 0..200 {
            if k > 0 {
                term *= (0.25 * x * x) / ((k * k) as f64);
            }
            sum += term;
        }
        sum
    }

    #[test]
    fn bessel_matches_plain_series() {
        for &x in &[0.0, 0.3, 1.0, 5.0, 12.0, 19.9, 20.1, 25.0, 40.0, 50.0] {
            let want = i0_series_unscaled(x) * (-x as f64).exp();
            assert_relative_eq!(bessel_i0_scaled(x), want, max_relative = 1e-13);
        }
        assert_relative_eq!(bessel_i0_scaled(1.0) * 1f64.exp(), 1.2660658777520082, max_relative = 1e-14);
    }

    #[test]
    fn bessel_ratios_match_tabulated() {
        // I_0(2), I_1(2), I_2(2)
        let r = bessel_ratio_series(2.0, 1e-20, 100);
        assert_relative_eq!(r[0], 1.590636854637329 / 2.279585302336067, max_relative = 1e-12);
        assert_relative_eq!(r[1], 0.688948447698738 / 2.279585302336067, max_relative = 1e-12);
    }

    #[test]
    fn laplace_round_trip() {
        for &u in &[1e-12, 0.01, 0.25, 0.5, 0.75, 0.99, 1.0 - 1e-9] {
            let x = laplace_quantile_tails(TailProb::from_lower(u));
            assert!((laplace_cdf(x) - u).abs() < 1e-12);
        }
    }

    #[test]
    fn tail_quantiles_far_out() {
        let z = normal_quantile_tails(TailProb { lower: 1.0, upper: 1e-30 });
        assert_relative_eq!(normal_tails(z).upper, 1e-30, max_relative = 1e-8);
        for &nu in &[2.0, 3.5, 7.0] {
            for &p in &[1e-20, 1e-6, 0.1, 0.4] {
                let t = student_t_quantile_tails(TailProb { lower: 1.0 - p, upper: p }, nu);
                assert_relative_eq!(student_t_tails(t, nu).upper, p, max_relative = 1e-7);
                let t = student_t_quantile_tails(TailProb { lower: p, upper: 1.0 - p }, nu);
                assert_relative_eq!(student_t_tails(t, nu).lower, p, max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn type7_quantile() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert!((quantile_sorted(&v, 0.5) - 2.5).abs() < 1e-15);
    }
}
