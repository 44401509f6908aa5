//! Bivariate copulas: Gaussian, Frank, Student t, Joe and independence.

use crate::error::{Result, SparError};
use crate::quadrature::integrate;
use crate::rng::{open_unit, seeded, SparRng};
use crate::special::{
    normal_cdf, normal_quantile_tails, normal_tails, student_t_ln_pdf, student_t_quantile_tails,
    student_t_tails, TailProb,
};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Frank parameters this close to zero are treated as the independence copula.
const FRANK_ZERO: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum CopulaSpec {
    Independence,
    Gaussian { rho: f64 },
    Frank { alpha: f64 },
    T { rho: f64, nu: f64 },
    Joe { alpha: f64 },
}

impl CopulaSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CopulaSpec::Independence => Ok(()),
            CopulaSpec::Gaussian { rho } => check_rho(rho),
            CopulaSpec::T { rho, nu } => {
                check_rho(rho)?;
                if !(nu > 0.0 && nu.is_finite()) {
                    return Err(SparError::domain(format!("t copula needs nu > 0, got {nu}")));
                }
                Ok(())
            }
            CopulaSpec::Frank { alpha } => {
                if !alpha.is_finite() || alpha == 0.0 {
                    return Err(SparError::domain(format!("Frank copula needs a finite alpha != 0, got {alpha}")));
                }
                Ok(())
            }
            CopulaSpec::Joe { alpha } => {
                if !(alpha >= 1.0 && alpha.is_finite()) {
                    return Err(SparError::domain(format!("Joe copula needs alpha >= 1, got {alpha}")));
                }
                Ok(())
            }
        }
    }

    /// Collapses degenerate parameterisations onto the independence copula.
    fn effective(&self) -> CopulaSpec {
        match *self {
            CopulaSpec::Frank { alpha } if alpha.abs() < FRANK_ZERO => CopulaSpec::Independence,
            CopulaSpec::Gaussian { rho } if rho == 0.0 => CopulaSpec::Independence,
            CopulaSpec::Joe { alpha } if alpha == 1.0 => CopulaSpec::Independence,
            other => other,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CopulaSpec::Independence => "independence",
            CopulaSpec::Gaussian { .. } => "gaussian",
            CopulaSpec::Frank { .. } => "frank",
            CopulaSpec::T { .. } => "t",
            CopulaSpec::Joe { .. } => "joe",
        }
    }

    /// Copula density at a pair of tail-split probabilities.
    pub fn density(&self, u: TailProb, v: TailProb) -> f64 {
        match self.effective() {
            CopulaSpec::Independence => 1.0,
            CopulaSpec::Gaussian { rho } => {
                let (a, b) = (normal_quantile_tails(u), normal_quantile_tails(v));
                let s = 1.0 - rho * rho;
                (-(rho * rho * (a * a + b * b) - 2.0 * rho * a * b) / (2.0 * s)).exp() / s.sqrt()
            }
            CopulaSpec::T { rho, nu } => {
                let (a, b) = (student_t_quantile_tails(u, nu), student_t_quantile_tails(v, nu));
                let s = 1.0 - rho * rho;
                use statrs::function::gamma::ln_gamma;
                let joint = ln_gamma(0.5 * (nu + 2.0)) - ln_gamma(0.5 * nu) - (nu * std::f64::consts::PI).ln()
                    - 0.5 * s.ln()
                    - 0.5 * (nu + 2.0) * ((a * a - 2.0 * rho * a * b + b * b) / (nu * s)).ln_1p();
                (joint - student_t_ln_pdf(a, nu) - student_t_ln_pdf(b, nu)).exp()
            }
            CopulaSpec::Frank { alpha } => {
                let e = -(-alpha).exp_m1(); // 1 - e^{-alpha}
                let eu = -(-alpha * u.lower).exp_m1();
                let ev = -(-alpha * v.lower).exp_m1();
                let denom = e - eu * ev;
                alpha * e * (-alpha * (u.lower + v.lower)).exp() / (denom * denom)
            }
            CopulaSpec::Joe { alpha } => {
                let (ua, va) = (u.upper.powf(alpha), v.upper.powf(alpha));
                let a = ua + va - ua * va;
                if a <= 0.0 {
                    return 0.0;
                }
                a.powf(1.0 / alpha - 2.0) * u.upper.powf(alpha - 1.0) * v.upper.powf(alpha - 1.0) * (alpha - 1.0 + a)
            }
        }
    }

    /// Conditional distribution `C(v | u) = dC(u, v)/du`.
    pub fn h_function(&self, u: TailProb, v: TailProb) -> f64 {
        match self.effective() {
            CopulaSpec::Independence => v.lower,
            CopulaSpec::Gaussian { rho } => {
                let (a, b) = (normal_quantile_tails(u), normal_quantile_tails(v));
                if rho.abs() == 1.0 {
                    return step(b - rho * a);
                }
                normal_cdf((b - rho * a) / (1.0 - rho * rho).sqrt())
            }
            CopulaSpec::T { rho, nu } => {
                let (a, b) = (student_t_quantile_tails(u, nu), student_t_quantile_tails(v, nu));
                if rho.abs() == 1.0 {
                    return step(b - rho * a);
                }
                let scale = ((nu + a * a) * (1.0 - rho * rho) / (nu + 1.0)).sqrt();
                student_t_tails((b - rho * a) / scale, nu + 1.0).lower
            }
            CopulaSpec::Frank { alpha } => {
                let eu = (-alpha * u.lower).exp();
                let euv = eu * (-alpha * v.lower).exp_m1();
                let num = euv;
                let denom = (-alpha).exp_m1() + (-alpha * u.lower).exp_m1() * (-alpha * v.lower).exp_m1();
                num / denom
            }
            CopulaSpec::Joe { alpha } => joe_h(alpha, u.upper, v.upper),
        }
    }

    /// Copula distribution function. Closed form for the Archimedean
    /// families; Gaussian and t integrate the conditional distribution.
    pub fn cdf(&self, u: f64, v: f64) -> Result<f64> {
        if u <= 0.0 || v <= 0.0 {
            return Ok(0.0);
        }
        if u >= 1.0 {
            return Ok(v.min(1.0));
        }
        if v >= 1.0 {
            return Ok(u);
        }
        match self.effective() {
            CopulaSpec::Independence => Ok(u * v),
            CopulaSpec::Frank { alpha } => {
                let num = (-alpha * u).exp_m1() * (-alpha * v).exp_m1();
                Ok(-(num / (-alpha).exp_m1()).ln_1p() / alpha)
            }
            CopulaSpec::Joe { alpha } => {
                let (ua, va) = ((1.0 - u).powf(alpha), (1.0 - v).powf(alpha));
                Ok(1.0 - (ua + va - ua * va).powf(1.0 / alpha))
            }
            spec @ (CopulaSpec::Gaussian { .. } | CopulaSpec::T { .. }) => {
                let vt = TailProb::from_lower(v);
                let r = integrate(|s| spec.h_function(TailProb::from_lower(s), vt), 0.0, u, &[], 1e-13, 1e-12)?;
                Ok(r.value.clamp(0.0, u.min(v)))
            }
        }
    }

    /// Upper tail dependence coefficient (closed form where it exists).
    pub fn upper_tail_dependence(&self) -> f64 {
        match self.effective() {
            CopulaSpec::T { rho, nu } => {
                let arg = -((nu + 1.0) * (1.0 - rho) / (1.0 + rho)).sqrt();
                2.0 * student_t_tails(arg, nu + 1.0).lower
            }
            CopulaSpec::Joe { alpha } => 2.0 - 2f64.powf(1.0 / alpha),
            _ => 0.0,
        }
    }

    /// Draws `n` pairs as tail-split uniforms (precise near 0 and 1).
    pub fn sample_tails(&self, n: usize, seed: u64) -> Result<Vec<(TailProb, TailProb)>> {
        self.validate()?;
        let mut rng = seeded(seed);
        let spec = self.effective();
        let mut out = Vec::with_capacity(n);
        match spec {
            CopulaSpec::Gaussian { rho } => {
                let c = (1.0 - rho * rho).sqrt();
                for _ in 0..n {
                    let z1: f64 = StandardNormal.sample(&mut rng);
                    let z2: f64 = StandardNormal.sample(&mut rng);
                    out.push((normal_tails(z1), normal_tails(rho * z1 + c * z2)));
                }
            }
            CopulaSpec::T { rho, nu } => {
                let c = (1.0 - rho * rho).sqrt();
                let chi = ChiSquared::new(nu).map_err(|e| SparError::domain(e.to_string()))?;
                for _ in 0..n {
                    let z1: f64 = StandardNormal.sample(&mut rng);
                    let z2: f64 = StandardNormal.sample(&mut rng);
                    let w: f64 = chi.sample(&mut rng);
                    let s = (w / nu).sqrt();
                    out.push((student_t_tails(z1 / s, nu), student_t_tails((rho * z1 + c * z2) / s, nu)));
                }
            }
            CopulaSpec::Independence => {
                for _ in 0..n {
                    out.push((uniform_tails(&mut rng), uniform_tails(&mut rng)));
                }
            }
            CopulaSpec::Frank { alpha } => {
                for _ in 0..n {
                    let u = open_unit(&mut rng);
                    let w = open_unit(&mut rng);
                    // closed-form inverse of the conditional distribution
                    let eu = (-alpha * u).exp();
                    let v = -(w * (-alpha).exp_m1() / (w + (1.0 - w) * eu)).ln_1p() / alpha;
                    let v = v.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
                    out.push((TailProb::from_lower(u), TailProb::from_lower(v)));
                }
            }
            CopulaSpec::Joe { alpha } => {
                for _ in 0..n {
                    let u = uniform_tails(&mut rng);
                    let w = open_unit(&mut rng);
                    let vbar = joe_conditional_inverse(alpha, u.upper, w);
                    out.push((u, TailProb { lower: 1.0 - vbar, upper: vbar }));
                }
            }
        }
        Ok(out)
    }

    /// Draws `n` uniform pairs from the copula, deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
        Ok(self.sample_tails(n, seed)?.into_iter().map(|(u, v)| (u.lower, v.lower)).collect())
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(SparError::domain(format!("correlation must lie in [-1, 1], got {rho}")));
    }
    Ok(())
}

fn step(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        0.0
    }
}

fn uniform_tails(rng: &mut SparRng) -> TailProb {
    let u = open_unit(rng);
    // draw the smaller tail directly so both complements are exact
    if rng.random::<bool>() {
        TailProb { lower: 0.5 * u, upper: 1.0 - 0.5 * u }
    } else {
        TailProb { lower: 1.0 - 0.5 * u, upper: 0.5 * u }
    }
}

/// Joe conditional distribution in terms of the upper tails `ubar`, `vbar`.
fn joe_h(alpha: f64, ubar: f64, vbar: f64) -> f64 {
    let (ua, va) = (ubar.powf(alpha), vbar.powf(alpha));
    let a = ua + va - ua * va;
    if a <= 0.0 {
        return 1.0;
    }
    a.powf(1.0 / alpha - 1.0) * ubar.powf(alpha - 1.0) * (1.0 - va)
}

/// Solves `C(v | u) = w` for `vbar = 1 - v` by bisection on `ln vbar`.
fn joe_conditional_inverse(alpha: f64, ubar: f64, w: f64) -> f64 {
    // h increases in v, i.e. decreases in vbar
    let (mut lo, mut hi) = (-700.0f64, 0.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if joe_h(alpha, ubar, mid.exp()) > w {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    (0.5 * (lo + hi)).exp()
}

/// Kendall's tau by merge-sort inversion counting (no ties assumed).
pub fn kendall_tau(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len();
    if n < 2 {
        return 0.0;
    }
    let mut sorted: Vec<(f64, f64)> = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut ys: Vec<f64> = sorted.into_iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; n];
    let discordant = count_inversions(&mut ys, &mut buf);
    let total = (n as f64) * (n as f64 - 1.0) / 2.0;
    (total - 2.0 * discordant as f64) / total
}

fn count_inversions(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = {
        let (left, right) = v.split_at_mut(mid);
        count_inversions(left, &mut buf[..mid]) + count_inversions(right, &mut buf[mid..])
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[i] <= v[j] {
            buf[k] = v[i];
            i += 1;
        } else {
            buf[k] = v[j];
            count += (mid - i) as u64;
            j += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    count
}
