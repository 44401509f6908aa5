//! Periodic cubic B-spline bases on the angular domain (-2, 2].
//!
//! Knots `t_0 < ... < t_{k-1}` are extended periodically (`t_{j+k} = t_j + 4`),
//! and basis function `j` is the cubic B-spline on `[t_j, t_{j+4}]`, wrapped.
//! Any spline is C2 across the wrap point by construction.

use crate::coords::wrap_angle;
use crate::error::{Result, SparError};
use crate::quadrature::{GL4_NODES, GL4_WEIGHTS};
use crate::special::quantile_sorted;
use serde::{Deserialize, Serialize};

pub const PERIOD: f64 = 4.0;
const DEGREE: usize = 3;
/// Knots closer than this are merged.
const MIN_KNOT_GAP: f64 = 1e-6;

/// Knots at the empirical quantiles `j/k`, `j = 1..k`, of the angles.
/// Falls back to equally spaced knots when fewer than 4 distinct remain.
pub fn place_knots(angles: &[f64], k: usize) -> Result<Vec<f64>> {
    if k < 4 {
        return Err(SparError::domain(format!("a cyclic cubic basis needs k >= 4, got {k}")));
    }
    if angles.len() < k {
        return Err(SparError::domain(format!("{} angles are too few for {k} knots", angles.len())));
    }
    let mut sorted: Vec<f64> = angles.iter().map(|&q| wrap_angle(q)).collect();
    sorted.sort_by(f64::total_cmp);
    let mut knots: Vec<f64> = Vec::with_capacity(k);
    for j in 1..=k {
        let t = quantile_sorted(&sorted, j as f64 / k as f64);
        if knots.last().is_none_or(|&last| t - last > MIN_KNOT_GAP) {
            knots.push(t);
        }
    }
    // the wrap gap must be open too
    while knots.len() > 1 && knots[0] + PERIOD - knots[knots.len() - 1] <= MIN_KNOT_GAP {
        knots.pop();
    }
    if knots.len() < 4 {
        return Ok(equally_spaced_knots(k));
    }
    Ok(knots)
}

/// `k` knots at `-2 + 4j/k`, `j = 1..k`.
pub fn equally_spaced_knots(k: usize) -> Vec<f64> {
    (1..=k).map(|j| -2.0 + PERIOD * j as f64 / k as f64).collect()
}

/// The nonzero part of one design row: values of basis functions
/// `first, first+1, .., first+3` (indices modulo `k`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisRow {
    pub first: usize,
    pub values: [f64; 4],
}

impl BasisRow {
    #[inline]
    pub fn index(&self, a: usize, k: usize) -> usize {
        (self.first + a) % k
    }

    #[inline]
    pub fn dot(&self, beta: &[f64]) -> f64 {
        let k = beta.len();
        (0..4).map(|a| self.values[a] * beta[self.index(a, k)]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CyclicSplineBasis {
    knots: Vec<f64>,
    /// Periodically extended knots, offset by `DEGREE`.
    ext: Vec<f64>,
}

impl TryFrom<Vec<f64>> for CyclicSplineBasis {
    type Error = SparError;
    fn try_from(knots: Vec<f64>) -> Result<Self> {
        CyclicSplineBasis::new(knots)
    }
}

impl From<CyclicSplineBasis> for Vec<f64> {
    fn from(b: CyclicSplineBasis) -> Vec<f64> {
        b.knots
    }
}

impl CyclicSplineBasis {
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        let k = knots.len();
        if k < 4 {
            return Err(SparError::domain(format!("a cyclic cubic basis needs k >= 4 knots, got {k}")));
        }
        if knots.iter().any(|&t| !(t > -2.0 && t <= 2.0)) {
            return Err(SparError::domain("knots must lie in (-2, 2]"));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SparError::domain("knots must be strictly increasing"));
        }
        // ext[m + DEGREE] = t_m for m in -DEGREE ..= k + DEGREE + 1
        let ext = (-(DEGREE as i64)..=(k + DEGREE + 1) as i64)
            .map(|m| {
                let wraps = m.div_euclid(k as i64);
                knots[m.rem_euclid(k as i64) as usize] + PERIOD * wraps as f64
            })
            .collect();
        Ok(CyclicSplineBasis { knots, ext })
    }

    pub fn from_data(angles: &[f64], k: usize) -> Result<Self> {
        Self::new(place_knots(angles, k)?)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn dim(&self) -> usize {
        self.knots.len()
    }

    #[inline]
    fn t(&self, m: i64) -> f64 {
        self.ext[(m + DEGREE as i64) as usize]
    }

    /// Knot interval `i` with `t_i <= x < t_{i+1}` and `x` shifted into `[t_0, t_0 + 4)`.
    fn locate(&self, q: f64) -> (usize, f64) {
        let t0 = self.knots[0];
        let mut x = t0 + (q - t0).rem_euclid(PERIOD);
        if x >= t0 + PERIOD {
            x = t0;
        }
        let k = self.knots.len();
        // ext[DEGREE + 1 ..= DEGREE + k] holds t_1..t_k (t_k = t_0 + 4)
        let i = self.ext[DEGREE + 1..=DEGREE + k].partition_point(|&t| t <= x);
        (i.min(k - 1), x)
    }

    /// Nonzero basis values and derivatives up to `order` (<= 3) at `q`.
    pub fn eval_derivs(&self, q: f64, order: usize) -> (usize, [[f64; 4]; 4]) {
        let (i, x) = self.locate(q);
        let k = self.knots.len();
        let i = i as i64;
        let p = DEGREE;
        let mut ndu = [[0.0f64; 4]; 4];
        let mut left = [0.0f64; 4];
        let mut right = [0.0f64; 4];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - self.t(i + 1 - j as i64);
            right[j] = self.t(i + j as i64) - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = [[0.0f64; 4]; 4];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let order = order.min(p);
        let mut a = [[0.0f64; 4]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for kk in 1..=order {
                let mut d = 0.0;
                let rk = r as i64 - kk as i64;
                let pk = p - kk;
                if r >= kk {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as i64 - 1 <= pk as i64 { kk - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as i64) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][kk] = -a[s1][kk - 1] / ndu[pk + 1][r];
                    d += a[s2][kk] * ndu[r][pk];
                }
                ders[kk][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for kk in 1..=order {
            for v in ders[kk].iter_mut() {
                *v *= factor;
            }
            factor *= (p - kk) as f64;
        }
        let first = (i - p as i64).rem_euclid(k as i64) as usize;
        (first, ders)
    }

    pub fn row(&self, q: f64) -> BasisRow {
        let (first, d) = self.eval_derivs(q, 0);
        BasisRow { first, values: d[0] }
    }

    pub fn rows(&self, angles: &[f64]) -> Vec<BasisRow> {
        angles.iter().map(|&q| self.row(q)).collect()
    }

    /// Dense `n x k` design matrix.
    pub fn design_matrix(&self, angles: &[f64]) -> Vec<Vec<f64>> {
        let k = self.dim();
        angles
            .iter()
            .map(|&q| {
                let r = self.row(q);
                let mut dense = vec![0.0; k];
                for a in 0..4 {
                    dense[r.index(a, k)] += r.values[a];
                }
                dense
            })
            .collect()
    }

    /// `S` with `b' S b = integral over one period of g''(q)^2`.
    pub fn penalty_matrix(&self) -> Vec<Vec<f64>> {
        let k = self.dim();
        let mut s = vec![vec![0.0; k]; k];
        for i in 0..k as i64 {
            let (a, b) = (self.t(i), self.t(i + 1));
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            for (&node, &w) in GL4_NODES.iter().zip(&GL4_WEIGHTS) {
                let (first, d) = self.eval_derivs(mid + half * node, 2);
                for ra in 0..4 {
                    for rb in 0..4 {
                        s[(first + ra) % k][(first + rb) % k] += w * half * d[2][ra] * d[2][rb];
                    }
                }
            }
        }
        s
    }
}

/// `g(q) = intercept + sum_j coeffs[j] B_j(q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineFunction {
    pub basis: CyclicSplineBasis,
    pub intercept: f64,
    pub coeffs: Vec<f64>,
}

impl SplineFunction {
    pub fn new(basis: CyclicSplineBasis, intercept: f64, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.dim() {
            return Err(SparError::domain(format!(
                "{} coefficients for a basis of dimension {}",
                coeffs.len(),
                basis.dim()
            )));
        }
        Ok(SplineFunction { basis, intercept, coeffs })
    }

    pub fn constant(basis: CyclicSplineBasis, value: f64) -> Self {
        let k = basis.dim();
        SplineFunction { basis, intercept: value, coeffs: vec![0.0; k] }
    }

    pub fn eval(&self, q: f64) -> f64 {
        self.intercept + self.basis.row(q).dot(&self.coeffs)
    }

    /// Derivative of order 0..=3 with respect to the angle.
    pub fn derivative(&self, q: f64, order: usize) -> f64 {
        let (first, d) = self.basis.eval_derivs(q, order);
        let k = self.coeffs.len();
        let v: f64 = (0..4).map(|a| d[order][a] * self.coeffs[(first + a) % k]).sum();
        if order == 0 {
            v + self.intercept
        } else {
            v
        }
    }

    /// `b' S b` for the coefficient vector.
    pub fn roughness(&self) -> f64 {
        quad_form(&self.basis.penalty_matrix(), &self.coeffs)
    }

    /// Moves the coefficient mean into the intercept; `g` is unchanged
    /// because the basis is a partition of unity.
    pub fn normalize(&mut self) {
        let m = self.coeffs.iter().sum::<f64>() / self.coeffs.len() as f64;
        self.coeffs.iter_mut().for_each(|b| *b -= m);
        self.intercept += m;
    }
}

pub(crate) fn quad_form(s: &[Vec<f64>], b: &[f64]) -> f64 {
    s.iter().zip(b).map(|(row, bi)| bi * row.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()).sum()
}
