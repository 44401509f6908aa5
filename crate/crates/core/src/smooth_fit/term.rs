//! One penalised spline term inside an optimisation: sparse design rows,
//! column centring and the roughness penalty.
//!
//! Parameters are laid out as `[b0, b_1 .. b_k]` and the term value is
//! `b0 + sum_j (B_j(q) - m_j) b_j`. With `m` the design column means the
//! intercept decouples from the shape; `m = 0` gives the plain spline.

use crate::cyclic_spline::{quad_form, BasisRow, CyclicSplineBasis, SplineFunction};
use std::sync::Arc;

#[derive(Debug, Clone)]
pub(crate) struct Term {
    pub k: usize,
    pub rows: Vec<BasisRow>,
    pub means: Arc<Vec<f64>>,
    pub penalty: Arc<Vec<Vec<f64>>>,
}

impl Term {
    pub fn centered(basis: &CyclicSplineBasis, angles: &[f64]) -> Term {
        let mut t = Term::plain(basis, angles);
        let mut means = vec![0.0; t.k];
        for r in &t.rows {
            for a in 0..4 {
                means[r.index(a, t.k)] += r.values[a];
            }
        }
        let n = angles.len().max(1) as f64;
        means.iter_mut().for_each(|m| *m /= n);
        t.means = Arc::new(means);
        t
    }

    pub fn plain(basis: &CyclicSplineBasis, angles: &[f64]) -> Term {
        Term {
            k: basis.dim(),
            rows: basis.rows(angles),
            means: Arc::new(vec![0.0; basis.dim()]),
            penalty: Arc::new(basis.penalty_matrix()),
        }
    }

    pub fn dim(&self) -> usize {
        self.k + 1
    }

    /// Same parameterisation restricted to the observations `idx`.
    pub fn subset(&self, idx: &[usize]) -> Term {
        Term {
            k: self.k,
            rows: idx.iter().map(|&i| self.rows[i]).collect(),
            means: Arc::clone(&self.means),
            penalty: Arc::clone(&self.penalty),
        }
    }

    fn offset(&self, p: &[f64]) -> f64 {
        p[0] - self.means.iter().zip(&p[1..]).map(|(m, b)| m * b).sum::<f64>()
    }

    pub fn values(&self, p: &[f64], out: &mut Vec<f64>) {
        let c = self.offset(p);
        let beta = &p[1..];
        out.clear();
        out.extend(self.rows.iter().map(|r| c + r.dot(beta)));
    }

    /// Adds the chain rule of `sum_i w_i * g_i` to `grad` (length `k + 1`).
    pub fn add_gradient(&self, w: &[f64], grad: &mut [f64]) {
        let total: f64 = w.iter().sum();
        grad[0] += total;
        for (r, &wi) in self.rows.iter().zip(w) {
            for a in 0..4 {
                grad[1 + r.index(a, self.k)] += wi * r.values[a];
            }
        }
        for j in 0..self.k {
            grad[1 + j] -= self.means[j] * total;
        }
    }

    /// `lambda b'Sb`, adding its gradient.
    pub fn add_penalty(&self, p: &[f64], lambda: f64, grad: &mut [f64]) -> f64 {
        let beta = &p[1..];
        if lambda == 0.0 {
            return 0.0;
        }
        for (j, row) in self.penalty.iter().enumerate() {
            let sb: f64 = row.iter().zip(beta).map(|(s, b)| s * b).sum();
            grad[1 + j] += 2.0 * lambda * sb;
        }
        lambda * quad_form(&self.penalty, beta)
    }

    pub fn to_spline(&self, basis: &CyclicSplineBasis, p: &[f64]) -> SplineFunction {
        let mut f = SplineFunction {
            basis: basis.clone(),
            intercept: self.offset(p),
            coeffs: p[1..].to_vec(),
        };
        f.normalize();
        f
    }

    pub fn params_of(&self, f: &SplineFunction) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.k + 1);
        p.push(f.intercept + self.means.iter().zip(&f.coeffs).map(|(m, b)| m * b).sum::<f64>());
        p.extend_from_slice(&f.coeffs);
        p
    }

    pub fn constant_params(&self, value: f64) -> Vec<f64> {
        let mut p = vec![0.0; self.k + 1];
        p[0] = value;
        p
    }
}
