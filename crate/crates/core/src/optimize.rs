//! Limited-memory BFGS with a backtracking Armijo line search.
//!
//! Objectives report `+inf` for infeasible points (e.g. outside the GP
//! support); the line search treats such trial points as rejected steps and
//! keeps shrinking.

use std::collections::VecDeque;

/// A differentiable objective. `eval` writes the gradient into `grad` and
/// returns the value; it may return `f64::INFINITY` to reject a point, in
/// which case the gradient contents are ignored.
pub trait Objective {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Debug, Clone)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when the gradient sup-norm falls below this.
    pub grad_tol: f64,
    /// Stop when the relative objective change falls below this.
    pub rel_tol: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            memory: 10,
            max_iter: 500,
            grad_tol: 1e-6,
            rel_tol: 1e-10,
            armijo: 1e-4,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    GradientTolerance,
    RelativeChange,
    /// The line search could not decrease the objective further; the
    /// current point is returned as the best available.
    LineSearchStalled,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    /// Objective value after each accepted iterate (starting point first).
    pub trace: Vec<f64>,
    pub grad_norm: f64,
}

impl OptimResult {
    pub fn converged(&self) -> bool {
        !matches!(self.termination, Termination::MaxIterations)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Minimise `obj` from `x0`. Returns `None` if the objective is infinite at `x0`.
pub fn minimize<O: Objective + ?Sized>(obj: &O, x0: &[f64], opts: &LbfgsOptions) -> Option<OptimResult> {
    let n = obj.dim();
    assert_eq!(x0.len(), n);
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = obj.eval(&x, &mut g);
    let mut evaluations = 1;
    if !f.is_finite() {
        return None;
    }
    let mut trace = vec![f];
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut alpha_buf = vec![0.0; opts.memory];
    let mut d = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    for iter in 0..opts.max_iter {
        if sup_norm(&g) < opts.grad_tol {
            termination = Termination::GradientTolerance;
            break;
        }
        // two-loop recursion
        d.copy_from_slice(&g);
        for (i, (s, y, rho)) in history.iter().enumerate().rev() {
            let a = rho * dot(s, &d);
            alpha_buf[i] = a;
            for (dj, yj) in d.iter_mut().zip(y) {
                *dj -= a * yj;
            }
        }
        let h0 = match history.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / sup_norm(&g).max(1.0),
        };
        d.iter_mut().for_each(|v| *v *= h0);
        for (i, (s, y, rho)) in history.iter().enumerate() {
            let b = rho * dot(y, &d);
            for (dj, sj) in d.iter_mut().zip(s) {
                *dj += (alpha_buf[i] - b) * sj;
            }
        }
        d.iter_mut().for_each(|v| *v = -*v);
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            // not a descent direction: restart from steepest descent
            history.clear();
            let scale = 1.0 / sup_norm(&g).max(1.0);
            for (dj, gj) in d.iter_mut().zip(&g) {
                *dj = -gj * scale;
            }
            slope = dot(&g, &d);
        }

        let mut step = 1.0;
        let mut accepted = false;
        let mut f_new = f;
        for _ in 0..opts.max_backtracks {
            for j in 0..n {
                x_new[j] = x[j] + step * d[j];
            }
            f_new = obj.eval(&x_new, &mut g_new);
            evaluations += 1;
            if f_new.is_finite() && f_new <= f + opts.armijo * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            termination = Termination::LineSearchStalled;
            break;
        }
        iterations = iter + 1;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let change = (f - f_new).abs() / f.abs().max(f_new.abs()).max(1.0);
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        f = f_new;
        trace.push(f);
        if change < opts.rel_tol {
            termination = Termination::RelativeChange;
            break;
        }
    }
    let grad_norm = sup_norm(&g);
    if grad_norm < opts.grad_tol {
        termination = Termination::GradientTolerance;
    }
    Some(OptimResult { x, value: f, iterations, evaluations, termination, trace, grad_norm })
}

/// Central finite-difference gradient, used by tests to check analytic gradients.
pub fn finite_difference_gradient<O: Objective + ?Sized>(obj: &O, x: &[f64], h: f64) -> Vec<f64> {
    let mut scratch = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|j| {
            let step = h * x[j].abs().max(1.0);
            xp[j] = x[j] + step;
            let fp = obj.eval(&xp, &mut scratch);
            xp[j] = x[j] - step;
            let fm = obj.eval(&xp, &mut scratch);
            xp[j] = x[j];
            (fp - fm) / (2.0 * step)
        })
        .collect()
}
