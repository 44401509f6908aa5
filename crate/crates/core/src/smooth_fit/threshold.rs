//! Threshold estimation: quantile regression of the radius on the angle
//! under a misspecified asymmetric Laplace likelihood, with a smoothed
//! check function so the objective is differentiable.

use super::term::Term;
use super::{final_minimize, fold_ids, select_lambda, split, CvScore, SmoothingOptions};
use crate::coords::PolarSample;
use crate::cyclic_spline::{CyclicSplineBasis, SplineFunction};
use crate::error::{Result, SparError};
use crate::optimize::{minimize, Objective};
use crate::special::quantile;
use serde::{Deserialize, Serialize};

/// Smoothed check function: quadratic on `[-c, c]`, linear with slopes
/// `2(gamma - 1)` and `2 gamma` outside, C1 everywhere.
#[inline]
pub fn mod_check(x: f64, gamma: f64, c: f64) -> f64 {
    if x < -c {
        (gamma - 1.0) * (2.0 * x + c)
    } else if x < 0.0 {
        (1.0 - gamma) * x * x / c
    } else if x < c {
        gamma * x * x / c
    } else {
        gamma * (2.0 * x - c)
    }
}

#[inline]
pub fn mod_check_deriv(x: f64, gamma: f64, c: f64) -> f64 {
    if x < -c {
        2.0 * (gamma - 1.0)
    } else if x < 0.0 {
        2.0 * (1.0 - gamma) * x / c
    } else if x < c {
        2.0 * gamma * x / c
    } else {
        2.0 * gamma
    }
}

/// Standard pinball loss, used as the held-out score.
#[inline]
pub fn pinball(x: f64, gamma: f64) -> f64 {
    if x >= 0.0 {
        gamma * x
    } else {
        (gamma - 1.0) * x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFit {
    pub gamma: f64,
    pub c: f64,
    /// `ln u_gamma(q)`.
    pub log_u: SplineFunction,
    /// Log of the nuisance scale of the asymmetric Laplace model.
    pub log_sigma: SplineFunction,
    pub lambda_u: f64,
    pub lambda_sigma: f64,
    pub cv: Vec<CvScore>,
    /// Objective value at each accepted iterate of the final fit.
    pub trace: Vec<f64>,
    /// Share of training radii at or below the fitted threshold.
    pub non_exceedance_rate: f64,
}

impl ThresholdFit {
    pub fn u(&self, q: f64) -> f64 {
        self.log_u.eval(q).exp()
    }

    pub fn sigma(&self, q: f64) -> f64 {
        self.log_sigma.eval(q).exp()
    }
}

pub(crate) struct AldObjective<'a> {
    pub r: &'a [f64],
    pub tu: &'a Term,
    pub ts: &'a Term,
    pub gamma: f64,
    pub c: f64,
    pub lambda_u: f64,
    pub lambda_s: f64,
}

impl Objective for AldObjective<'_> {
    fn dim(&self) -> usize {
        self.tu.dim() + self.ts.dim()
    }

    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let (pu, ps) = x.split_at(self.tu.dim());
        let (mut gu, mut gs) = (Vec::new(), Vec::new());
        self.tu.values(pu, &mut gu);
        self.ts.values(ps, &mut gs);
        let n = self.r.len();
        let mut wu = vec![0.0; n];
        let mut ws = vec![0.0; n];
        let mut f = 0.0;
        for i in 0..n {
            let eu = gu[i].exp();
            let inv_s = (-gs[i]).exp();
            let z = (self.r[i] - eu) * inv_s;
            let d = mod_check_deriv(z, self.gamma, self.c);
            f += gs[i] + mod_check(z, self.gamma, self.c);
            wu[i] = -d * eu * inv_s;
            ws[i] = 1.0 - d * z;
        }
        if !f.is_finite() {
            return f64::INFINITY;
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        let (gru, grs) = grad.split_at_mut(self.tu.dim());
        self.tu.add_gradient(&wu, gru);
        self.ts.add_gradient(&ws, grs);
        f += self.tu.add_penalty(pu, self.lambda_u, gru);
        f += self.ts.add_penalty(ps, self.lambda_s, grs);
        f
    }
}

fn plain_params(tu: &Term, ts: &Term, fit: &ThresholdFit) -> Vec<f64> {
    let mut x = tu.params_of(&fit.log_u);
    x.extend(ts.params_of(&fit.log_sigma));
    x
}

/// Penalised negative asymmetric-Laplace log-likelihood of a threshold fit.
pub fn ald_objective(data: &PolarSample, fit: &ThresholdFit) -> Result<f64> {
    let tu = Term::plain(&fit.log_u.basis, &data.q);
    let ts = Term::plain(&fit.log_sigma.basis, &data.q);
    let x = plain_params(&tu, &ts, fit);
    for (i, (&r, &q)) in data.r.iter().zip(&data.q).enumerate() {
        let z = (r - fit.u(q)) / fit.sigma(q);
        if !z.is_finite() {
            return Err(SparError::numerical(format!("non-finite standardised residual at observation {i}")));
        }
    }
    let obj = AldObjective {
        r: &data.r,
        tu: &tu,
        ts: &ts,
        gamma: fit.gamma,
        c: fit.c,
        lambda_u: fit.lambda_u,
        lambda_s: fit.lambda_sigma,
    };
    let mut g = vec![0.0; obj.dim()];
    Ok(obj.eval(&x, &mut g))
}

/// Gradient of [`ald_objective`] with respect to
/// `[u intercept, u coefficients.., sigma intercept, sigma coefficients..]`.
pub fn ald_gradient(data: &PolarSample, fit: &ThresholdFit) -> Result<Vec<f64>> {
    let tu = Term::plain(&fit.log_u.basis, &data.q);
    let ts = Term::plain(&fit.log_sigma.basis, &data.q);
    let x = plain_params(&tu, &ts, fit);
    let obj = AldObjective {
        r: &data.r,
        tu: &tu,
        ts: &ts,
        gamma: fit.gamma,
        c: fit.c,
        lambda_u: fit.lambda_u,
        lambda_s: fit.lambda_sigma,
    };
    let mut g = vec![0.0; obj.dim()];
    if !obj.eval(&x, &mut g).is_finite() {
        return Err(SparError::numerical("threshold objective is not finite"));
    }
    Ok(g)
}

/// Fits `u_gamma(q)` by penalised asymmetric-Laplace regression.
pub fn fit_threshold(
    data: &PolarSample,
    basis: &CyclicSplineBasis,
    gamma: f64,
    c: f64,
    opts: &SmoothingOptions,
) -> Result<ThresholdFit> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(SparError::Config(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if !(c > 0.0) {
        return Err(SparError::Config(format!("check-function constant must be positive, got {c}")));
    }
    opts.validate()?;
    let n = data.len();
    let k = basis.dim();
    if n < 10 * k {
        return Err(SparError::Fitting {
            message: format!("{n} observations are too few for a threshold basis of dimension {k} (need {})", 10 * k),
            trace: vec![],
        });
    }
    let tu = Term::centered(basis, &data.q);
    let ts = tu.clone();
    let u0 = quantile(&data.r, gamma);
    let s0 = 2.0 * data.r.iter().map(|&r| pinball(r - u0, gamma)).sum::<f64>() / n as f64;
    let mut x0 = tu.constant_params(u0.max(1e-12).ln());
    x0.extend(ts.constant_params(s0.max(1e-12).ln()));

    let ids = fold_ids(&data.q, opts.folds.max(2));
    let folds: Vec<(Vec<usize>, Vec<usize>)> = (0..opts.folds.max(2)).map(|f| split(&ids, f)).collect();
    let fold_terms: Vec<(Term, Vec<f64>, Term, Vec<f64>)> = folds
        .iter()
        .map(|(train, test)| {
            (
                tu.subset(train),
                train.iter().map(|&i| data.r[i]).collect(),
                tu.subset(test),
                test.iter().map(|&i| data.r[i]).collect(),
            )
        })
        .collect();
    let dim_u = tu.dim();
    let selection = select_lambda(
        &opts.lambda_grid,
        opts.folds,
        &x0,
        |f, lambda, start| {
            let (t, r, _, _) = &fold_terms[f];
            let obj = AldObjective { r, tu: t, ts: t, gamma, c, lambda_u: lambda, lambda_s: lambda };
            minimize(&obj, start, &opts.optimizer).map(|res| res.x)
        },
        |f, x| {
            let (_, _, t, r) = &fold_terms[f];
            let mut g = Vec::new();
            t.values(&x[..dim_u], &mut g);
            r.iter().zip(&g).map(|(&ri, &gi)| pinball(ri - gi.exp(), gamma)).sum()
        },
    );
    let lambda = selection.lambda;
    let obj = AldObjective { r: &data.r, tu: &tu, ts: &ts, gamma, c, lambda_u: lambda, lambda_s: lambda };
    let res = final_minimize(&obj, &[selection.start, x0], &opts.optimizer, "threshold fit")?;
    let log_u = tu.to_spline(basis, &res.x[..dim_u]);
    let log_sigma = ts.to_spline(basis, &res.x[dim_u..]);
    let below = data.r.iter().zip(&data.q).filter(|(&r, &q)| r <= log_u.eval(q).exp()).count();
    Ok(ThresholdFit {
        gamma,
        c,
        log_u,
        log_sigma,
        lambda_u: lambda,
        lambda_sigma: lambda,
        cv: selection.scores,
        trace: res.trace,
        non_exceedance_rate: below as f64 / n as f64,
    })
}
