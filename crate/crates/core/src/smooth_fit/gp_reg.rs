//! Non-stationary generalised Pareto regression of threshold excesses:
//! log-link spline for the scale, and a spline or a constant for the shape.

use super::term::Term;
use super::threshold::ThresholdFit;
use super::{final_minimize, fold_ids, select_lambda, split, CvScore, SmoothingOptions};
use crate::coords::PolarSample;
use crate::cyclic_spline::{CyclicSplineBasis, SplineFunction};
use crate::error::{Result, SparError};
use crate::gp::{fit_gp_mle, gp_nll_term};
use crate::optimize::{minimize, Objective};
use serde::{Deserialize, Serialize};

/// How the shape parameter varies with angle.
#[derive(Debug, Clone, PartialEq)]
pub enum ShapeBasis {
    Constant,
    Spline(CyclicSplineBasis),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeFunction {
    Constant(f64),
    Spline(SplineFunction),
}

impl ShapeFunction {
    pub fn eval(&self, q: f64) -> f64 {
        match self {
            ShapeFunction::Constant(x) => *x,
            ShapeFunction::Spline(s) => s.eval(q),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpFit {
    pub log_tau: SplineFunction,
    pub xi: ShapeFunction,
    pub lambda_tau: f64,
    pub lambda_xi: f64,
    pub cv: Vec<CvScore>,
    pub trace: Vec<f64>,
    pub n_exceedances: usize,
}

impl GpFit {
    pub fn tau(&self, q: f64) -> f64 {
        self.log_tau.eval(q).exp()
    }

    pub fn xi(&self, q: f64) -> f64 {
        self.xi.eval(q)
    }
}

pub(crate) enum ShapeTerm<'a> {
    Constant,
    Spline(&'a Term),
}

impl ShapeTerm<'_> {
    fn dim(&self) -> usize {
        match self {
            ShapeTerm::Constant => 1,
            ShapeTerm::Spline(t) => t.dim(),
        }
    }
}

pub(crate) struct GpObjective<'a> {
    pub y: &'a [f64],
    pub tt: &'a Term,
    pub shape: ShapeTerm<'a>,
    pub lambda_tau: f64,
    pub lambda_xi: f64,
}

impl GpObjective<'_> {
    fn shape_values(&self, px: &[f64], n: usize) -> Vec<f64> {
        match self.shape {
            ShapeTerm::Constant => vec![px[0]; n],
            ShapeTerm::Spline(t) => {
                let mut v = Vec::new();
                t.values(px, &mut v);
                v
            }
        }
    }
}

impl Objective for GpObjective<'_> {
    fn dim(&self) -> usize {
        self.tt.dim() + self.shape.dim()
    }

    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let (pt, px) = x.split_at(self.tt.dim());
        let n = self.y.len();
        let mut gt = Vec::new();
        self.tt.values(pt, &mut gt);
        let xi = self.shape_values(px, n);
        let mut wt = vec![0.0; n];
        let mut wx = vec![0.0; n];
        let mut f = 0.0;
        for i in 0..n {
            let (v, dt, dx) = gp_nll_term(self.y[i], gt[i], gt[i].exp(), xi[i]);
            if !v.is_finite() {
                return f64::INFINITY;
            }
            f += v;
            wt[i] = dt;
            wx[i] = dx;
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        let (grt, grx) = grad.split_at_mut(self.tt.dim());
        self.tt.add_gradient(&wt, grt);
        f += self.tt.add_penalty(pt, self.lambda_tau, grt);
        match self.shape {
            ShapeTerm::Constant => grx[0] = wx.iter().sum(),
            ShapeTerm::Spline(t) => {
                t.add_gradient(&wx, grx);
                f += t.add_penalty(px, self.lambda_xi, grx);
            }
        }
        f
    }
}

/// Excesses over the fitted threshold: (indices, excess sizes).
pub(crate) fn exceedances(data: &PolarSample, threshold: &ThresholdFit) -> (Vec<usize>, Vec<f64>) {
    let mut idx = Vec::new();
    let mut y = Vec::new();
    for (i, (&r, &q)) in data.r.iter().zip(&data.q).enumerate() {
        let u = threshold.u(q);
        if r > u {
            idx.push(i);
            y.push(r - u);
        }
    }
    (idx, y)
}

fn plain_setup(data: &PolarSample, threshold: &ThresholdFit, fit: &GpFit) -> Result<(Vec<f64>, Term, Option<Term>, Vec<f64>)> {
    let mut y = Vec::with_capacity(data.len());
    for (i, (&r, &q)) in data.r.iter().zip(&data.q).enumerate() {
        let u = threshold.u(q);
        if r <= u {
            return Err(SparError::domain(format!(
                "observation {i} (r={r}, q={q}) does not exceed the threshold {u}"
            )));
        }
        y.push(r - u);
    }
    let tt = Term::plain(&fit.log_tau.basis, &data.q);
    let mut x = tt.params_of(&fit.log_tau);
    let tx = match &fit.xi {
        ShapeFunction::Constant(v) => {
            x.push(*v);
            None
        }
        ShapeFunction::Spline(s) => {
            let t = Term::plain(&s.basis, &data.q);
            x.extend(t.params_of(s));
            Some(t)
        }
    };
    Ok((y, tt, tx, x))
}

/// Penalised GP negative log-likelihood of exceedances; `+inf` when an
/// observation falls outside the fitted support.
pub fn gp_negloglik(exceed: &PolarSample, threshold: &ThresholdFit, fit: &GpFit) -> Result<f64> {
    let (y, tt, tx, x) = plain_setup(exceed, threshold, fit)?;
    let obj = GpObjective {
        y: &y,
        tt: &tt,
        shape: tx.as_ref().map_or(ShapeTerm::Constant, ShapeTerm::Spline),
        lambda_tau: fit.lambda_tau,
        lambda_xi: fit.lambda_xi,
    };
    let mut g = vec![0.0; obj.dim()];
    Ok(obj.eval(&x, &mut g))
}

/// Gradient of [`gp_negloglik`] with respect to
/// `[tau intercept, tau coefficients.., xi (constant) | xi intercept, xi coefficients..]`.
pub fn gp_gradient(exceed: &PolarSample, threshold: &ThresholdFit, fit: &GpFit) -> Result<Vec<f64>> {
    let (y, tt, tx, x) = plain_setup(exceed, threshold, fit)?;
    let obj = GpObjective {
        y: &y,
        tt: &tt,
        shape: tx.as_ref().map_or(ShapeTerm::Constant, ShapeTerm::Spline),
        lambda_tau: fit.lambda_tau,
        lambda_xi: fit.lambda_xi,
    };
    let mut g = vec![0.0; obj.dim()];
    if !obj.eval(&x, &mut g).is_finite() {
        return Err(SparError::numerical("GP objective is infinite: an excess lies outside the support"));
    }
    Ok(g)
}

/// Fits the scale and shape functions to the excesses over `threshold`.
pub fn fit_gp(
    data: &PolarSample,
    threshold: &ThresholdFit,
    basis_tau: &CyclicSplineBasis,
    shape: &ShapeBasis,
    opts: &SmoothingOptions,
) -> Result<GpFit> {
    opts.validate()?;
    let (idx, y) = exceedances(data, threshold);
    let m = y.len();
    let need = 20 * basis_tau.dim();
    if m < need {
        return Err(SparError::Fitting {
            message: format!("{m} exceedances are too few for a scale basis of dimension {} (need {need})", basis_tau.dim()),
            trace: vec![],
        });
    }
    let q: Vec<f64> = idx.iter().map(|&i| data.q[i]).collect();
    let tt = Term::centered(basis_tau, &q);
    let tx = match shape {
        ShapeBasis::Constant => None,
        ShapeBasis::Spline(b) => Some(Term::centered(b, &q)),
    };
    let shape_term = || tx.as_ref().map_or(ShapeTerm::Constant, ShapeTerm::Spline);

    // stationary start, then a fallback shape of -0.1 and finally the exponential
    let (tau0, xi0) = match fit_gp_mle(&y) {
        Ok(e) => (e.tau, e.xi),
        Err(_) => (y.iter().sum::<f64>() / m as f64, -0.1),
    };
    let start_for = |xi: f64| {
        let mut x = tt.constant_params(tau0.ln());
        match &tx {
            None => x.push(xi),
            Some(t) => x.extend(t.constant_params(xi)),
        }
        x
    };
    let probe = GpObjective { y: &y, tt: &tt, shape: shape_term(), lambda_tau: 0.0, lambda_xi: 0.0 };
    let mut scratch = vec![0.0; probe.dim()];
    let x0 = [xi0, -0.1, 0.0]
        .iter()
        .map(|&xi| start_for(xi))
        .find(|x| probe.eval(x, &mut scratch).is_finite())
        .expect("the exponential start is always feasible");

    let ids = fold_ids(&q, opts.folds.max(2));
    struct Fold {
        tt: Term,
        tx: Option<Term>,
        y: Vec<f64>,
        tt_test: Term,
        tx_test: Option<Term>,
        y_test: Vec<f64>,
    }
    let folds: Vec<Fold> = (0..opts.folds.max(2))
        .map(|f| {
            let (train, test) = split(&ids, f);
            Fold {
                tt: tt.subset(&train),
                tx: tx.as_ref().map(|t| t.subset(&train)),
                y: train.iter().map(|&i| y[i]).collect(),
                tt_test: tt.subset(&test),
                tx_test: tx.as_ref().map(|t| t.subset(&test)),
                y_test: test.iter().map(|&i| y[i]).collect(),
            }
        })
        .collect();
    let selection = select_lambda(
        &opts.lambda_grid,
        opts.folds,
        &x0,
        |f, lambda, start| {
            let fd = &folds[f];
            let obj = GpObjective {
                y: &fd.y,
                tt: &fd.tt,
                shape: fd.tx.as_ref().map_or(ShapeTerm::Constant, ShapeTerm::Spline),
                lambda_tau: lambda,
                lambda_xi: lambda,
            };
            minimize(&obj, start, &opts.optimizer).map(|r| r.x)
        },
        |f, x| {
            let fd = &folds[f];
            let obj = GpObjective {
                y: &fd.y_test,
                tt: &fd.tt_test,
                shape: fd.tx_test.as_ref().map_or(ShapeTerm::Constant, ShapeTerm::Spline),
                lambda_tau: 0.0,
                lambda_xi: 0.0,
            };
            let mut g = vec![0.0; obj.dim()];
            obj.eval(x, &mut g)
        },
    );
    let lambda = selection.lambda;
    let obj = GpObjective { y: &y, tt: &tt, shape: shape_term(), lambda_tau: lambda, lambda_xi: lambda };
    let mut starts = vec![];
    if obj.eval(&selection.start, &mut scratch).is_finite() {
        starts.push(selection.start);
    }
    starts.push(x0);
    let res = final_minimize(&obj, &starts, &opts.optimizer, "GP fit")?;
    let dt = tt.dim();
    let log_tau = tt.to_spline(basis_tau, &res.x[..dt]);
    let xi = match (&tx, shape) {
        (Some(t), ShapeBasis::Spline(b)) => ShapeFunction::Spline(t.to_spline(b, &res.x[dt..])),
        _ => ShapeFunction::Constant(res.x[dt]),
    };
    Ok(GpFit {
        log_tau,
        xi,
        lambda_tau: lambda,
        lambda_xi: if tx.is_some() { lambda } else { 0.0 },
        cv: selection.scores,
        trace: res.trace,
        n_exceedances: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coords::CoordinateSystem;
    use crate::gp::{gp_sample, gp_standard_errors};
    use crate::rng::{open_unit, seeded};
    use approx::assert_relative_eq;

    fn flat_threshold(basis: &CyclicSplineBasis, u: f64) -> ThresholdFit {
        ThresholdFit {
            gamma: 0.8,
            c: 0.5,
            log_u: SplineFunction::constant(basis.clone(), u.ln()),
            log_sigma: SplineFunction::constant(basis.clone(), 0.0),
            lambda_u: 0.0,
            lambda_sigma: 0.0,
            cv: vec![],
            trace: vec![],
            non_exceedance_rate: 0.8,
        }
    }

    fn gp_data(n: usize, u: f64, tau: f64, xi: f64, seed: u64) -> PolarSample {
        let mut rng = seeded(seed);
        let q: Vec<f64> = (0..n).map(|_| -2.0 + 4.0 * open_unit(&mut rng)).collect();
        let r: Vec<f64> = (0..n).map(|_| u + gp_sample(&mut rng, tau, xi)).collect();
        PolarSample::new(CoordinateSystem::L1, r, q).unwrap()
    }

    #[test]
    fn exponential_branch_example() {
        let basis = CyclicSplineBasis::new(crate::cyclic_spline::equally_spaced_knots(4)).unwrap();
        let th = flat_threshold(&basis, 1.0);
        let data = PolarSample::new(CoordinateSystem::L1, vec![2.0], vec![0.3]).unwrap();
        let fit = GpFit {
            log_tau: SplineFunction::constant(basis, 0.0),
            xi: ShapeFunction::Constant(0.0),
            lambda_tau: 0.0,
            lambda_xi: 0.0,
            cv: vec![],
            trace: vec![],
            n_exceedances: 1,
        };
        assert_relative_eq!(gp_negloglik(&data, &th, &fit).unwrap(), 1.0, epsilon = 1e-15);
        let below = PolarSample::new(CoordinateSystem::L1, vec![0.5], vec![0.3]).unwrap();
        assert!(gp_negloglik(&below, &th, &fit).is_err());
        let mut bounded = fit.clone();
        bounded.xi = ShapeFunction::Constant(-1.5);
        assert_eq!(gp_negloglik(&data, &th, &bounded).unwrap(), f64::INFINITY);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let data = gp_data(300, 1.0, 1.5, 0.1, 8);
        let basis = CyclicSplineBasis::from_data(&data.q, 8).unwrap();
        let bx = CyclicSplineBasis::from_data(&data.q, 5).unwrap();
        let y: Vec<f64> = data.r.iter().map(|r| r - 1.0).collect();
        let tt = Term::centered(&basis, &data.q);
        let tx = Term::centered(&bx, &data.q);
        let mut rng = seeded(9);
        for shape in [ShapeTerm::Constant, ShapeTerm::Spline(&tx)] {
            let obj = GpObjective { y: &y, tt: &tt, shape, lambda_tau: 0.7, lambda_xi: 3.0 };
            for _ in 0..5 {
                let x: Vec<f64> = (0..obj.dim())
                    .map(|j| if j == 0 { 0.4 } else if j == tt.dim() { 0.1 } else { 0.05 * (open_unit(&mut rng) - 0.5) })
                    .collect();
                let mut g = vec![0.0; obj.dim()];
                assert!(obj.eval(&x, &mut g).is_finite());
                let fd = crate::optimize::finite_difference_gradient(&obj, &x, 1e-6);
                for j in 0..g.len() {
                    assert_relative_eq!(g[j], fd[j], max_relative = 1e-5, epsilon = 1e-5);
                }
            }
        }
    }

    #[test]
    fn recovers_constant_gp() {
        let (tau, xi) = (2.0, 0.1);
        let data = gp_data(4000, 1.0, tau, xi, 10);
        let basis = CyclicSplineBasis::from_data(&data.q, 10).unwrap();
        let th = flat_threshold(&basis, 1.0);
        let fit = fit_gp(&data, &th, &basis, &ShapeBasis::Constant, &SmoothingOptions::default()).unwrap();
        let (se_tau, se_xi) = gp_standard_errors(tau, xi, data.len());
        for i in 0..40 {
            let q = -2.0 + 0.1 * i as f64;
            // a smooth scale function has more freedom than the stationary model
            assert!((fit.tau(q) - tau).abs() < 3.0 * se_tau * 2.0, "tau {} at {q}", fit.tau(q));
        }
        assert!((fit.xi(0.0) - xi).abs() < 3.0 * se_xi, "xi {}", fit.xi(0.0));
    }

    #[test]
    fn scale_equivariance() {
        let data = gp_data(1500, 1.0, 1.0, 0.05, 11);
        let basis = CyclicSplineBasis::from_data(&data.q, 6).unwrap();
        let th = flat_threshold(&basis, 1.0);
        let s = 3.0;
        let scaled = PolarSample::new(CoordinateSystem::L1, data.r.iter().map(|r| 1.0 + s * (r - 1.0)).collect(), data.q.clone()).unwrap();
        let opts = SmoothingOptions::fixed(1e8);
        let a = fit_gp(&data, &th, &basis, &ShapeBasis::Constant, &opts).unwrap();
        let b = fit_gp(&scaled, &th, &basis, &ShapeBasis::Constant, &opts).unwrap();
        assert!((b.log_tau.eval(0.2) - a.log_tau.eval(0.2) - s.ln()).abs() < 1e-4);
        assert!((a.xi(0.0) - b.xi(0.0)).abs() < 1e-4);
    }

    #[test]
    fn too_few_exceedances() {
        let data = gp_data(100, 1.0, 1.0, 0.0, 12);
        let basis = CyclicSplineBasis::from_data(&data.q, 8).unwrap();
        let th = flat_threshold(&basis, 1.0);
        assert!(matches!(
            fit_gp(&data, &th, &basis, &ShapeBasis::Constant, &SmoothingOptions::default()),
            Err(SparError::Fitting { .. })
        ));
    }
}
