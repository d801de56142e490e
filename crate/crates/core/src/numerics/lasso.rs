//! Lasso and logistic lasso with per-coordinate penalty loadings.
//!
//! Objectives, for a cell of `n` observations:
//!
//! * least squares: `(1/n) * sum (y_i - x_i'b)^2 + (rho/n) * sum_j w_j |b_j|`
//! * logistic: `-(1/n) * loglik(b) + (rho/n) * sum_j w_j |b_j|`
//!
//! Both are solved by cyclic coordinate descent in ascending column order on
//! the Gram matrix; the logistic case wraps it in iteratively reweighted
//! least squares.

use nalgebra::{DMatrix, DVector};

use super::logistic::{log_likelihood, logistic};
use super::normal::normal_quantile;
use crate::error::{Error, Result};

const CD_TOL: f64 = 1e-8;
const CD_MAX_SWEEPS: usize = 10_000;
const IRLS_MAX_ITER: usize = 100;
const SEPARATION_RIDGE: f64 = 1e-8;
/// Stop refitting once no loading moves by more than this.
pub const LOADING_TOL: f64 = 1e-4;
pub const LOADING_MAX_ITER: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    LeastSquares,
    Logistic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub coef: DVector<f64>,
    pub loadings: DVector<f64>,
    pub rho: f64,
    pub active_set: Vec<usize>,
    pub loading_iterations: usize,
    pub converged: bool,
    pub ridge_used: bool,
}

impl LassoFit {
    pub fn predict(&self, design: &DMatrix<f64>, family: Family) -> DVector<f64> {
        let eta = design * &self.coef;
        match family {
            Family::LeastSquares => eta,
            Family::Logistic => eta.map(logistic),
        }
    }
}

/// Penalty level `c * sqrt(n_a) * Phi^{-1}(1 - 1 / (p_n * ln n_a))`.
pub fn rho_tuning(n_as: usize, p_n: usize, c: f64) -> Result<f64> {
    let arg = 1.0 - 1.0 / (p_n as f64 * (n_as as f64).ln());
    if !(arg > 0.0 && arg < 1.0) {
        return Err(Error::ProbabilityOutOfRange(arg));
    }
    Ok(c * (n_as as f64).sqrt() * normal_quantile(arg)?)
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Minimizes `0.5 b'Gb - c'b + sum_j pen_j |b_j| + 0.5 ridge |b|^2` by
/// coordinate descent from `b`. Returns whether the sweep tolerance was met.
fn coordinate_descent(
    gram: &DMatrix<f64>,
    c: &DVector<f64>,
    pen: &DVector<f64>,
    ridge: f64,
    b: &mut DVector<f64>,
) -> bool {
    let p = b.len();
    let mut gb = gram * &*b;
    for _ in 0..CD_MAX_SWEEPS {
        let mut max_change: f64 = 0.0;
        for j in 0..p {
            let gjj = gram[(j, j)] + ridge;
            if gjj <= 0.0 {
                if b[j] != 0.0 {
                    let delta = -b[j];
                    b[j] = 0.0;
                    gb.axpy(delta, &gram.column(j), 1.0);
                    max_change = max_change.max(delta.abs());
                }
                continue;
            }
            let z = c[j] - gb[j] + gram[(j, j)] * b[j];
            let new = soft_threshold(z, pen[j]) / gjj;
            let delta = new - b[j];
            if delta != 0.0 {
                b[j] = new;
                gb.axpy(delta, &gram.column(j), 1.0);
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < CD_TOL {
            return true;
        }
    }
    false
}

fn check_inputs(design: &DMatrix<f64>, y: &[f64], rho: f64, loadings: &DVector<f64>) -> Result<()> {
    assert_eq!(design.nrows(), y.len(), "response length must match design rows");
    assert_eq!(design.ncols(), loadings.len(), "one loading per column");
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::InvalidConfig(format!("penalty level {rho} must be finite and >= 0")));
    }
    if loadings.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidConfig("penalty loadings must be finite and >= 0".into()));
    }
    Ok(())
}

fn active(coef: &DVector<f64>) -> Vec<usize> {
    coef.iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(j, _)| j).collect()
}

fn lasso_ls_from(
    design: &DMatrix<f64>,
    y: &[f64],
    rho: f64,
    loadings: &DVector<f64>,
    start: Option<&DVector<f64>>,
) -> Result<LassoFit> {
    check_inputs(design, y, rho, loadings)?;
    let yv = DVector::from_column_slice(y);
    let gram = design.transpose() * design;
    let xty = design.transpose() * &yv;
    // Sum-scale form of the objective: halve the penalty because the loss
    // carries no 1/2.
    let pen = loadings * (0.5 * rho);
    let mut b = start.cloned().unwrap_or_else(|| DVector::zeros(design.ncols()));
    let converged = coordinate_descent(&gram, &xty, &pen, 0.0, &mut b);
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteLoss("least-squares lasso"));
    }
    Ok(LassoFit {
        active_set: active(&b),
        coef: b,
        loadings: loadings.clone(),
        rho,
        loading_iterations: 0,
        converged,
        ridge_used: false,
    })
}

/// Least-squares lasso with fixed loadings.
pub fn lasso_ls(design: &DMatrix<f64>, y: &[f64], rho: f64, loadings: &DVector<f64>) -> Result<LassoFit> {
    lasso_ls_from(design, y, rho, loadings, None)
}

fn logit_objective(design: &DMatrix<f64>, y: &[f64], pen: &DVector<f64>, ridge: f64, b: &DVector<f64>) -> f64 {
    let penalty: f64 = pen.iter().zip(b.iter()).map(|(w, v)| w * v.abs()).sum();
    -log_likelihood(&(design * b), y) + penalty + 0.5 * ridge * b.norm_squared()
}

enum IrlsOutcome {
    Done(DVector<f64>, bool),
    Diverged,
}

fn irls(
    design: &DMatrix<f64>,
    y: &[f64],
    pen: &DVector<f64>,
    ridge: f64,
    start: DVector<f64>,
) -> IrlsOutcome {
    let yv = DVector::from_column_slice(y);
    let mut b = start;
    let mut value = logit_objective(design, y, pen, ridge, &b);
    for _ in 0..IRLS_MAX_ITER {
        let eta = design * &b;
        if ridge == 0.0 && eta.amax() > 30.0 {
            return IrlsOutcome::Diverged;
        }
        let prob = eta.map(logistic);
        let w = prob.map(|q| (q * (1.0 - q)).max(1e-12));
        // Quadratic model of the negative log-likelihood at b:
        // 0.5 t'(X'WX)t - (X'W eta + X'(y - p))'t.
        let xw = DMatrix::from_fn(design.nrows(), design.ncols(), |i, j| design[(i, j)] * w[i]);
        let gram = xw.transpose() * design;
        let c = xw.transpose() * &eta + design.transpose() * (&yv - &prob);
        let mut cand = b.clone();
        coordinate_descent(&gram, &c, pen, ridge, &mut cand);
        let mut t = 1.0;
        let mut next = cand.clone();
        let mut next_value = logit_objective(design, y, pen, ridge, &next);
        while !(next_value <= value) && t > 1e-10 {
            t *= 0.5;
            next = &b + t * (&cand - &b);
            next_value = logit_objective(design, y, pen, ridge, &next);
        }
        if !next_value.is_finite() {
            return IrlsOutcome::Diverged;
        }
        if !(next_value <= value) {
            return IrlsOutcome::Done(b, true);
        }
        let change = (&next - &b).amax();
        b = next;
        value = next_value;
        if change < CD_TOL {
            return IrlsOutcome::Done(b, true);
        }
    }
    IrlsOutcome::Done(b, false)
}

fn lasso_logit_from(
    design: &DMatrix<f64>,
    y: &[f64],
    rho: f64,
    loadings: &DVector<f64>,
    start: Option<&DVector<f64>>,
) -> Result<LassoFit> {
    check_inputs(design, y, rho, loadings)?;
    if let Some(i) = y.iter().position(|v| *v != 0.0 && *v != 1.0) {
        return Err(Error::NonBinary {
            what: "logistic response",
            index: i,
            value: y[i],
        });
    }
    let pen = loadings * rho;
    let zero = DVector::zeros(design.ncols());
    let start = start.cloned().unwrap_or_else(|| zero.clone());
    let (coef, converged, ridge_used) = match irls(design, y, &pen, 0.0, start) {
        IrlsOutcome::Done(b, ok) => (b, ok, false),
        IrlsOutcome::Diverged => match irls(design, y, &pen, SEPARATION_RIDGE, zero) {
            IrlsOutcome::Done(b, ok) => (b, ok, true),
            IrlsOutcome::Diverged => return Err(Error::NonFiniteLoss("logistic lasso")),
        },
    };
    if coef.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteLoss("logistic lasso"));
    }
    Ok(LassoFit {
        active_set: active(&coef),
        coef,
        loadings: loadings.clone(),
        rho,
        loading_iterations: 0,
        converged,
        ridge_used,
    })
}

/// Logistic lasso with fixed loadings.
pub fn lasso_logit(design: &DMatrix<f64>, y: &[f64], rho: f64, loadings: &DVector<f64>) -> Result<LassoFit> {
    lasso_logit_from(design, y, rho, loadings, None)
}

fn residuals(design: &DMatrix<f64>, y: &[f64], fit: &LassoFit, family: Family) -> DVector<f64> {
    DVector::from_column_slice(y) - fit.predict(design, family)
}

fn loadings_from(design: &DMatrix<f64>, resid: &DVector<f64>, unpenalized: &[usize]) -> DVector<f64> {
    let n = design.nrows() as f64;
    DVector::from_fn(design.ncols(), |h, _| {
        if unpenalized.contains(&h) {
            0.0
        } else {
            let m: f64 = design.column(h).iter().zip(resid.iter()).map(|(x, e)| (x * e).powi(2)).sum();
            (m / n).sqrt()
        }
    })
}

/// Lasso with data-driven penalty loadings.
///
/// Starts from loadings built on the centred response, then alternates
/// between fitting and recomputing `w_h = sqrt(mean((x_ih * e_i)^2))` from
/// the current residuals, until no loading moves by more than `1e-4` or 15
/// refits have run. Columns listed in `unpenalized` always get loading 0.
pub fn iterate_loadings(
    design: &DMatrix<f64>,
    y: &[f64],
    family: Family,
    rho: f64,
    unpenalized: &[usize],
) -> Result<LassoFit> {
    let n = y.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let centred = DVector::from_iterator(n, y.iter().map(|v| v - mean));
    let mut loadings = loadings_from(design, &centred, unpenalized);
    let fit_with = |w: &DVector<f64>, start: Option<&DVector<f64>>| match family {
        Family::LeastSquares => lasso_ls_from(design, y, rho, w, start),
        Family::Logistic => lasso_logit_from(design, y, rho, w, start),
    };
    let mut fit = fit_with(&loadings, None)?;
    let mut k = 0;
    while k < LOADING_MAX_ITER {
        let next = loadings_from(design, &residuals(design, y, &fit, family), unpenalized);
        let change = (&next - &loadings).amax();
        if change < LOADING_TOL {
            break;
        }
        loadings = next;
        fit = fit_with(&loadings, Some(&fit.coef))?;
        k += 1;
    }
    fit.loading_iterations = k;
    Ok(fit)
}
