use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const MAX_ITER: usize = 100;
const GRAD_TOL: f64 = 1e-8;
/// Hessian ridge used once separation is detected.
const SEPARATION_RIDGE: f64 = 1e-8;
/// Linear predictors beyond this magnitude mean fitted probabilities have
/// saturated, which in an unpenalized fit only happens under separation.
const SATURATION: f64 = 30.0;

/// Logistic CDF, computed without overflow for large |u|.
pub fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(u))` without overflow.
pub(crate) fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

/// Bernoulli log-likelihood at linear predictors `eta`.
pub(crate) fn log_likelihood(eta: &DVector<f64>, y: &[f64]) -> f64 {
    eta.iter().zip(y).map(|(&e, &yi)| yi * e - softplus(e)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub coef: DVector<f64>,
    pub converged: bool,
    /// Euclidean norm of the (penalized, when `ridge_used`) score at return.
    pub grad_norm: f64,
    pub ridge_used: bool,
    pub iterations: usize,
}

impl LogisticFit {
    pub fn predict(&self, design: &DMatrix<f64>) -> DVector<f64> {
        (design * &self.coef).map(logistic)
    }
}

enum Outcome {
    Done(LogisticFit),
    Separated,
}

fn newton(design: &DMatrix<f64>, y: &[f64], ridge: f64) -> Outcome {
    let p = design.ncols();
    let yv = DVector::from_column_slice(y);
    let objective = |beta: &DVector<f64>| {
        log_likelihood(&(design * beta), y) - 0.5 * ridge * beta.norm_squared()
    };
    let mut beta = DVector::zeros(p);
    let mut value = objective(&beta);
    let mut iterations = 0;
    loop {
        let eta = design * &beta;
        if ridge == 0.0 && eta.amax() > SATURATION {
            return Outcome::Separated;
        }
        let prob = eta.map(logistic);
        let grad = design.transpose() * (&yv - &prob) - ridge * &beta;
        let grad_norm = grad.norm();
        if grad_norm <= GRAD_TOL || iterations >= MAX_ITER {
            return Outcome::Done(LogisticFit {
                coef: beta,
                converged: grad_norm <= GRAD_TOL,
                grad_norm,
                ridge_used: ridge > 0.0,
                iterations,
            });
        }
        let w = prob.map(|q| q * (1.0 - q));
        let mut hess = design.transpose() * DMatrix::from_diagonal(&w) * design;
        for j in 0..p {
            hess[(j, j)] += ridge;
        }
        let step = match hess.cholesky() {
            Some(ch) => ch.solve(&grad),
            None => {
                if ridge == 0.0 {
                    return Outcome::Separated;
                }
                return Outcome::Done(LogisticFit {
                    coef: beta,
                    converged: false,
                    grad_norm,
                    ridge_used: true,
                    iterations,
                });
            }
        };
        // Changes below the rounding level of the objective count as ties,
        // so full Newton steps are kept near the optimum.
        let slack = 1e-12 * (1.0 + value.abs());
        let mut t = 1.0;
        let mut next = &beta + &step;
        let mut next_value = objective(&next);
        while !(next_value >= value - slack) && t > 1e-10 {
            t *= 0.5;
            next = &beta + t * &step;
            next_value = objective(&next);
        }
        if !(next_value >= value - slack) {
            // No ascent along the Newton direction: at numerical optimum.
            return Outcome::Done(LogisticFit {
                coef: beta,
                converged: grad_norm <= GRAD_TOL,
                grad_norm,
                ridge_used: ridge > 0.0,
                iterations,
            });
        }
        beta = next;
        value = next_value;
        iterations += 1;
    }
}

/// Logistic maximum likelihood by Newton's method with step halving.
///
/// Converges when the score norm drops to `1e-8` (100 iterations max). When
/// separation is detected, either through saturated linear predictors or a
/// singular Hessian, the fit is redone with a `1e-8` ridge and `ridge_used`
/// is set.
pub fn logistic_mle(design: &DMatrix<f64>, y: &[f64]) -> Result<LogisticFit> {
    assert_eq!(design.nrows(), y.len(), "response length must match design rows");
    if let Some(v) = y.iter().find(|v| **v != 0.0 && **v != 1.0) {
        return Err(Error::NonBinary {
            what: "logistic response",
            index: y.iter().position(|x| x == v).unwrap_or(0),
            value: *v,
        });
    }
    let fit = match newton(design, y, 0.0) {
        Outcome::Done(fit) => fit,
        Outcome::Separated => match newton(design, y, SEPARATION_RIDGE) {
            Outcome::Done(fit) => fit,
            Outcome::Separated => return Err(Error::PerfectSeparation),
        },
    };
    if fit.coef.iter().all(|c| c.is_finite()) {
        Ok(fit)
    } else {
        Err(Error::PerfectSeparation)
    }
}
