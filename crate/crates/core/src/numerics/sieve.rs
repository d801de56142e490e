use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Sample median; the mean of the two middle order statistics for even n.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Nine-column two-covariate spline design with knots at the sample medians:
/// `(1, x1, x2, x1^2, x2^2, x1 1{x1>t1}, x2 1{x2>t2}, x1 x2,
///   x1 1{x1>t1} x2 1{x2>t2})`.
pub fn sieve_basis(x1: &[f64], x2: &[f64]) -> DMatrix<f64> {
    sieve_basis_with_knots(x1, x2, median(x1), median(x2))
}

pub fn sieve_basis_with_knots(x1: &[f64], x2: &[f64], t1: f64, t2: f64) -> DMatrix<f64> {
    assert_eq!(x1.len(), x2.len(), "covariates must have equal length");
    DMatrix::from_fn(x1.len(), 9, |i, j| {
        let (a, b) = (x1[i], x2[i]);
        let ha = if a > t1 { a } else { 0.0 };
        let hb = if b > t2 { b } else { 0.0 };
        match j {
            0 => 1.0,
            1 => a,
            2 => b,
            3 => a * a,
            4 => b * b,
            5 => ha,
            6 => hb,
            7 => a * b,
            _ => ha * hb,
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SieveKind {
    /// Polynomials `x, x^2, ..., x^degree`.
    Power { degree: usize },
    /// Order-`order` splines with `knots` interior knots at equally spaced
    /// empirical quantiles: `x, ..., x^(order-1)` plus
    /// `max(x - t_j, 0)^(order-1)`.
    Spline { order: usize, knots: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expansion {
    /// Constant plus the univariate terms of every covariate, no cross terms.
    Additive,
    /// Full tensor product of the per-covariate spaces (constant included in
    /// each factor).
    Tensor,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Non-constant univariate basis columns for one covariate.
fn univariate(x: &[f64], kind: SieveKind) -> Result<Vec<Vec<f64>>> {
    match kind {
        SieveKind::Power { degree } => {
            if degree == 0 {
                return Err(Error::InvalidConfig("power sieve needs degree >= 1".into()));
            }
            Ok((1..=degree).map(|k| x.iter().map(|v| v.powi(k as i32)).collect()).collect())
        }
        SieveKind::Spline { order, knots } => {
            if order < 2 {
                return Err(Error::InvalidConfig("spline order must be >= 2".into()));
            }
            let mut sorted = x.to_vec();
            sorted.sort_by(f64::total_cmp);
            let grid: Vec<f64> = (1..=knots).map(|j| quantile(&sorted, j as f64 / (knots + 1) as f64)).collect();
            let lo = sorted[0];
            let hi = sorted[sorted.len() - 1];
            for w in grid.windows(2) {
                if !(w[0] < w[1]) {
                    return Err(Error::InvalidConfig("degenerate knot grid: repeated knots".into()));
                }
            }
            if grid.iter().any(|t| !(*t > lo && *t < hi)) {
                return Err(Error::InvalidConfig("degenerate knot grid: knot outside data range".into()));
            }
            let pow = (order - 1) as i32;
            let mut cols: Vec<Vec<f64>> = (1..order).map(|k| x.iter().map(|v| v.powi(k as i32)).collect()).collect();
            for t in grid {
                cols.push(x.iter().map(|v| (v - t).max(0.0).powi(pow)).collect());
            }
            Ok(cols)
        }
    }
}

/// General sieve design for an `n x k` covariate matrix. The first column
/// is always the constant.
pub fn general_sieve(x: &DMatrix<f64>, kind: SieveKind, expansion: Expansion) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InvalidConfig("sieve needs at least two observations".into()));
    }
    let per_cov: Vec<Vec<Vec<f64>>> = (0..x.ncols())
        .map(|l| univariate(x.column(l).as_slice(), kind))
        .collect::<Result<_>>()?;
    let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
    match expansion {
        Expansion::Additive => {
            for terms in per_cov {
                cols.extend(terms);
            }
        }
        Expansion::Tensor => {
            for terms in per_cov {
                let mut next = Vec::with_capacity(cols.len() * (terms.len() + 1));
                for base in &cols {
                    next.push(base.clone());
                    for t in &terms {
                        next.push(base.iter().zip(t).map(|(a, b)| a * b).collect());
                    }
                }
                cols = next;
            }
        }
    }
    Ok(DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]))
}
