//! Independent oracles and data generators shared by the integration tests.
//! Nothing here calls the estimators under test.
#![allow(dead_code)]

use carlate::data::RawColumns;
use carlate::ExperimentData;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

/// A random stratified experiment with every (arm, stratum) cell holding at
/// least `min_cell` units.
pub fn random_dataset<R: Rng>(rng: &mut R, min_cell: usize, full_compliance: bool) -> ExperimentData {
    let k = rng.random_range(1..=5usize);
    let p = rng.random_range(1..=3usize);
    let mut s = Vec::new();
    let mut a = Vec::new();
    for stratum in 0..k {
        let n1 = rng.random_range(min_cell..=min_cell + 40);
        let n0 = rng.random_range(min_cell..=min_cell + 40);
        let mut arms: Vec<f64> = std::iter::repeat_n(1.0, n1).chain(std::iter::repeat_n(0.0, n0)).collect();
        arms.shuffle(rng);
        for arm in arms {
            s.push(format!("s{stratum}"));
            a.push(arm);
        }
    }
    let n = s.len();
    let x: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let shift: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
    let d: Vec<f64> = (0..n)
        .map(|i| {
            if full_compliance {
                a[i]
            } else {
                let p = 0.15 + 0.6 * a[i] + 0.1 * x[0][i].tanh();
                f64::from(u8::from(rng.random::<f64>() < p))
            }
        })
        .collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let st: usize = s[i][1..].parse().unwrap();
            shift[st] + 2.0 * d[i] + x[0][i] * x[p - 1][i] + rng.random_range(-1.0..1.0)
        })
        .collect();
    ExperimentData::build(RawColumns {
        y,
        d,
        a,
        s,
        x,
        x_names: vec![],
    })
    .unwrap()
}

pub struct Cells {
    pub n: f64,
    /// `cells[s][a]` lists unit indices.
    pub cells: Vec<[Vec<usize>; 2]>,
}

pub fn cells(data: &ExperimentData) -> Cells {
    let mut cells = vec![[Vec::new(), Vec::new()]; data.n_strata()];
    for i in 0..data.n() {
        cells[data.s()[i]][data.a()[i] as usize].push(i);
    }
    Cells {
        n: data.n() as f64,
        cells,
    }
}

fn avg(idx: &[usize], f: impl Fn(usize) -> f64) -> f64 {
    idx.iter().map(|&i| f(i)).sum::<f64>() / idx.len() as f64
}

/// Stratum-weighted ratio of treated-minus-control mean differences.
pub fn saturated_ratio(data: &ExperimentData) -> f64 {
    let c = cells(data);
    let (mut num, mut den) = (0.0, 0.0);
    for [c0, c1] in &c.cells {
        let w = (c0.len() + c1.len()) as f64 / c.n;
        num += w * (avg(c1, |i| data.y()[i]) - avg(c0, |i| data.y()[i]));
        den += w * (avg(c1, |i| data.d()[i] as f64) - avg(c0, |i| data.d()[i] as f64));
    }
    num / den
}

fn pi_hat(c: &Cells, s: usize) -> f64 {
    let [c0, c1] = &c.cells[s];
    c1.len() as f64 / (c0.len() + c1.len()) as f64
}

/// Mean of the doubly robust moment for response `b` with surface `mu`
/// (`mu[(i, a)]`), written out term by term.
pub fn dr_moment_mean(data: &ExperimentData, b: &[f64], mu: &DMatrix<f64>) -> f64 {
    let c = cells(data);
    let mut total = 0.0;
    for i in 0..data.n() {
        let p = pi_hat(&c, data.s()[i]);
        let a = data.a()[i] as f64;
        total += a * (b[i] - mu[(i, 1)]) / p - (1.0 - a) * (b[i] - mu[(i, 0)]) / (1.0 - p) + mu[(i, 1)] - mu[(i, 0)];
    }
    total / c.n
}

pub fn dr_tau(data: &ExperimentData, mu_y: &DMatrix<f64>, mu_d: &DMatrix<f64>) -> f64 {
    let d: Vec<f64> = data.d().iter().map(|&v| v as f64).collect();
    dr_moment_mean(data, data.y(), mu_y) / dr_moment_mean(data, &d, mu_d)
}

/// Regression-adjusted ATE under full compliance.
pub fn ate(data: &ExperimentData, mu_y: &DMatrix<f64>) -> f64 {
    let c = cells(data);
    let mut total = 0.0;
    for i in 0..data.n() {
        let p = pi_hat(&c, data.s()[i]);
        let (y, m1, m0) = (data.y()[i], mu_y[(i, 1)], mu_y[(i, 0)]);
        total += if data.a()[i] == 1 {
            (y - m1) / p + m1 - m0
        } else {
            -(y - m0) / (1.0 - p) + m1 - m0
        };
    }
    total / c.n
}

/// Variance estimator of the doubly robust estimator, transcribed directly.
pub fn dr_sigma2(data: &ExperimentData, mu_y: &DMatrix<f64>, mu_d: &DMatrix<f64>, tau: f64) -> f64 {
    let c = cells(data);
    let d: Vec<f64> = data.d().iter().map(|&v| v as f64).collect();
    let y = data.y();
    let xi1 = |i: usize| {
        let p = pi_hat(&c, data.s()[i]);
        ((1.0 - 1.0 / p) * mu_y[(i, 1)] - mu_y[(i, 0)] + y[i] / p)
            - tau * ((1.0 - 1.0 / p) * mu_d[(i, 1)] - mu_d[(i, 0)] + d[i] / p)
    };
    let xi0 = |i: usize| {
        let p = pi_hat(&c, data.s()[i]);
        ((1.0 / (1.0 - p) - 1.0) * mu_y[(i, 0)] + mu_y[(i, 1)] - y[i] / (1.0 - p))
            - tau * ((1.0 / (1.0 - p) - 1.0) * mu_d[(i, 0)] + mu_d[(i, 1)] - d[i] / (1.0 - p))
    };
    let mut total = 0.0;
    for i in 0..data.n() {
        let [c0, c1] = &c.cells[data.s()[i]];
        let xi2 = avg(c1, |j| y[j] - tau * d[j]) - avg(c0, |j| y[j] - tau * d[j]);
        let own = if data.a()[i] == 1 {
            (xi1(i) - avg(c1, xi1)).powi(2)
        } else {
            (xi0(i) - avg(c0, xi0)).powi(2)
        };
        total += own + xi2 * xi2;
    }
    let h = dr_moment_mean(data, &d, mu_d);
    total / c.n / (h * h)
}

/// OLS by the normal equations, solved with a Cholesky factorization.
pub fn normal_equations(x: &DMatrix<f64>, y: &[f64]) -> DVector<f64> {
    let xtx = x.transpose() * x;
    let xty = x.transpose() * DVector::from_column_slice(y);
    xtx.cholesky().expect("full-rank design").solve(&xty)
}

/// The S estimator's point estimate from cell-wise normal equations.
pub fn s_tau(data: &ExperimentData) -> f64 {
    let c = cells(data);
    let x = data.x();
    let p = x.ncols();
    let (mut num, mut den) = (0.0, 0.0);
    for [c0, c1] in &c.cells {
        let all: Vec<usize> = c0.iter().chain(c1).copied().collect();
        let xbar = DVector::from_fn(p, |j, _| avg(&all, |i| x[(i, j)]));
        let w = all.len() as f64 / c.n;
        let mut contrib = [0.0; 2];
        for (arm, cell) in [c0, c1].into_iter().enumerate() {
            let design = DMatrix::from_fn(cell.len(), p + 1, |r, j| if j == 0 { 1.0 } else { x[(cell[r], j - 1)] });
            let y: Vec<f64> = cell.iter().map(|&i| data.y()[i]).collect();
            let d: Vec<f64> = cell.iter().map(|&i| data.d()[i] as f64).collect();
            let by = normal_equations(&design, &y);
            let bd = normal_equations(&design, &d);
            let sign = if arm == 1 { 1.0 } else { -1.0 };
            contrib[0] += sign * (by[0] + by.rows(1, p).dot(&xbar));
            contrib[1] += sign * (bd[0] + bd.rows(1, p).dot(&xbar));
        }
        num += w * contrib[0];
        den += w * contrib[1];
    }
    num / den
}

/// Soft-threshold operator.
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    z.signum() * (z.abs() - t).max(0.0)
}

/// Largest violation of the lasso optimality conditions for the objective
/// `loss(b) + (rho/n) sum_j w_j |b_j|`, with `loss` the mean squared error or
/// the mean negative log-likelihood.
pub fn kkt_violation(x: &DMatrix<f64>, y: &[f64], coef: &DVector<f64>, rho: f64, w: &DVector<f64>, logistic: bool) -> f64 {
    let n = y.len() as f64;
    let eta = x * coef;
    let mut worst: f64 = 0.0;
    for j in 0..x.ncols() {
        let g: f64 = (0..y.len())
            .map(|i| {
                let r = if logistic {
                    y[i] - 1.0 / (1.0 + (-eta[i]).exp())
                } else {
                    2.0 * (y[i] - eta[i])
                };
                x[(i, j)] * r / n
            })
            .sum();
        let bound = rho * w[j] / n;
        let v = if coef[j] != 0.0 {
            (g - bound * coef[j].signum()).abs()
        } else {
            (g.abs() - bound).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// Variance estimate of the S estimator, transcribed from its definition.
pub fn s_sigma2(data: &ExperimentData) -> f64 {
    let c = cells(data);
    let x = data.x();
    let p = x.ncols();
    let y = data.y();
    let d: Vec<f64> = data.d().iter().map(|&v| v as f64).collect();
    let k = c.cells.len();
    // gamma/nu per (s, a) for Y and D.
    let mut coef_y = vec![[DVector::zeros(p + 1), DVector::zeros(p + 1)]; k];
    let mut coef_d = coef_y.clone();
    let mut xbar = Vec::new();
    for (s, pair) in c.cells.iter().enumerate() {
        let all: Vec<usize> = pair[0].iter().chain(&pair[1]).copied().collect();
        xbar.push(DVector::from_fn(p, |j, _| avg(&all, |i| x[(i, j)])));
        for a in 0..2 {
            let cell = &pair[a];
            let design = DMatrix::from_fn(cell.len(), p + 1, |r, j| if j == 0 { 1.0 } else { x[(cell[r], j - 1)] });
            let yc: Vec<f64> = cell.iter().map(|&i| y[i]).collect();
            let dc: Vec<f64> = cell.iter().map(|&i| d[i]).collect();
            coef_y[s][a] = normal_equations(&design, &yc);
            coef_d[s][a] = normal_equations(&design, &dc);
        }
    }
    let (mut num, mut den) = (0.0, 0.0);
    for s in 0..k {
        let w = (c.cells[s][0].len() + c.cells[s][1].len()) as f64 / c.n;
        let lin = |b: &DVector<f64>| b[0] + b.rows(1, p).dot(&xbar[s]);
        num += w * (lin(&coef_y[s][1]) - lin(&coef_y[s][0]));
        den += w * (lin(&coef_d[s][1]) - lin(&coef_d[s][0]));
    }
    let tau = num / den;
    let nu_yd = |s: usize, a: usize| -> DVector<f64> { coef_y[s][a].rows(1, p) - tau * coef_d[s][a].rows(1, p) };
    let rho = |i: usize, a: usize| {
        let s = data.s()[i];
        let pi = pi_hat(&c, s);
        let xi = x.row(i).transpose();
        let diff = (nu_yd(s, 1) - nu_yd(s, 0)).dot(&xi);
        let r = y[i] - d[i] * tau - nu_yd(s, a).dot(&xi);
        if a == 1 {
            r / pi + diff
        } else {
            r / (1.0 - pi) - diff
        }
    };
    let (mut s1, mut s0, mut s2) = (0.0, 0.0, 0.0);
    for i in 0..data.n() {
        let s = data.s()[i];
        let [c0, c1] = &c.cells[s];
        if data.a()[i] == 1 {
            s1 += (rho(i, 1) - avg(c1, |j| rho(j, 1))).powi(2);
        } else {
            s0 += (rho(i, 0) - avg(c0, |j| rho(j, 0))).powi(2);
        }
        s2 += (avg(c1, |j| y[j] - tau * d[j]) - avg(c0, |j| y[j] - tau * d[j])).powi(2);
    }
    (s1 + s0 + s2) / c.n / (den * den)
}

/// Textbook two-stage least squares: regress D on the instruments, then Y
/// on the fitted D with the exogenous regressors.
pub fn two_stage(data: &ExperimentData) -> DVector<f64> {
    let n = data.n();
    let k = data.n_strata();
    let p = data.n_covariates();
    let exog = |i: usize, j: usize| if j < k { f64::from(u8::from(data.s()[i] == j)) } else { data.x()[(i, j - k)] };
    let z = DMatrix::from_fn(n, 1 + k + p, |i, j| if j == 0 { data.a()[i] as f64 } else { exog(i, j - 1) });
    let d: Vec<f64> = data.d().iter().map(|&v| v as f64).collect();
    let dhat = &z * normal_equations(&z, &d);
    let second = DMatrix::from_fn(n, 1 + k + p, |i, j| if j == 0 { dhat[i] } else { exog(i, j - 1) });
    normal_equations(&second, data.y())
}
