//! Point estimates, standard errors and Wald tests.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::adjustments::{fit_surface, AdjustmentSurface, RegressorSpec};
use crate::data::{ExperimentData, StrataIndex};
use crate::error::{Error, Result};
use crate::method::Method;
use crate::numerics::{normal_cdf, normal_quantile, ols_multi};

/// Denominators smaller than this mean no identified compliance variation.
const DENOM_TOL: f64 = 1e-12;
/// First-stage coefficients on A smaller than this are treated as zero.
const FIRST_STAGE_TOL: f64 = 1e-10;
/// Reciprocal condition number below which a Gram matrix is singular.
const RCOND_TOL: f64 = 1e-12;
pub const DEFAULT_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LateEstimate {
    pub tau_hat: f64,
    /// Asymptotic standard deviation; the standard error is `sigma_hat / sqrt(n)`.
    pub sigma_hat: f64,
    pub n: usize,
    pub method: Method,
    /// Mean of the treatment-side moment (the estimated complier share for
    /// the doubly robust estimators; the denominator analogue otherwise).
    pub h_hat: f64,
    pub diagnostics: Vec<String>,
}

impl LateEstimate {
    pub fn se(&self) -> f64 {
        self.sigma_hat / (self.n as f64).sqrt()
    }

    pub fn wald(&self, tau0: f64, level: f64) -> Result<WaldTest> {
        wald(self.tau_hat, self.sigma_hat, self.n, tau0, level)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaldTest {
    pub statistic: f64,
    pub p_value: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub reject: bool,
}

/// Two-sided normal test of `tau = tau0` and the matching confidence interval.
/// Rejection uses the strict inequality `|t| > z_{1-level/2}`.
pub fn wald(tau_hat: f64, sigma_hat: f64, n: usize, tau0: f64, level: f64) -> Result<WaldTest> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("test level {level} outside (0, 1)")));
    }
    if !(sigma_hat > 0.0) || n == 0 {
        return Err(Error::ZeroStandardError);
    }
    let root_n = (n as f64).sqrt();
    let statistic = root_n * (tau_hat - tau0) / sigma_hat;
    let z = normal_quantile(1.0 - level / 2.0)?;
    let half = z * sigma_hat / root_n;
    Ok(WaldTest {
        statistic,
        p_value: 2.0 * normal_cdf(-statistic.abs()),
        ci_lo: tau_hat - half,
        ci_hi: tau_hat + half,
        reject: statistic.abs() > z,
    })
}

/// Per-unit doubly robust moments.
#[derive(Debug, Clone, PartialEq)]
pub struct DrMoments {
    pub xi_g: Vec<f64>,
    pub xi_h: Vec<f64>,
    /// Assignment probability used for each stratum.
    pub pi: Vec<f64>,
}

impl DrMoments {
    pub fn g_bar(&self) -> f64 {
        mean(&self.xi_g)
    }

    pub fn h_bar(&self) -> f64 {
        mean(&self.xi_h)
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn check_surface(data: &ExperimentData, surface: &AdjustmentSurface) -> Result<()> {
    if surface.n() != data.n() {
        return Err(Error::LengthMismatch {
            column: "surface".into(),
            expected: data.n(),
            found: surface.n(),
        });
    }
    if !surface.is_finite() {
        return Err(Error::NonFiniteLoss("adjustment surface"));
    }
    Ok(())
}

fn resolve_pi(idx: &StrataIndex, pi_override: Option<&[f64]>) -> Result<Vec<f64>> {
    idx.require_interior()?;
    match pi_override {
        None => Ok(idx.pi_hat.clone()),
        Some(pi) => {
            if pi.len() != idx.n_strata() {
                return Err(Error::LengthMismatch {
                    column: "pi".into(),
                    expected: idx.n_strata(),
                    found: pi.len(),
                });
            }
            if let Some((s, &p)) = pi.iter().enumerate().find(|(_, p)| !(**p > 0.0 && **p < 1.0)) {
                return Err(Error::DegenerateAssignment {
                    stratum: idx.strata[s].clone(),
                    pi_hat: p,
                });
            }
            Ok(pi.to_vec())
        }
    }
}

/// Evaluates the treatment-side and outcome-side doubly robust moments.
pub fn dr_moments(
    data: &ExperimentData,
    surface: &AdjustmentSurface,
    pi_override: Option<&[f64]>,
) -> Result<DrMoments> {
    check_surface(data, surface)?;
    let idx = data.index_strata();
    let pi = resolve_pi(&idx, pi_override)?;
    let one = |b: f64, mu1: f64, mu0: f64, a: u8, p: f64| {
        if a == 1 {
            (b - mu1) / p + mu1 - mu0
        } else {
            -(b - mu0) / (1.0 - p) + mu1 - mu0
        }
    };
    let mut xi_g = Vec::with_capacity(data.n());
    let mut xi_h = Vec::with_capacity(data.n());
    for i in 0..data.n() {
        let (a, p) = (data.a()[i], pi[data.s()[i]]);
        xi_g.push(one(data.y()[i], surface.mu_y[(i, 1)], surface.mu_y[(i, 0)], a, p));
        xi_h.push(one(data.d_f64(i), surface.mu_d[(i, 1)], surface.mu_d[(i, 0)], a, p));
    }
    Ok(DrMoments { xi_g, xi_h, pi })
}

/// Doubly robust point estimate `mean(Xi_G) / mean(Xi_H)`.
/// Returns `(tau_hat, moments)`.
pub fn dr_late(
    data: &ExperimentData,
    surface: &AdjustmentSurface,
    pi_override: Option<&[f64]>,
) -> Result<(f64, DrMoments)> {
    let m = dr_moments(data, surface, pi_override)?;
    let h = m.h_bar();
    if !(h.abs() >= DENOM_TOL) {
        return Err(Error::NoCompliers(h));
    }
    Ok((m.g_bar() / h, m))
}

/// Between-arm contrast of the stratum means of `Y - tau D`, one entry per
/// stratum.
fn stratum_contrast(data: &ExperimentData, idx: &StrataIndex, tau: f64) -> Vec<f64> {
    let resid = |i: usize| data.y()[i] - tau * data.d_f64(i);
    (0..idx.n_strata())
        .map(|s| {
            let m = |cell: &[usize]| cell.iter().map(|&i| resid(i)).sum::<f64>() / cell.len() as f64;
            if idx.n_of[s] == 0 {
                0.0
            } else {
                m(idx.cell(1, s)) - m(idx.cell(0, s))
            }
        })
        .collect()
}

/// Sum of squared within-cell deviations of `values` (indexed by unit),
/// over every (arm, stratum) cell of arm `arm`.
fn within_cell_ss(idx: &StrataIndex, arm: u8, values: &[f64]) -> f64 {
    (0..idx.n_strata())
        .map(|s| {
            let cell = idx.cell(arm, s);
            if cell.is_empty() {
                return 0.0;
            }
            let m = cell.iter().map(|&i| values[i]).sum::<f64>() / cell.len() as f64;
            cell.iter().map(|&i| (values[i] - m).powi(2)).sum::<f64>()
        })
        .sum()
}

/// Variance estimate `sigma_hat^2` of the doubly robust estimator.
pub fn dr_variance(data: &ExperimentData, surface: &AdjustmentSurface, tau: f64, moments: &DrMoments) -> Result<f64> {
    let idx = data.index_strata();
    for s in 0..idx.n_strata() {
        for arm in [0u8, 1] {
            if idx.n_of[s] > 0 && idx.cell(arm, s).is_empty() {
                return Err(Error::EmptyCell {
                    arm,
                    stratum: idx.strata[s].clone(),
                });
            }
        }
    }
    let n = data.n();
    let mut xi1 = vec![0.0; n];
    let mut xi0 = vec![0.0; n];
    for i in 0..n {
        let p = moments.pi[data.s()[i]];
        let (y, d) = (data.y()[i], data.d_f64(i));
        let (my1, my0) = (surface.mu_y[(i, 1)], surface.mu_y[(i, 0)]);
        let (md1, md0) = (surface.mu_d[(i, 1)], surface.mu_d[(i, 0)]);
        if data.a()[i] == 1 {
            let t = |b: f64, m1: f64, m0: f64| (1.0 - 1.0 / p) * m1 - m0 + b / p;
            xi1[i] = t(y, my1, my0) - tau * t(d, md1, md0);
        } else {
            let t = |b: f64, m1: f64, m0: f64| (1.0 / (1.0 - p) - 1.0) * m0 + m1 - b / (1.0 - p);
            xi0[i] = t(y, my1, my0) - tau * t(d, md1, md0);
        }
    }
    let contrast = stratum_contrast(data, &idx, tau);
    let ss2: f64 = data.s().iter().map(|&s| contrast[s].powi(2)).sum();
    let num = (within_cell_ss(&idx, 1, &xi1) + within_cell_ss(&idx, 0, &xi0) + ss2) / n as f64;
    Ok(num / moments.h_bar().powi(2))
}

/// Point estimate plus variance for a fitted surface.
pub fn estimate_dr(
    data: &ExperimentData,
    surface: &AdjustmentSurface,
    pi_override: Option<&[f64]>,
) -> Result<LateEstimate> {
    let (tau_hat, moments) = dr_late(data, surface, pi_override)?;
    let var = dr_variance(data, surface, tau_hat, &moments)?;
    let mut diagnostics = Vec::new();
    for c in &surface.fit_diagnostics {
        if let Some(note) = &c.note {
            diagnostics.push(format!("arm {} stratum {}: {note}", c.arm, c.stratum));
        }
        if c.ridge_used {
            diagnostics.push(format!("arm {} stratum {}: separation, ridge applied", c.arm, c.stratum));
        }
        if c.rank_deficient {
            diagnostics.push(format!("arm {} stratum {}: rank-deficient design", c.arm, c.stratum));
        }
    }
    Ok(LateEstimate {
        tau_hat,
        sigma_hat: var.max(0.0).sqrt(),
        n: data.n(),
        method: surface.method,
        h_hat: moments.h_bar(),
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TslsEstimate {
    pub tau_hat: f64,
    pub sigma_naive_hat: f64,
    /// Second-stage coefficients: D, then one dummy per stratum, then X.
    pub coef: DVector<f64>,
    pub n: usize,
}

impl TslsEstimate {
    pub fn into_late(self) -> LateEstimate {
        LateEstimate {
            tau_hat: self.tau_hat,
            sigma_hat: self.sigma_naive_hat,
            n: self.n,
            method: Method::Tsls,
            h_hat: f64::NAN,
            diagnostics: Vec::new(),
        }
    }
}

fn spd_inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let sv = m.singular_values();
    let (max, min) = (sv.max(), sv.min());
    if !(max > 0.0) || min / max < RCOND_TOL {
        return Err(Error::Singular(what));
    }
    m.clone().try_inverse().ok_or(Error::Singular(what))
}

/// Two-stage least squares of Y on (D, strata dummies, X) instrumenting D by
/// A, with the heteroskedasticity-robust sandwich standard error.
pub fn tsls(data: &ExperimentData) -> Result<TslsEstimate> {
    let n = data.n();
    let k = data.n_strata();
    let p = data.n_covariates();
    let dim = 1 + k + p;
    let build = |first: &dyn Fn(usize) -> f64| {
        DMatrix::from_fn(n, dim, |i, j| {
            if j == 0 {
                first(i)
            } else if j <= k {
                f64::from(u8::from(data.s()[i] == j - 1))
            } else {
                data.x()[(i, j - 1 - k)]
            }
        })
    };
    let z = build(&|i| data.a_f64(i));
    let xbar = build(&|i| data.d_f64(i));
    let y = DVector::from_column_slice(data.y());
    let nf = n as f64;

    let s_zz = z.transpose() * &z / nf;
    let s_zz_inv = spd_inverse(&s_zz, "instrument Gram matrix")?;
    let s_zx = z.transpose() * &xbar / nf;
    let s_zy = z.transpose() * &y / nf;

    // First stage: D on the instruments.
    let d = xbar.column(0).into_owned();
    let pi_first = &s_zz_inv * (z.transpose() * &d / nf);
    if pi_first[0].abs() < FIRST_STAGE_TOL {
        return Err(Error::WeakFirstStage(pi_first[0]));
    }

    let bread = s_zx.transpose() * &s_zz_inv * &s_zx;
    let bread_inv = spd_inverse(&bread, "second-stage Gram matrix")?;
    let coef = &bread_inv * (s_zx.transpose() * &s_zz_inv * &s_zy);
    let resid = &y - &xbar * &coef;
    let mut meat_zz = DMatrix::zeros(dim, dim);
    for i in 0..n {
        let zi = z.row(i).transpose();
        meat_zz += (&zi * zi.transpose()) * resid[i].powi(2);
    }
    meat_zz /= nf;
    let meat = s_zx.transpose() * &s_zz_inv * meat_zz * &s_zz_inv * &s_zx;
    let cov = &bread_inv * meat * &bread_inv;
    Ok(TslsEstimate {
        tau_hat: coef[0],
        sigma_naive_hat: cov[(0, 0)].max(0.0).sqrt(),
        coef,
        n,
    })
}

/// Per-(arm, stratum) coefficients of the S estimator: intercepts `gamma`
/// and slopes `nu` for Y and D.
#[derive(Debug, Clone, PartialEq)]
pub struct SCell {
    pub gamma_y: f64,
    pub gamma_d: f64,
    pub nu_y: DVector<f64>,
    pub nu_d: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SEstimate {
    pub tau_hat: f64,
    pub sigma_hat: f64,
    pub n: usize,
    /// `cells[s][a]`.
    pub cells: Vec<[SCell; 2]>,
    pub denominator: f64,
}

impl SEstimate {
    pub fn into_late(self) -> LateEstimate {
        LateEstimate {
            tau_hat: self.tau_hat,
            sigma_hat: self.sigma_hat,
            n: self.n,
            method: Method::S,
            h_hat: self.denominator,
            diagnostics: Vec::new(),
        }
    }
}

/// Stratum-by-arm regression estimator: OLS of Y and D on (1, X) in every
/// cell, aggregated at the stratum covariate means.
pub fn s_estimator(data: &ExperimentData) -> Result<SEstimate> {
    let idx = data.index_strata();
    idx.require_interior()?;
    let n = data.n();
    let p = data.n_covariates();
    let x = data.x();
    let design = x.clone().insert_column(0, 1.0);
    let d: Vec<f64> = (0..n).map(|i| data.d_f64(i)).collect();

    let mut cells = Vec::with_capacity(idx.n_strata());
    let mut xbar = Vec::with_capacity(idx.n_strata());
    for s in 0..idx.n_strata() {
        let members: Vec<usize> = idx.members(s).collect();
        let mut mean = DVector::zeros(p);
        for &i in &members {
            mean += x.row(i).transpose();
        }
        xbar.push(mean / members.len().max(1) as f64);
        let fit = |arm: u8| -> Result<SCell> {
            let cell = idx.cell(arm, s);
            if cell.is_empty() {
                return Err(Error::EmptyCell {
                    arm,
                    stratum: idx.strata[s].clone(),
                });
            }
            let xa = design.select_rows(cell);
            let ya: Vec<f64> = cell.iter().map(|&i| data.y()[i]).collect();
            let da: Vec<f64> = cell.iter().map(|&i| d[i]).collect();
            let fits = ols_multi(&xa, &[&ya, &da]);
            let (cy, cd) = (&fits[0].coef, &fits[1].coef);
            Ok(SCell {
                gamma_y: cy[0],
                gamma_d: cd[0],
                nu_y: cy.rows(1, p).into_owned(),
                nu_d: cd.rows(1, p).into_owned(),
            })
        };
        cells.push([fit(0)?, fit(1)?]);
    }

    let (mut num, mut den) = (0.0, 0.0);
    for s in 0..idx.n_strata() {
        let [c0, c1] = &cells[s];
        let ps = idx.p_hat[s];
        num += ps * (c1.gamma_y - c0.gamma_y + (&c1.nu_y - &c0.nu_y).dot(&xbar[s]));
        den += ps * (c1.gamma_d - c0.gamma_d + (&c1.nu_d - &c0.nu_d).dot(&xbar[s]));
    }
    if !(den.abs() >= DENOM_TOL) {
        return Err(Error::NoCompliers(den));
    }
    let tau = num / den;

    let nu_yd: Vec<[DVector<f64>; 2]> = cells
        .iter()
        .map(|[c0, c1]| [&c0.nu_y - tau * &c0.nu_d, &c1.nu_y - tau * &c1.nu_d])
        .collect();
    let mut rho1 = vec![0.0; n];
    let mut rho0 = vec![0.0; n];
    for i in 0..n {
        let s = data.s()[i];
        let pi = idx.pi_hat[s];
        let xi = x.row(i).transpose();
        let r = data.y()[i] - d[i] * tau;
        let diff = (&nu_yd[s][1] - &nu_yd[s][0]).dot(&xi);
        if data.a()[i] == 1 {
            rho1[i] = (r - nu_yd[s][1].dot(&xi)) / pi + diff;
        } else {
            rho0[i] = (r - nu_yd[s][0].dot(&xi)) / (1.0 - pi) - diff;
        }
    }
    let nf = n as f64;
    let contrast = stratum_contrast(data, &idx, tau);
    let s1 = within_cell_ss(&idx, 1, &rho1) / nf;
    let s0 = within_cell_ss(&idx, 0, &rho0) / nf;
    let s2 = data.s().iter().map(|&s| contrast[s].powi(2)).sum::<f64>() / nf;
    let var = (s1 + s0 + s2) / (den * den);
    Ok(SEstimate {
        tau_hat: tau,
        sigma_hat: var.max(0.0).sqrt(),
        n,
        cells,
        denominator: den,
    })
}

/// Default regressors for a method: the spline sieve for NP, and for R
/// when the data have exactly two covariates; the raw covariates otherwise.
pub fn default_spec(method: Method, data: &ExperimentData) -> RegressorSpec {
    match method {
        Method::Np => RegressorSpec::Sieve,
        Method::R if data.n_covariates() == 2 => RegressorSpec::Sieve,
        _ => RegressorSpec::Raw,
    }
}

/// Runs one estimator end to end.
pub fn estimate(method: Method, data: &ExperimentData, spec: &RegressorSpec) -> Result<LateEstimate> {
    match method {
        Method::Tsls => tsls(data).map(TslsEstimate::into_late),
        Method::S => s_estimator(data).map(SEstimate::into_late),
        _ => {
            let surface = fit_surface(method, data, spec)?;
            estimate_dr(data, &surface, None)
        }
    }
}
