//! Working-model fits per (arm, stratum) cell.
//!
//! Each fit produces predictions `mu^Y(a, S_i, X_i)` and `mu^D(a, S_i, X_i)`
//! for every unit of the stratum, including units of the opposite arm, since
//! the doubly robust moment evaluates both arms' models at every unit.

use nalgebra::{DMatrix, DVector};

use crate::data::{ExperimentData, StrataIndex};
use crate::error::{Error, Result};
use crate::method::Method;
use crate::numerics::{
    self, iterate_loadings, logistic, logistic_mle, ols_multi, rho_tuning, Expansion, Family,
    SieveKind,
};

/// Fitted probabilities are kept this far inside (0, 1).
const PROB_FLOOR: f64 = 1e-12;
/// Default scale of the lasso penalty level.
pub const RHO_SCALE: f64 = 1.1;

/// How the regressors `Psi_{i,s}` are built from the covariates. None of the
/// variants produce a constant column; methods that need `(1, Psi)` add it.
#[derive(Debug, Clone, PartialEq)]
pub enum RegressorSpec {
    /// `Psi = X`.
    Raw,
    /// The nine-term median-knot spline design on the first two covariates,
    /// without its constant column.
    Sieve,
    /// A general sieve over all covariates, without its constant column.
    General { kind: SieveKind, expansion: Expansion },
    /// Precomputed `n x d` features.
    Custom(DMatrix<f64>),
}

impl RegressorSpec {
    pub fn features(&self, data: &ExperimentData) -> Result<DMatrix<f64>> {
        let x = data.x();
        match self {
            RegressorSpec::Raw => Ok(x.clone()),
            RegressorSpec::Sieve => {
                if x.ncols() < 2 {
                    return Err(Error::InvalidConfig(
                        "the spline sieve needs at least two covariates".into(),
                    ));
                }
                let full = numerics::sieve_basis(x.column(0).as_slice(), x.column(1).as_slice());
                Ok(full.columns(1, 8).into_owned())
            }
            RegressorSpec::General { kind, expansion } => {
                let full = numerics::general_sieve(x, *kind, *expansion)?;
                Ok(full.columns(1, full.ncols() - 1).into_owned())
            }
            RegressorSpec::Custom(m) => {
                if m.nrows() != data.n() {
                    return Err(Error::LengthMismatch {
                        column: "regressors".into(),
                        expected: data.n(),
                        found: m.nrows(),
                    });
                }
                Ok(m.clone())
            }
        }
    }
}

/// Per-cell fit diagnostics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CellDiagnostic {
    pub arm: u8,
    pub stratum: String,
    pub size: usize,
    pub rank_deficient: bool,
    pub logistic_converged: Option<bool>,
    pub ridge_used: bool,
    pub loading_iterations: Option<(usize, usize)>,
    pub active_y: Option<usize>,
    pub active_d: Option<usize>,
    pub note: Option<String>,
}

/// Per-unit working-model predictions. Column `a` of `mu_y`/`mu_d` holds
/// the arm-`a` model evaluated at every unit.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustmentSurface {
    pub mu_y: DMatrix<f64>,
    pub mu_d: DMatrix<f64>,
    pub method: Method,
    pub fit_diagnostics: Vec<CellDiagnostic>,
}

impl AdjustmentSurface {
    pub fn zeros(n: usize, method: Method) -> Self {
        Self {
            mu_y: DMatrix::zeros(n, 2),
            mu_d: DMatrix::zeros(n, 2),
            method,
            fit_diagnostics: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.mu_y.nrows()
    }

    pub fn is_finite(&self) -> bool {
        self.mu_y.iter().chain(self.mu_d.iter()).all(|v| v.is_finite())
    }

    /// Adds `shift[s]` to both arms of `mu^Y` (and `shift_d[s]` to `mu^D`)
    /// for every unit of stratum `s`.
    pub fn shifted(&self, strata: &[usize], shift_y: &[[f64; 2]], shift_d: &[[f64; 2]]) -> Self {
        let mut out = self.clone();
        for (i, &s) in strata.iter().enumerate() {
            for a in 0..2 {
                out.mu_y[(i, a)] += shift_y[s][a];
                out.mu_d[(i, a)] += shift_d[s][a];
            }
        }
        out
    }
}

/// Options for the regularized fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizedConfig {
    pub c: f64,
    /// Replaces the formula penalty level in every cell when set.
    pub rho_override: Option<f64>,
}

impl Default for RegularizedConfig {
    fn default() -> Self {
        Self {
            c: RHO_SCALE,
            rho_override: None,
        }
    }
}

fn with_intercept(psi: &DMatrix<f64>) -> DMatrix<f64> {
    psi.clone().insert_column(0, 1.0)
}

fn rows(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    m.select_rows(idx)
}

fn gather(v: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| v[i]).collect()
}

fn d_vec(data: &ExperimentData) -> Vec<f64> {
    data.d().iter().map(|&d| d as f64).collect()
}

fn demeaned(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    out
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

struct Cells {
    idx: StrataIndex,
}

impl Cells {
    fn new(data: &ExperimentData) -> Result<Self> {
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
        Ok(Self { idx })
    }

    fn label(&self, s: usize) -> &str {
        &self.idx.strata[s]
    }

    fn members(&self, s: usize) -> Vec<usize> {
        let mut m: Vec<usize> = self.idx.members(s).collect();
        m.sort_unstable();
        m
    }
}

/// The zero surface (no adjustment).
pub fn adjust_none(data: &ExperimentData) -> AdjustmentSurface {
    AdjustmentSurface::zeros(data.n(), Method::Na)
}

/// Optimal linear adjustment: per-cell OLS slopes of Y and D on the
/// cell-demeaned regressors, evaluated as `Psi_i' theta` for every unit of
/// the stratum.
pub fn adjust_optimal_linear(data: &ExperimentData, spec: &RegressorSpec) -> Result<AdjustmentSurface> {
    let psi = spec.features(data)?;
    let cells = Cells::new(data)?;
    let d = d_vec(data);
    let mut out = AdjustmentSurface::zeros(data.n(), Method::L);
    for s in 0..cells.idx.n_strata() {
        let members = cells.members(s);
        if members.is_empty() {
            continue;
        }
        let psi_s = rows(&psi, &members);
        for arm in [0u8, 1] {
            let cell = cells.idx.cell(arm, s);
            let x = demeaned(&rows(&psi, cell));
            let (y_c, d_c) = (gather(data.y(), cell), gather(&d, cell));
            let fits = ols_multi(&x, &[&y_c, &d_c]);
            let (pred_y, pred_d) = (&psi_s * &fits[0].coef, &psi_s * &fits[1].coef);
            for (k, &i) in members.iter().enumerate() {
                out.mu_y[(i, arm as usize)] = pred_y[k];
                out.mu_d[(i, arm as usize)] = pred_d[k];
            }
            out.fit_diagnostics.push(CellDiagnostic {
                arm,
                stratum: cells.label(s).to_string(),
                size: cell.len(),
                rank_deficient: fits[0].rank_deficient,
                ..Default::default()
            });
        }
    }
    Ok(out)
}

struct NlCell {
    /// Logistic coefficients per arm, on `(1, Psi)`.
    beta: [DVector<f64>; 2],
}

fn fit_ols_logit(
    data: &ExperimentData,
    psi: &DMatrix<f64>,
    method: Method,
) -> Result<(AdjustmentSurface, Vec<NlCell>)> {
    let design = with_intercept(psi);
    let cells = Cells::new(data)?;
    let d = d_vec(data);
    let mut out = AdjustmentSurface::zeros(data.n(), method);
    let mut per_stratum = Vec::with_capacity(cells.idx.n_strata());
    for s in 0..cells.idx.n_strata() {
        let members = cells.members(s);
        let design_s = rows(&design, &members);
        let mut betas = [DVector::zeros(design.ncols()), DVector::zeros(design.ncols())];
        for arm in [0u8, 1] {
            let cell = cells.idx.cell(arm, s);
            if cell.is_empty() {
                continue;
            }
            let x = rows(&design, cell);
            let (y_c, d_c) = (gather(data.y(), cell), gather(&d, cell));
            let lin = ols_multi(&x, &[&y_c]).pop().expect("one fit");
            let mut diag = CellDiagnostic {
                arm,
                stratum: cells.label(s).to_string(),
                size: cell.len(),
                rank_deficient: lin.rank_deficient,
                ..Default::default()
            };
            let beta = match logistic_mle(&x, &d_c) {
                Ok(fit) => {
                    diag.logistic_converged = Some(fit.converged);
                    diag.ridge_used = fit.ridge_used;
                    fit.coef
                }
                Err(e) => {
                    // Fall back to the cell's treated share.
                    let mean = d_c.iter().sum::<f64>() / d_c.len() as f64;
                    let p = clamp_prob(mean);
                    diag.logistic_converged = Some(false);
                    diag.note = Some(format!("logistic fit failed ({e}); intercept-only fallback"));
                    let mut b = DVector::zeros(design.ncols());
                    b[0] = (p / (1.0 - p)).ln();
                    b
                }
            };
            let pred_y = &design_s * &lin.coef;
            let eta = &design_s * &beta;
            for (k, &i) in members.iter().enumerate() {
                out.mu_y[(i, arm as usize)] = pred_y[k];
                out.mu_d[(i, arm as usize)] = clamp_prob(logistic(eta[k]));
            }
            betas[arm as usize] = beta;
            out.fit_diagnostics.push(diag);
        }
        per_stratum.push(NlCell { beta: betas });
    }
    Ok((out, per_stratum))
}

/// Linear model for Y and logistic model for D on `(1, Psi)`, fitted by OLS
/// and maximum likelihood within each cell.
pub fn adjust_ols_logit(data: &ExperimentData, spec: &RegressorSpec) -> Result<AdjustmentSurface> {
    let psi = spec.features(data)?;
    Ok(fit_ols_logit(data, &psi, Method::Nl)?.0)
}

/// NL on a sieve design (the nine-term spline design by default).
pub fn adjust_nonparametric(data: &ExperimentData, spec: &RegressorSpec) -> Result<AdjustmentSurface> {
    let psi = spec.features(data)?;
    Ok(fit_ols_logit(data, &psi, Method::Np)?.0)
}

/// Augments `Psi` with both arms' NL fitted probabilities and refits the
/// optimal linear adjustment on the augmented regressors.
pub fn adjust_further(data: &ExperimentData, spec: &RegressorSpec) -> Result<AdjustmentSurface> {
    let psi = spec.features(data)?;
    let (_, nl) = fit_ols_logit(data, &psi, Method::Nl)?;
    let design = with_intercept(&psi);
    let n = data.n();
    let dpsi = psi.ncols();
    let mut phi = DMatrix::zeros(n, dpsi + 2);
    phi.columns_mut(0, dpsi).copy_from(&psi);
    for (i, &s) in data.s().iter().enumerate() {
        let row = design.row(i);
        for arm in 0..2 {
            let eta = (row * &nl[s].beta[1 - arm])[0];
            phi[(i, dpsi + arm)] = clamp_prob(logistic(eta));
        }
    }
    let mut surface = adjust_optimal_linear(data, &RegressorSpec::Custom(phi))?;
    surface.method = Method::F;
    Ok(surface)
}

/// Lasso for Y and logistic lasso for D on `(1, Psi)` with data-driven
/// loadings; the intercept is unpenalized.
pub fn adjust_regularized(
    data: &ExperimentData,
    spec: &RegressorSpec,
    cfg: RegularizedConfig,
) -> Result<AdjustmentSurface> {
    let psi = spec.features(data)?;
    let design = with_intercept(&psi);
    let p_n = design.ncols();
    let cells = Cells::new(data)?;
    let d = d_vec(data);
    let mut out = AdjustmentSurface::zeros(data.n(), Method::R);
    for s in 0..cells.idx.n_strata() {
        let members = cells.members(s);
        let design_s = rows(&design, &members);
        for arm in [0u8, 1] {
            let cell = cells.idx.cell(arm, s);
            if cell.is_empty() {
                continue;
            }
            let label = cells.label(s);
            if cell.len() < 3 {
                return Err(Error::CellTooSmall {
                    what: "regularized adjustment",
                    arm,
                    stratum: label.to_string(),
                    size: cell.len(),
                });
            }
            let rho = match cfg.rho_override {
                Some(r) => r,
                None => rho_tuning(cell.len(), p_n, cfg.c).map_err(|e| e.in_cell(arm, label))?,
            };
            let x = rows(&design, cell);
            let (y_c, d_c) = (gather(data.y(), cell), gather(&d, cell));
            let fy = iterate_loadings(&x, &y_c, Family::LeastSquares, rho, &[0])
                .map_err(|e| e.in_cell(arm, label))?;
            let fd = iterate_loadings(&x, &d_c, Family::Logistic, rho, &[0])
                .map_err(|e| e.in_cell(arm, label))?;
            let pred_y = fy.predict(&design_s, Family::LeastSquares);
            let pred_d = fd.predict(&design_s, Family::Logistic);
            for (k, &i) in members.iter().enumerate() {
                out.mu_y[(i, arm as usize)] = pred_y[k];
                out.mu_d[(i, arm as usize)] = clamp_prob(pred_d[k]);
            }
            out.fit_diagnostics.push(CellDiagnostic {
                arm,
                stratum: label.to_string(),
                size: cell.len(),
                ridge_used: fd.ridge_used,
                logistic_converged: Some(fd.converged),
                loading_iterations: Some((fy.loading_iterations, fd.loading_iterations)),
                active_y: Some(fy.active_set.len()),
                active_d: Some(fd.active_set.len()),
                ..Default::default()
            });
        }
    }
    Ok(out)
}

/// Fits the surface for a doubly robust method.
pub fn fit_surface(method: Method, data: &ExperimentData, spec: &RegressorSpec) -> Result<AdjustmentSurface> {
    match method {
        Method::Na => Ok(adjust_none(data)),
        Method::L => adjust_optimal_linear(data, spec),
        Method::Nl => adjust_ols_logit(data, spec),
        Method::F => adjust_further(data, spec),
        Method::Np => adjust_nonparametric(data, spec),
        Method::R => adjust_regularized(data, spec, RegularizedConfig::default()),
        Method::Tsls | Method::S => Err(Error::InvalidConfig(format!(
            "{method} does not use an adjustment surface"
        ))),
    }
}
