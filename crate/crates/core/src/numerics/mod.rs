//! Regression solvers and basis builders used by the adjustment fits.
//!
//! Everything here is pure: no shared state, safe to call from many threads.

mod lasso;
mod logistic;
mod normal;
mod ols;
mod sieve;

pub use lasso::{
    iterate_loadings, lasso_logit, lasso_ls, rho_tuning, Family, LassoFit, LOADING_MAX_ITER,
    LOADING_TOL,
};
pub use logistic::{logistic, logistic_mle, LogisticFit};
pub use normal::{normal_cdf, normal_quantile};
pub use ols::{ols, ols_multi, LinearFit};
pub use sieve::{general_sieve, median, sieve_basis, sieve_basis_with_knots, Expansion, SieveKind};
