use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Estimator family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    /// No adjustment (fully saturated ratio).
    Na,
    /// Two-stage least squares with strata dummies and covariates.
    Tsls,
    /// Optimal linear adjustment.
    L,
    /// Stratum-specific regression (S) estimator.
    S,
    /// Linear outcome model plus logistic treatment model.
    Nl,
    /// Linear refit on the regressors augmented with NL fitted probabilities.
    F,
    /// NL on a sieve design.
    Np,
    /// Lasso / logistic lasso with data-driven loadings.
    R,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Na,
        Method::Tsls,
        Method::L,
        Method::S,
        Method::Nl,
        Method::F,
        Method::Np,
        Method::R,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Na => "NA",
            Method::Tsls => "TSLS",
            Method::L => "L",
            Method::S => "S",
            Method::Nl => "NL",
            Method::F => "F",
            Method::Np => "NP",
            Method::R => "R",
        }
    }

    /// Whether the estimate comes from the doubly robust moment with a
    /// fitted adjustment surface.
    pub fn uses_surface(self) -> bool {
        !matches!(self, Method::Tsls | Method::S)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method `{s}`")))
    }
}

/// Parses a comma-separated method list such as `na,l,f`.
pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for part in list.split(',').filter(|p| !p.trim().is_empty()) {
        let m: Method = part.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidConfig("empty method list".into()));
    }
    Ok(out)
}
