//! Simulation settings from a TOML file merged with command-line flags.

use std::path::Path;

use anyhow::Context;
use carlate::method::parse_methods;
use carlate::randomization::Scheme;
use carlate::simulation::{OracleConfig, ORACLE_N, ORACLE_REPS, ORACLE_SEED};
use carlate::{DgpId, DgpSpec, McConfig, Method};
use serde::{Deserialize, Serialize};

pub const DEFAULT_N: usize = 400;
pub const DEFAULT_REPS: usize = 1000;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MethodList {
    Csv(String),
    List(Vec<String>),
}

impl MethodList {
    fn parse(&self) -> carlate::Result<Vec<Method>> {
        match self {
            MethodList::Csv(s) => parse_methods(s),
            MethodList::List(v) => parse_methods(&v.join(",")),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleFile {
    pub n: Option<usize>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
}

/// Layout of a `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimFile {
    pub dgp: Option<String>,
    pub n: Option<usize>,
    pub scheme: Option<String>,
    pub pi: Option<Vec<f64>>,
    pub lambda: Option<f64>,
    pub methods: Option<MethodList>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub tau0: Option<f64>,
    pub level: Option<f64>,
    pub alt_shift: Option<f64>,
    #[serde(default)]
    pub oracle: OracleFile,
}

impl SimFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Fully resolved settings. Serialized form feeds the run digest.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub dgp: DgpId,
    pub n: usize,
    pub scheme: Scheme,
    pub pi: Vec<f64>,
    pub lambda: f64,
    pub methods: Vec<Method>,
    pub reps: usize,
    pub seed: u64,
    /// `None` means the null is the oracle value.
    pub tau0: Option<f64>,
    pub level: f64,
    pub alt_shift: f64,
    pub oracle: OracleConfig,
    pub raw: bool,
}

/// Flag values; `None` defers to the file, then the default.
#[derive(Debug, Clone, Default)]
pub struct SimFlags {
    pub dgp: Option<String>,
    pub n: Option<usize>,
    pub scheme: Option<String>,
    pub pi: Option<Vec<f64>>,
    pub lambda: Option<f64>,
    pub methods: Option<String>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub tau0: Option<f64>,
    pub level: Option<f64>,
    pub oracle_n: Option<usize>,
    pub oracle_reps: Option<usize>,
    pub oracle_seed: Option<u64>,
    pub raw: bool,
}

pub fn resolve(flags: SimFlags, file: SimFile) -> carlate::Result<Resolved> {
    let dgp: DgpId = flags.dgp.or(file.dgp).as_deref().unwrap_or("1").parse()?;
    let scheme: Scheme = flags.scheme.or(file.scheme).as_deref().unwrap_or("srs").parse()?;
    let methods = match (flags.methods, file.methods) {
        (Some(s), _) => parse_methods(&s)?,
        (None, Some(list)) => list.parse()?,
        (None, None) => Method::ALL.into_iter().filter(|m| dgp.allows(*m)).collect(),
    };
    let defaults = McConfig::new(DgpSpec::new(dgp, 0, 0), scheme, vec![], 0, 0.0);
    Ok(Resolved {
        dgp,
        n: flags.n.or(file.n).unwrap_or(DEFAULT_N),
        scheme,
        pi: flags.pi.or(file.pi).unwrap_or_else(|| dgp.default_pi()),
        lambda: flags.lambda.or(file.lambda).unwrap_or(defaults.lambda),
        methods,
        reps: flags.reps.or(file.reps).unwrap_or(DEFAULT_REPS),
        seed: flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        tau0: flags.tau0.or(file.tau0),
        level: flags.level.or(file.level).unwrap_or(defaults.level),
        alt_shift: file.alt_shift.unwrap_or(defaults.alt_shift),
        oracle: OracleConfig {
            n: flags.oracle_n.or(file.oracle.n).unwrap_or(ORACLE_N),
            reps: flags.oracle_reps.or(file.oracle.reps).unwrap_or(ORACLE_REPS),
            seed: flags.oracle_seed.or(file.oracle.seed).unwrap_or(ORACLE_SEED),
        },
        raw: flags.raw,
    })
}

impl Resolved {
    /// Builds the harness config with a placeholder null when the oracle
    /// has not been consulted yet.
    pub fn mc_config(&self, tau0: f64) -> McConfig {
        let spec = DgpSpec::new(self.dgp, self.n, self.seed).with_pi(self.pi.clone());
        McConfig {
            lambda: self.lambda,
            level: self.level,
            alt_shift: self.alt_shift,
            ..McConfig::new(spec, self.scheme, self.methods.clone(), self.reps, tau0)
        }
    }

    pub fn validate(&self) -> carlate::Result<()> {
        if self.oracle.n == 0 || self.oracle.reps == 0 {
            return Err(carlate::Error::InvalidConfig("oracle size and reps must be positive".into()));
        }
        if !self.alt_shift.is_finite() {
            return Err(carlate::Error::InvalidConfig("alt_shift must be finite".into()));
        }
        self.mc_config(self.tau0.unwrap_or(0.0)).validate()
    }
}
