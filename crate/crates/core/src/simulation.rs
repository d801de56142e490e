//! Benchmark data generating processes and the Monte Carlo harness.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ExperimentData;
use crate::error::{Error, Result};
use crate::estimators::{default_spec, estimate, wald};
use crate::method::Method;
use crate::randomization::{assign, Scheme, SchemeConfig};

/// Largest tolerated share of failed replications per method.
pub const MAX_FAILURE_SHARE: f64 = 0.01;
pub const ORACLE_N: usize = 10_000;
pub const ORACLE_REPS: usize = 1_000;
pub const ORACLE_SEED: u64 = 20_240_601;
const N_STRATA: usize = 4;
const DGP3_DIM: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DgpId {
    Dgp1,
    Dgp2,
    Dgp3,
    Dgp4,
}

impl DgpId {
    pub fn as_str(self) -> &'static str {
        match self {
            DgpId::Dgp1 => "dgp1",
            DgpId::Dgp2 => "dgp2",
            DgpId::Dgp3 => "dgp3",
            DgpId::Dgp4 => "dgp4",
        }
    }

    pub fn default_pi(self) -> Vec<f64> {
        match self {
            DgpId::Dgp4 => vec![0.2, 0.2, 0.2, 0.5],
            _ => vec![0.5; N_STRATA],
        }
    }

    /// Methods the harness accepts for this design.
    pub fn allows(self, method: Method) -> bool {
        self != DgpId::Dgp3 || matches!(method, Method::Na | Method::R)
    }
}

impl fmt::Display for DgpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DgpId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let t = t.strip_prefix("dgp").unwrap_or(&t);
        match t.trim_matches(|c| c == '(' || c == ')') {
            "1" | "i" => Ok(DgpId::Dgp1),
            "2" | "ii" => Ok(DgpId::Dgp2),
            "3" | "iii" => Ok(DgpId::Dgp3),
            "4" | "iv" => Ok(DgpId::Dgp4),
            _ => Err(Error::InvalidConfig(format!("unknown dgp `{s}`"))),
        }
    }
}

/// Outcome and compliance constants: `Y(d) = a_d + alpha + eps`,
/// `D(0) = 1{b0 + gamma > c0 eps3}`, `D(1) = 1{b1 + gamma > c1 eps4}` for
/// units with `D(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpParams {
    pub a1: f64,
    pub a0: f64,
    pub b1: f64,
    pub b0: f64,
    pub c1: f64,
    pub c0: f64,
}

impl DgpParams {
    pub fn for_id(id: DgpId) -> Self {
        match id {
            DgpId::Dgp1 | DgpId::Dgp4 => Self { a1: 2.0, a0: 1.0, b1: 1.3, b0: -1.0, c1: 3.0, c0: 3.0 },
            DgpId::Dgp2 => Self { a1: 2.0, a0: 1.0, b1: 1.0, b0: -1.0, c1: 3.0, c0: 3.0 },
            DgpId::Dgp3 => {
                let c = 7f64.sqrt();
                Self { a1: 2.0, a0: 1.0, b1: 2.0, b0: -1.0, c1: c, c0: c }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub id: DgpId,
    pub n: usize,
    /// Target assignment probabilities for strata 1..4.
    pub pi_of: Vec<f64>,
    pub seed: u64,
    pub params: DgpParams,
}

impl DgpSpec {
    pub fn new(id: DgpId, n: usize, seed: u64) -> Self {
        Self {
            id,
            n,
            pi_of: id.default_pi(),
            seed,
            params: DgpParams::for_id(id),
        }
    }

    pub fn with_pi(mut self, pi_of: Vec<f64>) -> Self {
        self.pi_of = pi_of;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("sample size must be positive".into()));
        }
        if self.pi_of.len() != N_STRATA {
            return Err(Error::InvalidConfig(format!(
                "{} needs {N_STRATA} target probabilities, got {}",
                self.id,
                self.pi_of.len()
            )));
        }
        Ok(())
    }
}

/// Potential outcomes and treatments for a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialData {
    /// `Y(1)` and `Y(0)`, indexed by treatment received.
    pub y1: Vec<f64>,
    pub y0: Vec<f64>,
    /// `D(1)` and `D(0)`, indexed by assignment.
    pub d1: Vec<u8>,
    pub d0: Vec<u8>,
    /// Zero-based stratum index; the label is `s + 1`.
    pub s: Vec<usize>,
    pub x: DMatrix<f64>,
    pub z: Vec<f64>,
}

impl PotentialData {
    pub fn n(&self) -> usize {
        self.y1.len()
    }

    pub fn is_complier(&self, i: usize) -> bool {
        self.d1[i] > self.d0[i]
    }
}

fn toeplitz_cholesky(dim: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(dim, dim, |j, k| 0.5f64.powi((j as i32 - k as i32).abs()));
    m.cholesky().expect("Toeplitz 0.5^|j-k| is positive definite").l()
}

struct Factors {
    eps: DMatrix<f64>,
    omega: DMatrix<f64>,
}

fn factors() -> &'static Factors {
    static F: OnceLock<Factors> = OnceLock::new();
    F.get_or_init(|| Factors {
        eps: toeplitz_cholesky(4),
        omega: toeplitz_cholesky(DGP3_DIM),
    })
}

fn correlated_normals<R: Rng + ?Sized>(chol: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let z = DVector::from_fn(chol.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal));
    chol * z
}

fn stratum_of(z: f64, g: &[f64; 4]) -> usize {
    let count = g.iter().filter(|&&gj| z <= gj).count();
    // Every draw lies below the top threshold, so count is in 1..=4.
    count.max(1) - 1
}

/// Draws `n` units from the design.
pub fn gen_potential<R: Rng + ?Sized>(spec: &DgpSpec, n: usize, rng: &mut R) -> PotentialData {
    let f = factors();
    let beta = Beta::new(2.0, 2.0).expect("valid Beta parameters");
    let root20 = 20f64.sqrt();
    let g_beta = [-0.25 * root20, 0.0, 0.25 * root20, 0.5 * root20];
    let g_unif = [-1.0, 0.0, 1.0, 2.0];
    let p = spec.params;
    let k = if spec.id == DgpId::Dgp3 { DGP3_DIM } else { 2 };
    let mut out = PotentialData {
        y1: Vec::with_capacity(n),
        y0: Vec::with_capacity(n),
        d1: Vec::with_capacity(n),
        d0: Vec::with_capacity(n),
        s: Vec::with_capacity(n),
        x: DMatrix::zeros(n, k),
        z: Vec::with_capacity(n),
    };
    for i in 0..n {
        let (z, s, alpha, gamma, y1_shift);
        match spec.id {
            DgpId::Dgp1 | DgpId::Dgp4 => {
                z = (beta.sample(rng) - 0.5) * root20;
                s = stratum_of(z, &g_beta);
                let x1 = rng.random_range(-2.0..=2.0);
                let x2 = z + rng.sample::<f64, _>(StandardNormal);
                out.x[(i, 0)] = x1;
                out.x[(i, 1)] = x2;
                alpha = 0.7 * x1 * x1 + x2 + 4.0 * z;
                gamma = 0.5 * x1 * x1 - 0.5 * x2 * x2 - 0.5 * z * z;
                let label = (s + 1) as f64;
                y1_shift = if spec.id == DgpId::Dgp4 { label * label } else { 0.0 };
            }
            DgpId::Dgp2 => {
                z = rng.random_range(-2.0..=2.0);
                s = stratum_of(z, &g_unif);
                let x1: f64 = rng.random_range(-2.0..=2.0);
                let x2: f64 = rng.sample(StandardNormal);
                out.x[(i, 0)] = x1;
                out.x[(i, 1)] = x2;
                alpha = -0.8 * x1 * x2 + z * z + z * x1;
                gamma = 0.5 * x1 * x1 - 0.5 * x2 * x2 - 0.5 * z * z;
                y1_shift = 0.0;
            }
            DgpId::Dgp3 => {
                z = (beta.sample(rng) - 0.5) * root20;
                s = stratum_of(z, &g_beta);
                let x = correlated_normals(&f.omega, rng);
                let (mut a, mut c) = (z, -z);
                for (j, xj) in x.iter().enumerate() {
                    let k2 = ((j + 1) * (j + 1)) as f64;
                    a += xj * 6f64.sqrt() / k2;
                    c += xj * (-2.0 / k2);
                    out.x[(i, j)] = *xj;
                }
                alpha = a;
                gamma = c;
                y1_shift = 0.0;
            }
        }
        let eps = correlated_normals(&f.eps, rng);
        let d0 = u8::from(p.b0 + gamma > p.c0 * eps[2]);
        let d1 = if d0 == 1 { 1 } else { u8::from(p.b1 + gamma > p.c1 * eps[3]) };
        out.y1.push(p.a1 + y1_shift + alpha + eps[0]);
        out.y0.push(p.a0 + alpha + eps[1]);
        out.d1.push(d1);
        out.d0.push(d0);
        out.s.push(s);
        out.z.push(z);
    }
    out
}

/// Observed data under assignment `a`: `D = D(A)`, `Y = Y(D)`.
/// Strata with no units are dropped from the label set.
pub fn realize(potential: &PotentialData, a: &[u8]) -> Result<ExperimentData> {
    let n = potential.n();
    if a.len() != n {
        return Err(Error::LengthMismatch {
            column: "a".into(),
            expected: n,
            found: a.len(),
        });
    }
    let d: Vec<u8> = (0..n).map(|i| if a[i] == 1 { potential.d1[i] } else { potential.d0[i] }).collect();
    let y: Vec<f64> = (0..n).map(|i| if d[i] == 1 { potential.y1[i] } else { potential.y0[i] }).collect();
    let k = potential.s.iter().copied().max().map_or(0, |m| m + 1);
    let mut present = vec![false; k];
    for &s in &potential.s {
        present[s] = true;
    }
    let mut dense = vec![usize::MAX; k];
    let mut labels = Vec::new();
    for s in 0..k {
        if present[s] {
            dense[s] = labels.len();
            labels.push((s + 1).to_string());
        }
    }
    let s: Vec<usize> = potential.s.iter().map(|&v| dense[v]).collect();
    let names = (1..=potential.x.ncols()).map(|j| format!("x{j}")).collect();
    ExperimentData::from_parts(y, d, a.to_vec(), s, labels, potential.x.clone(), names)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            n: ORACLE_N,
            reps: ORACLE_REPS,
            seed: ORACLE_SEED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrueTau {
    pub tau: f64,
    /// Monte Carlo standard error of `tau`.
    pub mc_se: f64,
    pub oracle: OracleConfig,
}

type OracleKey = (DgpId, [u64; 6], OracleConfig);

fn oracle_cache() -> &'static Mutex<HashMap<OracleKey, TrueTau>> {
    static CACHE: OnceLock<Mutex<HashMap<OracleKey, TrueTau>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl std::hash::Hash for OracleConfig {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        (self.n, self.reps, self.seed).hash(state);
    }
}

/// Complier average effect `E[(Y(1) - Y(0)) 1{D(1) > D(0)}] / P(D(1) > D(0))`,
/// pooled over `oracle.reps` independent draws of `oracle.n` units.
/// Results are cached per design and oracle settings.
pub fn true_tau(spec: &DgpSpec, oracle: OracleConfig) -> Result<TrueTau> {
    if oracle.n == 0 || oracle.reps == 0 {
        return Err(Error::InvalidConfig("oracle size and reps must be positive".into()));
    }
    let p = spec.params;
    let key = (spec.id, [p.a1, p.a0, p.b1, p.b0, p.c1, p.c0].map(f64::to_bits), oracle);
    if let Some(hit) = oracle_cache().lock().expect("oracle cache poisoned").get(&key) {
        return Ok(*hit);
    }
    let sums: Vec<(f64, f64)> = (0..oracle.reps)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(oracle.seed);
            rng.set_stream(b as u64);
            let pd = gen_potential(spec, oracle.n, &mut rng);
            (0..pd.n())
                .filter(|&i| pd.is_complier(i))
                .fold((0.0, 0.0), |(num, den), i| (num + pd.y1[i] - pd.y0[i], den + 1.0))
        })
        .collect();
    let num: f64 = sums.iter().map(|v| v.0).sum();
    let den: f64 = sums.iter().map(|v| v.1).sum();
    if den == 0.0 {
        return Err(Error::NoCompliers(0.0));
    }
    let tau = num / den;
    let r = oracle.reps as f64;
    let mean_den = den / r;
    let var = if oracle.reps > 1 {
        sums.iter().map(|(a, b)| (a - tau * b).powi(2)).sum::<f64>() / (r - 1.0)
    } else {
        f64::NAN
    };
    let out = TrueTau {
        tau,
        mc_se: var.sqrt() / (mean_den * r.sqrt()),
        oracle,
    };
    oracle_cache().lock().expect("oracle cache poisoned").insert(key, out);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub spec: DgpSpec,
    pub scheme: Scheme,
    pub lambda: f64,
    pub methods: Vec<Method>,
    pub reps: usize,
    pub tau0: f64,
    pub level: f64,
    /// Power is evaluated at `tau0 + alt_shift`.
    pub alt_shift: f64,
}

impl McConfig {
    pub fn new(spec: DgpSpec, scheme: Scheme, methods: Vec<Method>, reps: usize, tau0: f64) -> Self {
        Self {
            spec,
            scheme,
            lambda: 0.75,
            methods,
            reps,
            tau0,
            level: 0.05,
            alt_shift: 1.0,
        }
    }

    pub fn scheme_config(&self) -> SchemeConfig {
        SchemeConfig::new(self.scheme, self.spec.pi_of.clone()).with_lambda(self.lambda)
    }

    /// Checks everything that can be checked before any replication runs.
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.scheme_config().validate()?;
        if self.reps == 0 {
            return Err(Error::InvalidConfig("reps must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("no methods requested".into()));
        }
        if let Some(m) = self.methods.iter().find(|m| !self.spec.id.allows(**m)) {
            return Err(Error::InvalidConfig(format!(
                "{} supports only NA and R, got {m}",
                self.spec.id
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidConfig(format!("level {} outside (0, 1)", self.level)));
        }
        if !self.tau0.is_finite() {
            return Err(Error::InvalidConfig("tau0 must be finite".into()));
        }
        Ok(())
    }

    /// Requested methods with NA appended when missing, since CI ratios are
    /// taken against it.
    fn run_methods(&self) -> Vec<Method> {
        let mut m = self.methods.clone();
        if !m.contains(&Method::Na) {
            m.push(Method::Na);
        }
        m
    }
}

/// One method's result in one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RepResult {
    pub tau_hat: f64,
    pub se: f64,
    pub reject_null: bool,
    pub reject_alt: bool,
    pub ci_length: f64,
}

/// Results of one replication, aligned with `SimulationReport::run_methods`.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub rep: usize,
    pub results: Vec<std::result::Result<RepResult, Error>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub size: f64,
    pub power: f64,
    /// Median CI length over NA's median CI length.
    pub ci_ratio: f64,
    pub median_ci_length: f64,
    pub mean_tau: f64,
    pub sd_tau: f64,
    pub mean_se: f64,
    pub successes: usize,
    pub failures: usize,
    pub first_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub dgp: DgpId,
    pub scheme: Scheme,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub tau0: f64,
    pub level: f64,
    /// Summaries for the requested methods, in request order.
    pub methods: Vec<MethodSummary>,
    /// Methods actually run (requested plus NA); indexes `replications`.
    pub run_methods: Vec<Method>,
    pub replications: Vec<Replication>,
}

pub const REPORT_HEADER: [&str; 9] = ["dgp", "scheme", "n", "method", "size", "power", "ci_ratio", "reps", "failures"];

/// `%g`-style rendering with `digits` significant digits.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let digits = digits.max(1);
    let exp = x.abs().log10().floor() as i32;
    let trim = |s: String| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if exp < -5 || exp >= digits as i32 {
        let s = format!("{:.*e}", digits - 1, x);
        let (mant, e) = s.split_once('e').expect("exponent present");
        format!("{}e{}", trim(mant.to_string()), e)
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim(format!("{:.*}", decimals, x))
    }
}

impl SimulationReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    /// Per-replication results of `method`, `None` if it was not run.
    pub fn results(&self, method: Method) -> Option<Vec<Option<RepResult>>> {
        let j = self.run_methods.iter().position(|m| *m == method)?;
        Some(self.replications.iter().map(|r| r.results[j].as_ref().ok().copied()).collect())
    }

    /// Fails when any requested method failed in too many replications.
    pub fn check_failures(&self) -> Result<()> {
        for m in &self.methods {
            if m.failures as f64 >= MAX_FAILURE_SHARE * self.reps as f64 && m.failures > 0 {
                return Err(Error::TooManyFailures {
                    failures: m.failures,
                    reps: self.reps,
                });
            }
        }
        Ok(())
    }

    /// Writes one row per method. `raw` keeps full precision; otherwise
    /// six significant digits.
    pub fn write_csv<W: Write>(&self, writer: W, raw: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(REPORT_HEADER).map_err(io)?;
        let num = |x: f64| if raw { format!("{x}") } else { fmt_sig(x, 6) };
        for m in &self.methods {
            w.write_record([
                self.dgp.to_string(),
                self.scheme.to_string(),
                self.n.to_string(),
                m.method.to_string(),
                num(m.size),
                num(m.power),
                num(m.ci_ratio),
                self.reps.to_string(),
                m.failures.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io(e.to_string()))
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    crate::numerics::median(&{
        v.retain(|x| x.is_finite());
        v
    })
}

fn one_replication(cfg: &McConfig, scheme: &SchemeConfig, methods: &[Method], rep: usize) -> Replication {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.spec.seed);
    rng.set_stream(rep as u64);
    let potential = gen_potential(&cfg.spec, cfg.spec.n, &mut rng);
    let data = assign(&potential.s, scheme, &mut rng).and_then(|draw| realize(&potential, &draw.a));
    let results = methods
        .iter()
        .map(|&m| {
            let data = data.as_ref().map_err(Clone::clone)?;
            let est = estimate(m, data, &default_spec(m, data))?;
            let null = wald(est.tau_hat, est.sigma_hat, est.n, cfg.tau0, cfg.level)?;
            let alt = wald(est.tau_hat, est.sigma_hat, est.n, cfg.tau0 + cfg.alt_shift, cfg.level)?;
            Ok(RepResult {
                tau_hat: est.tau_hat,
                se: est.se(),
                reject_null: null.reject,
                reject_alt: alt.reject,
                ci_length: null.ci_hi - null.ci_lo,
            })
        })
        .collect();
    Replication { rep, results }
}

/// Runs `cfg.reps` replications in parallel. Each replication draws its own
/// sample from a stream keyed by the replication index, and every method is
/// applied to that same sample, so results do not depend on scheduling.
pub fn run_mc(cfg: &McConfig) -> Result<SimulationReport> {
    cfg.validate()?;
    let scheme = cfg.scheme_config();
    let methods = cfg.run_methods();
    let replications: Vec<Replication> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| one_replication(cfg, &scheme, &methods, rep))
        .collect();

    let column = |j: usize| -> Vec<RepResult> {
        replications.iter().filter_map(|r| r.results[j].as_ref().ok().copied()).collect()
    };
    let na_j = methods.iter().position(|m| *m == Method::Na).expect("NA always run");
    let na_median = median(column(na_j).iter().map(|r| r.ci_length).collect());

    let summaries = cfg
        .methods
        .iter()
        .map(|&method| {
            let j = methods.iter().position(|m| *m == method).expect("requested method is run");
            let ok = column(j);
            let k = ok.len() as f64;
            let rate = |f: fn(&RepResult) -> bool| ok.iter().filter(|r| f(r)).count() as f64 / k;
            let mean_tau = ok.iter().map(|r| r.tau_hat).sum::<f64>() / k;
            let sd_tau = if ok.len() > 1 {
                (ok.iter().map(|r| (r.tau_hat - mean_tau).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
            } else {
                f64::NAN
            };
            let med = median(ok.iter().map(|r| r.ci_length).collect());
            let first_error = replications
                .iter()
                .find_map(|r| r.results[j].as_ref().err())
                .map(|e| e.to_string());
            MethodSummary {
                method,
                size: rate(|r| r.reject_null),
                power: rate(|r| r.reject_alt),
                ci_ratio: med / na_median,
                median_ci_length: med,
                mean_tau,
                sd_tau,
                mean_se: ok.iter().map(|r| r.se).sum::<f64>() / k,
                successes: ok.len(),
                failures: cfg.reps - ok.len(),
                first_error,
            }
        })
        .collect();

    Ok(SimulationReport {
        dgp: cfg.spec.id,
        scheme: cfg.scheme,
        n: cfg.spec.n,
        reps: cfg.reps,
        seed: cfg.spec.seed,
        tau0: cfg.tau0,
        level: cfg.level,
        methods: summaries,
        run_methods: methods,
        replications,
    })
}
