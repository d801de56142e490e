//! Covariate-adaptive assignment schemes: simple random sampling (SRS),
//! Wei's urn design (WEI), Efron's biased coin (BCD) and stratified block
//! randomization (SBR).
//!
//! Every scheme draws one independent generator per stratum from the caller's
//! rng before assigning anything, so assignments inside a stratum depend only
//! on that stratum's arrival sequence. A unit is treated when a uniform draw
//! from its stratum's stream falls below its treatment probability.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Srs,
    Wei,
    Bcd,
    Sbr,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Srs => "SRS",
            Scheme::Wei => "WEI",
            Scheme::Bcd => "BCD",
            Scheme::Sbr => "SBR",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "srs" => Ok(Scheme::Srs),
            "wei" => Ok(Scheme::Wei),
            "bcd" => Ok(Scheme::Bcd),
            "sbr" => Ok(Scheme::Sbr),
            other => Err(Error::InvalidConfig(format!("unknown scheme `{other}`"))),
        }
    }
}

/// Default WEI allocation function `f(x) = (1 - x) / 2`.
pub fn wei_default(x: f64) -> f64 {
    (1.0 - x) / 2.0
}

#[derive(Debug, Clone)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    /// Target treatment probability per dense stratum index.
    pub pi_of: Vec<f64>,
    /// BCD bias parameter in (1/2, 1].
    pub lambda: f64,
    /// WEI allocation function on [-1, 1].
    pub wei_f: fn(f64) -> f64,
}

impl SchemeConfig {
    pub fn new(scheme: Scheme, pi_of: Vec<f64>) -> Self {
        Self {
            scheme,
            pi_of,
            lambda: 0.75,
            wei_f: wei_default,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.pi_of.is_empty() {
            return Err(Error::InvalidConfig("no target probabilities".into()));
        }
        if let Some(p) = self.pi_of.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(Error::InvalidConfig(format!(
                "target probability {p} outside (0, 1)"
            )));
        }
        match self.scheme {
            Scheme::Wei | Scheme::Bcd => {
                if let Some(p) = self.pi_of.iter().find(|p| **p != 0.5) {
                    return Err(Error::InvalidConfig(format!(
                        "{} requires target probability 1/2 in every stratum, found {p}",
                        self.scheme
                    )));
                }
            }
            _ => {}
        }
        if self.scheme == Scheme::Bcd && !(self.lambda > 0.5 && self.lambda <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "BCD lambda {} outside (1/2, 1]",
                self.lambda
            )));
        }
        if self.scheme == Scheme::Wei {
            let f = self.wei_f;
            for x in [0.0, 0.5, 1.0] {
                let (lo, hi) = (f(-x), f(x));
                if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) {
                    return Err(Error::InvalidConfig("WEI f must map into [0, 1]".into()));
                }
                if (lo - (1.0 - hi)).abs() > 1e-12 {
                    return Err(Error::InvalidConfig("WEI f must satisfy f(-x) = 1 - f(x)".into()));
                }
            }
            if !(f(-1.0) >= f(-0.5) && f(-0.5) >= f(0.0) && f(0.0) >= f(0.5) && f(0.5) >= f(1.0)) {
                return Err(Error::InvalidConfig("WEI f must be non-increasing".into()));
            }
        }
        Ok(())
    }
}

/// Realized assignment vector and per-stratum imbalance.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentDraw {
    pub a: Vec<u8>,
    pub b_of: Vec<f64>,
}

/// Exact imbalance `B_n(s) = sum_i (A_i - pi(s)) 1{S_i = s}`.
pub fn imbalance(a: &[u8], s: &[usize], pi_of: &[f64]) -> Vec<f64> {
    let mut b = vec![0.0; pi_of.len()];
    for (&ai, &si) in a.iter().zip(s) {
        b[si] += ai as f64 - pi_of[si];
    }
    b
}

/// One independent stream per stratum, seeded from `rng` in stratum order.
pub fn stratum_streams<R: Rng + ?Sized>(rng: &mut R, n_strata: usize) -> Vec<ChaCha8Rng> {
    (0..n_strata)
        .map(|_| ChaCha8Rng::seed_from_u64(rng.random()))
        .collect()
}

fn prepare<R: Rng + ?Sized>(
    s: &[usize],
    cfg: &SchemeConfig,
    rng: &mut R,
) -> Result<Vec<ChaCha8Rng>> {
    cfg.validate()?;
    let k = cfg.pi_of.len();
    if let Some(&bad) = s.iter().find(|&&v| v >= k) {
        return Err(Error::InvalidConfig(format!(
            "stratum index {bad} has no target probability ({k} given)"
        )));
    }
    Ok(stratum_streams(rng, k))
}

fn finish(a: Vec<u8>, s: &[usize], cfg: &SchemeConfig) -> AssignmentDraw {
    let b_of = imbalance(&a, s, &cfg.pi_of);
    AssignmentDraw { a, b_of }
}

pub fn assign_srs<R: Rng + ?Sized>(s: &[usize], cfg: &SchemeConfig, rng: &mut R) -> Result<AssignmentDraw> {
    let mut streams = prepare(s, cfg, rng)?;
    let a = s
        .iter()
        .map(|&si| u8::from(streams[si].random::<f64>() < cfg.pi_of[si]))
        .collect();
    Ok(finish(a, s, cfg))
}

/// Sequential assignment where the treatment probability of unit k is a
/// function of its stratum's running imbalance and visit count.
fn assign_sequential<R: Rng + ?Sized>(
    s: &[usize],
    cfg: &SchemeConfig,
    rng: &mut R,
    prob: impl Fn(f64, usize) -> f64,
) -> Result<AssignmentDraw> {
    let mut streams = prepare(s, cfg, rng)?;
    let k = cfg.pi_of.len();
    // Running B_{k-1}(s) with target 1/2, tracked in half-units to stay exact.
    let mut twice_b = vec![0i64; k];
    let mut visits = vec![0usize; k];
    let a = s
        .iter()
        .map(|&si| {
            let p = prob(twice_b[si] as f64 / 2.0, visits[si]);
            let ai = u8::from(streams[si].random::<f64>() < p);
            twice_b[si] += 2 * ai as i64 - 1;
            visits[si] += 1;
            ai
        })
        .collect();
    Ok(finish(a, s, cfg))
}

pub fn assign_wei<R: Rng + ?Sized>(s: &[usize], cfg: &SchemeConfig, rng: &mut R) -> Result<AssignmentDraw> {
    if cfg.scheme != Scheme::Wei {
        return Err(Error::InvalidConfig("assign_wei called with a non-WEI config".into()));
    }
    let f = cfg.wei_f;
    assign_sequential(s, cfg, rng, |b, visits| {
        // 0/0 on the first visit is read as 0.
        let arg = if visits == 0 { 0.0 } else { 2.0 * b / visits as f64 };
        f(arg)
    })
}

pub fn assign_bcd<R: Rng + ?Sized>(s: &[usize], cfg: &SchemeConfig, rng: &mut R) -> Result<AssignmentDraw> {
    if cfg.scheme != Scheme::Bcd {
        return Err(Error::InvalidConfig("assign_bcd called with a non-BCD config".into()));
    }
    let lambda = cfg.lambda;
    assign_sequential(s, cfg, rng, |b, _| {
        if b == 0.0 {
            0.5
        } else if b < 0.0 {
            lambda
        } else {
            1.0 - lambda
        }
    })
}

pub fn assign_sbr<R: Rng + ?Sized>(s: &[usize], cfg: &SchemeConfig, rng: &mut R) -> Result<AssignmentDraw> {
    let mut streams = prepare(s, cfg, rng)?;
    let k = cfg.pi_of.len();
    let mut members = vec![Vec::new(); k];
    for (i, &si) in s.iter().enumerate() {
        members[si].push(i);
    }
    let mut a = vec![0u8; s.len()];
    for (si, units) in members.iter_mut().enumerate() {
        units.shuffle(&mut streams[si]);
        let treated = (cfg.pi_of[si] * units.len() as f64).floor() as usize;
        for &i in &units[..treated] {
            a[i] = 1;
        }
    }
    Ok(finish(a, s, cfg))
}

/// Dispatches on `cfg.scheme`.
pub fn assign<R: Rng + ?Sized>(s: &[usize], cfg: &SchemeConfig, rng: &mut R) -> Result<AssignmentDraw> {
    match cfg.scheme {
        Scheme::Srs => assign_srs(s, cfg, rng),
        Scheme::Wei => assign_wei(s, cfg, rng),
        Scheme::Bcd => assign_bcd(s, cfg, rng),
        Scheme::Sbr => assign_sbr(s, cfg, rng),
    }
}
