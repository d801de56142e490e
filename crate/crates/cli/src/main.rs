//! `carlate` command-line front end.
//!
//! Exit codes: 0 on success, 1 when estimation or a simulation run fails,
//! 2 for bad input (usage, configuration or data validation).

mod config;
mod manifest;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use carlate::estimators::{default_spec, estimate, DEFAULT_LEVEL};
use carlate::simulation::{fmt_sig, run_mc, true_tau, OracleConfig, ORACLE_N, ORACLE_REPS, ORACLE_SEED};
use carlate::{DgpId, DgpSpec, Error, ExperimentData, Method, RegressorSpec};
use chrono::Utc;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use config::{resolve, SimFile, SimFlags};
use manifest::{digest, sidecar, RunManifest};

#[derive(Parser)]
#[command(name = "carlate", version, about = "LATE estimation under covariate-adaptive randomization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the LATE on a dataset with columns y, d, a, s and covariates.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo study and write size, power and CI ratios.
    Simulate(SimulateArgs),
    /// Compute the true LATE of a simulation design by oracle draws.
    Truetau(TruetauArgs),
    /// Check a dataset and print per-stratum counts.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Regressors {
    Auto,
    Raw,
    Sieve,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_parser = parse_method)]
    method: Method,
    /// Covariate expansion; `auto` uses the sieve for NP, and for R when
    /// there are exactly two covariates.
    #[arg(long, value_enum, default_value = "auto")]
    regressors: Regressors,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    tau0: f64,
    #[arg(long, default_value_t = DEFAULT_LEVEL)]
    level: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Full precision instead of six significant digits.
    #[arg(long)]
    raw: bool,
    /// Manifest path; defaults to `<out>.manifest.json` when `--out` is set.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML file with any of the settings below; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dgp: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    scheme: Option<String>,
    /// Target assignment probabilities per stratum, comma separated.
    #[arg(long, value_delimiter = ',')]
    pi: Option<Vec<f64>>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Comma-separated methods; defaults to all the design supports.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, env = "CARLATE_SEED")]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Null value; defaults to the oracle LATE.
    #[arg(long, allow_negative_numbers = true)]
    tau0: Option<f64>,
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    oracle_n: Option<usize>,
    #[arg(long)]
    oracle_reps: Option<usize>,
    #[arg(long)]
    oracle_seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    raw: bool,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct TruetauArgs {
    #[arg(long)]
    dgp: String,
    #[arg(long, default_value_t = ORACLE_N)]
    oracle_n: usize,
    #[arg(long, default_value_t = ORACLE_REPS)]
    oracle_reps: usize,
    #[arg(long, default_value_t = ORACLE_SEED)]
    seed: u64,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long)]
    raw: bool,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    data: PathBuf,
}

/// An error together with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn input(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 2, error: error.into() }
    }

    fn runtime(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 1, error: error.into() }
    }

    /// Data and configuration problems are input errors; anything raised
    /// while fitting is a runtime failure.
    fn from_core(e: Error) -> Self {
        match e {
            Error::EmptyInput
            | Error::LengthMismatch { .. }
            | Error::NonBinary { .. }
            | Error::NonFinite { .. }
            | Error::ConstantCovariate { .. }
            | Error::MissingColumn(_)
            | Error::Parse { .. }
            | Error::Io(_)
            | Error::InvalidConfig(_) => Self::input(e),
            _ => Self::runtime(e),
        }
    }

    fn context(mut self, path: &Path) -> Self {
        self.error = self.error.context(path.display().to_string());
        self
    }
}

type CmdResult = Result<(), Failure>;

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Truetau(a) => cmd_truetau(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn install_threads(threads: Option<usize>) -> CmdResult {
    if let Some(t) = threads {
        if t == 0 {
            return Err(Failure::input(anyhow!("--threads must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(Failure::runtime)?;
    }
    Ok(())
}

fn read_data(path: &Path) -> Result<(ExperimentData, Vec<u8>), Failure> {
    let bytes = std::fs::read(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::input)?;
    let data = ExperimentData::read_csv(bytes.as_slice())
        .map_err(|e| Failure::from_core(e).context(path))?;
    Ok((data, bytes))
}

/// Opens `--out` or stdout.
fn sink(out: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p)
                .with_context(|| format!("creating {}", p.display()))
                .map_err(Failure::input)?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn num(x: f64, raw: bool) -> String {
    if raw {
        format!("{x}")
    } else {
        fmt_sig(x, 6)
    }
}

fn opt_num(x: Option<f64>, raw: bool) -> String {
    x.map(|v| num(v, raw)).unwrap_or_default()
}

pub const ESTIMATE_HEADER: [&str; 11] = [
    "method", "n", "tau_hat", "se", "ci_lo", "ci_hi", "statistic", "p_value", "tau0", "level", "reject",
];

#[derive(Serialize)]
struct EstimateRecord {
    method: Method,
    n: usize,
    tau_hat: f64,
    se: f64,
    ci_lo: f64,
    ci_hi: f64,
    /// Absent when the standard error is zero.
    statistic: Option<f64>,
    p_value: Option<f64>,
    tau0: f64,
    level: f64,
    reject: Option<bool>,
    diagnostics: Vec<String>,
}

fn cmd_estimate(args: EstimateArgs) -> CmdResult {
    let started = Utc::now();
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(Failure::input(anyhow!("--level {} outside (0, 1)", args.level)));
    }
    let (data, bytes) = read_data(&args.data)?;
    let spec = match args.regressors {
        Regressors::Auto => default_spec(args.method, &data),
        Regressors::Raw => RegressorSpec::Raw,
        Regressors::Sieve => RegressorSpec::Sieve,
    };
    let est = estimate(args.method, &data, &spec).map_err(|e| Failure::runtime(anyhow!("{} estimator: {e}", args.method)))?;
    for d in &est.diagnostics {
        eprintln!("note: {d}");
    }
    let mut record = EstimateRecord {
        method: est.method,
        n: est.n,
        tau_hat: est.tau_hat,
        se: est.se(),
        ci_lo: est.tau_hat,
        ci_hi: est.tau_hat,
        statistic: None,
        p_value: None,
        tau0: args.tau0,
        level: args.level,
        reject: None,
        diagnostics: est.diagnostics.clone(),
    };
    match est.wald(args.tau0, args.level) {
        Ok(w) => {
            record.ci_lo = w.ci_lo;
            record.ci_hi = w.ci_hi;
            record.statistic = Some(w.statistic);
            record.p_value = Some(w.p_value);
            record.reject = Some(w.reject);
        }
        Err(Error::ZeroStandardError) => {
            eprintln!("warning: estimated standard error is zero; test statistic left blank");
        }
        Err(e) => return Err(Failure::from_core(e)),
    }

    let mut w = sink(args.out.as_deref())?;
    match args.format {
        Format::Csv => {
            let raw = args.raw;
            let row = [
                record.method.to_string(),
                record.n.to_string(),
                num(record.tau_hat, raw),
                num(record.se, raw),
                num(record.ci_lo, raw),
                num(record.ci_hi, raw),
                opt_num(record.statistic, raw),
                opt_num(record.p_value, raw),
                num(record.tau0, raw),
                num(record.level, raw),
                record.reject.map(|r| (r as u8).to_string()).unwrap_or_default(),
            ];
            writeln!(w, "{}", ESTIMATE_HEADER.join(",")).map_err(Failure::runtime)?;
            writeln!(w, "{}", row.join(",")).map_err(Failure::runtime)?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, &record).map_err(Failure::runtime)?;
            writeln!(w).map_err(Failure::runtime)?;
        }
    }
    w.flush().map_err(Failure::runtime)?;
    drop(w);

    if let Some(path) = sidecar(args.out.as_deref(), args.manifest.as_deref()) {
        let settings = format!(
            "method={};regressors={};tau0={:?};level={:?};raw={};format={}",
            args.method,
            args.regressors.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default(),
            args.tau0,
            args.level,
            args.raw,
            args.format.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default(),
        );
        let d = digest(&[b"estimate", settings.as_bytes(), &bytes]);
        RunManifest::new("estimate", d, None, started, args.out.as_deref())
            .write(&path)
            .map_err(Failure::runtime)?;
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> CmdResult {
    let started = Utc::now();
    let file = match &args.config {
        Some(p) => SimFile::load(p).map_err(Failure::input)?,
        None => SimFile::default(),
    };
    let flags = SimFlags {
        dgp: args.dgp,
        n: args.n,
        scheme: args.scheme,
        pi: args.pi,
        lambda: args.lambda,
        methods: args.methods,
        reps: args.reps,
        seed: args.seed,
        tau0: args.tau0,
        level: args.level,
        oracle_n: args.oracle_n,
        oracle_reps: args.oracle_reps,
        oracle_seed: args.oracle_seed,
        raw: args.raw,
    };
    let cfg = resolve(flags, file).map_err(Failure::from_core)?;
    cfg.validate().map_err(Failure::from_core)?;
    install_threads(args.threads)?;

    let tau0 = match cfg.tau0 {
        Some(t) => t,
        None => {
            let spec = DgpSpec::new(cfg.dgp, cfg.n, cfg.seed);
            let t = true_tau(&spec, cfg.oracle).map_err(Failure::from_core)?;
            eprintln!("oracle LATE for {}: {} (mc se {})", cfg.dgp, t.tau, fmt_sig(t.mc_se, 3));
            t.tau
        }
    };
    let report = run_mc(&cfg.mc_config(tau0)).map_err(Failure::from_core)?;

    let mut w = sink(args.out.as_deref())?;
    report.write_csv(&mut w, cfg.raw).map_err(Failure::from_core)?;
    w.flush().map_err(Failure::runtime)?;
    drop(w);

    if let Some(path) = sidecar(args.out.as_deref(), args.manifest.as_deref()) {
        let json = serde_json::to_vec(&cfg).map_err(Failure::runtime)?;
        let d = digest(&[b"simulate", &json]);
        RunManifest::new("simulate", d, Some(cfg.seed), started, args.out.as_deref())
            .write(&path)
            .map_err(Failure::runtime)?;
    }

    for m in &report.methods {
        if let Some(e) = &m.first_error {
            eprintln!("{}: {} of {} replications failed; first error: {e}", m.method, m.failures, report.reps);
        }
    }
    report.check_failures().map_err(Failure::runtime)
}

#[derive(Serialize)]
struct TruetauRecord {
    dgp: DgpId,
    tau: f64,
    mc_se: f64,
    oracle_n: usize,
    oracle_reps: usize,
    oracle_seed: u64,
}

fn cmd_truetau(args: TruetauArgs) -> CmdResult {
    let dgp: DgpId = args.dgp.parse().map_err(Failure::from_core)?;
    let oracle = OracleConfig {
        n: args.oracle_n,
        reps: args.oracle_reps,
        seed: args.seed,
    };
    if oracle.n == 0 || oracle.reps == 0 {
        return Err(Failure::input(anyhow!("oracle size and reps must be positive")));
    }
    install_threads(args.threads)?;
    let t = true_tau(&DgpSpec::new(dgp, 0, 0), oracle).map_err(Failure::from_core)?;
    let rec = TruetauRecord {
        dgp,
        tau: t.tau,
        mc_se: t.mc_se,
        oracle_n: oracle.n,
        oracle_reps: oracle.reps,
        oracle_seed: oracle.seed,
    };
    let mut out = io::stdout().lock();
    let res = match args.format {
        Format::Csv => writeln!(
            out,
            "dgp,tau,mc_se,oracle_n,oracle_reps,oracle_seed\n{},{},{},{},{},{}",
            rec.dgp,
            num(rec.tau, args.raw),
            num(rec.mc_se, args.raw),
            rec.oracle_n,
            rec.oracle_reps,
            rec.oracle_seed
        ),
        Format::Json => serde_json::to_writer_pretty(&mut out, &rec)
            .map_err(io::Error::other)
            .and_then(|_| writeln!(out)),
    };
    res.map_err(Failure::runtime)
}

fn cmd_validate(args: ValidateArgs) -> CmdResult {
    let (data, _) = read_data(&args.data)?;
    let idx = data.index_strata();
    let mut out = io::stdout().lock();
    let mut emit = || -> io::Result<()> {
        writeln!(out, "stratum,n,n1,n0,pi_hat,d_rate_treated,d_rate_control")?;
        for s in 0..idx.n_strata() {
            let rate = |arm: u8| {
                let cell = idx.cell(arm, s);
                if cell.is_empty() {
                    String::new()
                } else {
                    let took = cell.iter().filter(|&&i| data.d()[i] == 1).count();
                    fmt_sig(took as f64 / cell.len() as f64, 6)
                }
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                data.labels()[s],
                idx.n_of[s],
                idx.n1_of[s],
                idx.n0_of[s],
                fmt_sig(idx.pi_hat[s], 6),
                rate(1),
                rate(0)
            )?;
        }
        out.flush()
    };
    emit().map_err(Failure::runtime)?;
    idx.require_interior().map_err(Failure::input)?;
    let names = data.x_names().join(", ");
    eprintln!(
        "ok: {} units, {} strata, {} covariates{}",
        data.n(),
        data.n_strata(),
        data.n_covariates(),
        if names.is_empty() { String::new() } else { format!(" ({names})") }
    );
    Ok(())
}
