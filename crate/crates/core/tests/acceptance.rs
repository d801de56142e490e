//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! `ACCEPTANCE_ONLY=1,2,8` restricts the run to the listed criteria.

mod common;

use std::sync::OnceLock;
use std::time::Instant;

use carlate::adjustments::{adjust_none, adjust_nonparametric, adjust_ols_logit, adjust_optimal_linear, RegressorSpec};
use carlate::estimators::{dr_late, dr_moments, estimate_dr, s_estimator};
use carlate::numerics::{iterate_loadings, lasso_logit, lasso_ls, logistic, logistic_mle, ols, sieve_basis, Family};
use carlate::randomization::{assign, Scheme, SchemeConfig};
use carlate::simulation::{gen_potential, realize, run_mc, true_tau, DgpId, DgpSpec, McConfig, OracleConfig};
use carlate::{Method, SimulationReport};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Criterion 1
const IDENTITY_DATASETS: usize = 1000;
const EXACT_TOL: f64 = 1e-12;
const L_S_TOL: f64 = 1e-8;
const NL_NP_DATASETS: usize = 100;
// Criterion 2
const SOLVER_PROBLEMS: usize = 200;
const OLS_TOL: f64 = 1e-10;
const SCORE_TOL: f64 = 1e-8;
const KKT_TOL: f64 = 1e-6;
const SOFT_TOL: f64 = 1e-8;
// Criterion 3
const CALIB_N: usize = 2000;
const CALIB_REPS: usize = 500;
const CALIB_TOL: f64 = 0.05;
// Criteria 4 and 5
const TABLE_N: usize = 400;
const TABLE_REPS: usize = 2000;
const SIZE_BAND: (f64, f64) = (0.03, 0.07);
const NP_SIZE_BAND: (f64, f64) = (0.04, 0.10);
const L_RATIO: (f64, f64) = (0.773, 0.03);
const R_RATIO: (f64, f64) = (0.695, 0.03);
const POWER_SES: f64 = 2.0;
// Criterion 6
const TSLS_N: usize = 1200;
const TSLS_REPS: usize = 2000;
const TSLS_MIN_SIZE: f64 = 0.10;
const L_MAX_SIZE: f64 = 0.08;
// Criterion 7
const HD_N: usize = 400;
const HD_REPS: usize = 1000;
const HD_SIZE_BAND: (f64, f64) = (0.04, 0.09);
const HD_POWER_FACTOR: f64 = 2.0;
const HD_RATIO: (f64, f64) = (0.345, 0.04);
// Criterion 8
const RANDOMIZER_N: usize = 10_000;
const RANDOMIZER_MAX_SHARE: f64 = 0.05;

const SEED: u64 = 20_250_101;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String, out: &mut Outcome) {
    out.pass &= pass;
    if !out.detail.is_empty() {
        out.detail.push_str("; ");
    }
    out.detail.push_str(&format!("{}{}", if pass { "" } else { "FAILED " }, detail));
}

fn new_outcome() -> Outcome {
    Outcome {
        pass: true,
        detail: String::new(),
    }
}

fn rng(stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(SEED);
    r.set_stream(stream);
    r
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.random_range(-scale..scale))
}

fn scale(x: f64) -> f64 {
    x.abs().max(1.0)
}

fn criterion_1() -> Outcome {
    let mut out = new_outcome();
    let mut r = rng(1);
    let (mut shift_err, mut formula_err, mut na_err, mut ls_err, mut fc_err) = (0f64, 0f64, 0f64, 0f64, 0f64);
    for _ in 0..IDENTITY_DATASETS {
        let data = common::random_dataset(&mut r, 6, false);
        let n = data.n();
        let k = data.n_strata();

        // Location shifts on an arbitrary surface.
        let mut surf = adjust_none(&data);
        surf.mu_y = random_matrix(&mut r, n, 2, 3.0);
        surf.mu_d = DMatrix::from_fn(n, 2, |_, _| r.random_range(0.0..1.0));
        let sy: Vec<[f64; 2]> = (0..k).map(|_| [r.random_range(-5.0..5.0), r.random_range(-5.0..5.0)]).collect();
        let sd: Vec<[f64; 2]> = (0..k).map(|_| [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]).collect();
        let shifted = surf.shifted(data.s(), &sy, &sd);
        let (tau, _) = dr_late(&data, &surf, None).unwrap();
        let (tau_s, _) = dr_late(&data, &shifted, None).unwrap();
        shift_err = shift_err.max((tau - tau_s).abs() / scale(tau));
        let direct = common::dr_tau(&data, &shifted.mu_y, &shifted.mu_d);
        formula_err = formula_err.max((tau - direct).abs() / scale(tau));

        // Zero surface against the saturated ratio.
        let (tau_na, _) = dr_late(&data, &adjust_none(&data), None).unwrap();
        let sat = common::saturated_ratio(&data);
        na_err = na_err.max((tau_na - sat).abs() / scale(sat));

        // Optimal linear adjustment against the S estimator and its oracle.
        let l = estimate_dr(&data, &adjust_optimal_linear(&data, &RegressorSpec::Raw).unwrap(), None).unwrap();
        let s = s_estimator(&data).unwrap();
        let s_oracle = common::s_tau(&data);
        ls_err = ls_err.max((l.tau_hat - s.tau_hat).abs()).max((l.tau_hat - s_oracle).abs());

        // Full compliance.
        let fc = common::random_dataset(&mut r, 3, true);
        let mut fs = adjust_none(&fc);
        fs.mu_y = random_matrix(&mut r, fc.n(), 2, 3.0);
        let g = dr_moments(&fc, &fs, None).unwrap().g_bar();
        let ate = common::ate(&fc, &fs.mu_y);
        fc_err = fc_err.max((g - ate).abs() / scale(ate));
    }
    check(shift_err <= EXACT_TOL, format!("shift invariance max rel err {shift_err:.2e}"), &mut out);
    check(formula_err <= EXACT_TOL, format!("moment transcription max rel err {formula_err:.2e}"), &mut out);
    check(na_err <= EXACT_TOL, format!("NA vs saturated max rel err {na_err:.2e}"), &mut out);
    check(ls_err <= L_S_TOL, format!("L vs S max abs err {ls_err:.2e}"), &mut out);
    check(fc_err <= EXACT_TOL, format!("full-compliance ATE max rel err {fc_err:.2e}"), &mut out);

    let mut np_equal = true;
    let mut compared = 0;
    for rep in 0..NL_NP_DATASETS {
        let id = if rep % 2 == 0 { DgpId::Dgp1 } else { DgpId::Dgp2 };
        let spec = DgpSpec::new(id, 400, 0);
        let pd = gen_potential(&spec, 400, &mut r);
        let draw = assign(&pd.s, &SchemeConfig::new(Scheme::Sbr, vec![0.5; 4]), &mut r).unwrap();
        let data = realize(&pd, &draw.a).unwrap();
        let np = adjust_nonparametric(&data, &RegressorSpec::Sieve).unwrap();
        let x = data.x();
        let basis = sieve_basis(x.column(0).as_slice(), x.column(1).as_slice());
        let nl = adjust_ols_logit(&data, &RegressorSpec::Custom(basis.columns(1, 8).into_owned())).unwrap();
        np_equal &= np.mu_y == nl.mu_y && np.mu_d == nl.mu_d;
        compared += 1;
    }
    check(np_equal, format!("NL and NP surfaces identical on {compared} datasets"), &mut out);
    out
}

fn criterion_2() -> Outcome {
    let mut out = new_outcome();
    let mut r = rng(2);
    let (mut ols_err, mut score, mut kkt, mut soft) = (0f64, 0f64, 0f64, 0f64);
    for _ in 0..SOLVER_PROBLEMS {
        let n = r.random_range(60..300);
        let p = r.random_range(2..8);
        let x = DMatrix::from_fn(n, p, |_, j| if j == 0 { 1.0 } else { r.random_range(-2.0..2.0) });
        let beta = DVector::from_fn(p, |_, _| r.random_range(-1.0..1.0));
        let eta = &x * &beta;
        let y: Vec<f64> = eta.iter().map(|e| e + r.random_range(-1.0..1.0)).collect();
        let d: Vec<f64> = eta.iter().map(|e| f64::from(u8::from(r.random::<f64>() < logistic(*e)))).collect();

        let fit = ols(&x, &y);
        let oracle = common::normal_equations(&x, &y);
        ols_err = ols_err.max((&fit.coef - oracle).amax());

        let lf = logistic_mle(&x, &d).unwrap();
        let prob = (&x * &lf.coef).map(logistic);
        score = score.max((x.transpose() * (DVector::from_column_slice(&d) - prob)).norm());

        let rho = r.random_range(0.5..3.0) * (n as f64).sqrt();
        let mut w = DVector::from_fn(p, |_, _| r.random_range(0.2..2.0));
        w[0] = 0.0;
        let a = lasso_ls(&x, &y, rho, &w).unwrap();
        let b = lasso_logit(&x, &d, rho, &w).unwrap();
        let c = iterate_loadings(&x, &y, Family::LeastSquares, rho, &[0]).unwrap();
        let e = iterate_loadings(&x, &d, Family::Logistic, rho, &[0]).unwrap();
        kkt = kkt
            .max(common::kkt_violation(&x, &y, &a.coef, rho, &w, false))
            .max(common::kkt_violation(&x, &d, &b.coef, rho, &w, true))
            .max(common::kkt_violation(&x, &y, &c.coef, rho, &c.loadings, false))
            .max(common::kkt_violation(&x, &d, &e.coef, rho, &e.loadings, true));

        // Orthogonal design with X'X = n I.
        let q = random_matrix(&mut r, n, p, 1.0).qr().q();
        let xo = q * (n as f64).sqrt();
        let yo: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
        let wo = DVector::from_fn(p, |_, _| r.random_range(0.0..2.0));
        let fo = lasso_ls(&xo, &yo, rho, &wo).unwrap();
        let zt = xo.transpose() * DVector::from_column_slice(&yo) / n as f64;
        for j in 0..p {
            let closed = common::soft_threshold(zt[j], rho * wo[j] / (2.0 * n as f64));
            soft = soft.max((fo.coef[j] - closed).abs());
        }
    }
    check(ols_err <= OLS_TOL, format!("OLS vs normal equations {ols_err:.2e}"), &mut out);
    check(score <= SCORE_TOL, format!("logistic score norm {score:.2e}"), &mut out);
    check(kkt <= KKT_TOL, format!("lasso KKT violation {kkt:.2e}"), &mut out);
    check(soft <= SOFT_TOL, format!("soft-threshold err {soft:.2e}"), &mut out);
    out
}

fn tau0(id: DgpId) -> f64 {
    static CACHE: OnceLock<std::sync::Mutex<Vec<(DgpId, f64)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(&(_, t)) = cache.lock().unwrap().iter().find(|(d, _)| *d == id) {
        return t;
    }
    let t = true_tau(&DgpSpec::new(id, 0, 0), OracleConfig::default()).unwrap();
    println!("  true tau for {id}: {:.5} (MC se {:.1e}, {} x {})", t.tau, t.mc_se, t.oracle.reps, t.oracle.n);
    cache.lock().unwrap().push((id, t.tau));
    t.tau
}

fn run(id: DgpId, n: usize, scheme: Scheme, methods: &[Method], reps: usize, seed: u64) -> SimulationReport {
    let cfg = McConfig::new(DgpSpec::new(id, n, seed), scheme, methods.to_vec(), reps, tau0(id));
    let report = run_mc(&cfg).unwrap();
    for m in &report.methods {
        println!(
            "  {id} {scheme} n={n} {:<4} size {:.4} power {:.4} ci_ratio {:.3} sd {:.4} mean_se {:.4} failures {}",
            m.method.as_str(),
            m.size,
            m.power,
            m.ci_ratio,
            m.sd_tau,
            m.mean_se,
            m.failures
        );
    }
    report
}

fn failures_ok(report: &SimulationReport, out: &mut Outcome) {
    let ok = report.check_failures().is_ok();
    if !ok {
        check(false, "failure share at or above 1%".into(), out);
    }
}

fn criterion_3() -> Outcome {
    let mut out = new_outcome();
    let report = run(DgpId::Dgp1, CALIB_N, Scheme::Srs, &[Method::L], CALIB_REPS, SEED + 3);
    failures_ok(&report, &mut out);
    let l = report.summary(Method::L).unwrap();
    let rel = l.mean_se / l.sd_tau - 1.0;
    check(
        rel.abs() <= CALIB_TOL,
        format!("mean se {:.5} vs MC sd {:.5} ({:+.2}%)", l.mean_se, l.sd_tau, 100.0 * rel),
        &mut out,
    );
    out
}

const TABLE_METHODS: [Method; 7] = [Method::Na, Method::L, Method::S, Method::Nl, Method::F, Method::Np, Method::R];

fn table_run(scheme: Scheme) -> &'static SimulationReport {
    static SRS: OnceLock<SimulationReport> = OnceLock::new();
    static SBR: OnceLock<SimulationReport> = OnceLock::new();
    let cell = if scheme == Scheme::Srs { &SRS } else { &SBR };
    cell.get_or_init(|| run(DgpId::Dgp1, TABLE_N, scheme, &TABLE_METHODS, TABLE_REPS, SEED + 4))
}

fn in_band(x: f64, band: (f64, f64)) -> bool {
    x >= band.0 && x <= band.1
}

fn criterion_4() -> Outcome {
    let mut out = new_outcome();
    for scheme in [Scheme::Srs, Scheme::Sbr] {
        let report = table_run(scheme);
        failures_ok(report, &mut out);
        for m in &report.methods {
            let band = if m.method == Method::Np { NP_SIZE_BAND } else { SIZE_BAND };
            check(
                in_band(m.size, band),
                format!("{scheme} {} size {:.4} in [{}, {}]", m.method, m.size, band.0, band.1),
                &mut out,
            );
        }
    }
    out
}

/// Mean and standard error of the paired difference in rejections of the
/// false null between two methods.
fn paired_power_gap(report: &SimulationReport, hi: Method, lo: Method) -> (f64, f64) {
    let a = report.results(hi).unwrap();
    let b = report.results(lo).unwrap();
    let diffs: Vec<f64> = a
        .iter()
        .zip(&b)
        .filter_map(|(x, y)| Some(f64::from(u8::from(x.as_ref()?.reject_alt)) - f64::from(u8::from(y.as_ref()?.reject_alt))))
        .collect();
    let k = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / k;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

fn criterion_5() -> Outcome {
    let mut out = new_outcome();
    let report = table_run(Scheme::Srs);
    for (m, (target, tol)) in [(Method::L, L_RATIO), (Method::R, R_RATIO)] {
        let ratio = report.summary(m).unwrap().ci_ratio;
        check(
            (ratio - target).abs() <= tol,
            format!("{m}/NA CI ratio {:.1}% (target {:.1}% +/- {:.0}pp)", 100.0 * ratio, 100.0 * target, 100.0 * tol),
            &mut out,
        );
    }
    let power = |m| report.summary(m).unwrap().power;
    for (hi, lo) in [(Method::F, Method::L), (Method::L, Method::Na)] {
        let (gap, se) = paired_power_gap(report, hi, lo);
        check(
            gap > POWER_SES * se,
            format!(
                "power {hi} {:.4} > {lo} {:.4}: paired gap {gap:.4} vs {POWER_SES} x se {se:.4}",
                power(hi),
                power(lo)
            ),
            &mut out,
        );
    }
    out
}

fn criterion_6() -> Outcome {
    let mut out = new_outcome();
    let report = run(DgpId::Dgp4, TSLS_N, Scheme::Srs, &[Method::Tsls, Method::L], TSLS_REPS, SEED + 6);
    failures_ok(&report, &mut out);
    let tsls = report.summary(Method::Tsls).unwrap().size;
    let l = report.summary(Method::L).unwrap().size;
    check(tsls >= TSLS_MIN_SIZE, format!("TSLS size {tsls:.4} >= {TSLS_MIN_SIZE}"), &mut out);
    check(l <= L_MAX_SIZE, format!("L size {l:.4} <= {L_MAX_SIZE}"), &mut out);
    out
}

fn criterion_7() -> Outcome {
    let mut out = new_outcome();
    let report = run(DgpId::Dgp3, HD_N, Scheme::Srs, &[Method::Na, Method::R], HD_REPS, SEED + 7);
    failures_ok(&report, &mut out);
    let r = report.summary(Method::R).unwrap();
    let na = report.summary(Method::Na).unwrap();
    check(
        in_band(r.size, HD_SIZE_BAND),
        format!("R size {:.4} in [{}, {}]", r.size, HD_SIZE_BAND.0, HD_SIZE_BAND.1),
        &mut out,
    );
    check(
        r.power >= HD_POWER_FACTOR * na.power,
        format!("R power {:.4} >= {HD_POWER_FACTOR} x NA power {:.4}", r.power, na.power),
        &mut out,
    );
    check(
        (r.ci_ratio - HD_RATIO.0).abs() <= HD_RATIO.1,
        format!("R/NA CI ratio {:.1}% (target {:.1}% +/- {:.0}pp)", 100.0 * r.ci_ratio, 100.0 * HD_RATIO.0, 100.0 * HD_RATIO.1),
        &mut out,
    );
    out
}

fn criterion_8() -> Outcome {
    let mut out = new_outcome();
    let mut r = rng(8);
    let spec = DgpSpec::new(DgpId::Dgp1, RANDOMIZER_N, 0);
    let pd = gen_potential(&spec, RANDOMIZER_N, &mut r);
    let sizes: Vec<usize> = (0..4).map(|s| pd.s.iter().filter(|&&v| v == s).count()).collect();

    let mut sbr_max: f64 = 0.0;
    for pi in [vec![0.5; 4], vec![0.2, 0.2, 0.2, 0.5], vec![0.3, 0.7, 0.45, 0.6]] {
        let cfg = SchemeConfig::new(Scheme::Sbr, pi);
        for n in [7, 50, 401, RANDOMIZER_N] {
            for _ in 0..50 {
                let draw = assign(&pd.s[..n], &cfg, &mut r).unwrap();
                sbr_max = draw.b_of.iter().fold(sbr_max, |m, b| m.max(b.abs()));
            }
        }
    }
    check(sbr_max < 1.0, format!("SBR max |B| {sbr_max:.3} < 1"), &mut out);

    for scheme in [Scheme::Wei, Scheme::Bcd] {
        let cfg = SchemeConfig::new(scheme, vec![0.5; 4]);
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let draw = assign(&pd.s, &cfg, &mut r).unwrap();
            for s in 0..4 {
                worst = worst.max(draw.b_of[s].abs() / sizes[s] as f64);
            }
        }
        check(
            worst < RANDOMIZER_MAX_SHARE,
            format!("{scheme} max |B|/n(s) {worst:.4} < {RANDOMIZER_MAX_SHARE}"),
            &mut out,
        );
    }

    // Treated counts under SRS are Binomial(n(s), pi(s)).
    let pi = vec![0.2, 0.2, 0.2, 0.5];
    let cfg = SchemeConfig::new(Scheme::Srs, pi.clone());
    let draws = 2000;
    let mut counts = vec![Vec::with_capacity(draws); 4];
    for _ in 0..draws {
        let draw = assign(&pd.s, &cfg, &mut r).unwrap();
        for s in 0..4 {
            counts[s].push(draw.b_of[s] + pi[s] * sizes[s] as f64);
        }
    }
    let (mut worst_z, mut worst_v): (f64, f64) = (0.0, 0.0);
    for s in 0..4 {
        let m = counts[s].iter().sum::<f64>() / draws as f64;
        let v = counts[s].iter().map(|c| (c - m).powi(2)).sum::<f64>() / (draws - 1) as f64;
        let bin_var = sizes[s] as f64 * pi[s] * (1.0 - pi[s]);
        worst_z = worst_z.max(((m - sizes[s] as f64 * pi[s]) / (bin_var / draws as f64).sqrt()).abs());
        worst_v = worst_v.max((v / bin_var - 1.0).abs());
    }
    check(worst_z < 4.0, format!("SRS mean z {worst_z:.2} < 4"), &mut out);
    check(worst_v < 0.15, format!("SRS variance ratio dev {worst_v:.3} < 0.15"), &mut out);
    out
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let criteria: [(usize, &str, fn() -> Outcome); 8] = [
        (1, "numerical identities", criterion_1),
        (2, "solver oracles", criterion_2),
        (3, "variance calibration", criterion_3),
        (4, "size at n=400", criterion_4),
        (5, "efficiency and power ordering", criterion_5),
        (6, "TSLS under heterogeneous pi", criterion_6),
        (7, "high-dimensional design", criterion_7),
        (8, "randomizer properties", criterion_8),
    ];
    let mut failed = Vec::new();
    for (id, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t = Instant::now();
        let o = f();
        println!(
            "criterion {id} ({name}): {} [{:.1}s] {}",
            if o.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            o.detail
        );
        if !o.pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}

