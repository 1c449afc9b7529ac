//! Acceptance suite. Prints one line per criterion and fails if any
//! criterion fails. Every randomized run is executed twice, under different
//! worker pool sizes, and the two outputs are compared byte for byte.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use sc_sparc::channels::{ChannelSpec, GaussianNoise};
use sc_sparc::code_design::{SparcParams, StorageMode};
use sc_sparc::codec::g_in;
use sc_sparc::glm::{gaussian_fixed_point, run_se_glm, simulate_glm, GlmParams, PriorSpec};
use sc_sparc::harness::{
    compare_se, run_experiment, with_thread_pool, ExperimentConfig, Sweep, SweepAxis, RESULTS_FILE, SE_FILE,
    SUMMARY_FILE, THREADS_ENV,
};
use sc_sparc::numerics::{integrate_1d, mc_expect, special, RngStream};
use sc_sparc::state_evolution::{eps_tau, frontier, regime_classify, run_se, SeEngine, SeOptions, WaveOptions};
use sc_sparc::Result;

/// Pool sizes of the two executions of every randomized run.
const THREADS: [usize; 2] = [1, 3];

struct Verdict {
    pass: bool,
    detail: String,
}

/// A criterion's name, its runtime limit in seconds and its check.
type Criterion<T> = (&'static str, f64, fn() -> Result<T>);

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

/// Runs `f` on a pool sized through the environment variable.
fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    std::env::set_var(THREADS_ENV, threads.to_string());
    let out = with_thread_pool(f).expect("worker pool");
    std::env::remove_var(THREADS_ENV);
    out
}

/// Verdict and wall time of the first execution of a randomized run, and
/// whether the second execution produced the same bytes.
struct Repeated {
    verdict: Verdict,
    secs: f64,
    identical: bool,
}

fn repeated<T: Send>(
    run: impl Fn() -> Result<T> + Sync,
    check: impl Fn(&T) -> Verdict,
    bytes: impl Fn(&T) -> Vec<u8>,
) -> Result<Repeated> {
    let start = Instant::now();
    let first = with_threads(THREADS[0], &run)?;
    let secs = start.elapsed().as_secs_f64();
    let second = with_threads(THREADS[1], &run)?;
    Ok(Repeated { verdict: check(&first), secs, identical: bytes(&first) == bytes(&second) })
}

fn json<T: serde::Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("serializable")
}

fn channels() -> Vec<(&'static str, ChannelSpec)> {
    vec![
        ("AWGN(1)", ChannelSpec::awgn(1.0).unwrap()),
        ("BEC(0.2)", ChannelSpec::bec(0.2).unwrap()),
        ("BSC(0.11)", ChannelSpec::bsc(0.11).unwrap()),
    ]
}

fn channel_calculus() -> Result<Verdict> {
    let generic = ChannelSpec::custom(GaussianNoise::new(1.0)?);
    let mut worst: f64 = 0.0;
    for i in 0..=100 {
        let s = i as f64 / 100.0;
        worst = worst.max((generic.f_out(s)? - 1.0 / (s + 1.0)).abs());
    }
    Ok(verdict(worst < 1e-6, format!("max |f_out - 1/(s+1)| = {worst:.2e} on 101 points")))
}

fn potential_identity() -> Result<Verdict> {
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for (_, ch) in channels() {
        for k in 1..=9 {
            let s = k as f64 / 10.0;
            let f = ch.f_out(s)?;
            let d = (ch.psi_out(s + h)? - ch.psi_out(s - h)?) / (2.0 * h);
            worst = worst.max((f + 2.0 * d).abs() / f.abs());
        }
    }
    Ok(verdict(worst < 1e-3, format!("max relative error {worst:.2e}")))
}

fn capacities() -> Result<Verdict> {
    let ln2 = 2f64.ln();
    let expected = [0.5 * ln2, 0.8 * ln2, ln2 - special::binary_entropy(0.11)];
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for ((name, ch), c) in channels().into_iter().zip(expected) {
        let value = ch.capacity()?;
        worst = worst.max((value - c).abs());
        parts.push(format!("{name} {value:.6}"));
    }
    // The AWGN entry above is closed form; integrate the quadrature path too.
    let generic = ChannelSpec::custom(GaussianNoise::new(1.0)?);
    let numeric = 0.5 * integrate_1d(|s| generic.f_out(s).unwrap_or(f64::NAN), 0.0, 1.0, 1e-9)?;
    worst = worst.max((numeric - expected[0]).abs());
    parts.push(format!("AWGN(1) by quadrature {numeric:.6}"));
    Ok(verdict(worst <= 1e-3, format!("{}; max error {worst:.2e} nats", parts.join(", "))))
}

fn shape() -> Result<Verdict> {
    let tol = 1e-7;
    let mut ok = true;
    for (_, ch) in channels() {
        let values: Vec<f64> = (0..=1000).map(|i| ch.f_out(i as f64 / 1000.0)).collect::<Result<_>>()?;
        ok &= values.iter().all(|&f| f >= -tol);
        ok &= values.windows(2).all(|w| w[1] <= w[0] + tol);
    }
    Ok(verdict(ok, "non-negative and non-increasing on a 1001-point grid, three channels"))
}

fn first_step() -> Result<Verdict> {
    let (gamma, omega, rho) = (32usize, 2usize, 0.05);
    let channel = ChannelSpec::awgn(1.0)?;
    let params = SparcParams::new(256, 16, gamma, omega, rho, 0.2)?;
    let w = params.base_matrix()?;
    let traj = run_se(&params, &w, &channel, &SeOptions { t_max: 1, stop_tol: 0.0, n_mc: 1000 }, RngStream::root(0))?;
    let (g, om) = (gamma as f64, omega as f64);
    let mut worst: f64 = 0.0;
    for r in 1..=gamma {
        let q = r.min(gamma + 1 - r);
        let expected = if q <= 3 * omega {
            (g - 8.0 * om) / (g - om - q.min(omega + 1) as f64) * rho
        } else {
            let kb = (q - 3 * omega).min(2 * omega + 1) as f64;
            kb * (1.0 - rho) / (2.0 * om + 1.0) + (g - 8.0 * om - kb) / (g - 2.0 * om - 1.0) * rho
        };
        worst = worst.max((traj.sigma[0][r - 1] - expected).abs());
    }
    // The trajectory and a direct engine step must agree as well.
    let engine = SeEngine::new(&params, &w, &channel, 1000, RngStream::root(0))?;
    let step = engine.step(&engine.initial_psi(), 0)?;
    let same = step.sigma == traj.sigma[0];
    Ok(verdict(worst <= 1e-12 && same, format!("max deviation from the closed form {worst:.1e}")))
}

fn desk_channel() -> ChannelSpec {
    ChannelSpec::awgn(1.0).unwrap()
}

fn desk_params() -> Result<SparcParams> {
    ExperimentConfig::desk_preset().code.resolve(&desk_channel())
}

fn se_wave() -> Result<Repeated> {
    let params = desk_params()?;
    let channel = desk_channel();
    let report = regime_classify(&params, &channel, &WaveOptions::default())?;
    let (g, t_iters) = (report.g.unwrap_or(0), report.t_iters.unwrap_or(0));
    let threshold = report.f_m_delta.unwrap_or(0.0);
    let w = params.base_matrix()?;
    let run = || {
        run_se(
            &params,
            &w,
            &channel,
            &SeOptions { t_max: t_iters.max(1), stop_tol: 0.0, ..SeOptions::default() },
            RngStream::root(1),
        )
    };
    let half = params.gamma.div_ceil(2);
    repeated(
        run,
        |traj| {
            let asym = traj.max_asymmetry();
            let mut advances = true;
            for t in 0..traj.iterations() {
                let now = frontier(&traj.psi[t], threshold);
                let next = frontier(&traj.psi[t + 1], threshold);
                advances &= next >= (now + g).min(half);
            }
            let met = frontier(&traj.psi[traj.iterations()], threshold) == half;
            let mut detail = format!(
                "regime {:?}, g = {g}, T = {t_iters}, max asymmetry {asym:.1e}, frontier threshold {threshold:.3}",
                report.regime
            );
            if threshold >= 1.0 {
                detail.push_str(&format!(
                    " (>= 1, every block counts as decoded; final unseeded error {:.3})",
                    traj.mean_psi_unseeded(traj.iterations())
                ));
            }
            verdict(asym <= 1e-12 && advances && met && g >= 1, detail)
        },
        json,
    )
}

fn nishimori() -> Result<Repeated> {
    let run = || -> Result<Vec<(f64, f64, f64, f64)>> {
        let root = RngStream::root(11);
        let mut out = Vec::new();
        for (i, &m) in [2usize, 16, 64].iter().enumerate() {
            for (j, &tau) in [0.05, 0.2, 1.0f64].iter().enumerate() {
                let tag = (3 * i + j) as u64;
                let eps = eps_tau(tau, m, 200_000, root.derive(tag))?;
                let mse = mc_expect(
                    |u| {
                        let r: Vec<f64> =
                            u.iter().enumerate().map(|(k, &x)| f64::from(k == 0) + tau.sqrt() * x).collect();
                        let est = g_in(&r, tau).expect("finite input");
                        est.iter().enumerate().map(|(k, &b)| (b - f64::from(k == 0)).powi(2)).sum()
                    },
                    m,
                    200_000,
                    root.derive(100 + tag),
                )?;
                out.push((1.0 - eps.mean, eps.std_error, mse.mean, mse.std_error));
            }
        }
        Ok(out)
    };
    repeated(
        run,
        |rows| {
            let worst =
                rows.iter().map(|&(a, sa, b, sb)| (a - b).abs() / (sa * sa + sb * sb).sqrt()).fold(0.0, f64::max);
            verdict(worst <= 4.0, format!("largest gap {worst:.2} combined standard errors over 9 pairs"))
        },
        json,
    )
}

fn harness_bytes(dir: &Path) -> Vec<u8> {
    [RESULTS_FILE, SUMMARY_FILE, SE_FILE].iter().flat_map(|f| fs::read(dir.join(f)).expect("output file")).collect()
}

/// Runs `config` into a fresh directory per execution and compares the files.
fn repeated_experiment(
    config: &ExperimentConfig,
    check: impl Fn(&sc_sparc::harness::ExperimentReport) -> Verdict,
) -> Result<Repeated> {
    let dirs = [tempfile::tempdir()?, tempfile::tempdir()?];
    let mut reports = Vec::new();
    let mut secs = Vec::new();
    for (dir, threads) in dirs.iter().zip(THREADS) {
        let mut config = config.clone();
        config.output_dir = Some(dir.path().to_path_buf());
        let start = Instant::now();
        reports.push(with_threads(threads, || run_experiment(&config))?);
        secs.push(start.elapsed().as_secs_f64());
    }
    Ok(Repeated {
        verdict: check(&reports[0]),
        secs: secs[0],
        identical: harness_bytes(dirs[0].path()) == harness_bytes(dirs[1].path()),
    })
}

fn se_tracking() -> Result<Repeated> {
    let mut config = ExperimentConfig::desk_preset();
    config.trials = 20;
    config.master_seed = 2024;
    repeated_experiment(&config, |report| {
        let table = compare_se(report);
        let worst = table.iter().map(|r| r.deviation_of_mean).fold(0.0, f64::max);
        let s = &report.points[0].summary;
        verdict(
            worst <= 0.05 && s.diverged == 0 && !table.is_empty(),
            format!("{} trials, {} iterations, max_t |mean MSE - SE| = {worst:.4}", s.trials, s.iterations),
        )
    })
}

fn error_decay() -> Result<Repeated> {
    let mut config = ExperimentConfig::desk_preset();
    config.name = "decay".into();
    config.channel.param = 0.15;
    config.code.l = 256;
    config.code.m = 32;
    config.code.gamma = 16;
    config.code.omega = 1;
    config.code.rho = Some(0.0);
    config.code.rate_ratio = Some(0.8);
    config.trials = 200;
    config.master_seed = 9;
    config.decoder.iterations = Some(30);
    config.se.n_mc = 20_000;
    let n0 = config.code.resolve(&ChannelSpec::from_config(&config.channel)?)?.n as f64;
    config.sweep = Some(Sweep { axis: SweepAxis::N, values: vec![n0, 2.0 * n0, 3.0 * n0] });
    repeated_experiment(&config, |report| {
        let p: Vec<f64> = report.points.iter().map(|pt| pt.summary.p_error).collect();
        let decreasing = p.windows(2).all(|w| w[1] < w[0]);
        let desc: Vec<String> = report
            .points
            .iter()
            .map(|pt| {
                let s = &pt.summary;
                format!(
                    "n = {} (L = {}): {:.3} [{:.3}, {:.3}]",
                    s.params.n, s.params.l, s.p_error, s.wilson_low, s.wilson_high
                )
            })
            .collect();
        verdict(decreasing && p.len() == 3, format!("P(error) {}", desc.join("; ")))
    })
}

fn glm_tracking() -> Result<Repeated> {
    let params = GlmParams::new(20_000, 0.5, 16, 1, 0.0)?;
    let w = params.base_matrix()?;
    let noise = 0.05;
    let channel = ChannelSpec::awgn(noise)?;
    let iterations = 20;
    let options = SeOptions { t_max: iterations, stop_tol: 0.0, n_mc: 1000 };
    let bg = PriorSpec::bernoulli_gaussian(0.1, 1.0)?;
    let gauss = PriorSpec::gaussian(0.0, 1.0)?;
    let root = RngStream::root(12);
    // Single-instance MSE fluctuates by about 3e-3 at this size, so the
    // Gaussian comparison averages enough trials to resolve 1e-3.
    let gauss_trials = 60;
    // Per-trial deviations, fixed point, SE limit and Gaussian final errors.
    type GlmOutcome = (Vec<Vec<f64>>, f64, f64, Vec<f64>);
    let run = || -> Result<GlmOutcome> {
        let se = run_se_glm(&params, &w, &channel, &bg, &options)?;
        let mut deviations = Vec::new();
        for trial in 0..20 {
            let run =
                simulate_glm(&params, &w, &channel, &bg, &se, iterations, root.derive(trial), StorageMode::Dense)?;
            deviations.push(run.records.iter().map(|r| (r.mse_empirical - r.mse_se).abs()).collect());
        }
        let gauss_se = run_se_glm(&params, &w, &channel, &gauss, &SeOptions { t_max: 30, ..options })?;
        let fixed = gaussian_fixed_point(&params, &w, 1.0, noise, 1e-13)?;
        let fixed_mean = fixed.iter().sum::<f64>() / fixed.len() as f64;
        let mut finals = Vec::with_capacity(gauss_trials);
        for trial in 0..gauss_trials as u64 {
            let run = simulate_glm(
                &params,
                &w,
                &channel,
                &gauss,
                &gauss_se,
                30,
                root.derive(100 + trial),
                StorageMode::Dense,
            )?;
            finals.push(run.records.last().map_or(f64::NAN, |r| r.mse_empirical));
        }
        Ok((deviations, fixed_mean, gauss_se.mean_psi(gauss_se.iterations()), finals))
    };
    repeated(
        run,
        |(deviations, fixed, se, finals)| {
            let worst = deviations.iter().flatten().copied().fold(0.0, f64::max);
            let k = finals.len() as f64;
            let empirical = finals.iter().sum::<f64>() / k;
            let sd = (finals.iter().map(|v| (v - empirical).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
            let gap = (se - fixed).abs().max((empirical - fixed).abs());
            verdict(
                worst <= 0.05 && gap <= 1e-3 && deviations.len() >= 20,
                format!(
                    "{} trials, max |MSE - SE| = {worst:.4}; Gaussian fixed point {fixed:.5}, SE {se:.5}, \
                     empirical {empirical:.5} +- {:.5} over {} trials",
                    deviations.len(),
                    sd / k.sqrt(),
                    finals.len()
                ),
            )
        },
        json,
    )
}

fn main() -> ExitCode {
    let mut all_pass = true;
    let mut all_identical = true;
    let mut report = |id: usize, name: &str, limit: f64, secs: f64, result: Result<Verdict>| {
        let (pass, detail) = match result {
            Ok(v) => (v.pass && secs <= limit, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        all_pass &= pass;
        println!(
            "criterion {id:>2} {:<4} {name}: {detail} ({secs:.1} s, limit {limit:.0} s)",
            if pass { "PASS" } else { "FAIL" }
        );
    };

    let deterministic: [Criterion<Verdict>; 5] = [
        ("channel calculus", 5.0, channel_calculus),
        ("potential identity", 30.0, potential_identity),
        ("capacity", 30.0, capacities),
        ("shape of f_out", 30.0, shape),
        ("first state evolution step", 30.0, first_step),
    ];
    for (i, (name, limit, f)) in deterministic.into_iter().enumerate() {
        let start = Instant::now();
        let result = f();
        report(i + 1, name, limit, start.elapsed().as_secs_f64(), result);
    }

    let randomized: [Criterion<Repeated>; 5] = [
        ("state evolution symmetry and wave", 120.0, se_wave),
        ("section error oracle", 120.0, nishimori),
        ("state evolution tracking", 600.0, se_tracking),
        ("error decay with code length", 900.0, error_decay),
        ("GLM tracking", 300.0, glm_tracking),
    ];
    let mut repro = Vec::new();
    for (i, (name, limit, f)) in randomized.into_iter().enumerate() {
        let start = Instant::now();
        match f() {
            Ok(r) => {
                all_identical &= r.identical;
                repro.push(format!("{}: {}", i + 6, if r.identical { "identical" } else { "DIFFERENT" }));
                report(i + 6, name, limit, r.secs, Ok(r.verdict));
            }
            Err(e) => {
                all_identical = false;
                report(i + 6, name, limit, start.elapsed().as_secs_f64(), Err(e));
            }
        }
    }
    let detail = format!("outputs with {THREADS_ENV} = {} and {}: {}", THREADS[0], THREADS[1], repro.join(", "));
    report(11, "reproducibility", f64::INFINITY, 0.0, Ok(verdict(all_identical, detail)));

    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
