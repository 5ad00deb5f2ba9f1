//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so every line is printed.

use mfgda::diagnostics::{
    l2_definitional, l4_definitional, lyapunov_all, rate_fit_with_floor, sandwich_check,
};
use mfgda::dynamics::{
    estimated_steps, run, run_fixed, GdaState, Regime, RunOptions, RunOutput, ScaleSchedule,
    ScheduleKind, TheoryConstants,
};
use mfgda::equilibrium::{
    epsilon_of_tau, fixed_point_mne, fixed_point_mne_from, BestResponseContext, FixedPointOptions,
};
use mfgda::games::{builtin_kernel, KernelParams};
use mfgda::particles::{init_ensemble, run_particles, ParticleOptions};
use mfgda::{GameKernel, GridMeasure, KernelMatrix, TorusGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

const N: usize = 64;
const TAU: f64 = 1.0;
const GAMMA: f64 = 0.5;

// criterion 1
const MNE_DENSITY_TOL: f64 = 1e-8;
const MNE_RESIDUAL_TOL: f64 = 1e-10;
const MNE_BUDGET: Duration = Duration::from_secs(1);
// criterion 2
const RANDOM_PAIRS: usize = 100;
const IDENTITY_TOL: f64 = 1e-10;
const SANDWICH_TOL: f64 = 1e-8;
const CONVEXITY_SEGMENTS: usize = 50;
// criteria 3 to 6
const MONOTONE_ABS_TOL: f64 = 1e-8;
const MONOTONE_H2_FACTOR: f64 = 10.0;
const PILOT_T: f64 = 5.0;
const DECAY_HORIZON: f64 = 50.0;
const FINAL_L_TOL: f64 = 1e-6;
const R2_MIN: f64 = 0.98;
const BURN_IN: f64 = 0.2;
const FIT_FLOOR: f64 = 1e-12;
const ASCENT_BUDGET: Duration = Duration::from_secs(120);
const DESCENT_T: f64 = 3000.0;
const DESCENT_BUDGET: Duration = Duration::from_secs(300);
const ENTROPY_BOUND_SLACK: f64 = 1e-6;
const CROSS_BOUND_TOL: f64 = 1e-8;
const DERIVATIVE_PASS_FRACTION: f64 = 0.95;
// criterion 7
const ANNEAL_XI_FACTOR: f64 = 3.0;
const ANNEAL_M: f64 = 10.0;
const ANNEAL_TAU_TARGET: f64 = 0.25;
const ANNEAL_BETA: f64 = 3.0;
const ANNEAL_BUDGET: Duration = Duration::from_secs(600);
const ANNEAL_FEASIBLE_T: f64 = 1000.0;
// criterion 8
const PARTICLE_SEEDS: u64 = 10;
const PARTICLE_T: f64 = 2.0;
const PARTICLE_DT: f64 = 1e-3;
const PARTICLE_ETA: f64 = 1.0;
const PARTICLE_BUDGET: Duration = Duration::from_secs(120);
// criterion 10
const VERIFY_BUDGET: Duration = Duration::from_secs(10);

/// Criteria that cannot be met at desk scale; each still prints FAIL.
const KNOWN_INFEASIBLE: &[usize] = &[7];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn grid() -> TorusGrid<f64> {
    TorusGrid::standard(1, N).unwrap()
}

fn kernel(name: &str, params: KernelParams) -> Box<dyn GameKernel<f64>> {
    builtin_kernel(name, &params).unwrap()
}

fn separable_kernel() -> Box<dyn GameKernel<f64>> {
    kernel("separable", KernelParams { a: 1.0, b: 0.5, ..KernelParams::default() })
}

fn separable() -> KernelMatrix<f64> {
    KernelMatrix::new(separable_kernel().as_ref(), grid(), grid()).unwrap()
}

fn von_mises(kappa: f64, centre: f64) -> GridMeasure<f64> {
    GridMeasure::from_fn(grid(), |x| (kappa * (x[0] - centre).cos()).exp()).unwrap()
}

fn initial() -> GdaState<f64> {
    GdaState::new(von_mises(1.5, 2.0), von_mises(1.0, 4.0))
}

fn random_measure(rng: &mut ChaCha8Rng) -> GridMeasure<f64> {
    let modes: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| (rng.random_range(-1.5..1.5), rng.random_range(0.0..6.3), rng.random_range(1..4) as f64))
        .collect();
    let w = grid()
        .points()
        .iter()
        .map(|&x| {
            let s: f64 = modes.iter().map(|(a, ph, k)| a * (k * x + ph).cos()).sum();
            (s + 0.1 * rng.random::<f64>()).exp()
        })
        .collect();
    GridMeasure::from_weights(grid(), w).unwrap()
}

fn monotone_tol() -> f64 {
    let h = grid().cell_width();
    MONOTONE_ABS_TOL + MONOTONE_H2_FACTOR * h * h
}

fn worst_increase(series: &[(f64, f64)]) -> f64 {
    series.windows(2).map(|w| w[1].1 - w[0].1).fold(f64::NEG_INFINITY, f64::max)
}

fn criterion1() -> Outcome {
    let m = KernelMatrix::new(kernel("cos_diff", KernelParams::default()).as_ref(), grid(), grid()).unwrap();
    let u = GridMeasure::uniform(grid());
    let mut pass = true;
    let mut parts = Vec::new();
    for tau in [0.3, 1.0, 3.0] {
        let ctx = BestResponseContext::new(&m, tau).unwrap();
        let start = Instant::now();
        let mne = fixed_point_mne(&ctx, &FixedPointOptions::default()).unwrap();
        let elapsed = start.elapsed();
        let err = mne.mu_star.max_abs_diff(&u).max(mne.nu_star.max_abs_diff(&u));
        // skewed start
        let warm = fixed_point_mne_from(&ctx, &FixedPointOptions::default(), von_mises(2.0, 1.0), von_mises(2.0, 5.0))
            .unwrap();
        let warm_err = warm.mu_star.max_abs_diff(&u).max(warm.nu_star.max_abs_diff(&u));
        let ok = err < MNE_DENSITY_TOL
            && mne.residual < MNE_RESIDUAL_TOL
            && elapsed < MNE_BUDGET
            && warm_err < MNE_DENSITY_TOL
            && warm.residual < MNE_RESIDUAL_TOL;
        pass &= ok;
        parts.push(format!(
            "τ={tau}: err {err:.1e} res {:.1e} {:.0?}; skewed start err {warm_err:.1e} in {} sweeps",
            mne.residual, elapsed, warm.iterations
        ));
    }
    outcome(pass, parts.join(" | "))
}

fn criterion2() -> Outcome {
    let m = separable();
    let ctx = BestResponseContext::new(&m, TAU).unwrap();
    let mne = fixed_point_mne(&ctx, &FixedPointOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut identity, mut sandwich) = (0.0f64, f64::INFINITY);
    for _ in 0..RANDOM_PAIRS {
        let mu = random_measure(&mut rng);
        let nu = random_measure(&mut rng);
        let l = lyapunov_all(&ctx, &mne, &mu, &nu, GAMMA).unwrap();
        identity = identity
            .max((l.l2 - l2_definitional(&ctx, &mu, &nu).unwrap()).abs())
            .max((l.l4 - l4_definitional(&ctx, &mu, &nu).unwrap()).abs());
        let s = sandwich_check(&ctx, &mne, &mu, &nu, 0.0).unwrap();
        sandwich = sandwich.min(s.mu.margin).min(s.nu.margin);
    }
    let mut convexity = f64::INFINITY;
    for _ in 0..CONVEXITY_SEGMENTS {
        let (a, b) = (random_measure(&mut rng), random_measure(&mut rng));
        let w = rng.random_range(0.0..1.0);
        let mid = a.mix(&b, w).unwrap();
        for lp in [
            |c: &BestResponseContext<'_, f64>, x: &GridMeasure<f64>| c.log_partition_plus(x).unwrap(),
            |c: &BestResponseContext<'_, f64>, x: &GridMeasure<f64>| c.log_partition_minus(x).unwrap(),
        ] {
            convexity = convexity.min((1.0 - w) * lp(&ctx, &a) + w * lp(&ctx, &b) - lp(&ctx, &mid));
        }
    }
    outcome(
        identity <= IDENTITY_TOL && sandwich >= -SANDWICH_TOL && convexity >= 0.0,
        format!(
            "{RANDOM_PAIRS} pairs: identity gap {identity:.1e}, worst sandwich margin {sandwich:.2e}, \
             worst convexity gap {convexity:.2e} over {CONVEXITY_SEGMENTS} segments"
        ),
    )
}

struct AscentRun {
    out: RunOutput<f64>,
    alpha_hat: f64,
    l0: f64,
}

fn opts(t_end: f64, record_every: usize) -> RunOptions {
    RunOptions {
        t_end,
        record_every,
        gamma: GAMMA,
        check_derivatives: true,
        ..RunOptions::default()
    }
}

fn series(out: &RunOutput<f64>, ltilde: bool) -> Vec<(f64, f64)> {
    out.records.iter().map(|r| (r.t, if ltilde { r.ltilde } else { r.l })).collect()
}

fn criterion3() -> (Outcome, Option<AscentRun>) {
    let m = separable();
    let eta = TheoryConstants::new(&m, TAU, GAMMA, None).unwrap().eta_for(Regime::FastAscent, None).unwrap();
    let pilot = run_fixed(&m, TAU, eta, initial(), &opts(PILOT_T, 10_000)).unwrap();
    let pilot_fit = match rate_fit_with_floor(&series(&pilot, false), BURN_IN, FIT_FLOOR) {
        Ok(f) if f.alpha_hat > 0.0 => f,
        other => return (outcome(false, format!("pilot fit failed: {other:?}")), None),
    };
    let t_end = DECAY_HORIZON / pilot_fit.alpha_hat;
    let start = Instant::now();
    let out = run_fixed(&m, TAU, eta, initial(), &opts(t_end, 20_000)).unwrap();
    let elapsed = start.elapsed();
    let s = series(&out, false);
    let fit = rate_fit_with_floor(&s, BURN_IN, FIT_FLOOR).unwrap();
    let rise = worst_increase(&s);
    let last = s.last().unwrap().1;
    let pass = rise <= monotone_tol()
        && last < FINAL_L_TOL
        && fit.alpha_hat > 0.0
        && fit.r_squared > R2_MIN
        && elapsed < ASCENT_BUDGET
        && s[0].1 > 1e-3;
    let detail = format!(
        "η={eta:.1}, pilot α̂={:.3} → T={t_end:.2}; 𝓛 {:.3e} → {last:.1e}, worst rise {rise:.1e} \
         (tol {:.1e}), α̂={:.4} R²={:.6} on {} pts, {} steps in {:.1?}",
        pilot_fit.alpha_hat,
        s[0].1,
        monotone_tol(),
        fit.alpha_hat,
        fit.r_squared,
        fit.points,
        out.steps,
        elapsed
    );
    let alpha_hat = fit.alpha_hat;
    let l0 = s[0].1;
    (outcome(pass, detail), Some(AscentRun { out, alpha_hat, l0 }))
}

fn criterion4() -> (Outcome, Option<RunOutput<f64>>) {
    let m = separable();
    let eta = TheoryConstants::new(&m, TAU, GAMMA, None).unwrap().eta_for(Regime::FastDescent, None).unwrap();
    let start = Instant::now();
    let out = run_fixed(&m, TAU, eta, initial(), &opts(DESCENT_T, 5_000)).unwrap();
    let elapsed = start.elapsed();
    let s = series(&out, true);
    let fit = rate_fit_with_floor(&s, BURN_IN, FIT_FLOOR).unwrap();
    let rise = worst_increase(&s);
    let pass = rise <= monotone_tol() && fit.alpha_hat > 0.0 && elapsed < DESCENT_BUDGET;
    let detail = format!(
        "η={eta:.3e}; 𝓛̃ {:.3e} → {:.3e}, worst rise {rise:.1e}, α̂={:.3e} R²={:.5}, {} steps in {:.1?}",
        s[0].1,
        s.last().unwrap().1,
        fit.alpha_hat,
        fit.r_squared,
        out.steps,
        elapsed
    );
    (outcome(pass, detail), Some(out))
}

fn criterion5(run: &AscentRun) -> Outcome {
    let mut worst = f64::INFINITY;
    for r in &run.out.records {
        let bound = run.l0 * (-run.alpha_hat * r.t).exp() / GAMMA + ENTROPY_BOUND_SLACK;
        worst = worst.min(bound - r.tau * r.kl_mu_star);
    }
    let cross = run.out.cross_bounds.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min);
    outcome(
        worst >= 0.0 && cross >= -CROSS_BOUND_TOL && !run.out.cross_bounds.is_empty(),
        format!(
            "entropy bound margin ≥ {worst:.2e} over {} records; cross bound margin ≥ {cross:.2e} over {} checkpoints",
            run.out.records.len(),
            run.out.cross_bounds.len()
        ),
    )
}

fn criterion6(ascent: &RunOutput<f64>, descent: &RunOutput<f64>) -> Outcome {
    let tally = |out: &RunOutput<f64>, which: &[u8]| {
        let checks: Vec<_> = out.derivative_checks.iter().filter(|c| which.contains(&c.which)).collect();
        (checks.iter().filter(|c| c.holds()).count(), checks.len())
    };
    let parts = [
        ("d𝓛₁/dt", tally(ascent, &[1])),
        ("d𝓛₂/dt", tally(ascent, &[2])),
        ("d𝓛₃/dt", tally(descent, &[3])),
        ("d𝓛₄/dt", tally(descent, &[4])),
    ];
    let pass = parts
        .iter()
        .all(|(_, (ok, n))| *n > 0 && *ok as f64 >= DERIVATIVE_PASS_FRACTION * *n as f64);
    let detail: Vec<String> = parts.iter().map(|(name, (ok, n))| format!("{name} {ok}/{n}")).collect();
    outcome(pass, detail.join(", "))
}

fn criterion7() -> Outcome {
    let m = separable();
    let xi_star = 2.0 * m.bounds().sup_norm;
    let xi = ANNEAL_XI_FACTOR * xi_star;
    let t0 = std::f64::consts::E.powi(2);
    let schedule =
        ScaleSchedule::annealed(ScheduleKind::AnnealedFastAscent, xi, xi_star, ANNEAL_M, t0).unwrap();
    let t_target = schedule.time_for_tau(ANNEAL_TAU_TARGET).unwrap();

    // measured cost per step on the feasible prefix
    let o = RunOptions {
        t_end: ANNEAL_FEASIBLE_T,
        record_every: 20_000,
        gamma: GAMMA,
        ..RunOptions::default()
    };
    let start = Instant::now();
    let out = run(&m, &schedule, initial(), &o).unwrap();
    let elapsed = start.elapsed();
    let per_step = elapsed.as_secs_f64() / out.steps as f64;
    let steps_needed = estimated_steps(&m, &schedule, 0.0, t_target);
    let projected = Duration::from_secs_f64((steps_needed * per_step).min(1e18));

    let at = |t: f64| {
        out.records
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .unwrap()
    };
    let (end, tenth) = (at(ANNEAL_FEASIBLE_T), at(ANNEAL_FEASIBLE_T / 10.0));
    let eps = epsilon_of_tau(end.tau, ANNEAL_BETA);
    outcome(
        projected < ANNEAL_BUDGET,
        format!(
            "ξ*={xi_star}, ξ={xi}: τ_T={ANNEAL_TAU_TARGET} needs T=e^{:.0}≈{t_target:.2e}, ≈{steps_needed:.1e} steps \
             ≈ {:.1e} s at {per_step:.1e} s/step (budget {} s). Feasible prefix T={ANNEAL_FEASIBLE_T}: τ_T={:.3}, \
             NI(T)={:.4} vs NI(T/10)={:.4}, ε(τ_T)={eps:.3}",
            xi / ANNEAL_TAU_TARGET,
            projected.as_secs_f64(),
            ANNEAL_BUDGET.as_secs(),
            end.tau,
            end.ni,
            tenth.ni
        ),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn criterion8() -> Outcome {
    let k = separable_kernel();
    let m = separable();
    let schedule = ScaleSchedule::fixed(TAU, PARTICLE_ETA).unwrap();
    let init = initial();
    let o = ParticleOptions {
        t_end: PARTICLE_T,
        dt: PARTICLE_DT,
        record_every: usize::MAX,
        ..ParticleOptions::default()
    };
    let kl = |n: usize| {
        let mut vals = Vec::new();
        let mut slowest = Duration::ZERO;
        for seed in 0..PARTICLE_SEEDS {
            let ens = init_ensemble(n, &init.mu, &init.nu, seed).unwrap();
            let start = Instant::now();
            let r = run_particles(k.as_ref(), Some(&m), &schedule, ens, &init.mu, &init.nu, &o).unwrap();
            slowest = slowest.max(start.elapsed());
            vals.push(r.records.last().unwrap().kl_mu_pde);
        }
        (vals, slowest)
    };
    let (small, _) = kl(200);
    let (large, slowest) = kl(2000);
    let wins = small.iter().zip(&large).filter(|(s, l)| l < s).count();
    let (ms, ml) = (median(small), median(large));
    outcome(
        ml < ms && slowest < PARTICLE_BUDGET,
        format!(
            "median KL(KDE|PDE μ_T): N=200 {ms:.3e}, N=2000 {ml:.3e}; N=2000 smaller in {wins}/{PARTICLE_SEEDS} seeds; \
             slowest N=2000 run {slowest:.1?}"
        ),
    )
}

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_mfgda")
}

fn run_binary(args: &[&str], threads: usize) -> std::process::Output {
    Command::new(binary())
        .args(args)
        .env("MFGDA_THREADS", threads.to_string())
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn files_under(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn criterion9() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("det.toml");
    std::fs::write(
        &cfg,
        "seed = 17\n[grid]\nn = 32\n[integrator]\nt_end = 0.5\nrecord_every = 2000\n\
         [particles]\nn = 500\nt_end = 0.2\nrecord_every = 50\ncheckpoints = true\n[output]\ncheckpoints = true\n",
    )
    .unwrap();
    let cfg = cfg.display().to_string();
    let mut pass = true;
    let mut notes = Vec::new();
    for cmd in ["solve-mne", "run-gda", "run-particles"] {
        let mut trees = Vec::new();
        for (i, threads) in [1usize, 4, 1].iter().enumerate() {
            let out = tmp.path().join(format!("{cmd}-{i}"));
            let o = run_binary(&[cmd, "--config", &cfg, "--out", &out.display().to_string()], *threads);
            pass &= o.status.success();
            let mut files = files_under(&out);
            // drop the echoed output path
            for (name, bytes) in files.iter_mut() {
                if name == "manifest.json" {
                    let text = String::from_utf8_lossy(bytes);
                    *bytes = text.lines().filter(|l| !l.contains("\"directory\"")).collect::<Vec<_>>().join("\n").into_bytes();
                }
            }
            trees.push(files);
        }
        let same = trees.windows(2).all(|w| w[0] == w[1]);
        let csvs = trees[0].iter().filter(|(n, _)| n.ends_with(".csv")).count();
        pass &= same && csvs > 0;
        notes.push(format!("{cmd}: {} files ({csvs} CSV) identical across 1/4/1 threads: {same}", trees[0].len()));
    }
    outcome(pass, notes.join("; "))
}

fn criterion10() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("verify").display().to_string();
    let start = Instant::now();
    let o = run_binary(&["verify", "--preset", "verify-fast", "--out", &out], 1);
    let elapsed = start.elapsed();
    let ok = o.status.code() == Some(0);
    outcome(
        ok && elapsed < VERIFY_BUDGET,
        format!("exit {:?} in {elapsed:.2?}: {}", o.status.code(), String::from_utf8_lossy(&o.stdout).trim()),
    )
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |n: usize, o: Outcome| {
        println!("criterion {n:>2}: {} | {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, o));
    };
    report(1, criterion1());
    report(2, criterion2());
    let (c3, ascent) = criterion3();
    report(3, c3);
    let (c4, descent) = criterion4();
    report(4, c4);
    match &ascent {
        Some(a) => report(5, criterion5(a)),
        None => report(5, outcome(false, "no fast-ascent run")),
    }
    match (&ascent, &descent) {
        (Some(a), Some(d)) => report(6, criterion6(&a.out, d)),
        _ => report(6, outcome(false, "missing runs")),
    }
    report(7, criterion7());
    report(8, criterion8());
    report(9, criterion9());
    report(10, criterion10());

    let passed = results.iter().filter(|(_, o)| o.pass).count();
    println!("{passed}/{} criteria pass", results.len());
    let unexpected: Vec<usize> = results
        .iter()
        .filter(|(n, o)| o.pass == KNOWN_INFEASIBLE.contains(n))
        .map(|(n, _)| *n)
        .collect();
    if !unexpected.is_empty() {
        println!("unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
    println!("criteria {KNOWN_INFEASIBLE:?} fail as documented: the annealing horizon exceeds any desk-scale budget");
}
