use crate::build;
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::output::{config_hash, OutputDir};
use crate::verify;
use mfgda::diagnostics::{rate_fit_with_floor, write_diagnostics_csv, RateFit};
use mfgda::dynamics::{run, Regime, RunOptions, RunOutput, TheoryConstants};
use mfgda::equilibrium::{fixed_point_mne, BestResponseContext, MneSummary};
use mfgda::particles::{init_ensemble, run_particles, write_particle_csv, ParticleOptions};
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Serialize)]
struct MneReport {
    #[serde(flatten)]
    mne: MneSummary,
    kernel: String,
    kernel_metadata: serde_json::Value,
    ni: f64,
    e_tau: f64,
    config_sha256: String,
}

pub fn solve_mne(cfg: &ExperimentConfig, out: &Path) -> CliResult<()> {
    let (_, m) = build::matrix(cfg)?;
    let ctx = BestResponseContext::new(&m, cfg.solver.tau)?;
    let mne = fixed_point_mne(&ctx, &cfg.solver.fixed_point)?;
    let mut dir = OutputDir::create(out)?;
    dir.write_with("mu_star.csv", |b| mne.mu_star.write_csv(b))?;
    dir.write_with("nu_star.csv", |b| mne.nu_star.write_csv(b))?;
    let report = MneReport {
        mne: mne.summary(),
        kernel: m.kernel_name().to_string(),
        kernel_metadata: m.kernel_metadata().clone(),
        ni: mfgda::diagnostics::ni_error(&m, &mne.mu_star, &mne.nu_star)?,
        e_tau: mfgda::diagnostics::energy(&m, &mne.mu_star, &mne.nu_star, cfg.solver.tau)?.e_tau,
        config_sha256: config_hash(cfg),
    };
    dir.write_json("mne.json", &report)?;
    dir.finish("solve-mne", cfg)?;
    mne.ensure_converged()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct GdaSummary {
    pub kernel: String,
    pub regime: Regime,
    pub schedule: serde_json::Value,
    /// Constants at the initial temperature.
    pub theory: TheoryConstants,
    pub eta: f64,
    pub predicted_alpha1: f64,
    pub predicted_alpha2: f64,
    /// Fit of `𝓛` (fast ascent) or `𝓛̃` (fast descent).
    pub fitted: Option<RateFit>,
    pub fitted_series: &'static str,
    pub monotone: bool,
    pub monotone_tolerance: f64,
    pub derivative_checks: usize,
    pub derivative_checks_passed: usize,
    pub cross_bounds: usize,
    pub cross_bounds_passed: usize,
    pub steps: usize,
    pub dt_min: f64,
    pub dt_max: f64,
    pub final_record: Option<mfgda::diagnostics::DiagnosticsRecord>,
    pub final_mne: MneSummary,
    pub config_sha256: String,
}

/// The gap series whose decay the regime predicts.
pub fn tracked_series(regime: Regime, out: &RunOutput<f64>) -> (&'static str, Vec<(f64, f64)>) {
    match regime {
        Regime::FastDescent => ("Ltilde", out.records.iter().map(|r| (r.t, r.ltilde)).collect()),
        _ => ("L", out.records.iter().map(|r| (r.t, r.l)).collect()),
    }
}

pub fn is_monotone(series: &[(f64, f64)], tol: f64) -> bool {
    series.windows(2).all(|w| w[1].1 <= w[0].1 + tol)
}

pub fn run_options(cfg: &ExperimentConfig) -> RunOptions {
    let i = &cfg.integrator;
    RunOptions {
        t_end: i.t_end,
        dt: i.dt,
        record_every: i.record_every,
        gamma: cfg.solver.gamma,
        fixed_point: cfg.solver.fixed_point.clone(),
        keep_states: cfg.output.checkpoints,
        check_derivatives: i.check_derivatives,
        dt_floor: i.dt_floor,
    }
}

pub fn run_gda(cfg: &ExperimentConfig, out: &Path) -> CliResult<GdaSummary> {
    let (_, m) = build::matrix(cfg)?;
    let (schedule, _) = build::schedule(cfg, &m)?;
    let init = build::initial_state(cfg, &m)?;
    let result = run(&m, &schedule, init, &run_options(cfg))?;

    let mut dir = OutputDir::create(out)?;
    dir.write_with("diagnostics.csv", |b| write_diagnostics_csv(&result.records, b))?;
    let mut checks = String::from("t,which,estimate,bound,tolerance,holds\n");
    for c in &result.derivative_checks {
        let _ = writeln!(
            checks,
            "{:e},{},{:e},{:e},{:e},{}",
            c.t, c.which, c.estimate, c.bound, c.tolerance, c.holds()
        );
    }
    dir.write("derivative_checks.csv", checks.as_bytes())?;
    let mut cross = String::from("t,lhs,rhs,margin\n");
    for r in &result.cross_bounds {
        let _ = writeln!(cross, "{:e},{:e},{:e},{:e}", r.t, r.lhs, r.rhs, r.margin);
    }
    dir.write("cross_bounds.csv", cross.as_bytes())?;
    for cp in &result.checkpoints {
        dir.write_with(&format!("checkpoints/mu_step{:09}.csv", cp.step), |b| cp.state.mu.write_csv(b))?;
        dir.write_with(&format!("checkpoints/nu_step{:09}.csv", cp.step), |b| cp.state.nu.write_csv(b))?;
    }
    dir.write_with("mu_final.csv", |b| result.final_state.mu.write_csv(b))?;
    dir.write_with("nu_final.csv", |b| result.final_state.nu.write_csv(b))?;

    let regime = build::regime_of(cfg);
    let (tau0, eta0) = schedule.at(0.0);
    let theory = TheoryConstants::new(&m, tau0, cfg.solver.gamma, cfg.solver.lambda0)?;
    let (name, series) = tracked_series(regime, &result);
    let h = m.x_grid().cell_width().max(m.y_grid().cell_width());
    let tol = 1e-8 + 10.0 * h * h;
    let fitted = rate_fit_with_floor(&series, cfg.integrator.burn_in, cfg.integrator.fit_floor).ok();
    let summary = GdaSummary {
        kernel: m.kernel_name().to_string(),
        regime,
        schedule: serde_json::to_value(&cfg.solver.schedule).map_err(mfgda::Error::from)?,
        theory,
        eta: eta0,
        predicted_alpha1: theory.alpha1,
        predicted_alpha2: theory.alpha2(eta0),
        fitted,
        fitted_series: name,
        monotone: is_monotone(&series, tol),
        monotone_tolerance: tol,
        derivative_checks: result.derivative_checks.len(),
        derivative_checks_passed: result.derivative_checks.iter().filter(|c| c.holds()).count(),
        cross_bounds: result.cross_bounds.len(),
        cross_bounds_passed: result.cross_bounds.iter().filter(|r| r.holds(1e-8)).count(),
        steps: result.steps,
        dt_min: result.dt_min,
        dt_max: result.dt_max,
        final_record: result.records.last().copied(),
        final_mne: result.final_mne.summary(),
        config_sha256: config_hash(cfg),
    };
    dir.write_json("summary.json", &summary)?;
    dir.finish("run-gda", cfg)?;
    Ok(summary)
}

#[derive(Debug, Serialize)]
pub struct ParticleSummary {
    pub n: usize,
    pub seed: u64,
    pub dt: f64,
    pub t_end: f64,
    pub noise: mfgda::particles::NoiseScaling,
    pub tau: f64,
    pub eta: f64,
    pub final_record: Option<mfgda::particles::ParticleRecord>,
    pub config_sha256: String,
}

pub fn run_particles_cmd(cfg: &ExperimentConfig, out: &Path) -> CliResult<ParticleSummary> {
    let (k, m) = build::matrix(cfg)?;
    let (schedule, _) = build::schedule(cfg, &m)?;
    let init = build::initial_state(cfg, &m)?;
    let p = &cfg.particles;
    let seed = cfg.particle_seed();
    let ens = init_ensemble(p.n, &init.mu, &init.nu, seed)?;
    let opts = ParticleOptions {
        t_end: p.t_end,
        dt: p.dt,
        record_every: p.record_every,
        bandwidth: p.bandwidth,
        noise: p.noise,
        paired_pde: p.paired_pde,
        keep_ensembles: p.checkpoints,
    };
    let result = run_particles(k.as_ref(), Some(&m), &schedule, ens, &init.mu, &init.nu, &opts)?;
    let mut dir = OutputDir::create(out)?;
    dir.write_with("particles.csv", |b| write_particle_csv(&result.records, b))?;
    for e in &result.ensembles {
        dir.write_with(&format!("ensembles/ensemble_step{:09}.csv", e.step), |b| e.write_csv(b))?;
    }
    dir.write_with("ensemble_final.csv", |b| result.final_ensemble.write_csv(b))?;
    if let Some(state) = &result.final_pde {
        dir.write_with("pde_mu_final.csv", |b| state.mu.write_csv(b))?;
        dir.write_with("pde_nu_final.csv", |b| state.nu.write_csv(b))?;
    }
    let (tau, eta) = schedule.at(0.0);
    let summary = ParticleSummary {
        n: p.n,
        seed,
        dt: p.dt,
        t_end: p.t_end,
        noise: p.noise,
        tau,
        eta,
        final_record: result.records.last().copied(),
        config_sha256: config_hash(cfg),
    };
    dir.write_json("summary.json", &summary)?;
    dir.finish("run-particles", cfg)?;
    Ok(summary)
}

pub fn verify_cmd(cfg: &ExperimentConfig, out: &Path) -> CliResult<verify::VerifyReport> {
    let report = verify::run_suite(cfg)?;
    let mut dir = OutputDir::create(out)?;
    dir.write_json("verify.json", &report)?;
    dir.finish("verify", cfg)?;
    let failed = report.failed();
    if failed.is_empty() {
        Ok(report)
    } else {
        Err(CliError::Verify(failed))
    }
}
