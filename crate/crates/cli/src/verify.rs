//! The invariant suite behind `mfgda verify`.

use crate::build;
use crate::commands::{is_monotone, tracked_series};
use crate::config::ExperimentConfig;
use crate::error::CliResult;
use mfgda::diagnostics::{
    cross_entropy_bound, energy, l2_definitional, l4_definitional, lyapunov_all, max_energy,
    min_energy, ni_error, sandwich_check, Lyapunov,
};
use mfgda::dynamics::{dt_apriori, gda_step, run_fixed, GdaState, Regime, RunOptions, TheoryConstants};
use mfgda::equilibrium::{fixed_point_mne, BestResponseContext, FixedPointOptions, MnePair};
use mfgda::games::{
    builtin_kernel, periodicity_residual, validate_bounds, Activation, BarronEmbedding, GanKernel,
    KernelParams, PetrovGalerkinKernel, PetrovGalerkinSpec, Weight,
};
use mfgda::measures::{entropy, relative_entropy, relative_fisher, total_variation};
use mfgda::particles::{empirical_density, init_ensemble, particle_step, NoiseScaling};
use mfgda::{GameKernel, GridMeasure, KernelMatrix, TorusGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst slack against the threshold; negative means violated.
    pub margin: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub fast: bool,
    pub n: usize,
    pub pairs: usize,
    pub fault: Option<String>,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn failed(&self) -> Vec<String> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect()
    }
}

struct Suite {
    checks: Vec<CheckResult>,
}

impl Suite {
    /// Records `margin ≥ 0` as a pass.
    fn margin(&mut self, name: &str, margin: f64, detail: impl Into<String>) {
        self.checks.push(CheckResult {
            name: name.into(),
            passed: margin >= 0.0,
            margin,
            detail: detail.into(),
        });
    }

    fn flag(&mut self, name: &str, ok: bool, detail: impl Into<String>) {
        self.margin(name, if ok { 0.0 } else { -1.0 }, detail);
    }
}

fn random_measure(grid: TorusGrid<f64>, rng: &mut ChaCha8Rng) -> GridMeasure<f64> {
    let modes: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(-1.5..1.5),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(1..4) as f64,
            )
        })
        .collect();
    let pts = grid.points();
    let d = grid.dim();
    let w = (0..grid.len())
        .map(|i| {
            let x = &pts[i * d..(i + 1) * d];
            let s: f64 = modes.iter().map(|(a, ph, k)| a * (k * x.iter().sum::<f64>() + ph).cos()).sum();
            (s + 0.1 * rng.random::<f64>()).exp()
        })
        .collect();
    GridMeasure::from_weights(grid, w).expect("positive weights")
}

fn worst(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(f64::INFINITY, f64::min)
}

pub fn run_suite(cfg: &ExperimentConfig) -> CliResult<VerifyReport> {
    let v = &cfg.verify;
    let mut cfg = cfg.clone();
    cfg.grid.n = v.n;
    cfg.grid.n_x = None;
    cfg.grid.n_y = None;
    let flip = v.inject_fault.as_deref() == Some("l2-sign-flip");
    let mut s = Suite { checks: Vec::new() };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (kernel, m) = build::matrix(&cfg)?;
    let tau = cfg.solver.tau;

    measures_checks(&mut s, &mut rng, v.n, v.pairs)?;
    games_checks(&mut s, &cfg, kernel.as_ref(), &m)?;
    let ctx = BestResponseContext::new(&m, tau)?;
    let mne = fixed_point_mne(&ctx, &cfg.solver.fixed_point)?;
    equilibrium_checks(&mut s, &mut rng, &ctx, &mne, v.pairs)?;
    diagnostics_checks(&mut s, &mut rng, &ctx, &mne, &cfg, flip)?;
    dynamics_checks(&mut s, &mut rng, &cfg, &m, &mne)?;
    particle_checks(&mut s, &cfg, kernel.as_ref(), &m)?;

    let passed = s.checks.iter().all(|c| c.passed);
    Ok(VerifyReport {
        fast: v.fast,
        n: v.n,
        pairs: v.pairs,
        fault: v.inject_fault.clone(),
        passed,
        checks: s.checks,
    })
}

fn measures_checks(s: &mut Suite, rng: &mut ChaCha8Rng, n: usize, pairs: usize) -> CliResult<()> {
    let g1 = TorusGrid::standard(1, n)?;
    let g2 = TorusGrid::standard(2, n.min(24))?;
    let mut mass_err = 0.0f64;
    let mut min_cell = f64::INFINITY;
    let mut self_kl = 0.0f64;
    let mut pinsker = f64::INFINITY;
    let mut kl_min = f64::INFINITY;
    for _ in 0..pairs {
        let a = random_measure(g1, rng);
        let b = random_measure(g1, rng);
        let pot: Vec<f64> = (0..g1.len()).map(|_| rng.random_range(-20.0..20.0)).collect();
        let tau = rng.random_range(0.1..5.0);
        let gb = GridMeasure::gibbs(g1, &pot, if rng.random() { 1.0 } else { -1.0 }, tau)?;
        for m in [&a, &b, &gb] {
            mass_err = mass_err.max((m.mass() - 1.0).abs());
        }
        min_cell = min_cell.min(gb.density().iter().cloned().fold(f64::INFINITY, f64::min));
        self_kl = self_kl.max(relative_entropy(&a, &a)?.abs());
        let kl = relative_entropy(&a, &b)?;
        let tv = total_variation(&a, &b)?;
        kl_min = kl_min.min(kl);
        pinsker = pinsker.min(kl / 2.0 + 1e-10 - tv * tv);
    }
    s.margin("measures.normalization", 1e-12 - mass_err, format!("max |mass − 1| = {mass_err:e}"));
    s.margin("measures.gibbs_positive", min_cell, format!("smallest Gibbs cell {min_cell:e}"));
    s.margin(
        "measures.kl_nonnegative",
        kl_min.min(1e-12 - self_kl),
        format!("min KL {kl_min:e}, max |KL(μ|μ)| {self_kl:e}"),
    );
    s.margin("measures.pinsker", pinsker, format!("{pairs} pairs"));

    let mut exact = true;
    for g in [g1, g2] {
        let a = random_measure(g, rng);
        let b = random_measure(g, rng);
        for shift in [[1isize, 0isize], [5, -3]] {
            let sh = if g.dim() == 1 { [shift[0], 0] } else { shift };
            let (sa, sb) = (a.shifted(sh), b.shifted(sh));
            exact &= entropy(&a) == entropy(&sa)
                && relative_entropy(&a, &b)? == relative_entropy(&sa, &sb)?
                && relative_fisher(&a, &b)? == relative_fisher(&sa, &sb)?
                && total_variation(&a, &b)? == total_variation(&sa, &sb)?;
            exact &= relative_fisher(&a, &b)? >= 0.0;
        }
    }
    s.flag("measures.shift_invariance", exact, "entropy, KL, Fisher and TV under circular shifts");
    Ok(())
}

fn games_checks(
    s: &mut Suite,
    cfg: &ExperimentConfig,
    kernel: &dyn GameKernel<f64>,
    m: &KernelMatrix<f64>,
) -> CliResult<()> {
    let gan = GanKernel::new(
        vec![0.7, 2.1, 4.4, 5.9],
        1,
        std::f64::consts::TAU,
        Activation::Tanh,
        Weight::default(),
        BarronEmbedding::default(),
    )?;
    let pg = PetrovGalerkinKernel::<f64>::new(PetrovGalerkinSpec {
        quad_nodes: 16,
        ..PetrovGalerkinSpec::default()
    })?;
    let mut kernels: Vec<(String, Box<dyn GameKernel<f64>>)> = Vec::new();
    for name in ["cos_diff", "separable", "trig_poly", "constant"] {
        let params = KernelParams { b: 0.5, seed: cfg.seed, ..KernelParams::default() };
        kernels.push((name.into(), builtin_kernel(name, &params)?));
    }
    kernels.push(("gan".into(), Box::new(gan.clone())));
    kernels.push(("petrov_galerkin".into(), Box::new(pg)));

    let mut worst_wrap = 0.0f64;
    let mut bounds_ok = Vec::new();
    for (i, (name, k)) in kernels.iter().enumerate() {
        worst_wrap = worst_wrap.max(periodicity_residual(k.as_ref(), 100, cfg.seed + i as u64));
        if k.dim_x() + k.dim_y() <= 4 && !validate_bounds(k.as_ref(), 24).ok() {
            bounds_ok.push(name.clone());
        }
    }
    s.margin("games.periodicity", 1e-10 - worst_wrap, format!("worst wrap residual {worst_wrap:e}"));
    s.flag(
        "games.declared_bounds",
        bounds_ok.is_empty(),
        format!("finite-difference estimates exceed declared bounds for {bounds_ok:?}"),
    );

    let (px, py) = (m.x_grid().points(), m.y_grid().points());
    let (dx, dy) = (m.x_grid().dim(), m.y_grid().dim());
    let mut exact = true;
    for i in 0..m.x_grid().len() {
        for j in 0..m.y_grid().len() {
            let v = kernel.eval(&px[i * dx..(i + 1) * dx], &py[j * dy..(j + 1) * dy]);
            exact &= v.to_bits() == m.value(i, j).to_bits();
        }
    }
    s.flag("games.matrix_matches_eval", exact, "tabulated values equal pointwise evaluation bit for bit");

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9a);
    let mut gap = 0.0f64;
    for _ in 0..100 {
        let y: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        let mean = gan.samples().iter().map(|&x| gan.eval(&[x], &y)).sum::<f64>() / gan.sample_count() as f64;
        gap = gap.max((mean - gan.weight_value(&y)).abs());
    }
    s.margin("games.gan_empirical_cancellation", 1e-10 - gap, format!("max gap {gap:e}"));
    Ok(())
}

fn equilibrium_checks(
    s: &mut Suite,
    rng: &mut ChaCha8Rng,
    ctx: &BestResponseContext<'_, f64>,
    mne: &MnePair<f64>,
    pairs: usize,
) -> CliResult<()> {
    let m = ctx.matrix();
    let tau = ctx.tau();
    let mut norm_err = 0.0f64;
    let mut min_cell = f64::INFINITY;
    let mut optimality = f64::INFINITY;
    for _ in 0..(pairs / 5).max(2) {
        let mu = random_measure(*m.x_grid(), rng);
        let nu = random_measure(*m.y_grid(), rng);
        let (kp, km) = (ctx.k_plus(&mu)?, ctx.k_minus(&nu)?);
        for b in [&kp, &km] {
            norm_err = norm_err.max((b.mass() - 1.0).abs());
            min_cell = min_cell.min(b.density().iter().cloned().fold(f64::INFINITY, f64::min));
        }
        let best = energy(m, &mu, &kp, tau)?.e_tau;
        for _ in 0..20 {
            let other = random_measure(*m.y_grid(), rng);
            let nu2 = kp.mix(&other, rng.random_range(0.0..1.0))?;
            optimality = optimality.min(best - energy(m, &mu, &nu2, tau)?.e_tau + 1e-10);
        }
    }
    s.margin(
        "equilibrium.best_response_normalized",
        (1e-12 - norm_err).min(min_cell),
        format!("max |mass − 1| {norm_err:e}, min cell {min_cell:e}"),
    );
    s.margin("equilibrium.best_response_optimality", optimality, "E_τ(μ, 𝒦⁺μ) ≥ E_τ(μ, ν′) − 1e−10");

    let gap = (max_energy(ctx, &mne.mu_star)? - min_energy(ctx, &mne.nu_star)?).abs();
    s.margin(
        "equilibrium.residual_and_minmax",
        if mne.converged { 1e-8 - gap } else { -1.0 },
        format!("residual {:e} after {} sweeps, minmax gap {gap:e}", mne.residual, mne.iterations),
    );

    let mut convex = f64::INFINITY;
    for _ in 0..50 {
        let a = random_measure(*m.x_grid(), rng);
        let b = random_measure(*m.x_grid(), rng);
        let c = random_measure(*m.y_grid(), rng);
        let d = random_measure(*m.y_grid(), rng);
        let w = rng.random_range(0.0..1.0);
        let (ab, cd) = (a.mix(&b, w)?, c.mix(&d, w)?);
        let lp = |x: &GridMeasure<f64>| ctx.log_partition_plus(x);
        let lm = |x: &GridMeasure<f64>| ctx.log_partition_minus(x);
        convex = convex
            .min((1.0 - w) * lp(&a)? + w * lp(&b)? - lp(&ab)? + 1e-12)
            .min((1.0 - w) * lm(&c)? + w * lm(&d)? - lm(&cd)? + 1e-12);
    }
    s.margin("equilibrium.log_partition_convexity", convex, "50 random segments");

    let solve = |damping| {
        fixed_point_mne(ctx, &FixedPointOptions { damping, ..FixedPointOptions::default() })
    };
    let (a, b) = (solve(0.3)?, solve(1.0)?);
    let tv = total_variation(&a.mu_star, &b.mu_star)?.max(total_variation(&a.nu_star, &b.nu_star)?);
    let ok = a.converged && b.converged;
    s.margin(
        "equilibrium.damping_invariance",
        if ok { 1e-8 - tv } else { -1.0 },
        format!("TV between θ = 0.3 and θ = 1 solutions {tv:e}"),
    );
    Ok(())
}

fn diagnostics_checks(
    s: &mut Suite,
    rng: &mut ChaCha8Rng,
    ctx: &BestResponseContext<'_, f64>,
    mne: &MnePair<f64>,
    cfg: &ExperimentConfig,
    flip: bool,
) -> CliResult<()> {
    let m = ctx.matrix();
    let gamma = cfg.solver.gamma;
    let lyap = |mu: &GridMeasure<f64>, nu: &GridMeasure<f64>| -> CliResult<Lyapunov<f64>> {
        let mut l = lyapunov_all(ctx, mne, mu, nu, gamma)?;
        if flip {
            l.l2 = -l.l2;
            l.l = l.l1 + gamma * l.l2;
        }
        Ok(l)
    };
    let mut nonneg = f64::INFINITY;
    let mut identity = 0.0f64;
    let mut sandwich = f64::INFINITY;
    let mut cross = f64::INFINITY;
    for _ in 0..cfg.verify.pairs {
        let mu = random_measure(*m.x_grid(), rng);
        let nu = random_measure(*m.y_grid(), rng);
        let l = lyap(&mu, &nu)?;
        let ni = ni_error(m, &mu, &nu)?;
        nonneg = nonneg.min(worst([l.l1, l.l2, l.l3, l.l4, ni]) + 1e-10);
        identity = identity
            .max((l.l2 - l2_definitional(ctx, &mu, &nu)?).abs())
            .max((l.l4 - l4_definitional(ctx, &mu, &nu)?).abs());
        let sw = sandwich_check(ctx, mne, &mu, &nu, 0.0)?;
        sandwich = sandwich.min(sw.mu.margin.min(sw.nu.margin) + 1e-8);
        cross = cross.min(cross_entropy_bound(ctx, mne, &mu, &nu, 0.0)?.margin + 1e-8);
    }
    s.margin("diagnostics.nonnegativity", nonneg, "𝓛₁..𝓛₄ and NI on random pairs");
    s.margin("diagnostics.lyapunov_identities", 1e-10 - identity, format!("max disagreement {identity:e}"));
    s.margin("diagnostics.sandwich", sandwich, "both sandwich inequalities, tolerance 1e−8");
    s.margin("diagnostics.cross_entropy_bound", cross, "tolerance 1e−8");

    let k = builtin_kernel::<f64>("cos_diff", &KernelParams::default())?;
    let g = TorusGrid::standard(1, cfg.verify.n)?;
    let cm = KernelMatrix::new(k.as_ref(), g, g)?;
    let cctx = BestResponseContext::new(&cm, cfg.solver.tau)?;
    let cmne = fixed_point_mne(&cctx, &FixedPointOptions::default())?;
    let ni = ni_error(&cm, &cmne.mu_star, &cmne.nu_star)?;
    let bound = 2.0 * cmne.residual * cm.bounds().sup_norm + 1e-8;
    s.margin("diagnostics.ni_at_equilibrium", bound - ni, format!("NI {ni:e} on cos_diff"));
    Ok(())
}

fn von_mises(grid: TorusGrid<f64>, kappa: f64, centre: f64) -> CliResult<GridMeasure<f64>> {
    Ok(GridMeasure::from_fn(grid, |x| {
        (kappa * x.iter().map(|&v| (v - centre).cos()).sum::<f64>()).exp()
    })?)
}

fn dynamics_checks(
    s: &mut Suite,
    rng: &mut ChaCha8Rng,
    cfg: &ExperimentConfig,
    m: &KernelMatrix<f64>,
    mne: &MnePair<f64>,
) -> CliResult<()> {
    let tau = cfg.solver.tau;
    let fast = cfg.verify.fast;
    let mut st = GdaState::new(random_measure(*m.x_grid(), rng), random_measure(*m.y_grid(), rng));
    let dt = dt_apriori(m, tau, 3.0);
    let (mut drift, mut min_cell) = (0.0f64, f64::INFINITY);
    for _ in 0..50 {
        gda_step(&mut st, m, tau, 3.0, dt)?;
        drift = drift.max((st.mu.mass() - 1.0).abs()).max((st.nu.mass() - 1.0).abs());
        min_cell = min_cell.min(worst(st.mu.density().iter().chain(st.nu.density()).copied()));
    }
    s.margin("dynamics.mass_conservation", 1e-14 - drift, format!("max mass drift {drift:e}"));
    s.margin("dynamics.positivity", min_cell, format!("min cell {min_cell:e}"));

    let mut eq = GdaState::new(mne.mu_star.clone(), mne.nu_star.clone());
    let dt = dt_apriori(m, tau, 1.0);
    gda_step(&mut eq, m, tau, 1.0, dt)?;
    let h = m.x_grid().cell_width().max(m.y_grid().cell_width());
    let change = 2.0 * total_variation(&eq.mu, &mne.mu_star)?.max(total_variation(&eq.nu, &mne.nu_star)?);
    s.margin(
        "dynamics.stationarity",
        5.0 * (h * h + dt) - change,
        format!("L¹ change of the equilibrium in one step {change:e}"),
    );

    let theory = TheoryConstants::new(m, tau, cfg.solver.gamma, cfg.solver.lambda0)?;
    let tol = 1e-8 + 10.0 * h * h;
    let init = GdaState::new(von_mises(*m.x_grid(), 1.5, 2.0)?, von_mises(*m.y_grid(), 1.0, 4.0)?);
    for (regime, t_end) in [
        (Regime::FastAscent, if fast { 0.5 } else { 2.0 }),
        (Regime::FastDescent, if fast { 100.0 } else { 300.0 }),
    ] {
        let eta = theory.eta_for(regime, None)?;
        let dt0 = dt_apriori(m, tau, eta);
        let steps = (t_end / dt0).ceil();
        let opts = RunOptions {
            t_end,
            record_every: ((steps / 40.0).ceil() as usize).max(1),
            gamma: cfg.solver.gamma,
            fixed_point: cfg.solver.fixed_point.clone(),
            check_derivatives: true,
            ..RunOptions::default()
        };
        let out = run_fixed(m, tau, eta, init.clone(), &opts)?;
        let (name, series) = tracked_series(regime, &out);
        let label = if regime == Regime::FastAscent { "fast_ascent" } else { "fast_descent" };
        let excess = series.windows(2).map(|w| w[0].1 + tol - w[1].1);
        s.margin(
            &format!("dynamics.{label}_monotone"),
            if is_monotone(&series, tol) { worst(excess) } else { worst(excess).min(-f64::MIN_POSITIVE) },
            format!("{name} from {:e} to {:e}", series[0].1, series.last().map_or(0.0, |p| p.1)),
        );
        let checks: Vec<_> = out
            .derivative_checks
            .iter()
            .filter(|c| match regime {
                Regime::FastAscent => c.which <= 2,
                _ => c.which >= 3,
            })
            .collect();
        let ok = checks.iter().filter(|c| c.holds()).count();
        let frac = if checks.is_empty() { 0.0 } else { ok as f64 / checks.len() as f64 };
        s.margin(
            &format!("dynamics.{label}_derivative_bounds"),
            frac - 0.95,
            format!("{ok}/{} checks hold", checks.len()),
        );
        let cross = worst(out.cross_bounds.iter().map(|r| r.margin + 1e-8));
        s.margin(&format!("dynamics.{label}_cross_bound"), cross, "trajectory points");
    }
    Ok(())
}

fn particle_checks(
    s: &mut Suite,
    cfg: &ExperimentConfig,
    kernel: &dyn GameKernel<f64>,
    m: &KernelMatrix<f64>,
) -> CliResult<()> {
    let n = if cfg.verify.fast { 200 } else { 1000 };
    let mu0 = von_mises(*m.x_grid(), 1.0, 1.0)?;
    let nu0 = von_mises(*m.y_grid(), 1.0, 3.0)?;
    let init = init_ensemble(n, &mu0, &nu0, cfg.particle_seed())?;
    let evolve = |mut e: mfgda::Ensemble| -> CliResult<(mfgda::Ensemble, bool)> {
        let mut inside = true;
        for _ in 0..20 {
            particle_step(&mut e, kernel, cfg.solver.tau, 2.0, 1e-2, NoiseScaling::Generator)?;
            inside &= e.xs.iter().all(|&x| (0.0..e.period_x).contains(&x))
                && e.ys.iter().all(|&y| (0.0..e.period_y).contains(&y));
        }
        Ok((e, inside))
    };
    let (a, inside) = evolve(init.clone())?;
    let (b, _) = evolve(init.clone())?;
    s.flag("particles.determinism", a == b, "two runs with the same seed");
    s.flag("particles.torus_containment", inside, "coordinates stay in [0, L)");
    let perm: Vec<usize> = (0..n).rev().collect();
    let (c, _) = evolve(init.permuted(&perm)?)?;
    s.flag("particles.exchangeability", a.permuted(&perm)? == c, "relabelled particles and streams");
    let bw = mfgda::particles::silverman_bandwidth(&a.xs, a.dim_x, a.period_x);
    let kde = empirical_density(&a.xs, m.x_grid(), &bw)?;
    s.margin("particles.kde_normalized", 1e-12 - (kde.mass() - 1.0).abs(), "smoothed empirical measure");
    Ok(())
}
