//! Finite-volume solver for the two-scale mean-field GDA system
//!
//! ```text
//! ∂ₜμ = ∇·(μ∇V_ν) + τΔμ,        V_ν(x) = ∫K(x, y)dν(y)
//! ∂ₜν = η(−∇·(ν∇V_μ) + τΔν),    V_μ(y) = ∫K(x, y)dμ(x)
//! ```
//!
//! Both equations are written as `∂ₜρ = r·(∇·(ρ∇W) + τΔρ)` and discretized
//! with Scharfetter–Gummel face fluxes and explicit Euler steps. The fluxes
//! telescope, so mass is conserved to round-off, and the discrete Gibbs
//! density `∝ e^{−W/τ}` has exactly zero flux.

use crate::diagnostics::{
    cross_entropy_bound, derivative_bounds, lyapunov_all, DiagnosticsRecord, InequalityRow,
};
use crate::equilibrium::{
    condition_kappa, default_lambda0, fixed_point_mne, fixed_point_mne_from, lsi_lower_bound,
    BestResponseContext, FixedPointOptions, MnePair,
};
use crate::error::{invalid, Error, Result};
use crate::games::KernelMatrix;
use crate::measures::{GridMeasure, TorusGrid};
use crate::scalar::{bernoulli, Scalar};
use serde::{Deserialize, Serialize};

/// Strategy pair and clock.
#[derive(Debug, Clone, PartialEq)]
pub struct GdaState<T> {
    pub mu: GridMeasure<T>,
    pub nu: GridMeasure<T>,
    pub t: T,
}

impl<T: Scalar> GdaState<T> {
    pub fn new(mu: GridMeasure<T>, nu: GridMeasure<T>) -> Self {
        Self {
            mu,
            nu,
            t: T::zero(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Fixed,
    AnnealedFastAscent,
    AnnealedFastDescent,
}

/// Temperature and time-scale ratio as functions of time.
///
/// Annealed kinds use `τ_t = ξ/log t` and
/// `η_t = M t^{ξ*/ξ}/(log t)²` (fast ascent) or `η_t = log t/(M t)` (fast
/// descent), frozen at their `t₀` values for `t ≤ t₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleSchedule<T> {
    kind: ScheduleKind,
    tau: T,
    eta: T,
    xi: T,
    xi_star: T,
    m: T,
    t0: T,
}

impl<T: Scalar> ScaleSchedule<T> {
    pub fn fixed(tau: T, eta: T) -> Result<Self> {
        if !(tau > T::zero() && tau.is_finite()) {
            return Err(invalid(format!("temperature must be positive, got {tau}")));
        }
        if !(eta > T::zero() && eta.is_finite()) {
            return Err(invalid(format!("time-scale ratio must be positive, got {eta}")));
        }
        Ok(Self {
            kind: ScheduleKind::Fixed,
            tau,
            eta,
            xi: T::zero(),
            xi_star: T::zero(),
            m: T::zero(),
            t0: T::zero(),
        })
    }

    pub fn annealed(kind: ScheduleKind, xi: T, xi_star: T, m: T, t0: T) -> Result<Self> {
        let need = match kind {
            ScheduleKind::Fixed => return Err(invalid("use ScaleSchedule::fixed for constant scales")),
            ScheduleKind::AnnealedFastAscent => xi_star,
            ScheduleKind::AnnealedFastDescent => T::two() * xi_star,
        };
        if !(xi > need) {
            return Err(invalid(format!("annealing needs ξ > {need}, got {xi}")));
        }
        if !(m > T::zero()) {
            return Err(invalid("annealing constant M must be positive"));
        }
        if !(t0 > T::one()) {
            return Err(invalid(format!("annealing start t₀ must exceed 1, got {t0}")));
        }
        let mut s = Self {
            kind,
            tau: T::zero(),
            eta: T::zero(),
            xi,
            xi_star,
            m,
            t0,
        };
        (s.tau, s.eta) = s.at(t0);
        Ok(s)
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// Last time at which `(τ, η)` still equal their initial values.
    pub fn frozen_until(&self) -> T {
        match self.kind {
            ScheduleKind::Fixed => T::infinity(),
            _ => self.t0,
        }
    }

    /// `(τ(t), η(t))`.
    pub fn at(&self, t: T) -> (T, T) {
        if self.kind == ScheduleKind::Fixed || (self.tau > T::zero() && t <= self.t0) {
            return (self.tau, self.eta);
        }
        let s = t.max(self.t0);
        let log_s = s.ln();
        let tau = self.xi / log_s;
        let eta = match self.kind {
            ScheduleKind::AnnealedFastAscent => {
                self.m * s.powf(self.xi_star / self.xi) / (log_s * log_s)
            }
            _ => log_s / (self.m * s),
        };
        (tau, eta)
    }

    /// Time at which the temperature reaches `tau` (annealed kinds).
    pub fn time_for_tau(&self, tau: T) -> Option<T> {
        match self.kind {
            ScheduleKind::Fixed => None,
            _ => Some((self.xi / tau).exp().max(self.t0)),
        }
    }
}

/// Explicit stability bound `c·h²/(max(1, η)(τ + h·G))` with `c = 0.4/dim`.
pub fn dt_max<T: Scalar>(h: T, dim: usize, tau: T, eta: T, grad: T) -> T {
    let c = T::lit(0.4) / T::from_usize_lossy(dim.max(1));
    c * h * h / (eta.max(T::one()) * (tau + h * grad))
}

fn grid_scale<T: Scalar>(matrix: &KernelMatrix<T>) -> (T, usize) {
    let (gx, gy) = (matrix.x_grid(), matrix.y_grid());
    (gx.cell_width().min(gy.cell_width()), gx.dim().max(gy.dim()))
}

/// Step bound computed before a run from the declared Lipschitz constant,
/// which dominates every discrete potential gradient.
pub fn dt_apriori<T: Scalar>(matrix: &KernelMatrix<T>, tau: T, eta: T) -> T {
    let (h, dim) = grid_scale(matrix);
    dt_max(h, dim, tau, eta, matrix.bounds().lip)
}

/// Neighbour tables and scratch buffers for repeated steps on one grid.
#[derive(Debug, Clone)]
struct Side<T> {
    grid: TorusGrid<T>,
    next: Vec<Vec<usize>>,
    prev: Vec<Vec<usize>>,
    potential: Vec<T>,
    flux: Vec<T>,
    out: Vec<T>,
}

impl<T: Scalar> Side<T> {
    fn new(grid: TorusGrid<T>) -> Self {
        let n = grid.len();
        let next = (0..grid.dim())
            .map(|a| (0..n).map(|i| grid.neighbor(i, a, 1)).collect())
            .collect();
        let prev = (0..grid.dim())
            .map(|a| (0..n).map(|i| grid.neighbor(i, a, -1)).collect())
            .collect();
        Self {
            grid,
            next,
            prev,
            potential: vec![T::zero(); n],
            flux: vec![T::zero(); n],
            out: vec![T::zero(); n],
        }
    }

    /// Largest `|ΔW|/h` over faces of the stored potential (times `sign`).
    fn max_face_gradient(&self) -> T {
        let h = self.grid.cell_width();
        let mut g = T::zero();
        for next in &self.next {
            for (i, &j) in next.iter().enumerate() {
                g = g.max((self.potential[j] - self.potential[i]).abs());
            }
        }
        g / h
    }

    /// One explicit step of `∂ₜρ = rate·(∇·(ρ∇W) + τΔρ)` with `W = sign·potential`,
    /// written into `self.out` and renormalized.
    fn advance(&mut self, rho: &[T], sign: T, tau: T, rate: T, dt: T) {
        let h = self.grid.cell_width();
        let diff = tau / h;
        let lambda = rate * dt / h;
        self.out.copy_from_slice(rho);
        for axis in 0..self.grid.dim() {
            let next = &self.next[axis];
            for i in 0..rho.len() {
                let j = next[i];
                let z = sign * (self.potential[j] - self.potential[i]) / tau;
                let b = bernoulli(z);
                self.flux[i] = diff * (b * rho[i] - (b + z) * rho[j]);
            }
            let prev = &self.prev[axis];
            for i in 0..rho.len() {
                self.out[i] -= lambda * (self.flux[i] - self.flux[prev[i]]);
            }
        }
        let mut mass = T::zero();
        for v in &self.out {
            mass += *v;
        }
        let mass = mass * self.grid.cell_volume();
        for v in self.out.iter_mut() {
            *v /= mass;
        }
    }
}

/// Reusable stepping engine over one kernel matrix.
#[derive(Debug, Clone)]
pub struct GdaStepper<'a, T> {
    matrix: &'a KernelMatrix<T>,
    x: Side<T>,
    y: Side<T>,
}

impl<'a, T: Scalar> GdaStepper<'a, T> {
    pub fn new(matrix: &'a KernelMatrix<T>) -> Self {
        Self {
            matrix,
            x: Side::new(*matrix.x_grid()),
            y: Side::new(*matrix.y_grid()),
        }
    }

    /// Advances `state` by `dt`, refusing steps beyond the stability bound
    /// evaluated on the current potentials.
    pub fn step(&mut self, state: &mut GdaState<T>, tau: T, eta: T, dt: T) -> Result<()> {
        self.matrix.x_grid().check_same(state.mu.grid())?;
        self.matrix.y_grid().check_same(state.nu.grid())?;
        if !(dt > T::zero()) {
            return Err(invalid(format!("time step must be positive, got {dt}")));
        }
        self.matrix.potential_x_into(state.nu.density(), &mut self.x.potential);
        self.matrix.potential_y_into(state.mu.density(), &mut self.y.potential);
        let grad = self.x.max_face_gradient().max(self.y.max_face_gradient());
        let (h, dim) = grid_scale(self.matrix);
        let bound = dt_max(h, dim, tau, eta, grad);
        if dt > bound {
            return Err(Error::StabilityViolation {
                dt: dt.to_f64_lossy(),
                dt_max: bound.to_f64_lossy(),
            });
        }
        self.x.advance(state.mu.density(), T::one(), tau, T::one(), dt);
        self.y.advance(state.nu.density(), -T::one(), tau, eta, dt);
        state.mu.density_mut().copy_from_slice(&self.x.out);
        state.nu.density_mut().copy_from_slice(&self.y.out);
        state.t += dt;
        Ok(())
    }
}

/// Single step; allocates its own workspace.
pub fn gda_step<T: Scalar>(
    state: &GdaState<T>,
    matrix: &KernelMatrix<T>,
    tau: T,
    eta: T,
    dt: T,
) -> Result<GdaState<T>> {
    let mut next = state.clone();
    GdaStepper::new(matrix).step(&mut next, tau, eta, dt)?;
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    FastAscent,
    FastDescent,
    Custom,
}

/// Constants entering the fixed-temperature convergence statements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub tau: f64,
    pub gamma: f64,
    pub lambda0: f64,
    pub lambda_ls: f64,
    pub kappa: f64,
    pub diam_x: f64,
    pub diam_y: f64,
    pub eta_fast_ascent: f64,
    pub eta_fast_descent: f64,
    /// `λ_LS((1−γ)/2 ∧ κ²Diam(𝒴)²(1+3γ)/γ)`
    pub alpha1: f64,
}

impl TheoryConstants {
    pub fn new<T: Scalar>(
        matrix: &KernelMatrix<T>,
        tau: T,
        gamma: T,
        lambda0: Option<T>,
    ) -> Result<Self> {
        if !(gamma > T::zero() && gamma < T::one()) {
            return Err(invalid(format!("γ must lie in (0, 1), got {gamma}")));
        }
        if !(tau > T::zero()) {
            return Err(invalid("temperature must be positive"));
        }
        let f = |v: T| v.to_f64_lossy();
        let lambda0 = lambda0.unwrap_or_else(|| default_lambda0(matrix.x_grid(), matrix.y_grid()));
        let bounds = matrix.bounds();
        let lambda = lsi_lower_bound(&bounds, tau, lambda0);
        let kappa = condition_kappa(&bounds, tau, lambda);
        let (dx, dy) = (matrix.x_grid().diameter(), matrix.y_grid().diameter());
        let one = T::one();
        let three = T::lit(3.0);
        let k2 = kappa * kappa;
        let eta_fa = T::two() * lambda * k2 * dy * dy / gamma;
        let eta_fd = gamma / (T::two() * lambda * k2 * dx * dx * (one + three * gamma));
        let alpha1 =
            lambda * ((one - gamma) / T::two()).min(k2 * dy * dy * (one + three * gamma) / gamma);
        Ok(Self {
            tau: f(tau),
            gamma: f(gamma),
            lambda0: f(lambda0),
            lambda_ls: f(lambda),
            kappa: f(kappa),
            diam_x: f(dx),
            diam_y: f(dy),
            eta_fast_ascent: f(eta_fa),
            eta_fast_descent: f(eta_fd),
            alpha1: f(alpha1),
        })
    }

    /// `(λ_LS/2)(1 ∧ η(1−γ))`
    pub fn alpha2(&self, eta: f64) -> f64 {
        0.5 * self.lambda_ls * (1.0f64).min(eta * (1.0 - self.gamma))
    }

    pub fn eta_for(&self, regime: Regime, custom: Option<f64>) -> Result<f64> {
        match regime {
            Regime::FastAscent => Ok(self.eta_fast_ascent),
            Regime::FastDescent => Ok(self.eta_fast_descent),
            Regime::Custom => custom
                .filter(|e| *e > 0.0)
                .ok_or_else(|| invalid("custom regime needs a positive eta")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    pub t_end: f64,
    /// Fixed step; `None` uses the a-priori stability bound.
    pub dt: Option<f64>,
    pub record_every: usize,
    pub gamma: f64,
    pub fixed_point: FixedPointOptions,
    /// Keep the state at every record.
    pub keep_states: bool,
    /// Probe the time derivatives of the four gaps at every record.
    pub check_derivatives: bool,
    /// Warn when adaptive steps fall below this.
    pub dt_floor: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            dt: None,
            record_every: 100,
            gamma: 0.5,
            fixed_point: FixedPointOptions::default(),
            keep_states: false,
            check_derivatives: false,
            dt_floor: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub step: usize,
    pub state: GdaState<T>,
}

/// Finite-difference time derivative of one gap against its bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeCheck {
    pub t: f64,
    /// 1..=4
    pub which: u8,
    pub estimate: f64,
    pub bound: f64,
    pub tolerance: f64,
}

impl DerivativeCheck {
    pub fn holds(&self) -> bool {
        self.estimate <= self.bound + self.tolerance
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput<T> {
    pub records: Vec<DiagnosticsRecord>,
    pub checkpoints: Vec<Checkpoint<T>>,
    pub derivative_checks: Vec<DerivativeCheck>,
    pub cross_bounds: Vec<InequalityRow>,
    pub final_state: GdaState<T>,
    pub final_mne: MnePair<T>,
    pub steps: usize,
    pub dt_min: f64,
    pub dt_max: f64,
}

struct Recorder<'a, T: Scalar> {
    matrix: &'a KernelMatrix<T>,
    opts: &'a RunOptions,
    mne: Option<MnePair<T>>,
    out: RunOutput<T>,
}

impl<'a, T: Scalar> Recorder<'a, T> {
    fn mne_at(&mut self, tau: T) -> Result<MnePair<T>> {
        let ctx = BestResponseContext::new(self.matrix, tau)?;
        let pair = match self.mne.take() {
            Some(prev) if prev.tau == tau => prev,
            Some(prev) => fixed_point_mne_from(&ctx, &self.opts.fixed_point, prev.mu_star, prev.nu_star)?,
            None => fixed_point_mne(&ctx, &self.opts.fixed_point)?,
        };
        let pair = pair.ensure_converged()?;
        self.mne = Some(pair.clone());
        Ok(pair)
    }

    fn record(
        &mut self,
        stepper: &mut GdaStepper<'_, T>,
        state: &GdaState<T>,
        step: usize,
        (tau, eta): (T, T),
        dt: T,
    ) -> Result<()> {
        let gamma = T::lit(self.opts.gamma);
        let mne = self.mne_at(tau)?;
        let ctx = BestResponseContext::new(self.matrix, tau)?;
        let rec = DiagnosticsRecord::evaluate(&ctx, &mne, &state.mu, &state.nu, gamma, state.t, eta)?;
        self.out.records.push(rec);
        self.out
            .cross_bounds
            .push(cross_entropy_bound(&ctx, &mne, &state.mu, &state.nu, state.t)?);
        if self.opts.check_derivatives {
            let before = lyapunov_all(&ctx, &mne, &state.mu, &state.nu, gamma)?;
            let bounds = derivative_bounds(&ctx, &state.mu, &state.nu, eta)?;
            let mut probe = state.clone();
            stepper.step(&mut probe, tau, eta, dt)?;
            let after = lyapunov_all(&ctx, &mne, &probe.mu, &probe.nu, gamma)?;
            let (h, _) = grid_scale(self.matrix);
            let base = (dt + h * h).to_f64_lossy() * 10.0;
            let pairs = [
                (before.l1, after.l1, bounds.dl1),
                (before.l2, after.l2, bounds.dl2),
                (before.l3, after.l3, bounds.dl3),
                (before.l4, after.l4, bounds.dl4),
            ];
            for (k, (a, b, rhs)) in pairs.into_iter().enumerate() {
                let rhs = rhs.to_f64_lossy();
                self.out.derivative_checks.push(DerivativeCheck {
                    t: rec.t,
                    which: k as u8 + 1,
                    estimate: ((b - a) / dt).to_f64_lossy(),
                    bound: rhs,
                    tolerance: base * (1.0 + rhs.abs()),
                });
            }
        }
        if self.opts.keep_states {
            self.out.checkpoints.push(Checkpoint {
                step,
                state: state.clone(),
            });
        }
        Ok(())
    }
}

/// Integrates from `init` to `opts.t_end` under `schedule`.
///
/// While the schedule is frozen the step is uniform, `dt = span/⌈span/dt₀⌉`;
/// afterwards it is recomputed from the current `(τ, η)` each step. Records
/// are taken at step 0, every `record_every` steps and at the final time.
pub fn run<T: Scalar>(
    matrix: &KernelMatrix<T>,
    schedule: &ScaleSchedule<T>,
    init: GdaState<T>,
    opts: &RunOptions,
) -> Result<RunOutput<T>> {
    if !(opts.t_end > 0.0 && opts.t_end.is_finite()) {
        return Err(invalid(format!("final time must be positive, got {}", opts.t_end)));
    }
    if opts.record_every == 0 {
        return Err(invalid("record_every must be at least 1"));
    }
    if !(opts.gamma > 0.0 && opts.gamma < 1.0) {
        return Err(invalid(format!("γ must lie in (0, 1), got {}", opts.gamma)));
    }
    if let Some(dt) = opts.dt {
        if !(dt > 0.0) {
            return Err(invalid(format!("time step must be positive, got {dt}")));
        }
    }
    let t_start = init.t;
    let t_end = T::lit(opts.t_end);
    if !(t_end > t_start) {
        return Err(invalid("final time must exceed the initial time"));
    }
    let frozen_end = schedule.frozen_until().min(t_end);
    let mut stepper = GdaStepper::new(matrix);
    let mut rec = Recorder {
        matrix,
        opts,
        mne: None,
        out: RunOutput {
            records: Vec::new(),
            checkpoints: Vec::new(),
            derivative_checks: Vec::new(),
            cross_bounds: Vec::new(),
            final_state: init.clone(),
            final_mne: MnePair {
                mu_star: init.mu.clone(),
                nu_star: init.nu.clone(),
                tau: T::zero(),
                residual: T::zero(),
                iterations: 0,
                converged: false,
            },
            steps: 0,
            dt_min: f64::INFINITY,
            dt_max: 0.0,
        },
    };
    let mut state = init;
    let mut step = 0usize;
    let note_dt = |out: &mut RunOutput<T>, dt: T| {
        out.dt_min = out.dt_min.min(dt.to_f64_lossy());
        out.dt_max = out.dt_max.max(dt.to_f64_lossy());
    };

    // frozen segment
    if frozen_end > t_start {
        let scales = schedule.at(t_start);
        let dt0 = opts
            .dt
            .map(T::lit)
            .unwrap_or_else(|| dt_apriori(matrix, scales.0, scales.1));
        let span = frozen_end - t_start;
        let n = (span / dt0).ceil().to_usize().unwrap_or(usize::MAX).max(1);
        let dt = span / T::from_usize_lossy(n);
        note_dt(&mut rec.out, dt);
        rec.record(&mut stepper, &state, 0, scales, dt)?;
        for k in 1..=n {
            stepper.step(&mut state, scales.0, scales.1, dt)?;
            state.t = t_start + T::from_usize_lossy(k) * dt;
            step += 1;
            let last = k == n && frozen_end >= t_end;
            if step % opts.record_every == 0 || last {
                rec.record(&mut stepper, &state, step, scales, dt)?;
            }
        }
    } else {
        let scales = schedule.at(state.t);
        let dt = opts.dt.map(T::lit).unwrap_or_else(|| dt_apriori(matrix, scales.0, scales.1));
        rec.record(&mut stepper, &state, 0, scales, dt)?;
    }

    // adaptive segment
    let floor = T::lit(opts.dt_floor);
    let mut warned = false;
    while state.t < t_end {
        let scales = schedule.at(state.t);
        let mut dt = opts
            .dt
            .map(T::lit)
            .unwrap_or_else(|| dt_apriori(matrix, scales.0, scales.1));
        if dt < floor && !warned {
            log::warn!("time step {dt:e} fell below the floor {floor:e} at t = {}", state.t);
            warned = true;
        }
        let remaining = t_end - state.t;
        let last = dt >= remaining;
        if last {
            dt = remaining;
        }
        note_dt(&mut rec.out, dt);
        stepper.step(&mut state, scales.0, scales.1, dt)?;
        if last {
            state.t = t_end;
        }
        step += 1;
        if step % opts.record_every == 0 || last {
            rec.record(&mut stepper, &state, step, schedule.at(state.t), dt)?;
        }
    }

    let mne = rec.mne.take().expect("recorded at least once");
    let mut out = rec.out;
    out.final_state = state;
    out.final_mne = mne;
    out.steps = step;
    Ok(out)
}

/// Fixed `(τ, η)` run.
pub fn run_fixed<T: Scalar>(
    matrix: &KernelMatrix<T>,
    tau: T,
    eta: T,
    init: GdaState<T>,
    opts: &RunOptions,
) -> Result<RunOutput<T>> {
    run(matrix, &ScaleSchedule::fixed(tau, eta)?, init, opts)
}

/// Annealed run; `schedule` must be one of the annealed kinds.
pub fn run_annealed<T: Scalar>(
    matrix: &KernelMatrix<T>,
    schedule: &ScaleSchedule<T>,
    init: GdaState<T>,
    opts: &RunOptions,
) -> Result<RunOutput<T>> {
    if schedule.kind() == ScheduleKind::Fixed {
        return Err(invalid("run_annealed needs an annealed schedule"));
    }
    run(matrix, schedule, init, opts)
}

/// Number of steps the adaptive rule needs from `t_from` to `t_to`, by
/// integrating `1/dt(t)` with a log-spaced midpoint rule.
pub fn estimated_steps<T: Scalar>(
    matrix: &KernelMatrix<T>,
    schedule: &ScaleSchedule<T>,
    t_from: f64,
    t_to: f64,
) -> f64 {
    let (a, b) = (t_from.max(1e-12), t_to);
    if b <= a {
        return 0.0;
    }
    let pieces = 4000;
    let ratio = (b / a).ln() / pieces as f64;
    let mut total = 0.0;
    for k in 0..pieces {
        let lo = a * (ratio * k as f64).exp();
        let hi = a * (ratio * (k + 1) as f64).exp();
        let mid = (lo * hi).sqrt();
        let (tau, eta) = schedule.at(T::lit(mid));
        total += (hi - lo) / dt_apriori(matrix, tau, eta).to_f64_lossy();
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{builtin_kernel, KernelParams};
    use crate::measures::{relative_entropy, total_variation};

    fn matrix(name: &str, params: KernelParams, n: usize) -> KernelMatrix<f64> {
        let k = builtin_kernel::<f64>(name, &params).unwrap();
        let g = TorusGrid::standard(params.dim, n).unwrap();
        KernelMatrix::new(k.as_ref(), g, g).unwrap()
    }

    fn bump(grid: TorusGrid<f64>, center: f64, kappa: f64) -> GridMeasure<f64> {
        GridMeasure::from_fn(grid, |p| (kappa * (p[0] - center).cos()).exp()).unwrap()
    }

    #[test]
    fn uniform_pair_is_stationary_for_cos_diff() {
        let m = matrix("cos_diff", KernelParams::default(), 32);
        let u = GridMeasure::uniform(*m.x_grid());
        let s = GdaState::new(u.clone(), u.clone());
        let next = gda_step(&s, &m, 1.0, 2.0, 1e-3).unwrap();
        assert!(next.mu.max_abs_diff(&u) < 1e-15 && next.nu.max_abs_diff(&u) < 1e-15);
    }

    #[test]
    fn equilibrium_is_a_discrete_fixed_point() {
        let params = KernelParams {
            b: 0.5,
            ..KernelParams::default()
        };
        let m = matrix("separable", params, 64);
        let ctx = BestResponseContext::new(&m, 1.0).unwrap();
        let mne = fixed_point_mne(&ctx, &FixedPointOptions::default()).unwrap();
        let s = GdaState::new(mne.mu_star.clone(), mne.nu_star.clone());
        let dt = dt_apriori(&m, 1.0, 3.0);
        let next = gda_step(&s, &m, 1.0, 3.0, dt).unwrap();
        let h = m.x_grid().cell_width();
        let change = 2.0 * total_variation(&next.mu, &s.mu).unwrap();
        assert!(change <= 5.0 * (h * h + dt), "{change}");
        assert!(change < 1e-9);
    }

    #[test]
    fn heat_flow_under_constant_kernel() {
        let params = KernelParams {
            value: 1.0,
            ..KernelParams::default()
        };
        let m = matrix("constant", params, 64);
        let u = GridMeasure::uniform(*m.x_grid());
        let mut s = GdaState::new(bump(*m.x_grid(), 1.0, 3.0), bump(*m.y_grid(), 4.0, 2.0));
        let mut stepper = GdaStepper::new(&m);
        let dt = dt_apriori(&m, 1.0, 1.0);
        let mut prev = relative_entropy(&s.mu, &u).unwrap();
        for _ in 0..200 {
            stepper.step(&mut s, 1.0, 1.0, dt).unwrap();
            let kl = relative_entropy(&s.mu, &u).unwrap();
            assert!(kl < prev);
            assert!((s.mu.mass() - 1.0).abs() < 1e-14);
            assert!(s.mu.density().iter().all(|v| *v > 0.0));
            prev = kl;
        }
    }

    #[test]
    fn oversized_step_is_refused() {
        let m = matrix("cos_diff", KernelParams::default(), 32);
        let s = GdaState::new(bump(*m.x_grid(), 0.0, 1.0), bump(*m.y_grid(), 1.0, 1.0));
        let dt = 2.0 * dt_apriori(&m, 1.0, 1.0);
        let err = gda_step(&s, &m, 1.0, 1.0, dt).unwrap_err();
        assert!(matches!(err, Error::StabilityViolation { .. }));
    }

    #[test]
    fn schedule_values() {
        let s = ScaleSchedule::annealed(ScheduleKind::AnnealedFastAscent, 1.0, 0.5, 10.0, 2.0f64.exp())
            .unwrap();
        let (tau, _) = s.at(2.0f64.exp());
        assert!((tau - 0.5).abs() < 1e-15);
        assert_eq!(s.at(0.0), s.at(1.0));
        let (tau, eta) = s.at(100.0);
        assert!((tau - 1.0 / 100f64.ln()).abs() < 1e-15);
        assert!((eta - 10.0 * 100f64.powf(0.5) / 100f64.ln().powi(2)).abs() < 1e-12);
        let d = ScaleSchedule::annealed(ScheduleKind::AnnealedFastDescent, 2.0, 0.5, 10.0, 3.0).unwrap();
        assert!((d.at(50.0).1 - 50f64.ln() / 500.0).abs() < 1e-15);
        assert!(ScaleSchedule::annealed(ScheduleKind::AnnealedFastDescent, 1.0, 0.5, 10.0, 3.0).is_err());
        assert!(ScaleSchedule::<f64>::fixed(0.0, 1.0).is_err());
    }

    #[test]
    fn theory_constants_for_cos_diff() {
        let m = matrix("cos_diff", KernelParams::default(), 32);
        let c = TheoryConstants::new(&m, 1.0, 0.5, None).unwrap();
        let lambda = (-2.0f64).exp();
        assert!((c.lambda_ls - lambda).abs() < 1e-15);
        let kappa = 1.0 / lambda;
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((c.eta_fast_ascent - 2.0 * lambda * kappa * kappa * pi2 / 0.5).abs() < 1e-9);
        assert!((c.alpha1 - lambda * 0.25).abs() < 1e-15);
        assert!((c.alpha2(1e-3) - 0.5 * lambda * 0.5e-3).abs() < 1e-15);
    }

    #[test]
    fn frozen_annealed_run_matches_fixed_run() {
        let params = KernelParams {
            b: 0.5,
            ..KernelParams::default()
        };
        let m = matrix("separable", params, 32);
        let sched = ScaleSchedule::annealed(ScheduleKind::AnnealedFastAscent, 9.0, 3.0, 10.0, 50.0).unwrap();
        let (tau, eta) = sched.at(0.0);
        let init = GdaState::new(bump(*m.x_grid(), 2.0, 1.0), bump(*m.y_grid(), 1.0, 1.0));
        let opts = RunOptions {
            t_end: 0.05,
            record_every: 500,
            ..RunOptions::default()
        };
        let a = run_annealed(&m, &sched, init.clone(), &opts).unwrap();
        let b = run_fixed(&m, tau, eta, init, &opts).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.final_state, b.final_state);
        assert_eq!(a.final_state.t, 0.05);
    }

    #[test]
    fn sparse_recording_keeps_endpoints() {
        let m = matrix("cos_diff", KernelParams::default(), 16);
        let init = GdaState::new(bump(*m.x_grid(), 2.0, 1.0), bump(*m.y_grid(), 1.0, 1.0));
        let opts = RunOptions {
            t_end: 0.1,
            record_every: 1_000_000,
            ..RunOptions::default()
        };
        let out = run_fixed(&m, 1.0, 1.0, init, &opts).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.records[0].t, 0.0);
        assert_eq!(out.records[1].t, 0.1);
    }

    #[test]
    fn annealed_run_cools_and_reaches_the_end() {
        let params = KernelParams {
            b: 0.5,
            ..KernelParams::default()
        };
        let m = matrix("separable", params, 16);
        let sched = ScaleSchedule::annealed(ScheduleKind::AnnealedFastDescent, 7.0, 3.0, 10.0, 8.0).unwrap();
        let init = GdaState::new(bump(*m.x_grid(), 2.0, 1.0), bump(*m.y_grid(), 1.0, 1.0));
        let opts = RunOptions {
            t_end: 12.0,
            record_every: 200,
            ..RunOptions::default()
        };
        let out = run_annealed(&m, &sched, init, &opts).unwrap();
        let first = out.records.first().unwrap();
        let last = out.records.last().unwrap();
        assert_eq!(last.t, 12.0);
        assert!(last.tau < first.tau);
        assert!((last.tau - 7.0 / 12f64.ln()).abs() < 1e-12);
        let est = estimated_steps(&m, &sched, 0.0, 12.0);
        let actual = out.steps as f64;
        assert!((est - actual).abs() < 0.01 * actual + 2.0, "{est} vs {actual}");
    }
}
