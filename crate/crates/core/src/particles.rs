//! Interacting particle approximation of the GDA system (Euler–Maruyama).
//!
//! Noise is counter based: particle `i` owns ChaCha stream `keys[i]` and step
//! `s` reads that stream from word `s · STEP_WORDS`, so trajectories do not
//! depend on how the particle loop is scheduled across threads.

use crate::dynamics::{dt_apriori, GdaState, GdaStepper, ScaleSchedule};
use crate::error::{invalid, Error, Result};
use crate::games::GameKernel;
use crate::measures::{
    relative_entropy, total_variation, wrap_coordinate, GridMeasure, TorusGrid,
};
use crate::scalar::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Words of the per-particle stream reserved for one step.
const STEP_WORDS: u128 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScaling {
    /// `√(2τη dt)` on the ascent player: the whole ascent generator runs on clock `ηt`.
    #[default]
    Generator,
    /// `√(2τ dt)` on both players, with `η` on the ascent drift only.
    Literal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble<T> {
    /// Flattened `N × dim_x`.
    pub xs: Vec<T>,
    /// Flattened `N × dim_y`.
    pub ys: Vec<T>,
    /// Noise-stream key of each particle.
    pub keys: Vec<u64>,
    pub dim_x: usize,
    pub dim_y: usize,
    pub period_x: T,
    pub period_y: T,
    pub seed: u64,
    pub t: T,
    /// Steps taken; step 0 is the initial draw.
    pub step: u64,
}

fn stream<T>(seed: u64, key: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(key);
    rng.set_word_pos(step as u128 * STEP_WORDS);
    rng
}

/// Inverse CDF over node-centred cells: cell `i` covers `[x_i − h/2, x_i + h/2)`
/// and carries the piecewise-constant density.
fn inverse_cdf<T: Scalar>(weights: &[T], h: T, u: T) -> T {
    let total = weights.iter().fold(T::zero(), |a, &w| a + w);
    let target = u * total;
    let mut acc = T::zero();
    for (i, &w) in weights.iter().enumerate() {
        if w > T::zero() && (acc + w > target || i + 1 == weights.len()) {
            let frac = ((target - acc) / w).max(T::zero()).min(T::one());
            return (T::from_usize_lossy(i) - T::half() + frac) * h;
        }
        acc += w;
    }
    // all remaining mass was zero: last positive cell
    let last = weights.iter().rposition(|w| *w > T::zero()).unwrap_or(0);
    (T::from_usize_lossy(last) + T::half()) * h
}

/// Draws one point from a grid density with per-axis conditional inverse CDFs.
fn sample_point<T: Scalar>(m: &GridMeasure<T>, rng: &mut ChaCha8Rng, out: &mut [T]) {
    let g = m.grid();
    let n = g.points_per_axis();
    let h = g.cell_width();
    let l = g.circumference();
    let rho = m.density();
    if g.dim() == 1 {
        let u = T::lit(rng.random::<f64>());
        out[0] = wrap_coordinate(inverse_cdf(rho, h, u), l);
        return;
    }
    let marginal: Vec<T> = (0..n)
        .map(|i| rho[i * n..(i + 1) * n].iter().fold(T::zero(), |a, &w| a + w))
        .collect();
    let u0 = T::lit(rng.random::<f64>());
    let u1 = T::lit(rng.random::<f64>());
    let x0 = inverse_cdf(&marginal, h, u0);
    let row = ((x0 / h + T::half()).floor().to_usize().unwrap_or(0)).min(n - 1);
    let x1 = inverse_cdf(&rho[row * n..(row + 1) * n], h, u1);
    out[0] = wrap_coordinate(x0, l);
    out[1] = wrap_coordinate(x1, l);
}

/// `n` i.i.d. pairs from `(mu0, nu0)`, deterministic given `seed`.
pub fn init_ensemble<T: Scalar>(
    n: usize,
    mu0: &GridMeasure<T>,
    nu0: &GridMeasure<T>,
    seed: u64,
) -> Result<ParticleEnsemble<T>> {
    if n == 0 {
        return Err(invalid("ensemble needs at least one particle"));
    }
    let (dx, dy) = (mu0.grid().dim(), nu0.grid().dim());
    let mut xs = vec![T::zero(); n * dx];
    let mut ys = vec![T::zero(); n * dy];
    xs.par_chunks_mut(dx)
        .zip(ys.par_chunks_mut(dy))
        .enumerate()
        .for_each(|(i, (x, y))| {
            let mut rng = stream::<T>(seed, i as u64, 0);
            sample_point(mu0, &mut rng, x);
            sample_point(nu0, &mut rng, y);
        });
    Ok(ParticleEnsemble {
        xs,
        ys,
        keys: (0..n as u64).collect(),
        dim_x: dx,
        dim_y: dy,
        period_x: mu0.grid().circumference(),
        period_y: nu0.grid().circumference(),
        seed,
        t: T::zero(),
        step: 0,
    })
}

impl<T: Scalar> ParticleEnsemble<T> {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Reorders particles (and their noise keys) so that new index `i` holds
    /// old particle `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.len();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(invalid("not a permutation of the particle indices"));
        }
        let mut out = self.clone();
        for (i, &p) in perm.iter().enumerate() {
            out.xs[i * self.dim_x..(i + 1) * self.dim_x]
                .copy_from_slice(&self.xs[p * self.dim_x..(p + 1) * self.dim_x]);
            out.ys[i * self.dim_y..(i + 1) * self.dim_y]
                .copy_from_slice(&self.ys[p * self.dim_y..(p + 1) * self.dim_y]);
            out.keys[i] = self.keys[p];
        }
        Ok(out)
    }

    /// CSV with columns `index, x0[, x1], y0[, y1]`.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let mut header = vec!["index".to_string()];
        header.extend((0..self.dim_x).map(|k| format!("x{k}")));
        header.extend((0..self.dim_y).map(|k| format!("y{k}")));
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut row = vec![i.to_string()];
            row.extend(self.xs[i * self.dim_x..(i + 1) * self.dim_x].iter().map(|v| format!("{v:e}")));
            row.extend(self.ys[i * self.dim_y..(i + 1) * self.dim_y].iter().map(|v| format!("{v:e}")));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// One Euler–Maruyama step:
/// `X ← X − (1/N)Σⱼ∇ₓK(X, Yʲ)dt + √(2τdt)ζ`,
/// `Y ← Y + η(1/N)Σⱼ∇ᵧK(Xʲ, Y)dt + σ_y ζ′` with `σ_y` from `noise`.
pub fn particle_step<T: Scalar, K: GameKernel<T> + ?Sized>(
    ens: &mut ParticleEnsemble<T>,
    kernel: &K,
    tau: T,
    eta: T,
    dt: T,
    noise: NoiseScaling,
) -> Result<()> {
    if kernel.dim_x() != ens.dim_x || kernel.dim_y() != ens.dim_y {
        return Err(Error::GridMismatch("kernel and ensemble dimensions differ".into()));
    }
    if !(dt > T::zero()) || tau < T::zero() || eta < T::zero() {
        return Err(invalid("particle step needs dt > 0, τ ≥ 0, η ≥ 0"));
    }
    let (dx, dy) = (ens.dim_x, ens.dim_y);
    let mut drift_x = vec![T::zero(); ens.xs.len()];
    let mut drift_y = vec![T::zero(); ens.ys.len()];
    kernel.mean_field_drift(&ens.xs, &ens.ys, &mut drift_x, &mut drift_y);
    let two = T::two();
    let sx = (two * tau * dt).sqrt();
    let sy = match noise {
        NoiseScaling::Generator => (two * tau * eta * dt).sqrt(),
        NoiseScaling::Literal => sx,
    };
    let step = ens.step + 1;
    let (seed, lx, ly) = (ens.seed, ens.period_x, ens.period_y);
    let keys = &ens.keys;
    ens.xs
        .par_chunks_mut(dx)
        .zip(ens.ys.par_chunks_mut(dy))
        .zip(drift_x.par_chunks(dx).zip(drift_y.par_chunks(dy)))
        .enumerate()
        .for_each(|(i, ((x, y), (gx, gy)))| {
            let mut rng = stream::<T>(seed, keys[i], step);
            for k in 0..dx {
                let z: f64 = rng.sample(StandardNormal);
                x[k] = wrap_coordinate(x[k] - gx[k] * dt + sx * T::lit(z), lx);
            }
            for k in 0..dy {
                let z: f64 = rng.sample(StandardNormal);
                y[k] = wrap_coordinate(y[k] + eta * gy[k] * dt + sy * T::lit(z), ly);
            }
        });
    ens.step = step;
    ens.t += dt;
    Ok(())
}

/// Per-axis Silverman bandwidth `1.06 σ̂ N^{−1/5}` with the circular standard
/// deviation `σ̂ = (L/2π)√(−2 ln R̄)`, capped at `L`.
pub fn silverman_bandwidth<T: Scalar>(coords: &[T], dim: usize, period: T) -> Vec<T> {
    let n = coords.len() / dim;
    let w = T::TAU() / period;
    let inv_n = T::one() / T::from_usize_lossy(n);
    (0..dim)
        .map(|k| {
            let (mut c, mut s) = (T::zero(), T::zero());
            for i in 0..n {
                let a = coords[i * dim + k] * w;
                c += a.cos();
                s += a.sin();
            }
            let r = ((c * inv_n).powi(2) + (s * inv_n).powi(2)).sqrt();
            let sigma = if r > T::zero() {
                (-T::two() * r.ln()).max(T::zero()).sqrt() / w
            } else {
                T::infinity()
            };
            let bw = T::lit(1.06) * sigma * T::from_usize_lossy(n).powf(T::lit(-0.2));
            if bw.is_finite() {
                bw.min(period).max(T::lit(1e-12) * period)
            } else {
                period
            }
        })
        .collect()
}

/// Wrapped-Gaussian kernel density estimate at the grid nodes, truncated at
/// five bandwidths per axis and normalized.
pub fn empirical_density<T: Scalar>(
    coords: &[T],
    grid: &TorusGrid<T>,
    bandwidth: &[T],
) -> Result<GridMeasure<T>> {
    let dim = grid.dim();
    if bandwidth.len() != dim || bandwidth.iter().any(|b| !(*b > T::zero())) {
        return Err(invalid("need one positive bandwidth per axis"));
    }
    if coords.is_empty() || coords.len() % dim != 0 {
        return Err(invalid("coordinate array does not match the grid dimension"));
    }
    let n = grid.points_per_axis();
    let h = grid.cell_width();
    let ni = n as isize;
    let mut weights = vec![T::zero(); grid.len()];
    // per-axis (node, weight) lists for one particle
    let mut taps: Vec<Vec<(usize, T)>> = vec![Vec::new(); dim];
    for p in coords.chunks(dim) {
        for k in 0..dim {
            let bw = bandwidth[k];
            let reach = T::lit(5.0) * bw;
            let lo = ((p[k] - reach) / h).ceil().to_isize().unwrap_or(0);
            let hi = ((p[k] + reach) / h).floor().to_isize().unwrap_or(0);
            let inv = T::one() / (T::two() * bw * bw);
            taps[k].clear();
            for j in lo..=hi {
                let d = T::from_isize(j).unwrap_or_else(T::zero) * h - p[k];
                taps[k].push((j.rem_euclid(ni) as usize, (-d * d * inv).exp()));
            }
        }
        if dim == 1 {
            for &(j, w) in &taps[0] {
                weights[j] += w;
            }
        } else {
            for &(a, wa) in &taps[0] {
                for &(b, wb) in &taps[1] {
                    weights[a * n + b] += wa * wb;
                }
            }
        }
    }
    GridMeasure::from_weights(*grid, weights)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParticleOptions {
    pub t_end: f64,
    pub dt: f64,
    pub record_every: usize,
    /// Fixed KDE bandwidth; `None` uses Silverman's rule at each record.
    pub bandwidth: Option<f64>,
    pub noise: NoiseScaling,
    /// Integrate the mean-field PDE alongside and compare at each record.
    pub paired_pde: bool,
    pub keep_ensembles: bool,
}

impl Default for ParticleOptions {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            dt: 1e-3,
            record_every: 100,
            bandwidth: None,
            noise: NoiseScaling::Generator,
            paired_pde: true,
            keep_ensembles: false,
        }
    }
}

/// Comparison of the smoothed ensemble with the PDE solution at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleRecord {
    pub t: f64,
    pub tau: f64,
    pub eta: f64,
    pub kl_mu_pde: f64,
    pub kl_nu_pde: f64,
    pub tv_mu_pde: f64,
    pub tv_nu_pde: f64,
}

pub const PARTICLE_HEADER: &str = "t,tau,eta,KL_mu_pde,KL_nu_pde,TV_mu_pde,TV_nu_pde";

pub fn write_particle_csv(records: &[ParticleRecord], mut out: impl Write) -> Result<()> {
    writeln!(out, "{PARTICLE_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.t, r.tau, r.eta, r.kl_mu_pde, r.kl_nu_pde, r.tv_mu_pde, r.tv_nu_pde
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ParticleRun<T> {
    pub records: Vec<ParticleRecord>,
    pub ensembles: Vec<ParticleEnsemble<T>>,
    pub final_ensemble: ParticleEnsemble<T>,
    pub final_pde: Option<GdaState<T>>,
}

/// Particle run from `ens` on `schedule`; with `paired_pde` the PDE starts from
/// `(mu0, nu0)` and is advanced with its own stable steps to every record time.
#[allow(clippy::too_many_arguments)]
pub fn run_particles<T: Scalar, K: GameKernel<T> + ?Sized>(
    kernel: &K,
    pde: Option<&crate::games::KernelMatrix<T>>,
    schedule: &ScaleSchedule<T>,
    mut ens: ParticleEnsemble<T>,
    mu0: &GridMeasure<T>,
    nu0: &GridMeasure<T>,
    opts: &ParticleOptions,
) -> Result<ParticleRun<T>> {
    if !(opts.t_end > 0.0 && opts.dt > 0.0) {
        return Err(invalid("particle run needs t_end > 0 and dt > 0"));
    }
    if opts.record_every == 0 {
        return Err(invalid("record_every must be at least 1"));
    }
    let steps = (opts.t_end / opts.dt).ceil().max(1.0) as usize;
    let dt = T::lit(opts.t_end) / T::from_usize_lossy(steps);
    let paired = match (opts.paired_pde, pde) {
        (true, Some(m)) => Some(m),
        (true, None) => return Err(invalid("paired PDE comparison needs a kernel matrix")),
        _ => None,
    };
    let mut pde_state = paired.map(|_| GdaState::new(mu0.clone(), nu0.clone()));
    let mut stepper = paired.map(GdaStepper::new);
    let mut out = ParticleRun {
        records: Vec::new(),
        ensembles: Vec::new(),
        final_ensemble: ens.clone(),
        final_pde: None,
    };

    let record = |ens: &ParticleEnsemble<T>,
                      pde_state: &mut Option<GdaState<T>>,
                      stepper: &mut Option<GdaStepper<'_, T>>,
                      out: &mut ParticleRun<T>|
     -> Result<()> {
        let (tau, eta) = schedule.at(ens.t);
        let mut rec = ParticleRecord {
            t: ens.t.to_f64_lossy(),
            tau: tau.to_f64_lossy(),
            eta: eta.to_f64_lossy(),
            kl_mu_pde: f64::NAN,
            kl_nu_pde: f64::NAN,
            tv_mu_pde: f64::NAN,
            tv_nu_pde: f64::NAN,
        };
        if let (Some(state), Some(st), Some(m)) = (pde_state.as_mut(), stepper.as_mut(), paired) {
            advance_pde(st, m, schedule, state, ens.t)?;
            let bw = |c: &[T], d, l, fixed: Option<f64>| match fixed {
                Some(b) => vec![T::lit(b); d],
                None => silverman_bandwidth(c, d, l),
            };
            let kde_mu = empirical_density(
                &ens.xs,
                m.x_grid(),
                &bw(&ens.xs, ens.dim_x, ens.period_x, opts.bandwidth),
            )?;
            let kde_nu = empirical_density(
                &ens.ys,
                m.y_grid(),
                &bw(&ens.ys, ens.dim_y, ens.period_y, opts.bandwidth),
            )?;
            rec.kl_mu_pde = relative_entropy(&kde_mu, &state.mu)?.to_f64_lossy();
            rec.kl_nu_pde = relative_entropy(&kde_nu, &state.nu)?.to_f64_lossy();
            rec.tv_mu_pde = total_variation(&kde_mu, &state.mu)?.to_f64_lossy();
            rec.tv_nu_pde = total_variation(&kde_nu, &state.nu)?.to_f64_lossy();
        }
        out.records.push(rec);
        if opts.keep_ensembles {
            out.ensembles.push(ens.clone());
        }
        Ok(())
    };

    let t_start = ens.t;
    record(&ens, &mut pde_state, &mut stepper, &mut out)?;
    for k in 1..=steps {
        let (tau, eta) = schedule.at(ens.t);
        particle_step(&mut ens, kernel, tau, eta, dt, opts.noise)?;
        ens.t = t_start + T::from_usize_lossy(k) * dt;
        if k % opts.record_every == 0 || k == steps {
            record(&ens, &mut pde_state, &mut stepper, &mut out)?;
        }
    }
    out.final_ensemble = ens;
    out.final_pde = pde_state;
    Ok(out)
}

fn advance_pde<T: Scalar>(
    stepper: &mut GdaStepper<'_, T>,
    matrix: &crate::games::KernelMatrix<T>,
    schedule: &ScaleSchedule<T>,
    state: &mut GdaState<T>,
    target: T,
) -> Result<()> {
    while state.t < target {
        let (tau, eta) = schedule.at(state.t);
        let remaining = target - state.t;
        let dt0 = dt_apriori(matrix, tau, eta);
        let n = (remaining / dt0).ceil().to_usize().unwrap_or(1).max(1);
        let dt = remaining / T::from_usize_lossy(n);
        stepper.step(state, tau, eta, dt)?;
        if n == 1 {
            state.t = target;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{builtin_kernel, KernelParams};

    #[test]
    fn inverse_cdf_of_uniform_is_linear() {
        let w = vec![1.0f64; 8];
        let h = 0.5;
        for u in [0.0, 0.1, 0.5, 0.93] {
            let x = inverse_cdf(&w, h, u);
            assert!((x - (u * 4.0 - 0.25)).abs() < 1e-14);
        }
    }

    #[test]
    fn single_particle_from_point_mass() {
        let g = TorusGrid::<f64>::standard(1, 16).unwrap();
        let mut w = vec![0.0; 16];
        w[5] = 1.0;
        let m = GridMeasure::from_weights(g, w).unwrap();
        let e = init_ensemble(1, &m, &m, 3).unwrap();
        let h = g.cell_width();
        assert!((e.xs[0] - 5.0 * h).abs() <= h / 2.0 + 1e-12);
    }

    #[test]
    fn frozen_particles_without_drift_or_noise() {
        let k = builtin_kernel::<f64>("cos_diff", &KernelParams::default()).unwrap();
        let g = TorusGrid::standard(1, 16).unwrap();
        let u = GridMeasure::uniform(g);
        let mut e = init_ensemble(2, &u, &u, 0).unwrap();
        // x at 0 and π, y at the same points: every pairwise drift cancels
        e.xs = vec![0.0, std::f64::consts::PI];
        e.ys = vec![0.0, std::f64::consts::PI];
        let before = e.clone();
        particle_step(&mut e, k.as_ref(), 0.0, 1.0, 0.1, NoiseScaling::Generator).unwrap();
        assert!(e.xs.iter().zip(&before.xs).all(|(a, b)| (a - b).abs() < 1e-15));
        assert!(e.ys.iter().zip(&before.ys).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn kde_of_single_particle_peaks_at_its_node() {
        let g = TorusGrid::<f64>::standard(1, 32).unwrap();
        let d = empirical_density(&[0.0], &g, &[0.05]).unwrap();
        let peak = d.density().iter().cloned().fold(0.0, f64::max);
        assert_eq!(d.density()[0], peak);
        assert!((d.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn silverman_caps_uniform_spread() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64 * std::f64::consts::TAU / 100.0).collect();
        let bw = silverman_bandwidth(&xs, 1, std::f64::consts::TAU);
        assert!(bw[0] > 3.0 && bw[0] <= std::f64::consts::TAU);
        let tight = vec![1.0; 50];
        assert!(silverman_bandwidth(&tight, 1, std::f64::consts::TAU)[0] <= 1e-6);
    }
}
