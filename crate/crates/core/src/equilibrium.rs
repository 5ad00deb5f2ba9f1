//! Gibbs best responses, log-partition functions and the entropic MNE.

use crate::error::{invalid, Error, Result};
use crate::games::{KernelBounds, KernelMatrix};
use crate::measures::{total_variation, GridMeasure, TorusGrid};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// A tabulated kernel together with the temperature `τ`.
#[derive(Debug, Clone, Copy)]
pub struct BestResponseContext<'a, T> {
    matrix: &'a KernelMatrix<T>,
    tau: T,
}

impl<'a, T: Scalar> BestResponseContext<'a, T> {
    pub fn new(matrix: &'a KernelMatrix<T>, tau: T) -> Result<Self> {
        if !(tau > T::zero() && tau.is_finite()) {
            return Err(invalid(format!("temperature must be positive, got {tau}")));
        }
        Ok(Self { matrix, tau })
    }

    pub fn matrix(&self) -> &'a KernelMatrix<T> {
        self.matrix
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    /// Same kernel at another temperature.
    pub fn with_tau(&self, tau: T) -> Result<Self> {
        Self::new(self.matrix, tau)
    }

    /// `𝒦⁺μ ∝ exp(τ⁻¹ ∫ K(x, ·) dμ(x))` on the y torus, with `log Z⁺(μ)`.
    pub fn k_plus_with_log_partition(&self, mu: &GridMeasure<T>) -> Result<(GridMeasure<T>, T)> {
        let v = self.matrix.potential_y(mu)?;
        GridMeasure::gibbs_with_log_partition(*self.matrix.y_grid(), &v, T::one(), self.tau)
    }

    /// `𝒦⁻ν ∝ exp(−τ⁻¹ ∫ K(·, y) dν(y))` on the x torus, with `log Z⁻(ν)`.
    pub fn k_minus_with_log_partition(&self, nu: &GridMeasure<T>) -> Result<(GridMeasure<T>, T)> {
        let v = self.matrix.potential_x(nu)?;
        GridMeasure::gibbs_with_log_partition(*self.matrix.x_grid(), &v, -T::one(), self.tau)
    }

    pub fn k_plus(&self, mu: &GridMeasure<T>) -> Result<GridMeasure<T>> {
        self.k_plus_with_log_partition(mu).map(|(m, _)| m)
    }

    pub fn k_minus(&self, nu: &GridMeasure<T>) -> Result<GridMeasure<T>> {
        self.k_minus_with_log_partition(nu).map(|(m, _)| m)
    }

    pub fn log_partition_plus(&self, mu: &GridMeasure<T>) -> Result<T> {
        self.k_plus_with_log_partition(mu).map(|(_, z)| z)
    }

    pub fn log_partition_minus(&self, nu: &GridMeasure<T>) -> Result<T> {
        self.k_minus_with_log_partition(nu).map(|(_, z)| z)
    }

    /// Largest TV distance between each strategy and the best response to the other.
    pub fn fixed_point_residual(&self, mu: &GridMeasure<T>, nu: &GridMeasure<T>) -> Result<T> {
        let r_mu = total_variation(mu, &self.k_minus(nu)?)?;
        let r_nu = total_variation(nu, &self.k_plus(mu)?)?;
        Ok(r_mu.max(r_nu))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedPointOptions {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

impl FixedPointOptions {
    fn check(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(invalid(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if !(self.tol > 0.0) {
            return Err(invalid("tolerance must be positive"));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter must be at least 1"));
        }
        Ok(())
    }
}

/// Solution of the Gibbs fixed-point equations at temperature `tau`.
///
/// When `converged` is false the pair is the best iterate seen.
#[derive(Debug, Clone, PartialEq)]
pub struct MnePair<T> {
    pub mu_star: GridMeasure<T>,
    pub nu_star: GridMeasure<T>,
    pub tau: T,
    pub residual: T,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MneSummary {
    pub tau: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl<T: Scalar> MnePair<T> {
    /// Turns a non-converged result into [`Error::NonConvergence`].
    pub fn ensure_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NonConvergence {
                iterations: self.iterations,
                residual: self.residual.to_f64_lossy(),
            })
        }
    }

    pub fn summary(&self) -> MneSummary {
        MneSummary {
            tau: self.tau.to_f64_lossy(),
            residual: self.residual.to_f64_lossy(),
            iterations: self.iterations,
            converged: self.converged,
        }
    }

    /// Writes `mu_star.csv`, `nu_star.csv` and `mne.json` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.mu_star.save(dir.join("mu_star.csv"))?;
        self.nu_star.save(dir.join("nu_star.csv"))?;
        let json = serde_json::to_string_pretty(&self.summary())?;
        std::fs::write(dir.join("mne.json"), json + "\n")?;
        Ok(())
    }
}

/// Damped alternating best response from the uniform pair.
pub fn fixed_point_mne<T: Scalar>(
    ctx: &BestResponseContext<'_, T>,
    opts: &FixedPointOptions,
) -> Result<MnePair<T>> {
    let mu0 = GridMeasure::uniform(*ctx.matrix.x_grid());
    let nu0 = GridMeasure::uniform(*ctx.matrix.y_grid());
    fixed_point_mne_from(ctx, opts, mu0, nu0)
}

/// As [`fixed_point_mne`], warm-started from `(mu, nu)`.
///
/// Each sweep checks the residual first, then updates
/// `ν ← (1−θ)ν + θ𝒦⁺μ` followed by `μ ← (1−θ)μ + θ𝒦⁻ν`.
pub fn fixed_point_mne_from<T: Scalar>(
    ctx: &BestResponseContext<'_, T>,
    opts: &FixedPointOptions,
    mut mu: GridMeasure<T>,
    mut nu: GridMeasure<T>,
) -> Result<MnePair<T>> {
    opts.check()?;
    ctx.matrix.x_grid().check_same(mu.grid())?;
    ctx.matrix.y_grid().check_same(nu.grid())?;
    let theta = T::lit(opts.damping);
    let tol = T::lit(opts.tol);
    let mut best: Option<(T, GridMeasure<T>, GridMeasure<T>, usize)> = None;
    for iter in 0..=opts.max_iter {
        let kp = ctx.k_plus(&mu)?;
        let km = ctx.k_minus(&nu)?;
        let residual = total_variation(&mu, &km)?.max(total_variation(&nu, &kp)?);
        if !residual.is_finite() {
            return Err(invalid("fixed-point iteration produced a non-finite residual"));
        }
        if residual < tol {
            return Ok(MnePair {
                mu_star: mu,
                nu_star: nu,
                tau: ctx.tau,
                residual,
                iterations: iter,
                converged: true,
            });
        }
        if best.as_ref().is_none_or(|b| residual < b.0) {
            best = Some((residual, mu.clone(), nu.clone(), iter));
        }
        if iter == opts.max_iter {
            break;
        }
        nu = nu.mix(&kp, theta)?;
        mu = mu.mix(&ctx.k_minus(&nu)?, theta)?;
    }
    let (residual, mu_star, nu_star, _) = best.expect("at least one sweep");
    log::warn!(
        "fixed point not converged after {} iterations, best residual {residual:e}",
        opts.max_iter
    );
    Ok(MnePair {
        mu_star,
        nu_star,
        tau: ctx.tau,
        residual,
        iterations: opts.max_iter,
        converged: false,
    })
}

/// Base LSI constant of the uniform measure on a torus of circumference `L`.
pub fn default_lambda0<T: Scalar>(x_grid: &TorusGrid<T>, y_grid: &TorusGrid<T>) -> T {
    let base = |l: T| {
        let w = T::TAU() / l;
        w * w
    };
    base(x_grid.circumference()).min(base(y_grid.circumference()))
}

/// Holley–Stroock lower bound `λ₀ · exp(−2‖K‖∞/τ)`.
pub fn lsi_lower_bound<T: Scalar>(bounds: &KernelBounds<T>, tau: T, lambda0: T) -> T {
    lambda0 * (-T::two() * bounds.sup_norm / tau).exp()
}

/// Effective condition number `κ = K_xy / (τ λ_LS)`.
pub fn condition_kappa<T: Scalar>(bounds: &KernelBounds<T>, tau: T, lambda_ls: T) -> T {
    bounds.kxy / (tau * lambda_ls)
}

/// Normalized volume of a geodesic ball of radius `delta` on a flat torus.
pub fn ball_volume_fraction<T: Scalar>(grid: &TorusGrid<T>, delta: T) -> T {
    let l = grid.circumference();
    let interval = (T::two() * delta).min(l) / l;
    match grid.dim() {
        1 => interval,
        _ if T::two() * delta <= l => T::PI() * delta * delta / (l * l),
        // large radius: the product of interval balls still lower-bounds it
        _ => interval * interval,
    }
}

/// Largest `τ` for which the entropic MNE is an `ε`-Nash equilibrium of the
/// unregularized game, from the Laplace-type bound with exact ball volumes.
pub fn epsilon_nash_tau<T: Scalar>(
    epsilon: T,
    bounds: &KernelBounds<T>,
    x_grid: &TorusGrid<T>,
    y_grid: &TorusGrid<T>,
) -> Result<T> {
    let four_k = T::lit(4.0) * bounds.sup_norm;
    if !(epsilon > T::zero() && epsilon < four_k) {
        return Err(invalid(format!(
            "epsilon must lie in (0, 4‖K‖∞ = {four_k}), got {epsilon}"
        )));
    }
    if bounds.lip <= T::zero() {
        return Err(invalid("kernel with zero Lipschitz constant is constant"));
    }
    let delta = epsilon / (T::two() * bounds.lip);
    let v = ball_volume_fraction(x_grid, delta).min(ball_volume_fraction(y_grid, delta));
    if v >= T::one() {
        return Err(invalid("delta ball covers the whole torus"));
    }
    let arg = T::two() * (T::one() - v) / v * (four_k / epsilon - T::one());
    if arg <= T::one() {
        return Err(invalid(format!("epsilon {epsilon} too large: log argument {arg} ≤ 1")));
    }
    Ok(epsilon / (T::lit(4.0) * arg.ln()))
}

/// `β = max(d_X, d_Y) + 1 + margin`.
pub fn epsilon_beta(dim_x: usize, dim_y: usize, margin: f64) -> f64 {
    (dim_x.max(dim_y) + 1) as f64 + margin
}

/// `ε(τ) = β τ log(1/τ)`.
pub fn epsilon_of_tau<T: Scalar>(tau: T, beta: T) -> T {
    beta * tau * (T::one() / tau).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{builtin_kernel, KernelParams};
    use crate::measures::relative_entropy;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn bessel_i0(x: f64) -> f64 {
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..40 {
            term *= (x / 2.0) * (x / 2.0) / (k * k) as f64;
            sum += term;
        }
        sum
    }

    fn matrix(name: &str, params: KernelParams, n: usize) -> KernelMatrix<f64> {
        let k = builtin_kernel::<f64>(name, &params).unwrap();
        let g = TorusGrid::standard(params.dim, n).unwrap();
        KernelMatrix::new(k.as_ref(), g, g).unwrap()
    }

    fn dirac(grid: TorusGrid<f64>) -> GridMeasure<f64> {
        let mut w = vec![0.0; grid.len()];
        w[0] = 1.0;
        GridMeasure::from_weights(grid, w).unwrap()
    }

    fn random_measure(grid: TorusGrid<f64>, rng: &mut ChaCha8Rng) -> GridMeasure<f64> {
        let w = (0..grid.len()).map(|_| rng.random_range(0.05..1.0)).collect();
        GridMeasure::from_weights(grid, w).unwrap()
    }

    #[test]
    fn best_responses_to_uniform_and_dirac() {
        let m = matrix("cos_diff", KernelParams::default(), 64);
        let ctx = BestResponseContext::new(&m, 1.0).unwrap();
        let g = *m.x_grid();
        let u = GridMeasure::uniform(g);
        let kp = ctx.k_plus(&u).unwrap();
        assert!(kp.max_abs_diff(&u) < 1e-14);
        assert!((ctx.log_partition_plus(&u).unwrap() - TAU.ln()).abs() < 1e-14);

        let d = dirac(g);
        let (vm, log_z) = ctx.k_plus_with_log_partition(&d).unwrap();
        let z = TAU * bessel_i0(1.0);
        for (i, &r) in vm.density().iter().enumerate() {
            let y = g.point(i)[0];
            assert!((r - y.cos().exp() / z).abs() < 1e-13);
        }
        assert!((log_z - z.ln()).abs() < 1e-13, "{log_z}");
    }

    #[test]
    fn constant_kernel_best_response_is_uniform() {
        let params = KernelParams {
            value: 2.5,
            ..KernelParams::default()
        };
        let m = matrix("constant", params, 32);
        let ctx = BestResponseContext::new(&m, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mu = random_measure(*m.x_grid(), &mut rng);
        let u = GridMeasure::uniform(*m.y_grid());
        assert!(ctx.k_plus(&mu).unwrap().max_abs_diff(&u) < 1e-13);
        assert!(ctx.k_minus(&mu).unwrap().max_abs_diff(&u) < 1e-13);
    }

    #[test]
    fn log_partitions_are_convex() {
        let params = KernelParams {
            b: 0.5,
            ..KernelParams::default()
        };
        let m = matrix("separable", params, 64);
        let ctx = BestResponseContext::new(&m, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let a = random_measure(*m.x_grid(), &mut rng);
            let b = random_measure(*m.x_grid(), &mut rng);
            let mid = a.mix(&b, 0.5).unwrap();
            let lhs = ctx.log_partition_plus(&mid).unwrap();
            let rhs = 0.5 * ctx.log_partition_plus(&a).unwrap() + 0.5 * ctx.log_partition_plus(&b).unwrap();
            assert!(lhs <= rhs + 1e-14);
            let lhs = ctx.log_partition_minus(&mid).unwrap();
            let rhs = 0.5 * ctx.log_partition_minus(&a).unwrap() + 0.5 * ctx.log_partition_minus(&b).unwrap();
            assert!(lhs <= rhs + 1e-14);
        }
    }

    #[test]
    fn cos_diff_mne_is_uniform() {
        let m = matrix("cos_diff", KernelParams::default(), 64);
        for tau in [0.3, 1.0, 3.0] {
            let ctx = BestResponseContext::new(&m, tau).unwrap();
            let pair = fixed_point_mne(&ctx, &FixedPointOptions::default()).unwrap();
            assert!(pair.converged && pair.residual < 1e-10);
            let u = GridMeasure::uniform(*m.x_grid());
            assert!(pair.mu_star.max_abs_diff(&u) < 1e-8);
            assert!(pair.nu_star.max_abs_diff(&u) < 1e-8);
        }
    }

    #[test]
    fn large_temperature_contracts_quickly() {
        for (name, seed) in [("separable", 0), ("trig_poly", 4), ("cos_diff", 0)] {
            let params = KernelParams {
                b: 1.0,
                seed,
                ..KernelParams::default()
            };
            let m = matrix(name, params, 64);
            let ctx = BestResponseContext::new(&m, 10.0).unwrap();
            let pair = fixed_point_mne(&ctx, &FixedPointOptions::default()).unwrap();
            assert!(pair.converged && pair.iterations < 50, "{name}: {}", pair.iterations);
        }
    }

    #[test]
    fn damping_does_not_change_the_equilibrium() {
        let params = KernelParams {
            b: 1.0,
            ..KernelParams::default()
        };
        let m = matrix("separable", params, 64);
        let ctx = BestResponseContext::new(&m, 1.0).unwrap();
        let slow = FixedPointOptions {
            damping: 0.3,
            ..FixedPointOptions::default()
        };
        let full = FixedPointOptions {
            damping: 1.0,
            ..FixedPointOptions::default()
        };
        let a = fixed_point_mne(&ctx, &slow).unwrap().ensure_converged().unwrap();
        let b = fixed_point_mne(&ctx, &full).unwrap().ensure_converged().unwrap();
        assert!(total_variation(&a.mu_star, &b.mu_star).unwrap() < 1e-8);
        assert!(total_variation(&a.nu_star, &b.nu_star).unwrap() < 1e-8);
        // equilibrium satisfies both Gibbs equations
        assert!(relative_entropy(&a.nu_star, &ctx.k_plus(&a.mu_star).unwrap()).unwrap() < 1e-18);
    }

    #[test]
    fn warm_start_from_the_solution_returns_immediately() {
        let params = KernelParams {
            b: 0.5,
            ..KernelParams::default()
        };
        let m = matrix("separable", params, 32);
        let ctx = BestResponseContext::new(&m, 0.7).unwrap();
        let opts = FixedPointOptions::default();
        let pair = fixed_point_mne(&ctx, &opts).unwrap();
        let again = fixed_point_mne_from(&ctx, &opts, pair.mu_star.clone(), pair.nu_star.clone()).unwrap();
        assert_eq!(again.iterations, 0);
        assert_eq!(again.mu_star, pair.mu_star);
    }

    #[test]
    fn iteration_cap_reports_best_iterate() {
        let params = KernelParams {
            b: 0.5,
            ..KernelParams::default()
        };
        let m = matrix("separable", params, 32);
        let ctx = BestResponseContext::new(&m, 0.2).unwrap();
        let opts = FixedPointOptions {
            max_iter: 3,
            ..FixedPointOptions::default()
        };
        let pair = fixed_point_mne(&ctx, &opts).unwrap();
        assert!(!pair.converged);
        assert!(matches!(
            pair.ensure_converged(),
            Err(Error::NonConvergence { iterations: 3, .. })
        ));
        let bad = FixedPointOptions {
            damping: 0.0,
            ..FixedPointOptions::default()
        };
        assert!(fixed_point_mne(&ctx, &bad).is_err());
    }

    #[test]
    fn lsi_and_condition_number() {
        let b = |sup: f64, kxy: f64| KernelBounds {
            sup_norm: sup,
            kxy,
            lip: 1.0,
        };
        assert_eq!(lsi_lower_bound(&b(0.0, 1.0), 0.7, 1.0), 1.0);
        assert!((lsi_lower_bound(&b(1.0, 1.0), 1.0, 1.0) - 0.135_335_283_236_612_7).abs() < 1e-15);
        assert!(lsi_lower_bound(&b(1.0, 1.0), 0.01, 1.0) < 1e-80);
        assert_eq!(condition_kappa(&b(1.0, 1.0), 1.0, 1.0), 1.0);
        let k = condition_kappa(&b(1.0, 1.0), 1.0, (-2.0f64).exp());
        assert!((k - 7.389_056_098_930_65).abs() < 1e-12);
        assert!((condition_kappa(&b(1.0, 2.0), 0.5, 0.1) - 40.0).abs() < 1e-12);
        let g = TorusGrid::<f64>::standard(1, 16).unwrap();
        assert_eq!(default_lambda0(&g, &g), 1.0);
        let wide = TorusGrid::<f64>::new(1, 16, 2.0 * TAU).unwrap();
        assert!((default_lambda0(&g, &wide) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn epsilon_nash_temperature() {
        let b = KernelBounds {
            sup_norm: 1.0,
            kxy: 1.0,
            lip: 1.0,
        };
        let g = TorusGrid::<f64>::standard(1, 64).unwrap();
        let tau = epsilon_nash_tau(0.5, &b, &g, &g).unwrap();
        let v = 0.5 / TAU;
        let expected = 0.5 / (4.0 * (2.0 * (1.0 - v) / v * 7.0).ln());
        assert!((tau - expected).abs() < 1e-15);
        assert!((tau - 0.02457).abs() < 1e-4);
        let doubled = epsilon_nash_tau(1.0, &b, &g, &g).unwrap();
        assert!(doubled > 2.0 * tau);
        assert!(epsilon_nash_tau(4.0, &b, &g, &g).is_err());
        assert!(epsilon_nash_tau(3.9, &b, &g, &g).is_err());
        assert!((epsilon_of_tau(0.1, epsilon_beta(1, 1, 1.0)) - 0.3 * 10f64.ln()).abs() < 1e-15);
    }
}
