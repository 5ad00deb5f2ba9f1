//! Scalar functionals of a strategy pair: energies, Lyapunov gaps, the
//! Nikaidò–Isoda error, entropy inequalities and decay-rate fitting.

use crate::equilibrium::{BestResponseContext, MnePair};
use crate::error::{invalid, Result};
use crate::games::KernelMatrix;
use crate::measures::{entropy, relative_entropy, relative_fisher, GridMeasure, TorusGrid};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energy<T> {
    /// `E₀ − τ𝓗(μ) + τ𝓗(ν)`
    pub e_tau: T,
    /// `∫∫ K dν dμ`
    pub e_0: T,
}

pub fn energy<T: Scalar>(
    matrix: &KernelMatrix<T>,
    mu: &GridMeasure<T>,
    nu: &GridMeasure<T>,
    tau: T,
) -> Result<Energy<T>> {
    let e_0 = matrix.bilinear(mu, nu)?;
    Ok(Energy {
        e_tau: e_0 - tau * entropy(mu) + tau * entropy(nu),
        e_0,
    })
}

/// `𝓔₁(μ) = max_ν E_τ(μ, ν) = −τ𝓗(μ) + τ log Z⁺(μ)`.
pub fn max_energy<T: Scalar>(ctx: &BestResponseContext<'_, T>, mu: &GridMeasure<T>) -> Result<T> {
    let tau = ctx.tau();
    Ok(-tau * entropy(mu) + tau * ctx.log_partition_plus(mu)?)
}

/// `𝓔₂(ν) = min_μ E_τ(μ, ν) = τ𝓗(ν) − τ log Z⁻(ν)`.
pub fn min_energy<T: Scalar>(ctx: &BestResponseContext<'_, T>, nu: &GridMeasure<T>) -> Result<T> {
    let tau = ctx.tau();
    Ok(tau * entropy(nu) - tau * ctx.log_partition_minus(nu)?)
}

/// The four gaps and their `γ`-weighted combinations `𝓛 = 𝓛₁ + γ𝓛₂`,
/// `𝓛̃ = 𝓛₃ + γ𝓛₄`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lyapunov<T> {
    pub l1: T,
    pub l2: T,
    pub l3: T,
    pub l4: T,
    pub l: T,
    pub ltilde: T,
}

fn check_tau<T: Scalar>(ctx: &BestResponseContext<'_, T>, mne: &MnePair<T>) -> Result<()> {
    if ctx.tau() != mne.tau {
        return Err(invalid(format!(
            "equilibrium computed at τ = {} but context has τ = {}",
            mne.tau,
            ctx.tau()
        )));
    }
    Ok(())
}

pub fn lyapunov_all<T: Scalar>(
    ctx: &BestResponseContext<'_, T>,
    mne: &MnePair<T>,
    mu: &GridMeasure<T>,
    nu: &GridMeasure<T>,
    gamma: T,
) -> Result<Lyapunov<T>> {
    check_tau(ctx, mne)?;
    let tau = ctx.tau();
    let l1 = max_energy(ctx, mu)? - max_energy(ctx, &mne.mu_star)?;
    let l3 = min_energy(ctx, &mne.nu_star)? - min_energy(ctx, nu)?;
    let l2 = tau * relative_entropy(nu, &ctx.k_plus(mu)?)?;
    let l4 = tau * relative_entropy(mu, &ctx.k_minus(nu)?)?;
    Ok(Lyapunov {
        l1,
        l2,
        l3,
        l4,
        l: l1 + gamma * l2,
        ltilde: l3 + gamma * l4,
    })
}

/// `𝓛₂` straight from its definition `max_ν E_τ(μ, ·) − E_τ(μ, ν)`.
pub fn l2_definitional<T: Scalar>(
    ctx: &BestResponseContext<'_, T>,
    mu: &GridMeasure<T>,
    nu: &GridMeasure<T>,
) -> Result<T> {
    Ok(max_energy(ctx, mu)? - energy(ctx.matrix(), mu, nu, ctx.tau())?.e_tau)
}

/// `𝓛₄` straight from its definition `E_τ(μ, ν) − min_μ E_τ(·, ν)`.
pub fn l4_definitional<T: Scalar>(
    ctx: &BestResponseContext<'_, T>,
    mu: &GridMeasure<T>,
    nu: &GridMeasure<T>,
) -> Result<T> {
    Ok(energy(ctx.matrix(), mu, nu, ctx.tau())?.e_tau - min_energy(ctx, nu)?)
}

/// Largest node value, nudged to the vertex of the 3-point parabola through
/// its neighbours along each axis.
fn refined_max<T: Scalar>(grid: &TorusGrid<T>, values: &[T]) -> T {
    let (best, &f0) = values
        .iter()
        .enumerate()
        .fold((0, &values[0]), |acc, (i, v)| if *v > *acc.1 { (i, v) } else { acc });
    let mut bump = T::zero();
    for axis in 0..grid.dim() {
        let fp = values[grid.neighbor(best, axis, 1)];
        let fm = values[grid.neighbor(best, axis, -1)];
        let curv = fp - T::two() * f0 + fm;
        if curv < T::zero() {
            bump += -(fp - fm) * (fp - fm) / (T::lit(8.0) * curv);
        }
    }
    f0 + bump
}

/// Nikaidò–Isoda error `max_y ∫K(x, y)dμ(x) − min_x ∫K(x, y)dν(y)`.
pub fn ni_error<T: Scalar>(
    matrix: &KernelMatrix<T>,
    mu: &GridMeasure<T>,
    nu: &GridMeasure<T>,
) -> Result<T> {
    let vy = matrix.potential_y(mu)?;
    let vx: Vec<T> = matrix.potential_x(nu)?.into_iter().map(|v| -v).collect();
    let gap = refined_max(matrix.y_grid(), &vy) + refined_max(matrix.x_grid(), &vx);
    Ok(gap.max(T::zero()))
}

/// One instance of `lhs ≤ mid ≤ rhs` (`mid = lhs` for one-sided checks).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityRow {
    pub t: f64,
    pub lhs: f64,
    pub mid: f64,
    pub rhs: f64,
    /// `min(mid − lhs, rhs − mid)` (`rhs − lhs` when one-sided); negative means violated.
    pub margin: f64,
}

impl InequalityRow {
    pub fn two_sided<T: Scalar>(t: T, lhs: T, mid: T, rhs: T) -> Self {
        let (lhs, mid, rhs) = (lhs.to_f64_lossy(), mid.to_f64_lossy(), rhs.to_f64_lossy());
        Self {
            t: t.to_f64_lossy(),
            lhs,
            mid,
            rhs,
            margin: (mid - lhs).min(rhs - mid),
        }
    }

    pub fn one_sided<T: Scalar>(t: T, lhs: T, rhs: T) -> Self {
        let mut row = Self::two_sided(t, lhs, lhs, rhs);
        row.margin = row.rhs - row.lhs;
        row
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.margin >= -tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    /// `τ𝓗(μ|μ*) ≤ 𝓛₁(μ) ≤ τ𝓗(μ|𝒦⁻𝒦⁺μ)`
    pub mu: InequalityRow,
    /// `τ𝓗(ν|ν*) ≤ 𝓛₃(ν) ≤ τ𝓗(ν|𝒦⁺𝒦⁻ν)`
    pub nu: InequalityRow,
}

pub fn sandwich_check<T: Scalar>(
    ctx: &BestResponseContext<'_, T>,
    mne: &MnePair<T>,
    mu: &GridMeasure<T>,
    nu: &GridMeasure<T>,
    t: T,
) -> Result<SandwichReport> {
    check_tau(ctx, mne)?;
    let tau = ctx.tau();
    let l1 = max_energy(ctx, mu)? - max_energy(ctx, &mne.mu_star)?;
    let l3 = min_energy(ctx, &mne.nu_star)? - min_energy(ctx, nu)?;
    let mu_low = tau * relative_entropy(mu, &mne.mu_star)?;
    let mu_high = tau * relative_entropy(mu, &ctx.k_minus(&ctx.k_plus(mu)?)?)?;
    let nu_low = tau * relative_entropy(nu, &mne.nu_star)?;
    let nu_high = tau * relative_entropy(nu, &ctx.k_plus(&ctx.k_minus(nu)?)?)?;
    Ok(SandwichReport {
        mu: InequalityRow::two_sided(t, mu_low, l1, mu_high),
        nu: InequalityRow::two_sided(t, nu_low, l3, nu_high),
    })
}

/// `τ𝓗(ν|ν*) ≤ 2τ𝓗(ν|𝒦⁺μ) + (4‖K‖∞²/τ)𝓗(μ|μ*)`.
pub fn cross_entropy_bound<T: Scalar>(
    ctx: &BestResponseContext<'_, T>,
    mne: &MnePair<T>,
    mu: &GridMeasure<T>,
    nu: &GridMeasure<T>,
    t: T,
) -> Result<InequalityRow> {
    check_tau(ctx, mne)?;
    let tau = ctx.tau();
    let k = ctx.matrix().bounds().sup_norm;
    let lhs = tau * relative_entropy(nu, &mne.nu_star)?;
    let rhs = T::two() * tau * relative_entropy(nu, &ctx.k_plus(mu)?)?
        + T::lit(4.0) * k * k / tau * relative_entropy(mu, &mne.mu_star)?;
    Ok(InequalityRow::one_sided(t, lhs, rhs))
}

/// Right-hand sides of the four time-derivative bounds on `𝓛₁..𝓛₄`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeBounds<T> {
    pub dl1: T,
    pub dl2: T,
    pub dl3: T,
    pub dl4: T,
}

pub fn derivative_bounds<T: Scalar>(
    ctx: &BestResponseContext<'_, T>,
    mu: &GridMeasure<T>,
    nu: &GridMeasure<T>,
    eta: T,
) -> Result<DerivativeBounds<T>> {
    let tau = ctx.tau();
    let m = ctx.matrix();
    let kxy = m.bounds().kxy;
    let (dx, dy) = (m.x_grid().diameter(), m.y_grid().diameter());
    let half = T::half();
    let three = T::lit(3.0);

    let kp = ctx.k_plus(mu)?;
    let km = ctx.k_minus(nu)?;
    let kl_nu = relative_entropy(nu, &kp)?;
    let kl_mu = relative_entropy(mu, &km)?;
    let i_mu_kmkp = relative_fisher(mu, &ctx.k_minus(&kp)?)?;
    let i_nu_kpkm = relative_fisher(nu, &ctx.k_plus(&km)?)?;
    let i_nu_kp = relative_fisher(nu, &kp)?;
    let i_mu_km = relative_fisher(mu, &km)?;
    let cy = kxy * kxy * dy * dy / tau;
    let cx = eta * kxy * kxy * dx * dx / tau;
    Ok(DerivativeBounds {
        dl1: -half * tau * i_mu_kmkp + cy * kl_nu,
        dl2: -tau * eta * i_nu_kp + half * tau * i_mu_kmkp + three * cy * kl_nu,
        dl3: -half * eta * tau * i_nu_kpkm + cx * kl_mu,
        dl4: -tau * i_mu_km + half * eta * tau * i_nu_kpkm + three * cx * kl_mu,
    })
}

/// One row of the diagnostics table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub tau: f64,
    pub eta: f64,
    pub e_tau: f64,
    pub e_0: f64,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l4: f64,
    pub l: f64,
    pub ltilde: f64,
    pub kl_mu_star: f64,
    pub kl_nu_star: f64,
    pub ni: f64,
    /// `𝓘(μ|𝒦⁻ν)`
    pub fisher_mu: f64,
    /// `𝓘(ν|𝒦⁺μ)`
    pub fisher_nu: f64,
}

pub const DIAGNOSTICS_HEADER: &str =
    "t,tau,eta,E_tau,L1,L2,L3,L4,L,Ltilde,KL_mu_star,KL_nu_star,NI,fisher_mu,fisher_nu";

impl DiagnosticsRecord {
    pub fn evaluate<T: Scalar>(
        ctx: &BestResponseContext<'_, T>,
        mne: &MnePair<T>,
        mu: &GridMeasure<T>,
        nu: &GridMeasure<T>,
        gamma: T,
        t: T,
        eta: T,
    ) -> Result<Self> {
        let f = |v: T| v.to_f64_lossy();
        let e = energy(ctx.matrix(), mu, nu, ctx.tau())?;
        let lyap = lyapunov_all(ctx, mne, mu, nu, gamma)?;
        Ok(Self {
            t: f(t),
            tau: f(ctx.tau()),
            eta: f(eta),
            e_tau: f(e.e_tau),
            e_0: f(e.e_0),
            l1: f(lyap.l1),
            l2: f(lyap.l2),
            l3: f(lyap.l3),
            l4: f(lyap.l4),
            l: f(lyap.l),
            ltilde: f(lyap.ltilde),
            kl_mu_star: f(relative_entropy(mu, &mne.mu_star)?),
            kl_nu_star: f(relative_entropy(nu, &mne.nu_star)?),
            ni: f(ni_error(ctx.matrix(), mu, nu)?),
            fisher_mu: f(relative_fisher(mu, &ctx.k_minus(nu)?)?),
            fisher_nu: f(relative_fisher(nu, &ctx.k_plus(mu)?)?),
        })
    }

    fn csv_fields(&self) -> [f64; 15] {
        [
            self.t,
            self.tau,
            self.eta,
            self.e_tau,
            self.l1,
            self.l2,
            self.l3,
            self.l4,
            self.l,
            self.ltilde,
            self.kl_mu_star,
            self.kl_nu_star,
            self.ni,
            self.fisher_mu,
            self.fisher_nu,
        ]
    }
}

pub fn write_diagnostics_csv(records: &[DiagnosticsRecord], mut out: impl Write) -> Result<()> {
    writeln!(out, "{DIAGNOSTICS_HEADER}")?;
    for r in records {
        let row: Vec<String> = r.csv_fields().iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub alpha_hat: f64,
    pub r_squared: f64,
    /// Points used after burn-in and truncation.
    pub points: usize,
    /// True when the fit stopped at the first value at or below the floor.
    pub truncated: bool,
}

/// Least-squares fit of `log v ≈ c − α t`; see [`rate_fit_with_floor`].
pub fn rate_fit(series: &[(f64, f64)], burn_in: f64) -> Result<RateFit> {
    rate_fit_with_floor(series, burn_in, 0.0)
}

/// Drops the leading `burn_in` fraction of points, then fits on the prefix
/// whose values stay above `floor`.
pub fn rate_fit_with_floor(series: &[(f64, f64)], burn_in: f64, floor: f64) -> Result<RateFit> {
    if series.len() < 10 {
        return Err(invalid(format!("rate fit needs ≥ 10 points, got {}", series.len())));
    }
    if !(0.0..1.0).contains(&burn_in) {
        return Err(invalid(format!("burn-in fraction {burn_in} outside [0, 1)")));
    }
    let skip = (burn_in * series.len() as f64).floor() as usize;
    let tail = &series[skip..];
    let usable = tail.iter().take_while(|(_, v)| *v > floor && v.is_finite()).count();
    if usable < 2 {
        return Err(invalid("fewer than two values above the floor after burn-in"));
    }
    let pts: Vec<(f64, f64)> = tail[..usable].iter().map(|&(t, v)| (t, v.ln())).collect();
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if stt == 0.0 {
        return Err(invalid("rate fit needs distinct times"));
    }
    let slope = sty / stt;
    let r_squared = if syy <= f64::EPSILON * f64::EPSILON * n {
        1.0
    } else {
        (sty * sty / (stt * syy)).min(1.0)
    };
    Ok(RateFit {
        alpha_hat: -slope,
        r_squared,
        points: usable,
        truncated: usable < tail.len(),
    })
}
