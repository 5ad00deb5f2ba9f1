use crate::config::{DensitySpec, ExperimentConfig};
use crate::error::{CliError, CliResult};
use mfgda::dynamics::{GdaState, Regime, ScaleSchedule, ScheduleKind, TheoryConstants};
use mfgda::games::{builtin_kernel, GanKernel, PetrovGalerkinKernel, SlicedKernel};
use mfgda::{GameKernel, GridMeasure, KernelMatrix, TorusGrid};
use std::sync::Arc;

pub type Kernel = Arc<dyn GameKernel<f64>>;

pub fn kernel(cfg: &ExperimentConfig) -> CliResult<Kernel> {
    let g = &cfg.game;
    let raw: Kernel = match g.kernel.as_str() {
        "gan" => {
            let c = &g.gan;
            Arc::new(GanKernel::new(
                c.samples.clone(),
                c.data_dim,
                c.period,
                c.activation,
                c.weight,
                c.embedding,
            )?)
        }
        "petrov_galerkin" => Arc::new(PetrovGalerkinKernel::<f64>::new(g.petrov_galerkin.clone())?),
        name => Arc::from(builtin_kernel::<f64>(name, &g.params)?),
    };
    match &g.slice {
        Some(s) => Ok(Arc::new(SlicedKernel::new(
            raw,
            s.base_x.clone(),
            s.free_x.clone(),
            s.base_y.clone(),
            s.free_y.clone(),
        )?)),
        None if raw.dim_x() > 2 || raw.dim_y() > 2 => Err(CliError::Config(format!(
            "kernel `{}` lives on {}×{} dimensional tori; add a [game.slice] table",
            g.kernel,
            raw.dim_x(),
            raw.dim_y()
        ))),
        None => Ok(raw),
    }
}

pub fn grids(cfg: &ExperimentConfig, k: &dyn GameKernel<f64>) -> CliResult<(TorusGrid<f64>, TorusGrid<f64>)> {
    let nx = cfg.grid.n_x.unwrap_or(cfg.grid.n);
    let ny = cfg.grid.n_y.unwrap_or(cfg.grid.n);
    Ok((
        TorusGrid::new(k.dim_x(), nx, k.period_x())?,
        TorusGrid::new(k.dim_y(), ny, k.period_y())?,
    ))
}

pub fn matrix(cfg: &ExperimentConfig) -> CliResult<(Kernel, KernelMatrix<f64>)> {
    let k = kernel(cfg)?;
    let (gx, gy) = grids(cfg, k.as_ref())?;
    let m = KernelMatrix::new(k.as_ref(), gx, gy)?;
    Ok((k, m))
}

pub fn density(spec: &DensitySpec, grid: TorusGrid<f64>) -> CliResult<GridMeasure<f64>> {
    Ok(match spec {
        DensitySpec::Uniform => GridMeasure::uniform(grid),
        DensitySpec::VonMises { kappa, centre } => GridMeasure::from_fn(grid, |x| {
            (kappa * x.iter().map(|&v| (v - centre).cos()).sum::<f64>()).exp()
        })?,
        DensitySpec::File { path } => {
            let m = GridMeasure::load(path)?;
            if m.grid() != &grid {
                return Err(CliError::Config(format!("density file {path} does not match the grid")));
            }
            m
        }
    })
}

pub fn initial_state(cfg: &ExperimentConfig, m: &KernelMatrix<f64>) -> CliResult<GdaState<f64>> {
    Ok(GdaState::new(
        density(&cfg.initial.mu, *m.x_grid())?,
        density(&cfg.initial.nu, *m.y_grid())?,
    ))
}

pub fn theory(cfg: &ExperimentConfig, m: &KernelMatrix<f64>, tau: f64) -> CliResult<TheoryConstants> {
    Ok(TheoryConstants::new(m, tau, cfg.solver.gamma, cfg.solver.lambda0)?)
}

/// Returns the schedule and the fixed-temperature `η` it was built from, if any.
pub fn schedule(cfg: &ExperimentConfig, m: &KernelMatrix<f64>) -> CliResult<(ScaleSchedule<f64>, Option<f64>)> {
    let s = &cfg.solver;
    match s.schedule.kind {
        ScheduleKind::Fixed => {
            let eta = theory(cfg, m, s.tau)?.eta_for(s.regime, s.eta)?;
            Ok((ScaleSchedule::fixed(s.tau, eta)?, Some(eta)))
        }
        kind => {
            let xi_star = xi_star(cfg, m);
            let xi = s.schedule.xi.unwrap_or(s.schedule.xi_factor * xi_star);
            Ok((ScaleSchedule::annealed(kind, xi, xi_star, s.schedule.m, s.schedule.t0)?, None))
        }
    }
}

/// `ξ* = 2‖K‖∞` unless configured.
pub fn xi_star(cfg: &ExperimentConfig, m: &KernelMatrix<f64>) -> f64 {
    cfg.solver.schedule.xi_star.unwrap_or(2.0 * m.bounds().sup_norm)
}

pub fn regime_of(cfg: &ExperimentConfig) -> Regime {
    match cfg.solver.schedule.kind {
        ScheduleKind::AnnealedFastAscent => Regime::FastAscent,
        ScheduleKind::AnnealedFastDescent => Regime::FastDescent,
        ScheduleKind::Fixed => cfg.solver.regime,
    }
}
