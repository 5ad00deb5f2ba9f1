use crate::error::{CliError, CliResult};
use mfgda::dynamics::{Regime, ScheduleKind};
use mfgda::equilibrium::FixedPointOptions;
use mfgda::games::{Activation, BarronEmbedding, KernelParams, PetrovGalerkinSpec, Weight};
use mfgda::particles::NoiseScaling;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One experiment, as read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed for everything random in the experiment.
    pub seed: u64,
    pub game: GameConfig,
    pub grid: GridConfig,
    pub solver: SolverConfig,
    pub integrator: IntegratorConfig,
    pub initial: InitialConfig,
    pub particles: ParticleConfig,
    pub output: OutputConfig,
    pub verify: VerifyConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            game: GameConfig::default(),
            grid: GridConfig::default(),
            solver: SolverConfig::default(),
            integrator: IntegratorConfig::default(),
            initial: InitialConfig::default(),
            particles: ParticleConfig::default(),
            output: OutputConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameConfig {
    /// `cos_diff`, `separable`, `trig_poly`, `constant`, `gan` or `petrov_galerkin`.
    pub kernel: String,
    pub params: KernelParams,
    pub gan: GanConfig,
    pub petrov_galerkin: PetrovGalerkinSpec,
    /// Required for `gan` and `petrov_galerkin`, whose parameter tori have
    /// three or more dimensions.
    pub slice: Option<SliceConfig>,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            kernel: "separable".into(),
            params: KernelParams {
                a: 1.0,
                b: 0.5,
                ..KernelParams::default()
            },
            gan: GanConfig::default(),
            petrov_galerkin: PetrovGalerkinSpec::default(),
            slice: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanConfig {
    /// Target points, `data_dim` coordinates each.
    pub samples: Vec<f64>,
    pub data_dim: usize,
    pub period: f64,
    pub activation: Activation,
    pub weight: Weight,
    pub embedding: BarronEmbedding,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            samples: vec![1.0, 2.5, 4.0],
            data_dim: 1,
            period: std::f64::consts::TAU,
            activation: Activation::Tanh,
            weight: Weight::default(),
            embedding: BarronEmbedding::default(),
        }
    }
}

/// Freezes all but one or two coordinates of each player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceConfig {
    pub base_x: Vec<f64>,
    pub free_x: Vec<usize>,
    pub base_y: Vec<f64>,
    pub free_y: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Nodes per axis on both tori unless overridden.
    pub n: usize,
    pub n_x: Option<usize>,
    pub n_y: Option<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n: 64,
            n_x: None,
            n_y: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tau: f64,
    pub gamma: f64,
    pub regime: Regime,
    /// Timescale ratio for the `custom` regime.
    pub eta: Option<f64>,
    /// Constant of the log-Sobolev lower bound; defaults to `(2π/L)²`.
    pub lambda0: Option<f64>,
    pub schedule: ScheduleConfig,
    pub fixed_point: FixedPointOptions,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tau: 1.0,
            gamma: 0.5,
            regime: Regime::FastAscent,
            eta: None,
            lambda0: None,
            schedule: ScheduleConfig::default(),
            fixed_point: FixedPointOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    pub xi: Option<f64>,
    /// Defaults to `2‖K‖∞`.
    pub xi_star: Option<f64>,
    /// `ξ = xi_factor · ξ*` when `xi` is not given.
    pub xi_factor: f64,
    pub m: f64,
    pub t0: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::Fixed,
            xi: None,
            xi_star: None,
            xi_factor: 3.0,
            m: 10.0,
            t0: std::f64::consts::E * std::f64::consts::E,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub t_end: f64,
    /// Fixed step; omitted means the stability rule.
    pub dt: Option<f64>,
    pub record_every: usize,
    pub check_derivatives: bool,
    pub dt_floor: f64,
    /// Fraction of the record series discarded before the rate fit.
    pub burn_in: f64,
    /// Values below this are left out of the rate fit.
    pub fit_floor: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            t_end: 10.0,
            dt: None,
            record_every: 1000,
            check_derivatives: true,
            dt_floor: 1e-9,
            burn_in: 0.2,
            fit_floor: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    Uniform,
    /// `∝ exp(κ Σ_k cos(x_k − centre))`.
    VonMises { kappa: f64, centre: f64 },
    /// Density CSV as written by the solver.
    File { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    pub mu: DensitySpec,
    pub nu: DensitySpec,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            mu: DensitySpec::VonMises {
                kappa: 1.5,
                centre: 2.0,
            },
            nu: DensitySpec::VonMises {
                kappa: 1.0,
                centre: 4.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParticleConfig {
    pub n: usize,
    /// Overrides the master seed for the particle streams.
    pub seed: Option<u64>,
    pub dt: f64,
    pub t_end: f64,
    pub record_every: usize,
    pub bandwidth: Option<f64>,
    pub noise: NoiseScaling,
    pub paired_pde: bool,
    /// Write the ensemble at every record.
    pub checkpoints: bool,
}

impl Default for ParticleConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            seed: None,
            dt: 1e-3,
            t_end: 2.0,
            record_every: 100,
            bandwidth: None,
            noise: NoiseScaling::Generator,
            paired_pde: true,
            checkpoints: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: String,
    /// Write the densities at every record, named by step index.
    pub checkpoints: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: "out".into(),
            checkpoints: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Small grids and short runs.
    pub fast: bool,
    /// Grid size for the invariant suite.
    pub n: usize,
    /// Random measure pairs per randomized check.
    pub pairs: usize,
    /// Deliberately corrupts one quantity; the only supported value is `l2-sign-flip`.
    pub inject_fault: Option<String>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            fast: false,
            n: 64,
            pairs: 100,
            inject_fault: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        let s = &self.solver;
        if !(s.tau > 0.0 && s.tau.is_finite()) {
            return bad(format!("solver.tau must be positive, got {}", s.tau));
        }
        if !(s.gamma > 0.0 && s.gamma < 1.0) {
            return bad(format!("solver.gamma must lie in (0, 1), got {}", s.gamma));
        }
        if s.regime == Regime::Custom && !s.eta.is_some_and(|e| e > 0.0) {
            return bad("solver.regime = \"custom\" needs a positive solver.eta".into());
        }
        if self.grid.n < 4 || self.grid.n_x.is_some_and(|n| n < 4) || self.grid.n_y.is_some_and(|n| n < 4) {
            return bad("grids need at least 4 nodes per axis".into());
        }
        let i = &self.integrator;
        if !(i.t_end > 0.0) || i.record_every == 0 {
            return bad("integrator needs t_end > 0 and record_every ≥ 1".into());
        }
        if i.dt.is_some_and(|dt| !(dt > 0.0)) {
            return bad("integrator.dt must be positive".into());
        }
        if !(0.0..1.0).contains(&i.burn_in) {
            return bad("integrator.burn_in must lie in [0, 1)".into());
        }
        let p = &self.particles;
        if p.n == 0 {
            return bad("particles.n must be at least 1".into());
        }
        if !(p.dt > 0.0 && p.t_end > 0.0) || p.record_every == 0 {
            return bad("particles need dt > 0, t_end > 0 and record_every ≥ 1".into());
        }
        if p.bandwidth.is_some_and(|b| !(b > 0.0)) {
            return bad("particles.bandwidth must be positive".into());
        }
        if let Some(f) = &self.verify.inject_fault {
            if f != "l2-sign-flip" {
                return bad(format!("unknown fault `{f}`"));
            }
        }
        Ok(())
    }

    pub fn particle_seed(&self) -> u64 {
        self.particles.seed.unwrap_or(self.seed)
    }
}
