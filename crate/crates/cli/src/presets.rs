use crate::config::{DensitySpec, ExperimentConfig, ScheduleConfig};
use crate::error::{CliError, CliResult};
use mfgda::dynamics::{Regime, ScheduleKind};
use mfgda::games::KernelParams;

pub const PRESETS: &[&str] = &[
    "thm1-fast-ascent-separable",
    "thm1-fast-descent-separable",
    "thm3-annealed-separable",
    "particles-separable",
    "mne-cos-diff",
    "verify-fast",
];

pub fn preset(name: &str) -> CliResult<ExperimentConfig> {
    let mut c = ExperimentConfig::default();
    match name {
        "thm1-fast-ascent-separable" => {
            c.solver.regime = Regime::FastAscent;
            c.integrator.t_end = 25.0;
            c.integrator.record_every = 20_000;
            c.output.directory = "out/thm1-fast-ascent".into();
        }
        "thm1-fast-descent-separable" => {
            c.solver.regime = Regime::FastDescent;
            c.integrator.t_end = 3000.0;
            c.integrator.record_every = 5_000;
            c.output.directory = "out/thm1-fast-descent".into();
        }
        "thm3-annealed-separable" => {
            c.solver.schedule = ScheduleConfig {
                kind: ScheduleKind::AnnealedFastAscent,
                xi_factor: 3.0,
                m: 10.0,
                ..ScheduleConfig::default()
            };
            c.integrator.t_end = 1000.0;
            c.integrator.record_every = 20_000;
            c.integrator.check_derivatives = false;
            c.output.directory = "out/thm3-annealed".into();
        }
        "particles-separable" => {
            c.solver.regime = Regime::Custom;
            c.solver.eta = Some(1.0);
            c.particles.n = 2000;
            c.particles.t_end = 2.0;
            c.particles.dt = 1e-3;
            c.output.directory = "out/particles".into();
        }
        "mne-cos-diff" => {
            c.game.kernel = "cos_diff".into();
            c.game.params = KernelParams::default();
            c.initial.mu = DensitySpec::Uniform;
            c.initial.nu = DensitySpec::Uniform;
            c.output.directory = "out/mne-cos-diff".into();
        }
        "verify-fast" => {
            c.verify.fast = true;
            c.verify.n = 16;
            c.verify.pairs = 20;
            c.grid.n = 16;
            c.output.directory = "out/verify".into();
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown preset `{other}`; known presets: {}",
                PRESETS.join(", ")
            )))
        }
    }
    Ok(c)
}
