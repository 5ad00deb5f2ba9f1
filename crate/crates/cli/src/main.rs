use clap::{Parser, Subcommand};
use mfgda_cli::commands;
use mfgda_cli::config::ExperimentConfig;
use mfgda_cli::presets::preset;
use mfgda_cli::{CliError, CliResult};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "mfgda", version, about = "Mean-field gradient descent-ascent experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.directory`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Start from a named preset; a config file is then rejected.
    #[arg(long, global = true)]
    preset: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the Gibbs fixed-point equations.
    SolveMne(Common),
    /// Integrate the mean-field GDA system and its diagnostics.
    RunGda(Common),
    /// Simulate the interacting particle system.
    RunParticles(Common),
    /// Run the invariant suite.
    Verify(Common),
    /// Print the full configuration with all defaults filled in.
    PrintDefaults(Common),
}

fn load(c: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = match (&c.preset, &c.config) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config("pass either --preset or --config, not both".into()))
        }
        (Some(name), None) => preset(name)?,
        (None, Some(path)) => ExperimentConfig::load(path)?,
        (None, None) => ExperimentConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &c.out {
        cfg.output.directory = out.display().to_string();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn configure_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var("MFGDA_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| CliError::Config(format!("MFGDA_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

fn execute(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Command::PrintDefaults(c) => {
            print!("{}", load(&c)?.to_toml());
            Ok(())
        }
        Command::SolveMne(c) => {
            let cfg = load(&c)?;
            commands::solve_mne(&cfg, cfg.output.directory.as_ref())
        }
        Command::RunGda(c) => {
            let cfg = load(&c)?;
            let s = commands::run_gda(&cfg, cfg.output.directory.as_ref())?;
            if let Some(fit) = s.fitted {
                log::info!("{} decay rate {:.4} (R² {:.5})", s.fitted_series, fit.alpha_hat, fit.r_squared);
            }
            Ok(())
        }
        Command::RunParticles(c) => {
            let cfg = load(&c)?;
            commands::run_particles_cmd(&cfg, cfg.output.directory.as_ref()).map(|_| ())
        }
        Command::Verify(c) => {
            let cfg = load(&c)?;
            let result = commands::verify_cmd(&cfg, cfg.output.directory.as_ref());
            if let Ok(r) = &result {
                println!("{} checks passed", r.checks.len());
            }
            result.map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
