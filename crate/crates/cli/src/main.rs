use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use fracwest_core::experiment::{
    alpha_sensitivity, dump_singular_values, forward, reconstruct, spectral_check, synthesize, write_meta,
    write_reconstruction, write_synthesis, ExperimentConfig,
};
use fracwest_core::Error;
use serde_json::{json, Value};

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_NOT_STOPPED: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    /// Forward run at the true coefficients
    Forward,
    /// Clean and noisy traces from the refined synthesis grid
    Synth,
    /// Frozen Newton reconstruction of kappa and slowness
    Reconstruct,
    /// Singular values of the frozen Jacobian
    Svd,
    /// Poles, residues and determinant condition of the first modes
    SpectralCheck,
    /// Case A reconstructions over the configured alphas
    AlphaSweep,
}

/// Forward simulation and coefficient reconstruction for the fractionally
/// damped Westervelt equation in one dimension.
#[derive(Debug, Parser)]
#[command(name = "fracwest", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Flat JSON experiment configuration
    #[arg(long)]
    config: PathBuf,
    /// Overrides rng_seed from the configuration
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

enum Outcome {
    Done(Value),
    NotStopped(Value),
}

fn execute(cmd: Command, cfg: &ExperimentConfig, out: &Path) -> Result<Outcome, Error> {
    let mesh = cfg.mesh()?;
    let grid = cfg.grid()?;
    Ok(match cmd {
        Command::Forward => {
            let h = forward(cfg, out)?;
            Outcome::Done(json!({
                "max_abs_u": h.max_abs(),
                "min_coefficient": h.min_coefficient(),
            }))
        }
        Command::Synth => {
            let data = synthesize(cfg)?;
            write_synthesis(&data, &grid, out)?;
            Outcome::Done(json!({
                "delta": data.delta,
                "clean_norm": data.clean.norm(&grid),
            }))
        }
        Command::Reconstruct => {
            let rec = reconstruct(cfg, None)?;
            write_reconstruction(&rec, &mesh, out)?;
            let (a, b) = cfg.kappa_window();
            let summary = json!({
                "iterations": rec.state.n_steps(),
                "discrepancy_met": rec.state.discrepancy_met,
                "delta": rec.data.delta,
                "final_residual": rec.state.residual_norms.last(),
                "kappa_window": [a, b],
                "err_kappa_window": rec.kappa_error(&mesh, a, b),
                "err_slowness": rec.slowness_error(&mesh, 0.0, 1.0),
                "err_slowness_feature": rec.slowness_feature_error(&mesh),
            });
            if rec.data.delta > 0.0 && !rec.state.discrepancy_met {
                Outcome::NotStopped(summary)
            } else {
                Outcome::Done(summary)
            }
        }
        Command::Svd => {
            let s = dump_singular_values(cfg, out)?;
            let sv = &s.singular_values;
            Outcome::Done(json!({
                "count": sv.len(),
                "sigma_1": sv.first(),
                "sigma_10_over_sigma_1": sv.get(9).map(|v| v / sv[0]),
            }))
        }
        Command::SpectralCheck => {
            let rows = spectral_check(cfg, out)?;
            let min_det = rows.iter().map(|r| r.abs_det).fold(f64::INFINITY, f64::min);
            Outcome::Done(json!({ "modes": rows.len(), "min_abs_det": min_det }))
        }
        Command::AlphaSweep => {
            let rows = alpha_sensitivity(cfg, &cfg.alphas, out)?;
            Outcome::Done(json!({
                "alphas": rows.iter().map(|r| r.alpha).collect::<Vec<_>>(),
                "err_kappa": rows.iter().map(|r| r.err_kappa).collect::<Vec<_>>(),
            }))
        }
    })
}

fn command_name(cmd: Command) -> String {
    cmd.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match ExperimentConfig::load(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(seed) = cli.seed {
        cfg.rng_seed = seed;
    }
    match execute(cli.command, &cfg, &cli.out) {
        Ok(outcome) => {
            let (results, code) = match outcome {
                Outcome::Done(v) => (v, ExitCode::SUCCESS),
                Outcome::NotStopped(v) => {
                    eprintln!("warning: discrepancy rule not met within max_iters");
                    (v, ExitCode::from(EXIT_NOT_STOPPED))
                }
            };
            if let Err(e) = write_meta(&cli.out, &command_name(cli.command), &cfg, results) {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_SOLVER);
            }
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_SOLVER })
        }
    }
}
