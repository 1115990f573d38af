use clap::{Parser, Subcommand};
use geowave::cli::{cmd_holder, cmd_recover, cmd_simulate_dtn, cmd_verify};
use geowave::config::{RunConfig, RunMode};
use std::path::PathBuf;
use std::process::ExitCode;

/// Simulate the Dirichlet-to-Neumann map of a damped Riemannian wave
/// equation, probe it along geodesics, and recover the absorption and
/// potential coefficients from the geodesic X-ray transform.
#[derive(Parser)]
#[command(name = "geowave", version, about)]
struct Args {
    #[command(subcommand)]
    command: Command,

    /// Path to the key-value run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Run mode override: full | bypass | verify-only.
    #[arg(long, global = true)]
    mode: Option<String>,

    /// Random seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the eikonal/transport/kinetic/kernel/energy/plane-wave checks.
    Verify,
    /// Precompute and cache DtN responses for the probe sweep.
    SimulateDtn,
    /// Recover the coefficient pair and write CSV artifacts.
    Recover,
    /// Amplitude sweep with the log-log consistency fit.
    Holder,
}

fn load_config(args: &Args) -> geowave::Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    if let Some(mode) = &args.mode {
        cfg.mode = match mode.as_str() {
            "full" => RunMode::Full,
            "bypass" => RunMode::Bypass,
            "verify-only" => RunMode::VerifyOnly,
            other => {
                return Err(geowave::Error::Config {
                    line: 0,
                    message: format!("unknown mode '{other}'"),
                })
            }
        };
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(args: &Args) -> geowave::Result<bool> {
    let cfg = load_config(args)?;
    match args.command {
        Command::Verify => {
            let rows = cmd_verify(&cfg)?;
            let mut all = true;
            for row in &rows {
                let status = if row.pass { "pass" } else { "FAIL" };
                println!(
                    "{status}  {:<28} value {:>12.4e}  tolerance {:>10.3e}",
                    row.name, row.value, row.tolerance
                );
                all &= row.pass;
            }
            Ok(all)
        }
        Command::SimulateDtn => {
            let rep = cmd_simulate_dtn(&cfg)?;
            println!(
                "dtn sweep: {} new responses, {} cache hits, gap norm {:.6e}",
                rep.responses_cached, rep.cache_hits, rep.gap_norm
            );
            Ok(true)
        }
        Command::Recover => {
            let rep = cmd_recover(&cfg)?;
            println!(
                "recover [{}]: h {:.4}, kappa {:.4}, a rel err {:.4}, q rel err {:.4}, failed nodes {}",
                rep.stage, rep.h_used, rep.kappa_used, rep.a_rel_error, rep.q_rel_error,
                rep.failed_nodes
            );
            Ok(true)
        }
        Command::Holder => {
            let rep = cmd_holder(&cfg)?;
            for (amp, gap, norm) in &rep.rows {
                println!("amplitude {amp:.4}: gap {gap:.6e}, coefficient norm {norm:.6e}");
            }
            println!("fitted slope {:.4}", rep.slope);
            Ok(rep.slope > 0.0)
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
