use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use ksns::config::{parse_config, ParsedConfig};
use ksns::exponents::{certify, parse_rational};
use ksns::runner::{run, sweep, HaltReason};

/// Worker threads for field kernels and sweeps; defaults to all cores.
const WORKERS_ENV: &str = "KSNS_WORKERS";

#[derive(Parser)]
#[command(name = "ksns", version, about = "Chemotaxis-fluid simulator with a priori estimate diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation described by a config file.
    Simulate {
        config: PathBuf,
        /// Directory for diagnostics.csv, snapshots/ and report.json.
        #[arg(long, default_value = "ksns-out")]
        out: PathBuf,
    },
    /// Run every (alpha, eps) pair listed under sweep.alpha / sweep.eps.
    Sweep {
        config: PathBuf,
        #[arg(long, default_value = "ksns-sweep")]
        out: PathBuf,
    },
    /// Certify the exponent lemma exactly and print a JSON report.
    CheckExponents {
        #[arg(long, default_value = "13/8")]
        p: String,
        /// Number of alpha samples in (1/3, 3/4].
        #[arg(long, default_value_t = 200)]
        samples: i64,
    },
    /// Decode a snapshot, check it and print a JSON summary.
    VerifySnapshot { path: PathBuf },
}

fn load(path: &Path) -> Result<ParsedConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed = parse_config(&text)?;
    for d in &parsed.applied_defaults {
        eprintln!("default: {d}");
    }
    Ok(parsed)
}

fn init_workers() -> Result<()> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .with_context(|| format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))?;
        anyhow::ensure!(n > 0, "{WORKERS_ENV} must be positive");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<u8> {
    init_workers()?;
    match cli.command {
        Command::Simulate { config, out } => {
            let parsed = load(&config)?;
            let report = run(&parsed.run, Some(&out))?;
            eprintln!(
                "{:?}: t = {}, {} steps ({} rejected), max sup n = {:.6e}, {:.1}s",
                report.halt_reason,
                report.t_final,
                report.steps,
                report.rejected_steps,
                report.max_sup_n,
                report.wall_time_s
            );
            if let Some(m) = &report.message {
                eprintln!("{m}");
            }
            eprintln!("outputs in {}", out.display());
            Ok(report.halt_reason.exit_code() as u8)
        }
        Command::Sweep { config, out } => {
            let cfg = load(&config)?.into_sweep()?;
            let report = sweep(&cfg, Some(&out))?;
            let mut code = 0;
            for e in &report.entries {
                eprintln!(
                    "alpha = {}, eps = {}: {} rate {:.4e}, max sup n {:.6e}, bounded {}",
                    e.alpha,
                    e.eps,
                    e.halt_reason.map_or("error".into(), |h| format!("{h:?}")),
                    e.blowup_rate,
                    e.max_sup_n,
                    e.bounded
                );
                if let Some(err) = &e.error {
                    eprintln!("  {err}");
                }
                let c = e.halt_reason.map_or(1, HaltReason::exit_code);
                code = match (code, c) {
                    (1, _) | (_, 1) => 1,
                    (2, _) | (_, 2) => 2,
                    _ => 0,
                };
            }
            eprintln!("sweep report in {}", out.join("sweep.json").display());
            Ok(code as u8)
        }
        Command::CheckExponents { p, samples } => {
            anyhow::ensure!(samples > 0, "--samples must be positive");
            let p = parse_rational(&p)?;
            let report = certify(&p, samples)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if !report.all_feasible {
                let failed = report.samples.iter().filter(|s| !s.feasible).count();
                eprintln!("{failed} of {samples} samples are infeasible");
                return Ok(1);
            }
            Ok(0)
        }
        Command::VerifySnapshot { path } => {
            let summary = ksns::snapshot::verify(&path)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
