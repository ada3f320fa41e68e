//! `zonosafe` — data-driven synthesis of safe state-feedback controllers.
//!
//! Subcommands reproduce the benchmark experiments end to end: single-shot
//! synthesis with empirical verification, closed-loop trajectory rollouts,
//! set-membership identification, family-nesting sample dumps, and Monte
//! Carlo sweeps over noise scales or contraction factors.
//!
//! Exit codes: 0 on success, 2 when a single-shot synthesis is infeasible,
//! 3 on configuration errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use zonosafe_core::data::{batch_from_csv, BatchTag};
use zonosafe_core::harness::{
    self, nesting_to_csv, shrinkage_to_csv, sweep_summary, sweep_to_csv, trajectories_to_csv,
    trials_to_csv, ExperimentConfig, ModeSelect,
};
use zonosafe_core::io::{load_json, save_json};

#[derive(Parser)]
#[command(name = "zonosafe", version, about)]
struct Cli {
    /// Experiment configuration file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override the configured base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Which synthesis modes to run.
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Prior,
    Noprior,
    Both,
}

impl From<ModeArg> for ModeSelect {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Prior => ModeSelect::Prior,
            ModeArg::Noprior => ModeSelect::NoPrior,
            ModeArg::Both => ModeSelect::Both,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a controller at the configured point and verify it
    /// against the true plant.
    Synth {
        /// Monte Carlo trials for the empirical verifier.
        #[arg(long, default_value_t = 10_000)]
        verify_trials: usize,
    },
    /// Roll out certified closed-loop trajectories from safe-set boundary
    /// points.
    Simulate {
        #[arg(long, default_value_t = 8)]
        starts: usize,
        #[arg(long, default_value_t = 100)]
        steps: usize,
    },
    /// Refine a prior with a source-task batch and report hull shrinkage.
    Id {
        /// Source batch CSV (`t, x1.., u1..` rows).
        #[arg(long)]
        batch: PathBuf,
        /// Prior file (JSON); defaults to the config's loose box prior.
        #[arg(long)]
        prior: Option<PathBuf>,
    },
    /// Sample the nested closed-loop families for external plotting.
    Nesting {
        #[arg(long, default_value_t = 500)]
        samples: usize,
    },
    /// Monte Carlo sweep over the configured grid.
    Sweep,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, String> {
    let mut cfg: ExperimentConfig = match &cli.config {
        Some(path) => load_json(path).map_err(|e| format!("{}: {e}", path.display()))?,
        None => return Err("--config <file> is required".into()),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = cli.mode {
        cfg.modes = mode.into();
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn run(cli: &Cli, cfg: &ExperimentConfig) -> anyhow::Result<ExitCode> {
    std::fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::Synth { verify_trials } => {
            harness::write_metadata(&cli.out, cfg, "synth")?;
            let run = harness::run_synth(cfg, *verify_trials)?;
            match run.certificate {
                Some(cert) => {
                    save_json(cli.out.join("certificate.json"), &cert)?;
                    if let Some(report) = &run.report {
                        save_json(cli.out.join("verify_report.json"), report)?;
                        println!(
                            "feasible: gain {:?}, verified {}/{} trials clean (max violation {:.3e})",
                            cert.gain.k.as_slice().unwrap_or(&[]),
                            report.trials - report.violations,
                            report.trials,
                            report.max_violation
                        );
                    }
                    Ok(ExitCode::SUCCESS)
                }
                None => {
                    eprintln!("synthesis infeasible at the configured point");
                    Ok(ExitCode::from(2))
                }
            }
        }
        Command::Simulate { starts, steps } => {
            harness::write_metadata(&cli.out, cfg, "simulate")?;
            let (cert, trajectories) = harness::run_simulate(cfg, *starts, *steps)?;
            save_json(cli.out.join("certificate.json"), &cert)?;
            trajectories_to_csv(&trajectories, cli.out.join("trajectories.csv"))?;
            let safe = cfg.safe_polytope()?;
            let mut exits = 0usize;
            for (_, traj) in &trajectories {
                exits += traj
                    .states
                    .iter()
                    .filter(|x| !safe.contains(x, 1e-9))
                    .count();
            }
            println!(
                "{} trajectories of {} steps written; {} safe-set exits",
                trajectories.len(),
                steps,
                exits
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Id { batch, prior } => {
            harness::write_metadata(&cli.out, cfg, "id")?;
            let source = batch_from_csv(batch, BatchTag::SourceTask)?;
            let prior = match prior {
                Some(path) => load_json(path)?,
                None => cfg.box_prior(),
            };
            let run = harness::run_id(cfg, &source, &prior)?;
            save_json(cli.out.join("refined_prior.json"), &run.refined)?;
            shrinkage_to_csv(&run, cli.out.join("shrinkage.csv"))?;
            println!("refined prior written ({} hull entries)", run.shrinkage.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Nesting { samples } => {
            harness::write_metadata(&cli.out, cfg, "nesting")?;
            let result = harness::run_nesting(cfg, *samples)?;
            nesting_to_csv(&result, cli.out.join("nesting.csv"))?;
            println!("{} labelled entries written", result.rows.len());
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep => {
            harness::write_metadata(&cli.out, cfg, "sweep")?;
            let result = harness::run_sweep(cfg, cli.jobs.max(1))?;
            sweep_to_csv(&result, cli.out.join("sweep.csv"))?;
            trials_to_csv(&result, cli.out.join("sweep_trials.csv"))?;
            print!("{}", sweep_summary(&result));
            println!("sweep finished in {:.1} s", result.runtime_seconds);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(&cli) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("config error: {msg}");
            return ExitCode::from(3);
        }
    };
    match run(&cli, &cfg) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
