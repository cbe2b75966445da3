use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use fdris::harness::{
    load_config, run_cdf_eval, run_training, selftest, signaling_bits, write_cdf, HarnessError,
    Profile, SchemeKind,
};
use fdris::nnet::Checkpoint;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "fdris", version, about = "Full-duplex two-RIS simulator and DDPG trainer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train all runs of an experiment and write metrics and checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = parse_profile)]
        profile: Option<Profile>,
        /// Output directory (overrides experiment.out).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Greedy rollout of a checkpoint; writes cdf.csv to the output directory.
    EvalCdf {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_parser = parse_profile)]
        profile: Option<Profile>,
    },
    /// Bits per step sent from the BS to both panels.
    Signaling {
        #[arg(long)]
        variant: String,
        #[arg(long)]
        n1: usize,
        #[arg(long)]
        n2: usize,
        #[arg(long)]
        bits: Option<u32>,
        #[arg(long)]
        groups: Option<usize>,
    },
    /// Run the built-in numerical checks.
    Selftest,
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    s.parse()
}

enum Failure {
    Config(anyhow::Error),
    Numeric(anyhow::Error),
    Other(anyhow::Error),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(_) | HarnessError::CheckpointMismatch(_) => Self::Config(e.into()),
            HarnessError::NonFinite(_) => Self::Numeric(e.into()),
            _ => Self::Other(e.into()),
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train { config, profile, out } => {
            let mut cfg = load_config(&config, profile).map_err(HarnessError::from)?;
            if let Some(out) = out {
                cfg.out = out;
            }
            let report = run_training(&cfg)?;
            if let Some(last) = report.mean.last() {
                println!(
                    "{} runs of {} finished; final episode mean reward {:.4} (r_BS {:.4}, r_DL {:.4})",
                    report.runs.len(),
                    cfg.variant,
                    last.mean_reward,
                    last.mean_r_bs,
                    last.mean_r_dl
                );
            }
            println!("results written to {}", cfg.out.display());
        }
        Command::EvalCdf {
            config,
            checkpoint,
            profile,
        } => {
            let cfg = load_config(&config, profile).map_err(HarnessError::from)?;
            let ckpt = Checkpoint::load(&checkpoint)
                .with_context(|| format!("loading {}", checkpoint.display()))
                .map_err(Failure::Config)?;
            let samples = run_cdf_eval(&cfg, &ckpt, cfg.eval_episodes, cfg.eval_steps)?;
            let path = cfg.out.join("cdf.csv");
            write_cdf(&samples, &path)?;
            println!("{} samples written to {}", samples.r_bs.len(), path.display());
        }
        Command::Signaling {
            variant,
            n1,
            n2,
            bits,
            groups,
        } => {
            let scheme = variant
                .parse::<SchemeKind>()
                .and_then(|k| k.with(bits, groups))
                .map_err(|e| Failure::Config(anyhow::anyhow!(e)))?;
            println!("{}", signaling_bits(scheme, n1, n2));
        }
        Command::Selftest => {
            let results = selftest();
            let mut failed = 0;
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
                failed += usize::from(!r.passed);
            }
            if failed > 0 {
                return Err(Failure::Numeric(anyhow::anyhow!("{failed} check(s) failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Numeric(e)) => {
            eprintln!("numerical check failed: {e:#}");
            ExitCode::from(EXIT_NUMERIC)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
