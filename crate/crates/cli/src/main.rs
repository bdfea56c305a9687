use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use cmab_core::experiment::{cmd_hitting_time, cmd_run, cmd_verify, ExperimentConfig};
use cmab_core::{configure_threads, Execution};

/// Seeded combinatorial semi-bandit experiments.
#[derive(Parser, Debug)]
#[command(name = "cmab", version, about)]
struct Cli {
    /// Directory for artifacts; overrides `outdir` in a config file.
    #[arg(long, global = true)]
    outdir: Option<PathBuf>,

    /// Worker threads for batch runs (0 = one per core).
    #[arg(long, global = true, env = "CMAB_THREADS", default_value_t = 0)]
    threads: usize,

    /// Run batches on the calling thread only.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every configured policy on one shared instance and write per-policy CSV traces.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the built-in property suites and write report.txt.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// First time CTS plays the optimal super arm of the exponential-constant instance.
    HittingTime {
        #[arg(long, value_delimiter = ',', default_value = "4,6,8,10")]
        kstar: Vec<usize>,
        #[arg(long, default_value_t = 1000)]
        runs: usize,
        #[arg(long, default_value_t = 1_000_000)]
        cap: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Returns `Ok(false)` when the command ran but reported failures.
fn dispatch(cli: Cli) -> Result<bool> {
    configure_threads(cli.threads).context("configuring worker threads")?;
    let execution = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    let default_outdir = || PathBuf::from("out");

    match cli.command {
        Command::Run { config } => {
            let parsed = ExperimentConfig::load(&config).with_context(|| format!("{}", config.display()))?;
            let outdir = cli.outdir.or_else(|| parsed.outdir.clone()).unwrap_or_else(default_outdir);
            let summary = cmd_run(&parsed, &outdir, execution)
                .with_context(|| format!("running {} into {}", config.display(), outdir.display()))?;
            println!("optimal value {:.6}, artifacts in {}", summary.optimal_value, outdir.display());
            for p in &summary.policies {
                let last = p.stats.mean.len() - 1;
                println!(
                    "{:<11} T={:<8} mean regret {:>12.3}  std {:>10.3}  runs {}  ({:.1}s)",
                    p.policy.name(),
                    p.stats.checkpoints[last],
                    p.stats.mean[last],
                    p.stats.std[last],
                    p.stats.runs,
                    p.wall_time_seconds
                );
            }
            Ok(true)
        }
        Command::Verify { seed } => {
            let outdir = cli.outdir.unwrap_or_else(default_outdir);
            let (reports, text) = cmd_verify(&outdir, seed).context("running verification suites")?;
            print!("{text}");
            Ok(reports.iter().all(|r| r.passed()))
        }
        Command::HittingTime { kstar, runs, cap, seed } => {
            let outdir = cli.outdir.unwrap_or_else(default_outdir);
            let rows = cmd_hitting_time(&kstar, runs, cap, seed, &outdir, execution)?;
            println!("{:>6} {:>14} {:>14} {:>9}", "k*", "mean T1", "std T1", "timeouts");
            for r in &rows {
                println!(
                    "{:>6} {:>14.2} {:>14.2} {:>9}{}",
                    r.k_star,
                    r.stats.mean,
                    r.stats.std,
                    r.stats.timeouts,
                    if r.flagged { "  (over 10% timed out; mean is censored at the cap)" } else { "" }
                );
            }
            Ok(true)
        }
    }
}
