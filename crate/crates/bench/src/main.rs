use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use lowmem_bench::{run_experiment, run_lowerbound_demo, DemoConfig, ExperimentConfig, TrialMode};
use lowmem_bench::checks::CheckLevel;
use lowmem_experts::stream::write_matrix_csv;
use lowmem_experts::LossOracle;

#[derive(Parser)]
#[command(name = "lowmem-bench", version, about = "Run low-memory expert learners and check their invariants")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every trial, write traces and a summary.
    Run { config: PathBuf },
    /// Repeated matching-pennies game against a best-responding opponent.
    DemoLb { config: PathBuf },
    /// Write the full loss matrix of the config's stream as CSV.
    DumpStream {
        config: PathBuf,
        /// Output file (stdout when omitted).
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Stream seed (defaults to the config's stream seed or first trial seed).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Invariant checks only, without regret bookkeeping.
    Check { config: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = run_experiment(&cfg, TrialMode::Full)?;
            print_json(&report.summary)?;
            Ok(report.passed())
        }
        Command::Check { config } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if cfg.checks == CheckLevel::Off {
                cfg.checks = CheckLevel::Epoch;
            }
            cfg.output = None;
            let report = run_experiment(&cfg, TrialMode::ChecksOnly)?;
            for t in &report.trials {
                if let Some(err) = &t.error {
                    eprintln!("seed {}: {err}", t.seed);
                }
                for v in t.result.iter().flat_map(|r| &r.violations) {
                    eprintln!(
                        "seed {} day {} level {} epoch {:?}: {} {}\n{}",
                        t.seed, v.day, v.level, v.epoch, v.kind, v.detail, v.pool_dump
                    );
                }
            }
            print_json(&report.summary)?;
            Ok(report.passed())
        }
        Command::DemoLb { config } => {
            let cfg = DemoConfig::load(&config)?;
            let report = run_lowerbound_demo(&cfg)?;
            print_json(&report)?;
            Ok(report.passed)
        }
        Command::DumpStream { config, out, seed } => {
            let cfg = ExperimentConfig::load(&config)?;
            let seed = seed.or(cfg.stream_seed).unwrap_or(cfg.seeds[0]);
            let oracle = LossOracle::make(cfg.stream_params(seed), &cfg.stream)?;
            match out {
                Some(path) => {
                    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                    write_matrix_csv(&oracle, BufWriter::new(f))?;
                }
                None => write_matrix_csv(&oracle, io::stdout().lock())?,
            }
            Ok(true)
        }
    }
}
