use std::path::PathBuf;
use std::process::ExitCode;

use alertq::harness::{read_summary, run_stage, ExperimentConfig, Stage, StageOptions};
use clap::{Parser, Subcommand};

/// Adaptive fraud-alert thresholds learned with deep Q-learning.
#[derive(Debug, Parser)]
#[command(name = "alertq", version)]
struct Cli {
    /// Experiment configuration (TOML). Defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed; repeat for several runs. Replaces the configured seeds.
    #[arg(long = "seed", global = true)]
    seeds: Vec<u64>,
    /// Output directory. Replaces the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Stage to run when no subcommand is given.
    #[arg(long, value_parser = Stage::NAMES)]
    stage: Option<String>,
    /// Evaluate static thresholds only, without a trained policy.
    #[arg(long, global = true)]
    static_only: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic transaction stream per seed.
    Generate,
    /// Train a Q-network per seed on the training days.
    Train,
    /// Evaluate static thresholds and the trained policy on the test days.
    Evaluate,
    /// Build comparison reports and the cross-seed summary.
    Report,
    /// Run every stage in order.
    All,
    /// Print the resolved configuration.
    Config,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("alertq: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if !cli.seeds.is_empty() {
        config.seeds = cli.seeds.clone();
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    config.validate()?;

    let stage = match (&cli.command, &cli.stage) {
        (Some(_), Some(_)) => return Err("use either a subcommand or --stage, not both".into()),
        (Some(Command::Config), None) => {
            print!("{}", config.to_toml());
            return Ok(());
        }
        (Some(Command::Generate), None) => Stage::Generate,
        (Some(Command::Train), None) => Stage::Train,
        (Some(Command::Evaluate), None) => Stage::Evaluate,
        (Some(Command::Report), None) => Stage::Report,
        (Some(Command::All), None) => Stage::All,
        (None, Some(name)) => Stage::parse(name)?,
        (None, None) => return Err("no stage given; pass a subcommand or --stage <name>".into()),
    };
    let options = StageOptions {
        static_only: cli.static_only,
    };
    run_stage(&config, stage, options)?;
    if matches!(stage, Stage::Report | Stage::All) {
        let summary = read_summary(&config.output_dir)?;
        for s in &summary.seeds {
            let dqn = s.dqn_cnfs.map_or("-".to_string(), |v| format!("{v:.2}"));
            println!(
                "seed {}: dqn {dqn}, best static {} {:.2}, worst static {} {:.2}",
                s.seed, s.best_static, s.best_static_cnfs, s.worst_static, s.worst_static_cnfs
            );
        }
    }
    println!("wrote {}", config.output_dir.display());
    Ok(())
}
