use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::error;

use trajlab::config::RunConfig;
use trajlab::pipeline::{parse_stages, run_pipeline, Stage, StageOutcome};

#[derive(Parser)]
#[command(name = "traj-lab", version, about = "Train tiny language models and analyse their learning trajectories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run several stages (all of them by default).
    Run {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset of data,train,eval,analyze,report.
        #[arg(long)]
        stages: Option<String>,
    },
    /// Generate the corpus, tokenizer and probe suites, then train every seed.
    Train(Common),
    /// Score every checkpoint on every probe suite.
    Eval(Common),
    /// Acquisition times, rank agreement, terciles, ANOVA and bias curves.
    Analyze(Common),
    /// Figures and tables.
    Report(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; TRAJ_LAB_JOBS takes precedence.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let (common, stages) = match cli.command {
        Command::Run { common, stages } => {
            let stages = match stages {
                Some(s) => parse_stages(&s)?,
                None => Stage::ALL.to_vec(),
            };
            (common, stages)
        }
        // `train` also prepares its inputs so a fresh directory works.
        Command::Train(c) => (c, vec![Stage::Data, Stage::Train]),
        Command::Eval(c) => (c, vec![Stage::Eval]),
        Command::Analyze(c) => (c, vec![Stage::Analyze]),
        Command::Report(c) => (c, vec![Stage::Report]),
    };
    let mut cfg = RunConfig::load(&common.config).with_context(|| format!("loading {}", common.config.display()))?;
    if let Some(out) = common.out {
        cfg.out_dir = out;
    }
    let report = run_pipeline(&cfg, &stages, common.jobs)?;
    for (stage, outcome) in &report.stages {
        let what = match outcome {
            StageOutcome::Ran => "done",
            StageOutcome::UpToDate => "up to date",
        };
        println!("{stage:<8} {what}");
    }
    println!("outputs in {}", report.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
