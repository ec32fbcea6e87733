use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fuseclin_core::pipeline::{run_all, run_stage, PipelineConfig, Stage, StageSummary};
use fuseclin_core::{Error, Execution};

#[derive(Parser)]
#[command(name = "fuseclin", version, about = "EHR + chest X-ray mortality modelling pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Pipeline configuration (JSON); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run single-threaded.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate the synthetic cohorts named in the config.
    Synth,
    /// Fit the preprocessing plan, folds and augmented image store.
    Preprocess,
    /// Cohort characteristics with group tests.
    Report,
    /// Search and fit the EHR model.
    TrainEhr,
    /// Fold-wise and full-data CXR training.
    TrainCxr,
    /// Search and fit the fusion model.
    TrainFusion,
    /// Metrics with bootstrap intervals, internal and external.
    Evaluate,
    /// Metrics per configured attribute.
    Fairness,
    /// SHAP attributions and, with a teacher extractor, mean Grad-CAM.
    Explain,
    /// ROC curve points.
    Roc,
    /// Every stage in order.
    All,
    /// Print the effective configuration.
    Config,
}

impl Command {
    fn stage(self) -> Option<Stage> {
        Some(match self {
            Command::Synth => Stage::Synth,
            Command::Preprocess => Stage::Preprocess,
            Command::Report => Stage::Report,
            Command::TrainEhr => Stage::TrainEhr,
            Command::TrainCxr => Stage::TrainCxr,
            Command::TrainFusion => Stage::TrainFusion,
            Command::Evaluate => Stage::Evaluate,
            Command::Fairness => Stage::Fairness,
            Command::Explain => Stage::Explain,
            Command::Roc => Stage::Roc,
            Command::All | Command::Config => return None,
        })
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::from_file(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(s: &StageSummary) {
    println!("{}: {} artifact(s) in {:.1}s", s.stage, s.outputs.len(), s.seconds);
    for w in &s.warnings {
        println!("  warning: {w}");
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = load_config(cli)?;
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    match cli.command {
        Command::Config => println!("{}", serde_json::to_string_pretty(&cfg)?),
        Command::All => run_all(&cfg, exec)?.iter().for_each(print_summary),
        c => print_summary(&run_stage(c.stage().expect("stage command"), &cfg, exec)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
