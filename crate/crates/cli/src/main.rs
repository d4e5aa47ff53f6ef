use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use tmpp::config::RunConfig;
use tmpp::datagen::{dataset_stats, generate};
use tmpp::instances::Scheme;
use tmpp::log::{read_log, write_log};
use tmpp::models::{lookup, ModelKind};
use tmpp::pipeline::{Runner, Stage};

#[derive(Parser)]
#[command(name = "tmpp", version, about = "Purchase prediction pipeline over B2C behavior logs")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Number of user-hash shards; overrides the config.
    #[arg(long, global = true)]
    shards: Option<usize>,
    /// Print tables as CSV.
    #[arg(long, global = true)]
    csv: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic log to the configured log path.
    Generate,
    /// Drop crawler users.
    Clean,
    /// Per-month dataset statistics of a log.
    Stats {
        /// Log to describe; defaults to the configured log.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Split into visible log and answer set.
    Split,
    /// Candidate pairs with targets for every feature-span end.
    BuildInstances,
    /// Feature vectors for every instance file.
    ExtractFeatures,
    /// Train every registered model, or one (model, scheme) pair.
    Train {
        #[arg(long, value_parser = ["lr", "gbrt", "rf", "global"])]
        model: Option<String>,
        #[arg(long, value_parser = ["fixed", "sliding"])]
        scheme: Option<String>,
    },
    /// Fit the per-group blends on the held-out users.
    Blend,
    /// Tune ensemble weights and the decision rule on the answer month.
    Tune,
    /// Write the prediction file.
    Predict,
    /// Score the prediction against the answer set.
    Evaluate,
    /// Day distribution of hits within the answer month.
    AnalyzeHits,
    /// Run every stage, skipping those already up to date.
    Pipeline,
}

fn print_file(path: &std::path::Path) -> Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    print!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let Some(config_path) = cli.config.as_ref() else {
        bail!("--config <file> is required");
    };
    let cfg = RunConfig::load(config_path)?;
    let runner = Runner::new(cfg, cli.shards);
    let stage = |s: Stage| -> Result<()> {
        let record = runner.run_stage(s)?;
        for o in &record.outputs {
            log::info!("wrote {}", runner.dir.root().join(o).display());
        }
        Ok(())
    };
    match cli.command {
        Command::Generate => {
            let log = generate(&runner.cfg.generator())?;
            let path = &runner.cfg.paths.log;
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)
                    .with_context(|| format!("creating {}", parent.display()))?;
            }
            write_log(path, &log)?;
            log::info!("wrote {} records to {}", log.len(), path.display());
        }
        Command::Stats { input } => {
            let path = input.unwrap_or_else(|| runner.cfg.paths.log.clone());
            let report = dataset_stats(&read_log(&path)?);
            if cli.csv {
                print!("{}", report.to_csv());
            } else {
                print!("{report}");
            }
        }
        Command::Clean => stage(Stage::Clean)?,
        Command::Split => stage(Stage::Split)?,
        Command::BuildInstances => stage(Stage::BuildInstances)?,
        Command::ExtractFeatures => stage(Stage::ExtractFeatures)?,
        Command::Train { model, scheme } => match model {
            None => {
                if scheme.is_some() {
                    bail!("--scheme needs --model");
                }
                stage(Stage::Train)?
            }
            Some(m) => {
                let kind: ModelKind = m.parse()?;
                let scheme: Option<Scheme> = scheme.map(|s| s.parse()).transpose()?;
                if kind != ModelKind::Global && scheme.is_none() {
                    bail!("--model {m} needs --scheme fixed|sliding");
                }
                let spec = lookup(kind, scheme)?;
                let path = runner.train_one(spec.name, &mut Default::default())?;
                log::info!("wrote {}", path.display());
            }
        },
        Command::Blend => stage(Stage::Blend)?,
        Command::Tune => stage(Stage::Tune)?,
        Command::Predict => stage(Stage::Predict)?,
        Command::Evaluate => {
            stage(Stage::Evaluate)?;
            print_report(&runner, cli.csv)?;
        }
        Command::AnalyzeHits => {
            stage(Stage::AnalyzeHits)?;
            print_file(&runner.dir.hit_days())?;
        }
        Command::Pipeline => {
            let ran = runner.run_pipeline()?;
            let names: Vec<&str> = ran.iter().map(|s| s.name()).collect();
            log::info!("stages run: {}", if names.is_empty() { "none".into() } else { names.join(", ") });
            print_report(&runner, cli.csv)?;
        }
    }
    Ok(())
}

fn print_report(runner: &Runner, csv: bool) -> Result<()> {
    if csv {
        print_file(&runner.dir.report_csv())
    } else {
        print_file(&runner.dir.report())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
