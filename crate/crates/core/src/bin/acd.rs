use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use acd_core::pipeline::{self, PipelineConfig, SweepPlan};
use acd_core::Error;

/// Unsupervised aspect category detection for review sentences.
#[derive(Parser)]
#[command(name = "acd", version)]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Artifact directory (overrides `artifacts` in the config).
    #[arg(long, global = true)]
    artifacts: Option<PathBuf>,
    /// Seed for every random component.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Extra `key=value` settings applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split and filter unlabeled reviews into candidate sentences.
    Ingest,
    /// Train word embeddings on the ingested sentences.
    Train,
    /// Build the similarity kernel and cluster the sentence vectors.
    Cluster,
    /// Assign categories to the sentences of a file, written as JSON lines.
    Detect {
        /// Plain text lines or JSON objects with `text` and optional `id`.
        input: PathBuf,
        /// Defaults to `detections.jsonl` in the artifact directory.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Tune the threshold and report micro-averaged metrics with baselines.
    Eval,
    /// Sweep alpha or the number of clusters and write a CSV table.
    Sweep {
        #[arg(long, value_parser = ["alpha", "k"])]
        param: String,
        /// Comma-separated values or an inclusive `start:stop:step` range.
        #[arg(long)]
        values: Option<String>,
    },
}

fn load_config(cli: &Cli) -> acd_core::Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let cwd = PathBuf::from(".");
    for o in &cli.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{o}`")))?;
        config.set(k.trim(), v.trim(), &cwd)?;
    }
    if let Some(dir) = &cli.artifacts {
        config.artifacts = dir.clone();
    }
    if let Some(seed) = cli.seed {
        config.set_seed(seed);
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli) -> acd_core::Result<()> {
    let config = load_config(cli)?;
    match &cli.command {
        Command::Ingest => {
            pipeline::run_ingest(&config)?;
        }
        Command::Train => {
            pipeline::run_train(&config)?;
        }
        Command::Cluster => {
            pipeline::run_cluster(&config)?;
        }
        Command::Detect { input, output } => {
            let output = output.clone().unwrap_or_else(|| config.artifact("detections.jsonl"));
            pipeline::run_detect(&config, input, &output)?;
        }
        Command::Eval => {
            let report = pipeline::run_eval(&config)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::Sweep { param, values } => {
            let plan = match values {
                Some(v) => SweepPlan::parse(param, v)?,
                None => SweepPlan::default_for(param)?,
            };
            print!("{}", pipeline::run_sweep(&config, &plan)?.to_csv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match std::panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
        Err(_) => ExitCode::from(1),
    }
}
