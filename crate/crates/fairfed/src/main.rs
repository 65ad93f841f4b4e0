use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fairfed::commands::{cmd_compare, cmd_evaluate, cmd_generate, cmd_train, write_evaluation};
use fairfed::executor::ThreadExecutor;
use fairfed::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "fairfed",
    version,
    about = "Federated group-fairness adapter lab"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override a config value, e.g. `--set federation.rounds=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured dataset as JSONL and print per-site counts.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Dataset file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train every configured seed and write reports and checkpoints.
    Train {
        #[command(flatten)]
        common: Common,
        /// Output directory, overriding `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the fairness report of a prediction CSV.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// CSV with columns id,client,group,label,score.
        #[arg(long)]
        predictions: PathBuf,
        /// Directory for report.json and report.csv; stdout only if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the variant/mode/init/gate grid from the `compare` section.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common, out: Option<PathBuf>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(&common.config, &common.set)?;
    if let Some(out) = out {
        cfg.output_dir = out;
    }
    Ok(cfg)
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable output")
}

fn run(cli: Cli) -> Result<(), CliError> {
    let executor = ThreadExecutor::from_env();
    match cli.command {
        Command::Generate { common, out } => {
            let cfg = load(&common, None)?;
            println!("{}", json(&cmd_generate(&cfg, &out)?));
        }
        Command::Train { common, out } => {
            let cfg = load(&common, out)?;
            let outcome = cmd_train(&cfg, &executor)?;
            let avg = outcome.aggregate.rows.last().expect("aggregate has rows");
            for cell in &avg.cells {
                eprintln!("{:>16}  {}", cell.metric, cell.stats.display_percent());
            }
            println!("{}", outcome.output_dir.join("aggregate.json").display());
        }
        Command::Evaluate {
            common,
            predictions,
            out,
        } => {
            let cfg = load(&common, None)?;
            let report = cmd_evaluate(&cfg, &predictions)?;
            if let Some(dir) = out {
                write_evaluation(&report, &dir)?;
            }
            println!("{}", json(&report));
        }
        Command::Compare { common, out } => {
            let cfg = load(&common, out)?;
            cmd_compare(&cfg, &executor)?;
            println!("{}", cfg.output_dir.join("compare.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
