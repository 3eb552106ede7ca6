use std::path::PathBuf;
use std::process::ExitCode;

use chartkit_cli::config::{bundled, BUNDLED};
use chartkit_cli::pipeline::write_report;
use chartkit_cli::{CliError, Command, Pipeline, PipelineConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "chartkit", version, about = "Channel charting pipeline: synthesize CSI, train a chart, evaluate and plot it")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct StageArgs {
    /// Config file, or the name of a bundled config (see `chartkit config --list`).
    #[arg(short, long)]
    config: String,
    /// Dotted override such as `training.epochs=5`; the value is parsed as JSON when possible.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory, overriding `output_dir`.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize the CSI dataset.
    Generate(StageArgs),
    /// Compute features from the dataset.
    Preprocess(StageArgs),
    /// Train the model on the features.
    Train(StageArgs),
    /// Embed the features with the trained model.
    Embed(StageArgs),
    /// Compute chart metrics and baselines.
    Eval(StageArgs),
    /// Draw SVG scatter plots.
    Plot(StageArgs),
    /// Run every stage in order.
    All(StageArgs),
    /// Merge metric JSON files into one CSV table.
    Report {
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
        #[arg(short, long, default_value = "report.csv")]
        output: PathBuf,
    },
    /// Print a bundled config.
    Config {
        #[arg(default_value = "toy")]
        name: String,
        #[arg(long)]
        list: bool,
    },
}

fn stage(command: Command, args: StageArgs) -> Result<(), CliError> {
    let mut config = PipelineConfig::load(&args.config, &args.overrides)?;
    if let Some(out) = args.out {
        config.output_dir = out;
    }
    Pipeline::new(config).run(command)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Cmd::Generate(a) => stage(Command::Generate, a),
        Cmd::Preprocess(a) => stage(Command::Preprocess, a),
        Cmd::Train(a) => stage(Command::Train, a),
        Cmd::Embed(a) => stage(Command::Embed, a),
        Cmd::Eval(a) => stage(Command::Eval, a),
        Cmd::Plot(a) => stage(Command::Plot, a),
        Cmd::All(a) => stage(Command::All, a),
        Cmd::Report { metrics, output } => write_report(&metrics, &output),
        Cmd::Config { name, list } => {
            if list {
                for (n, _) in BUNDLED {
                    println!("{n}");
                }
                return Ok(());
            }
            let text = bundled(&name).ok_or_else(|| CliError::Config(format!("no bundled config named `{name}`")))?;
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
