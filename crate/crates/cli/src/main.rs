use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod error;
mod output;

use config::Reader;
use error::CliResult;

const KEYS_HELP: &str = "Settings come from `--config FILE` (lines of `key = value`, `#` comments) \
and from trailing `--key value` flags, which override the file. Unknown keys are rejected.";

#[derive(Parser)]
#[command(name = "seqstruct", version, about = "Serialize structured data, fit sequence models, recover densities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (kind = vdp | tree | set | propositional).
    Gen(Common),
    /// Sample a serialization corpus from a dataset.
    Serialize(Common),
    /// Train a sequence model on freshly sampled serializations.
    Train(Common),
    /// Estimate instance probabilities with the recovery estimator.
    Recover(Common),
    /// Evaluate a discriminative model.
    Eval(Common),
}

#[derive(Args)]
#[command(after_help = KEYS_HELP)]
struct Common {
    /// Configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Key overrides: `--key value`, `--key=value`, or `--key` for `true`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

fn reader(c: &Common) -> CliResult<Reader> {
    let overrides = config::parse_overrides(&c.overrides)?;
    Ok(Reader::new(config::merge(c.config.as_deref(), overrides)?))
}

fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Gen(c) => commands::gen::run(reader(c)?),
        Command::Serialize(c) => commands::serialize::run(reader(c)?),
        Command::Train(c) => commands::train::run(reader(c)?),
        Command::Recover(c) => commands::recover::run(reader(c)?),
        Command::Eval(c) => commands::eval::run(reader(c)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.kind.exit_code())
        }
    }
}
