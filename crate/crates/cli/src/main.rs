use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mad_cli::{execute, CliError, Command, Config};

#[derive(Parser)]
#[command(
    name = "mad",
    version,
    about = "Learn and evaluate minimum-action-distance embeddings"
)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Collect random-policy trajectories.
    Collect(Common),
    /// Train a distance embedding; collects a dataset unless one is given.
    Train(Common),
    /// Score a checkpoint (or the oracle) against ground truth.
    Eval(Common),
    /// Run random-shooting planning episodes.
    Plan(Common),
    /// Export the ground-truth distance table.
    Gt(Common),
    /// Train once per value of `sweep.key`.
    Sweep(Common),
    /// List every config key with its default.
    Keys,
}

#[derive(Args)]
struct Common {
    /// Config file(s), applied in order.
    #[arg(long = "config", value_name = "FILE")]
    configs: Vec<PathBuf>,
    /// Override a key, e.g. `--set train.steps=1000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    dataset: Option<PathBuf>,
}

fn layered(common: &Common) -> Result<Config, CliError> {
    let mut cfg = Config::defaults();
    for path in &common.configs {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        cfg.merge_text(&text, &path.display().to_string())?;
    }
    for s in &common.sets {
        cfg.set_assignment(s)?;
    }
    if let Some(p) = &common.out {
        cfg.set("out", &p.display().to_string())?;
    }
    if let Some(p) = &common.checkpoint {
        cfg.set("checkpoint", &p.display().to_string())?;
    }
    if let Some(p) = &common.dataset {
        cfg.set("dataset.path", &p.display().to_string())?;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, common) = match cli.verb {
        Verb::Collect(c) => (Command::Collect, c),
        Verb::Train(c) => (Command::Train, c),
        Verb::Eval(c) => (Command::Eval, c),
        Verb::Plan(c) => (Command::Plan, c),
        Verb::Gt(c) => (Command::Gt, c),
        Verb::Sweep(c) => (Command::Sweep, c),
        Verb::Keys => {
            for (k, d, help) in mad_cli::config::KEYS {
                println!("{k:<24} {d:<14} {help}");
            }
            return ExitCode::SUCCESS;
        }
    };
    let env_seed = std::env::var("MAD_SEED").ok();
    let result =
        layered(&common).and_then(|cfg| execute(cmd, &cfg, common.seed, env_seed.as_deref()));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mad {}: {e}", cmd.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
