//! `cutoff-lab {oracle|support|mixing|gap|verify} --config <path> [--section.key=value ...]`

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::SystemTime;

use clap::{Parser, ValueEnum};

use artifacts::Artifacts;
use config::{ConfigError, RawConfig, RunConfig, Subcommand};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Oracle,
    Support,
    Mixing,
    Gap,
    Verify,
}

#[derive(Debug, Parser)]
#[command(name = "cutoff-lab", version, about = "Glauber dynamics mixing experiments")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// INI file with [model], [geometry], [method], [run] and [verify] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run the quick acceptance subset (verify only).
    #[arg(long)]
    quick: bool,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    SizeCap(String),
    Numerical(String),
    Acceptance(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::SizeCap(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Acceptance(_) => 5,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::SizeCap(m) | CliError::Numerical(m) | CliError::Acceptance(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.0)
    }
}

impl From<cutoff_lab_core::Error> for CliError {
    fn from(e: cutoff_lab_core::Error) -> Self {
        use cutoff_lab_core::Error as E;
        let msg = e.to_string();
        match e {
            E::SizeCap { .. } => CliError::SizeCap(msg),
            E::Numerical(_) | E::Io(_) => CliError::Numerical(msg),
            E::Geometry(_) | E::InvalidArgument(_) | E::NotMonotone(_) | E::Format(_) => CliError::Config(msg),
        }
    }
}

/// Splits `--section.key=value` overrides from the arguments clap understands.
fn split_overrides(args: Vec<String>) -> (Vec<String>, Vec<String>) {
    args.into_iter().partition(|a| {
        !a.strip_prefix("--").is_some_and(|body| body.split_once('=').is_some_and(|(k, _)| k.contains('.')))
    })
}

fn run() -> Result<(), CliError> {
    let (args, overrides) = split_overrides(std::env::args().collect());
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => Ok(()),
                _ => Err(CliError::Config("invalid command line".into())),
            };
        }
    };
    let sub = match cli.command {
        Command::Oracle => Subcommand::Oracle,
        Command::Support => Subcommand::Support,
        Command::Mixing => Subcommand::Mixing,
        Command::Gap => Subcommand::Gap,
        Command::Verify => Subcommand::Verify,
    };
    let mut raw = RawConfig::defaults();
    if let Some(path) = &cli.config {
        raw.merge_file(path)?;
    }
    for o in &overrides {
        raw.apply_override(o)?;
    }
    let cfg = RunConfig::from_raw(sub, raw)?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot size the worker pool: {e}")))?;
    }
    let started = SystemTime::now();
    let mut out = Artifacts::default();
    out.add("resolved.ini", cfg.raw.to_ini());
    let result = match sub {
        Subcommand::Oracle => commands::oracle(&cfg, &mut out),
        Subcommand::Support => commands::support(&cfg, &mut out),
        Subcommand::Mixing => commands::mixing(&cfg, &mut out),
        Subcommand::Gap => commands::gap(&cfg, &mut out),
        Subcommand::Verify => commands::verify(&cfg, cli.quick, &mut out),
    };
    if result.is_ok() || matches!(result, Err(CliError::Acceptance(_))) {
        out.write(&cfg, started)
            .map_err(|e| CliError::Numerical(format!("cannot write to {}: {e}", cfg.out.display())))?;
        eprintln!("wrote {} files and manifest.json to {}", out.len(), cfg.out.display());
    }
    result
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_split() {
        let args: Vec<String> = ["cutoff-lab", "oracle", "--config", "a.ini", "--model.beta=0.3", "--quick"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let (rest, over) = split_overrides(args);
        assert_eq!(over, vec!["--model.beta=0.3"]);
        assert_eq!(rest, vec!["cutoff-lab", "oracle", "--config", "a.ini", "--quick"]);
    }
}
