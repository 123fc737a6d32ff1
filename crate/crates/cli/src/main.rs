use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

mod commands;
mod config;

use commands::{CmdError, Outputs};
use config::{parse_config, ConfigError, RunConfig};

/// Memristor-modeled bandwidth allocation simulator.
#[derive(Debug, Parser)]
#[command(name = "memsched", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(short, long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Output root (overrides `output.dir`).
    #[arg(long, global = true, value_name = "PATH")]
    out_dir: Option<PathBuf>,

    /// Overrides the policy (and restricts experiments to it).
    #[arg(long, global = true, value_name = "NAME")]
    policy: Option<String>,

    /// Only report errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Run one policy on the configured chunks and write the trace.
    Simulate,
    /// Progressive SVD image transfer under each policy.
    SvdDemo,
    /// Seeded Monte Carlo policy comparison.
    MonteCarlo,
    /// Makespan against chunk count.
    Scaling,
    /// Richest-first dominance condition study.
    Dominance,
    /// Reactive/deliberative controller over payload episodes.
    HybridDemo,
    /// Check the config and exit.
    Validate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::SvdDemo => "svd-demo",
            Command::MonteCarlo => "monte-carlo",
            Command::Scaling => "scaling",
            Command::Dominance => "dominance",
            Command::HybridDemo => "hybrid-demo",
            Command::Validate => "validate",
        }
    }
}

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn load(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let cfg = match &cli.config {
        Some(path) => parse_config(path)?,
        // svd-demo can run on the built-in fixture without a file
        None => config::parse_str("{}")?,
    };
    let cfg = cfg.resolve(cli.seed, cli.out_dir.clone(), cli.policy.clone());
    let violations = cfg.violations();
    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(violations))
    }
}

fn write_outputs(dir: &Path, command: Command, cfg: &RunConfig, files: &Outputs) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, bytes) in files {
        std::fs::write(dir.join(name), bytes)?;
    }
    let names: Vec<&str> = files.iter().map(|(n, _)| n.as_str()).collect();
    let manifest = json!({
        "command": command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "outputs": names,
        "config": cfg,
    });
    let mut text = serde_json::to_vec_pretty(&manifest).expect("serializable");
    text.push(b'\n');
    std::fs::write(dir.join("manifest.json"), text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    if cli.config.is_none() && !matches!(cli.command, Command::SvdDemo) {
        eprintln!("error: {} needs -c/--config", cli.command.name());
        return ExitCode::from(EXIT_CONFIG);
    }
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };

    let result = match cli.command {
        Command::Validate => {
            if !cli.quiet {
                println!("config ok");
            }
            return ExitCode::SUCCESS;
        }
        Command::Simulate => commands::simulate(&cfg),
        Command::SvdDemo => commands::svd_demo(&cfg),
        Command::MonteCarlo => commands::monte_carlo_cmd(&cfg),
        Command::Scaling => commands::scaling_cmd(&cfg),
        Command::Dominance => commands::dominance_cmd(&cfg),
        Command::HybridDemo => commands::hybrid_demo(&cfg),
    };
    let files = match result {
        Ok(f) => f,
        Err(CmdError::Config(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(CmdError::Runtime(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    let dir = &cfg.output.dir;
    if let Err(e) = write_outputs(dir, cli.command, &cfg, &files) {
        eprintln!("error: writing outputs to {}: {e}", dir.display());
        return ExitCode::from(EXIT_RUNTIME);
    }
    if !cli.quiet {
        for (name, _) in &files {
            println!("wrote {}", dir.join(name).display());
        }
        println!("wrote {}", dir.join("manifest.json").display());
    }
    ExitCode::SUCCESS
}
