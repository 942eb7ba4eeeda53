//! `slantlab`: run structure and submanifold checks from a config file and
//! emit deterministic reports.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use slantlab_cli::config::{self, OutputFormat};
use slantlab_cli::{emit, runner};

#[derive(Parser)]
#[command(name = "slantlab", version, about = "numerical laboratory for slant submanifold checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured check and write a report.
    Run {
        /// Path to the configuration file.
        config: PathBuf,
        /// Treat skipped and non-conforming entries as failures.
        #[arg(long)]
        strict: bool,
        /// Override the config's random seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the report format.
        #[arg(long, value_parser = ["json", "text"])]
        format: Option<String>,
        /// Write the report to this path instead of the config's output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in chart catalog.
    Catalog,
    /// Run selected checks on one catalog chart.
    Check {
        /// Catalog chart name, e.g. `example_7_5` or `slant_plane(alpha=pi/3)`.
        chart: String,
        /// Comma-separated check names (defaults to all).
        #[arg(long)]
        checks: Option<String>,
        #[arg(long)]
        strict: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_parser = ["json", "text"])]
        format: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn run() -> Result<ExitCode, String> {
    let cli = Cli::parse();
    match cli.command {
        Command::Catalog => {
            for (name, summary) in slantlab_core::catalog::listing() {
                println!("{name:24} {summary}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Run {
            config,
            strict,
            seed,
            format,
            out,
        } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| format!("cannot read {}: {e}", config.display()))?;
            let mut cfg = config::parse_config(&text).map_err(|e| e.to_string())?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            apply_format_override(&mut cfg, format)?;
            if let Some(out) = out {
                cfg.output = Some(out.display().to_string());
            }
            Ok(execute(cfg, strict))
        }
        Command::Check {
            chart,
            checks,
            strict,
            seed,
            format,
            out,
        } => {
            let mut source = String::new();
            source.push_str(&format!("seed = {seed}\n"));
            source.push_str(&format!("[chart {chart}]\ncatalog = {chart}\n"));
            if let Some(checks) = checks {
                source.push_str(&format!("[checks]\nnames = {checks}\n"));
            }
            let mut cfg = config::parse_config(&source).map_err(|e| e.to_string())?;
            apply_format_override(&mut cfg, format)?;
            if let Some(out) = out {
                cfg.output = Some(out.display().to_string());
            }
            Ok(execute(cfg, strict))
        }
    }
}

fn apply_format_override(
    cfg: &mut config::RunConfig,
    format: Option<String>,
) -> Result<(), String> {
    if let Some(f) = format {
        cfg.format = match f.as_str() {
            "json" => OutputFormat::Json,
            "text" => OutputFormat::Text,
            other => return Err(format!("unknown format {other}")),
        };
    }
    Ok(())
}

fn execute(cfg: config::RunConfig, strict: bool) -> ExitCode {
    let report = runner::run_catalog(&cfg);
    let payload = match cfg.format {
        OutputFormat::Json => emit::to_json_bytes(&report),
        OutputFormat::Text => emit::to_text(&report).into_bytes(),
    };
    match &cfg.output {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &payload) {
                eprintln!("error: cannot write {path}: {e}");
                return ExitCode::from(2);
            }
            eprint!("{}", emit::to_summary(&report));
            eprintln!("report written to {path}");
        }
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&payload).ok();
        }
    }
    if report.failed(strict) {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}
