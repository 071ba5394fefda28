//! Batch front door: parse a JSON run configuration, execute a named
//! command, and emit a CSV or JSON report with the resolved config
//! embedded for provenance. Outputs are deterministic given (config,
//! seed).
//!
//! Exit codes: 0 success, 2 configuration error, 3 axiom or invariant
//! violation, 4 numerical non-convergence.

// NaN-rejecting guards such as `!(x > 0.0)` are intentional.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use moran::MoranError;

use config::{parse_config, Command, RunConfig};

/// Exact and empirical fractal dimensions of Moran sets and measures.
///
/// Defaults applied to configs: depth 50, tail_window 10, seed 0, scale
/// base 1/3 (grid 3^-4 ... shrinking by 1/3, 7 scales), solver tolerance
/// 1e-12. All defaults are echoed into the output config block.
#[derive(Parser, Debug)]
#[command(name = "moran", version, about)]
struct Cli {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Command to run, overriding the config's `command` field:
    /// dim, local-dim, lq, realize, estimate, verify, or conditions.
    #[arg(long)]
    command: Option<Command>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format.
    #[arg(long, default_value = "json", value_parser = ["csv", "json"])]
    format: String,
    /// Seed override for sampled paths and points.
    #[arg(long)]
    seed: Option<u64>,
    /// Depth override.
    #[arg(long)]
    depth: Option<usize>,
    /// Suppress informational messages on stderr.
    #[arg(long)]
    quiet: bool,
}

fn exit_code_for(err: &MoranError) -> u8 {
    match err {
        MoranError::AxiomViolation(_) => 3,
        MoranError::NonConvergence(_) => 4,
        _ => 2,
    }
}

fn run(cli: &Cli) -> Result<(), (u8, String)> {
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| (2, format!("cannot read {}: {e}", cli.config.display())))?;
    let mut config: RunConfig =
        parse_config(&text).map_err(|e| (exit_code_for(&e), e.to_string()))?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(depth) = cli.depth {
        if depth == 0 || config.tail_window > depth {
            return Err((2, format!("--depth {depth} conflicts with tail_window")));
        }
        config.depth = depth;
    }
    let command = cli
        .command
        .or(config.command)
        .ok_or((2, "no command given (config `command` field or --command)".to_string()))?;
    config.command = Some(command);

    if !cli.quiet {
        eprintln!(
            "moran: running {:?} at depth {} (seed {})",
            command, config.depth, config.seed
        );
    }
    let output =
        commands::run_command(command, &config).map_err(|e| (exit_code_for(&e), e.to_string()))?;

    let config_json =
        serde_json::to_string(&config).expect("resolved configs serialize infallibly");
    let rendered = match cli.format.as_str() {
        "json" => {
            let doc = json!({
                "config": serde_json::from_str::<serde_json::Value>(&config_json).unwrap(),
                "result": output.result,
            });
            let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
            s.push('\n');
            s
        }
        _ => format!("# config: {config_json}\n{}", output.csv),
    };

    match &cli.out {
        Some(path) => std::fs::write(path, rendered)
            .map_err(|e| (2, format!("cannot write {}: {e}", path.display())))?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(rendered.as_bytes())
                .map_err(|e| (2, format!("cannot write to stdout: {e}")))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, message)) => {
            eprintln!("moran: error: {message}");
            ExitCode::from(code)
        }
    }
}
