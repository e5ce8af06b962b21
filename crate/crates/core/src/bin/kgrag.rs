//! `kgrag <stage> --config path [--set key=value ...]`
//!
//! Exit codes: 0 success, 2 configuration, 3 missing or stale prerequisite,
//! 4 external service, 1 anything else.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use kgrag::pipeline::{run_stage, PipelineConfig, Stage};
use kgrag::Error;

#[derive(Parser)]
#[command(name = "kgrag", version, about = "Knowledge-graph retrieval pipeline")]
struct Cli {
    /// synth, ingest, label, import-labels, embed, train, retrieve, reason, eval
    stage: String,
    #[arg(long)]
    config: PathBuf,
    /// Override a config value by dotted key, e.g. `retriever.top_k=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Prerequisite { .. } | Error::FingerprintMismatch { .. } => 3,
        e if e.is_external_service() => 4,
        _ => 1,
    }
}

fn run(cli: &Cli) -> kgrag::Result<()> {
    let stage = Stage::parse(&cli.stage)?;
    let cfg = PipelineConfig::load(&cli.config, &cli.set)?;
    let outcome = run_stage(stage, &cfg)?;
    // a closed stdout (e.g. piped into `head`) is not a failure
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}: {}", outcome.stage, outcome.summary);
    for p in &outcome.outputs {
        let _ = writeln!(out, "  wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
