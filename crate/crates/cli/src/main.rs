//! `blochlab` command-line interface.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use blochlab::config::RunConfig;
use blochlab::driver::{error_exit_code, exit_code, run_command, Outcome, Status};
use blochlab::Error;
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Bands,
    Certify,
    Cartan,
    Construct,
    Eigfun,
    Measure,
    Verify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Bands => "bands",
            Command::Certify => "certify",
            Command::Cartan => "cartan",
            Command::Construct => "construct",
            Command::Eigfun => "eigfun",
            Command::Measure => "measure",
            Command::Verify => "verify",
        }
    }
}

/// Floquet-Bloch analysis of periodic and limit-periodic discrete Schrödinger operators.
#[derive(Debug, Parser)]
#[command(name = "blochlab", version)]
struct Cli {
    /// Subcommand to run.
    #[arg(value_enum)]
    command: Command,
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: `output_dir` from the config, else the working directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, env = "BLOCHLAB_THREADS")]
    threads: Option<usize>,
}

fn write_outcome(dir: &Path, outcome: &Outcome) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    for a in &outcome.artifacts {
        let path = dir.join(&a.name);
        std::fs::write(&path, &a.contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> i32 {
    let cfg = match RunConfig::from_path(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return error_exit_code(&e);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return 1;
        }
    }
    let result = run_command(cli.command.name(), &cfg);
    let code = exit_code(&result);
    match &result {
        Ok(outcome) => {
            let dir = cli
                .out
                .clone()
                .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("."));
            if let Err(e) = write_outcome(&dir, outcome) {
                eprintln!("error: {e}");
                return error_exit_code(&e);
            }
            match &outcome.status {
                Status::Ok => {}
                Status::CertificateFailure(msg) => eprintln!("certificate failure: {msg}"),
                Status::InequalityFailure(msg) => eprintln!("inequality failure: {msg}"),
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    code
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(run(&cli) as u8)
}
