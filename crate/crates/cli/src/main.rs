//! `padic`: command-line front end for padic-core.
//!
//! Exit codes: 0 success, 1 usage/input/runtime error, 2 hypotheses (family
//! conditions or the tail condition) not satisfied, 3 a verdict failed.

mod commands;
mod output;
mod parse;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use output::Format;

#[derive(Debug, Parser)]
#[command(name = "padic", version, about = "P-adic grids, Haar and Price systems, AH-integral recovery")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Grid configuration file (JSON: dims, seqs, depth).
    #[arg(long, global = true, value_name = "FILE")]
    pub grid: Option<PathBuf>,

    /// Output file. The bare words `json` and `csv` select the format and
    /// write to standard output.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// Worker threads; 0 lets the pool decide.
    #[arg(long, global = true, env = "PADIC_THREADS")]
    pub threads: Option<usize>,

    /// One tolerance for every numerical check, replacing the defaults.
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
}

impl Global {
    /// Resolves `--out` and `--format` into a destination and a format.
    pub fn destination(&self) -> (Option<PathBuf>, Format) {
        let word = self.out.as_ref().and_then(|p| p.to_str()).map(str::to_ascii_lowercase);
        match word.as_deref() {
            Some("json") => (None, self.format.unwrap_or(Format::Json)),
            Some("csv") => (None, self.format.unwrap_or(Format::Csv)),
            _ => {
                let inferred = self
                    .out
                    .as_ref()
                    .and_then(|p| p.extension())
                    .and_then(|e| e.to_str())
                    .filter(|e| e.eq_ignore_ascii_case("csv"))
                    .map(|_| Format::Csv);
                (self.out.clone(), self.format.or(inferred).unwrap_or(Format::Json))
            }
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dump Haar and Price functions of one dimension and gamma blocks.
    Systems(commands::SystemsArgs),
    /// Recover coefficients or box values from a series through AH integrals.
    Recover(commands::RecoverArgs),
    /// Check a family of cutoff functions against the conditions (h1)-(h3).
    CheckFamily(commands::CheckFamilyArgs),
    /// Run the truncated counterexample and report every verdict.
    Counterexample(commands::CounterexampleArgs),
    /// Decompose a mixed-rank box into uniform-rank cells.
    Decompose(commands::DecomposeArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli) {
        Ok(status) => ExitCode::from(status.code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
