//! `cipherfleet`: key generation, encrypted formation runs, key-length sweeps
//! and plot export.
//!
//! Exit codes: 0 on success, 2 on usage or validation errors, 3 on I/O or
//! format errors.

mod commands;
mod error;
mod plots;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cipherfleet::sim::Mode;

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "cipherfleet", version, about = "Encrypted formation control simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Encrypted,
    Plaintext,
    Both,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Encrypted => Mode::Encrypted,
            ModeArg::Plaintext => Mode::Plaintext,
            ModeArg::Both => Mode::Both,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a secret key from a cipher parameter file.
    Keygen {
        /// TOML with p_exp, l_exp, key_length, err_bound and optional sigma.
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a scenario and write its trajectory CSV.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's mode.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write per-step wall-clock columns (not reproducible).
        #[arg(long)]
        timings: bool,
    },
    /// Run encrypted, quantized and plaintext loops side by side and report deviations.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        timings: bool,
    },
    /// Seeded Monte Carlo replicates over key lengths.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "10,20,30,35")]
        key_lengths: Vec<usize>,
        #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
        runs: u64,
        /// Edge (1-based) whose distance trace is summarized.
        #[arg(long, default_value_t = 1)]
        trace_edge: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render SVG figures from a trajectory CSV or a sweep directory.
    ExportPlots {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    use commands::*;
    match cmd {
        Command::Keygen { params, out, seed } => keygen_cmd(&params, &out, seed),
        Command::Run {
            scenario,
            mode,
            out,
            seed,
            timings,
        } => {
            let s = load_scenario(&scenario, seed, mode.map(Mode::from))?;
            run_cmd(&s, &out, timings).map(|_| ())
        }
        Command::Compare {
            scenario,
            out,
            seed,
            timings,
        } => compare_cmd(&load_scenario(&scenario, seed, Some(Mode::Both))?, &out, timings),
        Command::Sweep {
            scenario,
            key_lengths,
            runs,
            trace_edge,
            out,
            seed,
        } => {
            let s = load_scenario(&scenario, seed, Some(Mode::Encrypted))?;
            sweep_cmd(&s, key_lengths, runs as usize, trace_edge, &out)
        }
        Command::ExportPlots { input, out } => export_plots_cmd(&input, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code() as u8)
        }
    }
}
