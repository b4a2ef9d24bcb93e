use std::fs;
use std::io::{self, Read, Write};
use std::process::ExitCode;

use clap::Parser;

use cohtrans::cli::{run, Command, JobRequest, Overrides, EXIT_PARSE, EXIT_VERIFICATION};

/// Deterministic incoherent transformations between pure coherent states.
#[derive(Debug, Parser)]
#[command(name = "cohtrans", version)]
struct Args {
    /// check, synthesize, sequence, locc or verify.
    #[arg(value_parser = Command::NAMES)]
    command: String,
    /// JSON input; `-` reads stdin.
    #[arg(long)]
    input: String,
    /// Report destination; `-` writes stdout.
    #[arg(long, default_value = "-")]
    output: String,
    /// Largest block handled in one sequential step.
    #[arg(long)]
    d_prime: Option<usize>,
    /// Residual tolerance.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Report every feasible permutation set (or candidate intermediate).
    #[arg(long)]
    enumerate_all: bool,
    /// Seed for the random checks of `verify`.
    #[arg(long)]
    seed: Option<u64>,
}

fn read_input(path: &str) -> io::Result<String> {
    if path == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        fs::read_to_string(path)
    }
}

fn write_output(path: &str, text: &str) -> io::Result<()> {
    if path == "-" {
        io::stdout().write_all(text.as_bytes())
    } else {
        fs::write(path, text)
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let command: Command = args.command.parse().expect("clap restricts the command names");
    let document = match read_input(&args.input) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("cohtrans: cannot read {}: {e}", args.input);
            return ExitCode::from(EXIT_PARSE as u8);
        }
    };
    let request = JobRequest {
        command,
        document,
        overrides: Overrides {
            d_prime: args.d_prime,
            tolerance: args.tolerance,
            enumerate_all: args.enumerate_all,
            seed: args.seed,
        },
    };
    let report = run(&request);
    if let Some(err) = &report.error {
        eprintln!("cohtrans: {}: {}", err.code, err.message);
    }
    if let Err(e) = write_output(&args.output, &report.to_json()) {
        eprintln!("cohtrans: cannot write {}: {e}", args.output);
        return ExitCode::from(EXIT_VERIFICATION as u8);
    }
    ExitCode::from(report.exit_code as u8)
}
