//! Command dispatch for the `fibinetpp` binary.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error.

use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;

pub mod args;
pub mod commands;

use args::{Cli, Command};

fn dispatch(cli: &Cli, out: &mut dyn Write) -> anyhow::Result<()> {
    match &cli.command {
        Command::Train(a) => commands::train(a, out),
        Command::Eval(a) => commands::eval(a, out),
        Command::Predict(a) => commands::predict(a, out),
        Command::CountParams(a) => commands::count_params(a, out),
        Command::Gradcheck(a) => commands::gradcheck(a, out),
        Command::GenSynthetic(a) => commands::gen_synthetic(a, out),
        Command::Sweep(a) => commands::sweep(a, out),
    }
}

/// Parses and runs, writing to the given streams; returns the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let _ = write!(err, "{e}");
                    1
                }
            };
        }
    };
    match dispatch(&cli, out) {
        Ok(()) => 0,
        // The reader hung up (e.g. piping predictions into `head`).
        Err(e) if is_broken_pipe(&e) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            2
        }
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|cause| {
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            return io.kind() == std::io::ErrorKind::BrokenPipe;
        }
        matches!(
            cause.downcast_ref::<fibinetpp_core::Error>(),
            Some(fibinetpp_core::Error::Io(io)) if io.kind() == std::io::ErrorKind::BrokenPipe
        )
    })
}
