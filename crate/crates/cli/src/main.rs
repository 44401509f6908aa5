use clap::Parser;
use spar_cli::{run, Cli, CliError};
use spar_core::SparError;

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        if let CliError::Model(SparError::Fitting { trace, .. }) = &e {
            for line in trace.iter().take(20) {
                eprintln!("  {line}");
            }
        }
        std::process::exit(e.exit_code());
    }
}
