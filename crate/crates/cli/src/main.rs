use std::process::ExitCode;

use clap::Parser;

mod commands;

use commands::{Cli, Outcome};

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("MDFORMS_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // only fails if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match commands::run(&cli) {
        Ok(Outcome::Pass) => ExitCode::from(0),
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("mdforms: {e}");
            ExitCode::from(if e.is_solver_failure() { 3 } else { 2 })
        }
    }
}
