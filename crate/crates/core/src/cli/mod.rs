//! Command-line front end: configuration, command dispatch and file output.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::Parser;

pub use commands::{exit_code, run, Command};
pub use config::{parse_config, parse_config_str, SimConfig};

#[derive(Debug, Parser)]
#[command(name = "porohom", version, about = "Homogenization of fibre-reinforced hydrogels")]
pub struct Args {
    /// What to run.
    #[arg(value_enum)]
    pub command: Command,
    /// JSON configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Parses, runs and reports; returns the process exit status.
pub fn main_with(args: Args) -> u8 {
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not configure the thread pool: {e}");
        }
    }
    let config = match parse_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return commands::EXIT_CONFIG;
        }
    };
    let outcome = run(args.command, &config, &args.out);
    match &outcome {
        Ok(report) => {
            for oracle in &report.checks {
                for c in &oracle.checks {
                    let mark = if c.pass { "pass" } else { "FAIL" };
                    println!("[{mark}] {}: {} (computed {:.6e}, tolerance {:.1e})", oracle.name, c.name, c.computed, c.tolerance);
                }
            }
            println!(
                "{}: {} (report in {})",
                report.command,
                if report.pass { "ok" } else { "verification failed" },
                args.out.join(format!("{}.json", report.command)).display()
            );
        }
        Err(e) => eprintln!("error: {e}"),
    }
    exit_code(&outcome)
}
