//! orbit-averager: predicts limit cycles of linearly perturbed linear flows
//! on (S^2)^m x R^n from the closed-form averaged map and confirms each
//! prediction by Poincare-section shooting.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use commands::{CommandOutput, EXIT_CONFIG};
use orbit_averager_core::selftest::Fault;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "orbit-averager",
    about = "Averaged-map roots and sweep verification of limit cycles on (S^2)^m x R^n",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML config path, or a preset: theorem1-example, theorem3-example
    #[arg(long)]
    config: String,
    /// Worker threads for the epsilon sweep
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output directory (overrides the config)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the averaged map, solve F = 0 and report the root
    Average(CommonArgs),
    /// Average, then confirm the prediction by an epsilon sweep (writes sweep.csv)
    Verify(CommonArgs),
    /// Run the seeded property suites
    Selftest {
        #[command(flatten)]
        common: CommonArgs,
        /// Corrupt a component as a negative control (name: integrand-table)
        #[arg(long, value_name = "NAME")]
        fault_inject: Option<String>,
    },
    /// Probe cycle multiplicity from a grid of guesses (writes probe.csv)
    Sweep(CommonArgs),
}

fn main() {
    let cli = Cli::parse();
    let (common, run): (&CommonArgs, Box<dyn FnOnce(&config::RunConfig) -> CommandOutput>) =
        match &cli.command {
            Command::Average(common) => (common, Box::new(commands::cmd_average)),
            Command::Verify(common) => {
                let jobs = common.jobs;
                (common, Box::new(move |c| commands::cmd_verify(c, jobs)))
            }
            Command::Selftest {
                common,
                fault_inject,
            } => {
                let fault = match fault_inject.as_deref() {
                    None => None,
                    Some("integrand-table") => Some(Fault::IntegrandTable),
                    Some(other) => {
                        eprintln!("error: unknown fault {other}; expected integrand-table");
                        std::process::exit(EXIT_CONFIG);
                    }
                };
                (common, Box::new(move |c| commands::cmd_selftest(c, fault)))
            }
            Command::Sweep(common) => {
                let jobs = common.jobs;
                (common, Box::new(move |c| commands::cmd_sweep(c, jobs)))
            }
        };

    let loaded = match config::load(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(EXIT_CONFIG);
        }
    };

    let output = run(&loaded);
    print!("{}", output.report);

    let out_dir = common.out.clone().unwrap_or_else(|| loaded.out_dir.clone());
    if let Err(e) = std::fs::create_dir_all(&out_dir) {
        eprintln!("error: cannot create output directory {}: {e}", out_dir.display());
        std::process::exit(EXIT_CONFIG);
    }
    for (name, content) in &output.files {
        // report.txt mirrors stdout; other files carry their own content
        let body = if name == "report.txt" {
            &output.report
        } else {
            content
        };
        let path = out_dir.join(name);
        if let Err(e) = std::fs::write(&path, body) {
            eprintln!("error: cannot write {}: {e}", path.display());
            std::process::exit(EXIT_CONFIG);
        }
    }

    std::process::exit(output.exit_code);
}
