use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use graphflow::experiment::{self, EXIT_CONFIG, EXIT_ESTIMATE, EXIT_OK, OUT_ENV};
use graphflow::selftest::{self, SelftestOptions, DEFAULT_SEED};

/// Minimal graphs by the ε-viscous graphical mean curvature flow.
#[derive(Parser)]
#[command(name = "graphflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config end to end.
    Run { config: PathBuf },
    /// Merge a finished run directory into report.json.
    Report { dir: PathBuf },
    /// Run only the barrier analysis of a config.
    Barrier { config: PathBuf },
    /// Run the acceptance suite and write its bundle.
    Selftest {
        /// Coarser grids and fewer samples.
        #[arg(long)]
        quick: bool,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Bundle directory (default: $GRAPHFLOW_OUT, else ./selftest_out).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn finish(code: i32) -> ExitCode {
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => {
            let outcome = experiment::run_experiment(&config);
            report_outcome(&outcome)
        }
        Command::Barrier { config } => {
            let outcome = experiment::run_barrier(&config);
            report_outcome(&outcome)
        }
        Command::Report { dir } => match experiment::emit_report(&dir) {
            Ok(path) => {
                println!("{}", path.display());
                finish(EXIT_OK)
            }
            Err(e) => {
                eprintln!("graphflow: {e}");
                finish(EXIT_CONFIG)
            }
        },
        Command::Selftest { quick, seed, out } => {
            let out = out
                .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("selftest_out"));
            let opts = SelftestOptions { quick, seed };
            match selftest::run_suite(&opts, &out, |r| println!("{}", r.line())) {
                Ok(results) => {
                    let passed = results.iter().filter(|r| r.passed).count();
                    println!("{passed}/{} criteria passed; bundle in {}", results.len(), out.display());
                    finish(if passed == results.len() { EXIT_OK } else { EXIT_ESTIMATE })
                }
                Err(e) => {
                    eprintln!("graphflow: {e}");
                    finish(EXIT_CONFIG)
                }
            }
        }
    }
}

fn report_outcome(outcome: &experiment::RunOutcome) -> ExitCode {
    match (&outcome.out_dir, outcome.code) {
        (Some(dir), EXIT_OK) => println!("{}: {}", dir.display(), outcome.message),
        (Some(dir), code) => eprintln!("graphflow: exit {code}: {} (see {})", outcome.message, dir.display()),
        (None, code) => eprintln!("graphflow: exit {code}: {}", outcome.message),
    }
    finish(outcome.code)
}
