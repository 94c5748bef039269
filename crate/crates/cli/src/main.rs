use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ergodic_cli::runner::{partition_for_window, run_scenario, RunOptions};
use ergodic_cli::verify::{verify, Fault};
use ergodic_cli::{CliError, Scenario};
use ergodic_core::partition::write_partition_dump;

#[derive(Parser)]
#[command(name = "ergodic", version, about = "Run ergodic microstate scenarios and invariant checks")]
struct Cli {
    /// Worker threads for Monte Carlo and parallel blocks (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every experiment block of a scenario config.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Fail if any state renormalization happens.
        #[arg(long)]
        strict_float: bool,
        /// Run experiment blocks concurrently.
        #[arg(long)]
        parallel_blocks: bool,
    },
    /// Run the invariant batteries of all modules.
    Verify {
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<FaultArg>,
    },
    /// Print one window's partition for a CSCO.
    DumpPartition {
        config: PathBuf,
        #[arg(long)]
        window: u64,
        #[arg(long)]
        csco: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    Coverage,
    Disjointness,
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("ergodic: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("ergodic: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match cli.command {
        Command::Run { config, out_dir, strict_float, parallel_blocks } => {
            let scenario = match Scenario::load(&config) {
                Ok(s) => s,
                Err(e) => return fail(&e),
            };
            let opts = RunOptions { out_dir, strict_float, parallel_blocks };
            match run_scenario(&scenario, &opts) {
                Ok(report) => {
                    println!("wrote {} artifact(s) to {}", report.artifacts.len() + 1, report.out_dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Verify { inject_fault } => {
            let fault = inject_fault.map(|f| match f {
                FaultArg::Coverage => Fault::Coverage,
                FaultArg::Disjointness => Fault::Disjointness,
            });
            match verify(&mut io::stdout().lock(), fault) {
                Ok(code) => ExitCode::from(code as u8),
                Err(e) => fail(&CliError::Io(e.to_string())),
            }
        }
        Command::DumpPartition { config, window, csco } => {
            let result = Scenario::load(&config).and_then(|s| {
                let p = partition_for_window(&s, &csco, window)?;
                let labels = s.cscos[s.csco_index(&csco).expect("checked")].labels().to_vec();
                let mut out = io::stdout().lock();
                write_partition_dump(&mut out, &p, Some(&labels), true)
                    .and_then(|_| out.flush())
                    .map_err(|e| CliError::Io(e.to_string()))
            });
            match result {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(&e),
            }
        }
    }
}
