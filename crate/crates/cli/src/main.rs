use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use phtrack_cli::config::{preset, RunConfig};
use phtrack_cli::run::{cmd_run, resolve_out_dir};
use phtrack_cli::sweep::{run_sweep, SweepSpec};
use phtrack_cli::verify::{run_checks, Fault};
use phtrack_cli::{CliError, EXIT_ERROR, EXIT_OK, EXIT_VIOLATION};

/// Saturated position-only trajectory tracking for mechanical systems.
#[derive(Parser)]
#[command(name = "phtrack", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one configuration and write the trace and metrics.
    ///
    /// Exit status: 0 success, 2 monitor violation, 1 error.
    Run {
        /// JSON run configuration.
        #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Bundled configuration: pera-sim, pera-exp or setpoint-trivial.
        #[arg(long)]
        preset: Option<String>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Output directory when --out is not given.
        #[arg(long = "out-env", env = "PHTRACK_OUT_DIR", hide = true)]
        out_env: Option<PathBuf>,
        /// Print the canonical form of the configuration and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Evaluate a gain sweep and write the ranked leaderboard.
    ///
    /// Exit status: 0 when some candidate is feasible, 2 when none is, 1 error.
    Sweep {
        /// JSON sweep specification.
        #[arg(long)]
        spec: PathBuf,
        /// Seed for random searches.
        #[arg(long)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "out-env", env = "PHTRACK_OUT_DIR", hide = true)]
        out_env: Option<PathBuf>,
    },
    /// Run the built-in property suite.
    Verify {
        /// Fewer samples and shorter horizons.
        #[arg(long)]
        fast: bool,
    },
}

fn report_error(e: &CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(EXIT_ERROR)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            preset: name,
            out,
            out_env,
            print_config,
        } => {
            let cfg = match (config, name) {
                (Some(path), _) => RunConfig::load(&path),
                (None, Some(name)) => preset(&name),
                (None, None) => unreachable!("clap requires one of --config and --preset"),
            };
            let cfg = match cfg {
                Ok(c) => c,
                Err(e) => return report_error(&e),
            };
            if print_config {
                println!("{}", cfg.to_json());
                return ExitCode::from(EXIT_OK);
            }
            let dir = resolve_out_dir(&cfg, out.as_deref(), out_env.as_deref());
            match cmd_run(&cfg, &dir) {
                Ok(report) => {
                    let m = &report.metrics;
                    println!(
                        "{} {}: settled_error={:e} peak_control={:?} lyap_violations={} -> {}",
                        report.model,
                        report.profile,
                        m.settled_error,
                        m.peak_control.as_slice(),
                        m.lyap_violations,
                        dir.display()
                    );
                    if report.has_violation() {
                        eprintln!("monitor violation: see {}", dir.join(&cfg.output.metrics).display());
                        ExitCode::from(EXIT_VIOLATION)
                    } else {
                        ExitCode::from(EXIT_OK)
                    }
                }
                Err(e) => report_error(&e),
            }
        }
        Command::Sweep {
            spec,
            seed,
            out,
            out_env,
        } => {
            let spec = match SweepSpec::load(&spec) {
                Ok(s) => s,
                Err(e) => return report_error(&e),
            };
            let board = match run_sweep(&spec, seed) {
                Ok(b) => b,
                Err(e) => return report_error(&e),
            };
            let dir = out.or(out_env).unwrap_or_else(|| PathBuf::from("."));
            let path = dir.join(&spec.leaderboard);
            if let Err(e) = std::fs::create_dir_all(&dir).and_then(|_| std::fs::write(&path, board.to_csv())) {
                return report_error(&CliError::Io(format!("{}: {e}", path.display())));
            }
            let feasible = board.feasible_count();
            println!(
                "{} candidates, {feasible} feasible -> {}",
                board.entries.len(),
                path.display()
            );
            if feasible == 0 {
                eprint!("{}", board.diagnosis());
                ExitCode::from(EXIT_VIOLATION)
            } else {
                ExitCode::from(EXIT_OK)
            }
        }
        Command::Verify { fast } => {
            let report = run_checks(fast, Fault::None);
            print!("{}", report.table());
            if report.passed() {
                ExitCode::from(EXIT_OK)
            } else {
                ExitCode::from(EXIT_VIOLATION)
            }
        }
    }
}
