use clap::{Parser, Subcommand};
use clearance_mpc_cli::{cmd_bench, cmd_compare, cmd_histogram, cmd_run, CliError};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

/// Clearance-maximizing MPC steering controller: closed-loop scenario runs.
#[derive(Parser)]
#[command(name = "clearance-mpc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write trace.csv and events.csv.
    Run {
        scenario: PathBuf,
        #[arg(short, long, default_value = "out")]
        output: PathBuf,
        /// Dotted override, e.g. `weights.alpha=0` or `agents.1.offset=2.0`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run with and without biasing; write both traces and summary.txt.
    Compare {
        scenario: PathBuf,
        #[arg(short, long, default_value = "out")]
        output: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Histogram of the clearance_m column of one or more events files.
    Histogram {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        bin_width: f64,
        #[arg(long, default_value_t = 4.0)]
        max: f64,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Solve-time statistics with and without biasing.
    Bench {
        scenario: PathBuf,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        /// Horizon length N.
        #[arg(long, default_value_t = 60)]
        horizon: usize,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            scenario,
            output,
            overrides,
        } => {
            let r = cmd_run(&scenario, &output, &overrides)?;
            println!("trace:  {}", r.trace_path.display());
            println!("events: {}", r.events_path.display());
            println!(
                "cycles: {}  solve ms avg {:.3} max {:.3}",
                r.trace.cycles.len(),
                r.timing.average_ms,
                r.timing.maximum_ms
            );
        }
        Command::Compare {
            scenario,
            output,
            overrides,
        } => {
            let r = cmd_compare(&scenario, &output, &overrides)?;
            print!("{}", r.summary);
            println!("summary: {}", r.summary_path.display());
        }
        Command::Histogram {
            inputs,
            bin_width,
            max,
            output,
        } => {
            let h = cmd_histogram(&inputs, bin_width, max)?;
            match &output {
                Some(path) => {
                    let file = std::fs::File::create(path).map_err(|e| CliError::fs(path, e))?;
                    h.write_csv(file)
                        .map_err(|e| CliError::fs(path, std::io::Error::other(e.to_string())))?;
                }
                None => {
                    let stdout = std::io::stdout();
                    h.write_csv(stdout.lock())
                        .map_err(|e| CliError::fs("<stdout>".as_ref(), std::io::Error::other(e.to_string())))?;
                }
            }
            if h.outside > 0 {
                eprintln!("{} value(s) outside [0, {max}) not binned", h.outside);
            }
        }
        Command::Bench {
            scenario,
            reps,
            horizon,
            overrides,
        } => {
            let r = cmd_bench(&scenario, reps, Some(horizon), &overrides)?;
            print!("{}", r.render());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
