//! Command implementations behind the `clearance-mpc` binary.
//!
//! Exit codes: 0 success, 2 parse or validation error, 3 runtime (solver)
//! error, 4 filesystem error.

pub mod csv_io;
pub mod scenario_file;

use clearance_mpc::problem::ProblemDimensions;
use clearance_mpc::sim::{compare_biasing, run_scenario, timing_stats, BiasingComparison, Scenario, SimError, SimTrace, TimingStats};
use csv_io::Histogram;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub use scenario_file::{load_scenario, parse_scenario, to_toml_string};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{path}: {source}")]
    Filesystem {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn fs(path: &Path, source: std::io::Error) -> Self {
        CliError::Filesystem {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Filesystem { .. } => 4,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Solve { .. } => CliError::Runtime(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub trace_path: PathBuf,
    pub events_path: PathBuf,
    pub timing: TimingStats,
    pub trace: SimTrace,
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::fs(dir, e))
}

fn write_run(dir: &Path, prefix: &str, trace: SimTrace) -> Result<RunReport, CliError> {
    let trace_path = dir.join(format!("{prefix}trace.csv"));
    let events_path = dir.join(format!("{prefix}events.csv"));
    csv_io::write_trace(&trace_path, &trace)?;
    csv_io::write_events(&events_path, &trace)?;
    Ok(RunReport {
        trace_path,
        events_path,
        timing: timing_stats(&trace.solve_times_ms()),
        trace,
    })
}

/// Runs a scenario and writes `trace.csv` and `events.csv` into `out_dir`.
pub fn cmd_run(scenario: &Path, out_dir: &Path, overrides: &[String]) -> Result<RunReport, CliError> {
    let sc = load_scenario(scenario, overrides)?;
    create_dir(out_dir)?;
    let trace = run_scenario(&sc)?;
    write_run(out_dir, "", trace)
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub biased: RunReport,
    pub unbiased: RunReport,
    pub summary_path: PathBuf,
    pub summary: String,
    pub comparison: BiasingComparison,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |v| format!("{v:.4}"))
}

/// Text of `summary.txt`: per-agent clearance pairs, the relative change of
/// the minimum clearance and the solve-time block.
pub fn compare_summary(name: &str, cmp: &BiasingComparison) -> String {
    let mut s = String::new();
    writeln!(s, "scenario: {name}").unwrap();
    writeln!(s).unwrap();
    writeln!(s, "agent,biased_clearance_m,unbiased_clearance_m,improvement_pct").unwrap();
    for p in &cmp.pairs {
        let gain = match (p.biased, p.unbiased) {
            (Some(b), Some(u)) if u > 0.0 => Some(100.0 * (b / u - 1.0)),
            _ => None,
        };
        writeln!(s, "{},{},{},{}", p.agent, fmt_opt(p.biased), fmt_opt(p.unbiased), fmt_opt(gain)).unwrap();
    }
    writeln!(s).unwrap();
    writeln!(s, "min_clearance_biased_m: {}", fmt_opt(cmp.biased.min_clearance())).unwrap();
    writeln!(s, "min_clearance_unbiased_m: {}", fmt_opt(cmp.unbiased.min_clearance())).unwrap();
    let gain = cmp.improvement().map(|g| 100.0 * g);
    writeln!(s, "improvement_pct: {}", fmt_opt(gain)).unwrap();
    writeln!(s, "max_path_delta_m: {:.3e}", cmp.max_path_delta).unwrap();
    writeln!(s, "peak_abs_u_biased: {:.6}", cmp.biased.peak_input()).unwrap();
    writeln!(s, "peak_abs_u_unbiased: {:.6}", cmp.unbiased.peak_input()).unwrap();
    writeln!(s).unwrap();
    writeln!(s, "solve_time_ms,average,maximum").unwrap();
    for (label, t) in [("biasing", &cmp.biased_timing), ("no_biasing", &cmp.unbiased_timing)] {
        writeln!(s, "{label},{:.4},{:.4}", t.average_ms, t.maximum_ms).unwrap();
    }
    s
}

/// Runs the scenario with its configured `alpha` and with `alpha = 0`.
pub fn cmd_compare(scenario: &Path, out_dir: &Path, overrides: &[String]) -> Result<CompareReport, CliError> {
    let sc = load_scenario(scenario, overrides)?;
    create_dir(out_dir)?;
    let comparison = compare_biasing(&sc)?;
    let biased = write_run(out_dir, "biased_", comparison.biased.clone())?;
    let unbiased = write_run(out_dir, "unbiased_", comparison.unbiased.clone())?;
    let summary = compare_summary(&sc.name, &comparison);
    let summary_path = out_dir.join("summary.txt");
    std::fs::write(&summary_path, &summary).map_err(|e| CliError::fs(&summary_path, e))?;
    Ok(CompareReport {
        biased,
        unbiased,
        summary_path,
        summary,
        comparison,
    })
}

/// Bins the `clearance_m` column of all `inputs`.
pub fn cmd_histogram(inputs: &[PathBuf], bin_width: f64, max: f64) -> Result<Histogram, CliError> {
    if !(bin_width.is_finite() && bin_width > 0.0 && max.is_finite() && max > 0.0) {
        return Err(CliError::Validation("bin width and max must be positive".into()));
    }
    let mut values = Vec::new();
    for p in inputs {
        values.extend(csv_io::read_clearances(p)?);
    }
    Ok(Histogram::new(&values, bin_width, max))
}

#[derive(Debug, Clone)]
pub struct BenchSide {
    pub timing: TimingStats,
    pub dimensions: ProblemDimensions,
    pub samples: usize,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub name: String,
    pub repetitions: usize,
    pub horizon: usize,
    pub biased: BenchSide,
    pub unbiased: BenchSide,
}

impl BenchReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        writeln!(s, "scenario: {}  N = {}  repetitions = {}", self.name, self.horizon, self.repetitions).unwrap();
        writeln!(
            s,
            "{:<11} {:>9} {:>9} {:>9} {:>9} {:>9} {:>8} {:>9} {:>10}",
            "config", "avg_ms", "max_ms", "p50_ms", "p95_ms", "p99_ms", "cycles", "vars", "safety_vars"
        )
        .unwrap();
        for (label, b) in [("biasing", &self.biased), ("no_biasing", &self.unbiased)] {
            let t = &b.timing;
            writeln!(
                s,
                "{:<11} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>8} {:>9} {:>10}",
                label,
                t.average_ms,
                t.maximum_ms,
                t.p50_ms,
                t.p95_ms,
                t.p99_ms,
                b.samples,
                b.dimensions.variables,
                b.dimensions.safety_variables
            )
            .unwrap();
        }
        s
    }
}

/// Repeats the biased and `alpha = 0` runs and pools per-cycle solve times.
/// `horizon` replaces the scenario's step count when given.
pub fn cmd_bench(scenario: &Path, repetitions: usize, horizon: Option<usize>, overrides: &[String]) -> Result<BenchReport, CliError> {
    if repetitions == 0 {
        return Err(CliError::Validation("repetitions must be at least 1".into()));
    }
    let mut sc = load_scenario(scenario, overrides)?;
    if let Some(n) = horizon {
        sc.horizon.n_steps = n;
        sc.validate()?;
    }
    let side = |sc: &Scenario| -> Result<BenchSide, CliError> {
        let mut times = Vec::new();
        let mut dimensions = None;
        for _ in 0..repetitions {
            let trace = run_scenario(sc)?;
            times.extend(trace.solve_times_ms());
            dimensions = Some(trace.dimensions);
        }
        Ok(BenchSide {
            timing: timing_stats(&times),
            dimensions: dimensions.expect("at least one repetition"),
            samples: times.len(),
        })
    };
    let biased = side(&sc)?;
    let mut plain = sc.clone();
    plain.weights.alpha = 0.0;
    let unbiased = side(&plain)?;
    Ok(BenchReport {
        name: sc.name.clone(),
        repetitions,
        horizon: sc.horizon.n_steps,
        biased,
        unbiased,
    })
}
