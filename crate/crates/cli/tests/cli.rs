use clearance_mpc_cli::csv_io::{read_clearances, Histogram, EVENT_COLUMNS, TRACE_COLUMNS};
use clearance_mpc_cli::scenario_file::apply_override;
use clearance_mpc_cli::{cmd_bench, cmd_compare, cmd_histogram, cmd_run, parse_scenario, to_toml_string, CliError};
use std::path::{Path, PathBuf};
use std::process::Command;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn bundled() -> Vec<PathBuf> {
    let mut all = vec![
        scenario("two_pedestrians.toml"),
        scenario("straight_no_agents.toml"),
        scenario("offset_start.toml"),
    ];
    let mut suite: Vec<PathBuf> = std::fs::read_dir(scenario("suite"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    suite.sort();
    all.extend(suite);
    all
}

/// Reads a CSV strictly: fixed header, equal-length rows, numeric fields
/// except the listed text columns.
fn strict_rows(path: &Path, header: &[&str], text_columns: &[usize]) -> Vec<Vec<String>> {
    let mut r = csv::ReaderBuilder::new().flexible(false).from_path(path).unwrap();
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), header);
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            for (i, f) in rec.iter().enumerate() {
                if !text_columns.contains(&i) {
                    let v: f64 = f.parse().unwrap_or_else(|_| panic!("{f:?} in {}", path.display()));
                    assert!(v.is_finite());
                }
            }
            rec.iter().map(String::from).collect()
        })
        .collect()
}

fn without_solve_ms(rows: &[Vec<String>]) -> Vec<Vec<String>> {
    rows.iter().map(|r| r[..9].to_vec()).collect()
}

#[test]
fn run_writes_one_row_per_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let report = cmd_run(&scenario("straight_no_agents.toml"), dir.path(), &[]).unwrap();
    let rows = strict_rows(&report.trace_path, &TRACE_COLUMNS, &[]);
    assert_eq!(rows.len(), 200);
    assert_eq!(rows[1][0], "0.05");
    assert!(strict_rows(&report.events_path, &EVENT_COLUMNS, &[0]).is_empty());
    assert!(report.timing.average_ms > 0.0);
}

#[test]
fn runs_are_reproducible_apart_from_timing() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sc = scenario("two_pedestrians.toml");
    let ra = cmd_run(&sc, a.path(), &["sim.duration=7.0".into()]).unwrap();
    let rb = cmd_run(&sc, b.path(), &["sim.duration=7.0".into()]).unwrap();
    let ta = strict_rows(&ra.trace_path, &TRACE_COLUMNS, &[]);
    let tb = strict_rows(&rb.trace_path, &TRACE_COLUMNS, &[]);
    assert_eq!(without_solve_ms(&ta), without_solve_ms(&tb));
    let ea = std::fs::read(&ra.events_path).unwrap();
    assert_eq!(ea, std::fs::read(&rb.events_path).unwrap());
    assert_eq!(strict_rows(&ra.events_path, &EVENT_COLUMNS, &[0]).len(), 1);
}

#[test]
fn alpha_override_matches_an_edited_file() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("two_pedestrians.toml")).unwrap();
    let edited = text.replace("alpha = 8.0", "alpha = 0.0");
    assert_ne!(text, edited);
    let edited_path = dir.path().join("alpha0.toml");
    std::fs::write(&edited_path, edited).unwrap();

    let over = cmd_run(&scenario("two_pedestrians.toml"), &dir.path().join("a"), &["weights.alpha=0".into()]).unwrap();
    let file = cmd_run(&edited_path, &dir.path().join("b"), &[]).unwrap();
    let a = strict_rows(&over.trace_path, &TRACE_COLUMNS, &[]);
    let b = strict_rows(&file.trace_path, &TRACE_COLUMNS, &[]);
    assert_eq!(without_solve_ms(&a), without_solve_ms(&b));
    assert_eq!(std::fs::read(&over.events_path).unwrap(), std::fs::read(&file.events_path).unwrap());
}

#[test]
fn missing_key_is_named() {
    let text = std::fs::read_to_string(scenario("straight_no_agents.toml")).unwrap();
    let broken = text.replace("wheelbase = 2.6\n", "");
    let err = parse_scenario(&broken, &[]).unwrap_err();
    assert!(err.contains("wheelbase"), "{err}");
    assert!(err.contains("line"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.toml");
    std::fs::write(&path, broken).unwrap();
    let e = cmd_run(&path, dir.path(), &[]).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    assert!(e.to_string().contains("wheelbase"));
}

#[test]
fn unknown_keys_are_rejected() {
    let text = std::fs::read_to_string(scenario("straight_no_agents.toml")).unwrap();
    let err = parse_scenario(&format!("{text}\n[extra]\nfoo = 1\n"), &[]).unwrap_err();
    assert!(err.contains("extra"), "{err}");
    let err = parse_scenario(&text, &["weights.alhpa=1".into()]).unwrap_err();
    assert!(err.contains("alhpa"), "{err}");
}

#[test]
fn bundled_scenarios_round_trip() {
    for path in bundled() {
        let text = std::fs::read_to_string(&path).unwrap();
        let parsed = parse_scenario(&text, &[]).unwrap();
        parsed.validate().unwrap();
        let again = parse_scenario(&to_toml_string(&parsed), &[]).unwrap();
        assert_eq!(parsed, again, "{}", path.display());
    }
}

#[test]
fn overrides_walk_tables_and_arrays() {
    let text = std::fs::read_to_string(scenario("two_pedestrians.toml")).unwrap();
    let sc = parse_scenario(
        &text,
        &[
            "agents.1.offset=2.5".into(),
            "safety.car.a=3".into(),
            "sim.plant.actuation_lag=false".into(),
            "name=renamed".into(),
            "reference.segments.0.length = 6.5".into(),
        ],
    )
    .unwrap();
    assert_eq!(sc.agents[1].offset, 2.5);
    assert_eq!(sc.safety.car.a, 3.0);
    assert!(!sc.sim.plant.actuation_lag);
    assert_eq!(sc.name, "renamed");
    assert_eq!(sc.reference.segments[0].length, 6.5);

    let mut table: toml::Table = toml::from_str(&text).unwrap();
    assert!(apply_override(&mut table, "agents.2.offset=1").unwrap_err().contains("out of range"));
    assert!(apply_override(&mut table, "name.x=1").unwrap_err().contains("not a table"));
    assert!(apply_override(&mut table, "weights..alpha=1").is_err());
    assert!(apply_override(&mut table, "no_equals").is_err());
}

#[test]
fn compare_reports_clearance_gain() {
    let dir = tempfile::tempdir().unwrap();
    let r = cmd_compare(&scenario("two_pedestrians.toml"), dir.path(), &[]).unwrap();
    let summary = std::fs::read_to_string(&r.summary_path).unwrap();
    let gain: f64 = summary
        .lines()
        .find_map(|l| l.strip_prefix("improvement_pct: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(gain >= 25.0, "{gain}");
    for name in ["biased_trace.csv", "unbiased_trace.csv", "biased_events.csv", "unbiased_events.csv"] {
        assert!(dir.path().join(name).exists());
    }
    assert_eq!(strict_rows(&r.biased.events_path, &EVENT_COLUMNS, &[0]).len(), 2);
}

#[test]
fn compare_without_agents() {
    let dir = tempfile::tempdir().unwrap();
    let r = cmd_compare(&scenario("offset_start.toml"), dir.path(), &["sim.duration=3.0".into()]).unwrap();
    assert!(r.summary.contains("improvement_pct: n/a"));
    assert!(r.comparison.max_path_delta < 1e-6);
    let block: Vec<&str> = r.summary.lines().skip_while(|l| !l.starts_with("solve_time_ms")).skip(1).collect();
    assert_eq!(block.len(), 2);
    let mut entries = 0;
    for line in block {
        for v in line.split(',').skip(1) {
            assert!(v.parse::<f64>().unwrap() > 0.0);
            entries += 1;
        }
    }
    assert_eq!(entries, 4);
}

fn events_file(dir: &Path, name: &str, clearances: &[f64]) -> PathBuf {
    let path = dir.join(name);
    let mut text = String::from("agent,clearance_m,t,e_lat\n");
    for (i, c) in clearances.iter().enumerate() {
        text.push_str(&format!("a{i},{c},1.0,0.0\n"));
    }
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn histogram_bins() {
    let dir = tempfile::tempdir().unwrap();
    let one = events_file(dir.path(), "one.csv", &[1.4]);
    let h = cmd_histogram(&[one.clone()], 0.05, 4.0).unwrap();
    assert_eq!(h.counts.len(), 80);
    assert_eq!(h.counts[28], 1);
    assert_eq!(h.bin_left(28), 1.4);
    assert_eq!(h.counts.iter().sum::<usize>(), 1);

    let empty = events_file(dir.path(), "empty.csv", &[]);
    let h = cmd_histogram(&[empty], 0.05, 4.0).unwrap();
    assert!(h.counts.iter().all(|c| *c == 0));

    let many = events_file(dir.path(), "many.csv", &[0.0, 0.049, 0.05, 3.99, 4.0, -0.1]);
    let h = cmd_histogram(&[one, many], 0.05, 4.0).unwrap();
    assert_eq!((h.counts[0], h.counts[1], h.counts[79], h.outside), (2, 1, 1, 2));

    let mut out = Vec::new();
    h.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("bin_left,count\n0,2\n0.05,1\n"));
    assert_eq!(text.lines().count(), 81);
}

#[test]
fn histogram_reports_bad_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "agent,clearance_m,t,e_lat\na,1.0,0,0\nb,wide,0,0\n").unwrap();
    let e = read_clearances(&path).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    assert!(e.to_string().contains("line 3"), "{e}");
    let e = cmd_histogram(&[dir.path().join("missing.csv")], 0.05, 4.0).unwrap_err();
    assert_eq!(e.exit_code(), 4);
    assert_eq!(Histogram::new(&[], 0.05, 4.0).counts.len(), 80);
}

#[test]
fn bench_reports_dimensions_and_timing() {
    let r = cmd_bench(&scenario("straight_no_agents.toml"), 1, Some(60), &["sim.duration=2.0".into()]).unwrap();
    assert_eq!(r.horizon, 60);
    assert!(r.biased.timing.average_ms < 50.0);
    assert!(r.unbiased.timing.average_ms < 50.0);
    assert_eq!(r.biased.dimensions.variables, r.unbiased.dimensions.variables + 61);
    assert_eq!(r.biased.dimensions.safety_variables, 61);
    assert_eq!(r.unbiased.dimensions.safety_variables, 0);
    assert!(r.biased.dimensions.inequality_constraints >= r.unbiased.dimensions.inequality_constraints + 61);
    assert!(r.render().contains("safety_vars"));

    // a single cycle once: every statistic is the same sample
    let one = cmd_bench(&scenario("straight_no_agents.toml"), 1, None, &["sim.duration=0.05".into()]).unwrap();
    let t = one.biased.timing;
    assert_eq!(one.biased.samples, 1);
    assert_eq!(t.maximum_ms, t.average_ms);
    assert_eq!(t.p50_ms, t.average_ms);
    assert!(matches!(
        cmd_bench(&scenario("straight_no_agents.toml"), 0, None, &[]),
        Err(CliError::Validation(_))
    ));
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_clearance-mpc"))
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let ok = binary()
        .args(["run", scenario("straight_no_agents.toml").to_str().unwrap(), "-o"])
        .arg(&out)
        .args(["--set", "sim.duration=1.0"])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(out.join("trace.csv").exists());

    let invalid = binary()
        .args(["run", scenario("straight_no_agents.toml").to_str().unwrap(), "-o"])
        .arg(&out)
        .args(["--set", "model.wheelbase=-1"])
        .output()
        .unwrap();
    assert_eq!(invalid.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&invalid.stderr).contains("wheelbase"));

    let missing = binary().args(["run", "/nonexistent/scenario.toml"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(4));

    let hist = binary()
        .arg("histogram")
        .arg(events_file(dir.path(), "e.csv", &[1.4]))
        .args(["--bin-width", "0.05", "--max", "4"])
        .output()
        .unwrap();
    assert_eq!(hist.status.code(), Some(0));
    let text = String::from_utf8(hist.stdout).unwrap();
    assert!(text.lines().any(|l| l == "1.4,1"));
}

#[test]
fn solver_failures_map_to_runtime_exit() {
    let e: CliError = clearance_mpc::sim::SimError::Solve {
        t: 1.0,
        source: clearance_mpc::solver::SolveError::Config,
    }
    .into();
    assert_eq!(e.exit_code(), 3);
    let e: CliError = clearance_mpc::sim::SimError::Invalid("x".into()).into();
    assert_eq!(e.exit_code(), 2);
}
