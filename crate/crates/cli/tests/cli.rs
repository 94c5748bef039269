use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ergodic_cli::runner::{run_scenario, RunOptions, FAILED_MARKER};
use ergodic_cli::{CliError, Scenario};
use ergodic_core::SchedulerSpec;

fn ergodic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ergodic")).args(args).output().expect("binary runs")
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn minimal_run_writes_one_event() {
    let out = tempfile::tempdir().unwrap();
    let o = ergodic(&["run", scenario("minimal.toml").to_str().unwrap(), "--out-dir", out.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let traj = fs::read_to_string(out.path().join("traj.trajectory.csv")).unwrap();
    assert_eq!(traj, "window,label,lo,hi,eigenvalue_0\n0,0,0,1,1\n");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["artifacts"].as_array().unwrap().len(), 2);
}

#[test]
fn rabi_measures_follow_closed_form() {
    let out = tempfile::tempdir().unwrap();
    let o = ergodic(&["run", scenario("rabi-born.toml").to_str().unwrap(), "--out-dir", out.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(out.path().join("rabi.measures.csv")).unwrap();
    let mut rows = 0;
    for line in table.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let (n, label) = f[1].split_once('/').unwrap();
        let n: f64 = n.parse().unwrap();
        let oracle = if label == "0" { (n / 2.0).cos().powi(2) } else { (n / 2.0).sin().powi(2) };
        assert!((f[2].parse::<f64>().unwrap() - oracle).abs() < 1e-9, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 200);
}

#[test]
fn order_dependence_reports_positive_distance() {
    let out = tempfile::tempdir().unwrap();
    let o = ergodic(&["run", scenario("order-dependence.toml").to_str().unwrap(), "--out-dir", out.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let joint = fs::read_to_string(out.path().join("order.joint.csv")).unwrap();
    assert!(joint.lines().any(|l| l.starts_with("0,")) && joint.lines().any(|l| l.starts_with("1,")));
    let stats = fs::read_to_string(out.path().join("order.stats.csv")).unwrap();
    let row: Vec<&str> = stats.lines().nth(1).unwrap().split(',').collect();
    let (tv, se): (f64, f64) = (row[2].parse().unwrap(), row[3].parse().unwrap());
    assert!(tv > 0.0 && (tv - 0.5).abs() < 3.0 * se, "{stats}");
}

#[test]
fn parse_errors_exit_2_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad = write(dir.path(), "bad.toml", &fs::read_to_string(scenario("minimal.toml")).unwrap().replace("windows = 1", "windws = 1"));
    let o = ergodic(&["run", bad.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("windws"), "{}", stderr(&o));
    assert!(!out.exists());

    let bad = write(dir.path(), "bad2.toml", "dimension = 2\ninitial_state = [1, \"2+\"]\n[[csco]]\nid = \"z\"\neigenvalues = [[1.0], [-1.0]]\n");
    let o = ergodic(&["run", bad.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn missing_config_and_unwritable_output_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = ergodic(&["run", dir.path().join("nope.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));

    let blocker = write(dir.path(), "file", "");
    let o = ergodic(&["run", scenario("minimal.toml").to_str().unwrap(), "--out-dir", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn invariant_failure_leaves_marker_and_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Scenario::load(&scenario("qutrit.toml")).unwrap();
    // Bypasses config validation: a two-outcome layout on three labels.
    s.schedulers[0] = SchedulerSpec::paper_two_outcome(0.2);
    let err = run_scenario(&s, &RunOptions { out_dir: Some(dir.path().to_path_buf()), ..Default::default() }).unwrap_err();
    assert!(matches!(err, CliError::Invariant(_)));
    assert_eq!(err.exit_code(), 3);
    let names: Vec<String> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    assert_eq!(names, vec![FAILED_MARKER.to_string()]);
    assert!(fs::read_to_string(dir.path().join(FAILED_MARKER)).unwrap().contains("experiment traj"));
}

#[test]
fn success_clears_stale_marker() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join(FAILED_MARKER), "old").unwrap();
    let s = Scenario::load(&scenario("minimal.toml")).unwrap();
    run_scenario(&s, &RunOptions { out_dir: Some(dir.path().to_path_buf()), strict_float: true, ..Default::default() }).unwrap();
    assert!(!dir.path().join(FAILED_MARKER).exists());
}

#[test]
fn dump_partition_prints_window() {
    let o = ergodic(&["dump-partition", scenario("rabi-born.toml").to_str().unwrap(), "--window", "1", "--csco", "z"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "window_index,label,lo,hi");
    let first: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(&first[..3], &["1", "0", "1"]);
    assert!((first[3].parse::<f64>().unwrap() - (1.0 + 0.5f64.cos().powi(2))).abs() < 1e-12);

    let o = ergodic(&["dump-partition", scenario("rabi-born.toml").to_str().unwrap(), "--window", "1", "--csco", "q"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_passes_and_flags_injected_fault() {
    let o = ergodic(&["--threads", "2", "verify"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("0 failed"));

    let o = ergodic(&["verify", "--inject-fault", "coverage"]);
    assert_eq!(o.status.code(), Some(1));
    let report = stdout(&o);
    assert!(report.lines().any(|l| l.starts_with("FAIL") && l.contains("partition.coverage")), "{report}");
    assert!(report.contains("reproduce:"));
}
