use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use legwheel::harness::{AGGREGATE_HEADER, COMPARE_HEADER, TRACE_HEADER, TRIALS_HEADER};
use legwheel::sim::LOG_HEADER;

fn legwheel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_legwheel"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scenario(dir: &Path, name: &str, body: &str) -> String {
    let out = dir.join("out");
    let text = format!("output = \"{}\"\n{body}", out.display());
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const SHORT: &str = r#"
oscillator = "hopf"
duration = 3.0
trials = 3
seed = 5

[[schedule]]
t_start = 0.0
v = 0.1
w = 0.0
h = 0.1
"#;

#[test]
fn geometry_prints_design_table() {
    let o = legwheel(&["geometry", "--n-min", "5", "--n-max", "5", "--radius", "1"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "n,L_step,h_min,h_span\n5,2.56,1.76,0.42\n");
}

#[test]
fn geometry_rejects_two_arcs() {
    let o = legwheel(&["geometry", "--n-min", "2", "--n-max", "4", "--radius", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn ik_profile_out_of_band_is_a_domain_error() {
    let o = legwheel(&["ik-profile", "--height", "0.2", "--x-min", "-0.01", "--x-max", "0.01"]);
    assert_eq!(o.status.code(), Some(2));
    let o = legwheel(&[
        "ik-profile", "--height", "0.095", "--x-min", "-0.03", "--x-max", "0.03", "--samples", "7",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("x,e,phi_O,phi_I\n"));
    assert_eq!(text.lines().count(), 8);
}

#[test]
fn torque_leaves_planetary_cells_empty_unless_asked() {
    let base = ["torque", "--fx", "0", "--fy", "10", "--phi-o", "0.3", "--phi-i", "1.9"];
    let o = legwheel(&base);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let row = stdout(&o).lines().nth(1).unwrap().to_string();
    assert_eq!(row.split(',').nth(2), Some(""));
    let mut with = base.to_vec();
    with.push("--planetary");
    let o = legwheel(&with);
    let row = stdout(&o).lines().nth(1).unwrap().to_string();
    let cells: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
    assert!((cells[2] + cells[3] - cells[0] - cells[1]).abs() < 1e-6);
}

#[test]
fn trace_has_header_and_rows() {
    let o = legwheel(&["trace", "--model", "kuramoto", "--duration", "0.1", "--dt", "0.01"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some(TRACE_HEADER));
    assert_eq!(legwheel(&["trace", "--model", "rossler"]).status.code(), Some(2));
}

#[test]
fn invalid_scenario_exits_two_and_lists_fields() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario(
        dir.path(),
        "bad.toml",
        "oscillator = \"kuramoto\"\nduration = -1.0\ntrials = 0\n\n[[schedule]]\nt_start = 0.0\nv = 0.1\nw = 0.0\nh = 0.5\n",
    );
    let o = legwheel(&["suite", "--scenario", &path]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    for field in ["duration", "trials", "h"] {
        assert!(err.contains(field), "{field} missing from: {err}");
    }
}

#[test]
fn divergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let body = SHORT.replace("\"hopf\"", "\"vdp\"") + "\n[controller]\nvdp_frequency_scale = 2000.0\n";
    let path = scenario(dir.path(), "fast.toml", &body);
    let o = legwheel(&["simulate", "--scenario", &path]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn simulate_writes_log_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario(dir.path(), "s.toml", SHORT);
    let out = dir.path().join("elsewhere");
    let o = legwheel(&["simulate", "--scenario", &path, "--seed", "9", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let log = fs::read_to_string(out.join("log.csv")).unwrap();
    assert_eq!(log.lines().next(), Some(LOG_HEADER));
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().next(), Some(TRIALS_HEADER));
    assert_eq!(metrics, stdout(&o));
}

#[test]
fn suite_outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario(dir.path(), "s.toml", SHORT);
    let out = dir.path().join("out");
    let mut runs = Vec::new();
    for _ in 0..2 {
        let o = legwheel(&["suite", "--scenario", &path]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let trials = fs::read(out.join("trials.csv")).unwrap();
        let agg = fs::read(out.join("aggregate.csv")).unwrap();
        runs.push((trials, agg));
    }
    assert_eq!(runs[0], runs[1]);
    let agg = String::from_utf8(runs[0].1.clone()).unwrap();
    assert_eq!(agg.lines().next(), Some(AGGREGATE_HEADER));
    assert_eq!(String::from_utf8(runs[0].0.clone()).unwrap().lines().count(), 4);
}

#[test]
fn compare_reports_vdp_turning_as_unsupported() {
    let dir = tempfile::tempdir().unwrap();
    let body = SHORT.replace("\"hopf\"", "\"direct\"").replace("w = 0.0", "w = 0.1");
    let path = scenario(dir.path(), "t.toml", &body);
    let o = legwheel(&["compare", "--template", &path]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some(COMPARE_HEADER));
    let vdp = text.lines().find(|l| l.starts_with("vdp,")).unwrap();
    assert!(vdp.starts_with("vdp,unsupported"), "{vdp}");
    assert_eq!(fs::read_to_string(dir.path().join("out/compare.csv")).unwrap(), text);
}
