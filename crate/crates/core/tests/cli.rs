use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_koopman-laplace"))
}

fn run_in(dir: &Path, args: &[&str], config: Option<&str>) -> Output {
    let mut cmd = bin();
    cmd.args(args).arg("--out").arg(dir);
    if let Some(text) = config {
        let path = dir.join("config.json");
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

#[test]
fn simulate_writes_csv_with_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["simulate"], Some(r#"{"horizon": 1.0, "dt": 0.25}"#));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# tool: koopman-laplace"));
    assert!(lines.iter().any(|l| l.starts_with("# config_sha256: ")));
    let header = lines.iter().position(|l| !l.starts_with('#')).unwrap();
    assert_eq!(lines[header], "t,x_1,x_2");
    assert_eq!(lines.len() - header - 1, 5);
    assert_eq!(lines[header + 1], "0,3,0");
    // Full round-trip precision.
    let row: Vec<f64> = lines[header + 2].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(row[0], 0.25);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["rows"], 5);
}

#[test]
fn json_format_and_identical_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"horizon": 0.5, "dt": 0.25}"#;
    assert_eq!(code(&run_in(dir.path(), &["simulate", "--format", "json"], Some(cfg))), 0);
    let table = read_json(&dir.path().join("trajectory.json"));
    assert_eq!(table["columns"][0], "t");
    assert_eq!(table["rows"].as_array().unwrap().len(), 3);
    let other = tempfile::tempdir().unwrap();
    // Same content with different key order and spacing hashes identically.
    assert_eq!(code(&run_in(other.path(), &["simulate", "--format", "json"], Some(r#"{ "dt":0.25,"horizon":0.5 }"#))), 0);
    let again = read_json(&other.path().join("trajectory.json"));
    assert_eq!(table["metadata"]["config_sha256"], again["metadata"]["config_sha256"]);
}

#[test]
fn floquet_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["floquet"], None);
    assert_eq!(code(&out), 0);
    let r = read_json(&dir.path().join("floquet.json"));
    assert!((r["Omega"].as_f64().unwrap() - 0.9944).abs() < 1e-3);
    assert!((r["exponents"][0][0].as_f64().unwrap() + 0.3017).abs() < 1e-3);
    assert!((r["trivial_multiplier"][0].as_f64().unwrap() - 1.0).abs() < 1e-4);
    assert_eq!(r["metadata"]["command"], "floquet");
}

#[test]
fn config_errors_exit_two_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["simulate"], Some(r#"{"system": {"kind": "lorenz"}}"#));
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("system.kind"));
    let out = run_in(dir.path(), &["simulate"], Some(r#"{"horizn": 3}"#));
    assert_eq!(code(&out), 2);
    let out = run_in(dir.path(), &["simulate"], Some(r#"{"dt": -1}"#));
    assert_eq!(code(&out), 2);
}

#[test]
fn no_cycle_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"system": {"kind": "linear", "params": {"preset": "diagonal"}}, "x0": [1, 1], "settle": 20}"#;
    let out = run_in(dir.path(), &["floquet"], Some(cfg));
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn refused_decay_fit_exits_five_and_keeps_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["repro-fig1"], Some(r#"{"strobe": {"min_peak": 1e6}}"#));
    assert_eq!(code(&out), 5);
    let r = read_json(&dir.path().join("fig1.json"));
    assert!(r["nu_hat"].is_null());
    assert!(dir.path().join("residual.csv").exists());
}

#[test]
fn resolvent_rejects_imaginary_axis() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["resolvent"], Some(r#"{"s_grid": {"points": [[1, 0], [0, 1]]}}"#));
    assert_eq!(code(&out), 6);
}

#[test]
fn resolvent_linear_matches_expansion() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "system": {"kind": "linear", "params": {"preset": "cascade"}},
        "x0": [1, 0.5, -1], "dt": 0.001, "horizon": 50,
        "observables": [{"kind": "coordinate", "index": 0}, {"kind": "linear", "c": [0, 1, 1]}],
        "s_grid": {"rect": {"re_min": 0.5, "re_max": 2, "re_count": 3, "im_min": -2, "im_max": 2, "im_count": 3}}
    }"#;
    let out = run_in(dir.path(), &["resolvent"], Some(cfg));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_json(&dir.path().join("resolvent.json"));
    assert_eq!(r["points"].as_array().unwrap().len(), 9);
    assert!(r["max_rel_error"].as_f64().unwrap() < 1e-5);
    assert_eq!(r["continuous_spectrum_flag"], false);
    let e = read_json(&dir.path().join("expansion.json"));
    assert_eq!(e["entries"].as_array().unwrap().len(), 3);
    let grid = fs::read_to_string(dir.path().join("laplace_grid.csv")).unwrap();
    assert!(grid.lines().any(|l| l.starts_with("re_s,im_s,re_Y_1,re_Y_2,im_Y_1,im_Y_2,trunc_bound")));
}

#[test]
fn resolvent_vdp_line_finds_harmonics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"horizon": 300, "s_grid": {"line": {"omega_min": 0.5, "omega_max": 3.5, "count": 301}},
                  "expansion": {"kind": "none"}}"#;
    let out = run_in(dir.path(), &["resolvent"], Some(cfg));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_json(&dir.path().join("resolvent.json"));
    let peaks = r["peaks"][0].as_array().unwrap();
    let harmonics: Vec<f64> = peaks.iter().map(|p| p["harmonic"].as_f64().unwrap()).collect();
    assert!(harmonics.iter().any(|h| (h - 1.0).abs() < 0.02));
    assert!(harmonics.iter().any(|h| (h - 3.0).abs() < 0.05));
}

#[test]
fn prony_from_csv_input() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("# generated\nt,y\n");
    for k in 0..400 {
        let t = k as f64 * 0.01;
        text.push_str(&format!("{t},{}\n", 2.0 * (-0.5 * t).exp() - (-1.5 * t).exp()));
    }
    let input = dir.path().join("y.csv");
    fs::write(&input, text).unwrap();
    let out = run_in(
        dir.path(),
        &["prony", "--input", input.to_str().unwrap()],
        Some(r#"{"prony": {"order": 2, "sweep": [1, 2, 3]}}"#),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_json(&dir.path().join("prony.json"));
    let mut poles: Vec<f64> = r["poles"]["entries"].as_array().unwrap().iter().map(|e| e["pole"][0].as_f64().unwrap()).collect();
    poles.sort_by(f64::total_cmp);
    assert!((poles[0] + 1.5).abs() < 1e-8 && (poles[1] + 0.5).abs() < 1e-8);
    assert_eq!(r["sweep"].as_array().unwrap().len(), 3);
}

#[test]
fn malformed_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "t,y\n0,1\n0.1,x\n").unwrap();
    let out = run_in(dir.path(), &["dmd", "--input", bad.to_str().unwrap()], None);
    assert_eq!(code(&out), 2);
    let uneven = dir.path().join("uneven.csv");
    fs::write(&uneven, "t,y\n0,1\n0.1,2\n0.3,3\n0.4,4\n").unwrap();
    let out = run_in(dir.path(), &["dmd", "--input", uneven.to_str().unwrap()], None);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-uniform"));
}

#[test]
fn dmd_on_simulated_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"horizon": 300, "dt": 0.01, "dmd": {"depth": 32, "stride": 40, "t_start": 50, "rank_tol": 1e-8}}"#;
    let out = run_in(dir.path(), &["dmd"], Some(cfg));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_json(&dir.path().join("spectrum.json"));
    let eigs = r["cont_eigs"].as_array().unwrap();
    let near = |re: f64, im: f64| eigs.iter().any(|e| (e[0].as_f64().unwrap() - re).abs() < 1e-3 && (e[1].as_f64().unwrap() - im).abs() < 1e-3);
    assert!(near(0.0, 0.99442) && near(0.0, -0.99442));
    assert!(near(0.0, 3.0 * 0.99442));
}
