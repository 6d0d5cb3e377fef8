//! End-to-end runs of the installed binary: every subcommand, every exit
//! code, and the file contracts the outputs promise. Each test gets its
//! own temp directory; configs are built inline.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rdsteer"))
}

fn write_config(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_vec_pretty(value).unwrap()).unwrap();
    path
}

fn run(sub: &str, config: &Path, out: &Path) -> Output {
    bin()
        .arg(sub)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn heat_decay_config() -> Value {
    json!({
        "grid": {"dim": 1, "n": 199, "lengths": [1.0]},
        "nonlinearity": {"kind": "zero"},
        "initial": {"kind": "eigenmode", "k": [1], "amplitude": 1.0},
        "control": {"kind": "zero"},
        "dt": 1e-4,
        "T": 0.1,
        "snapshots": [0.05]
    })
}

#[test]
fn simulate_heat_decay_matches_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "heat.json", &heat_decay_config());
    let out_dir = tmp.path().join("out");
    let out = run("simulate", &config, &out_dir);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let report = read_json(&out_dir.join("report.json"));
    let final_l2 = report["final_l2"].as_f64().unwrap();
    let exact = (-std::f64::consts::PI.powi(2) * 0.1).exp() * 0.5f64.sqrt();
    assert!(
        (final_l2 - exact).abs() < 5e-4,
        "final l2 {final_l2} vs closed form {exact}"
    );
    assert_eq!(report["steps"].as_u64().unwrap(), 1000);
    assert!(report["final_min"].as_f64().unwrap() >= 0.0);

    let trace = fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,l2_u,linf_u,l2_f_u,l2_lap_u"));
    assert_eq!(trace.lines().count(), 1002);
    assert!(out_dir.join("snapshot_0.csv").exists());
    assert!(out_dir.join("final_state.csv").exists());
    assert!(out_dir.join("manifest.json").exists());
}

#[test]
fn simulate_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "heat.json", &heat_decay_config());
    let dir_a = tmp.path().join("a");
    let dir_b = tmp.path().join("b");
    assert_eq!(code(&run("simulate", &config, &dir_a)), 0);
    assert_eq!(code(&run("simulate", &config, &dir_b)), 0);
    for name in [
        "manifest.json",
        "report.json",
        "trace.csv",
        "final_state.csv",
        "snapshot_0.csv",
    ] {
        let a = fs::read(dir_a.join(name)).unwrap();
        let b = fs::read(dir_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = heat_decay_config();
    config["bogus"] = json!(1);
    let path = write_config(tmp.path(), "bad.json", &config);
    let out = run("simulate", &path, &tmp.path().join("out"));
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("unknown field"), "{}", stderr(&out));
}

#[test]
fn misaligned_breakpoints_name_the_offender() {
    let tmp = tempfile::tempdir().unwrap();
    let config = json!({
        "grid": {"dim": 1, "n": 31, "lengths": [1.0]},
        "nonlinearity": {"kind": "zero"},
        "initial": {"kind": "eigenmode", "k": [1]},
        "control": {
            "kind": "piecewise",
            "breakpoints": [0.0, 0.0333, 0.1],
            "fields": [{"kind": "zero"}, {"kind": "zero"}]
        },
        "dt": 1e-3,
        "T": 0.1
    });
    let path = write_config(tmp.path(), "mis.json", &config);
    let out = run("simulate", &path, &tmp.path().join("out"));
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("breakpoint 1"), "{}", stderr(&out));
}

fn subordinate_pair_config(horizon: f64, eps: f64) -> Value {
    json!({
        "grid": {"dim": 1, "n": 63, "lengths": [1.0]},
        "nonlinearity": {"kind": "scaled_sine", "L": 0.1},
        "initial": {"kind": "eigenmode", "k": [1], "amplitude": 1.0},
        "target": {"kind": "eigenmode", "k": [1], "amplitude": 0.5},
        "control": {"kind": "synthesized"},
        "dt": 1e-4,
        "T": horizon,
        "eps": eps
    })
}

#[test]
fn synthesize_rejects_vanishing_initial_state() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = subordinate_pair_config(0.05, 0.05);
    config["initial"] = json!({"kind": "zero"});
    let path = write_config(tmp.path(), "zero.json", &config);
    let out = run("synthesize", &path, &tmp.path().join("out"));
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("vanishes"), "{}", stderr(&out));
}

#[test]
fn synthesize_emits_single_static_step_when_target_subordinate() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), "s.json", &subordinate_pair_config(0.005, 0.05));
    let out_dir = tmp.path().join("out");
    let out = run("synthesize", &path, &out_dir);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let report = read_json(&out_dir.join("synthesis_report.json"));
    assert_eq!(report["m_steps"].as_u64().unwrap(), 1);
    assert!(report["eps_met"].as_bool().unwrap());
    assert!(report["final_error"].as_f64().unwrap() < 0.05);

    let breakpoint_text = fs::read_to_string(out_dir.join("breakpoints.csv")).unwrap();
    let breakpoints: Vec<&str> = breakpoint_text.lines().collect();
    assert_eq!(breakpoints, ["t", "0", "0.005"]);

    let controls = fs::read_to_string(out_dir.join("controls.csv")).unwrap();
    let rows: Vec<&str> = controls.lines().collect();
    assert_eq!(rows.len(), 1);
    let values: Vec<f64> = rows[0].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(values.len(), 63);
    let expected = 0.5f64.ln() / 0.005;
    for v in values {
        assert!((v - expected).abs() < 1e-9, "rate {v} vs {expected}");
    }
}

#[test]
fn synthesize_two_phase_pipeline_meets_eps() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), "s.json", &subordinate_pair_config(0.05, 0.05));
    let out_dir = tmp.path().join("out");
    let out = run("synthesize", &path, &out_dir);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let report = read_json(&out_dir.join("synthesis_report.json"));
    assert!(report["eps_met"].as_bool().unwrap());
    assert!(report["final_error"].as_f64().unwrap() < 0.05);
    let m_steps = report["m_steps"].as_u64().unwrap();
    assert!(m_steps >= 2, "expected a multi-step schedule, got {m_steps}");
    assert!(report["budgets"]["all_pass"].as_bool().unwrap());

    let breakpoint_rows = fs::read_to_string(out_dir.join("breakpoints.csv"))
        .unwrap()
        .lines()
        .count() as u64;
    assert_eq!(breakpoint_rows, m_steps + 2);
    let control_rows = fs::read_to_string(out_dir.join("controls.csv"))
        .unwrap()
        .lines()
        .count() as u64;
    assert_eq!(control_rows, m_steps);
}

#[test]
fn synthesize_reports_miss_without_discarding_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), "s.json", &subordinate_pair_config(3.0, 1e-4));
    let out_dir = tmp.path().join("out");
    let out = run("synthesize", &path, &out_dir);
    assert_eq!(code(&out), 1, "stderr: {}", stderr(&out));

    let report = read_json(&out_dir.join("synthesis_report.json"));
    assert!(!report["eps_met"].as_bool().unwrap());
    assert!(report["final_error"].as_f64().unwrap() >= 1e-4);
    assert!(out_dir.join("breakpoints.csv").exists());
    assert!(out_dir.join("controls.csv").exists());
}

#[test]
fn verify_suite_passes_on_genuine_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let config = json!({
        "grid": {"dim": 1, "n": 63, "lengths": [1.0]},
        "nonlinearity": {"kind": "zero"},
        "initial": {"kind": "eigenmode", "k": [1]},
        "control": {"kind": "zero"},
        "dt": 1e-3,
        "T": 0.1,
        "seed": 20260822,
        "verify": {"suite": true}
    });
    let path = write_config(tmp.path(), "v.json", &config);
    let out_dir = tmp.path().join("out");
    let out = run("verify", &path, &out_dir);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let bounds = read_json(&out_dir.join("bounds.json"));
    assert!(bounds["all_pass"].as_bool().unwrap());
    assert_eq!(bounds["cases"].as_array().unwrap().len(), 10);
    assert_eq!(bounds["seed"].as_u64().unwrap(), 20260822);
}

fn single_verify_config(control: Value) -> Value {
    json!({
        "grid": {"dim": 1, "n": 63, "lengths": [1.0]},
        "nonlinearity": {"kind": "scaled_sine", "L": 0.2},
        "initial": {"kind": "eigenmode", "k": [1]},
        "control": control,
        "dt": 5e-4,
        "T": 0.1
    })
}

#[test]
fn verify_flags_hypothesis_violations_without_failing() {
    let tmp = tempfile::tempdir().unwrap();
    let config = single_verify_config(json!({"kind": "constant", "value": 0.3}));
    let path = write_config(tmp.path(), "v.json", &config);
    let out_dir = tmp.path().join("out");
    let out = run("verify", &path, &out_dir);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let bounds = read_json(&out_dir.join("bounds.json"));
    assert!(bounds["all_pass"].as_bool().unwrap());
    let reports = bounds["cases"][0]["reports"].as_array().unwrap();
    let flagged = reports
        .iter()
        .filter(|r| r.get("hypothesis_violation").is_some())
        .count();
    assert!(flagged >= 1, "positive control must flag decay checks");
}

#[test]
fn falsified_traces_fail_verification() {
    let tmp = tempfile::tempdir().unwrap();
    for falsify in ["scaled_tail", "negative_dip"] {
        let mut config = single_verify_config(json!({"kind": "constant", "value": -0.5}));
        config["verify"] = json!({"falsify": falsify});
        let path = write_config(tmp.path(), &format!("{falsify}.json"), &config);
        let out_dir = tmp.path().join(falsify);
        let out = run("verify", &path, &out_dir);
        assert_eq!(code(&out), 1, "{falsify} must fail, stderr: {}", stderr(&out));
        let bounds = read_json(&out_dir.join("bounds.json"));
        assert!(!bounds["all_pass"].as_bool().unwrap());
    }

    let clean = single_verify_config(json!({"kind": "constant", "value": -0.5}));
    let path = write_config(tmp.path(), "clean.json", &clean);
    let out = run("verify", &path, &tmp.path().join("clean"));
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
}

fn sweep_rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|line| line.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn sweep_error_shrinks_with_horizon() {
    let tmp = tempfile::tempdir().unwrap();
    let config = json!({
        "grid": {"dim": 1, "n": 99, "lengths": [1.0]},
        "nonlinearity": {"kind": "zero"},
        "initial": {"kind": "eigenmode", "k": [1], "amplitude": 1.0},
        "target": {"kind": "eigenmode", "k": [1], "amplitude": 0.6},
        "control": {"kind": "log_ratio"},
        "dt": 2.5e-4,
        "T": 0.1,
        "sweep": {"parameter": "T", "values": [0.1, 0.05, 0.02, 0.01]}
    });
    let path = write_config(tmp.path(), "sweep.json", &config);
    let out_dir = tmp.path().join("out");
    let out = run("sweep", &path, &out_dir);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let rows = sweep_rows(&out_dir.join("sweep.csv"));
    assert_eq!(rows.len(), 4);
    for row in &rows {
        assert!(row[1] <= row[2], "error {} above bound {}", row[1], row[2]);
    }
    for pair in rows.windows(2) {
        assert!(
            pair[1][1] < pair[0][1],
            "error must shrink with the horizon"
        );
    }
}

#[test]
fn sweep_exhibits_first_order_in_dt_and_second_in_h() {
    let tmp = tempfile::tempdir().unwrap();
    let exact_amp = (-std::f64::consts::PI.powi(2) * 0.05).exp();
    let base = json!({
        "grid": {"dim": 1, "n": 99, "lengths": [1.0]},
        "nonlinearity": {"kind": "zero"},
        "initial": {"kind": "eigenmode", "k": [1], "amplitude": 1.0},
        "target": {"kind": "eigenmode", "k": [1], "amplitude": exact_amp},
        "control": {"kind": "zero"},
        "dt": 1e-3,
        "T": 0.05
    });

    let mut dt_config = base.clone();
    dt_config["sweep"] = json!({"parameter": "dt", "values": [2e-3, 1e-3, 5e-4, 2.5e-4]});
    let path = write_config(tmp.path(), "dt.json", &dt_config);
    let dt_dir = tmp.path().join("dt");
    assert_eq!(code(&run("sweep", &path, &dt_dir)), 0);
    let errs: Vec<f64> = sweep_rows(&dt_dir.join("sweep.csv"))
        .iter()
        .map(|r| r[1])
        .collect();
    let diffs: Vec<f64> = errs.windows(2).map(|w| w[0] - w[1]).collect();
    for pair in diffs.windows(2) {
        let order = (pair[0] / pair[1]).log2();
        assert!(
            (order - 1.0).abs() < 0.1,
            "temporal order {order} should be 1"
        );
    }

    let mut n_config = base.clone();
    n_config["dt"] = json!(1e-5);
    n_config["sweep"] = json!({"parameter": "n", "values": [24, 49, 99]});
    let path = write_config(tmp.path(), "n.json", &n_config);
    let n_dir = tmp.path().join("n");
    assert_eq!(code(&run("sweep", &path, &n_dir)), 0);
    let errs: Vec<f64> = sweep_rows(&n_dir.join("sweep.csv"))
        .iter()
        .map(|r| r[1])
        .collect();
    let order = ((errs[0] - errs[1]) / (errs[1] - errs[2])).log2();
    assert!(
        (order - 2.0).abs() < 0.2,
        "spatial order {order} should be 2"
    );
}

#[test]
fn sweep_records_row_failures_and_continues() {
    let tmp = tempfile::tempdir().unwrap();
    let config = json!({
        "grid": {"dim": 1, "n": 49, "lengths": [1.0]},
        "nonlinearity": {"kind": "zero"},
        "initial": {"kind": "eigenmode", "k": [1]},
        "control": {"kind": "zero"},
        "dt": 1e-3,
        "T": 0.05,
        "sweep": {"parameter": "n", "values": [49, 2.5]}
    });
    let path = write_config(tmp.path(), "sweep.json", &config);
    let out_dir = tmp.path().join("out");
    let out = run("sweep", &path, &out_dir);
    assert_eq!(code(&out), 1, "stderr: {}", stderr(&out));

    let text = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(!lines[1].contains("NaN"), "valid row must compute");
    assert!(lines[2].contains("NaN"), "failed row must be recorded");
}

#[test]
fn oracle_compare_matches_modal_solution() {
    let tmp = tempfile::tempdir().unwrap();
    let config = json!({
        "grid": {"dim": 1, "n": 199, "lengths": [1.0]},
        "nonlinearity": {"kind": "zero"},
        "initial": {"kind": "eigenmode", "k": [1], "amplitude": 1.0},
        "control": {"kind": "zero"},
        "dt": 1e-4,
        "T": 0.1,
        "modes": 8
    });
    let path = write_config(tmp.path(), "oc.json", &config);
    let out_dir = tmp.path().join("out");
    let out = run("oracle-compare", &path, &out_dir);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let compare = read_json(&out_dir.join("compare.json"));
    assert!(compare["pass"].as_bool().unwrap());
    assert!(compare["discrepancy_l2"].as_f64().unwrap() < 1e-3);
    assert_eq!(compare["f_term_l2"].as_f64().unwrap(), 0.0);
    assert!(compare["f_term_bound"].is_null());

    let modes = compare["modes"].as_array().unwrap();
    assert_eq!(modes.len(), 8);
    let before = modes[0]["before"].as_f64().unwrap();
    let after = modes[0]["after"].as_f64().unwrap();
    let decay = (-std::f64::consts::PI.powi(2) * 0.1).exp();
    assert!(
        (after / before / decay - 1.0).abs() < 2e-3,
        "first mode decays at the continuum rate"
    );
}

#[test]
fn oracle_compare_bounds_the_reaction_term() {
    let tmp = tempfile::tempdir().unwrap();
    let config = json!({
        "grid": {"dim": 1, "n": 199, "lengths": [1.0]},
        "nonlinearity": {"kind": "scaled_sine", "L": 0.2},
        "initial": {"kind": "eigenmode", "k": [1], "amplitude": 1.0},
        "control": {"kind": "constant", "value": 0.5},
        "dt": 1e-4,
        "T": 0.1,
        "modes": 16
    });
    let path = write_config(tmp.path(), "oc.json", &config);
    let out_dir = tmp.path().join("out");
    let out = run("oracle-compare", &path, &out_dir);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let compare = read_json(&out_dir.join("compare.json"));
    assert!(compare["pass"].as_bool().unwrap());
    let f_l2 = compare["f_term_l2"].as_f64().unwrap();
    let bound = compare["f_term_bound"].as_f64().unwrap();
    assert!(f_l2 > 0.0);
    assert!(f_l2 <= bound, "reaction term {f_l2} above its bound {bound}");
    assert!(compare["f_term_within_bound"].as_bool().unwrap());
}

#[test]
fn oracle_compare_rejects_unsupported_configs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = heat_decay_config();
    config["grid"] = json!({"dim": 2, "n": 15, "lengths": [1.0, 1.0]});
    config["initial"] = json!({"kind": "eigenmode", "k": [1, 1]});
    config.as_object_mut().unwrap().remove("snapshots");
    let path = write_config(tmp.path(), "oc2d.json", &config);
    let out = run("oracle-compare", &path, &tmp.path().join("a"));
    assert_eq!(code(&out), 3);

    let mut config = heat_decay_config();
    config["control"] = json!({"kind": "static", "field": {"kind": "eigenmode", "k": [1], "amplitude": -1.0}});
    let path = write_config(tmp.path(), "ocv.json", &config);
    let out = run("oracle-compare", &path, &tmp.path().join("b"));
    assert_eq!(code(&out), 3);
}

#[test]
fn csv_fields_round_trip_between_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut first = heat_decay_config();
    first["grid"] = json!({"dim": 1, "n": 31, "lengths": [1.0]});
    first.as_object_mut().unwrap().remove("snapshots");
    let path = write_config(tmp.path(), "first.json", &first);
    let first_dir = tmp.path().join("first");
    assert_eq!(code(&run("simulate", &path, &first_dir)), 0);
    let first_l2 = read_json(&first_dir.join("report.json"))["final_l2"]
        .as_f64()
        .unwrap();

    let second = json!({
        "grid": {"dim": 1, "n": 31, "lengths": [1.0]},
        "nonlinearity": {"kind": "zero"},
        "initial": {"kind": "csv", "path": "first/final_state.csv"},
        "control": {"kind": "zero"},
        "dt": 1e-4,
        "T": 0.01
    });
    let path = write_config(tmp.path(), "second.json", &second);
    let second_dir = tmp.path().join("second");
    let out = run("simulate", &path, &second_dir);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let second_l2 = read_json(&second_dir.join("report.json"))["final_l2"]
        .as_f64()
        .unwrap();
    assert!(second_l2 > 0.0 && second_l2 < first_l2);
}

#[test]
fn seed_override_lands_in_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "heat.json", &heat_decay_config());
    let out_dir = tmp.path().join("out");
    let out = bin()
        .arg("simulate")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .args(["--seed", "7"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let manifest = read_json(&out_dir.join("manifest.json"));
    assert_eq!(manifest["seed"].as_u64().unwrap(), 7);
    assert_eq!(manifest["config"]["seed"].as_u64().unwrap(), 7);
}

#[test]
fn log_ratio_rejects_targets_above_the_initial_state() {
    let tmp = tempfile::tempdir().unwrap();
    let config = json!({
        "grid": {"dim": 1, "n": 31, "lengths": [1.0]},
        "nonlinearity": {"kind": "zero"},
        "initial": {"kind": "eigenmode", "k": [1], "amplitude": 0.5},
        "target": {"kind": "eigenmode", "k": [1], "amplitude": 1.0},
        "control": {"kind": "log_ratio"},
        "dt": 1e-3,
        "T": 0.1
    });
    let path = write_config(tmp.path(), "lr.json", &config);
    let out = run("simulate", &path, &tmp.path().join("out"));
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("ratio"), "{}", stderr(&out));
}
