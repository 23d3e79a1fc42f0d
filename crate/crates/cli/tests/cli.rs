use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn run(dir: &Path, config: &Value, extra: &[&str]) -> Output {
    let path = dir.join("run.json");
    fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    Command::new(env!("CARGO_BIN_EXE_fracap"))
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Data rows of a CSV written by the tool: comment and header stripped.
fn data_rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(
        lines.next().unwrap().starts_with("# fracap "),
        "comment line first"
    );
    lines.next().expect("header row");
    lines.map(split_csv).collect()
}

fn split_csv(line: &str) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if quoted && chars.peek() == Some(&'"') => {
                chars.next();
                out.last_mut().unwrap().push('"');
            }
            '"' => quoted = !quoted,
            ',' if !quoted => out.push(String::new()),
            _ => out.last_mut().unwrap().push(c),
        }
    }
    out
}

fn two_node(command: &str) -> Value {
    json!({
        "command": command,
        "grid": {"shape": [2], "h": 1.0},
        "s": 0.5,
        "q": {"kind": "constant", "value": 2.0},
        "p": {"kind": "constant", "value": 2.0},
        "target": {"kind": "points", "nodes": [[0]]},
    })
}

#[test]
fn minimal_modular_config() {
    let dir = tempfile::tempdir().unwrap();
    let u: Vec<String> = (0..9)
        .map(|i| format!("{}", if i == 4 { 1.0 } else { 0.0 }))
        .collect();
    fs::write(dir.path().join("u.csv"), u.join("\n")).unwrap();
    let cfg = json!({
        "command": "modular",
        "grid": {"shape": [9], "h": 0.125},
        "s": 0.5,
        "q": {"kind": "constant", "value": 2.0},
        "p": {"kind": "constant", "value": 2.0},
        "u": "u.csv",
    });
    let o = run(dir.path(), &cfg, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = data_rows(&dir.path().join("out/modular.csv"));
    assert_eq!(rows.len(), 1);
    let total: f64 = rows[0][4].parse().unwrap();
    assert!(total > 0.125, "Lebesgue part alone is h");
}

#[test]
fn norm_of_two_node_function() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("u.csv"), "node,x,value\n0,0,1\n1,1,0\n").unwrap();
    let mut cfg = two_node("norm");
    cfg["u"] = json!("u.csv");
    let o = run(dir.path(), &cfg, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = data_rows(&dir.path().join("out/norm.csv"));
    let norm: f64 = rows[0][2].parse().unwrap();
    assert!((norm - 3f64.sqrt()).abs() < 1e-9);
}

#[test]
fn s_out_of_range_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = two_node("capacity");
    cfg["s"] = json!(1.2);
    let o = run(dir.path(), &cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("s must lie in (0,1)"), "{err}");
    let line: Value = serde_json::from_str(err.lines().last().unwrap()).unwrap();
    assert_eq!(line["kind"], "config");
}

#[test]
fn unknown_key_is_rejected_unless_lenient() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = two_node("capacity");
    cfg["smoothing"] = json!(0.5);
    let o = run(dir.path(), &cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(
        err.contains("parse error") && err.contains("smoothing") && err.contains("line"),
        "{err}"
    );

    let o = run(dir.path(), &cfg, &["--lenient"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("smoothing"));
}

#[test]
fn nested_unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = two_node("capacity");
    cfg["q"]["slope"] = json!([1.0]);
    let o = run(dir.path(), &cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("q.slope"), "{}", stderr(&o));
}

#[test]
fn two_node_capacity_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &two_node("capacity"), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = data_rows(&dir.path().join("out/capacity.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "sobolev");
    assert_eq!(rows[0][2], "0");
    let value: f64 = rows[0][5].parse().unwrap();
    assert!((value - 1.666667).abs() < 1e-6, "{value}");
    assert_eq!(rows[0][7], "true");
    let json: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/capacity.json")).unwrap())
            .unwrap();
    assert!(json["rows"][0].get("minimizer").is_none());
}

#[test]
fn capacity_with_radii_smoothing_and_minimizer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "command": "capacity",
        "grid": {"shape": [9], "h": 0.125},
        "s": 0.5,
        "q": {"kind": "affine", "base": 1.5, "slope": [1.0], "clamp": [1.5, 2.5]},
        "p": {"kind": "distance", "base": 2.0, "amplitude": 1.0},
        "target": {"kind": "interval", "lo": 0.5, "hi": 0.5},
        "radii": [2, 1, 0],
        "sigmas": [0.5, 0.125],
        "box_sensitivity": true,
        "write_minimizer": true,
    });
    let o = run(dir.path(), &cfg, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    let rows = data_rows(&out.join("capacity.csv"));
    let values: Vec<f64> = rows.iter().map(|r| r[5].parse().unwrap()).collect();
    assert!(values.windows(2).all(|w| w[1] <= w[0] + 1e-8));
    assert_eq!(data_rows(&out.join("capacity_smooth.csv")).len(), 2);
    assert_eq!(data_rows(&out.join("capacity_minimizer_r0.csv")).len(), 9);
    let json: Value =
        serde_json::from_str(&fs::read_to_string(out.join("capacity.json")).unwrap()).unwrap();
    assert_eq!(json["rows"][2]["minimizer"].as_array().unwrap().len(), 9);
    assert!(json["box_sensitivity"]["drift_percent"].is_number());
}

#[test]
fn relcap_on_a_subdomain() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = two_node("relcap");
    cfg["grid"] = json!({"shape": [9], "h": 0.125});
    cfg["target"] = json!({"kind": "interval", "lo": 0.5, "hi": 0.5});
    cfg["domain"] = json!({"kind": "interval", "lo": 0.25, "hi": 0.75});
    let o = run(dir.path(), &cfg, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = data_rows(&dir.path().join("out/relcap.csv"));
    assert_eq!(rows[0][0], "relative");
}

#[test]
fn sweep_writes_one_row_per_s() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = two_node("sweep");
    cfg["grid"] = json!({"shape": [9], "h": 0.125});
    cfg["target"] = json!({"kind": "points", "nodes": [[4]]});
    cfg["s_values"] = json!([0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]);
    cfg.as_object_mut().unwrap().remove("s");
    let o = run(dir.path(), &cfg, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = data_rows(&dir.path().join("out/sweep.csv"));
    assert_eq!(rows.len(), 9);
    assert!(rows.iter().all(|r| r[7] == "true"));
}

#[test]
fn missing_input_csv_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = two_node("modular");
    cfg["u"] = json!("does_not_exist.csv");
    let o = run(dir.path(), &cfg, &[]);
    assert_eq!(o.status.code(), Some(2));

    let mut cfg = two_node("capacity");
    cfg["q"] = json!({"kind": "table", "path": "missing_q.csv"});
    assert_eq!(run(dir.path(), &cfg, &[]).status.code(), Some(2));
}

#[test]
fn exponent_tables_load_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("q.csv"), "# q per node\n2\n2\n").unwrap();
    fs::write(dir.path().join("p.csv"), "2,2\n2,2\n").unwrap();
    let mut cfg = two_node("capacity");
    cfg["q"] = json!({"kind": "table", "path": "q.csv"});
    cfg["p"] = json!({"kind": "table", "path": "p.csv"});
    let o = run(dir.path(), &cfg, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = data_rows(&dir.path().join("out/capacity.csv"));
    assert!((rows[0][5].parse::<f64>().unwrap() - 5.0 / 3.0).abs() < 1e-6);
}

#[test]
fn nonconvergence_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = two_node("capacity");
    cfg["grid"] = json!({"shape": [17], "h": 0.0625});
    cfg["target"] = json!({"kind": "points", "nodes": [[8]]});
    cfg["optimizer"] = json!({"max_iters": 1});
    let o = run(dir.path(), &cfg, &[]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("\"kind\":\"compute\""));
    assert!(dir.path().join("out/capacity.csv").exists());
}

#[test]
fn reruns_are_bitwise_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = two_node("sweep");
    cfg["grid"] = json!({"shape": [5, 5], "h": 0.25});
    cfg["target"] = json!({"kind": "ball", "center": [0.5, 0.5], "radius": 0.3});
    cfg["s_values"] = json!([0.25, 0.75]);
    let first = {
        assert!(run(dir.path(), &cfg, &["--threads", "2"]).status.success());
        fs::read(dir.path().join("out/sweep.csv")).unwrap()
    };
    assert!(run(dir.path(), &cfg, &["--threads", "2"]).status.success());
    assert_eq!(first, fs::read(dir.path().join("out/sweep.csv")).unwrap());
}

#[test]
fn suite_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "command": "suite",
        "suite": {
            "trials": 2,
            "sizes": [[5]],
            "properties": ["norm_homogeneity", "capacity_monotone"],
            "tolerances": {"norm": 0.0},
        },
    });
    let o = run(dir.path(), &cfg, &["--seed", "3", "--threads", "1"]);
    let report_path = dir.path().join("out/suite_report.json");
    let first = fs::read(&report_path).unwrap();
    let report: Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(report["schema"], 1);
    assert_eq!(report["config"]["seed"], 3);
    assert!(String::from_utf8_lossy(&o.stdout).contains("norm_homogeneity"));
    let again = run(dir.path(), &cfg, &["--seed", "3", "--threads", "1"]);
    assert_eq!(o.status.code(), again.status.code());
    assert_eq!(first, fs::read(&report_path).unwrap());

    let failures = report["properties"][0]["failures"].as_array().unwrap();
    if let Some(f) = failures.first() {
        assert_eq!(o.status.code(), Some(1));
        fs::write(
            dir.path().join("case.json"),
            serde_json::to_string(f).unwrap(),
        )
        .unwrap();
        let replay_cfg = json!({"command": "replay", "instance": "case.json", "suite": {"tolerances": {"norm": 0.0}}});
        let r = run(dir.path(), &replay_cfg, &[]);
        assert_eq!(r.status.code(), Some(1));
        let relaxed = json!({"command": "replay", "instance": "case.json"});
        assert!(run(dir.path(), &relaxed, &[]).status.success());
    }
}

#[test]
fn bad_threads_flag_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &two_node("capacity"), &["--threads", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn box_sensitivity_checks_exponents_on_the_doubled_box() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = two_node("capacity");
    cfg["grid"] = json!({"shape": [9], "h": 0.125});
    cfg["q"] = json!({"kind": "affine", "base": 1.5, "slope": [1.0]});
    cfg["target"] = json!({"kind": "points", "nodes": [[4]]});
    cfg["box_sensitivity"] = json!(true);
    let o = run(dir.path(), &cfg, &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("doubled box"));
}

#[test]
fn shipped_configs_run() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut seen = 0;
    for entry in fs::read_dir(&configs).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let out = tempfile::tempdir().unwrap();
        let o = Command::new(env!("CARGO_BIN_EXE_fracap"))
            .arg("--config")
            .arg(&path)
            .arg("--out")
            .arg(out.path())
            .output()
            .unwrap();
        assert!(
            o.status.success(),
            "{}: {}{}",
            path.display(),
            String::from_utf8_lossy(&o.stdout),
            stderr(&o)
        );
        seen += 1;
    }
    assert!(seen >= 5);
}
