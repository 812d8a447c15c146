use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn fairaudit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairaudit"))
        .args(args)
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// CSV plus config: `a` is the group (privileged "p"), `y` the target.
fn cell_dataset(dir: &Path, cells: [(&str, u8, usize); 4]) -> PathBuf {
    let csv = dir.join("cells.csv");
    let mut f = std::fs::File::create(&csv).unwrap();
    writeln!(f, "x,a,y").unwrap();
    let mut i = 0;
    for (a, y, n) in cells {
        for _ in 0..n {
            writeln!(f, "{},{a},{y}", i % 7).unwrap();
            i += 1;
        }
    }
    let cfg = dir.join("cells.json");
    std::fs::write(
        &cfg,
        r#"{"csv_path": "cells.csv", "target_column": "y", "favorable_label": "1",
            "sensitive_column": "a", "privileged_value": "p"}"#,
    )
    .unwrap();
    cfg
}

fn wide_dataset(dir: &Path, columns: usize, rows: usize) -> PathBuf {
    let csv = dir.join("wide.csv");
    let mut f = std::fs::File::create(&csv).unwrap();
    let names: Vec<String> = (0..columns).map(|j| format!("c{j}")).collect();
    writeln!(f, "{},g,y", names.join(",")).unwrap();
    for i in 0..rows {
        let vals: Vec<String> = (0..columns)
            .map(|j| ((i * (j + 3)) % 17).to_string())
            .collect();
        let g = if i % 3 == 0 { "p" } else { "u" };
        writeln!(f, "{},{g},{}", vals.join(","), u8::from((i * 7) % 11 > 4)).unwrap();
    }
    let cfg = dir.join("wide.json");
    std::fs::write(
        &cfg,
        r#"{"csv_path": "wide.csv", "target_column": "y", "favorable_label": "1",
            "sensitive_column": "g", "privileged_value": "p"}"#,
    )
    .unwrap();
    cfg
}

#[test]
fn audit_writes_report_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs/c1");
    let config = data("compas_sample.json");
    let o = fairaudit(&[
        "audit",
        "--config",
        s(&config),
        "--model",
        "lr",
        "--out",
        s(&out),
        "--dependence",
        "age",
        "--dependence",
        "race",
        "--color",
        "priors_count",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut names: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "audit_report.json",
            "dependence_age.csv",
            "dependence_race.csv",
            "explanations_baseline.csv",
            "explanations_reweighed.csv",
            "model_baseline.json",
            "model_reweighed.json",
            "predictions_baseline.csv",
            "predictions_reweighed.csv",
            "summary.csv",
        ]
    );
    let report = json(&out.join("audit_report.json"));
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["seed"], 42);
    assert_eq!(report["sensitive_feature"], "race");
    assert_eq!(report["reweighing"].as_array().unwrap().len(), 4);
    assert!(report["scenario"]["label"].is_string());
    let dep = std::fs::read_to_string(out.join("dependence_age.csv")).unwrap();
    assert_eq!(dep.lines().next().unwrap(), "path,row,value,phi,color");
    // header plus 12 test rows per path
    assert_eq!(dep.lines().count(), 1 + 2 * 12);
}

#[test]
fn single_path_runs() {
    let dir = tempfile::tempdir().unwrap();
    let config = data("compas_sample.json");
    for (flag, present, absent) in [
        ("off", "baseline", "reweighed"),
        ("on", "reweighed", "baseline"),
    ] {
        let out = dir.path().join(flag);
        let o = fairaudit(&[
            "audit",
            "--config",
            s(&config),
            "--reweigh",
            flag,
            "--out",
            s(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let report = json(&out.join("audit_report.json"));
        assert!(report[present].is_object());
        assert!(report[absent].is_null());
        assert!(report["deltas"].is_null());
        assert!(out.join(format!("model_{present}.json")).exists());
        assert!(!out.join(format!("model_{absent}.json")).exists());
    }
}

#[test]
fn missing_config_is_a_config_error_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let o = fairaudit(&[
        "audit",
        "--config",
        "/nonexistent/german.json",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("config"));
    assert!(!out.exists());
}

#[test]
fn unknown_dependence_feature_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let config = data("compas_sample.json");
    let o = fairaudit(&[
        "audit",
        "--config",
        s(&config),
        "--dependence",
        "height",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("height"));
    assert!(!out.exists());
}

#[test]
fn same_seed_same_outputs_other_seed_differs() {
    let dir = tempfile::tempdir().unwrap();
    let config = data("compas_sample.json");
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = fairaudit(&[
            "audit",
            "--config",
            s(&config),
            "--model",
            "gbm",
            "--seed",
            seed,
            "--out",
            s(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(out.join("audit_report.json")).unwrap()
    };
    let a = run("a", "7");
    let b = run("b", "7");
    let c = run("c", "8");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn explain_and_metrics_reproduce_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = data("compas_sample.json");
    let audit_out = dir.path().join("audit");
    let o = fairaudit(&[
        "audit",
        "--config",
        s(&config),
        "--seed",
        "3",
        "--out",
        s(&audit_out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = json(&audit_out.join("audit_report.json"));

    for path in ["baseline", "reweighed"] {
        let out = dir.path().join(format!("explain_{path}"));
        let model = audit_out.join(format!("model_{path}.json"));
        let o = fairaudit(&[
            "explain",
            "--config",
            s(&config),
            "--seed",
            "3",
            "--model-file",
            s(&model),
            "--out",
            s(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert_eq!(
            std::fs::read(out.join("explanations.csv")).unwrap(),
            std::fs::read(audit_out.join(format!("explanations_{path}.csv"))).unwrap()
        );
        assert_eq!(
            json(&out.join("importance.json")),
            report[path]["importance"]
        );

        let preds = audit_out.join(format!("predictions_{path}.csv"));
        let o = fairaudit(&[
            "metrics",
            "--predictions",
            s(&preds),
            "--config",
            s(&config),
            "--seed",
            "3",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let metrics: Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(metrics, report[path]["fairness"]);
    }
}

#[test]
fn explain_rejects_a_model_from_another_split() {
    let dir = tempfile::tempdir().unwrap();
    let config = data("compas_sample.json");
    let audit_out = dir.path().join("audit");
    assert!(fairaudit(&[
        "audit",
        "--config",
        s(&config),
        "--reweigh",
        "off",
        "--out",
        s(&audit_out)
    ])
    .status
    .success());
    let model = audit_out.join("model_baseline.json");
    let out = dir.path().join("explain");
    let o = fairaudit(&[
        "explain",
        "--config",
        s(&config),
        "--seed",
        "4",
        "--model-file",
        s(&model),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(10), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn exact_method_over_threshold_is_an_explain_error() {
    let dir = tempfile::tempdir().unwrap();
    // 19 numeric columns plus the group: 20 features
    let config = wide_dataset(dir.path(), 19, 80);
    let audit_out = dir.path().join("audit");
    let o = fairaudit(&[
        "audit",
        "--config",
        s(&config),
        "--method",
        "exact",
        "--reweigh",
        "off",
        "--out",
        s(&audit_out),
    ]);
    assert_eq!(o.status.code(), Some(7));
    assert!(stderr(&o).contains("threshold"), "{}", stderr(&o));
    assert!(!audit_out.exists());

    let o = fairaudit(&[
        "audit",
        "--config",
        s(&config),
        "--reweigh",
        "off",
        "--background",
        "5",
        "--permutations",
        "10",
        "--out",
        s(&audit_out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let model = audit_out.join("model_baseline.json");
    let out = dir.path().join("explain");
    let o = fairaudit(&[
        "explain",
        "--config",
        s(&config),
        "--model-file",
        s(&model),
        "--method",
        "exact",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(7));
    assert!(
        stderr(&o).contains("20 features exceed the exact-enumeration threshold of 15"),
        "{}",
        stderr(&o)
    );
    assert!(!out.exists());
}

#[test]
fn metrics_on_hand_built_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let preds = dir.path().join("preds.csv");
    // unprivileged rows first: favorable rates 2/4 and 3/4; TPR 1/2 and 3/4
    std::fs::write(
        &preds,
        "prediction,label,sensitive\n1,1,0\n1,0,0\n0,1,0\n0,0,0\n1,1,1\n1,1,1\n1,1,1\n0,1,1\n",
    )
    .unwrap();
    let o = fairaudit(&["metrics", "--predictions", s(&preds)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(m["disparate_impact"]["status"], "defined");
    assert_eq!(m["disparate_impact"]["value"].as_f64().unwrap(), 0.5 / 0.75);
    assert_eq!(m["equal_opportunity"].as_f64().unwrap(), -0.25);
    assert!(m["consistency"].is_null());
    assert_eq!(m["group_sizes"], serde_json::json!([[2, 2], [0, 4]]));

    std::fs::write(&preds, "prediction,label\n1,1\n").unwrap();
    let o = fairaudit(&["metrics", "--predictions", s(&preds)]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("sensitive"));
}

#[test]
fn weights_hand_cases() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = cell_dataset(
        dir.path(),
        [("u", 0, 40), ("u", 1, 10), ("p", 0, 10), ("p", 1, 40)],
    );
    let o = fairaudit(&["weights", "--config", s(&cfg), "--all-rows"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let w: Value = serde_json::from_slice(&o.stdout).unwrap();
    let cells: Vec<f64> = w["cells"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["weight"].as_f64().unwrap())
        .collect();
    assert_eq!(cells, [0.625, 2.5, 2.5, 0.625]);
    assert_eq!(w["rows"], 100);

    let cfg = cell_dataset(
        dir.path(),
        [("u", 0, 25), ("u", 1, 25), ("p", 0, 25), ("p", 1, 25)],
    );
    let o = fairaudit(&["weights", "--config", s(&cfg), "--all-rows"]);
    let w: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(w["cells"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["weight"] == 1.0));

    // training split only: rates still equalized
    let o = fairaudit(&["weights", "--config", s(&cfg), "--seed", "9"]);
    let w: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(w["rows"], 80);
    let r = w["weighted_favorable_rate"].as_array().unwrap();
    assert!((r[0].as_f64().unwrap() - r[1].as_f64().unwrap()).abs() < 1e-12);
}

#[test]
fn weights_single_class_target_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = cell_dataset(
        dir.path(),
        [("u", 1, 30), ("u", 1, 0), ("p", 1, 30), ("p", 1, 0)],
    );
    let o = fairaudit(&["weights", "--config", s(&cfg), "--all-rows"]);
    assert!(!o.status.success());
    assert!(o.stdout.is_empty());
    assert!(stderr(&o).contains("target"), "{}", stderr(&o));
}

#[test]
fn help_documents_exit_codes() {
    let o = fairaudit(&["--help"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("Exit codes"));
    assert!(text.contains("default 42"));
}
