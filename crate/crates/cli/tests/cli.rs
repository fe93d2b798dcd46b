use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fedxgb(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedxgb")).args(args).current_dir(cwd).output().expect("run fedxgb")
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "stdout: {}\nstderr: {}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn small_config(dir: &Path, seed: u64) -> String {
    let cfg = serde_json::json!({
        "session": { "parties": 3, "seed": seed },
        "params": { "trees": 2, "max_depth": 2 },
        "dataset": { "partition": { "fractions": [0.3, 0.3, 0.4] }, "synthetic": { "rows": 200, "features": 6 } }
    });
    let p = dir.join(format!("cfg{seed}.json"));
    fs::write(&p, cfg.to_string()).unwrap();
    p.display().to_string()
}

fn read_column(path: &Path, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let i = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[i].to_string()).collect()
}

#[test]
fn train_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 1);
    let out = ok(&fedxgb(&["train", "-c", &cfg, "-o", "run"], dir.path()));
    assert!(out.contains("structure matches"));
    for f in ["models/party-1.json", "models/party-2.json", "models/party-3.json", "predictions.csv", "report.json", "config.json"] {
        assert!(dir.path().join("run").join(f).exists(), "{f} missing");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("run/report.json")).unwrap()).unwrap();
    assert_eq!(report["audit"]["violations"].as_array().unwrap().len(), 0);
    let acc = report["metrics"]["acc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert!(report["oracle"]["max_abs_diff"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn flags_override_config_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 2);
    ok(&fedxgb(&["train", "-c", &cfg, "--trees", "1", "--set", "params.gamma=0.25", "-o", "run"], dir.path()));
    let used: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("run/config.json")).unwrap()).unwrap();
    assert_eq!(used["params"]["trees"], 1);
    assert_eq!(used["params"]["gamma"], 0.25);
    assert_eq!(used["session"]["parties"], 3);
}

#[test]
fn predict_from_saved_models_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 3);
    ok(&fedxgb(&["train", "-c", &cfg, "-o", "run"], dir.path()));
    ok(&fedxgb(&["predict", "-c", &cfg, "--models", "run/models", "-o", "p.csv"], dir.path()));
    let probs = read_column(&dir.path().join("p.csv"), "probability");
    assert_eq!(probs.len(), 200);
    assert!(probs.iter().all(|p| (0.0..=1.0).contains(&p.parse::<f64>().unwrap())));
    let m = ok(&fedxgb(&["eval", "p.csv"], dir.path()));
    let m: serde_json::Value = serde_json::from_str(&m).unwrap();
    assert!(m["auc"].as_f64().unwrap() > 0.5);
}

#[test]
fn missing_party_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 4);
    ok(&fedxgb(&["train", "-c", &cfg, "-o", "run"], dir.path()));
    fs::remove_file(dir.path().join("run/models/party-2.json")).unwrap();
    let o = fedxgb(&["predict", "-c", &cfg, "--models", "run/models", "-o", "p.csv"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("P2"));
}

#[test]
fn files_from_two_sessions_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_config(dir.path(), 5);
    let b = small_config(dir.path(), 6);
    ok(&fedxgb(&["train", "-c", &a, "-o", "a"], dir.path()));
    ok(&fedxgb(&["train", "-c", &b, "-o", "b"], dir.path()));
    fs::copy(dir.path().join("b/models/party-3.json"), dir.path().join("a/models/party-3.json")).unwrap();
    let o = fedxgb(&["predict", "-c", &a, "--models", "a/models", "-o", "p.csv"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("topology hash mismatch"));
}

#[test]
fn csv_with_missing_values_is_rejected_with_rows() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("d.csv"), "a,b,label\n1,2,0\n3,,1\n5,6,0\n?,1,1\n").unwrap();
    let o = fedxgb(&["train", "--data", "d.csv", "--parties", "2", "-o", "run"], dir.path());
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("2, 4"), "{err}");
}

#[test]
fn oracle_and_audit_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 7);
    ok(&fedxgb(&["oracle", "-c", &cfg, "-o", "orc"], dir.path()));
    assert!(dir.path().join("orc/trees.json").exists());
    ok(&fedxgb(&["audit", "-c", &cfg, "-o", "audit.json"], dir.path()));
    let a: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("audit.json")).unwrap()).unwrap();
    assert_eq!(a["restored"].as_array().unwrap().len(), 6);
}

#[test]
fn bench_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&fedxgb(&["bench", "--table-only", "-o", "b"], dir.path()));
    assert!(out.contains("10496"));
    let rows: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("b/argmax_cost.json")).unwrap()).unwrap();
    assert_eq!(rows[2]["division_free"], 1197);
    assert_eq!(rows[2]["measured"], 1197);
    assert!(dir.path().join("b/argmax_cost.txt").exists());
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"params": {"lambda": 0}}"#).unwrap();
    let o = fedxgb(&["train", "-c", "c.json", "-o", "run"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("lambda"));
}
