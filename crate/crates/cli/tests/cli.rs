use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rcsp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcsp")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_config(dir: &Path) -> String {
    let mut config: serde_json::Value = serde_json::from_slice(&rcsp(&["config"]).stdout).unwrap();
    config["environments"] = serde_json::json!(["open-space"]);
    config["controllers"] = serde_json::json!(["goal-pd", "dwa-style"]);
    config["seeds"] = serde_json::json!([0, 1]);
    let path = dir.join("small.json");
    fs::write(&path, config.to_string()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn printed_config_is_the_shipped_default() {
    let out = rcsp(&["config"]);
    assert!(out.status.success());
    let shipped = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.json")).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim_end(), shipped.trim_end());
}

#[test]
fn run_prints_metrics() {
    let out = rcsp(&["run", "--env", "open-space", "--controller", "goal-pd", "--seed", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = json(&out);
    assert_eq!(m["success"], 1);
    assert!(m["mean_planner_latency_ms"].is_number());

    let verbose = rcsp(&["run", "--env", "open-space", "--controller", "goal-pd", "--seed", "1", "--verbose"]);
    assert!(String::from_utf8(verbose.stdout).unwrap().starts_with("step,x,y,heading"));
}

#[test]
fn bad_input_exits_with_two() {
    let bad_controller = rcsp(&["run", "--env", "open-space", "--controller", "teleport"]);
    assert_eq!(bad_controller.status.code(), Some(2));
    let bad_env = rcsp(&["env", "--env", "moon-base"]);
    assert_eq!(bad_env.status.code(), Some(2));
    let tmp = tempfile::tempdir().unwrap();
    let broken = tmp.path().join("broken.json");
    fs::write(&broken, r#"{"seeds": []}"#).unwrap();
    let out = rcsp(&["suite", "--config", broken.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(rcsp(&["validate", "--trials", "10", "--alpha", "1.5"]).status.code(), Some(2));
}

#[test]
fn validate_reports_both_checks() {
    let out = rcsp(&["validate", "--trials", "200"]);
    assert!(out.status.success());
    let reports = json(&out);
    let reports = reports.as_array().unwrap();
    assert_eq!(reports.len(), 2);
    assert!(reports.iter().all(|r| r["pass"] == true && r["trials"] == 200));
}

#[test]
fn env_prints_geometry() {
    let out = rcsp(&["env", "--env", "bottleneck", "--seed", "3"]);
    assert!(out.status.success());
    let env = json(&out);
    assert_eq!(env["name"], "bottleneck");
    assert!(!env["map"]["walls"].as_array().unwrap().is_empty());
}

#[test]
fn suite_then_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path());
    let out_dir = tmp.path().join("results");
    let out = rcsp(&["suite", "--config", &config, "--out", out_dir.to_str().unwrap(), "--workers", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("goal-pd") && table.contains("dwa-style"));
    for f in ["summary.csv", "timing.csv", "failures.jsonl"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }

    let episodes = out_dir.join("episodes");
    let replayed = rcsp(&["replay", "--record", episodes.to_str().unwrap()]);
    assert!(replayed.status.success());
    let reports = json(&replayed);
    assert_eq!(reports.as_array().unwrap().len(), 4);

    // a record with an edited pose no longer replays
    let file = fs::read_dir(&episodes).unwrap().next().unwrap().unwrap().path();
    let mut record: serde_json::Value = serde_json::from_str(fs::read_to_string(&file).unwrap().lines().next().unwrap()).unwrap();
    let x = record["trace"][3]["x"].as_f64().unwrap();
    record["trace"][3]["x"] = (x + 1e-6).into();
    let tampered = tmp.path().join("tampered.jsonl");
    fs::write(&tampered, record.to_string()).unwrap();
    let out = rcsp(&["replay", "--record", tampered.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)[0]["first_divergence"], record["trace"][3]["step"]);
}
