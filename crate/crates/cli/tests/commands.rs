use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

fn dcpp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcpp"))
        .args(args)
        .output()
        .unwrap()
}

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcpp-sim"))
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_map_summarizes_a_good_map() {
    let map = fixture("two_detours.map.json");
    let out = dcpp(&["validate-map", "--map", map.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        String::from_utf8_lossy(&out.stdout).trim(),
        "ok: 5 lanelets, 6 successor edges, 0 blocked"
    );
}

#[test]
fn validate_map_rejects_dangling_successor() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc: Value =
        serde_json::from_str(&std::fs::read_to_string(fixture("straight.map.json")).unwrap())
            .unwrap();
    doc["lanelets"][0]["successors"] = json!([7]);
    let path = dir.path().join("bad.map.json");
    std::fs::write(&path, doc.to_string()).unwrap();

    let out = dcpp(&["validate-map", "--map", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("dangling successor 7"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn plan_writes_ranked_candidates() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("plan.json");
    let scenario = fixture("two_detours.scenario.json");
    let out = dcpp(&[
        "plan",
        "--scenario",
        scenario.to_str().unwrap(),
        "--max-iters",
        "1500",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    let plan: Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    let candidates = plan["candidates"].as_array().unwrap();
    assert_eq!(candidates.len(), 2);
    assert_eq!(candidates[0]["preferred"], true);
    assert_eq!(candidates[0]["odd_modifications"], json!(["parking_area"]));
    assert_eq!(candidates[1]["odd_modifications"], json!(["sidewalk"]));
    assert!(candidates[0]["cost_score"].as_f64() <= candidates[1]["cost_score"].as_f64());
    assert_eq!(plan["generation"], 1);
}

#[test]
fn plan_reports_zero_candidates() {
    let dir = tempfile::tempdir().unwrap();
    let doc = json!({
        "name": "walled",
        "map_file": fixture("straight.map.json"),
        "grid_file": fixture("straight.grid.json"),
        "start_pose": [0.0, 0.0, 0.0],
        "start_lanelet": 1,
        "goal_lanelet": 1,
        "obstacles": [{ "center": [15.0, 0.0], "length": 2.0, "width": 8.0, "heading": 0.0 }]
    });
    let path = dir.path().join("walled.scenario.json");
    std::fs::write(&path, doc.to_string()).unwrap();

    let out = dcpp(&[
        "plan",
        "--scenario",
        path.to_str().unwrap(),
        "--max-iters",
        "300",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("Zero candidates found"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn plan_rejects_bad_weights() {
    let scenario = fixture("two_detours.scenario.json");
    let out = dcpp(&["plan", "--scenario", scenario.to_str().unwrap(), "--w1=-1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("invalid cost weights"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn sim_run_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let scenario = fixture("two_detours.scenario.json");
    let out = sim(&[
        "run",
        "--scenario",
        scenario.to_str().unwrap(),
        "--seed",
        "42",
        "--max-iters",
        "1500",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("two_detours accept_preferred seed 42: completed"));

    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["outcome"], "completed");
    assert_eq!(r["success"], true);
    assert_eq!(r["collisions"], 0);
    assert_eq!(r["approved_modifications"], json!(["parking_area"]));
}

#[test]
fn sim_run_exits_nonzero_on_mrm() {
    let scenario = fixture("two_detours.scenario.json");
    let out = sim(&[
        "run",
        "--scenario",
        scenario.to_str().unwrap(),
        "--policy",
        "reject_all",
        "--max-iters",
        "1500",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["outcome"], "mrm");
}

#[test]
fn sim_run_rejects_unknown_policy() {
    let scenario = fixture("two_detours.scenario.json");
    let out = sim(&[
        "run",
        "--scenario",
        scenario.to_str().unwrap(),
        "--policy",
        "bogus",
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("unknown policy `bogus`"));
}

#[test]
fn checked_in_scenarios_load() {
    for name in [
        "two_detours",
        "single_detour",
        "straight",
        "clearing_obstacle",
    ] {
        let path = fixture(&format!("{name}.scenario.json"));
        let scenario = dcpp_cli::load_scenario(&path).unwrap();
        assert_eq!(scenario.name, name);
    }
}
