use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use stpm_testkit::{planted_csv, planted_geojson};

fn stpm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stpm"))
        .args(args)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, content: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, content).unwrap();
    path.to_str().unwrap().to_string()
}

fn planted_run_args<'a>(events: &'a str, regions: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![
        "run",
        "--events",
        events,
        "--regions",
        regions,
        "--attributes",
        "A,B,C,D",
        "--min-support",
        "0.1",
        "--min-lift",
        "1.5",
        "--seed",
        "0",
        "--out",
        out,
    ]
}

#[test]
fn missing_required_flag_is_usage_error() {
    let out = stpm(&["run"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--events"));
}

#[test]
fn validate_prints_report() {
    let dir = tempfile::tempdir().unwrap();
    let events = write(
        dir.path(),
        "events.csv",
        "DATE,PLACE,A\n2020-01-05,R1,x\nnot-a-date,R1,y\n2020-02-01,Atlantis,x\n",
    );
    let regions = write(dir.path(), "regions.geojson", &planted_geojson());
    let out = stpm(&["validate", "--events", &events, "--regions", &regions]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["totalRows"], 3);
    assert_eq!(report["keptRows"], 2);
    assert_eq!(report["droppedUnparseableDateRows"], 1);
    assert_eq!(report["unmatchedPlaces"], serde_json::json!(["Atlantis"]));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Atlantis"));
}

#[test]
fn validate_rejects_missing_date_column() {
    let dir = tempfile::tempdir().unwrap();
    let events = write(dir.path(), "events.csv", "WHEN,PLACE,A\n2020-01-05,R1,x\n");
    let out = stpm(&["validate", "--events", &events]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn unreadable_input_exits_one() {
    let out = stpm(&["validate", "--events", "/nonexistent/events.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn invalid_date_flag_is_usage_error() {
    let out = stpm(&["run", "--events", "x.csv", "--start", "2020-13-01"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_is_deterministic_and_finds_planted_rule() {
    let dir = tempfile::tempdir().unwrap();
    let events = write(dir.path(), "events.csv", &planted_csv(3));
    let regions = write(dir.path(), "regions.geojson", &planted_geojson());
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let result = stpm(&planted_run_args(&events, &regions, out.to_str().unwrap()));
        assert!(
            result.status.success(),
            "{}",
            String::from_utf8_lossy(&result.stderr)
        );
    }
    let (a, b) = (fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(a, b);

    let artifact: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(artifact["schemaVersion"], 1);
    assert_eq!(artifact["config"]["startDate"], "2016-01-01");
    assert_eq!(artifact["slices"].as_array().unwrap().len(), 24);
    assert!(!artifact["rules"].as_array().unwrap().is_empty());
}

#[test]
fn run_writes_stdout_when_no_out() {
    let dir = tempfile::tempdir().unwrap();
    let events = write(dir.path(), "events.csv", &planted_csv(4));
    let out = stpm(&[
        "run",
        "--events",
        &events,
        "--min-support",
        "0.1",
        "--min-lift",
        "1.5",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let artifact: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(
        artifact["config"]["attributeColumns"],
        serde_json::json!(["A", "B", "C", "D"])
    );
    assert_eq!(
        artifact["config"]["endDate"].as_str().unwrap()[..7],
        *"2017-12"
    );
}
