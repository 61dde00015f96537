use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use chargeflow::scenario;
use serde_json::Value;

fn chargeflow(args: &[&str], workers: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_chargeflow"));
    cmd.args(args);
    if let Some(w) = workers {
        cmd.env("CHARGEFLOW_WORKERS", w);
    }
    cmd.output().expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn bundled_scenario_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let res = chargeflow(&["positivity-su2", "--out", out], None);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let actual = read_json(&dir.path().join("summary.json"));
    let golden: Value = serde_json::from_str(scenario::bundled_golden("positivity-su2").unwrap()).unwrap();
    assert!(scenario::golden_diff(&golden, &actual).is_empty());
    for f in ["model.toml", "positivity.csv", "summary.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
}

#[test]
fn outputs_are_deterministic_across_worker_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, w) in [(&a, "1"), (&b, "3")] {
        let res = chargeflow(&["flat-u1-weyl", "--out", dir.path().to_str().unwrap(), "--seed", "5"], Some(w));
        assert_eq!(res.status.code(), Some(0));
    }
    for f in ["series.csv", "spectrum.csv", "volume.json", "summary.json"] {
        let x = fs::read(a.path().join(f)).unwrap();
        let y = fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between worker counts");
    }
}

#[test]
fn unknown_schema_version_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = scenario::BUNDLED_SCENARIOS
        .iter()
        .find(|(n, _)| *n == "positivity-u1")
        .unwrap()
        .1
        .replace("schema_version = 1", "schema_version = 7");
    let path = dir.path().join("future.toml");
    fs::write(&path, text).unwrap();
    let res = chargeflow(&[path.to_str().unwrap()], None);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("line 1") && err.contains("schema_version"), "{err}");
}

#[test]
fn falsified_check_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = scenario::BUNDLED_SCENARIOS
        .iter()
        .find(|(n, _)| *n == "positivity-u1")
        .unwrap()
        .1
        .replace("expected = 4.0", "expected = 5.0");
    let path = dir.path().join("wrong.toml");
    fs::write(&path, text).unwrap();
    let out = dir.path().join("out");
    let res = chargeflow(&[path.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("check failed: m0"));
}

#[test]
fn corrupted_golden_names_the_field() {
    let mut golden: Value = serde_json::from_str(scenario::bundled_golden("positivity-u1").unwrap()).unwrap();
    let actual = golden.clone();
    golden["quantities"]["m0"]["value"] = Value::from(3.0);
    let diffs = scenario::golden_diff(&golden, &actual);
    assert_eq!(diffs.len(), 1);
    assert!(diffs[0].contains("/quantities/m0/value"), "{diffs:?}");
}

#[test]
fn list_scenarios_names_every_bundle() {
    let res = chargeflow(&["--list-scenarios"], None);
    let text = String::from_utf8_lossy(&res.stdout);
    for (name, _) in scenario::BUNDLED_SCENARIOS {
        assert!(text.contains(name));
    }
}
