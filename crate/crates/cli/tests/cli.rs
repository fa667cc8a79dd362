use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ambientis::aggregate::{read_daily_csv, write_daily_csv, Phase};

const TINY: &str = r#"
name = "tiny"
start_date = "2024-03-04"
frame_interval_ms = 1000
seed = 9
max_frames = 600

[[phase]]
label = "normal"
days = 1

[[phase.segment]]
start = "00:01"
end = "00:04"
posture = "sitting"
motion = "small"
displacement = [1, 1]
inactive_fraction = 0.5
bout_frames = 10
"#;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ambientis")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn p1() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/presets/p1-mindful-meal.scn")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_input_exits_2() {
    let o = bin(&["aggregate", "/nonexistent/features.jsonl"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = bin(&["simulate", "/nonexistent.scn"]);
    assert_eq!(o.status.code(), Some(2));
    let o = bin(&["run"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn malformed_features_exit_3_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("features.jsonl");
    fs::write(&f, "{\"timestamp_ms\":0,\"present\":false}\n{\"timestamp_ms\":1000,\"present\":\n").unwrap();
    let o = bin(&["aggregate", p(&f), "--frame-interval-ms", "1000"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn malformed_scenario_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("bad.scn");
    fs::write(&f, TINY.replace("start = \"00:01\"", "start = \"25:00\"")).unwrap();
    let o = bin(&["simulate", p(&f), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn unknown_plugin_exits_2() {
    let o = bin(&["run", "--scenario", p(&p1()), "--classifier", "resnet", "--out", "/tmp"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn scenario_run_through_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let scn = dir.path().join("tiny.scn");
    fs::write(&scn, TINY).unwrap();
    let out = dir.path().join("out");
    let o = bin(&["run", "--scenario", p(&scn), "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(out.join("features.jsonl")).unwrap().lines().count(), 600);
    let o = bin(&["aggregate", p(&out.join("features.jsonl"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let days = read_daily_csv(fs::File::open(out.join("daily.csv")).unwrap()).unwrap();
    assert_eq!(days.len(), 1);
    assert_eq!(days[0].appearance_minutes, 3.0);
    assert_eq!(days[0].sitting_ratio, Some(1.0));
    let o = bin(&["scan", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn config_file_supplies_paths_and_settings() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.scn"), TINY).unwrap();
    let cfg = dir.path().join("ambientis.toml");
    fs::write(&cfg, "out = \"results\"\n[stream]\nscenario = \"tiny.scn\"\n[pipeline]\nthreshold = 765\n").unwrap();
    let o = bin(&["--config", p(&cfg), "run"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let features = dir.path().join("results/features.jsonl");
    let text = fs::read_to_string(&features).unwrap();
    // No colour change can exceed the maximum threshold.
    assert!(text.lines().filter(|l| l.contains("\"motion\":{")).all(|l| l.contains("\"inactive\":true")));
    fs::write(&cfg, "bogus = 1\n").unwrap();
    assert_eq!(bin(&["--config", p(&cfg), "run"]).status.code(), Some(2));
}

#[test]
fn compare_and_report_from_ledger_truth() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["simulate", p(&p1()), "--ledger-only", "--out", p(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!dir.path().join("frames.ambf").exists());
    let days = read_daily_csv(fs::File::open(dir.path().join("oracle_daily.csv")).unwrap()).unwrap();
    for phase in [Phase::Normal, Phase::Intervention] {
        let subset: Vec<_> = days.iter().filter(|d| d.phase == phase).cloned().collect();
        write_daily_csv(fs::File::create(dir.path().join(format!("{}.csv", phase.as_str()))).unwrap(), &subset)
            .unwrap();
    }
    let (n, i) = (dir.path().join("normal.csv"), dir.path().join("intervention.csv"));
    let o = bin(&["compare", p(&n), p(&i)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("comparison.json")).unwrap()).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 7);
    assert!(rows.iter().all(|r| r["dof"] == 7));

    let o = bin(&["compare", p(&n), p(&i), "--per-hour-slot"]);
    assert!(o.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("comparison.json")).unwrap()).unwrap();
    assert_eq!(report["rows"][6]["dof"], 23);

    let o = bin(&["report", p(&dir.path().join("oracle_daily.csv")), "--band", "0-5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let band: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("band.json")).unwrap()).unwrap();
    assert!((band["change_percent"].as_f64().unwrap() - 81.33).abs() < 0.01);
    assert_eq!(fs::read_to_string(dir.path().join("profile.csv")).unwrap().lines().count(), 25);

    assert_eq!(bin(&["report", p(&n), "--band", "6-2"]).status.code(), Some(2));
}

#[test]
fn no_pairs_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["simulate", p(&p1()), "--ledger-only", "--out", p(dir.path())]);
    assert!(o.status.success());
    let daily = dir.path().join("oracle_daily.csv");
    let header = fs::read_to_string(&daily).unwrap().lines().next().unwrap().to_string();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, format!("{header}\n")).unwrap();
    let o = bin(&["compare", p(&daily), p(&empty)]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn scan_flags_images() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("ok.csv"), "date,phase\n2024-03-04,normal\n").unwrap();
    assert!(bin(&["scan", p(dir.path())]).status.success());
    fs::write(dir.path().join("snap.png"), b"\x89PNG\r\n\x1a\n0000").unwrap();
    let o = bin(&["scan", p(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stdout).contains("snap.png"));
}

#[test]
fn empty_fixture_gives_empty_features() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = dir.path().join("empty.ambf");
    ambientis::frame::FixtureWriter::create(&fixture).unwrap().finish().unwrap();
    let o = bin(&["run", "--fixture", p(&fixture), "--out", p(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(dir.path().join("features.jsonl")).unwrap(), "");
}

#[test]
fn identical_phases_are_not_testable() {
    let dir = tempfile::tempdir().unwrap();
    assert!(bin(&["simulate", p(&p1()), "--ledger-only", "--out", p(dir.path())]).status.success());
    let days = read_daily_csv(fs::File::open(dir.path().join("oracle_daily.csv")).unwrap()).unwrap();
    let normal: Vec<_> = days.into_iter().filter(|d| d.phase == Phase::Normal).collect();
    let a = dir.path().join("a.csv");
    write_daily_csv(fs::File::create(&a).unwrap(), &normal).unwrap();
    let o = bin(&["compare", p(&a), p(&a)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("comparison.json")).unwrap()).unwrap();
    assert!(report["rows"].as_array().unwrap().iter().all(|r| !r["not_testable"].is_null()));
    assert!(String::from_utf8_lossy(&o.stdout).contains("not testable"));
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let scn = dir.path().join("tiny.scn");
    fs::write(&scn, TINY).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(bin(&["simulate", p(&scn), "--out", p(&a)]).status.success());
    assert!(bin(&["simulate", p(&scn), "--out", p(&b)]).status.success());
    for f in ["frames.ambf", "sidecar.jsonl", "ledger.json", "phases.csv", "oracle_daily.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}
