use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
failure_step = 800
failed_link = 56
inspected_link = 42

[traffic]
steps = 1000

[forecaster]
train_steps = 700
epochs = 3
hidden = 8

[incremental]
epochs = 5
"#;

fn linkdrift(dir: &Path, args: &[&str]) -> Output {
    let cfg = dir.join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    Command::new(env!("CARGO_BIN_EXE_linkdrift"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn gen_traffic_writes_pair_series() {
    let dir = tempfile::tempdir().unwrap();
    ok(&linkdrift(dir.path(), &["gen-traffic"]));
    let csv = std::fs::read_to_string(dir.path().join("out/pair_series.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("pair_src,pair_dst,step,gbps"));
    // every ordered pair of the 28 nodes, 1000 steps each
    assert_eq!(lines.count(), 28 * 27 * 1000);
}

#[test]
fn simulate_writes_event_log_and_loads() {
    let dir = tempfile::tempdir().unwrap();
    ok(&linkdrift(dir.path(), &["simulate"]));
    let events = std::fs::read_to_string(dir.path().join("out/events.csv")).unwrap();
    assert!(events.starts_with("step,kind,demand,bitrate_gbps,links\n"));
    assert!(events.lines().any(|l| l.contains(",failed_affected,")), "failure should appear in the event log");
    let loads = std::fs::read_to_string(dir.path().join("out/link_loads.csv")).unwrap();
    assert_eq!(loads.lines().count(), 1 + 82 * 1000);
}

#[test]
fn evaluate_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = linkdrift(dir.path(), &["evaluate"]);
    ok(&o);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("Incremental-20"));
    let scenario = dir.path().join("out/f56-i42");
    for f in [
        "report.json",
        "curves.csv",
        "tconv.csv",
        "predictions.csv",
        "checkpoints/lnn.json",
        "checkpoints/incremental-5.json",
    ] {
        assert!(scenario.join(f).is_file(), "missing {f}");
    }
    ok(&linkdrift(dir.path(), &["report"]));
    let table = std::fs::read_to_string(dir.path().join("out/report/tconv_table.csv")).unwrap();
    assert_eq!(table.lines().next(), Some("th,x,approach,f56-i42"));
    assert_eq!(table.lines().count(), 7);
}

#[test]
fn train_from_series_file() {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("series.csv");
    let mut text = String::from("step,gbps\n");
    for t in 0..900 {
        text.push_str(&format!("{t},{}\n", 300.0 + 50.0 * (t as f64 * 0.26).sin()));
    }
    std::fs::write(&series, text).unwrap();
    ok(&linkdrift(dir.path(), &["train", "--series", series.to_str().unwrap()]));
    assert!(dir.path().join("out/checkpoints/lnn.json").is_file());
    assert!(dir.path().join("out/checkpoints/incremental-20.json").is_file());
}

#[test]
fn invalid_config_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let o = linkdrift(dir.path(), &["evaluate", "--inspected", "56"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("differ"));
}

#[test]
fn seed_flag_changes_traffic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(&linkdrift(a.path(), &["gen-traffic", "--seed", "1"]));
    ok(&linkdrift(b.path(), &["gen-traffic", "--seed", "2"]));
    let x = std::fs::read(a.path().join("out/pair_series.csv")).unwrap();
    let y = std::fs::read(b.path().join("out/pair_series.csv")).unwrap();
    assert_ne!(x, y);
}
