use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn detsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_detsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const SIX_WORKERS: &str = "\
lambda_fps = 14
total_frames = 354
mode = saturation
scheduler = fcfs
synthetic_objects = 5
output = out

[worker]
count = 6
mu_fps = 2.5
";

fn summary_field(dir: &Path, column: &str) -> String {
    let text = fs::read_to_string(dir.join("summary.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == column).unwrap();
    row[i].to_string()
}

#[test]
fn plan_prints_count_range_and_rates() {
    let o = detsim(&["plan", "--lambda", "14", "--mu", "2.5"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("n = 6"));
    assert!(text.contains("range = [4, 6]"));
    assert!(text.contains("4,10.0\n5,12.5\n6,15.0\n"));

    let text = stdout(&detsim(&["plan", "--lambda", "30", "--mu", "2.3"]));
    assert!(text.contains("n = 14"));
    assert!(text.contains("range = [5, 14]"));
}

#[test]
fn plan_rejects_bad_rates_as_usage_errors() {
    for args in [
        ["plan", "--lambda", "0", "--mu", "2"],
        ["plan", "--lambda", "14", "--mu", "-1"],
        ["plan", "--lambda", "x", "--mu", "2"],
    ] {
        let o = detsim(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn simulate_six_workers_saturation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.conf", SIX_WORKERS);
    let o = detsim(&["simulate", "--config", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    let sigma: f64 = summary_field(&out, "sigma_p_fps").parse().unwrap();
    assert!((sigma - 14.8).abs() <= 0.5, "{sigma}");
    assert_eq!(summary_field(&out, "schema_version"), "1");
    assert_eq!(summary_field(&out, "map_pct"), "100.0");
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 355);
    assert!(!results.contains('\r'));
    assert!(out.join("gt.txt").exists());
}

#[test]
fn simulate_single_paced_worker_drops_about_five_per_frame() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.conf", SIX_WORKERS);
    let out = dir.path().join("single");
    let o = detsim(&[
        "simulate",
        "--config",
        &cfg,
        "--workers",
        "1",
        "--mode",
        "paced",
        "--scheduler",
        "rr",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let processed: f64 = summary_field(&out, "processed").parse().unwrap();
    let dropped: f64 = summary_field(&out, "filled").parse::<f64>().unwrap()
        + summary_field(&out, "filled_empty").parse::<f64>().unwrap();
    assert_eq!((dropped / processed).round(), 5.0);
    assert!(stdout(&o).contains("drops / processed"));
}

#[test]
fn simulate_is_byte_identical_for_same_seed() {
    let dir = tempfile::tempdir().unwrap();
    let text = "\
lambda_fps = 14
total_frames = 200
scheduler = proportional
seed = 5

[worker]
count = 3
mu_fps = 4
latency = exponential
";
    let cfg = write(dir.path(), "run.conf", text);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        assert!(detsim(&[
            "simulate",
            "--config",
            &cfg,
            "--output",
            out.to_str().unwrap()
        ])
        .status
        .success());
    }
    assert_eq!(
        fs::read(a.join("results.csv")).unwrap(),
        fs::read(b.join("results.csv")).unwrap()
    );
    assert_eq!(
        fs::read(a.join("summary.csv")).unwrap(),
        fs::read(b.join("summary.csv")).unwrap()
    );
}

#[test]
fn sweep_writes_one_row_per_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.conf", SIX_WORKERS);
    let o = detsim(&["simulate", "--config", &cfg, "--sweep", "n=1..7"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 8);
    assert_eq!(
        detsim(&["simulate", "--config", &cfg, "--sweep", "n=3..1"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn simulate_reports_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.conf", &SIX_WORKERS.replace("fcfs", "fifo"));
    let o = detsim(&["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("scheduler"));
    let o = detsim(&["simulate", "--config", "/no/such/file.conf"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn eval_of_perfect_zero_drop_run_is_100() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.conf", SIX_WORKERS);
    assert!(detsim(&["simulate", "--config", &cfg]).status.success());
    let out = dir.path().join("out");
    let o = detsim(&[
        "eval",
        "--results",
        out.join("results.csv").to_str().unwrap(),
        "--gt",
        out.join("gt.txt").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(
        stdout(&o).contains("mAP                 100.0%"),
        "{}",
        stdout(&o)
    );
}

// two frames; detections ranked TP, FP, TP against two ground-truth boxes
#[test]
fn eval_micro_fixture_matches_hand_value() {
    let dir = tempfile::tempdir().unwrap();
    let gt = write(
        dir.path(),
        "gt.txt",
        "1,1,0,0,10,10,1,-1,-1,-1\n2,1,0,0,10,10,1,-1,-1,-1\n",
    );
    let det = write(
        dir.path(),
        "det.txt",
        "1,-1,0,0,10,10,0.9,-1,-1,-1\n1,-1,50,50,10,10,0.8,-1,-1,-1\n2,-1,0,0,10,10,0.7,-1,-1,-1\n",
    );
    let results = write(
        dir.path(),
        "results.csv",
        "index,status,source_index,worker_id,completion_ts,detection_count\n0,processed,0,0,0.4,2\n1,processed,1,1,0.5,1\n",
    );
    let o = detsim(&[
        "eval",
        "--results",
        &results,
        "--gt",
        &gt,
        "--detections",
        &det,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("83.3%"), "{}", stdout(&o));
}

#[test]
fn eval_rejects_truncated_results() {
    let dir = tempfile::tempdir().unwrap();
    let gt = write(dir.path(), "gt.txt", "1,1,0,0,10,10\n3,1,0,0,10,10\n");
    let results = write(
        dir.path(),
        "results.csv",
        "index,status,source_index,worker_id,completion_ts,detection_count\n0,processed,0,0,0.4,1\n",
    );
    let o = detsim(&["eval", "--results", &results, "--gt", &gt]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        String::from_utf8_lossy(&o.stderr).contains("validation"),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}
