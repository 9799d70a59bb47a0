//! End-to-end tests of the `flitbound` binary: exit codes, output formats,
//! and agreement between subcommands.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::NamedTempFile;

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/net_y.json")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flitbound"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_on(path: &Path, args: &[&str]) -> Output {
    let mut all = vec![args[0], path.to_str().unwrap()];
    all.extend(&args[1..]);
    run(&all)
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

/// Copy the fixture, mutate its JSON, and park it in a temp file.
fn patched(mutate: impl FnOnce(&mut serde_json::Value)) -> NamedTempFile {
    let text = std::fs::read_to_string(fixture()).expect("fixture readable");
    let mut doc: serde_json::Value = serde_json::from_str(&text).expect("fixture parses");
    mutate(&mut doc);
    let file = NamedTempFile::new().expect("temp file");
    std::fs::write(file.path(), serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    file
}

fn overloaded() -> NamedTempFile {
    patched(|doc| {
        doc["flows"][0]["period"] = serde_json::json!(1.0);
        doc["flows"][0]["length"] = serde_json::json!(300.0);
    })
}

#[test]
fn validate_accepts_the_fixture() {
    let out = run(&["validate", fixture().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "valid");
}

#[test]
fn validate_lists_overload_violations() {
    let bad = overloaded();
    let out = run_on(bad.path(), &["validate"]);
    assert_eq!(code(&out), 2);
    assert!(stdout(&out).contains("overloaded"), "stdout: {}", stdout(&out));
    assert!(stderr(&out).contains("violation"), "stderr: {}", stderr(&out));
}

#[test]
fn analyze_prints_the_exact_columns() {
    let out = run(&["analyze", fixture().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let header = text.lines().find(|l| l.starts_with("flow")).expect("header row");
    assert_eq!(
        header.split_whitespace().collect::<Vec<_>>(),
        ["flow", "D_TR", "D_DB", "D_IB", "D_eed", "deadline", "verdict"]
    );
    assert_eq!(text.matches("schedulable").count(), 3);
    assert!(text.contains("6.15"));
}

#[test]
fn analyze_json_reports_the_frozen_bounds() {
    let out = run(&["analyze", fixture().to_str().unwrap(), "--format", "json"]);
    assert_eq!(code(&out), 0);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).expect("json output");
    assert_eq!(doc["mode"], "buffer-aware");
    assert_eq!(doc["buffer"], 56.0);
    let flows = doc["flows"].as_array().unwrap();
    assert_eq!(flows.len(), 3);
    assert_eq!(flows[0]["flow"], "f1");
    assert!((flows[0]["d_eed"].as_f64().unwrap() - 6.15).abs() < 1e-9);
    assert!((flows[1]["d_eed"].as_f64().unwrap() - 9.5856).abs() < 1e-9);
    assert!((flows[2]["d_eed"].as_f64().unwrap() - 6.168264).abs() < 1e-9);
}

#[test]
fn analyze_csv_round_trips() {
    let out = run(&["analyze", fixture().to_str().unwrap(), "--format", "csv"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["flow", "D_TR", "D_DB", "D_IB", "D_eed", "deadline", "verdict"]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(&rows[0][0], "f1");
    assert_eq!(&rows[0][6], "schedulable");
    let d_eed: f64 = rows[0][4].parse().unwrap();
    assert!((d_eed - 6.15).abs() < 1e-9);
}

#[test]
fn missing_files_exit_two() {
    let out = run(&["analyze", "/definitely/not/here.json"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("error"));
}

#[test]
fn corrupted_inputs_exit_two() {
    let file = NamedTempFile::new().unwrap();
    std::fs::write(file.path(), "{ this is not json").unwrap();
    let out = run_on(file.path(), &["analyze"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("invalid JSON"), "stderr: {}", stderr(&out));
}

#[test]
fn deadline_misses_exit_one() {
    let tight = patched(|doc| {
        for f in doc["flows"].as_array_mut().unwrap() {
            f["deadline"] = serde_json::json!(5.0);
        }
    });
    let out = run_on(tight.path(), &["analyze"]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("not-schedulable"));
}

#[test]
fn overloaded_inputs_exit_two_with_unstable_verdicts() {
    let bad = overloaded();
    let out = run_on(bad.path(), &["analyze"]);
    assert_eq!(code(&out), 2);
    let text = stdout(&out);
    assert!(text.contains("unstable"), "stdout: {text}");
    // No finite end-to-end bound may appear for an unstable flow.
    for line in text.lines().filter(|l| l.contains("unstable")) {
        let cells: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(cells[4], "-", "D_eed must be unbounded: {line}");
    }
    assert!(stderr(&out).contains("overloaded"), "stderr: {}", stderr(&out));
}

#[test]
fn sweep_degenerate_point_matches_analyze() {
    let path = fixture();
    let sweep = run(&[
        "sweep",
        path.to_str().unwrap(),
        "--buffer-min",
        "56",
        "--buffer-max",
        "56",
    ]);
    assert_eq!(code(&sweep), 0);
    let sweep_text = stdout(&sweep);
    let mut reader = csv::Reader::from_reader(sweep_text.as_bytes());
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["buffer", "flow", "D_eed", "verdict"]
    );
    let sweep_rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(sweep_rows.len(), 3);

    let analyze = run(&["analyze", path.to_str().unwrap(), "--format", "csv"]);
    let analyze_text = stdout(&analyze);
    let mut reader = csv::Reader::from_reader(analyze_text.as_bytes());
    let analyze_rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();

    for (s, a) in sweep_rows.iter().zip(&analyze_rows) {
        assert_eq!(&s[0], "56");
        assert_eq!(&s[1], &a[0], "flow order");
        assert_eq!(&s[2], &a[4], "D_eed");
        assert_eq!(&s[3], &a[6], "verdict");
    }
}

#[test]
fn sweep_rejects_malformed_ranges() {
    let path = fixture();
    let p = path.to_str().unwrap();
    for args in [
        vec!["sweep", p, "--buffer-min", "0", "--buffer-max", "10"],
        vec!["sweep", p, "--buffer-min", "20", "--buffer-max", "10"],
        vec!["sweep", p, "--buffer-min", "1", "--buffer-max", "10", "--step", "0.5"],
    ] {
        let out = run(&args);
        assert_eq!(code(&out), 2, "args: {args:?}");
        assert!(stderr(&out).contains("sweep range"), "args: {args:?}");
    }
}

#[test]
fn sweep_stays_ordered_and_monotone() {
    let out = run(&[
        "sweep",
        fixture().to_str().unwrap(),
        "--buffer-min",
        "1",
        "--buffer-max",
        "101",
        "--step",
        "10",
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 11 * 3);

    let flows = ["f1", "f2", "f3"];
    let mut last_buffer = 0.0_f64;
    let mut last_eed: [f64; 3] = [f64::INFINITY; 3];
    for (i, row) in rows.iter().enumerate() {
        let buffer: f64 = row[0].parse().unwrap();
        let idx = i % 3;
        assert_eq!(&row[1], flows[idx], "declaration order inside each block");
        if idx == 0 {
            assert!(buffer > last_buffer, "buffers ascend");
            last_buffer = buffer;
        }
        let eed: f64 = row[2].parse().unwrap();
        assert!(
            eed <= last_eed[idx] + 1e-9,
            "D_eed must not grow with buffer: {} at {buffer}",
            &row[1]
        );
        last_eed[idx] = eed;
    }
}

#[test]
fn compare_prints_both_modes_and_the_delta() {
    let out = run(&["compare", fixture().to_str().unwrap(), "--buffer", "20"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("mode: buffer-aware"));
    assert!(text.contains("mode: conventional"));
    let delta_header = text
        .lines()
        .find(|l| l.contains("delta"))
        .expect("delta block");
    assert_eq!(
        delta_header.split_whitespace().collect::<Vec<_>>(),
        ["flow", "D_eed_aware", "D_eed_conventional", "delta"]
    );
    // At buffer 20, f3's conventional bound carries indirect blocking the
    // buffer-aware analysis rules out: delta = 4.1614.
    let f3 = text.lines().rev().find(|l| l.starts_with("f3")).unwrap();
    assert!(f3.contains("4.1614"), "line: {f3}");
}

#[test]
fn both_mode_csv_carries_a_mode_column() {
    let out = run(&[
        "analyze",
        fixture().to_str().unwrap(),
        "--mode",
        "both",
        "--format",
        "csv",
    ]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(reader.headers().unwrap().iter().next(), Some("mode"));
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().take(3).all(|r| &r[0] == "buffer-aware"));
    assert!(rows.iter().skip(3).all(|r| &r[0] == "conventional"));
}

#[test]
fn simulate_respects_the_bounds() {
    let out = run(&[
        "simulate",
        fixture().to_str().unwrap(),
        "--trials",
        "3",
        "--seed",
        "11",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let header = text.lines().next().unwrap();
    assert_eq!(
        header.split_whitespace().collect::<Vec<_>>(),
        ["flow", "packets", "observed_max", "D_eed", "ratio"]
    );
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let ratio: f64 = line.split_whitespace().last().unwrap().parse().unwrap();
        assert!(ratio <= 1.0, "observed latency above bound: {line}");
    }
}

#[test]
fn simulate_needs_a_sim_section() {
    let stripped = patched(|doc| {
        doc.as_object_mut().unwrap().remove("sim");
    });
    let out = run_on(stripped.path(), &["simulate"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("no sim section"), "stderr: {}", stderr(&out));
}

#[test]
fn output_flag_writes_the_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("report.json");
    let direct = run(&["analyze", fixture().to_str().unwrap(), "--format", "json"]);
    let filed = run(&[
        "analyze",
        fixture().to_str().unwrap(),
        "--format",
        "json",
        "--output",
        target.to_str().unwrap(),
    ]);
    assert_eq!(code(&direct), 0);
    assert_eq!(code(&filed), 0);
    assert!(stdout(&filed).is_empty(), "data went to the file, not stdout");
    let written = std::fs::read_to_string(&target).unwrap();
    assert_eq!(written, stdout(&direct));
}
