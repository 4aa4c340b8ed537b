use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn edmrec(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edmrec"))
        .args(args)
        .current_dir(dir)
        .env_remove("EDMREC_DATA_DIR")
        .output()
        .expect("spawn edmrec")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = edmrec(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn pipeline(dir: &Path, workers: &str) {
    let w = ["--workers", workers];
    ok(dir, &[&w[..], &["synth", "--count", "300", "--seed", "4", "--out", "all.jsonl"]].concat());
    ok(
        dir,
        &[&w[..], &["split", "--input", "all.jsonl", "--train-out", "train.jsonl", "--test-out", "test.jsonl"]]
            .concat(),
    );
    ok(
        dir,
        &[&w[..], &["learn-dict", "--train", "train.jsonl", "--k", "96", "--epochs", "2", "--out", "dict.txt"]]
            .concat(),
    );
    ok(
        dir,
        &[
            &w[..],
            &[
                "train-net",
                "--task",
                "recover2d",
                "--train",
                "train.jsonl",
                "--channels",
                "3",
                "--epochs",
                "2",
                "--out",
                "zero.json",
            ],
        ]
        .concat(),
    );
    ok(
        dir,
        &[
            &w[..],
            &[
                "evaluate",
                "--methods",
                "identity,sparse,zero-net",
                "--test",
                "test.jsonl",
                "--dictionary",
                "dict.txt",
                "--zero-model",
                "zero.json",
                "--regimes",
                "1,mixed",
                "--out-dir",
                "eval",
            ],
        ]
        .concat(),
    );
}

#[test]
fn outputs_are_byte_identical_across_runs_and_worker_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path(), "1");
    pipeline(b.path(), "3");
    for f in [
        "all.jsonl",
        "train.jsonl",
        "test.jsonl",
        "dict.txt",
        "dict.report.json",
        "zero.json",
        "zero.curve.csv",
        "eval/report.json",
        "eval/table.csv",
        "eval/trace-sparse-Mix-2d.txt",
    ] {
        let x = fs::read(a.path().join(f)).unwrap();
        let y = fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
    assert!(a.path().join("eval/timing.json").exists());
    assert!(a.path().join("dict.timing.json").exists());
}

#[test]
fn report_embeds_config_and_table_has_all_columns() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["synth", "--count", "120", "--seed", "1", "--out", "all.jsonl"]);
    ok(d.path(), &["evaluate", "--test", "all.jsonl", "--methods", "identity", "--regimes", "2", "--out-dir", "ev"]);
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(d.path().join("ev/report.json")).unwrap()).unwrap();
    assert_eq!(report["command"], "evaluate");
    assert_eq!(report["config"]["mask_seed"], 1);
    assert!(report["library_version"].is_string());
    let table = fs::read_to_string(d.path().join("ev/table.csv")).unwrap();
    let header: Vec<_> = table.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 3 + 15 + 3);
    assert_eq!(table.lines().count(), 2);
    // two missing joints corrupt 2*26 - 2 of the 182 entries
    let overall: f64 = table.lines().nth(1).unwrap().split(',').nth(18).unwrap().parse().unwrap();
    assert!((overall - 100.0 * 50.0 / 182.0).abs() < 1e-3, "{overall}");
}

#[test]
fn config_file_supplies_defaults_and_flags_override_it() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("run.toml"), "[synth]\ncount = 40\nseed = 9\nout = \"from_config.jsonl\"\n").unwrap();
    ok(d.path(), &["--config", "run.toml", "synth"]);
    assert_eq!(fs::read_to_string(d.path().join("from_config.jsonl")).unwrap().lines().count(), 40);
    ok(d.path(), &["--config", "run.toml", "synth", "--count", "7", "--out", "cli.jsonl"]);
    let text = fs::read_to_string(d.path().join("cli.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(text.contains("syn9-"));
}

#[test]
fn data_dir_resolves_relative_paths() {
    let d = tempfile::tempdir().unwrap();
    fs::create_dir(d.path().join("data")).unwrap();
    ok(d.path(), &["--data-dir", "data", "synth", "--count", "5", "--out", "p.jsonl"]);
    assert!(d.path().join("data/p.jsonl").exists());
}

#[test]
fn usage_errors_exit_with_two() {
    let d = tempfile::tempdir().unwrap();
    for args in [
        &["synth", "--count", "5"][..],
        &["evaluate", "--test", "x.jsonl", "--regimes", "13", "--out-dir", "o"],
        &["evaluate", "--test", "x.jsonl", "--methods", "magic", "--out-dir", "o"],
        &["train-net", "--task", "recover2d", "--train", "x", "--representation", "median", "--out", "m"],
        &["--workers", "0", "synth", "--out", "p.jsonl"],
        &["--config", "missing.toml", "synth", "--out", "p.jsonl"],
    ] {
        assert_eq!(edmrec(d.path(), args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn runtime_failures_exit_with_one() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["synth", "--count", "30", "--out", "p.jsonl"]);
    let missing_dictionary =
        edmrec(d.path(), &["evaluate", "--test", "p.jsonl", "--methods", "sparse", "--out-dir", "o"]);
    assert_eq!(missing_dictionary.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing_dictionary.stderr).contains("--dictionary"));
    let absent = edmrec(d.path(), &["split", "--input", "nope.jsonl", "--train-out", "a", "--test-out", "b"]);
    assert_eq!(absent.status.code(), Some(1));
    fs::write(d.path().join("bad.jsonl"), "{\"id\": 1}\n").unwrap();
    let bad = edmrec(d.path(), &["split", "--input", "bad.jsonl", "--train-out", "a", "--test-out", "b"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("bad.jsonl:1"));
}

#[test]
fn smoke_full_size_identity_baseline() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["synth", "--out", "all.jsonl"]);
    ok(d.path(), &["split", "--input", "all.jsonl", "--train-out", "train.jsonl", "--test-out", "test.jsonl"]);
    assert_eq!(fs::read_to_string(d.path().join("test.jsonl")).unwrap().lines().count(), 5000 - 5000 * 5 / 6);
    ok(d.path(), &["evaluate", "--test", "test.jsonl", "--methods", "identity", "--out-dir", "ev"]);
    assert_eq!(fs::read_to_string(d.path().join("ev/table.csv")).unwrap().lines().count(), 5);
}
