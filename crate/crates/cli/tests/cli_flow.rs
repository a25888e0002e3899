//! End-to-end runs of the compiled binary: scene generation, the full
//! pipeline, stage-by-stage equivalence, and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn querytrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_querytrack"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_config(path: &Path, seq: &Path, out: &Path) {
    let text = format!(
        "[paths]\nsequence_dir = {:?}\noutput_dir = {:?}\n",
        seq.display().to_string(),
        out.display().to_string()
    );
    std::fs::write(path, text).expect("write config");
}

fn gen_scene(dir: &Path) {
    let out = querytrack(&[
        "gen-scene",
        "--out",
        dir.to_str().unwrap(),
        "--seed",
        "7",
        "--frames",
        "30",
        "--objects",
        "3",
        "--queries",
        "2",
        "--dropout",
        "0.05",
        "--jitter",
        "0.1",
    ]);
    assert!(out.status.success(), "gen-scene failed: {}", stdout(&out));
}

#[test]
fn full_pipeline_runs_and_reports_metrics() {
    let root = tempfile::tempdir().unwrap();
    let seq = root.path().join("seq");
    let out_dir = root.path().join("out");
    let cfg = root.path().join("run.toml");
    gen_scene(&seq);
    write_config(&cfg, &seq, &out_dir);

    let validated = querytrack(&["validate", "--config", cfg.to_str().unwrap()]);
    assert!(validated.status.success());
    assert!(stdout(&validated).contains("config ok"), "{}", stdout(&validated));

    let run = querytrack(&["pipeline", "--config", cfg.to_str().unwrap()]);
    assert!(run.status.success(), "pipeline failed: {}", String::from_utf8_lossy(&run.stderr));
    let text = stdout(&run);
    assert!(text.contains("pipeline:"), "{text}");
    assert!(text.contains("mean over 2 queries"), "{text}");
    for artifact in ["tracks.csv", "descriptors.jsonl", "captions.jsonl", "scores.csv", "report.json", "eval.csv", "eval.txt"] {
        assert!(out_dir.join(artifact).exists(), "{artifact} missing");
    }
}

#[test]
fn stage_by_stage_matches_the_single_shot_run() {
    let root = tempfile::tempdir().unwrap();
    let seq = root.path().join("seq");
    gen_scene(&seq);

    let out_whole = root.path().join("out_whole");
    let cfg_whole = root.path().join("whole.toml");
    write_config(&cfg_whole, &seq, &out_whole);
    assert!(querytrack(&["pipeline", "--config", cfg_whole.to_str().unwrap()]).status.success());

    let out_stages = root.path().join("out_stages");
    let cfg_stages = root.path().join("stages.toml");
    write_config(&cfg_stages, &seq, &out_stages);
    for stage in ["track", "describe", "caption", "match", "select", "eval"] {
        let out = querytrack(&[stage, "--config", cfg_stages.to_str().unwrap()]);
        assert!(out.status.success(), "{stage} failed: {}", String::from_utf8_lossy(&out.stderr));
    }

    for artifact in ["tracks.csv", "descriptors.jsonl", "captions.jsonl", "scores.csv", "report.json", "eval.csv", "eval.txt"] {
        let whole = std::fs::read(out_whole.join(artifact)).expect("whole-run artifact");
        let staged = std::fs::read(out_stages.join(artifact)).expect("staged artifact");
        assert_eq!(whole, staged, "{artifact} differs between whole and staged runs");
    }
}

#[test]
fn rejected_config_exits_with_the_input_code() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("bad.toml");
    std::fs::write(&cfg, "paths = 3\n").unwrap();
    let out = querytrack(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
}

#[test]
fn missing_config_exits_with_the_failure_code() {
    let out = querytrack(&["validate", "--config", "/nonexistent/run.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
}
