use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn astprufer(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_astprufer"))
        .args(args)
        .current_dir(cwd)
        .env_remove("ASTPRUFER_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn ok(cwd: &Path, args: &[&str]) {
    let out = astprufer(cwd, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const TWO_TREES: &str = concat!(
    r#"{"ast":{"label":"MethodDecl","children":[{"label":"FormalParameter","children":[{"label":"x","children":[]},{"label":"y","children":[]}]},{"label":"foo","children":[]}]},"comment":"adds x and y"}"#,
    "\n",
    r#"{"ast":{"label":"A","children":[{"label":"B","children":[{"label":"C","children":[]}]}]},"comment":"path"}"#,
    "\n",
);

#[test]
fn toy_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "synth",
            "--count",
            "50",
            "--seed",
            "1",
            "-o",
            "corpus.jsonl",
        ],
    );
    ok(
        d,
        &[
            "encode",
            "corpus.jsonl",
            "--syntactic",
            "--context",
            "-o",
            "codes.jsonl",
        ],
    );
    ok(d, &["dataset", "codes.jsonl", "-o", "data"]);
    ok(
        d,
        &[
            "train", "--data", "data", "--hidden", "16", "--embed", "16", "--epochs", "3", "-o",
            "model",
        ],
    );
    ok(
        d,
        &[
            "decode",
            "--model",
            "model/model.json",
            "--data",
            "data",
            "-o",
            "hyps.jsonl",
        ],
    );
    ok(
        d,
        &[
            "score",
            "--hyps",
            "hyps.jsonl",
            "--refs",
            "data/test.refs.jsonl",
            "-o",
            "scores.json",
        ],
    );

    let manifest = read_json(&d.join("data/manifest.json"));
    assert_eq!(manifest["results"]["train"], 40);
    assert_eq!(manifest["results"]["valid"], 5);
    assert_eq!(manifest["results"]["test"], 5);
    assert_eq!(
        fs::read_to_string(d.join("hyps.jsonl"))
            .unwrap()
            .lines()
            .count(),
        5
    );
    let loss = fs::read_to_string(d.join("model/loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 4);
    let scores = read_json(&d.join("scores.json"));
    for key in ["s_bleu", "c_bleu", "meteor", "rouge_l"] {
        let v = scores["report"][key].as_f64().unwrap();
        assert!((0.0..=100.0).contains(&v), "{key} = {v}");
    }
    assert!(d.join("scores.json.manifest.json").exists());
}

#[test]
fn encode_restore_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("in.jsonl"), TWO_TREES).unwrap();
    ok(d, &["encode", "in.jsonl", "--context", "-o", "codes.jsonl"]);
    let first: Value = serde_json::from_str(
        fs::read_to_string(d.join("codes.jsonl"))
            .unwrap()
            .lines()
            .next()
            .unwrap(),
    )
    .unwrap();
    assert_eq!(first["sequence"], serde_json::json!([2, 2, 1]));
    assert_eq!(
        first["context"],
        serde_json::json!(["x", "y", "x", "y", "foo"])
    );
    ok(d, &["restore", "codes.jsonl", "-o", "restored.jsonl"]);
    ok(
        d,
        &[
            "encode",
            "restored.jsonl",
            "--context",
            "-o",
            "codes2.jsonl",
        ],
    );
    assert_eq!(
        fs::read(d.join("codes.jsonl")).unwrap(),
        fs::read(d.join("codes2.jsonl")).unwrap()
    );
}

#[test]
fn malformed_input_and_lenient_mode() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.jsonl"), format!("{TWO_TREES}{{not json\n")).unwrap();
    let out = astprufer(d, &["encode", "bad.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.jsonl:3"));

    ok(
        d,
        &["encode", "bad.jsonl", "--lenient", "-o", "codes.jsonl"],
    );
    assert_eq!(
        fs::read_to_string(d.join("codes.jsonl"))
            .unwrap()
            .lines()
            .count(),
        2
    );
    let manifest = read_json(&d.join("codes.jsonl.manifest.json"));
    assert_eq!(manifest["records"], 2);
    assert_eq!(manifest["skipped"], 1);
    assert_eq!(manifest["skipped_records"][0]["line"], 3);

    fs::write(d.join("empty.jsonl"), "").unwrap();
    assert_eq!(
        astprufer(d, &["encode", "empty.jsonl"]).status.code(),
        Some(1)
    );
    assert_eq!(
        astprufer(d, &["encode", "missing.jsonl"]).status.code(),
        Some(1)
    );
    let too_small = r#"{"label":"A","children":[]}"#;
    fs::write(d.join("small.jsonl"), format!("{too_small}\n")).unwrap();
    assert_eq!(
        astprufer(d, &["encode", "small.jsonl"]).status.code(),
        Some(1)
    );
}

#[test]
fn identical_files_score_perfectly_with_buckets() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let refs = "[\"returns\",\"the\",\"value\",\"of\",\"x\"]\n[\"adds\",\"two\",\"numbers\",\"and\",\"returns\"]\n[\"sets\",\"the\",\"field\",\"to\",\"y\"]\n";
    fs::write(d.join("refs.jsonl"), refs).unwrap();
    fs::write(d.join("lengths.jsonl"), "10\n20\n130\n").unwrap();
    ok(
        d,
        &[
            "score",
            "--hyps",
            "refs.jsonl",
            "--refs",
            "refs.jsonl",
            "--lengths",
            "lengths.jsonl",
            "-o",
            "s.json",
        ],
    );
    let scores = read_json(&d.join("s.json"));
    assert_eq!(scores["report"]["c_bleu"], 100.0);
    assert_eq!(scores["report"]["rouge_l"], 100.0);
    let buckets = scores["buckets"].as_array().unwrap();
    assert_eq!(buckets.len(), 2);
    assert_eq!(buckets[0]["lo"], 0);
    assert_eq!(buckets[0]["count"], 2);
    assert_eq!(buckets[1]["lo"], 100);
    assert_eq!(buckets[1]["count"], 1);
}

#[test]
fn default_output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("in.jsonl"), TWO_TREES).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_astprufer"))
        .args(["stats", "in.jsonl"])
        .current_dir(d)
        .env("ASTPRUFER_OUT_DIR", "outputs")
        .output()
        .unwrap();
    assert!(out.status.success());
    let stats = read_json(&d.join("outputs/stats.json"));
    let rows = stats["rows"].as_array().unwrap();
    let row = |name: &str| rows.iter().find(|r| r["representation"] == name).unwrap();
    assert_eq!(row("nodes")["average"], 4.0);
    assert_eq!(row("sbt")["average"], 12.0);
    assert_eq!(row("bfs")["average"], 4.0);
}

#[test]
fn represent_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("in.jsonl"), TWO_TREES).unwrap();
    for kind in [
        "prufer",
        "syntactic",
        "encoder-input",
        "context",
        "sbt",
        "bfs",
        "flat",
        "paths",
    ] {
        ok(d, &["represent", "in.jsonl", "--kind", kind]);
        assert_eq!(
            fs::read_to_string(d.join(format!("{kind}.jsonl")))
                .unwrap()
                .lines()
                .count(),
            2
        );
    }
    let flat = fs::read_to_string(d.join("flat.jsonl")).unwrap();
    assert_eq!(flat.lines().next().unwrap(), r#"["x","y","foo"]"#);
}

#[test]
fn timing_is_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--count", "3", "-o", "a.jsonl"]);
    ok(d, &["synth", "--count", "3", "--timing", "-o", "b.jsonl"]);
    assert!(read_json(&d.join("a.jsonl.manifest.json"))
        .get("duration_secs")
        .is_none_or(Value::is_null));
    assert!(read_json(&d.join("b.jsonl.manifest.json"))["duration_secs"].is_number());
}
