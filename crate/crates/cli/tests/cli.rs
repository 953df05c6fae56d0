use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

fn structoscope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_structoscope"))
        .args(args)
        .env_remove("STRUCTOSCOPE_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = structoscope(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn synth(dir: &Path, regime: &str, tokens: bool) -> String {
    let path = dir.join(format!("{regime}.jsonl"));
    let mut args = vec!["synth", "--regime", regime, "--seed", "4", "--out", path.to_str().unwrap()];
    if tokens {
        args.extend(["--tokens", "--n-docs", "60", "--min-segments", "20", "--max-segments", "30"]);
    }
    ok(&args);
    path.to_str().unwrap().to_string()
}

#[test]
fn planted_akp_is_recovered() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "akp", false);
    let out = dir.path().join("out");
    let stdout = ok(&[
        "all", "--input", &input, "--format", "sequences_jsonl", "--output", out.to_str().unwrap(),
        "--seed", "1", "--from", "1", "--to", "4",
    ]);
    assert!(stdout.contains("order: akp  position: akp"), "{stdout}");
    for name in ["sequences.jsonl", "order_matrix.csv", "position_matrix.csv", "regime.json", "report.md", "manifest.json"] {
        assert!(out.join(name).is_file(), "missing {name}");
    }
}

#[test]
fn reruns_and_thread_counts_agree() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "ordered", true);
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        ok(&["--threads", threads, "all", "--input", &input, "--output", out.to_str().unwrap(), "--seed", "9"]);
        files(&out)
    };
    let one = run("a", "1");
    assert_eq!(one, run("b", "1"));
    assert_eq!(one, run("c", "3"));
    assert!(one.contains_key("kmeans_model.json"));
}

#[test]
fn stages_can_run_one_at_a_time() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "reverse_akp", true);
    let all = dir.path().join("all");
    let step = dir.path().join("step");
    ok(&["all", "--input", &input, "--output", all.to_str().unwrap(), "--seed", "2"]);
    for stage in ["ingest", "segment", "featurize", "cluster", "sequences", "analyze-order", "analyze-position", "classify", "report"] {
        ok(&[stage, "--input", &input, "--output", step.to_str().unwrap(), "--seed", "2"]);
    }
    assert_eq!(files(&all), files(&step));
}

#[test]
fn position_filter_and_slice() {
    let dir = tempfile::tempdir().unwrap();
    let input = synth(dir.path(), "noisy", false);
    let out = dir.path().join("out");
    let o = out.to_str().unwrap();
    ok(&["sequences", "--input", &input, "--format", "sequences_jsonl", "--output", o, "--seed", "1", "--slice", "domain=synthetic"]);
    ok(&["analyze-position", "--input", &input, "--format", "sequences_jsonl", "--output", o, "--seed", "1", "--slice", "domain=synthetic", "--from", "1", "--to", "4"]);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("position_analysis.json")).unwrap()).unwrap();
    assert_eq!(report["filter"], serde_json::json!([1, 4]));

    let empty = dir.path().join("empty");
    let res = structoscope(&[
        "sequences", "--input", &input, "--format", "sequences_jsonl", "--output", empty.to_str().unwrap(),
        "--seed", "1", "--slice", "genre=nothing-matches",
    ]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = out.to_str().unwrap();
    let input = synth(dir.path(), "akp", false);

    let no_seed = structoscope(&["all", "--input", &input, "--format", "sequences_jsonl", "--output", o]);
    assert_eq!(no_seed.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&no_seed.stderr).contains("seeds.kmeans"));

    let missing = dir.path().join("absent.jsonl");
    let res = structoscope(&["all", "--input", missing.to_str().unwrap(), "--output", o, "--seed", "1"]);
    assert_eq!(res.status.code(), Some(2));

    let broken = dir.path().join("broken.jsonl");
    std::fs::write(&broken, "{\"id\": \"a\", \"eval_score\": \n").unwrap();
    let res = structoscope(&["ingest", "--input", broken.to_str().unwrap(), "--output", o, "--seed", "1"]);
    assert_eq!(res.status.code(), Some(3));

    let res = structoscope(&["classify", "--input", &input, "--format", "sequences_jsonl", "--output", dir.path().join("fresh").to_str().unwrap(), "--seed", "1"]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("analyze-order"));

    let synth_no_seed = structoscope(&["synth", "--regime", "akp", "--out", dir.path().join("x.jsonl").to_str().unwrap()]);
    assert_eq!(synth_no_seed.status.code(), Some(2));
}

#[test]
fn seed_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    ok(&["synth", "--regime", "ordered", "--seed", "12", "--out", a.to_str().unwrap()]);
    let out = Command::new(env!("CARGO_BIN_EXE_structoscope"))
        .args(["synth", "--regime", "ordered", "--out", b.to_str().unwrap()])
        .env("STRUCTOSCOPE_SEED", "12")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}
