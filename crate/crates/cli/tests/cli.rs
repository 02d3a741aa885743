use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pcv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcv"))
        .args(args)
        .env_remove("PCV_CACHE")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = pcv(args);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_at_every_level() {
    for args in [
        vec!["--help"],
        vec!["vectorize", "--help"],
        vec!["experiment", "run", "--help"],
        vec!["ablate", "llms", "--help"],
        vec!["analyze", "disagreement", "--help"],
        vec!["viz", "tsne", "--help"],
        vec!["cache", "--help"],
    ] {
        let out = ok(&args);
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
    }
}

#[test]
fn usage_errors_exit_one() {
    let out = pcv(&["train", "--model", "bogus", "--in", "x", "--out", "y"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    for model in ["knn", "forest", "extra", "boosted"] {
        assert!(err.contains(model), "{err}");
    }
    let out = pcv(&["synth", "--per-clas", "3", "--out", "x"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--per-class"));
    assert_eq!(pcv(&[]).status.code(), Some(1));
    assert_eq!(pcv(&["train", "--model", "knn", "--in", "x", "--out", "y", "--threshold", "optimize:auc"]).status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = pcv(&["vectorize", "--corpus", "/definitely/missing.jsonl", "--out", p(&dir.path().join("v.jsonl"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.jsonl"));
}

#[test]
fn api_keys_come_from_the_environment_only() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "-n", "2", "--out", p(&dir.path().join("c.jsonl"))]);
    let providers = dir.path().join("providers.json");
    fs::write(
        &providers,
        r#"[{"id": "remote", "kind": "http_chat", "base_url": "http://127.0.0.1:9/v1", "model": "m", "auth_env": "PCV_TEST_KEY_THAT_IS_NOT_SET"}]"#,
    )
    .unwrap();
    let out = pcv(&[
        "vectorize",
        "--corpus",
        p(&dir.path().join("c.jsonl")),
        "--providers",
        p(&providers),
        "--out",
        p(&dir.path().join("v.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("PCV_TEST_KEY_THAT_IS_NOT_SET"));
}

#[test]
fn synth_is_deterministic_and_sms_is_short() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, s) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"), dir.path().join("s.jsonl"));
    ok(&["synth", "-n", "50", "--seed", "7", "--out", p(&a)]);
    ok(&["synth", "-n", "50", "--seed", "7", "--out", p(&b)]);
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    assert_eq!(text.lines().count(), 150);
    ok(&["synth", "-n", "30", "--profile", "sms", "--out", p(&s)]);
    for line in fs::read_to_string(&s).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["text"].as_str().unwrap().chars().count() <= 200);
    }
}

#[test]
fn vectorize_train_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name);
    ok(&["synth", "-n", "30", "--seed", "2", "--out", p(&d("c.jsonl"))]);
    let cache = d("cache.jsonl");
    ok(&["vectorize", "--corpus", p(&d("c.jsonl")), "--cache", p(&cache), "--seed", "2", "--out", p(&d("cold.jsonl"))]);
    ok(&[
        "--parallelism", "1", "vectorize", "--corpus", p(&d("c.jsonl")), "--cache", p(&cache), "--seed", "2", "--out", p(&d("warm.jsonl")),
    ]);
    assert_eq!(fs::read(d("cold.jsonl")).unwrap(), fs::read(d("warm.jsonl")).unwrap());

    let out = Command::new(env!("CARGO_BIN_EXE_pcv"))
        .args(["cache", "stats"])
        .env("PCV_CACHE", &cache)
        .output()
        .unwrap();
    let stats: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stats["entries"], 90 * 21);

    ok(&["train", "--model", "forest", "--trees", "15", "--seed", "4", "--in", p(&d("cold.jsonl")), "--out", p(&d("m.json"))]);
    let out = ok(&["evaluate", "--model", p(&d("m.json")), "--in", p(&d("cold.jsonl")), "--threshold", "0.5"]);
    let result: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(result["rows"], 90);
    assert!(result["metrics"]["f1"].as_f64().unwrap() > 0.9);

    let disagreement = ok(&["analyze", "disagreement", "--in", p(&d("cold.jsonl")), "--top", "3"]);
    let findings: Vec<serde_json::Value> = serde_json::from_slice(&disagreement.stdout).unwrap();
    assert_eq!(findings.len(), 3);

    ok(&["viz", "tsne", "--in", p(&d("cold.jsonl")), "--perplexity", "10", "--iterations", "200", "--seed", "1", "--out", p(&d("a.csv"))]);
    ok(&["viz", "tsne", "--in", p(&d("cold.jsonl")), "--perplexity", "10", "--iterations", "200", "--seed", "1", "--out", p(&d("b.csv"))]);
    let csv = fs::read_to_string(d("a.csv")).unwrap();
    assert_eq!(csv, fs::read_to_string(d("b.csv")).unwrap());
    assert_eq!(csv.lines().next(), Some("doc_id,x,y,label"));
    assert_eq!(csv.lines().count(), 91);
}

#[test]
fn experiment_run_writes_reproducible_report() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "-n", "40", "--seed", "5", "--out", p(&dir.path().join("corpus.jsonl"))]);
    let config = dir.path().join("main.json");
    fs::write(
        &config,
        r#"{"experiment": "main", "corpus": "corpus.jsonl", "benign_test": 20, "seed": 5, "cache": "cache.jsonl", "output": "out/report.json", "baselines": ["tfidf"]}"#,
    )
    .unwrap();
    fs::create_dir(dir.path().join("out")).unwrap();
    ok(&["experiment", "run", p(&config)]);
    let report = dir.path().join("out/report.json");
    let first = fs::read(&report).unwrap();
    ok(&["experiment", "run", p(&config)]);
    assert_eq!(first, fs::read(&report).unwrap());
    let v: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
    assert_eq!(v["provenance"]["vector_dim"], 21);

    ok(&["ablate", "llms", p(&config)]);
    let llms: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("llm_ablation-report.json")).unwrap()).unwrap();
    assert_eq!(llms["llm_ablation"].as_array().unwrap().len(), 7);
    let q = dir.path().join("q.json");
    ok(&["ablate", "questions", p(&config), "--out", p(&q)]);
    let qa: serde_json::Value = serde_json::from_slice(&fs::read(&q).unwrap()).unwrap();
    assert_eq!(qa["question_ablation"]["rows"].as_array().unwrap().len(), 7);
}
