use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures/synthetic")
        .join(name)
}

fn eqk(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_eqk"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "eqk {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn lines(path: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn validate_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let claims = fixture("claims.jsonl");
    let o = eqk(dir.path(), &["corpus", "validate", claims.to_str().unwrap()]);
    assert_eq!(stdout(&o).trim(), "ok: 20 claims in 8 articles");
}

#[test]
fn validate_rejects_bad_file() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"claim_id\":\"x\"}\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_eqk"))
        .args(["corpus", "validate", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.jsonl:1"));
}

#[test]
fn split_keeps_articles_together() {
    let dir = tempfile::tempdir().unwrap();
    let claims = fixture("claims.jsonl");
    eqk(dir.path(), &["corpus", "split", "--k", "4", "--seed", "3", claims.to_str().unwrap(), "--out", "folds.json"]);
    let folds: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("folds.json")).unwrap()).unwrap();
    let a = &folds["assignments"];
    assert_eq!(a.as_object().unwrap().len(), 20);
    assert_eq!(a["c01"], a["c02"]);
    assert_eq!(a["c04"], a["c06"]);
}

#[test]
fn generate_search_metrics_and_ensemble() {
    let dir = tempfile::tempdir().unwrap();
    let claims = fixture("claims.jsonl");
    let anns = fixture("annotations.jsonl");
    let script = fixture("mock_search.json");
    let (claims, anns, script) = (claims.to_str().unwrap(), anns.to_str().unwrap(), script.to_str().unwrap());

    eqk(dir.path(), &["generate", "--method", "ne", "--claims", claims, "--annotations", anns, "--out", "ne.jsonl"]);
    eqk(dir.path(), &["generate", "--method", "verbatim", "--claims", claims, "--out", "vb.jsonl"]);
    let ne = lines(&dir.path().join("ne.jsonl"));
    let c09 = ne.iter().find(|q| q["claim_id"] == "c09").unwrap();
    assert_eq!(c09["text"], "Netanyahu, Israel");

    let mut both = std::fs::read_to_string(dir.path().join("ne.jsonl")).unwrap();
    both.push_str(&std::fs::read_to_string(dir.path().join("vb.jsonl")).unwrap());
    std::fs::write(dir.path().join("q.jsonl"), both).unwrap();
    eqk(dir.path(), &["search", "run", "--engine", "mock", "--script", script, "--n", "3", "--k", "10", "--queries", "q.jsonl", "--out", "res.jsonl"]);

    let o = eqk(dir.path(), &["search", "metrics", "--claims", claims, "--results", "res.jsonl"]);
    let rows: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let vb = rows.iter().find(|r| r["method"] == "verbatim").unwrap();
    assert_eq!(vb["metrics"]["fm_pct"], 100.0);
    assert_eq!(vb["metrics"]["mrr"], 1.0);

    let o = eqk(dir.path(), &["ensemble", "--claims", claims, "--results", "res.jsonl", "--methods", "named_entities,verbatim", "--priorities", "2,1"]);
    let ens: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(ens["samples"], 20);
    assert_eq!(ens["metrics"]["fo_pct"], 100.0);
}

#[test]
fn score_emits_pairs_and_means() {
    let dir = tempfile::tempdir().unwrap();
    let claims = fixture("claims.jsonl");
    let claims = claims.to_str().unwrap();
    eqk(dir.path(), &["generate", "--method", "verbatim", "--claims", claims, "--out", "vb.jsonl"]);
    let o = eqk(dir.path(), &["score", "--claims", claims, "--pred", "vb.jsonl", "--target-col", "claim_text"]);
    let pairs: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(pairs.len(), 20);
    assert!(pairs.iter().all(|p| p["levenshtein_ratio"] == 1.0 && p["rougeL"]["f1"] == 1.0));
    let means: serde_json::Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert_eq!(means["rouge2"], 1.0);
}

#[test]
fn zero_shot_with_stub_table() {
    let dir = tempfile::tempdir().unwrap();
    let claims = fixture("claims.jsonl");
    let table = dir.path().join("stub.json");
    std::fs::write(
        &table,
        r#"{"Galileo operates at a height of 23,000km above the Earth. Search query:": "Search query: galileo height"}"#,
    )
    .unwrap();
    eqk(dir.path(), &[
        "generate", "--method", "zero-shot", "--template", "template-05", "--claims", claims.to_str().unwrap(),
        "--stub-responses", table.to_str().unwrap(), "--out", "zs.jsonl",
    ]);
    let zs = lines(&dir.path().join("zs.jsonl"));
    let c04 = zs.iter().find(|q| q["claim_id"] == "c04").unwrap();
    assert_eq!(c04["text"], "galileo height");
    assert_eq!(c04["method"], "zero_shot");
    assert_eq!(c04["template_id"], "template-05");
}

#[test]
fn run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("experiment.toml");
    eqk(dir.path(), &["--sequential", "run", "--config", cfg.to_str().unwrap(), "--out", "rep"]);
    assert!(dir.path().join("rep/report.json").exists());
    let o = eqk(dir.path(), &["report", "rep"]);
    let text = stdout(&o);
    assert!(text.contains("Best template per method"));
    assert!(text.contains("Ensembles (Borda)"));
}

#[test]
fn trainer_config_stanza() {
    let dir = tempfile::tempdir().unwrap();
    let o = eqk(dir.path(), &["trainer-config"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["optimizer"], "adafactor");
    assert_eq!(v["learning_rate"], 0.001);
    assert_eq!(v["epochs"], 10);
}
