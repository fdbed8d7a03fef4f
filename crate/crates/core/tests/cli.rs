use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const CORPUS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/corpus.smi");

fn tiered(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tiered")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn small_train(dir: &Path, model: &str, epochs: &str) -> String {
    let input = write(dir, "small.smi", "CCO ethanol\nc1ccccc1O phenol\nCC(=O)O acetic\n");
    let out = dir.join(format!("{model}.json")).to_str().unwrap().to_string();
    let o = tiered(&[
        "train", "--input", &input, "--out", &out, "--model", model, "--dims", "4,4,4", "--layers", "2",
        "--epochs", epochs,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn parse_reports_counts() {
    let o = tiered(&["parse", "--input", CORPUS]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let vanillin = &v["molecules"][0];
    assert_eq!(vanillin["name"], "vanillin");
    assert_eq!((vanillin["atoms"].as_u64(), vanillin["bonds"].as_u64()), (Some(19), Some(19)));
    assert_eq!(vanillin["rings"], 1);
    assert_eq!(v["molecules"].as_array().unwrap().len(), 30);
}

#[test]
fn parse_bad_line_is_partial_failure() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "bad.smi", "C methane\nC( broken\nCCO\n");
    let o = tiered(&["parse", "--input", &input]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains(":2:"));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["molecules"].as_array().unwrap().len(), 2);
    assert_eq!(v["failures"][0]["line"], 2);
}

#[test]
fn parse_empty_and_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write(dir.path(), "empty.smi", "");
    let o = tiered(&["parse", "--input", &empty]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["molecules"], serde_json::json!([]));
    let missing = dir.path().join("missing.smi");
    assert_eq!(code(&tiered(&["parse", "--input", missing.to_str().unwrap()])), 2);
}

#[test]
fn partition_document() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("groups.json");
    let o = tiered(&["partition", "--input", CORPUS, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v = json(&out);
    let vanillin = &v["molecules"][0];
    let kinds: Vec<&str> = vanillin["groups"].as_array().unwrap().iter().map(|g| g["kind"].as_str().unwrap()).collect();
    assert_eq!(kinds, ["FG", "FG", "FG", "AromaticRing"]);
    assert_eq!(vanillin["membership"]["shape"], serde_json::json!([19, 4]));
    assert_eq!(v["molecules"][1]["groups"][0]["kind"], "Component");
    for m in v["molecules"].as_array().unwrap() {
        for row in m["membership"]["rows"].as_array().unwrap() {
            let s: f64 = row.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
            assert!((s - 1.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn train_writes_checkpoint_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = small_train(dir.path(), "gae", "4");
    let v = json(Path::new(&ckpt));
    assert_eq!(v["format_version"], 1);
    assert_eq!(v["model_kind"], "gae");
    let csv = std::fs::read_to_string(Path::new(&ckpt).with_extension("csv")).unwrap();
    assert!(csv.starts_with("epoch,loss\n1,"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn train_zero_epochs_and_repeatability() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = small_train(dir.path(), "vgae", "0");
    let csv = std::fs::read_to_string(Path::new(&ckpt).with_extension("csv")).unwrap();
    assert_eq!(csv, "epoch,elbo,kl\n");

    let a = small_train(dir.path(), "gae", "3");
    let first = std::fs::read(Path::new(&a).with_extension("csv")).unwrap();
    let b = small_train(dir.path(), "gae", "3");
    assert_eq!(std::fs::read(Path::new(&b).with_extension("csv")).unwrap(), first);
}

#[test]
fn train_without_molecules_fails() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "bad.smi", "C(\n");
    let out = dir.path().join("m.json");
    let o = tiered(&["train", "--input", &input, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(!out.exists());
}

#[test]
fn train_divergence_is_numeric_abort() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "a.smi", "c1ccccc1O\nCC(=O)O\n");
    let out = dir.path().join("m.json");
    let o = tiered(&[
        "train", "--input", &input, "--out", out.to_str().unwrap(), "--optimizer", "sgd", "--lr", "1e150",
        "--epochs", "5",
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("epoch"));
}

#[test]
fn embed_tiers() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = small_train(dir.path(), "gae", "2");
    let input = write(dir.path(), "v.smi", "O=Cc1ccc(O)c(OC)c1 vanillin\nC methane\n");
    let out = dir.path().join("e.json");
    let o = tiered(&["embed", &ckpt, "--input", &input, "--tier", "group", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v = json(&out);
    let van = &v["molecules"][0];
    assert_eq!(van["embedding"]["shape"], serde_json::json!([4, 4]));
    assert_eq!(van["group_kinds"], serde_json::json!(["FG", "FG", "FG", "AromaticRing"]));
    assert_eq!(van["membership"]["node_to_group"]["shape"], serde_json::json!([19, 4]));

    let o = tiered(&["embed", &ckpt, "--input", &input, "--tier", "graph", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    for m in json(&out)["molecules"].as_array().unwrap() {
        assert_eq!(m["embedding"]["shape"], serde_json::json!([1, 4]));
    }
    let o = tiered(&["embed", &ckpt, "--input", &input, "--tier", "node", "--out", out.to_str().unwrap()]);
    assert_eq!(json(&out)["molecules"][1]["atoms"], serde_json::json!([0, 1, 2, 3, 4]));
    assert_eq!(code(&o), 0);
}

#[test]
fn vgae_embedding_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = small_train(dir.path(), "vgae", "2");
    let run = || tiered(&["embed", &ckpt, "--input", CORPUS, "--tier", "node"]).stdout;
    assert_eq!(run(), run());
}

#[test]
fn checkpoint_mismatch_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = small_train(dir.path(), "gae", "1");
    let mut v = json(Path::new(&ckpt));
    v["config"]["dims"] = serde_json::json!([5, 4, 4]);
    let bad = write(dir.path(), "bad.json", &v.to_string());
    assert_eq!(code(&tiered(&["embed", &bad, "--input", CORPUS])), 4);
    let truncated = write(dir.path(), "cut.json", "{\"format_version\": 1");
    assert_eq!(code(&tiered(&["interp", &truncated, "C", "CC"])), 4);
    let missing = dir.path().join("none.json");
    assert_eq!(code(&tiered(&["embed", missing.to_str().unwrap(), "--input", CORPUS])), 2);
}

#[test]
fn interpolation_document() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = small_train(dir.path(), "gae", "2");
    let out = dir.path().join("i.json");
    let o = tiered(&["interp", &ckpt, "CCO", "c1ccccc1", "--steps", "4", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v = json(&out);
    let path = v["path"].as_array().unwrap();
    assert_eq!(path.len(), 4);
    assert_eq!(path[0]["graph_embedding"], v["a"]["graph_embedding"]);
    assert_eq!(path[3]["graph_embedding"], v["b"]["graph_embedding"]);
    assert!(path[1]["decoded_on_a"]["top_edges"].as_array().unwrap().len() <= 5);

    let o = tiered(&["interp", &ckpt, "CCO", "CCO", "--steps", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v = json(&out);
    let path = v["path"].as_array().unwrap();
    assert!(path.iter().all(|s| s["graph_embedding"] == path[0]["graph_embedding"]));

    let o = tiered(&["interp", &ckpt, "CCO", "C(", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}
