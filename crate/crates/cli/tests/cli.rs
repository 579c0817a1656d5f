use std::path::Path;
use std::process::{Command, Output};

use handcraft::posedata::toyworld::{toyworld, ToyWorldConfig};
use handcraft::posedata::Dataset;

fn handcraft(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_handcraft")).args(args).env("HANDCRAFT_THREADS", "2").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = handcraft(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn toy_dir(dir: &Path, classes: usize) -> String {
    let path = dir.join("toy");
    toyworld(&ToyWorldConfig { num_classes: classes, samples_per_class: 4, test_fraction: 0.25, ..Default::default() })
        .unwrap()
        .save(&path)
        .unwrap();
    path.to_str().unwrap().to_owned()
}

fn manifest_sample_count(dir: &Path) -> usize {
    let text = std::fs::read_to_string(dir.join("manifest.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["samples"].as_array().unwrap().len()
}

#[test]
fn usage_errors_exit_2() {
    let out = handcraft(&["eval", "--model", "m.hckp"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--dataset"));
    assert_eq!(handcraft(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(handcraft(&["gradcheck", "--bogus"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_nonzero_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere");
    let out = handcraft(&["preprocess", "--dataset", missing.to_str().unwrap(), "--out", "x"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn gradcheck_passes() {
    let text = ok(&["gradcheck"]);
    assert!(text.contains("all ") && !text.contains("FAIL"), "{text}");
}

#[test]
fn full_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let raw = toy_dir(d, 3);
    let p = |name: &str| d.join(name).to_str().unwrap().to_owned();

    ok(&["preprocess", "--dataset", &raw, "--out", &p("clean"), "--center"]);
    let clean = Dataset::load(d.join("clean")).unwrap();
    assert_eq!(clean.samples.len(), 12);

    let gen_cfg = serde_json::json!({
        "model": {"kind": "mamba-sl", "layers": 1, "hidden_dim": 8, "state_dim": 4, "output_size": 8},
        "batch_size": 4, "peak_lr": 0.003, "weight_decay": 0.0001, "total_steps": 10,
        "warmup_ratio": 0.3, "synthetic_pretrain_steps": 2,
        "generator": {"num_blocks": 1, "embed_dim": 4, "batch_size": 4, "train_steps": 3}
    });
    std::fs::write(d.join("exp.json"), gen_cfg.to_string()).unwrap();

    ok(&["train-gen", "--config", &p("exp.json"), "--dataset", &p("clean"), "--out", &p("gen.hckp"), "--seed", "1"]);
    let mpjpe = ok(&["eval", "--dataset", &p("clean"), "--model", &p("gen.hckp"), "--split", "train"]);
    let values: Vec<f64> = mpjpe.lines().map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap()).collect();
    assert!(mpjpe.starts_with("forward ") && values.len() == 2 && values.iter().all(|v| v.is_finite() && *v >= 0.0));

    ok(&["synth", "--dataset", &p("clean"), "--generator", &p("gen.hckp"), "--n-per-class", "5", "--out", &p("syn")]);
    assert_eq!(manifest_sample_count(&d.join("syn")), 15);

    for run in ["a", "b"] {
        ok(&[
            "train-slr", "--config", &p("exp.json"), "--dataset", &p("clean"), "--synthetic", &p("syn"),
            "--metrics", &p(&format!("{run}.jsonl")), "--out", &p(&format!("{run}.hckp")),
        ]);
    }
    let log = std::fs::read_to_string(d.join("a.jsonl")).unwrap();
    assert_eq!(log, std::fs::read_to_string(d.join("b.jsonl")).unwrap());
    assert_eq!(log.lines().filter(|l| l.contains("\"loss\"")).count(), 10);
    assert_eq!(std::fs::read(d.join("a.hckp")).unwrap(), std::fs::read(d.join("b.hckp")).unwrap());

    let acc: f64 = ok(&["eval", "--dataset", &p("clean"), "--model", &p("a.hckp")]).trim().parse().unwrap();
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn train_slr_without_synthetic_skips_pretraining() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = toy_dir(tmp.path(), 2);
    let out = tmp.path().join("m.hckp");
    let metrics = tmp.path().join("m.jsonl");
    let cfg = serde_json::json!({
        "model": {"kind": "transformer-sl", "layers": 1, "heads": 2, "hidden_dim": 8, "mlp_dim": 8, "output_size": 8},
        "batch_size": 4, "peak_lr": 0.001, "weight_decay": 0.0, "total_steps": 6, "warmup_ratio": 0.5,
        "synthetic_pretrain_steps": 2
    });
    let cfg_path = tmp.path().join("c.json");
    std::fs::write(&cfg_path, cfg.to_string()).unwrap();
    ok(&[
        "train-slr", "--config", cfg_path.to_str().unwrap(), "--dataset", &raw,
        "--out", out.to_str().unwrap(), "--metrics", metrics.to_str().unwrap(),
    ]);
    let log = std::fs::read_to_string(&metrics).unwrap();
    assert!(log.lines().filter(|l| l.contains("\"loss\"")).all(|l| l.contains("\"finetune\"")));
    let text = ok(&["eval", "--dataset", &raw, "--model", out.to_str().unwrap(), "--split", "test"]);
    let acc: f64 = text.trim().parse().unwrap();
    assert!((0.0..=1.0).contains(&acc));
}
