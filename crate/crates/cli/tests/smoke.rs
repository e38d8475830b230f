use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_relneurons");

const CONFIG: &str = r#"{
  "seed": 3,
  "world": {
    "concepts": [
      {"name": "person", "n_entities": 80},
      {"name": "city", "n_entities": 80},
      {"name": "color", "n_entities": 8}
    ],
    "relations": [
      {"name": "person_color", "subject_concept": "person", "object_concept": "color", "n_facts": 60, "object_cardinality": 4, "fact_frequency_law": "uniform"},
      {"name": "city_color", "subject_concept": "city", "object_concept": "color", "n_facts": 60, "object_cardinality": 4}
    ],
    "two_token_object_fraction": 0.0,
    "max_weight": 8.0
  },
  "n_eva": 10,
  "model": {"n_layers": 1, "d_model": 16, "n_heads": 2, "d_ff": 32, "max_seq_len": 10},
  "train": {"steps": 300, "batch_size": 16, "lr": 0.003, "warmup_steps": 5, "final_lr_fraction": 0.05,
            "beta1": 0.9, "beta2": 0.98, "eps": 1e-8, "weight_decay": 0.0, "grad_clip": 1.0, "log_every": 50},
  "early_stop": null,
  "negative_seeds": [0, 1],
  "random_seeds": 2,
  "sweep_fractions": [0.01, 0.1, 0.5]
}"#;

fn run(out: &Path, args: &[&str]) -> (i32, String) {
    let o = Command::new(BIN)
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs");
    let text = String::from_utf8_lossy(&o.stdout).to_string() + &String::from_utf8_lossy(&o.stderr);
    (o.status.code().unwrap_or(-1), text)
}

fn ok(out: &Path, args: &[&str]) -> String {
    let (code, text) = run(out, args);
    assert_eq!(code, 0, "{args:?} failed:\n{text}");
    text
}

#[test]
fn full_pipeline_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cfg = out.join("lab.json");
    std::fs::write(&cfg, CONFIG).unwrap();
    ok(out, &["gen-world", "--config", cfg.to_str().unwrap()]);
    for stage in [
        "emit-corpus",
        "train",
        "build-prompts",
        "validate",
        "build-sets",
        "capture",
        "score",
        "select",
    ] {
        ok(out, &[stage]);
    }
    ok(out, &["ablate", "--mask", "top:relation=person_color:k=1%"]);
    ok(out, &["ablate", "--mask", "random:k=5"]);
    ok(out, &["ablate", "--mask", "none"]);
    ok(out, &["ablate", "--mask", "masks/city_color.csv"]);
    for stage in [
        "drop-matrix",
        "sweep",
        "cumulativity",
        "concepts",
        "ppl",
        "resilience",
        "report",
    ] {
        ok(out, &[stage]);
    }

    for f in [
        "world.json",
        "corpus.txt",
        "tokenizer.json",
        "model.ckpt",
        "prompts/eva2.jsonl",
        "sets/person_color.manifest.json",
        "activations/person_color.bin",
        "rankings/person_color.csv",
        "masks/person_color.csv",
        "results/drop_matrix.json",
        "results/sweep.csv",
        "results/resilience.json",
        "report/index.html",
        "manifest.json",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["stages"].as_array().unwrap().len(), 17);
    assert!(manifest["timestamps"]["train"]["finished_unix_ms"].is_u64());

    // Predictions written by ablate score identically in offline mode.
    let online: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out.join("results/ablate_none.json")).unwrap(),
    )
    .unwrap();
    ok(
        out,
        &["ablate", "--predictions", "results/predictions_none.jsonl"],
    );
    let offline: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out.join("results/ablate_offline.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(online["data"]["accuracy"], offline["data"]["accuracy"]);

    // A single activation file scored straight to a CSV path.
    let csv = out.join("r.csv");
    let (code, text) = run(
        &csv,
        &["score", "--activations", "activations/person_color.bin"],
    );
    assert_eq!(code, 0, "{text}");
    assert_eq!(
        std::fs::read(&csv).unwrap(),
        std::fs::read(out.join("rankings/person_color.csv")).unwrap()
    );

    // Re-running a deterministic stage reproduces its result byte for byte.
    let before = std::fs::read(out.join("results/sweep.json")).unwrap();
    ok(out, &["sweep"]);
    assert_eq!(
        before,
        std::fs::read(out.join("results/sweep.json")).unwrap()
    );
}

#[test]
fn exit_codes_and_cleanup() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let (code, _) = run(out, &["gen-world", "--no-such-flag"]);
    assert_eq!(code, 1);
    let (code, text) = run(out, &["train"]);
    assert_eq!(code, 2, "{text}");
    std::fs::write(out.join("bad.json"), r#"{"top_fraction": 2.0}"#).unwrap();
    let (code, _) = run(
        out,
        &[
            "gen-world",
            "--config",
            out.join("bad.json").to_str().unwrap(),
        ],
    );
    assert_eq!(code, 1);
    assert!(!out.join("world.json").exists());

    std::fs::write(out.join("lab.json"), CONFIG).unwrap();
    ok(
        out,
        &[
            "gen-world",
            "--config",
            out.join("lab.json").to_str().unwrap(),
        ],
    );
    let (code, _) = run(out, &["ablate", "--mask", "top:relation=person_color"]);
    assert_eq!(code, 1);
    // A stage failing part way leaves none of its outputs behind.
    std::fs::write(out.join("world.json"), "{ not json").unwrap();
    let (code, _) = run(out, &["build-prompts"]);
    assert_eq!(code, 1);
    assert!(!out.join("prompts").exists());
}
