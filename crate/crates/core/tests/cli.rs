use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn wattgan(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wattgan"))
        .args(args)
        .arg("--config")
        .arg(config)
        .env_remove("WATTGAN_CONFIG")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let cfg = serde_json::json!({
        "paths": {
            "data": dir.join("data/lead.csv"),
            "work_dir": dir.join("work"),
            "models_dir": dir.join("models"),
            "reports_dir": dir.join("reports"),
        },
        "synth": [
            {
                "building_id": "b-1",
                "length": 720,
                "injections": [{"kind": "level_shift", "start": 300, "duration": 24, "magnitude": 40.0}]
            },
            {
                "building_id": "b-2",
                "length": 720,
                "seed": 9,
                "injections": [{"kind": "plateau", "start": 600, "duration": 30, "magnitude": -40.0}]
            }
        ],
        "preprocess": {"n_segments": 5},
        "train": {"epochs": 1, "batch_size": 32},
        "invert": {"steps": 3, "batch_size": 40},
        "score": {"threshold": -100.0},
        "eval": {"tolerances": [0, 24]},
    });
    let path = dir.join("run.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());

    for cmd in ["synth", "preprocess", "train", "detect", "eval"] {
        ok(&wattgan(&cfg, &[cmd]));
    }

    let root = dir.path();
    assert!(root.join("data/lead.csv").exists());
    for id in ["b-1", "b-2"] {
        assert!(root.join(format!("work/segments/{id}.json")).exists());
        assert!(root.join(format!("models/{id}.ckpt")).exists());
        let train_csv = fs::read_to_string(root.join(format!("reports/{id}_train.csv"))).unwrap();
        assert!(train_csv.starts_with("iteration,critic_loss,gen_loss\n"));
        let det = root.join(format!("reports/detections/{id}"));
        let summary: Value =
            serde_json::from_str(&fs::read_to_string(det.join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["building_id"], id);
        let seg = summary["segments"][0]["segment_index"].as_u64().unwrap();
        let rows = fs::read_to_string(det.join(format!("segment_{seg:03}.csv"))).unwrap();
        assert!(rows.starts_with("timestamp,raw_reading,scaled_kde,predicted_flag,true_label\n"));
        assert_eq!(rows.lines().count(), 1 + 144);
        assert!(det.join(format!("scores_{seg:03}.csv")).exists());
    }

    let metrics: Value =
        serde_json::from_str(&fs::read_to_string(root.join("reports/metrics.json")).unwrap()).unwrap();
    let records = metrics["records"].as_array().unwrap();
    assert_eq!(records.len(), 4);
    for r in records {
        for key in ["building_id", "r_t", "tp", "fn", "fp", "precision", "recall", "f1"] {
            assert!(r.get(key).is_some(), "missing {key} in {r}");
        }
    }
    // a threshold below every score makes every window critical, so the
    // predicted region covers each segment's interior
    let at24: Vec<&Value> = records.iter().filter(|r| r["r_t"] == 24).collect();
    assert!(at24.iter().all(|r| r["recall"] == 1.0), "{at24:?}");
    assert_eq!(metrics["aggregate"].as_array().unwrap().len(), 2);
}

#[test]
fn training_is_reproducible_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    for cmd in ["synth", "preprocess", "train"] {
        ok(&wattgan(&cfg, &[cmd]));
    }
    let ckpt = dir.path().join("models/b-1.ckpt");
    let first = fs::read(&ckpt).unwrap();
    ok(&wattgan(&cfg, &["train"]));
    assert_eq!(first, fs::read(&ckpt).unwrap());
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());

    let bad = wattgan(&cfg, &["train", "--set", "train.lr=-1"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(!dir.path().join("models").exists());

    let missing = wattgan(&cfg, &["preprocess"]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("lead.csv"));

    let absent = wattgan(&dir.path().join("nope.json"), &["synth"]);
    assert_eq!(absent.status.code(), Some(3));
}

#[test]
fn detect_rejects_foreign_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    for cmd in ["synth", "preprocess", "train"] {
        ok(&wattgan(&cfg, &[cmd]));
    }
    let models = dir.path().join("models");
    fs::copy(models.join("b-2.ckpt"), models.join("b-1.ckpt")).unwrap();
    let out = wattgan(&cfg, &["detect"]);
    assert_eq!(out.status.code(), Some(3));
}
