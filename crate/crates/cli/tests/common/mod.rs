#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub const SMALL_COHORT: &str = r#"{
  "dims": [40, 40, 36],
  "tumor_radius": [6, 9],
  "segmenter": {"hyperdense_threshold": 0.6, "hypodense_threshold": -0.2, "min_component": 20, "closing_radius": 1}
}"#;

pub fn mewm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mewm"))
        .args(args)
        .output()
        .expect("spawn mewm")
}

pub fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/schemas")
}

pub fn assert_valid(schema: &str, instance: &Value) {
    let text = std::fs::read_to_string(schema_dir().join(schema)).unwrap();
    let schema_json: Value = serde_json::from_str(&text).unwrap();
    let validator = jsonschema::validator_for(&schema_json).expect("schema compiles");
    let errors: Vec<String> = validator
        .iter_errors(instance)
        .map(|e| format!("{} at {}", e, e.instance_path))
        .collect();
    assert!(errors.is_empty(), "{schema}: {errors:#?}\n{instance:#}");
}

pub fn assert_invalid(schema: &str, instance: &Value) {
    let text = std::fs::read_to_string(schema_dir().join(schema)).unwrap();
    let schema_json: Value = serde_json::from_str(&text).unwrap();
    let validator = jsonschema::validator_for(&schema_json).expect("schema compiles");
    assert!(
        !validator.is_valid(instance),
        "{schema} accepted {instance}"
    );
}

/// Generates `n` small patients under `root/name` and returns that directory.
pub fn small_cohort(root: &Path, name: &str, n: usize, seed: u64) -> PathBuf {
    let cfg = root.join(format!("{name}-config.json"));
    std::fs::write(&cfg, SMALL_COHORT).unwrap();
    let out = root.join(name);
    let o = mewm(&[
        "cohort",
        "gen",
        "-n",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
        "-o",
        out.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert!(
        o.status.success(),
        "cohort gen failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    out
}
