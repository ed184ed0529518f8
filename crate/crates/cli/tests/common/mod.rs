#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, Output};

use spikecore::demo::{three_class_intensities, three_class_model};
use spikecore::model::encode_model;

pub const BIN: &str = env!("CARGO_BIN_EXE_spikecore");

/// Runs the CLI inside `dir`.
pub fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().expect("spawn spikecore")
}

/// Runs the CLI and requires success; returns stdout.
pub fn ok(dir: &Path, args: &[&str]) -> String {
    let o = run(dir, args);
    assert!(
        o.status.success(),
        "spikecore {args:?} failed ({:?}): {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).expect("utf-8 stdout")
}

/// Writes the 3-class model, a CSV of 30 labelled samples and a project
/// with the given search ranges and objective weights into `dir`.
pub fn write_demo(dir: &Path, ranges: &str, weights: &str) {
    std::fs::write(dir.join("model.spkm"), encode_model(&three_class_model()).unwrap()).unwrap();
    let mut csv = String::from("label,p\n");
    for (label, p) in three_class_intensities(10, 42) {
        let cells: Vec<String> = p.iter().map(f64::to_string).collect();
        let _ = writeln!(csv, "{label},{}", cells.join(","));
    }
    std::fs::write(dir.join("data.csv"), csv).unwrap();
    let project = format!(
        r#"{{
  "kind": "project",
  "schema_version": 1,
  "network": {{
    "input_channels": 12,
    "timesteps": 10,
    "layers": [
      {{ "topology": "ATA_F", "model": "LIF", "neurons": 6, "reset": "reset_by_subtract" }},
      {{ "topology": "FF", "model": "LIF", "neurons": 3, "reset": "reset_to_zero" }}
    ]
  }},
  "ranges": {ranges},
  "weights": {weights},
  "seed": 5,
  "model": "model.spkm",
  "dataset": "data.spke"
}}
"#
    );
    std::fs::write(dir.join("project.json"), project).unwrap();
}

pub const GRID_32_RANGES: &str = r#"{ "ff": [4, 8, 12, 16], "rec": [4, 8, 12, 16], "leak": [3, 8] }"#;
pub const DEFAULT_WEIGHTS: &str =
    r#"{ "c_h": 0.5, "c_a": 0.5, "c_lut": 0.33, "c_ff": 0.33, "c_bram": 0.34 }"#;
