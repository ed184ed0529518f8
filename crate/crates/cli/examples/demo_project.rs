//! Writes a runnable demo project into the given directory: the 3-class
//! model, a CSV of intensities and a project file.
//!
//! cargo run -p spikecore-cli --example demo_project -- /tmp/demo

use std::fmt::Write as _;
use std::path::PathBuf;

use spikecore::demo::{three_class_intensities, three_class_model};
use spikecore::model::encode_model;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "demo".into()));
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("model.spkm"), encode_model(&three_class_model())?)?;
    let mut csv = String::new();
    for (label, p) in three_class_intensities(10, 7) {
        let cells: Vec<String> = p.iter().map(f64::to_string).collect();
        let _ = writeln!(csv, "{label},{}", cells.join(","));
    }
    std::fs::write(dir.join("data.csv"), csv)?;
    std::fs::write(dir.join("project.json"), PROJECT)?;
    println!("demo project written to {}", dir.display());
    Ok(())
}

const PROJECT: &str = r#"{
  "kind": "project",
  "schema_version": 1,
  "network": {
    "input_channels": 12,
    "timesteps": 10,
    "layers": [
      { "topology": "ATA_F", "model": "LIF", "neurons": 6, "reset": "reset_by_subtract" },
      { "topology": "FF", "model": "LIF", "neurons": 3, "reset": "reset_to_zero" }
    ]
  },
  "ranges": { "ff": [4, 8, 12, 16], "rec": [4, 8, 12, 16], "leak": [3, 8] },
  "seed": 1,
  "model": "model.spkm",
  "dataset": "data.spke"
}
"#;
