//! File access with path context in every error.

use std::fs;
use std::path::Path;

use spikecore::dataset::Dataset;
use spikecore::dse::Manifest;
use spikecore::model::{decode_model, decode_quantized, TrainedModel};
use spikecore::system::QuantizedNetwork;

use crate::error::{CliError, CliResult};

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn load_dataset(path: &Path) -> CliResult<Dataset> {
    Dataset::from_bytes(&read_bytes(path)?).map_err(|e| CliError::from(e).context(path))
}

pub fn load_trained(path: &Path) -> CliResult<TrainedModel> {
    decode_model(&read_bytes(path)?).map_err(|e| CliError::from(e).context(path))
}

pub fn load_quantized(path: &Path) -> CliResult<QuantizedNetwork> {
    decode_quantized(&read_bytes(path)?).map_err(|e| CliError::from(e).context(path))
}

/// Reads a manifest and the quantized weights it points to.
pub fn load_manifest(path: &Path) -> CliResult<(Manifest, QuantizedNetwork)> {
    let m = Manifest::from_json(&read_text(path)?).map_err(|e| CliError::from(e).context(path))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let wpath = base.join(&m.weights_file);
    let q = load_quantized(&wpath)?;
    m.check_weights(&q).map_err(|e| CliError::from(e).context(&wpath))?;
    Ok((m, q))
}

/// Quantized network from either a manifest (JSON) or a weights container.
pub fn load_network(path: &Path) -> CliResult<(QuantizedNetwork, Option<Manifest>)> {
    let bytes = read_bytes(path)?;
    if bytes.starts_with(spikecore::model::WEIGHTS_MAGIC) {
        return Ok((decode_quantized(&bytes).map_err(|e| CliError::from(e).context(path))?, None));
    }
    if bytes.first() == Some(&b'{') {
        let (m, q) = load_manifest(path)?;
        return Ok((q, Some(m)));
    }
    Err(CliError::parse(format!(
        "{}: not a manifest or quantized weight file",
        path.display()
    )))
}
