//! Input loading and spike encoding for the `encode` command.

use std::path::{Path, PathBuf};

use image::GrayImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spikecore::dataset::{bernoulli_encode, rate_encode, Dataset};
use spikecore::neuron::MAX_NEURONS;
use spikecore::system::EventSample;

use crate::error::{CliError, CliResult};

/// A labelled intensity vector with values in [0, 1].
pub type Record = (u16, Vec<f64>);

fn parse_csv(path: &Path) -> CliResult<Vec<Record>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
        let at = |msg: String| CliError::parse(format!("{}: record {}: {msg}", path.display(), i + 1));
        let mut fields = row.iter();
        let first = fields.next().ok_or_else(|| at("empty record".into()))?;
        let label = match first.parse::<u16>() {
            Ok(l) => l,
            // header row
            Err(_) if i == 0 && first.parse::<f64>().is_err() => continue,
            Err(e) => return Err(at(format!("label: {e}"))),
        };
        let p = fields
            .map(|f| f.parse::<f64>().map_err(|e| at(format!("intensity {f:?}: {e}"))))
            .collect::<CliResult<Vec<f64>>>()?;
        out.push((label, p));
    }
    Ok(out)
}

fn downscale(img: &GrayImage, factor: u32) -> Vec<f64> {
    let (w, h) = (img.width() / factor, img.height() / factor);
    let area = (factor * factor) as f64;
    let mut out = Vec::with_capacity((w * h) as usize);
    for by in 0..h {
        for bx in 0..w {
            let mut sum = 0u32;
            for y in 0..factor {
                for x in 0..factor {
                    sum += img.get_pixel(bx * factor + x, by * factor + y)[0] as u32;
                }
            }
            out.push(sum as f64 / area / 255.0);
        }
    }
    out
}

/// Grayscale image; the label is the name of the containing directory.
fn load_image(path: &Path, factor: u32) -> CliResult<Record> {
    let label = path
        .parent()
        .and_then(Path::file_name)
        .and_then(|n| n.to_str())
        .and_then(|n| n.parse::<u16>().ok())
        .ok_or_else(|| CliError::parse(format!("{}: parent directory must be a numeric class label", path.display())))?;
    let img = image::open(path).map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?.to_luma8();
    Ok((label, downscale(&img, factor)))
}

pub fn load_records(inputs: &[PathBuf], downscale_factor: Option<u32>) -> CliResult<Vec<Record>> {
    let mut out = Vec::new();
    for p in inputs {
        let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        match ext.as_deref() {
            Some("csv") => out.extend(parse_csv(p)?),
            _ => out.push(load_image(p, downscale_factor.unwrap_or(1))?),
        }
    }
    if out.is_empty() {
        return Err(CliError::config("no input samples"));
    }
    let channels = out[0].1.len();
    if let Some((i, _)) = out.iter().enumerate().find(|(_, r)| r.1.len() != channels) {
        return Err(CliError::config(format!("sample {i} has a different channel count than sample 0 ({channels})")));
    }
    if channels > MAX_NEURONS {
        return Err(CliError::new(
            "capacity",
            format!("{channels} input channels exceed the per-core limit of {MAX_NEURONS}; downscale the inputs"),
        ));
    }
    Ok(out)
}

pub fn encode_records(records: &[Record], timesteps: usize, bernoulli_seed: Option<u64>) -> CliResult<Dataset> {
    let mut rng = bernoulli_seed.map(ChaCha8Rng::seed_from_u64);
    let mut samples = Vec::with_capacity(records.len());
    for (label, p) in records {
        let steps = match &mut rng {
            Some(r) => bernoulli_encode(p, timesteps, r)?,
            None => rate_encode(p, timesteps)?,
        };
        samples.push(EventSample { steps, label: *label });
    }
    let d = Dataset { channels: records[0].1.len(), timesteps, samples };
    d.validate()?;
    Ok(d)
}
