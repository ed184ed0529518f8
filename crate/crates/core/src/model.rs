//! Float-valued trained models, their quantization at a precision point,
//! and the binary weight containers (magic, JSON header, little-endian blob).

use serde::{Deserialize, Serialize};

use crate::cg::{encode_decay, DecayRate, SelectionUnits};
use crate::error::{Error, Result};
use crate::fxp::{quantize_value, quantize_with_scale, shared_scale, QFormat, ResetPolicy};
use crate::neuron::NeuronModelKind;
use crate::system::{CoreConfig, LayerWeights, NetworkConfig, QuantizedNetwork, Topology};

pub const MODEL_MAGIC: &[u8; 4] = b"SPKM";
pub const WEIGHTS_MAGIC: &[u8; 4] = b"SPKQ";
pub const CONTAINER_VERSION: u32 = 1;
pub const DEFAULT_STATE_HEADROOM_BITS: u8 = 4;

/// One trained layer in float units. `ff` is source-major
/// (`ff[src * neuron_count + dst]`); `rec` is `n * n` for ATA_T and `n`
/// self-weights for ATA_F.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedLayer {
    pub topology: Topology,
    pub model: NeuronModelKind,
    pub neuron_count: usize,
    pub threshold: f64,
    /// Membrane retention factor in [0, 1]; ignored for IF.
    pub beta: f64,
    /// Synaptic-current retention factor, synaptic model only.
    pub alpha: Option<f64>,
    pub reset: ResetPolicy,
    pub ff: Vec<f64>,
    pub rec: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub input_channels: usize,
    pub timesteps: usize,
    /// Extra membrane bits above the widest weight format.
    #[serde(default = "default_headroom")]
    pub state_headroom_bits: u8,
    #[serde(default = "default_queue")]
    pub ff_queue_capacity: usize,
    pub layers: Vec<TrainedLayer>,
}

fn default_headroom() -> u8 {
    DEFAULT_STATE_HEADROOM_BITS
}

fn default_queue() -> usize {
    crate::aer::DEFAULT_QUEUE_CAPACITY
}

/// Bit widths chosen for one quantization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Precision {
    pub ff_bits: u8,
    /// Used by recurrent layers only.
    pub rec_bits: u8,
    pub leak_bits: u8,
}

impl TrainedModel {
    pub fn is_recurrent(&self) -> bool {
        self.layers.iter().any(|l| l.topology.is_recurrent())
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("model has no layers".into()));
        }
        let mut src = self.input_channels;
        for (i, l) in self.layers.iter().enumerate() {
            if l.ff.len() != src * l.neuron_count {
                return Err(Error::Config(format!(
                    "layer {i}: {} feedforward weights, expected {src} x {}",
                    l.ff.len(),
                    l.neuron_count
                )));
            }
            let expect_rec = match l.topology {
                Topology::Ff => None,
                Topology::AtaF => Some(l.neuron_count),
                Topology::AtaT => Some(l.neuron_count * l.neuron_count),
            };
            if l.rec.as_ref().map(Vec::len) != expect_rec {
                return Err(Error::Config(format!("layer {i}: recurrent weight count does not match topology")));
            }
            for f in std::iter::once(l.beta).chain(l.alpha) {
                if !(0.0..=1.0).contains(&f) {
                    return Err(Error::OutOfRange(format!("layer {i}: decay factor {f} outside [0, 1]")));
                }
            }
            if (l.model == NeuronModelKind::Synaptic) != l.alpha.is_some() {
                return Err(Error::Config(format!("layer {i}: alpha is required by and only by the synaptic model")));
            }
            if !l.threshold.is_finite() {
                return Err(Error::NonFinite { index: i, value: l.threshold });
            }
            src = l.neuron_count;
        }
        Ok(())
    }

    /// Maps every parameter onto the integer grid at `p`.
    ///
    /// Feedforward and recurrent weights of a layer share one LSB so that
    /// both accumulate on the membrane grid; the threshold is expressed in
    /// the same LSB. The membrane (and synaptic current) width is the
    /// widest weight width plus the headroom, capped at 32.
    pub fn quantize(&self, p: Precision) -> Result<QuantizedNetwork> {
        self.validate()?;
        let wf = QFormat::new(p.ff_bits as u32)?;
        let units = SelectionUnits::for_leak_bits(p.leak_bits);
        let mut cores = Vec::with_capacity(self.layers.len());
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut scales = Vec::with_capacity(self.layers.len());
        let mut src = self.input_channels;
        for (i, l) in self.layers.iter().enumerate() {
            let rf = if l.topology.is_recurrent() { Some(QFormat::new(p.rec_bits as u32)?) } else { None };
            let widest = wf.bits().max(rf.map_or(0, |f| f.bits()));
            let pf = QFormat::new((widest as u32 + self.state_headroom_bits as u32).min(32))?;
            let mut groups: Vec<(&[f64], QFormat)> = vec![(&l.ff, wf)];
            if let (Some(r), Some(f)) = (&l.rec, rf) {
                groups.push((r, f));
            }
            let scale = shared_scale(&groups)?;
            let ff: Vec<i32> = quantize_with_scale(&l.ff, scale, wf)?.iter().map(|w| w.value()).collect();
            let rec = match (&l.rec, rf) {
                (Some(r), Some(f)) => Some(quantize_with_scale(r, scale, f)?.iter().map(|w| w.value()).collect()),
                _ => None,
            };
            let beta = if l.model == NeuronModelKind::If { DecayRate::BYPASS } else { encode_decay(l.beta, p.leak_bits)? };
            let alpha = l.alpha.map(|a| encode_decay(a, p.leak_bits)).transpose()?;
            cores.push(CoreConfig {
                core_id: i as u8,
                topology: l.topology,
                model: l.model,
                neuron_count: l.neuron_count,
                source_count: src,
                weight_bits: p.ff_bits,
                rec_weight_bits: rf.map(|f| f.bits()),
                potential_bits: pf.bits(),
                current_bits: l.alpha.map(|_| pf.bits()),
                beta,
                alpha,
                selection_units: units,
                threshold: quantize_value(l.threshold, scale, pf).value(),
                reset: l.reset,
                ff_queue_capacity: self.ff_queue_capacity,
            });
            layers.push(LayerWeights { ff, rec });
            scales.push(scale);
            src = l.neuron_count;
        }
        let net = QuantizedNetwork {
            config: NetworkConfig { input_channels: self.input_channels, timesteps: self.timesteps, cores },
            layers,
            scales,
        };
        net.validate()?;
        Ok(net)
    }
}

fn write_container(magic: &[u8; 4], header: &impl Serialize, blob: &[u8]) -> Result<Vec<u8>> {
    let h = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(8 + h.len() + blob.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&(h.len() as u32).to_le_bytes());
    out.extend_from_slice(&h);
    out.extend_from_slice(blob);
    Ok(out)
}

fn read_container<'a, H: Deserialize<'a>>(magic: &[u8; 4], bytes: &'a [u8]) -> Result<(H, &'a [u8])> {
    if bytes.len() < 8 || &bytes[..4] != magic {
        return Err(Error::Parse(format!("missing {} magic", String::from_utf8_lossy(magic))));
    }
    let len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let end = 8usize
        .checked_add(len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Parse("header length exceeds file size".into()))?;
    let header = serde_json::from_slice(&bytes[8..end]).map_err(|e| Error::Parse(format!("header: {e}")))?;
    Ok((header, &bytes[end..]))
}

#[derive(Serialize, Deserialize)]
struct ModelLayerHeader {
    topology: Topology,
    model: NeuronModelKind,
    neuron_count: usize,
    threshold: f64,
    beta: f64,
    alpha: Option<f64>,
    reset: ResetPolicy,
    ff_len: usize,
    rec_len: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    version: u32,
    dtype: String,
    input_channels: usize,
    timesteps: usize,
    state_headroom_bits: u8,
    ff_queue_capacity: usize,
    layers: Vec<ModelLayerHeader>,
}

pub fn encode_model(m: &TrainedModel) -> Result<Vec<u8>> {
    m.validate()?;
    let header = ModelHeader {
        version: CONTAINER_VERSION,
        dtype: "f64".into(),
        input_channels: m.input_channels,
        timesteps: m.timesteps,
        state_headroom_bits: m.state_headroom_bits,
        ff_queue_capacity: m.ff_queue_capacity,
        layers: m
            .layers
            .iter()
            .map(|l| ModelLayerHeader {
                topology: l.topology,
                model: l.model,
                neuron_count: l.neuron_count,
                threshold: l.threshold,
                beta: l.beta,
                alpha: l.alpha,
                reset: l.reset,
                ff_len: l.ff.len(),
                rec_len: l.rec.as_ref().map(Vec::len),
            })
            .collect(),
    };
    let mut blob = Vec::new();
    for l in &m.layers {
        for w in l.ff.iter().chain(l.rec.iter().flatten()) {
            blob.extend_from_slice(&w.to_le_bytes());
        }
    }
    write_container(MODEL_MAGIC, &header, &blob)
}

fn take<'a>(blob: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if blob.len() < n {
        return Err(Error::Parse("weight blob truncated".into()));
    }
    let (head, rest) = blob.split_at(n);
    *blob = rest;
    Ok(head)
}

fn take_f64(blob: &mut &[u8], count: usize) -> Result<Vec<f64>> {
    let bytes = take(blob, count.checked_mul(8).ok_or_else(|| Error::Parse("weight count overflow".into()))?)?;
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

fn take_i32(blob: &mut &[u8], count: usize) -> Result<Vec<i32>> {
    let bytes = take(blob, count.checked_mul(4).ok_or_else(|| Error::Parse("weight count overflow".into()))?)?;
    Ok(bytes.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
}

fn check_header(version: u32, dtype: &str, expect: &str) -> Result<()> {
    if version != CONTAINER_VERSION {
        return Err(Error::Parse(format!("unsupported container version {version}")));
    }
    if dtype != expect {
        return Err(Error::Parse(format!("expected dtype {expect}, found {dtype}")));
    }
    Ok(())
}

pub fn decode_model(bytes: &[u8]) -> Result<TrainedModel> {
    let (h, mut blob): (ModelHeader, _) = read_container(MODEL_MAGIC, bytes)?;
    check_header(h.version, &h.dtype, "f64")?;
    let mut layers = Vec::with_capacity(h.layers.len());
    for l in h.layers {
        let ff = take_f64(&mut blob, l.ff_len)?;
        let rec = l.rec_len.map(|n| take_f64(&mut blob, n)).transpose()?;
        layers.push(TrainedLayer {
            topology: l.topology,
            model: l.model,
            neuron_count: l.neuron_count,
            threshold: l.threshold,
            beta: l.beta,
            alpha: l.alpha,
            reset: l.reset,
            ff,
            rec,
        });
    }
    if !blob.is_empty() {
        return Err(Error::Parse(format!("{} trailing bytes after weight blob", blob.len())));
    }
    let m = TrainedModel {
        input_channels: h.input_channels,
        timesteps: h.timesteps,
        state_headroom_bits: h.state_headroom_bits,
        ff_queue_capacity: h.ff_queue_capacity,
        layers,
    };
    m.validate()?;
    Ok(m)
}

#[derive(Serialize, Deserialize)]
struct WeightsHeader {
    version: u32,
    dtype: String,
    network: NetworkConfig,
    scales: Vec<f64>,
}

/// Quantized weights with the full design-time configuration in the header.
pub fn encode_quantized(net: &QuantizedNetwork) -> Result<Vec<u8>> {
    net.validate()?;
    let header = WeightsHeader {
        version: CONTAINER_VERSION,
        dtype: "i32".into(),
        network: net.config.clone(),
        scales: net.scales.clone(),
    };
    let mut blob = Vec::new();
    for l in &net.layers {
        for w in l.ff.iter().chain(l.rec.iter().flatten()) {
            blob.extend_from_slice(&w.to_le_bytes());
        }
    }
    write_container(WEIGHTS_MAGIC, &header, &blob)
}

pub fn decode_quantized(bytes: &[u8]) -> Result<QuantizedNetwork> {
    let (h, mut blob): (WeightsHeader, _) = read_container(WEIGHTS_MAGIC, bytes)?;
    check_header(h.version, &h.dtype, "i32")?;
    h.network.validate()?;
    let mut layers = Vec::with_capacity(h.network.cores.len());
    for c in &h.network.cores {
        let ff = take_i32(&mut blob, c.source_count * c.neuron_count)?;
        let rec = if c.topology.is_recurrent() { Some(take_i32(&mut blob, c.rec_weight_count())?) } else { None };
        layers.push(LayerWeights { ff, rec });
    }
    if !blob.is_empty() {
        return Err(Error::Parse(format!("{} trailing bytes after weight blob", blob.len())));
    }
    let net = QuantizedNetwork { config: h.network, layers, scales: h.scales };
    net.validate()?;
    Ok(net)
}
