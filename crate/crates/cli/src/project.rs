//! Project file: network description, search bounds, objective weights and
//! data paths. Paths are resolved against the project file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spikecore::cost::{CostWeights, Normalization, DEFAULT_BRAM_PRIMITIVE_BITS};
use spikecore::dse::{KnobRanges, SearchParams};
use spikecore::fxp::ResetPolicy;
use spikecore::model::{TrainedLayer, TrainedModel, DEFAULT_STATE_HEADROOM_BITS};
use spikecore::neuron::NeuronModelKind;
use spikecore::system::Topology;

use crate::error::{CliError, CliResult};

pub const PROJECT_KIND: &str = "project";
pub const PROJECT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerDescription {
    pub topology: Topology,
    pub model: NeuronModelKind,
    pub neurons: usize,
    pub reset: ResetPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDescription {
    pub input_channels: usize,
    pub timesteps: usize,
    pub layers: Vec<LayerDescription>,
    #[serde(default = "default_headroom")]
    pub state_headroom_bits: u8,
}

fn default_headroom() -> u8 {
    DEFAULT_STATE_HEADROOM_BITS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderMode {
    #[default]
    Rate,
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSettings {
    #[serde(default)]
    pub mode: EncoderMode,
    /// Integer box-filter factor applied to image inputs.
    #[serde(default)]
    pub downscale: Option<u32>,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        Self { mode: EncoderMode::Rate, downscale: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub kind: String,
    pub schema_version: u32,
    pub network: NetworkDescription,
    pub ranges: KnobRanges,
    #[serde(default)]
    pub weights: CostWeights,
    #[serde(default)]
    pub search: SearchParams,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Calibration table file; the non-physical placeholder when absent.
    #[serde(default)]
    pub calibration: Option<String>,
    #[serde(default = "default_primitive")]
    pub bram_primitive_bits: usize,
    /// Device capacities; candidate-max normalization when absent.
    #[serde(default)]
    pub device: Option<Normalization>,
    #[serde(default)]
    pub encoder: EncoderSettings,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub dataset: Option<String>,
}

fn default_primitive() -> usize {
    DEFAULT_BRAM_PRIMITIVE_BITS
}

/// A parsed project plus the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct Project {
    pub config: ProjectConfig,
    pub base: PathBuf,
}

impl Project {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = crate::io::read_text(path)?;
        let config: ProjectConfig =
            serde_json::from_str(&text).map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
        let p = Self { config, base: path.parent().map(Path::to_path_buf).unwrap_or_default() };
        p.validate().map_err(|e| e.context(path))?;
        Ok(p)
    }

    pub fn validate(&self) -> CliResult<()> {
        let c = &self.config;
        if c.kind != PROJECT_KIND {
            return Err(CliError::parse(format!("expected kind \"{PROJECT_KIND}\", found \"{}\"", c.kind)));
        }
        if c.schema_version != PROJECT_SCHEMA_VERSION {
            return Err(CliError::parse(format!("unsupported project schema {}", c.schema_version)));
        }
        c.weights.validate()?;
        c.search.validate()?;
        if let Some(d) = &c.device {
            d.validate()?;
        }
        if c.bram_primitive_bits == 0 {
            return Err(CliError::config("bram_primitive_bits must be positive"));
        }
        if c.encoder.downscale == Some(0) {
            return Err(CliError::config("encoder downscale factor must be at least 1"));
        }
        let recurrent = c.network.layers.iter().any(|l| l.topology.is_recurrent());
        let first = spikecore::dse::enumerate_candidates(&c.ranges, recurrent)?[0];
        // structural constraints, checked on a zero-weight skeleton
        self.skeleton().quantize(first.precision())?;
        Ok(())
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.base.join(rel)
    }

    /// Effective seed: command line, then project, then search parameters.
    pub fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.config.seed).unwrap_or(self.config.search.seed)
    }

    /// A model with the described structure and zero weights; enough for
    /// geometry and resource estimates.
    pub fn skeleton(&self) -> TrainedModel {
        let n = &self.config.network;
        let mut src = n.input_channels;
        let layers = n
            .layers
            .iter()
            .map(|l| {
                let rec = match l.topology {
                    Topology::Ff => None,
                    Topology::AtaF => Some(vec![0.0; l.neurons]),
                    Topology::AtaT => Some(vec![0.0; l.neurons * l.neurons]),
                };
                let layer = TrainedLayer {
                    topology: l.topology,
                    model: l.model,
                    neuron_count: l.neurons,
                    threshold: 1.0,
                    beta: if l.model == NeuronModelKind::If { 1.0 } else { 0.5 },
                    alpha: (l.model == NeuronModelKind::Synaptic).then_some(0.5),
                    reset: l.reset,
                    ff: vec![0.0; src * l.neurons],
                    rec,
                };
                src = l.neurons;
                layer
            })
            .collect();
        TrainedModel {
            input_channels: n.input_channels,
            timesteps: n.timesteps,
            state_headroom_bits: n.state_headroom_bits,
            ff_queue_capacity: spikecore::aer::DEFAULT_QUEUE_CAPACITY,
            layers,
        }
    }

    /// Checks that a trained model has the structure this project describes.
    pub fn check_model(&self, m: &TrainedModel) -> CliResult<()> {
        let n = &self.config.network;
        let mismatch = |what: String| Err(CliError::config(format!("model does not match project network: {what}")));
        if m.input_channels != n.input_channels {
            return mismatch(format!("{} input channels vs {}", m.input_channels, n.input_channels));
        }
        if m.timesteps != n.timesteps {
            return mismatch(format!("{} timesteps vs {}", m.timesteps, n.timesteps));
        }
        if m.state_headroom_bits != n.state_headroom_bits {
            return mismatch(format!("state headroom {} vs {}", m.state_headroom_bits, n.state_headroom_bits));
        }
        if m.layers.len() != n.layers.len() {
            return mismatch(format!("{} layers vs {}", m.layers.len(), n.layers.len()));
        }
        for (i, (ml, pl)) in m.layers.iter().zip(&n.layers).enumerate() {
            if ml.topology != pl.topology || ml.model != pl.model || ml.neuron_count != pl.neurons || ml.reset != pl.reset
            {
                return mismatch(format!("layer {i}"));
            }
        }
        Ok(())
    }
}
