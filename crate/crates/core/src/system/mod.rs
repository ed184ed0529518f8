//! Multi-core pipeline: per-core controller, the host driver, and a dense
//! reference simulator used as an equivalence oracle.

mod core;
mod pipeline;
mod reference;

use serde::{Deserialize, Serialize};

use crate::aer::DEFAULT_QUEUE_CAPACITY;
use crate::cg::{DecayRate, SelectionUnits};
use crate::error::{Error, Result};
use crate::fxp::{QFormat, ResetPolicy};
use crate::neuron::{
    size_state_memory, size_synaptic_memory, NeuronModelKind, StateMemoryGeometry,
    SynapticMemoryGeometry, MAX_NEURONS,
};

pub use self::core::{Core, NeuronValues};
pub use pipeline::{
    run_inference, ExecutionMode, InferenceOptions, InferenceResult, Network, TraceRecord,
    TraceSource,
};
pub use reference::dense_reference;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Topology {
    #[serde(rename = "FF")]
    Ff,
    /// Recurrent, self-connections only.
    #[serde(rename = "ATA_F")]
    AtaF,
    /// Recurrent, all-to-all within the layer.
    #[serde(rename = "ATA_T")]
    AtaT,
}

impl Topology {
    pub fn is_recurrent(self) -> bool {
        self != Topology::Ff
    }

    pub fn name(self) -> &'static str {
        match self {
            Topology::Ff => "FF",
            Topology::AtaF => "ATA_F",
            Topology::AtaT => "ATA_T",
        }
    }
}

/// Design-time and runtime parameters of one core (one network layer).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreConfig {
    pub core_id: u8,
    pub topology: Topology,
    pub model: NeuronModelKind,
    pub neuron_count: usize,
    pub source_count: usize,
    pub weight_bits: u8,
    /// Recurrent weight width; present iff the topology is recurrent.
    pub rec_weight_bits: Option<u8>,
    pub potential_bits: u8,
    /// Synaptic current width; present iff the model is Synaptic.
    pub current_bits: Option<u8>,
    pub beta: DecayRate,
    pub alpha: Option<DecayRate>,
    pub selection_units: SelectionUnits,
    /// Threshold on the membrane-potential grid.
    pub threshold: i32,
    pub reset: ResetPolicy,
    #[serde(default = "default_queue_capacity")]
    pub ff_queue_capacity: usize,
}

fn default_queue_capacity() -> usize {
    DEFAULT_QUEUE_CAPACITY
}

impl CoreConfig {
    pub fn weight_format(&self) -> QFormat {
        QFormat::new(self.weight_bits as u32).expect("validated")
    }

    pub fn rec_format(&self) -> Option<QFormat> {
        self.rec_weight_bits.map(|b| QFormat::new(b as u32).expect("validated"))
    }

    pub fn potential_format(&self) -> QFormat {
        QFormat::new(self.potential_bits as u32).expect("validated")
    }

    pub fn current_format(&self) -> Option<QFormat> {
        self.current_bits.map(|b| QFormat::new(b as u32).expect("validated"))
    }

    pub fn ff_geometry(&self) -> Result<SynapticMemoryGeometry> {
        size_synaptic_memory(self.source_count, self.neuron_count, self.weight_bits as u32)
    }

    /// Recurrent memory: a full n x n array for ATA_T, one self-weight per
    /// neuron (a single block) for ATA_F, none for FF.
    pub fn rec_geometry(&self) -> Result<Option<SynapticMemoryGeometry>> {
        let bits = match self.rec_weight_bits {
            Some(b) => b as u32,
            None => return Ok(None),
        };
        match self.topology {
            Topology::Ff => Ok(None),
            Topology::AtaT => size_synaptic_memory(self.neuron_count, self.neuron_count, bits).map(Some),
            Topology::AtaF => size_synaptic_memory(1, self.neuron_count, bits).map(Some),
        }
    }

    pub fn state_geometry(&self) -> Result<StateMemoryGeometry> {
        size_state_memory(
            self.neuron_count,
            self.potential_bits as u32,
            self.current_bits.map(u32::from),
        )
    }

    /// Number of recurrent weights stored for this layer.
    pub fn rec_weight_count(&self) -> usize {
        match self.topology {
            Topology::Ff => 0,
            Topology::AtaF => self.neuron_count,
            Topology::AtaT => self.neuron_count * self.neuron_count,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let id = self.core_id;
        let bad = |msg: String| Err(Error::Config(format!("core {id}: {msg}")));
        for n in [self.neuron_count, self.source_count] {
            if n > MAX_NEURONS {
                return Err(Error::Capacity(n));
            }
            if n == 0 {
                return bad("neuron and source counts must be at least 1".into());
            }
        }
        let wf = QFormat::new(self.weight_bits as u32)?;
        let pf = QFormat::new(self.potential_bits as u32)?;
        if pf.bits() < wf.bits() {
            return bad(format!("potential width {} narrower than weight width {}", pf.bits(), wf.bits()));
        }
        match (self.topology.is_recurrent(), self.rec_weight_bits) {
            (true, None) => return bad("recurrent topology needs rec_weight_bits".into()),
            (false, Some(_)) => return bad("rec_weight_bits given for a feedforward layer".into()),
            (true, Some(b)) => {
                let rf = QFormat::new(b as u32)?;
                if pf.bits() < rf.bits() {
                    return bad(format!("potential width {} narrower than recurrent width {b}", pf.bits()));
                }
            }
            (false, None) => {}
        }
        match (self.model, self.current_bits, self.alpha) {
            (NeuronModelKind::Synaptic, Some(c), Some(_)) => {
                let cf = QFormat::new(c as u32)?;
                let widest = wf.bits().max(self.rec_weight_bits.unwrap_or(0));
                if cf.bits() < widest || cf.bits() > pf.bits() {
                    return bad(format!(
                        "current width {c} must lie between weight width {widest} and potential width {}",
                        pf.bits()
                    ));
                }
            }
            (NeuronModelKind::Synaptic, _, _) => return bad("synaptic model needs current_bits and alpha".into()),
            (_, None, None) => {}
            _ => return bad("current_bits / alpha only apply to the synaptic model".into()),
        }
        if self.model == NeuronModelKind::If && !self.beta.is_bypass() {
            return bad("IF model requires the bypass decay rate".into());
        }
        for rate in std::iter::once(self.beta).chain(self.alpha) {
            if !self.selection_units.covers(rate) {
                return bad(format!(
                    "decay rate {:#x} not realizable with selection units {:#06b}",
                    rate.raw(),
                    self.selection_units.mask()
                ));
            }
        }
        if !pf.contains(self.threshold as i64) {
            return bad(format!("threshold {} outside the {}-bit potential range", self.threshold, pf.bits()));
        }
        if self.ff_queue_capacity == 0 {
            return bad("feedforward queue capacity must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_channels: usize,
    pub timesteps: usize,
    pub cores: Vec<CoreConfig>,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cores.is_empty() {
            return Err(Error::Config("network has no layers".into()));
        }
        if self.timesteps == 0 {
            return Err(Error::Config("timesteps per sample must be at least 1".into()));
        }
        if self.input_channels > MAX_NEURONS {
            return Err(Error::Capacity(self.input_channels));
        }
        let mut prev = self.input_channels;
        for (i, c) in self.cores.iter().enumerate() {
            c.validate()?;
            if c.core_id as usize != i {
                return Err(Error::Config(format!("core at position {i} has id {}", c.core_id)));
            }
            if c.source_count != prev {
                return Err(Error::Config(format!(
                    "core {i}: source count {} does not match previous layer size {prev}",
                    c.source_count
                )));
            }
            prev = c.neuron_count;
        }
        Ok(())
    }

    pub fn output_count(&self) -> usize {
        self.cores.last().map_or(0, |c| c.neuron_count)
    }
}

/// Integer weights of one layer. `ff[src * neuron_count + dst]`; `rec` is
/// `n * n` in the same layout for ATA_T, or `n` self-weights for ATA_F.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub ff: Vec<i32>,
    pub rec: Option<Vec<i32>>,
}

/// A network with every parameter on the integer grid, ready to load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedNetwork {
    pub config: NetworkConfig,
    pub layers: Vec<LayerWeights>,
    /// Float value of one weight LSB per layer; informational.
    pub scales: Vec<f64>,
}

impl QuantizedNetwork {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.layers.len() != self.config.cores.len() {
            return Err(Error::Config(format!(
                "{} weight layers for {} cores",
                self.layers.len(),
                self.config.cores.len()
            )));
        }
        for (c, l) in self.config.cores.iter().zip(&self.layers) {
            let expect = c.source_count * c.neuron_count;
            if l.ff.len() != expect {
                return Err(Error::Config(format!(
                    "core {}: {} feedforward weights, expected {expect}",
                    c.core_id,
                    l.ff.len()
                )));
            }
            let wf = c.weight_format();
            if let Some(w) = l.ff.iter().find(|&&w| !wf.contains(w as i64)) {
                return Err(Error::Config(format!("core {}: weight {w} outside {}-bit range", c.core_id, wf.bits())));
            }
            match (&l.rec, c.rec_format()) {
                (None, None) => {}
                (Some(r), Some(rf)) => {
                    if r.len() != c.rec_weight_count() {
                        return Err(Error::Config(format!(
                            "core {}: {} recurrent weights, expected {}",
                            c.core_id,
                            r.len(),
                            c.rec_weight_count()
                        )));
                    }
                    if let Some(w) = r.iter().find(|&&w| !rf.contains(w as i64)) {
                        return Err(Error::Config(format!(
                            "core {}: recurrent weight {w} outside {}-bit range",
                            c.core_id,
                            rf.bits()
                        )));
                    }
                }
                _ => {
                    return Err(Error::Config(format!(
                        "core {}: recurrent weights present iff topology is recurrent",
                        c.core_id
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Event-encoded input: one address list per time step, plus a label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSample {
    pub steps: Vec<Vec<u8>>,
    pub label: u16,
}

impl EventSample {
    pub fn validate(&self, input_channels: usize, timesteps: usize) -> Result<()> {
        if self.steps.len() > timesteps {
            return Err(Error::Config(format!(
                "sample has {} steps, network runs {timesteps}",
                self.steps.len()
            )));
        }
        for (t, step) in self.steps.iter().enumerate() {
            if let Some(a) = step.iter().find(|&&a| a as usize >= input_channels) {
                return Err(Error::Address(format!(
                    "input address {a} at step {t} exceeds {input_channels} channels"
                )));
            }
        }
        Ok(())
    }

    pub fn spikes_at(&self, t: usize) -> &[u8] {
        self.steps.get(t).map_or(&[], |s| s.as_slice())
    }
}


#[cfg(test)]
mod tests {
    use super::testnet::*;
    use super::*;

    #[test]
    fn core_validation() {
        let base = lif_core(0, 4, 4, 10, DecayRate::BYPASS, ResetPolicy::ResetToZero);
        assert!(base.validate().is_ok());

        let mut c = base.clone();
        c.neuron_count = 300;
        assert!(matches!(c.validate(), Err(Error::Capacity(300))));

        let mut c = base.clone();
        c.topology = Topology::AtaT;
        assert!(c.validate().is_err());
        c.rec_weight_bits = Some(6);
        assert!(c.validate().is_ok());

        let mut c = base.clone();
        c.model = NeuronModelKind::If;
        c.beta = DecayRate::from_k(100);
        assert!(c.validate().is_err());

        let mut c = base.clone();
        c.model = NeuronModelKind::Synaptic;
        assert!(c.validate().is_err());
        c.current_bits = Some(12);
        c.alpha = Some(DecayRate::from_k(200));
        assert!(c.validate().is_ok());

        let mut c = base.clone();
        c.threshold = 1 << 20;
        assert!(c.validate().is_err());

        let mut c = base;
        c.beta = DecayRate::from_k(1);
        c.selection_units = SelectionUnits::new(0b0111).unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn recurrent_storage_is_gated_by_topology() {
        let mut c = lif_core(0, 4, 10, 10, DecayRate::BYPASS, ResetPolicy::ResetToZero);
        assert_eq!(c.rec_geometry().unwrap(), None);
        c.topology = Topology::AtaF;
        c.rec_weight_bits = Some(4);
        let g = c.rec_geometry().unwrap().unwrap();
        assert_eq!((g.blocks, g.rows_per_block), (1, 2));
        c.topology = Topology::AtaT;
        let g = c.rec_geometry().unwrap().unwrap();
        assert_eq!((g.blocks, g.rows_per_block), (16, 2));
    }

    #[test]
    fn network_chaining_checked() {
        let mut net = NetworkConfig {
            input_channels: 4,
            timesteps: 3,
            cores: vec![
                lif_core(0, 4, 5, 10, DecayRate::BYPASS, ResetPolicy::ResetToZero),
                lif_core(1, 5, 2, 10, DecayRate::BYPASS, ResetPolicy::ResetToZero),
            ],
        };
        assert!(net.validate().is_ok());
        net.cores[1].source_count = 4;
        assert!(net.validate().is_err());
    }

    #[test]
    fn sample_validation() {
        let s = EventSample { steps: vec![vec![0, 3], vec![], vec![4]], label: 0 };
        assert!(s.validate(5, 3).is_ok());
        assert!(s.validate(4, 3).is_err());
        assert!(s.validate(5, 2).is_err());
        assert_eq!(s.spikes_at(7), &[] as &[u8]);
    }
}
