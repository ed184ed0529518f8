//! Configurable neuron unit: memory geometry, byte-addressed state and
//! synaptic memories, and the fixed-point IF / LIF / Synaptic update rules.

use serde::{Deserialize, Serialize};

use crate::cg::{apply_decay, DecayRate, SelectionUnits};
use crate::error::{Error, Result};
use crate::fxp::{sat_add, sat_sub, QFormat, QWord, ResetPolicy};

/// Per-core neuron limit.
pub const MAX_NEURONS: usize = 256;

/// Weights packed into one synaptic memory row.
pub const WEIGHTS_PER_ROW: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NeuronModelKind {
    #[serde(rename = "IF")]
    If,
    #[serde(rename = "LIF")]
    Lif,
    #[serde(rename = "Synaptic")]
    Synaptic,
}

impl NeuronModelKind {
    pub fn has_current(self) -> bool {
        self == NeuronModelKind::Synaptic
    }

    pub fn code(self) -> u64 {
        match self {
            NeuronModelKind::If => 0,
            NeuronModelKind::Lif => 1,
            NeuronModelKind::Synaptic => 2,
        }
    }

    pub fn from_code(code: u64) -> Result<Self> {
        match code {
            0 => Ok(NeuronModelKind::If),
            1 => Ok(NeuronModelKind::Lif),
            2 => Ok(NeuronModelKind::Synaptic),
            other => Err(Error::Config(format!("unknown neuron model code {other}"))),
        }
    }
}

/// Dynamic state of one neuron.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeuronState {
    pub membrane: QWord,
    pub syn_current: Option<QWord>,
    pub fired: bool,
}

impl NeuronState {
    pub fn zero(potential: QFormat, current: Option<QFormat>) -> Self {
        Self {
            membrane: QWord::zero(potential),
            syn_current: current.map(QWord::zero),
            fired: false,
        }
    }
}

/// Runtime parameters consumed by the leak / spike-generation phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeakConfig {
    pub threshold: QWord,
    pub beta: DecayRate,
    pub alpha: Option<DecayRate>,
    pub reset: ResetPolicy,
    pub units: SelectionUnits,
}

fn next_pow2(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

fn log2(n: usize) -> u32 {
    n.trailing_zeros()
}

fn check_count(n: usize, what: &str) -> Result<()> {
    if n == 0 {
        return Err(Error::Config(format!("{what} must be at least 1")));
    }
    if n > MAX_NEURONS {
        return Err(Error::Capacity(n));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynapticMemoryGeometry {
    pub blocks: usize,
    pub rows_per_block: usize,
    pub row_bits: usize,
    pub block_addr_bits: u32,
    pub row_addr_bits: u32,
}

impl SynapticMemoryGeometry {
    pub fn rows(&self) -> usize {
        self.blocks * self.rows_per_block
    }

    pub fn row_bytes(&self) -> usize {
        self.row_bits / 8
    }

    pub fn total_bits(&self) -> usize {
        self.rows() * self.row_bits
    }

    pub fn weight_bits(&self) -> usize {
        self.row_bits / WEIGHTS_PER_ROW
    }
}

/// Sizes a synaptic memory: one block per source neuron, eight destination
/// weights per row, both counts rounded up to powers of two.
pub fn size_synaptic_memory(
    source_neurons: usize,
    dest_neurons: usize,
    weight_bits: u32,
) -> Result<SynapticMemoryGeometry> {
    check_count(source_neurons, "source neuron count")?;
    check_count(dest_neurons, "destination neuron count")?;
    QFormat::new(weight_bits)?;
    let blocks = next_pow2(source_neurons);
    let rows_per_block = next_pow2(dest_neurons.div_ceil(WEIGHTS_PER_ROW));
    Ok(SynapticMemoryGeometry {
        blocks,
        rows_per_block,
        row_bits: WEIGHTS_PER_ROW * weight_bits as usize,
        block_addr_bits: log2(blocks),
        row_addr_bits: log2(rows_per_block),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateMemoryGeometry {
    pub row_bits: usize,
    pub rows: usize,
}

impl StateMemoryGeometry {
    pub fn row_bytes(&self) -> usize {
        self.row_bits / 8
    }

    pub fn total_bits(&self) -> usize {
        self.rows * self.row_bits
    }
}

/// Sizes the neuron state memory: one byte-aligned row per neuron.
pub fn size_state_memory(
    neuron_count: usize,
    potential_bits: u32,
    current_bits: Option<u32>,
) -> Result<StateMemoryGeometry> {
    check_count(neuron_count, "neuron count")?;
    if potential_bits == 0 {
        return Err(Error::Config("membrane potential width must be non-zero".into()));
    }
    let used = potential_bits as usize + current_bits.unwrap_or(0) as usize;
    Ok(StateMemoryGeometry { row_bits: used.div_ceil(8) * 8, rows: next_pow2(neuron_count) })
}

fn read_bits(bytes: &[u8], offset: usize, len: usize) -> u64 {
    let mut out = 0u64;
    for i in 0..len {
        let bit = offset + i;
        if bytes[bit / 8] >> (bit % 8) & 1 == 1 {
            out |= 1 << i;
        }
    }
    out
}

fn write_bits(bytes: &mut [u8], offset: usize, len: usize, value: u64) {
    for i in 0..len {
        let bit = offset + i;
        let mask = 1u8 << (bit % 8);
        if value >> i & 1 == 1 {
            bytes[bit / 8] |= mask;
        } else {
            bytes[bit / 8] &= !mask;
        }
    }
}

/// Byte-addressable synaptic memory. Weight `(src, dst)` lives in row
/// `src * rows_per_block + dst / 8`, slot `dst % 8`, slot 0 in the low bits.
#[derive(Debug, Clone, PartialEq)]
pub struct SynapticMemory {
    geometry: SynapticMemoryGeometry,
    format: QFormat,
    bytes: Vec<u8>,
}

impl SynapticMemory {
    pub fn new(geometry: SynapticMemoryGeometry) -> Result<Self> {
        let format = QFormat::new(geometry.weight_bits() as u32)?;
        Ok(Self { geometry, format, bytes: vec![0; geometry.total_bits() / 8] })
    }

    pub fn geometry(&self) -> &SynapticMemoryGeometry {
        &self.geometry
    }

    pub fn format(&self) -> QFormat {
        self.format
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    fn locate(&self, src: usize, dst: usize) -> Result<usize> {
        let g = &self.geometry;
        let row = dst / WEIGHTS_PER_ROW;
        if src >= g.blocks || row >= g.rows_per_block {
            return Err(Error::Address(format!("weight ({src}, {dst}) outside synaptic memory")));
        }
        let row_index = src * g.rows_per_block + row;
        Ok(row_index * g.row_bits + (dst % WEIGHTS_PER_ROW) * self.format.bits() as usize)
    }

    pub fn weight(&self, src: usize, dst: usize) -> Result<QWord> {
        let bit = self.locate(src, dst)?;
        let raw = read_bits(&self.bytes, bit, self.format.bits() as usize);
        QWord::new(self.format.from_raw(raw) as i64, self.format)
    }

    pub fn set_weight(&mut self, src: usize, dst: usize, w: QWord) -> Result<()> {
        if w.format() != self.format {
            return Err(Error::FormatMismatch { left: w.format().bits(), right: self.format.bits() });
        }
        let bit = self.locate(src, dst)?;
        let bits = self.format.bits() as usize;
        write_bits(&mut self.bytes, bit, bits, self.format.to_raw(w.value()));
        Ok(())
    }

    fn byte_index(&self, row: usize, offset: usize) -> Result<usize> {
        if row >= self.geometry.rows() || offset >= self.geometry.row_bytes() {
            return Err(Error::Address(format!(
                "synaptic byte (row {row}, offset {offset}) outside {} rows x {} bytes",
                self.geometry.rows(),
                self.geometry.row_bytes()
            )));
        }
        Ok(row * self.geometry.row_bytes() + offset)
    }

    pub fn read_byte(&self, row: usize, offset: usize) -> Result<u8> {
        Ok(self.bytes[self.byte_index(row, offset)?])
    }

    pub fn write_byte(&mut self, row: usize, offset: usize, value: u8) -> Result<()> {
        let i = self.byte_index(row, offset)?;
        self.bytes[i] = value;
        Ok(())
    }
}

/// Byte-addressable neuron state memory. Each row holds the potential in
/// the low bits followed by the synaptic current, if the model has one.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMemory {
    geometry: StateMemoryGeometry,
    potential: QFormat,
    current: Option<QFormat>,
    bytes: Vec<u8>,
}

impl StateMemory {
    pub fn new(neuron_count: usize, potential: QFormat, current: Option<QFormat>) -> Result<Self> {
        let geometry = size_state_memory(
            neuron_count,
            potential.bits() as u32,
            current.map(|c| c.bits() as u32),
        )?;
        Ok(Self { geometry, potential, current, bytes: vec![0; geometry.total_bits() / 8] })
    }

    pub fn geometry(&self) -> &StateMemoryGeometry {
        &self.geometry
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn load(&self, neuron: usize) -> NeuronState {
        let base = neuron * self.geometry.row_bits;
        let pb = self.potential.bits() as usize;
        let membrane = QWord::saturating(
            self.potential.from_raw(read_bits(&self.bytes, base, pb)) as i64,
            self.potential,
        );
        let syn_current = self.current.map(|cf| {
            let raw = read_bits(&self.bytes, base + pb, cf.bits() as usize);
            QWord::saturating(cf.from_raw(raw) as i64, cf)
        });
        NeuronState { membrane, syn_current, fired: false }
    }

    pub fn store(&mut self, neuron: usize, state: &NeuronState) {
        let base = neuron * self.geometry.row_bits;
        let pb = self.potential.bits() as usize;
        write_bits(&mut self.bytes, base, pb, self.potential.to_raw(state.membrane.value()));
        if let (Some(cf), Some(i)) = (self.current, state.syn_current) {
            write_bits(&mut self.bytes, base + pb, cf.bits() as usize, cf.to_raw(i.value()));
        }
    }

    fn byte_index(&self, row: usize, offset: usize) -> Result<usize> {
        if row >= self.geometry.rows || offset >= self.geometry.row_bytes() {
            return Err(Error::Address(format!(
                "state byte (row {row}, offset {offset}) outside {} rows x {} bytes",
                self.geometry.rows,
                self.geometry.row_bytes()
            )));
        }
        Ok(row * self.geometry.row_bytes() + offset)
    }

    pub fn read_byte(&self, row: usize, offset: usize) -> Result<u8> {
        Ok(self.bytes[self.byte_index(row, offset)?])
    }

    pub fn write_byte(&mut self, row: usize, offset: usize, value: u8) -> Result<()> {
        let i = self.byte_index(row, offset)?;
        self.bytes[i] = value;
        Ok(())
    }
}

/// Adds one synaptic contribution. IF/LIF accumulate into the membrane,
/// Synaptic into the synaptic current.
pub fn integrate(state: NeuronState, weight: QWord) -> Result<NeuronState> {
    let mut next = state;
    match state.syn_current {
        Some(i) => next.syn_current = Some(sat_add(i, weight.widen(i.format())?)?),
        None => next.membrane = sat_add(state.membrane, weight.widen(state.membrane.format())?)?,
    }
    Ok(next)
}

/// Leak / spike-generation for one neuron after all of the step's
/// integrations.
///
/// Synaptic: U <- beta*U + I_syn, then I_syn <- alpha*I_syn, then threshold.
/// IF / LIF: threshold first; a neuron that does not fire decays by beta.
pub fn leak_and_fire(state: NeuronState, cfg: &LeakConfig) -> Result<(NeuronState, bool)> {
    let mut next = state;
    if let Some(i) = state.syn_current {
        let alpha = cfg
            .alpha
            .ok_or_else(|| Error::Config("synaptic model requires an alpha decay rate".into()))?;
        let decayed = apply_decay(state.membrane, cfg.beta, cfg.units)?;
        next.membrane = sat_add(decayed, i.widen(decayed.format())?)?;
        next.syn_current = Some(apply_decay(i, alpha, cfg.units)?);
    }
    let threshold = cfg.threshold.widen(next.membrane.format())?;
    let fired = next.membrane.value() >= threshold.value();
    if fired {
        next.membrane = match cfg.reset {
            ResetPolicy::ResetToZero => QWord::zero(next.membrane.format()),
            ResetPolicy::ResetBySubtract => sat_sub(next.membrane, threshold)?,
        };
    } else if state.syn_current.is_none() {
        next.membrane = apply_decay(next.membrane, cfg.beta, cfg.units)?;
    }
    next.fired = fired;
    Ok((next, fired))
}

/// End-of-input reset: all state fields become zero.
pub fn lazy_reset(state: NeuronState) -> NeuronState {
    NeuronState::zero(state.membrane.format(), state.syn_current.map(|i| i.format()))
}
