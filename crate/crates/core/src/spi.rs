//! SPI slave codec: the 23-bit address word of the 46-cycle frame, the
//! configuration register file, and model loading through frames only.
//!
//! Address word layout:
//!
//! ```text
//!  22   21   20..19   18 ............................ 0
//! mode  rw   target   payload
//!                     state:    [18:8] byte offset, [7:0] neuron row
//!                     synaptic: [18:13] byte offset, [12:0] row
//!                     config:   [18:15] register index, [14:0] value low bits
//! ```
//!
//! A configuration write takes the register value from the payload's low
//! 15 bits plus the 23-bit data word shifted up by 15, so registers up to
//! 38 bits wide are written in one frame.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fxp::QWord;
use crate::neuron::SynapticMemory;
use crate::system::{Core, QuantizedNetwork, Topology};

pub const ADDRESS_WORD_BITS: u32 = 23;
pub const FRAME_CYCLES: u32 = 46;
const PAYLOAD_MASK: u32 = (1 << 19) - 1;
const DATA_MASK: u32 = (1 << 23) - 1;
const CONFIG_VALUE_BITS: u32 = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpiMode {
    ConfigWrite,
    MemoryAccess,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpiRw {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MemoryTarget {
    NeuronState,
    FeedforwardSyn,
    RecurrentSyn,
}

impl MemoryTarget {
    fn code(self) -> u32 {
        match self {
            MemoryTarget::NeuronState => 0b00,
            MemoryTarget::FeedforwardSyn => 0b01,
            MemoryTarget::RecurrentSyn => 0b10,
        }
    }

    fn from_code(code: u32) -> Result<Self> {
        match code {
            0b00 => Ok(MemoryTarget::NeuronState),
            0b01 => Ok(MemoryTarget::FeedforwardSyn),
            0b10 => Ok(MemoryTarget::RecurrentSyn),
            other => Err(Error::Protocol(format!("invalid SPI target {other:#04b}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpiCommand {
    pub mode: SpiMode,
    pub rw: SpiRw,
    pub target: MemoryTarget,
    pub payload: u32,
}

impl SpiCommand {
    pub fn state(rw: SpiRw, row: usize, byte: usize) -> Result<Self> {
        if row > 0xff || byte > 0x7ff {
            return Err(Error::Address(format!("state address row {row} byte {byte} exceeds field width")));
        }
        Ok(Self {
            mode: SpiMode::MemoryAccess,
            rw,
            target: MemoryTarget::NeuronState,
            payload: ((byte as u32) << 8) | row as u32,
        })
    }

    pub fn synaptic(target: MemoryTarget, rw: SpiRw, row: usize, byte: usize) -> Result<Self> {
        if target == MemoryTarget::NeuronState {
            return Err(Error::Protocol("synaptic command needs a synaptic target".into()));
        }
        if row > 0x1fff || byte > 0x3f {
            return Err(Error::Address(format!("synaptic address row {row} byte {byte} exceeds field width")));
        }
        Ok(Self { mode: SpiMode::MemoryAccess, rw, target, payload: ((byte as u32) << 13) | row as u32 })
    }

    /// Config write; `value_low` fills payload bits 14..0.
    pub fn config(register: ConfigRegister, value_low: u32) -> Self {
        Self {
            mode: SpiMode::ConfigWrite,
            rw: SpiRw::Write,
            target: MemoryTarget::NeuronState,
            payload: ((register.index() as u32) << CONFIG_VALUE_BITS) | (value_low & 0x7fff),
        }
    }

    /// (row, byte offset) for memory commands.
    pub fn memory_address(&self) -> (usize, usize) {
        match self.target {
            MemoryTarget::NeuronState => ((self.payload & 0xff) as usize, (self.payload >> 8) as usize),
            _ => ((self.payload & 0x1fff) as usize, (self.payload >> 13) as usize),
        }
    }
}

pub fn encode_address_word(cmd: &SpiCommand) -> Result<u32> {
    if cmd.payload > PAYLOAD_MASK {
        return Err(Error::OutOfRange(format!("SPI payload {:#x} exceeds 19 bits", cmd.payload)));
    }
    Ok(match cmd.mode {
        SpiMode::ConfigWrite => cmd.payload,
        SpiMode::MemoryAccess => {
            let rw = matches!(cmd.rw, SpiRw::Write) as u32;
            (1 << 22) | (rw << 21) | (cmd.target.code() << 19) | cmd.payload
        }
    })
}

pub fn decode_address_word(word: u32) -> Result<SpiCommand> {
    if word > DATA_MASK {
        return Err(Error::Protocol(format!("SPI address word {word:#x} exceeds 23 bits")));
    }
    let payload = word & PAYLOAD_MASK;
    if word >> 22 == 0 {
        return Ok(SpiCommand {
            mode: SpiMode::ConfigWrite,
            rw: SpiRw::Write,
            target: MemoryTarget::NeuronState,
            payload,
        });
    }
    let rw = if word >> 21 & 1 == 1 { SpiRw::Write } else { SpiRw::Read };
    let target = MemoryTarget::from_code(word >> 19 & 0b11)?;
    Ok(SpiCommand { mode: SpiMode::MemoryAccess, rw, target, payload })
}

/// The twelve write-only runtime registers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConfigRegister {
    CoreSelect,
    NeuronModel,
    ActiveNeuronCount,
    Threshold,
    DecayBeta,
    DecayAlpha,
    ResetPolicy,
    TimestepCount,
    RecurrentMode,
    SpiState,
    CtrlCoordA,
    CtrlCoordB,
}

impl ConfigRegister {
    pub const ALL: [ConfigRegister; 12] = [
        ConfigRegister::CoreSelect,
        ConfigRegister::NeuronModel,
        ConfigRegister::ActiveNeuronCount,
        ConfigRegister::Threshold,
        ConfigRegister::DecayBeta,
        ConfigRegister::DecayAlpha,
        ConfigRegister::ResetPolicy,
        ConfigRegister::TimestepCount,
        ConfigRegister::RecurrentMode,
        ConfigRegister::SpiState,
        ConfigRegister::CtrlCoordA,
        ConfigRegister::CtrlCoordB,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::Protocol(format!("no configuration register at index {i}")))
    }
}

/// `SpiState` value marking the end of the configuration phase.
pub const SPI_STATE_READY: u64 = 1;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigRegisterFile {
    values: [u64; 12],
}

impl ConfigRegisterFile {
    pub fn get(&self, r: ConfigRegister) -> u64 {
        self.values[r.index()]
    }

    pub fn set(&mut self, r: ConfigRegister, v: u64) {
        self.values[r.index()] = v;
    }
}

/// Anything that answers SPI frames: a core's register file and memories.
pub trait SpiSlave {
    fn core_id(&self) -> u8;
    fn registers(&self) -> &ConfigRegisterFile;
    fn registers_mut(&mut self) -> &mut ConfigRegisterFile;
    fn read_memory(&self, target: MemoryTarget, row: usize, byte: usize) -> Result<u8>;
    fn write_memory(&mut self, target: MemoryTarget, row: usize, byte: usize, value: u8) -> Result<()>;

    fn is_selected(&self) -> bool {
        self.registers().get(ConfigRegister::CoreSelect) == self.core_id() as u64
    }
}

/// Executes one atomic frame against one slave. Returns the MISO byte for
/// reads by the selected core.
pub fn run_frame(master_word: u32, data_word: Option<u32>, slave: &mut dyn SpiSlave) -> Result<Option<u8>> {
    let cmd = decode_address_word(master_word)?;
    if let Some(d) = data_word {
        if d > DATA_MASK {
            return Err(Error::Protocol(format!("SPI data word {d:#x} exceeds 23 bits")));
        }
    }
    match cmd.mode {
        SpiMode::ConfigWrite => {
            let register = ConfigRegister::from_index((cmd.payload >> CONFIG_VALUE_BITS) as usize)?;
            let value = (cmd.payload & 0x7fff) as u64 | (data_word.unwrap_or(0) as u64) << CONFIG_VALUE_BITS;
            if register == ConfigRegister::CoreSelect || slave.is_selected() {
                slave.registers_mut().set(register, value);
            }
            Ok(None)
        }
        SpiMode::MemoryAccess => {
            if !slave.is_selected() {
                return Ok(None);
            }
            let (row, byte) = cmd.memory_address();
            match cmd.rw {
                SpiRw::Read => slave.read_memory(cmd.target, row, byte).map(Some),
                SpiRw::Write => {
                    let data = data_word
                        .ok_or_else(|| Error::Protocol("memory write frame without data phase".into()))?;
                    slave.write_memory(cmd.target, row, byte, (data & 0xff) as u8)?;
                    Ok(None)
                }
            }
        }
    }
}

/// One logged frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameRecord {
    pub address_word: u32,
    pub data_word: Option<u32>,
    pub miso: Option<u8>,
}

impl fmt::Display for FrameRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:06x} ", self.address_word)?;
        match self.data_word {
            Some(d) => write!(f, "{d:06x} ")?,
            None => write!(f, "------ ")?,
        }
        match self.miso {
            Some(m) => write!(f, "{m:02x}"),
            None => write!(f, "--"),
        }
    }
}

/// Single master driving every slave on a shared bus.
#[derive(Debug, Default)]
pub struct SpiBus {
    log: Option<Vec<FrameRecord>>,
    frames: u64,
}

impl SpiBus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_log() -> Self {
        Self { log: Some(Vec::new()), frames: 0 }
    }

    pub fn frames(&self) -> u64 {
        self.frames
    }

    pub fn log(&self) -> Option<&[FrameRecord]> {
        self.log.as_deref()
    }

    /// Broadcasts a frame; the selected core (if any) answers reads.
    pub fn transfer<S: SpiSlave>(&mut self, cmd: &SpiCommand, data_word: Option<u32>, slaves: &mut [S]) -> Result<Option<u8>> {
        let word = encode_address_word(cmd)?;
        let mut miso = None;
        for s in slaves.iter_mut() {
            if let Some(b) = run_frame(word, data_word, s)? {
                miso = Some(b);
            }
        }
        self.frames += 1;
        if let Some(log) = &mut self.log {
            log.push(FrameRecord { address_word: word, data_word, miso });
        }
        Ok(miso)
    }

    pub fn write_register<S: SpiSlave>(&mut self, reg: ConfigRegister, value: u64, slaves: &mut [S]) -> Result<()> {
        if value >> (CONFIG_VALUE_BITS + ADDRESS_WORD_BITS) != 0 {
            return Err(Error::OutOfRange(format!("register value {value:#x} exceeds 38 bits")));
        }
        let cmd = SpiCommand::config(reg, (value & 0x7fff) as u32);
        let high = (value >> CONFIG_VALUE_BITS) as u32;
        self.transfer(&cmd, Some(high), slaves).map(|_| ())
    }

    pub fn select<S: SpiSlave>(&mut self, core_id: u8, slaves: &mut [S]) -> Result<()> {
        self.write_register(ConfigRegister::CoreSelect, core_id as u64, slaves)
    }

    pub fn write_byte<S: SpiSlave>(
        &mut self,
        target: MemoryTarget,
        row: usize,
        byte: usize,
        value: u8,
        slaves: &mut [S],
    ) -> Result<()> {
        let cmd = memory_command(target, SpiRw::Write, row, byte)?;
        self.transfer(&cmd, Some(value as u32), slaves).map(|_| ())
    }

    pub fn read_byte<S: SpiSlave>(
        &mut self,
        target: MemoryTarget,
        row: usize,
        byte: usize,
        slaves: &mut [S],
    ) -> Result<Option<u8>> {
        let cmd = memory_command(target, SpiRw::Read, row, byte)?;
        self.transfer(&cmd, None, slaves)
    }
}

fn memory_command(target: MemoryTarget, rw: SpiRw, row: usize, byte: usize) -> Result<SpiCommand> {
    match target {
        MemoryTarget::NeuronState => SpiCommand::state(rw, row, byte),
        _ => SpiCommand::synaptic(target, rw, row, byte),
    }
}

/// Programs every core through SPI frames only: registers, synaptic
/// memories and zeroed neuron state. Geometry is checked before the first
/// frame is sent.
pub fn load_model_over_spi(net: &QuantizedNetwork, cores: &mut [Core], bus: &mut SpiBus) -> Result<()> {
    net.validate()?;
    if cores.len() != net.config.cores.len() {
        return Err(Error::Config(format!(
            "model has {} layers, system has {} cores",
            net.config.cores.len(),
            cores.len()
        )));
    }
    for (core, cfg) in cores.iter().zip(&net.config.cores) {
        if core.config() != cfg {
            return Err(Error::Config(format!(
                "core {}: design-time parameters differ from the model",
                cfg.core_id
            )));
        }
    }

    for (i, (cfg, layer)) in net.config.cores.iter().zip(&net.layers).enumerate() {
        bus.select(cfg.core_id, cores)?;
        let regs = [
            (ConfigRegister::SpiState, 0),
            (ConfigRegister::NeuronModel, cfg.model.code()),
            (ConfigRegister::ActiveNeuronCount, cfg.neuron_count as u64),
            (ConfigRegister::Threshold, cfg.potential_format().to_raw(cfg.threshold)),
            (ConfigRegister::DecayBeta, cfg.beta.raw() as u64),
            (ConfigRegister::DecayAlpha, cfg.alpha.map_or(0, |a| a.raw() as u64)),
            (ConfigRegister::ResetPolicy, cfg.reset.code()),
            (ConfigRegister::TimestepCount, net.config.timesteps as u64),
            (ConfigRegister::RecurrentMode, cfg.topology.is_recurrent() as u64),
            (ConfigRegister::CtrlCoordA, cfg.source_count as u64),
            (ConfigRegister::CtrlCoordB, cfg.neuron_count as u64),
        ];
        for (reg, value) in regs {
            bus.write_register(reg, value, cores)?;
        }

        let n = cfg.neuron_count;
        let mut ff = SynapticMemory::new(cfg.ff_geometry()?)?;
        let wf = cfg.weight_format();
        for src in 0..cfg.source_count {
            for dst in 0..n {
                ff.set_weight(src, dst, QWord::new(layer.ff[src * n + dst] as i64, wf)?)?;
            }
        }
        write_image(bus, cores, MemoryTarget::FeedforwardSyn, &ff)?;

        if let (Some(geometry), Some(rec), Some(rf)) = (cfg.rec_geometry()?, &layer.rec, cfg.rec_format()) {
            let mut mem = SynapticMemory::new(geometry)?;
            match cfg.topology {
                Topology::AtaT => {
                    for src in 0..n {
                        for dst in 0..n {
                            mem.set_weight(src, dst, QWord::new(rec[src * n + dst] as i64, rf)?)?;
                        }
                    }
                }
                _ => {
                    for (dst, &w) in rec.iter().enumerate() {
                        mem.set_weight(0, dst, QWord::new(w as i64, rf)?)?;
                    }
                }
            }
            write_image(bus, cores, MemoryTarget::RecurrentSyn, &mem)?;
        }

        let sg = cfg.state_geometry()?;
        for row in 0..sg.rows {
            for byte in 0..sg.row_bytes() {
                bus.write_byte(MemoryTarget::NeuronState, row, byte, 0, cores)?;
            }
        }
        bus.write_register(ConfigRegister::SpiState, SPI_STATE_READY, cores)?;
        log::debug!("core {i} loaded after {} frames", bus.frames());
    }
    Ok(())
}

fn write_image(bus: &mut SpiBus, cores: &mut [Core], target: MemoryTarget, mem: &SynapticMemory) -> Result<()> {
    let row_bytes = mem.geometry().row_bytes();
    for (i, &b) in mem.bytes().iter().enumerate() {
        bus.write_byte(target, i / row_bytes, i % row_bytes, b, cores)?;
    }
    Ok(())
}

/// Reads a whole memory of one core back through SPI frames.
pub fn read_memory_over_spi(
    bus: &mut SpiBus,
    cores: &mut [Core],
    core_id: u8,
    target: MemoryTarget,
) -> Result<Vec<u8>> {
    let cfg = cores
        .iter()
        .find(|c| c.config().core_id == core_id)
        .ok_or_else(|| Error::Config(format!("no core with id {core_id}")))?
        .config()
        .clone();
    let (rows, row_bytes) = match target {
        MemoryTarget::NeuronState => {
            let g = cfg.state_geometry()?;
            (g.rows, g.row_bytes())
        }
        MemoryTarget::FeedforwardSyn => {
            let g = cfg.ff_geometry()?;
            (g.rows(), g.row_bytes())
        }
        MemoryTarget::RecurrentSyn => {
            let g = cfg
                .rec_geometry()?
                .ok_or_else(|| Error::Address("recurrent memory not instantiated".into()))?;
            (g.rows(), g.row_bytes())
        }
    };
    bus.select(core_id, cores)?;
    let mut out = Vec::with_capacity(rows * row_bytes);
    for row in 0..rows {
        for byte in 0..row_bytes {
            let b = bus
                .read_byte(target, row, byte, cores)?
                .ok_or_else(|| Error::Protocol("selected core did not answer".into()))?;
            out.push(b);
        }
    }
    Ok(out)
}
