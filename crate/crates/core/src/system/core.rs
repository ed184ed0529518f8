//! One processing core: memories, register file, recurrent scheduler and
//! the controller phases (FF-Integ, REC-Integ, Leak/Spk, transmit).

use crate::aer::{AerPacket, BoundedQueue, PacketKind};
use crate::cg::DecayRate;
use crate::error::{Error, Result};
use crate::fxp::{QWord, ResetPolicy};
use crate::neuron::{
    integrate, lazy_reset, leak_and_fire, LeakConfig, StateMemory, SynapticMemory,
};
use crate::spi::{ConfigRegister, ConfigRegisterFile, MemoryTarget, SpiSlave, SPI_STATE_READY};

use super::{CoreConfig, Topology};

/// Membrane and (optional) synaptic current of one neuron.
pub type NeuronValues = (i32, Option<i32>);

#[derive(Debug, Clone)]
pub struct Core {
    config: CoreConfig,
    registers: ConfigRegisterFile,
    ff_mem: SynapticMemory,
    rec_mem: Option<SynapticMemory>,
    state: StateMemory,
    rec_queue: Option<BoundedQueue<AerPacket>>,
    step: usize,
    record_states: bool,
    state_log: Vec<Vec<NeuronValues>>,
}

impl Core {
    /// Instantiates the hardware for `config`. Memories and registers start
    /// at zero; runtime parameters arrive over SPI.
    pub fn new(config: CoreConfig) -> Result<Self> {
        config.validate()?;
        let ff_mem = SynapticMemory::new(config.ff_geometry()?)?;
        let rec_mem = config.rec_geometry()?.map(SynapticMemory::new).transpose()?;
        let state = StateMemory::new(config.neuron_count, config.potential_format(), config.current_format())?;
        // a step can emit at most one ASCL per neuron
        let rec_queue = if config.topology.is_recurrent() {
            Some(BoundedQueue::new(config.neuron_count)?)
        } else {
            None
        };
        Ok(Self {
            config,
            registers: ConfigRegisterFile::default(),
            ff_mem,
            rec_mem,
            state,
            rec_queue,
            step: 0,
            record_states: false,
            state_log: Vec::new(),
        })
    }

    pub fn config(&self) -> &CoreConfig {
        &self.config
    }

    pub fn ff_memory(&self) -> &SynapticMemory {
        &self.ff_mem
    }

    pub fn rec_memory(&self) -> Option<&SynapticMemory> {
        self.rec_mem.as_ref()
    }

    pub fn state_memory(&self) -> &StateMemory {
        &self.state
    }

    pub fn has_recurrent_scheduler(&self) -> bool {
        self.rec_queue.is_some()
    }

    /// Terminators processed since construction or the last [`Core::rewind`].
    pub fn step(&self) -> usize {
        self.step
    }

    pub fn set_record_states(&mut self, on: bool) {
        self.record_states = on;
    }

    /// Post-leak neuron values for every processed step, if recording.
    pub fn take_state_log(&mut self) -> Vec<Vec<NeuronValues>> {
        std::mem::take(&mut self.state_log)
    }

    /// Resets the step counter for a new sample. Neuron state is untouched;
    /// the end-of-input reset has already cleared it.
    pub fn rewind(&mut self) {
        self.step = 0;
        self.state_log.clear();
    }

    pub fn neuron_values(&self, n: usize) -> NeuronValues {
        let s = self.state.load(n);
        (s.membrane.value(), s.syn_current.map(|i| i.value()))
    }

    fn active_count(&self) -> Result<usize> {
        let n = self.registers.get(ConfigRegister::ActiveNeuronCount) as usize;
        if n > self.config.neuron_count {
            return Err(Error::Config(format!(
                "core {}: active neuron count {n} exceeds {} instantiated neurons",
                self.config.core_id, self.config.neuron_count
            )));
        }
        Ok(n)
    }

    fn leak_config(&self) -> Result<LeakConfig> {
        let r = &self.registers;
        let pf = self.config.potential_format();
        let threshold = QWord::saturating(pf.from_raw(r.get(ConfigRegister::Threshold)) as i64, pf);
        let beta = DecayRate::from_raw(r.get(ConfigRegister::DecayBeta) as u16 & 0x1ff)?;
        let alpha = match self.config.current_bits {
            Some(_) => Some(DecayRate::from_raw(r.get(ConfigRegister::DecayAlpha) as u16 & 0x1ff)?),
            None => None,
        };
        let reset = ResetPolicy::from_code(r.get(ConfigRegister::ResetPolicy))?;
        Ok(LeakConfig { threshold, beta, alpha, reset, units: self.config.selection_units })
    }

    fn check_ready(&self) -> Result<()> {
        if self.registers.get(ConfigRegister::SpiState) != SPI_STATE_READY {
            return Err(Error::Config(format!(
                "core {} has not completed its configuration phase",
                self.config.core_id
            )));
        }
        Ok(())
    }

    fn integrate_row(&mut self, weights_from: Source, src: usize, active: usize) -> Result<()> {
        for dst in 0..active {
            let w = match weights_from {
                Source::Feedforward => self.ff_mem.weight(src, dst)?,
                Source::Recurrent => self.rec_mem.as_ref().expect("recurrent memory").weight(src, dst)?,
            };
            let s = integrate(self.state.load(dst), w)?;
            self.state.store(dst, &s);
        }
        Ok(())
    }

    fn recurrent_integration(&mut self, active: usize) -> Result<()> {
        let Some(mut queue) = self.rec_queue.take() else {
            return Ok(());
        };
        let enabled = self.registers.get(ConfigRegister::RecurrentMode) != 0;
        let mut result = Ok(());
        for p in queue.drain() {
            if !enabled {
                continue;
            }
            let src = p.address as usize;
            result = match self.config.topology {
                Topology::AtaT => self.integrate_row(Source::Recurrent, src, active),
                Topology::AtaF if src < active => {
                    let mem = self.rec_mem.as_ref().expect("self-weight memory");
                    mem.weight(0, src)
                        .and_then(|w| integrate(self.state.load(src), w))
                        .map(|s| self.state.store(src, &s))
                }
                _ => Ok(()),
            };
            if result.is_err() {
                break;
            }
        }
        self.rec_queue = Some(queue);
        result
    }

    /// Handles one inbound packet, pushing any outbound packets to `emit`
    /// in transmission order.
    pub fn process(&mut self, packet: AerPacket, emit: &mut dyn FnMut(AerPacket)) -> Result<()> {
        self.check_ready()?;
        let active = self.active_count()?;
        match packet.kind {
            PacketKind::Aspl => {
                let src = packet.address as usize;
                if src >= self.config.source_count {
                    return Err(Error::Address(format!(
                        "core {}: ASPL source {src} beyond {} inputs",
                        self.config.core_id, self.config.source_count
                    )));
                }
                self.integrate_row(Source::Feedforward, src, active)
            }
            PacketKind::Ascl => Err(Error::Protocol(format!(
                "core {}: ASCL packet arrived on the inter-core link",
                self.config.core_id
            ))),
            PacketKind::Eots | PacketKind::Eoin => {
                self.recurrent_integration(active)?;
                let cfg = self.leak_config()?;
                let mut snapshot = Vec::new();
                for n in 0..active {
                    let (s, fired) = leak_and_fire(self.state.load(n), &cfg)?;
                    self.state.store(n, &s);
                    if self.record_states {
                        snapshot.push((s.membrane.value(), s.syn_current.map(|i| i.value())));
                    }
                    if fired {
                        emit(AerPacket::spike(PacketKind::Aspl, n)?);
                        if let Some(q) = &mut self.rec_queue {
                            q.push(AerPacket::spike(PacketKind::Ascl, n)?)
                                .map_err(|_| Error::Protocol("recurrent scheduler overflow".into()))?;
                        }
                    }
                }
                if self.record_states {
                    self.state_log.push(snapshot);
                }
                if packet.kind == PacketKind::Eoin {
                    for n in 0..self.config.neuron_count {
                        let z = lazy_reset(self.state.load(n));
                        self.state.store(n, &z);
                    }
                    if let Some(q) = &mut self.rec_queue {
                        q.clear();
                    }
                }
                self.step += 1;
                emit(packet);
                Ok(())
            }
        }
    }

    /// Runs one whole time step: the inbound packets must end with exactly
    /// one terminator.
    pub fn core_step(&mut self, inbound: &[AerPacket]) -> Result<Vec<AerPacket>> {
        let terminators = inbound.iter().filter(|p| p.kind.is_terminator()).count();
        let ends_ok = inbound.last().is_some_and(|p| p.kind.is_terminator());
        if terminators != 1 || !ends_ok {
            return Err(Error::Protocol(format!(
                "a time step must end with exactly one EOTS/EOIN, got {terminators}"
            )));
        }
        let mut out = Vec::new();
        for &p in inbound {
            self.process(p, &mut |o| out.push(o))?;
        }
        Ok(out)
    }
}

#[derive(Clone, Copy)]
enum Source {
    Feedforward,
    Recurrent,
}

impl SpiSlave for Core {
    fn core_id(&self) -> u8 {
        self.config.core_id
    }

    fn registers(&self) -> &ConfigRegisterFile {
        &self.registers
    }

    fn registers_mut(&mut self) -> &mut ConfigRegisterFile {
        &mut self.registers
    }

    fn read_memory(&self, target: MemoryTarget, row: usize, byte: usize) -> Result<u8> {
        match target {
            MemoryTarget::NeuronState => self.state.read_byte(row, byte),
            MemoryTarget::FeedforwardSyn => self.ff_mem.read_byte(row, byte),
            MemoryTarget::RecurrentSyn => self
                .rec_mem
                .as_ref()
                .ok_or_else(|| Error::Address("recurrent memory not instantiated".into()))?
                .read_byte(row, byte),
        }
    }

    fn write_memory(&mut self, target: MemoryTarget, row: usize, byte: usize, value: u8) -> Result<()> {
        match target {
            MemoryTarget::NeuronState => self.state.write_byte(row, byte, value),
            MemoryTarget::FeedforwardSyn => self.ff_mem.write_byte(row, byte, value),
            MemoryTarget::RecurrentSyn => self
                .rec_mem
                .as_mut()
                .ok_or_else(|| Error::Address("recurrent memory not instantiated".into()))?
                .write_byte(row, byte, value),
        }
    }
}
