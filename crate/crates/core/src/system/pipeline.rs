//! Host driver and the layer-per-core pipeline.
//!
//! Two interchangeable executors move packets between cores: a
//! deterministic round-robin scheduler over bounded queues, and one OS
//! thread per core joined by blocking handshake channels. Each core is
//! sequential and every link is FIFO, so the packet sequence on every link,
//! and therefore every result, is the same under both.

use std::collections::VecDeque;
use std::fmt;
use std::thread;

use crate::aer::{handshake_channel, AerPacket, BoundedQueue, PacketKind, DEFAULT_QUEUE_CAPACITY};
use crate::error::{Error, Result};
use crate::spi::{load_model_over_spi, SpiBus};

use super::core::{Core, NeuronValues};
use super::{EventSample, NetworkConfig, QuantizedNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecutionMode {
    #[default]
    RoundRobin,
    Threaded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InferenceOptions {
    pub mode: ExecutionMode,
    pub record_packets: bool,
    pub record_states: bool,
    /// Idle scheduling rounds tolerated before the round-robin executor
    /// reports a stall.
    pub watchdog_rounds: usize,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        Self { mode: ExecutionMode::RoundRobin, record_packets: false, record_states: false, watchdog_rounds: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TraceSource {
    Input,
    Core(u8),
}

impl TraceSource {
    fn rank(self) -> usize {
        match self {
            TraceSource::Input => 0,
            TraceSource::Core(c) => c as usize + 1,
        }
    }
}

impl fmt::Display for TraceSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceSource::Input => write!(f, "in"),
            TraceSource::Core(c) => write!(f, "{c}"),
        }
    }
}

/// One packet observed on a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRecord {
    pub step: usize,
    pub source: TraceSource,
    pub packet: AerPacket,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InferenceResult {
    pub predicted: usize,
    /// ASPL count per output neuron over the whole sample.
    pub counts: Vec<u32>,
    /// `spikes[core][step]`: neurons that fired, in emission order.
    pub spikes: Vec<Vec<Vec<u8>>>,
    /// `states[core][step][neuron]`: values right after the leak phase,
    /// before any end-of-input reset.
    pub states: Option<Vec<Vec<Vec<NeuronValues>>>>,
    pub trace: Option<Vec<TraceRecord>>,
}

/// Argmax with ties going to the lowest index.
pub(crate) fn predict(counts: &[u32]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// A configured multi-core system.
#[derive(Debug, Clone)]
pub struct Network {
    config: NetworkConfig,
    cores: Vec<Core>,
    spi_frames: u64,
}

impl Network {
    /// Instantiates one core per layer and programs them over SPI.
    pub fn from_quantized(net: &QuantizedNetwork) -> Result<Self> {
        net.validate()?;
        let mut cores = net.config.cores.iter().cloned().map(Core::new).collect::<Result<Vec<_>>>()?;
        let mut bus = SpiBus::new();
        load_model_over_spi(net, &mut cores, &mut bus)?;
        Ok(Self { config: net.config.clone(), cores, spi_frames: bus.frames() })
    }

    /// Wraps cores that were programmed elsewhere.
    pub fn from_cores(config: NetworkConfig, cores: Vec<Core>) -> Result<Self> {
        config.validate()?;
        if cores.len() != config.cores.len() {
            return Err(Error::Config("core count does not match the network".into()));
        }
        Ok(Self { config, cores, spi_frames: 0 })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn cores(&self) -> &[Core] {
        &self.cores
    }

    pub fn cores_mut(&mut self) -> &mut [Core] {
        &mut self.cores
    }

    /// Frames spent loading the model.
    pub fn spi_frames(&self) -> u64 {
        self.spi_frames
    }
}

/// Packets the driver injects for one sample.
fn input_packets(sample: &EventSample, timesteps: usize) -> Vec<AerPacket> {
    let mut out = Vec::new();
    for t in 0..timesteps {
        out.extend(sample.spikes_at(t).iter().map(|&a| AerPacket::aspl(a)));
        out.push(if t + 1 == timesteps { AerPacket::EOIN } else { AerPacket::EOTS });
    }
    out
}

type Emissions = Vec<Vec<(usize, AerPacket)>>;

fn run_round_robin(cores: &mut [Core], input: &[AerPacket], watchdog: usize) -> Result<Emissions> {
    let layers = cores.len();
    let mut queues = cores
        .iter()
        .map(|c| BoundedQueue::new(c.config().ff_queue_capacity))
        .collect::<Result<Vec<_>>>()?;
    let mut held: Vec<VecDeque<AerPacket>> = vec![VecDeque::new(); layers];
    let mut emitted: Emissions = vec![Vec::new(); layers];
    let mut next_input = 0;
    let mut idle = 0;
    loop {
        let mut progress = false;
        while next_input < input.len() && queues[0].push(input[next_input]).is_ok() {
            next_input += 1;
            progress = true;
        }
        for i in 0..layers {
            // Wait-Trans: hold packets until the next layer's queue has room
            while let Some(&p) = held[i].front() {
                if i + 1 < layers && queues[i + 1].push(p).is_err() {
                    break;
                }
                held[i].pop_front();
                progress = true;
            }
            if held[i].is_empty() {
                if let Some(p) = queues[i].pop() {
                    let step = cores[i].step();
                    let (h, e) = (&mut held[i], &mut emitted[i]);
                    cores[i].process(p, &mut |o| {
                        h.push_back(o);
                        e.push((step, o));
                    })?;
                    progress = true;
                }
            }
        }
        let drained = next_input == input.len()
            && queues.iter().all(|q| q.is_empty())
            && held.iter().all(|h| h.is_empty());
        if drained {
            return Ok(emitted);
        }
        if progress {
            idle = 0;
        } else {
            idle += 1;
            if idle > watchdog {
                let depth: Vec<usize> = queues.iter().map(|q| q.len()).collect();
                return Err(Error::Deadlock { rounds: idle, detail: format!("queue depths {depth:?}") });
            }
        }
    }
}

fn run_threaded(cores: &mut [Core], input: &[AerPacket]) -> Result<Emissions> {
    let caps: Vec<usize> = cores.iter().map(|c| c.config().ff_queue_capacity).collect();
    thread::scope(|scope| {
        let (driver_tx, mut upstream) = handshake_channel::<AerPacket>(caps[0])?;
        let driver = scope.spawn(move || -> Result<()> {
            for &p in input {
                driver_tx.send(p)?;
            }
            Ok(())
        });
        let mut workers = Vec::new();
        for (i, core) in cores.iter_mut().enumerate() {
            let cap = caps.get(i + 1).copied().unwrap_or(DEFAULT_QUEUE_CAPACITY);
            let (tx, rx_next) = handshake_channel::<AerPacket>(cap)?;
            let rx = std::mem::replace(&mut upstream, rx_next);
            workers.push(scope.spawn(move || -> Result<Vec<(usize, AerPacket)>> {
                let mut log = Vec::new();
                let mut out = Vec::new();
                while let Some(p) = rx.recv() {
                    let step = core.step();
                    core.process(p, &mut |o| out.push(o))?;
                    for o in out.drain(..) {
                        log.push((step, o));
                        tx.send(o)?;
                    }
                }
                Ok(log)
            }));
        }
        while upstream.recv().is_some() {}

        let mut emitted = Vec::new();
        let mut first_err: Option<Error> = None;
        let mut note = |e: Error| {
            let replace = match &first_err {
                None => true,
                Some(Error::ChannelClosed { .. }) => !matches!(e, Error::ChannelClosed { .. }),
                Some(_) => false,
            };
            if replace {
                first_err = Some(e);
            }
        };
        for w in workers {
            match w.join().expect("core thread panicked") {
                Ok(log) => emitted.push(log),
                Err(e) => note(e),
            }
        }
        if let Err(e) = driver.join().expect("driver thread panicked") {
            note(e);
        }
        match first_err {
            Some(e) => Err(e),
            None => Ok(emitted),
        }
    })
}

/// Runs one sample through a loaded network.
pub fn run_inference(net: &mut Network, sample: &EventSample, opts: &InferenceOptions) -> Result<InferenceResult> {
    let timesteps = net.config.timesteps;
    sample.validate(net.config.input_channels, timesteps)?;
    for c in net.cores.iter_mut() {
        c.rewind();
        c.set_record_states(opts.record_states);
    }
    let input = input_packets(sample, timesteps);
    let emitted = match opts.mode {
        ExecutionMode::RoundRobin => run_round_robin(&mut net.cores, &input, opts.watchdog_rounds)?,
        ExecutionMode::Threaded => run_threaded(&mut net.cores, &input)?,
    };

    let mut spikes = vec![vec![Vec::new(); timesteps]; net.cores.len()];
    for (c, log) in emitted.iter().enumerate() {
        for &(step, p) in log {
            if p.kind == PacketKind::Aspl {
                spikes[c][step].push(p.address);
            }
        }
    }
    let mut counts = vec![0u32; net.config.output_count()];
    for step in spikes.last().expect("at least one core") {
        for &a in step {
            counts[a as usize] += 1;
        }
    }
    let states = opts
        .record_states
        .then(|| net.cores.iter_mut().map(|c| c.take_state_log()).collect());
    let trace = opts.record_packets.then(|| {
        let mut records = Vec::with_capacity(input.len());
        let mut t = 0;
        for &p in &input {
            records.push(TraceRecord { step: t, source: TraceSource::Input, packet: p });
            if p.kind.is_terminator() {
                t += 1;
            }
        }
        for (c, log) in emitted.iter().enumerate() {
            records.extend(log.iter().map(|&(step, packet)| TraceRecord {
                step,
                source: TraceSource::Core(c as u8),
                packet,
            }));
        }
        records.sort_by_key(|r| (r.step, r.source.rank()));
        records
    });
    Ok(InferenceResult { predicted: predict(&counts), counts, spikes, states, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cg::DecayRate;
    use crate::fxp::ResetPolicy;
    use crate::system::testnet::lif_core;
    use crate::system::LayerWeights;

    fn identity_net(capacity: usize) -> QuantizedNetwork {
        // 3 inputs -> 3 hidden -> 3 outputs, diagonal weights
        let mut c0 = lif_core(0, 3, 3, 2, DecayRate::BYPASS, ResetPolicy::ResetToZero);
        let mut c1 = lif_core(1, 3, 3, 2, DecayRate::BYPASS, ResetPolicy::ResetToZero);
        c0.ff_queue_capacity = capacity;
        c1.ff_queue_capacity = capacity;
        let diag: Vec<i32> = (0..9).map(|i| if i % 4 == 0 { 2 } else { -1 }).collect();
        QuantizedNetwork {
            config: NetworkConfig { input_channels: 3, timesteps: 5, cores: vec![c0, c1] },
            layers: vec![
                LayerWeights { ff: diag.clone(), rec: None },
                LayerWeights { ff: diag, rec: None },
            ],
            scales: vec![1.0, 1.0],
        }
    }

    fn sample(class: u8) -> EventSample {
        let others: Vec<u8> = (0..3).filter(|&c| c != class).collect();
        EventSample {
            steps: (0..5)
                .map(|t| if t % 2 == 0 { vec![class] } else { vec![class, others[t % 2]] })
                .collect(),
            label: class as u16,
        }
    }

    #[test]
    fn diagonal_network_predicts_dominant_class() {
        let mut net = Network::from_quantized(&identity_net(4)).unwrap();
        for c in 0..3 {
            let r = run_inference(&mut net, &sample(c), &InferenceOptions::default()).unwrap();
            assert_eq!(r.predicted, c as usize, "counts {:?}", r.counts);
        }
    }

    #[test]
    fn zero_input_ties_to_class_zero() {
        let mut net = Network::from_quantized(&identity_net(4)).unwrap();
        let r = run_inference(&mut net, &EventSample { steps: vec![], label: 2 }, &InferenceOptions::default())
            .unwrap();
        assert_eq!(r.counts, vec![0, 0, 0]);
        assert_eq!(r.predicted, 0);
    }

    #[test]
    fn deterministic_and_mode_independent() {
        let q = identity_net(1);
        let opts = InferenceOptions { record_packets: true, record_states: true, ..Default::default() };
        let threaded = InferenceOptions { mode: ExecutionMode::Threaded, ..opts };
        let mut a = Network::from_quantized(&q).unwrap();
        let mut b = Network::from_quantized(&q).unwrap();
        let s = sample(1);
        let r1 = run_inference(&mut a, &s, &opts).unwrap();
        let r2 = run_inference(&mut a, &s, &opts).unwrap();
        let r3 = run_inference(&mut b, &s, &threaded).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1, r3);
    }

    #[test]
    fn terminators_conserved_per_layer() {
        let mut net = Network::from_quantized(&identity_net(2)).unwrap();
        let opts = InferenceOptions { record_packets: true, ..Default::default() };
        let r = run_inference(&mut net, &sample(2), &opts).unwrap();
        let trace = r.trace.unwrap();
        for src in [TraceSource::Input, TraceSource::Core(0), TraceSource::Core(1)] {
            let eots = trace.iter().filter(|t| t.source == src && t.packet.kind == PacketKind::Eots).count();
            let eoin = trace.iter().filter(|t| t.source == src && t.packet.kind == PacketKind::Eoin).count();
            assert_eq!((eots, eoin), (4, 1), "{src}");
        }
    }

    #[test]
    fn eoin_leaves_state_zeroed() {
        let mut net = Network::from_quantized(&identity_net(4)).unwrap();
        run_inference(&mut net, &sample(0), &InferenceOptions::default()).unwrap();
        let mut bus = SpiBus::new();
        for id in 0..2 {
            let bytes =
                crate::spi::read_memory_over_spi(&mut bus, net.cores_mut(), id, crate::spi::MemoryTarget::NeuronState)
                    .unwrap();
            assert!(bytes.iter().all(|&b| b == 0));
        }
    }

    #[test]
    fn sample_longer_than_window_rejected() {
        let mut net = Network::from_quantized(&identity_net(4)).unwrap();
        let s = EventSample { steps: vec![vec![]; 6], label: 0 };
        assert!(run_inference(&mut net, &s, &InferenceOptions::default()).is_err());
    }

    #[test]
    fn predict_ties_lowest() {
        assert_eq!(predict(&[1, 3, 3]), 1);
        assert_eq!(predict(&[0, 0]), 0);
    }
}
