//! Seeded generators of small random networks and event samples, used by
//! property tests and equivalence sweeps.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::cg::{DecayRate, SelectionUnits};
use crate::fxp::{QFormat, ResetPolicy};
use crate::neuron::NeuronModelKind;
use crate::system::{CoreConfig, EventSample, LayerWeights, NetworkConfig, QuantizedNetwork, Topology};

/// Bounds for [`random_network`].
#[derive(Debug, Clone)]
pub struct NetworkLimits {
    pub max_layers: usize,
    pub max_neurons: usize,
    pub max_timesteps: usize,
    pub weight_bits: Vec<u8>,
    pub topologies: Vec<Topology>,
    pub models: Vec<NeuronModelKind>,
}

impl Default for NetworkLimits {
    fn default() -> Self {
        Self {
            max_layers: 3,
            max_neurons: 16,
            max_timesteps: 8,
            weight_bits: vec![4, 6, 8],
            topologies: vec![Topology::Ff, Topology::AtaF, Topology::AtaT],
            models: vec![NeuronModelKind::If, NeuronModelKind::Lif, NeuronModelKind::Synaptic],
        }
    }
}

fn random_rate<R: Rng>(rng: &mut R) -> (DecayRate, SelectionUnits) {
    if rng.gen_bool(0.15) {
        return (DecayRate::BYPASS, SelectionUnits::NONE);
    }
    let leak_bits = rng.gen_range(1..=8u8);
    let keep = 0xffu8 << (8 - leak_bits);
    (DecayRate::from_k(rng.gen::<u8>() & keep), SelectionUnits::for_leak_bits(leak_bits))
}

fn random_weights<R: Rng>(rng: &mut R, n: usize, bits: u8) -> Vec<i32> {
    let f = QFormat::new(bits as u32).expect("valid width");
    (0..n).map(|_| rng.gen_range(f.min()..=f.max()) as i32).collect()
}

/// A valid random network within `limits`.
pub fn random_network<R: Rng>(rng: &mut R, limits: &NetworkLimits) -> QuantizedNetwork {
    let layers = rng.gen_range(1..=limits.max_layers);
    let input_channels = rng.gen_range(1..=limits.max_neurons);
    let timesteps = rng.gen_range(1..=limits.max_timesteps);
    let mut cores = Vec::with_capacity(layers);
    let mut weights = Vec::with_capacity(layers);
    let mut src = input_channels;
    for id in 0..layers {
        let n = rng.gen_range(1..=limits.max_neurons);
        let topology = *limits.topologies.choose(rng).expect("non-empty");
        let model = *limits.models.choose(rng).expect("non-empty");
        let wb = *limits.weight_bits.choose(rng).expect("non-empty");
        let rb = topology.is_recurrent().then(|| *limits.weight_bits.choose(rng).expect("non-empty"));
        let widest = wb.max(rb.unwrap_or(0));
        let pb = widest + rng.gen_range(0..=6u8);
        let cb = (model == NeuronModelKind::Synaptic).then(|| rng.gen_range(widest..=pb));
        let (beta, beta_units) = if model == NeuronModelKind::If {
            (DecayRate::BYPASS, SelectionUnits::NONE)
        } else {
            random_rate(rng)
        };
        let (alpha, alpha_units) = if model == NeuronModelKind::Synaptic {
            let (a, u) = random_rate(rng);
            (Some(a), u)
        } else {
            (None, SelectionUnits::NONE)
        };
        let wmax = 1i32 << (widest - 1);
        let pmax = (1i64 << (pb - 1)) - 1;
        let threshold = rng.gen_range(0..=(2 * wmax as i64).min(pmax)) as i32;
        let reset = if rng.gen_bool(0.5) { ResetPolicy::ResetToZero } else { ResetPolicy::ResetBySubtract };
        let cfg = CoreConfig {
            core_id: id as u8,
            topology,
            model,
            neuron_count: n,
            source_count: src,
            weight_bits: wb,
            rec_weight_bits: rb,
            potential_bits: pb,
            current_bits: cb,
            beta,
            alpha,
            selection_units: beta_units.union(alpha_units),
            threshold,
            reset,
            ff_queue_capacity: rng.gen_range(1..=4),
        };
        let rec = rb.map(|b| random_weights(rng, cfg.rec_weight_count(), b));
        weights.push(LayerWeights { ff: random_weights(rng, src * n, wb), rec });
        cores.push(cfg);
        src = n;
    }
    let scales = vec![1.0; layers];
    QuantizedNetwork { config: NetworkConfig { input_channels, timesteps, cores }, layers: weights, scales }
}

/// A random sample spanning the network's full window.
pub fn random_sample<R: Rng>(rng: &mut R, cfg: &NetworkConfig) -> EventSample {
    let density = rng.gen_range(0.0..=0.8);
    let steps = (0..cfg.timesteps)
        .map(|_| {
            let mut s: Vec<u8> = (0..cfg.input_channels as u8).filter(|_| rng.gen_bool(density)).collect();
            s.shuffle(rng);
            s
        })
        .collect();
    EventSample { steps, label: rng.gen_range(0..cfg.output_count() as u16) }
}

/// Turns every layer into a bypass-decay integrator: once as IF, once as
/// LIF, with otherwise identical parameters.
pub fn bypass_pair(net: &QuantizedNetwork) -> (QuantizedNetwork, QuantizedNetwork) {
    let mut as_if = net.clone();
    for c in &mut as_if.config.cores {
        c.model = NeuronModelKind::If;
        c.beta = DecayRate::BYPASS;
        c.alpha = None;
        c.current_bits = None;
        c.selection_units = SelectionUnits::NONE;
    }
    let mut as_lif = as_if.clone();
    for c in &mut as_lif.config.cores {
        c.model = NeuronModelKind::Lif;
    }
    (as_if, as_lif)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_networks_validate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let limits = NetworkLimits::default();
        for _ in 0..300 {
            let net = random_network(&mut rng, &limits);
            net.validate().unwrap();
            random_sample(&mut rng, &net.config).validate(net.config.input_channels, net.config.timesteps).unwrap();
            let (a, b) = bypass_pair(&net);
            a.validate().unwrap();
            b.validate().unwrap();
        }
    }
}
