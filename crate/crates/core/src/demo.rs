//! A small separable 3-class task: 12 input channels in three groups of
//! four, a self-recurrent hidden layer of six neurons and three outputs.
//! Class `c` drives its own channel group hard and the others weakly. The
//! output threshold is small against the largest weight, so coarse weight
//! grids round it to zero and the outputs stop discriminating.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fxp::ResetPolicy;
use crate::model::{TrainedLayer, TrainedModel};
use crate::neuron::NeuronModelKind;
use crate::system::Topology;

pub const CLASSES: usize = 3;
pub const CHANNELS: usize = 12;
pub const HIDDEN: usize = 6;
pub const TIMESTEPS: usize = 10;

fn group(channel: usize) -> usize {
    channel / (CHANNELS / CLASSES)
}

/// Hand-set weights: hidden pair `2c, 2c+1` is excited by group `c` and
/// inhibited by the rest; output `c` listens only to hidden pair `c`.
pub fn three_class_model() -> TrainedModel {
    let mut hidden_ff = Vec::with_capacity(CHANNELS * HIDDEN);
    for ch in 0..CHANNELS {
        for h in 0..HIDDEN {
            hidden_ff.push(if group(ch) == h / 2 { 0.5 } else { -0.25 });
        }
    }
    let mut out_ff = Vec::with_capacity(HIDDEN * CLASSES);
    for h in 0..HIDDEN {
        for o in 0..CLASSES {
            out_ff.push(if h / 2 == o { 1.0 } else { 0.0 });
        }
    }
    TrainedModel {
        input_channels: CHANNELS,
        timesteps: TIMESTEPS,
        state_headroom_bits: 4,
        ff_queue_capacity: 16,
        layers: vec![
            TrainedLayer {
                topology: Topology::AtaF,
                model: NeuronModelKind::Lif,
                neuron_count: HIDDEN,
                threshold: 1.0,
                beta: 0.9,
                alpha: None,
                reset: ResetPolicy::ResetBySubtract,
                ff: hidden_ff,
                rec: Some(vec![0.125; HIDDEN]),
            },
            TrainedLayer {
                topology: Topology::Ff,
                model: NeuronModelKind::Lif,
                neuron_count: CLASSES,
                threshold: 0.4,
                beta: 0.75,
                alpha: None,
                reset: ResetPolicy::ResetToZero,
                ff: out_ff,
                rec: None,
            },
        ],
    }
}

/// `per_class` labelled intensity vectors per class, deterministic in `seed`.
/// Own-group channels lie in [0.6, 0.9], the others in [0, 0.3].
pub fn three_class_intensities(per_class: usize, seed: u64) -> Vec<(u16, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(per_class * CLASSES);
    for i in 0..per_class * CLASSES {
        let label = i % CLASSES;
        let p = (0..CHANNELS)
            .map(|ch| {
                let v: f64 = if group(ch) == label { rng.gen_range(0.6..=0.9) } else { rng.gen_range(0.0..=0.3) };
                (v * 100.0).round() / 100.0
            })
            .collect();
        out.push((label as u16, p));
    }
    out
}
