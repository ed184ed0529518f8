//! Dense reference simulator.
//!
//! Plain nested loops over steps, layers and neurons on `i64` values, with
//! its own saturation and shift arithmetic. It shares no update code with
//! the event-driven cores and exists to cross-check them.

use crate::error::Result;
use crate::fxp::ResetPolicy;

use super::pipeline::{predict, InferenceResult};
use super::{CoreConfig, EventSample, QuantizedNetwork, Topology};

fn saturate(v: i64, bits: u8) -> i64 {
    let hi = (1i64 << (bits - 1)) - 1;
    v.clamp(-hi - 1, hi)
}

/// `sign(x) * sum over set bits b_j of k of floor(|x| / 2^j)`, bypass = identity.
fn shift_decay(x: i64, raw: u16) -> i64 {
    if raw & 0x100 != 0 {
        return x;
    }
    let mut acc = 0i64;
    for j in 1..=8 {
        if (raw >> (8 - j)) & 1 == 1 {
            acc += x.abs() / (1i64 << j);
        }
    }
    acc * x.signum()
}

struct Layer<'a> {
    cfg: &'a CoreConfig,
    ff: &'a [i32],
    rec: Option<&'a [i32]>,
    u: Vec<i64>,
    i: Vec<i64>,
    pending_rec: Vec<usize>,
}

impl Layer<'_> {
    fn add(&mut self, n: usize, w: i64) {
        match self.cfg.current_bits {
            Some(b) => self.i[n] = saturate(self.i[n] + w, b),
            None => self.u[n] = saturate(self.u[n] + w, self.cfg.potential_bits),
        }
    }

    fn step(&mut self, inputs: &[u8], last: bool) -> (Vec<u8>, Vec<(i32, Option<i32>)>) {
        let n = self.cfg.neuron_count;
        for &src in inputs {
            for dst in 0..n {
                self.add(dst, self.ff[src as usize * n + dst] as i64);
            }
        }
        let pending = std::mem::take(&mut self.pending_rec);
        if let Some(rec) = self.rec {
            for src in pending {
                match self.cfg.topology {
                    Topology::AtaT => {
                        for dst in 0..n {
                            self.add(dst, rec[src * n + dst] as i64);
                        }
                    }
                    Topology::AtaF => self.add(src, rec[src] as i64),
                    Topology::Ff => {}
                }
            }
        }
        let pb = self.cfg.potential_bits;
        let thr = self.cfg.threshold as i64;
        let beta = self.cfg.beta.raw();
        let mut fired = Vec::new();
        let mut snapshot = Vec::with_capacity(n);
        for k in 0..n {
            let spiking;
            match (self.cfg.current_bits, self.cfg.alpha) {
                (Some(cb), Some(alpha)) => {
                    self.u[k] = saturate(shift_decay(self.u[k], beta) + self.i[k], pb);
                    self.i[k] = saturate(shift_decay(self.i[k], alpha.raw()), cb);
                    spiking = self.u[k] >= thr;
                    if spiking {
                        self.u[k] = self.reset(self.u[k]);
                    }
                }
                _ => {
                    spiking = self.u[k] >= thr;
                    self.u[k] = if spiking { self.reset(self.u[k]) } else { shift_decay(self.u[k], beta) };
                }
            }
            if spiking {
                fired.push(k as u8);
            }
            snapshot.push((self.u[k] as i32, self.cfg.current_bits.map(|_| self.i[k] as i32)));
        }
        if self.cfg.topology.is_recurrent() {
            self.pending_rec = fired.iter().map(|&k| k as usize).collect();
        }
        if last {
            self.u.iter_mut().for_each(|v| *v = 0);
            self.i.iter_mut().for_each(|v| *v = 0);
            self.pending_rec.clear();
        }
        (fired, snapshot)
    }

    fn reset(&self, u: i64) -> i64 {
        match self.cfg.reset {
            ResetPolicy::ResetToZero => 0,
            ResetPolicy::ResetBySubtract => saturate(u - self.cfg.threshold as i64, self.cfg.potential_bits),
        }
    }
}

/// Simulates `sample` on `net` and returns the same observables as the
/// event-driven pipeline with state recording on and packet tracing off.
pub fn dense_reference(net: &QuantizedNetwork, sample: &EventSample) -> Result<InferenceResult> {
    net.validate()?;
    let cfg = &net.config;
    sample.validate(cfg.input_channels, cfg.timesteps)?;
    let mut layers: Vec<Layer> = cfg
        .cores
        .iter()
        .zip(&net.layers)
        .map(|(c, w)| Layer {
            cfg: c,
            ff: &w.ff,
            rec: w.rec.as_deref(),
            u: vec![0; c.neuron_count],
            i: vec![0; c.neuron_count],
            pending_rec: Vec::new(),
        })
        .collect();
    let mut spikes = vec![Vec::with_capacity(cfg.timesteps); layers.len()];
    let mut states = vec![Vec::with_capacity(cfg.timesteps); layers.len()];
    for t in 0..cfg.timesteps {
        let last = t + 1 == cfg.timesteps;
        let mut inputs = sample.spikes_at(t).to_vec();
        for (l, layer) in layers.iter_mut().enumerate() {
            let (fired, snap) = layer.step(&inputs, last);
            states[l].push(snap);
            spikes[l].push(fired.clone());
            inputs = fired;
        }
    }
    let mut counts = vec![0u32; cfg.output_count()];
    for step in spikes.last().expect("validated network has layers") {
        for &a in step {
            counts[a as usize] += 1;
        }
    }
    Ok(InferenceResult { predicted: predict(&counts), counts, spikes, states: Some(states), trace: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_decay_matches_worked_values() {
        assert_eq!(shift_decay(256, 153), 153);
        assert_eq!(shift_decay(-100, 0x80), -50);
        assert_eq!(shift_decay(77, 0x100), 77);
        assert_eq!(shift_decay(7, 0), 0);
    }

    #[test]
    fn saturate_bounds() {
        assert_eq!(saturate(200, 8), 127);
        assert_eq!(saturate(-200, 8), -128);
        assert_eq!(saturate(5, 8), 5);
    }
}
