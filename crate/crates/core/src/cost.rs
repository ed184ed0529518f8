//! Hardware cost model: BRAM sizing from memory geometry, per-core linear
//! logic regressions, and the weighted hardware-plus-accuracy objective.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuron::NeuronModelKind;
use crate::system::{CoreConfig, NetworkConfig, Topology};

/// Bits in one 36 Kb block RAM primitive.
pub const DEFAULT_BRAM_PRIMITIVE_BITS: usize = 36_864;

/// Tolerance on the two weight-sum constraints.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ResourceEstimate {
    pub luts: f64,
    pub flipflops: f64,
    pub brams: f64,
}

impl ResourceEstimate {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("luts", self.luts), ("flipflops", self.flipflops), ("brams", self.brams)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::OutOfRange(format!("{name} estimate {v} must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

/// Memory bits of one core, one entry per physical memory: feedforward
/// synapses, neuron state, and the all-to-all recurrent array if present.
/// ATA_F self-weights are register-sized and counted in the logic fit.
pub fn core_memory_bits(cfg: &CoreConfig) -> Result<Vec<usize>> {
    let mut bits = vec![cfg.ff_geometry()?.total_bits(), cfg.state_geometry()?.total_bits()];
    if cfg.topology == Topology::AtaT {
        if let Some(g) = cfg.rec_geometry()? {
            bits.push(g.total_bits());
        }
    }
    Ok(bits)
}

/// Primitives needed for `bits`, rounding each memory up separately.
pub fn brams_for_bits(bits: usize, primitive_bits: usize) -> usize {
    bits.div_ceil(primitive_bits)
}

pub fn estimate_core_bram(cfg: &CoreConfig, primitive_bits: usize) -> Result<usize> {
    if primitive_bits == 0 {
        return Err(Error::Config("BRAM primitive size must be positive".into()));
    }
    Ok(core_memory_bits(cfg)?.into_iter().map(|b| brams_for_bits(b, primitive_bits)).sum())
}

pub fn estimate_bram(net: &NetworkConfig, primitive_bits: usize) -> Result<f64> {
    net.validate()?;
    let mut total = 0;
    for c in &net.cores {
        total += estimate_core_bram(c, primitive_bits)?;
    }
    Ok(total as f64)
}

/// `intercept + per_ff_bit * ff + per_rec_bit * rec`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub per_ff_bit: f64,
    pub per_rec_bit: f64,
}

impl LinearFit {
    pub fn eval(&self, ff_bits: u32, rec_bits: u32) -> f64 {
        self.intercept + self.per_ff_bit * ff_bits as f64 + self.per_rec_bit * rec_bits as f64
    }

    fn is_finite(&self) -> bool {
        self.intercept.is_finite() && self.per_ff_bit.is_finite() && self.per_rec_bit.is_finite()
    }
}

/// Model families with distinct datapaths. IF shares the LIF datapath.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelFamily {
    #[serde(rename = "LIF")]
    Lif,
    Synaptic,
}

impl From<NeuronModelKind> for ModelFamily {
    fn from(m: NeuronModelKind) -> Self {
        match m {
            NeuronModelKind::If | NeuronModelKind::Lif => ModelFamily::Lif,
            NeuronModelKind::Synaptic => ModelFamily::Synaptic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub topology: Topology,
    pub model: ModelFamily,
    pub luts: LinearFit,
    pub flipflops: LinearFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub label: String,
    pub entries: Vec<CalibrationEntry>,
}

impl CalibrationTable {
    /// Non-physical coefficients for exercising the pipeline. Real values
    /// come from post-synthesis fits loaded with [`CalibrationTable::from_json`].
    pub fn placeholder() -> Self {
        let mut entries = Vec::new();
        for (t, topology) in [Topology::Ff, Topology::AtaF, Topology::AtaT].into_iter().enumerate() {
            for (m, model) in [ModelFamily::Lif, ModelFamily::Synaptic].into_iter().enumerate() {
                let base = 400.0 + 150.0 * t as f64 + 250.0 * m as f64;
                let rec = if topology.is_recurrent() { 12.0 } else { 0.0 };
                entries.push(CalibrationEntry {
                    topology,
                    model,
                    luts: LinearFit { intercept: base, per_ff_bit: 20.0, per_rec_bit: rec },
                    flipflops: LinearFit { intercept: base / 2.0, per_ff_bit: 8.0, per_rec_bit: rec / 2.0 },
                });
            }
        }
        Self { label: "placeholder (non-physical)".into(), entries }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.entries.iter().enumerate() {
            if !e.luts.is_finite() || !e.flipflops.is_finite() {
                return Err(Error::Calibration(format!("entry {i} has non-finite coefficients")));
            }
            if self.entries[..i].iter().any(|o| o.topology == e.topology && o.model == e.model) {
                return Err(Error::Calibration(format!(
                    "duplicate entry for {} / {:?}",
                    e.topology.name(),
                    e.model
                )));
            }
        }
        Ok(())
    }

    pub fn lookup(&self, topology: Topology, model: NeuronModelKind) -> Result<&CalibrationEntry> {
        let family = ModelFamily::from(model);
        self.entries
            .iter()
            .find(|e| e.topology == topology && e.model == family)
            .ok_or_else(|| Error::Calibration(format!("no entry for {} / {family:?}", topology.name())))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(text)?;
        t.validate()?;
        Ok(t)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogicEstimate {
    pub luts: f64,
    pub flipflops: f64,
    /// Set when some core was evaluated outside the fitted domain.
    pub out_of_domain: bool,
}

/// One core's regression. A zero feedforward width evaluates to the
/// intercept and is flagged.
pub fn estimate_core_logic(
    topology: Topology,
    model: NeuronModelKind,
    ff_bits: u32,
    rec_bits: u32,
    table: &CalibrationTable,
) -> Result<LogicEstimate> {
    let e = table.lookup(topology, model)?;
    let rec = if topology.is_recurrent() { rec_bits } else { 0 };
    let out_of_domain = ff_bits == 0;
    if out_of_domain {
        log::warn!("feedforward width 0 is outside the calibrated domain");
    }
    Ok(LogicEstimate {
        luts: e.luts.eval(ff_bits, rec).max(0.0),
        flipflops: e.flipflops.eval(ff_bits, rec).max(0.0),
        out_of_domain,
    })
}

/// Sum of the per-core regressions.
pub fn estimate_logic(net: &NetworkConfig, table: &CalibrationTable) -> Result<LogicEstimate> {
    let mut total = LogicEstimate { luts: 0.0, flipflops: 0.0, out_of_domain: false };
    for c in &net.cores {
        let e = estimate_core_logic(
            c.topology,
            c.model,
            c.weight_bits as u32,
            c.rec_weight_bits.unwrap_or(0) as u32,
            table,
        )?;
        total.luts += e.luts;
        total.flipflops += e.flipflops;
        total.out_of_domain |= e.out_of_domain;
    }
    Ok(total)
}

pub fn estimate_resources(net: &NetworkConfig, table: &CalibrationTable, primitive_bits: usize) -> Result<ResourceEstimate> {
    let logic = estimate_logic(net, table)?;
    Ok(ResourceEstimate { luts: logic.luts, flipflops: logic.flipflops, brams: estimate_bram(net, primitive_bits)? })
}

/// Objective weights: `c_h + c_a = 1` and `c_lut + c_ff + c_bram = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub c_h: f64,
    pub c_a: f64,
    pub c_lut: f64,
    pub c_ff: f64,
    pub c_bram: f64,
}

impl CostWeights {
    pub fn new(c_h: f64, c_a: f64, c_lut: f64, c_ff: f64, c_bram: f64) -> Result<Self> {
        let w = Self { c_h, c_a, c_lut, c_ff, c_bram };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.c_h, self.c_a, self.c_lut, self.c_ff, self.c_bram];
        if let Some(v) = all.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Config(format!("cost weight {v} outside [0, 1]")));
        }
        if (self.c_h + self.c_a - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::Config(format!("c_h + c_a = {} must equal 1", self.c_h + self.c_a)));
        }
        let hw = self.c_lut + self.c_ff + self.c_bram;
        if (hw - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::Config(format!("c_lut + c_ff + c_bram = {hw} must equal 1")));
        }
        Ok(())
    }
}

impl Default for CostWeights {
    fn default() -> Self {
        Self { c_h: 0.5, c_a: 0.5, c_lut: 0.33, c_ff: 0.33, c_bram: 0.34 }
    }
}

/// Denominators for resource normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub max_luts: f64,
    pub max_flipflops: f64,
    pub max_brams: f64,
}

impl Normalization {
    /// Maximum over a candidate set. A resource that is zero everywhere
    /// gets denominator 1 so its normalized value stays 0.
    pub fn from_candidates(estimates: &[ResourceEstimate]) -> Result<Self> {
        if estimates.is_empty() {
            return Err(Error::Empty("candidate estimates"));
        }
        let max = |f: fn(&ResourceEstimate) -> f64| {
            let m = estimates.iter().map(f).fold(0.0, f64::max);
            if m > 0.0 {
                m
            } else {
                1.0
            }
        };
        Ok(Self { max_luts: max(|e| e.luts), max_flipflops: max(|e| e.flipflops), max_brams: max(|e| e.brams) })
    }

    /// Normalization by device capacity.
    pub fn device(luts: f64, flipflops: f64, brams: f64) -> Result<Self> {
        let n = Self { max_luts: luts, max_flipflops: flipflops, max_brams: brams };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        for v in [self.max_luts, self.max_flipflops, self.max_brams] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("normalization denominator {v} must be positive")));
            }
        }
        Ok(())
    }

    pub fn apply(&self, hw: &ResourceEstimate) -> (f64, f64, f64) {
        (hw.luts / self.max_luts, hw.flipflops / self.max_flipflops, hw.brams / self.max_brams)
    }
}

pub fn hw_cost(hw: &ResourceEstimate, weights: &CostWeights, norms: &Normalization) -> f64 {
    let (l, f, b) = norms.apply(hw);
    weights.c_h * (weights.c_lut * l + weights.c_ff * f + weights.c_bram * b)
}

pub fn acc_cost(accuracy: f64, weights: &CostWeights) -> f64 {
    weights.c_a * (1.0 - accuracy)
}

/// Hardware cost plus accuracy cost.
pub fn total_cost(hw: &ResourceEstimate, accuracy: f64, weights: &CostWeights, norms: &Normalization) -> Result<f64> {
    weights.validate()?;
    norms.validate()?;
    hw.validate()?;
    if !(0.0..=1.0).contains(&accuracy) {
        return Err(Error::OutOfRange(format!("accuracy {accuracy} outside [0, 1]")));
    }
    Ok(hw_cost(hw, weights, norms) + acc_cost(accuracy, weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cg::{DecayRate, SelectionUnits};
    use crate::fxp::ResetPolicy;
    use proptest::prelude::*;

    pub(crate) fn ff_lif(id: u8, src: usize, n: usize, bits: u8) -> CoreConfig {
        CoreConfig {
            core_id: id,
            topology: Topology::Ff,
            model: NeuronModelKind::Lif,
            neuron_count: n,
            source_count: src,
            weight_bits: bits,
            rec_weight_bits: None,
            potential_bits: 9,
            current_bits: None,
            beta: DecayRate::from_k(200),
            alpha: None,
            selection_units: SelectionUnits::ALL,
            threshold: 10,
            reset: ResetPolicy::ResetToZero,
            ff_queue_capacity: 16,
        }
    }

    #[test]
    fn bram_worked_example() {
        let mut c = ff_lif(0, 256, 128, 6);
        c.model = NeuronModelKind::Synaptic;
        c.current_bits = Some(8);
        c.alpha = Some(DecayRate::from_k(128));
        // 256 blocks * 16 rows * 48 bits; 128 state rows of 9 + 8 bits padded to 24
        let ff_bits = 256 * 16 * 48;
        assert_eq!(ff_bits, 196_608);
        assert_eq!(core_memory_bits(&c).unwrap(), vec![ff_bits, 3_072]);
        assert_eq!(brams_for_bits(ff_bits, DEFAULT_BRAM_PRIMITIVE_BITS), 6);
        assert_eq!(estimate_core_bram(&c, DEFAULT_BRAM_PRIMITIVE_BITS).unwrap(), 7);
    }

    #[test]
    fn doubling_weight_width_doubles_ff_bits() {
        let a = core_memory_bits(&ff_lif(0, 40, 30, 4)).unwrap()[0];
        let b = core_memory_bits(&ff_lif(0, 40, 30, 8)).unwrap()[0];
        assert_eq!(b, 2 * a);
    }

    #[test]
    fn recurrent_array_counted_for_all_to_all_only() {
        let mut c = ff_lif(0, 16, 16, 8);
        c.potential_bits = 16;
        c.topology = Topology::AtaF;
        c.rec_weight_bits = Some(8);
        assert_eq!(core_memory_bits(&c).unwrap().len(), 2);
        c.topology = Topology::AtaT;
        assert_eq!(core_memory_bits(&c).unwrap().len(), 3);
    }

    #[test]
    fn logic_regression_and_summation() {
        let fit = LinearFit { intercept: 100.0, per_ff_bit: 10.0, per_rec_bit: 5.0 };
        let table = CalibrationTable {
            label: "t".into(),
            entries: vec![CalibrationEntry { topology: Topology::AtaT, model: ModelFamily::Lif, luts: fit, flipflops: fit }],
        };
        let one = estimate_core_logic(Topology::AtaT, NeuronModelKind::Lif, 8, 4, &table).unwrap();
        assert_eq!(one.luts, 200.0);
        assert!(!one.out_of_domain);
        let zero = estimate_core_logic(Topology::AtaT, NeuronModelKind::If, 0, 0, &table).unwrap();
        assert_eq!(zero.luts, 100.0);
        assert!(zero.out_of_domain);
        assert!(matches!(
            estimate_core_logic(Topology::Ff, NeuronModelKind::Lif, 8, 0, &table),
            Err(Error::Calibration(_))
        ));

        let table = CalibrationTable::placeholder();
        let single = NetworkConfig { input_channels: 8, timesteps: 1, cores: vec![ff_lif(0, 8, 8, 6)] };
        let double = NetworkConfig {
            input_channels: 8,
            timesteps: 1,
            cores: vec![ff_lif(0, 8, 8, 6), ff_lif(1, 8, 8, 6)],
        };
        let a = estimate_logic(&single, &table).unwrap();
        let b = estimate_logic(&double, &table).unwrap();
        assert_eq!(b.luts, 2.0 * a.luts);
        assert_eq!(b.flipflops, 2.0 * a.flipflops);
    }

    #[test]
    fn calibration_json_round_trip() {
        let t = CalibrationTable::placeholder();
        assert_eq!(t.entries.len(), 6);
        let back = CalibrationTable::from_json(&t.to_json().unwrap()).unwrap();
        assert_eq!(back, t);
        let mut dup = t.clone();
        dup.entries.push(dup.entries[0].clone());
        assert!(CalibrationTable::from_json(&dup.to_json().unwrap()).is_err());
    }

    #[test]
    fn objective_worked_example() {
        let w = CostWeights::new(0.5, 0.5, 0.33, 0.33, 0.34).unwrap();
        let norms = Normalization::device(2.0, 2.0, 2.0).unwrap();
        let hw = ResourceEstimate { luts: 1.0, flipflops: 1.0, brams: 1.0 };
        let c = total_cost(&hw, 0.9, &w, &norms).unwrap();
        assert!((c - 0.30).abs() <= 1e-12, "{c}");
    }

    #[test]
    fn pure_accuracy_objective_at_perfect_accuracy() {
        let w = CostWeights::new(0.0, 1.0, 0.33, 0.33, 0.34).unwrap();
        let norms = Normalization::device(1.0, 1.0, 1.0).unwrap();
        let hw = ResourceEstimate { luts: 1.0, flipflops: 1.0, brams: 1.0 };
        assert_eq!(total_cost(&hw, 1.0, &w, &norms).unwrap(), 0.0);
    }

    #[test]
    fn weight_constraints_rejected() {
        assert!(CostWeights::new(0.6, 0.5, 0.33, 0.33, 0.34).is_err());
        assert!(CostWeights::new(0.5, 0.5, 0.5, 0.5, 0.5).is_err());
        assert!(CostWeights::new(1.5, -0.5, 0.33, 0.33, 0.34).is_err());
        assert!(CostWeights::new(0.5, 0.5, 0.330, 0.330, 0.340).is_ok());
    }

    #[test]
    fn candidate_max_normalization() {
        let est = [
            ResourceEstimate { luts: 10.0, flipflops: 0.0, brams: 2.0 },
            ResourceEstimate { luts: 40.0, flipflops: 0.0, brams: 1.0 },
        ];
        let n = Normalization::from_candidates(&est).unwrap();
        assert_eq!((n.max_luts, n.max_flipflops, n.max_brams), (40.0, 1.0, 2.0));
        assert_eq!(n.apply(&est[0]), (0.25, 0.0, 1.0));
    }

    fn weights() -> impl Strategy<Value = CostWeights> {
        (0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(h, a, b)| {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            CostWeights { c_h: h, c_a: 1.0 - h, c_lut: lo, c_ff: hi - lo, c_bram: 1.0 - hi }
        })
    }

    fn unit_hw() -> impl Strategy<Value = ResourceEstimate> {
        (0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(l, f, b)| ResourceEstimate { luts: l, flipflops: f, brams: b })
    }

    proptest! {
        #[test]
        fn cost_in_unit_interval(w in weights(), hw in unit_hw(), acc in 0.0..=1.0f64) {
            let n = Normalization::device(1.0, 1.0, 1.0).unwrap();
            let c = total_cost(&hw, acc, &w, &n).unwrap();
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&c));
        }

        #[test]
        fn cost_monotone(w in weights(), hw in unit_hw(), acc in 0.0..=1.0f64, d in 0.0..=1.0f64) {
            let n = Normalization::device(2.0, 2.0, 2.0).unwrap();
            let base = total_cost(&hw, acc, &w, &n).unwrap();
            let more = ResourceEstimate { luts: hw.luts + d, ..hw };
            prop_assert!(total_cost(&more, acc, &w, &n).unwrap() >= base);
            let better = (acc + d).min(1.0);
            prop_assert!(total_cost(&hw, better, &w, &n).unwrap() <= base);
        }

        #[test]
        fn common_rescale_keeps_ranking(w in weights(), a in unit_hw(), b in unit_hw(), s in 0.1..10.0f64) {
            let n1 = Normalization::device(1.0, 1.0, 1.0).unwrap();
            let n2 = Normalization::device(s, s, s).unwrap();
            let d1 = hw_cost(&a, &w, &n1) - hw_cost(&b, &w, &n1);
            let d2 = hw_cost(&a, &w, &n2) - hw_cost(&b, &w, &n2);
            prop_assert!(d1 * d2 >= -1e-15 || d1.abs() < 1e-12);
        }
    }
}
