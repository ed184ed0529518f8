//! Precision design-space exploration: candidate enumeration, cached
//! bit-exact accuracy evaluation, simulated annealing over the weighted
//! hardware/accuracy objective, and the configuration manifest.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cg::SelectionUnits;
use crate::cost::{
    estimate_core_bram, estimate_resources, hw_cost, total_cost, CalibrationTable, CostWeights, Normalization,
    ResourceEstimate, DEFAULT_BRAM_PRIMITIVE_BITS,
};
use crate::error::{Error, Result};
use crate::model::{Precision, TrainedModel};
use crate::neuron::{StateMemoryGeometry, SynapticMemoryGeometry};
use crate::system::{run_inference, EventSample, InferenceOptions, Network, NetworkConfig, QuantizedNetwork};

/// One point of the precision space. `rec_bits` is `None` when no layer
/// is recurrent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CandidateConfig {
    pub ff_bits: u8,
    pub rec_bits: Option<u8>,
    pub leak_bits: u8,
}

impl CandidateConfig {
    pub fn precision(&self) -> Precision {
        Precision { ff_bits: self.ff_bits, rec_bits: self.rec_bits.unwrap_or(self.ff_bits), leak_bits: self.leak_bits }
    }
}

impl fmt::Display for CandidateConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.rec_bits {
            Some(r) => write!(f, "ff={} rec={} leak={}", self.ff_bits, r, self.leak_bits),
            None => write!(f, "ff={} rec=- leak={}", self.ff_bits, self.leak_bits),
        }
    }
}

/// User-declared value lists for each knob.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnobRanges {
    pub ff: Vec<u8>,
    pub rec: Vec<u8>,
    pub leak: Vec<u8>,
}

fn sorted_range(values: &[u8], name: &str, lo: u8, hi: u8) -> Result<Vec<u8>> {
    if values.is_empty() {
        return Err(Error::Config(format!("{name} range is empty")));
    }
    if let Some(v) = values.iter().find(|v| !(lo..=hi).contains(*v)) {
        return Err(Error::Config(format!("{name} value {v} outside {lo}..={hi}")));
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    v.dedup();
    Ok(v)
}

/// Sorted knob values plus whether the recurrent knob is live.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSpace {
    ff: Vec<u8>,
    rec: Option<Vec<u8>>,
    leak: Vec<u8>,
}

impl CandidateSpace {
    pub fn new(ranges: &KnobRanges, recurrent: bool) -> Result<Self> {
        Ok(Self {
            ff: sorted_range(&ranges.ff, "feedforward width", 2, 32)?,
            rec: if recurrent { Some(sorted_range(&ranges.rec, "recurrent width", 2, 32)?) } else { None },
            leak: sorted_range(&ranges.leak, "leak precision", 1, 8)?,
        })
    }

    /// Cartesian product in lexicographic (ff, rec, leak) order.
    pub fn enumerate(&self) -> Vec<CandidateConfig> {
        let recs: Vec<Option<u8>> = match &self.rec {
            Some(r) => r.iter().copied().map(Some).collect(),
            None => vec![None],
        };
        let mut out = Vec::with_capacity(self.len());
        for &ff_bits in &self.ff {
            for &rec_bits in &recs {
                for &leak_bits in &self.leak {
                    out.push(CandidateConfig { ff_bits, rec_bits, leak_bits });
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.ff.len() * self.rec.as_ref().map_or(1, Vec::len) * self.leak.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, c: &CandidateConfig) -> bool {
        let rec_ok = match (&self.rec, c.rec_bits) {
            (Some(r), Some(v)) => r.contains(&v),
            (None, None) => true,
            _ => false,
        };
        self.ff.contains(&c.ff_bits) && rec_ok && self.leak.contains(&c.leak_bits)
    }

    /// Changes exactly one knob to an adjacent value of its range. The knob
    /// is uniform over knobs with at least two values; at a range end the
    /// only move is inward.
    pub fn neighbor<R: Rng>(&self, c: &CandidateConfig, rng: &mut R) -> Result<CandidateConfig> {
        if !self.contains(c) {
            return Err(Error::Config(format!("candidate {c} is not in the search space")));
        }
        let mut knobs: Vec<usize> = Vec::with_capacity(3);
        if self.ff.len() > 1 {
            knobs.push(0);
        }
        if self.rec.as_ref().is_some_and(|r| r.len() > 1) {
            knobs.push(1);
        }
        if self.leak.len() > 1 {
            knobs.push(2);
        }
        if knobs.is_empty() {
            return Ok(*c);
        }
        let knob = knobs[rng.gen_range(0..knobs.len())];
        let (range, value) = match knob {
            0 => (&self.ff, c.ff_bits),
            1 => (self.rec.as_ref().expect("live knob"), c.rec_bits.expect("recurrent candidate")),
            _ => (&self.leak, c.leak_bits),
        };
        let pos = range.iter().position(|&v| v == value).expect("contained");
        let next = if pos == 0 {
            1
        } else if pos + 1 == range.len() || rng.gen_bool(0.5) {
            pos - 1
        } else {
            pos + 1
        };
        let mut out = *c;
        match knob {
            0 => out.ff_bits = range[next],
            1 => out.rec_bits = Some(range[next]),
            _ => out.leak_bits = range[next],
        }
        Ok(out)
    }
}

pub fn enumerate_candidates(ranges: &KnobRanges, recurrent: bool) -> Result<Vec<CandidateConfig>> {
    Ok(CandidateSpace::new(ranges, recurrent)?.enumerate())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    pub t_start: f64,
    pub t_min: f64,
    /// Cooling factor applied once per temperature level.
    pub alpha: f64,
    /// Proposals per temperature = max(1, candidates / k_divisor).
    pub k_divisor: usize,
    pub seed: u64,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self { t_start: 1.0, t_min: 1e-3, alpha: 0.95, k_divisor: 2, seed: 0 }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("cooling factor {} must lie in (0, 1)", self.alpha)));
        }
        if !(self.t_min > 0.0 && self.t_min < self.t_start && self.t_start.is_finite()) {
            return Err(Error::Config(format!(
                "temperatures must satisfy 0 < t_min ({}) < t_start ({})",
                self.t_min, self.t_start
            )));
        }
        if self.k_divisor == 0 {
            return Err(Error::Config("evaluation divisor k must be at least 1".into()));
        }
        Ok(())
    }
}

/// One proposal of the walk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealStep {
    pub temperature: f64,
    pub current: CandidateConfig,
    pub current_cost: f64,
    pub proposal: CandidateConfig,
    pub proposal_cost: f64,
    pub delta: f64,
    /// Uniform draw compared against `exp(-delta / T)`; only taken when
    /// `delta > 0`.
    pub draw: Option<f64>,
    pub accepted: bool,
    pub best: CandidateConfig,
    pub best_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealResult {
    pub initial: CandidateConfig,
    pub initial_cost: f64,
    pub best: CandidateConfig,
    pub best_cost: f64,
    pub history: Vec<AnnealStep>,
}

/// Seeded simulated annealing over `space`. `cost` is queried for the
/// initial point and every proposal.
pub fn simulated_annealing<F>(space: &CandidateSpace, params: &SearchParams, mut cost: F) -> Result<AnnealResult>
where
    F: FnMut(&CandidateConfig) -> Result<f64>,
{
    params.validate()?;
    let cfgs = space.enumerate();
    if cfgs.is_empty() {
        return Err(Error::Empty("candidate space"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let initial = cfgs[rng.gen_range(0..cfgs.len())];
    let initial_cost = cost(&initial)?;
    let (mut cur, mut cur_cost) = (initial, initial_cost);
    let (mut best, mut best_cost) = (initial, initial_cost);
    let per_level = (cfgs.len() / params.k_divisor).max(1);
    let mut history = Vec::new();
    let mut t = params.t_start;
    while t > params.t_min {
        for _ in 0..per_level {
            let proposal = space.neighbor(&cur, &mut rng)?;
            let proposal_cost = cost(&proposal)?;
            let delta = proposal_cost - cur_cost;
            let (accepted, draw) = if delta <= 0.0 {
                (true, None)
            } else {
                let u: f64 = rng.gen();
                (u < (-delta / t).exp(), Some(u))
            };
            let step_current = (cur, cur_cost);
            if accepted {
                cur = proposal;
                cur_cost = proposal_cost;
                if cur_cost < best_cost {
                    best = cur;
                    best_cost = cur_cost;
                }
            }
            history.push(AnnealStep {
                temperature: t,
                current: step_current.0,
                current_cost: step_current.1,
                proposal,
                proposal_cost,
                delta,
                draw,
                accepted,
                best,
                best_cost,
            });
        }
        t *= params.alpha;
    }
    Ok(AnnealResult { initial, initial_cost, best, best_cost, history })
}

/// Memoized accuracies keyed by candidate.
#[derive(Debug, Default)]
pub struct AccuracyCache {
    values: Mutex<HashMap<CandidateConfig, f64>>,
    simulations: AtomicUsize,
    hits: AtomicUsize,
}

impl AccuracyCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Candidates simulated so far (one per distinct candidate).
    pub fn simulations(&self) -> usize {
        self.simulations.load(Ordering::SeqCst)
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn get(&self, c: &CandidateConfig) -> Option<f64> {
        self.values.lock().expect("cache lock poisoned").get(c).copied()
    }

    pub fn insert(&self, c: CandidateConfig, accuracy: f64) {
        self.values.lock().expect("cache lock poisoned").insert(c, accuracy);
    }

    /// Evaluates every uncached candidate in parallel. The stored values
    /// are the same as sequential evaluation would produce.
    pub fn prefill(&self, cfgs: &[CandidateConfig], model: &TrainedModel, eval_set: &[EventSample]) -> Result<()> {
        let mut todo: Vec<CandidateConfig> = cfgs.iter().copied().filter(|c| self.get(c).is_none()).collect();
        todo.sort_unstable();
        todo.dedup();
        let results: Vec<Result<(CandidateConfig, f64)>> = todo
            .par_iter()
            .map(|c| accuracy_uncached(c, model, eval_set).map(|a| (*c, a)))
            .collect();
        for r in results {
            let (c, a) = r?;
            self.simulations.fetch_add(1, Ordering::SeqCst);
            self.insert(c, a);
        }
        Ok(())
    }
}

/// Quantizes `model` at `c`, or `None` when the candidate cannot be built.
pub fn quantize_candidate(c: &CandidateConfig, model: &TrainedModel) -> Option<QuantizedNetwork> {
    match model.quantize(c.precision()) {
        Ok(q) => Some(q),
        Err(e) => {
            log::warn!("candidate {c} is infeasible: {e}");
            None
        }
    }
}

fn accuracy_uncached(c: &CandidateConfig, model: &TrainedModel, eval_set: &[EventSample]) -> Result<f64> {
    if eval_set.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let Some(q) = quantize_candidate(c, model) else {
        return Ok(0.0);
    };
    let mut net = match Network::from_quantized(&q) {
        Ok(n) => n,
        Err(e) => {
            log::warn!("candidate {c} could not be loaded: {e}");
            return Ok(0.0);
        }
    };
    let opts = InferenceOptions::default();
    let mut correct = 0usize;
    for s in eval_set {
        if run_inference(&mut net, s, &opts)?.predicted == s.label as usize {
            correct += 1;
        }
    }
    Ok(correct as f64 / eval_set.len() as f64)
}

/// Fraction of `eval_set` classified correctly by the bit-exact pipeline
/// at precision `c`. Infeasible candidates score 0.
pub fn evaluate_accuracy(
    c: &CandidateConfig,
    model: &TrainedModel,
    eval_set: &[EventSample],
    cache: &AccuracyCache,
) -> Result<f64> {
    if let Some(a) = cache.get(c) {
        cache.hits.fetch_add(1, Ordering::SeqCst);
        return Ok(a);
    }
    let a = accuracy_uncached(c, model, eval_set)?;
    cache.simulations.fetch_add(1, Ordering::SeqCst);
    cache.insert(*c, a);
    Ok(a)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExploreOptions {
    pub ranges: KnobRanges,
    pub weights: CostWeights,
    pub params: SearchParams,
    pub calibration: CalibrationTable,
    pub bram_primitive_bits: usize,
    /// Device capacities; `None` normalizes by the candidate maximum.
    pub device: Option<Normalization>,
    /// Evaluate every candidate's accuracy in parallel before the walk.
    pub prefetch: bool,
}

impl ExploreOptions {
    pub fn new(ranges: KnobRanges) -> Self {
        Self {
            ranges,
            weights: CostWeights::default(),
            params: SearchParams::default(),
            calibration: CalibrationTable::placeholder(),
            bram_primitive_bits: DEFAULT_BRAM_PRIMITIVE_BITS,
            device: None,
            prefetch: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRecord {
    pub config: CandidateConfig,
    /// `None` for infeasible candidates, which are charged the full
    /// hardware weight.
    pub resources: Option<ResourceEstimate>,
    pub hw_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExploreReport {
    pub candidates: Vec<CandidateRecord>,
    pub normalization: Normalization,
    pub anneal: AnnealResult,
    pub best_accuracy: f64,
    pub best_network: QuantizedNetwork,
    pub simulations: usize,
    pub cache_hits: usize,
}

fn resources_at(c: &CandidateConfig, model: &TrainedModel, opts: &ExploreOptions) -> Result<Option<ResourceEstimate>> {
    let Some(q) = quantize_candidate(c, model) else {
        return Ok(None);
    };
    estimate_resources(&q.config, &opts.calibration, opts.bram_primitive_bits).map(Some)
}

/// Full search: hardware costs for every candidate, then the annealing walk
/// with cached accuracies.
pub fn explore(model: &TrainedModel, eval_set: &[EventSample], opts: &ExploreOptions) -> Result<ExploreReport> {
    opts.weights.validate()?;
    opts.params.validate()?;
    opts.calibration.validate()?;
    model.validate()?;
    if eval_set.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let space = CandidateSpace::new(&opts.ranges, model.is_recurrent())?;
    let cfgs = space.enumerate();
    let mut resources = Vec::with_capacity(cfgs.len());
    for c in &cfgs {
        resources.push(resources_at(c, model, opts)?);
    }
    let feasible: Vec<ResourceEstimate> = resources.iter().flatten().copied().collect();
    if feasible.is_empty() {
        return Err(Error::Config("no candidate in the search space can be built".into()));
    }
    let normalization = match opts.device {
        Some(n) => {
            n.validate()?;
            n
        }
        None => Normalization::from_candidates(&feasible)?,
    };
    let candidates: Vec<CandidateRecord> = cfgs
        .iter()
        .zip(&resources)
        .map(|(c, r)| CandidateRecord {
            config: *c,
            resources: *r,
            hw_cost: r.map_or(opts.weights.c_h, |hw| hw_cost(&hw, &opts.weights, &normalization)),
        })
        .collect();
    let hw_by_cfg: HashMap<CandidateConfig, f64> = candidates.iter().map(|r| (r.config, r.hw_cost)).collect();

    let cache = AccuracyCache::new();
    if opts.prefetch {
        cache.prefill(&cfgs, model, eval_set)?;
    }
    let anneal = simulated_annealing(&space, &opts.params, |c| {
        let acc = evaluate_accuracy(c, model, eval_set, &cache)?;
        Ok(hw_by_cfg[c] + crate::cost::acc_cost(acc, &opts.weights))
    })?;
    let best_accuracy = evaluate_accuracy(&anneal.best, model, eval_set, &cache)?;
    let best_network = quantize_candidate(&anneal.best, model)
        .ok_or_else(|| Error::Config(format!("best candidate {} cannot be built", anneal.best)))?;
    Ok(ExploreReport {
        candidates,
        normalization,
        anneal,
        best_accuracy,
        best_network,
        simulations: cache.simulations(),
        cache_hits: cache.hits(),
    })
}

impl ExploreReport {
    /// Line-oriented search report.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let n = &self.normalization;
        let _ = writeln!(s, "candidates {}", self.candidates.len());
        let _ = writeln!(s, "normalization luts={} flipflops={} brams={}", n.max_luts, n.max_flipflops, n.max_brams);
        for r in &self.candidates {
            match r.resources {
                Some(hw) => {
                    let _ = writeln!(
                        s,
                        "candidate {} luts={} flipflops={} brams={} hw_cost={:.9}",
                        r.config, hw.luts, hw.flipflops, hw.brams, r.hw_cost
                    );
                }
                None => {
                    let _ = writeln!(s, "candidate {} infeasible hw_cost={:.9}", r.config, r.hw_cost);
                }
            }
        }
        let a = &self.anneal;
        let _ = writeln!(s, "initial {} cost={:.9}", a.initial, a.initial_cost);
        for (i, h) in a.history.iter().enumerate() {
            let draw = h.draw.map_or_else(|| "-".to_string(), |u| format!("{u:.9}"));
            let _ = writeln!(
                s,
                "iter {i} T={:.9} proposal=[{}] delta={:.9} draw={draw} accepted={} best=[{}] best_cost={:.9}",
                h.temperature, h.proposal, h.delta, h.accepted as u8, h.best, h.best_cost
            );
        }
        let _ = writeln!(s, "best {} cost={:.9} accuracy={:.6}", a.best, a.best_cost, self.best_accuracy);
        let _ = writeln!(s, "simulations {} cache_hits {}", self.simulations, self.cache_hits);
        s
    }

    pub fn best_resources(&self) -> Option<ResourceEstimate> {
        self.candidates.iter().find(|r| r.config == self.anneal.best).and_then(|r| r.resources)
    }

    pub fn best_total_cost(&self, weights: &CostWeights) -> Result<f64> {
        let hw = self.best_resources().ok_or_else(|| Error::Config("best candidate has no estimate".into()))?;
        total_cost(&hw, self.best_accuracy, weights, &self.normalization)
    }
}

pub const MANIFEST_KIND: &str = "manifest";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreGeometry {
    pub core_id: u8,
    pub feedforward: SynapticMemoryGeometry,
    pub recurrent: Option<SynapticMemoryGeometry>,
    pub state: StateMemoryGeometry,
    pub brams: usize,
}

fn geometry_of(net: &NetworkConfig) -> Result<Vec<CoreGeometry>> {
    net.cores
        .iter()
        .map(|c| {
            Ok(CoreGeometry {
                core_id: c.core_id,
                feedforward: c.ff_geometry()?,
                recurrent: c.rec_geometry()?,
                state: c.state_geometry()?,
                brams: estimate_core_bram(c, DEFAULT_BRAM_PRIMITIVE_BITS)?,
            })
        })
        .collect()
}

/// Every design-time parameter of a chosen configuration, plus pointers to
/// its quantized weights and encoded evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub schema_version: u32,
    pub candidate: CandidateConfig,
    pub network: NetworkConfig,
    pub geometry: Vec<CoreGeometry>,
    pub weights_file: String,
    pub dataset_file: Option<String>,
    pub accuracy: f64,
    pub total_cost: f64,
    pub resources: ResourceEstimate,
}

pub fn emit_manifest(
    best: &CandidateConfig,
    net: &QuantizedNetwork,
    weights_file: &str,
    dataset_file: Option<&str>,
    accuracy: f64,
    total_cost: f64,
    resources: ResourceEstimate,
) -> Result<Manifest> {
    net.validate()?;
    let m = Manifest {
        kind: MANIFEST_KIND.into(),
        schema_version: MANIFEST_SCHEMA_VERSION,
        candidate: *best,
        network: net.config.clone(),
        geometry: geometry_of(&net.config)?,
        weights_file: weights_file.into(),
        dataset_file: dataset_file.map(Into::into),
        accuracy,
        total_cost,
        resources,
    };
    m.validate()?;
    Ok(m)
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        if self.kind != MANIFEST_KIND {
            return Err(Error::Parse(format!("expected kind \"{MANIFEST_KIND}\", found \"{}\"", self.kind)));
        }
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Parse(format!("unsupported manifest schema {}", self.schema_version)));
        }
        self.network.validate()?;
        if geometry_of(&self.network)? != self.geometry {
            return Err(Error::Config("manifest geometry does not match its network parameters".into()));
        }
        let units = SelectionUnits::for_leak_bits(self.candidate.leak_bits);
        for c in &self.network.cores {
            let rec_ok = match c.rec_weight_bits {
                Some(r) => self.candidate.rec_bits == Some(r),
                None => true,
            };
            if c.weight_bits != self.candidate.ff_bits || !rec_ok || c.selection_units != units {
                return Err(Error::Config(format!(
                    "core {} parameters disagree with candidate {}",
                    c.core_id, self.candidate
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.accuracy) {
            return Err(Error::OutOfRange(format!("manifest accuracy {}", self.accuracy)));
        }
        self.resources.validate()
    }

    /// Checks that `weights` were quantized for this manifest.
    pub fn check_weights(&self, weights: &QuantizedNetwork) -> Result<()> {
        weights.validate()?;
        if weights.config != self.network {
            return Err(Error::Config("weight file configuration differs from the manifest".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fxp::ResetPolicy;
    use crate::model::TrainedLayer;
    use crate::neuron::NeuronModelKind;
    use crate::system::Topology;
    use proptest::prelude::*;

    fn fig_ranges() -> KnobRanges {
        KnobRanges { ff: vec![4, 8, 12, 16], rec: vec![4, 8, 12, 16], leak: vec![3, 8] }
    }

    #[test]
    fn enumeration_sizes() {
        assert_eq!(enumerate_candidates(&fig_ranges(), true).unwrap().len(), 32);
        assert_eq!(enumerate_candidates(&fig_ranges(), false).unwrap().len(), 8);
        let one = KnobRanges { ff: vec![8], rec: vec![8], leak: vec![8] };
        assert_eq!(enumerate_candidates(&one, true).unwrap().len(), 1);
        let empty = KnobRanges { ff: vec![], rec: vec![8], leak: vec![8] };
        assert!(enumerate_candidates(&empty, true).is_err());
    }

    #[test]
    fn enumeration_is_lexicographic() {
        let c = enumerate_candidates(&fig_ranges(), true).unwrap();
        assert!(c.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(c[0], CandidateConfig { ff_bits: 4, rec_bits: Some(4), leak_bits: 3 });
        assert_eq!(c[1], CandidateConfig { ff_bits: 4, rec_bits: Some(4), leak_bits: 8 });
    }

    #[test]
    fn neighbor_adjacency() {
        let space = CandidateSpace::new(&fig_ranges(), true).unwrap();
        let start = CandidateConfig { ff_bits: 8, rec_bits: Some(8), leak_bits: 8 };
        let allowed = [
            CandidateConfig { ff_bits: 4, ..start },
            CandidateConfig { ff_bits: 12, ..start },
            CandidateConfig { rec_bits: Some(4), ..start },
            CandidateConfig { rec_bits: Some(12), ..start },
            CandidateConfig { leak_bits: 3, ..start },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..500 {
            let n = space.neighbor(&start, &mut rng).unwrap();
            assert!(allowed.contains(&n), "{n}");
            seen.insert(n);
        }
        assert_eq!(seen.len(), allowed.len());
    }

    #[test]
    fn neighbor_clamps_and_toggles() {
        let two = KnobRanges { ff: vec![4, 8], rec: vec![4], leak: vec![8] };
        let space = CandidateSpace::new(&two, false).unwrap();
        let a = CandidateConfig { ff_bits: 4, rec_bits: None, leak_bits: 8 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let b = space.neighbor(&a, &mut rng).unwrap();
            assert_eq!(b.ff_bits, 8);
            assert_eq!(space.neighbor(&b, &mut rng).unwrap(), a);
        }
        let lo = CandidateConfig { ff_bits: 4, rec_bits: Some(8), leak_bits: 8 };
        let space = CandidateSpace::new(&fig_ranges(), true).unwrap();
        for _ in 0..100 {
            let n = space.neighbor(&lo, &mut rng).unwrap();
            assert_ne!(n.ff_bits, 2);
            assert!(n.ff_bits >= 4);
        }
    }

    #[test]
    fn params_validated() {
        assert!(SearchParams::default().validate().is_ok());
        assert!(SearchParams { alpha: 1.0, ..Default::default() }.validate().is_err());
        assert!(SearchParams { t_min: 2.0, ..Default::default() }.validate().is_err());
        assert!(SearchParams { k_divisor: 0, ..Default::default() }.validate().is_err());
    }

    fn table_cost(c: &CandidateConfig) -> f64 {
        let r = c.rec_bits.unwrap_or(0) as f64;
        ((c.ff_bits as f64 - 9.0).powi(2) + (r - 7.0).powi(2)) / 200.0 + if c.leak_bits == 3 { 0.05 } else { 0.0 }
    }

    #[test]
    fn one_proposal_per_level_when_k_equals_space() {
        let space = CandidateSpace::new(&fig_ranges(), true).unwrap();
        let p = SearchParams { t_start: 1.0, t_min: 0.5, alpha: 0.5, k_divisor: 32, seed: 9 };
        let r = simulated_annealing(&space, &p, |c| Ok(table_cost(c))).unwrap();
        // levels at T = 1.0 only (0.5 is not > t_min)
        assert_eq!(r.history.len(), 1);
    }

    #[test]
    fn zero_delta_always_accepted() {
        let space = CandidateSpace::new(&fig_ranges(), true).unwrap();
        let p = SearchParams { seed: 4, ..Default::default() };
        let r = simulated_annealing(&space, &p, |_| Ok(0.5)).unwrap();
        assert!(r.history.iter().all(|h| h.accepted && h.draw.is_none()));
    }

    #[test]
    fn history_is_auditable_and_reproducible() {
        let space = CandidateSpace::new(&fig_ranges(), true).unwrap();
        let p = SearchParams { seed: 11, k_divisor: 3, ..Default::default() };
        let a = simulated_annealing(&space, &p, |c| Ok(table_cost(c))).unwrap();
        let b = simulated_annealing(&space, &p, |c| Ok(table_cost(c))).unwrap();
        assert_eq!(a, b);
        let mut prev = a.initial_cost;
        for h in &a.history {
            assert!(h.best_cost <= prev);
            prev = h.best_cost;
            match h.draw {
                None => assert!(h.delta <= 0.0 && h.accepted),
                Some(u) => assert_eq!(h.accepted, u < (-h.delta / h.temperature).exp()),
            }
        }
        let optimum = space.enumerate().into_iter().map(|c| table_cost(&c)).fold(f64::INFINITY, f64::min);
        assert_eq!(a.best_cost, optimum);
    }

    fn tiny_model() -> TrainedModel {
        // 2 channels -> 2 outputs, channel c drives output c
        TrainedModel {
            input_channels: 2,
            timesteps: 4,
            state_headroom_bits: 4,
            ff_queue_capacity: 4,
            layers: vec![TrainedLayer {
                topology: Topology::Ff,
                model: NeuronModelKind::Lif,
                neuron_count: 2,
                threshold: 0.9,
                beta: 0.5,
                alpha: None,
                reset: ResetPolicy::ResetToZero,
                ff: vec![1.0, -0.5, -0.5, 1.0],
                rec: None,
            }],
        }
    }

    fn tiny_set() -> Vec<EventSample> {
        (0..2u8).map(|c| EventSample { steps: vec![vec![c]; 4], label: c as u16 }).collect()
    }

    #[test]
    fn accuracy_is_memoized() {
        let cache = AccuracyCache::new();
        let c = CandidateConfig { ff_bits: 8, rec_bits: None, leak_bits: 8 };
        let a = evaluate_accuracy(&c, &tiny_model(), &tiny_set(), &cache).unwrap();
        assert_eq!(a, 1.0);
        assert_eq!(cache.simulations(), 1);
        let b = evaluate_accuracy(&c, &tiny_model(), &tiny_set(), &cache).unwrap();
        assert_eq!(a, b);
        assert_eq!((cache.simulations(), cache.hits()), (1, 1));
    }

    #[test]
    fn prefill_matches_sequential() {
        let cfgs = enumerate_candidates(&KnobRanges { ff: vec![2, 4, 8], rec: vec![], leak: vec![1, 8] }, false).unwrap();
        let par = AccuracyCache::new();
        par.prefill(&cfgs, &tiny_model(), &tiny_set()).unwrap();
        let seq = AccuracyCache::new();
        for c in &cfgs {
            evaluate_accuracy(c, &tiny_model(), &tiny_set(), &seq).unwrap();
            assert_eq!(par.get(c), seq.get(c));
        }
        assert_eq!(par.simulations(), cfgs.len());
    }

    #[test]
    fn infeasible_candidate_scores_zero() {
        let mut m = tiny_model();
        m.layers[0].neuron_count = 300;
        m.layers[0].ff = vec![0.1; 600];
        let cache = AccuracyCache::new();
        let c = CandidateConfig { ff_bits: 8, rec_bits: None, leak_bits: 8 };
        // the model itself is well-formed; only the hardware cannot hold it
        assert_eq!(evaluate_accuracy(&c, &m, &tiny_set(), &cache).unwrap(), 0.0);
    }

    #[test]
    fn explore_and_manifest_round_trip() {
        let mut opts = ExploreOptions::new(KnobRanges { ff: vec![4, 8], rec: vec![4], leak: vec![3, 8] });
        opts.params.seed = 5;
        let report = explore(&tiny_model(), &tiny_set(), &opts).unwrap();
        assert_eq!(report.candidates.len(), 4);
        assert!(report.simulations <= 4);
        assert_eq!(report.render(), explore(&tiny_model(), &tiny_set(), &opts).unwrap().render());
        opts.prefetch = true;
        let pre = explore(&tiny_model(), &tiny_set(), &opts).unwrap();
        assert_eq!(pre.anneal, report.anneal);

        let cost = report.best_total_cost(&opts.weights).unwrap();
        let m = emit_manifest(
            &report.anneal.best,
            &report.best_network,
            "w.bin",
            None,
            report.best_accuracy,
            cost,
            report.best_resources().unwrap(),
        )
        .unwrap();
        let back = Manifest::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        back.check_weights(&report.best_network).unwrap();

        let mut bad = m.clone();
        bad.geometry[0].feedforward.rows_per_block += 1;
        assert!(Manifest::from_json(&bad.to_json().unwrap()).is_err());
        let mut bad = m;
        bad.candidate.ff_bits = 12;
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn neighbor_changes_exactly_one_knob(seed in any::<u64>(), idx in 0usize..32) {
            let space = CandidateSpace::new(&fig_ranges(), true).unwrap();
            let c = space.enumerate()[idx];
            let n = space.neighbor(&c, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let changed = (c.ff_bits != n.ff_bits) as u8 + (c.rec_bits != n.rec_bits) as u8 + (c.leak_bits != n.leak_bits) as u8;
            prop_assert_eq!(changed, 1);
            prop_assert!(space.contains(&n));
        }
    }
}
