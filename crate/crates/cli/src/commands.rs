//! Subcommand implementations. Each returns the text destined for stdout.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use spikecore::cost::{estimate_core_bram, estimate_core_logic, estimate_resources, CalibrationTable};
use spikecore::dataset::Dataset;
use spikecore::dse::{emit_manifest, enumerate_candidates, explore, ExploreOptions, Manifest};
use spikecore::model::encode_quantized;
use spikecore::system::{
    run_inference, EventSample, InferenceOptions, InferenceResult, Network, NetworkConfig, QuantizedNetwork,
};

use crate::encode::{encode_records, load_records};
use crate::error::{CliError, CliResult};
use crate::io::{load_dataset, load_manifest, load_network, load_trained, read_text, write_bytes};
use crate::project::{EncoderMode, Project};

pub const REPORT_FILE: &str = "report.txt";
pub const WEIGHTS_FILE: &str = "weights.spkq";
pub const DATASET_FILE: &str = "eval.spke";
pub const MANIFEST_FILE: &str = "manifest.json";

fn wire_name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}

fn load_project(path: Option<&Path>) -> CliResult<Option<Project>> {
    path.map(Project::load).transpose()
}

fn require<'a>(p: Option<&'a PathBuf>, what: &str) -> CliResult<&'a PathBuf> {
    p.ok_or_else(|| CliError::config(format!("{what} is required")))
}

fn check_dataset(d: &Dataset, net: &NetworkConfig) -> CliResult<()> {
    if d.channels != net.input_channels || d.timesteps != net.timesteps {
        return Err(CliError::config(format!(
            "dataset has {} channels x {} steps, network expects {} x {}",
            d.channels, d.timesteps, net.input_channels, net.timesteps
        )));
    }
    Ok(())
}

pub struct EncodeArgs {
    pub config: Option<PathBuf>,
    pub inputs: Vec<PathBuf>,
    pub timesteps: Option<usize>,
    pub bernoulli: bool,
    pub downscale: Option<u32>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

pub fn encode(a: &EncodeArgs) -> CliResult<String> {
    let project = load_project(a.config.as_deref())?;
    let timesteps = match (a.timesteps, &project) {
        (Some(t), Some(p)) if t != p.config.network.timesteps => {
            return Err(CliError::config(format!(
                "--timesteps {t} disagrees with the project's {}",
                p.config.network.timesteps
            )))
        }
        (Some(t), _) => t,
        (None, Some(p)) => p.config.network.timesteps,
        (None, None) => return Err(CliError::config("--timesteps or --config is required")),
    };
    let downscale = a.downscale.or(project.as_ref().and_then(|p| p.config.encoder.downscale));
    if downscale == Some(0) {
        return Err(CliError::config("downscale factor must be at least 1"));
    }
    let bernoulli = a.bernoulli || project.as_ref().is_some_and(|p| p.config.encoder.mode == EncoderMode::Bernoulli);
    let seed = match (bernoulli, a.seed.or(project.as_ref().and_then(|p| p.config.seed))) {
        (true, None) => return Err(CliError::config("Bernoulli encoding needs an explicit --seed")),
        (true, s) => s,
        (false, _) => None,
    };
    let records = load_records(&a.inputs, downscale)?;
    if let Some(p) = &project {
        let want = p.config.network.input_channels;
        if records[0].1.len() != want {
            return Err(CliError::config(format!("inputs have {} channels, project expects {want}", records[0].1.len())));
        }
    }
    let d = encode_records(&records, timesteps, seed)?;
    let out = require(a.out.as_ref(), "--out")?;
    write_bytes(out, &d.to_bytes()?)?;
    Ok(format!("encoded {} samples, {} channels, {} steps\n", d.samples.len(), d.channels, d.timesteps))
}

pub struct SimulateArgs {
    pub config: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub threads: usize,
}

/// Runs every sample through a fresh copy of the loaded network.
fn run_all(
    base: &Network,
    samples: &[EventSample],
    opts: &InferenceOptions,
    parallel: bool,
) -> CliResult<Vec<InferenceResult>> {
    let run = |net: &mut Network, s: &EventSample| run_inference(net, s, opts).map_err(CliError::from);
    if parallel {
        samples.par_iter().map_init(|| base.clone(), run).collect()
    } else {
        let mut net = base.clone();
        samples.iter().map(|s| run(&mut net, s)).collect()
    }
}

fn render_simulation(samples: &[EventSample], results: &[InferenceResult]) -> String {
    let correct = samples.iter().zip(results).filter(|(s, r)| r.predicted == s.label as usize).count();
    let mut out = String::new();
    let _ = writeln!(out, "samples {}", samples.len());
    let _ = writeln!(out, "correct {correct}");
    let _ = writeln!(out, "accuracy {:.6}", correct as f64 / samples.len().max(1) as f64);
    for (i, (s, r)) in samples.iter().zip(results).enumerate() {
        let counts: Vec<String> = r.counts.iter().map(u32::to_string).collect();
        let _ = writeln!(out, "sample {i} label {} predicted {} counts {}", s.label, r.predicted, counts.join(","));
    }
    out
}

fn render_trace(results: &[InferenceResult]) -> String {
    let mut out = String::new();
    for (i, r) in results.iter().enumerate() {
        let _ = writeln!(out, "# sample {i}");
        for t in r.trace.iter().flatten() {
            let _ = writeln!(out, "{} {} {} {}", t.step, t.source, t.packet.kind.name(), t.packet.address);
        }
    }
    out
}

pub fn simulate(a: &SimulateArgs) -> CliResult<String> {
    let project = load_project(a.config.as_deref())?;
    let model = match (&a.model, &project) {
        (Some(m), _) => m.clone(),
        (None, Some(p)) => p.config.model.as_deref().map(|m| p.resolve(m)).ok_or_else(|| {
            CliError::config("--model is required when the project names no model")
        })?,
        (None, None) => return Err(CliError::config("--model is required")),
    };
    let (q, manifest) = load_network(&model)?;
    let dataset_path = a
        .dataset
        .clone()
        .or_else(|| {
            let m = manifest.as_ref()?.dataset_file.as_deref()?;
            Some(model.parent().unwrap_or(Path::new("")).join(m))
        })
        .or_else(|| project.as_ref().and_then(|p| p.config.dataset.as_deref().map(|d| p.resolve(d))));
    let dataset_path = require(dataset_path.as_ref(), "--dataset")?;
    let d = load_dataset(dataset_path)?;
    check_dataset(&d, &q.config)?;
    let base = Network::from_quantized(&q)?;
    let opts = InferenceOptions { record_packets: a.trace.is_some(), ..InferenceOptions::default() };
    let results = run_all(&base, &d.samples, &opts, a.threads > 1)?;
    if let Some(t) = &a.trace {
        write_bytes(t, render_trace(&results).as_bytes())?;
    }
    Ok(render_simulation(&d.samples, &results))
}

/// Fraction of `samples` the network classifies correctly.
fn accuracy_of(q: &QuantizedNetwork, samples: &[EventSample], parallel: bool) -> CliResult<f64> {
    let base = Network::from_quantized(q)?;
    let results = run_all(&base, samples, &InferenceOptions::default(), parallel)?;
    let correct = samples.iter().zip(&results).filter(|(s, r)| r.predicted == s.label as usize).count();
    Ok(correct as f64 / samples.len() as f64)
}

fn calibration_of(p: &Project) -> CliResult<CalibrationTable> {
    match &p.config.calibration {
        None => Ok(CalibrationTable::placeholder()),
        Some(rel) => {
            let path = p.resolve(rel);
            CalibrationTable::from_json(&read_text(&path)?).map_err(|e| {
                let e = CliError::from(e).context(&path);
                CliError::new("calibration", e.message)
            })
        }
    }
}

pub struct ExploreArgs {
    pub config: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: usize,
    pub out: Option<PathBuf>,
}

pub fn run_explore(a: &ExploreArgs) -> CliResult<String> {
    let project = Project::load(require(a.config.as_ref(), "--config")?)?;
    let model_path = a
        .model
        .clone()
        .or_else(|| project.config.model.as_deref().map(|m| project.resolve(m)));
    let model = load_trained(require(model_path.as_ref(), "--model")?)?;
    project.check_model(&model)?;
    let dataset_path = a
        .dataset
        .clone()
        .or_else(|| project.config.dataset.as_deref().map(|d| project.resolve(d)));
    let dataset = load_dataset(require(dataset_path.as_ref(), "--dataset")?)?;
    if dataset.channels != model.input_channels || dataset.timesteps != model.timesteps {
        return Err(CliError::config("dataset shape does not match the model"));
    }
    let out = require(a.out.as_ref(), "--out")?;

    let c = &project.config;
    let mut opts = ExploreOptions::new(c.ranges.clone());
    opts.weights = c.weights;
    opts.params = c.search;
    opts.params.seed = project.seed(a.seed);
    opts.calibration = calibration_of(&project)?;
    opts.bram_primitive_bits = c.bram_primitive_bits;
    opts.device = c.device;
    opts.prefetch = a.threads > 1;
    let report = explore(&model, &dataset.samples, &opts)?;

    let resources = report
        .best_resources()
        .ok_or_else(|| CliError::config("best candidate has no resource estimate"))?;
    let total = report.best_total_cost(&c.weights)?;
    let manifest = emit_manifest(
        &report.anneal.best,
        &report.best_network,
        WEIGHTS_FILE,
        Some(DATASET_FILE),
        report.best_accuracy,
        total,
        resources,
    )?;
    let mut text = report.render();
    let _ = writeln!(text, "calibration {}", opts.calibration.label);
    write_bytes(&out.join(REPORT_FILE), text.as_bytes())?;
    write_bytes(&out.join(WEIGHTS_FILE), &encode_quantized(&report.best_network)?)?;
    write_bytes(&out.join(DATASET_FILE), &dataset.to_bytes()?)?;
    write_bytes(&out.join(MANIFEST_FILE), manifest.to_json()?.as_bytes())?;
    Ok(format!(
        "best {} accuracy {:.6} total_cost {:.9} candidates {} simulations {}\n",
        report.anneal.best,
        report.best_accuracy,
        total,
        report.candidates.len(),
        report.simulations
    ))
}

fn core_rows(out: &mut String, net: &NetworkConfig, table: &CalibrationTable, primitive: usize) -> CliResult<()> {
    for c in &net.cores {
        let ff = c.ff_geometry()?;
        let st = c.state_geometry()?;
        let logic = estimate_core_logic(
            c.topology,
            c.model,
            c.weight_bits as u32,
            c.rec_weight_bits.unwrap_or(0) as u32,
            table,
        )?;
        let rec = match c.rec_geometry()? {
            Some(g) => format!("{}x{}x{}", g.blocks, g.rows_per_block, g.row_bits),
            None => "-".into(),
        };
        let _ = writeln!(
            out,
            "  core {} {} {} neurons={} ff={}x{}x{} rec={rec} state={}x{} brams={} luts={} flipflops={}",
            c.core_id,
            wire_name(&c.topology),
            wire_name(&c.model),
            c.neuron_count,
            ff.blocks,
            ff.rows_per_block,
            ff.row_bits,
            st.rows,
            st.row_bits,
            estimate_core_bram(c, primitive)?,
            logic.luts,
            logic.flipflops
        );
    }
    Ok(())
}

pub struct EstimateArgs {
    pub config: Option<PathBuf>,
    pub model: Option<PathBuf>,
}

pub fn estimate(a: &EstimateArgs) -> CliResult<String> {
    let mut out = String::new();
    if let Some(m) = &a.model {
        let (q, _) = load_network(m)?;
        let (table, primitive) = match load_project(a.config.as_deref())? {
            Some(p) => (calibration_of(&p)?, p.config.bram_primitive_bits),
            None => (CalibrationTable::placeholder(), spikecore::cost::DEFAULT_BRAM_PRIMITIVE_BITS),
        };
        let r = estimate_resources(&q.config, &table, primitive)?;
        let _ = writeln!(out, "calibration {}", table.label);
        let _ = writeln!(out, "network luts={} flipflops={} brams={}", r.luts, r.flipflops, r.brams);
        core_rows(&mut out, &q.config, &table, primitive)?;
        return Ok(out);
    }
    let project = Project::load(require(a.config.as_ref(), "--config or --model")?)?;
    let table = calibration_of(&project)?;
    let primitive = project.config.bram_primitive_bits;
    let skeleton = project.skeleton();
    let cfgs = enumerate_candidates(&project.config.ranges, skeleton.is_recurrent())?;
    let _ = writeln!(out, "calibration {}", table.label);
    let _ = writeln!(out, "candidates {}", cfgs.len());
    for c in &cfgs {
        match skeleton.quantize(c.precision()) {
            Ok(q) => {
                let r = estimate_resources(&q.config, &table, primitive)?;
                let _ = writeln!(out, "candidate {c} luts={} flipflops={} brams={}", r.luts, r.flipflops, r.brams);
                core_rows(&mut out, &q.config, &table, primitive)?;
            }
            Err(e) => {
                let _ = writeln!(out, "candidate {c} infeasible: {e}");
            }
        }
    }
    Ok(out)
}

pub struct ManifestCheckArgs {
    pub model: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub threads: usize,
}

pub fn manifest_check(a: &ManifestCheckArgs) -> CliResult<String> {
    let path = require(a.model.as_ref(), "--model (the manifest)")?;
    let (m, q): (Manifest, QuantizedNetwork) = load_manifest(path)?;
    Network::from_quantized(&q)?;
    let dataset = a
        .dataset
        .clone()
        .or_else(|| m.dataset_file.as_deref().map(|d| path.parent().unwrap_or(Path::new("")).join(d)));
    let mut out = String::new();
    if let Some(dp) = dataset {
        let d = load_dataset(&dp)?;
        check_dataset(&d, &q.config)?;
        let acc = accuracy_of(&q, &d.samples, a.threads > 1)?;
        if acc != m.accuracy {
            return Err(CliError::new(
                "simulation",
                format!("recomputed accuracy {acc} differs from the recorded {}", m.accuracy),
            ));
        }
        let _ = writeln!(out, "accuracy {acc:.6} matches");
    }
    let _ = writeln!(out, "ok {}", m.candidate);
    Ok(out)
}
