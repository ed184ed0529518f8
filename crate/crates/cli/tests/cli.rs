mod common;

use common::{ok, run, write_demo, DEFAULT_WEIGHTS, GRID_32_RANGES};

fn project_256_128_10(dir: &std::path::Path) {
    std::fs::write(
        dir.join("p.json"),
        r#"{"kind":"project","schema_version":1,
 "network":{"input_channels":256,"timesteps":10,"layers":[
   {"topology":"FF","model":"LIF","neurons":128,"reset":"reset_to_zero"},
   {"topology":"FF","model":"LIF","neurons":10,"reset":"reset_to_zero"}]},
 "ranges":{"ff":[6],"rec":[6],"leak":[3]}}"#,
    )
    .unwrap();
}

#[test]
fn estimate_counts_brams_per_memory() {
    let dir = tempfile::tempdir().unwrap();
    project_256_128_10(dir.path());
    let out = ok(dir.path(), &["estimate", "--config", "p.json"]);
    // core 0: 256 blocks x 16 rows x 48 bits -> 6, state 128 x 16 -> 1
    // core 1: 128 x 2 x 48 -> 1, state 16 x 16 -> 1
    assert!(out.contains("candidate ff=6 rec=- leak=3 "), "{out}");
    assert!(out.contains(" brams=9\n"), "{out}");
    assert!(out.contains("core 0 FF LIF neurons=128 ff=256x16x48 rec=- state=128x16 brams=7"), "{out}");
    assert!(out.contains("core 1 FF LIF neurons=10 ff=128x2x48 rec=- state=16x16 brams=2"), "{out}");
    assert!(out.starts_with("calibration placeholder (non-physical)\n"));
}

#[test]
fn explore_reports_full_32_candidate_space() {
    let dir = tempfile::tempdir().unwrap();
    write_demo(dir.path(), GRID_32_RANGES, DEFAULT_WEIGHTS);
    ok(dir.path(), &["encode", "data.csv", "--config", "project.json", "--out", "data.spke"]);
    let summary = ok(dir.path(), &["explore", "--config", "project.json", "--out", "out"]);
    assert!(summary.contains("candidates 32"), "{summary}");
    let report = std::fs::read_to_string(dir.path().join("out/report.txt")).unwrap();
    assert!(report.starts_with("candidates 32\n"));
    assert_eq!(report.lines().filter(|l| l.starts_with("candidate ")).count(), 32);
    ok(dir.path(), &["manifest-check", "--model", "out/manifest.json"]);
}

#[test]
fn corrupted_model_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    write_demo(dir.path(), GRID_32_RANGES, DEFAULT_WEIGHTS);
    ok(dir.path(), &["encode", "data.csv", "--config", "project.json", "--out", "data.spke"]);
    let mut bytes = std::fs::read(dir.path().join("model.spkm")).unwrap();
    bytes.truncate(bytes.len() / 2);
    std::fs::write(dir.path().join("model.spkm"), bytes).unwrap();
    let o = run(dir.path(), &["explore", "--config", "project.json", "--out", "out"]);
    assert_eq!(o.status.code(), Some(11));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.starts_with("error[parse]: "), "{err}");
    assert!(err.contains("model.spkm"), "{err}");

    std::fs::write(dir.path().join("junk.bin"), b"not a network").unwrap();
    let o = run(dir.path(), &["simulate", "--model", "junk.bin", "--dataset", "data.spke"]);
    assert_eq!(o.status.code(), Some(11));
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["simulate", "--model", "absent.spkq", "--dataset", "absent.spke"]);
    assert_eq!(o.status.code(), Some(12));
    assert!(String::from_utf8_lossy(&o.stderr).contains("absent.spkq"));
}

#[test]
fn too_many_channels_is_a_capacity_error() {
    let dir = tempfile::tempdir().unwrap();
    let row: Vec<String> = std::iter::once("0".to_string()).chain((0..300).map(|_| "0.5".into())).collect();
    std::fs::write(dir.path().join("wide.csv"), row.join(",")).unwrap();
    let o = run(dir.path(), &["encode", "wide.csv", "--timesteps", "4", "--out", "w.spke"]);
    assert_eq!(o.status.code(), Some(13));
    assert!(String::from_utf8_lossy(&o.stderr).contains("256"));
}

#[test]
fn image_inputs_are_downscaled() {
    let dir = tempfile::tempdir().unwrap();
    let class = dir.path().join("2");
    std::fs::create_dir(&class).unwrap();
    let img = image::GrayImage::from_fn(32, 32, |x, _| image::Luma([if x < 16 { 255 } else { 0 }]));
    img.save(class.join("a.png")).unwrap();
    let o = run(dir.path(), &["encode", "2/a.png", "--timesteps", "4", "--out", "big.spke"]);
    assert_eq!(o.status.code(), Some(13), "1024 channels exceed one core");
    ok(dir.path(), &["encode", "2/a.png", "--timesteps", "4", "--downscale", "2", "--out", "img.spke"]);
    let d = spikecore::dataset::Dataset::from_bytes(&std::fs::read(dir.path().join("img.spke")).unwrap()).unwrap();
    assert_eq!((d.channels, d.samples[0].label), (256, 2));
    // full-intensity columns spike every step, dark ones never
    assert_eq!(d.samples[0].steps[0].len(), 128);
}

#[test]
fn bernoulli_needs_seed_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("d.csv"), "1,0.5,0.25,0.75\n0,0.1,0.9,0.5\n").unwrap();
    let o = run(dir.path(), &["encode", "d.csv", "--timesteps", "8", "--bernoulli", "--out", "a.spke"]);
    assert_eq!(o.status.code(), Some(10));
    for f in ["a.spke", "b.spke"] {
        ok(dir.path(), &["encode", "d.csv", "--timesteps", "8", "--bernoulli", "--seed", "3", "--out", f]);
    }
    assert_eq!(std::fs::read(dir.path().join("a.spke")).unwrap(), std::fs::read(dir.path().join("b.spke")).unwrap());
}

#[test]
fn artifacts_round_trip_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    write_demo(dir.path(), GRID_32_RANGES, DEFAULT_WEIGHTS);
    ok(dir.path(), &["encode", "data.csv", "--config", "project.json", "--out", "data.spke"]);
    ok(dir.path(), &["explore", "--config", "project.json", "--out", "out"]);
    let w = std::fs::read(dir.path().join("out/weights.spkq")).unwrap();
    let q = spikecore::model::decode_quantized(&w).unwrap();
    assert_eq!(spikecore::model::encode_quantized(&q).unwrap(), w);
    let d = std::fs::read(dir.path().join("data.spke")).unwrap();
    assert_eq!(spikecore::dataset::Dataset::from_bytes(&d).unwrap().to_bytes().unwrap(), d);
    assert_eq!(std::fs::read(dir.path().join("out/eval.spke")).unwrap(), d);
    let m = std::fs::read_to_string(dir.path().join("out/manifest.json")).unwrap();
    assert_eq!(spikecore::dse::Manifest::from_json(&m).unwrap().to_json().unwrap(), m);
}

#[test]
fn simulate_threads_do_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    write_demo(dir.path(), GRID_32_RANGES, DEFAULT_WEIGHTS);
    ok(dir.path(), &["encode", "data.csv", "--config", "project.json", "--out", "data.spke"]);
    ok(dir.path(), &["explore", "--config", "project.json", "--out", "out"]);
    let one = ok(dir.path(), &["simulate", "--model", "out/manifest.json", "--trace", "t1.txt"]);
    let four = ok(dir.path(), &["simulate", "--model", "out/manifest.json", "--threads", "4", "--trace", "t4.txt"]);
    assert_eq!(one, four);
    assert_eq!(std::fs::read(dir.path().join("t1.txt")).unwrap(), std::fs::read(dir.path().join("t4.txt")).unwrap());
    let est = ok(dir.path(), &["estimate", "--model", "out/manifest.json"]);
    assert!(est.contains("core 1 FF LIF neurons=3"), "{est}");
}
