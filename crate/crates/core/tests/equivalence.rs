use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spikecore::random::{bypass_pair, random_network, random_sample, NetworkLimits};
use spikecore::system::{dense_reference, run_inference, ExecutionMode, InferenceOptions, Network};

fn recorded(mode: ExecutionMode) -> InferenceOptions {
    InferenceOptions { mode, record_packets: false, record_states: true, ..Default::default() }
}

#[test]
fn event_driven_matches_dense_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let limits = NetworkLimits::default();
    let mut active = 0;
    for case in 0..300 {
        let q = random_network(&mut rng, &limits);
        let mut net = Network::from_quantized(&q).unwrap();
        for _ in 0..2 {
            let s = random_sample(&mut rng, &q.config);
            let event = run_inference(&mut net, &s, &recorded(ExecutionMode::RoundRobin)).unwrap();
            let dense = dense_reference(&q, &s).unwrap();
            assert_eq!(event, dense, "case {case}: {q:?} {s:?}");
            active += event.spikes.iter().flatten().any(|v| !v.is_empty()) as usize;
        }
    }
    // the sweep must exercise spiking, not just silent networks
    assert!(active > 300, "only {active} of 600 runs produced spikes");
}

#[test]
fn threaded_matches_round_robin() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let limits = NetworkLimits::default();
    for case in 0..60 {
        let q = random_network(&mut rng, &limits);
        let s = random_sample(&mut rng, &q.config);
        let opts = InferenceOptions { record_packets: true, ..recorded(ExecutionMode::RoundRobin) };
        let a = run_inference(&mut Network::from_quantized(&q).unwrap(), &s, &opts).unwrap();
        let b = run_inference(
            &mut Network::from_quantized(&q).unwrap(),
            &s,
            &InferenceOptions { mode: ExecutionMode::Threaded, ..opts },
        )
        .unwrap();
        assert_eq!(a, b, "case {case}");
    }
}

#[test]
fn if_equals_bypass_lif() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let limits = NetworkLimits::default();
    for case in 0..100 {
        let (a, b) = bypass_pair(&random_network(&mut rng, &limits));
        let s = random_sample(&mut rng, &a.config);
        let ra = run_inference(&mut Network::from_quantized(&a).unwrap(), &s, &recorded(ExecutionMode::RoundRobin)).unwrap();
        let rb = run_inference(&mut Network::from_quantized(&b).unwrap(), &s, &recorded(ExecutionMode::RoundRobin)).unwrap();
        assert_eq!(ra, rb, "case {case}");
        assert_eq!(dense_reference(&a, &s).unwrap(), dense_reference(&b, &s).unwrap());
    }
}

#[test]
fn quiescent_input_produces_no_spikes() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut q = random_network(&mut rng, &NetworkLimits::default());
    for c in &mut q.config.cores {
        c.threshold = 1;
    }
    let s = spikecore::system::EventSample { steps: vec![], label: 0 };
    let r = run_inference(&mut Network::from_quantized(&q).unwrap(), &s, &recorded(ExecutionMode::RoundRobin)).unwrap();
    assert!(r.spikes.iter().flatten().all(Vec::is_empty));
    assert_eq!(r, dense_reference(&q, &s).unwrap());
}
