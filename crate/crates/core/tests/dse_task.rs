use spikecore::dataset::rate_encode;
use spikecore::demo::{three_class_intensities, three_class_model, TIMESTEPS};
use spikecore::dse::{evaluate_accuracy, AccuracyCache, CandidateConfig};
use spikecore::system::{dense_reference, EventSample};

fn eval_set() -> Vec<EventSample> {
    three_class_intensities(10, 42)
        .into_iter()
        .map(|(label, p)| EventSample { steps: rate_encode(&p, TIMESTEPS).unwrap(), label })
        .collect()
}

#[test]
fn separable_task_accuracy_orders_with_precision() {
    let model = three_class_model();
    let set = eval_set();
    let cache = AccuracyCache::new();
    let at = |ff: u8| {
        let c = CandidateConfig { ff_bits: ff, rec_bits: Some(8), leak_bits: 8 };
        evaluate_accuracy(&c, &model, &set, &cache).unwrap()
    };
    let fine = at(8);
    let coarse = at(2);
    eprintln!("ff=8 {fine} ff=4 {} ff=2 {coarse}", at(4));
    assert_eq!(fine, 1.0);
    assert!(coarse < fine);
}

#[test]
fn dense_oracle_agrees_on_task() {
    let model = three_class_model();
    for ff in [2u8, 8] {
        let c = CandidateConfig { ff_bits: ff, rec_bits: Some(8), leak_bits: 8 };
        let q = model.quantize(c.precision()).unwrap();
        let set = eval_set();
        let correct = set.iter().filter(|s| dense_reference(&q, s).unwrap().predicted == s.label as usize).count();
        let acc = evaluate_accuracy(&c, &model, &set, &AccuracyCache::new()).unwrap();
        assert_eq!(correct as f64 / set.len() as f64, acc);
    }
}
