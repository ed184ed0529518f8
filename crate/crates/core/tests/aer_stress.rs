use std::thread;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spikecore::aer::{decode_packet, encode_packet, handshake_channel, AerPacket, DecodeContext, PacketKind};

fn random_stream(rng: &mut ChaCha8Rng, len: usize) -> Vec<AerPacket> {
    (0..len)
        .map(|i| {
            if i + 1 == len {
                AerPacket::EOIN
            } else if rng.gen_bool(0.1) {
                AerPacket::EOTS
            } else {
                AerPacket::aspl(rng.gen())
            }
        })
        .collect()
}

#[test]
fn stalled_pipeline_is_lossless() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let input = random_stream(&mut rng, 10_000);
    let (tx0, rx0) = handshake_channel(4).unwrap();
    let (tx1, rx1) = handshake_channel(4).unwrap();
    let sent = input.clone();
    let received = thread::scope(|s| {
        s.spawn(move || {
            let mut r = ChaCha8Rng::seed_from_u64(1);
            for p in sent {
                if r.gen_bool(0.01) {
                    thread::sleep(Duration::from_micros(50));
                }
                tx0.send(p).unwrap();
            }
        });
        s.spawn(move || {
            let mut r = ChaCha8Rng::seed_from_u64(2);
            while let Some(p) = rx0.recv() {
                if r.gen_bool(0.01) {
                    thread::sleep(Duration::from_micros(50));
                }
                // through the 9-bit wire format
                let w = encode_packet(p);
                tx1.send(decode_packet(w, DecodeContext::InterCore).unwrap()).unwrap();
            }
        });
        let mut out = Vec::new();
        while let Some(p) = rx1.recv() {
            out.push(p);
        }
        out
    });
    assert_eq!(received, input);
    let terms = |v: &[AerPacket], k| v.iter().filter(|p| p.kind == k).count();
    assert_eq!(terms(&received, PacketKind::Eots), terms(&input, PacketKind::Eots));
    assert_eq!(terms(&received, PacketKind::Eoin), 1);
}
