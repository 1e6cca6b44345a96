//! Backpropagation against central finite differences of the loss.

mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safeguard_core::learner::{gradients, loss, Record};
use safeguard_core::{interval_forward, Interval, LayerParams, ReluNetwork};

const H: f64 = 1e-6;

fn with_param(net: &ReluNetwork, layer: usize, idx: usize, delta: f64) -> ReluNetwork {
    let layers = net
        .layers()
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let mut w = l.weights().to_vec();
            let mut b = l.bias().to_vec();
            if i == layer {
                if idx < w.len() {
                    w[idx] += delta;
                } else {
                    b[idx - w.len()] += delta;
                }
            }
            LayerParams::from_row_major(l.rows(), l.cols(), w, b).unwrap()
        })
        .collect();
    ReluNetwork::new(layers).unwrap()
}

/// Smallest distance of any hidden pre-activation from zero over the records.
fn kink_distance(net: &ReluNetwork, records: &[Record]) -> f64 {
    let last = net.layers().len() - 1;
    records
        .iter()
        .flat_map(|r| {
            let z: Vec<Interval> = r.x.iter().chain(&r.u).map(|&v| Interval::point(v)).collect();
            let b = interval_forward(net, &z).unwrap();
            b.preact[..last].iter().flatten().map(|iv| iv.lo.abs()).collect::<Vec<_>>()
        })
        .fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn backprop_matches_central_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hidden = common::random_hidden(&mut rng);
        let (net, _, _) = common::random_model(&mut rng, 3, 2, &hidden);
        let records: Vec<Record> = (0..6)
            .map(|_| Record {
                x: (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                u: (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                x_next: (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            })
            .collect();
        prop_assume!(kink_distance(&net, &records) > 1e-3);
        let grads = gradients(&net, &records).unwrap();
        for (li, (l, g)) in net.layers().iter().zip(&grads).enumerate() {
            let analytic: Vec<f64> = g.weights.iter().chain(&g.bias).copied().collect();
            prop_assert_eq!(analytic.len(), l.weights().len() + l.bias().len());
            for (k, &a) in analytic.iter().enumerate() {
                let up = loss(&with_param(&net, li, k, H), &records).unwrap();
                let down = loss(&with_param(&net, li, k, -H), &records).unwrap();
                let fd = (up - down) / (2.0 * H);
                let scale = a.abs().max(fd.abs());
                prop_assert!(
                    (a - fd).abs() <= 1e-4 * scale + 1e-9,
                    "layer {li} param {k}: backprop {a} vs difference {fd}"
                );
            }
        }
    }
}
