//! Interval propagation checked against sampling and vertex enumeration.

use proptest::prelude::*;
use safeguard_core::{interval_forward, Interval, LayerParams, ReluNetwork};

fn layer(rows: usize, cols: usize) -> impl Strategy<Value = LayerParams> {
    (
        prop::collection::vec(-2.0f64..2.0, rows * cols),
        prop::collection::vec(-1.0f64..1.0, rows),
    )
        .prop_map(move |(w, b)| LayerParams::from_row_major(rows, cols, w, b).unwrap())
}

/// Random network with `n_in` inputs, hidden widths up to `[8, 4]` and `n_out` outputs.
fn network(n_in: usize, n_out: usize) -> impl Strategy<Value = ReluNetwork> {
    prop::collection::vec(1usize..=8, 1..=2)
        .prop_map(|mut h| {
            if h.len() == 2 {
                h[1] = h[1].min(4);
            }
            h
        })
        .prop_flat_map(move |hidden| {
            let mut sizes = vec![n_in];
            sizes.extend(&hidden);
            sizes.push(n_out);
            sizes
                .windows(2)
                .map(|w| layer(w[1], w[0]).boxed())
                .collect::<Vec<_>>()
        })
        .prop_map(|layers| ReluNetwork::new(layers).unwrap())
}

fn input_box(n: usize) -> impl Strategy<Value = Vec<Interval>> {
    prop::collection::vec((-2.0f64..2.0, 0.0f64..1.5), n)
        .prop_map(|v| v.into_iter().map(|(lo, w)| Interval::new(lo, lo + w).unwrap()).collect())
}

fn point_in(b: &[Interval], t: &[f64]) -> Vec<f64> {
    b.iter().zip(t).map(|(iv, s)| iv.lo + s * (iv.hi - iv.lo)).collect()
}

/// Every corner of the box.
fn vertices(b: &[Interval]) -> Vec<Vec<f64>> {
    (0..1u32 << b.len())
        .map(|mask| {
            b.iter()
                .enumerate()
                .map(|(i, iv)| if mask >> i & 1 == 1 { iv.hi } else { iv.lo })
                .collect()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn sampled_outputs_stay_inside_the_bounds(
        net in network(3, 2),
        b in input_box(3),
        ts in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 3), 64),
    ) {
        let bounds = interval_forward(&net, &b).unwrap();
        for t in &ts {
            let y = net.forward(&point_in(&b, t)).unwrap();
            for (v, iv) in y.iter().zip(bounds.output()) {
                prop_assert!(iv.contains(*v, 1e-9), "{v} outside {iv:?}");
            }
        }
        for v in vertices(&b) {
            let y = net.forward(&v).unwrap();
            for (v, iv) in y.iter().zip(bounds.output()) {
                prop_assert!(iv.contains(*v, 1e-9));
            }
        }
    }

    #[test]
    fn shrinking_the_input_shrinks_the_bounds(
        net in network(2, 2),
        b in input_box(2),
        cut in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 2),
    ) {
        let inner: Vec<Interval> = b
            .iter()
            .zip(&cut)
            .map(|(iv, &(s, t))| {
                let (s, t) = (s.min(t), s.max(t));
                Interval::new(iv.lo + s * iv.width(), iv.lo + t * iv.width()).unwrap()
            })
            .collect();
        let outer = interval_forward(&net, &b).unwrap();
        let inner_b = interval_forward(&net, &inner).unwrap();
        for (o, i) in outer.output().iter().zip(inner_b.output()) {
            prop_assert!(o.contains_interval(i, 1e-9), "{i:?} not inside {o:?}");
        }
    }

    #[test]
    fn affine_layer_bounds_are_attained_at_vertices(l in layer(3, 3), b in input_box(3)) {
        // A single affine layer is linear, so its exact range over a box is spanned by the corners.
        let net = ReluNetwork::new(vec![l]).unwrap();
        let bounds = interval_forward(&net, &b).unwrap();
        let outs: Vec<Vec<f64>> = vertices(&b).iter().map(|v| net.forward(v).unwrap()).collect();
        for (j, iv) in bounds.output().iter().enumerate() {
            let lo = outs.iter().map(|o| o[j]).fold(f64::INFINITY, f64::min);
            let hi = outs.iter().map(|o| o[j]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!((iv.lo - lo).abs() < 1e-9 && (iv.hi - hi).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_box_gives_the_point_value(net in network(3, 2), p in prop::collection::vec(-2.0f64..2.0, 3)) {
        let b: Vec<Interval> = p.iter().map(|&v| Interval::point(v)).collect();
        let bounds = interval_forward(&net, &b).unwrap();
        let y = net.forward(&p).unwrap();
        for (v, iv) in y.iter().zip(bounds.output()) {
            prop_assert!((iv.lo - v).abs() < 1e-9 && (iv.hi - v).abs() < 1e-9);
        }
    }
}
