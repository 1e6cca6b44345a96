//! Fully connected ReLU networks: evaluation, interval propagation and file I/O.
//!
//! Hidden layers apply ReLU; the last layer is affine.

use std::fmt::Write as _;

use serde::Deserialize;
use thiserror::Error;

use crate::interval::{relu_interval, Interval};
use crate::sets::Hypercube;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("network has no layers")]
    NoLayers,
    #[error("layer {layer}: expected {expected} inputs to chain with previous layer, got {got}")]
    BrokenChain { layer: usize, expected: usize, got: usize },
    #[error("layer {layer}: {rows} weight rows but {bias} biases")]
    BiasLength { layer: usize, rows: usize, bias: usize },
    #[error("layer {layer}: weight row {row} has {got} entries, expected {expected}")]
    RaggedRow { layer: usize, row: usize, expected: usize, got: usize },
    #[error("layer {layer}: non-finite parameter")]
    NonFinite { layer: usize },
    #[error("invalid input interval at index {0}")]
    InvalidInterval(usize),
    #[error("malformed network file: {0}")]
    Schema(String),
}

fn check_dim(expected: usize, got: usize) -> Result<(), NnError> {
    if expected == got {
        Ok(())
    } else {
        Err(NnError::DimensionMismatch { expected, got })
    }
}

/// Weights (row-major, `rows × cols`) and bias of one affine layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LayerParams {
    pub fn new(weights: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Self, NnError> {
        let rows = weights.len();
        let cols = weights.first().map_or(0, Vec::len);
        for (row, w) in weights.iter().enumerate() {
            if w.len() != cols {
                return Err(NnError::RaggedRow {
                    layer: 0,
                    row,
                    expected: cols,
                    got: w.len(),
                });
            }
        }
        Self::from_row_major(rows, cols, weights.concat(), bias)
    }

    pub fn from_row_major(rows: usize, cols: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self, NnError> {
        check_dim(rows * cols, weights.len())?;
        if bias.len() != rows {
            return Err(NnError::BiasLength {
                layer: 0,
                rows,
                bias: bias.len(),
            });
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite { layer: 0 });
        }
        Ok(Self {
            rows,
            cols,
            weights,
            bias,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.weights[row * self.cols..(row + 1) * self.cols]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn apply(&self, z: &[f64]) -> Result<Vec<f64>, NnError> {
        check_dim(self.cols, z.len())?;
        Ok((0..self.rows)
            .map(|j| self.row(j).iter().zip(z).map(|(w, x)| w * x).sum::<f64>() + self.bias[j])
            .collect())
    }
}

/// Interval image of an affine layer: each weight picks the lower or upper input bound by its sign.
pub fn linear_interval(layer: &LayerParams, input: &[Interval]) -> Result<Vec<Interval>, NnError> {
    check_dim(layer.cols, input.len())?;
    Ok((0..layer.rows)
        .map(|j| {
            let mut lo = layer.bias[j];
            let mut hi = layer.bias[j];
            for (w, iv) in layer.row(j).iter().zip(input) {
                if *w >= 0.0 {
                    lo += w * iv.lo;
                    hi += w * iv.hi;
                } else {
                    lo += w * iv.hi;
                    hi += w * iv.lo;
                }
            }
            Interval { lo, hi }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReluNetwork {
    layers: Vec<LayerParams>,
}

impl ReluNetwork {
    pub fn new(layers: Vec<LayerParams>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::NoLayers);
        }
        for (i, l) in layers.iter().enumerate() {
            if l.rows == 0 || l.cols == 0 {
                return Err(NnError::Schema(format!("layer {i} is empty")));
            }
            if i > 0 && l.cols != layers[i - 1].rows {
                return Err(NnError::BrokenChain {
                    layer: i,
                    expected: layers[i - 1].rows,
                    got: l.cols,
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].rows
    }

    /// Neuron counts of the hidden layers.
    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.rows).collect()
    }

    pub fn forward(&self, z0: &[f64]) -> Result<Vec<f64>, NnError> {
        check_dim(self.input_dim(), z0.len())?;
        let last = self.layers.len() - 1;
        let mut z = z0.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            z = layer.apply(&z)?;
            if i < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        Ok(z)
    }

    /// Evaluates on the concatenation `[x, u]`.
    pub fn predict(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>, NnError> {
        let z0: Vec<f64> = x.iter().chain(u).copied().collect();
        self.forward(&z0)
    }
}

/// Per-layer interval bounds: `preact[i]` bounds the affine output of layer `i`
/// (the last entry bounds the network output); `postact[i]` is its ReLU image
/// for each hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerBounds {
    pub preact: Vec<Vec<Interval>>,
    pub postact: Vec<Vec<Interval>>,
}

impl LayerBounds {
    pub fn output(&self) -> &[Interval] {
        &self.preact[self.preact.len() - 1]
    }

    pub fn output_box(&self) -> Hypercube {
        Hypercube::from_intervals(self.output()).expect("interval bounds are ordered")
    }
}

pub fn interval_forward(net: &ReluNetwork, input: &[Interval]) -> Result<LayerBounds, NnError> {
    check_dim(net.input_dim(), input.len())?;
    if let Some(i) = input.iter().position(|iv| !iv.is_valid()) {
        return Err(NnError::InvalidInterval(i));
    }
    let last = net.layers.len() - 1;
    let mut preact = Vec::with_capacity(net.layers.len());
    let mut postact = Vec::with_capacity(last);
    let mut current = input.to_vec();
    for (i, layer) in net.layers.iter().enumerate() {
        let pre = linear_interval(layer, &current)?;
        if i < last {
            current = pre.iter().copied().map(relu_interval).collect();
            postact.push(current.clone());
        }
        preact.push(pre);
    }
    Ok(LayerBounds { preact, postact })
}

/// Global neuron bounds over `x_set × u_set`.
pub fn preactivation_bounds(net: &ReluNetwork, x_set: &Hypercube, u_set: &Hypercube) -> Result<LayerBounds, NnError> {
    check_dim(net.input_dim(), x_set.dim() + u_set.dim())?;
    interval_forward(net, &x_set.product(u_set).intervals())
}

/// One-hidden-layer network equal to `x + u` on `x_set × u_set`.
///
/// Hidden units compute `z0 + c` with `c` large enough that every unit stays
/// active; the output layer sums the state and control halves and removes `2c`.
pub fn build_identity_sum_network(x_set: &Hypercube, u_set: &Hypercube) -> Result<ReluNetwork, NnError> {
    let n = x_set.dim();
    check_dim(n, u_set.dim())?;
    let min_lo = x_set.lo().iter().chain(u_set.lo()).copied().fold(f64::INFINITY, f64::min);
    let c = 50.0f64.max(1.0 - min_lo);
    let width = 2 * n;
    let mut w1 = vec![0.0; width * width];
    for i in 0..width {
        w1[i * width + i] = 1.0;
    }
    let hidden = LayerParams::from_row_major(width, width, w1, vec![c; width])?;
    let mut w2 = vec![0.0; n * width];
    for i in 0..n {
        w2[i * width + i] = 1.0;
        w2[i * width + n + i] = 1.0;
    }
    let out = LayerParams::from_row_major(n, width, w2, vec![-2.0 * c; n])?;
    ReluNetwork::new(vec![hidden, out])
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    layers: Vec<LayerFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

/// Parses a JSON network document `{"layers": [{"weights": [[..]], "bias": [..]}, ..]}`.
pub fn load_network(bytes: &[u8]) -> Result<ReluNetwork, NnError> {
    let file: NetworkFile = serde_json::from_slice(bytes).map_err(|e| NnError::Schema(e.to_string()))?;
    let layers = file
        .layers
        .into_iter()
        .enumerate()
        .map(|(i, l)| LayerParams::new(l.weights, l.bias).map_err(|e| with_layer(e, i)))
        .collect::<Result<Vec<_>, _>>()?;
    ReluNetwork::new(layers)
}

fn with_layer(e: NnError, layer: usize) -> NnError {
    match e {
        NnError::RaggedRow { row, expected, got, .. } => NnError::RaggedRow {
            layer,
            row,
            expected,
            got,
        },
        NnError::BiasLength { rows, bias, .. } => NnError::BiasLength { layer, rows, bias },
        NnError::NonFinite { .. } => NnError::NonFinite { layer },
        other => other,
    }
}

/// Serializes with 17 significant digits so that loading reproduces every weight bit for bit.
pub fn save_network(net: &ReluNetwork) -> Vec<u8> {
    let mut s = String::from("{\n  \"layers\": [\n");
    for (i, layer) in net.layers.iter().enumerate() {
        s.push_str("    {\n      \"weights\": [\n");
        for r in 0..layer.rows {
            let _ = write!(s, "        [{}]", join(layer.row(r)));
            s.push_str(if r + 1 < layer.rows { ",\n" } else { "\n" });
        }
        let _ = write!(s, "      ],\n      \"bias\": [{}]\n    }}", join(&layer.bias));
        s.push_str(if i + 1 < net.layers.len() { ",\n" } else { "\n" });
    }
    s.push_str("  ]\n}\n");
    s.into_bytes()
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn robot_sets() -> (Hypercube, Hypercube) {
        (
            Hypercube::new(vec![-1.0, -1.0], vec![10.0, 10.0]).unwrap(),
            Hypercube::new(vec![-0.25, -0.25], vec![0.25, 0.25]).unwrap(),
        )
    }

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval { lo, hi }
    }

    #[test]
    fn forward_examples() {
        let id = ReluNetwork::new(vec![LayerParams::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0]).unwrap()]).unwrap();
        assert_eq!(id.forward(&[3.0, -1.0]).unwrap(), vec![3.0, -1.0]);

        let (x, u) = robot_sets();
        let net = build_identity_sum_network(&x, &u).unwrap();
        let out = net.forward(&[0.0, 0.0, 0.1, -0.1]).unwrap();
        assert!((out[0] - 0.1).abs() < 1e-12 && (out[1] + 0.1).abs() < 1e-12);

        let dead = ReluNetwork::new(vec![
            LayerParams::new(vec![vec![1.0]], vec![-1.0]).unwrap(),
            LayerParams::new(vec![vec![2.0]], vec![0.0]).unwrap(),
        ])
        .unwrap();
        assert_eq!(dead.forward(&[0.5]).unwrap(), vec![0.0]);
        assert!(matches!(dead.forward(&[0.5, 1.0]), Err(NnError::DimensionMismatch { expected: 1, got: 2 })));
    }

    #[test]
    fn linear_interval_examples() {
        let l = LayerParams::new(vec![vec![1.0, -2.0]], vec![0.0]).unwrap();
        assert_eq!(linear_interval(&l, &[iv(0.0, 1.0), iv(0.0, 1.0)]).unwrap(), vec![iv(-2.0, 1.0)]);
        let id = LayerParams::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0]).unwrap();
        let b = vec![iv(-1.0, 2.0), iv(3.0, 4.0)];
        assert_eq!(linear_interval(&id, &b).unwrap(), b);
        let neg = LayerParams::new(vec![vec![-1.0]], vec![5.0]).unwrap();
        assert_eq!(linear_interval(&neg, &[iv(2.0, 3.0)]).unwrap(), vec![iv(2.0, 3.0)]);
    }

    #[test]
    fn identity_sum_bounds() {
        let (x, u) = robot_sets();
        let net = build_identity_sum_network(&x, &u).unwrap();
        let b = preactivation_bounds(&net, &x, &u).unwrap();
        let expected_hidden = [iv(49.0, 60.0), iv(49.0, 60.0), iv(49.75, 50.25), iv(49.75, 50.25)];
        for (got, want) in b.preact[0].iter().zip(expected_hidden) {
            assert!((got.lo - want.lo).abs() < 1e-12 && (got.hi - want.hi).abs() < 1e-12);
            assert!(got.lo > 0.0);
        }
        for o in b.output() {
            assert!((o.lo + 1.25).abs() < 1e-12 && (o.hi - 10.25).abs() < 1e-12);
        }
        assert_eq!(b.postact.len(), 1);

        let pt = interval_forward(&net, &[iv(0.0, 0.0), iv(0.0, 0.0), iv(0.1, 0.1), iv(-0.1, -0.1)]).unwrap();
        assert!((pt.output()[0].lo - 0.1).abs() < 1e-12 && (pt.output()[1].hi + 0.1).abs() < 1e-12);

        let tube = interval_forward(&net, &[iv(0.0, 0.0), iv(0.0, 0.0), iv(-0.25, 0.25), iv(-0.25, 0.25)]).unwrap();
        for o in tube.output() {
            assert!((o.lo + 0.25).abs() < 1e-12 && (o.hi - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_sum_tracks_x_plus_u() {
        let (x, u) = robot_sets();
        let net = build_identity_sum_network(&x, &u).unwrap();
        let out = net.predict(&[9.9, 9.9], &[0.25, 0.25]).unwrap();
        assert!((out[0] - 10.15).abs() < 1e-9 && (out[1] - 10.15).abs() < 1e-9);
    }

    #[test]
    fn affine_net_bounds_equal_linear_interval() {
        let l = LayerParams::new(vec![vec![0.5, -1.5, 2.0]], vec![0.3]).unwrap();
        let net = ReluNetwork::new(vec![l.clone()]).unwrap();
        let x = Hypercube::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        let u = Hypercube::new(vec![-0.5], vec![0.5]).unwrap();
        let b = preactivation_bounds(&net, &x, &u).unwrap();
        assert_eq!(b.output(), linear_interval(&l, &x.product(&u).intervals()).unwrap().as_slice());
        assert!(b.postact.is_empty());
    }

    #[test]
    fn construction_errors() {
        assert_eq!(ReluNetwork::new(vec![]), Err(NnError::NoLayers));
        let a = LayerParams::new(vec![vec![1.0, 2.0]], vec![0.0]).unwrap();
        assert!(matches!(
            ReluNetwork::new(vec![a.clone(), a]),
            Err(NnError::BrokenChain { layer: 1, expected: 1, got: 2 })
        ));
        assert!(matches!(LayerParams::new(vec![vec![f64::NAN]], vec![0.0]), Err(NnError::NonFinite { .. })));
        assert!(matches!(LayerParams::new(vec![vec![1.0]], vec![0.0, 1.0]), Err(NnError::BiasLength { .. })));
        assert!(matches!(
            LayerParams::new(vec![vec![1.0], vec![1.0, 2.0]], vec![0.0, 0.0]),
            Err(NnError::RaggedRow { row: 1, .. })
        ));
    }

    #[test]
    fn file_round_trip_and_rejections() {
        let (x, u) = robot_sets();
        let net = build_identity_sum_network(&x, &u).unwrap();
        let back = load_network(&save_network(&net)).unwrap();
        assert_eq!(back, net);
        let out = back.forward(&[0.0, 0.0, 0.1, -0.1]).unwrap();
        assert!((out[0] - 0.1).abs() < 1e-12 && (out[1] + 0.1).abs() < 1e-12);

        let odd = ReluNetwork::new(vec![
            LayerParams::new(vec![vec![0.1, 1.0 / 3.0]], vec![std::f64::consts::PI]).unwrap(),
            LayerParams::new(vec![vec![-2.0f64.sqrt()]], vec![1e-300]).unwrap(),
        ])
        .unwrap();
        assert_eq!(load_network(&save_network(&odd)).unwrap(), odd);

        assert_eq!(load_network(br#"{"layers": []}"#), Err(NnError::NoLayers));
        assert!(matches!(load_network(br#"{"layers": [{"weights": [[NaN]], "bias": [0]}]}"#), Err(NnError::Schema(_))));
        assert!(load_network(br#"{"layers": [{"weights": [[1e999]], "bias": [0]}]}"#).is_err());
        assert!(matches!(load_network(b"{}"), Err(NnError::Schema(_))));
        assert!(matches!(
            load_network(br#"{"layers": [{"weights": [[1, 2]], "bias": [0, 0]}]}"#),
            Err(NnError::BiasLength { layer: 0, .. })
        ));
    }
}
