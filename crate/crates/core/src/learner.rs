//! Dataset generation, SGD training of ReLU models and empirical error bounds.

use std::fmt::Write as _;

use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::nn::{LayerParams, NnError, ReluNetwork};
use crate::oracle::sample_box;
use crate::plants::Plant;
use crate::sets::Hypercube;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("dataset dimensions ({x}, {u}) do not match the plant or network")]
    DimensionMismatch { x: usize, u: usize },
    #[error("training diverged at epoch {epoch}: mse = {mse}")]
    Diverged { epoch: usize, mse: f64 },
}

/// One noise-free transition `(x, u) -> x_next`.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub x_next: Vec<f64>,
}

impl Record {
    fn input(&self) -> Vec<f64> {
        self.x.iter().chain(&self.u).copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<Record>,
    pub x_set: Hypercube,
    pub u_set: Hypercube,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// CSV with columns `x0.., u0.., x_next0..`.
    pub fn to_csv(&self) -> String {
        let (nx, nu) = (self.x_set.dim(), self.u_set.dim());
        let mut header: Vec<String> = (0..nx).map(|i| format!("x{i}")).collect();
        header.extend((0..nu).map(|i| format!("u{i}")));
        header.extend((0..nx).map(|i| format!("x_next{i}")));
        let mut s = header.join(",");
        s.push('\n');
        for r in &self.records {
            let row: Vec<String> = r.x.iter().chain(&r.u).chain(&r.x_next).map(|v| format!("{v:.16e}")).collect();
            let _ = writeln!(s, "{}", row.join(","));
        }
        s
    }
}

pub fn sample_dataset(
    plant: &dyn Plant,
    x_set: &Hypercube,
    u_set: &Hypercube,
    n: usize,
    seed: u64,
) -> Result<Dataset, LearnError> {
    if n == 0 {
        return Err(LearnError::EmptyDataset);
    }
    if plant.state_dim() != x_set.dim() || plant.control_dim() != u_set.dim() {
        return Err(LearnError::DimensionMismatch {
            x: x_set.dim(),
            u: u_set.dim(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..n)
        .map(|_| {
            let x = sample_box(x_set, &mut rng);
            let u = sample_box(u_set, &mut rng);
            let x_next = plant.step(&x, &u);
            Record { x, u, x_next }
        })
        .collect();
    Ok(Dataset {
        records,
        x_set: x_set.clone(),
        u_set: u_set.clone(),
        seed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Factor applied to the learning rate every `decay_every` epochs.
    pub lr_decay: f64,
    pub decay_every: usize,
    pub seed: u64,
    /// Train on standardized inputs and targets, then fold the scaling into the
    /// first and last layers so the returned network works in raw coordinates.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![8, 4],
            epochs: 200,
            learning_rate: 1e-2,
            batch_size: 32,
            lr_decay: 0.5,
            decay_every: 50,
            seed: 0,
            standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::InvalidConfig(m.to_string()));
        if self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.decay_every == 0 {
            return bad("epochs, batch size and decay interval must be positive");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay.is_finite()) {
            return bad("learning-rate decay must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub network: ReluNetwork,
    pub final_mse: f64,
    /// Training objective after each epoch (standardized units when `standardize` is set).
    pub mse_history: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Dense {
    rows: usize,
    cols: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

/// Gradient of one layer, same layout as [`LayerParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

fn dense_from(net: &ReluNetwork) -> Vec<Dense> {
    net.layers()
        .iter()
        .map(|l| Dense {
            rows: l.rows(),
            cols: l.cols(),
            w: l.weights().to_vec(),
            b: l.bias().to_vec(),
        })
        .collect()
}

fn to_network(layers: &[Dense]) -> Result<ReluNetwork, NnError> {
    ReluNetwork::new(
        layers
            .iter()
            .map(|d| LayerParams::from_row_major(d.rows, d.cols, d.w.clone(), d.b.clone()))
            .collect::<Result<Vec<_>, _>>()?,
    )
}

/// Forward pass keeping every layer's pre-activation; returns (activations per layer input, pre-activations).
fn forward_trace(layers: &[Dense], z0: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let last = layers.len() - 1;
    let mut inputs = Vec::with_capacity(layers.len());
    let mut pre = Vec::with_capacity(layers.len());
    let mut z = z0.to_vec();
    for (i, l) in layers.iter().enumerate() {
        let h: Vec<f64> = (0..l.rows)
            .map(|j| l.w[j * l.cols..(j + 1) * l.cols].iter().zip(&z).map(|(w, x)| w * x).sum::<f64>() + l.b[j])
            .collect();
        inputs.push(z);
        z = if i < last { h.iter().map(|v| v.max(0.0)).collect() } else { h.clone() };
        pre.push(h);
    }
    (inputs, pre)
}

/// Adds the gradient of one record's loss `mean_q r_q^2`, scaled by `scale`, into `grads`.
fn accumulate(layers: &[Dense], rec: &Record, scale: f64, grads: &mut [LayerGradient]) -> f64 {
    let (inputs, pre) = forward_trace(layers, &rec.input());
    let out = &pre[pre.len() - 1];
    let n_out = out.len() as f64;
    let mut loss = 0.0;
    let mut delta: Vec<f64> = out
        .iter()
        .zip(&rec.x_next)
        .map(|(o, t)| {
            let r = o - t;
            loss += r * r / n_out;
            2.0 * r / n_out
        })
        .collect();
    for i in (0..layers.len()).rev() {
        let l = &layers[i];
        let g = &mut grads[i];
        for j in 0..l.rows {
            let dj = delta[j] * scale;
            g.bias[j] += dj;
            for (q, x) in inputs[i].iter().enumerate() {
                g.weights[j * l.cols + q] += dj * x;
            }
        }
        if i > 0 {
            let below = &pre[i - 1];
            delta = (0..l.cols)
                .map(|q| {
                    if below[q] > 0.0 {
                        (0..l.rows).map(|j| l.w[j * l.cols + q] * delta[j]).sum()
                    } else {
                        0.0
                    }
                })
                .collect();
        }
    }
    loss
}

fn zero_grads(layers: &[Dense]) -> Vec<LayerGradient> {
    layers
        .iter()
        .map(|l| LayerGradient {
            weights: vec![0.0; l.w.len()],
            bias: vec![0.0; l.b.len()],
        })
        .collect()
}

fn check_records(net: &ReluNetwork, records: &[Record]) -> Result<(), LearnError> {
    if records.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    let r = &records[0];
    if r.x.len() + r.u.len() != net.input_dim() || r.x_next.len() != net.output_dim() {
        return Err(LearnError::DimensionMismatch { x: r.x.len(), u: r.u.len() });
    }
    Ok(())
}

/// Mean over records of the per-output mean squared residual.
pub fn loss(net: &ReluNetwork, records: &[Record]) -> Result<f64, LearnError> {
    check_records(net, records)?;
    let mut total = 0.0;
    for r in records {
        let out = net.forward(&r.input())?;
        total += out.iter().zip(&r.x_next).map(|(o, t)| (o - t).powi(2)).sum::<f64>() / out.len() as f64;
    }
    Ok(total / records.len() as f64)
}

/// Analytic gradient of [`loss`] with respect to every weight and bias.
pub fn gradients(net: &ReluNetwork, records: &[Record]) -> Result<Vec<LayerGradient>, LearnError> {
    check_records(net, records)?;
    let layers = dense_from(net);
    let mut g = zero_grads(&layers);
    let scale = 1.0 / records.len() as f64;
    for r in records {
        accumulate(&layers, r, scale, &mut g);
    }
    Ok(g)
}

fn xavier_layers(sizes: &[usize], rng: &mut ChaCha8Rng) -> Vec<Dense> {
    sizes
        .windows(2)
        .map(|w| {
            let (cols, rows) = (w[0], w[1]);
            let limit = (6.0 / (cols + rows) as f64).sqrt();
            Dense {
                rows,
                cols,
                w: (0..rows * cols).map(|_| rng.gen_range(-limit..=limit)).collect(),
                b: vec![0.0; rows],
            }
        })
        .collect()
}

/// Initial network for `cfg` and the given input/output sizes (deterministic per seed).
pub fn initial_network(cfg: &TrainConfig, input_dim: usize, output_dim: usize) -> Result<ReluNetwork, LearnError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(to_network(&xavier_layers(&layer_sizes(cfg, input_dim, output_dim), &mut rng))?)
}

fn layer_sizes(cfg: &TrainConfig, input_dim: usize, output_dim: usize) -> Vec<usize> {
    let mut sizes = vec![input_dim];
    sizes.extend(&cfg.hidden);
    sizes.push(output_dim);
    sizes
}

/// Per-coordinate affine map `v -> (v - mean) / scale`.
#[derive(Debug, Clone)]
struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn identity(n: usize) -> Self {
        Self {
            mean: vec![0.0; n],
            scale: vec![1.0; n],
        }
    }

    fn fit<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, n: usize) -> Self {
        let count = rows.clone().count() as f64;
        let mut mean = vec![0.0; n];
        for r in rows.clone() {
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v / count);
        }
        let mut var = vec![0.0; n];
        for r in rows {
            var.iter_mut().zip(r.iter().zip(&mean)).for_each(|(s, (v, m))| *s += (v - m).powi(2) / count);
        }
        let scale = var.iter().map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 }).collect();
        Self { mean, scale }
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(self.mean.iter().zip(&self.scale)).map(|(x, (m, s))| (x - m) / s).collect()
    }
}

/// Rewrites `layers` (trained on standardized data) to act on raw inputs and produce raw outputs.
fn fold_standardization(layers: &mut [Dense], input: &Standardizer, output: &Standardizer) {
    let first = &mut layers[0];
    for j in 0..first.rows {
        for q in 0..first.cols {
            let w = first.w[j * first.cols + q] / input.scale[q];
            first.w[j * first.cols + q] = w;
            first.b[j] -= w * input.mean[q];
        }
    }
    let last = layers.len() - 1;
    let out = &mut layers[last];
    for j in 0..out.rows {
        for q in 0..out.cols {
            out.w[j * out.cols + q] *= output.scale[j];
        }
        out.b[j] = out.b[j] * output.scale[j] + output.mean[j];
    }
}

/// Minibatch SGD on the mean squared error.
pub fn train(cfg: &TrainConfig, data: &Dataset) -> Result<TrainReport, LearnError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    let (nx, nu) = (data.x_set.dim(), data.u_set.dim());
    let inputs: Vec<Vec<f64>> = data.records.iter().map(Record::input).collect();
    let (in_std, out_std) = if cfg.standardize {
        (
            Standardizer::fit(inputs.iter().map(Vec::as_slice), nx + nu),
            Standardizer::fit(data.records.iter().map(|r| r.x_next.as_slice()), nx),
        )
    } else {
        (Standardizer::identity(nx + nu), Standardizer::identity(nx))
    };
    let records: Vec<Record> = data
        .records
        .iter()
        .zip(&inputs)
        .map(|(r, z)| {
            let z = in_std.apply(z);
            Record {
                x: z[..nx].to_vec(),
                u: z[nx..].to_vec(),
                x_next: out_std.apply(&r.x_next),
            }
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut layers = xavier_layers(&layer_sizes(cfg, nx + nu, nx), &mut rng);
    let mut order: Vec<usize> = (0..records.len()).collect();
    let mut lr = cfg.learning_rate;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        if epoch > 0 && epoch % cfg.decay_every == 0 {
            lr *= cfg.lr_decay;
        }
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut g = zero_grads(&layers);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                accumulate(&layers, &records[i], scale, &mut g);
            }
            for (l, g) in layers.iter_mut().zip(&g) {
                l.w.iter_mut().zip(&g.weights).for_each(|(w, d)| *w -= lr * d);
                l.b.iter_mut().zip(&g.bias).for_each(|(b, d)| *b -= lr * d);
            }
        }
        let mse = dataset_mse(&layers, &records);
        if !mse.is_finite() {
            return Err(LearnError::Diverged { epoch, mse });
        }
        if epoch % 10 == 0 || epoch + 1 == cfg.epochs {
            info!("epoch {epoch}: objective {mse:.3e}, lr {lr:.2e}");
        }
        history.push(mse);
    }
    fold_standardization(&mut layers, &in_std, &out_std);
    let network = to_network(&layers).map_err(|e| match e {
        NnError::NonFinite { .. } => LearnError::Diverged {
            epoch: cfg.epochs,
            mse: f64::NAN,
        },
        other => other.into(),
    })?;
    let final_mse = dataset_mse(&layers, &data.records);
    Ok(TrainReport {
        network,
        final_mse,
        mse_history: history,
    })
}

fn dataset_mse(layers: &[Dense], records: &[Record]) -> f64 {
    let mut total = 0.0;
    for r in records {
        let (_, pre) = forward_trace(layers, &r.input());
        let out = &pre[pre.len() - 1];
        total += out.iter().zip(&r.x_next).map(|(o, t)| (o - t).powi(2)).sum::<f64>() / out.len() as f64;
    }
    total / records.len() as f64
}

/// Componentwise maximum absolute residual over the dataset.
pub fn quantify_error(net: &ReluNetwork, data: &Dataset) -> Result<Vec<f64>, LearnError> {
    check_records(net, &data.records)?;
    let mut eps = vec![0.0f64; net.output_dim()];
    for r in &data.records {
        let out = net.forward(&r.input())?;
        for (e, (o, t)) in eps.iter_mut().zip(out.iter().zip(&r.x_next)) {
            *e = e.max((o - t).abs());
        }
    }
    Ok(eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::build_identity_sum_network;
    use crate::plants::RobotPlant;

    fn robot_sets() -> (Hypercube, Hypercube) {
        (
            Hypercube::new(vec![-1.0, -1.0], vec![10.0, 10.0]).unwrap(),
            Hypercube::new(vec![-0.25, -0.25], vec![0.25, 0.25]).unwrap(),
        )
    }

    #[test]
    fn robot_dataset_is_exact() {
        let (x, u) = robot_sets();
        let d = sample_dataset(&RobotPlant, &x, &u, 3, 1).unwrap();
        for r in &d.records {
            assert!(x.contains(&r.x, 0.0) && u.contains(&r.u, 0.0));
            assert_eq!(r.x_next, vec![r.x[0] + r.u[0], r.x[1] + r.u[1]]);
        }
        assert_eq!(d, sample_dataset(&RobotPlant, &x, &u, 3, 1).unwrap());
        assert!(sample_dataset(&RobotPlant, &x, &u, 0, 1).is_err());
    }

    #[test]
    fn exact_network_has_zero_error() {
        let (x, u) = robot_sets();
        let net = build_identity_sum_network(&x, &u).unwrap();
        let d = sample_dataset(&RobotPlant, &x, &u, 500, 2).unwrap();
        assert!(quantify_error(&net, &d).unwrap().iter().all(|e| *e < 1e-12));
        assert!(loss(&net, &d.records).unwrap() < 1e-24);
    }

    #[test]
    fn zero_learning_rate_keeps_initialization() {
        let (x, u) = robot_sets();
        let d = sample_dataset(&RobotPlant, &x, &u, 50, 3).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 2,
            standardize: false,
            ..TrainConfig::default()
        };
        let report = train(&cfg, &d).unwrap();
        assert_eq!(report.network, initial_network(&cfg, 4, 2).unwrap());
    }

    #[test]
    fn single_record_is_memorized() {
        let (x, u) = robot_sets();
        let d = sample_dataset(&RobotPlant, &x, &u, 1, 4).unwrap();
        let cfg = TrainConfig {
            epochs: 3000,
            learning_rate: 2e-2,
            batch_size: 1,
            decay_every: 1000,
            ..TrainConfig::default()
        };
        let report = train(&cfg, &d).unwrap();
        assert!(report.final_mse < 1e-8, "mse {}", report.final_mse);
    }

    #[test]
    fn csv_has_named_columns() {
        let (x, u) = robot_sets();
        let d = sample_dataset(&RobotPlant, &x, &u, 2, 1).unwrap();
        let csv = d.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "x0,x1,u0,u1,x_next0,x_next1");
        assert_eq!(lines.count(), 2);
    }

    #[test]
    fn divergence_is_reported() {
        let (x, u) = robot_sets();
        let d = sample_dataset(&RobotPlant, &x, &u, 200, 5).unwrap();
        let cfg = TrainConfig {
            hidden: vec![],
            learning_rate: 1.0,
            epochs: 20,
            standardize: false,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&cfg, &d), Err(LearnError::Diverged { .. })));
    }

    #[test]
    fn folding_matches_standardized_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut layers = xavier_layers(&[3, 5, 4, 2], &mut rng);
        let input = Standardizer {
            mean: vec![1.0, -2.0, 0.5],
            scale: vec![2.0, 0.5, 3.0],
        };
        let output = Standardizer {
            mean: vec![4.0, -1.0],
            scale: vec![0.1, 7.0],
        };
        let z = [0.3, -1.7, 2.2];
        let (_, pre) = forward_trace(&layers, &input.apply(&z));
        let scaled = pre.last().unwrap().clone();
        fold_standardization(&mut layers, &input, &output);
        let (_, pre) = forward_trace(&layers, &z);
        for (j, raw) in pre.last().unwrap().iter().enumerate() {
            let expected = scaled[j] * output.scale[j] + output.mean[j];
            assert!((raw - expected).abs() < 1e-12, "{raw} vs {expected}");
        }
    }

    #[test]
    fn full_batch_loss_is_monotone_at_small_step() {
        let (x, u) = robot_sets();
        let d = sample_dataset(&RobotPlant, &x, &u, 200, 6).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            batch_size: 200,
            epochs: 60,
            standardize: false,
            ..TrainConfig::default()
        };
        let h = train(&cfg, &d).unwrap().mse_history;
        assert!(h.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)), "{h:?}");
        assert!(h.last().unwrap() < &h[0]);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = TrainConfig {
            hidden: vec![0],
            ..TrainConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(LearnError::InvalidConfig(_))));
    }
}
