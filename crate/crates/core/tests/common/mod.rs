//! Instance generators shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use safeguard_core::{
    build_identity_sum_network, preactivation_bounds, ControlSetup, Hypercube, LayerParams, ReluNetwork, UnsafeRegion,
};

pub fn robot_sets() -> (Hypercube, Hypercube) {
    (
        Hypercube::new(vec![-1.0, -1.0], vec![10.0, 10.0]).unwrap(),
        Hypercube::symmetric(&[0.25, 0.25]).unwrap(),
    )
}

pub fn robot_setup(obstacles: Vec<Hypercube>, eps: f64) -> ControlSetup {
    let (x, u) = robot_sets();
    let net = build_identity_sum_network(&x, &u).unwrap();
    let region = UnsafeRegion::new(obstacles, &x).unwrap();
    ControlSetup::new(net, x, u, region, vec![eps; 2], vec![eps; 2], vec![eps; 2]).unwrap()
}

/// Obstacle of random size whose centre lies within `reach` of `near`, clipped to the robot's state set.
pub fn obstacle_near(rng: &mut ChaCha8Rng, near: &[f64], reach: f64) -> Hypercube {
    let (x, _) = robot_sets();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for j in 0..2 {
        let c = near[j] + rng.gen_range(-reach..reach);
        let h = rng.gen_range(0.2..1.0);
        lo.push((c - h).clamp(x.lo()[j], x.hi()[j] - 0.1));
        hi.push((c + h).clamp(lo[j] + 0.1, x.hi()[j]));
    }
    Hypercube::new(lo, hi).unwrap()
}

/// Random robot step: measurement, reference and up to `max_obstacles` obstacles near the measurement.
/// Draws until the start, reference and noise-free state are clear of every obstacle.
pub fn robot_instance(rng: &mut ChaCha8Rng, max_obstacles: usize, eps: f64) -> (ControlSetup, Vec<f64>, Vec<f64>) {
    loop {
        let y: Vec<f64> = (0..2).map(|_| rng.gen_range(-0.5..9.5)).collect();
        let x_ref: Vec<f64> = y.iter().map(|v| (v + rng.gen_range(-1.0..1.0)).clamp(-1.0, 10.0)).collect();
        let n = if max_obstacles == 0 { 0 } else { rng.gen_range(1..=max_obstacles) };
        let obstacles: Vec<Hypercube> = (0..n).map(|_| obstacle_near(rng, &y, 1.2)).collect();
        let clear = |p: &[f64]| obstacles.iter().all(|o| !o.inflate(&[eps + 0.01; 2]).unwrap().contains(p, 0.0));
        if clear(&y) && clear(&x_ref) {
            return (robot_setup(obstacles, eps), y, x_ref);
        }
    }
}

pub fn random_layer(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> LayerParams {
    let w = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b = (0..rows).map(|_| rng.gen_range(-0.5..0.5)).collect();
    LayerParams::from_row_major(rows, cols, w, b).unwrap()
}

/// Hidden widths of one or two layers, capped at `[8, 4]`.
pub fn random_hidden(rng: &mut ChaCha8Rng) -> Vec<usize> {
    if rng.gen_bool(0.5) {
        vec![rng.gen_range(1..=8)]
    } else {
        vec![rng.gen_range(1..=8), rng.gen_range(1..=4)]
    }
}

/// Random network on `[-1, 1]^(nx + nu)` whose output range is rescaled into `[-0.9, 0.9]^nx`.
pub fn random_model(rng: &mut ChaCha8Rng, nx: usize, nu: usize, hidden: &[usize]) -> (ReluNetwork, Hypercube, Hypercube) {
    let x = Hypercube::symmetric(&vec![1.0; nx]).unwrap();
    let u = Hypercube::symmetric(&vec![1.0; nu]).unwrap();
    let mut sizes = vec![nx + nu];
    sizes.extend(hidden);
    sizes.push(nx);
    let mut layers: Vec<LayerParams> = sizes.windows(2).map(|w| random_layer(rng, w[1], w[0])).collect();
    let net = ReluNetwork::new(layers.clone()).unwrap();
    let out = preactivation_bounds(&net, &x, &u).unwrap().output_box();
    let peak = out.lo().iter().chain(out.hi()).map(|v| v.abs()).fold(0.0, f64::max);
    if peak > 0.9 {
        let s = 0.9 / peak;
        let last = layers.pop().unwrap();
        let w = last.weights().iter().map(|v| v * s).collect();
        let b = last.bias().iter().map(|v| v * s).collect();
        layers.push(LayerParams::from_row_major(last.rows(), last.cols(), w, b).unwrap());
    }
    (ReluNetwork::new(layers).unwrap(), x, u)
}

/// Obstacle-free setup around a random network, with a measurement and command inside the sets.
pub fn random_net_instance(rng: &mut ChaCha8Rng) -> (ControlSetup, Vec<f64>, Vec<f64>) {
    let nx = rng.gen_range(1..=3);
    let nu = rng.gen_range(1..=2);
    let hidden = random_hidden(rng);
    let (net, x, u) = random_model(rng, nx, nu, &hidden);
    let eps_y: Vec<f64> = (0..nx).map(|_| rng.gen_range(0.0..0.1)).collect();
    let eps_u: Vec<f64> = (0..nu).map(|_| rng.gen_range(0.0..0.1)).collect();
    let setup = ControlSetup::new(net, x, u, UnsafeRegion::empty(), vec![0.0; nx], eps_y, eps_u).unwrap();
    let y = (0..nx).map(|_| rng.gen_range(-0.95..0.95)).collect();
    let u_cmd = (0..nu).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (setup, y, u_cmd)
}
