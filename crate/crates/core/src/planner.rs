//! Reachability-guided RRT over the safe states and ℓ1-shortest waypoint extraction.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::encoder::ControlSetup;
use crate::interval::Interval;
use crate::nn::{interval_forward, NnError};
use crate::oracle::{sample_box, GridSpec};
use crate::sets::Hypercube;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("{0} is not a safe state")]
    UnsafeEndpoint(&'static str),
    #[error("expected {expected}-vectors, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid planner configuration: {0}")]
    InvalidConfig(String),
    #[error("goal not connected after {iterations} iterations ({nodes} nodes)")]
    PlanFailure { iterations: usize, nodes: usize },
    #[error("no path from node {from} to node {to}")]
    NoPath { from: usize, to: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    pub max_iters: usize,
    pub goal_bias: f64,
    /// Componentwise residual accepted for a control witness.
    pub witness_tol: Vec<f64>,
    /// Grid ticks per control dimension before local refinement.
    pub grid_ticks: usize,
    /// Distance intermediate nodes keep from obstacle faces.
    pub clearance: f64,
}

impl PlannerConfig {
    /// Defaults for a network that represents the dynamics exactly.
    pub fn exact(state_dim: usize) -> Self {
        Self {
            max_iters: 5000,
            goal_bias: 0.1,
            witness_tol: vec![1e-6; state_dim],
            grid_ticks: 9,
            clearance: 0.0,
        }
    }

    fn validate(&self, state_dim: usize) -> Result<(), PlanError> {
        if !(0.0..=1.0).contains(&self.goal_bias) {
            return Err(PlanError::InvalidConfig("goal bias must lie in [0, 1]".into()));
        }
        if self.witness_tol.len() != state_dim || self.witness_tol.iter().any(|t| !(*t >= 0.0)) {
            return Err(PlanError::InvalidConfig(format!(
                "witness tolerance needs {state_dim} non-negative entries"
            )));
        }
        if !(self.clearance >= 0.0 && self.clearance.is_finite()) {
            return Err(PlanError::InvalidConfig("clearance must be non-negative".into()));
        }
        if self.grid_ticks < 2 {
            return Err(PlanError::InvalidConfig("at least two grid ticks per dimension".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanEdge {
    pub from: usize,
    pub to: usize,
    pub witness: Vec<f64>,
}

/// Directed graph rooted at node 0; `goal` is the index of the goal node once connected.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlanTree {
    pub nodes: Vec<Vec<f64>>,
    pub edges: Vec<PlanEdge>,
    pub goal: Option<usize>,
    pub iterations: usize,
}

impl PlanTree {
    pub fn with_root(x0: Vec<f64>) -> Self {
        Self {
            nodes: vec![x0],
            ..Self::default()
        }
    }

    pub fn add_node(&mut self, x: Vec<f64>) -> usize {
        self.nodes.push(x);
        self.nodes.len() - 1
    }

    pub fn add_edge(&mut self, from: usize, to: usize, witness: Vec<f64>) {
        self.edges.push(PlanEdge { from, to, witness });
    }

    /// CSV with `kind,index,...` rows for nodes and `from,to` rows for edges.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,a,b,values\n");
        for (i, x) in self.nodes.iter().enumerate() {
            let _ = writeln!(s, "node,{i},,{}", join(x));
        }
        for e in &self.edges {
            let _ = writeln!(s, "edge,{},{},{}", e.from, e.to, join(&e.witness));
        }
        s
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(";")
}

/// Waypoints as CSV, one state per row.
pub fn path_to_csv(path: &[Vec<f64>]) -> String {
    let n = path.first().map_or(0, Vec::len);
    let mut s = String::from("i");
    for q in 0..n {
        let _ = write!(s, ",x{q}");
    }
    s.push('\n');
    for (i, x) in path.iter().enumerate() {
        let _ = write!(s, "{i}");
        for v in x {
            let _ = write!(s, ",{v:.16e}");
        }
        s.push('\n');
    }
    s
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Output box of the network over the point `x` and all of `U`.
pub fn reachable_box(setup: &ControlSetup, x: &[f64]) -> Result<Hypercube, PlanError> {
    check_dim(setup.state_dim(), x.len())?;
    let input: Vec<Interval> = x
        .iter()
        .map(|&v| Interval::point(v))
        .chain(setup.u_set().intervals())
        .collect();
    Ok(interval_forward(setup.net(), &input)?.output_box())
}

/// Control in `U` minimizing `|f̃(x_from, u) - x_to|_1`: grid search followed by pattern refinement.
pub fn best_witness(
    setup: &ControlSetup,
    x_from: &[f64],
    x_to: &[f64],
    cfg: &PlannerConfig,
) -> Result<(Vec<f64>, Vec<f64>), PlanError> {
    let u_set = setup.u_set();
    let residual = |u: &[f64]| -> Result<(f64, Vec<f64>), PlanError> {
        let out = setup.net().predict(x_from, u)?;
        Ok((l1(&out, x_to), out))
    };
    let ticks: Vec<Vec<f64>> = (0..u_set.dim())
        .map(|q| {
            let (lo, hi) = (u_set.lo()[q], u_set.hi()[q]);
            let r = (hi - lo) / (cfg.grid_ticks - 1) as f64;
            if r > 0.0 {
                GridSpec::ticks(lo, hi, r)
            } else {
                vec![lo]
            }
        })
        .collect();
    let mut best_u = u_set.lo().to_vec();
    let (mut best, mut best_out) = residual(&best_u)?;
    let mut idx = vec![0usize; ticks.len()];
    loop {
        let u: Vec<f64> = idx.iter().zip(&ticks).map(|(&i, t)| t[i]).collect();
        let (r, out) = residual(&u)?;
        if r < best {
            (best, best_out, best_u) = (r, out, u);
        }
        let mut q = 0;
        while q < idx.len() {
            idx[q] += 1;
            if idx[q] < ticks[q].len() {
                break;
            }
            idx[q] = 0;
            q += 1;
        }
        if q == idx.len() {
            break;
        }
    }
    let mut step: Vec<f64> = u_set.widths().iter().map(|w| w / (cfg.grid_ticks - 1) as f64).collect();
    while step.iter().any(|s| *s > 1e-12) {
        if best <= 1e-12 {
            break;
        }
        let mut improved = false;
        for q in 0..best_u.len() {
            for sign in [-1.0, 1.0] {
                let mut u = best_u.clone();
                u[q] = (u[q] + sign * step[q]).clamp(u_set.lo()[q], u_set.hi()[q]);
                let (r, out) = residual(&u)?;
                if r < best {
                    (best, best_out, best_u) = (r, out, u);
                    improved = true;
                }
            }
        }
        if !improved {
            step.iter_mut().for_each(|s| *s *= 0.5);
        }
    }
    Ok((best_u, best_out))
}

fn within(out: &[f64], target: &[f64], tol: &[f64]) -> bool {
    out.iter().zip(target).zip(tol).all(|((o, t), e)| (o - t).abs() <= *e)
}

/// Witness control when `x_to` is a safe state inside the reachable box of `x_from`
/// and some control reproduces it within the tolerance; `None` otherwise.
pub fn edge_feasible(
    setup: &ControlSetup,
    x_from: &[f64],
    x_to: &[f64],
    cfg: &PlannerConfig,
) -> Result<Option<Vec<f64>>, PlanError> {
    check_dim(setup.state_dim(), x_to.len())?;
    if !setup.is_safe_state(x_to) || !reachable_box(setup, x_from)?.contains(x_to, 0.0) {
        return Ok(None);
    }
    let (u, out) = best_witness(setup, x_from, x_to, cfg)?;
    Ok(within(&out, x_to, &cfg.witness_tol).then_some(u))
}

fn check_dim(expected: usize, got: usize) -> Result<(), PlanError> {
    if expected != got {
        return Err(PlanError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Grows a tree from `x0` until `xg` is reachable from some node.
pub fn rrt_build(
    setup: &ControlSetup,
    x0: &[f64],
    xg: &[f64],
    cfg: &PlannerConfig,
    seed: u64,
) -> Result<PlanTree, PlanError> {
    let n = setup.state_dim();
    check_dim(n, x0.len())?;
    check_dim(n, xg.len())?;
    cfg.validate(n)?;
    if !setup.is_safe_state(x0) {
        return Err(PlanError::UnsafeEndpoint("start"));
    }
    if !setup.is_safe_state(xg) {
        return Err(PlanError::UnsafeEndpoint("goal"));
    }
    let mut tree = PlanTree::with_root(x0.to_vec());
    if cfg.max_iters == 0 {
        return Err(PlanError::PlanFailure { iterations: 0, nodes: 1 });
    }
    if try_connect_goal(setup, &mut tree, 0, xg, cfg)? {
        return Ok(tree);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for it in 0..cfg.max_iters {
        tree.iterations = it + 1;
        let x_rand = if rng.gen::<f64>() < cfg.goal_bias {
            xg.to_vec()
        } else {
            sample_box(setup.x_set(), &mut rng)
        };
        let near = nearest(&tree, &x_rand);
        let from = tree.nodes[near].clone();
        let rb = reachable_box(setup, &from)?;
        let mut candidate = setup.x_set().clamp(&rb.clamp(&x_rand));
        let (_, out) = best_witness(setup, &from, &candidate, cfg)?;
        if !within(&out, &candidate, &cfg.witness_tol) {
            candidate = out;
        }
        if l1(&candidate, &from) <= 1e-9 || !setup.is_safe_state(&candidate) || too_close(setup, &candidate, cfg.clearance) {
            continue;
        }
        let Some(witness) = edge_feasible(setup, &from, &candidate, cfg)? else {
            continue;
        };
        let id = tree.add_node(candidate);
        tree.add_edge(near, id, witness);
        if try_connect_goal(setup, &mut tree, id, xg, cfg)? {
            return Ok(tree);
        }
    }
    Err(PlanError::PlanFailure {
        iterations: cfg.max_iters,
        nodes: tree.nodes.len(),
    })
}

fn too_close(setup: &ControlSetup, x: &[f64], clearance: f64) -> bool {
    clearance > 0.0
        && setup.unsafe_region().boxes().iter().any(|b| {
            x.iter()
                .enumerate()
                .all(|(i, &v)| v > b.lo()[i] - clearance && v < b.hi()[i] + clearance)
        })
}

fn try_connect_goal(
    setup: &ControlSetup,
    tree: &mut PlanTree,
    from: usize,
    xg: &[f64],
    cfg: &PlannerConfig,
) -> Result<bool, PlanError> {
    match edge_feasible(setup, &tree.nodes[from], xg, cfg)? {
        Some(u) => {
            let g = tree.add_node(xg.to_vec());
            tree.add_edge(from, g, u);
            tree.goal = Some(g);
            Ok(true)
        }
        None => Ok(false),
    }
}

fn nearest(tree: &PlanTree, x: &[f64]) -> usize {
    tree.nodes
        .iter()
        .enumerate()
        .min_by(|a, b| l1(a.1, x).total_cmp(&l1(b.1, x)))
        .map(|(i, _)| i)
        .expect("tree has a root")
}

#[derive(PartialEq)]
struct Frontier {
    dist: f64,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra over the directed edges with ℓ1 edge lengths; returns node indices `from ..= to`.
pub fn shortest_node_path(tree: &PlanTree, from: usize, to: usize) -> Result<Vec<usize>, PlanError> {
    let n = tree.nodes.len();
    if from >= n || to >= n {
        return Err(PlanError::NoPath { from, to });
    }
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for e in &tree.edges {
        adj[e.from].push((e.to, l1(&tree.nodes[e.from], &tree.nodes[e.to])));
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    dist[from] = 0.0;
    heap.push(Frontier { dist: 0.0, node: from });
    while let Some(Frontier { dist: d, node }) = heap.pop() {
        if d > dist[node] {
            continue;
        }
        if node == to {
            break;
        }
        for &(next, w) in &adj[node] {
            let nd = d + w;
            if nd < dist[next] {
                dist[next] = nd;
                prev[next] = node;
                heap.push(Frontier { dist: nd, node: next });
            }
        }
    }
    if !dist[to].is_finite() {
        return Err(PlanError::NoPath { from, to });
    }
    let mut path = vec![to];
    while *path.last().unwrap() != from {
        path.push(prev[*path.last().unwrap()]);
    }
    path.reverse();
    Ok(path)
}

/// Waypoints from the root to the goal node, both included.
pub fn shortest_path(tree: &PlanTree) -> Result<Vec<Vec<f64>>, PlanError> {
    let goal = tree.goal.ok_or(PlanError::NoPath {
        from: 0,
        to: usize::MAX,
    })?;
    Ok(shortest_node_path(tree, 0, goal)?
        .into_iter()
        .map(|i| tree.nodes[i].clone())
        .collect())
}

pub fn path_length(path: &[Vec<f64>]) -> f64 {
    path.windows(2).map(|w| l1(&w[0], &w[1])).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::build_identity_sum_network;
    use crate::sets::UnsafeRegion;

    fn robot_setup(obstacles: Vec<Hypercube>) -> ControlSetup {
        let x = Hypercube::new(vec![-1.0, -1.0], vec![10.0, 10.0]).unwrap();
        let u = Hypercube::symmetric(&[0.25, 0.25]).unwrap();
        let net = build_identity_sum_network(&x, &u).unwrap();
        let region = UnsafeRegion::new(obstacles, &x).unwrap();
        ControlSetup::new(net, x, u, region, vec![0.05; 2], vec![0.05; 2], vec![0.05; 2]).unwrap()
    }

    #[test]
    fn edge_examples() {
        let obstacle = Hypercube::new(vec![1.0, 1.0], vec![2.0, 2.0]).unwrap();
        let s = robot_setup(vec![obstacle]);
        let cfg = PlannerConfig::exact(2);
        let u = edge_feasible(&s, &[0.0, 0.0], &[0.2, 0.1], &cfg).unwrap().unwrap();
        assert!((u[0] - 0.2).abs() < 1e-6 && (u[1] - 0.1).abs() < 1e-6, "{u:?}");
        assert!(edge_feasible(&s, &[0.0, 0.0], &[0.5, 0.0], &cfg).unwrap().is_none());
        assert!(edge_feasible(&s, &[1.0, 1.0], &[1.1, 1.1], &cfg).unwrap().is_none());
        assert!(edge_feasible(&s, &[1.0, 1.0], &[1.0, 1.1], &cfg).unwrap().is_some());
    }

    #[test]
    fn short_plan_and_invariants() {
        let s = robot_setup(vec![]);
        let cfg = PlannerConfig::exact(2);
        let tree = rrt_build(&s, &[0.0, 0.0], &[0.4, 0.0], &cfg, 3).unwrap();
        assert!(tree.iterations <= 20, "{}", tree.iterations);
        for e in &tree.edges {
            assert!(edge_feasible(&s, &tree.nodes[e.from], &tree.nodes[e.to], &cfg).unwrap().is_some());
        }
        let path = shortest_path(&tree).unwrap();
        assert!(path.len() >= 3);
        assert_eq!(path[0], vec![0.0, 0.0]);
        assert_eq!(path.last().unwrap(), &vec![0.4, 0.0]);
        assert_eq!(tree, rrt_build(&s, &[0.0, 0.0], &[0.4, 0.0], &cfg, 3).unwrap());
    }

    #[test]
    fn endpoint_and_budget_errors() {
        let obstacle = Hypercube::new(vec![1.0, 1.0], vec![2.0, 2.0]).unwrap();
        let s = robot_setup(vec![obstacle]);
        let mut cfg = PlannerConfig::exact(2);
        assert_eq!(
            rrt_build(&s, &[0.0, 0.0], &[1.5, 1.5], &cfg, 0),
            Err(PlanError::UnsafeEndpoint("goal"))
        );
        cfg.max_iters = 0;
        assert!(matches!(
            rrt_build(&s, &[0.0, 0.0], &[5.0, 5.0], &cfg, 0),
            Err(PlanError::PlanFailure { .. })
        ));
    }

    #[test]
    fn clearance_keeps_nodes_off_obstacle_faces() {
        let obstacle = Hypercube::new(vec![0.5, -1.0], vec![1.0, 0.6]).unwrap();
        let s = robot_setup(vec![obstacle.clone()]);
        let mut cfg = PlannerConfig::exact(2);
        cfg.clearance = 0.05;
        let tree = rrt_build(&s, &[0.0, 0.0], &[1.5, 0.0], &cfg, 1).unwrap();
        for x in &tree.nodes[1..tree.nodes.len() - 1] {
            let gap = (0..2)
                .map(|i| (obstacle.lo()[i] - x[i]).max(x[i] - obstacle.hi()[i]))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(gap >= 0.05, "{x:?}");
        }
    }

    #[test]
    fn path_examples() {
        let mut t = PlanTree::with_root(vec![0.0, 0.0]);
        let a = t.add_node(vec![0.2, 0.0]);
        let g = t.add_node(vec![0.4, 0.1]);
        t.add_edge(0, a, vec![0.2, 0.0]);
        t.add_edge(a, g, vec![0.2, 0.1]);
        t.goal = Some(g);
        assert_eq!(shortest_path(&t).unwrap(), vec![vec![0.0, 0.0], vec![0.2, 0.0], vec![0.4, 0.1]]);

        let mut d = PlanTree::with_root(vec![0.0, 0.0]);
        let up = d.add_node(vec![0.0, 1.2]);
        let right = d.add_node(vec![0.4, 0.0]);
        let goal = d.add_node(vec![1.0, 1.0]);
        d.add_edge(0, up, vec![]);
        d.add_edge(0, right, vec![]);
        d.add_edge(up, goal, vec![]);
        d.add_edge(right, goal, vec![]);
        // via right: 0.4 + 1.6 = 2.0; via up: 1.2 + 1.2 = 2.4
        assert_eq!(shortest_node_path(&d, 0, goal).unwrap(), vec![0, right, goal]);
        assert!(matches!(shortest_node_path(&d, goal, 0), Err(PlanError::NoPath { .. })));
        assert!(shortest_path(&PlanTree::with_root(vec![0.0])).is_err());
    }

    #[test]
    fn csv_exports() {
        let path = vec![vec![0.0, 1.0], vec![0.5, 1.5]];
        let csv = path_to_csv(&path);
        assert!(csv.starts_with("i,x0,x1\n0,"));
        assert_eq!(csv.lines().count(), 3);
        assert!((path_length(&path) - 1.0).abs() < 1e-15);
    }
}
