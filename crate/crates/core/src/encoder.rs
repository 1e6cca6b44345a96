//! One robust tracking step as a MILP.
//!
//! The model has four constraint families: input feasibility (measurement box
//! and actuator box with big-M selection of the active bound), network
//! structure (sign-switched interval propagation per layer, with a
//! three-way binary choice per ReLU), safety (output box inflated by the
//! model error, inside the state set and outside every obstacle), and an
//! ℓ1 slack objective toward the reference.

use std::time::Duration;

use log::debug;
use safeguard_milp::{
    BranchAndBound, MilpBackend, MilpError, MilpModel, MilpSolution, MilpStatus, ModelBuilder, SolveStats,
    SolverConfig, VarId,
};
use thiserror::Error;

use crate::interval::Interval;
use crate::nn::{interval_forward, preactivation_bounds, LayerBounds, LayerParams, NnError, ReluNetwork};
use crate::sets::{disjoint_from_region_tol, measurement_box, Hypercube, SetError, UnsafeRegion};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodeError {
    #[error(transparent)]
    Set(#[from] SetError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error("invalid tracking problem: {0}")]
    InvalidProblem(String),
    #[error("measurement is inconsistent with the state set")]
    InfeasibleMeasurement,
    #[error("no control keeps the next state box safe")]
    SolverInfeasible,
    #[error("solver hit its node or iteration limit")]
    IterationLimit,
    #[error("extracted decision failed validation: {0}")]
    DecisionCheck(String),
}

/// Step-invariant data: the model, the feasible sets, obstacles, noise bounds and global neuron bounds.
#[derive(Debug, Clone)]
pub struct ControlSetup {
    net: ReluNetwork,
    x_set: Hypercube,
    u_set: Hypercube,
    unsafe_region: UnsafeRegion,
    eps_x: Vec<f64>,
    eps_y: Vec<f64>,
    eps_u: Vec<f64>,
    layer_bounds: LayerBounds,
    obstacle_margin: f64,
}

impl ControlSetup {
    pub fn new(
        net: ReluNetwork,
        x_set: Hypercube,
        u_set: Hypercube,
        unsafe_region: UnsafeRegion,
        eps_x: Vec<f64>,
        eps_y: Vec<f64>,
        eps_u: Vec<f64>,
    ) -> Result<Self, EncodeError> {
        let (nx, nu) = (x_set.dim(), u_set.dim());
        if net.input_dim() != nx + nu || net.output_dim() != nx {
            return Err(EncodeError::InvalidProblem(format!(
                "network maps {} -> {}, expected {} -> {}",
                net.input_dim(),
                net.output_dim(),
                nx + nu,
                nx
            )));
        }
        for (name, eps, n) in [("eps_x", &eps_x, nx), ("eps_y", &eps_y, nx), ("eps_u", &eps_u, nu)] {
            if eps.len() != n {
                return Err(EncodeError::InvalidProblem(format!("{name} has {} entries, expected {n}", eps.len())));
            }
            if eps.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
                return Err(EncodeError::InvalidProblem(format!("{name} must be finite and non-negative")));
            }
        }
        for (i, b) in unsafe_region.boxes().iter().enumerate() {
            if !b.is_subset_of(&x_set, 0.0) {
                return Err(SetError::ObstacleOutsideStateSet { index: i }.into());
            }
        }
        let layer_bounds = preactivation_bounds(&net, &x_set, &u_set)?;
        Ok(Self {
            net,
            x_set,
            u_set,
            unsafe_region,
            eps_x,
            eps_y,
            eps_u,
            layer_bounds,
            obstacle_margin: 0.0,
        })
    }

    /// Keeps safe boxes at least `margin` away from every obstacle (in the MILP only).
    pub fn with_obstacle_margin(mut self, margin: f64) -> Result<Self, EncodeError> {
        if !(margin >= 0.0 && margin.is_finite()) {
            return Err(EncodeError::InvalidProblem(format!("obstacle margin must be non-negative, got {margin}")));
        }
        self.obstacle_margin = margin;
        Ok(self)
    }

    pub fn obstacle_margin(&self) -> f64 {
        self.obstacle_margin
    }

    pub fn net(&self) -> &ReluNetwork {
        &self.net
    }
    pub fn x_set(&self) -> &Hypercube {
        &self.x_set
    }
    pub fn u_set(&self) -> &Hypercube {
        &self.u_set
    }
    pub fn unsafe_region(&self) -> &UnsafeRegion {
        &self.unsafe_region
    }
    pub fn eps_x(&self) -> &[f64] {
        &self.eps_x
    }
    pub fn eps_y(&self) -> &[f64] {
        &self.eps_y
    }
    pub fn eps_u(&self) -> &[f64] {
        &self.eps_u
    }
    pub fn layer_bounds(&self) -> &LayerBounds {
        &self.layer_bounds
    }
    pub fn state_dim(&self) -> usize {
        self.x_set.dim()
    }
    pub fn control_dim(&self) -> usize {
        self.u_set.dim()
    }

    /// Safe state set check: inside `X` and outside every obstacle interior.
    pub fn is_safe_state(&self, x: &[f64]) -> bool {
        self.x_set.contains(x, 0.0) && !self.unsafe_region.contains_interior(x)
    }
}

/// A single solve: measurement `y` and reference `x_ref` against a fixed setup.
#[derive(Debug, Clone)]
pub struct TrackingProblem<'a> {
    pub setup: &'a ControlSetup,
    pub y: Vec<f64>,
    pub x_ref: Vec<f64>,
}

impl<'a> TrackingProblem<'a> {
    pub fn new(setup: &'a ControlSetup, y: Vec<f64>, x_ref: Vec<f64>) -> Result<Self, EncodeError> {
        let nx = setup.state_dim();
        if y.len() != nx || x_ref.len() != nx {
            return Err(EncodeError::InvalidProblem(format!(
                "measurement and reference must have {nx} entries"
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(EncodeError::InvalidProblem("non-finite measurement".into()));
        }
        if !setup.is_safe_state(&x_ref) {
            return Err(EncodeError::InvalidProblem("reference is not a safe state".into()));
        }
        Ok(Self { setup, y, x_ref })
    }
}

/// Result of one solve, in plant coordinates.
#[derive(Debug, Clone)]
pub struct ControlDecision {
    pub u_cmd: Vec<f64>,
    /// Bounds on the network input `[x, u]`.
    pub input_box: Hypercube,
    pub nn_out_box: Hypercube,
    /// `nn_out_box` inflated by the model error; contains the true next state.
    pub safe_box: Hypercube,
    pub cost: f64,
    pub stats: SolveStats,
}

#[derive(Debug, Clone)]
pub struct InputHandles {
    pub u_cmd: Vec<VarId>,
    pub a0: Vec<VarId>,
    pub b0: Vec<VarId>,
    pub delta_a: Vec<VarId>,
    pub delta_b: Vec<VarId>,
}

#[derive(Debug, Clone, Copy)]
pub struct NeuronHandles {
    pub a: VarId,
    pub b: VarId,
    pub d_mm: VarId,
    pub d_mp: VarId,
    pub d_pp: VarId,
}

#[derive(Debug, Clone)]
pub struct HiddenLayerHandles {
    pub a_hat: Vec<VarId>,
    pub b_hat: Vec<VarId>,
    pub neurons: Vec<NeuronHandles>,
}

impl HiddenLayerHandles {
    pub fn a(&self) -> Vec<VarId> {
        self.neurons.iter().map(|n| n.a).collect()
    }
    pub fn b(&self) -> Vec<VarId> {
        self.neurons.iter().map(|n| n.b).collect()
    }
}

#[derive(Debug, Clone)]
pub struct NnHandles {
    pub hidden: Vec<HiddenLayerHandles>,
    pub a_out: Vec<VarId>,
    pub b_out: Vec<VarId>,
}

#[derive(Debug, Clone)]
pub struct ObstacleHandles {
    pub delta_1: Vec<VarId>,
    pub delta_2: Vec<VarId>,
}

#[derive(Debug, Clone)]
pub struct SafetyHandles {
    pub x_lo: Vec<VarId>,
    pub x_hi: Vec<VarId>,
    pub obstacles: Vec<ObstacleHandles>,
}

#[derive(Debug, Clone)]
pub struct TrackingModel {
    pub model: MilpModel,
    pub input: InputHandles,
    pub nn: NnHandles,
    pub safety: SafetyHandles,
    pub lambda: Vec<VarId>,
}

/// Big-M constant per control dimension: `max(eps_u, u_hi - u_lo - eps_u)`.
pub fn big_m(u_set: &Hypercube, eps_u: &[f64]) -> Vec<f64> {
    (0..u_set.dim())
        .map(|j| eps_u[j].max(u_set.hi()[j] - u_set.lo()[j] - eps_u[j]))
        .collect()
}

/// Actuator rows for one control dimension: `a_u = max(u_lo, u - eps)` and
/// `b_u = min(u_hi, u + eps)` via the indicator pair `(delta_a, delta_b)`.
#[allow(clippy::too_many_arguments)]
pub fn encode_control_bounds(
    m: &mut ModelBuilder,
    u_cmd: VarId,
    a_u: VarId,
    b_u: VarId,
    u_lo: f64,
    u_hi: f64,
    eps_u: f64,
    big_m: f64,
    tag: &str,
) -> Result<(VarId, VarId), MilpError> {
    let da = m.binary(format!("delta_a[{tag}]"));
    let db = m.binary(format!("delta_b[{tag}]"));
    m.ge([(a_u, 1.0)], u_lo)?;
    m.ge([(a_u, 1.0), (u_cmd, -1.0)], -eps_u)?;
    // a <= u_lo + M (1 - da)
    m.le([(a_u, 1.0), (da, big_m)], u_lo + big_m)?;
    // a <= u - eps + M da
    m.le([(a_u, 1.0), (u_cmd, -1.0), (da, -big_m)], -eps_u)?;
    m.le([(b_u, 1.0)], u_hi)?;
    m.le([(b_u, 1.0), (u_cmd, -1.0)], eps_u)?;
    // b >= u_hi - M (1 - db)
    m.ge([(b_u, 1.0), (db, -big_m)], u_hi - big_m)?;
    // b >= u + eps - M db
    m.ge([(b_u, 1.0), (u_cmd, -1.0), (db, big_m)], eps_u)?;
    Ok((da, db))
}

pub fn encode_input_feasibility(p: &TrackingProblem<'_>, m: &mut ModelBuilder) -> Result<InputHandles, EncodeError> {
    let s = p.setup;
    let x_box = measurement_box(&p.y, &s.eps_y, &s.x_set)?.ok_or(EncodeError::InfeasibleMeasurement)?;
    let (nx, nu) = (s.state_dim(), s.control_dim());
    let mut a0 = Vec::with_capacity(nx + nu);
    let mut b0 = Vec::with_capacity(nx + nu);
    for i in 0..nx {
        a0.push(m.continuous(format!("a0[{i}]"), x_box.lo()[i], x_box.lo()[i])?);
        b0.push(m.continuous(format!("b0[{i}]"), x_box.hi()[i], x_box.hi()[i])?);
    }
    let big_m = big_m(&s.u_set, &s.eps_u);
    let mut u_cmd = Vec::with_capacity(nu);
    let mut delta_a = Vec::with_capacity(nu);
    let mut delta_b = Vec::with_capacity(nu);
    for j in 0..nu {
        let (lo, hi) = (s.u_set.lo()[j], s.u_set.hi()[j]);
        let u = m.continuous(format!("u[{j}]"), lo, hi)?;
        let a = m.free(format!("a0[{}]", nx + j));
        let b = m.free(format!("b0[{}]", nx + j));
        let (da, db) = encode_control_bounds(m, u, a, b, lo, hi, s.eps_u[j], big_m[j], &j.to_string())?;
        u_cmd.push(u);
        a0.push(a);
        b0.push(b);
        delta_a.push(da);
        delta_b.push(db);
    }
    for (&a, &b) in a0.iter().zip(&b0).skip(nx) {
        m.le([(a, 1.0), (b, -1.0)], 0.0)?;
    }
    Ok(InputHandles {
        u_cmd,
        a0,
        b0,
        delta_a,
        delta_b,
    })
}

/// Sign-switched rows `a_hat = w·S[a; b] + bias`, `b_hat = w·S[b; a] + bias` for one layer.
fn encode_affine_rows(
    m: &mut ModelBuilder,
    layer: &LayerParams,
    a_prev: &[VarId],
    b_prev: &[VarId],
    a_hat: &[VarId],
    b_hat: &[VarId],
) -> Result<(), MilpError> {
    for j in 0..layer.rows() {
        let mut lo_row = vec![(a_hat[j], -1.0)];
        let mut hi_row = vec![(b_hat[j], -1.0)];
        for (q, &w) in layer.row(j).iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let (lo_src, hi_src) = if w >= 0.0 { (a_prev[q], b_prev[q]) } else { (b_prev[q], a_prev[q]) };
            lo_row.push((lo_src, w));
            hi_row.push((hi_src, w));
        }
        m.eq(lo_row, -layer.bias()[j])?;
        m.eq(hi_row, -layer.bias()[j])?;
    }
    Ok(())
}

/// ReLU case split for one neuron with pre-activation bounds `[a_hat, b_hat] ⊆ [z_lo, z_hi]`.
///
/// Exactly one of `d_mm` (inactive), `d_mp` (straddling), `d_pp` (active) is set,
/// and `[a, b]` becomes the ReLU image of `[a_hat, b_hat]`.
pub fn encode_relu_neuron(
    m: &mut ModelBuilder,
    a_hat: VarId,
    b_hat: VarId,
    z_lo: f64,
    z_hi: f64,
    tag: &str,
) -> Result<NeuronHandles, MilpError> {
    let cap = z_hi.max(0.0);
    let a = m.continuous(format!("a[{tag}]"), 0.0, cap)?;
    let b = m.continuous(format!("b[{tag}]"), 0.0, cap)?;
    let d_mm = m.binary(format!("d--[{tag}]"));
    let d_mp = m.binary(format!("d-+[{tag}]"));
    let d_pp = m.binary(format!("d++[{tag}]"));
    m.ge([(a, 1.0), (a_hat, -1.0)], 0.0)?;
    // a <= a_hat - z_lo (d_mm + d_mp)
    m.le([(a, 1.0), (a_hat, -1.0), (d_mm, z_lo), (d_mp, z_lo)], 0.0)?;
    m.le([(a, 1.0), (d_pp, -z_hi)], 0.0)?;
    m.ge([(b, 1.0), (b_hat, -1.0)], 0.0)?;
    m.le([(b, 1.0), (b_hat, -1.0), (d_mm, z_lo)], 0.0)?;
    m.le([(b, 1.0), (d_mp, -z_hi), (d_pp, -z_hi)], 0.0)?;
    m.le([(a, 1.0), (b, -1.0)], 0.0)?;
    m.eq([(d_mm, 1.0), (d_mp, 1.0), (d_pp, 1.0)], 1.0)?;
    Ok(NeuronHandles { a, b, d_mm, d_mp, d_pp })
}

pub fn encode_nn_structure(
    p: &TrackingProblem<'_>,
    m: &mut ModelBuilder,
    input: &InputHandles,
) -> Result<NnHandles, EncodeError> {
    let s = p.setup;
    let layers = s.net.layers();
    let bounds = &s.layer_bounds;
    let last = layers.len() - 1;
    let mut a_prev = input.a0.clone();
    let mut b_prev = input.b0.clone();
    let mut hidden = Vec::with_capacity(last);
    for (i, layer) in layers[..last].iter().enumerate() {
        let z = &bounds.preact[i];
        let mut a_hat = Vec::with_capacity(layer.rows());
        let mut b_hat = Vec::with_capacity(layer.rows());
        for (j, iv) in z.iter().enumerate() {
            a_hat.push(m.continuous(format!("a_hat[{i},{j}]"), iv.lo, iv.hi)?);
            b_hat.push(m.continuous(format!("b_hat[{i},{j}]"), iv.lo, iv.hi)?);
        }
        encode_affine_rows(m, layer, &a_prev, &b_prev, &a_hat, &b_hat)?;
        let mut neurons = Vec::with_capacity(layer.rows());
        for (j, iv) in z.iter().enumerate() {
            m.le([(a_hat[j], 1.0), (b_hat[j], -1.0)], 0.0)?;
            neurons.push(encode_relu_neuron(m, a_hat[j], b_hat[j], iv.lo, iv.hi, &format!("{i},{j}"))?);
        }
        let handles = HiddenLayerHandles { a_hat, b_hat, neurons };
        a_prev = handles.a();
        b_prev = handles.b();
        hidden.push(handles);
    }
    let out = &layers[last];
    let z = &bounds.preact[last];
    let mut a_out = Vec::with_capacity(out.rows());
    let mut b_out = Vec::with_capacity(out.rows());
    for (j, iv) in z.iter().enumerate() {
        a_out.push(m.continuous(format!("a_out[{j}]"), iv.lo, iv.hi)?);
        b_out.push(m.continuous(format!("b_out[{j}]"), iv.lo, iv.hi)?);
    }
    encode_affine_rows(m, out, &a_prev, &b_prev, &a_out, &b_out)?;
    for (&a, &b) in a_out.iter().zip(&b_out) {
        m.le([(a, 1.0), (b, -1.0)], 0.0)?;
    }
    Ok(NnHandles { hidden, a_out, b_out })
}

/// Rows keeping `[x_lo, x_hi]` outside one obstacle: at least one coordinate separates the boxes.
pub fn encode_obstacle_avoidance(
    m: &mut ModelBuilder,
    x_lo: &[VarId],
    x_hi: &[VarId],
    x_set: &Hypercube,
    obstacle: &Hypercube,
    tag: &str,
) -> Result<ObstacleHandles, MilpError> {
    let n = x_set.dim();
    let mut delta_1 = Vec::with_capacity(n);
    let mut delta_2 = Vec::with_capacity(n);
    for j in 0..n {
        let (xl, xh) = (x_set.lo()[j], x_set.hi()[j]);
        let (ol, oh) = (obstacle.lo()[j], obstacle.hi()[j]);
        let d1 = m.binary(format!("du1[{tag},{j}]"));
        let d2 = m.binary(format!("du2[{tag},{j}]"));
        // x_hi <= xh + (ol - xh) d1
        m.le([(x_hi[j], 1.0), (d1, -(ol - xh))], xh)?;
        // x_hi >= ol - (ol - xl) d1
        m.ge([(x_hi[j], 1.0), (d1, ol - xl)], ol)?;
        // x_lo >= xl + (oh - xl) d2
        m.ge([(x_lo[j], 1.0), (d2, -(oh - xl))], xl)?;
        // x_lo <= oh - (oh - xh) d2
        m.le([(x_lo[j], 1.0), (d2, oh - xh)], oh)?;
        m.le([(d1, 1.0), (d2, 1.0)], 1.0)?;
        delta_1.push(d1);
        delta_2.push(d2);
    }
    m.ge(delta_1.iter().chain(&delta_2).map(|&d| (d, 1.0)), 1.0)?;
    Ok(ObstacleHandles { delta_1, delta_2 })
}

pub fn encode_safety(p: &TrackingProblem<'_>, m: &mut ModelBuilder, nn: &NnHandles) -> Result<SafetyHandles, EncodeError> {
    let s = p.setup;
    let n = s.state_dim();
    let mut x_lo = Vec::with_capacity(n);
    let mut x_hi = Vec::with_capacity(n);
    for j in 0..n {
        let (lo, hi) = (s.x_set.lo()[j], s.x_set.hi()[j]);
        let l = m.continuous(format!("x_lo[{j}]"), lo, hi)?;
        let h = m.continuous(format!("x_hi[{j}]"), lo, hi)?;
        m.eq([(l, 1.0), (nn.a_out[j], -1.0)], -s.eps_x[j])?;
        m.eq([(h, 1.0), (nn.b_out[j], -1.0)], s.eps_x[j])?;
        m.le([(l, 1.0), (h, -1.0)], 0.0)?;
        x_lo.push(l);
        x_hi.push(h);
    }
    let mut obstacles = Vec::with_capacity(s.unsafe_region.len());
    for (i, o) in s.unsafe_region.boxes().iter().enumerate() {
        let grown = o
            .inflate(&vec![s.obstacle_margin; n])?
            .intersect(&s.x_set)?
            .expect("obstacles lie inside the state set");
        obstacles.push(encode_obstacle_avoidance(m, &x_lo, &x_hi, &s.x_set, &grown, &i.to_string())?);
    }
    Ok(SafetyHandles { x_lo, x_hi, obstacles })
}

/// ℓ1 slack objective: `lambda_q` bounds the distance of both box corners from the reference.
pub fn encode_objective(p: &TrackingProblem<'_>, m: &mut ModelBuilder, safety: &SafetyHandles) -> Result<Vec<VarId>, EncodeError> {
    let mut lambda = Vec::with_capacity(p.x_ref.len());
    for (q, &r) in p.x_ref.iter().enumerate() {
        let l = m.continuous(format!("lambda[{q}]"), 0.0, f64::INFINITY)?;
        for x in [safety.x_lo[q], safety.x_hi[q]] {
            m.le([(x, 1.0), (l, -1.0)], r)?;
            m.ge([(x, 1.0), (l, 1.0)], r)?;
        }
        lambda.push(l);
    }
    m.minimize(lambda.iter().map(|&l| (l, 1.0)))?;
    Ok(lambda)
}

pub fn build_tracking_model(p: &TrackingProblem<'_>) -> Result<TrackingModel, EncodeError> {
    let mut m = ModelBuilder::new();
    let input = encode_input_feasibility(p, &mut m)?;
    let nn = encode_nn_structure(p, &mut m, &input)?;
    let safety = encode_safety(p, &mut m, &nn)?;
    let lambda = encode_objective(p, &mut m, &safety)?;
    Ok(TrackingModel {
        model: m.build(),
        input,
        nn,
        safety,
        lambda,
    })
}

/// Closed-form variable count of the tracking model.
pub fn expected_variable_count(setup: &ControlSetup) -> usize {
    let (nx, nu) = (setup.state_dim(), setup.control_dim());
    let neurons: usize = setup.net.hidden_sizes().iter().sum();
    nu + 2 * (nx + nu) + 2 * nu + 7 * neurons + 2 * nx + 2 * nx + 2 * nx * setup.unsafe_region.len() + nx
}

/// Tolerance used when validating extracted boxes against the sets.
pub const DECISION_TOL: f64 = 1e-6;

pub fn solve_tracking(p: &TrackingProblem<'_>, cfg: &SolverConfig) -> Result<ControlDecision, EncodeError> {
    solve_tracking_with(p, &BranchAndBound, cfg)
}

pub fn solve_tracking_with(
    p: &TrackingProblem<'_>,
    backend: &dyn MilpBackend,
    cfg: &SolverConfig,
) -> Result<ControlDecision, EncodeError> {
    let tm = build_tracking_model(p)?;
    let sol = backend.solve(&tm.model, cfg)?;
    debug!(
        "tracking solve: {} vars, {} rows, {} binaries, {:?} in {} nodes",
        tm.model.num_vars(),
        tm.model.num_constraints(),
        tm.model.num_binaries(),
        sol.status,
        sol.stats.nodes
    );
    match sol.status {
        MilpStatus::Optimal => {}
        MilpStatus::Infeasible => return Err(EncodeError::SolverInfeasible),
        MilpStatus::IterationLimit => return Err(EncodeError::IterationLimit),
    }
    let decision = extract_decision(p, &tm, &sol)?;
    validate_decision(p, &decision)?;
    Ok(decision)
}

fn extract_decision(p: &TrackingProblem<'_>, tm: &TrackingModel, sol: &MilpSolution) -> Result<ControlDecision, EncodeError> {
    let s = p.setup;
    let vals = |vars: &[VarId]| vars.iter().map(|&v| sol.value(v)).collect::<Vec<f64>>();
    let u_cmd = s.u_set.clamp(&vals(&tm.input.u_cmd));
    let milp_input = ordered_box(vals(&tm.input.a0), vals(&tm.input.b0))?;
    let milp_out = ordered_box(vals(&tm.nn.a_out), vals(&tm.nn.b_out))?;
    let input_box = input_box_for(s, &p.y, &u_cmd)?
        .ok_or_else(|| EncodeError::DecisionCheck("command yields an empty input box".into()))?;
    let nn_out_box = interval_forward(&s.net, &input_box.intervals())?.output_box();
    if !boxes_agree(&milp_input, &input_box) || !boxes_agree(&milp_out, &nn_out_box) {
        return Err(EncodeError::DecisionCheck(format!(
            "solver boxes {milp_input} / {milp_out} disagree with interval propagation {input_box} / {nn_out_box}"
        )));
    }
    let safe_box = nn_out_box.inflate(&s.eps_x)?;
    Ok(ControlDecision {
        u_cmd,
        input_box,
        nn_out_box,
        safe_box,
        cost: sol.objective_value,
        stats: sol.stats.clone(),
    })
}

/// Builds a box from solver values, absorbing sub-tolerance inversions.
fn ordered_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Hypercube, EncodeError> {
    let mut lo = lo;
    let mut hi = hi;
    for (l, h) in lo.iter_mut().zip(hi.iter_mut()) {
        if *l > *h {
            if *l - *h > DECISION_TOL {
                return Err(EncodeError::DecisionCheck(format!("inverted box bounds {l} > {h}")));
            }
            let mid = 0.5 * (*l + *h);
            *l = mid;
            *h = mid;
        }
    }
    Ok(Hypercube::new(lo, hi)?)
}

fn validate_decision(p: &TrackingProblem<'_>, d: &ControlDecision) -> Result<(), EncodeError> {
    let s = p.setup;
    let nx = s.state_dim();
    let fail = |msg: &str| Err(EncodeError::DecisionCheck(msg.to_string()));
    if !d.input_box.project(0..nx).is_subset_of(&s.x_set, DECISION_TOL) {
        return fail("input state box leaves the state set");
    }
    if !s.u_set.contains(&d.u_cmd, 0.0) {
        return fail("command outside the control set");
    }
    if !d.safe_box.is_subset_of(&s.x_set, DECISION_TOL) {
        return fail("safe box leaves the state set");
    }
    if !disjoint_from_region_tol(&d.safe_box, &s.unsafe_region, DECISION_TOL)? {
        return fail("safe box overlaps an obstacle");
    }
    Ok(())
}

fn boxes_agree(a: &Hypercube, b: &Hypercube) -> bool {
    a.intervals()
        .iter()
        .zip(b.intervals())
        .all(|(r, b): (&Interval, Interval)| (r.lo - b.lo).abs() <= DECISION_TOL && (r.hi - b.hi).abs() <= DECISION_TOL)
}

impl ControlDecision {
    pub fn solve_time(&self) -> Duration {
        self.stats.wall_time
    }
}

/// Exact input box `[a0, b0]` for a given command, computed in closed form.
pub fn input_box_for(setup: &ControlSetup, y: &[f64], u_cmd: &[f64]) -> Result<Option<Hypercube>, SetError> {
    let Some(x_box) = measurement_box(y, &setup.eps_y, &setup.x_set)? else {
        return Ok(None);
    };
    let u_lo: Vec<f64> = (0..u_cmd.len())
        .map(|j| setup.u_set.lo()[j].max(u_cmd[j] - setup.eps_u[j]))
        .collect();
    let u_hi: Vec<f64> = (0..u_cmd.len())
        .map(|j| setup.u_set.hi()[j].min(u_cmd[j] + setup.eps_u[j]))
        .collect();
    let Ok(u_box) = Hypercube::new(u_lo, u_hi) else {
        return Ok(None);
    };
    Ok(Some(x_box.product(&u_box)))
}
