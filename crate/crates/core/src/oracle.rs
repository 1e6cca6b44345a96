//! Brute-force validators for the encoder and solver. Never used on the control path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safeguard_milp::{solve_with_bounds, LpStatus, MilpError, MilpModel, SolverConfig, VarId};
use thiserror::Error;

use crate::encoder::{input_box_for, TrackingProblem};
use crate::nn::{interval_forward, NnError, ReluNetwork};
use crate::sets::{disjoint_from_region_tol, Hypercube, SetError};

/// Shared comparison tolerance for oracle checks.
pub const ORACLE_TOL: f64 = 1e-6;

/// Slack allowed when checking grid boxes against the state set and obstacles.
const GEOMETRY_TOL: f64 = 1e-9;

pub const MAX_ENUMERATED_BINARIES: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error("grid resolution must be positive in every dimension")]
    BadResolution,
    #[error("no grid point yields a safe next-state box")]
    NoFeasibleGridPoint,
    #[error("{0} binaries exceed the enumeration limit of {MAX_ENUMERATED_BINARIES}")]
    TooManyBinaries(usize),
    #[error("sample count must be at least 1")]
    NoSamples,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    resolution: Vec<f64>,
}

impl GridSpec {
    pub fn new(resolution: Vec<f64>) -> Result<Self, OracleError> {
        if resolution.is_empty() || resolution.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(OracleError::BadResolution);
        }
        Ok(Self { resolution })
    }

    pub fn uniform(resolution: f64, dim: usize) -> Result<Self, OracleError> {
        Self::new(vec![resolution; dim])
    }

    pub fn resolution(&self) -> &[f64] {
        &self.resolution
    }

    /// Axis ticks `lo, lo + r, ...` always including `hi`.
    pub fn ticks(lo: f64, hi: f64, r: f64) -> Vec<f64> {
        let n = ((hi - lo) / r + 1e-9).floor() as usize;
        let mut t: Vec<f64> = (0..=n).map(|i| (lo + i as f64 * r).min(hi)).collect();
        if hi - t[t.len() - 1] > 1e-12 {
            t.push(hi);
        }
        t
    }

    /// All grid points of `b` in lexicographic order.
    pub fn points(&self, b: &Hypercube) -> Result<Vec<Vec<f64>>, OracleError> {
        if self.resolution.len() != b.dim() {
            return Err(SetError::DimensionMismatch {
                expected: b.dim(),
                got: self.resolution.len(),
            }
            .into());
        }
        let axes: Vec<Vec<f64>> = (0..b.dim())
            .map(|i| Self::ticks(b.lo()[i], b.hi()[i], self.resolution[i]))
            .collect();
        let mut out = vec![Vec::new()];
        for axis in &axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        Ok(out)
    }
}

/// Network outputs at `n` seeded uniform samples of `x_box × u_box`.
pub fn sample_reachable(
    net: &ReluNetwork,
    x_box: &Hypercube,
    u_box: &Hypercube,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, OracleError> {
    if n == 0 {
        return Err(OracleError::NoSamples);
    }
    let domain = x_box.product(u_box);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Ok(net.forward(&sample_box(&domain, &mut rng))?))
        .collect()
}

pub fn sample_box<R: Rng + ?Sized>(b: &Hypercube, rng: &mut R) -> Vec<f64> {
    b.lo()
        .iter()
        .zip(b.hi())
        .map(|(&l, &h)| if h > l { rng.gen_range(l..=h) } else { l })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommandEvaluation {
    pub cost: f64,
    pub safe_box: Hypercube,
}

/// Box cost of one fixed command, or `None` when the command is unsafe or the measurement inconsistent.
pub fn evaluate_command(p: &TrackingProblem<'_>, u_cmd: &[f64]) -> Result<Option<CommandEvaluation>, OracleError> {
    let s = p.setup;
    let Some(input) = input_box_for(s, &p.y, u_cmd)? else {
        return Ok(None);
    };
    let out = interval_forward(s.net(), &input.intervals())?;
    let safe_box = out.output_box().inflate(s.eps_x())?;
    if !safe_box.is_subset_of(s.x_set(), GEOMETRY_TOL) || !disjoint_from_region_tol(&safe_box, s.unsafe_region(), GEOMETRY_TOL)? {
        return Ok(None);
    }
    let cost = (0..safe_box.dim())
        .map(|q| (safe_box.lo()[q] - p.x_ref[q]).abs().max((safe_box.hi()[q] - p.x_ref[q]).abs()))
        .sum();
    Ok(Some(CommandEvaluation { cost, safe_box }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub best_u: Vec<f64>,
    pub best_cost: f64,
    pub feasible_points: usize,
}

/// Minimizes the box cost over a control grid; ties keep the lexicographically smallest command.
pub fn grid_control_search(p: &TrackingProblem<'_>, grid: &GridSpec) -> Result<GridResult, OracleError> {
    grid_search_points(p, &grid.points(p.setup.u_set())?)
}

pub fn grid_search_points(p: &TrackingProblem<'_>, points: &[Vec<f64>]) -> Result<GridResult, OracleError> {
    let mut best: Option<(f64, &Vec<f64>)> = None;
    let mut feasible = 0;
    for u in points {
        if let Some(ev) = evaluate_command(p, u)? {
            feasible += 1;
            if best.is_none_or(|(c, _)| ev.cost < c) {
                best = Some((ev.cost, u));
            }
        }
    }
    let (best_cost, best_u) = best.ok_or(OracleError::NoFeasibleGridPoint)?;
    Ok(GridResult {
        best_u: best_u.clone(),
        best_cost,
        feasible_points: feasible,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryAssignment {
    /// Binary variables in model order with their fixed values.
    pub values: Vec<(VarId, u8)>,
    /// A feasible point of the remaining LP.
    pub point: Vec<f64>,
}

impl BinaryAssignment {
    pub fn value(&self, var: VarId) -> Option<u8> {
        self.values.iter().find(|(v, _)| *v == var).map(|(_, x)| *x)
    }
}

/// Every binary assignment for which the LP with `fixings` applied is feasible.
pub fn enumerate_binary_feasibility(
    model: &MilpModel,
    fixings: &[(VarId, f64)],
    cfg: &SolverConfig,
) -> Result<Vec<BinaryAssignment>, OracleError> {
    let bins = model.binaries();
    if bins.len() > MAX_ENUMERATED_BINARIES {
        return Err(OracleError::TooManyBinaries(bins.len()));
    }
    let mut lower = model.lower_bounds();
    let mut upper = model.upper_bounds();
    for &(v, x) in fixings {
        if v.index() >= lower.len() {
            return Err(MilpError::UnknownVariable(v).into());
        }
        lower[v.index()] = x;
        upper[v.index()] = x;
    }
    let mut feasible = Vec::new();
    for mask in 0u32..(1u32 << bins.len()) {
        let values: Vec<(VarId, u8)> = bins
            .iter()
            .enumerate()
            .map(|(k, &v)| (v, ((mask >> k) & 1) as u8))
            .collect();
        for &(v, x) in &values {
            lower[v.index()] = f64::from(x);
            upper[v.index()] = f64::from(x);
        }
        let lp = solve_with_bounds(model, &lower, &upper, cfg)?;
        match lp.status {
            LpStatus::Optimal | LpStatus::Unbounded => feasible.push(BinaryAssignment {
                values,
                point: lp.values,
            }),
            LpStatus::Infeasible => {}
        }
    }
    Ok(feasible)
}
