//! Best-first branch-and-bound over binary variables.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use log::debug;

use crate::config::SolverConfig;
use crate::error::MilpError;
use crate::model::{MilpModel, VarId};
use crate::simplex::{solve_with_bounds, LpStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MilpStatus {
    Optimal,
    Infeasible,
    /// Node or simplex limit hit; `values` holds the best incumbent if one was found.
    IterationLimit,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveStats {
    pub nodes: usize,
    pub simplex_iterations: usize,
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct MilpSolution {
    pub status: MilpStatus,
    /// Indexed by `VarId::index()`; empty when no incumbent exists.
    pub values: Vec<f64>,
    pub objective_value: f64,
    pub stats: SolveStats,
}

impl MilpSolution {
    pub fn value(&self, var: VarId) -> f64 {
        self.values[var.index()]
    }

    pub fn has_incumbent(&self) -> bool {
        !self.values.is_empty()
    }
}

struct Node {
    bound: f64,
    depth: usize,
    seq: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    values: Vec<f64>,
}

// Min-heap on bound; ties go to the deeper node, then the older one.
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

struct Search<'a> {
    model: &'a MilpModel,
    config: &'a SolverConfig,
    binaries: Vec<VarId>,
    stats: SolveStats,
    incumbent: Option<(f64, Vec<f64>)>,
    seq: usize,
}

enum Evaluated {
    Pruned,
    Integral(f64, Vec<f64>),
    Open(Node),
}

/// Solves `model` to optimality by best-first branch-and-bound.
///
/// Branches on the most fractional binary (lowest `VarId` on ties). A node is
/// pruned when its LP bound is within `relative_gap` of the incumbent.
pub fn solve(model: &MilpModel, config: &SolverConfig) -> Result<MilpSolution, MilpError> {
    config.validate()?;
    let start = Instant::now();
    let mut search = Search {
        model,
        config,
        binaries: model.binaries(),
        stats: SolveStats::default(),
        incumbent: None,
        seq: 0,
    };
    let outcome = search.run();
    search.stats.wall_time = start.elapsed();
    let stats = search.stats.clone();
    let status = match outcome {
        Ok(()) => {
            if search.incumbent.is_some() {
                MilpStatus::Optimal
            } else {
                MilpStatus::Infeasible
            }
        }
        Err(MilpError::IterationLimit(_)) => MilpStatus::IterationLimit,
        Err(e) => return Err(e),
    };
    debug!(
        "branch-and-bound: {:?} after {} nodes, {} simplex iterations",
        status, stats.nodes, stats.simplex_iterations
    );
    Ok(match search.incumbent {
        Some((obj, values)) => MilpSolution {
            status,
            values,
            objective_value: obj,
            stats,
        },
        None => MilpSolution {
            status,
            values: Vec::new(),
            objective_value: f64::INFINITY,
            stats,
        },
    })
}

impl Search<'_> {
    fn run(&mut self) -> Result<(), MilpError> {
        let lower = self.model.lower_bounds();
        let upper = self.model.upper_bounds();
        let mut heap = BinaryHeap::new();
        match self.evaluate(lower, upper, 0)? {
            Evaluated::Pruned => {}
            Evaluated::Integral(obj, values) => self.offer(obj, values),
            Evaluated::Open(node) => heap.push(node),
        }
        while let Some(node) = heap.pop() {
            if self.prunable(node.bound) {
                // Best-first: every remaining node is at least as bad.
                break;
            }
            let var = self.branching_variable(&node.values);
            for value in [0.0, 1.0] {
                let mut lower = node.lower.clone();
                let mut upper = node.upper.clone();
                lower[var.index()] = value;
                upper[var.index()] = value;
                match self.evaluate(lower, upper, node.depth + 1)? {
                    Evaluated::Pruned => {}
                    Evaluated::Integral(obj, values) => self.offer(obj, values),
                    Evaluated::Open(child) => heap.push(child),
                }
            }
        }
        Ok(())
    }

    fn evaluate(&mut self, lower: Vec<f64>, upper: Vec<f64>, depth: usize) -> Result<Evaluated, MilpError> {
        if self.stats.nodes >= self.config.max_nodes {
            return Err(MilpError::IterationLimit(self.config.max_nodes));
        }
        self.stats.nodes += 1;
        let lp = solve_with_bounds(self.model, &lower, &upper, self.config)?;
        self.stats.simplex_iterations += lp.iterations;
        match lp.status {
            LpStatus::Infeasible => return Ok(Evaluated::Pruned),
            LpStatus::Unbounded => return Err(MilpError::Unbounded),
            LpStatus::Optimal => {}
        }
        if self.prunable(lp.objective) {
            return Ok(Evaluated::Pruned);
        }
        let tol = self.config.integrality_tol;
        let integral = self
            .binaries
            .iter()
            .all(|b| frac(lp.values[b.index()]) <= tol);
        if integral {
            return Ok(self.polish(lower, upper, lp.values, lp.objective));
        }
        self.seq += 1;
        Ok(Evaluated::Open(Node {
            bound: lp.objective,
            depth,
            seq: self.seq,
            lower,
            upper,
            values: lp.values,
        }))
    }

    /// Re-solves with binaries snapped to {0, 1} so the continuous part is exact.
    fn polish(&mut self, mut lower: Vec<f64>, mut upper: Vec<f64>, values: Vec<f64>, objective: f64) -> Evaluated {
        for b in &self.binaries {
            let v = values[b.index()].round();
            lower[b.index()] = v;
            upper[b.index()] = v;
        }
        match solve_with_bounds(self.model, &lower, &upper, self.config) {
            Ok(lp) if lp.status == LpStatus::Optimal => {
                self.stats.simplex_iterations += lp.iterations;
                Evaluated::Integral(lp.objective, lp.values)
            }
            _ => {
                let mut values = values;
                for b in &self.binaries {
                    values[b.index()] = values[b.index()].round();
                }
                Evaluated::Integral(objective, values)
            }
        }
    }

    fn offer(&mut self, obj: f64, values: Vec<f64>) {
        let better = match &self.incumbent {
            None => true,
            Some((best, _)) => obj < *best,
        };
        if better {
            self.incumbent = Some((obj, values));
        }
    }

    fn prunable(&self, bound: f64) -> bool {
        match &self.incumbent {
            None => false,
            Some((best, _)) => bound >= best - self.config.relative_gap * best.abs().max(1.0),
        }
    }

    fn branching_variable(&self, values: &[f64]) -> VarId {
        let mut chosen = None;
        let mut most = -1.0;
        for &b in &self.binaries {
            let f = frac(values[b.index()]);
            if f > self.config.integrality_tol && f > most {
                most = f;
                chosen = Some(b);
            }
        }
        chosen.expect("open node has a fractional binary")
    }
}

/// Distance to the nearest integer.
fn frac(v: f64) -> f64 {
    (v - v.round()).abs()
}
