//! Dense bounded-variable primal simplex.
//!
//! Every constraint row `a·x rel rhs` gets a row variable `r = a·x` whose bounds
//! encode the relation, so the working system is `A x - r (+ art) = 0` with
//! all the feasibility information carried by variable bounds. Rows whose
//! initial activity violates the row bounds receive an artificial column;
//! phase one drives the artificials to zero.
//!
//! Pricing is Dantzig (largest reduced cost, lowest index on ties) and falls
//! back to Bland's rule after a run of degenerate pivots.

use log::trace;

use crate::config::SolverConfig;
use crate::error::MilpError;
use crate::model::{MilpModel, Relation};

const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const TIE_TOL: f64 = 1e-12;
const DEGENERATE_RUN: usize = 50;
const REFRESH_EVERY: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Structural variable values; empty unless `Optimal`.
    pub values: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl LpSolution {
    fn without_point(status: LpStatus, iterations: usize) -> Self {
        Self {
            status,
            values: Vec::new(),
            objective: match status {
                LpStatus::Unbounded => f64::NEG_INFINITY,
                _ => f64::INFINITY,
            },
            iterations,
        }
    }
}

/// Solves the continuous relaxation of `model` (binaries relaxed to `[0, 1]`).
///
/// Returns `Err(IterationLimit)` when `max_simplex_iters` is exhausted in either phase.
pub fn solve_lp(model: &MilpModel, config: &SolverConfig) -> Result<LpSolution, MilpError> {
    solve_with_bounds(model, &model.lower_bounds(), &model.upper_bounds(), config)
}

/// Like [`solve_lp`] but with explicit per-variable bounds overriding the model's.
pub fn solve_with_bounds(
    model: &MilpModel,
    lower: &[f64],
    upper: &[f64],
    config: &SolverConfig,
) -> Result<LpSolution, MilpError> {
    assert_eq!(lower.len(), model.num_vars());
    assert_eq!(upper.len(), model.num_vars());
    if lower.iter().zip(upper).any(|(l, u)| l > u) {
        return Ok(LpSolution::without_point(LpStatus::Infeasible, 0));
    }
    let Some(mut tab) = Tableau::new(model, lower, upper, config.feasibility_tol) else {
        return Ok(LpSolution::without_point(LpStatus::Infeasible, 0));
    };
    let mut iterations = 0;

    if tab.num_artificial > 0 {
        let cost: Vec<f64> = (0..tab.ncols)
            .map(|j| if j >= tab.first_artificial { 1.0 } else { 0.0 })
            .collect();
        // Phase one is bounded below by zero.
        tab.optimize(&cost, config.max_simplex_iters, &mut iterations)?;
        let worst = (tab.first_artificial..tab.ncols)
            .map(|j| tab.x[j].abs())
            .fold(0.0, f64::max);
        if worst > config.feasibility_tol {
            trace!("phase one ends with artificial mass {worst:e}");
            return Ok(LpSolution::without_point(LpStatus::Infeasible, iterations));
        }
        for j in tab.first_artificial..tab.ncols {
            tab.lo[j] = 0.0;
            tab.hi[j] = 0.0;
            if tab.row_of[j].is_none() {
                tab.x[j] = 0.0;
            }
        }
    }

    let mut cost = vec![0.0; tab.ncols];
    for &(v, c) in model.objective() {
        cost[v.index()] = c;
    }
    if tab.optimize(&cost, config.max_simplex_iters, &mut iterations)? == Phase::Unbounded {
        return Ok(LpSolution::without_point(LpStatus::Unbounded, iterations));
    }
    tab.refresh_basics();

    let mut values = tab.x[..tab.nstruct].to_vec();
    // Basic values may sit a rounding error outside their bounds.
    for (j, v) in values.iter_mut().enumerate() {
        *v = v.clamp(tab.lo[j], tab.hi[j]);
    }
    let objective = model.objective_value(&values);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        values,
        objective,
        iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Optimal,
    Unbounded,
}

struct Tableau {
    m: usize,
    ncols: usize,
    nstruct: usize,
    first_artificial: usize,
    num_artificial: usize,
    /// Row-major `m x ncols`, always equal to `B^-1 [A | -I | D]`.
    t: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    basis: Vec<usize>,
    row_of: Vec<Option<usize>>,
}

impl Tableau {
    /// `None` when an empty constraint is violated.
    fn new(model: &MilpModel, lower: &[f64], upper: &[f64], tol: f64) -> Option<Self> {
        let n = model.num_vars();
        let rows: Vec<_> = model
            .constraints()
            .iter()
            .filter(|c| {
                // Empty rows are checked here and dropped.
                !c.coeffs.iter().all(|&(_, a)| a == 0.0)
            })
            .collect();
        for c in model.constraints() {
            if c.coeffs.iter().all(|&(_, a)| a == 0.0) && !c.relation.holds(0.0, c.rhs, tol) {
                return None;
            }
        }
        let m = rows.len();

        let mut x = Vec::with_capacity(n + 2 * m);
        for j in 0..n {
            x.push(initial_value(lower[j], upper[j]));
        }

        let mut row_lo = Vec::with_capacity(m);
        let mut row_hi = Vec::with_capacity(m);
        let mut activity = Vec::with_capacity(m);
        let mut needs_art = Vec::with_capacity(m);
        for c in &rows {
            let (rl, rh) = match c.relation {
                Relation::Le => (f64::NEG_INFINITY, c.rhs),
                Relation::Ge => (c.rhs, f64::INFINITY),
                Relation::Eq => (c.rhs, c.rhs),
            };
            let act: f64 = c.coeffs.iter().map(|&(v, a)| a * x[v.index()]).sum();
            needs_art.push(act < rl - tol || act > rh + tol);
            row_lo.push(rl);
            row_hi.push(rh);
            activity.push(act);
        }
        let num_artificial = needs_art.iter().filter(|&&b| b).count();
        let first_artificial = n + m;
        let ncols = n + m + num_artificial;

        let mut lo = lower.to_vec();
        let mut hi = upper.to_vec();
        lo.extend_from_slice(&row_lo);
        hi.extend_from_slice(&row_hi);
        lo.resize(ncols, 0.0);
        hi.resize(ncols, f64::INFINITY);
        x.resize(ncols, 0.0);

        let mut t = vec![0.0; m * ncols];
        let mut basis = vec![0; m];
        let mut row_of = vec![None; ncols];
        let mut next_art = first_artificial;
        for (i, c) in rows.iter().enumerate() {
            let row = &mut t[i * ncols..(i + 1) * ncols];
            for &(v, a) in &c.coeffs {
                row[v.index()] += a;
            }
            row[n + i] = -1.0;
            let pivot;
            if needs_art[i] {
                let target = if activity[i] < row_lo[i] { row_lo[i] } else { row_hi[i] };
                let sigma = if target > activity[i] { 1.0 } else { -1.0 };
                x[n + i] = target;
                x[next_art] = (target - activity[i]).abs();
                row[next_art] = sigma;
                basis[i] = next_art;
                row_of[next_art] = Some(i);
                pivot = sigma;
                next_art += 1;
            } else {
                x[n + i] = activity[i];
                basis[i] = n + i;
                row_of[n + i] = Some(i);
                pivot = -1.0;
            }
            if pivot != 1.0 {
                for e in row.iter_mut() {
                    *e /= pivot;
                }
            }
        }

        Some(Self {
            m,
            ncols,
            nstruct: n,
            first_artificial,
            num_artificial,
            t,
            lo,
            hi,
            x,
            basis,
            row_of,
        })
    }

    fn optimize(&mut self, cost: &[f64], max_iters: usize, iterations: &mut usize) -> Result<Phase, MilpError> {
        let mut degenerate_run = 0usize;
        let mut since_refresh = 0usize;
        let mut reduced = vec![0.0; self.ncols];
        loop {
            let bland = degenerate_run >= DEGENERATE_RUN;

            reduced.copy_from_slice(cost);
            for i in 0..self.m {
                let cb = cost[self.basis[i]];
                if cb != 0.0 {
                    let row = &self.t[i * self.ncols..(i + 1) * self.ncols];
                    for (d, &a) in reduced.iter_mut().zip(row) {
                        *d -= cb * a;
                    }
                }
            }

            let mut entering: Option<(usize, f64)> = None;
            let mut best = 0.0;
            for j in 0..self.ncols {
                if self.row_of[j].is_some() || self.lo[j] == self.hi[j] {
                    continue;
                }
                let d = reduced[j];
                let dir = if d < -OPT_TOL && self.x[j] < self.hi[j] {
                    1.0
                } else if d > OPT_TOL && self.x[j] > self.lo[j] {
                    -1.0
                } else {
                    continue;
                };
                if bland {
                    entering = Some((j, dir));
                    break;
                }
                if d.abs() > best {
                    best = d.abs();
                    entering = Some((j, dir));
                }
            }
            let Some((j, dir)) = entering else {
                return Ok(Phase::Optimal);
            };
            if *iterations >= max_iters {
                return Err(MilpError::IterationLimit(max_iters));
            }
            *iterations += 1;

            // Moving x_j by dir * step changes basic i by -dir * step * alpha_i.
            let span = self.hi[j] - self.lo[j];
            let mut step = if span.is_finite() { span } else { f64::INFINITY };
            let mut leave: Option<usize> = None;
            let mut leave_alpha = 0.0;
            for i in 0..self.m {
                let alpha = self.t[i * self.ncols + j];
                let g = dir * alpha;
                let b = self.basis[i];
                let limit = if g > PIVOT_TOL && self.lo[b].is_finite() {
                    ((self.x[b] - self.lo[b]) / g).max(0.0)
                } else if g < -PIVOT_TOL && self.hi[b].is_finite() {
                    ((self.hi[b] - self.x[b]) / -g).max(0.0)
                } else {
                    continue;
                };
                let take = match leave {
                    // Strictly shorter than the bound flip (or the first finite limit).
                    None => limit < step - TIE_TOL,
                    Some(r) => {
                        limit < step - TIE_TOL
                            || (limit <= step + TIE_TOL
                                && if bland {
                                    b < self.basis[r]
                                } else {
                                    alpha.abs() > leave_alpha + TIE_TOL
                                        || ((alpha.abs() - leave_alpha).abs() <= TIE_TOL
                                            && b < self.basis[r])
                                })
                    }
                };
                if take {
                    step = step.min(limit);
                    leave = Some(i);
                    leave_alpha = alpha.abs();
                }
            }
            if !step.is_finite() {
                return Ok(Phase::Unbounded);
            }

            if step <= TIE_TOL {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }

            let delta = dir * step;
            for i in 0..self.m {
                let alpha = self.t[i * self.ncols + j];
                if alpha != 0.0 {
                    self.x[self.basis[i]] -= delta * alpha;
                }
            }
            self.x[j] += delta;

            match leave {
                None => {
                    // Bound flip.
                    self.x[j] = if dir > 0.0 { self.hi[j] } else { self.lo[j] };
                }
                Some(r) => {
                    let out = self.basis[r];
                    let g = dir * self.t[r * self.ncols + j];
                    self.x[out] = if g > 0.0 { self.lo[out] } else { self.hi[out] };
                    self.pivot(r, j);
                    since_refresh += 1;
                    if since_refresh >= REFRESH_EVERY {
                        self.refresh_basics();
                        since_refresh = 0;
                    }
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let nc = self.ncols;
        let p = self.t[r * nc + j];
        for e in &mut self.t[r * nc..(r + 1) * nc] {
            *e /= p;
        }
        let nz: Vec<usize> = (0..nc).filter(|&k| self.t[r * nc + k] != 0.0).collect();
        let pivot_row: Vec<f64> = nz.iter().map(|&k| self.t[r * nc + k]).collect();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * nc + j];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.t[i * nc..(i + 1) * nc];
            for (&k, &v) in nz.iter().zip(&pivot_row) {
                row[k] -= f * v;
            }
            row[j] = 0.0;
        }
        let out = self.basis[r];
        self.row_of[out] = None;
        self.row_of[j] = Some(r);
        self.basis[r] = j;
    }

    /// Recomputes basic values from the nonbasic ones (`x_B = -sum T_j x_j`).
    fn refresh_basics(&mut self) {
        let nc = self.ncols;
        let nonbasic: Vec<usize> = (0..nc)
            .filter(|&k| self.row_of[k].is_none() && self.x[k] != 0.0)
            .collect();
        for i in 0..self.m {
            let row = &self.t[i * nc..(i + 1) * nc];
            let v: f64 = nonbasic.iter().map(|&k| row[k] * self.x[k]).sum();
            self.x[self.basis[i]] = -v;
        }
    }
}

fn initial_value(lo: f64, hi: f64) -> f64 {
    if lo.is_finite() {
        lo
    } else if hi.is_finite() {
        hi
    } else {
        0.0
    }
}
