//! Closed-loop episodes: measure, pick a waypoint, solve, actuate with disturbance, advance, log.

use std::collections::VecDeque;
use std::fmt::{self, Write as _};
use std::time::Instant;

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::encoder::{solve_tracking, ControlSetup, EncodeError, TrackingProblem};
use crate::planner::{rrt_build, shortest_path, PlanError, PlanTree};
use crate::plants::{measure, sample_noise, PlantError};
use crate::scenario::{Scenario, Task};
use crate::sets::{disjoint_from_region_tol, Hypercube, UnsafeRegion};

/// Closed-box tolerance for waypoint, goal and audit membership tests.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error("no waypoints to track")]
    NoWaypoints,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GoalReached,
    Infeasible,
    StepLimit,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::GoalReached => "goal_reached",
            Termination::Infeasible => "infeasible",
            Termination::StepLimit => "step_limit",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    /// Solved; the plant advanced.
    Optimal {
        u_cmd: Vec<f64>,
        u_act: Vec<f64>,
        safe_box: Hypercube,
        cost: f64,
    },
    /// No admissible command; the episode halted here.
    Infeasible(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub x_ref: Vec<f64>,
    pub outcome: StepOutcome,
    pub x_next: Option<Vec<f64>>,
    pub waypoints_left: usize,
    pub solve_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub steps: Vec<StepRecord>,
    pub final_state: Vec<f64>,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    OutsideBox { k: usize },
    ObstacleOverlap { k: usize },
}

impl TrajectoryLog {
    /// Every solved step whose successor left the safe box or whose box meets an obstacle.
    pub fn safety_violations(&self, region: &UnsafeRegion) -> Vec<Violation> {
        let mut out = Vec::new();
        for s in &self.steps {
            if let StepOutcome::Optimal { safe_box, .. } = &s.outcome {
                match &s.x_next {
                    Some(x) if safe_box.contains(x, MEMBERSHIP_TOL) => {}
                    _ => out.push(Violation::OutsideBox { k: s.k }),
                }
                if !disjoint_from_region_tol(safe_box, region, MEMBERSHIP_TOL).unwrap_or(false) {
                    out.push(Violation::ObstacleOverlap { k: s.k });
                }
            }
        }
        out
    }

    /// Copy with wall-clock fields zeroed, for replay comparisons.
    pub fn without_timing(&self) -> Self {
        let mut log = self.clone();
        log.steps.iter_mut().for_each(|s| s.solve_ms = 0.0);
        log
    }

    pub fn solve_times_ms(&self) -> Vec<f64> {
        self.steps
            .iter()
            .filter(|s| matches!(s.outcome, StepOutcome::Optimal { .. }))
            .map(|s| s.solve_ms)
            .collect()
    }

    /// One row per step plus a terminal row carrying the final state and status.
    pub fn to_csv(&self, nx: usize, nu: usize) -> String {
        let mut cols = vec!["k".to_string()];
        for (prefix, n) in [
            ("x", nx),
            ("y", nx),
            ("xr", nx),
            ("u_cmd", nu),
            ("u_act", nu),
            ("box_lo", nx),
            ("box_hi", nx),
        ] {
            cols.extend((0..n).map(|i| format!("{prefix}{i}")));
        }
        cols.extend(["cost", "status", "solve_ms"].map(String::from));
        let mut s = cols.join(",");
        s.push('\n');
        let num = |v: &[f64]| v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>();
        let blank = |n: usize| vec![String::new(); n];
        for st in &self.steps {
            let mut row = vec![st.k.to_string()];
            row.extend(num(&st.x));
            row.extend(num(&st.y));
            row.extend(num(&st.x_ref));
            match &st.outcome {
                StepOutcome::Optimal {
                    u_cmd,
                    u_act,
                    safe_box,
                    cost,
                } => {
                    row.extend(num(u_cmd));
                    row.extend(num(u_act));
                    row.extend(num(safe_box.lo()));
                    row.extend(num(safe_box.hi()));
                    row.push(format!("{cost:.16e}"));
                    row.push("optimal".into());
                }
                StepOutcome::Infeasible(_) => {
                    row.extend(blank(2 * nu + 2 * nx + 1));
                    row.push("infeasible".into());
                }
            }
            row.push(format!("{:.3}", st.solve_ms));
            let _ = writeln!(s, "{}", row.join(","));
        }
        let mut row = vec![self.steps.len().to_string()];
        row.extend(num(&self.final_state));
        row.extend(blank(2 * nx + 2 * nu + 2 * nx + 1));
        row.push(self.termination.to_string());
        row.push(String::new());
        let _ = writeln!(s, "{}", row.join(","));
        s
    }
}

/// Planned tree and waypoints (without the start state) for a goal task.
#[derive(Debug, Clone)]
pub struct Plan {
    pub tree: Option<PlanTree>,
    pub waypoints: Vec<Vec<f64>>,
}

pub fn plan(scenario: &Scenario, setup: &ControlSetup) -> Result<Plan, RuntimeError> {
    match &scenario.task {
        Task::Reference(r) => Ok(Plan {
            tree: None,
            waypoints: vec![r.clone()],
        }),
        Task::Goal(g) => {
            let tree = rrt_build(setup, &scenario.x0, g, &scenario.planner, scenario.planner_seed)?;
            let path = shortest_path(&tree)?;
            info!("plan: {} nodes, {} waypoints", tree.nodes.len(), path.len());
            Ok(Plan {
                waypoints: path[1..].to_vec(),
                tree: Some(tree),
            })
        }
    }
}

/// Runs one episode with noise drawn from `seed`.
pub fn run_episode(
    scenario: &Scenario,
    setup: &ControlSetup,
    waypoints: &[Vec<f64>],
    seed: u64,
) -> Result<TrajectoryLog, RuntimeError> {
    let goal = waypoints.last().ok_or(RuntimeError::NoWaypoints)?.clone();
    let mut queue: VecDeque<Vec<f64>> = waypoints.iter().cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plant = scenario.plant.as_ref();
    let mut x = scenario.x0.clone();
    let mut steps = Vec::new();
    for k in 0..scenario.max_steps {
        plant.check_state(&x)?;
        let y = measure(&x, &scenario.eps_y, &mut rng);
        let x_ref = queue.front().cloned().unwrap_or_else(|| goal.clone());
        let problem = TrackingProblem::new(setup, y.clone(), x_ref.clone())?;
        let started = Instant::now();
        let result = solve_tracking(&problem, &scenario.solver);
        let solve_ms = started.elapsed().as_secs_f64() * 1e3;
        let decision = match result {
            Ok(d) => d,
            Err(e @ (EncodeError::InfeasibleMeasurement | EncodeError::SolverInfeasible | EncodeError::IterationLimit)) => {
                info!("step {k}: {e}; halting");
                steps.push(StepRecord {
                    k,
                    x: x.clone(),
                    y,
                    x_ref,
                    outcome: StepOutcome::Infeasible(e.to_string()),
                    x_next: None,
                    waypoints_left: queue.len(),
                    solve_ms,
                });
                return Ok(TrajectoryLog {
                    steps,
                    final_state: x,
                    termination: Termination::Infeasible,
                });
            }
            Err(e) => return Err(e.into()),
        };
        let w_u = sample_noise(&scenario.eps_u, &mut rng);
        let u_raw: Vec<f64> = decision.u_cmd.iter().zip(&w_u).map(|(u, w)| u + w).collect();
        let u_act = scenario.u_set.clamp(&u_raw);
        let mut x_next = plant.step(&x, &u_act);
        if plant.adds_process_noise() {
            let w_x = sample_noise(&scenario.eps_x, &mut rng);
            x_next.iter_mut().zip(w_x).for_each(|(v, w)| *v += w);
        }
        let safe_box = decision.safe_box;
        if queue.front().is_some_and(|w| safe_box.contains(w, MEMBERSHIP_TOL)) {
            queue.pop_front();
        }
        let reached = safe_box.contains(&goal, MEMBERSHIP_TOL);
        debug!("step {k}: cost {:.4}, {} waypoints left", decision.cost, queue.len());
        steps.push(StepRecord {
            k,
            x: x.clone(),
            y,
            x_ref,
            outcome: StepOutcome::Optimal {
                u_cmd: decision.u_cmd,
                u_act,
                safe_box,
                cost: decision.cost,
            },
            x_next: Some(x_next.clone()),
            waypoints_left: queue.len(),
            solve_ms,
        });
        x = x_next;
        if reached {
            return Ok(TrajectoryLog {
                steps,
                final_state: x,
                termination: Termination::GoalReached,
            });
        }
    }
    Ok(TrajectoryLog {
        steps,
        final_state: x,
        termination: Termination::StepLimit,
    })
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plants::PlantRegistry;
    use crate::scenario::ScenarioFile;
    use std::path::Path;

    fn scenario(extra: &str, task: &str, noise: f64) -> Scenario {
        let text = format!(
            r#"
            [plant]
            kind = "robot"
            [network]
            source = "identity_sum"
            [bounds]
            x_lo = [-1.0, -1.0]
            x_hi = [10.0, 10.0]
            u_lo = [-0.25, -0.25]
            u_hi = [0.25, 0.25]
            [noise]
            eps_x = [{noise}, {noise}]
            eps_y = [{noise}, {noise}]
            eps_u = [{noise}, {noise}]
            {extra}
            [task]
            x0 = [0.0, 0.0]
            {task}
            [run]
            max_steps = 60
            "#
        );
        ScenarioFile::parse(&text)
            .unwrap()
            .resolve(Path::new("."), &PlantRegistry::with_builtin())
            .unwrap()
            .scenario
    }

    #[test]
    fn reference_at_start_finishes_in_one_step() {
        let s = scenario("", "x_ref = [0.0, 0.0]", 0.0);
        let setup = s.control_setup().unwrap();
        let log = run_episode(&s, &setup, &[vec![0.0, 0.0]], 0).unwrap();
        assert_eq!(log.termination, Termination::GoalReached);
        assert_eq!(log.steps.len(), 1);
        match &log.steps[0].outcome {
            StepOutcome::Optimal { u_cmd, cost, .. } => {
                assert!(u_cmd.iter().all(|u| u.abs() < 1e-9) && cost.abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn planned_episode_is_safe_and_replayable() {
        let s = scenario("[[obstacles]]\nlo = [0.5, -1.0]\nhi = [1.0, 0.6]", "xg = [1.5, 0.0]", 0.05);
        let setup = s.control_setup().unwrap();
        let p = plan(&s, &setup).unwrap();
        let log = run_episode(&s, &setup, &p.waypoints, 7).unwrap();
        assert_eq!(log.termination, Termination::GoalReached);
        assert!(log.safety_violations(&s.unsafe_region).is_empty());
        assert!(log.steps.windows(2).all(|w| w[1].waypoints_left <= w[0].waypoints_left));
        let replay = run_episode(&s, &setup, &p.waypoints, 7).unwrap();
        assert_eq!(log.without_timing(), replay.without_timing());
        let csv = log.to_csv(2, 2);
        assert_eq!(csv.lines().count(), log.steps.len() + 2);
        assert!(csv.lines().last().unwrap().contains("goal_reached"));
        let header = csv.lines().next().unwrap();
        assert!(header.starts_with("k,x0,x1,y0,y1,xr0,xr1,u_cmd0,u_cmd1,u_act0,u_act1,box_lo0"));
        assert!(csv.lines().all(|l| l.split(',').count() == header.split(',').count()));
    }

    #[test]
    fn sealed_start_is_infeasible() {
        let walls = "[[obstacles]]\nlo = [-1.0, -1.0]\nhi = [-0.1, 10.0]\n\
                     [[obstacles]]\nlo = [0.1, -1.0]\nhi = [10.0, 10.0]\n\
                     [[obstacles]]\nlo = [-0.1, -1.0]\nhi = [0.1, -0.1]\n\
                     [[obstacles]]\nlo = [-0.1, 0.1]\nhi = [0.1, 10.0]";
        let s = scenario(walls, "x_ref = [0.0, 0.0]", 0.05);
        let setup = s.control_setup().unwrap();
        let log = run_episode(&s, &setup, &[vec![0.0, 0.0]], 1).unwrap();
        assert_eq!(log.termination, Termination::Infeasible);
        assert_eq!(log.steps.len(), 1);
        assert!(matches!(log.steps[0].outcome, StepOutcome::Infeasible(_)));
        assert_eq!(log.final_state, vec![0.0, 0.0]);
        assert!(log.safety_violations(&s.unsafe_region).is_empty());
    }

    #[test]
    fn median_of_values() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }
}
