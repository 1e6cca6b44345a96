//! Batch checks of a single control step against independent oracles.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use safeguard_milp::{solve, MilpStatus, SolverConfig, VarId};

use crate::encoder::{build_tracking_model, input_box_for, solve_tracking, ControlDecision, EncodeError, TrackingProblem};
use crate::nn::interval_forward;
use crate::oracle::{grid_control_search, sample_box, GridSpec, OracleError};
use crate::plants::{sample_noise, Plant};
use crate::sets::Hypercube;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Network output box read off the MILP with the command fixed, next to the interval-propagation box.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxComparison {
    pub milp: Hypercube,
    pub reference: Hypercube,
    pub max_diff: f64,
}

/// Solves the tracking model with `u_cmd` pinned and compares its output bounds to interval propagation.
pub fn fixed_command_box(
    p: &TrackingProblem<'_>,
    u_cmd: &[f64],
    cfg: &SolverConfig,
) -> Result<Option<BoxComparison>, EncodeError> {
    let Some(input) = input_box_for(p.setup, &p.y, u_cmd)? else {
        return Ok(None);
    };
    let reference = interval_forward(p.setup.net(), &input.intervals())?.output_box();
    let tm = build_tracking_model(p)?;
    let mut model = tm.model.clone();
    for (&v, &u) in tm.input.u_cmd.iter().zip(u_cmd) {
        model = model.with_bounds(v, u, u)?;
    }
    let sol = solve(&model, cfg)?;
    if sol.status != MilpStatus::Optimal {
        return Ok(None);
    }
    let vals = |vars: &[VarId]| vars.iter().map(|&v| sol.value(v)).collect::<Vec<f64>>();
    let (lo, hi) = (vals(&tm.nn.a_out), vals(&tm.nn.b_out));
    let max_diff = lo
        .iter()
        .zip(reference.lo())
        .chain(hi.iter().zip(reference.hi()))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let milp = Hypercube::new(lo.iter().zip(&hi).map(|(l, h)| l.min(*h)).collect(), lo.iter().zip(&hi).map(|(l, h)| l.max(*h)).collect())?;
    Ok(Some(BoxComparison {
        milp,
        reference,
        max_diff,
    }))
}

/// Counts samples escaping the decision's boxes: network outputs over the input box, and
/// (when `plant` is given) true successors including actuator and process noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Containment {
    pub samples: usize,
    pub model_escapes: usize,
    pub plant_escapes: usize,
}

pub fn containment_sampling(
    p: &TrackingProblem<'_>,
    d: &ControlDecision,
    plant: Option<&dyn Plant>,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<Containment, OracleError> {
    if samples == 0 {
        return Err(OracleError::NoSamples);
    }
    let s = p.setup;
    let nx = s.state_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Containment {
        samples,
        model_escapes: 0,
        plant_escapes: 0,
    };
    let x_box = d.input_box.project(0..nx);
    for _ in 0..samples {
        let z = sample_box(&d.input_box, &mut rng);
        if !d.nn_out_box.contains(&s.net().forward(&z)?, tol) {
            out.model_escapes += 1;
        }
        if let Some(plant) = plant {
            let x = sample_box(&x_box, &mut rng);
            let w_u = sample_noise(s.eps_u(), &mut rng);
            let u: Vec<f64> = d.u_cmd.iter().zip(&w_u).map(|(u, w)| u + w).collect();
            let u = s.u_set().clamp(&u);
            let mut next = plant.step(&x, &u);
            if plant.adds_process_noise() {
                let w = sample_noise(s.eps_x(), &mut rng);
                next.iter_mut().zip(w).for_each(|(v, w)| *v += w);
            }
            if !d.safe_box.contains(&next, tol) {
                out.plant_escapes += 1;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridComparison {
    pub milp_cost: f64,
    pub grid_cost: f64,
    pub grid_u: Vec<f64>,
}

pub fn grid_vs_milp(p: &TrackingProblem<'_>, resolution: f64, cfg: &SolverConfig) -> Result<GridComparison, AuditError> {
    let d = solve_tracking(p, cfg)?;
    let grid = grid_control_search(p, &GridSpec::uniform(resolution, p.setup.control_dim())?)?;
    Ok(GridComparison {
        milp_cost: d.cost,
        grid_cost: grid.best_cost,
        grid_u: grid.best_u,
    })
}

#[derive(Debug, thiserror::Error)]
pub enum AuditError {
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Runs the three oracle checks on one step and reports each.
pub fn audit_step(
    p: &TrackingProblem<'_>,
    plant: &dyn Plant,
    samples: usize,
    grid_resolution: f64,
    cfg: &SolverConfig,
) -> Result<Vec<CheckResult>, AuditError> {
    let d = solve_tracking(p, cfg)?;
    let mut checks = Vec::new();
    let cmp = fixed_command_box(p, &d.u_cmd, cfg)?;
    checks.push(match cmp {
        Some(c) => CheckResult {
            name: "box-equality",
            passed: c.max_diff <= 1e-6,
            detail: format!("max |MILP - interval| = {:.3e}", c.max_diff),
        },
        None => CheckResult {
            name: "box-equality",
            passed: false,
            detail: "MILP with the optimal command pinned is not solvable".into(),
        },
    });
    let c = containment_sampling(p, &d, Some(plant), samples, 0, 1e-9)?;
    checks.push(CheckResult {
        name: "containment",
        passed: c.model_escapes == 0 && c.plant_escapes == 0,
        detail: format!(
            "{} samples: {} model escapes, {} plant escapes",
            c.samples, c.model_escapes, c.plant_escapes
        ),
    });
    let g = grid_vs_milp(p, grid_resolution, cfg)?;
    checks.push(CheckResult {
        name: "grid-vs-milp",
        passed: g.milp_cost <= g.grid_cost + 1e-6,
        detail: format!("MILP {:.6} vs grid {:.6} at {:?}", g.milp_cost, g.grid_cost, g.grid_u),
    });
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::ControlSetup;
    use crate::nn::build_identity_sum_network;
    use crate::plants::RobotPlant;
    use crate::sets::UnsafeRegion;

    #[test]
    fn robot_step_passes_every_check() {
        let x = Hypercube::new(vec![-1.0, -1.0], vec![10.0, 10.0]).unwrap();
        let u = Hypercube::symmetric(&[0.25, 0.25]).unwrap();
        let net = build_identity_sum_network(&x, &u).unwrap();
        let obstacle = Hypercube::new(vec![1.0, -1.0], vec![2.0, 1.0]).unwrap();
        let region = UnsafeRegion::new(vec![obstacle], &x).unwrap();
        let setup = ControlSetup::new(net, x, u, region, vec![0.05; 2], vec![0.05; 2], vec![0.05; 2]).unwrap();
        let p = TrackingProblem::new(&setup, vec![0.6, 0.0], vec![1.0, 1.2]).unwrap();
        let checks = audit_step(&p, &RobotPlant, 500, 0.01, &SolverConfig::default()).unwrap();
        assert_eq!(checks.len(), 3);
        assert!(checks.iter().all(|c| c.passed), "{checks:?}");
    }
}
