//! TOML scenario files: plant, model source, sets, noise bounds, task and solver limits.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;
use safeguard_milp::SolverConfig;
use serde::Deserialize;
use thiserror::Error;

use crate::encoder::{ControlSetup, EncodeError};
use crate::learner::{quantify_error, sample_dataset, train, LearnError, TrainConfig, TrainReport};
use crate::nn::{build_identity_sum_network, load_network, NnError, ReluNetwork};
use crate::planner::PlannerConfig;
use crate::plants::{Plant, PlantError, PlantParams, PlantRegistry};
use crate::sets::{Hypercube, SetError, UnsafeRegion};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: Option<String>,
    pub plant: PlantSection,
    pub network: NetworkSection,
    pub bounds: BoundsSection,
    pub noise: NoiseSection,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSection>,
    pub task: TaskSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub planner: PlannerSection,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub kind: String,
    pub wheelbase: Option<f64>,
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum NetworkSource {
    IdentitySum,
    File,
    Train,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub source: NetworkSource,
    /// Network file, relative to the scenario file.
    pub path: Option<String>,
    pub train: Option<TrainSection>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub samples: usize,
    #[serde(default)]
    pub sample_seed: u64,
    /// Extra fresh samples folded into the error bound when `eps_x` is not given.
    #[serde(default)]
    pub audit_samples: usize,
    pub hidden: Option<Vec<usize>>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub lr_decay: Option<f64>,
    pub decay_every: Option<usize>,
    pub seed: Option<u64>,
    pub standardize: Option<bool>,
}

impl TrainSection {
    pub fn config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            hidden: self.hidden.clone().unwrap_or(d.hidden),
            epochs: self.epochs.unwrap_or(d.epochs),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            lr_decay: self.lr_decay.unwrap_or(d.lr_decay),
            decay_every: self.decay_every.unwrap_or(d.decay_every),
            seed: self.seed.unwrap_or(d.seed),
            standardize: self.standardize.unwrap_or(d.standardize),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
    pub u_lo: Vec<f64>,
    pub u_hi: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    /// Optional for trained networks, where it defaults to the measured model error.
    pub eps_x: Option<Vec<f64>>,
    pub eps_y: Vec<f64>,
    pub eps_u: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSection {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    pub x0: Vec<f64>,
    pub xg: Option<Vec<f64>>,
    pub x_ref: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub feasibility_tol: Option<f64>,
    pub integrality_tol: Option<f64>,
    pub relative_gap: Option<f64>,
    pub max_nodes: Option<usize>,
    pub max_simplex_iters: Option<usize>,
    #[serde(default = "default_margin")]
    pub obstacle_margin: f64,
}

fn default_margin() -> f64 {
    1e-6
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            feasibility_tol: None,
            integrality_tol: None,
            relative_gap: None,
            max_nodes: None,
            max_simplex_iters: None,
            obstacle_margin: default_margin(),
        }
    }
}

impl SolverSection {
    pub fn config(&self) -> SolverConfig {
        let d = SolverConfig::default();
        SolverConfig {
            feasibility_tol: self.feasibility_tol.unwrap_or(d.feasibility_tol),
            integrality_tol: self.integrality_tol.unwrap_or(d.integrality_tol),
            relative_gap: self.relative_gap.unwrap_or(d.relative_gap),
            max_nodes: self.max_nodes.unwrap_or(d.max_nodes),
            max_simplex_iters: self.max_simplex_iters.unwrap_or(d.max_simplex_iters),
            ..d
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn default_max_steps() -> usize {
    500
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            max_steps: default_max_steps(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PlannerSection {
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_goal_bias")]
    pub goal_bias: f64,
    #[serde(default)]
    pub seed: u64,
    pub witness_tol: Option<Vec<f64>>,
    #[serde(default = "default_grid_ticks")]
    pub grid_ticks: usize,
    /// Defaults to the half-width of the smallest possible safe box.
    pub clearance: Option<f64>,
}

fn default_max_iters() -> usize {
    5000
}
fn default_goal_bias() -> f64 {
    0.1
}
fn default_grid_ticks() -> usize {
    9
}

impl Default for PlannerSection {
    fn default() -> Self {
        Self {
            max_iters: default_max_iters(),
            goal_bias: default_goal_bias(),
            seed: 0,
            witness_tol: None,
            grid_ticks: default_grid_ticks(),
            clearance: None,
        }
    }
}

/// What the episode tracks.
#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    /// Plan to `xg` and follow the waypoints.
    Goal(Vec<f64>),
    /// Track a single fixed reference.
    Reference(Vec<f64>),
}

impl Task {
    pub fn target(&self) -> &[f64] {
        match self {
            Task::Goal(x) | Task::Reference(x) => x,
        }
    }
}

/// A fully resolved scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub plant: Arc<dyn Plant>,
    pub net: ReluNetwork,
    pub x_set: Hypercube,
    pub u_set: Hypercube,
    pub unsafe_region: UnsafeRegion,
    pub eps_x: Vec<f64>,
    pub eps_y: Vec<f64>,
    pub eps_u: Vec<f64>,
    pub x0: Vec<f64>,
    pub task: Task,
    pub seed: u64,
    pub max_steps: usize,
    pub solver: SolverConfig,
    pub obstacle_margin: f64,
    pub planner: PlannerConfig,
    pub planner_seed: u64,
}

impl Scenario {
    pub fn control_setup(&self) -> Result<ControlSetup, EncodeError> {
        ControlSetup::new(
            self.net.clone(),
            self.x_set.clone(),
            self.u_set.clone(),
            self.unsafe_region.clone(),
            self.eps_x.clone(),
            self.eps_y.clone(),
            self.eps_u.clone(),
        )?
        .with_obstacle_margin(self.obstacle_margin)
    }
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub report: TrainReport,
    /// Maximum residual over the training samples.
    pub eps_train: Vec<f64>,
    /// Maximum residual over training and audit samples.
    pub eps_audit: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub scenario: Scenario,
    pub training: Option<TrainingOutcome>,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn plant(&self, registry: &PlantRegistry) -> Result<Arc<dyn Plant>, ScenarioError> {
        let params = PlantParams {
            wheelbase: self.plant.wheelbase,
            dt: self.plant.dt,
        };
        Ok(registry.create(&self.plant.kind, &params)?)
    }

    pub fn sets(&self) -> Result<(Hypercube, Hypercube), ScenarioError> {
        let b = &self.bounds;
        Ok((
            Hypercube::new(b.x_lo.clone(), b.x_hi.clone())?,
            Hypercube::new(b.u_lo.clone(), b.u_hi.clone())?,
        ))
    }

    /// Trains the network requested by the `network.train` block.
    pub fn train_network(&self, registry: &PlantRegistry) -> Result<TrainingOutcome, ScenarioError> {
        let t = self
            .network
            .train
            .as_ref()
            .ok_or_else(|| ScenarioError::Invalid("scenario has no network.train block".into()))?;
        let plant = self.plant(registry)?;
        let (x_set, u_set) = self.sets()?;
        let data = sample_dataset(plant.as_ref(), &x_set, &u_set, t.samples, t.sample_seed)?;
        info!("training on {} samples", data.len());
        let report = train(&t.config(), &data)?;
        let eps_train = quantify_error(&report.network, &data)?;
        let mut eps_audit = eps_train.clone();
        if t.audit_samples > 0 {
            let audit = sample_dataset(plant.as_ref(), &x_set, &u_set, t.audit_samples, t.sample_seed.wrapping_add(1))?;
            let e = quantify_error(&report.network, &audit)?;
            eps_audit.iter_mut().zip(e).for_each(|(a, b)| *a = a.max(b));
        }
        Ok(TrainingOutcome {
            report,
            eps_train,
            eps_audit,
        })
    }

    /// Builds the runnable scenario; `base` resolves relative network paths.
    pub fn resolve(&self, base: &Path, registry: &PlantRegistry) -> Result<Resolved, ScenarioError> {
        let plant = self.plant(registry)?;
        let (x_set, u_set) = self.sets()?;
        let (nx, nu) = (x_set.dim(), u_set.dim());
        if plant.state_dim() != nx || plant.control_dim() != nu {
            return Err(ScenarioError::Invalid(format!(
                "{} plant needs {}-dimensional states and {}-dimensional controls",
                plant.name(),
                plant.state_dim(),
                plant.control_dim()
            )));
        }
        let mut training = None;
        let (net, exact) = match self.network.source {
            NetworkSource::IdentitySum => (build_identity_sum_network(&x_set, &u_set)?, true),
            NetworkSource::File => {
                let rel = self
                    .network
                    .path
                    .as_ref()
                    .ok_or_else(|| ScenarioError::Invalid("network.path is required for source = \"file\"".into()))?;
                let path = base.join(rel);
                let bytes = std::fs::read(&path).map_err(|source| ScenarioError::Io { path, source })?;
                (load_network(&bytes)?, false)
            }
            NetworkSource::Train => {
                let outcome = self.train_network(registry)?;
                let net = outcome.report.network.clone();
                training = Some(outcome);
                (net, false)
            }
        };
        let eps_x = match (&self.noise.eps_x, &training) {
            (Some(e), _) => e.clone(),
            (None, Some(t)) => t.eps_audit.clone(),
            (None, None) => return Err(ScenarioError::Invalid("noise.eps_x is required".into())),
        };
        let obstacles = self
            .obstacles
            .iter()
            .map(|o| Hypercube::new(o.lo.clone(), o.hi.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let unsafe_region = UnsafeRegion::new(obstacles, &x_set)?;
        let task = match (&self.task.xg, &self.task.x_ref) {
            (Some(g), None) => Task::Goal(g.clone()),
            (None, Some(r)) => Task::Reference(r.clone()),
            _ => return Err(ScenarioError::Invalid("task needs exactly one of xg and x_ref".into())),
        };
        for (name, v) in [("x0", &self.task.x0), ("target", &task.target().to_vec())] {
            if v.len() != nx {
                return Err(ScenarioError::Invalid(format!("{name} must have {nx} entries")));
            }
            if !x_set.contains(v, 0.0) || unsafe_region.contains_interior(v) {
                return Err(ScenarioError::Invalid(format!("{name} {v:?} is not a safe state")));
            }
        }
        let witness_tol = match &self.planner.witness_tol {
            Some(t) => t.clone(),
            None if exact => vec![1e-6; nx],
            None => eps_x.clone(),
        };
        let clearance = self.planner.clearance.unwrap_or_else(|| {
            (0..nx)
                .map(|q| self.noise.eps_y[q] + eps_x[q])
                .fold(0.0, f64::max)
        });
        let scenario = Scenario {
            name: self.name.clone().unwrap_or_else(|| plant.name().to_string()),
            plant,
            net,
            x_set,
            u_set,
            unsafe_region,
            eps_x,
            eps_y: self.noise.eps_y.clone(),
            eps_u: self.noise.eps_u.clone(),
            x0: self.task.x0.clone(),
            task,
            seed: self.run.seed,
            max_steps: self.run.max_steps,
            solver: self.solver.config(),
            obstacle_margin: self.solver.obstacle_margin,
            planner: PlannerConfig {
                max_iters: self.planner.max_iters,
                goal_bias: self.planner.goal_bias,
                witness_tol,
                grid_ticks: self.planner.grid_ticks,
                clearance,
            },
            planner_seed: self.planner.seed,
        };
        scenario.control_setup()?;
        Ok(Resolved { scenario, training })
    }
}
