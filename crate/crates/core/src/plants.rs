//! Ground-truth dynamics, bounded noise and measurements for simulation.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("unknown plant kind `{0}`")]
    UnknownKind(String),
    #[error("invalid plant parameter: {0}")]
    InvalidParameter(String),
    #[error("state {state:?} left the modelled domain: {reason}")]
    StateOutOfDomain { state: Vec<f64>, reason: String },
    #[error("expected a {expected}-vector, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Discrete-time dynamics `x_{k+1} = f(x_k, u_k)`.
pub trait Plant: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    fn state_dim(&self) -> usize;

    fn control_dim(&self) -> usize;

    /// Noise-free successor state.
    fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64>;

    /// Whether simulation adds a sampled `w^x` on top of [`Plant::step`].
    /// Plants whose model error comes from a learned approximation return `false`.
    fn adds_process_noise(&self) -> bool;

    fn check_state(&self, _x: &[f64]) -> Result<(), PlantError> {
        Ok(())
    }
}

/// Point mass with direct displacement control.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RobotPlant;

pub fn robot_step(x: &[f64], u: &[f64], w: &[f64]) -> Vec<f64> {
    x.iter().zip(u).zip(w).map(|((x, u), w)| x + u + w).collect()
}

impl Plant for RobotPlant {
    fn name(&self) -> &'static str {
        "robot"
    }
    fn state_dim(&self) -> usize {
        2
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        robot_step(x, u, &[0.0, 0.0])
    }
    fn adds_process_noise(&self) -> bool {
        true
    }
}

/// Kinematic bicycle: state `[p_x, p_y, θ]`, control `[v, δ]` (speed, steering angle).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehiclePlant {
    pub wheelbase: f64,
    pub dt: f64,
}

/// Heading margin kept away from ±π, where the unwrapped heading would leave the model's domain.
pub const HEADING_MARGIN: f64 = 0.1;

impl Default for VehiclePlant {
    fn default() -> Self {
        Self { wheelbase: 5.0, dt: 0.1 }
    }
}

impl VehiclePlant {
    pub fn new(wheelbase: f64, dt: f64) -> Result<Self, PlantError> {
        if !(wheelbase > 0.0 && wheelbase.is_finite()) {
            return Err(PlantError::InvalidParameter(format!("wheelbase must be positive, got {wheelbase}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(PlantError::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { wheelbase, dt })
    }
}

pub fn vehicle_step(x: &[f64], u: &[f64], plant: &VehiclePlant) -> Vec<f64> {
    let (theta, v, delta) = (x[2], u[0], u[1]);
    let ds = v * plant.dt;
    vec![
        x[0] + ds * theta.cos() * delta.cos(),
        x[1] + ds * theta.sin() * delta.cos(),
        theta + ds / plant.wheelbase * delta.sin(),
    ]
}

impl Plant for VehiclePlant {
    fn name(&self) -> &'static str {
        "vehicle"
    }
    fn state_dim(&self) -> usize {
        3
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        vehicle_step(x, u, self)
    }
    fn adds_process_noise(&self) -> bool {
        false
    }
    fn check_state(&self, x: &[f64]) -> Result<(), PlantError> {
        let limit = std::f64::consts::PI - HEADING_MARGIN;
        if x[2].abs() > limit {
            return Err(PlantError::StateOutOfDomain {
                state: x.to_vec(),
                reason: format!("heading outside [-{limit}, {limit}]"),
            });
        }
        Ok(())
    }
}

/// Optional parameters read by plant factories.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlantParams {
    pub wheelbase: Option<f64>,
    pub dt: Option<f64>,
}

pub type PlantFactory = fn(&PlantParams) -> Result<Arc<dyn Plant>, PlantError>;

/// Plant constructors selectable by kind name.
#[derive(Clone)]
pub struct PlantRegistry {
    factories: BTreeMap<&'static str, PlantFactory>,
}

impl Default for PlantRegistry {
    fn default() -> Self {
        Self::with_builtin()
    }
}

fn make_robot(p: &PlantParams) -> Result<Arc<dyn Plant>, PlantError> {
    if p.wheelbase.is_some() || p.dt.is_some() {
        return Err(PlantError::InvalidParameter("robot takes no parameters".into()));
    }
    Ok(Arc::new(RobotPlant))
}

fn make_vehicle(p: &PlantParams) -> Result<Arc<dyn Plant>, PlantError> {
    let d = VehiclePlant::default();
    Ok(Arc::new(VehiclePlant::new(p.wheelbase.unwrap_or(d.wheelbase), p.dt.unwrap_or(d.dt))?))
}

impl PlantRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn with_builtin() -> Self {
        let mut r = Self::empty();
        r.register("robot", make_robot);
        r.register("vehicle", make_vehicle);
        r
    }

    pub fn register(&mut self, kind: &'static str, factory: PlantFactory) {
        self.factories.insert(kind, factory);
    }

    pub fn create(&self, kind: &str, params: &PlantParams) -> Result<Arc<dyn Plant>, PlantError> {
        let factory = self
            .factories
            .get(kind)
            .ok_or_else(|| PlantError::UnknownKind(kind.to_string()))?;
        factory(params)
    }

    pub fn kinds(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }
}

/// Half-widths of the three uniform noise channels.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseChannels {
    pub eps_x: Vec<f64>,
    pub eps_y: Vec<f64>,
    pub eps_u: Vec<f64>,
}

impl NoiseChannels {
    pub fn new(eps_x: Vec<f64>, eps_y: Vec<f64>, eps_u: Vec<f64>) -> Result<Self, PlantError> {
        for (name, v) in [("eps_x", &eps_x), ("eps_y", &eps_y), ("eps_u", &eps_u)] {
            if v.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
                return Err(PlantError::InvalidParameter(format!("{name} must be finite and non-negative")));
            }
        }
        Ok(Self { eps_x, eps_y, eps_u })
    }
}

/// Componentwise uniform draw on `[-eps_q, eps_q]`.
pub fn sample_noise<R: Rng + ?Sized>(eps: &[f64], rng: &mut R) -> Vec<f64> {
    eps.iter()
        .map(|&e| if e > 0.0 { rng.gen_range(-e..=e) } else { 0.0 })
        .collect()
}

pub fn measure<R: Rng + ?Sized>(x: &[f64], eps_y: &[f64], rng: &mut R) -> Vec<f64> {
    let w = sample_noise(eps_y, rng);
    x.iter().zip(w).map(|(x, w)| x + w).collect()
}
