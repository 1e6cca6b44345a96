//! Robust tracking control through ReLU-network dynamics models.
//!
//! A learned model `x_{k+1} ≈ f̃(x_k, u_k)` is embedded in a mixed-integer
//! linear program whose solution is a control command that keeps the next
//! state box clear of box obstacles under bounded measurement noise,
//! actuator disturbance and model error.

pub mod audit;
pub mod encoder;
pub mod interval;
pub mod learner;
pub mod nn;
pub mod oracle;
pub mod planner;
pub mod runtime;
pub mod scenario;
pub mod plants;
pub mod sets;

pub use encoder::{
    solve_tracking, solve_tracking_with, ControlDecision, ControlSetup, EncodeError, TrackingModel, TrackingProblem,
};
pub use interval::{relu_interval, Interval};
pub use nn::{
    build_identity_sum_network, interval_forward, linear_interval, load_network, preactivation_bounds, save_network,
    LayerBounds, LayerParams, NnError, ReluNetwork,
};
pub use sets::{disjoint_from_region, measurement_box, Hypercube, SetError, UnsafeRegion};
