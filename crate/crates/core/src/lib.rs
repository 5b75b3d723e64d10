//! Centralized nonlinear model predictive control for fleets of micro aerial
//! vehicles.
//!
//! One optimization problem covers every agent's inputs over the horizon.
//! Obstacle avoidance, inter-agent collision avoidance and input-rate limits
//! are hinge equality constraints handled by a quadratic penalty method whose
//! inner problems are solved with PANOC over the input box.

pub mod cli;
pub mod controller;
pub mod dynamics;
pub mod error;
pub mod optimizer;
pub mod problem;
pub mod sim;

pub use controller::{
    nmpc_step, warm_start_shift, ControlStepResult, Controller, ControllerConfig, WarmStart,
};
pub use dynamics::{AgentState, ControlInput, FleetState, ModelParams};
pub use error::{Error, Result};
pub use problem::{CollisionParams, CostWeights, CylinderObstacle, ProblemInstance, RateLimits};
