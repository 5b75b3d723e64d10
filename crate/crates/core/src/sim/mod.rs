//! Closed-loop simulation: plant, noise, scenarios, logs and metrics.

mod log;
mod metrics;
mod noise;
mod scenario;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::controller::{Controller, ControllerConfig};
use crate::dynamics::discrete_step;
use crate::error::Error;

pub use log::{SimulationLog, StepRecord};
pub use metrics::{compute_metrics, min_pairwise_distance, Metrics};
pub use noise::{apply_noise, NoiseParams};
pub use scenario::{
    builtin_scenario, builtin_scenarios, load_scenario, scaling_scenario, ControllerOverrides,
    Scenario, Setpoint,
};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SOLVER_FILE: &str = "solver.csv";
pub const METRICS_FILE: &str = "metrics.toml";

/// Runs a scenario in closed loop.
///
/// Each step reads the active references, solves the NMPC problem, applies
/// the first inputs through the Euler model and adds state noise. Solver
/// aborts hold the previous input and are flagged in the log. The scenario's
/// controller overrides are applied on top of `cfg`.
pub fn run_scenario(
    sc: &Scenario,
    cfg: &ControllerConfig,
    seed: u64,
) -> Result<SimulationLog, Error> {
    sc.validate()?;
    let cfg = sc.controller_overrides.apply(cfg);
    let mut controller = Controller::new(cfg.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fleet = sc.initial_fleet();
    let mut prev = vec![cfg.hover_input(); sc.n_agents()];
    let steps = sc.steps(cfg.dt);
    let mut records = Vec::with_capacity(steps + 1);

    for k in 0..=steps {
        let t = k as f64 * cfg.dt;
        let references = sc.references_at(t);
        let started = Instant::now();
        let outcome = controller.step(&fleet, &prev, &references, &sc.obstacles);
        let solve_time = started.elapsed().as_secs_f64();

        let record = match outcome {
            Ok(res) => StepRecord {
                t,
                states: fleet.agents.clone(),
                inputs: res.first_inputs,
                solve_time,
                inner_iterations: res.solve.inner_iterations_total,
                outer_iterations: res.solve.outer_iterations,
                residual: res.solve.fixed_point_residual,
                infeasibility: res.solve.max_infeasibility,
                aborted: false,
            },
            Err(Error::SolverAbort(_)) => StepRecord {
                t,
                states: fleet.agents.clone(),
                inputs: prev.clone(),
                solve_time,
                inner_iterations: 0,
                outer_iterations: 0,
                residual: f64::NAN,
                infeasibility: f64::NAN,
                aborted: true,
            },
            Err(e) => return Err(e),
        };

        if k < steps {
            for (agent, u) in fleet.agents.iter_mut().zip(&record.inputs) {
                let next = discrete_step(agent, u, &cfg.params, cfg.dt);
                *agent = apply_noise(&next, &sc.noise, &mut rng);
            }
            prev = record.inputs.clone();
        }
        records.push(record);
    }

    Ok(SimulationLog {
        scenario: sc.name.clone(),
        seed,
        dt: cfg.dt,
        n_agents: sc.n_agents(),
        records,
    })
}
