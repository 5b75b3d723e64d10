//! Receding-horizon loop around the penalty solver.

use serde::{Deserialize, Serialize};

use crate::dynamics::{AgentState, ControlInput, FleetState, ModelParams, INPUT_DIM};
use crate::error::Error;
use crate::optimizer::{
    penalty_solve, BoxSet, InnerSolverConfig, PanocCache, PenaltyConfig, ResidualNorm, SolveResult,
};
use crate::problem::{
    CollisionParams, CostWeights, CylinderObstacle, Evaluator, ProblemInstance, RateLimits,
    Workspace,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmStart {
    /// Shift the previous solution one step and repeat its tail.
    Shift,
    /// Start every solve from stacked hover inputs.
    Cold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    pub horizon: usize,
    pub dt: f64,
    pub weights: CostWeights,
    /// Per-agent input bounds `[T, phi_ref, theta_ref]`.
    pub u_min: [f64; INPUT_DIM],
    pub u_max: [f64; INPUT_DIM],
    pub collision: CollisionParams,
    pub rates: RateLimits,
    pub penalty: PenaltyConfig,
    pub inner: InnerSolverConfig,
    pub params: ModelParams,
    pub warm_start: WarmStart,
    /// Enforce the attitude-rate limits between the previous input and the
    /// first stage through the box instead of the penalty. The first stage is
    /// the input that gets applied, so this makes the applied rate exact.
    pub first_stage_rate_box: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            horizon: 30,
            dt: 0.05,
            weights: CostWeights::default(),
            u_min: [5.0, -0.4, -0.4],
            u_max: [13.5, 0.4, 0.4],
            collision: CollisionParams::default(),
            rates: RateLimits::default(),
            penalty: PenaltyConfig::default(),
            // Residual in decision-variable units, 1e-3.
            inner: InnerSolverConfig {
                residual_norm: ResidualNorm::StepScaled,
                ..InnerSolverConfig::default()
            },
            params: ModelParams::default(),
            warm_start: WarmStart::Shift,
            first_stage_rate_box: true,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.horizon == 0 || !(self.dt > 0.0) {
            return Err(Error::InvalidConfig(
                "horizon must be >= 1 and dt > 0".into(),
            ));
        }
        self.params.validate()?;
        self.penalty.validate()?;
        self.inner.validate()?;
        BoxSet::new(self.u_min.to_vec(), self.u_max.to_vec()).map(|_| ())
    }

    pub fn box_set(&self, n_agents: usize) -> Result<BoxSet, Error> {
        BoxSet::replicated(&self.u_min, &self.u_max, self.horizon * n_agents)
    }

    /// Input box for one solve. With `first_stage_rate_box` set, each agent's
    /// stage-0 attitude bounds shrink to `prev +/- max_delta`, intersected with
    /// the static box.
    pub fn solve_box(&self, prev_inputs: &[ControlInput]) -> Result<BoxSet, Error> {
        let mut b = self.box_set(prev_inputs.len())?;
        if !self.first_stage_rate_box {
            return Ok(b);
        }
        let limits = [self.rates.max_delta_phi, self.rates.max_delta_theta];
        for (i, prev) in prev_inputs.iter().enumerate() {
            let prev = prev.to_array();
            let base = i * INPUT_DIM * self.horizon;
            for (k, limit) in [1, 2].into_iter().zip(limits) {
                let lo = (prev[k] - limit).max(self.u_min[k]);
                let hi = (prev[k] + limit).min(self.u_max[k]);
                // A previous input outside the static box leaves no overlap;
                // pin to the closest admissible value.
                let (lo, hi) = if lo <= hi {
                    (lo, hi)
                } else {
                    let v = prev[k].clamp(self.u_min[k], self.u_max[k]);
                    (v, v)
                };
                b.lower[base + k] = lo;
                b.upper[base + k] = hi;
            }
        }
        Ok(b)
    }

    /// Hover inputs clamped into the box.
    pub fn hover_input(&self) -> ControlInput {
        let h = self.params.hover_input().to_array();
        ControlInput::from_slice(&[0, 1, 2].map(|k| h[k].clamp(self.u_min[k], self.u_max[k])))
    }

    pub fn instance(
        &self,
        fleet: &FleetState,
        prev_inputs: &[ControlInput],
        references: &[AgentState],
        obstacles: &[CylinderObstacle],
    ) -> ProblemInstance {
        ProblemInstance {
            initial: fleet.clone(),
            prev_input: prev_inputs.to_vec(),
            references: references.to_vec(),
            input_ref: self.params.hover_input(),
            obstacles: obstacles.to_vec(),
            weights: self.weights,
            collision: self.collision,
            rates: self.rates,
            horizon: self.horizon,
            dt: self.dt,
            params: self.params,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlStepResult {
    /// Input to apply now, one per agent.
    pub first_inputs: Vec<ControlInput>,
    /// Predicted states per agent, `horizon + 1` entries each.
    pub predicted_trajectories: Vec<Vec<AgentState>>,
    pub solve: SolveResult,
}

/// Runs the penalty method on one problem instance.
pub fn solve_instance(
    inst: &ProblemInstance,
    z0: &[f64],
    box_set: &BoxSet,
    pcfg: &PenaltyConfig,
    icfg: &InnerSolverConfig,
) -> Result<SolveResult, Error> {
    inst.validate()?;
    let mut ws = Workspace::default();
    let mut cache = PanocCache::new(inst.dim(), icfg.lbfgs_memory);
    penalty_solve(
        &mut Evaluator::new(inst, &mut ws),
        z0,
        box_set,
        pcfg,
        icfg,
        &mut cache,
    )
}

/// Shifts every agent's input sequence one step earlier and repeats the
/// last input.
pub fn warm_start_shift(previous: &[f64], horizon: usize) -> Result<Vec<f64>, Error> {
    let block = INPUT_DIM * horizon;
    if horizon == 0 || previous.is_empty() || previous.len() % block != 0 {
        return Err(Error::Dimension {
            what: "warm start",
            expected: block,
            actual: previous.len(),
        });
    }
    let mut out = Vec::with_capacity(previous.len());
    for agent in previous.chunks_exact(block) {
        out.extend_from_slice(&agent[INPUT_DIM..]);
        out.extend_from_slice(&agent[block - INPUT_DIM..]);
    }
    Ok(out)
}

/// One NMPC solve from scratch buffers.
pub fn nmpc_step(
    fleet: &FleetState,
    prev_inputs: &[ControlInput],
    references: &[AgentState],
    obstacles: &[CylinderObstacle],
    cfg: &ControllerConfig,
    warm: Option<&[f64]>,
) -> Result<ControlStepResult, Error> {
    let mut ws = Workspace::default();
    let mut cache = PanocCache::new(0, cfg.inner.lbfgs_memory);
    step_with_buffers(
        fleet,
        prev_inputs,
        references,
        obstacles,
        cfg,
        warm,
        &mut ws,
        &mut cache,
    )
}

#[allow(clippy::too_many_arguments)]
fn step_with_buffers(
    fleet: &FleetState,
    prev_inputs: &[ControlInput],
    references: &[AgentState],
    obstacles: &[CylinderObstacle],
    cfg: &ControllerConfig,
    warm: Option<&[f64]>,
    ws: &mut Workspace,
    cache: &mut PanocCache,
) -> Result<ControlStepResult, Error> {
    cfg.validate()?;
    let inst = cfg.instance(fleet, prev_inputs, references, obstacles);
    inst.validate()?;
    let n = inst.n_agents();
    let box_set = cfg.solve_box(prev_inputs)?;
    let z0 = match warm {
        Some(w) if w.len() == inst.dim() => w.to_vec(),
        Some(w) => {
            return Err(Error::Dimension {
                what: "warm start",
                expected: inst.dim(),
                actual: w.len(),
            })
        }
        None => cfg.hover_input().to_array().repeat(cfg.horizon * n),
    };
    let solve = penalty_solve(
        &mut Evaluator::new(&inst, ws),
        &z0,
        &box_set,
        &cfg.penalty,
        &cfg.inner,
        cache,
    )?;
    let traj = crate::dynamics::rollout(fleet, &solve.solution, &cfg.params, cfg.horizon, cfg.dt)?;
    let first_inputs = (0..n)
        .map(|i| ControlInput::from_slice(&solve.solution[i * INPUT_DIM * cfg.horizon..]))
        .collect();
    let predicted_trajectories = (0..n)
        .map(|i| traj.iter().map(|s| s.agents[i]).collect())
        .collect();
    Ok(ControlStepResult {
        first_inputs,
        predicted_trajectories,
        solve,
    })
}

/// Stateful controller holding the warm start and solver buffers.
#[derive(Debug, Clone)]
pub struct Controller {
    cfg: ControllerConfig,
    warm: Option<Vec<f64>>,
    ws: Workspace,
    cache: PanocCache,
}

impl Controller {
    pub fn new(cfg: ControllerConfig) -> Result<Self, Error> {
        cfg.validate()?;
        let cache = PanocCache::new(0, cfg.inner.lbfgs_memory);
        Ok(Self {
            cfg,
            warm: None,
            ws: Workspace::default(),
            cache,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn reset(&mut self) {
        self.warm = None;
    }

    /// Warm start for the next call, if one is held.
    pub fn warm_start(&self) -> Option<&[f64]> {
        self.warm.as_deref()
    }

    pub fn step(
        &mut self,
        fleet: &FleetState,
        prev_inputs: &[ControlInput],
        references: &[AgentState],
        obstacles: &[CylinderObstacle],
    ) -> Result<ControlStepResult, Error> {
        let expected = INPUT_DIM * self.cfg.horizon * fleet.len();
        let warm = match self.cfg.warm_start {
            WarmStart::Shift => self.warm.as_deref().filter(|w| w.len() == expected),
            WarmStart::Cold => None,
        };
        let result = step_with_buffers(
            fleet,
            prev_inputs,
            references,
            obstacles,
            &self.cfg,
            warm,
            &mut self.ws,
            &mut self.cache,
        )?;
        if self.cfg.warm_start == WarmStart::Shift {
            self.warm = Some(warm_start_shift(&result.solve.solution, self.cfg.horizon)?);
        }
        Ok(result)
    }
}
