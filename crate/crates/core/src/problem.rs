//! The centralized NMPC problem in single-shooting form.
//!
//! The decision vector `z` stacks every agent's inputs over the horizon,
//! agent-major then time-major: index `(i * N + j) * 3 + k` holds
//! component `k` (`T`, `phi_ref`, `theta_ref`) of agent `i` at step `j`.
//!
//! The equality constraints `F(z) = 0` are laid out in this order:
//!
//! 1. obstacles: for agent `i`, step `j = 1..=N`, obstacle `s`;
//! 2. collisions: for pair `i < l` (lexicographic), step `j = 1..=N`;
//! 3. rates: for agent `i`, step `j = 0..N`, the four hinges
//!    `[phi- , phi+, theta-, theta+]`.

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    discrete_step_raw, step_jacobians, AgentState, ControlInput, FleetState, ModelParams,
    INPUT_DIM, STATE_DIM,
};
use crate::error::Error;
use crate::optimizer::PenaltyProblem;

#[inline]
fn pos(x: f64) -> f64 {
    x.max(0.0)
}

/// Diagonal weights of the tracking, input and input-rate cost terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub q_state: [f64; STATE_DIM],
    pub q_input: [f64; INPUT_DIM],
    pub q_input_rate: [f64; INPUT_DIM],
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            q_state: [5.0, 5.0, 20.0, 3.0, 3.0, 3.0, 8.0, 8.0],
            q_input: [5.0, 10.0, 10.0],
            q_input_rate: [10.0, 25.0, 25.0],
        }
    }
}

impl CostWeights {
    pub fn scaled(&self, factor: f64) -> Self {
        let mut w = *self;
        w.q_state.iter_mut().for_each(|q| *q *= factor);
        w.q_input.iter_mut().for_each(|q| *q *= factor);
        w.q_input_rate.iter_mut().for_each(|q| *q *= factor);
        w
    }

    fn validate(&self) -> Result<(), Error> {
        let all = self
            .q_state
            .iter()
            .chain(&self.q_input)
            .chain(&self.q_input_rate);
        if all.clone().all(|q| *q >= 0.0 && q.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidConfig(
                "cost weights must be finite and nonnegative".into(),
            ))
        }
    }
}

/// Vertical cylinder given by the center of its volume, radius and height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylinderObstacle {
    pub center: [f64; 3],
    pub radius: f64,
    pub height: f64,
}

impl CylinderObstacle {
    pub fn new(center: [f64; 3], radius: f64, height: f64) -> Self {
        Self {
            center,
            radius,
            height,
        }
    }

    pub fn bottom(&self) -> f64 {
        self.center[2] - 0.5 * self.height
    }

    pub fn top(&self) -> f64 {
        self.center[2] + 0.5 * self.height
    }

    pub fn horizontal_distance(&self, p: &[f64; 3]) -> f64 {
        (p[0] - self.center[0]).hypot(p[1] - self.center[1])
    }

    /// Open-set membership test on coordinates.
    pub fn strictly_contains(&self, p: &[f64; 3]) -> bool {
        p[2] > self.bottom() && p[2] < self.top() && self.horizontal_distance(p) < self.radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollisionParams {
    /// Minimum horizontal separation.
    pub safety_radius: f64,
    /// Half-height of the exclusion band around each agent.
    pub vertical_margin: f64,
}

impl Default for CollisionParams {
    fn default() -> Self {
        Self {
            safety_radius: 0.4,
            vertical_margin: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RateLimits {
    pub max_delta_phi: f64,
    pub max_delta_theta: f64,
}

impl Default for RateLimits {
    fn default() -> Self {
        Self {
            max_delta_phi: 0.07,
            max_delta_theta: 0.07,
        }
    }
}

/// `[p_z - bottom]+ [top - p_z]+ [r^2 - dx^2 - dy^2]+`, zero exactly outside
/// the open cylinder.
pub fn cylinder_violation(p: &[f64; 3], obs: &CylinderObstacle) -> f64 {
    cylinder_violation_with_gradient(p, obs).0
}

/// Violation and its gradient with respect to `p`.
pub fn cylinder_violation_with_gradient(p: &[f64; 3], obs: &CylinderObstacle) -> (f64, [f64; 3]) {
    let dx = p[0] - obs.center[0];
    let dy = p[1] - obs.center[1];
    let below = pos(p[2] - obs.bottom());
    let above = pos(obs.top() - p[2]);
    let lateral = pos(obs.radius * obs.radius - dx * dx - dy * dy);
    let h = below * above * lateral;
    if h <= 0.0 {
        return (0.0, [0.0; 3]);
    }
    let band = below * above;
    (
        h,
        [
            -2.0 * dx * band,
            -2.0 * dy * band,
            (above - below) * lateral,
        ],
    )
}

/// `[dz + L]+ [L - dz]+ [r^2 - dx^2 - dy^2]+` with `d = p_i - p_l`.
pub fn collision_violation(p_i: &[f64; 3], p_l: &[f64; 3], cp: &CollisionParams) -> f64 {
    collision_violation_with_gradient(p_i, p_l, cp).0
}

/// Violation and its gradient with respect to `p_i` (the gradient with
/// respect to `p_l` is its negation).
pub fn collision_violation_with_gradient(
    p_i: &[f64; 3],
    p_l: &[f64; 3],
    cp: &CollisionParams,
) -> (f64, [f64; 3]) {
    let dx = p_i[0] - p_l[0];
    let dy = p_i[1] - p_l[1];
    let dz = p_i[2] - p_l[2];
    let margin = cp.vertical_margin;
    let lower = pos(dz + margin);
    let upper = pos(margin - dz);
    let r = cp.safety_radius;
    let lateral = pos(r * r - dx * dx - dy * dy);
    let h = lower * upper * lateral;
    if h <= 0.0 {
        return (0.0, [0.0; 3]);
    }
    let band = lower * upper;
    (
        h,
        [
            -2.0 * dx * band,
            -2.0 * dy * band,
            (upper - lower) * lateral,
        ],
    )
}

/// Hinge values of the `phi_ref`/`theta_ref` rate limits for every agent and
/// step, four per step (`phi-`, `phi+`, `theta-`, `theta+`).
pub fn rate_violations(
    z: &[f64],
    prev_input: &[ControlInput],
    limits: &RateLimits,
) -> Result<Vec<f64>, Error> {
    let n_agents = prev_input.len();
    if n_agents == 0 || z.len() % (INPUT_DIM * n_agents) != 0 {
        return Err(Error::Dimension {
            what: "decision vector",
            expected: INPUT_DIM * n_agents,
            actual: z.len(),
        });
    }
    let horizon = z.len() / (INPUT_DIM * n_agents);
    let mut out = Vec::with_capacity(4 * horizon * n_agents);
    for (i, prev) in prev_input.iter().enumerate() {
        let mut last = *prev;
        for j in 0..horizon {
            let u = ControlInput::from_slice(&z[(i * horizon + j) * INPUT_DIM..]);
            let d_phi = u.phi_ref - last.phi_ref;
            let d_theta = u.theta_ref - last.theta_ref;
            out.push(pos(-d_phi - limits.max_delta_phi));
            out.push(pos(d_phi - limits.max_delta_phi));
            out.push(pos(-d_theta - limits.max_delta_theta));
            out.push(pos(d_theta - limits.max_delta_theta));
            last = u;
        }
    }
    Ok(out)
}

/// Number of entries of `F(z)`.
pub fn constraint_count(n_agents: usize, horizon: usize, n_obstacles: usize) -> usize {
    n_agents * horizon * n_obstacles
        + horizon * n_agents * n_agents.saturating_sub(1) / 2
        + 4 * horizon * n_agents
}

/// All parameters of one NMPC solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub initial: FleetState,
    /// Inputs applied at the previous sampling instant, one per agent.
    pub prev_input: Vec<ControlInput>,
    pub references: Vec<AgentState>,
    pub input_ref: ControlInput,
    pub obstacles: Vec<CylinderObstacle>,
    pub weights: CostWeights,
    pub collision: CollisionParams,
    pub rates: RateLimits,
    pub horizon: usize,
    pub dt: f64,
    pub params: ModelParams,
}

impl ProblemInstance {
    pub fn n_agents(&self) -> usize {
        self.initial.len()
    }

    pub fn dim(&self) -> usize {
        INPUT_DIM * self.horizon * self.n_agents()
    }

    pub fn n_constraints(&self) -> usize {
        constraint_count(self.n_agents(), self.horizon, self.obstacles.len())
    }

    pub fn validate(&self) -> Result<(), Error> {
        let n = self.n_agents();
        if n == 0 {
            return Err(Error::InvalidConfig(
                "fleet must contain at least one agent".into(),
            ));
        }
        if self.prev_input.len() != n {
            return Err(Error::Dimension {
                what: "previous inputs",
                expected: n,
                actual: self.prev_input.len(),
            });
        }
        if self.references.len() != n {
            return Err(Error::Dimension {
                what: "references",
                expected: n,
                actual: self.references.len(),
            });
        }
        if self.horizon == 0 || !(self.dt > 0.0) {
            return Err(Error::InvalidConfig(
                "horizon must be >= 1 and dt > 0".into(),
            ));
        }
        if self
            .obstacles
            .iter()
            .any(|o| !(o.radius > 0.0 && o.height > 0.0))
        {
            return Err(Error::InvalidConfig(
                "obstacle radius and height must be positive".into(),
            ));
        }
        if !(self.collision.safety_radius > 0.0 && self.collision.vertical_margin > 0.0) {
            return Err(Error::InvalidConfig(
                "collision parameters must be positive".into(),
            ));
        }
        if !(self.rates.max_delta_phi > 0.0 && self.rates.max_delta_theta > 0.0) {
            return Err(Error::InvalidConfig("rate limits must be positive".into()));
        }
        self.weights.validate()?;
        self.params.validate()
    }

    fn check_z(&self, z: &[f64]) -> Result<(), Error> {
        if z.len() == self.dim() {
            Ok(())
        } else {
            Err(Error::Dimension {
                what: "decision vector",
                expected: self.dim(),
                actual: z.len(),
            })
        }
    }

    /// Stacked hover inputs, the cold-start decision vector.
    pub fn hover_decision(&self) -> Vec<f64> {
        self.input_ref
            .to_array()
            .repeat(self.horizon * self.n_agents())
    }

    /// Tracking, input and input-rate cost of `z`.
    pub fn total_cost(&self, z: &[f64]) -> Result<f64, Error> {
        self.check_z(z)?;
        let mut ws = Workspace::default();
        Ok(Evaluator::new(self, &mut ws).evaluate(z, 0.0, None))
    }

    pub fn cost_gradient(&self, z: &[f64]) -> Result<Vec<f64>, Error> {
        self.check_z(z)?;
        let mut ws = Workspace::default();
        let mut grad = vec![0.0; z.len()];
        Evaluator::new(self, &mut ws).evaluate(z, 0.0, Some(&mut grad));
        Ok(grad)
    }

    /// `F(z)` in the documented order.
    pub fn assemble_constraints(&self, z: &[f64]) -> Result<Vec<f64>, Error> {
        self.check_z(z)?;
        let traj = crate::dynamics::rollout(&self.initial, z, &self.params, self.horizon, self.dt)?;
        let n = self.n_agents();
        let mut out = Vec::with_capacity(self.n_constraints());
        for i in 0..n {
            for state in &traj[1..] {
                for obs in &self.obstacles {
                    out.push(cylinder_violation(&state.agents[i].p, obs));
                }
            }
        }
        for i in 0..n {
            for l in i + 1..n {
                for state in &traj[1..] {
                    out.push(collision_violation(
                        &state.agents[i].p,
                        &state.agents[l].p,
                        &self.collision,
                    ));
                }
            }
        }
        out.extend(rate_violations(z, &self.prev_input, &self.rates)?);
        Ok(out)
    }

    /// `total_cost(z) + c * |F(z)|^2` and its gradient.
    pub fn penalized_cost_and_gradient(&self, z: &[f64], c: f64) -> Result<(f64, Vec<f64>), Error> {
        self.check_z(z)?;
        let mut ws = Workspace::default();
        let mut grad = vec![0.0; z.len()];
        let v = Evaluator::new(self, &mut ws).evaluate(z, c, Some(&mut grad));
        Ok((v, grad))
    }
}

/// Scratch buffers for rollouts and adjoints; reused across evaluations.
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    states: Vec<f64>,
    state_grad: Vec<f64>,
}

/// Evaluates the penalized objective with the adjoint (backward) recursion
/// through the Euler rollout.
pub struct Evaluator<'a> {
    inst: &'a ProblemInstance,
    ws: &'a mut Workspace,
}

impl<'a> Evaluator<'a> {
    pub fn new(inst: &'a ProblemInstance, ws: &'a mut Workspace) -> Self {
        let len = (inst.horizon + 1) * inst.n_agents() * STATE_DIM;
        ws.states.resize(len, 0.0);
        ws.state_grad.resize(len, 0.0);
        Self { inst, ws }
    }

    pub fn instance(&self) -> &ProblemInstance {
        self.inst
    }

    #[inline]
    fn state_index(&self, j: usize, i: usize) -> usize {
        (j * self.inst.n_agents() + i) * STATE_DIM
    }

    fn position(&self, j: usize, i: usize) -> [f64; 3] {
        let k = self.state_index(j, i);
        [
            self.ws.states[k],
            self.ws.states[k + 1],
            self.ws.states[k + 2],
        ]
    }

    fn roll_out(&mut self, z: &[f64]) {
        let inst = self.inst;
        let n = inst.n_agents();
        let horizon = inst.horizon;
        for (i, agent) in inst.initial.agents.iter().enumerate() {
            let mut x = agent.to_array();
            let k = self.state_index(0, i);
            self.ws.states[k..k + STATE_DIM].copy_from_slice(&x);
            for j in 0..horizon {
                let u = &z[(i * horizon + j) * INPUT_DIM..][..INPUT_DIM];
                x = discrete_step_raw(&x, &[u[0], u[1], u[2]], &inst.params, inst.dt);
                let k = ((j + 1) * n + i) * STATE_DIM;
                self.ws.states[k..k + STATE_DIM].copy_from_slice(&x);
            }
        }
    }

    /// Largest entry of `F(z)`. Must follow a call to `evaluate` at `z`.
    fn max_violation_from_rollout(&self, z: &[f64]) -> f64 {
        let inst = self.inst;
        let n = inst.n_agents();
        let mut worst = 0.0f64;
        for j in 1..=inst.horizon {
            for i in 0..n {
                let p = self.position(j, i);
                for obs in &inst.obstacles {
                    worst = worst.max(cylinder_violation(&p, obs));
                }
                for l in i + 1..n {
                    worst = worst.max(collision_violation(
                        &p,
                        &self.position(j, l),
                        &inst.collision,
                    ));
                }
            }
        }
        let rates = rate_violations(z, &inst.prev_input, &inst.rates).unwrap_or_default();
        rates.into_iter().fold(worst, f64::max)
    }

    /// Value of `cost + c |F|^2`; fills `grad` when given.
    pub fn evaluate(&mut self, z: &[f64], c: f64, grad: Option<&mut [f64]>) -> f64 {
        let inst = self.inst;
        let n = inst.n_agents();
        let horizon = inst.horizon;
        let w = &inst.weights;
        self.roll_out(z);

        let want_grad = grad.is_some();
        if want_grad {
            self.ws.state_grad.iter_mut().for_each(|g| *g = 0.0);
        }

        let mut value = 0.0;
        // State tracking terms, j = 1..=N.
        for j in 1..=horizon {
            for i in 0..n {
                let k = self.state_index(j, i);
                let reference = inst.references[i].to_array();
                for c_ in 0..STATE_DIM {
                    let e = self.ws.states[k + c_] - reference[c_];
                    value += w.q_state[c_] * e * e;
                    if want_grad {
                        self.ws.state_grad[k + c_] += 2.0 * w.q_state[c_] * e;
                    }
                }
            }
        }

        // Obstacle and collision penalties on predicted positions.
        if c > 0.0 {
            for j in 1..=horizon {
                for i in 0..n {
                    let p = self.position(j, i);
                    let ki = self.state_index(j, i);
                    for obs in &inst.obstacles {
                        let (h, dh) = cylinder_violation_with_gradient(&p, obs);
                        if h > 0.0 {
                            value += c * h * h;
                            if want_grad {
                                for a in 0..3 {
                                    self.ws.state_grad[ki + a] += 2.0 * c * h * dh[a];
                                }
                            }
                        }
                    }
                    for l in i + 1..n {
                        let q = self.position(j, l);
                        let (h, dh) = collision_violation_with_gradient(&p, &q, &inst.collision);
                        if h > 0.0 {
                            value += c * h * h;
                            if want_grad {
                                let kl = self.state_index(j, l);
                                for a in 0..3 {
                                    self.ws.state_grad[ki + a] += 2.0 * c * h * dh[a];
                                    self.ws.state_grad[kl + a] -= 2.0 * c * h * dh[a];
                                }
                            }
                        }
                    }
                }
            }
        }

        let mut grad = grad;
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|x| *x = 0.0);
        }

        // Input, input-rate and rate-limit terms act on z directly.
        let u_ref = inst.input_ref.to_array();
        let limits = [inst.rates.max_delta_phi, inst.rates.max_delta_theta];
        for i in 0..n {
            let mut prev = inst.prev_input[i].to_array();
            for j in 0..horizon {
                let base = (i * horizon + j) * INPUT_DIM;
                let u = [z[base], z[base + 1], z[base + 2]];
                for k in 0..INPUT_DIM {
                    let e = u[k] - u_ref[k];
                    let d = u[k] - prev[k];
                    value += w.q_input[k] * e * e + w.q_input_rate[k] * d * d;
                    if let Some(g) = grad.as_deref_mut() {
                        g[base + k] += 2.0 * w.q_input[k] * e + 2.0 * w.q_input_rate[k] * d;
                        if j > 0 {
                            g[base - INPUT_DIM + k] -= 2.0 * w.q_input_rate[k] * d;
                        }
                    }
                }
                if c > 0.0 {
                    for (k, limit) in [1usize, 2].into_iter().zip(limits) {
                        let d = u[k] - prev[k];
                        // [d - max]+ and [-d - max]+ cannot both be positive.
                        let h = pos(d.abs() - limit);
                        if h > 0.0 {
                            value += c * h * h;
                            if let Some(g) = grad.as_deref_mut() {
                                let dh = 2.0 * c * h * d.signum();
                                g[base + k] += dh;
                                if j > 0 {
                                    g[base - INPUT_DIM + k] -= dh;
                                }
                            }
                        }
                    }
                }
                prev = u;
            }
        }

        // Adjoint recursion per agent: lambda_N = dl/dx_N,
        // lambda_j = dl/dx_j + A_j^T lambda_{j+1}, dJ/du_j += B_j^T lambda_{j+1}.
        if let Some(g) = grad {
            for i in 0..n {
                let mut lambda = [0.0; STATE_DIM];
                let kn = self.state_index(horizon, i);
                lambda.copy_from_slice(&self.ws.state_grad[kn..kn + STATE_DIM]);
                for j in (0..horizon).rev() {
                    let kx = self.state_index(j, i);
                    let mut x = [0.0; STATE_DIM];
                    x.copy_from_slice(&self.ws.states[kx..kx + STATE_DIM]);
                    let base = (i * horizon + j) * INPUT_DIM;
                    let u = [z[base], z[base + 1], z[base + 2]];
                    let (a, b) = step_jacobians(&x, &u, &inst.params, inst.dt);
                    for k in 0..INPUT_DIM {
                        g[base + k] += (0..STATE_DIM).map(|r| b[r][k] * lambda[r]).sum::<f64>();
                    }
                    if j > 0 {
                        let mut next = [0.0; STATE_DIM];
                        for (col, nx) in next.iter_mut().enumerate() {
                            *nx = self.ws.state_grad[kx + col]
                                + (0..STATE_DIM).map(|r| a[r][col] * lambda[r]).sum::<f64>();
                        }
                        lambda = next;
                    }
                }
            }
        }
        value
    }
}

impl PenaltyProblem for Evaluator<'_> {
    fn dim(&self) -> usize {
        self.inst.dim()
    }

    fn penalized(&mut self, z: &[f64], c: f64, grad: Option<&mut [f64]>) -> f64 {
        self.evaluate(z, c, grad)
    }

    fn infeasibility(&mut self, z: &[f64]) -> f64 {
        self.roll_out(z);
        self.max_violation_from_rollout(z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn hover_instance(n_agents: usize, horizon: usize) -> ProblemInstance {
        let params = ModelParams::default();
        let agents: Vec<_> = (0..n_agents)
            .map(|i| AgentState::at_rest([3.0 * i as f64, 0.0, 1.5]))
            .collect();
        ProblemInstance {
            initial: FleetState::new(agents.clone()),
            prev_input: vec![params.hover_input(); n_agents],
            references: agents,
            input_ref: params.hover_input(),
            obstacles: vec![],
            weights: CostWeights::default(),
            collision: CollisionParams::default(),
            rates: RateLimits::default(),
            horizon,
            dt: 0.05,
            params,
        }
    }

    #[test]
    fn cylinder_examples() {
        let obs = CylinderObstacle::new([0.0, 0.0, 0.0], 0.8, 4.0);
        assert_eq!(cylinder_violation(&[5.0, 5.0, 1.0], &obs), 0.0);
        assert_abs_diff_eq!(
            cylinder_violation(&[0.0, 0.0, 0.0], &obs),
            2.56,
            epsilon = 1e-12
        );
        assert_eq!(cylinder_violation(&[0.8, 0.0, 0.5], &obs), 0.0);
        // Above and below the band.
        assert_eq!(cylinder_violation(&[0.0, 0.0, 2.5], &obs), 0.0);
        assert_eq!(cylinder_violation(&[0.0, 0.0, -2.5], &obs), 0.0);
    }

    #[test]
    fn collision_examples() {
        let cp = CollisionParams {
            safety_radius: 0.4,
            vertical_margin: 1.0,
        };
        let p = [1.0, 2.0, 3.0];
        assert_abs_diff_eq!(collision_violation(&p, &p, &cp), 0.16, epsilon = 1e-12);
        assert_eq!(collision_violation(&[0.0; 3], &[0.4, 0.0, 0.0], &cp), 0.0);
        assert_eq!(collision_violation(&p, &[1.0, 2.0, 5.0], &cp), 0.0);
    }

    #[test]
    fn rate_examples() {
        let limits = RateLimits::default();
        let prev = [ControlInput::new(9.82, 0.0, 0.0)];
        assert!(
            rate_violations(&[9.82, 0.0, 0.0, 9.82, 0.0, 0.0], &prev, &limits)
                .unwrap()
                .iter()
                .all(|v| *v == 0.0)
        );
        let up = rate_violations(&[9.82, 0.1, 0.0], &prev, &limits).unwrap();
        assert_abs_diff_eq!(up[1], 0.03, epsilon = 1e-12);
        assert_eq!(up[0], 0.0);
        let down = rate_violations(&[9.82, -0.1, 0.0], &prev, &limits).unwrap();
        assert_abs_diff_eq!(down[0], 0.03, epsilon = 1e-12);
        assert_eq!(down[1], 0.0);
        // Thrust is not rate limited.
        assert!(rate_violations(&[13.0, 0.0, 0.0], &prev, &limits)
            .unwrap()
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn zero_cost_at_reference_hover() {
        let inst = hover_instance(3, 5);
        let z = inst.hover_decision();
        assert_eq!(inst.total_cost(&z).unwrap(), 0.0);
        assert!(inst.cost_gradient(&z).unwrap().iter().all(|g| *g == 0.0));
        assert!(inst
            .assemble_constraints(&z)
            .unwrap()
            .iter()
            .all(|f| *f == 0.0));
    }

    #[test]
    fn single_stage_input_cost() {
        let mut inst = hover_instance(1, 1);
        let u = ControlInput::new(9.82, 0.1, 0.0);
        inst.prev_input = vec![u];
        let z = u.to_array();
        let next =
            crate::dynamics::discrete_step(&inst.initial.agents[0], &u, &inst.params, inst.dt);
        let state_cost: f64 = next
            .to_array()
            .iter()
            .zip(inst.references[0].to_array())
            .zip(inst.weights.q_state)
            .map(|((x, r), q)| q * (x - r).powi(2))
            .sum();
        assert_abs_diff_eq!(
            inst.total_cost(&z).unwrap(),
            0.1 + state_cost,
            epsilon = 1e-14
        );
    }

    #[test]
    fn cost_is_linear_in_weights() {
        let mut inst = hover_instance(2, 4);
        let z: Vec<f64> = (0..inst.dim())
            .map(|k| 9.0 + 0.1 * (k as f64).sin())
            .collect();
        let base = inst.total_cost(&z).unwrap();
        inst.weights = inst.weights.scaled(2.0);
        assert_abs_diff_eq!(
            inst.total_cost(&z).unwrap(),
            2.0 * base,
            epsilon = 1e-9 * base
        );
    }

    #[test]
    fn gradient_ignores_other_agents_references() {
        let mut inst = hover_instance(2, 3);
        let z: Vec<f64> = (0..inst.dim())
            .map(|k| 9.5 + 0.2 * (k as f64).cos())
            .collect();
        let g1 = inst.cost_gradient(&z).unwrap();
        inst.references[1].p = [10.0, -4.0, 7.0];
        let g2 = inst.cost_gradient(&z).unwrap();
        assert_eq!(&g1[..9], &g2[..9]);
        assert_ne!(&g1[9..], &g2[9..]);
    }

    #[test]
    fn constraint_length_for_four_agents() {
        let mut inst = hover_instance(4, 30);
        inst.obstacles
            .push(CylinderObstacle::new([50.0, 50.0, 0.0], 0.8, 4.0));
        let f = inst.assemble_constraints(&inst.hover_decision()).unwrap();
        assert_eq!(f.len(), 780);
        assert_eq!(inst.n_constraints(), 780);
    }

    #[test]
    fn agents_on_the_same_point_collide() {
        let mut inst = hover_instance(2, 3);
        inst.initial.agents[1] = inst.initial.agents[0];
        let f = inst.assemble_constraints(&inst.hover_decision()).unwrap();
        assert!(f.iter().any(|v| *v > 0.0));
    }

    #[test]
    fn penalty_with_zero_weight_is_plain_cost() {
        let mut inst = hover_instance(2, 3);
        inst.initial.agents[1].p = [0.1, 0.0, 1.5];
        let z: Vec<f64> = (0..inst.dim())
            .map(|k| 9.0 + 0.3 * (k as f64).sin())
            .collect();
        let (v, g) = inst.penalized_cost_and_gradient(&z, 0.0).unwrap();
        assert_eq!(v, inst.total_cost(&z).unwrap());
        assert_eq!(g, inst.cost_gradient(&z).unwrap());
        let (vc, _) = inst.penalized_cost_and_gradient(&z, 10.0).unwrap();
        assert!(vc > v);
    }

    #[test]
    fn infeasibility_matches_assembled_constraints() {
        let mut inst = hover_instance(3, 4);
        inst.initial.agents[1].p = [0.1, 0.1, 1.4];
        inst.obstacles
            .push(CylinderObstacle::new([6.0, 0.0, 1.0], 0.8, 4.0));
        let z: Vec<f64> = (0..inst.dim())
            .map(|k| 9.0 + 0.2 * (k as f64 * 0.7).sin())
            .collect();
        let f = inst.assemble_constraints(&z).unwrap();
        let mut ws = Workspace::default();
        let got = Evaluator::new(&inst, &mut ws).infeasibility(&z);
        assert_eq!(got, f.iter().cloned().fold(0.0, f64::max));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let inst = hover_instance(2, 3);
        assert!(inst.total_cost(&[0.0; 4]).is_err());
        assert!(inst.assemble_constraints(&[0.0; 4]).is_err());
    }

    proptest! {
        #[test]
        fn collision_is_symmetric(a in prop::array::uniform3(-1.0..1.0f64), b in prop::array::uniform3(-1.0..1.0f64)) {
            let cp = CollisionParams::default();
            prop_assert_eq!(collision_violation(&a, &b, &cp), collision_violation(&b, &a, &cp));
        }

        #[test]
        fn cylinder_positive_iff_strictly_inside(p in prop::array::uniform3(-2.0..2.0f64)) {
            let obs = CylinderObstacle::new([0.3, -0.2, 0.5], 0.9, 2.0);
            prop_assert_eq!(cylinder_violation(&p, &obs) > 0.0, obs.strictly_contains(&p));
        }

        #[test]
        fn cylinder_nonincreasing_along_rays(angle in 0.0..std::f64::consts::TAU, z in -0.9..1.9f64) {
            let obs = CylinderObstacle::new([0.3, -0.2, 0.5], 0.9, 2.0);
            let mut last = f64::INFINITY;
            for step in 0..=40 {
                let r = step as f64 * 0.03;
                let p = [obs.center[0] + r * angle.cos(), obs.center[1] + r * angle.sin(), z];
                let v = cylinder_violation(&p, &obs);
                prop_assert!(v <= last);
                if r >= obs.radius {
                    prop_assert_eq!(v, 0.0);
                }
                last = v;
            }
        }

        #[test]
        fn constraint_count_matches_assembly(n_agents in 1usize..=5, horizon in 1usize..=10, n_obs in 0usize..=3) {
            let mut inst = hover_instance(n_agents, horizon);
            inst.obstacles = (0..n_obs).map(|s| CylinderObstacle::new([s as f64, 1.0, 0.0], 0.5, 2.0)).collect();
            let f = inst.assemble_constraints(&inst.hover_decision()).unwrap();
            prop_assert_eq!(f.len(), constraint_count(n_agents, horizon, n_obs));
        }

        #[test]
        fn cost_is_nonnegative(seed in prop::collection::vec(-1.0..1.0f64, 18)) {
            let inst = hover_instance(2, 3);
            let z: Vec<f64> = seed.iter().enumerate().map(|(k, s)| if k % 3 == 0 { 9.0 + 3.0 * s } else { 0.4 * s }).collect();
            prop_assert!(inst.total_cost(&z).unwrap() >= 0.0);
        }
    }
}
