//! MAV kinematics with first-order attitude loops, forward-Euler
//! discretization and the single-shooting fleet rollout.
//!
//! States live in a yaw-compensated world frame. Per agent the state is
//! `[p_x, p_y, p_z, v_x, v_y, v_z, phi, theta]` and the input is
//! `[T, phi_ref, theta_ref]` with `T` the mass-normalized thrust.

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Number of state components per agent.
pub const STATE_DIM: usize = 8;
/// Number of input components per agent.
pub const INPUT_DIM: usize = 3;

/// Physical parameters of the attitude-loop quadrotor model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    pub tau_phi: f64,
    pub tau_theta: f64,
    pub k_phi: f64,
    pub k_theta: f64,
    /// Linear drag coefficients `A_x, A_y, A_z` in 1/s.
    pub damp_x: f64,
    pub damp_y: f64,
    pub damp_z: f64,
    pub gravity: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            tau_phi: 0.5,
            tau_theta: 0.5,
            k_phi: 1.0,
            k_theta: 1.0,
            damp_x: 0.1,
            damp_y: 0.1,
            damp_z: 0.1,
            gravity: 9.82,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), Error> {
        let ok = self.tau_phi > 0.0
            && self.tau_theta > 0.0
            && self.gravity > 0.0
            && self.damp_x >= 0.0
            && self.damp_y >= 0.0
            && self.damp_z >= 0.0
            && self.k_phi.is_finite()
            && self.k_theta.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "invalid model parameters: {self:?}"
            )))
        }
    }

    /// The hover input `(g, 0, 0)`.
    pub fn hover_input(&self) -> ControlInput {
        ControlInput {
            thrust: self.gravity,
            phi_ref: 0.0,
            theta_ref: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentState {
    pub p: [f64; 3],
    #[serde(default)]
    pub v: [f64; 3],
    #[serde(default)]
    pub phi: f64,
    #[serde(default)]
    pub theta: f64,
}

impl AgentState {
    /// Agent hovering at `p` with level attitude.
    pub fn at_rest(p: [f64; 3]) -> Self {
        Self {
            p,
            ..Self::default()
        }
    }

    pub fn to_array(&self) -> [f64; STATE_DIM] {
        [
            self.p[0], self.p[1], self.p[2], self.v[0], self.v[1], self.v[2], self.phi, self.theta,
        ]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self {
            p: [x[0], x[1], x[2]],
            v: [x[3], x[4], x[5]],
            phi: x[6],
            theta: x[7],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub thrust: f64,
    pub phi_ref: f64,
    pub theta_ref: f64,
}

impl ControlInput {
    pub fn new(thrust: f64, phi_ref: f64, theta_ref: f64) -> Self {
        Self {
            thrust,
            phi_ref,
            theta_ref,
        }
    }

    pub fn to_array(&self) -> [f64; INPUT_DIM] {
        [self.thrust, self.phi_ref, self.theta_ref]
    }

    pub fn from_slice(u: &[f64]) -> Self {
        Self {
            thrust: u[0],
            phi_ref: u[1],
            theta_ref: u[2],
        }
    }
}

/// Joint state of all agents. The agent count is fixed for a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FleetState {
    pub agents: Vec<AgentState>,
}

impl FleetState {
    pub fn new(agents: Vec<AgentState>) -> Self {
        Self { agents }
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }
}

/// Unit thrust direction in the world frame, the third column of
/// `R = R_y(theta) * R_x(phi)`.
#[inline]
pub fn thrust_direction(phi: f64, theta: f64) -> [f64; 3] {
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    [st * cp, -sp, ct * cp]
}

/// Time derivative of one agent's state, in array layout.
#[inline]
pub fn continuous_dynamics_raw(
    x: &[f64; STATE_DIM],
    u: &[f64; INPUT_DIM],
    params: &ModelParams,
) -> [f64; STATE_DIM] {
    let dir = thrust_direction(x[6], x[7]);
    let thrust = u[0];
    [
        x[3],
        x[4],
        x[5],
        thrust * dir[0] - params.damp_x * x[3],
        thrust * dir[1] - params.damp_y * x[4],
        thrust * dir[2] - params.gravity - params.damp_z * x[5],
        (params.k_phi * u[1] - x[6]) / params.tau_phi,
        (params.k_theta * u[2] - x[7]) / params.tau_theta,
    ]
}

/// Continuous-time model. The returned `AgentState` holds derivatives:
/// `p` is the velocity, `v` the acceleration, `phi`/`theta` the attitude rates.
pub fn continuous_dynamics(
    state: &AgentState,
    input: &ControlInput,
    params: &ModelParams,
) -> AgentState {
    AgentState::from_slice(&continuous_dynamics_raw(
        &state.to_array(),
        &input.to_array(),
        params,
    ))
}

#[inline]
pub fn discrete_step_raw(
    x: &[f64; STATE_DIM],
    u: &[f64; INPUT_DIM],
    params: &ModelParams,
    dt: f64,
) -> [f64; STATE_DIM] {
    let dx = continuous_dynamics_raw(x, u, params);
    let mut next = *x;
    for (n, d) in next.iter_mut().zip(dx) {
        *n += dt * d;
    }
    next
}

/// One forward-Euler step of length `dt`.
pub fn discrete_step(
    state: &AgentState,
    input: &ControlInput,
    params: &ModelParams,
    dt: f64,
) -> AgentState {
    AgentState::from_slice(&discrete_step_raw(
        &state.to_array(),
        &input.to_array(),
        params,
        dt,
    ))
}

/// Partial derivatives of one Euler step.
///
/// Returns `(A, B)` with `A = d x+/d x` (row-major 8x8) and
/// `B = d x+/d u` (row-major 8x3).
pub fn step_jacobians(
    x: &[f64; STATE_DIM],
    u: &[f64; INPUT_DIM],
    params: &ModelParams,
    dt: f64,
) -> ([[f64; STATE_DIM]; STATE_DIM], [[f64; INPUT_DIM]; STATE_DIM]) {
    let mut a = [[0.0; STATE_DIM]; STATE_DIM];
    let mut b = [[0.0; INPUT_DIM]; STATE_DIM];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let (sp, cp) = x[6].sin_cos();
    let (st, ct) = x[7].sin_cos();
    let t = u[0];
    for k in 0..3 {
        a[k][3 + k] = dt;
    }
    a[3][3] -= dt * params.damp_x;
    a[4][4] -= dt * params.damp_y;
    a[5][5] -= dt * params.damp_z;
    a[3][6] = dt * t * st * -sp;
    a[3][7] = dt * t * ct * cp;
    a[4][6] = dt * -t * cp;
    a[5][6] = dt * -t * ct * sp;
    a[5][7] = dt * -t * st * cp;
    a[6][6] -= dt / params.tau_phi;
    a[7][7] -= dt / params.tau_theta;

    b[3][0] = dt * st * cp;
    b[4][0] = dt * -sp;
    b[5][0] = dt * ct * cp;
    b[6][1] = dt * params.k_phi / params.tau_phi;
    b[7][2] = dt * params.k_theta / params.tau_theta;
    (a, b)
}

/// Single-shooting rollout of the whole fleet.
///
/// `inputs` uses the decision-vector layout: agent-major, then time-major,
/// components `[T, phi_ref, theta_ref]`. The result has `horizon + 1`
/// entries, the first being `initial`.
pub fn rollout(
    initial: &FleetState,
    inputs: &[f64],
    params: &ModelParams,
    horizon: usize,
    dt: f64,
) -> Result<Vec<FleetState>, Error> {
    let n_agents = initial.len();
    let expected = INPUT_DIM * horizon * n_agents;
    if inputs.len() != expected {
        return Err(Error::Dimension {
            what: "decision vector",
            expected,
            actual: inputs.len(),
        });
    }
    let mut out = vec![initial.clone(); horizon + 1];
    for (i, agent) in initial.agents.iter().enumerate() {
        let mut x = agent.to_array();
        let block = &inputs[i * INPUT_DIM * horizon..(i + 1) * INPUT_DIM * horizon];
        for (j, u) in block.chunks_exact(INPUT_DIM).enumerate() {
            x = discrete_step_raw(&x, &[u[0], u[1], u[2]], params, dt);
            out[j + 1].agents[i] = AgentState::from_slice(&x);
        }
    }
    Ok(out)
}
