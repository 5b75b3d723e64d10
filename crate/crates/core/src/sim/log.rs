use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::dynamics::{AgentState, ControlInput};
use crate::error::Error;

/// One sampling instant: the realized state and the input applied from it.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub states: Vec<AgentState>,
    pub inputs: Vec<ControlInput>,
    /// Wall-clock seconds spent in the solver call.
    pub solve_time: f64,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
    pub residual: f64,
    pub infeasibility: f64,
    /// The solve failed and the previous input was held.
    pub aborted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationLog {
    pub scenario: String,
    pub seed: u64,
    pub dt: f64,
    pub n_agents: usize,
    pub records: Vec<StepRecord>,
}

#[derive(Serialize)]
struct TrajectoryRow {
    t: f64,
    agent: usize,
    px: f64,
    py: f64,
    pz: f64,
    vx: f64,
    vy: f64,
    vz: f64,
    phi: f64,
    theta: f64,
    #[serde(rename = "T_cmd")]
    t_cmd: f64,
    phi_ref: f64,
    theta_ref: f64,
}

#[derive(Serialize)]
struct SolverRow {
    t: f64,
    solve_ms: f64,
    inner_iters: usize,
    outer_iters: usize,
    residual: f64,
    infeasibility: f64,
}

impl SimulationLog {
    pub fn aborted_steps(&self) -> usize {
        self.records.iter().filter(|r| r.aborted).count()
    }

    /// Per-agent rows `t, agent, state..., T_cmd, phi_ref, theta_ref`.
    pub fn write_trajectory_csv<W: Write>(&self, out: W) -> Result<(), Error> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            for (agent, (s, u)) in r.states.iter().zip(&r.inputs).enumerate() {
                w.serialize(TrajectoryRow {
                    t: r.t,
                    agent,
                    px: s.p[0],
                    py: s.p[1],
                    pz: s.p[2],
                    vx: s.v[0],
                    vy: s.v[1],
                    vz: s.v[2],
                    phi: s.phi,
                    theta: s.theta,
                    t_cmd: u.thrust,
                    phi_ref: u.phi_ref,
                    theta_ref: u.theta_ref,
                })?;
            }
        }
        w.flush().map_err(|e| Error::io("trajectory csv", e))?;
        Ok(())
    }

    /// One row per step with solver statistics.
    pub fn write_solver_csv<W: Write>(&self, out: W) -> Result<(), Error> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(SolverRow {
                t: r.t,
                solve_ms: r.solve_time * 1e3,
                inner_iters: r.inner_iterations,
                outer_iters: r.outer_iterations,
                residual: r.residual,
                infeasibility: r.infeasibility,
            })?;
        }
        w.flush().map_err(|e| Error::io("solver csv", e))?;
        Ok(())
    }

    pub fn trajectory_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_trajectory_csv(&mut buf)
            .expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn solver_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_solver_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn save_csvs(&self, dir: &Path) -> Result<(), Error> {
        let open = |name: &str| {
            let path = dir.join(name);
            std::fs::File::create(&path).map_err(|e| Error::io(&path, e))
        };
        self.write_trajectory_csv(open(super::TRAJECTORY_FILE)?)?;
        self.write_solver_csv(open(super::SOLVER_FILE)?)?;
        Ok(())
    }
}
