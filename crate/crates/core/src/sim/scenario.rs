//! Scenario files and the built-in scenario set.
//!
//! Scenarios are TOML documents:
//!
//! ```toml
//! name = "example"
//! duration = 10.0
//! obstacles = [{ center = [0.0, 0.0, 2.0], radius = 0.8, height = 4.0 }]
//!
//! [[agents]]
//! p = [-3.0, 0.0, 1.5]
//!
//! # One list of time-stamped setpoints per agent, in agent order.
//! reference_schedule = [
//!     [{ t = 0.0, p = [-3.0, 0.0, 1.5] }, { t = 2.5, p = [3.0, 0.0, 1.5] }],
//! ]
//!
//! [noise]
//! enabled = true
//!
//! [controller_overrides]
//! penalty_iterations = 5
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controller::ControllerConfig;
use crate::dynamics::{AgentState, FleetState};
use crate::error::Error;
use crate::optimizer::PenaltyMode;
use crate::problem::CylinderObstacle;
use crate::sim::NoiseParams;

const FOUR_AGENT_CYLINDER: &str = include_str!("../../scenarios/four_agent_cylinder.toml");
const HEAD_ON_FOUR: &str = include_str!("../../scenarios/head_on_four.toml");
const OBSTACLE_COURSE_SIX: &str = include_str!("../../scenarios/obstacle_course_six.toml");

/// A reference state that becomes active at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Setpoint {
    pub t: f64,
    pub p: [f64; 3],
    #[serde(default)]
    pub v: [f64; 3],
    #[serde(default)]
    pub phi: f64,
    #[serde(default)]
    pub theta: f64,
}

impl Setpoint {
    pub fn at(t: f64, p: [f64; 3]) -> Self {
        Self {
            t,
            p,
            v: [0.0; 3],
            phi: 0.0,
            theta: 0.0,
        }
    }

    pub fn state(&self) -> AgentState {
        AgentState {
            p: self.p,
            v: self.v,
            phi: self.phi,
            theta: self.theta,
        }
    }
}

/// Controller settings a scenario may override.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerOverrides {
    pub penalty_iterations: Option<usize>,
    pub penalty_mode: Option<PenaltyMode>,
    pub infeasibility_tolerance: Option<f64>,
    pub inner_tolerance: Option<f64>,
    pub inner_max_iterations: Option<usize>,
    pub horizon: Option<usize>,
}

impl ControllerOverrides {
    pub fn apply(&self, cfg: &ControllerConfig) -> ControllerConfig {
        let mut out = cfg.clone();
        if let Some(k) = self.penalty_iterations {
            out.penalty.outer_iterations = k;
        }
        if let Some(m) = self.penalty_mode {
            out.penalty.mode = m;
        }
        if let Some(t) = self.infeasibility_tolerance {
            out.penalty.infeasibility_tolerance = t;
        }
        if let Some(t) = self.inner_tolerance {
            out.inner.tolerance = t;
        }
        if let Some(m) = self.inner_max_iterations {
            out.inner.max_iterations = m;
        }
        if let Some(h) = self.horizon {
            out.horizon = h;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub agents: Vec<AgentState>,
    pub reference_schedule: Vec<Vec<Setpoint>>,
    #[serde(default)]
    pub obstacles: Vec<CylinderObstacle>,
    pub duration: f64,
    #[serde(default)]
    pub noise: NoiseParams,
    #[serde(default)]
    pub controller_overrides: ControllerOverrides,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, Error> {
        let sc: Scenario = toml::from_str(text)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_toml(&self) -> Result<String, Error> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, Error> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: String| {
            Err(Error::InvalidConfig(format!(
                "scenario `{}`: {m}",
                self.name
            )))
        };
        if self.agents.is_empty() {
            return bad("needs at least one agent".into());
        }
        if !(self.duration > 0.0) {
            return bad("duration must be positive".into());
        }
        if self.reference_schedule.len() != self.agents.len() {
            return bad(format!(
                "reference_schedule has {} entries for {} agents",
                self.reference_schedule.len(),
                self.agents.len()
            ));
        }
        for (i, sched) in self.reference_schedule.iter().enumerate() {
            if sched.is_empty() {
                return bad(format!("agent {i} has an empty reference schedule"));
            }
            if sched.windows(2).any(|w| w[1].t < w[0].t) {
                return bad(format!("agent {i} schedule times decrease"));
            }
        }
        if self.agents.iter().any(|a| !a.is_finite()) {
            return bad("non-finite initial state".into());
        }
        if self
            .obstacles
            .iter()
            .any(|o| !(o.radius > 0.0 && o.height > 0.0))
        {
            return bad("obstacle radius and height must be positive".into());
        }
        if !self.noise.is_valid() {
            return bad("noise standard deviations must be nonnegative".into());
        }
        Ok(())
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn initial_fleet(&self) -> FleetState {
        FleetState::new(self.agents.clone())
    }

    /// Latest setpoint with `t <= time` per agent (the first one before it starts).
    pub fn references_at(&self, time: f64) -> Vec<AgentState> {
        self.reference_schedule
            .iter()
            .map(|sched| {
                sched
                    .iter()
                    .take_while(|s| s.t <= time + 1e-9)
                    .last()
                    .unwrap_or(&sched[0])
                    .state()
            })
            .collect()
    }

    /// Number of control steps; the log holds one more record.
    pub fn steps(&self, dt: f64) -> usize {
        (self.duration / dt).round() as usize
    }
}

/// Line formation passing a single cylinder: agents at `x = -3`, spaced
/// 0.8 m in `y` around zero, take off to 1.5 m and at 2.5 s are sent to the
/// mirrored point at `x = +3`.
pub fn scaling_scenario(n_agents: usize) -> Scenario {
    // Offsets in units of 0.1 m keep the coordinates exact decimals.
    let ys: Vec<f64> = (0..n_agents)
        .map(|i| (4.0 * (2.0 * i as f64 - (n_agents as f64 - 1.0))) / 10.0)
        .collect();
    Scenario {
        name: format!("scaling_{n_agents}"),
        agents: ys
            .iter()
            .map(|y| AgentState::at_rest([-3.0, *y, 0.0]))
            .collect(),
        reference_schedule: ys
            .iter()
            .map(|y| {
                vec![
                    Setpoint::at(0.0, [-3.0, *y, 1.5]),
                    Setpoint::at(2.5, [3.0, *y, 1.5]),
                ]
            })
            .collect(),
        obstacles: vec![CylinderObstacle::new([0.0, 0.0, 2.0], 0.8, 4.0)],
        duration: 15.0,
        noise: NoiseParams::default(),
        controller_overrides: ControllerOverrides::default(),
    }
}

/// Every built-in scenario by name, including `scaling_2` to `scaling_9`.
pub fn builtin_scenarios() -> BTreeMap<String, Scenario> {
    let mut out = BTreeMap::new();
    for text in [FOUR_AGENT_CYLINDER, HEAD_ON_FOUR, OBSTACLE_COURSE_SIX] {
        let sc = Scenario::from_toml(text).expect("built-in scenario files are valid");
        out.insert(sc.name.clone(), sc);
    }
    for n in 2..=9 {
        let sc = scaling_scenario(n);
        out.insert(sc.name.clone(), sc);
    }
    out
}

pub fn builtin_scenario(name: &str) -> Result<Scenario, Error> {
    builtin_scenarios()
        .remove(name)
        .ok_or_else(|| Error::UnknownScenario(name.to_string()))
}

/// Resolves a built-in name, falling back to a file path.
pub fn load_scenario(name_or_path: &str) -> Result<Scenario, Error> {
    if let Ok(sc) = builtin_scenario(name_or_path) {
        return Ok(sc);
    }
    let path = Path::new(name_or_path);
    if path.is_file() {
        Scenario::from_file(path)
    } else {
        Err(Error::UnknownScenario(name_or_path.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_match_their_descriptions() {
        let all = builtin_scenarios();
        let four = &all["four_agent_cylinder"];
        assert_eq!(four.n_agents(), 4);
        assert_eq!(four.obstacles.len(), 1);
        assert_eq!(four.obstacles[0].radius, 0.8);

        let head_on = &all["head_on_four"];
        assert_eq!(head_on.n_agents(), 4);
        assert_eq!(head_on.controller_overrides.penalty_iterations, Some(5));
        let cfg = head_on
            .controller_overrides
            .apply(&ControllerConfig::default());
        assert_eq!(cfg.penalty.outer_iterations, 5);

        let course = &all["obstacle_course_six"];
        assert_eq!(course.n_agents(), 6);
        assert_eq!(course.obstacles.len(), 5);
        assert!(course
            .obstacles
            .iter()
            .all(|o| (0.4..=1.0).contains(&o.radius)));

        for n in 2..=9 {
            let sc = &all[&format!("scaling_{n}")];
            assert_eq!(sc.n_agents(), n);
            assert_eq!(sc.obstacles.len(), 1);
        }
    }

    #[test]
    fn scaling_four_matches_the_cylinder_scenario_geometry() {
        let file = builtin_scenario("four_agent_cylinder").unwrap();
        let generated = scaling_scenario(4);
        assert_eq!(file.agents, generated.agents);
        assert_eq!(file.reference_schedule, generated.reference_schedule);
        assert_eq!(file.obstacles, generated.obstacles);
    }

    #[test]
    fn schedule_switches_at_its_time() {
        let sc = scaling_scenario(2);
        assert_eq!(sc.references_at(0.0)[0].p, [-3.0, -0.4, 1.5]);
        assert_eq!(sc.references_at(2.45)[0].p, [-3.0, -0.4, 1.5]);
        assert_eq!(sc.references_at(2.5)[0].p, [3.0, -0.4, 1.5]);
        assert_eq!(sc.steps(0.05), 300);
    }

    #[test]
    fn toml_round_trip() {
        let sc = builtin_scenario("head_on_four").unwrap();
        let back = Scenario::from_toml(&sc.to_toml().unwrap()).unwrap();
        assert_eq!(back, sc);
    }

    #[test]
    fn malformed_scenarios_are_rejected() {
        let mut sc = scaling_scenario(2);
        sc.reference_schedule.pop();
        assert!(sc.validate().is_err());
        let mut sc = scaling_scenario(2);
        sc.reference_schedule[0].reverse();
        assert!(sc.validate().is_err());
        let mut sc = scaling_scenario(2);
        sc.duration = 0.0;
        assert!(sc.validate().is_err());
        assert!(Scenario::from_toml("name = 3").is_err());
    }

    #[test]
    fn unknown_names_are_reported() {
        match load_scenario("nosuch") {
            Err(Error::UnknownScenario(n)) => assert_eq!(n, "nosuch"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
