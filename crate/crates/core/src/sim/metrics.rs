use serde::{Deserialize, Serialize};

use crate::controller::ControllerConfig;
use crate::sim::{Scenario, SimulationLog};

/// Summary of one closed-loop run. Distances are evaluated on the realized
/// (noisy) states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub scenario: String,
    pub seed: u64,
    pub n_agents: usize,
    /// Smallest Euclidean distance between any two agents over the run;
    /// absent for a single agent.
    pub min_pairwise_distance: Option<f64>,
    /// Largest `[r_safety - d_min(t)]+` over the run.
    pub max_safety_violation: f64,
    /// Largest radial intrusion into any cylinder while inside its band.
    pub max_obstacle_penetration: f64,
    /// Largest `|delta phi_ref|`, `|delta theta_ref|` between consecutive
    /// applied inputs in excess of the rate limit.
    pub max_rate_excess: f64,
    pub solver_time_mean: f64,
    pub solver_time_max: f64,
    pub solver_time_min: f64,
    pub final_tracking_error: Vec<f64>,
    pub aborted_steps: usize,
}

impl Metrics {
    pub fn max_constraint_violation(&self) -> f64 {
        self.max_safety_violation.max(self.max_obstacle_penetration)
    }

    pub fn to_toml(&self) -> Result<String, crate::Error> {
        Ok(toml::to_string(self)?)
    }
}

/// Minimum pairwise distance among `positions`, `None` with fewer than two.
pub fn min_pairwise_distance(positions: &[[f64; 3]]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (i, a) in positions.iter().enumerate() {
        for b in &positions[i + 1..] {
            let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
            best = Some(best.map_or(d, |m| m.min(d)));
        }
    }
    best
}

pub fn compute_metrics(log: &SimulationLog, sc: &Scenario, cfg: &ControllerConfig) -> Metrics {
    let r_safety = cfg.collision.safety_radius;
    let mut min_dist: Option<f64> = None;
    let mut safety = 0.0f64;
    let mut penetration = 0.0f64;
    for rec in &log.records {
        let positions: Vec<[f64; 3]> = rec.states.iter().map(|s| s.p).collect();
        if let Some(d) = min_pairwise_distance(&positions) {
            min_dist = Some(min_dist.map_or(d, |m| m.min(d)));
            safety = safety.max(r_safety - d);
        }
        for p in &positions {
            for obs in &sc.obstacles {
                if p[2] >= obs.bottom() && p[2] <= obs.top() {
                    penetration = penetration.max(obs.radius - obs.horizontal_distance(p));
                }
            }
        }
    }

    let mut rate_excess = 0.0f64;
    for w in log.records.windows(2) {
        for (a, b) in w[0].inputs.iter().zip(&w[1].inputs) {
            rate_excess = rate_excess
                .max((b.phi_ref - a.phi_ref).abs() - cfg.rates.max_delta_phi)
                .max((b.theta_ref - a.theta_ref).abs() - cfg.rates.max_delta_theta);
        }
    }

    // The first solve carries one-off warm-up costs and is left out.
    let timed: Vec<f64> = if log.records.len() > 1 {
        log.records[1..].iter().map(|r| r.solve_time).collect()
    } else {
        log.records.iter().map(|r| r.solve_time).collect()
    };
    let (mean, max, min) = if timed.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        (
            timed.iter().sum::<f64>() / timed.len() as f64,
            timed.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            timed.iter().cloned().fold(f64::INFINITY, f64::min),
        )
    };

    let final_tracking_error = match log.records.last() {
        Some(last) => {
            let refs = sc.references_at(last.t);
            last.states
                .iter()
                .zip(&refs)
                .map(|(s, r)| {
                    ((s.p[0] - r.p[0]).powi(2)
                        + (s.p[1] - r.p[1]).powi(2)
                        + (s.p[2] - r.p[2]).powi(2))
                    .sqrt()
                })
                .collect()
        }
        None => Vec::new(),
    };

    Metrics {
        scenario: log.scenario.clone(),
        seed: log.seed,
        n_agents: log.n_agents,
        min_pairwise_distance: min_dist,
        max_safety_violation: safety.max(0.0),
        max_obstacle_penetration: penetration.max(0.0),
        max_rate_excess: rate_excess.max(0.0),
        solver_time_mean: mean,
        solver_time_max: max,
        solver_time_min: min,
        final_tracking_error,
        aborted_steps: log.aborted_steps(),
    }
}
