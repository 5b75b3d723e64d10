use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::panoc::{inner_solve_with_cache, PanocCache};
use super::{BoxSet, InnerSolverConfig, Objective, PenaltyProblem};
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyMode {
    /// Run `outer_iterations` rounds, stopping early only once `F(z) = 0`.
    FixedCount,
    /// Stop as soon as `|F(z)|_inf <= infeasibility_tolerance`, at most
    /// `outer_iterations` rounds.
    ToleranceDriven,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PenaltyConfig {
    pub initial_weight: f64,
    pub update_factor: f64,
    pub outer_iterations: usize,
    pub infeasibility_tolerance: f64,
    pub mode: PenaltyMode,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            initial_weight: 10.0,
            update_factor: 10.0,
            outer_iterations: 4,
            infeasibility_tolerance: 1e-3,
            mode: PenaltyMode::FixedCount,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.initial_weight > 0.0) || !(self.update_factor > 1.0) || self.outer_iterations == 0
        {
            return Err(Error::InvalidConfig(
                "penalty needs initial_weight > 0, update_factor > 1, outer_iterations >= 1".into(),
            ));
        }
        if !(self.infeasibility_tolerance >= 0.0) {
            return Err(Error::InvalidConfig(
                "infeasibility tolerance must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    IterationCapped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub solution: Vec<f64>,
    pub inner_iterations_total: usize,
    pub outer_iterations: usize,
    pub fixed_point_residual: f64,
    /// `|F(solution)|_inf`.
    pub max_infeasibility: f64,
    pub wall_time: Duration,
    pub status: SolveStatus,
    /// Penalty weight used in the last round.
    pub penalty_weight: f64,
}

struct Penalized<'a, P> {
    problem: &'a mut P,
    weight: f64,
}

impl<P: PenaltyProblem> Objective for Penalized<'_, P> {
    fn value(&mut self, z: &[f64]) -> f64 {
        self.problem.penalized(z, self.weight, None)
    }

    fn value_and_gradient(&mut self, z: &[f64], grad: &mut [f64]) -> f64 {
        self.problem.penalized(z, self.weight, Some(grad))
    }
}

/// Quadratic-penalty loop: solves `min l(z) + c |F(z)|^2` over the box for
/// `c = c0, c0 * rho, c0 * rho^2, ...`, warm-starting each round.
pub fn penalty_solve<P: PenaltyProblem>(
    problem: &mut P,
    z0: &[f64],
    box_set: &BoxSet,
    pcfg: &PenaltyConfig,
    icfg: &InnerSolverConfig,
    cache: &mut PanocCache,
) -> Result<SolveResult, Error> {
    pcfg.validate()?;
    let n = problem.dim();
    if z0.len() != n || box_set.len() != n {
        return Err(Error::Dimension {
            what: "decision vector",
            expected: n,
            actual: z0.len(),
        });
    }
    let start = Instant::now();
    let mut z = z0.to_vec();
    let mut weight = pcfg.initial_weight;
    let mut inner_total = 0;
    let mut outer = 0;
    let mut residual = f64::INFINITY;
    let mut converged = false;
    let mut infeasibility = f64::INFINITY;
    while outer < pcfg.outer_iterations {
        if outer > 0 {
            weight *= pcfg.update_factor;
        }
        outer += 1;
        let mut objective = Penalized {
            problem: &mut *problem,
            weight,
        };
        let res = inner_solve_with_cache(&mut objective, box_set, &z, icfg, cache)?;
        inner_total += res.iterations;
        residual = res.residual;
        converged = res.converged;
        z = res.solution;
        infeasibility = problem.infeasibility(&z);
        let done = match pcfg.mode {
            PenaltyMode::FixedCount => infeasibility == 0.0,
            PenaltyMode::ToleranceDriven => infeasibility <= pcfg.infeasibility_tolerance,
        };
        if done {
            break;
        }
    }
    let feasible_enough = match pcfg.mode {
        PenaltyMode::FixedCount => true,
        PenaltyMode::ToleranceDriven => infeasibility <= pcfg.infeasibility_tolerance,
    };
    Ok(SolveResult {
        solution: z,
        inner_iterations_total: inner_total,
        outer_iterations: outer,
        fixed_point_residual: residual,
        max_infeasibility: infeasibility,
        wall_time: start.elapsed(),
        status: if converged && feasible_enough {
            SolveStatus::Converged
        } else {
            SolveStatus::IterationCapped
        },
        penalty_weight: weight,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// min (z - 3)^2 s.t. [z - 1]+ = 0.
    struct Scalar;

    impl PenaltyProblem for Scalar {
        fn dim(&self) -> usize {
            1
        }

        fn penalized(&mut self, z: &[f64], c: f64, grad: Option<&mut [f64]>) -> f64 {
            let h = (z[0] - 1.0).max(0.0);
            if let Some(g) = grad {
                g[0] = 2.0 * (z[0] - 3.0) + 2.0 * c * h;
            }
            (z[0] - 3.0).powi(2) + c * h * h
        }

        fn infeasibility(&mut self, z: &[f64]) -> f64 {
            (z[0] - 1.0).max(0.0)
        }
    }

    fn tight() -> InnerSolverConfig {
        InnerSolverConfig {
            tolerance: 1e-12,
            max_iterations: 1000,
            ..Default::default()
        }
    }

    fn scalar_box() -> BoxSet {
        BoxSet::new(vec![-10.0], vec![10.0]).unwrap()
    }

    #[test]
    fn fixed_schedule_reaches_closed_form() {
        let mut cache = PanocCache::new(1, 10);
        let res = penalty_solve(
            &mut Scalar,
            &[0.0],
            &scalar_box(),
            &PenaltyConfig::default(),
            &tight(),
            &mut cache,
        )
        .unwrap();
        assert_eq!(res.outer_iterations, 4);
        assert_eq!(res.penalty_weight, 1e4);
        let expected = (3.0 + 1e4) / (1.0 + 1e4);
        assert_abs_diff_eq!(res.solution[0], expected, epsilon = 1e-9);
        assert_abs_diff_eq!(res.max_infeasibility, expected - 1.0, epsilon = 1e-9);
    }

    #[test]
    fn tolerance_mode_stops_at_first_sufficient_weight() {
        let pcfg = PenaltyConfig {
            mode: PenaltyMode::ToleranceDriven,
            infeasibility_tolerance: 0.02,
            ..Default::default()
        };
        let mut cache = PanocCache::new(1, 10);
        let res = penalty_solve(
            &mut Scalar,
            &[0.0],
            &scalar_box(),
            &pcfg,
            &tight(),
            &mut cache,
        )
        .unwrap();
        assert_eq!(res.outer_iterations, 2);
        assert_eq!(res.penalty_weight, 100.0);
        assert_abs_diff_eq!(res.solution[0], 103.0 / 101.0, epsilon = 1e-9);
        assert_eq!(res.status, SolveStatus::Converged);
    }

    #[test]
    fn infeasibility_is_nonincreasing_in_weight() {
        let mut last = f64::INFINITY;
        for rounds in 1..=6 {
            let pcfg = PenaltyConfig {
                outer_iterations: rounds,
                ..Default::default()
            };
            let mut cache = PanocCache::new(1, 10);
            let res = penalty_solve(
                &mut Scalar,
                &[0.0],
                &scalar_box(),
                &pcfg,
                &tight(),
                &mut cache,
            )
            .unwrap();
            assert!(res.max_infeasibility <= last);
            last = res.max_infeasibility;
        }
    }

    #[test]
    fn feasible_minimum_needs_one_round() {
        struct Free;
        impl PenaltyProblem for Free {
            fn dim(&self) -> usize {
                2
            }
            fn penalized(&mut self, z: &[f64], c: f64, grad: Option<&mut [f64]>) -> f64 {
                let h = (z[0] - 5.0).max(0.0);
                if let Some(g) = grad {
                    g[0] = 2.0 * (z[0] - 0.5) + 2.0 * c * h;
                    g[1] = 2.0 * (z[1] + 0.25);
                }
                (z[0] - 0.5).powi(2) + (z[1] + 0.25).powi(2) + c * h * h
            }
            fn infeasibility(&mut self, z: &[f64]) -> f64 {
                (z[0] - 5.0).max(0.0)
            }
        }
        let b = BoxSet::replicated(&[-1.0], &[1.0], 2).unwrap();
        let mut cache = PanocCache::new(2, 10);
        let res = penalty_solve(
            &mut Free,
            &[0.5, -0.25],
            &b,
            &PenaltyConfig::default(),
            &tight(),
            &mut cache,
        )
        .unwrap();
        assert_eq!(res.outer_iterations, 1);
        assert_eq!(res.max_infeasibility, 0.0);
        assert_eq!(res.solution, vec![0.5, -0.25]);
    }
}
