//! Box-constrained nonconvex solver and the quadratic-penalty outer loop.
//!
//! The inner solver is PANOC: projected-gradient steps safeguarded by the
//! forward-backward envelope, accelerated with L-BFGS directions on the
//! fixed-point residual.

mod lbfgs;
mod panoc;
mod penalty;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use panoc::{inner_solve, inner_solve_with_cache, InnerResult, PanocCache};
pub use penalty::{penalty_solve, PenaltyConfig, PenaltyMode, SolveResult, SolveStatus};

/// Smooth objective with gradient.
pub trait Objective {
    fn value(&mut self, z: &[f64]) -> f64;
    fn value_and_gradient(&mut self, z: &[f64], grad: &mut [f64]) -> f64;
}

/// Adapts a closure `f(z, grad) -> value` into an [`Objective`].
pub struct FnObjective<F> {
    f: F,
    scratch: Vec<f64>,
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> FnObjective<F> {
    pub fn new(f: F) -> Self {
        Self {
            f,
            scratch: Vec::new(),
        }
    }
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> Objective for FnObjective<F> {
    fn value(&mut self, z: &[f64]) -> f64 {
        self.scratch.resize(z.len(), 0.0);
        (self.f)(z, &mut self.scratch)
    }

    fn value_and_gradient(&mut self, z: &[f64], grad: &mut [f64]) -> f64 {
        (self.f)(z, grad)
    }
}

/// Problem of the form `min l(z) s.t. F(z) = 0` handled by the penalty loop.
pub trait PenaltyProblem {
    fn dim(&self) -> usize;
    /// `l(z) + c |F(z)|^2`, with gradient when requested.
    fn penalized(&mut self, z: &[f64], c: f64, grad: Option<&mut [f64]>) -> f64;
    /// `|F(z)|_inf`.
    fn infeasibility(&mut self, z: &[f64]) -> f64;
}

/// Rectangle `lower <= z <= upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, Error> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension {
                what: "box bounds",
                expected: lower.len(),
                actual: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::InvalidConfig(
                "box lower bound exceeds upper bound".into(),
            ));
        }
        Ok(Self { lower, upper })
    }

    /// Repeats per-block bounds `count` times.
    pub fn replicated(lower: &[f64], upper: &[f64], count: usize) -> Result<Self, Error> {
        Self::new(lower.repeat(count), upper.repeat(count))
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.len() == self.len()
            && z.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (l, u))| l <= x && x <= u)
    }

    /// In-place clamp; lengths must agree.
    pub fn project_in_place(&self, z: &mut [f64]) {
        debug_assert_eq!(z.len(), self.len());
        for (x, (l, u)) in z.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *x = x.clamp(*l, *u);
        }
    }
}

/// Component-wise clamp of `z` onto `box_set`.
pub fn project_box(z: &[f64], box_set: &BoxSet) -> Result<Vec<f64>, Error> {
    if z.len() != box_set.len() {
        return Err(Error::Dimension {
            what: "vector to project",
            expected: box_set.len(),
            actual: z.len(),
        });
    }
    let mut out = z.to_vec();
    box_set.project_in_place(&mut out);
    Ok(out)
}

/// How the initial step size is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepEstimate {
    /// Lipschitz estimate from a two-point gradient difference at `z0`.
    GradientDifference,
    /// Start from the given Lipschitz constant.
    Lipschitz(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InnerSolverConfig {
    /// Bound on the sup-norm of the fixed-point residual, measured as set by
    /// `residual_norm`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Zero disables acceleration (plain projected gradient).
    pub lbfgs_memory: usize,
    pub initial_step_estimate: StepEstimate,
    pub residual_norm: ResidualNorm,
}

/// How the stopping test measures `r = z - proj(z - gamma grad f(z))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualNorm {
    /// `|r|_inf / gamma`, the projected-gradient norm. Independent of the
    /// step size, so the tolerance bounds the distance to the solution by
    /// `tolerance / mu` on a `mu`-strongly convex problem.
    Gradient,
    /// `|r|_inf` as is. Shrinks with the step size, so badly scaled problems
    /// stop early.
    StepScaled,
}

impl Default for InnerSolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-3,
            max_iterations: 500,
            lbfgs_memory: 10,
            initial_step_estimate: StepEstimate::GradientDifference,
            residual_norm: ResidualNorm::Gradient,
        }
    }
}

impl InnerSolverConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::InvalidConfig(
                "inner tolerance must be > 0 and max_iterations >= 1".into(),
            ));
        }
        if let StepEstimate::Lipschitz(l) = self.initial_step_estimate {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidConfig(
                    "initial Lipschitz estimate must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}
