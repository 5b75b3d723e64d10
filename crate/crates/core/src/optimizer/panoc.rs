use super::lbfgs::Lbfgs;
use super::{BoxSet, InnerSolverConfig, Objective, ResidualNorm, StepEstimate};
use crate::error::Error;

/// Ratio between the step size and the inverse Lipschitz estimate.
const GAMMA_L_COEFF: f64 = 0.95;
/// Sufficient-decrease coefficient of the envelope line search, times gamma.
const SIGMA_COEFF: f64 = (1.0 - GAMMA_L_COEFF) / 4.0;
const MAX_LINE_SEARCH: usize = 10;
const MAX_LIPSCHITZ_DOUBLINGS: usize = 80;
const MIN_LIPSCHITZ: f64 = 1e-8;

/// Outcome of one inner solve.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerResult {
    /// Last projected point; always inside the box.
    pub solution: Vec<f64>,
    /// Fixed-point residual at the last iterate, in the configured norm.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Solver buffers, reusable across solves of the same dimension.
#[derive(Debug, Clone)]
pub struct PanocCache {
    lbfgs: Lbfgs,
    z: Vec<f64>,
    grad: Vec<f64>,
    z_bar: Vec<f64>,
    r: Vec<f64>,
    z_prev: Vec<f64>,
    r_prev: Vec<f64>,
    dir: Vec<f64>,
    z_plus: Vec<f64>,
    grad_plus: Vec<f64>,
    z_bar_plus: Vec<f64>,
    r_plus: Vec<f64>,
    s: Vec<f64>,
    y: Vec<f64>,
    /// When set, records `(envelope before, envelope after)` for every
    /// accepted step, both at the step's gamma.
    pub(crate) envelope_trace: Option<Vec<(f64, f64)>>,
}

impl PanocCache {
    pub fn new(dim: usize, lbfgs_memory: usize) -> Self {
        let v = vec![0.0; dim];
        Self {
            lbfgs: Lbfgs::new(dim, lbfgs_memory),
            z: v.clone(),
            grad: v.clone(),
            z_bar: v.clone(),
            r: v.clone(),
            z_prev: v.clone(),
            r_prev: v.clone(),
            dir: v.clone(),
            z_plus: v.clone(),
            grad_plus: v.clone(),
            z_bar_plus: v.clone(),
            r_plus: v.clone(),
            s: v.clone(),
            y: v,
            envelope_trace: None,
        }
    }

    fn prepare(&mut self, dim: usize, lbfgs_memory: usize) {
        for buf in [
            &mut self.z,
            &mut self.grad,
            &mut self.z_bar,
            &mut self.r,
            &mut self.z_prev,
            &mut self.r_prev,
            &mut self.dir,
            &mut self.z_plus,
            &mut self.grad_plus,
            &mut self.z_bar_plus,
            &mut self.r_plus,
            &mut self.s,
            &mut self.y,
        ] {
            buf.resize(dim, 0.0);
        }
        self.lbfgs.resize(dim, lbfgs_memory);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Writes `z_bar = proj(z - gamma g)` and `r = z - z_bar`.
fn forward_backward(
    z: &[f64],
    g: &[f64],
    gamma: f64,
    box_set: &BoxSet,
    z_bar: &mut [f64],
    r: &mut [f64],
) {
    for k in 0..z.len() {
        let zb = (z[k] - gamma * g[k]).clamp(box_set.lower[k], box_set.upper[k]);
        z_bar[k] = zb;
        r[k] = z[k] - zb;
    }
}

/// Forward-backward envelope from the pieces at one point.
fn envelope(f: f64, g: &[f64], r: &[f64], gamma: f64) -> f64 {
    f - dot(g, r) + norm_sq(r) / (2.0 * gamma)
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Minimizes a smooth objective over a box with PANOC.
///
/// Allocates a fresh cache; see [`inner_solve_with_cache`] to reuse one.
pub fn inner_solve<O: Objective>(
    objective: &mut O,
    box_set: &BoxSet,
    z0: &[f64],
    cfg: &InnerSolverConfig,
) -> Result<InnerResult, Error> {
    let mut cache = PanocCache::new(z0.len(), cfg.lbfgs_memory);
    inner_solve_with_cache(objective, box_set, z0, cfg, &mut cache)
}

pub fn inner_solve_with_cache<O: Objective>(
    objective: &mut O,
    box_set: &BoxSet,
    z0: &[f64],
    cfg: &InnerSolverConfig,
    cache: &mut PanocCache,
) -> Result<InnerResult, Error> {
    cfg.validate()?;
    let n = box_set.len();
    if z0.len() != n {
        return Err(Error::Dimension {
            what: "initial guess",
            expected: n,
            actual: z0.len(),
        });
    }
    cache.prepare(n, cfg.lbfgs_memory);
    let c = cache;

    c.z.copy_from_slice(z0);
    box_set.project_in_place(&mut c.z);
    let mut f = objective.value_and_gradient(&c.z, &mut c.grad);
    if !f.is_finite() || !finite(&c.grad) {
        return Err(Error::SolverAbort(
            "non-finite objective or gradient at the initial point".into(),
        ));
    }

    let mut lipschitz = match cfg.initial_step_estimate {
        StepEstimate::Lipschitz(l) => l,
        StepEstimate::GradientDifference => {
            for k in 0..n {
                let h = (1e-6 * c.z[k].abs()).max(1e-6);
                c.z_plus[k] = c.z[k] + h;
                c.s[k] = h;
            }
            objective.value_and_gradient(&c.z_plus, &mut c.grad_plus);
            for k in 0..n {
                c.y[k] = c.grad_plus[k] - c.grad[k];
            }
            let est = (norm_sq(&c.y) / norm_sq(&c.s)).sqrt();
            if est.is_finite() {
                est.max(MIN_LIPSCHITZ)
            } else {
                1.0
            }
        }
    };
    let mut gamma = GAMMA_L_COEFF / lipschitz;
    c.lbfgs.reset();

    let mut have_prev = false;
    let mut iterations = 0;
    let mut residual;
    loop {
        forward_backward(&c.z, &c.grad, gamma, box_set, &mut c.z_bar, &mut c.r);
        let mut f_bar = objective.value(&c.z_bar);
        let mut doublings = 0;
        // Local Lipschitz check along the projected-gradient step.
        while !(f_bar.is_finite()
            && f_bar <= f - dot(&c.grad, &c.r) + 0.5 * lipschitz * norm_sq(&c.r) + 1e-12 * f.abs())
        {
            doublings += 1;
            if doublings > MAX_LIPSCHITZ_DOUBLINGS {
                return Err(Error::SolverAbort(
                    "step size collapsed in the Lipschitz backtracking".into(),
                ));
            }
            lipschitz *= 2.0;
            gamma *= 0.5;
            c.lbfgs.reset();
            have_prev = false;
            forward_backward(&c.z, &c.grad, gamma, box_set, &mut c.z_bar, &mut c.r);
            f_bar = objective.value(&c.z_bar);
        }

        residual = match cfg.residual_norm {
            ResidualNorm::Gradient => norm_inf(&c.r) / gamma,
            ResidualNorm::StepScaled => norm_inf(&c.r),
        };
        if residual <= cfg.tolerance || iterations >= cfg.max_iterations {
            break;
        }
        iterations += 1;

        let r_norm_sq = norm_sq(&c.r);
        let fbe = envelope(f, &c.grad, &c.r, gamma);
        let sigma = SIGMA_COEFF / gamma;
        let threshold = fbe - sigma * r_norm_sq;

        let mut accepted = false;
        if cfg.lbfgs_memory > 0 {
            if have_prev {
                for k in 0..n {
                    c.s[k] = c.z[k] - c.z_prev[k];
                    c.y[k] = c.r[k] - c.r_prev[k];
                }
                c.lbfgs.update(&c.s, &c.y, r_norm_sq.sqrt());
            }
            for k in 0..n {
                c.dir[k] = -c.r[k];
            }
            c.lbfgs.apply(&mut c.dir);

            let mut tau = 1.0;
            for _ in 0..MAX_LINE_SEARCH {
                for k in 0..n {
                    c.z_plus[k] = c.z[k] - (1.0 - tau) * c.r[k] + tau * c.dir[k];
                }
                let f_plus = objective.value_and_gradient(&c.z_plus, &mut c.grad_plus);
                if f_plus.is_finite() && finite(&c.grad_plus) {
                    forward_backward(
                        &c.z_plus,
                        &c.grad_plus,
                        gamma,
                        box_set,
                        &mut c.z_bar_plus,
                        &mut c.r_plus,
                    );
                    if envelope(f_plus, &c.grad_plus, &c.r_plus, gamma) <= threshold {
                        accepted = true;
                        c.z_prev.copy_from_slice(&c.z);
                        c.r_prev.copy_from_slice(&c.r);
                        std::mem::swap(&mut c.z, &mut c.z_plus);
                        std::mem::swap(&mut c.grad, &mut c.grad_plus);
                        f = f_plus;
                        break;
                    }
                }
                tau *= 0.5;
            }
        }
        if !accepted {
            // Plain projected-gradient step; the Lipschitz check above
            // guarantees it decreases the envelope.
            c.z_prev.copy_from_slice(&c.z);
            c.r_prev.copy_from_slice(&c.r);
            c.z.copy_from_slice(&c.z_bar);
            f = objective.value_and_gradient(&c.z, &mut c.grad);
            if !f.is_finite() || !finite(&c.grad) {
                return Err(Error::SolverAbort(format!(
                    "non-finite objective or gradient at iteration {iterations}"
                )));
            }
        }
        have_prev = true;
        if let Some(trace) = c.envelope_trace.as_mut() {
            forward_backward(
                &c.z,
                &c.grad,
                gamma,
                box_set,
                &mut c.z_bar_plus,
                &mut c.r_plus,
            );
            trace.push((fbe, envelope(f, &c.grad, &c.r_plus, gamma)));
        }
    }

    Ok(InnerResult {
        solution: c.z_bar.clone(),
        residual,
        iterations,
        converged: residual <= cfg.tolerance,
    })
}
