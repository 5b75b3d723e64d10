//! Limited-memory BFGS buffer applied to fixed-point residuals.

#[derive(Debug, Clone)]
pub(crate) struct Lbfgs {
    capacity: usize,
    /// Most recent pair first.
    s: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    rho: Vec<f64>,
    alpha: Vec<f64>,
    active: usize,
    gamma: f64,
}

const SY_EPSILON: f64 = 1e-10;
const CBFGS_EPSILON: f64 = 1e-8;

impl Lbfgs {
    pub fn new(dim: usize, capacity: usize) -> Self {
        Self {
            capacity,
            s: vec![vec![0.0; dim]; capacity],
            y: vec![vec![0.0; dim]; capacity],
            rho: vec![0.0; capacity],
            alpha: vec![0.0; capacity],
            active: 0,
            gamma: 1.0,
        }
    }

    pub fn reset(&mut self) {
        self.active = 0;
        self.gamma = 1.0;
    }

    pub fn resize(&mut self, dim: usize, capacity: usize) {
        if self.capacity != capacity || self.s.first().map_or(0, Vec::len) != dim {
            *self = Self::new(dim, capacity);
        } else {
            self.reset();
        }
    }

    /// Pushes the pair `(s, y)` unless it fails the curvature tests.
    pub fn update(&mut self, s: &[f64], y: &[f64], residual_norm: f64) -> bool {
        if self.capacity == 0 {
            return false;
        }
        let sy: f64 = s.iter().zip(y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|a| a * a).sum();
        if sy <= SY_EPSILON || sy / ss <= CBFGS_EPSILON * residual_norm {
            return false;
        }
        let yy: f64 = y.iter().map(|a| a * a).sum();
        self.s.rotate_right(1);
        self.y.rotate_right(1);
        self.rho.rotate_right(1);
        self.s[0].copy_from_slice(s);
        self.y[0].copy_from_slice(y);
        self.rho[0] = 1.0 / sy;
        self.gamma = sy / yy;
        self.active = (self.active + 1).min(self.capacity);
        true
    }

    /// Overwrites `q` with `H q` (two-loop recursion).
    pub fn apply(&mut self, q: &mut [f64]) {
        for k in 0..self.active {
            let a = self.rho[k] * dot(&self.s[k], q);
            self.alpha[k] = a;
            for (qi, yi) in q.iter_mut().zip(&self.y[k]) {
                *qi -= a * yi;
            }
        }
        q.iter_mut().for_each(|qi| *qi *= self.gamma);
        for k in (0..self.active).rev() {
            let b = self.rho[k] * dot(&self.y[k], q);
            let coeff = self.alpha[k] - b;
            for (qi, si) in q.iter_mut().zip(&self.s[k]) {
                *qi += coeff * si;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
