use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::AgentState;

/// Standard deviations of the additive Gaussian state noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    pub sigma_position: f64,
    pub sigma_velocity: f64,
    pub sigma_attitude: f64,
    pub enabled: bool,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            sigma_position: 0.01,
            sigma_velocity: 0.005,
            sigma_attitude: 0.001,
            enabled: true,
        }
    }
}

impl NoiseParams {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn is_valid(&self) -> bool {
        [
            self.sigma_position,
            self.sigma_velocity,
            self.sigma_attitude,
        ]
        .iter()
        .all(|s| *s >= 0.0 && s.is_finite())
    }
}

/// Adds zero-mean Gaussian noise to one agent's state.
///
/// Draws are consumed in state order: `p_x, p_y, p_z, v_x, v_y, v_z, phi,
/// theta`. Nothing is drawn when noise is disabled.
pub fn apply_noise<R: Rng + ?Sized>(
    state: &AgentState,
    noise: &NoiseParams,
    rng: &mut R,
) -> AgentState {
    if !noise.enabled {
        return *state;
    }
    let sample = |sigma: f64, rng: &mut R| {
        // A zero standard deviation is valid for `Normal` and yields 0.
        Normal::new(0.0, sigma)
            .map(|d| d.sample(rng))
            .unwrap_or(0.0)
    };
    let mut out = *state;
    for p in out.p.iter_mut() {
        *p += sample(noise.sigma_position, rng);
    }
    for v in out.v.iter_mut() {
        *v += sample(noise.sigma_velocity, rng);
    }
    out.phi += sample(noise.sigma_attitude, rng);
    out.theta += sample(noise.sigma_attitude, rng);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn disabled_noise_is_identity() {
        let s = AgentState {
            p: [1.0, 2.0, 3.0],
            v: [0.1, 0.2, 0.3],
            phi: 0.01,
            theta: -0.02,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(apply_noise(&s, &NoiseParams::disabled(), &mut rng), s);
    }

    #[test]
    fn same_seed_same_draws() {
        let s = AgentState::at_rest([0.0, 0.0, 1.0]);
        let a = apply_noise(
            &s,
            &NoiseParams::default(),
            &mut ChaCha8Rng::seed_from_u64(42),
        );
        let b = apply_noise(
            &s,
            &NoiseParams::default(),
            &mut ChaCha8Rng::seed_from_u64(42),
        );
        assert_eq!(a, b);
        assert_ne!(a, s);
    }

    #[test]
    fn position_noise_has_requested_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise = NoiseParams::default();
        let n = 100_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| apply_noise(&AgentState::default(), &noise, &mut rng).p[0])
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(
            (var.sqrt() - 0.01).abs() / 0.01 < 0.02,
            "std {}",
            var.sqrt()
        );
    }
}
