//! The simulated physical channel: scalar gain plus additive white Gaussian
//! noise, deterministic per seed.

use rand_distr::{Distribution, Normal};

use super::model::SemanticVector;
use crate::error::{Error, Result};
use crate::rng;

/// Per-transmission channel parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSpec {
    /// Linear power gain applied to every component.
    pub gain: f64,
    /// Standard deviation of the additive noise per component.
    pub noise_std: f64,
}

impl ChannelSpec {
    pub fn new(gain: f64, noise_std: f64) -> Result<Self> {
        if !(gain > 0.0) || !gain.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "channel gain must be positive and finite, got {gain}"
            )));
        }
        if !(noise_std >= 0.0) || !noise_std.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise std must be non-negative and finite, got {noise_std}"
            )));
        }
        Ok(Self { gain, noise_std })
    }

    /// Noiseless unit-gain channel.
    pub fn ideal() -> Self {
        Self {
            gain: 1.0,
            noise_std: 0.0,
        }
    }
}

/// One i.i.d. Gaussian noise vector for a transmission.
pub fn channel_noise(len: usize, noise_std: f64, seed: u64) -> Vec<f64> {
    if noise_std == 0.0 {
        return vec![0.0; len];
    }
    let mut rng = rng::chacha(&[seed]);
    let normal = Normal::new(0.0, noise_std).expect("validated std");
    (0..len).map(|_| normal.sample(&mut rng)).collect()
}

/// Y = gain * X + N, with N drawn from the seeded noise stream.
pub fn transmit(x: &SemanticVector, chan: &ChannelSpec, seed: u64) -> SemanticVector {
    let noise = channel_noise(x.values.len(), chan.noise_std, seed);
    SemanticVector {
        values: x
            .values
            .iter()
            .zip(&noise)
            .map(|(&v, &n)| chan.gain * v + n)
            .collect(),
    }
}
