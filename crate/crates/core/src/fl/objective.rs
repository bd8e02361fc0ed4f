//! The interface local training optimizes against.

use crate::error::Result;
use crate::params::ParamVector;

/// A device-local differentiable objective over an indexed dataset.
///
/// `noise_seeds` make any internal stochasticity (the channel stage)
/// reproducible: one seed per referenced sample, derived by the caller.
pub trait LocalObjective: Sync {
    fn num_samples(&self) -> usize;

    /// Mean loss and mean flat gradient over the given sample indices.
    fn batch_loss_grad(
        &self,
        params: &ParamVector,
        idxs: &[usize],
        noise_seeds: &[u64],
    ) -> Result<(f64, Vec<f64>)>;

    /// Loss and flat gradient of a single sample.
    fn sample_loss_grad(
        &self,
        params: &ParamVector,
        idx: usize,
        noise_seed: u64,
    ) -> Result<(f64, Vec<f64>)>;

    /// Mean squared per-sample gradient over the whole dataset, one noise
    /// seed per sample. Implementations may batch this more cleverly.
    fn squared_grad_mean(&self, params: &ParamVector, noise_seeds: &[u64]) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; params.len()];
        for (idx, &seed) in noise_seeds.iter().enumerate() {
            let (_, grad) = self.sample_loss_grad(params, idx, seed)?;
            for (a, g) in acc.iter_mut().zip(&grad) {
                *a += g * g;
            }
        }
        let inv = 1.0 / noise_seeds.len() as f64;
        for a in &mut acc {
            *a *= inv;
        }
        Ok(acc)
    }
}
