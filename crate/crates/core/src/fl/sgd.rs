//! Masked mini-batch SGD for one device.

use rand::seq::SliceRandom;

use super::objective::LocalObjective;
use crate::error::{Error, Result};
use crate::params::{FreezeMask, ParamVector};
use crate::rng;

/// Run `epochs` of mini-batch SGD on the device objective, starting from the
/// published parameters. Entries whose mask bit is set are never written and
/// therefore stay bit-identical to the published values.
///
/// Batching contract (the replay tests rely on it): each epoch `e` shuffles
/// the sample indices with the stream `chacha([seed, e])`, walks them in
/// chunks of `batch_size`, and gives sample `i` the noise seed
/// `mix([seed, e, i])`.
#[allow(clippy::too_many_arguments)]
pub fn local_train<O: LocalObjective + ?Sized>(
    objective: &O,
    device: usize,
    published: &ParamVector,
    mask: &FreezeMask,
    epochs: usize,
    lr: f64,
    batch_size: usize,
    seed: u64,
) -> Result<ParamVector> {
    if epochs == 0 {
        return Err(Error::InvalidParameter("epochs must be >= 1".into()));
    }
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    if batch_size == 0 {
        return Err(Error::InvalidParameter("batch size must be >= 1".into()));
    }
    if mask.len() != published.len() {
        return Err(Error::Contract(format!(
            "mask length {} != parameter length {}",
            mask.len(),
            published.len()
        )));
    }
    let n = objective.num_samples();
    if n == 0 {
        return Err(Error::Contract("training on an empty dataset".into()));
    }

    let mut current = published.clone();
    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::chacha(&[seed, epoch as u64]));
        for batch in order.chunks(batch_size) {
            let noise_seeds: Vec<u64> = batch
                .iter()
                .map(|&i| rng::mix(&[seed, epoch as u64, i as u64]))
                .collect();
            let (loss, grad) = objective.batch_loss_grad(&current, batch, &noise_seeds)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    device,
                    round: published.round,
                    epoch,
                });
            }
            for (i, value) in current.values.iter_mut().enumerate() {
                if !mask.is_frozen(i) {
                    *value -= lr * grad[i];
                }
            }
        }
    }
    Ok(current)
}
