//! Weighted aggregation, loss evaluation, and model publication.

use rayon::prelude::*;

use crate::autograd::Tensor;
use crate::error::{Error, Result};
use crate::params::{FreezeMask, ParamVector};
use crate::rng;
use crate::sc::{self, ChannelSpec, SCArchitecture};

/// Data-volume-weighted mean of local models: (1 / sum D_n) * sum D_n * w_n.
pub fn aggregate(models: &[(u64, &ParamVector)]) -> Result<ParamVector> {
    let Some(((_, first), rest)) = models.split_first() else {
        return Err(Error::Contract("aggregate over zero models".into()));
    };
    for (_, m) in rest {
        if m.manifest != first.manifest {
            return Err(Error::Contract(
                "aggregate over models with different manifests".into(),
            ));
        }
    }
    let total: u64 = models.iter().map(|(d, _)| d).sum();
    if total == 0 {
        return Err(Error::Contract("aggregate with zero total volume".into()));
    }
    let mut values = vec![0.0; first.len()];
    for (volume, model) in models {
        let w = *volume as f64;
        for (acc, &v) in values.iter_mut().zip(&model.values) {
            *acc += w * v;
        }
    }
    let inv = 1.0 / total as f64;
    for v in &mut values {
        *v *= inv;
    }
    ParamVector::new(first.manifest.clone(), values, first.round)
}

/// Mean per-sample loss of one device's dataset at the given parameters.
/// Sample `i` draws its channel noise from `mix([seed, i])`.
pub fn local_loss(
    arch: &SCArchitecture,
    samples: &[Tensor],
    labels: &[usize],
    params: &ParamVector,
    chan: &ChannelSpec,
    seed: u64,
) -> Result<f64> {
    if samples.is_empty() || samples.len() != labels.len() {
        return Err(Error::Contract(format!(
            "need equal non-empty samples/labels, got {} and {}",
            samples.len(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (i, (x, &label)) in samples.iter().zip(labels).enumerate() {
        total += sc::forward_loss(arch, params, x, label, chan, rng::mix(&[seed, i as u64]))?;
    }
    Ok(total / samples.len() as f64)
}

/// Unweighted mean of the devices' local losses at a shared model.
pub fn global_loss(
    arch: &SCArchitecture,
    devices: &[(&[Tensor], &[usize])],
    params: &ParamVector,
    chan: &ChannelSpec,
    seed: u64,
) -> Result<f64> {
    if devices.is_empty() {
        return Err(Error::Contract("global loss over zero devices".into()));
    }
    let losses: Vec<f64> = devices
        .par_iter()
        .enumerate()
        .map(|(n, (samples, labels))| {
            local_loss(
                arch,
                samples,
                labels,
                params,
                chan,
                rng::mix(&[seed, n as u64]),
            )
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / devices.len() as f64)
}

/// One device's copy of the global model: shared values, its own mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PublishedModel {
    pub params: ParamVector,
    pub mask: FreezeMask,
}

/// Pair the global model with each device's freeze mask. Values are shared
/// verbatim; only the mask differs per device.
pub fn publish(global: &ParamVector, masks: &[FreezeMask]) -> Result<Vec<PublishedModel>> {
    for mask in masks {
        if mask.len() != global.len() {
            return Err(Error::Contract(format!(
                "mask length {} != model length {}",
                mask.len(),
                global.len()
            )));
        }
    }
    Ok(masks
        .iter()
        .map(|mask| PublishedModel {
            params: global.clone(),
            mask: mask.clone(),
        })
        .collect())
}
