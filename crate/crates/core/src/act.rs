//! Adaptive client training: cluster devices by data volume, derive each
//! device's trainable proportion from its cluster mean, score parameter
//! importance with the diagonal empirical Fisher information of the local
//! model, and freeze the least important fraction.

use rayon::prelude::*;

use crate::autograd::Tensor;
use crate::error::{Error, Result};
use crate::fl::LocalObjective;
use crate::params::{FreezeMask, ParamVector};
use crate::rng::{self, stream};
use crate::sc::{ChannelSpec, SCArchitecture, SCObjective};

/// A k-medoids partition of the devices' data volumes.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Cluster index per device, aligned with the input volumes.
    pub assignment: Vec<usize>,
    /// Medoid volume of each cluster, ascending.
    pub medoids: Vec<u64>,
    /// Sum of squared distances to the assigned medoids.
    pub objective: f64,
}

impl Clustering {
    /// Volumes belonging to one cluster.
    pub fn members(&self, volumes: &[u64], cluster: usize) -> Vec<u64> {
        volumes
            .iter()
            .zip(&self.assignment)
            .filter(|(_, &c)| c == cluster)
            .map(|(&v, _)| v)
            .collect()
    }
}

fn dist(a: u64, b: u64) -> f64 {
    let d = a.abs_diff(b) as f64;
    d * d
}

/// Objective of a medoid index set: each point pays the squared distance to
/// its nearest medoid.
fn psi(volumes: &[u64], medoids: &[usize]) -> f64 {
    volumes
        .iter()
        .map(|&v| {
            medoids
                .iter()
                .map(|&m| dist(v, volumes[m]))
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

fn swap_descent(volumes: &[u64], medoids: &mut [usize]) -> f64 {
    let mut current = psi(volumes, medoids);
    loop {
        let mut best = current;
        let mut best_swap = None;
        for pos in 0..medoids.len() {
            for candidate in 0..volumes.len() {
                if medoids.contains(&candidate) {
                    continue;
                }
                let original = medoids[pos];
                medoids[pos] = candidate;
                let value = psi(volumes, medoids);
                medoids[pos] = original;
                if value < best {
                    best = value;
                    best_swap = Some((pos, candidate));
                }
            }
        }
        match best_swap {
            Some((pos, candidate)) => {
                medoids[pos] = candidate;
                current = best;
            }
            None => return current,
        }
    }
}

/// PAM-style k-medoids over scalar data volumes: seeded random medoid
/// initialization plus best-improvement swap descent, restarted a few times
/// and keeping the best local optimum. Deterministic given the seed.
pub fn cluster_devices(volumes: &[u64], clusters: usize, seed: u64) -> Result<Clustering> {
    let n = volumes.len();
    if n == 0 {
        return Err(Error::Contract("no devices to cluster".into()));
    }
    if clusters == 0 || clusters > n {
        return Err(Error::InvalidParameter(format!(
            "cluster count {clusters} must lie in [1, {n}]"
        )));
    }

    let mut rng = rng::chacha(&[seed, stream::CLUSTER]);
    let restarts = 12;
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..restarts {
        let mut medoids = rand::seq::index::sample(&mut rng, n, clusters).into_vec();
        medoids.sort_unstable();
        let value = swap_descent(volumes, &mut medoids);
        if best.as_ref().is_none_or(|(b, _)| value < *b) {
            best = Some((value, medoids));
        }
    }
    let (objective, mut medoid_idxs) = best.expect("at least one restart");

    // Canonical form: medoids ascending by volume, points assigned to the
    // nearest medoid with ties going to the lowest cluster index.
    medoid_idxs.sort_by_key(|&i| (volumes[i], i));
    let medoids: Vec<u64> = medoid_idxs.iter().map(|&i| volumes[i]).collect();
    let assignment: Vec<usize> = volumes
        .iter()
        .map(|&v| {
            let mut best_c = 0;
            for (c, &m) in medoids.iter().enumerate() {
                if dist(v, m) < dist(v, medoids[best_c]) {
                    best_c = c;
                }
            }
            best_c
        })
        .collect();
    Ok(Clustering {
        assignment,
        medoids,
        objective,
    })
}

/// Trainable proportion of a cluster: mean member volume over the global
/// maximum volume. Always in (0, 1] when volumes are positive.
pub fn compute_proportion(cluster_volumes: &[u64], d_max: u64) -> Result<f64> {
    if cluster_volumes.is_empty() {
        return Err(Error::Contract("proportion of an empty cluster".into()));
    }
    if d_max == 0 {
        return Err(Error::Contract("max data volume is zero".into()));
    }
    let mean = cluster_volumes.iter().sum::<u64>() as f64 / cluster_volumes.len() as f64;
    Ok(mean / d_max as f64)
}

/// Clustering plus per-device trainable proportions.
pub fn proportions(
    volumes: &[u64],
    clusters: usize,
    seed: u64,
) -> Result<(Clustering, Vec<f64>)> {
    let clustering = cluster_devices(volumes, clusters, seed)?;
    let d_max = *volumes.iter().max().expect("non-empty");
    let mut zetas = Vec::with_capacity(volumes.len());
    for device in 0..volumes.len() {
        let members = clustering.members(volumes, clustering.assignment[device]);
        zetas.push(compute_proportion(&members, d_max)?);
    }
    Ok((clustering, zetas))
}

/// Diagonal empirical Fisher information: the mean squared per-sample loss
/// gradient, evaluated at `params` with one noise seed per sample.
pub fn empirical_fisher<O: LocalObjective + ?Sized>(
    objective: &O,
    params: &ParamVector,
    noise_seeds: &[u64],
) -> Result<Vec<f64>> {
    let n = objective.num_samples();
    if n == 0 {
        return Err(Error::Contract("fisher over an empty dataset".into()));
    }
    if noise_seeds.len() != n {
        return Err(Error::Contract(format!(
            "need {n} noise seeds, got {}",
            noise_seeds.len()
        )));
    }
    objective.squared_grad_mean(params, noise_seeds)
}

/// Per-parameter importance of the global model relative to a local one:
/// elementwise (w_g - w_n)^2 * F. The quadratic form with a diagonal matrix
/// reduces to exactly this.
pub fn importance(w_g: &[f64], w_n: &[f64], fisher: &[f64]) -> Result<Vec<f64>> {
    if w_g.len() != w_n.len() || w_g.len() != fisher.len() {
        return Err(Error::Contract(format!(
            "importance length mismatch: {} vs {} vs {}",
            w_g.len(),
            w_n.len(),
            fisher.len()
        )));
    }
    Ok(w_g
        .iter()
        .zip(w_n)
        .zip(fisher)
        .map(|((&g, &n), &f)| {
            let d = g - n;
            d * d * f
        })
        .collect())
}

/// Number of entries to freeze for a trainable proportion `zeta`:
/// round-half-up of (1 - zeta) * P.
pub fn frozen_count(total_params: usize, zeta: f64) -> usize {
    ((1.0 - zeta) * total_params as f64).round() as usize
}

/// Freeze exactly the `round((1-zeta) * P)` least important entries; ties
/// break towards the lowest index.
pub fn select_and_freeze(importance: &[f64], zeta: f64) -> Result<FreezeMask> {
    if !(zeta > 0.0 && zeta <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "trainable proportion must lie in (0, 1], got {zeta}"
        )));
    }
    let count = frozen_count(importance.len(), zeta);
    let mut order: Vec<usize> = (0..importance.len()).collect();
    // Stable sort keeps index order on ties.
    order.sort_by(|&a, &b| importance[a].total_cmp(&importance[b]));
    let mut bits = vec![false; importance.len()];
    for &idx in order.iter().take(count) {
        bits[idx] = true;
    }
    Ok(FreezeMask::from_bits(bits))
}

/// Diagnostic for the quadratic reading of the importance score: on a
/// diagonal quadratic loss with curvature `h_diag`, returns the importance
/// value and the exact loss change, which is half of it.
pub fn hessian_consistency_check(w_g: &[f64], w_n: &[f64], h_diag: &[f64]) -> (f64, f64) {
    let mut imp = 0.0;
    let mut loss_change = 0.0;
    for ((&g, &n), &h) in w_g.iter().zip(w_n).zip(h_diag) {
        let d = g - n;
        imp += d * d * h;
        loss_change += 0.5 * h * d * d;
    }
    (imp, loss_change)
}

/// Everything the engine needs from one device to compute its mask.
pub struct DeviceView<'a> {
    pub volume: u64,
    pub params: &'a ParamVector,
    pub samples: &'a [Tensor],
    pub labels: &'a [usize],
}

/// Outcome of the strategy for one round.
pub struct ActOutcome {
    pub masks: Vec<FreezeMask>,
    pub zetas: Vec<f64>,
    pub clustering: Clustering,
}

/// Full strategy: cluster, derive proportions, score importance from each
/// device's Fisher diagonal, emit freeze masks. Fisher evaluation is
/// per-device independent and runs in parallel.
pub fn compute_masks(
    arch: &SCArchitecture,
    global: &ParamVector,
    devices: &[DeviceView],
    chan: ChannelSpec,
    clusters: usize,
    seed: u64,
    round: usize,
) -> Result<ActOutcome> {
    let volumes: Vec<u64> = devices.iter().map(|d| d.volume).collect();
    let (clustering, zetas) = proportions(&volumes, clusters, seed)?;

    let masks: Vec<FreezeMask> = devices
        .par_iter()
        .enumerate()
        .map(|(n, view)| {
            // Nothing to freeze at this proportion; the importance ranking
            // cannot change an empty selection, so skip the Fisher pass.
            if frozen_count(global.len(), zetas[n]) == 0 {
                return Ok(FreezeMask::all_trainable(global.len()));
            }
            let objective = SCObjective {
                arch,
                samples: view.samples,
                labels: view.labels,
                chan,
            };
            let seeds: Vec<u64> = (0..view.samples.len())
                .map(|i| rng::mix(&[seed, stream::FISHER, n as u64, round as u64, i as u64]))
                .collect();
            let fisher = empirical_fisher(&objective, view.params, &seeds)?;
            let imp = importance(&global.values, &view.params.values, &fisher)?;
            select_and_freeze(&imp, zetas[n])
        })
        .collect::<Result<_>>()?;

    Ok(ActOutcome {
        masks,
        zetas,
        clustering,
    })
}
