//! The synchronous round loop: freeze-mask computation, delay budgeting,
//! publication, parallel local training, and aggregation.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::aggregate::{aggregate, global_loss};
use super::sgd::local_train;
use crate::act;
use crate::autograd::Tensor;
use crate::edge::{self, DeviceDelay, DeviceProfile};
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, ClassMetrics};
use crate::params::{FreezeMask, ParamVector};
use crate::rng::{self, stream};
use crate::sc::{self, ChannelSpec, SCArchitecture, SCObjective};

/// One simulated device: its data, current model, mask, and radio profile.
#[derive(Debug, Clone)]
pub struct DeviceState {
    pub id: usize,
    pub samples: Vec<Tensor>,
    pub labels: Vec<usize>,
    pub params: ParamVector,
    pub mask: FreezeMask,
    pub profile: DeviceProfile,
}

impl DeviceState {
    /// Number of local samples (the data volume D_n).
    pub fn volume(&self) -> u64 {
        self.samples.len() as u64
    }
}

/// Knobs of one communication round.
#[derive(Debug, Clone)]
pub struct RoundOptions {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub clusters: usize,
    pub d_max: f64,
    pub act_enabled: bool,
    pub chan: ChannelSpec,
    /// Log-normal channel-gain jitter (sigma in log space), if enabled.
    pub jitter_sigma: Option<f64>,
}

/// Mutable state of a federation across rounds.
#[derive(Debug, Clone)]
pub struct FlState {
    pub arch: SCArchitecture,
    pub devices: Vec<DeviceState>,
    pub global: ParamVector,
    pub round: usize,
    pub seed: u64,
}

impl FlState {
    /// Fresh federation: every device starts from the seeded global model.
    pub fn new(
        arch: SCArchitecture,
        data: Vec<(Vec<Tensor>, Vec<usize>, DeviceProfile)>,
        seed: u64,
    ) -> Result<Self> {
        arch.validate()?;
        let global = sc::init_params(&arch, seed)?;
        let n_params = global.len();
        let devices = data
            .into_iter()
            .enumerate()
            .map(|(id, (samples, labels, profile))| {
                if samples.is_empty() || samples.len() != labels.len() {
                    return Err(Error::Contract(format!(
                        "device {id} needs equal non-empty samples/labels"
                    )));
                }
                profile.validate()?;
                Ok(DeviceState {
                    id,
                    samples,
                    labels,
                    params: global.clone(),
                    mask: FreezeMask::all_trainable(n_params),
                    profile,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if devices.is_empty() {
            return Err(Error::Contract("a federation needs devices".into()));
        }
        Ok(Self {
            arch,
            devices,
            global,
            round: 0,
            seed,
        })
    }
}

/// Per-device outcome of one round.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceRoundInfo {
    pub device: usize,
    pub delay: DeviceDelay,
    /// Within the delay budget and trained successfully.
    pub participated: bool,
    pub delay_excluded: bool,
    pub diverged: bool,
    pub zeta: f64,
    pub frozen: usize,
    pub trainable: usize,
}

/// Everything observable about one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub round: usize,
    pub global_loss: f64,
    pub metrics: Option<ClassMetrics>,
    pub devices: Vec<DeviceRoundInfo>,
    /// Max delay over the devices inside the budget.
    pub round_delay: f64,
    /// Bits moved this round: participants x 2 x model bits.
    pub comm_bits: u64,
    pub participants: usize,
}

fn effective_gain(state: &FlState, device: usize, jitter_sigma: Option<f64>) -> Option<f64> {
    jitter_sigma.map(|sigma| {
        let mut rng = rng::chacha(&[
            state.seed,
            stream::JITTER,
            device as u64,
            state.round as u64,
        ]);
        let factor: f64 = Normal::new(0.0, sigma)
            .expect("finite sigma")
            .sample(&mut rng);
        state.devices[device].profile.link_gain * factor.exp()
    })
}

/// Run one synchronous communication round.
///
/// Order of play: compute this round's freeze masks (all-trainable in round
/// zero or with the strategy disabled), price every device's delay, exclude
/// devices over budget, publish the global model to the rest, train them in
/// parallel, aggregate the returned models weighted by data volume, then
/// evaluate the new global model (loss over every device, metrics over the
/// optional eval set). A device whose training diverges is dropped from
/// aggregation just like a late device and rejoins next round.
pub fn run_round(
    state: &mut FlState,
    opts: &RoundOptions,
    eval: Option<(&[Tensor], &[usize])>,
) -> Result<RoundReport> {
    let t = state.round;
    let n_devices = state.devices.len();
    let n_params = state.global.len();

    // Freeze masks. The strategy needs last round's local models, so the
    // very first round trains everything.
    let (masks, zetas) = if opts.act_enabled && t > 0 {
        let views: Vec<act::DeviceView> = state
            .devices
            .iter()
            .map(|d| act::DeviceView {
                volume: d.volume(),
                params: &d.params,
                samples: &d.samples,
                labels: &d.labels,
            })
            .collect();
        let outcome = act::compute_masks(
            &state.arch,
            &state.global,
            &views,
            opts.chan,
            opts.clusters,
            state.seed,
            t,
        )?;
        (outcome.masks, outcome.zetas)
    } else {
        (
            vec![FreezeMask::all_trainable(n_params); n_devices],
            vec![1.0; n_devices],
        )
    };

    // Delay accounting and the participation cut.
    let z_bits = edge::model_bits(&state.global);
    let delays: Vec<DeviceDelay> = state
        .devices
        .iter()
        .enumerate()
        .map(|(n, d)| {
            edge::device_round_delay(
                &d.profile,
                z_bits,
                d.volume(),
                masks[n].trainable_count(),
                opts.epochs,
                effective_gain(state, n, opts.jitter_sigma),
            )
        })
        .collect::<Result<_>>()?;
    let totals: Vec<f64> = delays.iter().map(|d| d.total).collect();
    let (round_delay, eligible) = edge::round_delay(&totals, opts.d_max, t)?;

    // Publish and train the eligible devices, one worker each.
    let mut published = state.global.clone();
    published.round = t;
    let arch = &state.arch;
    let chan = opts.chan;
    let seed = state.seed;
    let outcomes: Vec<Option<std::result::Result<ParamVector, Error>>> = state
        .devices
        .par_iter()
        .enumerate()
        .map(|(n, dev)| {
            if !eligible[n] {
                return None;
            }
            let objective = SCObjective {
                arch,
                samples: &dev.samples,
                labels: &dev.labels,
                chan,
            };
            let train_seed = rng::mix(&[seed, stream::TRAIN, n as u64, t as u64]);
            Some(local_train(
                &objective,
                n,
                &published,
                &masks[n],
                opts.epochs,
                opts.lr,
                opts.batch_size,
                train_seed,
            ))
        })
        .collect();

    let mut trained = vec![false; n_devices];
    let mut diverged = vec![false; n_devices];
    for (n, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            None => {}
            Some(Ok(params)) => {
                state.devices[n].params = params;
                state.devices[n].mask = masks[n].clone();
                trained[n] = true;
            }
            Some(Err(Error::Diverged { .. })) => diverged[n] = true,
            Some(Err(other)) => return Err(other),
        }
    }

    let agg_inputs: Vec<(u64, &ParamVector)> = state
        .devices
        .iter()
        .enumerate()
        .filter(|(n, _)| trained[*n])
        .map(|(_, d)| (d.volume(), &d.params))
        .collect();
    if agg_inputs.is_empty() {
        return Err(Error::EmptyRound { round: t });
    }
    let participants = agg_inputs.len();
    let mut new_global = aggregate(&agg_inputs)?;
    new_global.round = t + 1;

    // Evaluate the fresh global model.
    let device_data: Vec<(&[Tensor], &[usize])> = state
        .devices
        .iter()
        .map(|d| (d.samples.as_slice(), d.labels.as_slice()))
        .collect();
    let loss = global_loss(
        &state.arch,
        &device_data,
        &new_global,
        &opts.chan,
        rng::mix(&[seed, stream::EVAL_LOSS, t as u64]),
    )?;

    let metrics = match eval {
        Some((samples, labels)) if !samples.is_empty() => {
            let predictions: Vec<usize> = samples
                .par_iter()
                .enumerate()
                .map(|(i, x)| {
                    sc::predict(
                        &state.arch,
                        &new_global,
                        x,
                        &opts.chan,
                        rng::mix(&[seed, stream::EVAL_PREDICT, t as u64, i as u64]),
                    )
                    .map(|(class, _)| class)
                })
                .collect::<Result<_>>()?;
            Some(compute_metrics(&predictions, labels, state.arch.classes)?)
        }
        _ => None,
    };

    let devices_info: Vec<DeviceRoundInfo> = (0..n_devices)
        .map(|n| DeviceRoundInfo {
            device: state.devices[n].id,
            delay: delays[n],
            participated: trained[n],
            delay_excluded: !eligible[n],
            diverged: diverged[n],
            zeta: zetas[n],
            frozen: masks[n].frozen_count(),
            trainable: masks[n].trainable_count(),
        })
        .collect();

    state.global = new_global;
    state.round = t + 1;

    Ok(RoundReport {
        round: t,
        global_loss: loss,
        metrics,
        devices: devices_info,
        round_delay,
        comm_bits: participants as u64 * 2 * z_bits,
        participants,
    })
}
