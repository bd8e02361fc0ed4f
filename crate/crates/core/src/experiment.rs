//! The experiment runner: prepares data and devices from a config, drives
//! the round loop, and writes metrics CSV, the final model, and optional
//! explanation heatmaps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::{DatasetSource, ExperimentConfig};
use crate::data::{self, Dataset, SynthSpec};
use crate::edge::{self, DeviceProfile};
use crate::error::{Error, Result};
use crate::esc;
use crate::fl::{run_round, FlState, RoundOptions, RoundReport};
use crate::params::ParamVector;
use crate::sc::{self, ChannelSpec, SCArchitecture};
use crate::{act, rng};

/// Weight of the cumulative delay inside the optimization objective.
pub const DELAY_WEIGHT: f64 = 1e-3;

/// A fully initialized experiment, ready to run rounds.
pub struct Prepared {
    pub arch: SCArchitecture,
    pub state: FlState,
    pub test: Dataset,
    pub volumes: Vec<u64>,
    pub options: RoundOptions,
}

fn device_profile(config: &ExperimentConfig, device: usize) -> DeviceProfile {
    DeviceProfile {
        cpu_hz: ExperimentConfig::per_device(&config.cpu_hz, device),
        channel: device,
        uplink_power_w: config.uplink_power_w,
        downlink_power_w: config.downlink_power_w,
        uplink_bandwidth_hz: config.uplink_bandwidth_hz,
        downlink_bandwidth_hz: config.downlink_bandwidth_hz,
        link_gain: edge::db_to_linear(ExperimentConfig::per_device(
            &config.link_gain_db,
            device,
        )),
        uplink_interference_w: config.uplink_interference_w,
        downlink_interference_w: config.downlink_interference_w,
        noise_psd_w_per_hz: edge::dbm_per_hz_to_w_per_hz(config.noise_psd_dbm),
        cycles_per_param: config.cycles_per_param,
    }
}

/// Resolve volumes, build or load the dataset, split it, and initialize the
/// federation. Directory datasets dictate their own image shape and class
/// count; the synthetic source follows the config.
pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    config.validate()?;
    let volumes = match &config.volumes {
        Some(v) => v.clone(),
        None => data::draw_volumes(
            config.devices,
            config.volume_min,
            config.volume_max,
            config.seed,
        ),
    };
    let needed: u64 = volumes.iter().sum();

    let dataset = match &config.dataset {
        DatasetSource::Synthetic => {
            let pool = data::pool_size_for(needed as usize);
            data::synthesize_fire_like(&SynthSpec {
                image_size: config.image_size,
                count_per_class: pool.div_ceil(2),
                seed: config.seed,
            })?
        }
        DatasetSource::Dir(path) => data::load_dir(path)?,
    };
    let image = dataset.images[0].shape().to_vec();
    let classes = dataset.classes;

    let (shards, test) = data::split_and_partition(&dataset, &volumes, config.seed)?;
    if test.is_empty() {
        return Err(Error::Contract("empty test split".into()));
    }

    let arch = SCArchitecture {
        image: [image[0], image[1], image[2]],
        conv: SCArchitecture::desk_scale(config.image_size, config.classes).conv,
        semantic_dim: config.semantic_dim,
        decoder_hidden: vec![32],
        classes,
        activation_slope: 0.2,
    };
    arch.validate()?;

    let device_data = shards
        .into_iter()
        .enumerate()
        .map(|(n, shard)| (shard.images, shard.labels, device_profile(config, n)))
        .collect();
    let state = FlState::new(arch.clone(), device_data, config.seed)?;
    let options = RoundOptions {
        epochs: config.local_epochs,
        lr: config.lr,
        batch_size: config.batch_size,
        clusters: config.clusters,
        d_max: config.d_max,
        act_enabled: config.act_enabled,
        chan: ChannelSpec::new(config.sc_gain, config.sc_noise_std)?,
        jitter_sigma: config.channel_jitter.then_some(config.jitter_sigma),
    };
    Ok(Prepared {
        arch,
        state,
        test,
        volumes,
        options,
    })
}

/// Results and artifact paths of one run.
pub struct ExperimentOutput {
    pub reports: Vec<RoundReport>,
    /// Rounds that ended with every device excluded.
    pub aborted_rounds: Vec<usize>,
    pub csv_path: PathBuf,
    pub model_path: PathBuf,
    pub heatmap_paths: Vec<PathBuf>,
    pub final_params: ParamVector,
}

/// Render the metrics table. Fixed column set; the leading comment documents
/// the degenerate-precision convention.
pub fn metrics_csv(reports: &[RoundReport], objectives: &[f64]) -> String {
    let mut out = String::from("# pre reported as 0 when no positives are predicted\n");
    out.push_str("round,global_loss,acc,pre,spe,f1,rec,round_delay_s,objective,participants\n");
    for (report, objective) in reports.iter().zip(objectives) {
        let m = report.metrics.expect("runner always evaluates metrics");
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            report.round,
            report.global_loss,
            m.acc,
            m.pre,
            m.spe,
            m.f1,
            m.rec,
            report.round_delay,
            objective,
            report.participants
        );
    }
    out
}

/// Run the configured number of rounds and write all artifacts into
/// `out_dir`: `metrics.csv`, `model.scm`, and (optionally) `heatmaps/`.
///
/// A round in which every device misses the delay budget is logged, skipped,
/// and does not produce a CSV row.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutput> {
    std::fs::create_dir_all(out_dir)?;
    let Prepared {
        arch,
        mut state,
        test,
        volumes: _,
        options,
    } = prepare(config)?;

    let mut reports = Vec::with_capacity(config.rounds);
    let mut objectives = Vec::with_capacity(config.rounds);
    let mut aborted_rounds = Vec::new();
    let mut cumulative_delay = 0.0;
    for _ in 0..config.rounds {
        match run_round(
            &mut state,
            &options,
            Some((&test.images, &test.labels)),
        ) {
            Ok(report) => {
                cumulative_delay += report.round_delay;
                objectives.push(report.global_loss + DELAY_WEIGHT * cumulative_delay);
                reports.push(report);
            }
            Err(Error::EmptyRound { round }) => {
                eprintln!("round {round}: aborted, no device met the delay budget");
                aborted_rounds.push(round);
                state.round += 1;
            }
            Err(other) => return Err(other),
        }
    }

    let csv_path = out_dir.join("metrics.csv");
    std::fs::write(&csv_path, metrics_csv(&reports, &objectives))?;

    let model_path = out_dir.join("model.scm");
    sc::save_model(&model_path, &arch, &state.global)?;

    let mut heatmap_paths = Vec::new();
    if config.esc_export {
        let heatmap_dir = out_dir.join("heatmaps");
        let positives: Vec<usize> = (0..test.len())
            .filter(|&i| test.labels[i] == 1)
            .take(20)
            .collect();
        for idx in positives {
            let explanation =
                esc::explain(&arch, &state.global, &test.images[idx], config.esc_slope)?;
            heatmap_paths.extend(esc::export_heatmaps(
                &explanation,
                &heatmap_dir,
                &format!("test{idx:04}"),
                false,
            )?);
        }
    }

    Ok(ExperimentOutput {
        reports,
        aborted_rounds,
        csv_path,
        model_path,
        heatmap_paths,
        final_params: state.global,
    })
}

/// Test accuracy of a model over a dataset at the given channel, with one
/// derived noise seed per sample.
pub fn test_accuracy(
    arch: &SCArchitecture,
    params: &ParamVector,
    test: &Dataset,
    chan: &ChannelSpec,
    seed: u64,
) -> Result<f64> {
    let mut correct = 0;
    for (i, (x, &label)) in test.images.iter().zip(&test.labels).enumerate() {
        let (predicted, _) = sc::predict(arch, params, x, chan, rng::mix(&[seed, i as u64]))?;
        if predicted == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

/// One row of the static delay analysis table.
#[derive(Debug, Clone)]
pub struct DelayRow {
    pub device: usize,
    pub volume: u64,
    pub zeta: f64,
    pub trainable: usize,
    pub frozen: usize,
    pub uplink_rate: f64,
    pub downlink_rate: f64,
    pub delay: edge::DeviceDelay,
    pub participates: bool,
}

/// Static per-device delay analysis for a config, using the steady-state
/// trainable proportions (everything trainable when the strategy is off)
/// and the config's nominal image size for the parameter count.
pub fn delay_table(config: &ExperimentConfig) -> Result<(Vec<DelayRow>, Option<f64>)> {
    config.validate()?;
    let volumes = match &config.volumes {
        Some(v) => v.clone(),
        None => data::draw_volumes(
            config.devices,
            config.volume_min,
            config.volume_max,
            config.seed,
        ),
    };
    let arch = SCArchitecture {
        image: [1, config.image_size, config.image_size],
        conv: SCArchitecture::desk_scale(config.image_size, config.classes).conv,
        semantic_dim: config.semantic_dim,
        decoder_hidden: vec![32],
        classes: config.classes,
        activation_slope: 0.2,
    };
    arch.validate()?;
    let total_params = arch.manifest().total();
    let z_bits = 32 * total_params as u64;

    let zetas = if config.act_enabled {
        act::proportions(&volumes, config.clusters, config.seed)?.1
    } else {
        vec![1.0; config.devices]
    };

    let mut rows = Vec::with_capacity(config.devices);
    for n in 0..config.devices {
        let profile = device_profile(config, n);
        let frozen = act::frozen_count(total_params, zetas[n]);
        let trainable = total_params - frozen;
        let delay = edge::device_round_delay(
            &profile,
            z_bits,
            volumes[n],
            trainable,
            config.local_epochs,
            None,
        )?;
        rows.push(DelayRow {
            device: n,
            volume: volumes[n],
            zeta: zetas[n],
            trainable,
            frozen,
            uplink_rate: edge::uplink_rate(&profile),
            downlink_rate: edge::downlink_rate(&profile),
            delay,
            participates: delay.total <= config.d_max,
        });
    }
    let round = rows
        .iter()
        .filter(|r| r.participates)
        .map(|r| r.delay.total)
        .fold(f64::NEG_INFINITY, f64::max);
    let round = (round > f64::NEG_INFINITY).then_some(round);
    Ok((rows, round))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            rounds: 2,
            local_epochs: 1,
            devices: 3,
            clusters: 2,
            volume_min: 8,
            volume_max: 20,
            image_size: 8,
            semantic_dim: 8,
            batch_size: 8,
            seed: 77,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn prepare_builds_matching_shards_and_testset() {
        let prepared = prepare(&small_config()).unwrap();
        assert_eq!(prepared.state.devices.len(), 3);
        for (dev, &v) in prepared.state.devices.iter().zip(&prepared.volumes) {
            assert_eq!(dev.volume(), v);
        }
        assert!(!prepared.test.is_empty());
    }

    #[test]
    fn run_experiment_writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_experiment(&small_config(), dir.path()).unwrap();
        assert_eq!(out.reports.len(), 2);
        assert!(out.csv_path.exists());
        assert!(out.model_path.exists());

        let csv = std::fs::read_to_string(&out.csv_path).unwrap();
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with('#'));
        assert_eq!(
            lines.next().unwrap(),
            "round,global_loss,acc,pre,spe,f1,rec,round_delay_s,objective,participants"
        );
        assert_eq!(lines.count(), 2);

        // Metrics live in [0, 1].
        for line in csv.lines().skip(2) {
            let cols: Vec<f64> = line
                .split(',')
                .map(|c| c.parse::<f64>().unwrap())
                .collect();
            assert_eq!(cols.len(), 10);
            for metric in &cols[2..7] {
                assert!((0.0..=1.0).contains(metric), "metric {metric} out of range");
            }
            assert!(cols[7] >= 0.0);
        }
    }

    #[test]
    fn esc_export_writes_heatmaps() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = small_config();
        config.rounds = 1;
        config.esc_export = true;
        let out = run_experiment(&config, dir.path()).unwrap();
        assert!(!out.heatmap_paths.is_empty());
        assert!(out.heatmap_paths.iter().all(|p| p.exists()));
        // semantic_dim per-feature maps plus the mean map per image.
        assert_eq!(out.heatmap_paths.len() % (config.semantic_dim + 1), 0);
    }

    #[test]
    fn identical_configs_produce_identical_bytes() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let config = small_config();
        let a = run_experiment(&config, dir_a.path()).unwrap();
        let b = run_experiment(&config, dir_b.path()).unwrap();
        assert_eq!(
            std::fs::read(&a.csv_path).unwrap(),
            std::fs::read(&b.csv_path).unwrap()
        );
        assert_eq!(
            std::fs::read(&a.model_path).unwrap(),
            std::fs::read(&b.model_path).unwrap()
        );
    }

    #[test]
    fn aborted_rounds_are_logged_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = small_config();
        config.d_max = 1e-9; // nobody can make this budget
        let out = run_experiment(&config, dir.path()).unwrap();
        assert!(out.reports.is_empty());
        assert_eq!(out.aborted_rounds, vec![0, 1]);
        let csv = std::fs::read_to_string(&out.csv_path).unwrap();
        assert_eq!(csv.lines().count(), 2); // comment + header only
        assert!(out.model_path.exists());
    }

    #[test]
    fn default_scale_prepare_matches_drawn_volumes() {
        let config = ExperimentConfig::default();
        let prepared = prepare(&config).unwrap();
        assert_eq!(prepared.state.devices.len(), 10);
        assert!(prepared
            .volumes
            .iter()
            .all(|&v| (config.volume_min..=config.volume_max).contains(&v)));
        for (dev, &v) in prepared.state.devices.iter().zip(&prepared.volumes) {
            assert_eq!(dev.volume(), v);
        }
        // The 20% test share of the synthesized pool.
        let total: u64 = prepared.volumes.iter().sum();
        let pool = crate::data::pool_size_for(total as usize);
        assert!(prepared.test.len() >= pool / 5);
    }

    #[test]
    fn delay_table_covers_every_device() {
        let (rows, round) = delay_table(&small_config()).unwrap();
        assert_eq!(rows.len(), 3);
        let max = rows
            .iter()
            .map(|r| r.delay.total)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(round, Some(max));
        for row in &rows {
            assert!(row.zeta > 0.0 && row.zeta <= 1.0);
            assert_eq!(row.trainable + row.frozen, rows[0].trainable + rows[0].frozen);
            assert!(row.delay.total > 0.0);
        }
    }
}
