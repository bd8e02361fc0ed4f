//! Experiment configuration: a flat `key = value` text format with `#`
//! comments. Unknown keys are hard errors; missing keys fall back to the
//! desk-scale defaults.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Where the training data comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetSource {
    /// Generated fire-like synthetic images.
    Synthetic,
    /// Directory of class-labeled subdirectories of PGM images.
    Dir(PathBuf),
}

/// Every knob of one experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Communication rounds T.
    pub rounds: usize,
    /// Local epochs G per round.
    pub local_epochs: usize,
    /// Device count N.
    pub devices: usize,
    /// Cluster count C for the freezing strategy.
    pub clusters: usize,
    /// Per-round delay budget in seconds; devices above it sit the round out.
    pub d_max: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Square input image side.
    pub image_size: usize,
    pub classes: usize,
    /// Length of the transmitted semantic vector.
    pub semantic_dim: usize,
    /// Data volumes are drawn log-uniformly from this range...
    pub volume_min: u64,
    pub volume_max: u64,
    /// ...unless an explicit per-device table is given.
    pub volumes: Option<Vec<u64>>,
    pub act_enabled: bool,
    pub esc_export: bool,
    pub channel_jitter: bool,
    /// Log-space sigma of the per-round channel-gain jitter.
    pub jitter_sigma: f64,
    /// Negative slope of the explanation heatmap rectifier.
    pub esc_slope: f64,
    /// Semantic channel gain and noise.
    pub sc_gain: f64,
    pub sc_noise_std: f64,
    /// Radio link gain in dB, one entry or one per device.
    pub link_gain_db: Vec<f64>,
    pub noise_psd_dbm: f64,
    pub uplink_power_w: f64,
    pub downlink_power_w: f64,
    pub uplink_bandwidth_hz: f64,
    pub downlink_bandwidth_hz: f64,
    pub uplink_interference_w: f64,
    pub downlink_interference_w: f64,
    /// CPU frequency in Hz, one entry or one per device.
    pub cpu_hz: Vec<f64>,
    /// CPU cycles per trainable parameter per sample.
    pub cycles_per_param: f64,
    pub dataset: DatasetSource,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            rounds: 30,
            local_epochs: 2,
            devices: 10,
            clusters: 3,
            d_max: f64::INFINITY,
            lr: 0.05,
            batch_size: 16,
            seed: 42,
            image_size: 16,
            classes: 2,
            semantic_dim: 16,
            volume_min: 50,
            volume_max: 500,
            volumes: None,
            act_enabled: true,
            esc_export: false,
            channel_jitter: false,
            jitter_sigma: 0.1,
            esc_slope: 0.2,
            sc_gain: 1.0,
            sc_noise_std: 0.1,
            link_gain_db: vec![-50.0],
            noise_psd_dbm: -174.0,
            uplink_power_w: 0.01,
            downlink_power_w: 1.0,
            uplink_bandwidth_hz: 1e6,
            downlink_bandwidth_hz: 2e7,
            uplink_interference_w: 0.0,
            downlink_interference_w: 0.0,
            cpu_hz: vec![2e9],
            cycles_per_param: 10.0,
            dataset: DatasetSource::Synthetic,
        }
    }
}

fn config_err(line: usize, reason: impl Into<String>) -> Error {
    Error::Config {
        line,
        reason: reason.into(),
    }
}

/// Split a config text into (line number, key, value) triples.
pub(crate) fn parse_key_values(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(config_err(line_no, format!("expected `key = value`, got `{line}`")));
        };
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            return Err(config_err(line_no, "empty key or value"));
        }
        out.push((line_no, key.to_string(), value.to_string()));
    }
    Ok(out)
}

fn parse_f64(line: usize, key: &str, value: &str) -> Result<f64> {
    match value {
        "inf" | "infinity" => Ok(f64::INFINITY),
        _ => value
            .parse()
            .map_err(|_| config_err(line, format!("{key}: not a number: `{value}`"))),
    }
}

fn parse_usize(line: usize, key: &str, value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| config_err(line, format!("{key}: not a count: `{value}`")))
}

fn parse_u64(line: usize, key: &str, value: &str) -> Result<u64> {
    value
        .parse()
        .map_err(|_| config_err(line, format!("{key}: not an integer: `{value}`")))
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(config_err(line, format!("{key}: expected true/false, got `{value}`"))),
    }
}

fn parse_f64_list(line: usize, key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|v| parse_f64(line, key, v.trim()))
        .collect()
}

fn parse_u64_list(line: usize, key: &str, value: &str) -> Result<Vec<u64>> {
    value
        .split(',')
        .map(|v| parse_u64(line, key, v.trim()))
        .collect()
}

impl ExperimentConfig {
    /// Parse a config file; missing keys keep their defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str_contents(&text)
    }

    /// Parse config text; missing keys keep their defaults.
    pub fn from_str_contents(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (line, key, value) in parse_key_values(text)? {
            match key.as_str() {
                "rounds" => cfg.rounds = parse_usize(line, &key, &value)?,
                "local_epochs" => cfg.local_epochs = parse_usize(line, &key, &value)?,
                "devices" => cfg.devices = parse_usize(line, &key, &value)?,
                "clusters" => cfg.clusters = parse_usize(line, &key, &value)?,
                "d_max" => cfg.d_max = parse_f64(line, &key, &value)?,
                "lr" => cfg.lr = parse_f64(line, &key, &value)?,
                "batch_size" => cfg.batch_size = parse_usize(line, &key, &value)?,
                "seed" => cfg.seed = parse_u64(line, &key, &value)?,
                "image_size" => cfg.image_size = parse_usize(line, &key, &value)?,
                "classes" => cfg.classes = parse_usize(line, &key, &value)?,
                "semantic_dim" => cfg.semantic_dim = parse_usize(line, &key, &value)?,
                "volume_min" => cfg.volume_min = parse_u64(line, &key, &value)?,
                "volume_max" => cfg.volume_max = parse_u64(line, &key, &value)?,
                "volumes" => cfg.volumes = Some(parse_u64_list(line, &key, &value)?),
                "act_enabled" => cfg.act_enabled = parse_bool(line, &key, &value)?,
                "esc_export" => cfg.esc_export = parse_bool(line, &key, &value)?,
                "channel_jitter" => cfg.channel_jitter = parse_bool(line, &key, &value)?,
                "jitter_sigma" => cfg.jitter_sigma = parse_f64(line, &key, &value)?,
                "esc_slope" => cfg.esc_slope = parse_f64(line, &key, &value)?,
                "sc_gain" => cfg.sc_gain = parse_f64(line, &key, &value)?,
                "sc_noise_std" => cfg.sc_noise_std = parse_f64(line, &key, &value)?,
                "link_gain_db" => cfg.link_gain_db = parse_f64_list(line, &key, &value)?,
                "noise_psd_dbm" => cfg.noise_psd_dbm = parse_f64(line, &key, &value)?,
                "uplink_power_w" => cfg.uplink_power_w = parse_f64(line, &key, &value)?,
                "downlink_power_w" => cfg.downlink_power_w = parse_f64(line, &key, &value)?,
                "uplink_bandwidth_hz" => {
                    cfg.uplink_bandwidth_hz = parse_f64(line, &key, &value)?
                }
                "downlink_bandwidth_hz" => {
                    cfg.downlink_bandwidth_hz = parse_f64(line, &key, &value)?
                }
                "uplink_interference_w" => {
                    cfg.uplink_interference_w = parse_f64(line, &key, &value)?
                }
                "downlink_interference_w" => {
                    cfg.downlink_interference_w = parse_f64(line, &key, &value)?
                }
                "cpu_hz" => cfg.cpu_hz = parse_f64_list(line, &key, &value)?,
                "cycles_per_param" => cfg.cycles_per_param = parse_f64(line, &key, &value)?,
                "dataset" => {
                    cfg.dataset = if value == "synthetic" {
                        DatasetSource::Synthetic
                    } else {
                        DatasetSource::Dir(PathBuf::from(value))
                    }
                }
                other => return Err(config_err(line, format!("unknown key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive_counts = [
            ("rounds", self.rounds),
            ("local_epochs", self.local_epochs),
            ("devices", self.devices),
            ("clusters", self.clusters),
            ("batch_size", self.batch_size),
            ("image_size", self.image_size),
            ("semantic_dim", self.semantic_dim),
        ];
        for (name, v) in positive_counts {
            if v == 0 {
                return Err(Error::InvalidParameter(format!("{name} must be positive")));
            }
        }
        if self.classes < 2 {
            return Err(Error::InvalidParameter("classes must be >= 2".into()));
        }
        if self.clusters > self.devices {
            return Err(Error::InvalidParameter(format!(
                "clusters {} exceeds devices {}",
                self.clusters, self.devices
            )));
        }
        if !(self.lr > 0.0) {
            return Err(Error::InvalidParameter("lr must be positive".into()));
        }
        if !(self.d_max > 0.0) {
            return Err(Error::InvalidParameter("d_max must be positive".into()));
        }
        if self.volume_min == 0 || self.volume_min > self.volume_max {
            return Err(Error::InvalidParameter(format!(
                "volume range [{}, {}] is invalid",
                self.volume_min, self.volume_max
            )));
        }
        if let Some(v) = &self.volumes {
            if v.len() != self.devices {
                return Err(Error::InvalidParameter(format!(
                    "volumes table has {} entries for {} devices",
                    v.len(),
                    self.devices
                )));
            }
            if v.contains(&0) {
                return Err(Error::InvalidParameter("zero volume in table".into()));
            }
        }
        if !(self.esc_slope > 0.0 && self.esc_slope < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "esc_slope must lie in (0,1), got {}",
                self.esc_slope
            )));
        }
        if !(self.jitter_sigma >= 0.0) {
            return Err(Error::InvalidParameter("jitter_sigma must be >= 0".into()));
        }
        for (name, list) in [("link_gain_db", &self.link_gain_db), ("cpu_hz", &self.cpu_hz)] {
            if list.len() != 1 && list.len() != self.devices {
                return Err(Error::InvalidParameter(format!(
                    "{name} wants 1 or {} entries, got {}",
                    self.devices,
                    list.len()
                )));
            }
        }
        Ok(())
    }

    /// Per-device entry of a 1-or-N table.
    pub fn per_device(list: &[f64], device: usize) -> f64 {
        if list.len() == 1 {
            list[0]
        } else {
            list[device]
        }
    }
}
