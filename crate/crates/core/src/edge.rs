//! Wireless transmission and computation delay models.
//!
//! Links are Shannon-capacity channels; a device's round delay is the sum of
//! uploading the model, downloading it, and local training compute. Devices
//! whose delay exceeds the round budget sit the round out, and the round
//! delay is the maximum over the devices that stay in.

use crate::error::{Error, Result};
use crate::params::ParamVector;

/// Radio and compute characteristics of one device.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceProfile {
    /// CPU frequency in Hz.
    pub cpu_hz: f64,
    /// Assigned channel index (bookkeeping only; no cross-channel model).
    pub channel: usize,
    /// Transmit power of the device (uplink), watts.
    pub uplink_power_w: f64,
    /// Transmit power of the edge server (downlink), watts.
    pub downlink_power_w: f64,
    pub uplink_bandwidth_hz: f64,
    pub downlink_bandwidth_hz: f64,
    /// Linear channel power gain between device and server.
    pub link_gain: f64,
    pub uplink_interference_w: f64,
    pub downlink_interference_w: f64,
    /// Noise power spectral density, watts/Hz.
    pub noise_psd_w_per_hz: f64,
    /// CPU cycles per trainable parameter per sample.
    pub cycles_per_param: f64,
}

impl DeviceProfile {
    pub fn validate(&self) -> Result<()> {
        let positives = [
            ("cpu_hz", self.cpu_hz),
            ("uplink_power_w", self.uplink_power_w),
            ("downlink_power_w", self.downlink_power_w),
            ("uplink_bandwidth_hz", self.uplink_bandwidth_hz),
            ("downlink_bandwidth_hz", self.downlink_bandwidth_hz),
            ("link_gain", self.link_gain),
            ("noise_psd_w_per_hz", self.noise_psd_w_per_hz),
            ("cycles_per_param", self.cycles_per_param),
        ];
        for (name, v) in positives {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("uplink_interference_w", self.uplink_interference_w),
            ("downlink_interference_w", self.downlink_interference_w),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be non-negative and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-device delay decomposition for one round, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceDelay {
    pub up: f64,
    pub down: f64,
    pub local: f64,
    pub total: f64,
}

/// 10^(dB/10).
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// dBm/Hz power spectral density to watts/Hz.
pub fn dbm_per_hz_to_w_per_hz(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

/// Shannon rate B * log2(1 + P*h / (I + psd*B)), bits/s. Noise power is the
/// spectral density integrated over the band.
fn shannon_rate(bandwidth: f64, power: f64, gain: f64, interference: f64, noise_psd: f64) -> f64 {
    let snr = power * gain / (interference + noise_psd * bandwidth);
    bandwidth * (1.0 + snr).log2()
}

/// Uplink data rate of a device, bits/s.
pub fn uplink_rate(p: &DeviceProfile) -> f64 {
    shannon_rate(
        p.uplink_bandwidth_hz,
        p.uplink_power_w,
        p.link_gain,
        p.uplink_interference_w,
        p.noise_psd_w_per_hz,
    )
}

/// Downlink data rate towards a device, bits/s.
pub fn downlink_rate(p: &DeviceProfile) -> f64 {
    shannon_rate(
        p.downlink_bandwidth_hz,
        p.downlink_power_w,
        p.link_gain,
        p.downlink_interference_w,
        p.noise_psd_w_per_hz,
    )
}

/// Bits needed to transmit a model: 32 per parameter. Freezing does not
/// shrink the payload; the full model travels every round.
pub fn model_bits(params: &ParamVector) -> u64 {
    32 * params.len() as u64
}

/// Upload and download delays for a payload of `z_bits`. A zero rate maps to
/// an infinite delay, which the round budget then excludes.
pub fn transmission_delays(z_bits: u64, up_rate: f64, down_rate: f64) -> (f64, f64) {
    let delay = |rate: f64| {
        if rate > 0.0 {
            z_bits as f64 / rate
        } else {
            f64::INFINITY
        }
    };
    (delay(up_rate), delay(down_rate))
}

/// Local training delay: samples * (cycles/param * trainable params) * epochs
/// / cpu_hz. Frozen parameters cost nothing.
pub fn compute_delay(
    volume: u64,
    trainable_params: usize,
    cycles_per_param: f64,
    epochs: usize,
    cpu_hz: f64,
) -> Result<f64> {
    if !(cpu_hz > 0.0) {
        return Err(Error::Contract(format!(
            "cpu frequency must be positive, got {cpu_hz}"
        )));
    }
    let work = cycles_per_param * trainable_params as f64;
    Ok(volume as f64 * work * epochs as f64 / cpu_hz)
}

/// All three delay components for one device in one round.
pub fn device_round_delay(
    profile: &DeviceProfile,
    z_bits: u64,
    volume: u64,
    trainable_params: usize,
    epochs: usize,
    gain_override: Option<f64>,
) -> Result<DeviceDelay> {
    let mut p = profile.clone();
    if let Some(g) = gain_override {
        p.link_gain = g;
    }
    let (up, down) = transmission_delays(z_bits, uplink_rate(&p), downlink_rate(&p));
    let local = compute_delay(
        volume,
        trainable_params,
        p.cycles_per_param,
        epochs,
        p.cpu_hz,
    )?;
    Ok(DeviceDelay {
        up,
        down,
        local,
        total: up + down + local,
    })
}

/// Round delay and participation flags: a device participates iff its delay
/// fits the budget, and the round takes as long as its slowest participant.
pub fn round_delay(delays: &[f64], d_max: f64, round: usize) -> Result<(f64, Vec<bool>)> {
    if delays.is_empty() {
        return Err(Error::Contract("round_delay over zero devices".into()));
    }
    let flags: Vec<bool> = delays.iter().map(|&d| d <= d_max).collect();
    let mut slowest = f64::NEG_INFINITY;
    for (&d, &ok) in delays.iter().zip(&flags) {
        if ok && d > slowest {
            slowest = d;
        }
    }
    if slowest == f64::NEG_INFINITY {
        return Err(Error::EmptyRound { round });
    }
    Ok((slowest, flags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{LayerSpec, Manifest, ParamVector};

    /// Radio settings used by the delay studies: 0.01 W / 1 W powers,
    /// 1 MHz / 20 MHz bands, -50 dB gain, -174 dBm/Hz noise floor.
    pub(crate) fn reference_profile() -> DeviceProfile {
        DeviceProfile {
            cpu_hz: 2e9,
            channel: 0,
            uplink_power_w: 0.01,
            downlink_power_w: 1.0,
            uplink_bandwidth_hz: 1e6,
            downlink_bandwidth_hz: 2e7,
            link_gain: db_to_linear(-50.0),
            uplink_interference_w: 0.0,
            downlink_interference_w: 0.0,
            noise_psd_w_per_hz: dbm_per_hz_to_w_per_hz(-174.0),
            cycles_per_param: 10.0,
        }
    }

    // Hand-derived Shannon rates for the reference profile. With signal
    // 0.01 W * 1e-5 = 1e-7 W and noise 10^-20.4 W/Hz * 1e6 Hz, the uplink
    // SNR is exactly 10^7.4; the downlink SNR is 1e-5 / (10^-20.4 * 2e7).
    // Values were evaluated independently at 40-digit precision.
    const UPLINK_RATE_ORACLE: f64 = 24_582_267.959_601_205;
    const DOWNLINK_RATE_ORACLE: f64 = 538_083_920.170_815_8;

    #[test]
    fn uplink_rate_matches_hand_derivation() {
        let rate = uplink_rate(&reference_profile());
        assert!(
            (rate - UPLINK_RATE_ORACLE).abs() / UPLINK_RATE_ORACLE < 1e-6,
            "uplink rate {rate} != oracle {UPLINK_RATE_ORACLE}"
        );
        // Consistent with the coarse figure of ~2.459e7 bits/s.
        assert!((rate - 2.459e7).abs() / 2.459e7 < 1e-3);
    }

    #[test]
    fn downlink_rate_matches_hand_derivation() {
        let rate = downlink_rate(&reference_profile());
        assert!(
            (rate - DOWNLINK_RATE_ORACLE).abs() / DOWNLINK_RATE_ORACLE < 1e-6,
            "downlink rate {rate} != oracle {DOWNLINK_RATE_ORACLE}"
        );
        assert!((rate - 5.38e8).abs() / 5.38e8 < 1e-3);
    }

    #[test]
    fn zero_signal_means_zero_rate() {
        let mut p = reference_profile();
        p.uplink_power_w = 0.0;
        assert_eq!(uplink_rate(&p), 0.0);
        p.downlink_power_w = 0.0;
        assert_eq!(downlink_rate(&p), 0.0);
    }

    #[test]
    fn doubling_bandwidth_at_fixed_snr_doubles_rate() {
        let p = reference_profile();
        let r1 = uplink_rate(&p);
        let mut p2 = p.clone();
        // Keep SNR fixed: noise power scales with B, so double the signal too.
        p2.uplink_bandwidth_hz *= 2.0;
        p2.uplink_power_w *= 2.0;
        let r2 = uplink_rate(&p2);
        assert!((r2 - 2.0 * r1).abs() / (2.0 * r1) < 1e-12);
    }

    #[test]
    fn up_and_downlink_coincide_on_equal_parameters() {
        let mut p = reference_profile();
        p.downlink_power_w = p.uplink_power_w;
        p.downlink_bandwidth_hz = p.uplink_bandwidth_hz;
        p.downlink_interference_w = p.uplink_interference_w;
        assert_eq!(uplink_rate(&p), downlink_rate(&p));
    }

    #[test]
    fn model_bits_is_32_per_parameter() {
        let manifest = Manifest::new(vec![LayerSpec::new("w", vec![10])]);
        let params = ParamVector::zeros(manifest);
        assert_eq!(model_bits(&params), 320);
    }

    #[test]
    fn model_bits_ignores_freezing() {
        // The payload is the full model whether or not entries are frozen;
        // masks are metadata and never shrink Z.
        let manifest = Manifest::new(vec![LayerSpec::new("w", vec![6])]);
        let params = ParamVector::zeros(manifest);
        let z = model_bits(&params);
        let _mask = crate::params::FreezeMask::from_bits(vec![true, true, true, false, false, false]);
        assert_eq!(model_bits(&params), z);
    }

    #[test]
    fn default_architecture_bits_match_hand_count() {
        // Independent tally of the desk-scale default: two conv layers
        // (8 and 16 3x3 kernels on a 16x16 input), dense to 16, decoder
        // 16 -> 32 -> 2, biases included.
        let conv1 = 8 * 3 * 3; // one input channel
        let conv2 = 16 * 8 * 3 * 3;
        let enc = 16 * (16 * 12 * 12) + 16;
        let dec_hidden = 32 * 16 + 32;
        let dec_out = 2 * 32 + 2;
        let expected_params = conv1 + conv2 + enc + dec_hidden + dec_out;

        let arch = crate::sc::SCArchitecture::desk_scale(16, 2);
        let params = ParamVector::zeros(arch.manifest());
        assert_eq!(params.len(), expected_params);
        assert_eq!(model_bits(&params), 32 * expected_params as u64);
    }

    #[test]
    fn transmission_delay_is_z_over_rate() {
        let (up, down) = transmission_delays(1_000_000, 1e6, 2e6);
        assert_eq!(up, 1.0);
        assert_eq!(down, 0.5);
        let (up2, down2) = transmission_delays(2_000_000, 1e6, 2e6);
        assert_eq!(up2, 2.0 * up);
        assert_eq!(down2, 2.0 * down);
    }

    #[test]
    fn reference_rates_give_hand_divided_delays() {
        // Desk-scale payload (38714 params x 32 bits) over the reference
        // link rates.
        let z = 32 * 38714u64;
        let (up, down) = transmission_delays(z, UPLINK_RATE_ORACLE, DOWNLINK_RATE_ORACLE);
        assert!((up - z as f64 / UPLINK_RATE_ORACLE).abs() < 1e-15);
        assert!((down - z as f64 / DOWNLINK_RATE_ORACLE).abs() < 1e-15);
        assert!((up - 5.0396e-2).abs() / 5.0396e-2 < 1e-3);
    }

    #[test]
    fn zero_rate_maps_to_infinite_delay() {
        let (up, _) = transmission_delays(100, 0.0, 1.0);
        assert!(up.is_infinite());
    }

    #[test]
    fn compute_delay_direct_arithmetic() {
        // 100 samples, 1e6-cycle workload, 5 epochs, 2 GHz.
        let d = compute_delay(100, 100_000, 10.0, 5, 2e9).unwrap();
        assert_eq!(d, 0.25);
        assert!(compute_delay(100, 10, 10.0, 1, 0.0).is_err());
    }

    #[test]
    fn compute_delay_scales_linearly_with_trainable_fraction() {
        let full = compute_delay(100, 1000, 10.0, 2, 2e9).unwrap();
        let half = compute_delay(100, 500, 10.0, 2, 2e9).unwrap();
        assert!((half / full - 0.5).abs() < 1e-12);
    }

    #[test]
    fn round_delay_is_max_over_participants() {
        let (d, flags) = round_delay(&[1.0, 3.0, 2.0], f64::INFINITY, 0).unwrap();
        assert_eq!(d, 3.0);
        assert_eq!(flags, vec![true, true, true]);

        let (d, flags) = round_delay(&[1.0, 3.0, 2.0], 2.5, 0).unwrap();
        assert_eq!(d, 2.0);
        assert_eq!(flags, vec![true, false, true]);
    }

    #[test]
    fn empty_participation_is_an_error() {
        let err = round_delay(&[5.0, 6.0], 1.0, 7).unwrap_err();
        assert!(matches!(err, Error::EmptyRound { round: 7 }));
    }

    #[test]
    fn rates_are_monotone_in_power_gain_and_interference() {
        use rand::Rng;
        let mut rng = crate::rng::chacha(&[606]);
        for _ in 0..200 {
            let mut p = reference_profile();
            p.uplink_power_w = rng.gen_range(1e-4..1.0);
            p.link_gain = rng.gen_range(1e-8..1e-2);
            p.uplink_interference_w = rng.gen_range(0.0..1e-9);
            let base = uplink_rate(&p);

            let mut stronger = p.clone();
            stronger.uplink_power_w *= 1.0 + rng.gen_range(0.01..1.0);
            assert!(uplink_rate(&stronger) > base);

            let mut better_link = p.clone();
            better_link.link_gain *= 1.0 + rng.gen_range(0.01..1.0);
            assert!(uplink_rate(&better_link) > base);

            let mut noisier = p.clone();
            noisier.uplink_interference_w += rng.gen_range(1e-12..1e-9);
            assert!(uplink_rate(&noisier) < base);
        }
    }
}
