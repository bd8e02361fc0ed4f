//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! The heavyweight fixture (five seeded training runs with the freezing
//! strategy on, five with it off) is built once and shared.

use std::panic::AssertUnwindSafe;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::Rng;
use xsfl_core::act;
use xsfl_core::autograd::{Tape, Tensor};
use xsfl_core::config::ExperimentConfig;
use xsfl_core::data::Dataset;
use xsfl_core::edge;
use xsfl_core::esc;
use xsfl_core::experiment::{self, prepare, run_experiment};
use xsfl_core::fl::{aggregate, RoundReport};
use xsfl_core::params::ParamVector;
use xsfl_core::rng;
use xsfl_core::sc::{self, ChannelSpec, ConvSpec, SCArchitecture};

fn criterion(number: usize, name: &str, body: impl FnOnce()) {
    let outcome = std::panic::catch_unwind(AssertUnwindSafe(body));
    match &outcome {
        Ok(()) => println!("ACCEPTANCE {number} ({name}): PASS"),
        Err(_) => println!("ACCEPTANCE {number} ({name}): FAIL"),
    }
    if let Err(panic) = outcome {
        std::panic::resume_unwind(panic);
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

// ---------------------------------------------------------------------------
// Shared training fixture
// ---------------------------------------------------------------------------

struct RunArtifacts {
    reports: Vec<RoundReport>,
    final_params: ParamVector,
}

struct Fixture {
    xsfl: Vec<RunArtifacts>,
    fedavg: Vec<RunArtifacts>,
    /// Wall time of the five strategy-on runs.
    xsfl_wall: Duration,
    arch: SCArchitecture,
    /// Test split of the first seed's run.
    test0: Dataset,
}

const SEEDS: [u64; 5] = [11, 12, 13, 14, 15];

fn default_config(seed: u64, act: bool) -> ExperimentConfig {
    ExperimentConfig {
        seed,
        act_enabled: act,
        ..ExperimentConfig::default()
    }
}

fn run_one(seed: u64, act: bool) -> RunArtifacts {
    let dir = tempfile::tempdir().expect("tempdir");
    let output = run_experiment(&default_config(seed, act), dir.path()).expect("run");
    assert!(output.aborted_rounds.is_empty());
    RunArtifacts {
        reports: output.reports,
        final_params: output.final_params,
    }
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let start = Instant::now();
        let xsfl: Vec<RunArtifacts> = SEEDS.iter().map(|&s| run_one(s, true)).collect();
        let xsfl_wall = start.elapsed();
        let fedavg: Vec<RunArtifacts> = SEEDS.iter().map(|&s| run_one(s, false)).collect();
        let prepared = prepare(&default_config(SEEDS[0], true)).expect("prepare");
        Fixture {
            xsfl,
            fedavg,
            xsfl_wall,
            arch: prepared.arch,
            test0: prepared.test,
        }
    })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values[values.len() / 2]
}

// ---------------------------------------------------------------------------
// 1. Oracle equivalence
// ---------------------------------------------------------------------------

#[test]
fn acceptance_1_oracle_equivalence() {
    criterion(1, "oracle equivalence", || {
        let start = Instant::now();
        let mut rng = rng::chacha(&[10_001]);

        // aggregate vs Kahan-compensated weighted mean.
        use xsfl_core::params::{LayerSpec, Manifest};
        for _ in 0..20 {
            let n_params = rng.gen_range(4..64);
            let manifest = Manifest::new(vec![LayerSpec::new("w", vec![n_params])]);
            let models: Vec<(u64, ParamVector)> = (0..rng.gen_range(2..7))
                .map(|_| {
                    let values = (0..n_params).map(|_| rng.gen_range(-5.0..5.0)).collect();
                    (
                        rng.gen_range(1..400),
                        ParamVector::new(manifest.clone(), values, 0).unwrap(),
                    )
                })
                .collect();
            let refs: Vec<(u64, &ParamVector)> = models.iter().map(|(d, m)| (*d, m)).collect();
            let got = aggregate(&refs).unwrap();
            let total: u64 = models.iter().map(|(d, _)| d).sum();
            for i in 0..n_params {
                let (mut sum, mut comp) = (0.0, 0.0);
                for (d, m) in &models {
                    let term = *d as f64 * m.values[i];
                    let y = term - comp;
                    let t = sum + y;
                    comp = (t - sum) - y;
                    sum = t;
                }
                assert!(rel_err(got.values[i], sum / total as f64) < 1e-12);
            }
        }

        // conv2d and dense vs naive loops on random instances up to 8x8.
        for _ in 0..25 {
            let (c, h, w) = (
                rng.gen_range(1..4),
                rng.gen_range(3..=8),
                rng.gen_range(3..=8),
            );
            let k_out = rng.gen_range(1..4);
            let ks = rng.gen_range(1..=3.min(h).min(w));
            let stride = rng.gen_range(1..=2);
            let x: Vec<f64> = (0..c * h * w).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let k: Vec<f64> = (0..k_out * c * ks * ks)
                .map(|_| rng.gen_range(-2.0..2.0))
                .collect();

            let mut tape = Tape::new();
            let xn = tape.leaf(Tensor::new(vec![c, h, w], x.clone()).unwrap());
            let kn = tape.leaf(Tensor::new(vec![k_out, c, ks, ks], k.clone()).unwrap());
            let out = tape.conv2d(xn, kn, stride).unwrap();
            let got = tape.value(out);

            let h_out = (h - ks) / stride + 1;
            let w_out = (w - ks) / stride + 1;
            for ko in 0..k_out {
                for i in 0..h_out {
                    for j in 0..w_out {
                        let mut acc = 0.0;
                        for cc in 0..c {
                            for u in 0..ks {
                                for v in 0..ks {
                                    acc += x[cc * h * w
                                        + (i * stride + u) * w
                                        + (j * stride + v)]
                                        * k[((ko * c + cc) * ks + u) * ks + v];
                                }
                            }
                        }
                        assert!(
                            rel_err(got.data()[(ko * h_out + i) * w_out + j], acc) < 1e-12
                        );
                    }
                }
            }
        }
        for _ in 0..25 {
            let (out_dim, in_dim) = (rng.gen_range(1..8), rng.gen_range(1..10));
            let x: Vec<f64> = (0..in_dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let w: Vec<f64> = (0..out_dim * in_dim)
                .map(|_| rng.gen_range(-2.0..2.0))
                .collect();
            let b: Vec<f64> = (0..out_dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mut tape = Tape::new();
            let xn = tape.leaf(Tensor::from_vec(x.clone()));
            let wn = tape.leaf(Tensor::new(vec![out_dim, in_dim], w.clone()).unwrap());
            let bn = tape.leaf(Tensor::from_vec(b.clone()));
            let y = tape.dense(xn, wn, bn).unwrap();
            for o in 0..out_dim {
                let mut acc = b[o];
                for i in 0..in_dim {
                    acc += w[o * in_dim + i] * x[i];
                }
                assert!(rel_err(tape.value(y).data()[o], acc) < 1e-12);
            }
        }

        // Cross-entropy vs the naive softmax-then-log oracle.
        for _ in 0..50 {
            let m = rng.gen_range(2..9);
            let logits: Vec<f64> = (0..m).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let label = rng.gen_range(0..m);
            let exps: Vec<f64> = logits.iter().map(|v| v.exp()).collect();
            let expected = -(exps[label] / exps.iter().sum::<f64>()).ln();
            let mut tape = Tape::new();
            let z = tape.leaf(Tensor::from_vec(logits));
            let loss = tape.softmax_cross_entropy(z, label).unwrap();
            assert!(rel_err(tape.value(loss).item(), expected) < 1e-12);
        }

        // k-medoids objective vs exhaustive enumeration, N <= 8, C <= 3.
        fn subsets(n: usize, c: usize) -> Vec<Vec<usize>> {
            fn rec(
                start: usize,
                n: usize,
                c: usize,
                cur: &mut Vec<usize>,
                out: &mut Vec<Vec<usize>>,
            ) {
                if cur.len() == c {
                    out.push(cur.clone());
                    return;
                }
                for i in start..n {
                    cur.push(i);
                    rec(i + 1, n, c, cur, out);
                    cur.pop();
                }
            }
            let mut out = Vec::new();
            rec(0, n, c, &mut Vec::new(), &mut out);
            out
        }
        for trial in 0..60u64 {
            let n = rng.gen_range(2..=8);
            let c = rng.gen_range(1..=3.min(n));
            let volumes: Vec<u64> = (0..n).map(|_| rng.gen_range(5..900)).collect();
            let got = act::cluster_devices(&volumes, c, trial).unwrap();
            let best = subsets(n, c)
                .into_iter()
                .map(|medoids| {
                    volumes
                        .iter()
                        .map(|&v| {
                            medoids
                                .iter()
                                .map(|&m| {
                                    let d = v.abs_diff(volumes[m]) as f64;
                                    d * d
                                })
                                .fold(f64::INFINITY, f64::min)
                        })
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
            assert_eq!(got.objective, best, "volumes {volumes:?}, c {c}");
        }

        // Importance vs an explicitly constructed diagonal quadratic form.
        for _ in 0..30 {
            let n = rng.gen_range(1..32);
            let wg: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let wn: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let f: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..4.0)).collect();
            let imp = act::importance(&wg, &wn, &f).unwrap();
            for i in 0..n {
                let mut row = 0.0;
                for j in 0..n {
                    let m = if i == j { f[i] } else { 0.0 };
                    row += (wg[i] - wn[i]) * m * (wg[j] - wn[j]);
                }
                assert!((imp[i] - row).abs() <= 1e-12 * row.abs().max(1.0));
            }
        }

        // Neuron importance vs a naive double loop.
        for _ in 0..30 {
            let (k, h, w) = (rng.gen_range(1..4), rng.gen_range(1..6), rng.gen_range(1..6));
            let rho: Vec<f64> = (0..k * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let g: Vec<f64> = (0..k * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let omega = esc::neuron_importance(
                &Tensor::new(vec![k, h, w], rho.clone()).unwrap(),
                &Tensor::new(vec![k, h, w], g.clone()).unwrap(),
            )
            .unwrap();
            for kernel in 0..k {
                let mut acc = 0.0;
                for i in 0..h {
                    for j in 0..w {
                        acc += rho[kernel * h * w + i * w + j] * g[kernel * h * w + i * w + j];
                    }
                }
                assert!(rel_err(omega[kernel], acc) < 1e-12 || (omega[kernel] - acc).abs() < 1e-12);
            }
        }

        assert!(
            start.elapsed() < Duration::from_secs(10),
            "oracle suite overran its budget: {:?}",
            start.elapsed()
        );
    });
}

// ---------------------------------------------------------------------------
// 2. Gradient suite
// ---------------------------------------------------------------------------

fn random_arch(rng: &mut impl Rng) -> SCArchitecture {
    let side = rng.gen_range(5..=7);
    let kernel_size = rng.gen_range(2..=3);
    SCArchitecture {
        image: [1, side, side],
        conv: vec![ConvSpec {
            kernels: rng.gen_range(1..=3),
            kernel_size,
            stride: 1,
        }],
        semantic_dim: rng.gen_range(2..=4),
        decoder_hidden: vec![rng.gen_range(2..=5)],
        classes: rng.gen_range(2..=3),
        activation_slope: 0.2,
    }
}

fn finite_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let plus = f(&probe);
        probe[i] = x[i] - step;
        let minus = f(&probe);
        probe[i] = x[i];
        grad[i] = (plus - minus) / (2.0 * step);
    }
    grad
}

fn assert_grad_close(analytic: &[f64], numeric: &[f64], tol: f64) {
    for (a, n) in analytic.iter().zip(numeric) {
        let denom = a.abs().max(n.abs()).max(1e-6);
        assert!(
            (a - n).abs() / denom < tol,
            "gradient mismatch: analytic {a}, numeric {n}"
        );
    }
}

#[test]
fn acceptance_2_gradient_suite() {
    criterion(2, "gradient suite", || {
        let start = Instant::now();
        let mut rng = rng::chacha(&[20_002]);
        let mut instances = 0;

        // Training path: full parameter gradient of the per-sample loss.
        for _ in 0..60 {
            let arch = random_arch(&mut rng);
            let params = sc::init_params(&arch, rng.gen()).unwrap();
            let n_pixels: usize = arch.image.iter().product();
            let x = Tensor::new(
                arch.image.to_vec(),
                (0..n_pixels).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let label = rng.gen_range(0..arch.classes);
            let chan = ChannelSpec::new(rng.gen_range(0.5..1.5), rng.gen_range(0.0..0.3)).unwrap();
            let noise_seed = rng.gen();

            let (_, analytic) =
                sc::forward_loss_grad(&arch, &params, &x, label, &chan, noise_seed).unwrap();
            let numeric = finite_diff(
                |values| {
                    let p = ParamVector::new(params.manifest.clone(), values.to_vec(), 0)
                        .unwrap();
                    sc::forward_loss(&arch, &p, &x, label, &chan, noise_seed).unwrap()
                },
                &params.values,
                1e-5,
            );
            assert_grad_close(&analytic, &numeric, 1e-4);
            instances += 1;
        }

        // Explanation path: gradient of each semantic feature against the
        // retained feature maps, and against the raw input.
        for _ in 0..40 {
            let arch = random_arch(&mut rng);
            let params = sc::init_params(&arch, rng.gen()).unwrap();
            let n_pixels: usize = arch.image.iter().product();
            let x_data: Vec<f64> = (0..n_pixels).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = Tensor::new(arch.image.to_vec(), x_data.clone()).unwrap();
            let l = rng.gen_range(0..arch.semantic_dim);

            let mut tape = Tape::new();
            let nodes = sc::bind_params(&mut tape, &params).unwrap();
            let encoded = sc::encoder_forward(&mut tape, &arch, &nodes, &x).unwrap();
            let q = tape.pick(encoded.semantic, l).unwrap();
            let feature_node = encoded.feature_maps.unwrap();

            // Against the feature maps: rebuild the tail (flatten + dense)
            // as a function of A.
            let a_value = tape.value(feature_node).clone();
            let analytic_a = tape.grad_of(q, feature_node).unwrap();
            let w_idx = arch.conv.len();
            let numeric_a = finite_diff(
                |a_vals| {
                    let mut t = Tape::new();
                    let a = t.leaf(Tensor::new(a_value.shape().to_vec(), a_vals.to_vec()).unwrap());
                    let flat = t.reshape(a, vec![arch.encoder_flat_len()]).unwrap();
                    let wn = t.leaf(
                        Tensor::new(
                            params.manifest.layers()[w_idx].shape.clone(),
                            params.layer(w_idx).to_vec(),
                        )
                        .unwrap(),
                    );
                    let bn = t.leaf(Tensor::from_vec(params.layer(w_idx + 1).to_vec()));
                    let s = t.dense(flat, wn, bn).unwrap();
                    let q = t.pick(s, l).unwrap();
                    t.value(q).item()
                },
                a_value.data(),
                1e-5,
            );
            assert_grad_close(analytic_a.data(), &numeric_a, 1e-4);

            // Against the input pixels, through the convolution stack.
            let analytic_x = tape.grad_of(q, encoded.input).unwrap();
            let numeric_x = finite_diff(
                |pixels| {
                    let probe =
                        Tensor::new(arch.image.to_vec(), pixels.to_vec()).unwrap();
                    let (semantic, _) = sc::encode(&arch, &params, &probe).unwrap();
                    semantic.values[l]
                },
                &x_data,
                1e-5,
            );
            assert_grad_close(analytic_x.data(), &numeric_x, 1e-4);
            instances += 2;
        }

        assert!(instances >= 100, "only {instances} gradient instances ran");
        assert!(
            start.elapsed() < Duration::from_secs(60),
            "gradient suite overran its budget: {:?}",
            start.elapsed()
        );
    });
}

// ---------------------------------------------------------------------------
// 3. Freezing contract
// ---------------------------------------------------------------------------

#[test]
fn acceptance_3_freezing_contract() {
    criterion(3, "freezing contract", || {
        let config = ExperimentConfig {
            rounds: 10,
            ..default_config(777, true)
        };
        let prepared = prepare(&config).unwrap();
        let mut state = prepared.state;
        let total = state.global.len();
        let mut violations = 0usize;
        for _ in 0..config.rounds {
            let published = state.global.clone();
            let report =
                xsfl_core::fl::run_round(&mut state, &prepared.options, None).unwrap();
            for (n, info) in report.devices.iter().enumerate() {
                assert_eq!(
                    info.frozen,
                    act::frozen_count(total, info.zeta),
                    "device {n}: frozen count disagrees with its proportion"
                );
                if !info.participated {
                    continue;
                }
                let device = &state.devices[n];
                for i in 0..total {
                    if device.mask.is_frozen(i)
                        && device.params.values[i].to_bits() != published.values[i].to_bits()
                    {
                        violations += 1;
                    }
                }
            }
        }
        assert_eq!(violations, 0, "{violations} frozen entries drifted");
    });
}

// ---------------------------------------------------------------------------
// 4. Delay model
// ---------------------------------------------------------------------------

#[test]
fn acceptance_4_delay_model() {
    criterion(4, "delay model", || {
        // Reference radio parameters: P_up 0.01 W, gain -50 dB, noise
        // -174 dBm/Hz, B_up 1 MHz, no interference. The frozen oracle was
        // hand-derived at 40-digit precision (SNR is exactly 10^7.4).
        let profile = edge::DeviceProfile {
            cpu_hz: 2e9,
            channel: 0,
            uplink_power_w: 0.01,
            downlink_power_w: 1.0,
            uplink_bandwidth_hz: 1e6,
            downlink_bandwidth_hz: 2e7,
            link_gain: edge::db_to_linear(-50.0),
            uplink_interference_w: 0.0,
            downlink_interference_w: 0.0,
            noise_psd_w_per_hz: edge::dbm_per_hz_to_w_per_hz(-174.0),
            cycles_per_param: 10.0,
        };
        let rate = edge::uplink_rate(&profile);
        let oracle = 24_582_267.959_601_205_f64;
        assert!(
            rel_err(rate, oracle) < 1e-6,
            "uplink rate {rate} vs oracle {oracle}"
        );
        assert!((rate - 2.459e7).abs() / 2.459e7 < 1e-3);

        // d_max exclusion and max-over-participants on constructed cases.
        let (d, flags) = edge::round_delay(&[0.5, 2.0, 1.0], f64::INFINITY, 0).unwrap();
        assert_eq!(d, 2.0);
        assert_eq!(flags, vec![true, true, true]);

        let (d, flags) = edge::round_delay(&[0.5, 2.0, 1.0], 1.5, 0).unwrap();
        assert_eq!(d, 1.0);
        assert_eq!(flags, vec![true, false, true]);

        let (d, flags) = edge::round_delay(&[0.5, 2.0, 1.0], 0.6, 0).unwrap();
        assert_eq!(d, 0.5);
        assert_eq!(flags, vec![true, false, false]);

        assert!(matches!(
            edge::round_delay(&[0.5, 2.0, 1.0], 0.1, 3),
            Err(xsfl_core::Error::EmptyRound { round: 3 })
        ));
    });
}

// ---------------------------------------------------------------------------
// 5. End-to-end learning
// ---------------------------------------------------------------------------

#[test]
fn acceptance_5_end_to_end_learning() {
    criterion(5, "end-to-end learning", || {
        let fix = fixture();
        let mut peaks: Vec<f64> = fix
            .xsfl
            .iter()
            .map(|run| {
                run.reports
                    .iter()
                    .map(|r| r.metrics.unwrap().acc)
                    .fold(0.0, f64::max)
            })
            .collect();
        let med = median(&mut peaks);
        assert!(
            med >= 0.90,
            "median peak accuracy {med} below 0.90 (per-seed {peaks:?})"
        );
        assert!(
            fix.xsfl_wall < Duration::from_secs(600),
            "five runs took {:?}",
            fix.xsfl_wall
        );
    });
}

// ---------------------------------------------------------------------------
// 6. Delay/accuracy trend vs the strategy-off baseline
// ---------------------------------------------------------------------------

#[test]
fn acceptance_6_delay_and_accuracy_trend() {
    criterion(6, "compute-delay and accuracy trend", || {
        let fix = fixture();
        let mean_compute_delay = |runs: &[RunArtifacts]| -> f64 {
            let mut total = 0.0;
            let mut count = 0usize;
            for run in runs {
                for report in &run.reports {
                    for device in &report.devices {
                        total += device.delay.local;
                        count += 1;
                    }
                }
            }
            total / count as f64
        };
        let with_act = mean_compute_delay(&fix.xsfl);
        let without = mean_compute_delay(&fix.fedavg);
        assert!(
            with_act < without,
            "mean per-round compute delay {with_act} not below baseline {without}"
        );

        let mut final_with: Vec<f64> = fix
            .xsfl
            .iter()
            .map(|r| r.reports.last().unwrap().metrics.unwrap().acc)
            .collect();
        let mut final_without: Vec<f64> = fix
            .fedavg
            .iter()
            .map(|r| r.reports.last().unwrap().metrics.unwrap().acc)
            .collect();
        let med_with = median(&mut final_with);
        let med_without = median(&mut final_without);
        assert!(
            (med_with - med_without).abs() <= 0.03,
            "final accuracy gap too wide: {med_with} vs {med_without}"
        );
    });
}

// ---------------------------------------------------------------------------
// 7. Explanation sanity
// ---------------------------------------------------------------------------

#[test]
fn acceptance_7_esc_sanity() {
    criterion(7, "explanation sanity", || {
        let fix = fixture();
        let params = &fix.xsfl[0].final_params;
        let test = &fix.test0;

        let mut checked = 0;
        let mut localized = 0;
        for i in 0..test.len() {
            let Some((r0, c0, r1, c1)) = test.blob_boxes[i] else {
                continue;
            };
            if checked >= 30 {
                break;
            }
            let explanation = esc::explain(&fix.arch, params, &test.images[i], 0.2).unwrap();
            assert!(
                explanation
                    .upsampled
                    .iter()
                    .all(|v| (0.0..=1.0).contains(v)),
                "normalized heatmap escaped [0,1]"
            );
            let side = explanation.input_width;
            let (mut inside, mut inside_n) = (0.0, 0usize);
            let (mut outside, mut outside_n) = (0.0, 0usize);
            for y in 0..explanation.input_height {
                for x in 0..side {
                    let v = explanation.upsampled[y * side + x];
                    if y >= r0 && y <= r1 && x >= c0 && x <= c1 {
                        inside += v;
                        inside_n += 1;
                    } else {
                        outside += v;
                        outside_n += 1;
                    }
                }
            }
            if inside / inside_n as f64 > outside / outside_n as f64 {
                localized += 1;
            }
            checked += 1;
        }
        assert!(checked >= 20, "only {checked} blob images in the test split");
        let rate = localized as f64 / checked as f64;
        assert!(
            rate >= 0.80,
            "heatmap localized the blob in only {localized}/{checked} images"
        );

        // leakyReLU degenerates to the identity as the slope approaches 1.
        let mut rng = rng::chacha(&[70_007]);
        let act_data: Vec<f64> = (0..27).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let activations = Tensor::new(vec![3, 3, 3], act_data.clone()).unwrap();
        let omega: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let map = esc::localization_map(&omega, &activations, 0.999).unwrap();
        for (p, v) in map.iter().enumerate() {
            let mut raw = 0.0;
            for k in 0..3 {
                raw += omega[k] * act_data[k * 9 + p];
            }
            assert!(
                (v - raw).abs() <= 1e-3 * raw.abs().max(1.0),
                "slope 0.999 deviates from identity: {v} vs {raw}"
            );
        }
    });
}

// ---------------------------------------------------------------------------
// 8. Determinism
// ---------------------------------------------------------------------------

#[test]
fn acceptance_8_determinism() {
    criterion(8, "byte-level determinism", || {
        let config = ExperimentConfig {
            rounds: 3,
            ..default_config(2024, true)
        };
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        run_experiment(&config, dir_a.path()).unwrap();
        run_experiment(&config, dir_b.path()).unwrap();
        let csv_a = std::fs::read(dir_a.path().join("metrics.csv")).unwrap();
        let csv_b = std::fs::read(dir_b.path().join("metrics.csv")).unwrap();
        assert_eq!(csv_a, csv_b, "metrics CSVs differ between identical runs");
        let model_a = std::fs::read(dir_a.path().join("model.scm")).unwrap();
        let model_b = std::fs::read(dir_b.path().join("model.scm")).unwrap();
        assert_eq!(model_a, model_b, "model files differ between identical runs");
    });
}

// ---------------------------------------------------------------------------
// 9. Channel-noise monotonicity
// ---------------------------------------------------------------------------

#[test]
fn acceptance_9_noise_monotonicity() {
    criterion(9, "channel-noise monotonicity", || {
        let fix = fixture();
        let params = &fix.xsfl[0].final_params;
        let eval_seeds: Vec<u64> = (0..10).map(|i| rng::mix(&[90_009, i])).collect();

        let stats = |noise_std: f64| -> (f64, f64) {
            let accs: Vec<f64> = eval_seeds
                .iter()
                .map(|&seed| {
                    experiment::test_accuracy(
                        &fix.arch,
                        params,
                        &fix.test0,
                        &ChannelSpec::new(1.0, noise_std).unwrap(),
                        seed,
                    )
                    .unwrap()
                })
                .collect();
            let mean = accs.iter().sum::<f64>() / accs.len() as f64;
            let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>()
                / (accs.len() - 1) as f64;
            (mean, (var / accs.len() as f64).sqrt())
        };

        let levels = [0.0, 0.5, 2.0];
        let measured: Vec<(f64, f64)> = levels.iter().map(|&n| stats(n)).collect();
        for pair in measured.windows(2) {
            let (mean_low, se_low) = pair[0];
            let (mean_high, se_high) = pair[1];
            let se = (se_low * se_low + se_high * se_high).sqrt();
            assert!(
                mean_high <= mean_low + se,
                "accuracy rose with noise: {mean_low} -> {mean_high} (se {se})"
            );
        }
        // The noisiest channel must actually hurt, not just tie.
        assert!(measured[2].0 < measured[0].0 + 1e-9);
    });
}
