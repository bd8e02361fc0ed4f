//! Command-line front end: run experiments, explain inputs, inspect delays,
//! synthesize datasets.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use xsfl_core::config::ExperimentConfig;
use xsfl_core::data::{self, SynthSpec};
use xsfl_core::error::{Error, Result};
use xsfl_core::{esc, experiment, pgm, sc};

#[derive(Parser)]
#[command(name = "xsfl", about = "Semantic federated learning simulator", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a federated training experiment.
    Run {
        /// Experiment config file (key = value lines).
        #[arg(long)]
        config: PathBuf,
        /// Output directory for metrics.csv, model.scm, heatmaps/.
        #[arg(long)]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Disable adaptive client training (plain weighted averaging).
        #[arg(long)]
        no_act: bool,
        /// Export explanation heatmaps for test images after training.
        #[arg(long)]
        esc: bool,
    },
    /// Explain one input image with a trained model.
    Explain {
        /// Serialized model file.
        #[arg(long)]
        model: PathBuf,
        /// Input image (PGM).
        #[arg(long)]
        input: PathBuf,
        /// Output directory for the heatmaps.
        #[arg(long)]
        out: PathBuf,
        /// Negative slope of the heatmap rectifier, in (0, 1).
        #[arg(long, default_value_t = 0.2)]
        slope: f64,
    },
    /// Print the per-device delay analysis for a config.
    Delays {
        #[arg(long)]
        config: PathBuf,
    },
    /// Synthesize a fire-like dataset into class subdirectories.
    Synth {
        /// Synthesis spec file (image_size, count_per_class, seed).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn cmd_run(
    config: PathBuf,
    out: PathBuf,
    seed: Option<u64>,
    no_act: bool,
    esc_flag: bool,
) -> Result<()> {
    let mut cfg = ExperimentConfig::from_file(&config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if no_act {
        cfg.act_enabled = false;
    }
    if esc_flag {
        cfg.esc_export = true;
    }
    let output = experiment::run_experiment(&cfg, &out)?;
    for report in &output.reports {
        let m = report.metrics.expect("runner evaluates metrics");
        println!(
            "round {:>3}  loss {:.4}  acc {:.4}  delay {:.4}s  participants {}",
            report.round, report.global_loss, m.acc, report.round_delay, report.participants
        );
    }
    if !output.aborted_rounds.is_empty() {
        println!("aborted rounds: {:?}", output.aborted_rounds);
    }
    println!("metrics: {}", output.csv_path.display());
    println!("model:   {}", output.model_path.display());
    if !output.heatmap_paths.is_empty() {
        println!("heatmaps: {} files", output.heatmap_paths.len());
    }
    Ok(())
}

fn cmd_explain(model: PathBuf, input: PathBuf, out: PathBuf, slope: f64) -> Result<()> {
    let (arch, params) = sc::load_model(&model)?;
    let image = pgm::read_pgm(&input)?;
    let tensor = xsfl_core::autograd::Tensor::new(
        vec![1, image.height, image.width],
        image.to_unit_reals(),
    )?;
    let explanation = esc::explain(&arch, &params, &tensor, slope)?;
    let stem = input
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("input")
        .to_string();
    let paths = esc::export_heatmaps(&explanation, &out, &stem, false)?;
    if explanation.constant {
        eprintln!("warning: aggregated map was constant; exported as zeros");
    }
    for path in paths {
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_delays(config: PathBuf) -> Result<()> {
    let cfg = ExperimentConfig::from_file(&config)?;
    let (rows, round) = experiment::delay_table(&cfg)?;
    if let Some(first) = rows.first() {
        let params = first.trainable + first.frozen;
        println!("model: {} parameters, {} bits per transfer", params, 32 * params);
    }
    println!(
        "{:>6} {:>7} {:>6} {:>9} {:>8} {:>12} {:>12} {:>10} {:>10} {:>10} {:>10} {:>5}",
        "device", "volume", "zeta", "trainable", "frozen", "up_bps", "down_bps", "d_up_s",
        "d_down_s", "d_local_s", "d_total_s", "in"
    );
    for r in rows {
        println!(
            "{:>6} {:>7} {:>6.3} {:>9} {:>8} {:>12.4e} {:>12.4e} {:>10.4e} {:>10.4e} {:>10.4e} {:>10.4e} {:>5}",
            r.device,
            r.volume,
            r.zeta,
            r.trainable,
            r.frozen,
            r.uplink_rate,
            r.downlink_rate,
            r.delay.up,
            r.delay.down,
            r.delay.local,
            r.delay.total,
            if r.participates { "yes" } else { "no" }
        );
    }
    match round {
        Some(d) => println!("round delay: {d:.6} s"),
        None => println!("round delay: none (no device meets the budget)"),
    }
    Ok(())
}

fn cmd_synth(spec: PathBuf, out: PathBuf) -> Result<()> {
    let text = std::fs::read_to_string(&spec)?;
    let synth = SynthSpec::from_str_contents(&text)?;
    let dataset = data::synthesize_fire_like(&synth)?;
    data::write_dataset_dir(&dataset, &out)?;
    println!(
        "wrote {} images ({} per class) to {}",
        dataset.len(),
        synth.count_per_class,
        out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            no_act,
            esc,
        } => cmd_run(config, out, seed, no_act, esc),
        Command::Explain {
            model,
            input,
            out,
            slope,
        } => cmd_explain(model, input, out, slope),
        Command::Delays { config } => cmd_delays(config),
        Command::Synth { spec, out } => cmd_synth(spec, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if let Error::EmptyRound { .. } = err {
                eprintln!("hint: raise d_max or speed the devices up");
            }
            ExitCode::FAILURE
        }
    }
}
