//! vitalspec: FM-reconstruct low-rate vital signs, render spectrogram
//! images, verify the round trip, and train/evaluate the shallow classifier.
//!
//! All randomness flows from `--seed`: the dataset stage derives one stream
//! per record from it, training derives one per fold, and the synthetic
//! generator one per subject. Exit codes: 0 success, 1 verification failure,
//! 2 input/validation error. `VITALSPEC_THREADS` caps worker threads.

use clap::{Parser, Subcommand};
use vitalspec_cli::commands::{self, CliError, SignalOpts};
use vitalspec_cli::presets::PresetName;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "vitalspec", version, about = "vital-sign FM spectrogram pipeline")]
struct Cli {
    /// Master seed; overrides the seed stored in presets and config files.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON config bundle (as echoed into any command's sidecar); explicit
    /// flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// FM-modulate one subject's series: raw f32 dump + frequency-track JSON.
    Modulate {
        /// Input CSV (subject_id,timestamp_s,value).
        #[arg(long)]
        csv: PathBuf,
        /// Subject to modulate; defaults to the first in the file.
        #[arg(long)]
        subject: Option<String>,
        /// Output base path (writes BASE.f32, BASE.json, BASE.freq.json).
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        signal: SignalOpts,
    },
    /// Render a 128x128 spectrogram PNG (of the FM signal, or raw with --raw).
    Spectrogram {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        subject: Option<String>,
        /// Spectrogram the unmodulated low-rate signal instead.
        #[arg(long)]
        raw: bool,
        /// Output base path (writes BASE.png, BASE.json).
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        signal: SignalOpts,
    },
    /// Run the round-trip verification fixtures; exit 1 if any fail.
    Roundtrip {
        /// Print the fixture names and exit.
        #[arg(long)]
        list_fixtures: bool,
        /// Optional JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        signal: SignalOpts,
    },
    /// Generate a synthetic corpus CSV for a preset.
    Synth {
        #[arg(long)]
        preset: Option<PresetName>,
        /// Override the subject count (0 gives an empty corpus).
        #[arg(long)]
        subjects: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the labeled spectrogram-image dataset from a corpus CSV.
    Dataset {
        #[arg(long)]
        preset: Option<PresetName>,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Subject-wise cross-validation plus a final full-data model.
    Train {
        #[arg(long)]
        preset: Option<PresetName>,
        /// Dataset directory containing manifest.jsonl.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate saved snapshots on a dataset's original samples.
    Evaluate {
        #[arg(long)]
        preset: Option<PresetName>,
        #[arg(long)]
        manifest: PathBuf,
        /// Directory of snap_epoch_*.params files from `train`.
        #[arg(long)]
        snapshots: PathBuf,
        /// Metrics JSON path (default: MANIFEST/evaluation.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn cap_threads() {
    if let Ok(value) = std::env::var("VITALSPEC_THREADS") {
        if let Ok(n) = value.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Modulate {
            csv,
            subject,
            out,
            signal,
        } => {
            let cfg = commands::resolve_signal_config(config, cli.seed, &signal)?;
            commands::cmd_modulate(&csv, subject.as_deref(), &cfg, &out)
        }
        Command::Spectrogram {
            csv,
            subject,
            raw,
            out,
            signal,
        } => {
            let cfg = commands::resolve_signal_config(config, cli.seed, &signal)?;
            commands::cmd_spectrogram(&csv, subject.as_deref(), raw, &cfg, &out)
        }
        Command::Roundtrip {
            list_fixtures,
            out,
            signal,
        } => {
            let cfg = commands::resolve_signal_config(config, cli.seed, &signal)?;
            commands::cmd_roundtrip(&cfg, list_fixtures, out.as_deref())
        }
        Command::Synth {
            preset,
            subjects,
            out,
        } => {
            let bundle = commands::resolve_preset(preset, config, cli.seed)?;
            commands::cmd_synth(&bundle, subjects, &out)
        }
        Command::Dataset { preset, csv, out } => {
            let bundle = commands::resolve_preset(preset, config, cli.seed)?;
            commands::cmd_dataset(&bundle, &csv, &out)
        }
        Command::Train {
            preset,
            manifest,
            out,
        } => {
            let bundle = commands::resolve_preset(preset, config, cli.seed)?;
            commands::cmd_train(&bundle, &manifest, &out)
        }
        Command::Evaluate {
            preset,
            manifest,
            snapshots,
            out,
        } => {
            let bundle = commands::resolve_preset(preset, config, cli.seed)?;
            commands::cmd_evaluate(&bundle, &manifest, &snapshots, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    cap_threads();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code.clamp(0, 255) as u8)
        }
    }
}
