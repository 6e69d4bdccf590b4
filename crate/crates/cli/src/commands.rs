//! Subcommand implementations. Every command echoes its effective
//! configuration into a JSON sidecar next to its outputs, and exit codes
//! follow one convention: 0 success, 1 verification failure, 2 input or
//! validation error.

use crate::presets::{preset, FoldScheme, PresetConfig, PresetName};
use clap::Args;
use serde::{Deserialize, Serialize};
use std::path::Path;
use vitalspec_core::cnn::{
    cross_validate, evaluate, load_snapshot, save_snapshot, train, CrossValidateConfig,
    MetricsReport, RmsPropConfig, ShallowCnn, Snapshot, SnapshotEnsemble, TrainItem,
};
use vitalspec_core::dataset::{build_dataset, subject_kfold, write_dataset, load_dataset};
use vitalspec_core::demod::{fixture_family, roundtrip_report, RoundtripMetrics};
use vitalspec_core::fm::{dump_raw_f32, fm_modulate, instantaneous_frequency, FmConfig, WaveformSidecar};
use vitalspec_core::scalar::to_f64;
use vitalspec_core::signal::{load_csv, normalize, NormalizationSpec, SubjectRecord};
use vitalspec_core::spectrogram::{render_image, stft, StftConfig, WindowKind};
use vitalspec_core::synth::{generate, write_corpus_csv, ClassPattern};

/// Round-trip acceptance thresholds enforced by `roundtrip`.
pub const ROUNDTRIP_MIN_PEARSON: f64 = 0.95;
pub const ROUNDTRIP_MAX_RMSE: f64 = 0.08;

pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<vitalspec_core::Error> for CliError {
    fn from(e: vitalspec_core::Error) -> Self {
        CliError {
            code: 2,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError {
            code: 2,
            message: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError {
            code: 2,
            message: format!("config parse error: {e}"),
        }
    }
}

type CmdResult = Result<(), CliError>;

fn fail(code: i32, message: impl Into<String>) -> CliError {
    CliError {
        code,
        message: message.into(),
    }
}

/// Flags shared by the signal-level commands; each one overrides the
/// matching field of the preset/config bundle (flags win over `--config`).
#[derive(Debug, Args)]
pub struct SignalOpts {
    #[arg(long)]
    pub fc: Option<f64>,
    #[arg(long)]
    pub delta_f: Option<f64>,
    #[arg(long)]
    pub fs: Option<f64>,
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub ac: Option<f64>,
    #[arg(long)]
    pub n_fft: Option<usize>,
    #[arg(long)]
    pub hop: Option<usize>,
    /// hann or rect
    #[arg(long)]
    pub window: Option<String>,
    #[arg(long)]
    pub band_lo: Option<f64>,
    #[arg(long)]
    pub band_hi: Option<f64>,
    /// per-sample or fixed (fixed requires --lo/--hi)
    #[arg(long)]
    pub normalization: Option<String>,
    #[arg(long)]
    pub lo: Option<f64>,
    #[arg(long)]
    pub hi: Option<f64>,
}

/// Effective signal-stage configuration after merging preset/config/flags;
/// echoed into every sidecar.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SignalConfig {
    pub fm: FmConfig<f64>,
    pub stft: StftConfig<f64>,
    pub normalization: NormalizationSpec<f64>,
    pub seed: u64,
}

fn load_preset_config(path: &Path) -> Result<PresetConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| fail(2, format!("cannot read config {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// preset/config base -> flag overrides, flags winning.
pub fn resolve_signal_config(
    config: Option<&Path>,
    seed: Option<u64>,
    opts: &SignalOpts,
) -> Result<SignalConfig, CliError> {
    let (mut fm, mut stft_cfg, mut normalization, mut eff_seed) = match config {
        Some(path) => {
            let p = load_preset_config(path)?;
            (p.protocol.fm, p.protocol.stft, p.protocol.normalization, p.protocol.seed)
        }
        None => {
            let fm = FmConfig::defaults();
            (fm, StftConfig::for_fm(&fm), NormalizationSpec::PerSample, 0)
        }
    };
    if let Some(v) = opts.fc {
        fm.fc = v;
    }
    if let Some(v) = opts.delta_f {
        fm.delta_f = v;
    }
    if let Some(v) = opts.fs {
        fm.fs = v;
    }
    if let Some(v) = opts.duration {
        fm.duration = v;
    }
    if let Some(v) = opts.ac {
        fm.ac = v;
    }
    if opts.fc.is_some() || opts.delta_f.is_some() {
        // Re-center the analysis band on the overridden carrier.
        stft_cfg.band = Some((fm.fc - 2.0 * fm.delta_f, fm.fc + 2.0 * fm.delta_f));
    }
    if let Some(v) = opts.n_fft {
        stft_cfg.n_fft = v;
    }
    if let Some(v) = opts.hop {
        stft_cfg.hop = v;
    }
    if let Some(w) = &opts.window {
        stft_cfg.window = match w.as_str() {
            "hann" => WindowKind::Hann,
            "rect" => WindowKind::Rect,
            other => return Err(fail(2, format!("unknown window {other:?}"))),
        };
    }
    match (opts.band_lo, opts.band_hi) {
        (Some(lo), Some(hi)) => stft_cfg.band = Some((lo, hi)),
        (None, None) => {}
        _ => return Err(fail(2, "--band-lo and --band-hi must be given together")),
    }
    if let Some(mode) = &opts.normalization {
        normalization = match mode.as_str() {
            "per-sample" => NormalizationSpec::PerSample,
            "fixed" => match (opts.lo, opts.hi) {
                (Some(lo), Some(hi)) => NormalizationSpec::fixed(lo, hi)?,
                _ => return Err(fail(2, "fixed normalization requires --lo and --hi")),
            },
            other => return Err(fail(2, format!("unknown normalization {other:?}"))),
        };
    }
    if let Some(s) = seed {
        eff_seed = s;
    }
    Ok(SignalConfig {
        fm,
        stft: stft_cfg,
        normalization,
        seed: eff_seed,
    })
}

fn pick_record(
    records: Vec<SubjectRecord<f64>>,
    subject: Option<&str>,
) -> Result<SubjectRecord<f64>, CliError> {
    if records.is_empty() {
        return Err(fail(2, "CSV contains no data rows"));
    }
    match subject {
        None => Ok(records.into_iter().next().expect("non-empty")),
        Some(id) => records
            .into_iter()
            .find(|r| r.subject_id == id)
            .ok_or_else(|| fail(2, format!("subject {id:?} not found in CSV"))),
    }
}

#[derive(Debug, Serialize)]
struct ModulateSidecar {
    #[serde(flatten)]
    waveform: WaveformSidecar,
    subject_id: String,
    clamped_samples: usize,
    config: SignalConfig,
}

pub fn cmd_modulate(
    csv: &Path,
    subject: Option<&str>,
    cfg: &SignalConfig,
    out: &Path,
) -> CmdResult {
    let record = pick_record(load_csv::<f64>(csv, "")?, subject)?;
    let normalized = normalize(&record.series, &cfg.normalization)?;
    let waveform = fm_modulate(&normalized.series, &cfg.fm)?;
    let track = instantaneous_frequency(&normalized.series, &cfg.fm)?;

    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    dump_raw_f32(out.with_extension("f32"), &waveform)?;
    let sidecar = ModulateSidecar {
        waveform: WaveformSidecar::new(&waveform, &cfg.fm),
        subject_id: record.subject_id.clone(),
        clamped_samples: normalized.clamped,
        config: cfg.clone(),
    };
    std::fs::write(
        out.with_extension("json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    let freq_json = serde_json::json!({
        "fs": to_f64(track.dt()).recip(),
        "unit": "Hz",
        "freqs_hz": track.values(),
    });
    std::fs::write(
        out.with_extension("freq.json"),
        serde_json::to_string(&freq_json)?,
    )?;
    println!(
        "modulated subject {} -> {} samples at {} Hz ({} clamped)",
        record.subject_id,
        waveform.len(),
        cfg.fm.fs,
        normalized.clamped
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct SpectrogramSidecar {
    provenance: String,
    raw: bool,
    n_bins: usize,
    n_frames: usize,
    freq_lo_hz: f64,
    freq_hi_hz: f64,
    time_lo_s: f64,
    time_hi_s: f64,
    config: SignalConfig,
}

pub fn cmd_spectrogram(
    csv: &Path,
    subject: Option<&str>,
    raw: bool,
    cfg: &SignalConfig,
    out: &Path,
) -> CmdResult {
    let record = pick_record(load_csv::<f64>(csv, "")?, subject)?;
    let spec = if raw {
        // Spectrogram of the unmodulated low-rate series itself; the FM band
        // crop does not apply at this sampling rate.
        let w = vitalspec_core::fm::Waveform::new(
            record.series.values().to_vec(),
            1.0 / record.series.dt(),
        )?;
        let raw_cfg = StftConfig { band: None, ..cfg.stft };
        stft(&w, &raw_cfg)?
    } else {
        let normalized = normalize(&record.series, &cfg.normalization)?;
        let waveform = fm_modulate(&normalized.series, &cfg.fm)?;
        stft(&waveform, &cfg.stft)?
    };
    let provenance = format!("{}{}", record.subject_id, if raw { "/raw" } else { "/fm" });
    let image = render_image(&spec, provenance.clone())?;

    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    image.write_png(out.with_extension("png"))?;
    let sidecar = SpectrogramSidecar {
        provenance,
        raw,
        n_bins: spec.n_bins(),
        n_frames: spec.n_frames(),
        freq_lo_hz: spec.freq_axis[0],
        freq_hi_hz: *spec.freq_axis.last().expect("non-empty"),
        time_lo_s: spec.time_axis[0],
        time_hi_s: *spec.time_axis.last().expect("non-empty"),
        config: cfg.clone(),
    };
    std::fs::write(
        out.with_extension("json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    println!(
        "spectrogram {} ({} bins x {} frames) -> {}",
        sidecar.provenance,
        sidecar.n_bins,
        sidecar.n_frames,
        out.with_extension("png").display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct FixtureResult {
    fixture: String,
    pass: bool,
    metrics: RoundtripMetrics,
}

pub fn cmd_roundtrip(cfg: &SignalConfig, list_only: bool, out: Option<&Path>) -> CmdResult {
    let family = fixture_family::<f64>();
    if list_only {
        for (name, _) in &family {
            println!("{name}");
        }
        return Ok(());
    }
    // Keep at least a few analysis bins in the crop even when delta_f is
    // tiny; sub-bin deviations must fail in the metrics, not in validation.
    let bin = cfg.fm.fs / cfg.stft.n_fft as f64;
    let half_band = (2.0 * cfg.fm.delta_f).max(4.0 * bin);
    let stft_cfg = StftConfig {
        band: Some((cfg.fm.fc - half_band, cfg.fm.fc + half_band)),
        ..cfg.stft
    };
    let mut results = Vec::new();
    let mut all_pass = true;
    for (name, message) in &family {
        let metrics = roundtrip_report(message, &cfg.fm, &stft_cfg)?;
        let pass =
            metrics.pearson_r >= ROUNDTRIP_MIN_PEARSON && metrics.rmse <= ROUNDTRIP_MAX_RMSE;
        all_pass &= pass;
        println!(
            "{name:>20}: rmse={:.4} pearson_r={:.4} {}",
            metrics.rmse,
            metrics.pearson_r,
            if pass { "pass" } else { "FAIL" }
        );
        results.push(FixtureResult {
            fixture: (*name).to_string(),
            pass,
            metrics,
        });
    }
    let report = serde_json::json!({
        "thresholds": {"min_pearson_r": ROUNDTRIP_MIN_PEARSON, "max_rmse": ROUNDTRIP_MAX_RMSE},
        "results": results,
        "config": cfg,
    });
    if let Some(path) = out {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    if all_pass {
        Ok(())
    } else {
        Err(fail(1, "round-trip verification failed for at least one fixture"))
    }
}

/// Resolve a full preset bundle for the dataset-level commands.
pub fn resolve_preset(
    name: Option<PresetName>,
    config: Option<&Path>,
    seed: Option<u64>,
) -> Result<PresetConfig, CliError> {
    let mut bundle = match (config, name) {
        (Some(path), _) => load_preset_config(path)?,
        (None, Some(n)) => preset(n),
        (None, None) => return Err(fail(2, "need --preset or --config")),
    };
    if let Some(s) = seed {
        bundle.protocol.seed = s;
        bundle.synth.seed = s;
    }
    Ok(bundle)
}

pub fn cmd_synth(
    bundle: &PresetConfig,
    subjects_override: Option<usize>,
    out_dir: &Path,
) -> CmdResult {
    let mut synth_cfg = bundle.synth.clone();
    if let Some(n) = subjects_override {
        synth_cfg.pattern = match synth_cfg.pattern {
            ClassPattern::PerSubject { .. } => ClassPattern::PerSubject {
                negative: n / 2,
                positive: n - n / 2,
            },
            ClassPattern::AlternatingSegments { .. } => {
                ClassPattern::AlternatingSegments { subjects: n }
            }
        };
    }
    let records = if matches!(
        synth_cfg.pattern,
        ClassPattern::PerSubject { negative: 0, positive: 0 }
            | ClassPattern::AlternatingSegments { subjects: 0 }
    ) {
        Vec::new()
    } else {
        generate(&synth_cfg)?
    };
    std::fs::create_dir_all(out_dir)?;
    write_corpus_csv(out_dir.join("corpus.csv"), &records)?;
    let echo = PresetConfig {
        synth: synth_cfg,
        ..bundle.clone()
    };
    std::fs::write(
        out_dir.join("synth_config.json"),
        serde_json::to_string_pretty(&echo)?,
    )?;
    println!(
        "wrote {} subjects to {}",
        records.len(),
        out_dir.join("corpus.csv").display()
    );
    Ok(())
}

pub fn cmd_dataset(bundle: &PresetConfig, csv: &Path, out_dir: &Path) -> CmdResult {
    let records = load_csv::<f64>(csv, &bundle.synth.unit)?;
    let build = build_dataset(&records, &bundle.protocol);
    std::fs::create_dir_all(out_dir)?;
    write_dataset(out_dir, &build.samples, &bundle.protocol.hash())?;
    std::fs::write(
        out_dir.join("dataset_config.json"),
        serde_json::to_string_pretty(bundle)?,
    )?;
    if !build.failures.is_empty() {
        std::fs::write(
            out_dir.join("failures.json"),
            serde_json::to_string_pretty(&build.failures)?,
        )?;
    }
    let positives = build.samples.iter().filter(|s| s.label).count();
    println!(
        "dataset: {} samples ({} positive), {} record failures -> {}",
        build.samples.len(),
        positives,
        build.failures.len(),
        out_dir.display()
    );
    Ok(())
}

fn rmsprop_from(bundle: &PresetConfig) -> RmsPropConfig<f64> {
    RmsPropConfig {
        batch_size: bundle.train.batch_size,
        ..RmsPropConfig::new(
            bundle.train.learning_rate,
            bundle.train.epochs,
            bundle.protocol.seed,
        )
    }
}

pub fn cmd_train(bundle: &PresetConfig, manifest_dir: &Path, out_dir: &Path) -> CmdResult {
    let samples = load_dataset::<f64>(manifest_dir)?;
    if samples.is_empty() {
        return Err(fail(2, "manifest is empty"));
    }
    let subjects: std::collections::BTreeSet<&str> =
        samples.iter().map(|s| s.subject_id.as_str()).collect();
    let k = match bundle.train.folds {
        FoldScheme::KFold { k } => k,
        FoldScheme::LeaveOneOut => subjects.len(),
    };
    let folds = subject_kfold(&samples, k, bundle.protocol.seed)?;
    let cv_cfg = CrossValidateConfig {
        train: rmsprop_from(bundle),
        snapshot_every: bundle.train.snapshot_every,
        channels: bundle.train.channels,
        vote_last: bundle.train.vote_last,
    };
    let report = cross_validate(&samples, &folds, &cv_cfg)?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join("metrics.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    std::fs::write(
        out_dir.join("train_config.json"),
        serde_json::to_string_pretty(bundle)?,
    )?;

    // Final model on the full dataset; its snapshots are what `evaluate`
    // consumes.
    let items: Vec<TrainItem<f64>> = samples.iter().map(TrainItem::from_sample).collect();
    let mut model = ShallowCnn::<f64>::new(bundle.train.channels, bundle.protocol.seed);
    let run = train(&mut model, &items, &rmsprop_from(bundle), bundle.train.snapshot_every)?;
    for snap in run.ensemble.snapshots() {
        save_snapshot(
            out_dir.join(format!("snap_epoch_{:04}", snap.epoch)),
            &snap.model,
            snap.epoch,
            bundle.protocol.seed,
        )?;
    }
    print_metrics("cross-validation", &report);
    println!(
        "saved {} snapshots and metrics.json to {}",
        run.ensemble.snapshots().len(),
        out_dir.display()
    );
    Ok(())
}

pub fn cmd_evaluate(
    bundle: &PresetConfig,
    manifest_dir: &Path,
    snapshot_dir: &Path,
    out: Option<&Path>,
) -> CmdResult {
    let samples = load_dataset::<f64>(manifest_dir)?;
    let originals: Vec<_> = samples
        .iter()
        .filter(|s| s.augmentation_index == 0)
        .collect();
    if originals.is_empty() {
        return Err(fail(2, "manifest has no original samples"));
    }
    let mut snapshots: Vec<Snapshot<f64>> = Vec::new();
    for entry in std::fs::read_dir(snapshot_dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "params") {
            let base = path.with_extension("");
            let (model, header) = load_snapshot::<f64>(&base)?;
            snapshots.push(Snapshot {
                epoch: header.epoch,
                model,
            });
        }
    }
    if snapshots.is_empty() {
        return Err(fail(2, format!("no snapshots in {}", snapshot_dir.display())));
    }
    snapshots.sort_by_key(|s| s.epoch);
    let ensemble = SnapshotEnsemble::with_last_n_votes(snapshots, bundle.train.vote_last)?;
    let report = evaluate(&ensemble, &originals)?;
    print_metrics("evaluation", &report);
    let out = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| manifest_dir.join("evaluation.json"));
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(&out, serde_json::to_string_pretty(&report)?)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn print_metrics(stage: &str, report: &MetricsReport) {
    let auc = report
        .auc
        .map(|a| format!("{a:.4}"))
        .unwrap_or_else(|| "undefined (single-class)".into());
    println!(
        "{stage}: accuracy {:.2}% | precision {:.2}% recall {:.2}% f1 {:.2}% | auc {auc}",
        report.accuracy, report.overall.precision, report.overall.recall, report.overall.f1
    );
}
