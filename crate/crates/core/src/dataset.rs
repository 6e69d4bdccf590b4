//! Turn raw subject records into labeled, augmented, subject-split datasets:
//! window splitting, episode labeling, Gaussian-noise augmentation, grouped
//! k-fold assignment, and the end-to-end build into spectrogram images.

use crate::error::{Error, Result};
use crate::fm::{fm_modulate, FmConfig};
use crate::scalar::{cast, to_f64, Real};
use crate::signal::{normalize, NormalizationSpec, SubjectRecord, TimeSeries};
use crate::spectrogram::{render_image, stft, SpectroImage, StftConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;

/// Observation / gap / target durations in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec<T> {
    pub observation_s: T,
    pub gap_s: T,
    pub target_s: T,
}

impl<T: Real> WindowSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.observation_s > T::zero() && self.gap_s > T::zero() && self.target_s > T::zero())
        {
            return Err(Error::InvalidConfig(
                "window durations must all be strictly positive".into(),
            ));
        }
        Ok(())
    }

    /// Total seconds one observation+gap+target segment spans.
    pub fn segment_s(&self) -> T {
        self.observation_s + self.gap_s + self.target_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    Below,
}

/// Episode definition: a contiguous run of samples past the threshold whose
/// time extent reaches `min_duration_s`. A sample at interval dt counts as dt
/// seconds of coverage, so a run of k samples spans k*dt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRule<T> {
    pub threshold: T,
    pub min_duration_s: T,
    pub comparator: Comparator,
}

impl<T: Real> EpisodeRule<T> {
    pub fn below(threshold: T, min_duration_s: T) -> Self {
        Self {
            threshold,
            min_duration_s,
            comparator: Comparator::Below,
        }
    }
}

/// 1 iff some contiguous run of below-threshold samples covers at least
/// `min_duration_s`; with min_duration_s = 0 any single below-threshold
/// sample triggers.
pub fn label_target<T: Real>(target: &TimeSeries<T>, rule: &EpisodeRule<T>) -> Result<bool> {
    if rule.min_duration_s > T::zero() && target.duration() < rule.min_duration_s {
        return Err(Error::SeriesTooShort {
            required_s: to_f64(rule.min_duration_s),
            actual_s: to_f64(target.duration()),
        });
    }
    let Comparator::Below = rule.comparator;
    let mut run = 0usize;
    for &v in target.values() {
        if v < rule.threshold {
            run += 1;
            let extent = cast::<T>(run as f64) * target.dt();
            if extent >= rule.min_duration_s {
                return Ok(true);
            }
        } else {
            run = 0;
        }
    }
    Ok(false)
}

/// Samples per window at interval dt, by rounding seconds/dt.
fn window_samples<T: Real>(seconds: T, dt: T) -> usize {
    to_f64(seconds / dt).round() as usize
}

/// Samples one observation+gap+target segment occupies at interval dt.
pub fn samples_per_segment<T: Real>(spec: &WindowSpec<T>, dt: T) -> usize {
    window_samples(spec.observation_s, dt)
        + window_samples(spec.gap_s, dt)
        + window_samples(spec.target_s, dt)
}

/// Slice a series into its observation and target windows; gap data is
/// discarded.
pub fn split_windows<T: Real>(
    ts: &TimeSeries<T>,
    spec: &WindowSpec<T>,
) -> Result<(TimeSeries<T>, TimeSeries<T>)> {
    spec.validate()?;
    let dt = ts.dt();
    let n_obs = window_samples(spec.observation_s, dt);
    let n_gap = window_samples(spec.gap_s, dt);
    let n_target = window_samples(spec.target_s, dt);
    if n_obs == 0 || n_target == 0 {
        return Err(Error::InvalidConfig(
            "window shorter than one sample interval".into(),
        ));
    }
    let target_start = n_obs + n_gap;
    let needed = target_start + n_target;
    if ts.len() < needed {
        return Err(Error::SeriesTooShort {
            required_s: to_f64(spec.segment_s()),
            actual_s: to_f64(ts.duration()),
        });
    }
    let observation = ts.map_values(ts.values()[..n_obs].to_vec())?;
    let target = ts
        .map_values(ts.values()[target_start..target_start + n_target].to_vec())?
        .with_start_time(ts.start_time() + cast::<T>(target_start as f64) * dt);
    Ok((observation, target))
}

/// Gaussian-noise augmentation parameters; noise is in raw signal units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig<T> {
    pub noise_mean: T,
    pub noise_std: T,
    pub copies: u32,
    pub seed: u64,
}

impl<T: Real> AugmentConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.noise_std < T::zero() || !self.noise_std.is_finite() {
            return Err(Error::InvalidConfig("noise_std must be >= 0".into()));
        }
        Ok(())
    }
}

/// `copies` noisy variants of the series (originals not included),
/// deterministic for a given seed.
pub fn augment<T: Real>(ts: &TimeSeries<T>, cfg: &AugmentConfig<T>) -> Result<Vec<TimeSeries<T>>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mean = to_f64(cfg.noise_mean);
    let std = to_f64(cfg.noise_std);
    let mut out = Vec::with_capacity(cfg.copies as usize);
    for _ in 0..cfg.copies {
        let values = if std == 0.0 {
            ts.values().iter().map(|&v| v + cfg.noise_mean).collect()
        } else {
            let normal = Normal::new(mean, std)
                .map_err(|e| Error::InvalidConfig(format!("bad noise parameters: {e}")))?;
            ts.values()
                .iter()
                .map(|&v| v + cast::<T>(normal.sample(&mut rng)))
                .collect()
        };
        out.push(ts.map_values(values)?);
    }
    Ok(out)
}

/// One observation-window spectrogram image with its label and provenance.
#[derive(Debug, Clone)]
pub struct LabeledSample<T> {
    pub image: SpectroImage<T>,
    pub label: bool,
    pub subject_id: String,
    /// 0 marks the original; augmented copies count from 1.
    pub augmentation_index: u32,
}

/// One train/test split at subject granularity. Indices refer to the sample
/// slice the folds were built from.
#[derive(Debug, Clone)]
pub struct Fold {
    pub test_subjects: Vec<String>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Partition subjects (never individual samples) into k folds; all samples of
/// a subject, augmented copies included, land in exactly one test fold.
/// Leave-one-out is k = number of subjects.
pub fn subject_kfold<T>(samples: &[LabeledSample<T>], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::BadFoldCount(k));
    }
    let subjects: BTreeSet<&str> = samples.iter().map(|s| s.subject_id.as_str()).collect();
    if subjects.len() < k {
        return Err(Error::TooFewSubjects {
            k,
            subjects: subjects.len(),
        });
    }
    let mut ordered: Vec<&str> = subjects.into_iter().collect();
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ordered.shuffle(&mut rng);

    let mut folds: Vec<Fold> = (0..k)
        .map(|_| Fold {
            test_subjects: Vec::new(),
            train: Vec::new(),
            test: Vec::new(),
        })
        .collect();
    for (j, subject) in ordered.iter().enumerate() {
        folds[j % k].test_subjects.push((*subject).to_string());
    }
    for fold in &mut folds {
        fold.test_subjects.sort();
    }
    for (idx, sample) in samples.iter().enumerate() {
        for fold in folds.iter_mut() {
            if fold
                .test_subjects
                .binary_search_by(|s| s.as_str().cmp(sample.subject_id.as_str()))
                .is_ok()
            {
                fold.test.push(idx);
            } else {
                fold.train.push(idx);
            }
        }
    }
    Ok(folds)
}

/// Full parameter bundle for a dataset build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol<T> {
    pub window: WindowSpec<T>,
    pub rule: EpisodeRule<T>,
    pub noise_mean: T,
    pub noise_std: T,
    /// Augmented copies per negative-labeled sample.
    pub copies_negative: u32,
    /// Augmented copies per positive-labeled sample.
    pub copies_positive: u32,
    pub normalization: NormalizationSpec<T>,
    pub fm: FmConfig<T>,
    pub stft: StftConfig<T>,
    pub seed: u64,
}

impl<T: Real + Serialize> Protocol<T> {
    /// Stable content hash, recorded in manifests so a dataset can be traced
    /// back to the exact configuration that produced it.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("protocol serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A record that failed to process; the build continues past it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordFailure {
    pub subject_id: String,
    pub segment: Option<usize>,
    pub message: String,
}

/// Output of `build_dataset`: the samples that built cleanly plus every
/// per-record failure.
#[derive(Debug, Clone)]
pub struct DatasetBuild<T> {
    pub samples: Vec<LabeledSample<T>>,
    pub failures: Vec<RecordFailure>,
}

/// FNV-1a over the subject id mixed with the global seed and segment index;
/// gives each record its own deterministic noise stream.
pub fn derive_record_seed(global: u64, subject_id: &str, segment: usize) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in subject_id.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^ global.rotate_left(17) ^ (segment as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn build_record<T: Real>(
    record: &SubjectRecord<T>,
    protocol: &Protocol<T>,
) -> (Vec<LabeledSample<T>>, Vec<RecordFailure>) {
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    let fail = |segment, e: &Error| RecordFailure {
        subject_id: record.subject_id.clone(),
        segment,
        message: e.to_string(),
    };

    let seg_len = samples_per_segment(&protocol.window, record.series.dt());
    if seg_len == 0 || record.series.len() < seg_len {
        failures.push(fail(
            None,
            &Error::SeriesTooShort {
                required_s: to_f64(protocol.window.segment_s()),
                actual_s: to_f64(record.series.duration()),
            },
        ));
        return (samples, failures);
    }
    let n_segments = record.series.len() / seg_len;

    for seg in 0..n_segments {
        let values = record.series.values()[seg * seg_len..(seg + 1) * seg_len].to_vec();
        let segment_series = match record.series.map_values(values) {
            Ok(s) => s,
            Err(e) => {
                failures.push(fail(Some(seg), &e));
                continue;
            }
        };
        let result = (|| -> Result<()> {
            let (observation, target) = split_windows(&segment_series, &protocol.window)?;
            let label = label_target(&target, &protocol.rule)?;
            let copies = if label {
                protocol.copies_positive
            } else {
                protocol.copies_negative
            };
            let aug_cfg = AugmentConfig {
                noise_mean: protocol.noise_mean,
                noise_std: protocol.noise_std,
                copies,
                seed: derive_record_seed(protocol.seed, &record.subject_id, seg),
            };
            let mut variants = vec![observation.clone()];
            variants.extend(augment(&observation, &aug_cfg)?);
            for (aug_idx, variant) in variants.into_iter().enumerate() {
                let normalized = normalize(&variant, &protocol.normalization)?;
                let waveform = fm_modulate(&normalized.series, &protocol.fm)?;
                let spec = stft(&waveform, &protocol.stft)?;
                let provenance =
                    format!("{}/seg{}/aug{}", record.subject_id, seg, aug_idx);
                let image = render_image(&spec, provenance)?;
                samples.push(LabeledSample {
                    image,
                    label,
                    subject_id: record.subject_id.clone(),
                    augmentation_index: aug_idx as u32,
                });
            }
            Ok(())
        })();
        if let Err(e) = result {
            failures.push(fail(Some(seg), &e));
        }
    }
    (samples, failures)
}

/// Run the full per-record pipeline: segment -> split -> label -> augment ->
/// normalize -> modulate -> stft -> render. Records are processed in
/// parallel with per-record seeds; output order is canonical (subject id,
/// segment, augmentation index). Failures are collected, not fatal.
pub fn build_dataset<T: Real>(
    records: &[SubjectRecord<T>],
    protocol: &Protocol<T>,
) -> DatasetBuild<T> {
    let mut ordered: Vec<&SubjectRecord<T>> = records.iter().collect();
    ordered.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
    let per_record: Vec<_> = ordered
        .par_iter()
        .map(|record| build_record(record, protocol))
        .collect();
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for (s, f) in per_record {
        samples.extend(s);
        failures.extend(f);
    }
    DatasetBuild { samples, failures }
}

/// One line of `manifest.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub label: u8,
    pub subject_id: String,
    pub augmentation_index: u32,
    pub protocol: String,
}

/// Write samples as PNGs plus a `manifest.jsonl` into `dir`.
pub fn write_dataset<T: Real>(
    dir: impl AsRef<Path>,
    samples: &[LabeledSample<T>],
    protocol_hash: &str,
) -> Result<Vec<ManifestEntry>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(samples.len());
    let manifest_path = dir.join("manifest.jsonl");
    let mut manifest = std::io::BufWriter::new(std::fs::File::create(&manifest_path)?);
    for (i, sample) in samples.iter().enumerate() {
        let name = format!("sample_{i:05}.png");
        sample.image.write_png(dir.join(&name))?;
        let entry = ManifestEntry {
            path: name,
            label: u8::from(sample.label),
            subject_id: sample.subject_id.clone(),
            augmentation_index: sample.augmentation_index,
            protocol: protocol_hash.to_string(),
        };
        writeln!(manifest, "{}", serde_json::to_string(&entry)?)?;
        entries.push(entry);
    }
    manifest.flush()?;
    Ok(entries)
}

/// Load a dataset previously written by `write_dataset`; pixel values come
/// back 8-bit quantized.
pub fn load_dataset<T: Real>(dir: impl AsRef<Path>) -> Result<Vec<LabeledSample<T>>> {
    let dir = dir.as_ref();
    let file = std::fs::File::open(dir.join("manifest.jsonl"))?;
    let mut samples = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(&line)?;
        let image = SpectroImage::read_png(dir.join(&entry.path), entry.path.clone())?;
        samples.push(LabeledSample {
            image,
            label: entry.label == 1,
            subject_id: entry.subject_id,
            augmentation_index: entry.augmentation_index,
        });
    }
    Ok(samples)
}
