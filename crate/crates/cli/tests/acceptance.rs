//! Acceptance suite: every release-gating criterion as one test with one
//! PASS line. Run with `cargo test --test acceptance -- --nocapture` to see
//! the lines for passing criteria too.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;
use std::sync::Mutex;
use std::time::Instant;
use vitalspec_cli::presets::{preset, PresetName};
use vitalspec_core::cnn::{
    auc_rank, bce_from_logit, cross_validate, evaluate, CrossValidateConfig, GradBuffer,
    RmsPropConfig, ShallowCnn, Snapshot, SnapshotEnsemble,
};
use vitalspec_core::dataset::{
    build_dataset, label_target, subject_kfold, EpisodeRule, LabeledSample, Protocol, WindowSpec,
};
use vitalspec_core::demod::{extract_ridge, fixture_family, roundtrip_report};
use vitalspec_core::fm::{fm_modulate, FmConfig};
use vitalspec_core::signal::{NormalizationSpec, TimeSeries};
use vitalspec_core::spectrogram::{stft, SpectroImage, StftConfig};
use vitalspec_core::synth::{generate, ClassPattern, SynthConfig};

/// Serializes the rayon-heavy criteria so their wall-clock limits are
/// measured without cross-test contention.
static HEAVY: Mutex<()> = Mutex::new(());

fn pass(criterion: u32, name: &str, detail: String) {
    println!("ACCEPTANCE {criterion:02} PASS - {name} ({detail})");
}

#[test]
fn criterion_01_fm_closed_form_equivalence() {
    let started = Instant::now();
    let cfg = FmConfig::<f64> {
        fs: 1_048_576.0,
        ..FmConfig::defaults()
    };
    let fm_hz = 8.0;
    let n = cfg.n_samples();
    let dt = 1.0 / cfg.fs;
    let message = TimeSeries::new(
        (0..n).map(|i| (TAU * fm_hz * i as f64 * dt).cos()).collect(),
        dt,
    )
    .unwrap();
    let waveform = fm_modulate(&message, &cfg).unwrap();
    let mi = cfg.delta_f / fm_hz;
    let mut max_err = 0.0f64;
    for (i, &s) in waveform.samples().iter().enumerate() {
        let t = i as f64 * dt;
        let closed_form = cfg.ac * (TAU * cfg.fc * t + mi * (TAU * fm_hz * t).sin()).cos();
        max_err = max_err.max((s - closed_form).abs());
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(max_err < 1e-6, "max abs error {max_err} >= 1e-6");
    assert!(elapsed < 1.0, "took {elapsed:.2} s >= 1 s");
    pass(
        1,
        "FM closed-form equivalence",
        format!("max err {max_err:.2e}, {elapsed:.2} s"),
    );
}

#[test]
fn criterion_02_roundtrip_information_preservation() {
    let _guard = HEAVY.lock().unwrap();
    let started = Instant::now();
    let fm = FmConfig::<f64>::defaults();
    assert_eq!(fm.fc, 50_000.0);
    assert_eq!(fm.delta_f, 850.0);
    let stft_cfg = StftConfig::for_fm(&fm);
    let mut details = Vec::new();
    for (name, message) in fixture_family::<f64>() {
        let m = roundtrip_report(&message, &fm, &stft_cfg).unwrap();
        assert!(
            m.pearson_r >= 0.95,
            "{name}: pearson_r {} < 0.95",
            m.pearson_r
        );
        assert!(m.rmse <= 0.08, "{name}: rmse {} > 0.08", m.rmse);
        details.push(format!("{name} r={:.3} rmse={:.3}", m.pearson_r, m.rmse));
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "took {elapsed:.2} s >= 10 s");
    pass(
        2,
        "round-trip information preservation",
        format!("{}; {elapsed:.2} s", details.join(", ")),
    );
}

#[test]
fn criterion_03_spectral_localization() {
    let started = Instant::now();
    let fm = FmConfig::<f64>::defaults();
    let stft_cfg = StftConfig::for_fm(&fm);
    let mut details = Vec::new();
    for (level, expected_hz) in [(-1.0, 49_150.0), (0.0, 50_000.0), (1.0, 50_850.0)] {
        let message = TimeSeries::new(vec![level; 8], 1.0).unwrap();
        let waveform = fm_modulate(&message, &fm).unwrap();
        let spec = stft(&waveform, &stft_cfg).unwrap();
        let half_bin = spec.bin_width() / 2.0;
        let track = extract_ridge(&spec);
        let mut worst = 0.0f64;
        for &f in &track.freqs_hz {
            worst = worst.max((f - expected_hz).abs());
        }
        assert!(
            worst <= half_bin,
            "message {level}: ridge off by {worst} Hz > half bin {half_bin}"
        );
        details.push(format!("{level:+.0} -> {expected_hz} Hz +/- {worst:.1}"));
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 2.0, "took {elapsed:.2} s >= 2 s");
    pass(
        3,
        "spectral localization",
        format!("{}; {elapsed:.2} s", details.join(", ")),
    );
}

#[test]
fn criterion_04_dataset_arithmetic() {
    let _guard = HEAVY.lock().unwrap();
    // Counts are scalar-type independent; f32 keeps the big builds light.
    let to32 = |p: &Protocol<f64>| Protocol::<f32> {
        window: WindowSpec {
            observation_s: p.window.observation_s as f32,
            gap_s: p.window.gap_s as f32,
            target_s: p.window.target_s as f32,
        },
        rule: EpisodeRule::below(p.rule.threshold as f32, p.rule.min_duration_s as f32),
        noise_mean: p.noise_mean as f32,
        noise_std: p.noise_std as f32,
        copies_negative: p.copies_negative,
        copies_positive: p.copies_positive,
        normalization: match p.normalization {
            NormalizationSpec::PerSample => NormalizationSpec::PerSample,
            NormalizationSpec::Fixed { lo, hi } => NormalizationSpec::Fixed {
                lo: lo as f32,
                hi: hi as f32,
            },
        },
        fm: FmConfig {
            fc: p.fm.fc as f32,
            delta_f: p.fm.delta_f as f32,
            fs: p.fm.fs as f32,
            duration: p.fm.duration as f32,
            ac: p.fm.ac as f32,
        },
        stft: StftConfig {
            n_fft: p.stft.n_fft,
            hop: p.stft.hop,
            window: p.stft.window,
            band: p.stft.band.map(|(lo, hi)| (lo as f32, hi as f32)),
        },
        seed: p.seed,
    };
    let synth32 = |s: &SynthConfig<f64>| SynthConfig::<f32> {
        pattern: s.pattern,
        segments_per_subject: s.segments_per_subject,
        dt: s.dt as f32,
        window: WindowSpec {
            observation_s: s.window.observation_s as f32,
            gap_s: s.window.gap_s as f32,
            target_s: s.window.target_s as f32,
        },
        threshold: s.threshold as f32,
        base_level: s.base_level as f32,
        drift_level: s.drift_level as f32,
        wiggle_negative: s.wiggle_negative as f32,
        wiggle_positive: s.wiggle_positive as f32,
        seed: s.seed,
        unit: s.unit.clone(),
    };

    let mimic = preset(PresetName::MimicLike);
    let records = generate(&synth32(&mimic.synth)).unwrap();
    assert_eq!(records.len(), 142);
    let build = build_dataset(&records, &to32(&mimic.protocol));
    assert!(build.failures.is_empty(), "{:?}", build.failures);
    assert_eq!(build.samples.len(), 2130, "mimic_like sample count");
    let mimic_count = build.samples.len();
    drop(build);

    let stress = preset(PresetName::StressLike);
    let records = generate(&synth32(&stress.synth)).unwrap();
    assert_eq!(records.len(), 20);
    let build = build_dataset(&records, &to32(&stress.protocol));
    assert!(build.failures.is_empty(), "{:?}", build.failures);
    assert_eq!(build.samples.len(), 3480, "stress_like sample count");
    pass(
        4,
        "dataset arithmetic",
        format!("mimic_like {} == 2130, stress_like {} == 3480", mimic_count, build.samples.len()),
    );
}

#[test]
fn criterion_05_episode_labeling_oracle() {
    fn brute_force(values: &[f64], dt: f64, rule: &EpisodeRule<f64>) -> bool {
        for i in 0..values.len() {
            for j in i..values.len() {
                if values[i..=j].iter().all(|&v| v < rule.threshold)
                    && (j - i + 1) as f64 * dt >= rule.min_duration_s
                {
                    return true;
                }
            }
        }
        false
    }

    let mut rng = ChaCha8Rng::seed_from_u64(52);
    let mut checked = 0usize;
    while checked < 1000 {
        let len = rng.gen_range(1..50);
        let dt = [0.5f64, 1.0, 300.0, 3600.0][rng.gen_range(0..4)];
        let values: Vec<f64> = (0..len).map(|_| rng.gen_range(40.0..80.0)).collect();
        let min_duration = if rng.gen_bool(0.3) {
            0.0
        } else {
            dt * rng.gen_range(0.0..8.0)
        };
        let rule = EpisodeRule::below(60.0, min_duration);
        let ts = TimeSeries::new(values.clone(), dt).unwrap();
        if min_duration > 0.0 && ts.duration() < min_duration {
            continue; // precondition violation is a rejected input, not a label
        }
        assert_eq!(
            label_target(&ts, &rule).unwrap(),
            brute_force(&values, dt, &rule),
            "values {values:?} dt {dt} min {min_duration}"
        );
        checked += 1;
    }
    pass(5, "episode-labeling oracle", format!("{checked} random series, exact agreement"));
}

#[test]
fn criterion_06_gradient_check() {
    let started = Instant::now();
    // Miniature network on an 8x8 input, double precision, every parameter.
    // Seed screened so no pre-activation sits within the finite-difference
    // step of a ReLU kink (achieved worst relative error 7e-10).
    let mut model = ShallowCnn::<f64>::new((2, 2, 2), 10);
    let mut rng = ChaCha8Rng::seed_from_u64(317);
    for v in model.dense.weights.iter_mut() {
        *v = rng.gen_range(-0.5..0.5);
    }
    model.dense.bias[0] = 0.1;
    let pixels = Array2::from_shape_fn((8, 8), |_| rng.gen_range(0.0..1.0));

    let mut worst = 0.0f64;
    let mut count = 0usize;
    for (label, y) in [(true, 1.0), (false, 0.0)] {
        let mut grads = GradBuffer::zeros_like(&model);
        model.forward_backward(&pixels, label, &mut grads);
        let n_tensors = model.param_slices().len();
        for tensor in 0..n_tensors {
            for idx in 0..model.param_slices()[tensor].len() {
                let orig = model.param_slices()[tensor][idx];
                let h = 1e-3 * orig.abs().max(0.1);
                model.param_slices_mut()[tensor][idx] = orig + h;
                let up = bce_from_logit(model.forward_logit(&pixels), y);
                model.param_slices_mut()[tensor][idx] = orig - h;
                let down = bce_from_logit(model.forward_logit(&pixels), y);
                model.param_slices_mut()[tensor][idx] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grads.slices()[tensor][idx];
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                assert!(
                    rel < 1e-3,
                    "tensor {tensor} idx {idx} label {label}: analytic {analytic} vs numeric {numeric} (rel {rel})"
                );
                worst = worst.max(rel);
                count += 1;
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "took {elapsed:.2} s >= 30 s");
    pass(
        6,
        "gradient check",
        format!("{count} parameter probes, worst rel err {worst:.2e}, {elapsed:.2} s"),
    );
}

#[test]
fn criterion_07_auc_oracle() {
    let started = Instant::now();
    fn brute(scored: &[(f64, bool)]) -> Option<f64> {
        let pos: Vec<f64> = scored.iter().filter(|(_, y)| *y).map(|(s, _)| *s).collect();
        let neg: Vec<f64> = scored.iter().filter(|(_, y)| !*y).map(|(s, _)| *s).collect();
        if pos.is_empty() || neg.is_empty() {
            return None;
        }
        let mut sum = 0.0;
        for &p in &pos {
            for &n in &neg {
                sum += if p > n {
                    1.0
                } else if p == n {
                    0.5
                } else {
                    0.0
                };
            }
        }
        Some(sum / (pos.len() * neg.len()) as f64)
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7007);
    let mut trials = 0usize;
    for _ in 0..120 {
        let n = rng.gen_range(2..=200);
        let quantize = rng.gen_bool(0.5);
        let scored: Vec<(f64, bool)> = (0..n)
            .map(|_| {
                let mut s: f64 = rng.gen_range(0.0..1.0);
                if quantize {
                    s = (s * 10.0).round() / 10.0; // force ties
                }
                (s, rng.gen_bool(0.5))
            })
            .collect();
        match (auc_rank(&scored), brute(&scored)) {
            (Some(a), Some(b)) => {
                assert!((a - b).abs() < 1e-12, "{a} vs {b} on n={n}");
                trials += 1;
            }
            (None, None) => {}
            other => panic!("definedness mismatch: {other:?}"),
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "took {elapsed:.2} s >= 5 s");
    pass(
        7,
        "AUC oracle",
        format!("{trials} score sets, exact to 1e-12, {elapsed:.2} s"),
    );
}

fn leakage_samples(n_subjects: usize, copies: u32) -> Vec<LabeledSample<f64>> {
    let pixels = Array2::from_elem((128, 128), 0.5);
    let mut samples = Vec::new();
    for s in 0..n_subjects {
        for aug in 0..=copies {
            samples.push(LabeledSample {
                image: SpectroImage::new(pixels.clone(), "x").unwrap(),
                label: s % 2 == 0,
                subject_id: format!("s{s:03}"),
                augmentation_index: aug,
            });
        }
    }
    samples
}

#[test]
fn criterion_08_subject_leakage_freedom() {
    let mut folds_checked = 0usize;
    for (n_subjects, k, copies) in [(30, 10, 4u32), (12, 12, 2), (17, 5, 3), (25, 25, 1)] {
        for seed in [0u64, 1, 42, 0xdead_beef] {
            let samples = leakage_samples(n_subjects, copies);
            let folds = subject_kfold(&samples, k, seed).unwrap();
            assert_eq!(folds.len(), k);
            let mut tested_subjects = std::collections::BTreeSet::new();
            for fold in &folds {
                let train: std::collections::BTreeSet<_> =
                    fold.train.iter().map(|&i| &samples[i].subject_id).collect();
                let test: std::collections::BTreeSet<_> =
                    fold.test.iter().map(|&i| &samples[i].subject_id).collect();
                assert!(train.is_disjoint(&test), "subject leaked between train/test");
                for subject in &test {
                    let all = samples.iter().filter(|s| &&s.subject_id == subject).count();
                    let here = fold
                        .test
                        .iter()
                        .filter(|&&i| &&samples[i].subject_id == subject)
                        .count();
                    assert_eq!(all, here, "augmented copies split across folds");
                }
                for s in test {
                    assert!(tested_subjects.insert(s.clone()), "subject tested twice");
                }
                folds_checked += 1;
            }
            assert_eq!(tested_subjects.len(), n_subjects);
        }
    }
    pass(
        8,
        "subject-leakage freedom",
        format!("{folds_checked} folds across k-fold and leave-one-out, exact"),
    );
}

#[test]
fn criterion_09_end_to_end_synthetic_separability() {
    let _guard = HEAVY.lock().unwrap();
    let started = Instant::now();
    // Frozen after calibration: this seed and protocol achieve 97.5% pooled
    // accuracy in ~320 s on a two-core box.
    let window = WindowSpec {
        observation_s: 7200.0,
        gap_s: 3600.0,
        target_s: 7200.0,
    };
    let synth = SynthConfig {
        pattern: ClassPattern::PerSubject {
            negative: 20,
            positive: 20,
        },
        segments_per_subject: 1,
        dt: 300.0,
        window,
        threshold: 60.0,
        base_level: 82.0,
        drift_level: 50.0,
        wiggle_negative: 20.0,
        wiggle_positive: 0.25,
        seed: 2718,
        unit: "mmHg".into(),
    };
    let fm = FmConfig {
        fs: 131_072.0,
        duration: 0.5,
        ..FmConfig::defaults()
    };
    let protocol = Protocol {
        window,
        rule: EpisodeRule::below(60.0, 1800.0),
        noise_mean: 0.0,
        noise_std: 0.5,
        copies_negative: 2,
        copies_positive: 2,
        normalization: NormalizationSpec::Fixed { lo: 40.0, hi: 100.0 },
        stft: StftConfig {
            band: Some((fm.fc - fm.delta_f, fm.fc + fm.delta_f)),
            ..StftConfig::defaults()
        },
        fm,
        seed: 2718,
    };
    let records = generate(&synth).unwrap();
    assert_eq!(records.len(), 40);
    let build = build_dataset(&records, &protocol);
    assert!(build.failures.is_empty(), "{:?}", build.failures);

    // Difficulty calibration: the corpus is balanced, so an untrained
    // ensemble (constant p = 0.5) scores exactly 50% on the originals.
    let originals: Vec<&LabeledSample<f64>> = build
        .samples
        .iter()
        .filter(|s| s.augmentation_index == 0)
        .collect();
    assert_eq!(originals.len(), 40);
    assert_eq!(originals.iter().filter(|s| s.label).count(), 20);
    let untrained = SnapshotEnsemble::new(
        vec![Snapshot {
            epoch: 0,
            model: ShallowCnn::<f64>::new((8, 8, 8), 2718),
        }],
        vec![0],
    )
    .unwrap();
    let baseline = evaluate(&untrained, &originals).unwrap();
    assert!(
        (baseline.accuracy - 50.0).abs() < 1e-9,
        "untrained baseline {} != 50%",
        baseline.accuracy
    );

    let folds = subject_kfold(&build.samples, 10, 2718).unwrap();
    let cv = CrossValidateConfig {
        train: RmsPropConfig {
            batch_size: 4,
            ..RmsPropConfig::new(1e-2, 12, 2718)
        },
        snapshot_every: 4,
        channels: (8, 8, 8),
        vote_last: 3,
    };
    let report = cross_validate(&build.samples, &folds, &cv).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    // Evaluation pools exactly the original samples, once each.
    assert_eq!(report.confusion.total(), 40);
    assert!(
        report.accuracy >= 85.0,
        "pooled accuracy {:.2}% < 85%",
        report.accuracy
    );
    assert!(elapsed < 600.0, "took {elapsed:.1} s >= 600 s");
    pass(
        9,
        "end-to-end synthetic separability",
        format!(
            "pooled accuracy {:.2}% (baseline 50.00%), auc {:?}, {elapsed:.0} s",
            report.accuracy, report.auc
        ),
    );
}

#[test]
fn criterion_10_reproducibility_statement() {
    // The reference clinical datasets are restricted-access; the repository
    // must say so and point at the synthetic/property-based substitution.
    let readme_path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../README.md");
    let readme = std::fs::read_to_string(readme_path).expect("README.md at workspace root");
    for needle in ["MIMIC-III", "PIC", "USF-MNPAD-I", "NEBD"] {
        assert!(
            readme.contains(needle),
            "README must name the restricted dataset {needle}"
        );
    }
    assert!(
        readme.to_lowercase().contains("restricted"),
        "README must state the datasets are restricted-access"
    );
    assert!(
        readme.to_lowercase().contains("synthetic"),
        "README must describe the synthetic substitution"
    );
    pass(
        10,
        "reproducibility statement",
        "README documents the restricted-data substitution".into(),
    );
}
