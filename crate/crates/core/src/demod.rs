//! Verification oracle: recover the message from an FM spectrogram by ridge
//! extraction and quantify how much of the original amplitude survives the
//! modulate -> spectrogram round trip.

use crate::error::{Error, Result};
use crate::fm::{fm_modulate, FmConfig};
use crate::scalar::{cast, to_f64, Real};
use crate::signal::{lerp_at, TimeSeries};
use crate::spectrogram::{stft, Spectrogram, StftConfig};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Frames dropped from each end of the comparison; windowing transients make
/// the outermost ridge estimates unrepresentative.
pub const EDGE_FRAMES: usize = 2;

/// Per-frame ridge frequency with frame-center timestamps.
#[derive(Debug, Clone)]
pub struct RidgeTrack<T> {
    pub freqs_hz: Vec<T>,
    pub times_s: Vec<T>,
}

impl<T: Real> RidgeTrack<T> {
    pub fn len(&self) -> usize {
        self.freqs_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs_hz.is_empty()
    }
}

/// Per-frame argmax refined by 3-point parabolic interpolation on the dB
/// magnitudes. Edge-bin maxima keep the raw argmax.
pub fn extract_ridge<T: Real>(s: &Spectrogram<T>) -> RidgeTrack<T> {
    let n_bins = s.n_bins();
    let bin_width = s.bin_width();
    let half = cast::<T>(0.5);
    let mut freqs = Vec::with_capacity(s.n_frames());
    for col in s.mags_db.columns() {
        let mut k = 0usize;
        let mut best = col[0];
        for (i, &v) in col.iter().enumerate() {
            if v > best {
                best = v;
                k = i;
            }
        }
        let freq = if k == 0 || k + 1 >= n_bins {
            s.freq_axis[k]
        } else {
            let alpha = col[k - 1];
            let beta = col[k];
            let gamma = col[k + 1];
            let denom = alpha - cast::<T>(2.0) * beta + gamma;
            let delta = if denom == T::zero() {
                T::zero()
            } else {
                (half * (alpha - gamma) / denom).max(-half).min(half)
            };
            s.freq_axis[k] + delta * bin_width
        };
        freqs.push(freq);
    }
    RidgeTrack {
        freqs_hz: freqs,
        times_s: s.time_axis.clone(),
    }
}

/// Invert the frequency-proportionality map: m_hat = (ridge - fc)/delta_f,
/// clamped to [-1, 1], sampled at the frame centers.
pub fn demodulate<T: Real>(track: &RidgeTrack<T>, cfg: &FmConfig<T>) -> Result<TimeSeries<T>> {
    if track.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let one = T::one();
    let values: Vec<T> = track
        .freqs_hz
        .iter()
        .map(|&f| ((f - cfg.fc) / cfg.delta_f).max(-one).min(one))
        .collect();
    let dt = if track.len() >= 2 {
        track.times_s[1] - track.times_s[0]
    } else {
        one
    };
    TimeSeries::new(values, dt).map(|s| s.with_start_time(track.times_s[0]))
}

/// Round-trip fidelity of modulate -> stft -> ridge -> demodulate against the
/// time-compressed message, interior frames only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundtripMetrics {
    /// Root-mean-square error in normalized message units.
    pub rmse: f64,
    /// Pearson correlation; 1.0 by convention for constant messages.
    pub pearson_r: f64,
    pub max_abs_err: f64,
    /// Set when the message was constant and `pearson_r` is conventional.
    pub constant_message: bool,
    /// Interior frames that entered the comparison.
    pub frames_compared: usize,
}

/// Run the full round trip and compare the demodulated estimate against the
/// message interpolated at the same frame centers.
pub fn roundtrip_report<T: Real>(
    message: &TimeSeries<T>,
    fm_cfg: &FmConfig<T>,
    stft_cfg: &StftConfig<T>,
) -> Result<RoundtripMetrics> {
    if message.len() < 3 {
        return Err(Error::InvalidSeries(
            "round trip needs at least 3 message samples".into(),
        ));
    }
    let waveform = fm_modulate(message, fm_cfg)?;
    let spec = stft(&waveform, stft_cfg)?;
    let track = extract_ridge(&spec);
    let estimate = demodulate(&track, fm_cfg)?;

    let n_frames = track.len();
    if n_frames <= 2 * EDGE_FRAMES {
        return Err(Error::InvalidConfig(format!(
            "only {n_frames} frames; need more than {} for edge exclusion",
            2 * EDGE_FRAMES
        )));
    }

    // Frame center in seconds -> output-grid sample position -> fractional
    // message index, matching the modulator's time compression exactly.
    let n_grid = fm_cfg.n_samples();
    let msg_values = message.values();
    let idx_scale = cast::<T>((msg_values.len() - 1) as f64 / (n_grid - 1) as f64);
    let mut est = Vec::with_capacity(n_frames - 2 * EDGE_FRAMES);
    let mut reference = Vec::with_capacity(n_frames - 2 * EDGE_FRAMES);
    for j in EDGE_FRAMES..n_frames - EDGE_FRAMES {
        let grid_pos = track.times_s[j] * fm_cfg.fs;
        let msg_pos = grid_pos * idx_scale;
        reference.push(to_f64(lerp_at(msg_values, msg_pos)));
        est.push(to_f64(estimate.values()[j]));
    }

    let n = est.len() as f64;
    let mut sq = 0.0f64;
    let mut max_abs = 0.0f64;
    for (e, r) in est.iter().zip(&reference) {
        let d = e - r;
        sq += d * d;
        max_abs = max_abs.max(d.abs());
    }
    let rmse = (sq / n).sqrt();

    let constant_message = message.max() == message.min();
    let pearson_r = if constant_message {
        1.0
    } else {
        pearson(&est, &reference)
    };

    Ok(RoundtripMetrics {
        rmse,
        pearson_r,
        max_abs_err: max_abs,
        constant_message,
        frames_compared: est.len(),
    })
}

/// Sample Pearson correlation; 0.0 when either side has no variance.
fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    let denom = (va * vb).sqrt();
    if denom < 1e-30 {
        0.0
    } else {
        cov / denom
    }
}

/// The six-message family used to certify round-trip information
/// preservation; every message has 100 samples in [-1, 1].
pub fn fixture_family<T: Real>() -> Vec<(&'static str, TimeSeries<T>)> {
    const N: usize = 100;
    let series = |values: Vec<T>| TimeSeries::new(values, T::one()).expect("valid fixture");

    let constant = vec![T::zero(); N];

    let ramp = (0..N)
        .map(|i| cast::<T>(2.0 * i as f64 / (N - 1) as f64 - 1.0))
        .collect();

    // sin(2*pi*8*t') on the compressed half-second timeline: 4 full cycles.
    let sinusoid = (0..N)
        .map(|i| cast::<T>((std::f64::consts::TAU * 4.0 * i as f64 / (N - 1) as f64).sin()))
        .collect();

    // Two periods of a unit triangle wave.
    let triangle = (0..N)
        .map(|i| {
            let phase = 2.0 * (i as f64 / (N - 1) as f64); // two periods
            let frac = phase - phase.floor();
            cast::<T>(if frac < 0.5 {
                4.0 * frac - 1.0
            } else {
                3.0 - 4.0 * frac
            })
        })
        .collect();

    let levels = [-0.6, 0.2, 0.8, -0.3, 0.5];
    let piecewise = (0..N)
        .map(|i| cast::<T>(levels[(i * levels.len() / N).min(levels.len() - 1)]))
        .collect();

    // Recorded-style random walk: small Gaussian-ish steps, lightly smoothed.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_f00d);
    let mut raw = Vec::with_capacity(N);
    let mut x = 0.0f64;
    for _ in 0..N {
        // Sum of three uniforms approximates a gentle, bounded step.
        let step: f64 = (0..3).map(|_| rng.gen_range(-0.05..0.05)).sum();
        x = (x + step).clamp(-1.0, 1.0);
        raw.push(x);
    }
    let walk = (0..N)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(N - 1);
            let mean = raw[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
            cast::<T>(mean.clamp(-1.0, 1.0))
        })
        .collect();

    vec![
        ("constant", series(constant)),
        ("ramp", series(ramp)),
        ("sinusoid", series(sinusoid)),
        ("triangle", series(triangle)),
        ("piecewise_constant", series(piecewise)),
        ("random_walk", series(walk)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fm::Waveform;
    use std::f64::consts::TAU;

    fn default_cfgs() -> (FmConfig<f64>, StftConfig<f64>) {
        let fm = FmConfig::defaults();
        let st = StftConfig::for_fm(&fm);
        (fm, st)
    }

    #[test]
    fn pure_tone_ridge_within_one_bin() {
        let (fm, st) = default_cfgs();
        let fs = fm.fs;
        let samples = (0..fm.n_samples())
            .map(|i| (TAU * 50_000.0 * i as f64 / fs).cos())
            .collect();
        let w = Waveform::new(samples, fs).unwrap();
        let s = stft(&w, &st).unwrap();
        let track = extract_ridge(&s);
        let bin = s.bin_width();
        for &f in &track.freqs_hz {
            assert!((f - 50_000.0).abs() <= bin, "ridge {f}");
        }
    }

    #[test]
    fn constant_full_scale_message_ridge_at_deviation_edge() {
        let (fm, st) = default_cfgs();
        let message = TimeSeries::new(vec![1.0; 8], 1.0).unwrap();
        let w = fm_modulate(&message, &fm).unwrap();
        let s = stft(&w, &st).unwrap();
        let track = extract_ridge(&s);
        let half_bin = s.bin_width() / 2.0;
        for &f in &track.freqs_hz[EDGE_FRAMES..track.len() - EDGE_FRAMES] {
            assert!(
                (f - 50_850.0).abs() <= half_bin,
                "ridge {f} vs 50850 +/- {half_bin}"
            );
        }
    }

    #[test]
    fn ramp_message_gives_monotone_ridge() {
        let (fm, st) = default_cfgs();
        let n = 100;
        let ramp: Vec<f64> = (0..n).map(|i| 2.0 * i as f64 / (n - 1) as f64 - 1.0).collect();
        let message = TimeSeries::new(ramp, 1.0).unwrap();
        let w = fm_modulate(&message, &fm).unwrap();
        let s = stft(&w, &st).unwrap();
        let track = extract_ridge(&s);
        let jitter = 32.0; // Hz
        let interior = &track.freqs_hz[EDGE_FRAMES..track.len() - EDGE_FRAMES];
        for pair in interior.windows(2) {
            assert!(
                pair[1] >= pair[0] - jitter,
                "ridge decreased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn demodulate_inverts_constant_ridges() {
        let fm = FmConfig::<f64>::defaults();
        let track = RidgeTrack {
            freqs_hz: vec![50_000.0; 5],
            times_s: (0..5).map(|i| i as f64 * 0.002).collect(),
        };
        let m = demodulate(&track, &fm).unwrap();
        assert!(m.values().iter().all(|&v| v == 0.0));

        let track = RidgeTrack {
            freqs_hz: vec![50_850.0; 5],
            times_s: (0..5).map(|i| i as f64 * 0.002).collect(),
        };
        let m = demodulate(&track, &fm).unwrap();
        assert!(m.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn constant_message_roundtrip_is_flagged() {
        let (fm, st) = default_cfgs();
        let message = TimeSeries::new(vec![0.0; 100], 1.0).unwrap();
        let m = roundtrip_report(&message, &fm, &st).unwrap();
        assert!(m.constant_message);
        assert_eq!(m.pearson_r, 1.0);
        assert!(m.rmse < 0.01, "rmse {}", m.rmse);
    }

    #[test]
    fn fixture_family_has_six_members_in_range() {
        let family = fixture_family::<f64>();
        assert_eq!(family.len(), 6);
        let names: Vec<_> = family.iter().map(|(n, _)| *n).collect();
        assert_eq!(
            names,
            [
                "constant",
                "ramp",
                "sinusoid",
                "triangle",
                "piecewise_constant",
                "random_walk"
            ]
        );
        for (name, ts) in &family {
            assert_eq!(ts.len(), 100, "{name}");
            assert!(ts.min() >= -1.0 && ts.max() <= 1.0, "{name}");
        }
        // Deterministic across calls.
        let again = fixture_family::<f64>();
        for ((_, a), (_, b)) in family.iter().zip(&again) {
            assert_eq!(a.values(), b.values());
        }
    }
}
