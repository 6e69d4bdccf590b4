//! Frequency-modulated waveform synthesis: the carrier's instantaneous
//! frequency tracks the normalized message amplitude, fc + delta_f * m(t).
//!
//! Arbitrary messages are handled by phase integration,
//! f(t) = ac * cos(2*pi*fc*t + 2*pi*delta_f * integral of m), which reduces
//! to the textbook sinusoid form ac * cos(2*pi*fc*t + mi*sin(2*pi*fm*t))
//! with modulation index mi = delta_f/fm when the message is a cosine.

use crate::error::{Error, Result};
use crate::scalar::{cast, to_f64, Real};
use crate::signal::TimeSeries;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Messages may overshoot [-1, 1] by at most this much (normalization
/// rounding); anything larger is rejected.
pub const AMPLITUDE_SLACK: f64 = 1e-9;

/// Modulator parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FmConfig<T> {
    /// Carrier frequency in Hz.
    pub fc: T,
    /// Peak frequency deviation in Hz at message amplitude +/-1.
    pub delta_f: T,
    /// Output sampling rate in Hz.
    pub fs: T,
    /// Output duration in seconds; every message is time-compressed onto it.
    pub duration: T,
    /// Carrier amplitude.
    pub ac: T,
}

impl<T: Real> FmConfig<T> {
    /// 50 kHz carrier with 850 Hz deviation, sampled at 2^18 Hz for 0.5 s.
    pub fn defaults() -> Self {
        Self {
            fc: cast(50_000.0),
            delta_f: cast(850.0),
            fs: cast(262_144.0),
            duration: cast(0.5),
            ac: T::one(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_f > T::zero() && self.delta_f < self.fc) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < delta_f < fc, got delta_f={} fc={}",
                self.delta_f, self.fc
            )));
        }
        if !(self.duration > T::zero()) {
            return Err(Error::InvalidConfig("duration must be positive".into()));
        }
        if !(self.ac > T::zero()) {
            return Err(Error::InvalidConfig("ac must be positive".into()));
        }
        let required = cast::<T>(2.0) * (self.fc + self.delta_f);
        if !(self.fs > required) {
            return Err(Error::NyquistViolation {
                fs: to_f64(self.fs),
                required: to_f64(required),
            });
        }
        Ok(())
    }

    /// Number of output samples, round(fs * duration).
    pub fn n_samples(&self) -> usize {
        to_f64(self.fs * self.duration).round() as usize
    }
}

/// High-rate FM-reconstructed signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform<T> {
    samples: Vec<T>,
    fs: T,
}

impl<T: Real> Waveform<T> {
    pub fn new(samples: Vec<T>, fs: T) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidSeries("waveform must be non-empty".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidSeries("waveform has non-finite samples".into()));
        }
        if !(fs > T::zero()) {
            return Err(Error::InvalidSeries("fs must be positive".into()));
        }
        Ok(Self { samples, fs })
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn fs(&self) -> T {
        self.fs
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn check_message_range<T: Real>(message: &TimeSeries<T>) -> Result<()> {
    let limit = cast::<T>(1.0 + AMPLITUDE_SLACK);
    for (i, &v) in message.values().iter().enumerate() {
        if v.abs() > limit {
            return Err(Error::MessageOutOfRange {
                index: i,
                value: to_f64(v),
            });
        }
    }
    Ok(())
}

/// Message values time-compressed onto the output grid: sample i of n carries
/// the piecewise-linear interpolant at fractional index i*(m-1)/(n-1), so the
/// grid endpoints match the message endpoints exactly. Values are clamped to
/// [-1, 1] after the slack check.
fn compress_message<T: Real>(message: &TimeSeries<T>, n: usize) -> Vec<T> {
    let values = message.values();
    let one = T::one();
    if values.len() == 1 {
        let v = values[0].max(-one).min(one);
        return vec![v; n];
    }
    let scale = cast::<T>((values.len() - 1) as f64) / cast::<T>((n - 1) as f64);
    (0..n)
        .map(|i| {
            let v = if i == n - 1 {
                values[values.len() - 1]
            } else {
                crate::signal::lerp_at(values, cast::<T>(i as f64) * scale)
            };
            v.max(-one).min(one)
        })
        .collect()
}

/// Synthesize the FM waveform for a normalized message.
///
/// Phase is the trapezoidal cumulative integral of the instantaneous
/// frequency fc + delta_f * m(t), starting at 0, wrapped mod 2*pi to keep
/// the accumulator well-conditioned.
pub fn fm_modulate<T: Real>(message: &TimeSeries<T>, cfg: &FmConfig<T>) -> Result<Waveform<T>> {
    cfg.validate()?;
    check_message_range(message)?;
    let n = cfg.n_samples();
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "fs * duration must give at least 2 samples, got {n}"
        )));
    }
    let m = compress_message(message, n);
    let tau = cast::<T>(std::f64::consts::TAU);
    let dt = T::one() / cfg.fs;
    let half = cast::<T>(0.5);

    let mut samples = Vec::with_capacity(n);
    let mut phase = T::zero();
    let mut prev_freq = cfg.fc + cfg.delta_f * m[0];
    samples.push(cfg.ac * phase.cos());
    for &mi in m.iter().skip(1) {
        let freq = cfg.fc + cfg.delta_f * mi;
        phase += tau * dt * half * (prev_freq + freq);
        while phase >= tau {
            phase -= tau;
        }
        samples.push(cfg.ac * phase.cos());
        prev_freq = freq;
    }
    Waveform::new(samples, cfg.fs)
}

/// The analytic frequency track fc + delta_f * m(t) on the modulator's output
/// grid; ground truth for ridge-based demodulation.
pub fn instantaneous_frequency<T: Real>(
    message: &TimeSeries<T>,
    cfg: &FmConfig<T>,
) -> Result<TimeSeries<T>> {
    cfg.validate()?;
    check_message_range(message)?;
    let n = cfg.n_samples();
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "fs * duration must give at least 2 samples, got {n}"
        )));
    }
    let track = compress_message(message, n)
        .into_iter()
        .map(|mi| cfg.fc + cfg.delta_f * mi)
        .collect();
    TimeSeries::new(track, T::one() / cfg.fs).map(|s| s.with_unit("Hz"))
}

/// Sidecar metadata accompanying a raw waveform dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WaveformSidecar {
    pub fs: f64,
    pub n_samples: usize,
    pub fc: f64,
    pub delta_f: f64,
}

impl WaveformSidecar {
    pub fn new<T: Real>(w: &Waveform<T>, cfg: &FmConfig<T>) -> Self {
        Self {
            fs: to_f64(w.fs()),
            n_samples: w.len(),
            fc: to_f64(cfg.fc),
            delta_f: to_f64(cfg.delta_f),
        }
    }
}

/// Write samples as raw 32-bit little-endian floats.
pub fn dump_raw_f32<T: Real>(path: impl AsRef<Path>, w: &Waveform<T>) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for &s in w.samples() {
        file.write_all(&(to_f64(s) as f32).to_le_bytes())?;
    }
    file.flush()?;
    Ok(())
}
