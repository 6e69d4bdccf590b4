//! FM reconstruction of low-rate vital-sign series, spectrogram imaging, and
//! a shallow CNN classifier, plus the ridge-extraction oracle that certifies
//! the round trip preserves the message amplitude.
//!
//! Everything numeric is generic over the [`scalar::Real`] scalar (`f32` or
//! `f64`); the `*64`/`*32` aliases below pin the common instantiations.

pub mod cnn;
pub mod dataset;
pub mod demod;
pub mod error;
pub mod fm;
pub mod scalar;
pub mod signal;
pub mod spectrogram;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Real;

pub type TimeSeries64 = signal::TimeSeries<f64>;
pub type TimeSeries32 = signal::TimeSeries<f32>;
pub type Waveform64 = fm::Waveform<f64>;
pub type Waveform32 = fm::Waveform<f32>;
pub type FmConfig64 = fm::FmConfig<f64>;
pub type FmConfig32 = fm::FmConfig<f32>;
pub type StftConfig64 = spectrogram::StftConfig<f64>;
pub type StftConfig32 = spectrogram::StftConfig<f32>;
pub type Spectrogram64 = spectrogram::Spectrogram<f64>;
pub type Spectrogram32 = spectrogram::Spectrogram<f32>;
pub type SpectroImage64 = spectrogram::SpectroImage<f64>;
pub type SpectroImage32 = spectrogram::SpectroImage<f32>;
pub type LabeledSample64 = dataset::LabeledSample<f64>;
pub type LabeledSample32 = dataset::LabeledSample<f32>;
pub type Protocol64 = dataset::Protocol<f64>;
pub type Protocol32 = dataset::Protocol<f32>;
pub type ShallowCnn64 = cnn::ShallowCnn<f64>;
pub type ShallowCnn32 = cnn::ShallowCnn<f32>;
