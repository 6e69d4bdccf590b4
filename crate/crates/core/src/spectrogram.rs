//! STFT magnitude analysis and rendering to the fixed-size grayscale images
//! the classifier consumes.

use crate::error::{Error, Result};
use crate::fm::Waveform;
use crate::scalar::{cast, to_f64, Real};
use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Magnitudes are floored at mag + 1e-10 before the dB conversion, so a zero
/// waveform sits at exactly -200 dB.
pub const DB_EPSILON: f64 = 1e-10;

/// Classifier input side length.
pub const IMAGE_SIZE: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Hann,
    Rect,
}

/// STFT analysis parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftConfig<T> {
    /// Window length in samples; must be a power of two.
    pub n_fft: usize,
    /// Samples between frame starts.
    pub hop: usize,
    pub window: WindowKind,
    /// Optional [f_lo, f_hi] Hz crop applied after analysis.
    pub band: Option<(T, T)>,
}

impl<T: Real> StftConfig<T> {
    /// 4096-point Hann analysis with hop 512 and no crop.
    pub fn defaults() -> Self {
        Self {
            n_fft: 4096,
            hop: 512,
            window: WindowKind::Hann,
            band: None,
        }
    }

    /// Defaults plus a crop to fc +/- 2*delta_f, concentrating the image rows
    /// on the band the modulator can actually reach.
    pub fn for_fm(fm: &crate::fm::FmConfig<T>) -> Self {
        let two = cast::<T>(2.0);
        Self {
            band: Some((fm.fc - two * fm.delta_f, fm.fc + two * fm.delta_f)),
            ..Self::defaults()
        }
    }

    pub fn validate(&self, fs: T) -> Result<()> {
        if self.n_fft == 0 || !self.n_fft.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "n_fft must be a power of two, got {}",
                self.n_fft
            )));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return Err(Error::InvalidConfig(format!(
                "need 0 < hop <= n_fft, got hop {} n_fft {}",
                self.hop, self.n_fft
            )));
        }
        if let Some((lo, hi)) = self.band {
            let nyquist = fs / cast::<T>(2.0);
            if !(lo >= T::zero() && lo < hi && hi <= nyquist) {
                return Err(Error::InvalidConfig(format!(
                    "band [{lo}, {hi}] must satisfy 0 <= f_lo < f_hi <= fs/2 = {nyquist}"
                )));
            }
        }
        Ok(())
    }
}

/// Number of STFT frames for a waveform of `len` samples.
pub fn frame_count(len: usize, n_fft: usize, hop: usize) -> usize {
    if len < n_fft {
        0
    } else {
        (len - n_fft) / hop + 1
    }
}

/// Time-frequency magnitude matrix in dB with axis metadata.
#[derive(Debug, Clone)]
pub struct Spectrogram<T> {
    /// [n_freq_bins x n_frames].
    pub mags_db: Array2<T>,
    /// Hz per bin, strictly increasing.
    pub freq_axis: Vec<T>,
    /// Seconds at each frame center, strictly increasing.
    pub time_axis: Vec<T>,
}

impl<T: Real> Spectrogram<T> {
    pub fn n_bins(&self) -> usize {
        self.mags_db.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.mags_db.ncols()
    }

    /// Hz between adjacent bins.
    pub fn bin_width(&self) -> T {
        if self.freq_axis.len() >= 2 {
            self.freq_axis[1] - self.freq_axis[0]
        } else {
            T::zero()
        }
    }
}

fn window_coeffs<T: Real>(kind: WindowKind, n: usize) -> Vec<T> {
    match kind {
        WindowKind::Rect => vec![T::one(); n],
        WindowKind::Hann => {
            let tau_over_n = std::f64::consts::TAU / n as f64;
            (0..n)
                .map(|i| cast::<T>(0.5 * (1.0 - (tau_over_n * i as f64).cos())))
                .collect()
        }
    }
}

/// Short-time Fourier transform. Frame t covers samples
/// [t*hop, t*hop + n_fft); magnitudes are one-sided (bins 0..=n_fft/2),
/// converted to dB as 20*log10(mag + epsilon), band crop applied last.
pub fn stft<T: Real>(w: &Waveform<T>, cfg: &StftConfig<T>) -> Result<Spectrogram<T>> {
    cfg.validate(w.fs())?;
    let len = w.len();
    if len < cfg.n_fft {
        return Err(Error::WaveformTooShort {
            len,
            n_fft: cfg.n_fft,
        });
    }
    let n_fft = cfg.n_fft;
    let n_frames = frame_count(len, n_fft, cfg.hop);
    let n_bins_full = n_fft / 2 + 1;
    let bin_hz = w.fs() / cast::<T>(n_fft as f64);

    // Bin index range after the optional crop.
    let (bin_lo, bin_hi) = match cfg.band {
        None => (0usize, n_bins_full - 1),
        Some((f_lo, f_hi)) => {
            let lo = to_f64(f_lo / bin_hz).ceil().max(0.0) as usize;
            let hi = (to_f64(f_hi / bin_hz).floor() as usize).min(n_bins_full - 1);
            if lo > hi {
                return Err(Error::InvalidConfig(
                    "band crop leaves no frequency bins".into(),
                ));
            }
            (lo, hi)
        }
    };
    let n_bins = bin_hi - bin_lo + 1;

    let window = window_coeffs::<T>(cfg.window, n_fft);
    let fft = FftPlanner::<T>::new().plan_fft_forward(n_fft);
    let eps = cast::<T>(DB_EPSILON);
    let db_scale = cast::<T>(20.0);
    let mut mags_db = Array2::zeros((n_bins, n_frames));
    let mut buf: Vec<Complex<T>> = vec![Complex::new(T::zero(), T::zero()); n_fft];
    let samples = w.samples();
    for frame in 0..n_frames {
        let start = frame * cfg.hop;
        for i in 0..n_fft {
            buf[i] = Complex::new(samples[start + i] * window[i], T::zero());
        }
        fft.process(&mut buf);
        for bin in bin_lo..=bin_hi {
            let mag = buf[bin].norm();
            mags_db[[bin - bin_lo, frame]] = db_scale * (mag + eps).log10();
        }
    }

    let freq_axis = (bin_lo..=bin_hi)
        .map(|k| bin_hz * cast::<T>(k as f64))
        .collect();
    let half_window = cast::<T>((n_fft - 1) as f64 / 2.0);
    let time_axis = (0..n_frames)
        .map(|t| (cast::<T>((t * cfg.hop) as f64) + half_window) / w.fs())
        .collect();
    Ok(Spectrogram {
        mags_db,
        freq_axis,
        time_axis,
    })
}

/// 128x128 grayscale image with values in [0, 1]. Row 0 is the top of the
/// rendered image, i.e. the highest frequency; frequency ascends bottom-to-top.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectroImage<T> {
    pixels: Array2<T>,
    provenance: String,
}

impl<T: Real> SpectroImage<T> {
    pub fn new(pixels: Array2<T>, provenance: impl Into<String>) -> Result<Self> {
        if pixels.nrows() != IMAGE_SIZE || pixels.ncols() != IMAGE_SIZE {
            return Err(Error::InvalidConfig(format!(
                "image must be {IMAGE_SIZE}x{IMAGE_SIZE}, got {}x{}",
                pixels.nrows(),
                pixels.ncols()
            )));
        }
        if pixels
            .iter()
            .any(|&p| !p.is_finite() || p < T::zero() || p > T::one())
        {
            return Err(Error::InvalidConfig(
                "image pixels must be finite and in [0, 1]".into(),
            ));
        }
        Ok(Self {
            pixels,
            provenance: provenance.into(),
        })
    }

    pub fn pixels(&self) -> &Array2<T> {
        &self.pixels
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Write as 8-bit grayscale PNG.
    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut img = image::GrayImage::new(IMAGE_SIZE as u32, IMAGE_SIZE as u32);
        for (r, row) in self.pixels.rows().into_iter().enumerate() {
            for (c, &p) in row.iter().enumerate() {
                let v = (to_f64(p) * 255.0).round().clamp(0.0, 255.0) as u8;
                img.put_pixel(c as u32, r as u32, image::Luma([v]));
            }
        }
        img.save_with_format(path.as_ref(), image::ImageFormat::Png)?;
        Ok(())
    }

    /// Read back an 8-bit grayscale PNG written by `write_png`.
    pub fn read_png(path: impl AsRef<Path>, provenance: impl Into<String>) -> Result<Self> {
        let img = image::open(path.as_ref())?.into_luma8();
        if img.width() as usize != IMAGE_SIZE || img.height() as usize != IMAGE_SIZE {
            return Err(Error::InvalidConfig(format!(
                "PNG must be {IMAGE_SIZE}x{IMAGE_SIZE}, got {}x{}",
                img.width(),
                img.height()
            )));
        }
        let mut pixels = Array2::zeros((IMAGE_SIZE, IMAGE_SIZE));
        for r in 0..IMAGE_SIZE {
            for c in 0..IMAGE_SIZE {
                pixels[[r, c]] = cast::<T>(img.get_pixel(c as u32, r as u32)[0] as f64 / 255.0);
            }
        }
        Self::new(pixels, provenance)
    }
}

/// Bilinear sample of `m` at fractional (row, col), align-corners convention.
fn bilinear<T: Real>(m: &Array2<T>, r: T, c: T) -> T {
    let r0f = r.floor();
    let c0f = c.floor();
    let r0 = to_f64(r0f) as usize;
    let c0 = to_f64(c0f) as usize;
    let r1 = (r0 + 1).min(m.nrows() - 1);
    let c1 = (c0 + 1).min(m.ncols() - 1);
    let fr = r - r0f;
    let fc = c - c0f;
    let one = T::one();
    m[[r0, c0]] * (one - fr) * (one - fc)
        + m[[r1, c0]] * fr * (one - fc)
        + m[[r0, c1]] * (one - fr) * fc
        + m[[r1, c1]] * fr * fc
}

/// Render a spectrogram to the classifier's 128x128 grayscale input.
///
/// The dB matrix is bilinearly resized to 128x128 (align-corners) and then
/// min-max normalized to [0, 1]; the normalization runs after the resize so a
/// non-constant input always yields pixel min 0 and max 1. A constant
/// spectrogram renders all-0.5 gray. Rows are flipped so frequency ascends
/// bottom-to-top in the written image.
pub fn render_image<T: Real>(s: &Spectrogram<T>, provenance: impl Into<String>) -> Result<SpectroImage<T>> {
    if s.n_bins() == 0 || s.n_frames() == 0 {
        return Err(Error::InvalidConfig("empty spectrogram".into()));
    }
    let src_lo = s.mags_db.iter().copied().fold(T::infinity(), T::min);
    let src_hi = s.mags_db.iter().copied().fold(T::neg_infinity(), T::max);
    if src_hi == src_lo {
        let pixels = Array2::from_elem((IMAGE_SIZE, IMAGE_SIZE), cast::<T>(0.5));
        return SpectroImage::new(pixels, provenance);
    }
    let rows = s.n_bins();
    let cols = s.n_frames();
    let r_scale = cast::<T>((rows - 1) as f64 / (IMAGE_SIZE - 1) as f64);
    let c_scale = cast::<T>((cols - 1) as f64 / (IMAGE_SIZE - 1) as f64);
    let mut pixels = Array2::zeros((IMAGE_SIZE, IMAGE_SIZE));
    for i in 0..IMAGE_SIZE {
        let src_r = cast::<T>(i as f64) * r_scale;
        for j in 0..IMAGE_SIZE {
            let src_c = cast::<T>(j as f64) * c_scale;
            // Row 0 of the image is the highest frequency.
            pixels[[IMAGE_SIZE - 1 - i, j]] = bilinear(&s.mags_db, src_r, src_c);
        }
    }
    let lo = pixels.iter().copied().fold(T::infinity(), T::min);
    let hi = pixels.iter().copied().fold(T::neg_infinity(), T::max);
    if hi == lo {
        pixels.fill(cast::<T>(0.5));
    } else {
        let span = hi - lo;
        pixels.mapv_inplace(|p| ((p - lo) / span).max(T::zero()).min(T::one()));
    }
    SpectroImage::new(pixels, provenance)
}
