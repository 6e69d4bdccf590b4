//! Uniformly sampled time series, linear resampling, amplitude normalization,
//! and CSV ingestion of subject records.

use crate::error::{Error, Result};
use crate::scalar::{cast, Real};
use std::collections::BTreeMap;
use std::path::Path;

/// Uniformly sampled univariate signal with unit and subject identity.
///
/// Invariants enforced at construction: non-empty, all values finite, and a
/// strictly positive sample interval. Values are immutable afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries<T> {
    values: Vec<T>,
    dt: T,
    unit: String,
    subject_id: String,
    start_time: T,
}

impl<T: Real> TimeSeries<T> {
    pub fn new(values: Vec<T>, dt: T) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSeries("values must be non-empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!(
                "non-finite value at index {i}"
            )));
        }
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::InvalidSeries("dt must be strictly positive".into()));
        }
        Ok(Self {
            values,
            dt,
            unit: String::new(),
            subject_id: String::new(),
            start_time: T::zero(),
        })
    }

    pub fn with_unit(mut self, unit: impl Into<String>) -> Self {
        self.unit = unit.into();
        self
    }

    pub fn with_subject(mut self, subject_id: impl Into<String>) -> Self {
        self.subject_id = subject_id.into();
        self
    }

    pub fn with_start_time(mut self, start_time: T) -> Self {
        self.start_time = start_time;
        self
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn unit(&self) -> &str {
        &self.unit
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn start_time(&self) -> T {
        self.start_time
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // non-empty by construction
    }

    /// Total time covered by the samples, counting each sample as one dt of
    /// coverage (n * dt). This is the duration used by window arithmetic.
    pub fn duration(&self) -> T {
        cast::<T>(self.len() as f64) * self.dt
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// Replace the values, keeping metadata. Fails on the same invariants as `new`.
    pub fn map_values(&self, values: Vec<T>) -> Result<Self> {
        let mut out = Self::new(values, self.dt)?;
        out.unit = self.unit.clone();
        out.subject_id = self.subject_id.clone();
        out.start_time = self.start_time;
        Ok(out)
    }
}

/// Evaluate the piecewise-linear interpolant of `values` at fractional index
/// `pos` (0 <= pos <= len-1). Exact at the knots.
pub(crate) fn lerp_at<T: Real>(values: &[T], pos: T) -> T {
    let last = values.len() - 1;
    if pos <= T::zero() {
        return values[0];
    }
    let lastf = cast::<T>(last as f64);
    if pos >= lastf {
        return values[last];
    }
    let i = pos.floor();
    let idx = to_index(i);
    let frac = pos - i;
    if frac == T::zero() {
        return values[idx];
    }
    values[idx] + (values[idx + 1] - values[idx]) * frac
}

fn to_index<T: Real>(x: T) -> usize {
    x.to_usize().expect("non-negative index")
}

/// Linearly resample a series to `n_out` samples spanning the same time
/// extent. Endpoints are preserved exactly.
pub fn resample_linear<T: Real>(ts: &TimeSeries<T>, n_out: usize) -> Result<TimeSeries<T>> {
    if n_out < 2 {
        return Err(Error::ResampleTooSmall(n_out));
    }
    if ts.len() < 2 {
        return Err(Error::InvalidSeries(
            "resample input needs at least 2 samples".into(),
        ));
    }
    let n_in = ts.len();
    let scale = cast::<T>((n_in - 1) as f64) / cast::<T>((n_out - 1) as f64);
    let mut values = Vec::with_capacity(n_out);
    for j in 0..n_out {
        if j == n_out - 1 {
            values.push(ts.values[n_in - 1]); // exact endpoint
        } else {
            values.push(lerp_at(&ts.values, cast::<T>(j as f64) * scale));
        }
    }
    let dt_out = ts.dt * scale;
    ts.map_values(values).map(|s| {
        let mut s = s;
        s.dt = dt_out;
        s
    })
}

/// How raw amplitudes map into the modulator input range [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationSpec<T> {
    /// Derive lo/hi from the sample's own min/max.
    PerSample,
    /// Caller-supplied physiologic bounds; values outside are clamped.
    Fixed { lo: T, hi: T },
}

impl<T: Real> NormalizationSpec<T> {
    pub fn fixed(lo: T, hi: T) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::InvalidConfig(format!(
                "normalization bounds need hi > lo, got lo={lo} hi={hi}"
            )));
        }
        Ok(Self::Fixed { lo, hi })
    }
}

/// Result of `normalize`: the mapped series plus how many samples had to be
/// clamped to [-1, 1] (Fixed mode only).
#[derive(Debug, Clone)]
pub struct Normalized<T> {
    pub series: TimeSeries<T>,
    pub clamped: usize,
}

/// Affine map x -> 2(x - lo)/(hi - lo) - 1.
///
/// PerSample output spans exactly [-1, 1]; a constant series maps to all
/// zeros so a flat vital leaves the carrier unmodulated. Fixed mode clamps
/// out-of-range values to +/-1 and counts them.
pub fn normalize<T: Real>(ts: &TimeSeries<T>, spec: &NormalizationSpec<T>) -> Result<Normalized<T>> {
    let one = T::one();
    let two = cast::<T>(2.0);
    match *spec {
        NormalizationSpec::PerSample => {
            let lo = ts.min();
            let hi = ts.max();
            if hi == lo {
                let series = ts.map_values(vec![T::zero(); ts.len()])?;
                return Ok(Normalized { series, clamped: 0 });
            }
            let span = hi - lo;
            let values = ts
                .values
                .iter()
                .map(|&x| two * (x - lo) / span - one)
                .collect();
            Ok(Normalized {
                series: ts.map_values(values)?,
                clamped: 0,
            })
        }
        NormalizationSpec::Fixed { lo, hi } => {
            if !(hi > lo) {
                return Err(Error::InvalidConfig("fixed bounds need hi > lo".into()));
            }
            let span = hi - lo;
            let mut clamped = 0usize;
            let values = ts
                .values
                .iter()
                .map(|&x| {
                    let y = two * (x - lo) / span - one;
                    if y > one {
                        clamped += 1;
                        one
                    } else if y < -one {
                        clamped += 1;
                        -one
                    } else {
                        y
                    }
                })
                .collect();
            Ok(Normalized {
                series: ts.map_values(values)?,
                clamped,
            })
        }
    }
}

/// One subject's regularized series as loaded from CSV.
#[derive(Debug, Clone)]
pub struct SubjectRecord<T> {
    pub subject_id: String,
    pub series: TimeSeries<T>,
}

/// Load `subject_id,timestamp_s,value` rows (header required, any row order).
///
/// Rows are grouped per subject and sorted by timestamp. Duplicate timestamps
/// within a subject are rejected. Irregular sampling is regularized onto an
/// even grid (median interval) by linear interpolation; subjects with a
/// single sample keep it as a 1-sample series with dt = 1.
pub fn load_csv<T: Real>(path: impl AsRef<Path>, unit: &str) -> Result<Vec<SubjectRecord<T>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(|e| csv_err(&e))?;

    let mut by_subject: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(&e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() < 3 {
            return Err(Error::CsvParse {
                line,
                message: format!("expected 3 columns, got {}", record.len()),
            });
        }
        let subject = record[0].to_string();
        let t: f64 = record[1].parse().map_err(|e| Error::CsvParse {
            line,
            message: format!("bad timestamp_s {:?}: {e}", &record[1]),
        })?;
        let v: f64 = record[2].parse().map_err(|e| Error::CsvParse {
            line,
            message: format!("bad value {:?}: {e}", &record[2]),
        })?;
        if !t.is_finite() || !v.is_finite() {
            return Err(Error::CsvParse {
                line,
                message: "non-finite timestamp or value".into(),
            });
        }
        by_subject.entry(subject).or_default().push((t, v));
    }

    let mut out = Vec::with_capacity(by_subject.len());
    for (subject_id, mut rows) in by_subject {
        rows.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite timestamps"));
        for w in rows.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::DuplicateTimestamp {
                    subject_id,
                    timestamp_s: w[0].0,
                });
            }
        }
        let series = regularize::<T>(&rows)?
            .with_unit(unit)
            .with_subject(subject_id.clone());
        out.push(SubjectRecord { subject_id, series });
    }
    Ok(out)
}

fn csv_err(e: &csv::Error) -> Error {
    let line = match e.kind() {
        csv::ErrorKind::Utf8 { pos, .. } | csv::ErrorKind::UnequalLengths { pos, .. } => {
            pos.as_ref().map(|p| p.line()).unwrap_or(0)
        }
        _ => 0,
    };
    Error::CsvParse {
        line,
        message: e.to_string(),
    }
}

/// Put sorted (t, v) rows onto an even grid. Already-uniform input passes
/// through untouched; otherwise linear interpolation at the median interval.
fn regularize<T: Real>(rows: &[(f64, f64)]) -> Result<TimeSeries<T>> {
    if rows.len() == 1 {
        return TimeSeries::new(vec![cast::<T>(rows[0].1)], T::one())
            .map(|s| s.with_start_time(cast::<T>(rows[0].0)));
    }
    let mut dts: Vec<f64> = rows.windows(2).map(|w| w[1].0 - w[0].0).collect();
    dts.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let median_dt = dts[dts.len() / 2];
    if median_dt <= 0.0 {
        return Err(Error::InvalidSeries("timestamps not strictly increasing".into()));
    }
    let uniform = dts
        .iter()
        .all(|&d| (d - median_dt).abs() <= 1e-9 * median_dt.max(1.0));
    if uniform {
        let values = rows.iter().map(|&(_, v)| cast::<T>(v)).collect();
        return TimeSeries::new(values, cast::<T>(median_dt))
            .map(|s| s.with_start_time(cast::<T>(rows[0].0)));
    }

    let t0 = rows[0].0;
    let span = rows[rows.len() - 1].0 - t0;
    let n = (span / median_dt).round() as usize + 1;
    let n = n.max(2);
    let dt = span / (n - 1) as f64;
    let mut values = Vec::with_capacity(n);
    let mut seg = 0usize;
    for j in 0..n {
        let t = if j == n - 1 { rows[rows.len() - 1].0 } else { t0 + j as f64 * dt };
        while seg + 2 < rows.len() && rows[seg + 1].0 <= t {
            seg += 1;
        }
        let (ta, va) = rows[seg];
        let (tb, vb) = rows[seg + 1];
        let frac = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
        values.push(cast::<T>(va + (vb - va) * frac));
    }
    TimeSeries::new(values, cast::<T>(dt)).map(|s| s.with_start_time(cast::<T>(t0)))
}
