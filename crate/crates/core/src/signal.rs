//! Recording ingestion, stream synchronization, trimming, and resampling.
//!
//! A recording session yields one CSV file per wrist (`t,ax,ay,az`) plus a
//! `.meta` sidecar carrying the gesture label and per-wrist start offsets.
//! Trials are synchronized so the gesture onset sits at `t = 0`, then
//! length-normalized onto the common 40 Hz grid `t_k = k / 40`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nominal sampling rate of the wrist devices.
pub const NOMINAL_RATE_HZ: f64 = 40.0;

/// Sensor range sanity bound, m/s² per axis.
pub const ACCEL_LIMIT: f64 = 160.0;

/// Which wrist a stream was recorded from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

/// One timestamped tri-axial acceleration sample, m/s².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriaxSample {
    /// Seconds since the start of the recording.
    pub t: f64,
    /// Acceleration along x, y, z.
    pub a: [f64; 3],
}

impl TriaxSample {
    pub fn new(t: f64, a: [f64; 3]) -> Self {
        TriaxSample { t, a }
    }

    /// Euclidean norm of the acceleration vector.
    pub fn magnitude(&self) -> f64 {
        (self.a[0] * self.a[0] + self.a[1] * self.a[1] + self.a[2] * self.a[2]).sqrt()
    }
}

/// Ordered acceleration samples from one wrist.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStream {
    pub side: Side,
    pub rate_hz: f64,
    samples: Vec<TriaxSample>,
}

impl SampleStream {
    /// Builds a stream, checking time monotonicity and the sensor range bound.
    pub fn new(side: Side, samples: Vec<TriaxSample>) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if !s.t.is_finite() {
                return Err(Error::Integrity(format!("sample {i}: non-finite timestamp")));
            }
            if s.t < 0.0 {
                return Err(Error::Integrity(format!("sample {i}: negative timestamp {}", s.t)));
            }
            for (axis, &v) in ["x", "y", "z"].iter().zip(s.a.iter()) {
                if !v.is_finite() || v.abs() > ACCEL_LIMIT {
                    return Err(Error::Integrity(format!(
                        "sample {i}: acceleration {axis}={v} outside ±{ACCEL_LIMIT} m/s²"
                    )));
                }
            }
            if i > 0 && s.t <= samples[i - 1].t {
                return Err(Error::Integrity(format!(
                    "timestamps not strictly increasing at sample {i} (t={} after t={})",
                    s.t,
                    samples[i - 1].t
                )));
            }
        }
        Ok(SampleStream {
            side,
            rate_hz: NOMINAL_RATE_HZ,
            samples,
        })
    }

    pub fn samples(&self) -> &[TriaxSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time span covered by the stream, seconds.
    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Per-sample acceleration magnitude signal.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.magnitude()).collect()
    }

    /// One acceleration axis as a contiguous vector.
    pub fn axis(&self, idx: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.a[idx]).collect()
    }

    /// Rebuilds a stream with the same timestamps but new per-axis values.
    pub fn with_axes(&self, axes: [&[f64]; 3]) -> Result<Self> {
        for ax in &axes {
            if ax.len() != self.len() {
                return Err(Error::Alignment(format!(
                    "axis length {} does not match stream length {}",
                    ax.len(),
                    self.len()
                )));
            }
        }
        let samples = self
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| TriaxSample::new(s.t, [axes[0][i], axes[1][i], axes[2][i]]))
            .collect();
        SampleStream::new(self.side, samples)
    }

    /// Shifts time by `-offset`, drops samples before the new zero and after
    /// `max_t` (when given), and rebases so the first kept sample keeps its
    /// shifted timestamp.
    fn shifted(&self, offset: f64, max_t: Option<f64>) -> Result<Self> {
        const EPS: f64 = 1e-9;
        let samples: Vec<TriaxSample> = self
            .samples
            .iter()
            .filter_map(|s| {
                let t = s.t - offset;
                if t < -EPS {
                    return None;
                }
                if let Some(m) = max_t {
                    if t > m + EPS {
                        return None;
                    }
                }
                Some(TriaxSample::new(t.max(0.0), s.a))
            })
            .collect();
        if samples.is_empty() {
            return Err(Error::EmptyStream(format!(
                "offset {offset} s leaves no samples in a {:.3} s recording",
                self.duration()
            )));
        }
        SampleStream::new(self.side, samples)
    }
}

/// One synchronized left+right recording of a gesture execution.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub gesture_label: Option<String>,
    pub left: SampleStream,
    pub right: SampleStream,
}

impl Trial {
    /// Sample count per side; `K_m` once the trial has been length-normalized.
    pub fn sample_count(&self) -> usize {
        self.left.len().min(self.right.len())
    }

    /// Shorter of the two per-side durations, seconds.
    pub fn duration(&self) -> f64 {
        self.left.duration().min(self.right.duration())
    }
}

/// All training trials of one gesture, sharing the sample count `K_m`.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub gesture_id: String,
    pub trials: Vec<Trial>,
    pub k_m: usize,
}

impl TrainingSet {
    /// Number of trials `S_m`.
    pub fn trial_count(&self) -> usize {
        self.trials.len()
    }

    /// Pooled point count `O_m = S_m · K_m`.
    pub fn pooled_count(&self) -> usize {
        self.trials.len() * self.k_m
    }
}

/// Sidecar annotation accompanying a recording pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialMeta {
    pub label: Option<String>,
    pub offset_left: f64,
    pub offset_right: f64,
    pub subject: Option<String>,
}

// ---------------------------------------------------------------------------
// File ingestion.
// ---------------------------------------------------------------------------

fn parse_csv_stream(path: &Path, side: Side) -> Result<SampleStream> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut samples = Vec::new();
    let mut prev_t = f64::NEG_INFINITY;
    for (idx, raw_line) in content.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw_line.trim_end_matches('\r').trim();
        if idx == 0 {
            if line != "t,ax,ay,az" {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("expected header 't,ax,ay,az', found {line:?}"),
                ));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected 4 comma-separated fields, found {}", fields.len()),
            ));
        }
        let mut vals = [0.0f64; 4];
        for (v, f) in vals.iter_mut().zip(fields.iter()) {
            *v = f
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::parse(path, lineno, format!("not a number: {f:?}")))?;
        }
        let t = vals[0];
        if t <= prev_t {
            return Err(Error::parse(
                path,
                lineno,
                format!("timestamp {t} not strictly increasing (previous {prev_t})"),
            ));
        }
        prev_t = t;
        samples.push(TriaxSample::new(t, [vals[1], vals[2], vals[3]]));
    }
    if samples.is_empty() {
        return Err(Error::parse(path, 1, "no data rows"));
    }
    SampleStream::new(side, samples)
}

/// Loads a raw (unsynchronized) trial from one CSV per wrist.
///
/// Timestamps are preserved as recorded; the two streams may have different
/// lengths until [`synchronize_trials`] runs.
pub fn load_recording(left_path: &Path, right_path: &Path) -> Result<Trial> {
    let left = parse_csv_stream(left_path, Side::Left)?;
    let right = parse_csv_stream(right_path, Side::Right)?;
    Ok(Trial {
        gesture_label: None,
        left,
        right,
    })
}

/// Reads a `.meta` sidecar (`key=value` lines).
pub fn read_meta(path: &Path) -> Result<TrialMeta> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut meta = TrialMeta::default();
    for (idx, raw_line) in content.lines().enumerate() {
        let line = raw_line.trim_end_matches('\r').trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::parse(path, idx + 1, format!("expected key=value, found {line:?}"))
        })?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "label" => meta.label = Some(value.to_string()),
            "subject" => meta.subject = Some(value.to_string()),
            "offset_left" | "offset_right" => {
                let v: f64 = value.parse().map_err(|_| {
                    Error::parse(path, idx + 1, format!("{key}: not a number: {value:?}"))
                })?;
                if key == "offset_left" {
                    meta.offset_left = v;
                } else {
                    meta.offset_right = v;
                }
            }
            _ => {} // unknown keys are tolerated
        }
    }
    Ok(meta)
}

// ---------------------------------------------------------------------------
// Synchronization and length normalization.
// ---------------------------------------------------------------------------

/// Shifts each trial's streams by its (left, right) offsets so the gesture
/// onset sits at `t = 0`, dropping samples before the onset and trimming both
/// sides to their common span.
pub fn synchronize_trials(trials: &[Trial], offsets: &[(f64, f64)]) -> Result<Vec<Trial>> {
    if trials.len() != offsets.len() {
        return Err(Error::Parameter(format!(
            "{} trials but {} offset pairs",
            trials.len(),
            offsets.len()
        )));
    }
    trials
        .iter()
        .zip(offsets.iter())
        .map(|(trial, &(off_l, off_r))| {
            let left = trial.left.shifted(off_l, None)?;
            let right = trial.right.shifted(off_r, None)?;
            let span = left.duration().min(right.duration());
            let left = left.shifted(0.0, Some(span))?;
            let right = right.shifted(0.0, Some(span))?;
            Ok(Trial {
                gesture_label: trial.gesture_label.clone(),
                left,
                right,
            })
        })
        .collect()
}

/// Result of [`estimate_offset`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffsetEstimate {
    /// Lag of `b` relative to `a`, seconds; positive when `b` starts later.
    pub lag_s: f64,
    /// Normalized cross-correlation at the best lag, in [-1, 1].
    pub correlation: f64,
    /// False when the peak correlation is below 0.5.
    pub reliable: bool,
}

/// Correlation threshold below which an offset estimate is flagged unreliable.
pub const OFFSET_RELIABILITY_THRESHOLD: f64 = 0.5;

/// Estimates the lag between two streams by maximizing the normalized
/// cross-correlation of their acceleration magnitude signals over ±2 s.
pub fn estimate_offset(a: &SampleStream, b: &SampleStream) -> Result<OffsetEstimate> {
    if a.duration() < 1.0 || b.duration() < 1.0 {
        return Err(Error::TooShort(
            "offset estimation needs at least 1 s per stream".into(),
        ));
    }
    let sa = a.magnitudes();
    let sb = b.magnitudes();
    let var = |s: &[f64]| {
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / s.len() as f64
    };
    if var(&sa) < 1e-12 || var(&sb) < 1e-12 {
        return Err(Error::UndefinedCorrelation(
            "constant magnitude stream has no correlation peak".into(),
        ));
    }

    let max_lag = (2.0 * NOMINAL_RATE_HZ).round() as i64;
    let mut best_lag = 0i64;
    let mut best_corr = f64::NEG_INFINITY;
    for lag in -max_lag..=max_lag {
        // pair sa[i] with sb[i + lag]
        let (lo, hi) = if lag >= 0 {
            (0i64, (sa.len() as i64).min(sb.len() as i64 - lag))
        } else {
            (-lag, (sa.len() as i64).min(sb.len() as i64 - lag))
        };
        if hi - lo < (NOMINAL_RATE_HZ as i64) / 2 {
            continue; // require at least half a second of overlap
        }
        let n = (hi - lo) as f64;
        let (mut ma, mut mb) = (0.0, 0.0);
        for i in lo..hi {
            ma += sa[i as usize];
            mb += sb[(i + lag) as usize];
        }
        ma /= n;
        mb /= n;
        let (mut num, mut da, mut db) = (0.0, 0.0, 0.0);
        for i in lo..hi {
            let xa = sa[i as usize] - ma;
            let xb = sb[(i + lag) as usize] - mb;
            num += xa * xb;
            da += xa * xa;
            db += xb * xb;
        }
        if da < 1e-12 || db < 1e-12 {
            continue;
        }
        let corr = num / (da * db).sqrt();
        if corr > best_corr {
            best_corr = corr;
            best_lag = lag;
        }
    }
    if !best_corr.is_finite() {
        return Err(Error::UndefinedCorrelation(
            "no lag produced a defined correlation".into(),
        ));
    }
    Ok(OffsetEstimate {
        lag_s: best_lag as f64 / NOMINAL_RATE_HZ,
        correlation: best_corr,
        reliable: best_corr >= OFFSET_RELIABILITY_THRESHOLD,
    })
}

/// How [`normalize_lengths_with`] reconciles trials of different durations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LengthNormalization {
    /// Resample every trial onto the median sample count (default).
    Resample,
    /// Truncate every trial to the shortest sample count.
    Truncate,
}

/// Linear interpolation of `(ts, vals)` onto `query` timestamps.
///
/// Queries outside the support clamp to the boundary values.
pub fn linear_resample(ts: &[f64], vals: &[f64], query: &[f64]) -> Vec<f64> {
    debug_assert_eq!(ts.len(), vals.len());
    let mut out = Vec::with_capacity(query.len());
    let mut j = 0usize;
    for &q in query {
        if q <= ts[0] {
            out.push(vals[0]);
            continue;
        }
        if q >= ts[ts.len() - 1] {
            out.push(vals[vals.len() - 1]);
            continue;
        }
        while ts[j + 1] < q {
            j += 1;
        }
        let w = (q - ts[j]) / (ts[j + 1] - ts[j]);
        out.push(vals[j] + w * (vals[j + 1] - vals[j]));
    }
    out
}

fn resample_stream_to(stream: &SampleStream, k: usize) -> Result<SampleStream> {
    let ts = stream.timestamps();
    let t0 = ts[0];
    let t1 = ts[ts.len() - 1];
    let query: Vec<f64> = (0..k)
        .map(|j| t0 + (t1 - t0) * j as f64 / (k - 1) as f64)
        .collect();
    let axes: Vec<Vec<f64>> = (0..3)
        .map(|i| linear_resample(&ts, &stream.axis(i), &query))
        .collect();
    let samples = (0..k)
        .map(|j| {
            TriaxSample::new(
                j as f64 / NOMINAL_RATE_HZ,
                [axes[0][j], axes[1][j], axes[2][j]],
            )
        })
        .collect();
    SampleStream::new(stream.side, samples)
}

/// Median of trial sample counts; for an even count, the rounded mean of the
/// two central values.
fn median_length(lengths: &mut [usize]) -> usize {
    lengths.sort_unstable();
    let n = lengths.len();
    if n % 2 == 1 {
        lengths[n / 2]
    } else {
        let a = lengths[n / 2 - 1] as f64;
        let b = lengths[n / 2] as f64;
        ((a + b) / 2.0).round() as usize
    }
}

/// Length normalization with the default resampling policy.
pub fn normalize_lengths(trials: &[Trial]) -> Result<TrainingSet> {
    normalize_lengths_with(trials, LengthNormalization::Resample)
}

/// Reconciles synchronized trials to a common sample count `K_m` and rebases
/// timestamps onto the uniform grid `t_k = k / 40`.
pub fn normalize_lengths_with(
    trials: &[Trial],
    mode: LengthNormalization,
) -> Result<TrainingSet> {
    if trials.len() < 2 {
        return Err(Error::Parameter(format!(
            "training set needs at least 2 trials, got {}",
            trials.len()
        )));
    }
    for (i, t) in trials.iter().enumerate() {
        if t.duration() < 0.5 {
            return Err(Error::TooShort(format!(
                "trial {i} lasts {:.3} s, below the 0.5 s minimum",
                t.duration()
            )));
        }
    }
    let mut lengths: Vec<usize> = trials.iter().map(|t| t.sample_count()).collect();
    let k_m = match mode {
        LengthNormalization::Resample => median_length(&mut lengths),
        LengthNormalization::Truncate => *lengths.iter().min().unwrap(),
    };
    let out: Result<Vec<Trial>> = trials
        .iter()
        .map(|trial| {
            let (left, right) = match mode {
                LengthNormalization::Resample => (
                    resample_stream_to(&trial.left, k_m)?,
                    resample_stream_to(&trial.right, k_m)?,
                ),
                LengthNormalization::Truncate => (
                    truncate_stream_to(&trial.left, k_m)?,
                    truncate_stream_to(&trial.right, k_m)?,
                ),
            };
            Ok(Trial {
                gesture_label: trial.gesture_label.clone(),
                left,
                right,
            })
        })
        .collect();
    let trials = out?;
    let gesture_id = trials
        .iter()
        .find_map(|t| t.gesture_label.clone())
        .unwrap_or_default();
    Ok(TrainingSet {
        gesture_id,
        trials,
        k_m,
    })
}

/// Resamples both sides of a trial onto `k` uniform points spanning each
/// side's duration, rebased to the `t_k = k / 40` grid.
pub fn resample_trial(trial: &Trial, k: usize) -> Result<Trial> {
    if k < 2 {
        return Err(Error::Parameter(format!(
            "resampling needs k >= 2, got {k}"
        )));
    }
    if trial.left.is_empty() || trial.right.is_empty() {
        return Err(Error::EmptyStream("cannot resample an empty trial".into()));
    }
    Ok(Trial {
        gesture_label: trial.gesture_label.clone(),
        left: resample_stream_to(&trial.left, k)?,
        right: resample_stream_to(&trial.right, k)?,
    })
}

fn truncate_stream_to(stream: &SampleStream, k: usize) -> Result<SampleStream> {
    let samples = stream
        .samples()
        .iter()
        .take(k)
        .enumerate()
        .map(|(j, s)| TriaxSample::new(j as f64 / NOMINAL_RATE_HZ, s.a))
        .collect();
    SampleStream::new(stream.side, samples)
}
