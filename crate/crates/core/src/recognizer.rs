//! Continuous-stream recognition: slides per-model horizon windows over a
//! test recording, scores every model, and emits a classified label timeline
//! with an `N.A.` class for windows that match no model.
//!
//! Each model's window spans its own duration (`K_m` samples at 40 Hz) and
//! the slice is resampled onto the model grid, so a uniform change of
//! execution speed is absorbed by construction. Acceptance thresholds are
//! calibrated from training self-scores.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comparison::{score_feature_set, Method};
use crate::error::{Error, Result};
use crate::features::{build_2x7d, build_4x4d, Approach, FeatureSet};
use crate::pipeline::{score_trial, MEDIAN_WINDOW};
use crate::preprocess::{median_filter, separate_gravity_body, FilterSpec, IirFilter};
use crate::regression::GestureModel;
use crate::signal::{SampleStream, TrainingSet, TriaxSample, NOMINAL_RATE_HZ};

/// Label assigned to windows that pass no model's threshold.
pub const UNKNOWN_LABEL: &str = "N.A.";

/// On-disk bundle format version.
pub const BUNDLE_FORMAT_VERSION: &str = "1";

/// Relaxation applied to the worst training self-score when deriving
/// acceptance thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMargins {
    /// Distance threshold = worst self-distance × this factor.
    pub distance_factor: f64,
    /// Log-density threshold = worst self log-density − this offset.
    pub log_density_offset: f64,
}

impl Default for ThresholdMargins {
    fn default() -> Self {
        ThresholdMargins {
            distance_factor: 1.5,
            log_density_offset: 2.0,
        }
    }
}

/// Acceptance thresholds of one gesture, for both comparison methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GestureThresholds {
    /// Maximum accepted distance.
    pub distance: f64,
    /// Minimum accepted mean log-density.
    pub probability: f64,
}

impl GestureThresholds {
    pub fn for_method(&self, method: Method) -> f64 {
        match method {
            Method::Distance => self.distance,
            Method::Probability => self.probability,
        }
    }

    /// Whether `score` passes this threshold under `method`.
    pub fn passes(&self, method: Method, score: f64) -> bool {
        match method {
            Method::Distance => score <= self.distance,
            Method::Probability => score >= self.probability,
        }
    }
}

/// Scores every training trial against its own model and relaxes the worst
/// self-score by the margins; one thresholds entry per gesture.
pub fn calibrate_thresholds(
    trained: &[(TrainingSet, GestureModel)],
    filter: &IirFilter,
    margins: ThresholdMargins,
) -> Result<BTreeMap<String, GestureThresholds>> {
    let entries: Vec<(String, GestureThresholds)> = trained
        .par_iter()
        .map(|(training, model)| {
            let mut worst_distance = 0.0f64;
            let mut worst_log_density = f64::INFINITY;
            for trial in &training.trials {
                let d = score_trial(trial, model, filter, Method::Distance, None)?;
                let p = score_trial(trial, model, filter, Method::Probability, None)?;
                worst_distance = worst_distance.max(d);
                worst_log_density = worst_log_density.min(p);
            }
            Ok((
                model.gesture_id.clone(),
                GestureThresholds {
                    distance: worst_distance * margins.distance_factor,
                    probability: worst_log_density - margins.log_density_offset,
                },
            ))
        })
        .collect::<Result<_>>()?;
    Ok(entries.into_iter().collect())
}

/// Execution-speed hypotheses tried per window: each slice spans
/// `K_m / speed` samples and is resampled onto the model's `K_m` grid, which
/// absorbs a uniform speed change that lands near a hypothesis.
pub const DEFAULT_SPEED_HYPOTHESES: [f64; 5] = [0.88, 0.94, 1.0, 1.06, 1.13];

/// Runtime configuration of the recognizer.
#[derive(Debug, Clone)]
pub struct RecognizerConfig {
    pub method: Method,
    pub approach: Approach,
    /// Window-start step in samples.
    pub stride: usize,
    /// Per-gesture acceptance threshold for `method`.
    pub thresholds: BTreeMap<String, f64>,
    /// Per-feature weights; `None` means equal.
    pub weights: Option<Vec<f64>>,
    /// Speed factors tried per window; the best-scoring slice wins.
    pub speed_hypotheses: Vec<f64>,
}

impl RecognizerConfig {
    /// Builds a config from a bundle's thresholds, picking the method side.
    pub fn from_thresholds(
        method: Method,
        approach: Approach,
        stride: usize,
        thresholds: &BTreeMap<String, GestureThresholds>,
    ) -> Self {
        RecognizerConfig {
            method,
            approach,
            stride,
            thresholds: thresholds
                .iter()
                .map(|(g, t)| (g.clone(), t.for_method(method)))
                .collect(),
            weights: None,
            speed_hypotheses: DEFAULT_SPEED_HYPOTHESES.to_vec(),
        }
    }

    fn validate(&self, models: &[GestureModel]) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::Parameter("stride must be >= 1".into()));
        }
        if self.speed_hypotheses.is_empty() || self.speed_hypotheses.iter().any(|&s| s <= 0.0) {
            return Err(Error::Parameter(
                "speed hypotheses must be non-empty and positive".into(),
            ));
        }
        for m in models {
            if m.approach != self.approach {
                return Err(Error::Parameter(format!(
                    "model {} uses approach {} but the recognizer is configured for {}",
                    m.gesture_id, m.approach, self.approach
                )));
            }
            if !self.thresholds.contains_key(&m.gesture_id) {
                return Err(Error::Parameter(format!(
                    "no threshold configured for gesture {}",
                    m.gesture_id
                )));
            }
        }
        Ok(())
    }
}

/// One labelled span of the recognition timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct TimelineEvent {
    pub t_start: f64,
    pub t_end: f64,
    pub label: String,
    /// Best window score inside the event; NaN for `N.A.` spans.
    pub score: f64,
}

/// Recognition output: merged events plus the raw per-model score traces.
#[derive(Debug, Clone)]
pub struct LabelTimeline {
    pub events: Vec<TimelineEvent>,
    /// Window start times of the score traces.
    pub trace_times: Vec<f64>,
    /// Per-gesture score trace, NaN where the window overran the stream.
    pub traces: Vec<(String, Vec<f64>)>,
}

impl LabelTimeline {
    /// Events CSV: `t_start,t_end,label,score`.
    pub fn events_csv(&self) -> String {
        let mut out = String::from("t_start,t_end,label,score\n");
        for e in &self.events {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.t_start, e.t_end, e.label, e.score
            ));
        }
        out
    }

    /// Score-trace CSV: `t,<gesture>...`, gnuplot-ready.
    pub fn traces_csv(&self) -> String {
        let mut out = String::from("t");
        for (g, _) in &self.traces {
            out.push(',');
            out.push_str(g);
        }
        out.push('\n');
        for (i, t) in self.trace_times.iter().enumerate() {
            out.push_str(&format!("{t}"));
            for (_, trace) in &self.traces {
                out.push_str(&format!(",{}", trace[i]));
            }
            out.push('\n');
        }
        out
    }
}

/// Builds the feature set of one window: slices `len` samples per side from
/// the median-filtered streams, resamples onto the model grid of `k_m`
/// points, and separates gravity/body on the slice itself, so windows see
/// the same short-segment preprocessing the training trials saw.
fn window_feature_set(
    left: &SampleStream,
    right: &SampleStream,
    filter: &IirFilter,
    start: usize,
    len: usize,
    k_m: usize,
    approach: Approach,
) -> Result<FeatureSet> {
    let slice = |s: &SampleStream| -> Result<SampleStream> {
        let src = &s.samples()[start..start + len];
        if len == k_m {
            let samples: Vec<TriaxSample> = src
                .iter()
                .enumerate()
                .map(|(i, smp)| TriaxSample::new(i as f64 / NOMINAL_RATE_HZ, smp.a))
                .collect();
            return SampleStream::new(s.side, samples);
        }
        let ts: Vec<f64> = (0..len).map(|i| i as f64).collect();
        let query: Vec<f64> = (0..k_m)
            .map(|i| (len - 1) as f64 * i as f64 / (k_m - 1) as f64)
            .collect();
        let mut axes: [Vec<f64>; 3] = Default::default();
        for (ax, out) in axes.iter_mut().enumerate() {
            let vals: Vec<f64> = src.iter().map(|smp| smp.a[ax]).collect();
            *out = crate::signal::linear_resample(&ts, &vals, &query);
        }
        let samples: Vec<TriaxSample> = (0..k_m)
            .map(|i| {
                TriaxSample::new(
                    i as f64 / NOMINAL_RATE_HZ,
                    [axes[0][i], axes[1][i], axes[2][i]],
                )
            })
            .collect();
        SampleStream::new(s.side, samples)
    };
    let (gl, bl) = separate_gravity_body(&slice(left)?, filter)?;
    let (gr, br) = separate_gravity_body(&slice(right)?, filter)?;
    match approach {
        Approach::FourX4D => build_4x4d(&gl, &bl, &gr, &br),
        Approach::TwoX7D => build_2x7d(&gl, &bl, &gr, &br),
    }
}

/// Slides per-model windows over a synchronized 40 Hz recording and returns
/// the merged label timeline.
pub fn recognize_stream(
    left: &SampleStream,
    right: &SampleStream,
    models: &[GestureModel],
    config: &RecognizerConfig,
    filter: &IirFilter,
) -> Result<LabelTimeline> {
    if models.is_empty() {
        return Err(Error::Parameter("no models loaded".into()));
    }
    config.validate(models)?;
    if left.len() != right.len() {
        return Err(Error::Alignment(format!(
            "left has {} samples, right has {}",
            left.len(),
            right.len()
        )));
    }
    let n = left.len();
    let min_k = models.iter().map(|m| m.k_m).min().unwrap();
    if n < min_k {
        return Err(Error::TooShort(format!(
            "stream of {n} samples is shorter than the shortest model ({min_k} samples)"
        )));
    }

    // deterministic model order; lexicographic tie-breaking falls out of it
    let mut order: Vec<usize> = (0..models.len()).collect();
    order.sort_by(|&a, &b| models[a].gesture_id.cmp(&models[b].gesture_id));
    let models_sorted: Vec<&GestureModel> = order.iter().map(|&i| &models[i]).collect();

    // denoise the full streams once; gravity separation runs per window
    let left_f = median_filter(left, MEDIAN_WINDOW)?;
    let right_f = median_filter(right, MEDIAN_WINDOW)?;

    let starts: Vec<usize> = (0..=(n - min_k)).step_by(config.stride).collect();
    let weights = config.weights.as_deref();

    // score all (window, model) pairs; per pair the best speed hypothesis
    // whose slice fits the remaining stream wins
    let rows: Vec<Vec<f64>> = starts
        .par_iter()
        .map(|&s| {
            let mut row = vec![f64::NAN; models_sorted.len()];
            for (mi, model) in models_sorted.iter().enumerate() {
                let mut best = f64::NAN;
                for &speed in &config.speed_hypotheses {
                    let len = ((model.k_m as f64 / speed).round() as usize).max(2);
                    if s + len > n {
                        continue;
                    }
                    let set = window_feature_set(
                        &left_f,
                        &right_f,
                        filter,
                        s,
                        len,
                        model.k_m,
                        config.approach,
                    )?;
                    let score = score_feature_set(
                        &set,
                        model,
                        config.method,
                        weights,
                        s as f64 / NOMINAL_RATE_HZ,
                    )?;
                    if best.is_nan() || config.method.better(score.overall, best) {
                        best = score.overall;
                    }
                }
                row[mi] = best;
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    // per-window winner among models passing their thresholds
    let mut winners: Vec<(Option<usize>, f64)> = Vec::with_capacity(starts.len());
    for row in &rows {
        let mut best: Option<(usize, f64)> = None;
        for (mi, &score) in row.iter().enumerate() {
            if score.is_nan() {
                continue;
            }
            let threshold = config.thresholds[&models_sorted[mi].gesture_id];
            let passes = match config.method {
                Method::Distance => score <= threshold,
                Method::Probability => score >= threshold,
            };
            if passes
                && best
                    .map(|(_, b)| config.method.better(score, b))
                    .unwrap_or(true)
            {
                best = Some((mi, score));
            }
        }
        match best {
            Some((mi, s)) => winners.push((Some(mi), s)),
            None => winners.push((None, f64::NAN)),
        }
    }

    let stride_dt = config.stride as f64 / NOMINAL_RATE_HZ;
    let start_times: Vec<f64> = starts.iter().map(|&s| s as f64 / NOMINAL_RATE_HZ).collect();
    let events = assemble_events(
        &winners,
        &start_times,
        stride_dt,
        &models_sorted,
        config.method,
    );

    let traces = models_sorted
        .iter()
        .enumerate()
        .map(|(mi, m)| {
            (
                m.gesture_id.clone(),
                rows.iter().map(|r| r[mi]).collect::<Vec<f64>>(),
            )
        })
        .collect();

    Ok(LabelTimeline {
        events,
        trace_times: start_times,
        traces,
    })
}

/// Merges consecutive identical winners into non-overlapping events. Gesture
/// events extend to the winning model's window span (truncated by whatever
/// follows); `N.A.` fills the remaining scored time.
fn assemble_events(
    winners: &[(Option<usize>, f64)],
    start_times: &[f64],
    stride_dt: f64,
    models: &[&GestureModel],
    method: Method,
) -> Vec<TimelineEvent> {
    let mut raw: Vec<TimelineEvent> = Vec::new();
    let mut i = 0usize;
    while i < winners.len() {
        let label_idx = winners[i].0;
        let mut j = i;
        let mut best = winners[i].1;
        while j + 1 < winners.len() && winners[j + 1].0 == label_idx {
            j += 1;
            let s = winners[j].1;
            if label_idx.is_some() && (best.is_nan() || method.better(s, best)) {
                best = s;
            }
        }
        let (label, t_end, score) = match label_idx {
            Some(mi) => (
                models[mi].gesture_id.clone(),
                start_times[j] + models[mi].duration(),
                best,
            ),
            None => (UNKNOWN_LABEL.to_string(), start_times[j] + stride_dt, f64::NAN),
        };
        raw.push(TimelineEvent {
            t_start: start_times[i],
            t_end,
            label,
            score,
        });
        i = j + 1;
    }

    // sweep: clip overlaps, drop consumed spans, merge re-joined labels
    let mut events: Vec<TimelineEvent> = Vec::with_capacity(raw.len());
    for mut ev in raw {
        if let Some(last) = events.last_mut() {
            if ev.label == last.label && ev.t_start <= last.t_end + 1e-9 {
                last.t_end = last.t_end.max(ev.t_end);
                if !ev.score.is_nan()
                    && (last.score.is_nan() || method.better(ev.score, last.score))
                {
                    last.score = ev.score;
                }
                continue;
            }
            if ev.t_start < last.t_end {
                if ev.label == UNKNOWN_LABEL {
                    ev.t_start = last.t_end;
                } else {
                    // a new gesture detection truncates the previous span
                    last.t_end = ev.t_start;
                }
            }
        }
        if ev.t_end - ev.t_start > 1e-9 {
            events.push(ev);
        }
    }
    events
}

// ---------------------------------------------------------------------------
// Model bundle persistence.
// ---------------------------------------------------------------------------

/// Versioned on-disk document holding every trained model plus the
/// calibration and preprocessing configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub version: String,
    pub approach: Approach,
    pub filter_spec: FilterSpec,
    pub margins: ThresholdMargins,
    pub seed: u64,
    pub models: Vec<GestureModel>,
    pub thresholds: BTreeMap<String, GestureThresholds>,
}

impl ModelBundle {
    pub fn new(
        approach: Approach,
        filter_spec: FilterSpec,
        margins: ThresholdMargins,
        seed: u64,
        models: Vec<GestureModel>,
        thresholds: BTreeMap<String, GestureThresholds>,
    ) -> Self {
        ModelBundle {
            version: BUNDLE_FORMAT_VERSION.to_string(),
            approach,
            filter_spec,
            margins,
            seed,
            models,
            thresholds,
        }
    }
}

/// Serializes a bundle to a JSON document.
pub fn save_models(path: &Path, bundle: &ModelBundle) -> Result<()> {
    let json = serde_json::to_string_pretty(bundle)
        .map_err(|e| Error::BundleFormat(format!("serialization failed: {e}")))?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

/// Loads and validates a bundle; version and approach tags are checked before
/// deserialization so a mismatch is reported by name.
pub fn load_models(path: &Path) -> Result<ModelBundle> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&content)
        .map_err(|e| Error::BundleFormat(format!("{}: {e}", path.display())))?;
    let version = value
        .get("version")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::BundleFormat(format!("{}: missing version field", path.display())))?;
    if version != BUNDLE_FORMAT_VERSION {
        return Err(Error::BundleVersion {
            found: version.to_string(),
            expected: BUNDLE_FORMAT_VERSION.to_string(),
        });
    }
    let approach = value.get("approach").and_then(|v| v.as_str()).unwrap_or("");
    if approach != "4x4d" && approach != "2x7d" {
        return Err(Error::BundleVersion {
            found: format!("approach tag {approach:?}"),
            expected: "approach tag \"4x4d\" or \"2x7d\"".to_string(),
        });
    }
    serde_json::from_value(value)
        .map_err(|e| Error::BundleFormat(format!("{}: {e}", path.display())))
}
