//! k-fold cross-validation harness, confusion matrices with precision /
//! recall / accuracy, and TP/FP scoring of scenario timelines.
//!
//! Validation classifies whole recordings (no sliding): each held-out trial
//! is resampled onto every candidate model's grid and scored in full, and the
//! best-scoring model passing its threshold wins, otherwise the recording is
//! rejected as `N.A.`.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comparison::Method;
use crate::error::{Error, Result};
use crate::features::Approach;
use crate::gauss::derive_seed;
use crate::pipeline::{score_trial, train_models, GestureTrials};
use crate::preprocess::IirFilter;
use crate::recognizer::{
    calibrate_thresholds, GestureThresholds, LabelTimeline, ThresholdMargins, UNKNOWN_LABEL,
};
use crate::regression::GestureModel;
use crate::signal::{LengthNormalization, Trial};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Confusion counts over `M` gestures plus the `N.A.` class.
///
/// Rows are predicted labels, columns are true labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    gestures: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(gestures: Vec<String>) -> Self {
        let dim = gestures.len() + 1;
        ConfusionMatrix {
            gestures,
            counts: vec![vec![0; dim]; dim],
        }
    }

    /// Builds a matrix from explicit counts (rows predicted, columns true,
    /// each of size M+1 with the last index meaning `N.A.`).
    pub fn from_counts(gestures: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let dim = gestures.len() + 1;
        if counts.len() != dim || counts.iter().any(|r| r.len() != dim) {
            return Err(Error::Parameter(format!(
                "confusion counts must be {dim}x{dim}"
            )));
        }
        Ok(ConfusionMatrix { gestures, counts })
    }

    pub fn gestures(&self) -> &[String] {
        &self.gestures
    }

    /// All row/column labels including the trailing `N.A.`.
    pub fn labels(&self) -> Vec<String> {
        let mut l = self.gestures.clone();
        l.push(UNKNOWN_LABEL.to_string());
        l
    }

    fn index_of(&self, label: &str) -> Result<usize> {
        if label == UNKNOWN_LABEL {
            return Ok(self.gestures.len());
        }
        self.gestures
            .iter()
            .position(|g| g == label)
            .ok_or_else(|| Error::Parameter(format!("unknown label {label:?}")))
    }

    pub fn increment(&mut self, predicted: &str, truth: &str) -> Result<()> {
        let r = self.index_of(predicted)?;
        let c = self.index_of(truth)?;
        self.counts[r][c] += 1;
        Ok(())
    }

    /// Adds another matrix with the same label set.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.gestures != other.gestures {
            return Err(Error::Parameter("label sets differ".into()));
        }
        for (r, row) in other.counts.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                self.counts[r][c] += v;
            }
        }
        Ok(())
    }

    pub fn count(&self, predicted: &str, truth: &str) -> Result<u64> {
        Ok(self.counts[self.index_of(predicted)?][self.index_of(truth)?])
    }

    pub fn row_sum(&self, idx: usize) -> u64 {
        self.counts[idx].iter().sum()
    }

    pub fn column_sum(&self, idx: usize) -> u64 {
        self.counts.iter().map(|r| r[idx]).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Correct gesture classifications (diagonal of the gesture block).
    pub fn correct(&self) -> u64 {
        (0..self.gestures.len()).map(|i| self.counts[i][i]).sum()
    }

    /// CSV rendering: header row carries the true labels, body rows are
    /// prefixed by the predicted label.
    pub fn to_csv(&self) -> String {
        let labels = self.labels();
        let mut out = String::from("predicted\\true");
        for l in &labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (r, l) in labels.iter().enumerate() {
            out.push_str(l);
            for c in 0..labels.len() {
                out.push_str(&format!(",{}", self.counts[r][c]));
            }
            out.push('\n');
        }
        out
    }
}

/// Per-gesture precision/recall; `None` marks an undefined ratio (empty
/// row or column).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureMetrics {
    pub gesture: String,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

/// Metrics derived from a confusion matrix, plus the per-fold breakdown when
/// the matrix came from cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_gesture: Vec<GestureMetrics>,
    pub accuracy: f64,
    pub fold_accuracies: Vec<f64>,
}

impl MetricsReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("accuracy: {:.4}\n", self.accuracy));
        for m in &self.per_gesture {
            let fmt = |v: Option<f64>| match v {
                Some(x) => format!("{x:.4}"),
                None => "n/a".to_string(),
            };
            out.push_str(&format!(
                "{}: precision {} recall {}\n",
                m.gesture,
                fmt(m.precision),
                fmt(m.recall)
            ));
        }
        if !self.fold_accuracies.is_empty() {
            let folds: Vec<String> = self
                .fold_accuracies
                .iter()
                .map(|a| format!("{a:.4}"))
                .collect();
            out.push_str(&format!("fold accuracies: {}\n", folds.join(" ")));
        }
        out
    }
}

/// Precision, recall, and accuracy of a confusion matrix.
pub fn compute_metrics(confusion: &ConfusionMatrix) -> MetricsReport {
    let m = confusion.gestures().len();
    let per_gesture = (0..m)
        .map(|i| {
            let correct = confusion.counts[i][i];
            let row = confusion.row_sum(i);
            let col = confusion.column_sum(i);
            GestureMetrics {
                gesture: confusion.gestures[i].clone(),
                precision: (row > 0).then(|| correct as f64 / row as f64),
                recall: (col > 0).then(|| correct as f64 / col as f64),
            }
        })
        .collect();
    let total = confusion.total();
    let accuracy = if total > 0 {
        confusion.correct() as f64 / total as f64
    } else {
        0.0
    };
    MetricsReport {
        per_gesture,
        accuracy,
        fold_accuracies: Vec::new(),
    }
}

/// Classifies one whole recording: best-scoring model passing its threshold,
/// else `N.A.`. Models must be sorted by gesture id; ties keep the earlier
/// (lexicographically smaller) gesture.
pub fn classify_whole(
    trial: &Trial,
    models: &[GestureModel],
    thresholds: &BTreeMap<String, GestureThresholds>,
    method: Method,
    filter: &IirFilter,
    weights: Option<&[f64]>,
) -> Result<(String, f64)> {
    let mut best: Option<(String, f64)> = None;
    let mut best_any = f64::NAN;
    for model in models {
        let score = score_trial(trial, model, filter, method, weights)?;
        if best_any.is_nan() || method.better(score, best_any) {
            best_any = score;
        }
        let thr = thresholds.get(&model.gesture_id).ok_or_else(|| {
            Error::Parameter(format!("no threshold for gesture {}", model.gesture_id))
        })?;
        if thr.passes(method, score)
            && best
                .as_ref()
                .map(|(_, b)| method.better(score, *b))
                .unwrap_or(true)
        {
            best = Some((model.gesture_id.clone(), score));
        }
    }
    Ok(best.unwrap_or((UNKNOWN_LABEL.to_string(), best_any)))
}

/// How trials are grouped into folds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoldStrategy {
    /// Seeded shuffle of trial indices, equal group sizes per gesture.
    Random,
    /// Whole subjects assigned to folds (requires subject ids in metadata).
    SubjectDisjoint,
}

fn random_folds(
    group: &GestureTrials,
    folds: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let n = group.trials.len();
    if n % folds != 0 {
        return Err(Error::Parameter(format!(
            "gesture {}: {n} trials are not divisible into {folds} folds; \
             trim the dataset to a multiple of {folds}",
            group.gesture
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng =
        ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("fold-{}", group.gesture)));
    idx.shuffle(&mut rng);
    let size = n / folds;
    Ok(idx.chunks(size).map(|c| c.to_vec()).collect())
}

fn subject_folds(group: &GestureTrials, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let mut by_subject: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, s) in group.subjects.iter().enumerate() {
        let s = s.as_ref().ok_or_else(|| {
            Error::Parameter(format!(
                "gesture {}: trial {i} has no subject id; subject-disjoint folds need one",
                group.gesture
            ))
        })?;
        by_subject.entry(s.clone()).or_default().push(i);
    }
    if by_subject.len() < folds {
        return Err(Error::Parameter(format!(
            "gesture {}: {} subjects cannot fill {folds} disjoint folds",
            group.gesture,
            by_subject.len()
        )));
    }
    let mut subjects: Vec<String> = by_subject.keys().cloned().collect();
    let mut rng =
        ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("subjects-{}", group.gesture)));
    subjects.shuffle(&mut rng);
    let mut out = vec![Vec::new(); folds];
    for (i, s) in subjects.iter().enumerate() {
        out[i % folds].extend(by_subject[s].iter().copied());
    }
    Ok(out)
}

/// k-fold cross-validation with the default random fold assignment and
/// resampling length normalization.
pub fn kfold_evaluate(
    dataset: &[GestureTrials],
    folds: usize,
    approach: Approach,
    method: Method,
    seed: u64,
    filter: &IirFilter,
    margins: ThresholdMargins,
) -> Result<(ConfusionMatrix, MetricsReport)> {
    kfold_evaluate_with(
        dataset,
        folds,
        approach,
        method,
        seed,
        filter,
        margins,
        FoldStrategy::Random,
        LengthNormalization::Resample,
    )
}

/// k-fold cross-validation: per fold, models are trained and calibrated on
/// the remaining groups and every held-out recording is classified whole.
#[allow(clippy::too_many_arguments)]
pub fn kfold_evaluate_with(
    dataset: &[GestureTrials],
    folds: usize,
    approach: Approach,
    method: Method,
    seed: u64,
    filter: &IirFilter,
    margins: ThresholdMargins,
    strategy: FoldStrategy,
    norm: LengthNormalization,
) -> Result<(ConfusionMatrix, MetricsReport)> {
    if folds < 2 {
        return Err(Error::Parameter("need at least 2 folds".into()));
    }
    if dataset.is_empty() {
        return Err(Error::Parameter("empty dataset".into()));
    }
    let fold_plan: Vec<Vec<Vec<usize>>> = dataset
        .iter()
        .map(|g| match strategy {
            FoldStrategy::Random => random_folds(g, folds, seed),
            FoldStrategy::SubjectDisjoint => subject_folds(g, folds, seed),
        })
        .collect::<Result<_>>()?;

    let gestures: Vec<String> = dataset.iter().map(|g| g.gesture.clone()).collect();
    let per_fold: Vec<(ConfusionMatrix, f64)> = (0..folds)
        .into_par_iter()
        .map(|fold| {
            let mut train_groups: Vec<GestureTrials> = Vec::with_capacity(dataset.len());
            let mut test_trials: Vec<(&Trial, &str)> = Vec::new();
            for (g, group) in dataset.iter().enumerate() {
                let held_out = &fold_plan[g][fold];
                let mut train = Vec::with_capacity(group.trials.len());
                let mut subjects = Vec::with_capacity(group.trials.len());
                for (i, t) in group.trials.iter().enumerate() {
                    if held_out.contains(&i) {
                        test_trials.push((t, &group.gesture));
                    } else {
                        train.push(t.clone());
                        subjects.push(group.subjects[i].clone());
                    }
                }
                train_groups.push(GestureTrials {
                    gesture: group.gesture.clone(),
                    trials: train,
                    subjects,
                });
            }

            let trained = train_models(
                &train_groups,
                approach,
                derive_seed(seed, &format!("fold-{fold}")),
                filter,
                norm,
            )?;
            let thresholds = calibrate_thresholds(&trained, filter, margins)?;
            let models: Vec<GestureModel> =
                trained.into_iter().map(|(_, m)| m).collect();

            let mut cm = ConfusionMatrix::new(gestures.clone());
            let mut correct = 0u64;
            for (trial, truth) in &test_trials {
                let (label, _) =
                    classify_whole(trial, &models, &thresholds, method, filter, None)?;
                if label == *truth {
                    correct += 1;
                }
                cm.increment(&label, truth)?;
            }
            let acc = correct as f64 / test_trials.len() as f64;
            Ok((cm, acc))
        })
        .collect::<Result<_>>()?;

    let mut combined = ConfusionMatrix::new(gestures);
    let mut fold_accuracies = Vec::with_capacity(folds);
    for (cm, acc) in &per_fold {
        combined.merge(cm)?;
        fold_accuracies.push(*acc);
    }
    let mut report = compute_metrics(&combined);
    report.fold_accuracies = fold_accuracies;
    Ok((combined, report))
}

// ---------------------------------------------------------------------------
// Scenario timeline scoring.
// ---------------------------------------------------------------------------

/// One ground-truth gesture occurrence in a scenario recording.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedEvent {
    pub t_start: f64,
    pub t_end: f64,
    pub label: String,
}

/// Reads a `t_start,t_end,label` ground-truth CSV.
pub fn read_annotations(path: &Path) -> Result<Vec<AnnotatedEvent>> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, raw_line) in content.lines().enumerate() {
        let line = raw_line.trim_end_matches('\r').trim();
        if idx == 0 {
            if line != "t_start,t_end,label" {
                return Err(Error::parse(
                    path,
                    1,
                    format!("expected header 't_start,t_end,label', found {line:?}"),
                ));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::parse(path, idx + 1, "expected 3 fields"));
        }
        let t_start: f64 = fields[0]
            .parse()
            .map_err(|_| Error::parse(path, idx + 1, "bad t_start"))?;
        let t_end: f64 = fields[1]
            .parse()
            .map_err(|_| Error::parse(path, idx + 1, "bad t_end"))?;
        out.push(AnnotatedEvent {
            t_start,
            t_end,
            label: fields[2].to_string(),
        });
    }
    Ok(out)
}

/// TP/FP/FN counts of a predicted timeline against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineScore {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Matches predicted events to annotations: a prediction is a true positive
/// when its label matches an annotation it overlaps by at least half of the
/// annotation's duration. Unmatched predictions are false positives,
/// unmatched annotations false negatives. `N.A.` spans are not predictions.
pub fn score_timeline(predicted: &LabelTimeline, annotated: &[AnnotatedEvent]) -> TimelineScore {
    let preds: Vec<&crate::recognizer::TimelineEvent> = predicted
        .events
        .iter()
        .filter(|e| e.label != UNKNOWN_LABEL)
        .collect();
    let mut matched_pred = vec![false; preds.len()];
    let mut true_positives = 0usize;
    let mut false_negatives = 0usize;
    for ann in annotated {
        let needed = 0.5 * (ann.t_end - ann.t_start);
        let best = preds
            .iter()
            .enumerate()
            .filter(|(i, p)| {
                !matched_pred[*i]
                    && p.label == ann.label
                    && overlap(p.t_start, p.t_end, ann.t_start, ann.t_end) >= needed
            })
            .max_by(|(_, a), (_, b)| {
                let oa = overlap(a.t_start, a.t_end, ann.t_start, ann.t_end);
                let ob = overlap(b.t_start, b.t_end, ann.t_start, ann.t_end);
                oa.partial_cmp(&ob).unwrap()
            })
            .map(|(i, _)| i);
        match best {
            Some(i) => {
                matched_pred[i] = true;
                true_positives += 1;
            }
            None => false_negatives += 1,
        }
    }
    let false_positives = matched_pred.iter().filter(|&&m| !m).count();
    TimelineScore {
        true_positives,
        false_positives,
        false_negatives,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recognizer::TimelineEvent;

    fn matrix_from(gestures: &[&str], rows: &[&[u64]]) -> ConfusionMatrix {
        ConfusionMatrix::from_counts(
            gestures.iter().map(|s| s.to_string()).collect(),
            rows.iter().map(|r| r.to_vec()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn diagonal_matrix_scores_ones() {
        let cm = matrix_from(
            &["a", "b"],
            &[&[10, 0, 0], &[0, 10, 0], &[0, 0, 0]],
        );
        let report = compute_metrics(&cm);
        assert_eq!(report.accuracy, 1.0);
        for g in &report.per_gesture {
            assert_eq!(g.precision, Some(1.0));
            assert_eq!(g.recall, Some(1.0));
        }
    }

    #[test]
    fn recall_and_precision_from_quoted_cells() {
        // one column with 59 of 60 correct; one row with 58 of 59 correct
        let mut cm = ConfusionMatrix::new(vec!["occ".into(), "rff".into()]);
        for _ in 0..59 {
            cm.increment("occ", "occ").unwrap();
        }
        cm.increment("rff", "occ").unwrap();
        let report = compute_metrics(&cm);
        let occ = &report.per_gesture[0];
        assert!((occ.recall.unwrap() - 59.0 / 60.0).abs() < 1e-12);

        let mut cm2 = ConfusionMatrix::new(vec!["swp".into(), "fcot".into()]);
        for _ in 0..58 {
            cm2.increment("swp", "swp").unwrap();
        }
        cm2.increment("swp", "fcot").unwrap();
        let report2 = compute_metrics(&cm2);
        let swp = &report2.per_gesture[0];
        assert!((swp.precision.unwrap() - 58.0 / 59.0).abs() < 1e-12);
    }

    #[test]
    fn empty_row_precision_is_not_applicable() {
        let cm = matrix_from(&["a", "b"], &[&[5, 1, 0], &[0, 0, 0], &[0, 4, 0]]);
        let report = compute_metrics(&cm);
        assert_eq!(report.per_gesture[1].precision, None);
        assert!(report.per_gesture[1].recall.is_some());
    }

    #[test]
    fn csv_rendering_includes_na() {
        let cm = matrix_from(&["a"], &[&[2, 0], &[1, 0]]);
        let csv = cm.to_csv();
        assert!(csv.starts_with("predicted\\true,a,N.A.\n"));
        assert!(csv.contains("\nN.A.,1,0\n"));
    }

    fn ev(t0: f64, t1: f64, label: &str) -> TimelineEvent {
        TimelineEvent {
            t_start: t0,
            t_end: t1,
            label: label.into(),
            score: 0.0,
        }
    }

    fn timeline(events: Vec<TimelineEvent>) -> LabelTimeline {
        LabelTimeline {
            events,
            trace_times: vec![],
            traces: vec![],
        }
    }

    #[test]
    fn perfect_scenario_scores_all_tp() {
        let truth = vec![
            AnnotatedEvent {
                t_start: 5.0,
                t_end: 9.5,
                label: "swp".into(),
            },
            AnnotatedEvent {
                t_start: 14.5,
                t_end: 19.0,
                label: "swp".into(),
            },
        ];
        let pred = timeline(vec![
            ev(0.0, 5.0, UNKNOWN_LABEL),
            ev(5.0, 9.5, "swp"),
            ev(9.5, 14.5, UNKNOWN_LABEL),
            ev(14.6, 19.1, "swp"),
        ]);
        let s = score_timeline(&pred, &truth);
        assert_eq!(s.true_positives, 2);
        assert_eq!(s.false_positives, 0);
        assert_eq!(s.false_negatives, 0);
    }

    #[test]
    fn empty_prediction_counts_all_misses() {
        let truth = vec![
            AnnotatedEvent {
                t_start: 0.0,
                t_end: 1.0,
                label: "a".into(),
            },
            AnnotatedEvent {
                t_start: 2.0,
                t_end: 3.0,
                label: "b".into(),
            },
        ];
        let s = score_timeline(&timeline(vec![ev(0.0, 3.0, UNKNOWN_LABEL)]), &truth);
        assert_eq!(s.true_positives, 0);
        assert_eq!(s.false_positives, 0);
        assert_eq!(s.false_negatives, 2);
    }

    #[test]
    fn mislabeled_event_is_fp_and_fn() {
        let truth = vec![AnnotatedEvent {
            t_start: 0.0,
            t_end: 4.0,
            label: "a".into(),
        }];
        let s = score_timeline(&timeline(vec![ev(0.0, 4.0, "b")]), &truth);
        assert_eq!(s.true_positives, 0);
        assert_eq!(s.false_positives, 1);
        assert_eq!(s.false_negatives, 1);
    }

    #[test]
    fn half_overlap_rule_is_enforced() {
        let truth = vec![AnnotatedEvent {
            t_start: 0.0,
            t_end: 4.0,
            label: "a".into(),
        }];
        // 1.9 s of overlap < 2.0 s needed
        let s = score_timeline(&timeline(vec![ev(2.1, 6.0, "a")]), &truth);
        assert_eq!(s.true_positives, 0);
        assert_eq!(s.false_positives, 1);
        assert_eq!(s.false_negatives, 1);
        // 2.1 s of overlap passes
        let s2 = score_timeline(&timeline(vec![ev(1.9, 6.0, "a")]), &truth);
        assert_eq!(s2.true_positives, 1);
        assert_eq!(s2.false_positives, 0);
    }

    #[test]
    fn annotation_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.csv");
        std::fs::write(&path, "t_start,t_end,label\n5,9.5,swp\n14.5,19,swp\n").unwrap();
        let anns = read_annotations(&path).unwrap();
        assert_eq!(anns.len(), 2);
        assert_eq!(anns[0].t_start, 5.0);
        assert_eq!(anns[1].label, "swp");
    }
}
