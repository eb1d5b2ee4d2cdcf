//! Trial-level plumbing shared by training, calibration, evaluation, and the
//! CLI: preprocessing a trial into its feature set, whole-recording scoring,
//! dataset discovery on disk, and per-gesture model training.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::comparison::{score_feature_set, Method};
use crate::error::{Error, Result};
use crate::features::{build_2x7d, build_4x4d, Approach, FeatureSet};
use crate::gauss::derive_seed;
use crate::preprocess::{median_filter, separate_gravity_body, IirFilter};
use crate::regression::{build_gesture_model, GestureModel};
use crate::signal::{
    self, normalize_lengths_with, resample_trial, LengthNormalization, SampleStream, TrainingSet,
    Trial,
};

/// Median pre-filter size applied to every stream.
pub const MEDIAN_WINDOW: usize = 3;

/// Median-filters and splits both sides of a trial into gravity and body
/// streams: `[g_l, b_l, g_r, b_r]`.
pub fn preprocess_trial(trial: &Trial, filter: &IirFilter) -> Result<[SampleStream; 4]> {
    let left = median_filter(&trial.left, MEDIAN_WINDOW)?;
    let right = median_filter(&trial.right, MEDIAN_WINDOW)?;
    let (gl, bl) = separate_gravity_body(&left, filter)?;
    let (gr, br) = separate_gravity_body(&right, filter)?;
    Ok([gl, bl, gr, br])
}

/// Full feature extraction of one trial for the given modelling approach.
pub fn trial_feature_set(trial: &Trial, filter: &IirFilter, approach: Approach) -> Result<FeatureSet> {
    let [gl, bl, gr, br] = preprocess_trial(trial, filter)?;
    match approach {
        Approach::FourX4D => build_4x4d(&gl, &bl, &gr, &br),
        Approach::TwoX7D => build_2x7d(&gl, &bl, &gr, &br),
    }
}

/// Whole-recording score of a trial against one gesture model: the trial is
/// resampled onto the model's grid, preprocessed, and scored feature-wise.
pub fn score_trial(
    trial: &Trial,
    model: &GestureModel,
    filter: &IirFilter,
    method: Method,
    weights: Option<&[f64]>,
) -> Result<f64> {
    let resampled = resample_trial(trial, model.k_m)?;
    let set = trial_feature_set(&resampled, filter, model.approach)?;
    Ok(score_feature_set(&set, model, method, weights, 0.0)?.overall)
}

/// All synchronized trials of one gesture, as discovered on disk.
#[derive(Debug, Clone)]
pub struct GestureTrials {
    pub gesture: String,
    pub trials: Vec<Trial>,
    /// Subject id per trial, when the sidecars carry one.
    pub subjects: Vec<Option<String>>,
}

/// Loads every recording found in `dir` (via its `.meta` sidecars), applies
/// the annotated offsets, and groups the trials by gesture label.
pub fn load_dataset(dir: &Path) -> Result<Vec<GestureTrials>> {
    let mut meta_paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|x| x == "meta").unwrap_or(false))
        .collect();
    meta_paths.sort();
    if meta_paths.is_empty() {
        return Err(Error::Parameter(format!(
            "no .meta sidecars found in {}",
            dir.display()
        )));
    }

    let mut groups: BTreeMap<String, (Vec<Trial>, Vec<Option<String>>)> = BTreeMap::new();
    for meta_path in &meta_paths {
        let meta = signal::read_meta(meta_path)?;
        let label = meta.label.clone().ok_or_else(|| {
            Error::Parameter(format!("{}: missing label= entry", meta_path.display()))
        })?;
        let stem = meta_path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Parameter(format!("{}: bad file name", meta_path.display())))?;
        let left = dir.join(format!("{stem}_left.csv"));
        let right = dir.join(format!("{stem}_right.csv"));
        let mut trial = signal::load_recording(&left, &right)?;
        trial.gesture_label = Some(label.clone());
        let synced =
            signal::synchronize_trials(&[trial], &[(meta.offset_left, meta.offset_right)])?;
        let entry = groups.entry(label).or_default();
        entry.0.push(synced.into_iter().next().unwrap());
        entry.1.push(meta.subject.clone());
    }
    Ok(groups
        .into_iter()
        .map(|(gesture, (trials, subjects))| GestureTrials {
            gesture,
            trials,
            subjects,
        })
        .collect())
}

/// Normalizes each gesture's trials and fits its model; returns the training
/// sets alongside the models (calibration needs both).
pub fn train_models(
    dataset: &[GestureTrials],
    approach: Approach,
    seed: u64,
    filter: &IirFilter,
    mode: LengthNormalization,
) -> Result<Vec<(TrainingSet, GestureModel)>> {
    dataset
        .par_iter()
        .map(|group| {
            let training = normalize_lengths_with(&group.trials, mode).map_err(|e| {
                Error::Fit(format!("gesture {}: {e}", group.gesture))
            })?;
            let training = TrainingSet {
                gesture_id: group.gesture.clone(),
                ..training
            };
            let model = build_gesture_model(
                &training,
                approach,
                derive_seed(seed, &format!("train-{}", group.gesture)),
                filter,
            )?;
            Ok((training, model))
        })
        .collect()
}
