//! Gaussian Mixture Regression: conditions each feature's mixture on time to
//! produce the expected curve and its conditional covariance envelope.
//!
//! Regression runs in the standardized fitting space and de-standardizes the
//! outputs. The conditional covariance uses the per-component conditional
//! moments only; the cross-component mean-spread term is deliberately
//! omitted (matching the lineage this pipeline derives from) and available
//! through [`GmrVariant::WithMeanSpread`].

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Approach, FeatureId, FeatureSet};
use crate::gauss::{derive_seed, log_sum_exp, CholGaussian, LN_2PI};
use crate::mixture::{em_fit, ComponentCount, GmmModel};
use crate::pipeline::trial_feature_set;
use crate::preprocess::IirFilter;
use crate::signal::TrainingSet;

/// Conditional moments returned by [`gmr_condition`].
#[derive(Debug, Clone, PartialEq)]
pub struct Conditional {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// True when `t` fell outside the mixture's time support and the result
    /// degraded to nearest-component conditioning.
    pub extrapolated: bool,
}

/// Covariance form used when mixing component conditionals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GmrVariant {
    /// Responsibility-weighted conditional covariances only (default).
    ConditionalMoments,
    /// Additionally spread by the scatter of the component conditional means.
    WithMeanSpread,
}

/// Log-densities below this (natural log) count as responsibility underflow.
const LOG_UNDERFLOW: f64 = -700.0;

fn log_normal_1d(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

/// Conditions a joint (time, signal) mixture on `t`.
pub fn gmr_condition(gmm: &GmmModel, t: f64) -> Result<Conditional> {
    gmr_condition_with(gmm, t, GmrVariant::ConditionalMoments)
}

/// [`gmr_condition`] with an explicit covariance variant.
pub fn gmr_condition_with(gmm: &GmmModel, t: f64, variant: GmrVariant) -> Result<Conditional> {
    let dim = gmm.dimension();
    if dim < 2 {
        return Err(Error::Parameter(
            "conditioning needs a joint (time, signal) mixture of dimension >= 2".into(),
        ));
    }
    let n_a = dim - 1;
    let st = gmm.standardization();
    let tz = (t - st.shift[0]) / st.scale[0];
    let comps = gmm.components_standardized();

    let logs: Vec<f64> = comps
        .iter()
        .map(|c| c.weight.ln() + log_normal_1d(tz, c.mean[0], c.covariance[(0, 0)]))
        .collect();
    let max_log = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let mut weights = vec![0.0f64; comps.len()];
    let extrapolated = max_log < LOG_UNDERFLOW;
    if extrapolated {
        // every responsibility underflows; fall back to the component whose
        // time marginal is nearest in standard deviations
        let nearest = comps
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                let da = (tz - a.mean[0]).abs() / a.covariance[(0, 0)].sqrt();
                let db = (tz - b.mean[0]).abs() / b.covariance[(0, 0)].sqrt();
                da.partial_cmp(&db).unwrap()
            })
            .map(|(i, _)| i)
            .unwrap();
        weights[nearest] = 1.0;
        log::warn!(
            "conditioning time {t} lies outside the model support; using nearest component {nearest}"
        );
    } else {
        let lse = log_sum_exp(&logs);
        for (w, l) in weights.iter_mut().zip(logs.iter()) {
            *w = (l - lse).exp();
        }
    }

    let mut mean_z = DVector::zeros(n_a);
    let mut cov_z = DMatrix::zeros(n_a, n_a);
    let mut cond_means = Vec::with_capacity(comps.len());
    for (c, &h) in comps.iter().zip(weights.iter()) {
        let mu_t = c.mean[0];
        let var_t = c.covariance[(0, 0)];
        let sigma_at = DVector::from_iterator(n_a, (0..n_a).map(|r| c.covariance[(r + 1, 0)]));
        let mu_a = DVector::from_iterator(n_a, (0..n_a).map(|r| c.mean[r + 1]));
        let cond_mean = &mu_a + &sigma_at * ((tz - mu_t) / var_t);
        if h > 0.0 {
            mean_z.axpy(h, &cond_mean, 1.0);
            for r in 0..n_a {
                for col in 0..n_a {
                    let v = c.covariance[(r + 1, col + 1)] - sigma_at[r] * sigma_at[col] / var_t;
                    cov_z[(r, col)] += h * v;
                }
            }
        }
        cond_means.push(cond_mean);
    }
    if variant == GmrVariant::WithMeanSpread {
        for (m, &h) in cond_means.iter().zip(weights.iter()) {
            if h > 0.0 {
                let d = m - &mean_z;
                cov_z += h * &d * d.transpose();
            }
        }
    }

    // de-standardize: mean by shift/scale, covariance by the scale outer product
    let mut mean = DVector::zeros(n_a);
    for r in 0..n_a {
        mean[r] = st.shift[r + 1] + st.scale[r + 1] * mean_z[r];
    }
    let mut cov = DMatrix::zeros(n_a, n_a);
    for r in 0..n_a {
        for col in 0..n_a {
            cov[(r, col)] = st.scale[r + 1] * st.scale[col + 1] * cov_z[(r, col)];
        }
    }
    let covariance = floor_to_pd(symmetrize(cov))?;
    Ok(Conditional {
        mean,
        covariance,
        extrapolated,
    })
}

fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    for r in 0..n {
        for c in (r + 1)..n {
            let v = 0.5 * (m[(r, c)] + m[(c, r)]);
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
    }
    m
}

fn floor_to_pd(mut m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let mut ridge = 1e-9;
    for _ in 0..6 {
        if CholGaussian::new(DVector::zeros(n), &m).is_some() {
            return Ok(m);
        }
        for d in 0..n {
            m[(d, d)] += ridge;
        }
        ridge *= 10.0;
    }
    Err(Error::Numeric(
        "conditional covariance could not be floored to positive definite".into(),
    ))
}

/// Expected curve of one feature: `(t_k, f̂_a,k, Σ̂_a,k)` over the model grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureModel {
    pub feature_id: FeatureId,
    pub times: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
}

impl FeatureModel {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Dimension of the acceleration part (`n - 1`).
    pub fn value_dimension(&self) -> usize {
        self.means.first().map(|m| m.len()).unwrap_or(0)
    }
}

/// Fit metadata kept with a gesture model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingInfo {
    /// Trials the model was fitted on.
    pub s_m: usize,
    pub seed: u64,
    /// Mixture size chosen per feature.
    pub component_counts: Vec<(FeatureId, usize)>,
}

/// Per-feature expected curves of one gesture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureModel {
    pub gesture_id: String,
    pub approach: Approach,
    pub feature_models: Vec<FeatureModel>,
    pub k_m: usize,
    pub info: TrainingInfo,
}

impl GestureModel {
    pub fn feature_model(&self, id: FeatureId) -> Option<&FeatureModel> {
        self.feature_models.iter().find(|f| f.feature_id == id)
    }

    /// Model duration in seconds on the 40 Hz grid.
    pub fn duration(&self) -> f64 {
        self.k_m as f64 / crate::signal::NOMINAL_RATE_HZ
    }
}

/// Fits one feature: pools the points, fits a mixture (component count swept
/// automatically), and regresses over `times`.
pub fn fit_feature_model(
    points: &[DVector<f64>],
    times: &[f64],
    feature_id: FeatureId,
    seed: u64,
) -> Result<(FeatureModel, usize)> {
    let gmm = em_fit(points, ComponentCount::Auto, seed)
        .map_err(|e| Error::Fit(format!("feature {feature_id}: {e}")))?;
    let mut means = Vec::with_capacity(times.len());
    let mut covariances = Vec::with_capacity(times.len());
    for &t in times {
        let cond =
            gmr_condition(&gmm, t).map_err(|e| Error::Fit(format!("feature {feature_id}: {e}")))?;
        means.push(cond.mean);
        covariances.push(cond.covariance);
    }
    Ok((
        FeatureModel {
            feature_id,
            times: times.to_vec(),
            means,
            covariances,
        },
        gmm.component_count(),
    ))
}

/// Builds the model of one gesture from its normalized training set:
/// preprocesses every trial, pools `O_m = S_m · K_m` points per feature,
/// fits the mixtures, and regresses the expected curves on the training grid.
pub fn build_gesture_model(
    training: &TrainingSet,
    approach: Approach,
    seed: u64,
    filter: &IirFilter,
) -> Result<GestureModel> {
    if training.trials.len() < 2 {
        return Err(Error::Parameter(
            "gesture model needs at least 2 trials".into(),
        ));
    }
    let feature_sets: Vec<FeatureSet> = training
        .trials
        .par_iter()
        .map(|trial| trial_feature_set(trial, filter, approach))
        .collect::<Result<_>>()?;

    let times = feature_sets[0].series[0].times.clone();
    let ids = approach.feature_ids();
    let fitted: Vec<(FeatureModel, usize)> = ids
        .par_iter()
        .map(|&fid| {
            let mut points =
                Vec::with_capacity(training.trials.len() * training.k_m);
            for set in &feature_sets {
                let series = set.series_for(fid).ok_or_else(|| {
                    Error::Fit(format!("feature {fid}: missing from extracted set"))
                })?;
                points.extend(series.full_points());
            }
            let tag = format!("fit-{}-{}", training.gesture_id, fid);
            fit_feature_model(&points, &times, fid, derive_seed(seed, &tag))
        })
        .collect::<Result<_>>()?;

    let mut feature_models = Vec::with_capacity(fitted.len());
    let mut component_counts = Vec::with_capacity(fitted.len());
    for (model, k) in fitted {
        component_counts.push((model.feature_id, k));
        feature_models.push(model);
    }
    Ok(GestureModel {
        gesture_id: training.gesture_id.clone(),
        approach,
        feature_models,
        k_m: training.k_m,
        info: TrainingInfo {
            s_m: training.trials.len(),
            seed,
            component_counts,
        },
    })
}
