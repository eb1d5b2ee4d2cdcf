//! Window-to-model scoring: Mahalanobis distance or likelihood per feature,
//! aggregated with equal weights across features.
//!
//! Distances accumulate as the per-sample mean so gestures of different
//! durations compete fairly; the probability score is the mean log-density
//! (the geometric mean of the per-sample densities), which stays finite where
//! the raw density product of a hundred samples would underflow.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureId, FeatureSeries, FeatureSet};
use crate::gauss::{log_sum_exp, CholGaussian};
use crate::regression::{FeatureModel, GestureModel};

/// Comparison procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "dist")]
    Distance,
    #[serde(rename = "prob")]
    Probability,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Distance => "dist",
            Method::Probability => "prob",
        }
    }

    /// True when `a` is a better score than `b` under this method.
    pub fn better(&self, a: f64, b: f64) -> bool {
        match self {
            Method::Distance => a < b,
            Method::Probability => a > b,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dist" | "distance" => Ok(Method::Distance),
            "prob" | "probability" => Ok(Method::Probability),
            other => Err(Error::Parameter(format!(
                "unknown method {other:?}, expected dist or prob"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Score of one window against one gesture model.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonScore {
    pub gesture_id: String,
    pub method: Method,
    pub per_feature: Vec<(FeatureId, f64)>,
    pub overall: f64,
    pub window_start: f64,
}

/// Mahalanobis distance of one observation from one model point.
pub fn mahalanobis_point(
    mean: &DVector<f64>,
    covariance: &DMatrix<f64>,
    observed: &DVector<f64>,
) -> Result<f64> {
    if mean.len() != observed.len() {
        return Err(Error::Alignment(format!(
            "model dimension {} vs observation dimension {}",
            mean.len(),
            observed.len()
        )));
    }
    let g = CholGaussian::new(mean.clone(), covariance)
        .ok_or_else(|| Error::Numeric("covariance not positive definite".into()))?;
    let mut scratch = Vec::new();
    Ok(g.mahalanobis_sq(observed, &mut scratch).sqrt())
}

fn check_window(model: &FeatureModel, window: &FeatureSeries) -> Result<()> {
    if model.len() != window.len() {
        return Err(Error::Alignment(format!(
            "feature {}: model has {} points, window has {}",
            model.feature_id,
            model.len(),
            window.len()
        )));
    }
    if model.value_dimension() != window.values.first().map(|v| v.len()).unwrap_or(0) {
        return Err(Error::Alignment(format!(
            "feature {}: dimension mismatch",
            model.feature_id
        )));
    }
    Ok(())
}

/// Per-sample mean of the Mahalanobis distances between a window and the
/// expected curve.
pub fn accumulated_distance(model: &FeatureModel, window: &FeatureSeries) -> Result<f64> {
    check_window(model, window)?;
    let mut scratch = Vec::new();
    let mut total = 0.0;
    for k in 0..model.len() {
        let g = CholGaussian::new(model.means[k].clone(), &model.covariances[k])
            .ok_or_else(|| {
                Error::Numeric(format!(
                    "feature {} point {k}: covariance not positive definite",
                    model.feature_id
                ))
            })?;
        total += g.mahalanobis_sq(&window.values[k], &mut scratch).sqrt();
    }
    Ok(total / model.len() as f64)
}

/// Per-sample mean log-density of a window under the expected curve.
pub fn likelihood_score(model: &FeatureModel, window: &FeatureSeries) -> Result<f64> {
    check_window(model, window)?;
    let mut scratch = Vec::new();
    let mut total = 0.0;
    for k in 0..model.len() {
        let g = CholGaussian::new(model.means[k].clone(), &model.covariances[k])
            .ok_or_else(|| {
                Error::Numeric(format!(
                    "feature {} point {k}: covariance not positive definite",
                    model.feature_id
                ))
            })?;
        total += g.log_density(&window.values[k], &mut scratch);
    }
    Ok(total / model.len() as f64)
}

/// Weighted mean of per-feature scores; `None` weights are equal weights.
pub fn aggregate(scores: &[f64], weights: Option<&[f64]>) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Parameter("no feature scores to aggregate".into()));
    }
    match weights {
        None => Ok(scores.iter().sum::<f64>() / scores.len() as f64),
        Some(w) => {
            if w.len() != scores.len() {
                return Err(Error::Parameter(format!(
                    "{} weights for {} features",
                    w.len(),
                    scores.len()
                )));
            }
            if w.iter().any(|&x| x < 0.0) {
                return Err(Error::Parameter("weights must be non-negative".into()));
            }
            let total: f64 = w.iter().sum();
            if total <= 0.0 {
                return Err(Error::Parameter("weights sum to zero".into()));
            }
            Ok(scores
                .iter()
                .zip(w.iter())
                .map(|(s, w)| s * w)
                .sum::<f64>()
                / total)
        }
    }
}

/// Log of the literal per-window density mixture `Σ_f w_f · Π_k N(...)`,
/// taking the per-feature mean log-densities and the window length.
///
/// Kept for fidelity experiments; the default probability aggregation is the
/// length-invariant [`aggregate`] of mean log-densities.
pub fn aggregate_density_mixture(
    mean_log_densities: &[f64],
    weights: Option<&[f64]>,
    k_m: usize,
) -> Result<f64> {
    if mean_log_densities.is_empty() {
        return Err(Error::Parameter("no feature scores to aggregate".into()));
    }
    let n = mean_log_densities.len();
    let w: Vec<f64> = match weights {
        None => vec![1.0 / n as f64; n],
        Some(w) => {
            if w.len() != n {
                return Err(Error::Parameter(format!("{} weights for {n} features", w.len())));
            }
            let total: f64 = w.iter().sum();
            if total <= 0.0 {
                return Err(Error::Parameter("weights sum to zero".into()));
            }
            w.iter().map(|x| x / total).collect()
        }
    };
    let terms: Vec<f64> = mean_log_densities
        .iter()
        .zip(w.iter())
        .filter(|(_, &w)| w > 0.0)
        .map(|(&s, &w)| w.ln() + k_m as f64 * s)
        .collect();
    Ok(log_sum_exp(&terms))
}

/// Scores a windowed feature set against a gesture model.
pub fn score_feature_set(
    set: &FeatureSet,
    model: &GestureModel,
    method: Method,
    weights: Option<&[f64]>,
    window_start: f64,
) -> Result<ComparisonScore> {
    if set.approach != model.approach {
        return Err(Error::Parameter(format!(
            "window features use {} but model {} uses {}",
            set.approach, model.gesture_id, model.approach
        )));
    }
    let mut per_feature = Vec::with_capacity(model.feature_models.len());
    for fm in &model.feature_models {
        let series = set.series_for(fm.feature_id).ok_or_else(|| {
            Error::Parameter(format!("feature {} missing from window", fm.feature_id))
        })?;
        let s = match method {
            Method::Distance => accumulated_distance(fm, series)?,
            Method::Probability => likelihood_score(fm, series)?,
        };
        per_feature.push((fm.feature_id, s));
    }
    let scores: Vec<f64> = per_feature.iter().map(|(_, s)| *s).collect();
    let overall = aggregate(&scores, weights)?;
    Ok(ComparisonScore {
        gesture_id: model.gesture_id.clone(),
        method,
        per_feature,
        overall,
        window_start,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::LN_2PI;
    use proptest::prelude::*;

    fn vec2(x: f64, y: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y])
    }

    fn eye(n: usize, s: f64) -> DMatrix<f64> {
        DMatrix::identity(n, n) * s
    }

    fn flat_model(k: usize, dim: usize, sigma_sq: f64) -> FeatureModel {
        FeatureModel {
            feature_id: FeatureId::BodyLeft,
            times: (0..k).map(|i| i as f64 / 40.0).collect(),
            means: (0..k).map(|_| DVector::zeros(dim)).collect(),
            covariances: (0..k).map(|_| eye(dim, sigma_sq)).collect(),
        }
    }

    fn window_of(model: &FeatureModel, values: Vec<DVector<f64>>) -> FeatureSeries {
        FeatureSeries {
            feature_id: model.feature_id,
            times: model.times.clone(),
            values,
        }
    }

    #[test]
    fn mahalanobis_identity_is_euclidean() {
        let d = mahalanobis_point(&vec2(0.0, 0.0), &eye(2, 1.0), &vec2(3.0, 4.0)).unwrap();
        assert!((d - 5.0).abs() < 1e-12);
    }

    #[test]
    fn mahalanobis_zero_displacement() {
        let x = vec2(1.2, -0.4);
        let d = mahalanobis_point(&x, &eye(2, 3.0), &x).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn mahalanobis_scales_with_covariance() {
        let d = mahalanobis_point(&vec2(0.0, 0.0), &eye(2, 4.0), &vec2(3.0, 4.0)).unwrap();
        assert!((d - 2.5).abs() < 1e-12);
    }

    #[test]
    fn accumulated_distance_zero_on_expected_curve() {
        let model = flat_model(10, 2, 1.0);
        let window = window_of(&model, model.means.clone());
        assert_eq!(accumulated_distance(&model, &window).unwrap(), 0.0);
    }

    #[test]
    fn accumulated_distance_unit_offset() {
        // constant offset of one unit along a single axis, unit covariance:
        // every term is 1, the per-sample mean is 1
        let model = flat_model(25, 2, 1.0);
        let window = window_of(&model, vec![vec2(1.0, 0.0); 25]);
        let d = accumulated_distance(&model, &window).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn accumulated_distance_invariant_to_duplication() {
        let model = flat_model(5, 2, 1.0);
        let vals: Vec<DVector<f64>> = (0..5).map(|i| vec2(i as f64 * 0.1, 0.3)).collect();
        let d1 = accumulated_distance(&model, &window_of(&model, vals.clone())).unwrap();

        let model2 = FeatureModel {
            feature_id: model.feature_id,
            times: (0..10).map(|i| i as f64 / 40.0).collect(),
            means: model.means.iter().flat_map(|m| [m.clone(), m.clone()]).collect(),
            covariances: model
                .covariances
                .iter()
                .flat_map(|c| [c.clone(), c.clone()])
                .collect(),
        };
        let vals2: Vec<DVector<f64>> = vals.iter().flat_map(|v| [v.clone(), v.clone()]).collect();
        let d2 = accumulated_distance(&model2, &window_of(&model2, vals2)).unwrap();
        assert!((d1 - d2).abs() < 1e-12);
    }

    #[test]
    fn accumulated_distance_length_mismatch_errors() {
        let model = flat_model(5, 2, 1.0);
        let short = FeatureSeries {
            feature_id: model.feature_id,
            times: model.times[..4].to_vec(),
            values: model.means[..4].to_vec(),
        };
        assert!(matches!(
            accumulated_distance(&model, &short).unwrap_err(),
            Error::Alignment(_)
        ));
    }

    #[test]
    fn likelihood_of_standard_normal_mode() {
        let model = flat_model(8, 1, 1.0);
        let window = window_of(&model, vec![DVector::zeros(1); 8]);
        let s = likelihood_score(&model, &window).unwrap();
        let expected = -(0.5f64) * LN_2PI; // log(1/sqrt(2π))
        assert!((s - expected).abs() < 1e-12, "{s} vs {expected}");
    }

    #[test]
    fn likelihood_maximal_at_expected_curve() {
        let model = flat_model(12, 2, 0.7);
        let at_mean = likelihood_score(&model, &window_of(&model, model.means.clone())).unwrap();
        let offset = likelihood_score(
            &model,
            &window_of(&model, vec![vec2(0.4, -0.2); 12]),
        )
        .unwrap();
        assert!(at_mean > offset);
        // the mode value is the analytic upper bound for equal covariances
        let bound = -0.5 * (2.0 * LN_2PI + (0.7f64 * 0.7).ln());
        assert!((at_mean - bound).abs() < 1e-12);
    }

    #[test]
    fn likelihood_tolerates_jitter_better_than_offset() {
        // a smooth curve model: small circular time jitter hurts the score
        // less than a gross 3σ offset does
        let k = 80usize;
        let sigma = 0.3f64;
        let curve: Vec<DVector<f64>> = (0..k)
            .map(|i| {
                let t = i as f64 / 40.0;
                DVector::from_vec(vec![(2.0 * std::f64::consts::PI * 0.5 * t).sin()])
            })
            .collect();
        let model = FeatureModel {
            feature_id: FeatureId::BodyLeft,
            times: (0..k).map(|i| i as f64 / 40.0).collect(),
            means: curve.clone(),
            covariances: (0..k).map(|_| eye(1, sigma * sigma)).collect(),
        };
        let jittered: Vec<DVector<f64>> = (0..k).map(|i| curve[(i + 2) % k].clone()).collect();
        let offset: Vec<DVector<f64>> = curve
            .iter()
            .map(|v| DVector::from_vec(vec![v[0] + 3.0 * sigma]))
            .collect();
        let s_jit = likelihood_score(&model, &window_of(&model, jittered)).unwrap();
        let s_off = likelihood_score(&model, &window_of(&model, offset)).unwrap();
        assert!(s_jit > s_off, "jitter {s_jit} vs offset {s_off}");
    }

    #[test]
    fn aggregate_equal_weights() {
        assert_eq!(aggregate(&[1.0, 1.0, 1.0, 1.0], None).unwrap(), 1.0);
        let a = aggregate(&[0.5, 1.5, 2.5, 3.5], None).unwrap();
        let b = aggregate(&[3.5, 0.5, 2.5, 1.5], None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn aggregate_weight_override_ignores_zeroed_features() {
        let s = aggregate(&[1.0, 3.0, 100.0, 100.0], Some(&[0.5, 0.5, 0.0, 0.0])).unwrap();
        assert!((s - 2.0).abs() < 1e-12);
    }

    #[test]
    fn aggregate_rejects_bad_weights() {
        assert!(aggregate(&[1.0], Some(&[1.0, 2.0])).is_err());
        assert!(aggregate(&[1.0, 2.0], Some(&[0.0, 0.0])).is_err());
        assert!(aggregate(&[], None).is_err());
    }

    #[test]
    fn density_mixture_matches_direct_computation() {
        // two features, short window: compare with the literal mixture
        let s = [-0.9f64, -1.4];
        let k_m = 3usize;
        let direct = (0.5 * (3.0 * s[0]).exp() + 0.5 * (3.0 * s[1]).exp()).ln();
        let got = aggregate_density_mixture(&s, None, k_m).unwrap();
        assert!((got - direct).abs() < 1e-12);
    }

    proptest! {
        /// Mahalanobis distance is invariant under joint linear maps of the
        /// displacement and the covariance.
        #[test]
        fn mahalanobis_affine_invariance(
            dx in -5.0f64..5.0, dy in -5.0f64..5.0,
            a in 0.5f64..2.0, b in -1.0f64..1.0,
            c in -1.0f64..1.0, d in 0.5f64..2.0,
            v1 in 0.5f64..3.0, v2 in 0.5f64..3.0, rho in -0.8f64..0.8,
        ) {
            let det = a * d - b * c;
            prop_assume!(det.abs() > 0.1);
            let cov = DMatrix::from_row_slice(2, 2, &[
                v1, rho * (v1 * v2).sqrt(),
                rho * (v1 * v2).sqrt(), v2,
            ]);
            let m = DMatrix::from_row_slice(2, 2, &[a, b, c, d]);
            let x = vec2(dx, dy);
            let zero = vec2(0.0, 0.0);

            let d0 = mahalanobis_point(&zero, &cov, &x).unwrap();
            let cov_t = &m * &cov * m.transpose();
            let x_t = &m * &x;
            let d1 = mahalanobis_point(&zero, &cov_t, &x_t).unwrap();
            prop_assert!((d0 - d1).abs() < 1e-9, "{d0} vs {d1}");
        }

        /// The likelihood score strictly decreases as a fixed offset along a
        /// covariance eigendirection grows.
        #[test]
        fn likelihood_decreases_with_offset(step in 0.1f64..2.0) {
            let model = flat_model(6, 2, 1.3);
            let mk = |s: f64| window_of(&model, vec![vec2(s, 0.0); 6]);
            let s0 = likelihood_score(&model, &mk(step)).unwrap();
            let s1 = likelihood_score(&model, &mk(step * 2.0)).unwrap();
            prop_assert!(s1 < s0);
        }
    }
}
