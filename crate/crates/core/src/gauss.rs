//! Internal multivariate-normal helpers shared by fitting, regression, and
//! comparison code paths.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

pub(crate) const LN_2PI: f64 = 1.837877066409345483560659472811;

/// A Gaussian with its covariance pre-factored for repeated evaluation.
#[derive(Debug, Clone)]
pub(crate) struct CholGaussian {
    pub mean: DVector<f64>,
    lower: DMatrix<f64>,
    pub ln_det: f64,
}

impl CholGaussian {
    /// Factors `cov`; `None` when it is not positive definite.
    pub fn new(mean: DVector<f64>, cov: &DMatrix<f64>) -> Option<Self> {
        let chol: Cholesky<f64, Dyn> = Cholesky::new(cov.clone())?;
        let lower = chol.l();
        let ln_det = 2.0 * lower.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Some(CholGaussian {
            mean,
            lower,
            ln_det,
        })
    }

    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    /// Squared Mahalanobis distance of `x` from the mean.
    ///
    /// `scratch` is resized as needed and holds `L⁻¹ (x - mean)`.
    pub fn mahalanobis_sq(&self, x: &DVector<f64>, scratch: &mut Vec<f64>) -> f64 {
        let d = self.mean.len();
        scratch.clear();
        scratch.extend((0..d).map(|i| x[i] - self.mean[i]));
        // forward substitution with the lower factor
        for i in 0..d {
            let mut v = scratch[i];
            for j in 0..i {
                v -= self.lower[(i, j)] * scratch[j];
            }
            scratch[i] = v / self.lower[(i, i)];
        }
        scratch.iter().map(|v| v * v).sum()
    }

    /// Log of the multivariate normal density at `x`.
    pub fn log_density(&self, x: &DVector<f64>, scratch: &mut Vec<f64>) -> f64 {
        let q = self.mahalanobis_sq(x, scratch);
        -0.5 * (self.dimension() as f64 * LN_2PI + self.ln_det + q)
    }
}

/// Numerically stable `ln Σ exp(v)`.
pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Stable seed derivation for nested deterministic runs (FNV-1a over the tag,
/// mixed with the base using splitmix64 steps).
pub(crate) fn derive_seed(base: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in tag.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    let mut z = base ^ h;
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
