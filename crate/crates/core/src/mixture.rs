//! Gaussian mixture fitting over the pooled data points of one feature.
//!
//! Fitting standardizes every dimension to zero mean and unit variance first
//! (time in seconds and acceleration in m/s² live on very different scales),
//! initializes from k-means, and runs EM with a small covariance ridge. The
//! number of components comes from a k-means + silhouette sweep; the paper
//! behind this pipeline defers that estimator to its references, so the
//! sweep-and-threshold scheme here is an explicit stand-in.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gauss::{derive_seed, log_sum_exp, CholGaussian};

/// Default upper bound of the component-count sweep.
pub const K_MAX_DEFAULT: usize = 8;

/// Silhouette below which the sweep falls back to a single component.
pub const SILHOUETTE_FALLBACK: f64 = 0.25;

/// Scores within this band of the best silhouette count as a near-tie.
///
/// Pooled trajectory data has an almost flat silhouette profile (no true
/// cluster structure along a curve), where taking the bare argmax collapses
/// the mixture to 2 components and starves the regression of time
/// resolution. Well-separated blob data shows peaks with gaps above 0.19, so
/// true cluster counts are unaffected by the band.
pub const SILHOUETTE_PLATEAU: f64 = 0.15;

/// Covariance ridge added at initialization and every M-step.
pub const COVARIANCE_RIDGE: f64 = 1e-6;

/// Relative log-likelihood gain below which EM stops.
pub const EM_TOLERANCE: f64 = 1e-7;

/// Iteration caps.
pub const EM_MAX_ITER: usize = 500;
pub const KMEANS_MAX_ITER: usize = 300;

/// k-means restarts used for initialization and the component sweep.
pub const KMEANS_RESTARTS: usize = 5;

/// Points above which the component sweep clusters a seeded subsample.
const SWEEP_SUBSAMPLE_CAP: usize = 2000;

/// One mixture component with full covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

/// Per-dimension shift/scale applied before fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub shift: DVector<f64>,
    pub scale: DVector<f64>,
}

impl Standardization {
    pub fn identity(dim: usize) -> Self {
        Standardization {
            shift: DVector::zeros(dim),
            scale: DVector::from_element(dim, 1.0),
        }
    }

    /// Zero-mean unit-variance transform; constant dimensions keep scale 1.
    pub fn fit(points: &[DVector<f64>]) -> Self {
        let dim = points[0].len();
        let n = points.len() as f64;
        let mut shift = DVector::zeros(dim);
        for p in points {
            shift += p;
        }
        shift /= n;
        let mut var = DVector::zeros(dim);
        for p in points {
            for d in 0..dim {
                let c = p[d] - shift[d];
                var[d] += c * c;
            }
        }
        var /= n;
        let scale = var.map(|v| {
            let s = v.sqrt();
            if s > 1e-12 {
                s
            } else {
                1.0
            }
        });
        Standardization { shift, scale }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut z = x.clone();
        for d in 0..z.len() {
            z[d] = (z[d] - self.shift[d]) / self.scale[d];
        }
        z
    }

    pub fn invert(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut x = z.clone();
        for d in 0..x.len() {
            x[d] = x[d] * self.scale[d] + self.shift[d];
        }
        x
    }

    /// `Σ ln scale`, the log-Jacobian of the transform.
    pub fn log_jacobian(&self) -> f64 {
        self.scale.iter().map(|s| s.ln()).sum()
    }
}

/// A fitted Gaussian mixture together with the standardization used during
/// fitting, so it can be queried in the original data space.
#[derive(Debug, Clone)]
pub struct GmmModel {
    components: Vec<GaussianComponent>,
    standardization: Standardization,
    dimension: usize,
    /// Mean per-point log-likelihood after each EM iteration.
    pub log_likelihood_trace: Vec<f64>,
}

impl GmmModel {
    /// Wraps externally built components (identity standardization).
    pub fn from_components(components: Vec<GaussianComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Parameter("mixture needs at least one component".into()));
        }
        let dim = components[0].mean.len();
        let mut total = 0.0;
        for (i, c) in components.iter().enumerate() {
            if c.weight <= 0.0 || c.weight > 1.0 {
                return Err(Error::Parameter(format!(
                    "component {i}: weight {} outside (0, 1]",
                    c.weight
                )));
            }
            if c.mean.len() != dim || c.covariance.nrows() != dim || c.covariance.ncols() != dim {
                return Err(Error::Parameter(format!(
                    "component {i}: dimension mismatch"
                )));
            }
            if CholGaussian::new(c.mean.clone(), &c.covariance).is_none() {
                return Err(Error::Parameter(format!(
                    "component {i}: covariance not positive definite"
                )));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!(
                "component weights sum to {total}, expected 1"
            )));
        }
        Ok(GmmModel {
            components,
            standardization: Standardization::identity(dim),
            dimension: dim,
            log_likelihood_trace: Vec::new(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn component_count(&self) -> usize {
        self.components.len()
    }

    /// Components in the standardized fitting space.
    pub fn components_standardized(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn standardization(&self) -> &Standardization {
        &self.standardization
    }

    /// Components mapped back to the original data space.
    pub fn components(&self) -> Vec<GaussianComponent> {
        self.components
            .iter()
            .map(|c| {
                let mean = self.standardization.invert(&c.mean);
                let dim = c.mean.len();
                let mut cov = c.covariance.clone();
                for r in 0..dim {
                    for col in 0..dim {
                        cov[(r, col)] *=
                            self.standardization.scale[r] * self.standardization.scale[col];
                    }
                }
                GaussianComponent {
                    weight: c.weight,
                    mean,
                    covariance: cov,
                }
            })
            .collect()
    }

    /// Log mixture density at `x` in the original data space.
    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        let z = self.standardization.apply(x);
        self.log_density_standardized(&z) - self.standardization.log_jacobian()
    }

    /// Log mixture density in the standardized fitting space.
    pub fn log_density_standardized(&self, z: &DVector<f64>) -> f64 {
        let mut scratch = Vec::new();
        let logs: Vec<f64> = self
            .components
            .iter()
            .map(|c| {
                let g = CholGaussian::new(c.mean.clone(), &c.covariance)
                    .expect("stored covariance is PD");
                c.weight.ln() + g.log_density(z, &mut scratch)
            })
            .collect();
        log_sum_exp(&logs)
    }

    /// Mixture density at `x` in the original data space.
    pub fn density(&self, x: &DVector<f64>) -> f64 {
        self.log_density(x).exp()
    }
}

// ---------------------------------------------------------------------------
// k-means
// ---------------------------------------------------------------------------

/// Hard clustering produced by [`kmeans`].
#[derive(Debug, Clone)]
pub struct Clustering {
    pub assignments: Vec<usize>,
    pub centroids: Vec<DVector<f64>>,
    pub inertia: f64,
}

fn sq_dist(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        s += d * d;
    }
    s
}

fn kmeans_pp_init(points: &[DVector<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    let n = points.len();
    let first = rng.random_range(0..n);
    let mut centroids = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // all remaining points coincide with a centroid; take the first
            // index not yet used as one
            (0..n)
                .find(|&i| centroids.iter().all(|c| sq_dist(&points[i], c) > 0.0))
                .unwrap_or(0)
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, w) in d2.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        centroids.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, centroids.last().unwrap()));
        }
    }
    centroids
}

/// Lloyd's algorithm with k-means++ seeding, run to an assignment fixpoint or
/// 300 iterations; empty clusters are re-seeded at the point farthest from
/// its assigned centroid.
pub fn kmeans(points: &[DVector<f64>], k: usize, seed: u64) -> Result<Clustering> {
    if k == 0 {
        return Err(Error::Parameter("k must be >= 1".into()));
    }
    if points.len() < k {
        return Err(Error::Parameter(format!(
            "k = {k} exceeds the number of points ({})",
            points.len()
        )));
    }
    let n = points.len();
    let dim = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp_init(points, k, &mut rng);
    let mut assignments = vec![usize::MAX; n];

    for _ in 0..KMEANS_MAX_ITER {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, c) in centroids.iter().enumerate() {
                let d = sq_dist(p, c);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
        }

        let mut counts = vec![0usize; k];
        for &a in &assignments {
            counts[a] += 1;
        }
        for j in 0..k {
            if counts[j] == 0 {
                // re-seed at the point farthest from its assigned centroid
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq_dist(&points[a], &centroids[assignments[a]]);
                        let db = sq_dist(&points[b], &centroids[assignments[b]]);
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                counts[assignments[far]] -= 1;
                assignments[far] = j;
                counts[j] = 1;
                changed = true;
            }
        }
        if !changed {
            break;
        }

        for (j, c) in centroids.iter_mut().enumerate() {
            let mut acc = DVector::zeros(dim);
            for (i, p) in points.iter().enumerate() {
                if assignments[i] == j {
                    acc += p;
                }
            }
            *c = acc / counts[j] as f64;
        }
    }

    let inertia = points
        .iter()
        .zip(assignments.iter())
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum();
    Ok(Clustering {
        assignments,
        centroids,
        inertia,
    })
}

// ---------------------------------------------------------------------------
// Silhouette
// ---------------------------------------------------------------------------

/// Mean silhouette score of a clustering, in [-1, 1].
///
/// Per point: `(b - a) / max(a, b)` with `a` the mean intra-cluster distance
/// and `b` the smallest mean distance to another cluster; singletons and
/// all-zero distances contribute 0.
pub fn silhouette(points: &[DVector<f64>], clustering: &Clustering) -> Result<f64> {
    let n = points.len();
    let k = clustering.centroids.len();
    if clustering.assignments.len() != n {
        return Err(Error::Parameter("clustering does not match points".into()));
    }
    let mut counts = vec![0usize; k];
    for &a in &clustering.assignments {
        counts[a] += 1;
    }
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::Parameter(
            "silhouette needs at least 2 non-empty clusters".into(),
        ));
    }

    // sums[i][c]: total distance from point i to all points of cluster c
    let mut sums = vec![0.0f64; n * k];
    for i in 0..n {
        let ci = clustering.assignments[i];
        for j in (i + 1)..n {
            let d = sq_dist(&points[i], &points[j]).sqrt();
            sums[i * k + clustering.assignments[j]] += d;
            sums[j * k + ci] += d;
        }
    }

    let mut total = 0.0;
    for i in 0..n {
        let ci = clustering.assignments[i];
        if counts[ci] <= 1 {
            continue; // singleton contributes 0
        }
        let a = sums[i * k + ci] / (counts[ci] - 1) as f64;
        let mut b = f64::INFINITY;
        for c in 0..k {
            if c != ci && counts[c] > 0 {
                b = b.min(sums[i * k + c] / counts[c] as f64);
            }
        }
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

// ---------------------------------------------------------------------------
// Component-count selection
// ---------------------------------------------------------------------------

/// Sweeps k = 2..=k_max with k-means (5 restarts, best inertia) and returns
/// the k with the highest silhouette, or 1 when every silhouette stays below
/// [`SILHOUETTE_FALLBACK`]. Near-ties (within [`SILHOUETTE_PLATEAU`] of the
/// best) resolve toward the richer mixture.
///
/// Pools larger than 2000 points are swept on a seeded subsample; the
/// subsequent EM fit still uses every point.
pub fn select_num_components(points: &[DVector<f64>], k_max: usize, seed: u64) -> Result<usize> {
    if k_max < 2 {
        return Err(Error::Parameter("k_max must be >= 2".into()));
    }
    if points.len() < 2 * k_max {
        return Err(Error::Parameter(format!(
            "component sweep needs at least {} points, got {}",
            2 * k_max,
            points.len()
        )));
    }

    let subset: Vec<DVector<f64>>;
    let pool: &[DVector<f64>] = if points.len() > SWEEP_SUBSAMPLE_CAP {
        let mut idx: Vec<usize> = (0..points.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "sweep-subsample"));
        idx.shuffle(&mut rng);
        idx.truncate(SWEEP_SUBSAMPLE_CAP);
        idx.sort_unstable();
        subset = idx.iter().map(|&i| points[i].clone()).collect();
        &subset
    } else {
        points
    };

    let mut scores = Vec::with_capacity(k_max - 1);
    for k in 2..=k_max {
        let mut best_run: Option<Clustering> = None;
        for r in 0..KMEANS_RESTARTS {
            let run = kmeans(pool, k, derive_seed(seed, &format!("sweep-k{k}-r{r}")))?;
            if best_run
                .as_ref()
                .map(|b| run.inertia < b.inertia)
                .unwrap_or(true)
            {
                best_run = Some(run);
            }
        }
        scores.push((k, silhouette(pool, &best_run.unwrap())?));
    }
    let best_sil = scores.iter().map(|&(_, s)| s).fold(f64::NEG_INFINITY, f64::max);
    if best_sil < SILHOUETTE_FALLBACK {
        return Ok(1);
    }
    Ok(scores
        .iter()
        .filter(|&&(_, s)| s >= best_sil - SILHOUETTE_PLATEAU)
        .map(|&(k, _)| k)
        .max()
        .unwrap())
}

// ---------------------------------------------------------------------------
// EM
// ---------------------------------------------------------------------------

/// Requested component count for [`em_fit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentCount {
    Fixed(usize),
    /// Selected by [`select_num_components`] with the default sweep.
    Auto,
}

fn cluster_covariance(
    points: &[DVector<f64>],
    members: &[usize],
    mean: &DVector<f64>,
) -> DMatrix<f64> {
    let dim = mean.len();
    let mut cov = DMatrix::zeros(dim, dim);
    for &i in members {
        let d = &points[i] - mean;
        cov += &d * d.transpose();
    }
    if !members.is_empty() {
        cov /= members.len() as f64;
    }
    for d in 0..dim {
        cov[(d, d)] += COVARIANCE_RIDGE;
    }
    cov
}

/// Fits a Gaussian mixture by EM on standardized points.
///
/// Initialization comes from the best of 5 seeded k-means runs; covariances
/// carry a `1e-6·I` ridge at every M-step; iteration stops when the mean
/// per-point log-likelihood gains less than `1e-7` (relative) or after 500
/// iterations.
pub fn em_fit(points: &[DVector<f64>], count: ComponentCount, seed: u64) -> Result<GmmModel> {
    if points.is_empty() {
        return Err(Error::Parameter("no points to fit".into()));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Parameter("points have mixed dimensions".into()));
    }
    let standardization = Standardization::fit(points);
    let z: Vec<DVector<f64>> = points.iter().map(|p| standardization.apply(p)).collect();

    // the sweep clusters the same standardized geometry EM will fit
    let k = match count {
        ComponentCount::Fixed(k) => k,
        ComponentCount::Auto => {
            select_num_components(&z, K_MAX_DEFAULT, derive_seed(seed, "auto-k"))?
        }
    };
    if k == 0 {
        return Err(Error::Parameter("component count must be >= 1".into()));
    }
    let n = points.len();
    if n <= dim * k {
        return Err(Error::Parameter(format!(
            "need more than n·k = {} points for k = {k} in dimension {dim}, got {n}",
            dim * k
        )));
    }

    // initialization from the best k-means run
    let mut best_run: Option<Clustering> = None;
    for r in 0..KMEANS_RESTARTS {
        let run = kmeans(&z, k, derive_seed(seed, &format!("em-init-r{r}")))?;
        if best_run
            .as_ref()
            .map(|b| run.inertia < b.inertia)
            .unwrap_or(true)
        {
            best_run = Some(run);
        }
    }
    let init = best_run.unwrap();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &a) in init.assignments.iter().enumerate() {
        members[a].push(i);
    }
    let mut components: Vec<GaussianComponent> = (0..k)
        .map(|j| GaussianComponent {
            weight: members[j].len() as f64 / n as f64,
            mean: init.centroids[j].clone(),
            covariance: cluster_covariance(&z, &members[j], &init.centroids[j]),
        })
        .collect();

    let mut trace = Vec::new();
    let mut resp = vec![0.0f64; n * k];
    let mut scratch = Vec::new();
    let mut logs = vec![0.0f64; k];

    for _iter in 0..EM_MAX_ITER {
        // E-step
        let prepared: Vec<CholGaussian> = components
            .iter()
            .enumerate()
            .map(|(j, c)| {
                CholGaussian::new(c.mean.clone(), &c.covariance).ok_or_else(|| {
                    Error::Fit(format!(
                        "component {j}: covariance collapsed despite regularization"
                    ))
                })
            })
            .collect::<Result<_>>()?;
        let mut ll_sum = 0.0;
        for (i, zi) in z.iter().enumerate() {
            for j in 0..k {
                logs[j] = components[j].weight.ln() + prepared[j].log_density(zi, &mut scratch);
            }
            let lse = log_sum_exp(&logs);
            ll_sum += lse;
            for j in 0..k {
                resp[i * k + j] = (logs[j] - lse).exp();
            }
        }
        let ll = ll_sum / n as f64;
        let converged = trace
            .last()
            .map(|&prev: &f64| (ll - prev).abs() < EM_TOLERANCE * prev.abs().max(1.0))
            .unwrap_or(false);
        trace.push(ll);
        if converged {
            break;
        }

        // M-step
        for j in 0..k {
            let nj: f64 = (0..n).map(|i| resp[i * k + j]).sum();
            if nj < 1e-10 {
                return Err(Error::Fit(format!(
                    "component {j}: responsibility mass vanished"
                )));
            }
            let mut mean = DVector::zeros(dim);
            for (i, zi) in z.iter().enumerate() {
                mean.axpy(resp[i * k + j], zi, 1.0);
            }
            mean /= nj;
            let mut cov = DMatrix::zeros(dim, dim);
            for (i, zi) in z.iter().enumerate() {
                let r = resp[i * k + j];
                let d = zi - &mean;
                // rank-one update weighted by the responsibility
                for a in 0..dim {
                    let ra = r * d[a];
                    for b in a..dim {
                        cov[(a, b)] += ra * d[b];
                    }
                }
            }
            for a in 0..dim {
                for b in (a + 1)..dim {
                    let v = cov[(a, b)] / nj;
                    cov[(a, b)] = v;
                    cov[(b, a)] = v;
                }
                cov[(a, a)] = cov[(a, a)] / nj + COVARIANCE_RIDGE;
            }
            components[j] = GaussianComponent {
                weight: nj / n as f64,
                mean,
                covariance: cov,
            };
        }
    }

    Ok(GmmModel {
        components,
        standardization,
        dimension: dim,
        log_likelihood_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn v1(x: f64) -> DVector<f64> {
        DVector::from_vec(vec![x])
    }

    fn blob(center: &[f64], n: usize, std: f64, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
        let normal = Normal::new(0.0, std).unwrap();
        (0..n)
            .map(|_| {
                DVector::from_iterator(
                    center.len(),
                    center.iter().map(|&c| c + normal.sample(rng)),
                )
            })
            .collect()
    }

    #[test]
    fn kmeans_single_cluster_is_mean() {
        let pts = vec![v1(1.0), v1(2.0), v1(6.0)];
        let c = kmeans(&pts, 1, 0).unwrap();
        assert!((c.centroids[0][0] - 3.0).abs() < 1e-12);
        assert_eq!(c.assignments, vec![0, 0, 0]);
    }

    #[test]
    fn kmeans_separates_two_pairs() {
        let pts = vec![v1(0.0), v1(0.1), v1(10.0), v1(10.1)];
        let c = kmeans(&pts, 2, 42).unwrap();
        let mut centers: Vec<f64> = c.centroids.iter().map(|c| c[0]).collect();
        centers.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((centers[0] - 0.05).abs() < 1e-12);
        assert!((centers[1] - 10.05).abs() < 1e-12);
    }

    #[test]
    fn kmeans_k_equals_n_gives_zero_inertia() {
        let pts = vec![v1(0.0), v1(1.0), v1(2.0), v1(5.0)];
        let c = kmeans(&pts, 4, 7).unwrap();
        assert!(c.inertia < 1e-24, "inertia {}", c.inertia);
        let mut sorted = c.assignments.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
    }

    #[test]
    fn kmeans_rejects_k_above_n() {
        let pts = vec![v1(0.0), v1(1.0)];
        assert!(matches!(
            kmeans(&pts, 3, 0).unwrap_err(),
            Error::Parameter(_)
        ));
    }

    #[test]
    fn kmeans_fixed_seed_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pts = blob(&[0.0, 0.0], 60, 1.0, &mut rng);
        pts.extend(blob(&[4.0, 4.0], 60, 1.0, &mut rng));
        let a = kmeans(&pts, 3, 99).unwrap();
        let b = kmeans(&pts, 3, 99).unwrap();
        assert_eq!(a.assignments, b.assignments);
        assert_eq!(a.inertia, b.inertia);
    }

    #[test]
    fn silhouette_two_tight_pairs() {
        // oracle: direct evaluation of the definition
        // point 0.0:  a = 0.1, b = (10.0 + 10.1)/2 = 10.05
        // point 0.1:  a = 0.1, b = ( 9.9 + 10.0)/2 =  9.95
        // mirrored for the far pair
        let pts = vec![v1(0.0), v1(0.1), v1(10.0), v1(10.1)];
        let clustering = Clustering {
            assignments: vec![0, 0, 1, 1],
            centroids: vec![v1(0.05), v1(10.05)],
            inertia: 0.0,
        };
        let s = silhouette(&pts, &clustering).unwrap();
        let expected = ((10.05 - 0.1) / 10.05 + (9.95 - 0.1) / 9.95) / 2.0;
        assert!((s - expected).abs() < 1e-12);
        assert!((s - 0.990).abs() < 1e-3, "s = {s}");
    }

    #[test]
    fn silhouette_identical_points_score_zero() {
        let pts = vec![v1(2.0); 6];
        let clustering = Clustering {
            assignments: vec![0, 0, 0, 1, 1, 1],
            centroids: vec![v1(2.0), v1(2.0)],
            inertia: 0.0,
        };
        assert_eq!(silhouette(&pts, &clustering).unwrap(), 0.0);
    }

    #[test]
    fn silhouette_interleaved_split_is_negative() {
        // {0, 4} vs {2, 6}: hand evaluation gives (0 - 0.5 - 0.5 + 0)/4
        let pts = vec![v1(0.0), v1(2.0), v1(4.0), v1(6.0)];
        let clustering = Clustering {
            assignments: vec![0, 1, 0, 1],
            centroids: vec![v1(2.0), v1(4.0)],
            inertia: 0.0,
        };
        let s = silhouette(&pts, &clustering).unwrap();
        assert!((s - (-0.25)).abs() < 1e-12, "s = {s}");
    }

    #[test]
    fn silhouette_single_cluster_errors() {
        let pts = vec![v1(0.0), v1(1.0)];
        let clustering = Clustering {
            assignments: vec![0, 0],
            centroids: vec![v1(0.5)],
            inertia: 0.0,
        };
        assert!(matches!(
            silhouette(&pts, &clustering).unwrap_err(),
            Error::Parameter(_)
        ));
    }

    #[test]
    fn select_components_finds_three_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut pts = blob(&[0.0, 0.0], 150, 0.4, &mut rng);
        pts.extend(blob(&[8.0, 0.0], 150, 0.4, &mut rng));
        pts.extend(blob(&[4.0, 7.0], 150, 0.4, &mut rng));
        assert_eq!(select_num_components(&pts, 8, 23).unwrap(), 3);
    }

    #[test]
    fn select_components_two_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let mut pts = blob(&[0.0, 0.0], 200, 0.5, &mut rng);
        pts.extend(blob(&[9.0, 9.0], 200, 0.5, &mut rng));
        assert_eq!(select_num_components(&pts, 8, 31).unwrap(), 2);
    }

    #[test]
    fn select_components_single_blob_falls_back_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let pts = blob(&[0.0, 0.0, 0.0, 0.0], 400, 1.0, &mut rng);
        // oracle premise: every k in the sweep scores below the fallback
        for k in 2..=8 {
            let mut best: Option<Clustering> = None;
            for r in 0..KMEANS_RESTARTS {
                let run = kmeans(&pts, k, derive_seed(31, &format!("sweep-k{k}-r{r}"))).unwrap();
                if best.as_ref().map(|b| run.inertia < b.inertia).unwrap_or(true) {
                    best = Some(run);
                }
            }
            let s = silhouette(&pts, &best.unwrap()).unwrap();
            assert!(s < SILHOUETTE_FALLBACK, "k={k} silhouette {s}");
        }
        assert_eq!(select_num_components(&pts, 8, 31).unwrap(), 1);
    }

    #[test]
    fn em_single_component_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let raw = blob(&[1.0, -2.0], 300, 1.3, &mut rng);
        // pre-standardized data makes the closed form hold in original space
        let std = Standardization::fit(&raw);
        let pts: Vec<DVector<f64>> = raw.iter().map(|p| std.apply(p)).collect();

        let model = em_fit(&pts, ComponentCount::Fixed(1), 8).unwrap();
        let comps = model.components();
        assert_eq!(comps.len(), 1);

        let n = pts.len() as f64;
        let mut mean = DVector::zeros(2);
        for p in &pts {
            mean += p;
        }
        mean /= n;
        let mut cov = DMatrix::zeros(2, 2);
        for p in &pts {
            let d = p - &mean;
            cov += &d * d.transpose();
        }
        cov /= n;
        for d in 0..2 {
            cov[(d, d)] += COVARIANCE_RIDGE;
        }
        assert!((&comps[0].mean - &mean).norm() < 1e-9);
        assert!((&comps[0].covariance - &cov).norm() < 1e-9);
        assert!((comps[0].weight - 1.0).abs() < 1e-12);
    }

    #[test]
    fn em_loglikelihood_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut pts = blob(&[0.0, 0.0], 150, 1.0, &mut rng);
        pts.extend(blob(&[5.0, 3.0], 150, 0.7, &mut rng));
        let model = em_fit(&pts, ComponentCount::Fixed(2), 5).unwrap();
        let t = &model.log_likelihood_trace;
        assert!(t.len() >= 2);
        for w in t.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "drop {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn em_recovers_two_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let mut pts = blob(&[0.0, 0.0], 500, 1.0, &mut rng);
        pts.extend(blob(&[6.0, 0.0], 500, 1.0, &mut rng));
        let model = em_fit(&pts, ComponentCount::Fixed(2), 9).unwrap();
        let mut comps = model.components();
        comps.sort_by(|a, b| a.mean[0].partial_cmp(&b.mean[0]).unwrap());
        assert!((&comps[0].mean - DVector::from_vec(vec![0.0, 0.0])).norm() < 0.15);
        assert!((&comps[1].mean - DVector::from_vec(vec![6.0, 0.0])).norm() < 0.15);
        for c in &comps {
            assert!((c.weight - 0.5).abs() < 0.05);
        }
    }

    #[test]
    fn em_auto_picks_component_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let mut pts = blob(&[0.0, 0.0], 200, 0.4, &mut rng);
        pts.extend(blob(&[7.0, 7.0], 200, 0.4, &mut rng));
        let model = em_fit(&pts, ComponentCount::Auto, 77).unwrap();
        assert_eq!(model.component_count(), 2);
    }

    #[test]
    fn em_rejects_insufficient_points() {
        let pts = vec![v1(0.0), v1(1.0), v1(2.0)];
        assert!(matches!(
            em_fit(&pts, ComponentCount::Fixed(3), 0).unwrap_err(),
            Error::Parameter(_)
        ));
    }

    #[test]
    fn mixture_weights_sum_validated() {
        let c = GaussianComponent {
            weight: 0.5,
            mean: v1(0.0),
            covariance: DMatrix::from_element(1, 1, 1.0),
        };
        assert!(GmmModel::from_components(vec![c]).is_err());
    }

    #[test]
    fn standardization_roundtrip_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut pts: Vec<DVector<f64>> = blob(&[3.0, 100.0], 120, 1.0, &mut rng);
        // stretch the second dimension so standardization matters
        for p in pts.iter_mut() {
            p[1] *= 50.0;
        }
        let model = em_fit(&pts, ComponentCount::Fixed(1), 4).unwrap();
        let st = model.standardization().clone();
        for p in pts.iter().take(10) {
            let z = st.apply(p);
            let lhs = model.log_density(p);
            let rhs = model.log_density_standardized(&z) - st.log_jacobian();
            assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn mixture_density_integrates_to_one() {
        // Monte-Carlo integral over a wide box, n = 2 and n = 4
        for (dim, n_samples, seed) in [(2usize, 400_000usize, 10u64), (4, 2_000_000, 11)] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let center: Vec<f64> = vec![0.0; dim];
            let mut pts = blob(&center, 300, 1.0, &mut rng);
            let shifted: Vec<f64> = (0..dim).map(|i| if i == 0 { 4.0 } else { 1.5 }).collect();
            pts.extend(blob(&shifted, 300, 0.8, &mut rng));
            let model = em_fit(&pts, ComponentCount::Fixed(2), 21).unwrap();

            let lo = -8.0f64;
            let hi = 12.0f64;
            let volume = (hi - lo).powi(dim as i32);
            let mut acc = 0.0;
            let mut x = DVector::zeros(dim);
            for _ in 0..n_samples {
                for d in 0..dim {
                    x[d] = rng.random_range(lo..hi);
                }
                acc += model.density(&x);
            }
            let integral = acc / n_samples as f64 * volume;
            assert!(
                (integral - 1.0).abs() < 0.02,
                "dim {dim}: integral {integral}"
            );
        }
    }
}
