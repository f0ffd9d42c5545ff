//! TWO-NN intrinsic dimension estimation.
//!
//! For every point the ratio `μ = r₂ / r₁` of its second- to first-nearest
//! neighbour distance is computed. On a `d`-dimensional manifold `μ` is
//! Pareto distributed with exponent `d`, so `-log(1 - F(μ))` is linear in
//! `log μ` with slope `d`; the estimate is the least-squares slope of that
//! line through the origin using the empirical CDF.

pub mod kdtree;
pub mod synthetic;

use alloc::vec::Vec;

use rand::seq::index;

use crate::error::{invalid, Error, Result};
use crate::rng;

pub use kdtree::{KdTree, TwoNeighbours};

/// Clouds with at least this many points use the kd-tree.
pub const BRUTE_FORCE_LIMIT: usize = 20_000;

/// Deduplicated point cloud, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    data: Vec<f64>,
    duplicates_removed: usize,
}

impl PointCloud {
    pub fn new(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(points.len() * dim);
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(invalid!(
                    "point {i} has {} coordinates, expected {dim}",
                    p.len()
                ));
            }
            data.extend_from_slice(p);
        }
        Self::from_flat(dim, data)
    }

    /// Row-major `data` holding `data.len() / dim` points.
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid!("points must have at least one coordinate"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(invalid!(
                "flat data length {} is not a multiple of {dim}",
                data.len()
            ));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                op: "point cloud",
                value: *v,
            });
        }
        let (data, duplicates_removed) = dedup(dim, data);
        let cloud = Self {
            dim,
            data,
            duplicates_removed,
        };
        if cloud.len() < 3 {
            return Err(Error::TooFewPoints {
                needed: 3,
                have: cloud.len(),
            });
        }
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn duplicates_removed(&self) -> usize {
        self.duplicates_removed
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// The points at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.point(i));
        }
        Self::from_flat(self.dim, data)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}

/// Drops bitwise-equal rows, keeping first occurrences in their original order.
fn dedup(dim: usize, data: Vec<f64>) -> (Vec<f64>, usize) {
    let n = data.len() / dim;
    let bits = |i: usize| data[i * dim..(i + 1) * dim].iter().map(|v| v.to_bits());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| bits(a).cmp(bits(b)).then(a.cmp(&b)));
    let mut keep = alloc::vec![true; n];
    let mut removed = 0;
    for w in order.windows(2) {
        if bits(w[0]).eq(bits(w[1])) {
            keep[w[1]] = false;
            removed += 1;
        }
    }
    if removed == 0 {
        return (data, 0);
    }
    let mut out = Vec::with_capacity((n - removed) * dim);
    for i in (0..n).filter(|&i| keep[i]) {
        out.extend_from_slice(&data[i * dim..(i + 1) * dim]);
    }
    (out, removed)
}

/// How neighbours are searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighbourSearch {
    /// Brute force below [`BRUTE_FORCE_LIMIT`] points, kd-tree above.
    Auto,
    BruteForce,
    KdTree,
}

pub fn two_nearest(cloud: &PointCloud, search: NeighbourSearch) -> Vec<TwoNeighbours> {
    let use_tree = match search {
        NeighbourSearch::Auto => cloud.len() >= BRUTE_FORCE_LIMIT,
        NeighbourSearch::BruteForce => false,
        NeighbourSearch::KdTree => true,
    };
    if use_tree {
        KdTree::build(cloud).all_two_nearest()
    } else {
        kdtree::brute_force(cloud)
    }
}

/// `μ_i = r_{i,2} / r_{i,1}` for every point.
pub fn two_nn_ratios(cloud: &PointCloud) -> Result<Vec<f64>> {
    two_nn_ratios_with(cloud, NeighbourSearch::Auto)
}

pub fn two_nn_ratios_with(cloud: &PointCloud, search: NeighbourSearch) -> Result<Vec<f64>> {
    if cloud.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            have: cloud.len(),
        });
    }
    two_nearest(cloud, search)
        .into_iter()
        .map(|nb| {
            if nb.first_sq > 0.0 {
                Ok(libm::sqrt(nb.second_sq / nb.first_sq))
            } else {
                Err(Error::Numerical("zero nearest-neighbour distance".into()))
            }
        })
        .collect()
}

/// Slope through the origin of `-log(1 - i/(N+1))` against `log μ_(i)` over
/// the ascending ratios, after dropping the largest `trim_fraction` of them.
pub fn fit_dimension(mus: &[f64], trim_fraction: f64) -> Result<f64> {
    if mus.is_empty() {
        return Err(invalid!("no ratios to fit"));
    }
    if !(0.0..0.5).contains(&trim_fraction) {
        return Err(invalid!(
            "trim fraction must lie in [0, 0.5), got {trim_fraction}"
        ));
    }
    if mus.iter().any(|m| !(m.is_finite() && *m >= 1.0)) {
        return Err(invalid!("neighbour ratios must be finite and >= 1"));
    }
    let mut sorted = mus.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len();
    let kept = n - libm::floor(trim_fraction * n as f64) as usize;
    let denom = (n + 1) as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, mu) in sorted[..kept].iter().enumerate() {
        let x = libm::log(*mu);
        let y = -libm::log(1.0 - (i + 1) as f64 / denom);
        sxy += x * y;
        sxx += x * x;
    }
    if sxx <= 0.0 {
        return Err(Error::Degenerate("all neighbour ratios equal 1".into()));
    }
    Ok(sxy / sxx)
}

/// Mean estimate over subsamples with a normal-approximation 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionEstimate {
    pub d_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub subsamples: usize,
    pub subsample_size: usize,
}

impl DimensionEstimate {
    /// `mean ± 1.96 sd / √k` over per-subsample estimates.
    pub fn from_estimates(estimates: &[f64], subsample_size: usize) -> Result<Self> {
        let k = estimates.len();
        if k == 0 {
            return Err(invalid!("no subsample estimates"));
        }
        let mean = estimates.iter().sum::<f64>() / k as f64;
        let sd = if k > 1 {
            libm::sqrt(
                estimates
                    .iter()
                    .map(|e| (e - mean) * (e - mean))
                    .sum::<f64>()
                    / (k - 1) as f64,
            )
        } else {
            0.0
        };
        let half = 1.96 * sd / libm::sqrt(k as f64);
        Ok(Self {
            d_hat: mean,
            ci_low: mean - half,
            ci_high: mean + half,
            subsamples: k,
            subsample_size,
        })
    }
}

/// Estimate from subsample `index`: uniform draw without replacement using a
/// seed derived from `(seed, index)`.
pub fn subsample_estimate(
    cloud: &PointCloud,
    subsample_size: usize,
    trim_fraction: f64,
    seed: u64,
    index: usize,
) -> Result<f64> {
    if subsample_size > cloud.len() {
        return Err(invalid!(
            "subsample size {subsample_size} exceeds cloud size {}",
            cloud.len()
        ));
    }
    let mut rng = rng::seeded(rng::derive_seed(seed, index as u64));
    let mut picked = index::sample(&mut rng, cloud.len(), subsample_size).into_vec();
    picked.sort_unstable();
    let sub = cloud.select(&picked)?;
    fit_dimension(&two_nn_ratios(&sub)?, trim_fraction)
}

pub fn estimate_with_ci(
    cloud: &PointCloud,
    subsamples: usize,
    subsample_size: usize,
    trim_fraction: f64,
    seed: u64,
) -> Result<DimensionEstimate> {
    if subsamples == 0 {
        return Err(invalid!("need at least one subsample"));
    }
    let estimates = (0..subsamples)
        .map(|i| subsample_estimate(cloud, subsample_size, trim_fraction, seed, i))
        .collect::<Result<Vec<_>>>()?;
    DimensionEstimate::from_estimates(&estimates, subsample_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn collinear_three_points() {
        let cloud = PointCloud::new(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let mus = two_nn_ratios(&cloud).unwrap();
        assert_eq!(mus, vec![2.0, 1.0, 2.0]);
    }

    #[test]
    fn tie_breaks_by_smallest_index() {
        let cloud = PointCloud::new(&[vec![0.0], vec![1.0], vec![-1.0], vec![5.0]]).unwrap();
        for search in [NeighbourSearch::BruteForce, NeighbourSearch::KdTree] {
            let nb = two_nearest(&cloud, search);
            assert_eq!((nb[0].first, nb[0].second), (1, 2));
        }
    }

    #[test]
    fn duplicates_removed() {
        let cloud = PointCloud::new(&[
            vec![0.0, 1.0],
            vec![2.0, 3.0],
            vec![0.0, 1.0],
            vec![4.0, 4.0],
        ])
        .unwrap();
        assert_eq!(cloud.len(), 3);
        assert_eq!(cloud.duplicates_removed(), 1);
        assert_eq!(cloud.point(2), &[4.0, 4.0]);
        assert!(matches!(
            PointCloud::new(&[vec![1.0], vec![1.0], vec![2.0]]),
            Err(Error::TooFewPoints { .. })
        ));
        assert!(PointCloud::new(&[vec![1.0], vec![f64::NAN], vec![2.0]]).is_err());
        assert!(PointCloud::new(&[vec![1.0], vec![1.0, 2.0], vec![2.0]]).is_err());
    }

    #[test]
    fn ratios_at_least_one() {
        let pts = synthetic::cube(500, 3, 3);
        let mus = two_nn_ratios(&PointCloud::new(&pts).unwrap()).unwrap();
        assert!(mus.iter().all(|m| *m >= 1.0));
    }

    #[test]
    fn kd_tree_matches_brute_force() {
        for (dim, seed) in [(1, 1), (2, 2), (5, 3), (10, 4)] {
            let mut pts = synthetic::cube(3000, dim, seed);
            // grid-like duplicates in one coordinate to exercise ties
            for p in pts.iter_mut().step_by(7) {
                p[0] = libm::round(p[0] * 10.0) / 10.0;
            }
            let cloud = PointCloud::new(&pts).unwrap();
            let brute = two_nearest(&cloud, NeighbourSearch::BruteForce);
            let tree = two_nearest(&cloud, NeighbourSearch::KdTree);
            assert_eq!(brute, tree, "dim {dim}");
        }
        let lattice: Vec<Vec<f64>> = (0..40)
            .flat_map(|i| (0..40).map(move |j| vec![i as f64, j as f64]))
            .collect();
        let cloud = PointCloud::new(&lattice).unwrap();
        assert_eq!(
            two_nearest(&cloud, NeighbourSearch::BruteForce),
            two_nearest(&cloud, NeighbourSearch::KdTree)
        );
    }

    #[test]
    fn fit_recovers_pareto_exponent() {
        let mus = synthetic::pareto_ratios(100_000, 2.0, 5);
        let d = fit_dimension(&mus, 0.0).unwrap();
        assert!((d - 2.0).abs() < 0.05, "d = {d}");
    }

    #[test]
    fn fit_rejects_degenerate_input() {
        assert!(matches!(
            fit_dimension(&[1.0; 10], 0.0),
            Err(Error::Degenerate(_))
        ));
        assert!(fit_dimension(&[], 0.0).is_err());
        assert!(fit_dimension(&[1.5, 2.0], 0.5).is_err());
        assert!(fit_dimension(&[0.5, 2.0], 0.0).is_err());
    }

    #[test]
    fn trimming_drops_largest_ratios() {
        let mus = synthetic::pareto_ratios(10_000, 3.0, 1);
        let full = fit_dimension(&mus, 0.0).unwrap();
        let trimmed = fit_dimension(&mus, 0.1).unwrap();
        assert!(full != trimmed);
        assert!((trimmed - 3.0).abs() < 0.3);
    }

    #[test]
    fn segment_log_ratio_mean() {
        // μ ~ Pareto(1): E[log μ] = 1
        let pts = synthetic::cube(10_000, 1, 8);
        let mus = two_nn_ratios(&PointCloud::new(&pts).unwrap()).unwrap();
        let mean = mus.iter().map(|m| m.ln()).sum::<f64>() / mus.len() as f64;
        assert!((mean - 1.0).abs() < 0.05, "mean log μ {mean}");
    }

    #[test]
    fn torus_is_two_dimensional() {
        let cloud = PointCloud::new(&synthetic::flat_torus(10_000, 2)).unwrap();
        let d = fit_dimension(&two_nn_ratios(&cloud).unwrap(), 0.0).unwrap();
        assert!((d - 2.0).abs() < 0.3, "d = {d}");
    }

    #[test]
    fn single_subsample_collapses_interval() {
        let cloud = PointCloud::new(&synthetic::cube(2000, 2, 4)).unwrap();
        let est = estimate_with_ci(&cloud, 1, 1000, 0.0, 9).unwrap();
        assert_eq!(est.ci_low, est.d_hat);
        assert_eq!(est.ci_high, est.d_hat);
        assert!(estimate_with_ci(&cloud, 1, 5000, 0.0, 9).is_err());
        assert!(estimate_with_ci(&cloud, 0, 100, 0.0, 9).is_err());
    }

    #[test]
    fn estimate_is_seed_deterministic() {
        let cloud = PointCloud::new(&synthetic::cube(3000, 3, 4)).unwrap();
        let a = estimate_with_ci(&cloud, 4, 1000, 0.0, 1).unwrap();
        let b = estimate_with_ci(&cloud, 4, 1000, 0.0, 1).unwrap();
        let c = estimate_with_ci(&cloud, 4, 1000, 0.0, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.ci_low <= a.d_hat && a.d_hat <= a.ci_high);
    }
}
