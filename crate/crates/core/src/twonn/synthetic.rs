//! Point clouds with known intrinsic dimension.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::rng;

/// Uniform samples from the unit `dim`-cube.
pub fn cube(count: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng::seeded(seed);
    (0..count)
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
        .collect()
}

/// Uniform samples from the flat torus `(cos u, sin u, cos v, sin v)` in R⁴.
pub fn flat_torus(count: usize, seed: u64) -> Vec<Vec<f64>> {
    let tau = 2.0 * core::f64::consts::PI;
    let mut rng = rng::seeded(seed);
    (0..count)
        .map(|_| {
            let u = tau * rng.random::<f64>();
            let v = tau * rng.random::<f64>();
            alloc::vec![libm::cos(u), libm::sin(u), libm::cos(v), libm::sin(v)]
        })
        .collect()
}

/// Uniform samples on a segment pushed through a random affine map into
/// `R^ambient`.
pub fn embedded_segment(count: usize, ambient: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng::seeded(seed);
    let dir = DVector::from_fn(ambient, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z
    });
    let offset = DVector::from_fn(ambient, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z
    });
    (0..count)
        .map(|_| {
            let t = rng.random::<f64>();
            (&offset + &dir * t).iter().copied().collect()
        })
        .collect()
}

/// Uniform `d`-cube samples mapped into `R^ambient` by a random Gaussian
/// linear map.
pub fn embedded_cube(count: usize, dim: usize, ambient: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng::seeded(seed);
    let map = DMatrix::from_fn(ambient, dim, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z
    });
    cube(count, dim, rng::derive_seed(seed, 1))
        .into_iter()
        .map(|p| (&map * DVector::from_vec(p)).iter().copied().collect())
        .collect()
}

/// Pareto(1, d) samples `u^{-1/d}`, the law of the neighbour-distance ratio on
/// a `d`-dimensional manifold with locally uniform density.
pub fn pareto_ratios(count: usize, dim: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng::seeded(seed);
    (0..count)
        .map(|_| {
            let u: f64 = 1.0 - rng.random::<f64>();
            libm::pow(u, -1.0 / dim)
        })
        .collect()
}
