//! Forward pass of the sparsification layer
//! `Z⁺ = ReLU(Z + α Wᵀ(Z - W Z) - α λ₁)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, invalid, Result};

/// Soft threshold `λ₁`: one scalar for every coordinate, or one per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub enum Threshold {
    Scalar(f64),
    PerCoordinate(DVector<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseLayer {
    weight: DMatrix<f64>,
    alpha: f64,
    lambda1: Threshold,
}

impl SparseLayer {
    pub fn new(weight: DMatrix<f64>, alpha: f64, lambda1: f64) -> Result<Self> {
        Self::with_threshold(weight, alpha, Threshold::Scalar(lambda1))
    }

    pub fn with_threshold(weight: DMatrix<f64>, alpha: f64, lambda1: Threshold) -> Result<Self> {
        if !weight.is_square() || weight.nrows() == 0 {
            return Err(invalid!("weight must be a non-empty square matrix"));
        }
        if weight.iter().any(|v| !v.is_finite()) {
            return Err(invalid!("weight must be finite"));
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(invalid!(
                "alpha must be finite and non-negative, got {alpha}"
            ));
        }
        match &lambda1 {
            Threshold::Scalar(l) => {
                if !(l.is_finite() && *l >= 0.0) {
                    return Err(invalid!("lambda1 must be finite and non-negative, got {l}"));
                }
            }
            Threshold::PerCoordinate(l) => {
                check_dim("lambda1", weight.nrows(), l.len())?;
                if l.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(invalid!("lambda1 entries must be finite and non-negative"));
                }
            }
        }
        Ok(Self {
            weight,
            alpha,
            lambda1,
        })
    }

    pub fn width(&self) -> usize {
        self.weight.nrows()
    }

    pub fn weight(&self) -> &DMatrix<f64> {
        &self.weight
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn threshold(&self) -> &Threshold {
        &self.lambda1
    }

    fn lambda_at(&self, i: usize) -> f64 {
        match &self.lambda1 {
            Threshold::Scalar(l) => *l,
            Threshold::PerCoordinate(l) => l[i],
        }
    }

    pub fn forward(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("sparse_forward", self.width(), z.len())?;
        let residual = z - &self.weight * z;
        let mut r = z + self.weight.tr_mul(&residual) * self.alpha;
        for (i, v) in r.iter_mut().enumerate() {
            *v = (*v - self.alpha * self.lambda_at(i)).max(0.0);
        }
        Ok(r)
    }

    /// Applies the layer to every column of `z`.
    pub fn forward_batch(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim("sparse_forward_batch", self.width(), z.nrows())?;
        let residual = z - &self.weight * z;
        let mut r = z + self.weight.tr_mul(&residual) * self.alpha;
        for ((i, _), v) in r
            .iter_mut()
            .enumerate()
            .map(|(k, v)| ((k % self.width(), k), v))
        {
            *v = (*v - self.alpha * self.lambda_at(i)).max(0.0);
        }
        Ok(r)
    }
}

/// Fraction of entries that are exactly zero; 1 for an empty vector.
pub fn sparsity_fraction(z: &[f64]) -> f64 {
    if z.is_empty() {
        return 1.0;
    }
    z.iter().filter(|v| **v == 0.0).count() as f64 / z.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Expands `Wᵀ(z - Wz)` as `Wᵀz - (WᵀW)z`, a different association order.
    fn reference(w: &DMatrix<f64>, alpha: f64, lambda: f64, z: &DVector<f64>) -> DVector<f64> {
        let wt = w.transpose();
        let gram = &wt * w;
        let step = &wt * z - gram * z;
        let pre = z + step * alpha;
        pre.map(|v| (v - alpha * lambda).max(0.0))
    }

    #[test]
    fn zero_step_is_relu() {
        let w = DMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64);
        let layer = SparseLayer::new(w, 0.0, 5.0).unwrap();
        let z = DVector::from_vec(alloc::vec![0.0, 1.5, 2.0]);
        assert_eq!(layer.forward(&z).unwrap(), z);
    }

    #[test]
    fn identity_weight_is_shift_threshold() {
        let layer = SparseLayer::new(DMatrix::identity(4, 4), 0.5, 1.0).unwrap();
        let z = DVector::from_vec(alloc::vec![2.0, 0.2, -1.0, 0.5]);
        let out = layer.forward(&z).unwrap();
        assert_eq!(out, DVector::from_vec(alloc::vec![1.5, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn swap_hand_case() {
        let w = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let layer = SparseLayer::new(w, 1.0, 0.0).unwrap();
        let out = layer
            .forward(&DVector::from_vec(alloc::vec![1.0, 0.0]))
            .unwrap();
        assert_eq!(out, DVector::from_vec(alloc::vec![0.0, 1.0]));
    }

    #[test]
    fn per_coordinate_threshold() {
        let l = DVector::from_vec(alloc::vec![0.0, 2.0]);
        let layer =
            SparseLayer::with_threshold(DMatrix::identity(2, 2), 1.0, Threshold::PerCoordinate(l))
                .unwrap();
        let out = layer
            .forward(&DVector::from_vec(alloc::vec![1.0, 1.0]))
            .unwrap();
        assert_eq!(out, DVector::from_vec(alloc::vec![1.0, 0.0]));
        assert!(SparseLayer::with_threshold(
            DMatrix::identity(2, 2),
            1.0,
            Threshold::PerCoordinate(DVector::zeros(3))
        )
        .is_err());
    }

    #[test]
    fn batch_is_columnwise() {
        let w = DMatrix::from_fn(3, 3, |i, j| {
            0.1 * (i as f64 - j as f64) + if i == j { 0.8 } else { 0.0 }
        });
        let layer = SparseLayer::new(w, 0.3, 0.2).unwrap();
        let z = DMatrix::from_fn(3, 4, |i, j| (i as f64 + 1.0) * (j as f64 - 1.5));
        let batch = layer.forward_batch(&z).unwrap();
        for j in 0..4 {
            let col = layer.forward(&z.column(j).into_owned()).unwrap();
            assert_eq!(batch.column(j), col.column(0));
        }
    }

    #[test]
    fn sparsity_counts() {
        assert_eq!(sparsity_fraction(&[0.0, 0.0]), 1.0);
        assert_eq!(sparsity_fraction(&[1.0, 3.0]), 0.0);
        assert_eq!(sparsity_fraction(&[1.0, 0.0, 2.0, 0.0]), 0.5);
    }

    #[test]
    fn invalid_parameters() {
        assert!(SparseLayer::new(DMatrix::zeros(2, 3), 1.0, 0.0).is_err());
        assert!(SparseLayer::new(DMatrix::zeros(2, 2), -1.0, 0.0).is_err());
        assert!(SparseLayer::new(DMatrix::zeros(2, 2), 1.0, f64::NAN).is_err());
        let layer = SparseLayer::new(DMatrix::identity(2, 2), 1.0, 0.0).unwrap();
        assert!(layer.forward(&DVector::zeros(3)).is_err());
    }

    fn layer_and_input() -> impl Strategy<Value = (DMatrix<f64>, f64, f64, DVector<f64>)> {
        (1usize..8).prop_flat_map(|n| {
            (
                proptest::collection::vec(-2.0f64..2.0, n * n),
                0.0f64..2.0,
                0.0f64..1.0,
                proptest::collection::vec(-3.0f64..3.0, n),
            )
                .prop_map(move |(w, a, l, z)| {
                    (DMatrix::from_vec(n, n, w), a, l, DVector::from_vec(z))
                })
        })
    }

    proptest! {
        #[test]
        fn output_nonnegative_and_matches_reference((w, a, l, z) in layer_and_input()) {
            let layer = SparseLayer::new(w.clone(), a, l).unwrap();
            let out = layer.forward(&z).unwrap();
            prop_assert!(out.iter().all(|v| *v >= 0.0));
            let r = reference(&w, a, l, &z);
            prop_assert!((out - r).amax() <= 1e-12);
        }

        #[test]
        fn larger_threshold_never_less_sparse(
            z in proptest::collection::vec(-3.0f64..3.0, 1..12),
            alpha in 0.0f64..2.0,
            l1 in 0.0f64..2.0,
            extra in 0.0f64..2.0,
        ) {
            let n = z.len();
            let z = DVector::from_vec(z);
            let lo = SparseLayer::new(DMatrix::identity(n, n), alpha, l1).unwrap();
            let hi = SparseLayer::new(DMatrix::identity(n, n), alpha, l1 + extra).unwrap();
            let s_lo = sparsity_fraction(lo.forward(&z).unwrap().as_slice());
            let s_hi = sparsity_fraction(hi.forward(&z).unwrap().as_slice());
            prop_assert!(s_hi >= s_lo);
        }
    }
}
