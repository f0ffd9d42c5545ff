//! Kalman controllability of linear systems `ẋ = A x + B u`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, invalid, Error, Result};
use crate::State;

pub const DEFAULT_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllabilityReport {
    pub rank: usize,
    pub full: bool,
    pub singular_values: Vec<f64>,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(invalid!("A must be square and non-empty"));
        }
        check_dim("B rows", a.nrows(), b.nrows())?;
        if b.ncols() == 0 {
            return Err(invalid!("B needs at least one column"));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(invalid!("A and B must be finite"));
        }
        Ok(Self { a, b })
    }

    /// The chain integrator: ones on the superdiagonal, input on the last state.
    pub fn chain(dim: usize) -> Self {
        let (a, b) = crate::dynamics::chain_matrices(dim);
        Self { a, b }
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }
}

/// `[B, AB, A²B, …, A^{d_s-1}B]` by repeated multiplication.
pub fn controllability_matrix(sys: &LinearSystem) -> Result<DMatrix<f64>> {
    let (n, m) = (sys.state_dim(), sys.input_dim());
    let mut out = DMatrix::zeros(n, n * m);
    let mut block = sys.b.clone();
    for k in 0..n {
        if block.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(alloc::format!(
                "A^{k} B overflowed; A is too ill-conditioned"
            )));
        }
        out.columns_mut(k * m, m).copy_from(&block);
        block = &sys.a * block;
    }
    Ok(out)
}

/// Numerical rank of the controllability matrix: singular values above
/// `tol · σ_max · max(rows, cols)` count.
pub fn is_fully_reachable(sys: &LinearSystem, tol: f64) -> Result<ControllabilityReport> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(invalid!("rank tolerance must be positive, got {tol}"));
    }
    let c = controllability_matrix(sys)?;
    let dims = c.nrows().max(c.ncols()) as f64;
    let svd = c
        .try_svd(false, false, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let mut singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
    singular_values.sort_unstable_by(|a, b| b.total_cmp(a));
    let sigma_max = singular_values.first().copied().unwrap_or(0.0);
    let threshold = tol * sigma_max * dims;
    let rank = if sigma_max > 0.0 {
        singular_values.iter().filter(|s| **s > threshold).count()
    } else {
        0
    };
    Ok(ControllabilityReport {
        rank,
        full: rank == sys.state_dim(),
        singular_values,
    })
}

/// Orthonormal basis of the reachable subspace `range(C)`.
pub fn reachable_basis(sys: &LinearSystem, tol: f64) -> Result<DMatrix<f64>> {
    let report = is_fully_reachable(sys, tol)?;
    let c = controllability_matrix(sys)?;
    let svd = c
        .try_svd(true, false, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let u = svd.u.expect("requested U");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_unstable_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let cols: Vec<DVector<f64>> = idx[..report.rank]
        .iter()
        .map(|&i| u.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        return Ok(DMatrix::zeros(sys.state_dim(), 0));
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Norm of the component of `x` orthogonal to the reachable subspace.
pub fn unreachable_residual(basis: &DMatrix<f64>, x: &State) -> f64 {
    if basis.ncols() == 0 {
        return x.norm();
    }
    let proj = basis * (basis.transpose() * x);
    (x - proj).norm()
}

/// RK4 integration of `ẋ = A x + B u_k` holding each input for one step.
pub fn simulate_open_loop(
    sys: &LinearSystem,
    x0: &State,
    inputs: &[DVector<f64>],
    dt: f64,
) -> Result<Vec<State>> {
    check_dim("initial state", sys.state_dim(), x0.len())?;
    let mut out = Vec::with_capacity(inputs.len() + 1);
    out.push(x0.clone());
    let mut x = x0.clone();
    for u in inputs {
        check_dim("input", sys.input_dim(), u.len())?;
        let bu = &sys.b * u;
        let f = |s: &State| -> Result<State> { Ok(&sys.a * s + &bu) };
        x = crate::dynamics::rk4_step(&f, &x, dt)?;
        out.push(x.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut crate::rng::Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    /// A 4×4 block-diagonal system whose input only excites the first block.
    fn invariant_subspace_example() -> LinearSystem {
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 1.0, 0.0, 0.0, //
                -2.0, -0.5, 0.0, 0.0, //
                0.0, 0.0, 0.3, 1.0, //
                0.0, 0.0, -1.0, 0.3,
            ],
        );
        let b = DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 0.0, 0.0]);
        LinearSystem::new(a, b).unwrap()
    }

    #[test]
    fn zero_dynamics_matrix() {
        let b = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let sys = LinearSystem::new(DMatrix::zeros(3, 3), b.clone()).unwrap();
        let c = controllability_matrix(&sys).unwrap();
        assert_eq!(c.column(0), b.column(0));
        assert!(c.columns(1, 2).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn chain_is_reversed_identity() {
        let c = controllability_matrix(&LinearSystem::chain(4)).unwrap();
        let expect = DMatrix::from_fn(4, 4, |i, j| if i + j == 3 { 1.0 } else { 0.0 });
        assert_eq!(c, expect);
    }

    #[test]
    fn matches_explicit_powers() {
        let mut rng = crate::rng::seeded(3);
        let a = random_matrix(3, 3, &mut rng);
        let b = random_matrix(3, 1, &mut rng);
        let sys = LinearSystem::new(a.clone(), b.clone()).unwrap();
        let c = controllability_matrix(&sys).unwrap();
        for k in 0..3u32 {
            let col = a.pow(k) * &b;
            assert!((c.column(k as usize) - col.column(0)).norm() < 1e-14);
        }
    }

    #[test]
    fn chain_fully_reachable() {
        for d in 2..=10 {
            let r = is_fully_reachable(&LinearSystem::chain(d), DEFAULT_RANK_TOL).unwrap();
            assert!(r.full);
            assert_eq!(r.rank, d);
            assert!(r.singular_values.iter().all(|s| (*s - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn zero_system_not_reachable() {
        let sys = LinearSystem::new(DMatrix::zeros(3, 3), DMatrix::zeros(3, 1)).unwrap();
        let r = is_fully_reachable(&sys, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(r.rank, 0);
        assert!(!r.full);
    }

    #[test]
    fn invariant_subspace_not_reachable() {
        let sys = invariant_subspace_example();
        let r = is_fully_reachable(&sys, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(r.rank, 2);
        assert!(!r.full);

        let basis = reachable_basis(&sys, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(basis.ncols(), 2);
        let mut rng = crate::rng::seeded(12);
        let x0 = DVector::zeros(4);
        for _ in 0..50 {
            let inputs: Vec<DVector<f64>> = (0..200)
                .map(|_| DVector::from_element(1, rng.random_range(-1.0..1.0)))
                .collect();
            let traj = simulate_open_loop(&sys, &x0, &inputs, 0.01).unwrap();
            for x in &traj {
                assert!(unreachable_residual(&basis, x) <= 1e-6);
            }
        }
    }

    #[test]
    fn rank_is_similarity_invariant() {
        let mut rng = crate::rng::seeded(5);
        for sys in [invariant_subspace_example(), LinearSystem::chain(4)] {
            let base = is_fully_reachable(&sys, DEFAULT_RANK_TOL).unwrap().rank;
            for _ in 0..10 {
                // identity plus a small perturbation is well conditioned
                let p = DMatrix::identity(4, 4) + random_matrix(4, 4, &mut rng) * 0.3;
                let p_inv = p.clone().try_inverse().unwrap();
                let moved = LinearSystem::new(&p * &sys.a * p_inv, &p * &sys.b).unwrap();
                assert_eq!(
                    is_fully_reachable(&moved, DEFAULT_RANK_TOL).unwrap().rank,
                    base
                );
            }
        }
    }

    #[test]
    fn overflow_reported() {
        let a = DMatrix::from_element(3, 3, 1e200);
        let b = DMatrix::from_element(3, 1, 1e200);
        let sys = LinearSystem::new(a, b).unwrap();
        assert!(matches!(
            controllability_matrix(&sys),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn invalid_inputs() {
        assert!(LinearSystem::new(DMatrix::zeros(2, 3), DMatrix::zeros(2, 1)).is_err());
        assert!(LinearSystem::new(DMatrix::zeros(2, 2), DMatrix::zeros(3, 1)).is_err());
        assert!(is_fully_reachable(&LinearSystem::chain(2), 0.0).is_err());
    }
}
