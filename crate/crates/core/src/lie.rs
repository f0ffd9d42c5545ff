//! Lie derivatives of closed-loop fields `X(s) = g(s) + H(s) a(s)` and the
//! order-2 truncated exponential map `s + t L_X s + t²/2 L_X² s`.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::dynamics::{closed_loop_derivative, integrate_rk4, ControlAffineSystem};
use crate::error::{check_dim, invalid, Error, Result};
use crate::policy::{PolicyMode, TwoLayerParams};
use crate::State;

/// The vector field obtained by closing the loop with a network policy.
#[derive(Debug, Clone, Copy)]
pub struct ClosedLoopField<'a> {
    pub system: &'a ControlAffineSystem,
    pub params: &'a TwoLayerParams,
    pub mode: PolicyMode,
}

/// First three terms of the Lie series at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct LieExpansion {
    pub order0: State,
    pub order1: State,
    pub order2: State,
}

impl LieExpansion {
    pub fn evaluate(&self, t: f64) -> State {
        &self.order0 + &self.order1 * t + &self.order2 * (0.5 * t * t)
    }
}

impl<'a> ClosedLoopField<'a> {
    pub fn new(
        system: &'a ControlAffineSystem,
        params: &'a TwoLayerParams,
        mode: PolicyMode,
    ) -> Result<Self> {
        check_dim("field state dim", system.state_dim(), params.state_dim())?;
        check_dim("field action dim", system.action_dim(), params.action_dim())?;
        Ok(Self {
            system,
            params,
            mode,
        })
    }

    pub fn eval(&self, s: &State) -> Result<State> {
        closed_loop_derivative(self.system, &self.params.policy(self.mode), s)
    }

    /// `L_X s = g(s) + H(s) a(s)`
    pub fn lie_first(&self, s: &State) -> Result<State> {
        self.eval(s)
    }

    /// `L_X² s`, component `i` being `Σ_k X_k ∂X_i/∂s_k`, assembled from the
    /// drift Jacobian, control Jacobians, policy values and policy Jacobian.
    pub fn lie_second(&self, s: &State) -> Result<State> {
        let sys = self.system;
        check_dim("lie_second state", sys.state_dim(), s.len())?;
        let g = sys.drift(s);
        let h = sys.control(s);
        let jg = sys.drift_jacobian(s);
        let jh = sys.control_jacobians(s);
        check_dim("control jacobians", sys.action_dim(), jh.len())?;
        let a = self.params.forward(self.mode, s)?;
        let ja = self.params.jacobian(self.mode, s)?;
        let ha = &h * &a;

        // drift along drift
        let mut out = &jg * &g;
        // drift Jacobian along the actuated direction
        out += &jg * &ha;
        // control columns and policy varying along the drift
        for (j, jh_j) in jh.iter().enumerate() {
            out += jh_j * &g * a[j];
        }
        out += &h * (&ja * &g);
        // control columns varying along the actuated direction
        for (j, jh_j) in jh.iter().enumerate() {
            out += jh_j * &ha * a[j];
        }
        // policy varying along the actuated direction
        out += &h * (&ja * &ha);
        Ok(out)
    }

    pub fn expansion(&self, s: &State) -> Result<LieExpansion> {
        Ok(LieExpansion {
            order0: s.clone(),
            order1: self.lie_first(s)?,
            order2: self.lie_second(s)?,
        })
    }

    /// `s + t L_X s + t²/2 L_X² s`
    pub fn exp_map_trunc2(&self, s: &State, t: f64) -> Result<State> {
        Ok(self.expansion(s)?.evaluate(t))
    }

    /// Integrates the field for time `t` with RK4.
    pub fn flow(&self, s: &State, t: f64, dt: f64) -> Result<State> {
        let traj = integrate_rk4(|x| self.eval(x), s, t, dt)?;
        Ok(traj.final_state().clone())
    }
}

/// Least-squares slope of `log ‖exp_map_trunc2(s, t) - flow_t(s)‖` against
/// `log t`. The reference flow is integrated with step `min(dt_ref, t/8)`.
///
/// Returns [`Error::Degenerate`] when the truncation error is at round-off
/// level, which happens when the series terminates after the second term.
pub fn truncation_error_slope(
    field: &ClosedLoopField<'_>,
    s: &State,
    t_grid: &[f64],
    dt_ref: f64,
) -> Result<f64> {
    let errors = truncation_errors(field, s, t_grid, dt_ref)?;
    let scale = s.norm().max(1.0);
    if errors.iter().any(|e| *e <= 1e-13 * scale) {
        return Err(Error::Degenerate(
            "truncated series, slope undefined".into(),
        ));
    }
    let pts: Vec<(f64, f64)> = t_grid
        .iter()
        .zip(&errors)
        .map(|(t, e)| (libm::log(*t), libm::log(*e)))
        .collect();
    Ok(least_squares_slope(&pts))
}

/// `‖exp_map_trunc2(s, t) - flow_t(s)‖` for every `t` in the grid.
pub fn truncation_errors(
    field: &ClosedLoopField<'_>,
    s: &State,
    t_grid: &[f64],
    dt_ref: f64,
) -> Result<Vec<f64>> {
    validate_grid(t_grid)?;
    if !(dt_ref.is_finite() && dt_ref > 0.0) {
        return Err(invalid!("dt_ref must be positive"));
    }
    let expansion = field.expansion(s)?;
    t_grid
        .iter()
        .map(|&t| {
            let reference = field.flow(s, t, dt_ref.min(t / 8.0))?;
            Ok((expansion.evaluate(t) - reference).norm())
        })
        .collect()
}

fn validate_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.len() < 2 {
        return Err(Error::Degenerate("t grid needs at least two points".into()));
    }
    if t_grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::Degenerate("t grid must be positive".into()));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Degenerate(
            "t grid must be strictly increasing".into(),
        ));
    }
    let decades = libm::log10(t_grid[t_grid.len() - 1] / t_grid[0]);
    if decades < 1.5 {
        return Err(Error::Degenerate(alloc::format!(
            "t grid spans {decades:.2} decades, need at least 1.5"
        )));
    }
    Ok(())
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Geometric grid of `count` points between `lo` and `hi`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (libm::log(lo), libm::log(hi));
    (0..count)
        .map(|i| libm::exp(a + (b - a) * i as f64 / (count - 1).max(1) as f64))
        .collect()
}

/// Matrix-polynomial form of the truncated map for `ṡ = A s` (used as an
/// independent check): `(I + tA + t²A²/2) s`.
pub fn linear_trunc2(a: &DMatrix<f64>, s: &State, t: f64) -> State {
    let n = a.nrows();
    let poly = DMatrix::identity(n, n) + a * t + a * a * (0.5 * t * t);
    poly * s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Dynamics, LinearDynamics, Pendulum};
    use crate::policy::FamilySpec;
    use alloc::boxed::Box;
    use nalgebra::DVector;
    use rand::Rng;

    fn state(v: &[f64]) -> State {
        DVector::from_column_slice(v)
    }

    /// Directional central difference of X along X: (X(s + εX) - X(s - εX)) / 2ε.
    fn directional_fd(field: &ClosedLoopField<'_>, s: &State, eps: f64) -> State {
        let x = field.eval(s).unwrap();
        (field.eval(&(s + &x * eps)).unwrap() - field.eval(&(s - &x * eps)).unwrap()) / (2.0 * eps)
    }

    /// A state-dependent control column so every group of the expansion fires.
    struct Curved;
    impl Dynamics for Curved {
        fn state_dim(&self) -> usize {
            3
        }
        fn action_dim(&self) -> usize {
            2
        }
        fn drift(&self, s: &State) -> State {
            state(&[s[1], -libm::sin(s[0]) + 0.1 * s[2], s[0] * s[1]])
        }
        fn control(&self, s: &State) -> DMatrix<f64> {
            DMatrix::from_row_slice(3, 2, &[0.0, libm::cos(s[2]), 1.0, 0.0, s[0], 0.5])
        }
    }

    fn sampled(ds: usize, da: usize, seed: u64) -> TwoLayerParams {
        let base = TwoLayerParams::init(32, ds, da, seed).unwrap();
        FamilySpec::new(&base, 1.0).unwrap().sample_params(seed + 7)
    }

    #[test]
    fn first_order_cases() {
        let sys = ControlAffineSystem::new(Box::new(crate::dynamics::ChainIntegrator { dim: 3 }));
        let p = sampled(3, 1, 1);
        let field = ClosedLoopField::new(&sys, &p, PolicyMode::Family).unwrap();
        let s = state(&[0.2, -0.4, 0.9]);
        let a = p.forward_family(&s).unwrap()[0];
        assert_eq!(field.lie_first(&s).unwrap(), state(&[-0.4, 0.9, a]));

        let zero = ControlAffineSystem::new(Box::new(LinearDynamics {
            a: DMatrix::zeros(3, 3),
            b: DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]),
        }));
        let p0 = p.with_weights(DVector::zeros(p.num_weights())).unwrap();
        let field = ClosedLoopField::new(&zero, &p0, PolicyMode::Family).unwrap();
        assert_eq!(field.lie_first(&s).unwrap(), DVector::zeros(3));

        let pend = ControlAffineSystem::new(Box::new(Pendulum::default()));
        let p = sampled(2, 1, 3);
        let field = ClosedLoopField::new(&pend, &p, PolicyMode::Family).unwrap();
        let s = state(&[0.1, 0.3]);
        let a = p.forward_family(&s).unwrap()[0];
        let l1 = field.lie_first(&s).unwrap();
        assert_eq!(l1[0], 0.3);
        assert!((l1[1] - (-(0.1f64).sin() + a)).abs() < 1e-15);
    }

    #[test]
    fn second_order_linear_field() {
        let a = DMatrix::from_row_slice(3, 3, &[0.1, 1.0, 0.0, -0.5, 0.0, 2.0, 0.3, -0.2, -1.0]);
        let sys = ControlAffineSystem::new(Box::new(LinearDynamics {
            a: a.clone(),
            b: DMatrix::zeros(3, 1),
        }));
        let p = sampled(3, 1, 2);
        let field = ClosedLoopField::new(&sys, &p, PolicyMode::Family).unwrap();
        let s = state(&[1.0, -2.0, 0.5]);
        assert!((field.lie_second(&s).unwrap() - &a * &a * &s).norm() < 1e-14);
        for &t in &[0.0, 0.01, 0.3] {
            let ours = field.exp_map_trunc2(&s, t).unwrap();
            assert!((ours - linear_trunc2(&a, &s, t)).norm() < 1e-14);
        }
        assert_eq!(field.exp_map_trunc2(&s, 0.0).unwrap(), s);
    }

    #[test]
    fn second_order_constant_field() {
        struct Constant;
        impl Dynamics for Constant {
            fn state_dim(&self) -> usize {
                2
            }
            fn action_dim(&self) -> usize {
                1
            }
            fn drift(&self, _s: &State) -> State {
                state(&[1.5, -0.5])
            }
            fn control(&self, _s: &State) -> DMatrix<f64> {
                DMatrix::zeros(2, 1)
            }
        }
        let sys = ControlAffineSystem::new(Box::new(Constant));
        let p = sampled(2, 1, 5);
        let field = ClosedLoopField::new(&sys, &p, PolicyMode::Family).unwrap();
        assert!(field.lie_second(&state(&[0.3, 0.4])).unwrap().norm() < 1e-9);
    }

    #[test]
    fn second_order_matches_directional_differences() {
        let mut rng = crate::rng::seeded(17);
        let curved = ControlAffineSystem::new(Box::new(Curved));
        let pend = ControlAffineSystem::new(Box::new(Pendulum {
            links: 2,
            coupling: 0.8,
        }));
        for cfg in 0..20u64 {
            let (sys, ds, da) = if cfg % 2 == 0 {
                (&curved, 3, 2)
            } else {
                (&pend, 4, 1)
            };
            let p = sampled(ds, da, 40 + cfg);
            let mode = if cfg % 4 < 2 {
                PolicyMode::Family
            } else {
                PolicyMode::Linearised
            };
            let field = ClosedLoopField::new(sys, &p, mode).unwrap();
            let s = DVector::from_fn(ds, |_, _| rng.random_range(-1.0..1.0));
            let exact = field.lie_second(&s).unwrap();
            let fd = directional_fd(&field, &s, 1e-5);
            assert!(
                (exact - &fd).norm() < 1e-4 * fd.norm().max(1.0),
                "cfg {cfg}"
            );
        }
    }

    #[test]
    fn pendulum_truncation_is_third_order() {
        let sys = ControlAffineSystem::new(Box::new(Pendulum::default()));
        let p = sampled(2, 1, 9);
        let field = ClosedLoopField::new(&sys, &p, PolicyMode::Family).unwrap();
        let slope =
            truncation_error_slope(&field, &state(&[0.8, -0.3]), &log_grid(1e-3, 5e-2, 8), 1e-3)
                .unwrap();
        assert!((2.7..=3.3).contains(&slope), "slope {slope}");
    }

    #[test]
    fn vanishing_second_order_term_keeps_slope() {
        // ṡ = (sin s_2, 0) moves along straight lines: every term past the
        // first vanishes
        struct Shear;
        impl Dynamics for Shear {
            fn state_dim(&self) -> usize {
                2
            }
            fn action_dim(&self) -> usize {
                1
            }
            fn drift(&self, s: &State) -> State {
                state(&[libm::sin(s[1]), 0.0])
            }
            fn control(&self, _s: &State) -> DMatrix<f64> {
                DMatrix::zeros(2, 1)
            }
        }
        let sys = ControlAffineSystem::new(Box::new(Shear));
        let p = sampled(2, 1, 2);
        let field = ClosedLoopField::new(&sys, &p, PolicyMode::Family).unwrap();
        let s = state(&[0.0, 0.7]);
        let r = truncation_error_slope(&field, &s, &log_grid(1e-3, 5e-2, 6), 1e-3);
        assert!(matches!(r, Err(Error::Degenerate(_))));

        // zero second-order term at s, nonzero third: ṡ = (s_2, s_1²)
        struct Cubic;
        impl Dynamics for Cubic {
            fn state_dim(&self) -> usize {
                2
            }
            fn action_dim(&self) -> usize {
                1
            }
            fn drift(&self, s: &State) -> State {
                state(&[s[1], s[0] * s[0]])
            }
            fn control(&self, _s: &State) -> DMatrix<f64> {
                DMatrix::zeros(2, 1)
            }
        }
        let sys = ControlAffineSystem::new(Box::new(Cubic));
        let field = ClosedLoopField::new(&sys, &p, PolicyMode::Family).unwrap();
        // at (0, 1): X = (1, 0), L² = (0, 0), L³ = (0, 2)
        let s = state(&[0.0, 1.0]);
        assert!(field.lie_second(&s).unwrap().norm() < 1e-9);
        let slope = truncation_error_slope(&field, &s, &log_grid(1e-3, 5e-2, 8), 1e-3).unwrap();
        assert!(slope >= 2.7, "slope {slope}");
    }

    #[test]
    fn saturated_policy_on_linear_system() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let sys = ControlAffineSystem::new(Box::new(LinearDynamics {
            a: a.clone(),
            b: b.clone(),
        }));
        let s = state(&[1.0, 1.0]);
        let c0 = DMatrix::from_row_slice(1, 1, &[0.5]);
        let w = DVector::from_vec(alloc::vec![0.2, -0.1]);

        // W0 · s ≫ 0: φ' ≈ 1, φ'' ≈ 0, the policy is locally linear a = K s
        let w0 = DVector::from_vec(alloc::vec![30.0, 30.0]);
        let p = TwoLayerParams::from_parts(2, false, w0, c0.clone(), w.clone()).unwrap();
        let field = ClosedLoopField::new(&sys, &p, PolicyMode::Family).unwrap();
        let closed = &a + &b * p.policy_jacobian(&s).unwrap();
        for &t in &[0.01, 0.1] {
            let ours = field.exp_map_trunc2(&s, t).unwrap();
            assert!((ours - linear_trunc2(&closed, &s, t)).norm() < 1e-12);
        }

        // W0 · s ≪ 0: φ' ≈ 0, no feedback, and the nilpotent chain flow is
        // exactly s + t A s
        let w0 = DVector::from_vec(alloc::vec![-30.0, -30.0]);
        let p = TwoLayerParams::from_parts(2, false, w0, c0, w).unwrap();
        let field = ClosedLoopField::new(&sys, &p, PolicyMode::Family).unwrap();
        let r = truncation_error_slope(&field, &s, &log_grid(1e-3, 5e-2, 5), 1e-3);
        assert!(matches!(r, Err(Error::Degenerate(_))), "{r:?}");
    }

    #[test]
    fn grid_validation() {
        let sys = ControlAffineSystem::new(Box::new(Pendulum::default()));
        let p = sampled(2, 1, 9);
        let field = ClosedLoopField::new(&sys, &p, PolicyMode::Family).unwrap();
        let s = state(&[0.5, 0.5]);
        for bad in [&[0.1][..], &[0.01, 0.1], &[0.1, 0.01, 1.0], &[-1.0, 0.1]] {
            assert!(matches!(
                truncation_error_slope(&field, &s, bad, 1e-3),
                Err(Error::Degenerate(_))
            ));
        }
    }

    #[test]
    fn slope_helper() {
        let pts: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 3.0 * i as f64 - 2.0)).collect();
        assert!((least_squares_slope(&pts) - 3.0).abs() < 1e-12);
        let g = log_grid(1e-3, 1e-1, 3);
        assert!((g[1] - 1e-2).abs() < 1e-15);
    }
}
