//! Wide two-layer GeLU policies and their linearisation around initialisation.
//!
//! The network is `f(s; W, C) = n^{-1/2} Σ_κ C_κ φ(W_κ · s)` with first-layer
//! blocks `W_κ ∈ R^{d_s}` and a fixed output matrix `C0 ∈ R^{d_a × n}`. Only the
//! first layer moves during training, so every policy here shares `W0`/`C0` and
//! differs in the flat weight vector `W ∈ R^{n d_s}`.
//!
//! Three evaluation modes are provided:
//!
//! * canonical: the network itself at the current `W`;
//! * linearised: `f(s; W0) + Φ(s; W0)(W - W0)`, the first-order expansion;
//! * family: `Φ(s; W0) W` with no offset, the bounded family sampled in the
//!   attained-set studies.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};

use crate::activation::{gelu_and_prime, gelu_prime_and_second, gelu_prime_unchecked};
use crate::dynamics::Policy;
use crate::error::{check_dim, invalid, Result};
use crate::rng;
use crate::{Action, State};

/// Parameters of a two-layer network: fixed initialisation plus current
/// first-layer weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoLayerParams {
    width: usize,
    state_dim: usize,
    action_dim: usize,
    augment_state: bool,
    w0: DVector<f64>,
    c0: DMatrix<f64>,
    w: DVector<f64>,
}

/// Which closed-form policy a parameter set is evaluated as.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyMode {
    Canonical,
    Linearised,
    Family,
}

impl TwoLayerParams {
    /// Draws `C0 ~ Unif(-1, 1)` and `W0_κ ~ Normal(0, I/d_in)`, with `W = W0`.
    pub fn init(width: usize, state_dim: usize, action_dim: usize, seed: u64) -> Result<Self> {
        Self::init_with(width, state_dim, action_dim, false, seed)
    }

    /// As [`TwoLayerParams::init`]; with `augment_state` a constant 1 is
    /// appended to every input, acting as a first-layer bias.
    pub fn init_with(
        width: usize,
        state_dim: usize,
        action_dim: usize,
        augment_state: bool,
        seed: u64,
    ) -> Result<Self> {
        if width == 0 || state_dim == 0 || action_dim == 0 {
            return Err(invalid!(
                "width, state and action dimensions must be positive (got {width}, {state_dim}, {action_dim})"
            ));
        }
        let input_dim = state_dim + augment_state as usize;
        let len = width
            .checked_mul(input_dim)
            .ok_or_else(|| invalid!("parameter count overflows"))?;
        let mut rng = rng::seeded(seed);
        let unif = Uniform::new(-1.0, 1.0).expect("valid bounds");
        let c0 = DMatrix::from_fn(action_dim, width, |_, _| loop {
            let c: f64 = unif.sample(&mut rng);
            // half-open sampler; keep the open interval
            if c > -1.0 {
                break c;
            }
        });
        let normal = Normal::new(0.0, 1.0 / libm::sqrt(input_dim as f64)).expect("valid sd");
        let w0 = DVector::from_fn(len, |_, _| normal.sample(&mut rng));
        Ok(Self {
            width,
            state_dim,
            action_dim,
            augment_state,
            w: w0.clone(),
            w0,
            c0,
        })
    }

    /// Builds parameters from explicit arrays. `w0` and `w` have length
    /// `width * input_dim`, `c0` is `action_dim × width`.
    pub fn from_parts(
        state_dim: usize,
        augment_state: bool,
        w0: DVector<f64>,
        c0: DMatrix<f64>,
        w: DVector<f64>,
    ) -> Result<Self> {
        let width = c0.ncols();
        let action_dim = c0.nrows();
        if width == 0 || state_dim == 0 || action_dim == 0 {
            return Err(invalid!("empty parameter arrays"));
        }
        let input_dim = state_dim + augment_state as usize;
        check_dim("TwoLayerParams::w0", width * input_dim, w0.len())?;
        check_dim("TwoLayerParams::w", width * input_dim, w.len())?;
        if w0
            .iter()
            .chain(c0.iter())
            .chain(w.iter())
            .any(|v| !v.is_finite())
        {
            return Err(invalid!("parameters must be finite"));
        }
        Ok(Self {
            width,
            state_dim,
            action_dim,
            augment_state,
            w0,
            c0,
            w,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn augment_state(&self) -> bool {
        self.augment_state
    }

    /// Length of one first-layer block.
    pub fn input_dim(&self) -> usize {
        self.state_dim + self.augment_state as usize
    }

    pub fn num_weights(&self) -> usize {
        self.width * self.input_dim()
    }

    pub fn w0(&self) -> &DVector<f64> {
        &self.w0
    }

    pub fn c0(&self) -> &DMatrix<f64> {
        &self.c0
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.w
    }

    /// Replaces the trainable weights; `W0` and `C0` are never touched.
    pub fn set_weights(&mut self, w: DVector<f64>) -> Result<()> {
        check_dim("TwoLayerParams::set_weights", self.num_weights(), w.len())?;
        if w.iter().any(|v| !v.is_finite()) {
            return Err(invalid!("weights must be finite"));
        }
        self.w = w;
        Ok(())
    }

    /// Copy of these parameters carrying different trainable weights.
    pub fn with_weights(&self, w: DVector<f64>) -> Result<Self> {
        let mut p = self.clone();
        p.set_weights(w)?;
        Ok(p)
    }

    /// `‖W - W0‖₂`
    pub fn displacement_norm(&self) -> f64 {
        (&self.w - &self.w0).norm()
    }

    fn input(&self, s: &State) -> Result<Vec<f64>> {
        check_dim("policy input", self.state_dim, s.len())?;
        let mut x = Vec::with_capacity(self.input_dim());
        x.extend_from_slice(s.as_slice());
        if self.augment_state {
            x.push(1.0);
        }
        Ok(x)
    }

    fn inv_sqrt_width(&self) -> f64 {
        1.0 / libm::sqrt(self.width as f64)
    }

    /// Accumulates `n^{-1/2} Σ_κ C0_κ coeff(κ)` into an action vector.
    fn combine(&self, coeff: impl Fn(usize) -> f64) -> Action {
        let mut out = DVector::zeros(self.action_dim);
        for kappa in 0..self.width {
            let c = coeff(kappa);
            if c != 0.0 {
                for j in 0..self.action_dim {
                    out[j] += self.c0[(j, kappa)] * c;
                }
            }
        }
        out * self.inv_sqrt_width()
    }

    fn block<'a>(&self, v: &'a DVector<f64>, kappa: usize) -> &'a [f64] {
        let d = self.input_dim();
        &v.as_slice()[kappa * d..(kappa + 1) * d]
    }

    /// `n^{-1/2} Σ_κ C0_κ φ(W_κ · s)` at the current weights.
    pub fn forward_canonical(&self, s: &State) -> Result<Action> {
        let x = self.input(s)?;
        Ok(self.combine(|k| crate::activation::gelu_unchecked(dot(self.block(&self.w, k), &x))))
    }

    /// The `d_a × n d_in` gradient of the network output with respect to the
    /// first-layer weights, evaluated at `W0`.
    pub fn feature_matrix(&self, s: &State) -> Result<DMatrix<f64>> {
        let x = self.input(s)?;
        let d = self.input_dim();
        let scale = self.inv_sqrt_width();
        let mut phi = DMatrix::zeros(self.action_dim, self.num_weights());
        for kappa in 0..self.width {
            let gp = gelu_prime_unchecked(dot(self.block(&self.w0, kappa), &x)) * scale;
            for j in 0..self.action_dim {
                let cj = self.c0[(j, kappa)] * gp;
                for (k, xk) in x.iter().enumerate() {
                    phi[(j, kappa * d + k)] = cj * xk;
                }
            }
        }
        Ok(phi)
    }

    /// `f(s; W0) + Φ(s; W0)(W - W0)`
    pub fn forward_linearised(&self, s: &State) -> Result<Action> {
        let x = self.input(s)?;
        Ok(self.combine(|k| {
            let w0k = self.block(&self.w0, k);
            let (g, gp) = gelu_and_prime(dot(w0k, &x));
            let moved: f64 = self
                .block(&self.w, k)
                .iter()
                .zip(w0k)
                .zip(&x)
                .map(|((w, w0), xi)| (w - w0) * xi)
                .sum();
            g + gp * moved
        }))
    }

    /// `Φ(s; W0) W`
    pub fn forward_family(&self, s: &State) -> Result<Action> {
        let x = self.input(s)?;
        Ok(self.combine(|k| {
            gelu_prime_unchecked(dot(self.block(&self.w0, k), &x)) * dot(self.block(&self.w, k), &x)
        }))
    }

    pub fn forward(&self, mode: PolicyMode, s: &State) -> Result<Action> {
        match mode {
            PolicyMode::Canonical => self.forward_canonical(s),
            PolicyMode::Linearised => self.forward_linearised(s),
            PolicyMode::Family => self.forward_family(s),
        }
    }

    /// `∂(Φ(s; W0) W)/∂s`, a `d_a × d_s` matrix.
    pub fn policy_jacobian(&self, s: &State) -> Result<DMatrix<f64>> {
        let x = self.input(s)?;
        let d = self.input_dim();
        let mut jac = DMatrix::zeros(self.action_dim, d);
        let mut row = alloc::vec![0.0; d];
        for kappa in 0..self.width {
            let w0k = self.block(&self.w0, kappa);
            let wk = self.block(&self.w, kappa);
            let (gp, gs) = gelu_prime_and_second(dot(w0k, &x));
            let v = dot(wk, &x);
            for k in 0..d {
                row[k] = gp * wk[k] + gs * w0k[k] * v;
            }
            self.scatter_row(&mut jac, kappa, &row);
        }
        Ok(self.finish_jacobian(jac))
    }

    /// `∂ f^lin(s; W)/∂s`, a `d_a × d_s` matrix.
    pub fn jacobian_linearised(&self, s: &State) -> Result<DMatrix<f64>> {
        let x = self.input(s)?;
        let d = self.input_dim();
        let mut jac = DMatrix::zeros(self.action_dim, d);
        let mut row = alloc::vec![0.0; d];
        for kappa in 0..self.width {
            let w0k = self.block(&self.w0, kappa);
            let wk = self.block(&self.w, kappa);
            let (gp, gs) = gelu_prime_and_second(dot(w0k, &x));
            let moved: f64 = wk
                .iter()
                .zip(w0k)
                .zip(&x)
                .map(|((w, w0), xi)| (w - w0) * xi)
                .sum();
            for k in 0..d {
                row[k] = gp * w0k[k] + gs * w0k[k] * moved + gp * (wk[k] - w0k[k]);
            }
            self.scatter_row(&mut jac, kappa, &row);
        }
        Ok(self.finish_jacobian(jac))
    }

    /// `∂ f(s; W)/∂s` of the network itself.
    pub fn jacobian_canonical(&self, s: &State) -> Result<DMatrix<f64>> {
        let x = self.input(s)?;
        let d = self.input_dim();
        let mut jac = DMatrix::zeros(self.action_dim, d);
        let mut row = alloc::vec![0.0; d];
        for kappa in 0..self.width {
            let wk = self.block(&self.w, kappa);
            let gp = gelu_prime_unchecked(dot(wk, &x));
            for k in 0..d {
                row[k] = gp * wk[k];
            }
            self.scatter_row(&mut jac, kappa, &row);
        }
        Ok(self.finish_jacobian(jac))
    }

    pub fn jacobian(&self, mode: PolicyMode, s: &State) -> Result<DMatrix<f64>> {
        match mode {
            PolicyMode::Canonical => self.jacobian_canonical(s),
            PolicyMode::Linearised => self.jacobian_linearised(s),
            PolicyMode::Family => self.policy_jacobian(s),
        }
    }

    fn scatter_row(&self, jac: &mut DMatrix<f64>, kappa: usize, row: &[f64]) {
        for j in 0..self.action_dim {
            let c = self.c0[(j, kappa)];
            for (k, r) in row.iter().enumerate() {
                jac[(j, k)] += c * r;
            }
        }
    }

    fn finish_jacobian(&self, jac: DMatrix<f64>) -> DMatrix<f64> {
        let jac = jac * self.inv_sqrt_width();
        if self.augment_state {
            // the constant input is not a state coordinate
            jac.columns(0, self.state_dim).into_owned()
        } else {
            jac
        }
    }

    /// Borrowing adaptor implementing [`Policy`] in the given mode.
    pub fn policy(&self, mode: PolicyMode) -> NetworkPolicy<'_> {
        NetworkPolicy { params: self, mode }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A parameter set evaluated in a fixed [`PolicyMode`].
#[derive(Debug, Clone, Copy)]
pub struct NetworkPolicy<'a> {
    pub params: &'a TwoLayerParams,
    pub mode: PolicyMode,
}

impl Policy for NetworkPolicy<'_> {
    fn action_dim(&self) -> usize {
        self.params.action_dim
    }

    fn act(&self, s: &State) -> Result<Action> {
        self.params.forward(self.mode, s)
    }
}

/// The bounded family `{Φ(·; W0) W : ‖W - W0‖ ≤ r}` around a base
/// initialisation.
#[derive(Debug, Clone, Copy)]
pub struct FamilySpec<'a> {
    pub radius: f64,
    pub base: &'a TwoLayerParams,
}

impl<'a> FamilySpec<'a> {
    pub fn new(base: &'a TwoLayerParams, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(invalid!(
                "family radius must be finite and positive, got {radius}"
            ));
        }
        Ok(Self { radius, base })
    }

    pub fn width(&self) -> usize {
        self.base.width
    }

    /// Uniform draw from the ball `‖W - W0‖ ≤ r`: Gaussian direction, radius
    /// `r u^{1/D}`.
    pub fn sample(&self, seed: u64) -> DVector<f64> {
        let mut rng = rng::seeded(seed);
        let dim = self.base.num_weights();
        let mut dir = DVector::from_fn(dim, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z
        });
        let norm = dir.norm();
        // a zero Gaussian vector has probability zero; fall back to an axis
        if norm == 0.0 {
            dir[0] = 1.0;
        } else {
            dir /= norm;
        }
        let u: f64 = rng.random::<f64>();
        let radius = self.radius * libm::pow(u, 1.0 / dim as f64);
        &self.base.w0 + dir * radius
    }

    /// A member of the family as a full parameter set.
    pub fn sample_params(&self, seed: u64) -> TwoLayerParams {
        let w = self.sample(seed);
        let mut p = self.base.clone();
        p.w = w;
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn hand_params() -> TwoLayerParams {
        TwoLayerParams::from_parts(
            1,
            false,
            DVector::from_vec(alloc::vec![3.0]),
            DMatrix::from_row_slice(1, 1, &[2.0]),
            DVector::from_vec(alloc::vec![3.0]),
        )
        .unwrap()
    }

    fn random_params(width: usize, ds: usize, da: usize, seed: u64) -> TwoLayerParams {
        let base = TwoLayerParams::init(width, ds, da, seed).unwrap();
        let fam = FamilySpec::new(&base, 1.0).unwrap();
        fam.sample_params(seed + 1)
    }

    fn state(v: &[f64]) -> State {
        DVector::from_column_slice(v)
    }

    #[test]
    fn init_statistics() {
        let p = TwoLayerParams::init(250_000, 4, 2, 5).unwrap();
        let n = p.w0.len() as f64;
        assert_eq!(p.w0.len(), 1_000_000);
        let mean = p.w0.sum() / n;
        let var = p.w0.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.005, "mean {mean}");
        assert!((var * 4.0 - 1.0).abs() < 0.02, "var {var}");
        assert!(p.c0.iter().all(|c| *c > -1.0 && *c < 1.0));
        assert_eq!(p.w, p.w0);
    }

    #[test]
    fn init_rejects_zero_sizes() {
        assert!(TwoLayerParams::init(0, 1, 1, 0).is_err());
        assert!(TwoLayerParams::init(1, 0, 1, 0).is_err());
        assert!(TwoLayerParams::init(1, 1, 0, 0).is_err());
    }

    #[test]
    fn canonical_hand_case() {
        let p = hand_params();
        let a = p.forward_canonical(&state(&[1.0])).unwrap();
        let expected = 2.0 * 3.0 * crate::activation::normal_cdf(3.0);
        assert!((a[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn canonical_zero_weights_and_scaling() {
        let p = random_params(16, 3, 2, 1);
        let zero = p.with_weights(DVector::zeros(p.num_weights())).unwrap();
        let s = state(&[0.3, -1.0, 2.0]);
        assert_eq!(zero.forward_canonical(&s).unwrap(), DVector::zeros(2));
        let mut doubled = p.clone();
        doubled.c0 *= 2.0;
        let a = p.forward_canonical(&s).unwrap();
        let b = doubled.forward_canonical(&s).unwrap();
        assert_eq!(b, a * 2.0);
    }

    #[test]
    fn feature_matrix_hand_case() {
        let w0 = DVector::from_vec(alloc::vec![0.5, -0.25, 1.0, 0.75]);
        let c0 = DMatrix::from_row_slice(1, 2, &[0.4, -0.6]);
        let p = TwoLayerParams::from_parts(2, false, w0.clone(), c0, w0).unwrap();
        let s = state(&[1.0, 2.0]);
        let phi = p.feature_matrix(&s).unwrap();
        let inv = 1.0 / 2f64.sqrt();
        let g1 = gelu_prime_unchecked(0.5 - 0.5);
        let g2 = gelu_prime_unchecked(1.0 + 1.5);
        let expected = [
            inv * 0.4 * g1 * 1.0,
            inv * 0.4 * g1 * 2.0,
            inv * -0.6 * g2 * 1.0,
            inv * -0.6 * g2 * 2.0,
        ];
        for (k, e) in expected.iter().enumerate() {
            assert!((phi[(0, k)] - e).abs() < 1e-12);
        }
        assert_eq!(
            p.feature_matrix(&state(&[0.0, 0.0])).unwrap(),
            DMatrix::zeros(1, 4)
        );
    }

    #[test]
    fn family_equals_feature_matrix_product() {
        let p = random_params(32, 3, 2, 9);
        let s = state(&[0.2, -0.7, 1.1]);
        let via_phi = p.feature_matrix(&s).unwrap() * &p.w;
        let fam = p.forward_family(&s).unwrap();
        assert!((via_phi - &fam).norm() < 1e-12);
        // Φ W = f^lin - f(·; W0) + Φ W0
        let lin = p.forward_linearised(&s).unwrap();
        let at_init = p
            .with_weights(p.w0.clone())
            .unwrap()
            .forward_canonical(&s)
            .unwrap();
        let phi_w0 = p.feature_matrix(&s).unwrap() * &p.w0;
        assert!((lin - at_init + phi_w0 - fam).norm() < 1e-12);
    }

    #[test]
    fn family_hand_case() {
        let p = hand_params();
        let a = p.forward_family(&state(&[1.0])).unwrap();
        assert!((a[0] - 2.0 * gelu_prime_unchecked(3.0) * 3.0).abs() < 1e-15);
        let zero = p.with_weights(DVector::zeros(1)).unwrap();
        assert_eq!(zero.forward_family(&state(&[1.0])).unwrap()[0], 0.0);
    }

    #[test]
    fn linearised_at_init_is_canonical() {
        let p = TwoLayerParams::init(64, 3, 2, 3).unwrap();
        let s = state(&[0.5, 0.1, -0.4]);
        assert_eq!(
            p.forward_linearised(&s).unwrap(),
            p.forward_canonical(&s).unwrap()
        );
    }

    #[test]
    fn linearised_is_affine_in_weights() {
        let p = random_params(32, 2, 2, 4);
        let delta = &p.w - &p.w0;
        let s = state(&[0.9, -0.3]);
        let at = |scale: f64| {
            p.with_weights(&p.w0 + &delta * scale)
                .unwrap()
                .forward_linearised(&s)
                .unwrap()
        };
        let base = at(0.0);
        let one = at(1.0) - &base;
        let two = at(2.0) - &base;
        assert!((two - one * 2.0).norm() < 1e-13);
    }

    #[test]
    fn policy_jacobian_matches_finite_differences() {
        let mut rng = rng::seeded(21);
        let step = 1e-5;
        for cfg in 0..20u64 {
            let ds = 1 + (cfg as usize % 4);
            let da = 1 + (cfg as usize % 2);
            let p = random_params(24, ds, da, 100 + cfg);
            let s = DVector::from_fn(ds, |_, _| rng.random_range(-1.5..1.5));
            for mode in [
                PolicyMode::Family,
                PolicyMode::Linearised,
                PolicyMode::Canonical,
            ] {
                let jac = p.jacobian(mode, &s).unwrap();
                for k in 0..ds {
                    let mut sp = s.clone();
                    let mut sm = s.clone();
                    sp[k] += step;
                    sm[k] -= step;
                    let fd = (p.forward(mode, &sp).unwrap() - p.forward(mode, &sm).unwrap())
                        / (2.0 * step);
                    for j in 0..da {
                        assert!(
                            (fd[j] - jac[(j, k)]).abs() < 1e-5,
                            "{mode:?} cfg {cfg} ({j},{k}): {} vs {}",
                            fd[j],
                            jac[(j, k)]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn policy_jacobian_zero_weights_and_saturation() {
        let p = random_params(8, 2, 1, 5);
        let zero = p.with_weights(DVector::zeros(p.num_weights())).unwrap();
        assert_eq!(
            zero.policy_jacobian(&state(&[0.4, 0.2])).unwrap(),
            DMatrix::zeros(1, 2)
        );

        // W0 · s large: φ'' ≈ 0 and φ' ≈ 1
        let w0 = DVector::from_vec(alloc::vec![20.0, 20.0]);
        let c0 = DMatrix::from_row_slice(1, 1, &[0.7]);
        let w = DVector::from_vec(alloc::vec![0.3, -0.8]);
        let p = TwoLayerParams::from_parts(2, false, w0, c0, w).unwrap();
        let jac = p.policy_jacobian(&state(&[1.0, 1.0])).unwrap();
        assert!((jac[(0, 0)] - 0.7 * 0.3).abs() < 1e-12);
        assert!((jac[(0, 1)] - 0.7 * -0.8).abs() < 1e-12);
    }

    #[test]
    fn augmented_input_acts_as_bias() {
        let base = TwoLayerParams::init_with(16, 2, 1, true, 8).unwrap();
        assert_eq!(base.input_dim(), 3);
        let p = FamilySpec::new(&base, 1.0).unwrap().sample_params(9);
        // family output at s = 0 is no longer forced to zero
        let a = p.forward_family(&state(&[0.0, 0.0])).unwrap();
        assert!(a[0] != 0.0);
        let jac = p.policy_jacobian(&state(&[0.3, 0.1])).unwrap();
        assert_eq!(jac.shape(), (1, 2));
    }

    #[test]
    fn family_samples_stay_in_ball() {
        let base = TwoLayerParams::init(16, 3, 1, 2).unwrap();
        let fam = FamilySpec::new(&base, 0.7).unwrap();
        for seed in 0..200 {
            let w = fam.sample(seed);
            assert!((&w - base.w0()).norm() <= 0.7 * (1.0 + 1e-12));
        }
        assert_eq!(fam.sample(3), fam.sample(3));
        assert_ne!(fam.sample(3), fam.sample(4));
        assert!(FamilySpec::new(&base, 0.0).is_err());
        assert!(FamilySpec::new(&base, f64::NAN).is_err());
    }

    #[test]
    fn family_radius_distribution() {
        // ‖W - W0‖ / r has density D x^{D-1} on [0, 1], mean D / (D + 1)
        let base = TwoLayerParams::init(2, 1, 1, 2).unwrap();
        let fam = FamilySpec::new(&base, 2.0).unwrap();
        let dim = base.num_weights() as f64;
        let samples = 10_000;
        let mean = (0..samples)
            .map(|i| (fam.sample(i) - base.w0()).norm() / 2.0)
            .sum::<f64>()
            / samples as f64;
        let expected = dim / (dim + 1.0);
        assert!(
            (mean / expected - 1.0).abs() < 0.01,
            "mean {mean} vs {expected}"
        );
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let p = TwoLayerParams::init(4, 3, 1, 0).unwrap();
        assert!(p.forward_family(&state(&[1.0])).is_err());
        assert!(p.feature_matrix(&state(&[1.0, 2.0])).is_err());
        assert!(p.clone().set_weights(DVector::zeros(3)).is_err());
    }
}
