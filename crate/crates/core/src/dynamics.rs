//! Control-affine systems `ṡ = g(s) + Σ_i h_i(s) a_i`, their integrators, the
//! discounted value function, and the finite-difference action-gradient oracle.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, invalid, Error, Result};
use crate::rng;
use crate::{Action, State};

/// Absolute coordinate bound past which a rollout is declared divergent.
pub const DIVERGENCE_BOUND: f64 = 1e8;
pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_FD_STEP: f64 = 1e-4;
pub const DEFAULT_EXPLORATION: f64 = 0.1;
const JACOBIAN_FD_STEP: f64 = 1e-5;

/// Drift and control vector fields of a control-affine system.
///
/// Jacobians default to central finite differences; catalog systems override
/// them with analytic forms.
pub trait Dynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// `g(s)`
    fn drift(&self, s: &State) -> State;
    /// `[h_1(s) … h_{d_a}(s)]`, a `d_s × d_a` matrix.
    fn control(&self, s: &State) -> DMatrix<f64>;

    /// `∂g/∂s`
    fn drift_jacobian(&self, s: &State) -> DMatrix<f64> {
        central_jacobian(s, |x| self.drift(x))
    }

    /// `J h_j` for every control column `j`.
    fn control_jacobians(&self, s: &State) -> Vec<DMatrix<f64>> {
        (0..self.action_dim())
            .map(|j| central_jacobian(s, |x| self.control(x).column(j).into_owned()))
            .collect()
    }
}

fn central_jacobian(s: &State, f: impl Fn(&State) -> State) -> DMatrix<f64> {
    let rows = f(s).len();
    let mut jac = DMatrix::zeros(rows, s.len());
    let mut x = s.clone();
    for k in 0..s.len() {
        let step = JACOBIAN_FD_STEP * s[k].abs().max(1.0);
        let orig = x[k];
        x[k] = orig + step;
        let plus = f(&x);
        x[k] = orig - step;
        let minus = f(&x);
        x[k] = orig;
        jac.set_column(k, &((plus - minus) / (2.0 * step)));
    }
    jac
}

/// The chain integrator `ṡ_i = s_{i+1}`, `ṡ_{d_s} = a`; fully reachable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainIntegrator {
    pub dim: usize,
}

impl Dynamics for ChainIntegrator {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn drift(&self, s: &State) -> State {
        DVector::from_fn(
            self.dim,
            |i, _| if i + 1 < self.dim { s[i + 1] } else { 0.0 },
        )
    }

    fn control(&self, _s: &State) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.dim, 1);
        b[(self.dim - 1, 0)] = 1.0;
        b
    }

    fn drift_jacobian(&self, _s: &State) -> DMatrix<f64> {
        chain_matrices(self.dim).0
    }

    fn control_jacobians(&self, _s: &State) -> Vec<DMatrix<f64>> {
        vec![DMatrix::zeros(self.dim, self.dim)]
    }
}

/// `(A, B)` of the chain integrator.
pub fn chain_matrices(dim: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let a = DMatrix::from_fn(dim, dim, |i, j| if j == i + 1 { 1.0 } else { 0.0 });
    let mut b = DMatrix::zeros(dim, 1);
    b[(dim - 1, 0)] = 1.0;
    (a, b)
}

/// `ṡ = A s + B a`
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDynamics {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl LinearDynamics {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(invalid!(
                "A must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            ));
        }
        check_dim("LinearDynamics::B rows", a.nrows(), b.nrows())?;
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(invalid!("A and B must be finite"));
        }
        Ok(Self { a, b })
    }
}

impl Dynamics for LinearDynamics {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn action_dim(&self) -> usize {
        self.b.ncols()
    }

    fn drift(&self, s: &State) -> State {
        &self.a * s
    }

    fn control(&self, _s: &State) -> DMatrix<f64> {
        self.b.clone()
    }

    fn drift_jacobian(&self, _s: &State) -> DMatrix<f64> {
        self.a.clone()
    }

    fn control_jacobians(&self, _s: &State) -> Vec<DMatrix<f64>> {
        let d = self.state_dim();
        vec![DMatrix::zeros(d, d); self.action_dim()]
    }
}

/// Chain of unit pendulums with torsional springs between neighbours, torque
/// applied to the first link. State is `(θ_1, ω_1, θ_2, ω_2, …)`:
///
/// `θ̇_i = ω_i`, `ω̇_i = -sin θ_i + k Σ_{nb} (θ_nb - θ_i) + [i = 1] a`.
///
/// With one link this is the planar pendulum `(s_2, -sin s_1 + a)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pendulum {
    pub links: usize,
    pub coupling: f64,
}

impl Default for Pendulum {
    fn default() -> Self {
        Self {
            links: 1,
            coupling: 1.0,
        }
    }
}

impl Pendulum {
    fn neighbours(&self, i: usize) -> impl Iterator<Item = usize> {
        let links = self.links;
        [i.checked_sub(1), (i + 1 < links).then_some(i + 1)]
            .into_iter()
            .flatten()
    }
}

impl Dynamics for Pendulum {
    fn state_dim(&self) -> usize {
        2 * self.links
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn drift(&self, s: &State) -> State {
        let mut out = DVector::zeros(2 * self.links);
        for i in 0..self.links {
            let theta = s[2 * i];
            let spring: f64 = self.neighbours(i).map(|nb| s[2 * nb] - theta).sum();
            out[2 * i] = s[2 * i + 1];
            out[2 * i + 1] = -libm::sin(theta) + self.coupling * spring;
        }
        out
    }

    fn control(&self, _s: &State) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(2 * self.links, 1);
        h[(1, 0)] = 1.0;
        h
    }

    fn drift_jacobian(&self, s: &State) -> DMatrix<f64> {
        let d = 2 * self.links;
        let mut jac = DMatrix::zeros(d, d);
        for i in 0..self.links {
            jac[(2 * i, 2 * i + 1)] = 1.0;
            let mut degree = 0.0;
            for nb in self.neighbours(i) {
                jac[(2 * i + 1, 2 * nb)] = self.coupling;
                degree += 1.0;
            }
            jac[(2 * i + 1, 2 * i)] = -libm::cos(s[2 * i]) - self.coupling * degree;
        }
        jac
    }

    fn control_jacobians(&self, _s: &State) -> Vec<DMatrix<f64>> {
        let d = 2 * self.links;
        vec![DMatrix::zeros(d, d)]
    }
}

/// Named built-in systems.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemCatalogEntry {
    ChainIntegrator { state_dim: usize },
    LinearGeneric { a: DMatrix<f64>, b: DMatrix<f64> },
    Pendulum { links: usize, coupling: f64 },
}

impl SystemCatalogEntry {
    pub fn name(&self) -> &'static str {
        match self {
            Self::ChainIntegrator { .. } => "chain_integrator",
            Self::LinearGeneric { .. } => "linear_generic",
            Self::Pendulum { .. } => "pendulum",
        }
    }

    pub fn build(&self) -> Result<Box<dyn Dynamics>> {
        Ok(match self {
            Self::ChainIntegrator { state_dim } => {
                if *state_dim == 0 {
                    return Err(invalid!("chain integrator needs d_s >= 1"));
                }
                Box::new(ChainIntegrator { dim: *state_dim })
            }
            Self::LinearGeneric { a, b } => Box::new(LinearDynamics::new(a.clone(), b.clone())?),
            Self::Pendulum { links, coupling } => {
                if *links == 0 || !coupling.is_finite() {
                    return Err(invalid!("pendulum needs links >= 1 and a finite coupling"));
                }
                Box::new(Pendulum {
                    links: *links,
                    coupling: *coupling,
                })
            }
        })
    }
}

/// State reward `f_r`.
#[derive(Debug, Clone, PartialEq)]
pub enum Reward {
    Zero,
    Constant(f64),
    /// `-‖s‖²`
    NegSquaredNorm,
    /// `-‖s - target‖²`
    NegSquaredDistance(State),
}

impl Reward {
    pub fn eval(&self, s: &State) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Constant(c) => *c,
            Self::NegSquaredNorm => -s.norm_squared(),
            Self::NegSquaredDistance(target) => -(s - target).norm_squared(),
        }
    }
}

/// A control-affine MDP: dynamics, reward, horizon `T`, discount `λ` and an
/// isotropic exploration diffusion `σ(s) = c I`.
pub struct ControlAffineSystem {
    dynamics: Box<dyn Dynamics>,
    pub reward: Reward,
    pub horizon: f64,
    pub discount: f64,
    pub exploration_scale: f64,
}

impl core::fmt::Debug for ControlAffineSystem {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ControlAffineSystem")
            .field("state_dim", &self.state_dim())
            .field("action_dim", &self.action_dim())
            .field("reward", &self.reward)
            .field("horizon", &self.horizon)
            .field("discount", &self.discount)
            .field("exploration_scale", &self.exploration_scale)
            .finish()
    }
}

impl ControlAffineSystem {
    /// Zero reward, `T = 1`, `λ = 1`, exploration scale 0.1.
    pub fn new(dynamics: Box<dyn Dynamics>) -> Self {
        Self {
            dynamics,
            reward: Reward::Zero,
            horizon: 1.0,
            discount: 1.0,
            exploration_scale: DEFAULT_EXPLORATION,
        }
    }

    pub fn from_catalog(entry: &SystemCatalogEntry) -> Result<Self> {
        Ok(Self::new(entry.build()?))
    }

    pub fn with_reward(mut self, reward: Reward) -> Self {
        self.reward = reward;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_discount(mut self, discount: f64) -> Self {
        self.discount = discount;
        self
    }

    pub fn with_exploration(mut self, scale: f64) -> Self {
        self.exploration_scale = scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(invalid!("horizon must be positive, got {}", self.horizon));
        }
        if !(self.discount.is_finite() && self.discount > 0.0) {
            return Err(invalid!("discount must be positive, got {}", self.discount));
        }
        if !(self.exploration_scale.is_finite() && self.exploration_scale >= 0.0) {
            return Err(invalid!("exploration scale must be non-negative"));
        }
        Ok(())
    }

    pub fn dynamics(&self) -> &dyn Dynamics {
        self.dynamics.as_ref()
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.dynamics.action_dim()
    }

    pub fn drift(&self, s: &State) -> State {
        self.dynamics.drift(s)
    }

    pub fn control(&self, s: &State) -> DMatrix<f64> {
        self.dynamics.control(s)
    }

    pub fn drift_jacobian(&self, s: &State) -> DMatrix<f64> {
        self.dynamics.drift_jacobian(s)
    }

    pub fn control_jacobians(&self, s: &State) -> Vec<DMatrix<f64>> {
        self.dynamics.control_jacobians(s)
    }

    pub fn reward(&self, s: &State) -> f64 {
        self.reward.eval(s)
    }

    /// `σ(s)`
    pub fn exploration(&self, _s: &State) -> DMatrix<f64> {
        DMatrix::identity(self.state_dim(), self.state_dim()) * self.exploration_scale
    }

    /// `g(s) + H(s) a`
    pub fn field(&self, s: &State, a: &Action) -> Result<State> {
        check_dim("state", self.state_dim(), s.len())?;
        check_dim("action", self.action_dim(), a.len())?;
        Ok(self.drift(s) + self.control(s) * a)
    }
}

/// A state-feedback law `s ↦ a`.
pub trait Policy: Sync {
    fn action_dim(&self) -> usize;
    fn act(&self, s: &State) -> Result<Action>;
}

/// Always returns the same action.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantPolicy(pub Action);

impl ConstantPolicy {
    pub fn zero(action_dim: usize) -> Self {
        Self(DVector::zeros(action_dim))
    }
}

impl Policy for ConstantPolicy {
    fn action_dim(&self) -> usize {
        self.0.len()
    }

    fn act(&self, _s: &State) -> Result<Action> {
        Ok(self.0.clone())
    }
}

/// Wraps a closure as a [`Policy`].
pub struct FnPolicy<F> {
    action_dim: usize,
    f: F,
}

impl<F: Fn(&State) -> Action + Sync> FnPolicy<F> {
    pub fn new(action_dim: usize, f: F) -> Self {
        Self { action_dim, f }
    }
}

impl<F: Fn(&State) -> Action + Sync> Policy for FnPolicy<F> {
    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn act(&self, s: &State) -> Result<Action> {
        Ok((self.f)(s))
    }
}

/// `g(s) + H(s) π(s)`
pub fn closed_loop_derivative(
    system: &ControlAffineSystem,
    policy: &dyn Policy,
    s: &State,
) -> Result<State> {
    let a = policy.act(s)?;
    system.field(s, &a)
}

/// Time-indexed states of one integration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &State {
        self.states
            .last()
            .expect("trajectory holds the start state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory holds the start time")
    }
}

/// Step sizes covering `duration`: whole steps of `dt` plus one shorter final
/// step when `duration` is not a multiple of `dt`.
fn step_schedule(duration: f64, dt: f64) -> Result<(usize, f64)> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid!("dt must be positive, got {dt}"));
    }
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(invalid!("duration must be non-negative, got {duration}"));
    }
    let ratio = duration / dt;
    let mut whole = libm::floor(ratio + 1e-9) as usize;
    let mut rest = duration - whole as f64 * dt;
    if rest < 1e-9 * dt {
        rest = 0.0;
    }
    if whole as f64 > ratio {
        // rounding pushed us one step past the end
        whole = libm::round(ratio) as usize;
        rest = 0.0;
    }
    Ok((whole, rest))
}

fn guard(s: &State, time: f64) -> Result<()> {
    if s.iter()
        .all(|v| v.is_finite() && v.abs() <= DIVERGENCE_BOUND)
    {
        Ok(())
    } else {
        Err(Error::Diverged { time })
    }
}

pub fn rk4_step(field: &impl Fn(&State) -> Result<State>, s: &State, dt: f64) -> Result<State> {
    let k1 = field(s)?;
    let k2 = field(&(s + &k1 * (0.5 * dt)))?;
    let k3 = field(&(s + &k2 * (0.5 * dt)))?;
    let k4 = field(&(s + &k3 * dt))?;
    Ok(s + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Fixed-step classical RK4 integration of an autonomous field, recording the
/// state after every step.
pub fn integrate_rk4(
    field: impl Fn(&State) -> Result<State>,
    s0: &State,
    duration: f64,
    dt: f64,
) -> Result<Trajectory> {
    integrate_with(|s, h| rk4_step(&field, s, h), s0, duration, dt)
}

/// Fixed-step forward Euler integration.
pub fn integrate_euler(
    field: impl Fn(&State) -> Result<State>,
    s0: &State,
    duration: f64,
    dt: f64,
) -> Result<Trajectory> {
    integrate_with(|s, h| Ok(s + field(s)? * h), s0, duration, dt)
}

fn integrate_with(
    mut step: impl FnMut(&State, f64) -> Result<State>,
    s0: &State,
    duration: f64,
    dt: f64,
) -> Result<Trajectory> {
    let (whole, rest) = step_schedule(duration, dt)?;
    guard(s0, 0.0)?;
    let total = whole + (rest > 0.0) as usize;
    let mut times = Vec::with_capacity(total + 1);
    let mut states = Vec::with_capacity(total + 1);
    times.push(0.0);
    states.push(s0.clone());
    let mut s = s0.clone();
    for i in 0..total {
        let (h, t) = if i < whole {
            (dt, (i + 1) as f64 * dt)
        } else {
            (rest, duration)
        };
        s = step(&s, h)?;
        guard(&s, t)?;
        times.push(t);
        states.push(s.clone());
    }
    Ok(Trajectory { times, states })
}

fn check_rollout_args(system: &ControlAffineSystem, policy: &dyn Policy, s0: &State) -> Result<()> {
    check_dim("initial state", system.state_dim(), s0.len())?;
    check_dim("policy action", system.action_dim(), policy.action_dim())
}

/// Closed-loop RK4 rollout of `ṡ = g(s) + H(s) π(s)`.
pub fn rollout(
    system: &ControlAffineSystem,
    policy: &dyn Policy,
    s0: &State,
    duration: f64,
    dt: f64,
) -> Result<Trajectory> {
    check_rollout_args(system, policy, s0)?;
    integrate_rk4(
        |s| closed_loop_derivative(system, policy, s),
        s0,
        duration,
        dt,
    )
}

/// Closed-loop forward-Euler rollout (same `dt` convention as [`rollout`]).
pub fn rollout_euler(
    system: &ControlAffineSystem,
    policy: &dyn Policy,
    s0: &State,
    duration: f64,
    dt: f64,
) -> Result<Trajectory> {
    check_rollout_args(system, policy, s0)?;
    integrate_euler(
        |s| closed_loop_derivative(system, policy, s),
        s0,
        duration,
        dt,
    )
}

/// Euler–Maruyama sample of `dS = (g + H π) dt + σ dw`.
pub fn rollout_sde(
    system: &ControlAffineSystem,
    policy: &dyn Policy,
    s0: &State,
    duration: f64,
    dt: f64,
    seed: u64,
) -> Result<Trajectory> {
    rollout_sde_scaled(
        system,
        policy,
        s0,
        duration,
        dt,
        system.exploration_scale,
        seed,
    )
}

/// [`rollout_sde`] with the diffusion `σ = scale · I` given explicitly instead
/// of taken from the system.
pub fn rollout_sde_scaled(
    system: &ControlAffineSystem,
    policy: &dyn Policy,
    s0: &State,
    duration: f64,
    dt: f64,
    scale: f64,
    seed: u64,
) -> Result<Trajectory> {
    check_rollout_args(system, policy, s0)?;
    if !(scale.is_finite() && scale >= 0.0) {
        return Err(invalid!(
            "exploration scale must be non-negative, got {scale}"
        ));
    }
    let mut rng = rng::seeded(seed);
    let d = system.state_dim();
    integrate_with(
        |s, h| {
            let drift = closed_loop_derivative(system, policy, s)?;
            let sqrt_h = libm::sqrt(h);
            let dw = DVector::from_fn(d, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * sqrt_h
            });
            Ok(s + drift * h + dw * scale)
        },
        s0,
        duration,
        dt,
    )
}

/// Trapezoidal `∫ e^{-(l + offset)/λ} f_r(s_l) dl` along a trajectory.
fn discounted_reward(system: &ControlAffineSystem, traj: &Trajectory, offset: f64) -> f64 {
    let lambda = system.discount;
    let weighted: Vec<f64> = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(l, s)| libm::exp(-(l + offset) / lambda) * system.reward(s))
        .collect();
    traj.times
        .windows(2)
        .zip(weighted.windows(2))
        .map(|(t, w)| 0.5 * (t[1] - t[0]) * (w[0] + w[1]))
        .sum()
}

/// `v^π(s, t) = ∫_0^{T-t} e^{-(l+t)/λ} f_r(s_l) dl` along the deterministic
/// rollout started from `s` at time `t`.
pub fn value(
    system: &ControlAffineSystem,
    policy: &dyn Policy,
    s: &State,
    t: f64,
    dt: f64,
) -> Result<f64> {
    system.validate()?;
    if !(t >= 0.0 && t < system.horizon) {
        return Err(invalid!("value time {t} outside [0, {})", system.horizon));
    }
    if matches!(system.reward, Reward::Zero) {
        return Ok(0.0);
    }
    let traj = rollout(system, policy, s, system.horizon - t, dt)?;
    Ok(discounted_reward(system, &traj, t))
}

/// Holds `a` for a duration `h`, collecting discounted reward, then follows
/// `π` from the reached state until the horizon.
pub fn q_h(
    system: &ControlAffineSystem,
    policy: &dyn Policy,
    s: &State,
    a: &Action,
    t: f64,
    h: f64,
    dt: f64,
) -> Result<f64> {
    system.validate()?;
    if !(h > 0.0 && t >= 0.0 && t + h < system.horizon) {
        return Err(invalid!(
            "q_h needs h > 0 and 0 <= t < t + h < T (t = {t}, h = {h}, T = {})",
            system.horizon
        ));
    }
    check_dim("q_h action", system.action_dim(), a.len())?;
    if matches!(system.reward, Reward::Zero) {
        return Ok(0.0);
    }
    let hold = ConstantPolicy(a.clone());
    let held = rollout(system, &hold, s, h, dt)?;
    let during = discounted_reward(system, &held, t);
    let after = value(system, policy, held.final_state(), t + h, dt)?;
    Ok(during + after)
}

/// Central differences of [`q_h`] along each action coordinate.
#[allow(clippy::too_many_arguments)]
pub fn grad_a_q(
    system: &ControlAffineSystem,
    policy: &dyn Policy,
    s: &State,
    a: &Action,
    t: f64,
    fd_step: f64,
    h: f64,
    dt: f64,
) -> Result<Action> {
    if !(fd_step.is_finite() && fd_step > 0.0) {
        return Err(invalid!("fd_step must be positive, got {fd_step}"));
    }
    let mut grad = DVector::zeros(a.len());
    for i in 0..a.len() {
        let mut plus = a.clone();
        let mut minus = a.clone();
        plus[i] += fd_step;
        minus[i] -= fd_step;
        let qp = q_h(system, policy, s, &plus, t, h, dt)?;
        let qm = q_h(system, policy, s, &minus, t, h, dt)?;
        grad[i] = (qp - qm) / (2.0 * fd_step);
    }
    Ok(grad)
}
