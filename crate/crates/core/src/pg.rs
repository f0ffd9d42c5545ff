//! Semi-gradient training of linearised policies and attained-set sampling.
//!
//! One step moves the first-layer weights along
//! `(η/B) Σ_b Φ(s_b; W0)ᵀ ∇_a Q_h(s_b, a_b, t_b)`, with the action gradient
//! taken from the finite-difference oracle in [`crate::dynamics`] and the batch
//! drawn from exploration-SDE rollouts of the current policy.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;

use crate::dynamics::{grad_a_q, rollout, rollout_sde_scaled, ControlAffineSystem};
use crate::error::{check_dim, invalid, Error, Result};
use crate::policy::{FamilySpec, PolicyMode, TwoLayerParams};
use crate::twonn::PointCloud;
use crate::{rng, Action, State};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Base learning rate; a width-`n` network uses `eta0 / √n`.
    pub eta0: f64,
    pub batch: usize,
    pub steps: usize,
    pub width_schedule: Vec<usize>,
    pub fd_step: f64,
    /// Hold window `h` of the `Q_h` oracle, shortened near the horizon.
    pub h_window: f64,
    pub dt: f64,
    pub exploration_scale: f64,
    pub probe_states: Vec<State>,
    /// Start state of every exploration rollout.
    pub initial_state: State,
}

impl TrainConfig {
    pub fn new(initial_state: State) -> Self {
        Self {
            eta0: 1.0,
            batch: 8,
            steps: 10,
            width_schedule: alloc::vec![256, 4096],
            fd_step: crate::dynamics::DEFAULT_FD_STEP,
            h_window: 0.05,
            dt: 0.02,
            exploration_scale: crate::dynamics::DEFAULT_EXPLORATION,
            probe_states: Vec::new(),
            initial_state,
        }
    }

    pub fn validate(&self, system: &ControlAffineSystem) -> Result<()> {
        system.validate()?;
        for (name, v) in [
            ("eta0", self.eta0),
            ("fd_step", self.fd_step),
            ("h_window", self.h_window),
            ("dt", self.dt),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid!("{name} must be finite and positive, got {v}"));
            }
        }
        if !(self.exploration_scale.is_finite() && self.exploration_scale >= 0.0) {
            return Err(invalid!("exploration scale must be non-negative"));
        }
        if self.width_schedule.contains(&0) {
            return Err(invalid!("widths must be positive"));
        }
        check_dim(
            "initial state",
            system.state_dim(),
            self.initial_state.len(),
        )?;
        for s in &self.probe_states {
            check_dim("probe state", system.state_dim(), s.len())?;
        }
        Ok(())
    }

    /// `eta0 / √n`
    pub fn eta_for(&self, width: usize) -> f64 {
        self.eta0 / libm::sqrt(width as f64)
    }

    /// Steps needed to reach gradient time `tau = K η` at this width.
    pub fn steps_for(&self, width: usize, tau: f64) -> usize {
        libm::round(tau / self.eta_for(width)).max(0.0) as usize
    }
}

/// One `(s_b, a_b, t_b)` element of a training batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub state: State,
    pub action: Action,
    pub time: f64,
}

/// Statistics of the linearised policy at one probe state.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeStats {
    /// `A_j`, length `d_a`.
    pub action: Action,
    /// `A_{j,k}`, `d_a × d_s`.
    pub jacobian: DMatrix<f64>,
    /// `A_j A_{j'}`, `d_a × d_a`.
    pub products: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatRecord {
    pub step: usize,
    pub tau: f64,
    pub probes: Vec<ProbeStats>,
}

pub type StatTrace = Vec<StatRecord>;

/// Displacement `‖W - W0‖` after each step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamRecord {
    pub step: usize,
    pub tau: f64,
    pub displacement: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: TwoLayerParams,
    pub params_trace: Vec<ParamRecord>,
    pub stats: StatTrace,
    /// Set when a rollout diverged; the traces stop at the last completed step.
    pub diverged_at: Option<f64>,
}

pub fn probe_stats(params: &TwoLayerParams, probes: &[State]) -> Result<Vec<ProbeStats>> {
    probes
        .iter()
        .map(|s| {
            let action = params.forward_linearised(s)?;
            let jacobian = params.jacobian_linearised(s)?;
            let products = &action * action.transpose();
            Ok(ProbeStats {
                action,
                jacobian,
                products,
            })
        })
        .collect()
}

/// Number of grid times `k dt` in `[0, T)`.
fn grid_len(horizon: f64, dt: f64) -> usize {
    let n = libm::ceil(horizon / dt - 1e-9) as usize;
    n.max(1)
}

/// Element `index` of a batch: a grid time drawn uniformly from `[0, T)` and
/// the exploration-SDE state reached at that time.
pub fn sample_element(
    system: &ControlAffineSystem,
    params: &TwoLayerParams,
    config: &TrainConfig,
    seed: u64,
    index: usize,
) -> Result<Sample> {
    let elem_seed = rng::derive_seed(seed, index as u64);
    let mut r = rng::seeded(elem_seed);
    let k = r.random_range(0..grid_len(system.horizon, config.dt));
    let time = k as f64 * config.dt;
    let policy = params.policy(PolicyMode::Linearised);
    let traj = rollout_sde_scaled(
        system,
        &policy,
        &config.initial_state,
        time,
        config.dt,
        config.exploration_scale,
        rng::derive_seed(elem_seed, 0),
    )?;
    let state = traj.final_state().clone();
    let action = params.forward_linearised(&state)?;
    Ok(Sample {
        state,
        action,
        time,
    })
}

pub fn collect_batch(
    system: &ControlAffineSystem,
    params: &TwoLayerParams,
    batch: usize,
    seed: u64,
    config: &TrainConfig,
) -> Result<Vec<Sample>> {
    config.validate(system)?;
    (0..batch)
        .map(|b| sample_element(system, params, config, seed, b))
        .collect()
}

/// `Φ(s_b; W0)ᵀ ∇_a Q_h(s_b, a_b, t_b)` for one batch element.
pub fn element_direction(
    system: &ControlAffineSystem,
    params: &TwoLayerParams,
    sample: &Sample,
    config: &TrainConfig,
) -> Result<DVector<f64>> {
    let remaining = system.horizon - sample.time;
    if remaining <= 0.0 {
        return Err(invalid!(
            "sample time {} not before the horizon",
            sample.time
        ));
    }
    let h = config.h_window.min(0.5 * remaining);
    let policy = params.policy(PolicyMode::Linearised);
    let g = grad_a_q(
        system,
        &policy,
        &sample.state,
        &sample.action,
        sample.time,
        config.fd_step,
        h,
        config.dt,
    )?;
    Ok(params.feature_matrix(&sample.state)?.tr_mul(&g))
}

/// `(1/B) Σ_b Φ(s_b)ᵀ ∇_a Q_h`, the update per unit learning rate.
pub fn batch_direction(
    system: &ControlAffineSystem,
    params: &TwoLayerParams,
    batch: &[Sample],
    config: &TrainConfig,
) -> Result<DVector<f64>> {
    if batch.is_empty() {
        return Err(invalid!("batch is empty"));
    }
    let mut dir = DVector::zeros(params.num_weights());
    for sample in batch {
        dir += element_direction(system, params, sample, config)?;
    }
    Ok(dir / batch.len() as f64)
}

/// The weights after one step of size `eta` on `batch`.
pub fn sgd_step(
    params: &TwoLayerParams,
    batch: &[Sample],
    system: &ControlAffineSystem,
    eta: f64,
    config: &TrainConfig,
) -> Result<DVector<f64>> {
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(invalid!("learning rate must be non-negative, got {eta}"));
    }
    let dir = batch_direction(system, params, batch, config)?;
    Ok(params.weights() + dir * eta)
}

/// `config.steps` steps at `eta0/√n`, recording statistics before the first
/// step and after each one. Step `k` draws its batch with a seed derived from
/// `(seed, k)`.
pub fn train(
    system: &ControlAffineSystem,
    params: &TwoLayerParams,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    train_steps(system, params, config, config.steps, seed)
}

pub fn train_steps(
    system: &ControlAffineSystem,
    params: &TwoLayerParams,
    config: &TrainConfig,
    steps: usize,
    seed: u64,
) -> Result<TrainOutcome> {
    config.validate(system)?;
    check_dim("policy state", system.state_dim(), params.state_dim())?;
    check_dim("policy action", system.action_dim(), params.action_dim())?;
    let eta = config.eta_for(params.width());
    let mut current = params.clone();
    let mut params_trace = alloc::vec![ParamRecord {
        step: 0,
        tau: 0.0,
        displacement: current.displacement_norm(),
    }];
    let mut stats = alloc::vec![StatRecord {
        step: 0,
        tau: 0.0,
        probes: probe_stats(&current, &config.probe_states)?,
    }];
    let mut diverged_at = None;
    for k in 0..steps {
        let step_seed = rng::derive_seed(seed, k as u64);
        let result = collect_batch(system, &current, config.batch, step_seed, config)
            .and_then(|batch| sgd_step(&current, &batch, system, eta, config));
        let w = match result {
            Ok(w) => w,
            Err(Error::Diverged { time }) => {
                diverged_at = Some(time);
                break;
            }
            Err(e) => return Err(e),
        };
        current.set_weights(w)?;
        let tau = (k + 1) as f64 * eta;
        params_trace.push(ParamRecord {
            step: k + 1,
            tau,
            displacement: current.displacement_norm(),
        });
        stats.push(StatRecord {
            step: k + 1,
            tau,
            probes: probe_stats(&current, &config.probe_states)?,
        });
    }
    Ok(TrainOutcome {
        params: current,
        params_trace,
        stats,
        diverged_at,
    })
}

/// Where an attained-set point came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointOrigin {
    /// Sampled policy index or training seed index.
    pub policy: usize,
    /// Gradient steps taken before the rollout (0 for sampled policies).
    pub train_steps: usize,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttainedSet {
    pub base_state: State,
    pub delta: f64,
    pub points: Vec<State>,
    pub provenance: Vec<PointOrigin>,
    /// Policies dropped because their rollout diverged.
    pub diverged: usize,
}

impl AttainedSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_cloud(&self) -> Result<PointCloud> {
        let dim = self.base_state.len();
        let mut flat = Vec::with_capacity(self.points.len() * dim);
        for p in &self.points {
            flat.extend_from_slice(p.as_slice());
        }
        PointCloud::from_flat(dim, flat)
    }

    /// Points minus their mean, one point per row.
    pub fn centered(&self) -> DMatrix<f64> {
        let d = self.base_state.len();
        let n = self.points.len();
        let mut m = DMatrix::zeros(n, d);
        for (i, p) in self.points.iter().enumerate() {
            m.row_mut(i).copy_from(&p.transpose());
        }
        if n > 0 {
            let mean = m.row_mean();
            for mut row in m.row_iter_mut() {
                row -= &mean;
            }
        }
        m
    }
}

/// Number of samples `delta / dt_sample`, which must be a whole number.
pub fn sample_count(delta: f64, dt_sample: f64) -> Result<usize> {
    if !(delta.is_finite() && delta > 0.0 && dt_sample.is_finite() && dt_sample > 0.0) {
        return Err(invalid!("delta and dt_sample must be positive"));
    }
    let ratio = delta / dt_sample;
    let count = libm::round(ratio);
    if count < 1.0 || (ratio - count).abs() > 1e-6 * ratio.max(1.0) {
        return Err(invalid!(
            "dt_sample {dt_sample} does not divide delta {delta}"
        ));
    }
    Ok(count as usize)
}

/// Closed-loop RK4 rollout of one parameter set from `s`, keeping the states at
/// `dt_sample, 2 dt_sample, …, delta`. Each sampling interval is split into
/// `substeps` integrator steps.
pub fn sample_rollout(
    system: &ControlAffineSystem,
    params: &TwoLayerParams,
    mode: PolicyMode,
    s: &State,
    delta: f64,
    dt_sample: f64,
    substeps: usize,
) -> Result<Vec<State>> {
    let count = sample_count(delta, dt_sample)?;
    if substeps == 0 {
        return Err(invalid!("substeps must be positive"));
    }
    let policy = params.policy(mode);
    let dt = dt_sample / substeps as f64;
    let traj = rollout(system, &policy, s, count as f64 * dt_sample, dt)?;
    Ok(traj
        .states
        .into_iter()
        .skip(substeps)
        .step_by(substeps)
        .take(count)
        .collect())
}

/// Points of sampled policy `index`, a family member drawn with a seed derived
/// from `(seed, index)`.
#[allow(clippy::too_many_arguments)]
pub fn sampled_policy_points(
    system: &ControlAffineSystem,
    family: &FamilySpec<'_>,
    s: &State,
    delta: f64,
    dt_sample: f64,
    substeps: usize,
    seed: u64,
    index: usize,
) -> Result<Vec<State>> {
    let params = family.sample_params(rng::derive_seed(seed, index as u64));
    sample_rollout(
        system,
        &params,
        PolicyMode::Family,
        s,
        delta,
        dt_sample,
        substeps,
    )
}

/// Collects per-policy results in index order, dropping diverged policies.
pub fn assemble(
    base_state: &State,
    delta: f64,
    dt_sample: f64,
    train_steps: usize,
    results: Vec<Result<Vec<State>>>,
) -> Result<AttainedSet> {
    let mut points = Vec::new();
    let mut provenance = Vec::new();
    let mut diverged = 0;
    for (policy, r) in results.into_iter().enumerate() {
        match r {
            Ok(states) => {
                for (k, p) in states.into_iter().enumerate() {
                    points.push(p);
                    provenance.push(PointOrigin {
                        policy,
                        train_steps,
                        time: (k + 1) as f64 * dt_sample,
                    });
                }
            }
            Err(Error::Diverged { .. }) => diverged += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(AttainedSet {
        base_state: base_state.clone(),
        delta,
        points,
        provenance,
        diverged,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn attained_set_sampled(
    system: &ControlAffineSystem,
    family: &FamilySpec<'_>,
    s: &State,
    delta: f64,
    dt_sample: f64,
    substeps: usize,
    num_policies: usize,
    seed: u64,
) -> Result<AttainedSet> {
    check_dim("base state", system.state_dim(), s.len())?;
    sample_count(delta, dt_sample)?;
    let results = (0..num_policies)
        .map(|i| sampled_policy_points(system, family, s, delta, dt_sample, substeps, seed, i))
        .collect();
    assemble(s, delta, dt_sample, 0, results)
}

/// Trains seed `index` from `base` for `steps` steps, then rolls the
/// linearised policy out from `s`.
#[allow(clippy::too_many_arguments)]
pub fn trained_policy_points(
    system: &ControlAffineSystem,
    config: &TrainConfig,
    base: &TwoLayerParams,
    s: &State,
    delta: f64,
    dt_sample: f64,
    steps: usize,
    seed: u64,
    index: usize,
) -> Result<Vec<State>> {
    let outcome = train_steps(
        system,
        base,
        config,
        steps,
        rng::derive_seed(seed, index as u64),
    )?;
    if let Some(time) = outcome.diverged_at {
        return Err(Error::Diverged { time });
    }
    sample_rollout(
        system,
        &outcome.params,
        PolicyMode::Linearised,
        s,
        delta,
        dt_sample,
        1,
    )
}

/// Policies trained from a shared initialisation `base` to gradient time `tau`
/// with independent batch noise, each rolled out from `s`.
#[allow(clippy::too_many_arguments)]
pub fn attained_set_trained(
    system: &ControlAffineSystem,
    config: &TrainConfig,
    base: &TwoLayerParams,
    s: &State,
    delta: f64,
    dt_sample: f64,
    num_seeds: usize,
    tau: f64,
    seed: u64,
) -> Result<AttainedSet> {
    check_dim("base state", system.state_dim(), s.len())?;
    sample_count(delta, dt_sample)?;
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(invalid!("tau must be non-negative, got {tau}"));
    }
    let steps = config.steps_for(base.width(), tau);
    let results = (0..num_seeds)
        .map(|i| trained_policy_points(system, config, base, s, delta, dt_sample, steps, seed, i))
        .collect();
    assemble(s, delta, dt_sample, steps, results)
}
