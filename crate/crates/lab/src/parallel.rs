//! Rayon fan-out of per-policy, per-seed and per-subsample work.
//!
//! Each work item derives its own seed from `(seed, index)` and results are
//! collected in index order, so the output does not depend on the worker
//! count.

use rayon::prelude::*;
use reachdim_core::dynamics::ControlAffineSystem;
use reachdim_core::pg::{self, AttainedSet, TrainConfig, TrainOutcome};
use reachdim_core::policy::{FamilySpec, TwoLayerParams};
use reachdim_core::twonn::{self, DimensionEstimate, PointCloud};
use reachdim_core::{Result, State};

fn check_base(system: &ControlAffineSystem, s: &State) -> Result<()> {
    if s.len() == system.state_dim() {
        Ok(())
    } else {
        Err(reachdim_core::Error::Dimension {
            op: "base state",
            expected: system.state_dim(),
            got: s.len(),
        })
    }
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
    check_base(system, s)?;
    pg::sample_count(delta, dt_sample)?;
    let results = (0..num_policies)
        .into_par_iter()
        .map(|i| pg::sampled_policy_points(system, family, s, delta, dt_sample, substeps, seed, i))
        .collect();
    pg::assemble(s, delta, dt_sample, 0, results)
}

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
    check_base(system, s)?;
    pg::sample_count(delta, dt_sample)?;
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(reachdim_core::Error::InvalidArgument(format!(
            "tau must be non-negative, got {tau}"
        )));
    }
    let steps = config.steps_for(base.width(), tau);
    let results = (0..num_seeds)
        .into_par_iter()
        .map(|i| {
            pg::trained_policy_points(system, config, base, s, delta, dt_sample, steps, seed, i)
        })
        .collect();
    pg::assemble(s, delta, dt_sample, steps, results)
}

/// Trains seed `i` with seed `derive_seed(seed, i)` for `steps` steps.
pub fn train_seeds(
    system: &ControlAffineSystem,
    base: &TwoLayerParams,
    config: &TrainConfig,
    steps: usize,
    num_seeds: usize,
    seed: u64,
) -> Vec<Result<TrainOutcome>> {
    (0..num_seeds)
        .into_par_iter()
        .map(|i| {
            pg::train_steps(
                system,
                base,
                config,
                steps,
                reachdim_core::rng::derive_seed(seed, i as u64),
            )
        })
        .collect()
}

pub fn estimate_with_ci(
    cloud: &PointCloud,
    subsamples: usize,
    subsample_size: usize,
    trim_fraction: f64,
    seed: u64,
) -> Result<DimensionEstimate> {
    if subsamples == 0 {
        return Err(reachdim_core::Error::InvalidArgument(
            "need at least one subsample".into(),
        ));
    }
    let estimates = (0..subsamples)
        .into_par_iter()
        .map(|i| twonn::subsample_estimate(cloud, subsample_size, trim_fraction, seed, i))
        .collect::<Result<Vec<_>>>()?;
    DimensionEstimate::from_estimates(&estimates, subsample_size)
}
