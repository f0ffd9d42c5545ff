//! Experiment recipes behind the CLI subcommands.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use reachdim_core::control::{self, LinearSystem, DEFAULT_RANK_TOL};
use reachdim_core::dynamics::{ControlAffineSystem, SystemCatalogEntry};
use reachdim_core::lie::{log_grid, truncation_error_slope, ClosedLoopField};
use reachdim_core::pg::{self as pg, AttainedSet, TrainConfig, TrainOutcome};
use reachdim_core::policy::{FamilySpec, PolicyMode, TwoLayerParams};
use reachdim_core::rng::derive_seed;
use reachdim_core::twonn::{DimensionEstimate, PointCloud};
use reachdim_core::{Error, State};

use crate::config::{CloudSource, Experiment, ExperimentConfig};
use crate::error::{config_err, LabError, LabResult};
use crate::parallel;
use crate::svg::{LinePlot, Series};
use crate::table::{Cell, Metadata, ResultTable};

/// Output of one experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub table: ResultTable,
    pub svg: Option<String>,
    /// Human-readable printout for stdout.
    pub text: String,
}

pub fn run(config: &ExperimentConfig) -> LabResult<Report> {
    config.validate()?;
    match config.experiment {
        Experiment::ToyDim => run_toy_dim(config),
        Experiment::LieCheck => run_lie_check(config),
        Experiment::EstimateDim => {
            let path = config
                .input
                .as_deref()
                .ok_or_else(|| config_err!("estimate_dim needs an input CSV"))?;
            run_estimate_dim(config, path)
        }
        Experiment::LocalSpectrum => run_local_spectrum(config),
        Experiment::TrainStats => run_train_stats(config),
        Experiment::Reachability => run_reachability(config),
    }
}

fn metadata(config: &ExperimentConfig) -> Metadata {
    Metadata {
        experiment: config.experiment.name().into(),
        config_hash: config.hash(),
        seed: config.seed,
    }
}

fn build_system(entry: &SystemCatalogEntry) -> LabResult<ControlAffineSystem> {
    Ok(ControlAffineSystem::from_catalog(entry)?)
}

fn as_count(v: f64) -> usize {
    v as usize
}

/// The configured base state, or the experiment default of length `dim`.
fn base_state(
    config: &ExperimentConfig,
    dim: usize,
    default: impl Fn(usize) -> f64,
) -> LabResult<State> {
    match &config.base_state {
        Some(v) if v.len() == dim => Ok(DVector::from_column_slice(v)),
        Some(v) => Err(config_err!(
            "base_state has length {}, system needs {dim}",
            v.len()
        )),
        None => Ok(DVector::from_fn(dim, |i, _| default(i))),
    }
}

/// Alternates `0.8, -0.3` over the state coordinates.
fn pendulum_default(i: usize) -> f64 {
    if i.is_multiple_of(2) {
        0.8
    } else {
        -0.3
    }
}

fn estimate(
    config: &ExperimentConfig,
    cloud: &PointCloud,
    seed: u64,
) -> LabResult<DimensionEstimate> {
    let size = config.estimator.subsample_size.min(cloud.len());
    Ok(parallel::estimate_with_ci(
        cloud,
        config.estimator.subsamples,
        size,
        config.estimator.trim_fraction,
        seed,
    )?)
}

fn all_diverged(set: &AttainedSet) -> LabResult<()> {
    if set.is_empty() && set.diverged > 0 {
        Err(LabError::Core(Error::Diverged { time: f64::NAN }))
    } else {
        Ok(())
    }
}

/// Attained-set dimension of the chain integrator across state dimensions.
pub fn run_toy_dim(config: &ExperimentConfig) -> LabResult<Report> {
    if !matches!(
        config.system_spec().to_catalog()?,
        SystemCatalogEntry::ChainIntegrator { .. }
    ) {
        return Err(config_err!("toy_dim needs the chain integrator"));
    }
    let dims: Vec<usize> = config
        .sweep_values("state_dim", &[3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0])
        .into_iter()
        .map(as_count)
        .collect();
    let action_dim = 1;
    let bound = (2 * action_dim + 1) as f64;
    let mut table = ResultTable::new(
        &["d_s", "d_hat", "ci_low", "ci_high", "points", "diverged"],
        metadata(config),
    );
    let mut text = String::new();
    let mut max_d: f64 = f64::NEG_INFINITY;
    for &ds in &dims {
        let system = build_system(&SystemCatalogEntry::ChainIntegrator { state_dim: ds })?;
        let base = TwoLayerParams::init_with(
            config.policy.width,
            ds,
            action_dim,
            config.policy.augment_state,
            derive_seed(config.policy.seed, ds as u64),
        )?;
        let family = FamilySpec::new(&base, config.policy.radius)?;
        let s = base_state(config, ds, |_| 1.0)?;
        let set = parallel::attained_set_sampled(
            &system,
            &family,
            &s,
            config.sampling.delta,
            config.sampling.dt_sample,
            config.sampling.substeps,
            config.num_policies(),
            derive_seed(config.seed, ds as u64),
        )?;
        all_diverged(&set)?;
        let cloud = set.to_cloud()?;
        let est = estimate(config, &cloud, derive_seed(config.seed ^ 0x5eed, ds as u64))?;
        max_d = max_d.max(est.d_hat);
        text.push_str(&format!(
            "d_s = {ds}: d_hat = {:.3} [{:.3}, {:.3}] from {} points ({} policies diverged)\n",
            est.d_hat,
            est.ci_low,
            est.ci_high,
            set.len(),
            set.diverged
        ));
        table.push(vec![
            ds.into(),
            est.d_hat.into(),
            est.ci_low.into(),
            est.ci_high.into(),
            set.len().into(),
            set.diverged.into(),
        ]);
    }
    table.set("max_d_hat", max_d);
    table.set("bound", bound);
    table.set("within_bound", max_d <= bound);
    let svg = toy_dim_plot(&table, bound);
    Ok(Report {
        table,
        svg: Some(svg),
        text,
    })
}

/// Line plot of `d_hat` against `d_s` with the `2 d_a + 1` reference line.
pub fn toy_dim_plot(table: &ResultTable, bound: f64) -> String {
    let ds = table.column_f64("d_s").unwrap_or_default();
    let d = table.column_f64("d_hat").unwrap_or_default();
    let lo = table.column_f64("ci_low").unwrap_or_default();
    let hi = table.column_f64("ci_high").unwrap_or_default();
    LinePlot {
        title: "Intrinsic dimension of attained states".into(),
        x_label: "state dimension d_s".into(),
        y_label: "TWO-NN estimate".into(),
        series: vec![Series {
            label: "d_hat (95% CI)".into(),
            points: ds.iter().copied().zip(d).collect(),
            intervals: Some(lo.into_iter().zip(hi).collect()),
        }],
        references: vec![(bound, "2 d_a + 1".into())],
    }
    .render()
}

/// Singular values of a point cloud after removing its mean, descending.
pub fn centered_singular_values(set: &AttainedSet) -> LabResult<Vec<f64>> {
    let m = set.centered();
    if m.nrows() < 2 {
        return Err(LabError::Core(Error::TooFewPoints {
            needed: 2,
            have: m.nrows(),
        }));
    }
    let svd = m
        .try_svd(false, false, f64::EPSILON, 10_000)
        .ok_or_else(|| LabError::Core(Error::Numerical("SVD did not converge".into())))?;
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// Least-squares slope of `log y` on `log x` over the finite positive pairs.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    reachdim_core::lie::least_squares_slope(&pts)
}

/// Spectrum of the centered attained cloud over a sweep of horizons `δ`.
pub fn run_local_spectrum(config: &ExperimentConfig) -> LabResult<Report> {
    let entry = config.system_spec().to_catalog()?;
    let system = build_system(&entry)?;
    let (ds, da) = (system.state_dim(), system.action_dim());
    let keep = ds.min(2 * da + 3);
    let residual_index = 2 * da + 2;
    let deltas = config.sweep_values("delta", &[0.01, 0.02, 0.05, 0.1]);
    let s = base_state(config, ds, pendulum_default)?;
    let base = TwoLayerParams::init_with(
        config.policy.width,
        ds,
        da,
        config.policy.augment_state,
        config.policy.seed,
    )?;
    let mut columns = vec!["delta".to_string(), "points".to_string()];
    columns.extend((1..=keep).map(|k| format!("ratio_{k}")));
    let col_refs: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut table = ResultTable::new(&col_refs, metadata(config));
    let mut residual = Vec::new();
    let mut text = String::new();
    for (i, &delta) in deltas.iter().enumerate() {
        let dt_sample = delta / config.spectrum.samples_per_delta as f64;
        let seed = derive_seed(config.seed, i as u64);
        let set = match config.spectrum.source {
            CloudSource::Sampled => {
                let family = FamilySpec::new(&base, config.policy.radius)?;
                parallel::attained_set_sampled(
                    &system,
                    &family,
                    &s,
                    delta,
                    dt_sample,
                    1,
                    config.spectrum.num_policies,
                    seed,
                )?
            }
            CloudSource::Trained => {
                let (tsys, tcfg) = train_setup(config, &entry, ds)?;
                parallel::attained_set_trained(
                    &tsys,
                    &tcfg,
                    &base,
                    &s,
                    delta,
                    dt_sample,
                    config.spectrum.num_policies,
                    config.train.tau,
                    seed,
                )?
            }
        };
        all_diverged(&set)?;
        let sv = centered_singular_values(&set)?;
        let ratios: Vec<f64> = (0..keep)
            .map(|k| sv.get(k).map_or(0.0, |v| v / sv[0]))
            .collect();
        residual.push(ratios.get(residual_index - 1).copied().unwrap_or(f64::NAN));
        text.push_str(&format!(
            "delta = {delta}: {}\n",
            ratios
                .iter()
                .enumerate()
                .map(|(k, r)| format!("s{}/s1 = {r:.3e}", k + 1))
                .collect::<Vec<_>>()
                .join(", ")
        ));
        let mut row: Vec<Cell> = vec![delta.into(), set.len().into()];
        row.extend(ratios.into_iter().map(Cell::from));
        table.push(row);
    }
    let slope = log_log_slope(&deltas, &residual);
    table.set("residual_index", residual_index);
    table.set("residual_slope", slope);
    text.push_str(&format!(
        "log-log slope of s{residual_index}/s1 against delta: {slope:.3}\n"
    ));
    Ok(Report {
        table,
        svg: None,
        text,
    })
}

/// Truncation-error slopes of the order-2 Lie series for sampled policies.
pub fn run_lie_check(config: &ExperimentConfig) -> LabResult<Report> {
    let system = build_system(&config.system_spec().to_catalog()?)?;
    let (ds, da) = (system.state_dim(), system.action_dim());
    let s = base_state(config, ds, pendulum_default)?;
    let base = TwoLayerParams::init_with(
        config.policy.width,
        ds,
        da,
        config.policy.augment_state,
        config.policy.seed,
    )?;
    let family = FamilySpec::new(&base, config.policy.radius)?;
    let lie = &config.lie;
    let grid = log_grid(lie.t_min, lie.t_max, lie.t_count);
    let mut table = ResultTable::new(&["policy", "slope", "flag"], metadata(config));
    let mut slopes = Vec::new();
    let mut flagged = 0usize;
    for i in 0..lie.num_policies {
        let params = family.sample_params(derive_seed(config.seed, i as u64));
        let field = ClosedLoopField::new(&system, &params, PolicyMode::Family)?;
        match truncation_error_slope(&field, &s, &grid, lie.dt_ref) {
            Ok(slope) => {
                slopes.push(slope);
                table.push(vec![i.into(), slope.into(), "".into()]);
            }
            Err(Error::Degenerate(msg)) => {
                flagged += 1;
                table.push(vec![i.into(), f64::NAN.into(), msg.into()]);
            }
            Err(e) => return Err(e.into()),
        }
    }
    let (mean, sd) = mean_sd(&slopes);
    table.set("mean_slope", mean);
    table.set("sd_slope", sd);
    table.set("flagged", flagged);
    let text = if slopes.is_empty() {
        format!("all {flagged} policies flagged: truncated series, slope undefined\n")
    } else {
        format!(
            "mean slope {mean:.3} (sd {sd:.3}) over {} policies, {flagged} flagged\n",
            slopes.len()
        )
    };
    Ok(Report {
        table,
        svg: None,
        text,
    })
}

/// Mean and sample standard deviation; NaN where undefined.
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Training system and configuration from the `train` section.
fn train_setup(
    config: &ExperimentConfig,
    entry: &SystemCatalogEntry,
    ds: usize,
) -> LabResult<(ControlAffineSystem, TrainConfig)> {
    let t = &config.train;
    let system = build_system(entry)?
        .with_reward(t.reward.to_reward())
        .with_horizon(t.horizon)
        .with_discount(t.discount)
        .with_exploration(t.exploration_scale);
    let initial = match &t.initial_state {
        Some(v) if v.len() == ds => DVector::from_column_slice(v),
        Some(v) => {
            return Err(config_err!(
                "train.initial_state has length {}, need {ds}",
                v.len()
            ))
        }
        None => DVector::from_element(ds, 1.0),
    };
    let probes = if t.probe_states.is_empty() {
        vec![initial.clone()]
    } else {
        t.probe_states
            .iter()
            .map(|p| {
                if p.len() == ds {
                    Ok(DVector::from_column_slice(p))
                } else {
                    Err(config_err!("probe state has length {}, need {ds}", p.len()))
                }
            })
            .collect::<LabResult<Vec<_>>>()?
    };
    let mut cfg = TrainConfig::new(initial);
    cfg.eta0 = t.eta0;
    cfg.batch = t.batch;
    cfg.fd_step = t.fd_step;
    cfg.h_window = t.h_window;
    cfg.dt = t.dt;
    cfg.exploration_scale = t.exploration_scale;
    cfg.probe_states = probes;
    cfg.validate(&system)?;
    Ok((system, cfg))
}

/// Mean `|f(s; W) - f_lin(s; W)|` over random unit displacements
/// `‖W - W0‖ = 1` and the given states.
pub fn linearisation_gap(
    width: usize,
    state_dim: usize,
    states: &[State],
    directions: usize,
    seed: u64,
) -> LabResult<f64> {
    let base = TwoLayerParams::init(width, state_dim, 1, seed)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for k in 0..directions {
        let mut rng = reachdim_core::rng::seeded(derive_seed(seed, k as u64));
        let dir = DVector::from_fn(base.num_weights(), |_, _| {
            use rand_distr::Distribution;
            let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
            z
        });
        let moved = base.with_weights(base.w0() + &dir / dir.norm())?;
        for s in states {
            let gap = moved.forward_canonical(s)? - moved.forward_linearised(s)?;
            total += gap.norm();
            count += 1;
        }
    }
    Ok(total / count as f64)
}

fn finished_runs(
    outcomes: Vec<reachdim_core::Result<TrainOutcome>>,
) -> LabResult<(Vec<TrainOutcome>, usize)> {
    let mut runs = Vec::new();
    let mut diverged = 0usize;
    for o in outcomes {
        let o = o?;
        if o.diverged_at.is_some() {
            diverged += 1;
        } else {
            runs.push(o);
        }
    }
    if runs.len() < 2 {
        return Err(LabError::Core(Error::Diverged { time: f64::NAN }));
    }
    Ok((runs, diverged))
}

/// `A_1` at the first probe state after step `k`.
fn probe_action(o: &TrainOutcome, k: usize) -> f64 {
    o.stats[k].probes[0].action[0]
}

/// Across-seed statistics of the linearised policy at matched gradient time.
///
/// Two seed protocols run per width. The variance uses seeds that share one
/// initialisation and differ only in batch and exploration noise. The mean
/// trace uses seeds with independent initialisations and reports the mean
/// displacement `A_1(τ) - A_1(0)`, which has a width-independent limit.
pub fn run_train_stats(config: &ExperimentConfig) -> LabResult<Report> {
    let entry = config.system_spec().to_catalog()?;
    let probe_system = build_system(&entry)?;
    let (ds, da) = (probe_system.state_dim(), probe_system.action_dim());
    let (system, tcfg) = train_setup(config, &entry, ds)?;
    let widths: Vec<usize> = config
        .sweep_values("width", &[256.0, 4096.0])
        .into_iter()
        .map(as_count)
        .collect();
    if widths.len() < 2 {
        return Err(config_err!("train_stats needs at least two widths"));
    }
    let tau = config.train.tau;
    let seeds = config.train.seeds;
    let mut table = ResultTable::new(
        &["width", "step", "tau", "variance", "mean_displacement"],
        metadata(config),
    );
    let mut text = String::new();
    let mut traces: Vec<Vec<(f64, f64)>> = Vec::new();
    let mut final_var = Vec::new();
    for &width in &widths {
        let steps = tcfg.steps_for(width, tau);
        let base = TwoLayerParams::init(width, ds, da, config.policy.seed)?;
        let shared = parallel::train_seeds(
            &system,
            &base,
            &tcfg,
            steps,
            seeds,
            derive_seed(config.seed, width as u64),
        );
        let (shared, diverged_shared) = finished_runs(shared)?;
        let independent: Vec<_> = (0..seeds)
            .map(|i| {
                let init = TwoLayerParams::init(
                    width,
                    ds,
                    da,
                    derive_seed(config.policy.seed, 1 + i as u64),
                )?;
                pg::train_steps(
                    &system,
                    &init,
                    &tcfg,
                    steps,
                    derive_seed(config.seed ^ 0x1d, (width * seeds + i) as u64),
                )
            })
            .collect();
        let (independent, diverged_indep) = finished_runs(independent)?;
        let mut trace = Vec::new();
        let mut var = 0.0;
        for k in 0..=steps {
            let vals: Vec<f64> = shared.iter().map(|o| probe_action(o, k)).collect();
            let (_, sd) = mean_sd(&vals);
            var = sd * sd;
            let disp: Vec<f64> = independent
                .iter()
                .map(|o| probe_action(o, k) - probe_action(o, 0))
                .collect();
            let (mean_disp, _) = mean_sd(&disp);
            let t = shared[0].stats[k].tau;
            trace.push((t, mean_disp));
            table.push(vec![
                width.into(),
                k.into(),
                t.into(),
                var.into(),
                mean_disp.into(),
            ]);
        }
        table.set(&format!("variance_{width}"), var);
        table.set(
            &format!("diverged_{width}"),
            diverged_shared + diverged_indep,
        );
        text.push_str(&format!(
            "n = {width}: {steps} steps, variance of A_1(s*) across {} seeds = {var:.4e}\n",
            shared.len()
        ));
        traces.push(trace);
        final_var.push(var);
    }
    let ratio = final_var[final_var.len() - 1] / final_var[0];
    table.set("variance_ratio", ratio);
    let (sup, range) = trace_mismatch(&traces[0], &traces[traces.len() - 1]);
    table.set("trace_sup_difference", sup);
    table.set("trace_range", range);
    text.push_str(&format!(
        "variance ratio (widest / narrowest) {ratio:.3}; mean trace sup difference {sup:.3e} over range {range:.3e}\n"
    ));
    Ok(Report {
        table,
        svg: None,
        text,
    })
}

/// Sup distance between two `(τ, value)` traces, evaluated at the first
/// trace's times with linear interpolation in the second, and the range of
/// the first.
pub fn trace_mismatch(a: &[(f64, f64)], b: &[(f64, f64)]) -> (f64, f64) {
    let interp = |t: f64| -> f64 {
        match b.iter().position(|p| p.0 >= t - 1e-12) {
            None => b.last().map_or(f64::NAN, |p| p.1),
            Some(0) => b[0].1,
            Some(i) => {
                let (t0, v0) = b[i - 1];
                let (t1, v1) = b[i];
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            }
        }
    };
    let sup = a
        .iter()
        .map(|(t, v)| (v - interp(*t)).abs())
        .fold(0.0, f64::max);
    let lo = a.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let hi = a.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    (sup, hi - lo)
}

/// Loads a CSV cloud and estimates its intrinsic dimension.
pub fn run_estimate_dim(config: &ExperimentConfig, path: &Path) -> LabResult<Report> {
    let points = crate::io::read_points_csv(path)?;
    let cloud = PointCloud::new(&points)?;
    let est = estimate(config, &cloud, config.seed)?;
    let mut table = ResultTable::new(
        &[
            "d_hat",
            "ci_low",
            "ci_high",
            "subsamples",
            "subsample_size",
            "points",
            "duplicates_removed",
        ],
        metadata(config),
    );
    table.push(vec![
        est.d_hat.into(),
        est.ci_low.into(),
        est.ci_high.into(),
        est.subsamples.into(),
        est.subsample_size.into(),
        cloud.len().into(),
        cloud.duplicates_removed().into(),
    ]);
    let json = serde_json::json!({
        "d_hat": est.d_hat,
        "ci_low": est.ci_low,
        "ci_high": est.ci_high,
        "subsamples": est.subsamples,
        "subsample_size": est.subsample_size,
        "points": cloud.len(),
        "duplicates_removed": cloud.duplicates_removed(),
    });
    table.set("d_hat", est.d_hat);
    Ok(Report {
        table,
        svg: None,
        text: format!("{}\n", serde_json::to_string_pretty(&json).expect("json")),
    })
}

/// Kalman rank test of a linear system.
pub fn run_reachability(config: &ExperimentConfig) -> LabResult<Report> {
    let (a, b): (DMatrix<f64>, DMatrix<f64>) = config.system_spec().linear_matrices()?;
    let sys = LinearSystem::new(a, b)?;
    let report = control::is_fully_reachable(&sys, DEFAULT_RANK_TOL)?;
    let mut table = ResultTable::new(&["index", "singular_value"], metadata(config));
    for (i, s) in report.singular_values.iter().enumerate() {
        table.push(vec![(i + 1).into(), (*s).into()]);
    }
    table.set("rank", report.rank);
    table.set("state_dim", sys.state_dim());
    table.set("full", report.full);
    let text = format!(
        "rank {} of {}; fully reachable: {}\nsingular values: {}\n",
        report.rank,
        sys.state_dim(),
        report.full,
        report
            .singular_values
            .iter()
            .map(|s| format!("{s:.6e}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(Report {
        table,
        svg: None,
        text,
    })
}
