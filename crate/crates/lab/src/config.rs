//! JSON experiment configuration.
//!
//! Every field has a default, so `{"experiment": "toy_dim"}` is a complete
//! config. Unknown fields and sweep keys the experiment does not use are
//! rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use reachdim_core::dynamics::{Reward, SystemCatalogEntry};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{config_err, LabError, LabResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    ToyDim,
    LieCheck,
    EstimateDim,
    LocalSpectrum,
    TrainStats,
    Reachability,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Self::ToyDim => "toy_dim",
            Self::LieCheck => "lie_check",
            Self::EstimateDim => "estimate_dim",
            Self::LocalSpectrum => "local_spectrum",
            Self::TrainStats => "train_stats",
            Self::Reachability => "reachability",
        }
    }

    fn sweep_keys(self) -> &'static [&'static str] {
        match self {
            Self::ToyDim => &["state_dim"],
            Self::LocalSpectrum => &["delta"],
            Self::TrainStats => &["width"],
            Self::LieCheck | Self::EstimateDim | Self::Reachability => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    ChainIntegrator {
        state_dim: usize,
    },
    /// Row-major `A` (d_s × d_s) and `B` (d_s × d_a).
    LinearGeneric {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
    },
    Pendulum {
        #[serde(default = "one")]
        links: usize,
        #[serde(default = "one_f")]
        coupling: f64,
    },
}

fn one() -> usize {
    1
}

fn one_f() -> f64 {
    1.0
}

fn rows_to_matrix(name: &str, rows: &[Vec<f64>]) -> LabResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(config_err!(
            "{name} must be a non-empty rectangular list of rows"
        ));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

impl SystemSpec {
    pub fn to_catalog(&self) -> LabResult<SystemCatalogEntry> {
        Ok(match self {
            Self::ChainIntegrator { state_dim } => SystemCatalogEntry::ChainIntegrator {
                state_dim: *state_dim,
            },
            Self::LinearGeneric { a, b } => SystemCatalogEntry::LinearGeneric {
                a: rows_to_matrix("system.a", a)?,
                b: rows_to_matrix("system.b", b)?,
            },
            Self::Pendulum { links, coupling } => SystemCatalogEntry::Pendulum {
                links: *links,
                coupling: *coupling,
            },
        })
    }

    pub fn linear_matrices(&self) -> LabResult<(DMatrix<f64>, DMatrix<f64>)> {
        match self.to_catalog()? {
            SystemCatalogEntry::ChainIntegrator { state_dim } => {
                Ok(reachdim_core::dynamics::chain_matrices(state_dim))
            }
            SystemCatalogEntry::LinearGeneric { a, b } => Ok((a, b)),
            SystemCatalogEntry::Pendulum { .. } => Err(config_err!(
                "reachability needs a linear system, got pendulum"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub width: usize,
    pub radius: f64,
    pub seed: u64,
    pub augment_state: bool,
}

impl Default for PolicySection {
    fn default() -> Self {
        Self {
            width: 1024,
            radius: 1.0,
            seed: 0,
            augment_state: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    pub num_policies: usize,
    /// Policy count used instead of `num_policies` under `--full`.
    pub full_num_policies: usize,
    pub delta: f64,
    pub dt_sample: f64,
    /// Integrator steps per sampling interval.
    pub substeps: usize,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            num_policies: 200,
            full_num_policies: 1000,
            delta: 5.0,
            dt_sample: 0.01,
            substeps: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSection {
    pub subsamples: usize,
    /// Capped at the cloud size.
    pub subsample_size: usize,
    pub trim_fraction: f64,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self {
            subsamples: 10,
            subsample_size: 20_000,
            trim_fraction: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum RewardSpec {
    Zero,
    Constant { value: f64 },
    NegSquaredNorm,
    NegSquaredDistance { target: Vec<f64> },
}

impl RewardSpec {
    pub fn to_reward(&self) -> Reward {
        match self {
            Self::Zero => Reward::Zero,
            Self::Constant { value } => Reward::Constant(*value),
            Self::NegSquaredNorm => Reward::NegSquaredNorm,
            Self::NegSquaredDistance { target } => {
                Reward::NegSquaredDistance(DVector::from_column_slice(target))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub eta0: f64,
    pub batch: usize,
    /// Gradient time `τ = K η` every width is trained to.
    pub tau: f64,
    pub seeds: usize,
    pub fd_step: f64,
    pub h_window: f64,
    pub dt: f64,
    pub exploration_scale: f64,
    pub horizon: f64,
    pub discount: f64,
    pub reward: RewardSpec,
    pub initial_state: Option<Vec<f64>>,
    pub probe_states: Vec<Vec<f64>>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            eta0: 2.0,
            batch: 4,
            tau: 0.5,
            seeds: 16,
            fd_step: 1e-3,
            h_window: 0.05,
            dt: 0.025,
            exploration_scale: 0.1,
            horizon: 0.5,
            discount: 1.0,
            reward: RewardSpec::NegSquaredNorm,
            initial_state: None,
            probe_states: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LieSection {
    pub num_policies: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub t_count: usize,
    pub dt_ref: f64,
}

impl Default for LieSection {
    fn default() -> Self {
        Self {
            num_policies: 20,
            t_min: 1e-3,
            t_max: 5e-2,
            t_count: 8,
            dt_ref: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloudSource {
    Sampled,
    Trained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    pub num_policies: usize,
    /// Samples per rollout; the sampling step is `δ / samples_per_delta`.
    pub samples_per_delta: usize,
    pub source: CloudSource,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self {
            num_policies: 2000,
            samples_per_delta: 10,
            source: CloudSource::Sampled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub system: Option<SystemSpec>,
    #[serde(default)]
    pub policy: PolicySection,
    #[serde(default)]
    pub sweep: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub lie: LieSection,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    /// Base state of attained sets and Lie checks; defaults per experiment.
    #[serde(default)]
    pub base_state: Option<Vec<f64>>,
    /// Input cloud for `estimate_dim`.
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub full: bool,
}

fn default_seed() -> u64 {
    0
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            seed: default_seed(),
            system: None,
            policy: PolicySection::default(),
            sweep: BTreeMap::new(),
            sampling: SamplingSection::default(),
            estimator: EstimatorSection::default(),
            train: TrainSection::default(),
            lie: LieSection::default(),
            spectrum: SpectrumSection::default(),
            base_state: None,
            input: None,
            output: default_output(),
            full: false,
        }
    }

    pub fn from_json(text: &str) -> LabResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| config_err!("{e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> LabResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            LabError::Config(m) => config_err!("{}: {m}", path.display()),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// SHA-256 of the compact JSON form.
    /// SHA-256 of the compact JSON config, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut keyed = self.clone();
        keyed.output = PathBuf::new();
        let compact = serde_json::to_string(&keyed).expect("config serialises");
        let digest = Sha256::digest(compact.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// The configured system, or the experiment's default one.
    pub fn system_spec(&self) -> SystemSpec {
        self.system.clone().unwrap_or(match self.experiment {
            Experiment::ToyDim => SystemSpec::ChainIntegrator { state_dim: 5 },
            Experiment::Reachability => SystemSpec::ChainIntegrator { state_dim: 10 },
            Experiment::LieCheck => SystemSpec::Pendulum {
                links: 1,
                coupling: 1.0,
            },
            Experiment::LocalSpectrum => SystemSpec::Pendulum {
                links: 3,
                coupling: 1.0,
            },
            Experiment::TrainStats => SystemSpec::ChainIntegrator { state_dim: 1 },
            Experiment::EstimateDim => SystemSpec::ChainIntegrator { state_dim: 1 },
        })
    }

    pub fn sweep_values(&self, key: &str, default: &[f64]) -> Vec<f64> {
        self.sweep
            .get(key)
            .cloned()
            .unwrap_or_else(|| default.to_vec())
    }

    pub fn num_policies(&self) -> usize {
        if self.full {
            self.sampling.full_num_policies
        } else {
            self.sampling.num_policies
        }
    }

    pub fn validate(&self) -> LabResult<()> {
        let allowed = self.experiment.sweep_keys();
        for (key, values) in &self.sweep {
            if !allowed.contains(&key.as_str()) {
                return Err(config_err!(
                    "sweep key `{key}` is not used by {}; allowed: {allowed:?}",
                    self.experiment.name()
                ));
            }
            if values.is_empty() || values.iter().any(|v| !v.is_finite() || *v <= 0.0) {
                return Err(config_err!("sweep `{key}` needs positive finite values"));
            }
            if (key == "state_dim" || key == "width") && values.iter().any(|v| v.fract() != 0.0) {
                return Err(config_err!("sweep `{key}` needs integers"));
            }
        }
        if self.experiment == Experiment::TrainStats {
            if let Some(w) = self.sweep.get("width") {
                if w.len() < 2 {
                    return Err(config_err!("train_stats needs at least two widths"));
                }
            }
        }
        let p = &self.policy;
        if p.width == 0 || !(p.radius.is_finite() && p.radius > 0.0) {
            return Err(config_err!(
                "policy.width and policy.radius must be positive"
            ));
        }
        let s = &self.sampling;
        if s.num_policies == 0 || s.full_num_policies == 0 || s.substeps == 0 {
            return Err(config_err!("sampling counts must be positive"));
        }
        if !(s.delta > 0.0 && s.dt_sample > 0.0 && s.dt_sample <= s.delta) {
            return Err(config_err!("sampling needs 0 < dt_sample <= delta"));
        }
        let e = &self.estimator;
        if e.subsamples == 0 || e.subsample_size < 3 {
            return Err(config_err!(
                "estimator needs subsamples >= 1 and subsample_size >= 3"
            ));
        }
        if !(0.0..1.0).contains(&e.trim_fraction) {
            return Err(config_err!("estimator.trim_fraction must lie in [0, 1)"));
        }
        let t = &self.train;
        if t.seeds == 0 || t.batch == 0 {
            return Err(config_err!("train.seeds and train.batch must be positive"));
        }
        if !(t.tau.is_finite() && t.tau >= 0.0) {
            return Err(config_err!("train.tau must be non-negative"));
        }
        for (name, v) in [
            ("eta0", t.eta0),
            ("fd_step", t.fd_step),
            ("h_window", t.h_window),
            ("dt", t.dt),
            ("horizon", t.horizon),
            ("discount", t.discount),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(config_err!("train.{name} must be positive"));
            }
        }
        let l = &self.lie;
        if l.num_policies == 0 || l.t_count < 2 || !(l.t_min > 0.0 && l.t_max > l.t_min) {
            return Err(config_err!(
                "lie needs num_policies >= 1, t_count >= 2, 0 < t_min < t_max"
            ));
        }
        if self.spectrum.num_policies == 0 || self.spectrum.samples_per_delta == 0 {
            return Err(config_err!("spectrum counts must be positive"));
        }
        self.system_spec().to_catalog()?;
        Ok(())
    }
}
