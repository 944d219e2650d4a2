//! Experiment configuration (JSON).

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::Deserializer;
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::arms::ArmSet;
use crate::data::{median_pairwise_distance, Standardizer};
use crate::error::{Error, Result};
use crate::gp::KernelSpec;
use crate::policies::{ActionSampler, Policy, PolicyKind, RewardMode, TreeConfig};
use crate::projection::{build_projection, DEFAULT_TARGET_DIM};

pub const DEFAULT_REPLICATIONS: usize = 20;
pub const DEFAULT_NOISE_VARIANCE: f64 = 0.1;
pub const DEFAULT_HORIZON_DEPTH: usize = 1;
pub const DEFAULT_BRANCHES: usize = 4;
pub const DEFAULT_SAMPLES: usize = 20;
pub const DEFAULT_BATCH_SIZE: usize = 5;
pub const DELTA_AREGRET: f64 = 0.01;
pub const DELTA_SREGRET: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Goal {
    Aregret,
    Sregret,
}

impl Goal {
    pub fn name(self) -> &'static str {
        match self {
            Goal::Aregret => "aregret",
            Goal::Sregret => "sregret",
        }
    }

    pub fn reward_mode(self) -> RewardMode {
        match self {
            Goal::Aregret => RewardMode::Cumulative,
            Goal::Sregret => RewardMode::Terminal,
        }
    }

    pub fn default_delta(self) -> f64 {
        match self {
            Goal::Aregret => DELTA_AREGRET,
            Goal::Sregret => DELTA_SREGRET,
        }
    }
}

impl fmt::Display for Goal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One goal or a list of goals; serialized as a bare string when single.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Goals(pub Vec<Goal>);

impl Default for Goals {
    fn default() -> Self {
        Goals(vec![Goal::Aregret])
    }
}

impl Serialize for Goals {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0.as_slice() {
            [one] => one.serialize(s),
            many => many.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Goals {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            One(Goal),
            Many(Vec<Goal>),
        }
        Ok(match Raw::deserialize(d)? {
            Raw::One(g) => Goals(vec![g]),
            Raw::Many(v) => Goals(v),
        })
    }
}

/// Kernel lengthscale: a number, or `"median"` for the median pairwise
/// distance of the (standardized, projected) features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lengthscale {
    Fixed(f64),
    Median,
}

impl Default for Lengthscale {
    fn default() -> Self {
        Lengthscale::Fixed(1.0)
    }
}

impl Serialize for Lengthscale {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Lengthscale::Fixed(v) => s.serialize_f64(*v),
            Lengthscale::Median => s.serialize_str("median"),
        }
    }
}

impl<'de> Deserialize<'de> for Lengthscale {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Lengthscale::Fixed(v)),
            Raw::Str(s) if s == "median" => Ok(Lengthscale::Median),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "lengthscale must be a number or \"median\", got \"{s}\""
            ))),
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    #[serde(default)]
    pub lengthscale: Lengthscale,
    #[serde(default = "one")]
    pub signal_variance: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            lengthscale: Lengthscale::default(),
            signal_variance: 1.0,
        }
    }
}

fn default_target_dim() -> usize {
    DEFAULT_TARGET_DIM
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionConfig {
    #[serde(default = "default_target_dim")]
    pub m: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub name: PolicyKind,
    /// Column value in result files; defaults to the policy name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branches: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fantasy_noise: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_sampler: Option<ActionSampler>,
    /// Lin-TS reward scale `R`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
}

impl PolicyConfig {
    pub fn named(name: PolicyKind) -> Self {
        Self {
            name,
            label: None,
            h: None,
            branches: None,
            samples: None,
            batch_size: None,
            delta: None,
            fantasy_noise: None,
            action_sampler: None,
            r: None,
        }
    }

    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(self.name.name())
    }

    fn tree(&self, goal: Goal) -> TreeConfig {
        let batch = self.name == PolicyKind::BatchGpTree;
        TreeConfig {
            horizon: self.h.unwrap_or(DEFAULT_HORIZON_DEPTH),
            branches: self.branches.unwrap_or(DEFAULT_BRANCHES),
            samples: self.samples.unwrap_or(DEFAULT_SAMPLES),
            batch_size: if batch {
                self.batch_size.unwrap_or(DEFAULT_BATCH_SIZE)
            } else {
                1
            },
            reward_mode: goal.reward_mode(),
            fantasy_noise: self.fantasy_noise.unwrap_or(true),
            action_sampler: if batch {
                ActionSampler::Rank
            } else {
                self.action_sampler.unwrap_or_default()
            },
        }
    }

    /// Builds the runnable policy. `r_default` is the Lin-TS scale used when
    /// none is configured.
    pub fn resolve(&self, goal: Goal, r_default: f64) -> Result<Policy> {
        let delta = self.delta.unwrap_or(goal.default_delta());
        let policy = match self.name {
            PolicyKind::Random => Policy::Random,
            PolicyKind::GpThompson => Policy::GpThompson,
            PolicyKind::GpUcb => Policy::GpUcb { delta },
            PolicyKind::LinTs => Policy::LinTs {
                r: self.r.unwrap_or(r_default),
                delta,
            },
            PolicyKind::GpTree => Policy::GpTree(self.tree(goal)),
            PolicyKind::BatchGpTree => Policy::BatchGpTree(self.tree(goal)),
        };
        Ok(policy)
    }

    /// The same entry with every parameter that applies to this policy filled in.
    pub fn resolved(&self, goal: Goal, r_default: f64) -> PolicyConfig {
        let mut out = PolicyConfig {
            label: self.label.clone(),
            ..PolicyConfig::named(self.name)
        };
        match self.name {
            PolicyKind::Random | PolicyKind::GpThompson => {}
            PolicyKind::GpUcb => out.delta = Some(self.delta.unwrap_or(goal.default_delta())),
            PolicyKind::LinTs => {
                out.delta = Some(self.delta.unwrap_or(goal.default_delta()));
                out.r = Some(self.r.unwrap_or(r_default));
            }
            PolicyKind::GpTree | PolicyKind::BatchGpTree => {
                let t = self.tree(goal);
                out.h = Some(t.horizon);
                out.branches = Some(t.branches);
                out.samples = Some(t.samples);
                out.batch_size = Some(t.batch_size);
                out.fantasy_noise = Some(t.fantasy_noise);
                out.action_sampler = Some(t.action_sampler);
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        let ctx = |m: String| Error::config(format!("policy '{}': {m}", self.label()));
        for (key, v) in [
            ("h", self.h),
            ("branches", self.branches),
            ("samples", self.samples),
            ("batch_size", self.batch_size),
        ] {
            if v == Some(0) {
                return Err(ctx(format!("{key} must be at least 1")));
            }
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d < 1.0) {
                return Err(ctx(format!("delta must lie in (0, 1), got {d}")));
            }
        }
        if let Some(r) = self.r {
            if !(r > 0.0 && r.is_finite()) {
                return Err(ctx(format!("r must be positive, got {r}")));
            }
        }
        Ok(())
    }
}

fn default_replications() -> usize {
    DEFAULT_REPLICATIONS
}

fn default_noise() -> f64 {
    DEFAULT_NOISE_VARIANCE
}

fn default_reveal() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    #[serde(default)]
    pub projection: Option<ProjectionConfig>,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default = "default_noise")]
    pub noise_variance: f64,
    /// Constant GP prior mean; the mean of the revealed targets when absent.
    #[serde(default)]
    pub prior_mean: Option<f64>,
    pub policies: Vec<PolicyConfig>,
    #[serde(default)]
    pub goal: Goals,
    pub horizon: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_reveal")]
    pub initial_reveal_count: usize,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

impl ExperimentConfig {
    /// A config with defaults for everything but the dataset, policies and horizon.
    pub fn new(dataset: impl Into<PathBuf>, policies: Vec<PolicyConfig>, horizon: usize) -> Self {
        Self {
            dataset: dataset.into(),
            projection: None,
            kernel: KernelConfig::default(),
            noise_variance: DEFAULT_NOISE_VARIANCE,
            prior_mean: None,
            policies,
            goal: Goals::default(),
            horizon,
            replications: DEFAULT_REPLICATIONS,
            master_seed: 0,
            initial_reveal_count: 1,
            output: default_output(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative `dataset` and `output` paths are taken
    /// relative to the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if cfg.dataset.is_relative() {
            cfg.dataset = base.join(&cfg.dataset);
        }
        if cfg.output.is_relative() {
            cfg.output = base.join(&cfg.output);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("horizon must be at least 1"));
        }
        if self.replications == 0 {
            return Err(Error::config("replications must be at least 1"));
        }
        if self.initial_reveal_count > self.horizon {
            return Err(Error::config(format!(
                "initial_reveal_count {} exceeds horizon {}",
                self.initial_reveal_count, self.horizon
            )));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::config(format!(
                "noise_variance must be non-negative, got {}",
                self.noise_variance
            )));
        }
        if let Some(m) = self.prior_mean {
            if !m.is_finite() {
                return Err(Error::config("prior_mean must be finite"));
            }
        }
        if let Lengthscale::Fixed(l) = self.kernel.lengthscale {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::config(format!("lengthscale must be positive, got {l}")));
            }
        }
        if !(self.kernel.signal_variance > 0.0 && self.kernel.signal_variance.is_finite()) {
            return Err(Error::config("signal_variance must be positive"));
        }
        if let Some(p) = &self.projection {
            if p.m == 0 {
                return Err(Error::config("projection m must be at least 1"));
            }
        }
        if self.policies.is_empty() {
            return Err(Error::config("at least one policy is required"));
        }
        if self.goal.0.is_empty() {
            return Err(Error::config("at least one goal is required"));
        }
        let mut labels = HashSet::new();
        for p in &self.policies {
            p.validate()?;
            if !labels.insert(p.label()) {
                return Err(Error::config(format!(
                    "duplicate policy label '{}'; set distinct \"label\" fields",
                    p.label()
                )));
            }
        }
        let mut goals = HashSet::new();
        if !self.goal.0.iter().all(|g| goals.insert(*g)) {
            return Err(Error::config("duplicate goal"));
        }
        Ok(())
    }
}

/// Arm set built from raw features, plus the resolved kernel.
#[derive(Debug, Clone)]
pub struct PreparedArms {
    pub arms: Arc<ArmSet>,
    pub kernel: KernelSpec,
}

/// Standardizes features, applies the optional projection and resolves the
/// lengthscale on the result.
pub fn prepare_arms(
    features: &[Vec<f64>],
    projection: Option<&ProjectionConfig>,
    kernel: &KernelConfig,
) -> Result<PreparedArms> {
    if features.is_empty() {
        return Err(Error::data("no candidate arms"));
    }
    let mut xs = Standardizer::fit(features).apply_all(features);
    if let Some(p) = projection {
        let d = features[0].len();
        let matrix = build_projection(d, p.m, p.seed).map_err(|e| Error::config(format!("projection: {e}")))?;
        xs = matrix.apply_all(&xs)?;
    }
    let lengthscale = match kernel.lengthscale {
        Lengthscale::Fixed(l) => l,
        Lengthscale::Median => median_pairwise_distance(&xs),
    };
    let kernel = KernelSpec::rbf(lengthscale, kernel.signal_variance).map_err(|e| Error::config(e.to_string()))?;
    let arms = Arc::new(ArmSet::new(xs, kernel)?);
    Ok(PreparedArms { arms, kernel })
}
