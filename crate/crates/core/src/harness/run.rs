use std::fmt::Write as _;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{prepare_arms, ExperimentConfig, Goal, PolicyConfig, PreparedArms};
use crate::arms::ArmBelief;
use crate::data::{load_any, Dataset};
use crate::error::{Error, Result};
use crate::metrics::{RegretTracker, RunRecord};
use crate::policies::Selector;
use crate::rng::{mix64, stream};

/// Stream tag for the initial reveal, shared by all policies so their
/// replicates start from the same revealed arms.
const REVEAL_TAG: u64 = 0x5245_5645_414c;

/// Seed of replicate `rep` of the policy at `policy_index` in the config.
pub fn replicate_seed(master_seed: u64, policy_index: usize, rep: usize) -> u64 {
    mix64(mix64(master_seed, policy_index as u64), rep as u64)
}

pub fn reveal_seed(master_seed: u64, rep: usize) -> u64 {
    mix64(mix64(master_seed, REVEAL_TAG), rep as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub t: usize,
    pub mean_avg_regret: f64,
    pub se_avg_regret: f64,
    pub mean_simple_regret: f64,
    pub se_simple_regret: f64,
}

/// All replicates of one policy under one goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRun {
    pub policy: String,
    pub goal: Goal,
    pub replicates: Vec<Vec<RunRecord>>,
    pub summary: Vec<SummaryRow>,
}

impl PolicyRun {
    /// Mean average regret at the final step.
    pub fn final_avg_regret(&self) -> f64 {
        self.summary.last().map_or(f64::NAN, |s| s.mean_avg_regret)
    }

    /// Per-replicate average regret at the final step.
    pub fn final_avg_regrets(&self) -> Vec<f64> {
        self.replicates
            .iter()
            .map(|r| r.last().map_or(f64::NAN, |x| x.running_aregret))
            .collect()
    }
}

/// Values derived from the data when the run starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedInputs {
    pub arms: usize,
    pub feature_dim: usize,
    pub model_dim: usize,
    pub lengthscale: f64,
    pub r_star: f64,
    pub policies: Vec<PolicyConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub resolved: ResolvedInputs,
    pub digest: String,
    pub runs: Vec<PolicyRun>,
}

impl RunResult {
    pub fn run(&self, policy: &str, goal: Goal) -> Option<&PolicyRun> {
        self.runs.iter().find(|r| r.policy == policy && r.goal == goal)
    }
}

/// SHA-256 of the canonical JSON form of the config.
pub fn config_digest(cfg: &ExperimentConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    Sha256::digest(&json)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// Lin-TS reward scale: half the declared target range, else half the observed one.
pub fn default_reward_scale(data: &Dataset) -> f64 {
    let (lo, hi) = data.y_range.unwrap_or_else(|| data.target_range());
    let half = 0.5 * (hi - lo);
    if half > 0.0 && half.is_finite() {
        half
    } else {
        1.0
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunResult> {
    let data = load_any(&cfg.dataset)?;
    run_on_dataset(cfg, &data)
}

/// Runs every (policy, goal, replicate) of `cfg` on an in-memory dataset.
pub fn run_on_dataset(cfg: &ExperimentConfig, data: &Dataset) -> Result<RunResult> {
    cfg.validate()?;
    data.validate()?;
    if cfg.horizon > data.len() {
        return Err(Error::config(format!(
            "horizon {} exceeds the {} arms of the dataset",
            cfg.horizon,
            data.len()
        )));
    }
    let prepared = prepare_arms(&data.features, cfg.projection.as_ref(), &cfg.kernel)?;
    let r_default = default_reward_scale(data);
    let goals = &cfg.goal.0;

    let mut jobs = Vec::new();
    for (pi, p) in cfg.policies.iter().enumerate() {
        for &goal in goals {
            // Validate every policy before spending time on any replicate.
            let policy = p.resolve(goal, r_default)?;
            Selector::new(policy, prepared.arms.dim(), cfg.horizon, 0.0)?;
            for rep in 0..cfg.replications {
                jobs.push((pi, goal, rep));
            }
        }
    }
    let records = jobs
        .par_iter()
        .map(|&(pi, goal, rep)| run_replicate(cfg, data, &prepared, &cfg.policies[pi], pi, goal, rep, r_default))
        .collect::<Result<Vec<_>>>()?;

    let mut runs = Vec::new();
    let mut it = records.into_iter();
    for p in &cfg.policies {
        for &goal in goals {
            let replicates: Vec<Vec<RunRecord>> = it.by_ref().take(cfg.replications).collect();
            let summary = summarize(&replicates, cfg.horizon);
            runs.push(PolicyRun {
                policy: p.label().to_string(),
                goal,
                replicates,
                summary,
            });
        }
    }
    let resolved = ResolvedInputs {
        arms: data.len(),
        feature_dim: data.dim(),
        model_dim: prepared.arms.dim(),
        lengthscale: prepared.kernel.lengthscale,
        r_star: data.best_target(),
        policies: cfg.policies.iter().map(|p| p.resolved(goals[0], r_default)).collect(),
    };
    Ok(RunResult {
        config: cfg.clone(),
        resolved,
        digest: config_digest(cfg),
        runs,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_replicate(
    cfg: &ExperimentConfig,
    data: &Dataset,
    prepared: &PreparedArms,
    pcfg: &PolicyConfig,
    policy_index: usize,
    goal: Goal,
    rep: usize,
    r_default: f64,
) -> Result<Vec<RunRecord>> {
    let horizon = cfg.horizon;
    let mut tracker = RegretTracker::new(data.best_target());

    let reveal: Vec<usize> = sample(
        &mut stream(reveal_seed(cfg.master_seed, rep)),
        data.len(),
        cfg.initial_reveal_count,
    )
    .into_vec();
    let reveal_y: Vec<f64> = reveal.iter().map(|&a| data.targets[a]).collect();
    let prior_mean = cfg.prior_mean.unwrap_or_else(|| {
        if reveal_y.is_empty() {
            0.0
        } else {
            reveal_y.iter().sum::<f64>() / reveal_y.len() as f64
        }
    });

    let mut belief = ArmBelief::new(prepared.arms.clone(), cfg.noise_variance, prior_mean)?;
    let mut selector = Selector::new(pcfg.resolve(goal, r_default)?, prepared.arms.dim(), horizon, prior_mean)?;
    for (&a, &y) in reveal.iter().zip(&reveal_y) {
        tracker.push(&data.ids[a], y, y)?;
    }
    selector.observe(&belief, &reveal, &reveal_y)?;
    belief = belief.condition_many(&reveal, &reveal_y)?;

    let mut rng = stream(replicate_seed(cfg.master_seed, policy_index, rep));
    while tracker.records().len() < horizon {
        let done = tracker.records().len();
        let decision = selector.select(&belief, done + 1, horizon - done, &mut rng)?;
        let arms: Vec<usize> = decision.arm_indices.into_iter().take(horizon - done).collect();
        let ys: Vec<f64> = arms.iter().map(|&a| data.targets[a]).collect();
        for (&a, &y) in arms.iter().zip(&ys) {
            tracker.push(&data.ids[a], y, y)?;
        }
        selector.observe(&belief, &arms, &ys)?;
        belief = belief.condition_many(&arms, &ys)?;
    }
    Ok(tracker.into_records())
}

fn mean_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-step mean and standard error across replicates.
pub fn summarize(replicates: &[Vec<RunRecord>], horizon: usize) -> Vec<SummaryRow> {
    (0..horizon)
        .map(|i| {
            let (mean_avg_regret, se_avg_regret) = mean_se(replicates.iter().map(move |r| r[i].running_aregret));
            let (mean_simple_regret, se_simple_regret) = mean_se(replicates.iter().map(move |r| r[i].simple_regret()));
            SummaryRow {
                t: i + 1,
                mean_avg_regret,
                se_avg_regret,
                mean_simple_regret,
                se_simple_regret,
            }
        })
        .collect()
}
