//! Action-selection policies.

mod baseline;
mod thompson;
mod tree;
mod ucb;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::arms::ArmBelief;
use crate::error::{Error, Result};
use crate::linear_ts::{lints_init, LinTsState};

pub use baseline::random_baseline_step;
pub use thompson::{gp_thompson_step, thompson_independent, thompson_rank, thompson_rank_batches};
pub use tree::{
    average_branches, batch_gp_tree_step, batch_gp_tree_step_with_stats, descend_q, descend_q_seeded, descend_v,
    descend_v_seeded, gp_tree_step, gp_tree_step_with_stats, TreeStats,
};
pub use ucb::{gp_ucb_step, ucb_beta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    /// Every fantasy outcome counts as reward.
    #[default]
    Cumulative,
    /// Only leaf values count.
    Terminal,
}

/// How action sets are drawn inside the lookahead tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ActionSampler {
    /// `n` independent samples, argmax of each without replacement.
    #[default]
    Independent,
    /// Top-`b` of each of `n` samples, identical batches merged.
    Rank,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub horizon: usize,
    pub branches: usize,
    pub samples: usize,
    pub batch_size: usize,
    pub reward_mode: RewardMode,
    pub fantasy_noise: bool,
    pub action_sampler: ActionSampler,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            horizon: 1,
            branches: 4,
            samples: 20,
            batch_size: 1,
            reward_mode: RewardMode::Cumulative,
            fantasy_noise: true,
            action_sampler: ActionSampler::Independent,
        }
    }
}

impl TreeConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("horizon", self.horizon),
            ("branches", self.branches),
            ("samples", self.samples),
            ("batch_size", self.batch_size),
        ] {
            if v == 0 {
                return Err(Error::input(format!("tree {name} must be at least 1")));
            }
        }
        Ok(())
    }

    fn uses_rank(&self) -> bool {
        self.batch_size > 1 || self.action_sampler == ActionSampler::Rank
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateValue {
    pub arms: Vec<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub arm_indices: Vec<usize>,
    pub diagnostics: Vec<CandidateValue>,
}

impl Decision {
    pub(crate) fn single(arm: usize) -> Self {
        Self {
            arm_indices: vec![arm],
            diagnostics: Vec::new(),
        }
    }
}

pub(crate) fn untested_or_err(b: &ArmBelief) -> Result<Vec<usize>> {
    let u = b.untested();
    if u.is_empty() {
        return Err(Error::input("no untested arms remain"));
    }
    Ok(u)
}

/// Indices of `values` sorted by descending value, ties to the lowest index.
pub(crate) fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "gp-thompson")]
    GpThompson,
    #[serde(rename = "gp-ucb")]
    GpUcb,
    #[serde(rename = "lin-ts")]
    LinTs,
    #[serde(rename = "gp-tree")]
    GpTree,
    #[serde(rename = "batch-gp-tree")]
    BatchGpTree,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::Random,
        PolicyKind::GpThompson,
        PolicyKind::GpUcb,
        PolicyKind::LinTs,
        PolicyKind::GpTree,
        PolicyKind::BatchGpTree,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Random => "random",
            PolicyKind::GpThompson => "gp-thompson",
            PolicyKind::GpUcb => "gp-ucb",
            PolicyKind::LinTs => "lin-ts",
            PolicyKind::GpTree => "gp-tree",
            PolicyKind::BatchGpTree => "batch-gp-tree",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown policy '{s}'")))
    }
}

/// A fully parameterized policy.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Random,
    GpThompson,
    GpUcb { delta: f64 },
    LinTs { r: f64, delta: f64 },
    GpTree(TreeConfig),
    BatchGpTree(TreeConfig),
}

impl Policy {
    pub fn kind(&self) -> PolicyKind {
        match self {
            Policy::Random => PolicyKind::Random,
            Policy::GpThompson => PolicyKind::GpThompson,
            Policy::GpUcb { .. } => PolicyKind::GpUcb,
            Policy::LinTs { .. } => PolicyKind::LinTs,
            Policy::GpTree(_) => PolicyKind::GpTree,
            Policy::BatchGpTree(_) => PolicyKind::BatchGpTree,
        }
    }

    /// Arms requested per step before tail truncation.
    pub fn batch_size(&self) -> usize {
        match self {
            Policy::BatchGpTree(cfg) => cfg.batch_size,
            _ => 1,
        }
    }
}

/// A policy plus any state it carries between steps (the Lin-TS posterior).
#[derive(Debug, Clone)]
pub struct Selector {
    policy: Policy,
    lints: Option<LinTsState>,
    prior_mean: f64,
}

impl Selector {
    /// `horizon` is the total budget, `prior_mean` centres Lin-TS targets.
    pub fn new(policy: Policy, dim: usize, horizon: usize, prior_mean: f64) -> Result<Self> {
        let lints = match &policy {
            Policy::LinTs { r, delta } => Some(lints_init(dim, *r, *delta, horizon.max(2))?),
            Policy::GpTree(cfg) | Policy::BatchGpTree(cfg) => {
                cfg.validate()?;
                None
            }
            Policy::GpUcb { delta } => {
                ucb_beta(1, 1, *delta)?;
                None
            }
            _ => None,
        };
        Ok(Self {
            policy,
            lints,
            prior_mean,
        })
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    /// Chooses the next arms. `t` is the 1-based index of the first molecule
    /// in this step and `max_arms` caps the batch (remaining budget).
    pub fn select<R: Rng + ?Sized>(&self, b: &ArmBelief, t: usize, max_arms: usize, rng: &mut R) -> Result<Decision> {
        match &self.policy {
            Policy::Random => random_baseline_step(b, rng),
            Policy::GpThompson => gp_thompson_step(b, rng),
            Policy::GpUcb { delta } => gp_ucb_step(b, t, *delta, b.arms().len()),
            Policy::LinTs { .. } => {
                let state = self.lints.as_ref().expect("lin-ts state");
                let untested = untested_or_err(b)?;
                let feats: Vec<&[f64]> = untested.iter().map(|&a| &b.arms().features(a)[..]).collect();
                let pos = state.step(&feats, rng)?;
                Ok(Decision::single(untested[pos]))
            }
            Policy::GpTree(cfg) => gp_tree_step(b, cfg, rng),
            Policy::BatchGpTree(cfg) => {
                let size = cfg.batch_size.min(max_arms.max(1)).min(b.untested_count());
                let cfg = TreeConfig {
                    batch_size: size,
                    ..*cfg
                };
                batch_gp_tree_step(b, &cfg, rng)
            }
        }
    }

    /// Feeds observed outcomes to stateful policies.
    pub fn observe(&mut self, b: &ArmBelief, arms: &[usize], ys: &[f64]) -> Result<()> {
        if let Some(state) = &mut self.lints {
            for (&a, &y) in arms.iter().zip(ys) {
                *state = state.update(b.arms().features(a), y - self.prior_mean)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use std::sync::Arc;

    use crate::arms::{ArmBelief, ArmSet};
    use crate::gp::KernelSpec;

    pub fn line_belief(n: usize, noise: f64) -> ArmBelief {
        let feats = (0..n).map(|i| vec![i as f64 * 0.5]).collect();
        let set = Arc::new(ArmSet::new(feats, KernelSpec::rbf(1.0, 1.0).unwrap()).unwrap());
        ArmBelief::new(set, noise, 0.0).unwrap()
    }

    pub fn belief_from(feats: Vec<Vec<f64>>, noise: f64) -> ArmBelief {
        let set = Arc::new(ArmSet::new(feats, KernelSpec::rbf(1.0, 1.0).unwrap()).unwrap());
        ArmBelief::new(set, noise, 0.0).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_round_trip() {
        for k in PolicyKind::ALL {
            assert_eq!(k.name().parse::<PolicyKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.name()));
        }
        assert!(matches!("gp-bss".parse::<PolicyKind>(), Err(Error::Config(_))));
    }

    #[test]
    fn tree_config_requires_positive_counts() {
        assert!(TreeConfig::default().validate().is_ok());
        let bad = TreeConfig {
            branches: 0,
            ..TreeConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Input(_))));
    }

    #[test]
    fn descending_order_breaks_ties_low() {
        assert_eq!(descending_order(&[1.0, 3.0, 3.0, 2.0]), vec![1, 2, 3, 0]);
    }
}
