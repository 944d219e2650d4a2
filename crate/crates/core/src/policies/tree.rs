//! Sparse lookahead tree over fantasized outcomes.
//!
//! Every node derives its random stream from a 64-bit seed and hands each
//! child `mix64(seed, ordinal)`, so parallel evaluation reproduces the
//! sequential result exactly.

use std::cmp::Ordering as CmpOrdering;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rayon::prelude::*;

use super::{
    thompson_independent, thompson_rank_batches, ActionSampler, CandidateValue, Decision, RewardMode, TreeConfig,
};
use crate::arms::ArmBelief;
use crate::error::{Error, Result};
use crate::rng::{mix64, standard_normal, stream};

/// Counters filled in while a tree is evaluated.
#[derive(Debug, Default)]
pub struct TreeStats {
    conditionings: AtomicU64,
    leaves: AtomicU64,
    nonzero_rewards: AtomicU64,
}

impl TreeStats {
    pub fn new() -> Self {
        Self::default()
    }

    /// Belief conditionings performed (one per fantasy branch).
    pub fn conditionings(&self) -> u64 {
        self.conditionings.load(Ordering::Relaxed)
    }

    pub fn leaves(&self) -> u64 {
        self.leaves.load(Ordering::Relaxed)
    }

    /// Fantasy branches whose intermediate reward was nonzero.
    pub fn nonzero_rewards(&self) -> u64 {
        self.nonzero_rewards.load(Ordering::Relaxed)
    }
}

fn bump(counter: Option<&AtomicU64>) {
    if let Some(c) = counter {
        c.fetch_add(1, Ordering::Relaxed);
    }
}

/// Mean of `f(0..k)`, evaluated in parallel and summed in order.
pub fn average_branches<F>(k: usize, f: F) -> Result<f64>
where
    F: Fn(usize) -> Result<f64> + Sync + Send,
{
    if k == 0 {
        return Err(Error::input("branch count must be at least 1"));
    }
    let values = (0..k).into_par_iter().map(f).collect::<Result<Vec<f64>>>()?;
    Ok(values.iter().sum::<f64>() / k as f64)
}

/// Fantasy outcomes for an action, drawn jointly.
fn fantasize<R: Rng + ?Sized>(b: &ArmBelief, action: &[usize], cfg: &TreeConfig, rng: &mut R) -> Result<Vec<f64>> {
    let noise = if cfg.fantasy_noise {
        b.gp().noise_variance()
    } else {
        0.0
    };
    if let [arm] = action {
        let (m, v) = b.marginal(*arm);
        return Ok(vec![m + (v + noise).sqrt() * standard_normal(rng)]);
    }
    let mut ys = b.sample_at(action, rng)?;
    if noise > 0.0 {
        let sd = noise.sqrt();
        for y in &mut ys {
            *y += sd * standard_normal(rng);
        }
    }
    Ok(ys)
}

fn action_set<R: Rng + ?Sized>(b: &ArmBelief, cfg: &TreeConfig, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    let available = b.untested_count();
    if cfg.uses_rank() {
        thompson_rank_batches(b, cfg.samples, cfg.batch_size.min(available), rng)
    } else {
        let picks = thompson_independent(b, cfg.samples.min(available), rng)?;
        Ok(picks.into_iter().map(|a| vec![a]).collect())
    }
}

/// Expected value of playing `action` at `depth`, averaged over `K` fantasies.
pub fn descend_q_seeded(
    b: &ArmBelief,
    action: &[usize],
    depth: usize,
    cfg: &TreeConfig,
    seed: u64,
    stats: Option<&TreeStats>,
) -> Result<f64> {
    if depth >= cfg.horizon {
        return Err(Error::input(format!(
            "descend_q at depth {depth} with horizon {}",
            cfg.horizon
        )));
    }
    if action.is_empty() {
        return Err(Error::input("empty action"));
    }
    average_branches(cfg.branches, |k| {
        let mut rng = stream(mix64(seed, k as u64));
        let ys = fantasize(b, action, cfg, &mut rng)?;
        let child = b.condition_many(action, &ys)?;
        bump(stats.map(|s| &s.conditionings));
        let reward = match cfg.reward_mode {
            RewardMode::Cumulative => ys.iter().sum(),
            RewardMode::Terminal => 0.0,
        };
        if reward != 0.0 {
            bump(stats.map(|s| &s.nonzero_rewards));
        }
        Ok(reward + descend_v_seeded(&child, depth + 1, cfg, rng.random(), stats)?)
    })
}

/// Value of the belief state at `depth`: a leaf sample maximum at the
/// horizon, otherwise the best action of a fresh Thompson action set.
pub fn descend_v_seeded(
    b: &ArmBelief,
    depth: usize,
    cfg: &TreeConfig,
    seed: u64,
    stats: Option<&TreeStats>,
) -> Result<f64> {
    if depth > cfg.horizon {
        return Err(Error::input(format!(
            "descend_v at depth {depth} beyond horizon {}",
            cfg.horizon
        )));
    }
    let mut rng = stream(seed);
    if depth == cfg.horizon || b.untested_count() == 0 {
        bump(stats.map(|s| &s.leaves));
        let f = b.sample_all(&mut rng)?;
        return Ok(f.into_iter().fold(f64::NEG_INFINITY, f64::max));
    }
    let actions = action_set(b, cfg, &mut rng)?;
    let sub: u64 = rng.random();
    let values = actions
        .par_iter()
        .enumerate()
        .map(|(i, a)| descend_q_seeded(b, a, depth, cfg, mix64(sub, i as u64), stats))
        .collect::<Result<Vec<f64>>>()?;
    Ok(values.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

pub fn descend_q<R: Rng + ?Sized>(b: &ArmBelief, x: usize, depth: usize, cfg: &TreeConfig, rng: &mut R) -> Result<f64> {
    descend_q_seeded(b, &[x], depth, cfg, rng.random(), None)
}

pub fn descend_v<R: Rng + ?Sized>(b: &ArmBelief, depth: usize, cfg: &TreeConfig, rng: &mut R) -> Result<f64> {
    descend_v_seeded(b, depth, cfg, rng.random(), None)
}

fn lexicographic_lt(a: &[usize], b: &[usize]) -> bool {
    a.cmp(b) == CmpOrdering::Less
}

fn choose_root<R: Rng + ?Sized>(
    b: &ArmBelief,
    cfg: &TreeConfig,
    candidates: Vec<Vec<usize>>,
    rng: &mut R,
    stats: Option<&TreeStats>,
) -> Result<Decision> {
    let seed: u64 = rng.random();
    let values = candidates
        .par_iter()
        .enumerate()
        .map(|(i, a)| descend_q_seeded(b, a, 0, cfg, mix64(seed, i as u64), stats))
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for i in 1..candidates.len() {
        if values[i] > values[best]
            || (values[i] == values[best] && lexicographic_lt(&candidates[i], &candidates[best]))
        {
            best = i;
        }
    }
    let arm_indices = candidates[best].clone();
    let diagnostics = candidates
        .into_iter()
        .zip(values)
        .map(|(arms, value)| CandidateValue { arms, value })
        .collect();
    Ok(Decision {
        arm_indices,
        diagnostics,
    })
}

pub fn gp_tree_step<R: Rng + ?Sized>(b: &ArmBelief, cfg: &TreeConfig, rng: &mut R) -> Result<Decision> {
    gp_tree_step_with_stats(b, cfg, rng, None)
}

/// [`gp_tree_step`] that also records node counts into `stats`.
pub fn gp_tree_step_with_stats<R: Rng + ?Sized>(
    b: &ArmBelief,
    cfg: &TreeConfig,
    rng: &mut R,
    stats: Option<&TreeStats>,
) -> Result<Decision> {
    cfg.validate()?;
    if b.untested_count() == 0 {
        return Err(Error::input("no untested arms remain"));
    }
    let cfg = TreeConfig { batch_size: 1, ..*cfg };
    let candidates = action_set(b, &cfg, rng)?;
    choose_root(b, &cfg, candidates, rng, stats)
}

pub fn batch_gp_tree_step<R: Rng + ?Sized>(b: &ArmBelief, cfg: &TreeConfig, rng: &mut R) -> Result<Decision> {
    batch_gp_tree_step_with_stats(b, cfg, rng, None)
}

pub fn batch_gp_tree_step_with_stats<R: Rng + ?Sized>(
    b: &ArmBelief,
    cfg: &TreeConfig,
    rng: &mut R,
    stats: Option<&TreeStats>,
) -> Result<Decision> {
    cfg.validate()?;
    if cfg.batch_size > b.untested_count() {
        return Err(Error::input(format!(
            "batch size {} exceeds the {} untested arms",
            cfg.batch_size,
            b.untested_count()
        )));
    }
    let cfg = TreeConfig {
        action_sampler: ActionSampler::Rank,
        ..*cfg
    };
    let candidates = action_set(b, &cfg, rng)?;
    choose_root(b, &cfg, candidates, rng, stats)
}
