//! Regret accounting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for floating-point noise when checking `r* − r ≥ 0`.
pub const REGRET_SLACK: f64 = 1e-12;

/// One tested molecule within one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// 1-based count of molecules tested so far, including this one.
    pub t: usize,
    pub arm_id: String,
    pub y_observed: f64,
    pub r_star: f64,
    pub iregret: f64,
    pub running_aregret: f64,
    pub best_so_far: f64,
}

impl RunRecord {
    pub fn simple_regret(&self) -> f64 {
        self.r_star - self.best_so_far
    }
}

pub fn instantaneous_regret(r_star: f64, r: f64) -> f64 {
    r_star - r
}

/// Mean instantaneous regret over the first `horizon` records.
pub fn average_regret(records: &[RunRecord], horizon: usize) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::input("average regret of an empty run"));
    }
    if records.len() != horizon {
        return Err(Error::input(format!(
            "run has {} records but horizon is {horizon}",
            records.len()
        )));
    }
    Ok(records.iter().map(|r| r.iregret).sum::<f64>() / horizon as f64)
}

/// `r* − max_t r_t`, i.e. the smallest instantaneous regret in the run.
pub fn simple_regret(records: &[RunRecord]) -> Result<f64> {
    records
        .iter()
        .map(|r| r.iregret)
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::input("simple regret of an empty run"))
}

/// Accumulates [`RunRecord`]s for one replicate, maintaining the running statistics.
#[derive(Debug, Clone)]
pub struct RegretTracker {
    r_star: f64,
    sum: f64,
    best: f64,
    records: Vec<RunRecord>,
}

impl RegretTracker {
    pub fn new(r_star: f64) -> Self {
        Self {
            r_star,
            sum: 0.0,
            best: f64::NEG_INFINITY,
            records: Vec::new(),
        }
    }

    /// Records a test of `arm_id` whose true reward is `reward`.
    ///
    /// Fails with a data error when the reward exceeds `r*`, which means the
    /// dataset maximum was computed from different data.
    pub fn push(&mut self, arm_id: &str, y_observed: f64, reward: f64) -> Result<&RunRecord> {
        let iregret = instantaneous_regret(self.r_star, reward);
        if iregret < -REGRET_SLACK {
            return Err(Error::data(format!(
                "reward {reward} of '{arm_id}' exceeds the dataset maximum {}",
                self.r_star
            )));
        }
        let iregret = iregret.max(0.0);
        self.sum += iregret;
        self.best = self.best.max(reward);
        let t = self.records.len() + 1;
        self.records.push(RunRecord {
            t,
            arm_id: arm_id.to_string(),
            y_observed,
            r_star: self.r_star,
            iregret,
            running_aregret: self.sum / t as f64,
            best_so_far: self.best,
        });
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn records(&self) -> &[RunRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<RunRecord> {
        self.records
    }
}

/// Checks the row-level invariants of a replicate's records.
pub fn check_records(records: &[RunRecord]) -> Result<()> {
    let mut sum = 0.0;
    let mut best = f64::NEG_INFINITY;
    for (i, r) in records.iter().enumerate() {
        let ctx = |what: &str| Error::data(format!("record t={} ({}): {what}", r.t, r.arm_id));
        if r.t != i + 1 {
            return Err(ctx("steps are not consecutive"));
        }
        if r.iregret < 0.0 || r.running_aregret < 0.0 {
            return Err(ctx("negative regret"));
        }
        sum += r.iregret;
        if (r.running_aregret - sum / r.t as f64).abs() > 1e-9 * (1.0 + sum.abs()) {
            return Err(ctx("average regret inconsistent with instantaneous regrets"));
        }
        if r.best_so_far < best {
            return Err(ctx("best-so-far decreased"));
        }
        best = r.best_so_far;
        if r.simple_regret() > r.running_aregret + 1e-9 {
            return Err(ctx("simple regret exceeds average regret"));
        }
    }
    Ok(())
}
