//! Live screening campaigns: suggest, observe, repeat.
//!
//! A persisted campaign is a directory holding `campaign.json` (the spec),
//! `candidates.csv` (the candidate table as uploaded) and `observations.log`
//! (one JSON object per line, append-only). Opening a campaign replays the
//! log, so the belief is a deterministic function of the three files.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::{prepare_arms, Goal, KernelConfig, PolicyConfig, ProjectionConfig, DEFAULT_NOISE_VARIANCE};
use crate::arms::{ArmBelief, ArmSet};
use crate::data::{parse_candidates, CandidateTable};
use crate::error::{Error, Result};
use crate::policies::{PolicyKind, Selector};
use crate::rng::{mix64, stream};

pub const SPEC_FILE: &str = "campaign.json";
pub const CANDIDATES_FILE: &str = "candidates.csv";
pub const LOG_FILE: &str = "observations.log";

fn default_goal() -> Goal {
    Goal::Aregret
}

fn default_noise() -> f64 {
    DEFAULT_NOISE_VARIANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSpec {
    pub policy: PolicyConfig,
    #[serde(default = "default_goal")]
    pub goal: Goal,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default = "default_noise")]
    pub noise_variance: f64,
    /// Constant GP prior mean; the first observed value when absent.
    #[serde(default)]
    pub prior_mean: Option<f64>,
    #[serde(default)]
    pub projection: Option<ProjectionConfig>,
    #[serde(default)]
    pub seed: u64,
    /// Maximum number of molecules to test; all candidates when absent.
    #[serde(default)]
    pub budget: Option<usize>,
}

impl CampaignSpec {
    pub fn new(policy: PolicyKind) -> Self {
        Self {
            policy: PolicyConfig::named(policy),
            goal: Goal::Aregret,
            kernel: KernelConfig::default(),
            noise_variance: DEFAULT_NOISE_VARIANCE,
            prior_mean: None,
            projection: None,
            seed: 0,
            budget: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::config("noise_variance must be non-negative"));
        }
        if self.budget == Some(0) {
            return Err(Error::config("budget must be at least 1"));
        }
        if self.prior_mean.is_some_and(|m| !m.is_finite()) {
            return Err(Error::config("prior_mean must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub arm_id: String,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestedArm {
    pub arm_id: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub arm_ids: Vec<String>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Suggestion {
    Active {
        /// 1-based index of the first molecule of this suggestion.
        step: usize,
        arms: Vec<SuggestedArm>,
        diagnostics: Vec<CandidateScore>,
    },
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CampaignState {
    Active,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretSoFar {
    pub r_star: f64,
    pub average: f64,
    pub simple: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignStatus {
    pub status: CampaignState,
    pub policy: String,
    pub goal: Goal,
    pub candidates: usize,
    pub observed: usize,
    pub budget: usize,
    pub best: Option<Observation>,
    /// Present when the candidate file carries true targets.
    pub regret: Option<RegretSoFar>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorEntry {
    pub arm_id: String,
    pub mean: f64,
    pub std: f64,
    pub observed: bool,
}

#[derive(Debug, Clone)]
pub struct Campaign {
    spec: CampaignSpec,
    table: Arc<CandidateTable>,
    index: Arc<HashMap<String, usize>>,
    arms: Arc<ArmSet>,
    belief: ArmBelief,
    selector: Selector,
    observations: Vec<Observation>,
    dir: Option<PathBuf>,
}

fn reward_scale(table: &CandidateTable) -> f64 {
    let range = table.y_range.or_else(|| {
        table.targets.as_ref().map(|t| {
            let lo = t.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        })
    });
    match range {
        Some((lo, hi)) if hi > lo => 0.5 * (hi - lo),
        _ => 1.0,
    }
}

impl Campaign {
    /// An in-memory campaign with no observations.
    pub fn new(spec: CampaignSpec, table: CandidateTable) -> Result<Self> {
        spec.validate()?;
        let prepared = prepare_arms(&table.features, spec.projection.as_ref(), &spec.kernel)?;
        let index = table.ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        let mut c = Self {
            belief: ArmBelief::new(prepared.arms.clone(), spec.noise_variance, 0.0)?,
            selector: Selector::new(
                PolicyConfig::named(PolicyKind::Random).resolve(spec.goal, 1.0)?,
                1,
                2,
                0.0,
            )?,
            spec,
            table: Arc::new(table),
            index: Arc::new(index),
            arms: prepared.arms,
            observations: Vec::new(),
            dir: None,
        };
        c.rebuild()?;
        Ok(c)
    }

    /// Creates a persisted campaign in `dir` from candidate CSV text.
    pub fn create(dir: impl AsRef<Path>, spec: CampaignSpec, candidates_csv: &str) -> Result<Self> {
        let dir = dir.as_ref();
        if dir.join(SPEC_FILE).exists() {
            return Err(Error::Conflict(format!(
                "a campaign already exists in {}",
                dir.display()
            )));
        }
        let table = parse_candidates(candidates_csv, "candidates")?;
        let mut c = Self::new(spec, table)?;
        fs::create_dir_all(dir)?;
        fs::write(dir.join(CANDIDATES_FILE), candidates_csv)?;
        fs::write(dir.join(LOG_FILE), "")?;
        fs::write(dir.join(SPEC_FILE), serde_json::to_string_pretty(&c.spec)? + "\n")?;
        c.dir = Some(dir.to_path_buf());
        Ok(c)
    }

    /// Loads a persisted campaign and replays its observation log.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let spec_path = dir.join(SPEC_FILE);
        if !spec_path.exists() {
            return Err(Error::NotFound(format!("no campaign initialized in {}", dir.display())));
        }
        let spec: CampaignSpec = serde_json::from_str(&fs::read_to_string(&spec_path)?)?;
        let table = parse_candidates(&fs::read_to_string(dir.join(CANDIDATES_FILE))?, "candidates")?;
        let mut c = Self::new(spec, table)?;
        let log = fs::read_to_string(dir.join(LOG_FILE))?;
        for (i, line) in log.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let obs: Observation =
                serde_json::from_str(line).map_err(|e| Error::data(format!("{LOG_FILE} line {}: {e}", i + 1)))?;
            c.apply(obs)?;
        }
        c.dir = Some(dir.to_path_buf());
        Ok(c)
    }

    pub fn spec(&self) -> &CampaignSpec {
        &self.spec
    }

    pub fn table(&self) -> &CandidateTable {
        &self.table
    }

    pub fn belief(&self) -> &ArmBelief {
        &self.belief
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn budget(&self) -> usize {
        self.spec
            .budget
            .unwrap_or(self.table.ids.len())
            .min(self.table.ids.len())
    }

    fn prior_mean(&self) -> f64 {
        self.spec
            .prior_mean
            .or_else(|| self.observations.first().map(|o| o.y))
            .unwrap_or(0.0)
    }

    /// Rebuilds belief and policy state from the observation list.
    fn rebuild(&mut self) -> Result<()> {
        let prior_mean = self.prior_mean();
        let policy = self.spec.policy.resolve(self.spec.goal, reward_scale(&self.table))?;
        let mut selector = Selector::new(policy, self.arms.dim(), self.budget(), prior_mean)?;
        let mut belief = ArmBelief::new(self.arms.clone(), self.spec.noise_variance, prior_mean)?;
        for o in &self.observations {
            let a = self.index[&o.arm_id];
            selector.observe(&belief, &[a], &[o.y])?;
            belief = belief.condition(a, o.y)?;
        }
        self.belief = belief;
        self.selector = selector;
        Ok(())
    }

    pub fn arm_index(&self, arm_id: &str) -> Result<usize> {
        self.index
            .get(arm_id)
            .copied()
            .ok_or_else(|| Error::NotFound(format!("unknown arm id '{arm_id}'")))
    }

    fn apply(&mut self, obs: Observation) -> Result<()> {
        let a = self.arm_index(&obs.arm_id)?;
        if !obs.y.is_finite() {
            return Err(Error::input(format!(
                "observed value for '{}' is not finite",
                obs.arm_id
            )));
        }
        if self.belief.is_tested(a) {
            return Err(Error::Conflict(format!(
                "arm '{}' has already been observed",
                obs.arm_id
            )));
        }
        let first_sets_prior = self.observations.is_empty() && self.spec.prior_mean.is_none();
        self.observations.push(obs);
        let y = self.observations.last().expect("just pushed").y;
        let result = if first_sets_prior {
            self.rebuild()
        } else {
            self.selector
                .observe(&self.belief, &[a], &[y])
                .and_then(|_| self.belief.condition(a, y))
                .map(|b| self.belief = b)
        };
        if result.is_err() {
            self.observations.pop();
            self.rebuild()?;
        }
        result
    }

    /// Conditions on an assay result and appends it to the log.
    pub fn observe(&mut self, arm_id: &str, y: f64) -> Result<()> {
        let mut next = self.clone();
        next.apply(Observation {
            arm_id: arm_id.to_string(),
            y,
        })?;
        if let Some(dir) = &self.dir {
            let line = serde_json::to_string(next.observations.last().expect("just applied"))?;
            let mut f = OpenOptions::new().append(true).open(dir.join(LOG_FILE))?;
            writeln!(f, "{line}")?;
            f.sync_data()?;
        }
        *self = next;
        Ok(())
    }

    pub fn is_complete(&self) -> bool {
        self.observations.len() >= self.budget() || self.belief.untested_count() == 0
    }

    /// The next molecules to test; read-only.
    pub fn suggest(&self) -> Result<Suggestion> {
        if self.is_complete() {
            return Ok(Suggestion::Complete);
        }
        let n = self.observations.len();
        let mut rng = stream(mix64(self.spec.seed, n as u64));
        let remaining = self.budget() - n;
        let decision = self.selector.select(&self.belief, n + 1, remaining, &mut rng)?;
        let arms = decision
            .arm_indices
            .iter()
            .take(remaining)
            .map(|&a| {
                let (mean, var) = self.belief.marginal(a);
                SuggestedArm {
                    arm_id: self.table.ids[a].clone(),
                    mean,
                    std: var.sqrt(),
                }
            })
            .collect();
        let diagnostics = decision
            .diagnostics
            .into_iter()
            .map(|c| CandidateScore {
                arm_ids: c.arms.iter().map(|&a| self.table.ids[a].clone()).collect(),
                value: c.value,
            })
            .collect();
        Ok(Suggestion::Active {
            step: n + 1,
            arms,
            diagnostics,
        })
    }

    /// Suggestion after hypothetical observations, leaving `self` untouched.
    pub fn whatif(&self, hypothetical: &[Observation]) -> Result<Suggestion> {
        let mut scratch = self.clone();
        scratch.dir = None;
        for o in hypothetical {
            scratch.apply(o.clone())?;
        }
        scratch.suggest()
    }

    /// Posterior mean and std at the requested arms (all arms when empty).
    pub fn posterior(&self, arm_ids: &[String]) -> Result<Vec<PosteriorEntry>> {
        let arms: Vec<usize> = if arm_ids.is_empty() {
            (0..self.table.ids.len()).collect()
        } else {
            arm_ids.iter().map(|id| self.arm_index(id)).collect::<Result<_>>()?
        };
        Ok(self
            .belief
            .marginals(&arms)
            .into_iter()
            .zip(&arms)
            .map(|((mean, var), &a)| PosteriorEntry {
                arm_id: self.table.ids[a].clone(),
                mean,
                std: var.sqrt(),
                observed: self.belief.is_tested(a),
            })
            .collect())
    }

    pub fn status(&self) -> CampaignStatus {
        let best = self
            .observations
            .iter()
            .fold(None::<&Observation>, |b, o| match b {
                Some(b) if b.y >= o.y => Some(b),
                _ => Some(o),
            })
            .cloned();
        let regret = self
            .table
            .targets
            .as_ref()
            .filter(|_| !self.observations.is_empty())
            .map(|t| {
                let r_star = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let rewards: Vec<f64> = self.observations.iter().map(|o| t[self.index[&o.arm_id]]).collect();
                let sum: f64 = rewards.iter().map(|r| r_star - r).sum();
                let best = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                RegretSoFar {
                    r_star,
                    average: sum / rewards.len() as f64,
                    simple: r_star - best,
                }
            });
        CampaignStatus {
            status: if self.is_complete() {
                CampaignState::Complete
            } else {
                CampaignState::Active
            },
            policy: self.spec.policy.label().to_string(),
            goal: self.spec.goal,
            candidates: self.table.ids.len(),
            observed: self.observations.len(),
            budget: self.budget(),
            best,
            regret,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_text(n: usize, with_y: bool) -> String {
        let mut s = String::from("id,y,f1,f2\n");
        for i in 0..n {
            let y = if with_y {
                format!("{}", 5.0 + (i as f64 * 0.7).sin())
            } else {
                String::new()
            };
            s.push_str(&format!("m{i},{y},{},{}\n", i as f64 * 0.3, (i % 3) as f64));
        }
        s
    }

    fn spec(kind: PolicyKind) -> CampaignSpec {
        let mut s = CampaignSpec::new(kind);
        s.policy.samples = Some(4);
        s.seed = 9;
        s
    }

    fn ids(s: &Suggestion) -> Vec<String> {
        match s {
            Suggestion::Active { arms, .. } => arms.iter().map(|a| a.arm_id.clone()).collect(),
            Suggestion::Complete => vec![],
        }
    }

    #[test]
    fn suggest_observe_loop_never_repeats_and_completes() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = Campaign::create(dir.path(), spec(PolicyKind::GpTree), &csv_text(6, false)).unwrap();
        let mut seen = Vec::new();
        for _ in 0..6 {
            let s = c.suggest().unwrap();
            assert_eq!(c.suggest().unwrap(), s);
            for id in ids(&s) {
                assert!(!seen.contains(&id));
                c.observe(&id, 1.0 + seen.len() as f64).unwrap();
                seen.push(id);
            }
        }
        assert_eq!(c.suggest().unwrap(), Suggestion::Complete);
        assert_eq!(c.status().status, CampaignState::Complete);
    }

    #[test]
    fn replay_reconstructs_posterior() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = Campaign::create(dir.path(), spec(PolicyKind::LinTs), &csv_text(10, true)).unwrap();
        for (id, y) in [("m3", 5.5), ("m7", 4.2), ("m0", 6.1)] {
            c.observe(id, y).unwrap();
        }
        let reopened = Campaign::open(dir.path()).unwrap();
        let a = c.posterior(&[]).unwrap();
        let b = reopened.posterior(&[]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.mean - y.mean).abs() <= 1e-10 && (x.std - y.std).abs() <= 1e-10);
        }
        assert_eq!(c.suggest().unwrap(), reopened.suggest().unwrap());
        assert!(c.status().regret.is_some());
    }

    #[test]
    fn observe_errors() {
        let mut c = Campaign::new(
            spec(PolicyKind::GpThompson),
            parse_candidates(&csv_text(4, false), "c").unwrap(),
        )
        .unwrap();
        assert!(matches!(c.observe("nope", 1.0), Err(Error::NotFound(_))));
        c.observe("m1", 1.0).unwrap();
        assert!(matches!(c.observe("m1", 2.0), Err(Error::Conflict(_))));
        assert!(matches!(c.observe("m2", f64::NAN), Err(Error::Input(_))));
        assert_eq!(c.observations().len(), 1);
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(Campaign::open(dir.path()), Err(Error::NotFound(_))));
    }

    #[test]
    fn whatif_is_isolated() {
        let mut c = Campaign::new(
            spec(PolicyKind::GpUcb),
            parse_candidates(&csv_text(8, false), "c").unwrap(),
        )
        .unwrap();
        c.observe("m2", 3.0).unwrap();
        let before = c.suggest().unwrap();
        let next = ids(&before)[0].clone();
        let w = c
            .whatif(&[Observation {
                arm_id: next.clone(),
                y: 10.0,
            }])
            .unwrap();
        assert!(!ids(&w).contains(&next));
        assert_eq!(c.suggest().unwrap(), before);
        assert_eq!(c.observations().len(), 1);
    }

    #[test]
    fn observation_moves_posterior() {
        let mut s = spec(PolicyKind::Random);
        s.prior_mean = Some(0.0);
        let mut c = Campaign::new(s, parse_candidates(&csv_text(5, false), "c").unwrap()).unwrap();
        let before = &c.posterior(&["m2".to_string()]).unwrap()[0];
        let (m0, s0) = (before.mean, before.std);
        c.observe("m2", 3.0).unwrap();
        let after = &c.posterior(&["m2".to_string()]).unwrap()[0];
        assert!((after.mean - 3.0).abs() < (m0 - 3.0).abs());
        assert!(after.std < s0);
        assert!(after.observed);
    }

    #[test]
    fn batch_suggestions_respect_budget() {
        let mut s = spec(PolicyKind::BatchGpTree);
        s.policy.batch_size = Some(3);
        s.budget = Some(4);
        let mut c = Campaign::new(s, parse_candidates(&csv_text(10, false), "c").unwrap()).unwrap();
        let first = ids(&c.suggest().unwrap());
        assert_eq!(first.len(), 3);
        for id in &first {
            c.observe(id, 1.0).unwrap();
        }
        assert_eq!(ids(&c.suggest().unwrap()).len(), 1);
    }
}
