//! Gaussian-process bandits with sparse lookahead trees for drug screening.
//!
//! Each candidate molecule is an arm with a feature vector and an unknown
//! reward (−log IC50). Policies pick molecules to test under a budget `T`,
//! keeping a GP belief over the reward function.
//!
//! - [`gp`] and [`arms`]: exact GP regression with incremental conditioning and
//!   joint posterior sampling over a fixed candidate set.
//! - [`policies`]: GP-Thompson, GP-UCB, random, Lin-TS adapters and the
//!   sequential and batch lookahead trees.
//! - [`harness`]: replicated experiments, result files and live campaigns.

pub mod arms;
pub mod data;
pub mod error;
pub mod gp;
pub mod harness;
pub mod linalg;
pub mod linear_ts;
pub mod metrics;
pub mod policies;
pub mod projection;
pub mod rng;

pub use arms::{ArmBelief, ArmSet};
pub use data::{Dataset, Provenance};
pub use error::{Error, Result};
pub use gp::{GpBelief, KernelSpec};
pub use policies::{Decision, Policy, PolicyKind, RewardMode, TreeConfig};
