//! Experiment orchestration and live campaigns.

pub mod campaign;
pub mod config;
pub mod emit;
pub mod run;
pub mod verify;

pub use campaign::{Campaign, CampaignSpec, CampaignState, CampaignStatus, Observation, PosteriorEntry, Suggestion};
pub use config::{ExperimentConfig, Goal, Goals, KernelConfig, Lengthscale, PolicyConfig, ProjectionConfig};
pub use emit::emit_results;
pub use run::{run_experiment, run_on_dataset, PolicyRun, RunResult, SummaryRow};
pub use verify::{verify_records_text, verify_results, VerifyReport};
