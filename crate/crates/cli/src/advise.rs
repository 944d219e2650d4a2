use std::path::PathBuf;

use clap::Subcommand;
use gptree_core::harness::{Campaign, CampaignSpec, Goal, Lengthscale, Observation, ProjectionConfig};
use gptree_core::policies::ActionSampler;
use gptree_core::{Error, PolicyKind, Result};
use serde::Serialize;

#[derive(Subcommand)]
pub enum Action {
    /// Create a campaign directory from a candidate CSV.
    Init {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        /// Campaign spec as JSON; the flags below are ignored when given.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value = "gp-tree")]
        policy: PolicyKind,
        #[arg(long, value_enum, default_value = "aregret")]
        goal: GoalArg,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        branches: Option<usize>,
        #[arg(long)]
        h: Option<usize>,
        #[arg(long, value_enum)]
        action_sampler: Option<SamplerArg>,
        #[arg(long, default_value = "median", value_parser = crate::parse_lengthscale)]
        lengthscale: Lengthscale,
        #[arg(long, default_value_t = 1.0)]
        signal_variance: f64,
        #[arg(long, default_value_t = 0.1)]
        noise_variance: f64,
        #[arg(long)]
        prior_mean: Option<f64>,
        /// Project standardized features to this many dimensions.
        #[arg(long)]
        project: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Print the next molecules to test.
    Suggest {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Record assay results, given as ARM=Y pairs.
    Observe {
        #[arg(long)]
        dir: PathBuf,
        #[arg(required = true, value_parser = parse_observation)]
        results: Vec<Observation>,
    },
    /// Print campaign progress.
    Status {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Print posterior mean and std, for all arms or a comma-separated list.
    Posterior {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, value_delimiter = ',')]
        arms: Vec<String>,
    },
    /// Print the suggestion that would follow hypothetical ARM=Y results.
    Whatif {
        #[arg(long)]
        dir: PathBuf,
        #[arg(required = true, value_parser = parse_observation)]
        results: Vec<Observation>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
pub enum GoalArg {
    Aregret,
    Sregret,
}

#[derive(Clone, Copy, clap::ValueEnum)]
pub enum SamplerArg {
    Independent,
    Rank,
}

fn parse_observation(s: &str) -> std::result::Result<Observation, String> {
    let (arm, y) = s
        .rsplit_once('=')
        .ok_or_else(|| format!("expected ARM=Y, got \"{s}\""))?;
    let y: f64 = y.parse().map_err(|_| format!("\"{y}\" is not a number"))?;
    if arm.is_empty() || !y.is_finite() {
        return Err(format!("expected ARM=Y with a finite Y, got \"{s}\""));
    }
    Ok(Observation {
        arm_id: arm.to_string(),
        y,
    })
}

fn print<T: Serialize>(value: &T) -> Result<()> {
    println!(
        "{}",
        serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?
    );
    Ok(())
}

pub fn run(action: Action) -> Result<()> {
    match action {
        Action::Init {
            dir,
            candidates,
            spec,
            policy,
            goal,
            batch_size,
            samples,
            branches,
            h,
            action_sampler,
            lengthscale,
            signal_variance,
            noise_variance,
            prior_mean,
            project,
            seed,
            budget,
        } => {
            let spec = match spec {
                Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
                None => {
                    let mut s = CampaignSpec::new(policy);
                    s.goal = match goal {
                        GoalArg::Aregret => Goal::Aregret,
                        GoalArg::Sregret => Goal::Sregret,
                    };
                    s.policy.batch_size = batch_size;
                    s.policy.samples = samples;
                    s.policy.branches = branches;
                    s.policy.h = h;
                    s.policy.action_sampler = action_sampler.map(|a| match a {
                        SamplerArg::Independent => ActionSampler::Independent,
                        SamplerArg::Rank => ActionSampler::Rank,
                    });
                    s.kernel.lengthscale = lengthscale;
                    s.kernel.signal_variance = signal_variance;
                    s.noise_variance = noise_variance;
                    s.prior_mean = prior_mean;
                    s.projection = project.map(|m| ProjectionConfig { m, seed });
                    s.seed = seed;
                    s.budget = budget;
                    s
                }
            };
            let csv = std::fs::read_to_string(&candidates)?;
            let c = Campaign::create(&dir, spec, &csv)?;
            print(&c.status())
        }
        Action::Suggest { dir } => print(&Campaign::open(dir)?.suggest()?),
        Action::Observe { dir, results } => {
            let mut c = Campaign::open(dir)?;
            for o in results {
                c.observe(&o.arm_id, o.y)?;
            }
            print(&c.status())
        }
        Action::Status { dir } => print(&Campaign::open(dir)?.status()),
        Action::Posterior { dir, arms } => print(&Campaign::open(dir)?.posterior(&arms)?),
        Action::Whatif { dir, results } => print(&Campaign::open(dir)?.whatif(&results)?),
    }
}
