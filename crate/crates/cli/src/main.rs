//! `gptree`: run screening experiments, prepare datasets and drive live campaigns.

mod advise;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gptree_core::data::{load_any, median_pairwise_distance, save_dataset, Standardizer};
use gptree_core::harness::{emit_results, run_experiment, verify_results, ExperimentConfig, Lengthscale};
use gptree_core::projection::build_projection;
use gptree_core::{Error, KernelSpec};

#[derive(Parser)]
#[command(
    name = "gptree",
    version,
    about = "Gaussian-process bandit policies for drug screening"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write records.csv, summary.csv and config.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Sample a synthetic dataset from a GP fitted to a source dataset.
    Synth {
        /// Dataset CSV, or descriptor text (.tsv/.txt/.desc).
        #[arg(long)]
        source: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// A number or "median" (median pairwise distance of standardized source features).
        #[arg(long, default_value = "median", value_parser = parse_lengthscale)]
        lengthscale: Lengthscale,
        #[arg(long, default_value_t = 1.0)]
        signal_variance: f64,
        #[arg(long, default_value_t = 0.1)]
        noise_variance: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a Gaussian random projection to a dataset's features.
    Project {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 128)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-check the regret invariants of a result directory or records.csv.
    Verify { path: PathBuf },
    /// Start the HTTP advisor.
    Serve {
        #[arg(long, env = "GPTREE_ADDR", default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Directory holding one subdirectory per campaign.
        #[arg(long, env = "GPTREE_STORE", default_value = "campaigns")]
        store: PathBuf,
        /// Built UI bundle served for paths outside the API.
        #[arg(long, env = "GPTREE_STATIC")]
        static_dir: Option<PathBuf>,
    },
    /// Drive a campaign directory from the terminal.
    Advise {
        #[command(subcommand)]
        action: advise::Action,
    },
}

pub(crate) fn parse_lengthscale(s: &str) -> Result<Lengthscale, String> {
    if s == "median" {
        return Ok(Lengthscale::Median);
    }
    s.parse::<f64>()
        .map(Lengthscale::Fixed)
        .map_err(|_| format!("expected a number or \"median\", got \"{s}\""))
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Input(_) | Error::NotFound(_) | Error::Conflict(_) => 2,
        Error::Data(_) | Error::Io(_) => 3,
        Error::Numerical(_) => 4,
    }
}

fn run(cli: Cli) -> gptree_core::Result<()> {
    match cli.command {
        Command::Run { config, output } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(out) = output {
                cfg.output = out;
            }
            let res = run_experiment(&cfg)?;
            emit_results(&res, &cfg.output)?;
            println!(
                "{:<24} {:<8} {:>14} {:>14}",
                "policy", "goal", "avg_regret", "simple_regret"
            );
            for r in &res.runs {
                let last = r.summary.last().expect("horizon is at least 1");
                println!(
                    "{:<24} {:<8} {:>7.4}±{:<6.4} {:>7.4}±{:<6.4}",
                    r.policy,
                    r.goal.name(),
                    last.mean_avg_regret,
                    last.se_avg_regret,
                    last.mean_simple_regret,
                    last.se_simple_regret
                );
            }
            println!("results written to {}", cfg.output.display());
        }
        Command::Synth {
            source,
            n,
            seed,
            lengthscale,
            signal_variance,
            noise_variance,
            out,
        } => {
            let src = load_any(&source)?;
            let l = match lengthscale {
                Lengthscale::Fixed(l) => l,
                Lengthscale::Median => {
                    median_pairwise_distance(&Standardizer::fit(&src.features).apply_all(&src.features))
                }
            };
            let kernel = KernelSpec::rbf(l, signal_variance).map_err(|e| Error::Config(e.to_string()))?;
            let data = gptree_core::data::generate_synthetic(&src, n, seed, kernel, noise_variance)?;
            save_dataset(&data, &out)?;
            eprintln!(
                "wrote {} synthetic molecules (lengthscale {l:.4}) to {}",
                data.len(),
                out.display()
            );
        }
        Command::Project { input, m, seed, out } => {
            let data = load_any(&input)?;
            let p = build_projection(data.dim(), m, seed).map_err(|e| Error::Config(e.to_string()))?;
            save_dataset(&p.project_dataset(&data)?, &out)?;
            eprintln!(
                "projected {} molecules from {} to {m} dimensions",
                data.len(),
                data.dim()
            );
        }
        Command::Verify { path } => {
            let report = verify_results(&path)?;
            println!("ok: {} rows in {} replicates", report.rows, report.replicates);
        }
        Command::Serve {
            addr,
            store,
            static_dir,
        } => {
            let cfg = gptree_service::ServiceConfig { store, static_dir };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(gptree_service::serve(addr, cfg))?;
        }
        Command::Advise { action } => advise::run(action)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_kinds_map_to_exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Input("x".into())), 2);
        assert_eq!(exit_code(&Error::Data("x".into())), 3);
        assert_eq!(exit_code(&Error::Io(std::io::Error::other("x"))), 3);
        assert_eq!(exit_code(&Error::Numerical("x".into())), 4);
    }

    #[test]
    fn lengthscale_argument() {
        assert_eq!(parse_lengthscale("median"), Ok(Lengthscale::Median));
        assert_eq!(parse_lengthscale("2.5"), Ok(Lengthscale::Fixed(2.5)));
        assert!(parse_lengthscale("wide").is_err());
    }
}
