use std::fs;
use std::path::Path;

use serde::Serialize;

use super::run::{ResolvedInputs, RunResult};
use crate::error::{Error, Result};

pub const RECORDS_FILE: &str = "records.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CONFIG_FILE: &str = "config.json";

pub const RECORDS_HEADER: [&str; 9] = [
    "policy",
    "goal",
    "rep",
    "t",
    "arm_id",
    "y",
    "iregret",
    "avg_regret",
    "simple_regret",
];

pub const SUMMARY_HEADER: [&str; 7] = [
    "policy",
    "goal",
    "t",
    "mean_avg_regret",
    "se_avg_regret",
    "mean_simple_regret",
    "se_simple_regret",
];

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn records_csv(res: &RunResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RECORDS_HEADER)?;
    for run in &res.runs {
        for (rep, records) in run.replicates.iter().enumerate() {
            for r in records {
                w.write_record([
                    run.policy.clone(),
                    run.goal.name().to_string(),
                    rep.to_string(),
                    r.t.to_string(),
                    r.arm_id.clone(),
                    r.y_observed.to_string(),
                    r.iregret.to_string(),
                    r.running_aregret.to_string(),
                    r.simple_regret().to_string(),
                ])?;
            }
        }
    }
    finish(w)
}

pub fn summary_csv(res: &RunResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER)?;
    for run in &res.runs {
        for s in &run.summary {
            w.write_record([
                run.policy.clone(),
                run.goal.name().to_string(),
                s.t.to_string(),
                s.mean_avg_regret.to_string(),
                s.se_avg_regret.to_string(),
                s.mean_simple_regret.to_string(),
                s.se_simple_regret.to_string(),
            ])?;
        }
    }
    finish(w)
}

#[derive(Serialize)]
struct ConfigEcho<'a> {
    digest: &'a str,
    config: &'a super::config::ExperimentConfig,
    resolved: &'a ResolvedInputs,
}

pub fn config_json(res: &RunResult) -> Result<String> {
    let echo = ConfigEcho {
        digest: &res.digest,
        config: &res.config,
        resolved: &res.resolved,
    };
    let mut s = serde_json::to_string_pretty(&echo)?;
    s.push('\n');
    Ok(s)
}

/// Writes `records.csv`, `summary.csv` and `config.json` into `dir`.
pub fn emit_results(res: &RunResult, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join(RECORDS_FILE), records_csv(res)?)?;
    fs::write(dir.join(SUMMARY_FILE), summary_csv(res)?)?;
    fs::write(dir.join(CONFIG_FILE), config_json(res)?)?;
    Ok(())
}
