mod common;

use std::fs;

use gptree_core::data::{dataset_to_csv, save_dataset};
use gptree_core::harness::emit::{records_csv, RECORDS_HEADER};
use gptree_core::harness::{
    emit_results, run_experiment, run_on_dataset, verify_results, Campaign, CampaignSpec, ExperimentConfig, Goal,
    PolicyConfig, Suggestion,
};
use gptree_core::policies::ActionSampler;
use gptree_core::PolicyKind;

fn small() -> gptree_core::Dataset {
    common::synthetic(40, 30, 12, 77)
}

#[test]
fn config_file_run_emits_verifiable_results() {
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&small(), dir.path().join("arms.csv")).unwrap();
    let cfg = r#"{
        "dataset": "arms.csv",
        "projection": {"m": 6, "seed": 3},
        "kernel": {"lengthscale": "median", "signal_variance": 0.5},
        "policies": [
            {"name": "random"},
            {"name": "gp-ucb"},
            {"name": "batch-gp-tree", "batch_size": 3, "samples": 4, "branches": 2}
        ],
        "goal": ["aregret", "sregret"],
        "horizon": 10,
        "replications": 3,
        "master_seed": 11,
        "output": "out"
    }"#;
    let path = dir.path().join("experiment.json");
    fs::write(&path, cfg).unwrap();
    let cfg = ExperimentConfig::load(&path).unwrap();
    let res = run_experiment(&cfg).unwrap();
    emit_results(&res, &cfg.output).unwrap();

    let report = verify_results(&cfg.output).unwrap();
    assert_eq!(report.rows, 3 * 2 * 3 * 10);
    assert_eq!(report.replicates, 3 * 2 * 3);
    let summary = fs::read_to_string(cfg.output.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 3 * 2 * 10);
    let echoed: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(cfg.output.join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed["digest"].as_str().unwrap().len(), 64);
    assert_eq!(echoed["config"]["horizon"], 10);
}

#[test]
fn tampered_records_fail_verification() {
    let data = small();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new("unused", vec![PolicyConfig::named(PolicyKind::GpThompson)], 8);
    cfg.replications = 2;
    let res = run_on_dataset(&cfg, &data).unwrap();
    let text = records_csv(&res).unwrap();
    assert!(text.starts_with(&RECORDS_HEADER.join(",")));
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut cols: Vec<String> = lines[4].split(',').map(str::to_string).collect();
    cols[7] = "0.123456".into();
    lines[4] = cols.join(",");
    let path = dir.path().join("records.csv");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    assert!(verify_results(&path).is_err());
}

#[test]
fn unit_batch_matches_sequential_tree() {
    let data = small();
    let tree = PolicyConfig {
        label: Some("tree".into()),
        samples: Some(5),
        branches: Some(3),
        action_sampler: Some(ActionSampler::Rank),
        ..PolicyConfig::named(PolicyKind::GpTree)
    };
    let batch = PolicyConfig {
        name: PolicyKind::BatchGpTree,
        batch_size: Some(1),
        action_sampler: None,
        ..tree.clone()
    };
    for goal in [Goal::Aregret, Goal::Sregret] {
        let mut a = ExperimentConfig::new("unused", vec![tree.clone()], 12);
        a.replications = 3;
        a.master_seed = 9;
        a.goal = gptree_core::harness::Goals(vec![goal]);
        let mut b = a.clone();
        b.policies = vec![batch.clone()];
        let ra = records_csv(&run_on_dataset(&a, &data).unwrap()).unwrap();
        let rb = records_csv(&run_on_dataset(&b, &data).unwrap()).unwrap();
        assert_eq!(ra, rb, "{goal:?}");
    }
}

#[test]
fn identical_campaigns_suggest_identically_and_survive_reopen() {
    let data = small();
    let csv = dataset_to_csv(&data);
    let root = tempfile::tempdir().unwrap();
    let mut spec = CampaignSpec::new(PolicyKind::BatchGpTree);
    spec.policy.batch_size = Some(2);
    spec.policy.samples = Some(4);
    spec.seed = 5;
    spec.budget = Some(8);
    let mut a = Campaign::create(root.path().join("a"), spec.clone(), &csv).unwrap();
    let mut b = Campaign::create(root.path().join("b"), spec, &csv).unwrap();
    let mut steps = 0;
    loop {
        let (sa, sb) = (a.suggest().unwrap(), b.suggest().unwrap());
        assert_eq!(sa, sb);
        let Suggestion::Active { arms, .. } = sa else { break };
        for arm in arms {
            let y = data.targets[data.index_of(&arm.arm_id).unwrap()];
            a.observe(&arm.arm_id, y).unwrap();
            b.observe(&arm.arm_id, y).unwrap();
        }
        steps += 1;
    }
    assert_eq!(steps, 4);
    assert_eq!(a.observations().len(), 8);

    let reopened = Campaign::open(root.path().join("a")).unwrap();
    let before = a.posterior(&[]).unwrap();
    let after = reopened.posterior(&[]).unwrap();
    for (x, y) in before.iter().zip(&after) {
        assert_eq!(x.arm_id, y.arm_id);
        assert!((x.mean - y.mean).abs() <= 1e-10);
        assert!((x.std - y.std).abs() <= 1e-10);
    }
    assert_eq!(reopened.status(), a.status());
    assert_eq!(reopened.suggest().unwrap(), Suggestion::Complete);
}

fn keys(v: &serde_json::Value) -> Vec<String> {
    let mut k: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
    k.sort();
    k
}

#[test]
fn schemas_cover_every_field() {
    let exp: serde_json::Value =
        serde_json::from_str(include_str!("../../../schema/experiment-config.schema.json")).unwrap();
    let camp: serde_json::Value =
        serde_json::from_str(include_str!("../../../schema/campaign-spec.schema.json")).unwrap();
    let policy = PolicyConfig {
        label: Some("x".into()),
        h: Some(1),
        branches: Some(1),
        samples: Some(1),
        batch_size: Some(1),
        delta: Some(0.5),
        fantasy_noise: Some(true),
        action_sampler: Some(ActionSampler::Rank),
        r: Some(1.0),
        ..PolicyConfig::named(PolicyKind::GpTree)
    };
    let cfg = ExperimentConfig::new("d.csv", vec![policy.clone()], 3);
    assert_eq!(keys(&serde_json::to_value(&cfg).unwrap()), keys(&exp["properties"]));
    assert_eq!(
        keys(&serde_json::to_value(&policy).unwrap()),
        keys(&exp["$defs"]["policy"]["properties"])
    );
    let names: Vec<String> = PolicyKind::ALL.iter().map(|k| k.name().to_string()).collect();
    assert_eq!(
        serde_json::to_value(names).unwrap(),
        exp["$defs"]["policy"]["properties"]["name"]["enum"]
    );
    let spec = CampaignSpec::new(PolicyKind::Random);
    assert_eq!(keys(&serde_json::to_value(&spec).unwrap()), keys(&camp["properties"]));

    let toy = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/toy.json");
    let loaded = ExperimentConfig::load(toy).unwrap();
    assert_eq!(loaded.policies.len(), 6);
}
