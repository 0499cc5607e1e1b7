mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use fairmc::checker::{max_pairwise_diff, reach_prob_matrix, ReachQuery};
use fairmc::cli::chain_to_dot;
use fairmc::learner::{LabeledChain, StateTag};
use fairmc::model::load_network;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn fairmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairmc"))
        .args(args)
        .output()
        .unwrap()
}

fn run_in(dir: &Path, args: &[&str]) -> (i32, Value) {
    let out = dir.to_str().unwrap();
    let mut all = args.to_vec();
    all.extend(["--out-dir", out]);
    let output = fairmc(&all);
    let code = output.status.code().unwrap();
    let report = std::fs::read_to_string(dir.join("report.json"))
        .map(|t| serde_json::from_str(&t).unwrap())
        .unwrap_or(Value::Null);
    (code, report)
}

fn model_file(dir: &Path, net: &fairmc::model::Network) -> String {
    let path = dir.join("model.json");
    common::write_model(&path, net);
    path.to_str().unwrap().to_string()
}

#[test]
fn echo_model_fails_with_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let model = model_file(dir.path(), &common::echo_net());
    let (code, report) = run_in(
        dir.path(),
        &[
            "verify", "--model", &model, "--mu-eps", "0.1", "--seed", "4",
        ],
    );
    assert_eq!(code, 2);
    assert_eq!(report["verdict"], "FAIL");
    assert!(report["max_diff"].as_f64().unwrap() >= 0.9);
    assert!(report.get("repair").is_none());
    let ranking = report["sensitivity"].as_array().unwrap();
    assert_eq!(ranking[0]["target"], "n0.0");
    assert!(dir.path().join("sensitivity.csv").exists());
}

#[test]
fn constant_model_passes() {
    let dir = tempfile::tempdir().unwrap();
    let model = model_file(dir.path(), &common::constant_net());
    let (code, report) = run_in(
        dir.path(),
        &["verify", "--model", &model, "--mu-eps", "0.1"],
    );
    assert_eq!(code, 0);
    assert_eq!(report["verdict"], "PASS");
    assert!(report.get("repair").is_none());
    assert!(report.get("sensitivity").is_none());
    assert_eq!(report["non_pac_flag"], false);
    assert!(dir.path().join("dtmc.txt").exists());
    assert!(dir.path().join("dtmc.dot").exists());
}

#[test]
fn missing_model_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let output = fairmc(&[
        "verify",
        "--model",
        "no/such/model.json",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("no/such/model.json"));
}

#[test]
fn invalid_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let model = model_file(dir.path(), &common::echo_net());
    let (code, _) = run_in(dir.path(), &["verify", "--model", &model, "--xi", "1.5"]);
    assert_eq!(code, 1);
    let config = dir.path().join("bad.json");
    std::fs::write(&config, r#"{"model": "model.json", "protected": "noise"}"#).unwrap();
    let (code, _) = run_in(
        dir.path(),
        &["verify", "--config", config.to_str().unwrap()],
    );
    assert_eq!(code, 1, "continuous protected feature must be rejected");
    std::fs::write(&config, r#"{"model": "model.json", "colour": 3}"#).unwrap();
    let (code, _) = run_in(
        dir.path(),
        &["verify", "--config", config.to_str().unwrap()],
    );
    assert_eq!(code, 1, "unknown keys must be rejected");
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = data("biased_config.json");
    let config = config.to_str().unwrap();
    let (code, report) = run_in(
        dir.path(),
        &[
            "verify", "--config", config, "--mu-eps", "0.1", "--xi", "0.5",
        ],
    );
    assert_eq!(code, 0);
    assert_eq!(report["xi"], 0.5);
    assert_eq!(report["pac"]["mu_eps"], 0.1);
    assert_eq!(report["pac"]["eps"], 0.05);
}

#[test]
fn budget_exhaustion_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let model = model_file(dir.path(), &common::echo_net());
    let (code, report) = run_in(
        dir.path(),
        &["verify", "--model", &model, "--max-traces", "150"],
    );
    assert_eq!(code, 3);
    assert_eq!(report["non_pac_flag"], true);
    assert_eq!(report["traces_used"], 150);
    assert!(!report["starved_states"].as_array().unwrap().is_empty());
}

#[test]
fn repair_fixes_biased_model() {
    let dir = tempfile::tempdir().unwrap();
    let config = data("biased_config.json");
    let (code, report) = run_in(
        dir.path(),
        &[
            "repair",
            "--config",
            config.to_str().unwrap(),
            "--mu-eps",
            "0.05",
            "--seed",
            "2",
        ],
    );
    assert_eq!(code, 0, "{report}");
    assert_eq!(report["verdict"], "FAIL");
    let repair = &report["repair"];
    for key in [
        "before",
        "after",
        "accuracy_before",
        "accuracy_after",
        "iterations",
    ] {
        assert!(repair.get(key).is_some(), "missing {key}");
    }
    assert_eq!(repair["verdict"], "PASS");
    assert!(repair["after"].as_f64().unwrap() <= 0.1);
    assert!(repair["iterations"].as_u64().unwrap() <= 100);
    let repaired = load_network(dir.path().join("repaired_model.json")).unwrap();
    assert_ne!(repaired, load_network(data("biased_model.json")).unwrap());
}

#[test]
fn no_repair_flag_only_ranks() {
    let dir = tempfile::tempdir().unwrap();
    let config = data("biased_config.json");
    let (code, report) = run_in(
        dir.path(),
        &[
            "repair",
            "--config",
            config.to_str().unwrap(),
            "--mu-eps",
            "0.1",
            "--no-repair",
        ],
    );
    assert_eq!(code, 2);
    assert!(report.get("repair").is_none());
    assert!(!dir.path().join("repaired_model.json").exists());
    let ranking = report["sensitivity"].as_array().unwrap();
    assert_eq!(
        ranking[0]["target"], "n0.2",
        "the neuron copying the protected input ranks first"
    );
}

#[test]
fn repair_without_dataset_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let model = model_file(dir.path(), &common::echo_net());
    let (code, _) = run_in(
        dir.path(),
        &["repair", "--model", &model, "--mu-eps", "0.1"],
    );
    assert_eq!(code, 1);
}

#[test]
fn reports_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let config = data("recurrent_config.json");
    let config = config.to_str().unwrap();
    let (code_a, _) = run_in(a.path(), &["verify", "--config", config]);
    let (code_b, _) = run_in(b.path(), &["verify", "--config", config]);
    assert_eq!(code_a, code_b);
    for file in ["report.json", "dtmc.txt", "dtmc.dot"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        assert_eq!(x, y, "{file} differs");
    }
}

#[test]
fn reported_difference_matches_saved_chain() {
    let dir = tempfile::tempdir().unwrap();
    let config = data("recurrent_config.json");
    let (_, report) = run_in(
        dir.path(),
        &["verify", "--config", config.to_str().unwrap()],
    );
    let chain = LabeledChain::parse(&std::fs::read_to_string(dir.path().join("dtmc.txt")).unwrap())
        .unwrap();
    let target = chain
        .states
        .iter()
        .position(|(id, _)| id == "positive")
        .unwrap();
    let probs: Vec<f64> = chain
        .states
        .iter()
        .enumerate()
        .filter(|(_, (_, tag))| *tag == StateTag::Protected)
        .map(|(s, _)| reach_prob_matrix(&chain.matrix, ReachQuery { source: s, target }).unwrap())
        .collect();
    assert_eq!(
        report["max_diff"].as_f64().unwrap(),
        max_pairwise_diff(&probs)
    );
    // the recurrent cell revisits its own states
    let cluster = chain
        .states
        .iter()
        .position(|(id, _)| id == "n0.0#1")
        .unwrap();
    assert!(chain.matrix.get(cluster, cluster) > 0.0);
}

#[test]
fn export_renders_saved_chain() {
    let dir = tempfile::tempdir().unwrap();
    let model = model_file(dir.path(), &common::constant_net());
    let (code, _) = run_in(
        dir.path(),
        &["verify", "--model", &model, "--mu-eps", "0.1"],
    );
    assert_eq!(code, 0);
    let dtmc = dir.path().join("dtmc.txt");
    let out = dir.path().join("chain.dot");
    let status = fairmc(&[
        "export",
        dtmc.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(status.status.success());
    let chain = LabeledChain::parse(&std::fs::read_to_string(&dtmc).unwrap()).unwrap();
    let dot = std::fs::read_to_string(&out).unwrap();
    assert_eq!(dot, chain_to_dot(&chain));
    assert_eq!(
        dot,
        std::fs::read_to_string(dir.path().join("dtmc.dot")).unwrap()
    );
    assert!(dot.contains("s4 -> s4 [label=\"1.0000\"]"));
}
