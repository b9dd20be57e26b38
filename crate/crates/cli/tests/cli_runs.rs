use std::path::Path;
use std::process::Command;

use dinq_cli::experiment::MANIFEST_FILE;
use dinq_cli::{rerun_from_manifest, run_experiment, ExperimentConfig, ExperimentManifest};

const SMALL: &str = r#"
[experiment]
name = "small"
agents = ["dqn", "din"]
seeds = [3, 4]

[train]
gamma = 0.9
total_iters = 3000
learn_start_iter = 500
checkpoint_period = 500
target_sync_period = 250
epsilon_anneal_iters = 1000
hidden = [16]
max_episode_steps = 40

[train.eval]
episodes = 4
max_steps = 40

[[environment]]
name = "chain"
kind = "chain"
n = 5
"#;

fn files_with_ext(dir: &Path, ext: &str) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == ext))
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dinq"))
}

#[test]
fn two_agents_two_seeds_give_four_logs_and_rerun_is_identical() {
    let cfg = ExperimentConfig::from_toml_str(SMALL).unwrap();
    let first = tempfile::tempdir().unwrap();
    let manifest = run_experiment(&cfg, first.path()).unwrap();
    let logs = files_with_ext(&first.path().join("chain"), "csv");
    assert_eq!(logs, vec!["din_seed3.csv", "din_seed4.csv", "dqn_seed3.csv", "dqn_seed4.csv"]);
    assert_eq!(files_with_ext(&first.path().join("chain"), "dinq").len(), 4);
    assert_eq!(manifest.plots.len(), 3);

    let saved = ExperimentManifest::load(&first.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(saved, manifest);
    let second = tempfile::tempdir().unwrap();
    rerun_from_manifest(&saved, second.path()).unwrap();
    for name in logs.iter().map(|l| format!("chain/{l}")).chain(["summary.csv".to_string()]) {
        let a = std::fs::read(first.path().join(&name)).unwrap();
        let b = std::fs::read(second.path().join(&name)).unwrap();
        assert_eq!(a, b, "{name} differs after rerun");
    }
    let summary = std::fs::read_to_string(first.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().next().unwrap(), "task,agent,seed,best_score,normalized,sample_efficiency_iter");
    assert_eq!(summary.lines().count(), 5);
}

#[test]
fn binary_runs_plots_evaluates_and_solves() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("small.toml");
    std::fs::write(&config, SMALL).unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .args(["--agent", "ddqn", "--seed", "9"])
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(files_with_ext(&out.join("chain"), "csv"), vec!["ddqn_seed9.csv"]);

    std::fs::remove_file(out.join("chain/rewards.svg")).unwrap();
    assert!(bin().arg("plot").arg("--out").arg(&out).status().unwrap().success());
    assert!(out.join("chain/rewards.svg").is_file());

    let eval = bin()
        .args(["eval", "--checkpoint"])
        .arg(out.join("chain/ddqn_seed9.dinq"))
        .arg("--mdp")
        .arg(out.join("chain/mdp.json"))
        .output()
        .unwrap();
    assert!(eval.status.success());
    assert!(String::from_utf8_lossy(&eval.stdout).starts_with("mean_episodic_reward,mean_max_q\n"));

    let oracle = bin().args(["oracle", "--config"]).arg(&config).args(["--env", "chain"]).output().unwrap();
    assert!(oracle.status.success());
    let text = String::from_utf8_lossy(&oracle.stdout);
    assert_eq!(text.lines().next(), Some("state,action,q"));
    assert_eq!(text.lines().count(), 1 + 5 * 2);

    assert!(bin().args(["gradcheck", "--probes", "3"]).status().unwrap().success());
}

#[test]
fn exit_codes_separate_config_and_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, SMALL.replacen("name = \"chain\"\n", "", 1)).unwrap();
    let out = bin().args(["run", "--config"]).arg(&config).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("name"));

    let junk = dir.path().join("junk.dinq");
    std::fs::write(&junk, b"NOPE").unwrap();
    let mdp = dir.path().join("mdp.json");
    std::fs::write(&mdp, dinq::mdp::make_chain(3, 1.0).unwrap().to_json().unwrap()).unwrap();
    let out = bin().args(["eval", "--checkpoint"]).arg(&junk).arg("--mdp").arg(&mdp).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("DINQ"));

    assert_eq!(bin().arg("run").status().unwrap().code(), Some(1));
}
