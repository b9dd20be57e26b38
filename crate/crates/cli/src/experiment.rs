//! Run matrices (environment × agent × seed) and their on-disk artifacts.
//!
//! Output layout:
//!
//! ```text
//! <out>/manifest.json
//! <out>/summary.csv
//! <out>/median_normalized.svg
//! <out>/<env>/mdp.json
//! <out>/<env>/<agent>_seed<k>.csv     RunLog
//! <out>/<env>/<agent>_seed<k>.dinq    final network
//! <out>/<env>/q_values.svg
//! <out>/<env>/rewards.svg
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use dinq::agent::{train, AgentKind, RunLog, TrainConfig};
use dinq::approximator::save_checkpoint;
use dinq::evalharness::{
    exp_smooth, median_across_curves, normalize_score, sample_efficiency, write_summary_csv, Curve, ScoreBaselines,
    SummaryRow,
};
use dinq::exactdp::{finite_horizon_return, value_iteration, DpConfig, Policy};
use dinq::mdp::Mdp;
use serde::{Deserialize, Serialize};

use crate::config::{agent_label, ExperimentConfig};
use crate::error::{CliError, Result};
use crate::svg::emit_svg;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentRecord {
    pub name: String,
    pub mdp_file: PathBuf,
    pub baselines: ScoreBaselines,
    pub mdp: Mdp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecordPaths {
    pub environment: String,
    pub agent: AgentKind,
    pub seed: u64,
    pub log: PathBuf,
    pub checkpoint: PathBuf,
}

/// Everything needed to regenerate an experiment's outputs. Paths are
/// relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub library_version: String,
    pub config: ExperimentConfig,
    pub environments: Vec<EnvironmentRecord>,
    pub runs: Vec<RunRecordPaths>,
    pub summary: PathBuf,
    pub plots: Vec<PathBuf>,
}

impl ExperimentManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(CliError::io(path))?;
        serde_json::from_reader(BufReader::new(file))
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(CliError::io(path))?;
        serde_json::to_writer_pretty(BufWriter::new(file), self).map_err(|e| CliError::Runtime(e.to_string()))
    }
}

/// Random-policy and optimal-policy episodic returns under the evaluation
/// horizon; they anchor 0% and 100% of the normalized score.
pub fn score_baselines(mdp: &Mdp, train: &TrainConfig) -> Result<ScoreBaselines> {
    let horizon = train.eval.max_steps;
    let random = finite_horizon_return(mdp, &Policy::uniform(mdp.n_states(), mdp.n_actions()), horizon)?;
    let q_star = value_iteration(mdp, &DpConfig::new(train.gamma, 1e-10, 1_000_000)?)?;
    let reference = finite_horizon_return(mdp, &Policy::greedy(&q_star), horizon)?;
    Ok(ScoreBaselines::new(random, reference)?)
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(CliError::io(path))
}

/// Runs every (environment, agent, seed) combination and writes all artifacts.
pub fn run_experiment(config: &ExperimentConfig, out: &Path) -> Result<ExperimentManifest> {
    config.validate()?;
    let mdps = config
        .environments
        .iter()
        .map(|e| Ok((e.name.clone(), e.spec.build()?)))
        .collect::<Result<Vec<_>>>()?;
    run_with_mdps(config, mdps, out)
}

/// Regenerates an experiment from its manifest into `out`.
pub fn rerun_from_manifest(manifest: &ExperimentManifest, out: &Path) -> Result<ExperimentManifest> {
    manifest.config.validate()?;
    let mdps = manifest
        .environments
        .iter()
        .map(|e| (e.name.clone(), e.mdp.clone()))
        .collect();
    run_with_mdps(&manifest.config, mdps, out)
}

fn run_with_mdps(config: &ExperimentConfig, mdps: Vec<(String, Mdp)>, out: &Path) -> Result<ExperimentManifest> {
    create_dir(out)?;
    let mut environments = Vec::new();
    let mut runs = Vec::new();
    for (name, mdp) in mdps {
        let env_dir = out.join(&name);
        create_dir(&env_dir)?;
        let mdp_file = PathBuf::from(&name).join("mdp.json");
        let mdp_path = out.join(&mdp_file);
        std::fs::write(&mdp_path, mdp.to_json()?).map_err(CliError::io(&mdp_path))?;
        let baselines = score_baselines(&mdp, &config.train)
            .map_err(|e| CliError::Runtime(format!("environment '{name}': {e}")))?;

        for agent in &config.experiment.agents {
            for seed in &config.experiment.seeds {
                let stem = format!("{}_seed{seed}", agent_label(agent));
                let log = PathBuf::from(&name).join(format!("{stem}.csv"));
                let checkpoint = PathBuf::from(&name).join(format!("{stem}.dinq"));
                let cfg = TrainConfig {
                    seed: *seed,
                    ..config.train.clone()
                };
                let outcome = train(&mdp, *agent, &cfg)
                    .map_err(|e| CliError::Runtime(format!("{name}/{stem}: {e}")))?;
                let log_path = out.join(&log);
                let file = File::create(&log_path).map_err(CliError::io(&log_path))?;
                outcome.log.write_csv(BufWriter::new(file))?;
                save_checkpoint(&outcome.params, &out.join(&checkpoint))?;
                runs.push(RunRecordPaths {
                    environment: name.clone(),
                    agent: *agent,
                    seed: *seed,
                    log,
                    checkpoint,
                });
            }
        }
        environments.push(EnvironmentRecord {
            name,
            mdp_file,
            baselines,
            mdp,
        });
    }
    let mut manifest = ExperimentManifest {
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        environments,
        runs,
        summary: PathBuf::from(SUMMARY_FILE),
        plots: Vec::new(),
    };
    finalize(&mut manifest, out)?;
    manifest.save(&out.join(MANIFEST_FILE))?;
    Ok(manifest)
}

pub fn read_log(path: &Path) -> Result<RunLog> {
    let file = File::open(path).map_err(CliError::io(path))?;
    Ok(RunLog::read_csv(BufReader::new(file))?)
}

fn log_curve(log: &RunLog, value: impl Fn(&dinq::agent::RunRecord) -> f64) -> Result<Curve> {
    Ok(Curve::new(log.records().iter().map(|r| (r.iter, value(r))).collect())?)
}

/// Pointwise mean of aligned curves.
fn mean_curve(curves: &[Curve]) -> Result<Curve> {
    let first = curves.first().ok_or_else(|| CliError::Runtime("no curves to average".into()))?;
    if curves.iter().any(|c| !c.iters().eq(first.iters())) {
        return Err(CliError::Runtime("run logs are not aligned on the same checkpoints".into()));
    }
    let n = curves.len() as f64;
    let points = (0..first.len())
        .map(|k| {
            let sum: f64 = curves.iter().map(|c| c.points()[k].1).sum();
            (first.points()[k].0, sum / n)
        })
        .collect();
    Ok(Curve::new(points)?)
}

/// Writes the summary CSV and all charts from the run logs on disk.
pub fn finalize(manifest: &mut ExperimentManifest, out: &Path) -> Result<()> {
    let exp = &manifest.config.experiment;
    let mut rows = Vec::new();
    let mut plots = Vec::new();
    // Per agent: one seed-averaged normalized curve per environment.
    let mut normalized_by_agent: Vec<Vec<Curve>> = vec![Vec::new(); exp.agents.len()];

    for env in &manifest.environments {
        let mut reward_curves = Vec::new();
        let mut q_curves = Vec::new();
        let mut labels = Vec::new();
        let dqn_threshold = |seed: u64| -> Result<Option<f64>> {
            let Some(run) = manifest
                .runs
                .iter()
                .find(|r| r.environment == env.name && r.agent == AgentKind::Dqn && r.seed == seed)
            else {
                return Ok(None);
            };
            let curve = log_curve(&read_log(&out.join(&run.log))?, |r| r.mean_episodic_reward)?;
            let normalized = curve.map_values(|v| normalize_score(v, &env.baselines).unwrap_or(f64::NAN))?;
            Ok(exp_smooth(&normalized, exp.efficiency_tau)?.values().reduce(f64::max))
        };
        for (a, agent) in exp.agents.iter().enumerate() {
            let mut rewards = Vec::new();
            let mut qs = Vec::new();
            let mut normalized = Vec::new();
            for run in manifest.runs.iter().filter(|r| r.environment == env.name && r.agent == *agent) {
                let log = read_log(&out.join(&run.log))?;
                let reward = log_curve(&log, |r| r.mean_episodic_reward)?;
                let norm = reward.map_values(|v| normalize_score(v, &env.baselines).unwrap_or(f64::NAN))?;
                let best_score = reward.values().reduce(f64::max).unwrap_or(f64::NAN);
                let efficiency = match dqn_threshold(run.seed)? {
                    Some(threshold) => sample_efficiency(&exp_smooth(&norm, exp.efficiency_tau)?, threshold),
                    None => None,
                };
                rows.push(SummaryRow {
                    task: env.name.clone(),
                    agent: agent.to_string(),
                    seed: run.seed,
                    best_score,
                    normalized: normalize_score(best_score, &env.baselines)?,
                    sample_efficiency_iter: efficiency,
                });
                rewards.push(reward);
                qs.push(log_curve(&log, |r| r.mean_max_q)?);
                normalized.push(norm);
            }
            if rewards.is_empty() || rewards[0].is_empty() {
                continue;
            }
            reward_curves.push(exp_smooth(&mean_curve(&rewards)?, exp.plot_tau)?);
            q_curves.push(exp_smooth(&mean_curve(&qs)?, exp.plot_tau)?);
            normalized_by_agent[a].push(exp_smooth(&mean_curve(&normalized)?, exp.plot_tau)?);
            labels.push(agent.to_string());
        }
        if !labels.is_empty() {
            for (file, curves, title, y) in [
                ("q_values.svg", &q_curves, "average max Q-value", "mean max Q"),
                ("rewards.svg", &reward_curves, "episodic reward", "mean episodic reward"),
            ] {
                let rel = PathBuf::from(&env.name).join(file);
                emit_svg(curves, &labels, &format!("{}: {title}", env.name), y, &out.join(&rel))?;
                plots.push(rel);
            }
        }
    }

    let mut medians = Vec::new();
    let mut labels = Vec::new();
    for (agent, curves) in exp.agents.iter().zip(&normalized_by_agent) {
        if !curves.is_empty() {
            medians.push(median_across_curves(curves)?);
            labels.push(agent.to_string());
        }
    }
    if !medians.is_empty() {
        let rel = PathBuf::from("median_normalized.svg");
        emit_svg(&medians, &labels, "median normalized score across environments", "normalized score (%)", &out.join(&rel))?;
        plots.push(rel);
    }

    let summary_path = out.join(&manifest.summary);
    let file = File::create(&summary_path).map_err(CliError::io(&summary_path))?;
    write_summary_csv(&rows, BufWriter::new(file))?;
    manifest.plots = plots;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use dinq::mdp::make_chain;

    #[test]
    fn chain_baselines_bracket_the_goal_reward() {
        let mdp = make_chain(6, 1.0).unwrap();
        let cfg = TrainConfig::desk();
        let b = score_baselines(&mdp, &cfg).unwrap();
        assert_eq!(b.score_human, 1.0);
        assert!(b.score_random > 0.0 && b.score_random < 1.0);
    }

    #[test]
    fn mean_curve_requires_alignment() {
        let a = Curve::new(vec![(1, 1.0), (2, 3.0)]).unwrap();
        let b = Curve::new(vec![(1, 3.0), (2, 5.0)]).unwrap();
        assert_eq!(mean_curve(&[a.clone(), b]).unwrap().points(), &[(1, 2.0), (2, 4.0)]);
        let c = Curve::new(vec![(1, 3.0), (3, 5.0)]).unwrap();
        assert!(mean_curve(&[a, c]).is_err());
    }
}
