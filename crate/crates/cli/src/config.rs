//! Experiment configuration file (TOML).
//!
//! ```toml
//! [experiment]
//! name = "demo"
//! agents = ["dqn", "ddqn", "din", "sql:1"]
//! seeds = [0, 1]
//!
//! [train]                # any TrainConfig field; unset fields keep desk defaults
//! gamma = 0.9
//!
//! [[environment]]
//! name = "chain"
//! kind = "chain"         # chain | gridworld | garnet
//! n = 15
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use dinq::agent::{AgentKind, TrainConfig};
use dinq::mdp::EnvSpec;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

fn default_plot_tau() -> f64 {
    2.0
}

fn default_efficiency_tau() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    pub agents: Vec<AgentKind>,
    pub seeds: Vec<u64>,
    /// Used when no output directory is given on the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Exponential window applied to plotted curves.
    #[serde(default = "default_plot_tau")]
    pub plot_tau: f64,
    /// Exponential window applied before the sample-efficiency metric.
    #[serde(default = "default_efficiency_tau")]
    pub efficiency_tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentEntry {
    pub name: String,
    #[serde(flatten)]
    pub spec: EnvSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(rename = "environment")]
    pub environments: Vec<EnvironmentEntry>,
    #[serde(default)]
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Runtime(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let exp = &self.experiment;
        if exp.agents.is_empty() {
            return bad("experiment.agents must list at least one agent".into());
        }
        if exp.seeds.is_empty() {
            return bad("experiment.seeds must list at least one seed".into());
        }
        if exp.seeds.iter().collect::<BTreeSet<_>>().len() != exp.seeds.len() {
            return bad("experiment.seeds contains duplicates".into());
        }
        let labels: BTreeSet<String> = exp.agents.iter().map(agent_label).collect();
        if labels.len() != exp.agents.len() {
            return bad("experiment.agents contains duplicates".into());
        }
        for tau in [exp.plot_tau, exp.efficiency_tau] {
            if !(tau >= 1.0 && tau.is_finite()) {
                return bad(format!("smoothing windows must be >= 1, got {tau}"));
            }
        }
        if self.environments.is_empty() {
            return bad("at least one [[environment]] table is required".into());
        }
        let mut names = BTreeSet::new();
        for env in &self.environments {
            if !is_safe_name(&env.name) {
                return bad(format!(
                    "environment name '{}' must be non-empty and use only letters, digits, '-' and '_'",
                    env.name
                ));
            }
            if !names.insert(env.name.as_str()) {
                return bad(format!("duplicate environment name '{}'", env.name));
            }
            env.spec
                .build()
                .map_err(|e| CliError::Config(format!("environment '{}': {e}", env.name)))?;
        }
        self.train
            .validate()
            .map_err(|e| CliError::Config(format!("train: {e}")))
    }

    pub fn environment(&self, name: &str) -> Result<&EnvironmentEntry> {
        self.environments.iter().find(|e| e.name == name).ok_or_else(|| {
            let known: Vec<&str> = self.environments.iter().map(|e| e.name.as_str()).collect();
            CliError::Config(format!("no environment named '{name}' (known: {})", known.join(", ")))
        })
    }

    /// Narrows the run matrix to one environment, agent and/or seed.
    pub fn restrict(&mut self, env: Option<&str>, agent: Option<AgentKind>, seed: Option<u64>) -> Result<()> {
        if let Some(name) = env {
            let entry = self.environment(name)?.clone();
            self.environments = vec![entry];
        }
        if let Some(agent) = agent {
            self.experiment.agents = vec![agent];
        }
        if let Some(seed) = seed {
            self.experiment.seeds = vec![seed];
        }
        self.validate()
    }
}

fn is_safe_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// File-system friendly agent label (`sql:0.5` becomes `sql-0.5`).
pub fn agent_label(agent: &AgentKind) -> String {
    agent.to_string().replace(':', "-")
}
