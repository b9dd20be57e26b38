use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dinq::agent::AgentKind;
use dinq::approximator::{gradient_check, load_checkpoint, MlpSpec};
use dinq::evalharness::evaluate;
use dinq::exactdp::{soft_value_iteration, value_iteration, DpConfig};
use dinq::mdp::{Mdp, RngStream};
use dinq::softcore::{ActionDistribution, InverseTemperature, LossKind};
use dinq_cli::experiment::{finalize, rerun_from_manifest, run_experiment, ExperimentManifest, MANIFEST_FILE};
use dinq_cli::{CliError, ExperimentConfig, Result};

#[derive(Parser)]
#[command(name = "dinq", version, about = "Deep Q-learning with scheduled soft targets on small MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every (environment, agent, seed) combination of a config.
    Run(RunArgs),
    /// Evaluate a saved network with the ε-greedy protocol.
    Eval(EvalArgs),
    /// Rebuild the summary CSV and charts of a finished experiment.
    Plot {
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic and finite-difference network gradients.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        probes: usize,
    },
    /// Solve an environment exactly and print its Q-table as CSV.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
    config: Option<PathBuf>,
    /// Re-run a previous experiment from its manifest.json.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    agent: Option<AgentKind>,
    #[arg(long)]
    env: Option<String>,
}

#[derive(Args)]
struct EnvSource {
    /// Environment serialized as JSON.
    #[arg(long, conflicts_with_all = ["config", "env"])]
    mdp: Option<PathBuf>,
    #[arg(long, requires = "env")]
    config: Option<PathBuf>,
    /// Environment name inside --config.
    #[arg(long, requires = "config")]
    env: Option<String>,
}

impl EnvSource {
    fn load(&self) -> Result<(Mdp, Option<ExperimentConfig>)> {
        match (&self.mdp, &self.config, &self.env) {
            (Some(path), _, _) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.clone(), source: e })?;
                Ok((Mdp::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?, None))
            }
            (None, Some(config), Some(env)) => {
                let cfg = ExperimentConfig::load(config)?;
                let mdp = cfg.environment(env)?.spec.build()?;
                Ok((mdp, Some(cfg)))
            }
            _ => Err(CliError::Config("give either --mdp or --config with --env".into())),
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    source: EnvSource,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    episodes: Option<usize>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    source: EnvSource,
    /// Discount; defaults to the config's train.gamma or the MDP's hint.
    #[arg(long)]
    gamma: Option<f64>,
    /// Solve the soft backup with a uniform prior at this inverse temperature.
    #[arg(long)]
    lambda: Option<f64>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(args: RunArgs) -> Result<()> {
    let manifest = if let Some(path) = &args.manifest {
        let previous = ExperimentManifest::load(path)?;
        let out = args
            .out
            .clone()
            .ok_or_else(|| CliError::Config("--out is required with --manifest".into()))?;
        rerun_from_manifest(&previous, &out)?
    } else {
        let config_path = args.config.as_deref().expect("clap enforces --config or --manifest");
        let mut config = ExperimentConfig::load(config_path)?;
        config.restrict(args.env.as_deref(), args.agent, args.seed)?;
        let out = args
            .out
            .clone()
            .or_else(|| config.experiment.output_dir.clone())
            .ok_or_else(|| CliError::Config("no output directory: pass --out or set experiment.output_dir".into()))?;
        let manifest = run_experiment(&config, &out)?;
        println!("wrote {} runs to {}", manifest.runs.len(), out.display());
        manifest
    };
    eprintln!("{} plots, summary at {}", manifest.plots.len(), manifest.summary.display());
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let (mdp, config) = args.source.load()?;
    let params = load_checkpoint(&args.checkpoint)?;
    let mut protocol = config.map(|c| c.train.eval).unwrap_or_default();
    if let Some(n) = args.episodes {
        protocol.episodes = n;
    }
    let result = evaluate(&params, &mdp, &protocol, &mut RngStream::new(args.seed))?;
    println!("mean_episodic_reward,mean_max_q");
    println!(
        "{},{}",
        dinq::numfmt::format_g9(result.mean_episodic_reward),
        dinq::numfmt::format_g9(result.mean_max_q)
    );
    Ok(())
}

fn plot(out: &Path) -> Result<()> {
    let path = out.join(MANIFEST_FILE);
    let mut manifest = ExperimentManifest::load(&path)?;
    finalize(&mut manifest, out)?;
    manifest.save(&path)?;
    println!("{} plots written", manifest.plots.len());
    Ok(())
}

fn gradcheck(seed: u64, probes: usize) -> Result<()> {
    let mut worst: f64 = 0.0;
    for dueling in [false, true] {
        let spec = MlpSpec::new(vec![8, 32, 32, 4], dueling)?;
        let report = gradient_check(&spec, LossKind::Huber, probes, 1e-5, seed)?;
        println!(
            "{} head: max relative error {:.3e} over {} probes",
            if dueling { "dueling" } else { "plain" },
            report.max_relative_error(),
            report.probes.len()
        );
        worst = worst.max(report.max_relative_error());
    }
    if worst > 1e-4 {
        return Err(CliError::Runtime(format!("gradient mismatch {worst:.3e} exceeds 1e-4")));
    }
    Ok(())
}

fn oracle(args: OracleArgs) -> Result<()> {
    let (mdp, config) = args.source.load()?;
    let gamma = args
        .gamma
        .or_else(|| config.map(|c| c.train.gamma))
        .unwrap_or_else(|| mdp.gamma_hint());
    let dp = DpConfig::new(gamma, 1e-10, 1_000_000).map_err(|e| CliError::Config(e.to_string()))?;
    let q = match args.lambda {
        Some(l) => {
            let lambda = InverseTemperature::new(l).map_err(|e| CliError::Config(e.to_string()))?;
            soft_value_iteration(&mdp, &ActionDistribution::uniform(mdp.n_actions())?, lambda, &dp)?
        }
        None => value_iteration(&mdp, &dp)?,
    };
    match &args.out {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|e| CliError::Io { path: path.clone(), source: e })?;
            q.write_csv(std::io::BufWriter::new(file))?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            q.write_csv(&mut lock)?;
            lock.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Eval(args) => eval(args),
        Command::Plot { out } => plot(&out),
        Command::Gradcheck { seed, probes } => gradcheck(seed, probes),
        Command::Oracle(args) => oracle(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
