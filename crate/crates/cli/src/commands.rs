//! Subcommand implementations. Each returns a [`CliError`] whose exit code the
//! binary forwards.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use log::info;
use puncture_core::engine::{acl_pretrain_with, run_for, PolicyKind, RunSummary, World};
use puncture_core::sac::{AgentDims, SacAgent};
use puncture_core::Error as CoreError;

use crate::config::{ConfigError, RunConfig};
use crate::metrics::{write_reward_curve, write_summary, MetricsWriter, METRICS_SCHEMA_VERSION};

pub const CHECKPOINT_FILE: &str = "agent.ckpt";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Checkpoint(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Other(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Config(m) => CliError::Config(m),
            CoreError::Checkpoint(m) => CliError::Checkpoint(m),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn parse_policy(name: &str) -> CliResult<PolicyKind> {
    name.parse().map_err(|_| CliError::Config(format!("`policy`: {name:?} is not one of cyrus, rp, sef")))
}

pub fn load_agent(path: &Path, cfg: &RunConfig) -> CliResult<SacAgent> {
    let file = File::open(path).map_err(|e| CliError::Checkpoint(format!("{}: {e}", path.display())))?;
    let world = cfg.world();
    let agent = SacAgent::read_from(&mut BufReader::new(file), world.sac.clone())
        .map_err(|e| CliError::Checkpoint(format!("{}: {e}", path.display())))?;
    let want = AgentDims::from_cell(&world.cell);
    if *agent.dims() != want {
        return Err(CliError::Checkpoint(format!("{} was trained for {:?}, config needs {want:?}", path.display(), agent.dims())));
    }
    Ok(agent)
}

pub fn save_agent(path: &Path, agent: &SacAgent) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    agent.write_to(&mut w)?;
    std::io::Write::flush(&mut w)?;
    Ok(())
}

fn create(dir: &Path, name: &str) -> CliResult<BufWriter<File>> {
    std::fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Written next to every output set; `config` reloads as a run configuration.
#[derive(serde::Serialize)]
struct Manifest<'a> {
    metrics_schema: u32,
    command: &'a str,
    config: &'a RunConfig,
}

fn write_manifest(cfg: &RunConfig, command: &str, out: &Path) -> CliResult<()> {
    let m = Manifest { metrics_schema: METRICS_SCHEMA_VERSION, command, config: cfg };
    let text = toml::to_string(&m).map_err(|e| CliError::Other(e.to_string()))?;
    std::io::Write::write_all(&mut create(out, "manifest.toml")?, text.as_bytes())?;
    Ok(())
}

/// Runs the curriculum and writes `agent.ckpt`, one `agent.stageK.ckpt` per
/// stage and `reward_curve.csv` into `out`.
pub fn pretrain(cfg: &RunConfig, out: &Path) -> CliResult<PathBuf> {
    let mut world = World::new(cfg.world(), PolicyKind::Cyrus, cfg.seed, None)?;
    write_manifest(cfg, "pretrain", out)?;
    let stages = cfg.stages();
    let total: usize = stages.iter().map(|s| s.episodes).sum();
    info!("pre-training for {total} episodes over {} stages", stages.len());
    std::fs::create_dir_all(out)?;
    let mut save_error = None;
    let report = acl_pretrain_with(&mut world, &stages, |_, _| {}, |idx, w| {
        let path = out.join(format!("agent.stage{}.ckpt", idx + 1));
        if let Err(e) = save_agent(&path, w.agent().expect("cyrus world has an agent")) {
            save_error = Some(e);
            return Err(CoreError::Checkpoint(format!("cannot write {}", path.display())));
        }
        Ok(())
    });
    if let Some(e) = save_error {
        return Err(e);
    }
    let report = report?;
    write_reward_curve(create(out, "reward_curve.csv")?, &report)?;
    let path = out.join(CHECKPOINT_FILE);
    save_agent(&path, world.agent().expect("cyrus world has an agent"))?;
    info!("final moving average {:.4}", report.moving_avg.last().copied().unwrap_or(0.0));
    Ok(path)
}

/// Online training from a checkpoint for `run.ttis` TTIs; the updated agent is
/// written back to `out/agent.ckpt`.
pub fn run(cfg: &RunConfig, checkpoint: &Path, out: &Path) -> CliResult<RunSummary> {
    let agent = load_agent(checkpoint, cfg)?;
    let mut world = World::new(cfg.world(), PolicyKind::Cyrus, cfg.seed, Some(agent))?;
    write_manifest(cfg, "run", out)?;
    world.set_training(true);
    let mut metrics = MetricsWriter::new(create(out, "metrics.csv")?, cfg.output.timing)?;
    let mut traces = Vec::with_capacity(cfg.run.ttis);
    for _ in 0..cfg.run.ttis {
        let t = world.run_tti()?;
        metrics.write("cyrus", cfg.seed, &t)?;
        traces.push(t);
    }
    metrics.finish()?;
    let summary = RunSummary::from_traces(&traces);
    write_summary(create(out, "summary.csv")?, &[("cyrus".to_string(), summary)])?;
    save_agent(&out.join(CHECKPOINT_FILE), world.agent().expect("cyrus world has an agent"))?;
    Ok(summary)
}

fn evaluate(
    cfg: &RunConfig,
    policy: PolicyKind,
    agent: Option<SacAgent>,
    metrics: &mut MetricsWriter<BufWriter<File>>,
) -> CliResult<RunSummary> {
    let mut world = World::new(cfg.world(), policy, cfg.seed, agent)?;
    let (summary, traces) = run_for(&mut world, cfg.run.ttis)?;
    for t in &traces {
        metrics.write(policy.name(), cfg.seed, t)?;
    }
    Ok(summary)
}

/// Frozen evaluation of the configured policy. The learned policy needs a checkpoint.
pub fn eval(cfg: &RunConfig, checkpoint: Option<&Path>, out: &Path) -> CliResult<RunSummary> {
    let policy = parse_policy(&cfg.policy)?;
    let agent = match (policy, checkpoint) {
        (PolicyKind::Cyrus, None) => return Err(CliError::Checkpoint("evaluating cyrus needs --checkpoint".into())),
        (PolicyKind::Cyrus, Some(p)) => Some(load_agent(p, cfg)?),
        _ => None,
    };
    write_manifest(cfg, "eval", out)?;
    let mut metrics = MetricsWriter::new(create(out, "metrics.csv")?, cfg.output.timing)?;
    let summary = evaluate(cfg, policy, agent, &mut metrics)?;
    metrics.finish()?;
    write_summary(create(out, "summary.csv")?, &[(policy.name().to_string(), summary)])?;
    Ok(summary)
}

/// Evaluates every policy on the same seed. Without a checkpoint the learned
/// policy uses a freshly initialized agent.
pub fn compare(cfg: &RunConfig, checkpoint: Option<&Path>, out: &Path) -> CliResult<Vec<(String, RunSummary)>> {
    let agent = checkpoint.map(|p| load_agent(p, cfg)).transpose()?;
    write_manifest(cfg, "compare", out)?;
    let mut metrics = MetricsWriter::new(create(out, "metrics.csv")?, cfg.output.timing)?;
    let mut rows = Vec::new();
    let mut agent = agent;
    for policy in PolicyKind::ALL {
        let a = if policy == PolicyKind::Cyrus { agent.take() } else { None };
        let s = evaluate(cfg, policy, a, &mut metrics)?;
        info!("{policy}: reward {:.4}, goodput {:.2} SCs", s.mean_reward, s.mean_goodput_scs);
        rows.push((policy.name().to_string(), s));
    }
    metrics.finish()?;
    write_summary(create(out, "summary.csv")?, &rows)?;
    Ok(rows)
}
