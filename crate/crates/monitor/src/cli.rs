//! Command-line front end: headless training, checkpoint evaluation, or the
//! monitor service.

use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use mcar_core::harness::{run_evaluation, run_training, EpisodeRecord, RunConfig, RunObserver};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AgentArg {
    Reference,
    Qlearning,
}

#[derive(Debug, Parser)]
#[command(name = "mcar", version, about = "Simulated vision-based mountain-car benchmark")]
pub struct Cli {
    /// Controller to run.
    #[arg(long, value_enum)]
    pub agent: Option<AgentArg>,
    #[arg(long)]
    pub episodes: Option<u64>,
    /// Step limit per episode.
    #[arg(long)]
    pub steps_cap: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Flat `key = value` config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run directory for the snapshot, telemetry, curve and weights.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Pace the loop at one control step per 10 ms of wall time.
    #[arg(long)]
    pub realtime: bool,
    /// Start the monitor service instead of a headless run.
    #[arg(long)]
    pub serve: bool,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Evaluate a saved weights file greedily instead of training.
    #[arg(long)]
    pub eval: Option<PathBuf>,
}

impl Cli {
    /// Merge the config file (if any) with the flags.
    pub fn to_config(&self) -> mcar_core::Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let mut set = |key: &str, value: String| config.set(key, &value);
        if let Some(agent) = self.agent {
            set(
                "agent",
                match agent {
                    AgentArg::Reference => "reference",
                    AgentArg::Qlearning => "qlearning",
                }
                .into(),
            )?;
        }
        if let Some(n) = self.episodes {
            set("episodes", n.to_string())?;
        }
        if let Some(n) = self.steps_cap {
            set("steps_cap", n.to_string())?;
        }
        if let Some(n) = self.seed {
            set("seed", n.to_string())?;
        }
        if let Some(p) = &self.out {
            set("out", p.display().to_string())?;
        }
        if self.realtime {
            set("realtime", "true".into())?;
        }
        if self.serve {
            set("serve", "true".into())?;
        }
        if let Some(p) = self.port {
            set("port", p.to_string())?;
        }
        if let Some(p) = &self.eval {
            set("eval.checkpoint", p.display().to_string())?;
        }
        config.validate()?;
        Ok(config)
    }
}

struct Progress;

impl RunObserver for Progress {
    fn on_episode(&mut self, r: &EpisodeRecord) {
        println!(
            "episode {:>4}  steps {:>6}  return {:>8}  {}",
            r.episode, r.steps, r.ret, r.done_reason
        );
    }
}

/// Exit code 2 for configuration errors, 1 for runtime failures.
pub fn main_with(cli: Cli) -> i32 {
    let config = match cli.to_config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("mcar: {e}");
            return 2;
        }
    };
    let result = if config.serve {
        serve_blocking(&cli.host, config)
    } else if config.eval_checkpoint.is_some() {
        run_evaluation(&config, &mut Progress).map(drop).map_err(Into::into)
    } else {
        run_training(&config, None, &mut Progress).map(drop).map_err(Into::into)
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("mcar: {e:#}");
            match e.downcast_ref::<mcar_core::Error>() {
                Some(mcar_core::Error::Config(_) | mcar_core::Error::Checkpoint(_)) => 2,
                _ => 1,
            }
        }
    }
}

fn serve_blocking(host: &str, config: RunConfig) -> anyhow::Result<()> {
    let addr: SocketAddr = format!("{host}:{}", config.port).parse()?;
    let runs_dir = config.out_dir.clone().unwrap_or_else(|| PathBuf::from("runs"));
    let mut base = config;
    base.out_dir = None;
    tokio::runtime::Runtime::new()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        eprintln!("mcar: serving on http://{}", listener.local_addr()?);
        crate::service::serve(listener, crate::service::Monitor::new(base, runs_dir)).await?;
        Ok(())
    })
}
