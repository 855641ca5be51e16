//! Episodic harness: configuration, episode and training loops, run
//! control, and persistence.

mod config;
mod episode;
mod telemetry;
mod training;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use config::{parse_kv, AgentKind, RunConfig, TileSpec};
pub use episode::{run_episode, Episode, EpisodeOptions};
pub use telemetry::{
    layout, read_curve, read_telemetry, CurveRow, EpisodeRecord, RunWriter, TelemetrySample, CURVE_HEADER,
};
pub use training::{
    control_channel, run_evaluation, run_training, Command, CommandOutcome, ControlReceiver, EvalOutcome,
    Reply, RunControl, RunObserver, RunStatus, TrainingReport,
};

use crate::agents::{Agent, QLearningAgent, QLearningParams, QWeights, ReferenceAgent};
use crate::error::Result;

/// Independent random streams split from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedStream {
    /// Camera noise of the training rig.
    Perception = 1,
    /// Exploration and tie-breaking draws of the agent.
    Agent = 2,
    /// Rigs used for evaluation episodes.
    Evaluation = 3,
}

/// Seed for `stream`, taken from the ChaCha stream of the same index.
pub fn derive_seed(master: u64, stream: impl Into<u64>) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream.into());
    rng.next_u64()
}

impl From<SeedStream> for u64 {
    fn from(s: SeedStream) -> u64 {
        s as u64
    }
}

/// Build the configured agent, loading `eval.checkpoint` when set.
pub fn build_agent(config: &RunConfig) -> Result<Box<dyn Agent>> {
    let seed = derive_seed(config.seed, SeedStream::Agent);
    Ok(match config.agent {
        AgentKind::Reference => Box::new(ReferenceAgent::new(config.v_thresh, seed)),
        AgentKind::QLearning => {
            let coder = config.tile_coder()?;
            let params = QLearningParams {
                seed,
                ..config.qlearning
            };
            match &config.eval_checkpoint {
                Some(path) => Box::new(QLearningAgent::with_weights(coder, params, QWeights::load(path)?)?),
                None => Box::new(QLearningAgent::new(coder, params)?),
            }
        }
    })
}
