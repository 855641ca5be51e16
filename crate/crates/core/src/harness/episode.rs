use std::time::Instant;

use crate::agents::{Agent, Transition};
use crate::env::{DoneReason, MountainCarEnv, Observation, RunLifecycle};
use crate::error::Result;

use super::telemetry::{EpisodeRecord, TelemetrySample};

/// How an episode drives the agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeOptions {
    /// 1-based episode number written to telemetry and the curve.
    pub index: u64,
    pub step_cap: u64,
    /// Apply the agent's learning update after every step.
    pub learn: bool,
    /// Disable exploration (ε = 0).
    pub greedy: bool,
    /// Lifecycle label stamped on every telemetry sample.
    pub state: RunLifecycle,
}

impl EpisodeOptions {
    pub fn training(index: u64, step_cap: u64) -> Self {
        Self {
            index,
            step_cap,
            learn: true,
            greedy: false,
            state: RunLifecycle::Learning,
        }
    }

    pub fn evaluation(index: u64, step_cap: u64) -> Self {
        Self {
            index,
            step_cap,
            learn: false,
            greedy: true,
            state: RunLifecycle::Evaluating,
        }
    }
}

/// An episode in progress, advanced one control step at a time so callers
/// can act on commands between steps.
#[derive(Debug)]
pub struct Episode {
    options: EpisodeOptions,
    observation: Observation,
    steps: u64,
    ret: f64,
    done_reason: DoneReason,
    started: Instant,
}

impl Episode {
    /// Reset `env` and start a new episode.
    pub fn begin(env: &mut MountainCarEnv, options: EpisodeOptions) -> Result<Self> {
        env.set_step_cap(options.step_cap)?;
        let observation = env.reset(None)?;
        Ok(Self {
            options,
            observation,
            steps: 0,
            ret: 0.0,
            done_reason: DoneReason::None,
            started: Instant::now(),
        })
    }

    pub fn is_done(&self) -> bool {
        self.done_reason != DoneReason::None
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Select an action, step the rig, learn if enabled, and return the
    /// telemetry sample for this step.
    pub fn step(&mut self, env: &mut MountainCarEnv, agent: &mut dyn Agent) -> Result<TelemetrySample> {
        let action = agent.act(&self.observation, self.options.greedy)?;
        let result = env.step(action)?;
        if self.options.learn && agent.is_learning() {
            agent.learn(&Transition {
                observation: &self.observation,
                action,
                reward: result.reward,
                next: &result.observation,
                terminal: result.done_reason == DoneReason::Goal,
            })?;
        }
        self.steps += 1;
        self.ret += result.reward;
        self.done_reason = result.done_reason;
        let truth = env.true_state();
        let sample = TelemetrySample {
            t: truth.t,
            episode: self.options.index,
            step: self.steps,
            x_true: truth.x,
            x_est: result.observation.x_est,
            v_est: result.observation.v_est,
            action,
            reward: result.reward,
            ret: self.ret,
            state: self.options.state,
        };
        self.observation = result.observation;
        Ok(sample)
    }

    pub fn record(&self) -> EpisodeRecord {
        EpisodeRecord {
            episode: self.options.index,
            steps: self.steps,
            ret: self.ret,
            done_reason: self.done_reason,
            wall_time: self.started.elapsed().as_secs_f64(),
        }
    }
}

/// Run one full episode from reset until the goal or the step cap, passing
/// every telemetry sample to `on_sample`.
pub fn run_episode(
    env: &mut MountainCarEnv,
    agent: &mut dyn Agent,
    options: EpisodeOptions,
    mut on_sample: impl FnMut(&TelemetrySample) -> Result<()>,
) -> Result<EpisodeRecord> {
    let mut episode = Episode::begin(env, options)?;
    while !episode.is_done() {
        let sample = episode.step(env, agent)?;
        on_sample(&sample)?;
    }
    Ok(episode.record())
}
