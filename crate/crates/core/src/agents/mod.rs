//! Controllers: the hand-engineered reference policy and tile-coded
//! Q-learning.

mod qlearning;
mod reference;
mod tiles;

pub use qlearning::{q_update, q_value, select_action, QLearningAgent, QLearningParams, QWeights};
pub use reference::{reference_policy, ReferenceAgent, DEFAULT_V_THRESH};
pub use tiles::TileCoder;

use crate::env::{Action, Observation};
use crate::error::Result;

/// One environment transition as seen by a learning agent.
#[derive(Debug, Clone, Copy)]
pub struct Transition<'a> {
    pub observation: &'a Observation,
    pub action: Action,
    pub reward: f64,
    pub next: &'a Observation,
    /// True only when the episode ended at the goal. Timeouts bootstrap.
    pub terminal: bool,
}

pub trait Agent: Send {
    fn name(&self) -> &'static str;

    /// Choose an action. `greedy` disables exploration for evaluation runs.
    fn act(&mut self, obs: &Observation, greedy: bool) -> Result<Action>;

    fn learn(&mut self, _transition: &Transition<'_>) -> Result<()> {
        Ok(())
    }

    fn is_learning(&self) -> bool {
        false
    }

    /// Learned weights, for agents that have them.
    fn weights(&self) -> Option<&QWeights> {
        None
    }

    /// Independent snapshot, used for evaluation episodes.
    fn boxed_clone(&self) -> Box<dyn Agent>;
}
