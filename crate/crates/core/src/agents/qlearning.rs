//! One-step Q-learning with a linear, tile-coded action-value function.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tiles::TileCoder;
use super::{Agent, Transition};
use crate::env::{Action, Observation};
use crate::error::{Error, Result};

const CHECKPOINT_MAGIC: &[u8; 8] = b"OPEBQW01";
const CHECKPOINT_HEADER: usize = 16;

/// Linear weights laid out as `[feature][action]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QWeights {
    tilings: usize,
    tiles_per_dim: usize,
    actions: usize,
    weights: Vec<f64>,
}

impl QWeights {
    pub fn zeros(coder: &TileCoder) -> Self {
        let actions = Action::ALL.len();
        Self {
            tilings: coder.tilings(),
            tiles_per_dim: coder.tiles_per_dim(),
            actions,
            weights: vec![0.0; coder.feature_count() * actions],
        }
    }

    pub fn feature_count(&self) -> usize {
        self.tilings * self.tiles_per_dim * self.tiles_per_dim
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn get(&self, feature: usize, action: Action) -> f64 {
        self.weights[feature * self.actions + action.index()]
    }

    fn slot(&self, feature: usize, action: Action) -> Result<usize> {
        if feature >= self.feature_count() {
            return Err(Error::IndexOutOfRange {
                index: feature,
                len: self.feature_count(),
            });
        }
        Ok(feature * self.actions + action.index())
    }

    fn matches(&self, coder: &TileCoder) -> bool {
        self.tilings == coder.tilings() && self.tiles_per_dim == coder.tiles_per_dim()
    }

    /// Checkpoint encoding: `"OPEBQW01"`, then tilings, tiles per dimension
    /// and action count as little-endian `u16`, two padding bytes, then the
    /// weights as little-endian `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(CHECKPOINT_HEADER + self.weights.len() * 8);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        for dim in [self.tilings, self.tiles_per_dim, self.actions] {
            out.extend_from_slice(&(dim as u16).to_le_bytes());
        }
        out.extend_from_slice(&[0, 0]);
        for w in &self.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < CHECKPOINT_HEADER || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("missing OPEBQW01 header".into()));
        }
        let dim = |at: usize| u16::from_le_bytes([bytes[at], bytes[at + 1]]) as usize;
        let (tilings, tiles_per_dim, actions) = (dim(8), dim(10), dim(12));
        if actions != Action::ALL.len() {
            return Err(Error::Checkpoint(format!("expected 2 actions, found {actions}")));
        }
        let count = tilings * tiles_per_dim * tiles_per_dim * actions;
        let payload = &bytes[CHECKPOINT_HEADER..];
        if payload.len() != count * 8 {
            return Err(Error::Checkpoint(format!(
                "expected {count} weights, found {} bytes",
                payload.len()
            )));
        }
        let weights: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        if !weights.iter().all(|w| w.is_finite()) {
            return Err(Error::Checkpoint("non-finite weight".into()));
        }
        Ok(Self {
            tilings,
            tiles_per_dim,
            actions,
            weights,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|source| Error::OutputUnwritable {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// `Q(s, a) = Σ_{i ∈ features(s)} w[i, a]`.
pub fn q_value(qw: &QWeights, features: &[usize], action: Action) -> Result<f64> {
    features
        .iter()
        .map(|&i| qw.slot(i, action).map(|s| qw.weights[s]))
        .sum()
}

fn greedy(qw: &QWeights, features: &[usize]) -> Result<(Action, f64)> {
    let mut best = (Action::ALL[0], q_value(qw, features, Action::ALL[0])?);
    for &action in &Action::ALL[1..] {
        let q = q_value(qw, features, action)?;
        if q > best.1 {
            best = (action, q);
        }
    }
    Ok(best)
}

/// ε-greedy selection; exact ties go to the first action in [`Action::ALL`].
pub fn select_action<R: Rng + ?Sized>(
    qw: &QWeights,
    features: &[usize],
    epsilon: f64,
    rng: &mut R,
) -> Result<Action> {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return Ok(Action::ALL[rng.random_range(0..Action::ALL.len())]);
    }
    greedy(qw, features).map(|(a, _)| a)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QLearningParams {
    /// Step size applied to every active weight.
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for QLearningParams {
    fn default() -> Self {
        Self {
            alpha: 0.5 / 8.0,
            gamma: 1.0,
            epsilon: 0.1,
            seed: 0,
        }
    }
}

impl QLearningParams {
    pub fn validate(&self) -> Result<()> {
        if (0.0..=1.0).contains(&self.epsilon)
            && self.alpha > 0.0
            && self.alpha.is_finite()
            && self.gamma > 0.0
            && self.gamma <= 1.0
        {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "Q-learning needs 0 <= epsilon <= 1, alpha > 0, 0 < gamma <= 1; got {self:?}"
            )))
        }
    }
}

/// TD(0) Q-learning step:
/// `δ = r + γ·max_a' Q(s', a')·(1 − done) − Q(s, a)`, then `w[i, a] += α·δ`
/// for every active feature `i` of `s`.
///
/// Returns δ. `alpha` is not range-checked here so that `α = 0` can be used
/// as a no-op.
pub fn q_update(
    qw: &mut QWeights,
    features: &[usize],
    action: Action,
    reward: f64,
    next_features: &[usize],
    done: bool,
    params: &QLearningParams,
) -> Result<f64> {
    let current = q_value(qw, features, action)?;
    let target = if done {
        reward
    } else {
        reward + params.gamma * greedy(qw, next_features)?.1
    };
    let delta = target - current;
    if !delta.is_finite() {
        return Err(Error::NonFinite("TD error"));
    }
    let step = params.alpha * delta;
    if step != 0.0 {
        for &i in features {
            let slot = qw.slot(i, action)?;
            qw.weights[slot] += step;
        }
    }
    Ok(delta)
}

/// Q-learning controller acting on the Kalman estimate.
#[derive(Debug, Clone)]
pub struct QLearningAgent {
    coder: TileCoder,
    weights: QWeights,
    params: QLearningParams,
    rng: ChaCha8Rng,
    features: Vec<usize>,
    next_features: Vec<usize>,
}

impl QLearningAgent {
    pub fn new(coder: TileCoder, params: QLearningParams) -> Result<Self> {
        params.validate()?;
        let weights = QWeights::zeros(&coder);
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            features: Vec::with_capacity(coder.tilings()),
            next_features: Vec::with_capacity(coder.tilings()),
            coder,
            weights,
            params,
        })
    }

    pub fn with_weights(coder: TileCoder, params: QLearningParams, weights: QWeights) -> Result<Self> {
        if !weights.matches(&coder) {
            return Err(Error::Checkpoint(format!(
                "checkpoint shape {}x{} does not match tile coder {}x{}",
                weights.tilings,
                weights.tiles_per_dim,
                coder.tilings(),
                coder.tiles_per_dim()
            )));
        }
        let mut agent = Self::new(coder, params)?;
        agent.weights = weights;
        Ok(agent)
    }

    pub fn coder(&self) -> &TileCoder {
        &self.coder
    }

    pub fn weights(&self) -> &QWeights {
        &self.weights
    }

    pub fn params(&self) -> &QLearningParams {
        &self.params
    }
}

impl Agent for QLearningAgent {
    fn name(&self) -> &'static str {
        "qlearning"
    }

    fn act(&mut self, obs: &Observation, greedy: bool) -> Result<Action> {
        self.coder.features_into(obs.x_est, obs.v_est, &mut self.features);
        let epsilon = if greedy { 0.0 } else { self.params.epsilon };
        select_action(&self.weights, &self.features, epsilon, &mut self.rng)
    }

    fn learn(&mut self, t: &Transition<'_>) -> Result<()> {
        self.coder
            .features_into(t.observation.x_est, t.observation.v_est, &mut self.features);
        self.coder
            .features_into(t.next.x_est, t.next.v_est, &mut self.next_features);
        q_update(
            &mut self.weights,
            &self.features,
            t.action,
            t.reward,
            &self.next_features,
            t.terminal,
            &self.params,
        )
        .map(drop)
    }

    fn is_learning(&self) -> bool {
        true
    }

    fn weights(&self) -> Option<&QWeights> {
        Some(&self.weights)
    }

    fn boxed_clone(&self) -> Box<dyn Agent> {
        Box::new(self.clone())
    }
}
