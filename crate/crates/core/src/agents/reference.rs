//! Hand-engineered bang-bang swing policy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Agent;
use crate::env::{Action, Observation};
use crate::error::Result;

/// Default speed below which the reference policy picks a random direction (px/s).
pub const DEFAULT_V_THRESH: f64 = 50.0;

/// Slow car: pick a direction at random. Otherwise `v > 0` selects `Left`
/// and `v ≤ 0` selects `Right`; with the default plant polarity both push
/// along the current velocity and pump energy into the swing.
pub fn reference_policy<R: Rng + ?Sized>(obs: &Observation, v_thresh: f64, rng: &mut R) -> Action {
    let v = obs.v_est;
    if v.abs() < v_thresh {
        if rng.random::<bool>() {
            Action::Left
        } else {
            Action::Right
        }
    } else if v > 0.0 {
        Action::Left
    } else {
        Action::Right
    }
}

#[derive(Debug, Clone)]
pub struct ReferenceAgent {
    v_thresh: f64,
    rng: ChaCha8Rng,
}

impl ReferenceAgent {
    pub fn new(v_thresh: f64, seed: u64) -> Self {
        Self {
            v_thresh,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Agent for ReferenceAgent {
    fn name(&self) -> &'static str {
        "reference"
    }

    fn act(&mut self, obs: &Observation, _greedy: bool) -> Result<Action> {
        Ok(reference_policy(obs, self.v_thresh, &mut self.rng))
    }

    fn boxed_clone(&self) -> Box<dyn Agent> {
        Box::new(self.clone())
    }
}
