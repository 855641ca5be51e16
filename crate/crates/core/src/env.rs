//! Gym-style environment API and the simulated mountain-car rig behind it.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{dynamics_step, force_of, CarState, PlantParams, TrackProfile};
use crate::error::{Error, Result};
use crate::perception::{CameraConfig, Frame, HsvThresholds, KalmanParams, Perception};

/// Fixed control period of the rig (s).
pub const DT: f64 = 0.01;

/// Direction of the commanded acceleration. There is no neutral action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Left,
    Right,
}

impl Action {
    /// Fixed action order; greedy ties resolve to the first entry.
    pub const ALL: [Action; 2] = [Action::Left, Action::Right];

    pub fn index(self) -> usize {
        match self {
            Action::Left => 0,
            Action::Right => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Left => "Left",
            Action::Right => "Right",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What an agent sees: the filtered estimate, plus the raw frame when
/// frame capture is enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub x_est: f64,
    pub v_est: f64,
    pub frame: Option<Arc<Frame>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DoneReason {
    Goal,
    Timeout,
    None,
}

impl DoneReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DoneReason::Goal => "goal",
            DoneReason::Timeout => "timeout",
            DoneReason::None => "none",
        }
    }
}

impl fmt::Display for DoneReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DoneReason {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "goal" => Ok(DoneReason::Goal),
            "timeout" => Ok(DoneReason::Timeout),
            "none" => Ok(DoneReason::None),
            other => Err(Error::Config(format!("unknown done reason {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub done_reason: DoneReason,
}

/// Lifecycle of a benchmark run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunLifecycle {
    Idle,
    Learning,
    Paused,
    Evaluating,
    Finished,
}

impl RunLifecycle {
    pub fn as_str(self) -> &'static str {
        match self {
            RunLifecycle::Idle => "idle",
            RunLifecycle::Learning => "learning",
            RunLifecycle::Paused => "paused",
            RunLifecycle::Evaluating => "evaluating",
            RunLifecycle::Finished => "finished",
        }
    }

    pub fn can_transition(self, to: RunLifecycle) -> bool {
        use RunLifecycle::*;
        matches!(
            (self, to),
            (Idle, Learning)
                | (Learning, Paused)
                | (Paused, Learning)
                | (Learning | Paused, Evaluating)
                | (Evaluating, Learning | Paused)
                | (_, Finished)
        )
    }

    pub fn transition(self, to: RunLifecycle) -> Result<RunLifecycle> {
        if self.can_transition(to) {
            Ok(to)
        } else {
            Err(Error::IllegalTransition {
                from: self.to_string(),
                to: to.to_string(),
            })
        }
    }
}

impl fmt::Display for RunLifecycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Static description of the environment for agents and tooling.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvSpec {
    pub actions: Vec<Action>,
    pub dt: f64,
    /// Position range of the track (px).
    pub x_range: (f64, f64),
    /// Nominal velocity range (px/s): the bottom speed of a car released
    /// from the track end, widened by the work the motor can do over the
    /// full track length.
    pub v_range: (f64, f64),
    pub goal_x: f64,
    pub goal: String,
    pub step_cap: u64,
}

/// Everything needed to build one rig instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub track: TrackProfile,
    pub plant: PlantParams,
    pub camera: CameraConfig,
    pub thresholds: HsvThresholds,
    pub kalman: KalmanParams,
    pub initial: CarState,
    pub step_cap: u64,
    pub capture_frames: bool,
    pub realtime: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            track: TrackProfile::default(),
            plant: PlantParams::default(),
            camera: CameraConfig::default(),
            thresholds: HsvThresholds::default(),
            kalman: KalmanParams::default(),
            initial: CarState::default(),
            step_cap: 12_000,
            capture_frames: false,
            realtime: false,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.track.validate()?;
        self.plant.validate(&self.track)?;
        self.camera.validate(&self.track)?;
        self.thresholds.validate()?;
        self.kalman.validate()?;
        if self.step_cap == 0 {
            return Err(Error::Config("step cap must be at least 1".into()));
        }
        let init = &self.initial;
        if !(init.x.abs() <= self.track.half_width && init.v.is_finite()) || init.t != 0.0 {
            return Err(Error::Config("initial state must lie on the track at t = 0".into()));
        }
        Ok(())
    }
}

/// The simulated rig: plant, camera and filter behind a reset/step API.
///
/// One instance serves one episode stream; it may move between threads
/// but is never shared.
#[derive(Debug, Clone)]
pub struct MountainCarEnv {
    config: EnvConfig,
    state: CarState,
    perception: Perception,
    rng: ChaCha8Rng,
    steps: u64,
    done: bool,
    started: bool,
    last_tick: Option<Instant>,
}

impl MountainCarEnv {
    pub fn new(config: EnvConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let perception = Perception::new(
            config.track,
            config.camera.clone(),
            config.thresholds,
            config.kalman,
            config.capture_frames,
        );
        Ok(Self {
            state: config.initial,
            perception,
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            steps: 0,
            done: false,
            started: false,
            last_tick: None,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    /// Ground-truth plant state (for telemetry and tests; agents only get
    /// observations).
    pub fn true_state(&self) -> &CarState {
        &self.state
    }

    pub fn perception(&self) -> &Perception {
        &self.perception
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn set_step_cap(&mut self, step_cap: u64) -> Result<()> {
        if step_cap == 0 {
            return Err(Error::Config("step cap must be at least 1".into()));
        }
        self.config.step_cap = step_cap;
        Ok(())
    }

    pub fn spec(&self) -> EnvSpec {
        let track = &self.config.track;
        let plant = &self.config.plant;
        let v_bound = (2.0
            * (plant.g_eff * track.height(track.half_width) + plant.a_max * 2.0 * track.half_width))
            .sqrt();
        EnvSpec {
            actions: Action::ALL.to_vec(),
            dt: DT,
            x_range: (-track.half_width, track.half_width),
            v_range: (-v_bound, v_bound),
            goal_x: track.goal_x,
            goal: format!("reach x <= {} px on the left hill", track.goal_x),
            step_cap: self.config.step_cap,
        }
    }

    /// Put the car back at the configured initial state. With `Some(seed)`
    /// the noise stream restarts from that seed.
    pub fn reset(&mut self, seed: Option<u64>) -> Result<Observation> {
        if let Some(seed) = seed {
            self.rng = ChaCha8Rng::seed_from_u64(seed);
        }
        self.state = self.config.initial;
        self.steps = 0;
        self.done = false;
        self.started = true;
        self.last_tick = None;
        self.perception.reset(&self.state, &mut self.rng)
    }

    /// Apply `action` for exactly one control period.
    ///
    /// The returned observation is built from the frame captured at the
    /// start of the period, so it lags the plant by one step.
    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        if !self.started {
            return Err(Error::NotReset);
        }
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        if self.config.realtime {
            self.pace();
        }

        let captured = self.state;
        let force = force_of(action, &self.config.plant);
        let mut next = dynamics_step(self.state, force, &self.config.plant, &self.config.track, DT)?;
        self.steps += 1;
        next.t = self.steps as f64 * DT;
        self.state = next;

        let observation = self.perception.observe(&captured, DT, &mut self.rng)?;
        let done_reason = if self.config.track.check_goal(&self.state) {
            DoneReason::Goal
        } else if self.steps >= self.config.step_cap {
            DoneReason::Timeout
        } else {
            DoneReason::None
        };
        self.done = done_reason != DoneReason::None;
        Ok(StepResult {
            observation,
            reward: -1.0,
            done: self.done,
            done_reason,
        })
    }

    fn pace(&mut self) {
        let period = Duration::from_secs_f64(DT);
        if let Some(last) = self.last_tick {
            let elapsed = last.elapsed();
            if elapsed < period {
                std::thread::sleep(period - elapsed);
            }
        }
        self.last_tick = Some(Instant::now());
    }
}
