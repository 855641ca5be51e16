//! Run configuration and its flat `key = value` file format.
//!
//! ```text
//! # comment
//! agent = qlearning
//! episodes = 50
//! plant.k_f = 0.15
//! ```
//!
//! Keys are listed in [`RunConfig::KEYS`]. Later assignments win, so CLI
//! overrides are applied by calling [`RunConfig::set`] after loading a file.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::{QLearningParams, TileCoder, DEFAULT_V_THRESH};
use crate::env::EnvConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Reference,
    QLearning,
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentKind::Reference => "reference",
            AgentKind::QLearning => "qlearning",
        })
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reference" => Ok(AgentKind::Reference),
            "qlearning" => Ok(AgentKind::QLearning),
            other => Err(Error::Config(format!(
                "unknown agent {other:?} (expected reference or qlearning)"
            ))),
        }
    }
}

/// Tile-coder shape for the Q-learning agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileSpec {
    pub tilings: usize,
    pub tiles_per_dim: usize,
    /// Velocity bound (px/s); the position bounds come from the track.
    pub v_lim: f64,
}

impl Default for TileSpec {
    fn default() -> Self {
        Self {
            tilings: 8,
            tiles_per_dim: 8,
            v_lim: 300.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub agent: AgentKind,
    pub v_thresh: f64,
    pub qlearning: QLearningParams,
    pub tiles: TileSpec,
    pub episodes: u64,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub serve: bool,
    pub port: u16,
    /// Checkpoint to evaluate greedily instead of training.
    pub eval_checkpoint: Option<PathBuf>,
    pub dump_dir: Option<PathBuf>,
    /// Global step numbers (counted across the run) whose frames are dumped.
    pub dump_steps: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            agent: AgentKind::QLearning,
            v_thresh: DEFAULT_V_THRESH,
            qlearning: QLearningParams::default(),
            tiles: TileSpec::default(),
            episodes: 50,
            seed: 0,
            out_dir: None,
            serve: false,
            port: 8080,
            eval_checkpoint: None,
            dump_dir: None,
            dump_steps: Vec::new(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

/// Split `key = value` lines, skipping blanks and `#` comments.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected `key = value`, got {raw:?}", lineno + 1))
        })?;
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    pub const KEYS: &'static [&'static str] = &[
        "agent",
        "episodes",
        "steps_cap",
        "seed",
        "realtime",
        "out",
        "serve",
        "port",
        "eval.checkpoint",
        "capture_frames",
        "dump.dir",
        "dump.steps",
        "track.half_width",
        "track.amplitude",
        "track.goal_x",
        "plant.g_eff",
        "plant.a_max",
        "plant.k_f",
        "plant.polarity",
        "initial.x",
        "initial.v",
        "camera.width",
        "camera.height",
        "camera.marker_radius",
        "camera.scale",
        "camera.origin_col",
        "camera.baseline_row",
        "camera.hue_jitter_deg",
        "camera.pixel_dropout",
        "camera.clutter_rate",
        "camera.frame_dropout",
        "hsv.h_min",
        "hsv.h_max",
        "hsv.s_min",
        "hsv.v_min",
        "kalman.q",
        "kalman.r",
        "kalman.init_var_x",
        "kalman.init_var_v",
        "reference.v_thresh",
        "qlearning.alpha",
        "qlearning.gamma",
        "qlearning.epsilon",
        "qlearning.tilings",
        "qlearning.tiles_per_dim",
        "qlearning.v_lim",
    ];

    pub fn from_text(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (key, value) in parse_kv(text)? {
            config.set(&key, &value)?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let env = &mut self.env;
        match key {
            "agent" => self.agent = value.parse()?,
            "episodes" => self.episodes = parse(key, value)?,
            "steps_cap" => env.step_cap = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "realtime" => env.realtime = parse_bool(key, value)?,
            "out" => self.out_dir = optional_path(value),
            "serve" => self.serve = parse_bool(key, value)?,
            "port" => self.port = parse(key, value)?,
            "eval.checkpoint" => self.eval_checkpoint = optional_path(value),
            "capture_frames" => env.capture_frames = parse_bool(key, value)?,
            "dump.dir" => self.dump_dir = optional_path(value),
            "dump.steps" => {
                self.dump_steps = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse(key, s))
                    .collect::<Result<_>>()?
            }
            "track.half_width" => env.track.half_width = parse(key, value)?,
            "track.amplitude" => env.track.amplitude = parse(key, value)?,
            "track.goal_x" => env.track.goal_x = parse(key, value)?,
            "plant.g_eff" => env.plant.g_eff = parse(key, value)?,
            "plant.a_max" => env.plant.a_max = parse(key, value)?,
            "plant.k_f" => env.plant.k_f = parse(key, value)?,
            "plant.polarity" => env.plant.polarity = parse(key, value)?,
            "initial.x" => env.initial.x = parse(key, value)?,
            "initial.v" => env.initial.v = parse(key, value)?,
            "camera.width" => env.camera.width = parse(key, value)?,
            "camera.height" => env.camera.height = parse(key, value)?,
            "camera.marker_radius" => env.camera.marker_radius = parse(key, value)?,
            "camera.scale" => env.camera.scale = parse(key, value)?,
            "camera.origin_col" => env.camera.origin_col = parse(key, value)?,
            "camera.baseline_row" => env.camera.baseline_row = parse(key, value)?,
            "camera.hue_jitter_deg" => env.camera.hue_jitter_deg = parse(key, value)?,
            "camera.pixel_dropout" => env.camera.pixel_dropout = parse(key, value)?,
            "camera.clutter_rate" => env.camera.clutter_rate = parse(key, value)?,
            "camera.frame_dropout" => env.camera.frame_dropout = parse(key, value)?,
            "hsv.h_min" => env.thresholds.h_min = parse(key, value)?,
            "hsv.h_max" => env.thresholds.h_max = parse(key, value)?,
            "hsv.s_min" => env.thresholds.s_min = parse(key, value)?,
            "hsv.v_min" => env.thresholds.v_min = parse(key, value)?,
            "kalman.q" => env.kalman.q = parse(key, value)?,
            "kalman.r" => env.kalman.r = parse(key, value)?,
            "kalman.init_var_x" => env.kalman.init_var_x = parse(key, value)?,
            "kalman.init_var_v" => env.kalman.init_var_v = parse(key, value)?,
            "reference.v_thresh" => self.v_thresh = parse(key, value)?,
            "qlearning.alpha" => self.qlearning.alpha = parse(key, value)?,
            "qlearning.gamma" => self.qlearning.gamma = parse(key, value)?,
            "qlearning.epsilon" => self.qlearning.epsilon = parse(key, value)?,
            "qlearning.tilings" => self.tiles.tilings = parse(key, value)?,
            "qlearning.tiles_per_dim" => self.tiles.tiles_per_dim = parse(key, value)?,
            "qlearning.v_lim" => self.tiles.v_lim = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        let env = &self.env;
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        match key {
            "agent" => self.agent.to_string(),
            "episodes" => self.episodes.to_string(),
            "steps_cap" => env.step_cap.to_string(),
            "seed" => self.seed.to_string(),
            "realtime" => env.realtime.to_string(),
            "out" => path(&self.out_dir),
            "serve" => self.serve.to_string(),
            "port" => self.port.to_string(),
            "eval.checkpoint" => path(&self.eval_checkpoint),
            "capture_frames" => env.capture_frames.to_string(),
            "dump.dir" => path(&self.dump_dir),
            "dump.steps" => self
                .dump_steps
                .iter()
                .map(u64::to_string)
                .collect::<Vec<_>>()
                .join(","),
            "track.half_width" => env.track.half_width.to_string(),
            "track.amplitude" => env.track.amplitude.to_string(),
            "track.goal_x" => env.track.goal_x.to_string(),
            "plant.g_eff" => env.plant.g_eff.to_string(),
            "plant.a_max" => env.plant.a_max.to_string(),
            "plant.k_f" => env.plant.k_f.to_string(),
            "plant.polarity" => env.plant.polarity.to_string(),
            "initial.x" => env.initial.x.to_string(),
            "initial.v" => env.initial.v.to_string(),
            "camera.width" => env.camera.width.to_string(),
            "camera.height" => env.camera.height.to_string(),
            "camera.marker_radius" => env.camera.marker_radius.to_string(),
            "camera.scale" => env.camera.scale.to_string(),
            "camera.origin_col" => env.camera.origin_col.to_string(),
            "camera.baseline_row" => env.camera.baseline_row.to_string(),
            "camera.hue_jitter_deg" => env.camera.hue_jitter_deg.to_string(),
            "camera.pixel_dropout" => env.camera.pixel_dropout.to_string(),
            "camera.clutter_rate" => env.camera.clutter_rate.to_string(),
            "camera.frame_dropout" => env.camera.frame_dropout.to_string(),
            "hsv.h_min" => env.thresholds.h_min.to_string(),
            "hsv.h_max" => env.thresholds.h_max.to_string(),
            "hsv.s_min" => env.thresholds.s_min.to_string(),
            "hsv.v_min" => env.thresholds.v_min.to_string(),
            "kalman.q" => env.kalman.q.to_string(),
            "kalman.r" => env.kalman.r.to_string(),
            "kalman.init_var_x" => env.kalman.init_var_x.to_string(),
            "kalman.init_var_v" => env.kalman.init_var_v.to_string(),
            "reference.v_thresh" => self.v_thresh.to_string(),
            "qlearning.alpha" => self.qlearning.alpha.to_string(),
            "qlearning.gamma" => self.qlearning.gamma.to_string(),
            "qlearning.epsilon" => self.qlearning.epsilon.to_string(),
            "qlearning.tilings" => self.tiles.tilings.to_string(),
            "qlearning.tiles_per_dim" => self.tiles.tiles_per_dim.to_string(),
            "qlearning.v_lim" => self.tiles.v_lim.to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Full config in the file format, every key present, in [`Self::KEYS`] order.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        for key in Self::KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        if self.episodes == 0 {
            return Err(Error::Config("episode cap must be at least 1".into()));
        }
        if !(self.v_thresh >= 0.0 && self.v_thresh.is_finite()) {
            return Err(Error::Config("reference.v_thresh must be non-negative".into()));
        }
        self.qlearning.validate()?;
        if !(self.tiles.v_lim > 0.0 && self.tiles.v_lim.is_finite()) {
            return Err(Error::Config("qlearning.v_lim must be positive".into()));
        }
        self.tile_coder().map(drop)
    }

    pub fn tile_coder(&self) -> Result<TileCoder> {
        let l = self.env.track.half_width;
        TileCoder::new(
            (-l, l),
            (-self.tiles.v_lim, self.tiles.v_lim),
            self.tiles.tilings,
            self.tiles.tiles_per_dim,
        )
    }
}
