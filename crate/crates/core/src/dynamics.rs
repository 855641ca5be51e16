//! Ground-truth plant: a point mass on a cosine valley.
//!
//! The track height is `h(x) = A·(1 − cos(π·x/L))` on `[−L, L]`. The car
//! follows the small-slope mountain-car model
//!
//! ```text
//! v̇ = force − g·h'(x) − k_f·v
//! ẋ = v
//! ```
//!
//! integrated with semi-implicit Euler (velocity first, then position with
//! the new velocity). The track ends are inelastic end stops.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::env::Action;
use crate::error::{Error, Result};

/// Valley geometry in image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackProfile {
    /// Half width `L`; the track spans `[−L, L]`.
    pub half_width: f64,
    /// Height amplitude `A`; `h(±L) = 2A`.
    pub amplitude: f64,
    /// Goal position on the left hill; reached when `x ≤ goal_x`.
    pub goal_x: f64,
}

impl Default for TrackProfile {
    fn default() -> Self {
        Self {
            half_width: 120.0,
            amplitude: 40.0,
            goal_x: -80.0,
        }
    }
}

impl TrackProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(Error::Config("track.half_width must be positive".into()));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::Config("track.amplitude must be positive".into()));
        }
        if !(self.goal_x > -self.half_width && self.goal_x < 0.0) {
            return Err(Error::Config(format!(
                "track.goal_x must lie in (-{}, 0)",
                self.half_width
            )));
        }
        Ok(())
    }

    /// Track height `h(x)`; zero at the valley bottom.
    pub fn height(&self, x: f64) -> f64 {
        self.amplitude * (1.0 - (PI * x / self.half_width).cos())
    }

    /// Track gradient `h'(x)`, checked against the track bounds.
    pub fn slope(&self, x: f64) -> Result<f64> {
        if x.is_nan() || x.abs() > self.half_width {
            return Err(Error::OutOfTrack {
                x,
                half_width: self.half_width,
            });
        }
        Ok(self.slope_unchecked(x))
    }

    fn slope_unchecked(&self, x: f64) -> f64 {
        self.amplitude * (PI / self.half_width) * (PI * x / self.half_width).sin()
    }

    /// Steepest gradient on the track, at `x = ±L/2`.
    pub fn max_slope(&self) -> f64 {
        self.amplitude * PI / self.half_width
    }

    pub fn check_goal(&self, state: &CarState) -> bool {
        state.x <= self.goal_x
    }
}

/// Ground-truth plant state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CarState {
    /// Position (px), positive to the right.
    pub x: f64,
    /// Velocity (px/s).
    pub v: f64,
    /// Simulation time (s).
    pub t: f64,
}

/// Physical constants of the simulated rig.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    /// Gravity scale (px/s²).
    pub g_eff: f64,
    /// Commanded acceleration magnitude (px/s²).
    pub a_max: f64,
    /// Viscous friction coefficient (1/s).
    pub k_f: f64,
    /// Sign applied to the action label when mapping it to a force; `−1`
    /// makes `Left` push along `+x`.
    pub polarity: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            g_eff: 400.0,
            a_max: 200.0,
            k_f: 0.15,
            polarity: -1.0,
        }
    }
}

impl PlantParams {
    pub fn validate(&self, track: &TrackProfile) -> Result<()> {
        if !(self.g_eff > 0.0 && self.g_eff.is_finite()) {
            return Err(Error::Config("plant.g_eff must be positive".into()));
        }
        if !(self.a_max > 0.0 && self.a_max.is_finite()) {
            return Err(Error::Config("plant.a_max must be positive".into()));
        }
        if self.a_max >= self.g_eff * track.max_slope() {
            return Err(Error::Config(format!(
                "plant.a_max = {} must be below g_eff * max slope = {:.3}; \
                 otherwise the car climbs the hill in one pass",
                self.a_max,
                self.g_eff * track.max_slope()
            )));
        }
        if !(self.k_f >= 0.0 && self.k_f.is_finite()) {
            return Err(Error::Config("plant.k_f must be non-negative".into()));
        }
        if self.polarity != 1.0 && self.polarity != -1.0 {
            return Err(Error::Config("plant.polarity must be +1 or -1".into()));
        }
        Ok(())
    }
}

/// Bang-bang actuation: always full magnitude, only the direction changes.
pub fn force_of(action: Action, params: &PlantParams) -> f64 {
    match action {
        Action::Right => params.polarity * params.a_max,
        Action::Left => -params.polarity * params.a_max,
    }
}

/// Advance the plant by one semi-implicit Euler step.
pub fn dynamics_step(
    state: CarState,
    force: f64,
    params: &PlantParams,
    track: &TrackProfile,
    dt: f64,
) -> Result<CarState> {
    debug_assert!(dt > 0.0);
    let slope = track.slope(state.x)?;
    let accel = force - params.g_eff * slope - params.k_f * state.v;
    let mut v = state.v + dt * accel;
    let mut x = state.x + dt * v;
    if !(x.is_finite() && v.is_finite()) {
        return Err(Error::NonFinite("plant state"));
    }

    let l = track.half_width;
    if x > l {
        x = l;
        v = v.min(0.0);
    } else if x < -l {
        x = -l;
        v = v.max(0.0);
    }

    Ok(CarState {
        x,
        v,
        t: state.t + dt,
    })
}

/// Specific mechanical energy `½·v² + g·h(x)`.
pub fn mechanical_energy(state: &CarState, params: &PlantParams, track: &TrackProfile) -> f64 {
    0.5 * state.v * state.v + params.g_eff * track.height(state.x)
}
