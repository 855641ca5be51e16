//! Measurement chain of the rig: camera frame → HSV threshold → spatial
//! moments → Kalman filter.

mod filter;
mod frame;
mod kalman;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use filter::{centroid_from_moments, hsv_filter, hsv_filter_into, HsvThresholds, PixelMask};
pub use frame::{render_frame, CameraConfig, Frame, FrameRenderer, Hsv, BACKGROUND, MARKER};
pub use kalman::{is_spd, kalman_predict, kalman_update, KalmanEstimate};

use crate::dynamics::{CarState, TrackProfile};
use crate::env::Observation;
use crate::error::{Error, Result};

/// Tuning of the tracking filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanParams {
    /// Process-noise intensity (px²/s³).
    pub q: f64,
    /// Measurement variance (px²).
    pub r: f64,
    /// Initial position variance (px²).
    pub init_var_x: f64,
    /// Initial velocity variance (px²/s²).
    pub init_var_v: f64,
}

impl Default for KalmanParams {
    fn default() -> Self {
        Self {
            q: 10_000.0,
            r: 4.0,
            init_var_x: 25.0,
            init_var_v: 100.0,
        }
    }
}

impl KalmanParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if self.q >= 0.0 && self.q.is_finite() && positive(self.r) && positive(self.init_var_x) && positive(self.init_var_v) {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Kalman parameters {self:?}")))
        }
    }
}

/// Per-environment perception state.
#[derive(Debug, Clone)]
pub struct Perception {
    track: TrackProfile,
    camera: CameraConfig,
    thresholds: HsvThresholds,
    kalman: KalmanParams,
    capture_frames: bool,
    renderer: FrameRenderer,
    mask: PixelMask,
    estimate: KalmanEstimate,
    last_measurement: Option<f64>,
}

impl Perception {
    pub fn new(
        track: TrackProfile,
        camera: CameraConfig,
        thresholds: HsvThresholds,
        kalman: KalmanParams,
        capture_frames: bool,
    ) -> Self {
        let renderer = FrameRenderer::new(&camera);
        Self {
            track,
            camera,
            thresholds,
            kalman,
            capture_frames,
            renderer,
            mask: PixelMask::default(),
            estimate: KalmanEstimate::new(0.0, 0.0, kalman.init_var_x, kalman.init_var_v),
            last_measurement: None,
        }
    }

    pub fn camera(&self) -> &CameraConfig {
        &self.camera
    }

    pub fn estimate(&self) -> &KalmanEstimate {
        &self.estimate
    }

    /// Most recent rendered frame.
    pub fn frame(&self) -> &Frame {
        self.renderer.frame()
    }

    /// World position measured from the most recent frame, if the marker was found.
    pub fn last_measurement(&self) -> Option<f64> {
        self.last_measurement
    }

    fn measure<R: Rng + ?Sized>(&mut self, state: &CarState, rng: &mut R) -> Option<f64> {
        let frame = self.renderer.render(state, &self.track, &self.camera, rng);
        hsv_filter_into(frame, &self.thresholds, &mut self.mask);
        self.last_measurement =
            centroid_from_moments(&self.mask).map(|(col, _)| self.camera.image_to_world(col));
        self.last_measurement
    }

    fn observation(&self) -> Observation {
        Observation {
            x_est: self.estimate.position(),
            v_est: self.estimate.velocity(),
            frame: self
                .capture_frames
                .then(|| Arc::new(self.renderer.frame().clone())),
        }
    }

    /// Re-initialise the filter at `initial`, refined by one frame if the
    /// marker is visible.
    pub fn reset<R: Rng + ?Sized>(&mut self, initial: &CarState, rng: &mut R) -> Result<Observation> {
        self.estimate = KalmanEstimate::new(
            initial.x,
            initial.v,
            self.kalman.init_var_x,
            self.kalman.init_var_v,
        );
        if let Some(z) = self.measure(initial, rng) {
            self.estimate = kalman_update(&self.estimate, z, self.kalman.r)?;
        }
        Ok(self.observation())
    }

    /// One control period. The frame of `captured` (the plant at the start
    /// of the period) is fused if the marker is detected, then the estimate
    /// is propagated by `dt` to the end of the period. Missed detections
    /// leave only the prediction.
    pub fn observe<R: Rng + ?Sized>(
        &mut self,
        captured: &CarState,
        dt: f64,
        rng: &mut R,
    ) -> Result<Observation> {
        let fused = match self.measure(captured, rng) {
            Some(z) => kalman_update(&self.estimate, z, self.kalman.r)?,
            None => self.estimate,
        };
        self.estimate = kalman_predict(&fused, dt, self.kalman.q)?;
        Ok(self.observation())
    }
}
