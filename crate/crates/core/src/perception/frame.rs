//! Synthetic camera: renders the car's yellow marker into an HSV frame.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{CarState, TrackProfile};
use crate::error::{Error, Result};

/// One HSV pixel: hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Hsv {
    pub h: f32,
    pub s: f32,
    pub v: f32,
}

impl Hsv {
    pub const fn new(h: f32, s: f32, v: f32) -> Self {
        Self { h, s, v }
    }

    pub fn is_valid(&self) -> bool {
        (0.0..360.0).contains(&self.h) && (0.0..=1.0).contains(&self.s) && (0.0..=1.0).contains(&self.v)
    }

    /// Standard HSV → RGB conversion, 8 bits per channel.
    pub fn to_rgb(self) -> [u8; 3] {
        let c = self.v * self.s;
        let hp = self.h / 60.0;
        let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
        let (r, g, b) = match hp as u32 {
            0 => (c, x, 0.0),
            1 => (x, c, 0.0),
            2 => (0.0, c, x),
            3 => (0.0, x, c),
            4 => (x, 0.0, c),
            _ => (c, 0.0, x),
        };
        let m = self.v - c;
        let q = |u: f32| ((u + m) * 255.0).round().clamp(0.0, 255.0) as u8;
        [q(r), q(g), q(b)]
    }
}

/// Marker colour painted on the car.
pub const MARKER: Hsv = Hsv::new(57.5, 0.9, 0.9);
/// Scene background; its hue is far from the yellow band.
pub const BACKGROUND: Hsv = Hsv::new(215.0, 0.35, 0.4);

/// Row-major HSV image.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<Hsv>,
}

impl Frame {
    pub fn filled(width: usize, height: usize, fill: Hsv) -> Self {
        Self {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[Hsv] {
        &self.pixels
    }

    pub fn get(&self, col: usize, row: usize) -> Hsv {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, px: Hsv) {
        self.pixels[row * self.width + col] = px;
    }

    /// Little-endian `f32` triples in row-major order; used to compare frames
    /// bit for bit.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.pixels.len() * 12);
        for px in &self.pixels {
            out.extend_from_slice(&px.h.to_le_bytes());
            out.extend_from_slice(&px.s.to_le_bytes());
            out.extend_from_slice(&px.v.to_le_bytes());
        }
        out
    }

    /// Write the frame as a binary PPM (`P6`) image for inspection.
    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        let unwritable = |source| Error::OutputUnwritable {
            path: path.display().to_string(),
            source,
        };
        let mut buf = Vec::with_capacity(self.pixels.len() * 3 + 20);
        write!(buf, "P6\n{} {}\n255\n", self.width, self.height).map_err(unwritable)?;
        for px in &self.pixels {
            buf.extend_from_slice(&px.to_rgb());
        }
        std::fs::write(path, buf).map_err(unwritable)
    }
}

/// Camera placement and noise model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub width: usize,
    pub height: usize,
    /// Marker disk radius in image pixels.
    pub marker_radius: f64,
    /// Image pixels per world pixel.
    pub scale: f64,
    /// Image column of world `x = 0`.
    pub origin_col: f64,
    /// Image row of track height zero (rows grow downward).
    pub baseline_row: f64,
    /// Standard deviation of the per-pixel marker hue jitter (degrees).
    pub hue_jitter_deg: f64,
    /// Probability that a single marker pixel is lost.
    pub pixel_dropout: f64,
    /// Per-pixel probability of a spurious marker-coloured pixel.
    pub clutter_rate: f64,
    /// Probability that a whole frame is lost.
    pub frame_dropout: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            width: 256,
            height: 120,
            marker_radius: 4.0,
            scale: 1.0,
            origin_col: 128.0,
            baseline_row: 110.0,
            hue_jitter_deg: 4.0,
            pixel_dropout: 0.05,
            clutter_rate: 2e-5,
            frame_dropout: 0.02,
        }
    }
}

impl CameraConfig {
    /// The same geometry with every noise source switched off.
    pub fn noiseless(&self) -> Self {
        Self {
            hue_jitter_deg: 0.0,
            pixel_dropout: 0.0,
            clutter_rate: 0.0,
            frame_dropout: 0.0,
            ..self.clone()
        }
    }

    /// Image coordinates (col, row) of the marker centre for world position `x`.
    pub fn world_to_image(&self, x: f64, track: &TrackProfile) -> (f64, f64) {
        (
            self.origin_col + self.scale * x,
            self.baseline_row - self.scale * track.height(x),
        )
    }

    /// World position whose image column is `col`.
    pub fn image_to_world(&self, col: f64) -> f64 {
        (col - self.origin_col) / self.scale
    }

    pub fn validate(&self, track: &TrackProfile) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("camera: {msg}")));
        if self.width == 0 || self.height == 0 {
            return bad("frame size must be positive");
        }
        if self.marker_radius.is_nan() || self.marker_radius <= 0.0 || self.scale.is_nan() || self.scale <= 0.0 {
            return bad("marker_radius and scale must be positive");
        }
        for p in [self.pixel_dropout, self.clutter_rate, self.frame_dropout] {
            if !(0.0..=1.0).contains(&p) {
                return bad("probabilities must lie in [0, 1]");
            }
        }
        if !(self.hue_jitter_deg >= 0.0 && self.hue_jitter_deg.is_finite()) {
            return bad("hue_jitter_deg must be non-negative");
        }
        let l = track.half_width;
        let r = self.marker_radius;
        let (left, _) = self.world_to_image(-l, track);
        let (right, _) = self.world_to_image(l, track);
        let (_, top) = self.world_to_image(l, track);
        let (_, bottom) = self.world_to_image(0.0, track);
        let top = top.min(self.world_to_image(-l, track).1);
        if left - r < 0.0
            || right + r > (self.width - 1) as f64
            || top - r < 0.0
            || bottom + r > (self.height - 1) as f64
        {
            return bad("marker disk leaves the frame somewhere on the track");
        }
        Ok(())
    }
}

/// Integer pixels covered by a disk, in row-major order.
pub(crate) fn disk_pixels(
    center: (f64, f64),
    radius: f64,
    width: usize,
    height: usize,
) -> impl Iterator<Item = (usize, usize)> {
    let (cx, cy) = center;
    let r2 = radius * radius;
    let row_lo = (cy - radius).ceil().max(0.0) as usize;
    let row_hi = ((cy + radius).floor() as usize).min(height - 1);
    let col_lo = (cx - radius).ceil().max(0.0) as usize;
    let col_hi = ((cx + radius).floor() as usize).min(width - 1);
    (row_lo..=row_hi).flat_map(move |row| {
        (col_lo..=col_hi).filter_map(move |col| {
            let dx = col as f64 - cx;
            let dy = row as f64 - cy;
            (dx * dx + dy * dy <= r2).then_some((col, row))
        })
    })
}

/// Renders frames into a reusable buffer. Only pixels touched by the
/// previous frame are restored, so rendering costs scale with the marker
/// and clutter, not the frame size.
#[derive(Debug, Clone)]
pub struct FrameRenderer {
    frame: Frame,
    dirty: Vec<usize>,
}

impl FrameRenderer {
    pub fn new(cam: &CameraConfig) -> Self {
        Self {
            frame: Frame::filled(cam.width, cam.height, BACKGROUND),
            dirty: Vec::new(),
        }
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn render<R: Rng + ?Sized>(
        &mut self,
        state: &CarState,
        track: &TrackProfile,
        cam: &CameraConfig,
        rng: &mut R,
    ) -> &Frame {
        if self.frame.width != cam.width || self.frame.height != cam.height {
            *self = Self::new(cam);
        }
        for idx in self.dirty.drain(..) {
            self.frame.pixels[idx] = BACKGROUND;
        }

        if cam.frame_dropout > 0.0 && rng.random::<f64>() < cam.frame_dropout {
            return &self.frame;
        }

        let jitter = (cam.hue_jitter_deg > 0.0)
            .then(|| Normal::new(0.0, cam.hue_jitter_deg).expect("finite jitter"));
        let center = cam.world_to_image(state.x, track);
        let width = cam.width;
        for (col, row) in disk_pixels(center, cam.marker_radius, cam.width, cam.height) {
            if cam.pixel_dropout > 0.0 && rng.random::<f64>() < cam.pixel_dropout {
                continue;
            }
            let mut px = MARKER;
            if let Some(normal) = &jitter {
                let h = (px.h as f64 + normal.sample(rng)).rem_euclid(360.0) as f32;
                // rem_euclid can round up to exactly 360.0 in f32
                px.h = if h >= 360.0 { 0.0 } else { h };
            }
            let idx = row * width + col;
            self.frame.pixels[idx] = px;
            self.dirty.push(idx);
        }

        if cam.clutter_rate > 0.0 {
            let total = self.frame.pixels.len();
            let count = Binomial::new(total as u64, cam.clutter_rate)
                .expect("clutter rate validated")
                .sample(rng);
            for _ in 0..count {
                let idx = rng.random_range(0..total);
                self.frame.pixels[idx] = MARKER;
                self.dirty.push(idx);
            }
        }
        &self.frame
    }
}

/// Render a single frame of the car at `state`.
pub fn render_frame<R: Rng + ?Sized>(
    state: &CarState,
    track: &TrackProfile,
    cam: &CameraConfig,
    rng: &mut R,
) -> Frame {
    let mut renderer = FrameRenderer::new(cam);
    renderer.render(state, track, cam, rng);
    renderer.frame
}
