//! Colour thresholding and spatial moments.

use serde::{Deserialize, Serialize};

use super::frame::Frame;
use crate::error::{Error, Result};

/// Fixed HSV band selecting the marker: `h_min ≤ h < h_max`, `s ≥ s_min`,
/// `v ≥ v_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HsvThresholds {
    pub h_min: f32,
    pub h_max: f32,
    pub s_min: f32,
    pub v_min: f32,
}

impl Default for HsvThresholds {
    fn default() -> Self {
        Self {
            h_min: 45.0,
            h_max: 70.0,
            s_min: 0.5,
            v_min: 0.5,
        }
    }
}

impl HsvThresholds {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 <= self.h_min
            && self.h_min < self.h_max
            && self.h_max < 360.0
            && (0.0..=1.0).contains(&self.s_min)
            && (0.0..=1.0).contains(&self.v_min);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid HSV thresholds {self:?}")))
        }
    }
}

/// Pixels accepted by the threshold, as `(col, row)` in row-major order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PixelMask {
    pixels: Vec<(u32, u32)>,
}

impl PixelMask {
    pub fn from_pixels(pixels: Vec<(u32, u32)>) -> Self {
        Self { pixels }
    }

    pub fn pixels(&self) -> &[(u32, u32)] {
        &self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

pub fn hsv_filter(frame: &Frame, th: &HsvThresholds) -> PixelMask {
    let mut mask = PixelMask::default();
    hsv_filter_into(frame, th, &mut mask);
    mask
}

/// [`hsv_filter`] writing into an existing mask to reuse its allocation.
pub fn hsv_filter_into(frame: &Frame, th: &HsvThresholds, mask: &mut PixelMask) {
    mask.pixels.clear();
    let width = frame.width();
    for (row, line) in frame.pixels().chunks_exact(width).enumerate() {
        for (col, px) in line.iter().enumerate() {
            if px.h >= th.h_min && px.h < th.h_max && px.s >= th.s_min && px.v >= th.v_min {
                mask.pixels.push((col as u32, row as u32));
            }
        }
    }
}

/// Centroid `(M10/M00, M01/M00)` of the mask, or `None` when it is empty.
pub fn centroid_from_moments(mask: &PixelMask) -> Option<(f64, f64)> {
    if mask.is_empty() {
        return None;
    }
    let (m10, m01) = mask
        .pixels
        .iter()
        .fold((0u64, 0u64), |(sx, sy), &(c, r)| (sx + c as u64, sy + r as u64));
    let m00 = mask.len() as f64;
    Some((m10 as f64 / m00, m01 as f64 / m00))
}
