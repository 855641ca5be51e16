//! Tile coding over the (position, velocity) plane.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Several offset uniform grids ("tilings") over a clamped rectangle.
/// Every input activates exactly one tile per tiling.
///
/// Tiles are `range / (tiles_per_dim − 1)` wide so that a grid shifted by
/// less than one tile still covers the whole rectangle with
/// `tiles_per_dim` tiles per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileCoder {
    x_bounds: (f64, f64),
    v_bounds: (f64, f64),
    tilings: usize,
    tiles_per_dim: usize,
    /// Per-tiling displacement in units of one tile width, each in `[0, 1)`.
    offsets: Vec<(f64, f64)>,
}

impl TileCoder {
    /// Tiling `k` is displaced by `k/n` of a tile along x and `2k/n` (mod 1) along v.
    pub fn new(x_bounds: (f64, f64), v_bounds: (f64, f64), tilings: usize, tiles_per_dim: usize) -> Result<Self> {
        let offsets = (0..tilings)
            .map(|k| {
                let step = k as f64 / tilings as f64;
                (step.fract(), (2.0 * step).fract())
            })
            .collect();
        Self::with_offsets(x_bounds, v_bounds, tiles_per_dim, offsets)
    }

    pub fn with_offsets(
        x_bounds: (f64, f64),
        v_bounds: (f64, f64),
        tiles_per_dim: usize,
        offsets: Vec<(f64, f64)>,
    ) -> Result<Self> {
        if offsets.is_empty() || tiles_per_dim < 2 {
            return Err(Error::Config("tile coder needs >= 1 tiling and >= 2 tiles per dimension".into()));
        }
        if !(x_bounds.0 < x_bounds.1 && v_bounds.0 < v_bounds.1) {
            return Err(Error::Config("tile coder bounds must be non-empty".into()));
        }
        if offsets
            .iter()
            .any(|&(ox, ov)| !((0.0..1.0).contains(&ox) && (0.0..1.0).contains(&ov)))
        {
            return Err(Error::Config("tiling offsets must lie in [0, 1)".into()));
        }
        if offsets.len() > u16::MAX as usize || tiles_per_dim > u16::MAX as usize {
            return Err(Error::Config("tile coder dimensions exceed 16 bits".into()));
        }
        Ok(Self {
            x_bounds,
            v_bounds,
            tilings: offsets.len(),
            tiles_per_dim,
            offsets,
        })
    }

    pub fn tilings(&self) -> usize {
        self.tilings
    }

    pub fn tiles_per_dim(&self) -> usize {
        self.tiles_per_dim
    }

    pub fn x_bounds(&self) -> (f64, f64) {
        self.x_bounds
    }

    pub fn v_bounds(&self) -> (f64, f64) {
        self.v_bounds
    }

    pub fn feature_count(&self) -> usize {
        self.tilings * self.tiles_per_dim * self.tiles_per_dim
    }

    fn scaled(&self, value: f64, (lo, hi): (f64, f64)) -> f64 {
        let value = if value.is_nan() { lo } else { value.clamp(lo, hi) };
        (value - lo) / (hi - lo) * (self.tiles_per_dim - 1) as f64
    }

    /// Active feature indices, one per tiling, written into `out`.
    pub fn features_into(&self, x: f64, v: f64, out: &mut Vec<usize>) {
        out.clear();
        let n = self.tiles_per_dim;
        let ux = self.scaled(x, self.x_bounds);
        let uv = self.scaled(v, self.v_bounds);
        for (k, &(ox, ov)) in self.offsets.iter().enumerate() {
            let ix = ((ux + ox).floor() as usize).min(n - 1);
            let iv = ((uv + ov).floor() as usize).min(n - 1);
            out.push(k * n * n + ix * n + iv);
        }
    }

    pub fn features(&self, x: f64, v: f64) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.tilings);
        self.features_into(x, v, &mut out);
        out
    }
}
