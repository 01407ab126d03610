//! Differentiable rasterization of Gaussian sets.
//!
//! The forward pass composites depth-sorted anisotropic 2D footprints
//! front-to-back; the backward pass pushes per-pixel color gradients through
//! the full chain (compositing, footprint evaluation, projection, world-space
//! covariance, quaternion normalization), scaling every pixel's contribution
//! by a per-pixel weight before accumulation.

mod backward;
mod forward;
mod project;

pub use backward::{render_backward, BackwardStats};
pub use forward::{render, RenderOutput};
pub use project::{project_gaussian, PixelFootprint, COV2D_REG};

use crate::camera::{CameraView, ViewRole};
use crate::error::CoreError;
use crate::image::WeightMap;
use crate::pcrender::ConfidenceMask;

/// How per-Gaussian gradient accumulations are normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradMode {
    /// Divide each Gaussian's accumulated gradient by the number of pixels it
    /// landed on. Default.
    PixelMean,
    /// Plain summation over pixels.
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct RasterConfig {
    pub tile_size: usize,
    /// Per-pixel contributions with alpha below this are skipped.
    pub alpha_threshold: f64,
    /// Compositing stops once transmittance would fall below this.
    pub transmittance_floor: f64,
    pub background: [f64; 3],
    pub grad_mode: GradMode,
}

impl Default for RasterConfig {
    fn default() -> Self {
        RasterConfig {
            tile_size: 16,
            alpha_threshold: 1.0 / 255.0,
            transmittance_floor: 1e-4,
            background: [0.0, 0.0, 0.0],
            grad_mode: GradMode::PixelMean,
        }
    }
}

impl RasterConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.tile_size == 0 {
            return Err(CoreError::invalid("raster config", "tile_size must be >= 1"));
        }
        for (name, v) in [("alpha_threshold", self.alpha_threshold), ("transmittance_floor", self.transmittance_floor)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(CoreError::invalid("raster config", format!("{name}={v} must lie in (0,1)")));
            }
        }
        Ok(())
    }
}

/// Per-pixel gradient weights for a view: all ones for reference views; for
/// novel views `beta + (1-beta) * covered`, so guidance-covered pixels keep
/// full weight and uncovered ones are damped to `beta`.
pub fn compute_view_weights(view: &CameraView, mask: &ConfidenceMask, beta: f64) -> Result<WeightMap, CoreError> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(CoreError::invalid("weights", format!("beta={beta} outside [0,1]")));
    }
    let (w, h) = (view.intrinsics.width, view.intrinsics.height);
    if view.role == ViewRole::Reference {
        return Ok(WeightMap::ones(w, h));
    }
    if (mask.width(), mask.height()) != (w, h) {
        return Err(CoreError::dims(
            "confidence mask",
            format!("{w}x{h}"),
            format!("{}x{}", mask.width(), mask.height()),
        ));
    }
    let mut map = WeightMap::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            map.set(x, y, if mask.get(x, y) { 1.0 } else { beta });
        }
    }
    Ok(map)
}
