//! Camera views: pinhole intrinsics, world-to-camera pose, and the role tag
//! separating captured reference views from fixer-supervised novel views.

use crate::error::CoreError;
use crate::image::{ColorImage, WeightMap};
use crate::math::{rotation_matrix_unchecked, Mat3, Quaternion, Vec3};
use serde::{Deserialize, Serialize};
use std::fmt;

pub const DEFAULT_NEAR_PLANE: f64 = 1e-4;

/// View identifier. Ordering is lexicographic, used for deterministic
/// tie-breaking.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ViewId(pub String);

impl ViewId {
    pub fn new(s: impl Into<String>) -> Self {
        ViewId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ViewId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ViewId {
    fn from(s: &str) -> Self {
        ViewId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewRole {
    Reference,
    Novel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

/// A camera with world-to-camera pose (p_cam = R p_world + t), role tag, and
/// optional supervision target plus per-pixel gradient weights.
#[derive(Debug, Clone)]
pub struct CameraView {
    pub id: ViewId,
    pub intrinsics: Intrinsics,
    /// World-to-camera rotation.
    pub rotation: Quaternion,
    /// World-to-camera translation.
    pub translation: Vec3,
    pub role: ViewRole,
    pub target: Option<ColorImage>,
    pub weight_map: Option<WeightMap>,
    pub near: f64,
}

impl CameraView {
    pub fn reference(
        id: impl Into<ViewId>,
        intrinsics: Intrinsics,
        rotation: Quaternion,
        translation: Vec3,
        target: ColorImage,
    ) -> Self {
        CameraView {
            id: id.into(),
            intrinsics,
            rotation,
            translation,
            role: ViewRole::Reference,
            target: Some(target),
            weight_map: None,
            near: DEFAULT_NEAR_PLANE,
        }
    }

    pub fn novel(
        id: impl Into<ViewId>,
        intrinsics: Intrinsics,
        rotation: Quaternion,
        translation: Vec3,
    ) -> Self {
        CameraView {
            id: id.into(),
            intrinsics,
            rotation,
            translation,
            role: ViewRole::Novel,
            target: None,
            weight_map: None,
            near: DEFAULT_NEAR_PLANE,
        }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        let i = &self.intrinsics;
        if !(i.fx > 0.0 && i.fy > 0.0) {
            return Err(CoreError::invalid("intrinsics", format!("fx={}, fy={} must be > 0", i.fx, i.fy)));
        }
        if i.width == 0 || i.height == 0 {
            return Err(CoreError::invalid("intrinsics", "width and height must be >= 1"));
        }
        if !self.rotation.is_unit(1e-4) {
            return Err(CoreError::NonUnitQuaternion { norm: self.rotation.norm(), tol: 1e-4 });
        }
        if self.role == ViewRole::Reference && self.target.is_none() {
            return Err(CoreError::invalid("view", format!("reference view {} has no target", self.id)));
        }
        for (what, dims) in [
            ("target", self.target.as_ref().map(|t| (t.width(), t.height()))),
            ("weight map", self.weight_map.as_ref().map(|w| (w.width(), w.height()))),
        ] {
            if let Some((w, h)) = dims {
                if (w, h) != (i.width, i.height) {
                    return Err(CoreError::dims(
                        &format!("view {} {what}", self.id),
                        format!("{}x{}", i.width, i.height),
                        format!("{w}x{h}"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        rotation_matrix_unchecked(self.rotation.normalized())
    }

    pub fn world_to_camera(&self, p: Vec3) -> Vec3 {
        self.rotation_matrix().mul_vec(p) + self.translation
    }

    /// Camera center in world coordinates: -R^T t.
    pub fn camera_center(&self) -> Vec3 {
        -self.rotation_matrix().transpose().mul_vec(self.translation)
    }
}

/// Result of projecting a world point through a view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    /// Continuous pixel coordinates plus camera-frame depth.
    Pixel { u: f64, v: f64, depth: f64 },
    /// At or behind the near plane.
    Behind,
}

/// Pinhole projection of a world point: u = fx X/Z + cx, v = fy Y/Z + cy.
pub fn project_point(view: &CameraView, p: Vec3) -> Projection {
    let cam = view.world_to_camera(p);
    if cam.z <= view.near {
        return Projection::Behind;
    }
    let i = &view.intrinsics;
    Projection::Pixel {
        u: i.fx * cam.x / cam.z + i.cx,
        v: i.fy * cam.y / cam.z + i.cy,
        depth: cam.z,
    }
}
