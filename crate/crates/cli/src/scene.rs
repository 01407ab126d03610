//! Scene bundles: a directory holding cameras.json, images/, an optional
//! pointcloud.ply, and config.toml. All paths inside the bundle are relative
//! to the bundle directory.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use splatlift::{
    load_ply, CameraView, ColorImage, GuidancePointCloud, Intrinsics, Quaternion, Vec3, ViewId,
    ViewRole,
};
use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

pub const CAMERAS_FILE: &str = "cameras.json";
pub const POINTCLOUD_FILE: &str = "pointcloud.ply";
pub const CONFIG_FILE: &str = "config.toml";

/// One entry of cameras.json. Pose is world-to-camera: p_cam = R(q) p + t.
/// `image` is a path relative to the bundle directory; reference cameras must
/// set it, novel cameras with an image are treated as held-out evaluation
/// views and never trained on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraRecord {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub qw: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub role: ViewRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

impl CameraRecord {
    pub fn from_view(view: &CameraView, image: Option<String>) -> CameraRecord {
        let i = &view.intrinsics;
        CameraRecord {
            id: view.id.to_string(),
            width: i.width,
            height: i.height,
            fx: i.fx,
            fy: i.fy,
            cx: i.cx,
            cy: i.cy,
            qw: view.rotation.w,
            qx: view.rotation.x,
            qy: view.rotation.y,
            qz: view.rotation.z,
            tx: view.translation.x,
            ty: view.translation.y,
            tz: view.translation.z,
            role: view.role,
            image,
        }
    }

    /// Pose and intrinsics only; the target image is attached separately so
    /// renders during scene synthesis go through the identical camera path.
    pub fn camera(&self) -> Result<CameraView> {
        let q = Quaternion::new(self.qw, self.qx, self.qy, self.qz);
        let deviation = (q.norm() - 1.0).abs();
        if !deviation.is_finite() || deviation > 1e-4 {
            bail!(
                "{CAMERAS_FILE}: camera '{}': fields qw..qz give norm {:.8}, off unit by more than 1e-4",
                self.id,
                q.norm()
            );
        }
        if deviation > 1e-6 {
            log::warn!(
                "{CAMERAS_FILE}: camera '{}': renormalizing quaternion (norm off unit by {:.3e})",
                self.id,
                deviation
            );
        }
        let mut view = CameraView::novel(
            self.id.as_str(),
            Intrinsics {
                fx: self.fx,
                fy: self.fy,
                cx: self.cx,
                cy: self.cy,
                width: self.width,
                height: self.height,
            },
            q.normalized(),
            Vec3::new(self.tx, self.ty, self.tz),
        );
        view.role = self.role;
        Ok(view)
    }

    /// Full view with the target image loaded when the record names one.
    pub fn to_view(&self, dir: &Path) -> Result<CameraView> {
        let mut view = self.camera()?;
        match (&self.image, self.role) {
            (None, ViewRole::Reference) => bail!(
                "{CAMERAS_FILE}: camera '{}': field 'image': role=reference requires an image file",
                self.id
            ),
            (None, ViewRole::Novel) => {}
            (Some(name), _) => {
                let path = dir.join(name);
                let img = ColorImage::read_png(&path)
                    .with_context(|| format!("{CAMERAS_FILE}: camera '{}': field 'image': cannot read {}", self.id, path.display()))?;
                view.target = Some(img);
            }
        }
        view.validate()
            .with_context(|| format!("{CAMERAS_FILE}: camera '{}'", self.id))?;
        Ok(view)
    }
}

pub fn load_camera_records(path: &Path) -> Result<Vec<CameraRecord>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let records: Vec<CameraRecord> = serde_json::from_str(&text)
        .with_context(|| format!("{}: malformed camera list", path.display()))?;
    let mut seen = BTreeSet::new();
    for rec in &records {
        if !seen.insert(rec.id.as_str()) {
            bail!("{}: duplicate camera id '{}'", path.display(), rec.id);
        }
    }
    Ok(records)
}

pub fn save_camera_records(path: &Path, records: &[CameraRecord]) -> Result<()> {
    let text = serde_json::to_string_pretty(records)?;
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// A loaded scene: every camera as a view (held-out targets attached), plus
/// the guidance point cloud when the bundle ships one.
#[derive(Debug, Clone)]
pub struct SceneBundle {
    pub dir: PathBuf,
    pub views: Vec<CameraView>,
    pub pointcloud: GuidancePointCloud,
}

impl SceneBundle {
    pub fn load(dir: &Path, point_radius_px: f64) -> Result<SceneBundle> {
        let cameras = dir.join(CAMERAS_FILE);
        let records = load_camera_records(&cameras)?;
        let views = records
            .iter()
            .map(|rec| rec.to_view(dir))
            .collect::<Result<Vec<_>>>()?;
        let ply = dir.join(POINTCLOUD_FILE);
        let pointcloud = if ply.exists() {
            load_ply(&ply, point_radius_px)
                .with_context(|| format!("cannot load {}", ply.display()))?
        } else {
            GuidancePointCloud::new(Vec::new(), point_radius_px)
        };
        Ok(SceneBundle { dir: dir.to_path_buf(), views, pointcloud })
    }

    pub fn references(&self) -> Vec<CameraView> {
        self.views.iter().filter(|v| v.role == ViewRole::Reference).cloned().collect()
    }

    /// Novel cameras without an image: supervised through the fixer.
    pub fn training_novels(&self) -> Vec<CameraView> {
        self.views
            .iter()
            .filter(|v| v.role == ViewRole::Novel && v.target.is_none())
            .cloned()
            .collect()
    }

    /// Novel cameras with an image: held out for evaluation only.
    pub fn heldout(&self) -> Vec<CameraView> {
        self.views
            .iter()
            .filter(|v| v.role == ViewRole::Novel && v.target.is_some())
            .cloned()
            .collect()
    }

    pub fn view(&self, id: &ViewId) -> Option<&CameraView> {
        self.views.iter().find(|v| &v.id == id)
    }
}
