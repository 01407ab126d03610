//! Projection of a 3D Gaussian to its screen-space footprint.

use crate::camera::CameraView;
use crate::gaussian::Gaussian;
use crate::math::{rotation_matrix_unchecked, Mat3};
use crate::splat::RasterConfig;

/// Regularization added to both diagonal entries of the projected covariance,
/// in pixels squared. Keeps footprints at least a fraction of a pixel wide.
pub const COV2D_REG: f64 = 0.3;

/// Screen-space footprint of one Gaussian in one view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelFootprint {
    /// Projected center in continuous pixel coordinates.
    pub mean2d: [f64; 2],
    /// Projected covariance, packed symmetric [xx, xy, yy], pixels squared.
    pub cov2d: [f64; 3],
    /// Camera-frame depth, scene units.
    pub depth: f64,
    /// Inclusive pixel bounds (x0, y0, x1, y1) of the affected region.
    pub bbox: (usize, usize, usize, usize),
}

impl PixelFootprint {
    /// Inverse covariance, packed symmetric [xx, xy, yy].
    pub fn conic(&self) -> [f64; 3] {
        let [a, b, c] = self.cov2d;
        let det = a * c - b * b;
        [c / det, -b / det, a / det]
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        let (x0, y0, x1, y1) = self.bbox;
        x >= x0 && x <= x1 && y >= y0 && y <= y1
    }

    pub fn pixel_count(&self) -> usize {
        let (x0, y0, x1, y1) = self.bbox;
        (x1 - x0 + 1) * (y1 - y0 + 1)
    }
}

/// World-space covariance factor M = R * diag(s); the covariance is M Mᵀ.
pub(crate) fn covariance_factor(g: &Gaussian) -> Mat3 {
    let r = rotation_matrix_unchecked(g.rotation.normalized());
    let s = g.scale();
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        m[i][0] = r.0[i][0] * s.x;
        m[i][1] = r.0[i][1] * s.y;
        m[i][2] = r.0[i][2] * s.z;
    }
    Mat3(m)
}

/// Rows of the projection Jacobian at camera-frame point (x, y, z).
pub(crate) fn projection_jacobian(fx: f64, fy: f64, x: f64, y: f64, z: f64) -> [[f64; 3]; 2] {
    [
        [fx / z, 0.0, -fx * x / (z * z)],
        [0.0, fy / z, -fy * y / (z * z)],
    ]
}

/// Project one Gaussian into a view. Returns None when the Gaussian is culled:
/// at or behind the near plane, degenerate, or landing entirely off-screen.
///
/// The projected covariance is J Σ_cam Jᵀ with `COV2D_REG` added to the
/// diagonal; the bounding box spans ±3 projected standard deviations around
/// the mean, clipped to the image, with pixels owning their center point.
pub fn project_gaussian(g: &Gaussian, view: &CameraView, cfg: &RasterConfig) -> Option<PixelFootprint> {
    let _ = cfg;
    let pcam = view.world_to_camera(g.position);
    if !(pcam.z > view.near) {
        return None;
    }
    if g.rotation.norm() < 1e-12 {
        return None;
    }
    let i = &view.intrinsics;
    let (x, y, z) = (pcam.x, pcam.y, pcam.z);
    let mean2d = [i.fx * x / z + i.cx, i.fy * y / z + i.cy];
    if !(mean2d[0].is_finite() && mean2d[1].is_finite()) {
        return None;
    }

    let m = covariance_factor(g);
    let sigma_w = m.mul(&m.transpose());
    let rc = view.rotation_matrix();
    let sigma_cam = rc.mul(&sigma_w).mul(&rc.transpose());
    let j = projection_jacobian(i.fx, i.fy, x, y, z);

    // Sigma2d = J Sigma_cam Jᵀ, built through JS = J Sigma_cam.
    let mut js = [[0.0; 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            js[r][c] = (0..3).map(|k| j[r][k] * sigma_cam.0[k][c]).sum();
        }
    }
    let dot = |p: &[f64; 3], q: &[f64; 3]| p[0] * q[0] + p[1] * q[1] + p[2] * q[2];
    let cov2d = [dot(&js[0], &j[0]) + COV2D_REG, dot(&js[0], &j[1]), dot(&js[1], &j[1]) + COV2D_REG];
    let det = cov2d[0] * cov2d[2] - cov2d[1] * cov2d[1];
    if !(det > 0.0) {
        return None;
    }

    let hx = 3.0 * cov2d[0].sqrt();
    let hy = 3.0 * cov2d[2].sqrt();
    let x0 = (mean2d[0] - hx - 0.5).ceil().max(0.0);
    let x1 = (mean2d[0] + hx - 0.5).floor().min(i.width as f64 - 1.0);
    let y0 = (mean2d[1] - hy - 0.5).ceil().max(0.0);
    let y1 = (mean2d[1] + hy - 0.5).floor().min(i.height as f64 - 1.0);
    if x0 > x1 || y0 > y1 {
        return None;
    }

    Some(PixelFootprint {
        mean2d,
        cov2d,
        depth: z,
        bbox: (x0 as usize, y0 as usize, x1 as usize, y1 as usize),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::Intrinsics;
    use crate::math::{Quaternion, Vec3};

    fn view(w: usize, h: usize, fx: f64) -> CameraView {
        CameraView::novel(
            "proj",
            Intrinsics { fx, fy: fx, cx: w as f64 / 2.0, cy: h as f64 / 2.0, width: w, height: h },
            Quaternion::IDENTITY,
            Vec3::ZERO,
        )
    }

    fn isotropic_at(p: Vec3, s: f64) -> Gaussian {
        Gaussian {
            position: p,
            rotation: Quaternion::IDENTITY,
            log_scale: Vec3::new(s.ln(), s.ln(), s.ln()),
            opacity_logit: 0.0,
            color: [0.5, 0.5, 0.5],
        }
    }

    #[test]
    fn on_axis_isotropic_projects_isotropic_at_center() {
        let v = view(32, 32, 20.0);
        let fp = project_gaussian(&isotropic_at(Vec3::new(0.0, 0.0, 4.0), 0.5), &v, &RasterConfig::default()).unwrap();
        assert!((fp.mean2d[0] - 16.0).abs() < 1e-12);
        assert!((fp.mean2d[1] - 16.0).abs() < 1e-12);
        assert!((fp.cov2d[0] - fp.cov2d[2]).abs() < 1e-9);
        assert!(fp.cov2d[1].abs() < 1e-9);
        let expected = (20.0 * 0.5 / 4.0_f64).powi(2) + COV2D_REG;
        assert!((fp.cov2d[0] - expected).abs() < 1e-9);
        assert!((fp.depth - 4.0).abs() < 1e-12);
    }

    #[test]
    fn doubling_depth_halves_projected_std() {
        let v = view(64, 64, 40.0);
        let cfg = RasterConfig::default();
        let near = project_gaussian(&isotropic_at(Vec3::new(0.0, 0.0, 2.0), 0.3), &v, &cfg).unwrap();
        let far = project_gaussian(&isotropic_at(Vec3::new(0.0, 0.0, 4.0), 0.3), &v, &cfg).unwrap();
        let sd_near = (near.cov2d[0] - COV2D_REG).sqrt();
        let sd_far = (far.cov2d[0] - COV2D_REG).sqrt();
        assert!((sd_near / sd_far - 2.0).abs() < 1e-9);
    }

    #[test]
    fn culls_behind_near_plane_and_offscreen() {
        let v = view(16, 16, 10.0);
        let cfg = RasterConfig::default();
        assert!(project_gaussian(&isotropic_at(Vec3::new(0.0, 0.0, -1.0), 0.3), &v, &cfg).is_none());
        assert!(project_gaussian(&isotropic_at(Vec3::new(0.0, 0.0, 0.0), 0.3), &v, &cfg).is_none());
        // Far off to the side: projected mean ~ 10*100/1 + 8, way outside.
        assert!(project_gaussian(&isotropic_at(Vec3::new(100.0, 0.0, 1.0), 0.01), &v, &cfg).is_none());
    }

    #[test]
    fn bbox_owns_pixel_centers() {
        let v = view(16, 16, 10.0);
        // Tiny footprint: scale 0.01 at z=2 gives sd ~ sqrt(0.3025) ~ 0.55 px, 3sd ~ 1.65.
        let fp = project_gaussian(&isotropic_at(Vec3::new(0.0, 0.0, 2.0), 0.01), &v, &RasterConfig::default()).unwrap();
        // Mean lands exactly at (8, 8); pixel centers within 1.65 px are 6.5..9.5.
        let (x0, y0, x1, y1) = fp.bbox;
        assert_eq!((x0, y0, x1, y1), (6, 6, 9, 9));
        assert!(fp.contains(8, 8));
        assert!(!fp.contains(5, 8));
        assert_eq!(fp.pixel_count(), 16);
    }

    #[test]
    fn conic_inverts_covariance() {
        let v = view(32, 32, 25.0);
        let mut g = isotropic_at(Vec3::new(0.3, -0.2, 3.0), 0.4);
        g.rotation = Quaternion::new(0.9, 0.2, -0.3, 0.1).normalized();
        g.log_scale = Vec3::new(-0.5, 0.1, 0.4);
        let fp = project_gaussian(&g, &v, &RasterConfig::default()).unwrap();
        let [a, b, c] = fp.cov2d;
        let [qa, qb, qc] = fp.conic();
        assert!((a * qa + b * qb - 1.0).abs() < 1e-9);
        assert!((a * qb + b * qc).abs() < 1e-9);
        assert!((b * qb + c * qc - 1.0).abs() < 1e-9);
    }
}
