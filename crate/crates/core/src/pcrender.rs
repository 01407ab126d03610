//! Point-cloud guidance rendering.
//!
//! Projects a colored point cloud into a camera with a hard z-buffer and
//! square splats, producing a guidance image plus a coverage mask that marks
//! which pixels received any point at all.

use crate::camera::{project_point, CameraView, Projection};
use crate::image::ColorImage;
use crate::math::Vec3;

/// Sparse colored points used to guide reconstruction, with colors in [0, 1].
#[derive(Debug, Clone)]
pub struct GuidancePointCloud {
    points: Vec<(Vec3, [f64; 3])>,
    point_radius_px: f64,
}

impl GuidancePointCloud {
    pub fn new(points: Vec<(Vec3, [f64; 3])>, point_radius_px: f64) -> GuidancePointCloud {
        GuidancePointCloud { points, point_radius_px }
    }

    pub fn points(&self) -> &[(Vec3, [f64; 3])] {
        &self.points
    }

    pub fn point_radius_px(&self) -> f64 {
        self.point_radius_px
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Per-pixel flag marking where guidance actually landed.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl ConfidenceMask {
    pub fn empty(width: usize, height: usize) -> ConfidenceMask {
        ConfidenceMask { width, height, bits: vec![false; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    /// Fraction of pixels that are covered.
    pub fn coverage(&self) -> f64 {
        if self.bits.is_empty() {
            return 0.0;
        }
        self.bits.iter().filter(|b| **b).count() as f64 / self.bits.len() as f64
    }
}

/// Rasterize the cloud into `camera`: nearest point wins each pixel, each
/// point covers a square of half-extent `round(point_radius_px)` around the
/// pixel containing its projection. Uncovered pixels stay black and unset in
/// the mask.
pub fn render_points(pc: &GuidancePointCloud, camera: &CameraView) -> (ColorImage, ConfidenceMask) {
    let w = camera.intrinsics.width;
    let h = camera.intrinsics.height;
    let mut color = vec![[0.0f64; 3]; w * h];
    let mut depth = vec![f64::INFINITY; w * h];
    let mut mask = ConfidenceMask::empty(w, h);
    let half = pc.point_radius_px.round().max(0.0) as i64;

    for (p, c) in &pc.points {
        let (u, v, z) = match project_point(camera, *p) {
            Projection::Pixel { u, v, depth } => (u, v, depth),
            Projection::Behind => continue,
        };
        let cx = u.floor() as i64;
        let cy = v.floor() as i64;
        for y in cy - half..=cy + half {
            if y < 0 || y >= h as i64 {
                continue;
            }
            for x in cx - half..=cx + half {
                if x < 0 || x >= w as i64 {
                    continue;
                }
                let idx = y as usize * w + x as usize;
                if z < depth[idx] {
                    depth[idx] = z;
                    color[idx] = *c;
                    mask.bits[idx] = true;
                }
            }
        }
    }

    let image = ColorImage::from_pixels(w, h, color).expect("pixel buffer sized to camera");
    (image, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::Intrinsics;
    use crate::math::Quaternion;

    fn test_camera(width: usize, height: usize) -> CameraView {
        CameraView::novel(
            "pc-test",
            Intrinsics { width, height, fx: 10.0, fy: 10.0, cx: width as f64 / 2.0, cy: height as f64 / 2.0 },
            Quaternion::IDENTITY,
            Vec3::ZERO,
        )
    }

    #[test]
    fn empty_cloud_is_black_and_uncovered() {
        let cam = test_camera(8, 6);
        let pc = GuidancePointCloud::new(vec![], 1.0);
        let (img, mask) = render_points(&pc, &cam);
        assert_eq!(mask.coverage(), 0.0);
        for y in 0..6 {
            for x in 0..8 {
                assert_eq!(img.get(x, y), [0.0, 0.0, 0.0]);
            }
        }
    }

    #[test]
    fn single_point_covers_square_block() {
        let cam = test_camera(9, 9);
        // On-axis point projects to (cx, cy) = (4.5, 4.5), landing in pixel (4, 4).
        let pc = GuidancePointCloud::new(vec![(Vec3::new(0.0, 0.0, 2.0), [0.2, 0.4, 0.6])], 1.0);
        let (img, mask) = render_points(&pc, &cam);
        for y in 0..9 {
            for x in 0..9 {
                let inside = (3..=5).contains(&x) && (3..=5).contains(&y);
                assert_eq!(mask.get(x, y), inside, "pixel ({x}, {y})");
                let expect = if inside { [0.2, 0.4, 0.6] } else { [0.0, 0.0, 0.0] };
                assert_eq!(img.get(x, y), expect);
            }
        }
        assert!((mask.coverage() - 9.0 / 81.0).abs() < 1e-15);
    }

    #[test]
    fn nearer_point_wins() {
        let cam = test_camera(9, 9);
        let pc = GuidancePointCloud::new(
            vec![
                (Vec3::new(0.0, 0.0, 4.0), [1.0, 0.0, 0.0]),
                (Vec3::new(0.0, 0.0, 2.0), [0.0, 1.0, 0.0]),
            ],
            0.0,
        );
        let (img, _) = render_points(&pc, &cam);
        assert_eq!(img.get(4, 4), [0.0, 1.0, 0.0]);

        // Same outcome with insertion order reversed.
        let pc = GuidancePointCloud::new(
            vec![
                (Vec3::new(0.0, 0.0, 2.0), [0.0, 1.0, 0.0]),
                (Vec3::new(0.0, 0.0, 4.0), [1.0, 0.0, 0.0]),
            ],
            0.0,
        );
        let (img, _) = render_points(&pc, &cam);
        assert_eq!(img.get(4, 4), [0.0, 1.0, 0.0]);
    }

    #[test]
    fn behind_camera_points_are_skipped() {
        let cam = test_camera(8, 8);
        let pc = GuidancePointCloud::new(vec![(Vec3::new(0.0, 0.0, -1.0), [1.0, 1.0, 1.0])], 3.0);
        let (_, mask) = render_points(&pc, &cam);
        assert_eq!(mask.coverage(), 0.0);
    }

    #[test]
    fn mask_matches_nonblack_support_for_bright_points() {
        use rand::{Rng, SeedableRng};
        let cam = test_camera(24, 16);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let points: Vec<(Vec3, [f64; 3])> = (0..60)
            .map(|_| {
                let p = Vec3::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.0..1.0), rng.gen_range(0.5..5.0));
                (p, [rng.gen_range(0.1..1.0), rng.gen_range(0.1..1.0), rng.gen_range(0.1..1.0)])
            })
            .collect();
        let pc = GuidancePointCloud::new(points, 1.0);
        let (img, mask) = render_points(&pc, &cam);
        for y in 0..16 {
            for x in 0..24 {
                let lit = img.get(x, y) != [0.0, 0.0, 0.0];
                assert_eq!(lit, mask.get(x, y), "pixel ({x}, {y})");
            }
        }
    }

    #[test]
    fn z_buffer_agrees_with_brute_force() {
        use rand::{Rng, SeedableRng};
        let cam = test_camera(16, 12);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let points: Vec<(Vec3, [f64; 3])> = (0..100)
            .map(|i| {
                let p = Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-1.5..1.5), rng.gen_range(-1.0..6.0));
                let shade = (i as f64 + 1.0) / 100.0;
                (p, [shade, shade * 0.5, 1.0 - shade])
            })
            .collect();
        let pc = GuidancePointCloud::new(points.clone(), 1.0);
        let (img, mask) = render_points(&pc, &cam);

        let half = 1i64;
        for py in 0..12usize {
            for px in 0..16usize {
                let mut best: Option<(f64, [f64; 3])> = None;
                for (p, c) in &points {
                    if let Projection::Pixel { u, v, depth } = project_point(&cam, *p) {
                        let cx = u.floor() as i64;
                        let cy = v.floor() as i64;
                        if (px as i64 - cx).abs() <= half && (py as i64 - cy).abs() <= half {
                            if best.map_or(true, |(d, _)| depth < d) {
                                best = Some((depth, *c));
                            }
                        }
                    }
                }
                match best {
                    Some((_, c)) => {
                        assert!(mask.get(px, py));
                        assert_eq!(img.get(px, py), c, "pixel ({px}, {py})");
                    }
                    None => {
                        assert!(!mask.get(px, py));
                        assert_eq!(img.get(px, py), [0.0, 0.0, 0.0]);
                    }
                }
            }
        }
    }
}
