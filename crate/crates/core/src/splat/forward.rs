//! Forward rasterization: depth-sorted front-to-back compositing.

use crate::camera::CameraView;
use crate::gaussian::GaussianSet;
use crate::image::{ColorImage, WeightMap};
use crate::splat::project::project_gaussian;
use crate::splat::RasterConfig;

/// One projected Gaussian with everything the per-pixel loop needs.
pub(crate) struct Splat2D {
    pub gauss: usize,
    pub mean: [f64; 2],
    /// Inverse projected covariance, packed [xx, xy, yy].
    pub conic: [f64; 3],
    pub depth: f64,
    pub bbox: (usize, usize, usize, usize),
    pub opacity: f64,
    pub color: [f64; 3],
}

impl Splat2D {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        let (x0, y0, x1, y1) = self.bbox;
        x >= x0 && x <= x1 && y >= y0 && y <= y1
    }

    /// Gaussian falloff at a pixel center, in (0, 1].
    pub fn falloff(&self, px: usize, py: usize) -> f64 {
        let dx = px as f64 + 0.5 - self.mean[0];
        let dy = py as f64 + 0.5 - self.mean[1];
        let [qa, qb, qc] = self.conic;
        let power = -0.5 * (qa * dx * dx + qc * dy * dy) - qb * dx * dy;
        if power > 0.0 {
            return 0.0;
        }
        power.exp()
    }
}

/// Project every Gaussian and sort front-to-back (ties broken by index so the
/// pass is deterministic).
pub(crate) fn prepare_scene(gs: &GaussianSet, view: &CameraView, cfg: &RasterConfig) -> Vec<Splat2D> {
    let mut splats: Vec<Splat2D> = gs
        .gaussians()
        .iter()
        .enumerate()
        .filter_map(|(i, g)| {
            project_gaussian(g, view, cfg).map(|fp| Splat2D {
                gauss: i,
                mean: fp.mean2d,
                conic: fp.conic(),
                depth: fp.depth,
                bbox: fp.bbox,
                opacity: g.opacity(),
                color: g.color,
            })
        })
        .collect();
    splats.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.gauss.cmp(&b.gauss)));
    splats
}

/// Per-tile lists of indices into the sorted splat vector, preserving depth
/// order within each tile.
pub(crate) struct TileGrid {
    pub size: usize,
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub lists: Vec<Vec<u32>>,
}

impl TileGrid {
    pub fn build(splats: &[Splat2D], width: usize, height: usize, size: usize) -> TileGrid {
        let size = size.max(1);
        let tiles_x = width.div_ceil(size);
        let tiles_y = height.div_ceil(size);
        let mut lists = vec![Vec::new(); tiles_x * tiles_y];
        for (pos, s) in splats.iter().enumerate() {
            let (x0, y0, x1, y1) = s.bbox;
            for ty in y0 / size..=y1 / size {
                for tx in x0 / size..=x1 / size {
                    lists[ty * tiles_x + tx].push(pos as u32);
                }
            }
        }
        TileGrid { size, tiles_x, tiles_y, lists }
    }

    /// Pixel bounds (x0, y0, x1, y1), exclusive upper, of a tile.
    pub fn pixel_rect(&self, tx: usize, ty: usize, width: usize, height: usize) -> (usize, usize, usize, usize) {
        (tx * self.size, ty * self.size, ((tx + 1) * self.size).min(width), ((ty + 1) * self.size).min(height))
    }
}

#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub image: ColorImage,
    /// Per-pixel transmittance remaining after compositing, in [0, 1].
    pub transmittance: WeightMap,
}

/// Render a Gaussian set into a view. Per pixel, contributions composite
/// front-to-back as color += c * alpha * T with T multiplied by (1 - alpha)
/// after each step; alpha = min(0.99, opacity * falloff). Compositing stops
/// when T would drop below the configured floor, and the background fills the
/// remaining transmittance.
pub fn render(gs: &GaussianSet, view: &CameraView, cfg: &RasterConfig) -> RenderOutput {
    let (w, h) = (view.intrinsics.width, view.intrinsics.height);
    let splats = prepare_scene(gs, view, cfg);
    let grid = TileGrid::build(&splats, w, h, cfg.tile_size);

    let mut image = ColorImage::new(w, h);
    let mut trans = WeightMap::ones(w, h);

    for ty in 0..grid.tiles_y {
        for tx in 0..grid.tiles_x {
            let list = &grid.lists[ty * grid.tiles_x + tx];
            let (px0, py0, px1, py1) = grid.pixel_rect(tx, ty, w, h);
            for py in py0..py1 {
                for px in px0..px1 {
                    let mut t = 1.0;
                    let mut rgb = [0.0f64; 3];
                    for &pos in list {
                        let s = &splats[pos as usize];
                        if !s.contains(px, py) {
                            continue;
                        }
                        let g = s.falloff(px, py);
                        let alpha = (s.opacity * g).min(0.99);
                        if alpha < cfg.alpha_threshold {
                            continue;
                        }
                        let next_t = t * (1.0 - alpha);
                        if next_t < cfg.transmittance_floor {
                            break;
                        }
                        for ch in 0..3 {
                            rgb[ch] += s.color[ch] * alpha * t;
                        }
                        t = next_t;
                    }
                    for ch in 0..3 {
                        rgb[ch] += cfg.background[ch] * t;
                    }
                    image.set(px, py, rgb);
                    trans.set(px, py, t);
                }
            }
        }
    }
    RenderOutput { image, transmittance: trans }
}
