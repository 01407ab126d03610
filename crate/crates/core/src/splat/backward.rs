//! Backward rasterization: per-pixel color gradients back to Gaussian
//! parameters, with per-pixel gradient weights applied before accumulation.

use crate::camera::CameraView;
use crate::error::CoreError;
use crate::gaussian::{GaussianSet, ParamGrad};
use crate::image::{GradImage, WeightMap};
use crate::math::{Mat3, Vec3};
use crate::splat::forward::{prepare_scene, TileGrid};
use crate::splat::project::{covariance_factor, projection_jacobian};
use crate::splat::{GradMode, RasterConfig};

/// Per-call accounting from the backward pass.
#[derive(Debug, Clone)]
pub struct BackwardStats {
    /// For each Gaussian, the number of pixels it contributed to in this view.
    pub contributing_pixels: Vec<usize>,
}

#[derive(Clone, Default)]
struct Accum {
    /// dL/d(projected mean), pixels.
    mean2d: [f64; 2],
    /// dL/d(projected covariance), packed [xx, xy, yy].
    cov2d: [f64; 3],
    /// dL/d(decoded opacity).
    opacity: f64,
    /// dL/d(color).
    color: [f64; 3],
    count: usize,
}

/// Accumulate parameter gradients for every Gaussian that contributes to the
/// view, adding into the set's gradient buffers.
///
/// `loss_grad` is dL/dColor per pixel; `weights` scales each pixel's
/// contribution before accumulation (weight zero removes a pixel's influence
/// entirely). With `GradMode::PixelMean` each Gaussian's accumulated gradient
/// is divided by the number of pixels it landed on; `GradMode::Sum` leaves the
/// plain sum.
pub fn render_backward(
    gs: &mut GaussianSet,
    view: &CameraView,
    cfg: &RasterConfig,
    loss_grad: &GradImage,
    weights: &WeightMap,
) -> Result<BackwardStats, CoreError> {
    let (w, h) = (view.intrinsics.width, view.intrinsics.height);
    if (loss_grad.width(), loss_grad.height()) != (w, h) {
        return Err(CoreError::dims(
            "loss gradient",
            format!("{w}x{h}"),
            format!("{}x{}", loss_grad.width(), loss_grad.height()),
        ));
    }
    if (weights.width(), weights.height()) != (w, h) {
        return Err(CoreError::dims(
            "weight map",
            format!("{w}x{h}"),
            format!("{}x{}", weights.width(), weights.height()),
        ));
    }

    let splats = prepare_scene(gs, view, cfg);
    let grid = TileGrid::build(&splats, w, h, cfg.tile_size);
    let mut acc = vec![Accum::default(); gs.len()];
    // Front-to-back replay of one pixel: (splat index, falloff, alpha, T before).
    let mut items: Vec<(u32, f64, f64, f64)> = Vec::new();

    for ty in 0..grid.tiles_y {
        for tx in 0..grid.tiles_x {
            let list = &grid.lists[ty * grid.tiles_x + tx];
            let (px0, py0, px1, py1) = grid.pixel_rect(tx, ty, w, h);
            for py in py0..py1 {
                for px in px0..px1 {
                    let gpix = loss_grad.get(px, py);
                    let wpix = weights.get(px, py);

                    items.clear();
                    let mut t = 1.0;
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
                        items.push((pos, g, alpha, t));
                        t = next_t;
                    }

                    // Walk back-to-front keeping the suffix color: everything
                    // composited behind the current splat plus the background.
                    let mut suffix = [cfg.background[0] * t, cfg.background[1] * t, cfg.background[2] * t];
                    for &(pos, g, alpha, t_before) in items.iter().rev() {
                        let s = &splats[pos as usize];
                        let a = &mut acc[s.gauss];
                        a.count += 1;

                        let mut dl_dalpha = 0.0;
                        for ch in 0..3 {
                            a.color[ch] += wpix * gpix[ch] * alpha * t_before;
                            dl_dalpha +=
                                wpix * gpix[ch] * (s.color[ch] * t_before - suffix[ch] / (1.0 - alpha));
                            suffix[ch] += s.color[ch] * alpha * t_before;
                        }
                        // Behind the 0.99 cap, alpha is locally constant in
                        // opacity and falloff.
                        if s.opacity * g < 0.99 {
                            a.opacity += dl_dalpha * g;
                            let dl_dg = dl_dalpha * s.opacity;
                            let dx = px as f64 + 0.5 - s.mean[0];
                            let dy = py as f64 + 0.5 - s.mean[1];
                            let [qa, qb, qc] = s.conic;
                            let v0 = qa * dx + qb * dy;
                            let v1 = qb * dx + qc * dy;
                            let gg = dl_dg * g;
                            a.mean2d[0] += gg * v0;
                            a.mean2d[1] += gg * v1;
                            a.cov2d[0] += 0.5 * gg * v0 * v0;
                            a.cov2d[1] += gg * v0 * v1;
                            a.cov2d[2] += 0.5 * gg * v1 * v1;
                        }
                    }
                }
            }
        }
    }

    let mut stats = BackwardStats { contributing_pixels: vec![0; gs.len()] };
    let mut grads: Vec<(usize, ParamGrad)> = Vec::new();
    for (k, a) in acc.iter().enumerate() {
        stats.contributing_pixels[k] = a.count;
        if a.count == 0 {
            continue;
        }
        let norm = match cfg.grad_mode {
            GradMode::PixelMean => 1.0 / a.count as f64,
            GradMode::Sum => 1.0,
        };
        grads.push((k, chain_to_params(gs, view, k, a, norm)));
    }
    for (k, pg) in &grads {
        gs.accumulate_grad(*k, pg);
    }
    Ok(stats)
}

/// Push accumulated screen-space gradients of one Gaussian through projection,
/// camera pose, world covariance, and quaternion normalization.
fn chain_to_params(gs: &GaussianSet, view: &CameraView, k: usize, a: &Accum, norm: f64) -> ParamGrad {
    let g = gs.get(k);
    let i = &view.intrinsics;
    let (fx, fy) = (i.fx, i.fy);
    let pcam = view.world_to_camera(g.position);
    let (x, y, z) = (pcam.x, pcam.y, pcam.z);
    let j = projection_jacobian(fx, fy, x, y, z);
    let rc = view.rotation_matrix();
    let m = covariance_factor(g);
    let sigma_cam = rc.mul(&m.mul(&m.transpose())).mul(&rc.transpose());

    let am = [a.mean2d[0] * norm, a.mean2d[1] * norm];
    // Full-matrix gradient of the packed 2D covariance.
    let g2 = [
        [a.cov2d[0] * norm, a.cov2d[1] * norm / 2.0],
        [a.cov2d[1] * norm / 2.0, a.cov2d[2] * norm],
    ];

    // dL/dSigma_cam = Jᵀ g2 J.
    let mut d_sigma_cam = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            let mut v = 0.0;
            for p in 0..2 {
                for q in 0..2 {
                    v += j[p][r] * g2[p][q] * j[q][c];
                }
            }
            d_sigma_cam[r][c] = v;
        }
    }

    // dL/dJ = 2 g2 J Sigma_cam.
    let mut jsc = [[0.0; 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            jsc[r][c] = (0..3).map(|kk| j[r][kk] * sigma_cam.0[kk][c]).sum();
        }
    }
    let mut dj = [[0.0; 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            dj[r][c] = 2.0 * (g2[r][0] * jsc[0][c] + g2[r][1] * jsc[1][c]);
        }
    }

    // dL/d(camera-frame mean): the projection path Jᵀ am plus the dependence
    // of J itself on (x, y, z).
    let z2 = z * z;
    let z3 = z2 * z;
    let mut d_mu = Vec3::new(
        j[0][0] * am[0] + j[1][0] * am[1],
        j[0][1] * am[0] + j[1][1] * am[1],
        j[0][2] * am[0] + j[1][2] * am[1],
    );
    d_mu.x += dj[0][2] * (-fx / z2);
    d_mu.y += dj[1][2] * (-fy / z2);
    d_mu.z += dj[0][0] * (-fx / z2)
        + dj[0][2] * (2.0 * fx * x / z3)
        + dj[1][1] * (-fy / z2)
        + dj[1][2] * (2.0 * fy * y / z3);

    let d_pos = rc.transpose().mul_vec(d_mu);

    // dL/dSigma_world, then through Sigma_world = M Mᵀ with M = R diag(s).
    let d_sigma_w = rc.transpose().mul(&Mat3(d_sigma_cam)).mul(&rc);
    let dm_half = d_sigma_w.mul(&m);
    let mut d_m = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            d_m[r][c] = 2.0 * dm_half.0[r][c];
        }
    }

    let qn = g.rotation.normalized();
    let rg = crate::math::rotation_matrix_unchecked(qn);
    let s = g.scale();
    let s_arr = [s.x, s.y, s.z];
    let mut d_log_s = [0.0; 3];
    let mut d_rg = [[0.0; 3]; 3];
    for c in 0..3 {
        let mut ds = 0.0;
        for r in 0..3 {
            ds += d_m[r][c] * rg.0[r][c];
            d_rg[r][c] = d_m[r][c] * s_arr[c];
        }
        // Chain through s = exp(log s).
        d_log_s[c] = ds * s_arr[c];
    }

    // Rotation-matrix partials with respect to the normalized quaternion.
    let (qw, qx, qy, qz) = (qn.w, qn.x, qn.y, qn.z);
    let dr = [
        [[0.0, -qz, qy], [qz, 0.0, -qx], [-qy, qx, 0.0]],
        [[0.0, qy, qz], [qy, -2.0 * qx, -qw], [qz, qw, -2.0 * qx]],
        [[-2.0 * qy, qx, qw], [qx, 0.0, qz], [-qw, qz, -2.0 * qy]],
        [[-2.0 * qz, -qw, qx], [qw, -2.0 * qz, qy], [qx, qy, 0.0]],
    ];
    let mut d_hat = [0.0; 4];
    for (c, partial) in dr.iter().enumerate() {
        let mut v = 0.0;
        for r in 0..3 {
            for cc in 0..3 {
                v += d_rg[r][cc] * partial[r][cc];
            }
        }
        d_hat[c] = 2.0 * v;
    }
    // Project through the normalization q_hat = q / |q|.
    let qn_arr = [qw, qx, qy, qz];
    let dot: f64 = (0..4).map(|c| d_hat[c] * qn_arr[c]).sum();
    let qlen = g.rotation.norm();
    let mut d_rot = [0.0; 4];
    for c in 0..4 {
        d_rot[c] = (d_hat[c] - dot * qn_arr[c]) / qlen;
    }

    let o = g.opacity();
    ParamGrad {
        position: d_pos,
        rotation: d_rot,
        log_scale: Vec3::new(d_log_s[0], d_log_s[1], d_log_s[2]),
        opacity_logit: a.opacity * norm * o * (1.0 - o),
        color: [a.color[0] * norm, a.color[1] * norm, a.color[2] * norm],
    }
}
