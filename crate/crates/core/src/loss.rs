//! Photometric training loss: weighted sum of mean squared error and a
//! structural dissimilarity term, with the per-pixel gradient needed to
//! drive the rasterizer backward pass.

use crate::error::CoreError;
use crate::image::{ColorImage, GradImage, WeightMap};
use crate::metrics::ssim_with_grad;

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    pub l2: f64,
    pub ssim: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { l2: 0.8, ssim: 0.2 }
    }
}

/// Scalar loss `l2 * MSE + ssim * (1 - SSIM)` and its gradient with respect
/// to the rendered image.
///
/// The weight map is validated against the image dimensions here but enters
/// the optimization later, when the gradient image is pulled back through
/// the rasterizer; the scalar is an unweighted photometric measure.
pub fn photometric_loss(
    rendered: &ColorImage,
    target: &ColorImage,
    weights: &WeightMap,
    lw: &LossWeights,
) -> Result<(f64, GradImage), CoreError> {
    if !rendered.same_dims(target) {
        return Err(CoreError::dims(
            "loss images",
            format!("{}x{}", rendered.width(), rendered.height()),
            format!("{}x{}", target.width(), target.height()),
        ));
    }
    if weights.width() != rendered.width() || weights.height() != rendered.height() {
        return Err(CoreError::dims(
            "loss weight map",
            format!("{}x{}", rendered.width(), rendered.height()),
            format!("{}x{}", weights.width(), weights.height()),
        ));
    }

    let (w, h) = (rendered.width(), rendered.height());
    let n = (w * h * 3) as f64;
    let mut grad = GradImage::zeros(w, h);

    let mut sq_sum = 0.0;
    for y in 0..h {
        for x in 0..w {
            let r = rendered.get(x, y);
            let t = target.get(x, y);
            let mut g = [0.0; 3];
            for c in 0..3 {
                let d = r[c] - t[c];
                sq_sum += d * d;
                g[c] = lw.l2 * 2.0 * d / n;
            }
            grad.set(x, y, g);
        }
    }
    let mut total = lw.l2 * sq_sum / n;

    if lw.ssim != 0.0 {
        let (s, sg) = ssim_with_grad(rendered, target)?;
        total += lw.ssim * (1.0 - s);
        for y in 0..h {
            for x in 0..w {
                let mut g = grad.get(x, y);
                let d = sg.get(x, y);
                for c in 0..3 {
                    g[c] -= lw.ssim * d[c];
                }
                grad.set(x, y, g);
            }
        }
    }
    Ok((total, grad))
}
