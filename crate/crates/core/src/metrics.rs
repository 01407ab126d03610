//! Image quality metrics: PSNR and single-scale SSIM, the latter with an
//! analytic gradient so it can serve as a training loss term.

use crate::error::CoreError;
use crate::image::{ColorImage, GradImage};

/// MSE below this floor is treated as zero error, capping PSNR at 100 dB.
pub const MSE_FLOOR: f64 = 1e-10;

const WINDOW: usize = 11;
const WINDOW_SIGMA: f64 = 1.5;
const C1: f64 = 1e-4;
const C2: f64 = 9e-4;

fn check_dims(a: &ColorImage, b: &ColorImage) -> Result<(), CoreError> {
    if !a.same_dims(b) {
        return Err(CoreError::dims(
            "metric inputs",
            format!("{}x{}", a.width(), a.height()),
            format!("{}x{}", b.width(), b.height()),
        ));
    }
    Ok(())
}

/// Mean squared error over all pixels and channels.
pub fn mse(a: &ColorImage, b: &ColorImage) -> Result<f64, CoreError> {
    check_dims(a, b)?;
    let n = (a.width() * a.height() * 3) as f64;
    let sum: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(p, q)| (0..3).map(|c| (p[c] - q[c]) * (p[c] - q[c])).sum::<f64>())
        .sum();
    Ok(sum / n)
}

/// Peak signal-to-noise ratio in dB for images on [0, 1], capped at 100 dB.
pub fn psnr(a: &ColorImage, b: &ColorImage) -> Result<f64, CoreError> {
    Ok(10.0 * (1.0 / mse(a, b)?.max(MSE_FLOOR)).log10())
}

fn gaussian_window() -> [f64; WINDOW] {
    let mut w = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Separable windowed blur with zero padding outside the image.
fn blur(src: &[f64], width: usize, height: usize, kernel: &[f64; WINDOW]) -> Vec<f64> {
    let r = WINDOW / 2;
    let mut mid = vec![0.0; src.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let sx = x as isize + k as isize - r as isize;
                if sx >= 0 && (sx as usize) < width {
                    acc += kv * src[y * width + sx as usize];
                }
            }
            mid[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let sy = y as isize + k as isize - r as isize;
                if sy >= 0 && (sy as usize) < height {
                    acc += kv * mid[sy as usize * width + x];
                }
            }
            out[y * width + x] = acc;
        }
    }
    out
}

fn channel_plane(img: &ColorImage, ch: usize) -> Vec<f64> {
    img.pixels().iter().map(|p| p[ch]).collect()
}

/// Mean SSIM of `a` against `b` over pixels and channels, 11x11 Gaussian
/// window with sigma 1.5 and the usual stabilizers for [0, 1] images.
pub fn ssim(a: &ColorImage, b: &ColorImage) -> Result<f64, CoreError> {
    Ok(ssim_with_grad(a, b)?.0)
}

/// SSIM plus its gradient with respect to the first image.
pub fn ssim_with_grad(x: &ColorImage, y: &ColorImage) -> Result<(f64, GradImage), CoreError> {
    check_dims(x, y)?;
    let (w, h) = (x.width(), x.height());
    let npx = w * h;
    let kernel = gaussian_window();
    let inv_n = 1.0 / (npx * 3) as f64;

    let mut total = 0.0;
    let mut grad = GradImage::zeros(w, h);
    for ch in 0..3 {
        let xp = channel_plane(x, ch);
        let yp = channel_plane(y, ch);
        let xx: Vec<f64> = xp.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = yp.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = xp.iter().zip(&yp).map(|(a, b)| a * b).collect();

        let mu_x = blur(&xp, w, h, &kernel);
        let mu_y = blur(&yp, w, h, &kernel);
        let s_xx = blur(&xx, w, h, &kernel);
        let s_yy = blur(&yy, w, h, &kernel);
        let s_xy = blur(&xy, w, h, &kernel);

        // Coefficient maps for the chain back through the blurs.
        let mut c_mu = vec![0.0; npx];
        let mut c_var = vec![0.0; npx];
        let mut c_cov = vec![0.0; npx];
        let mut c_var_mu = vec![0.0; npx];
        let mut c_cov_mu = vec![0.0; npx];
        for p in 0..npx {
            let (mx, my) = (mu_x[p], mu_y[p]);
            let var_x = s_xx[p] - mx * mx;
            let var_y = s_yy[p] - my * my;
            let cov = s_xy[p] - mx * my;
            let a1 = 2.0 * mx * my + C1;
            let a2 = 2.0 * cov + C2;
            let b1 = mx * mx + my * my + C1;
            let b2 = var_x + var_y + C2;
            total += (a1 * a2) / (b1 * b2);

            c_mu[p] = 2.0 * my * a2 / (b1 * b2) - 2.0 * mx * a1 * a2 / (b1 * b1 * b2);
            c_var[p] = -a1 * a2 / (b1 * b2 * b2);
            c_cov[p] = 2.0 * a1 / (b1 * b2);
            c_var_mu[p] = c_var[p] * mx;
            c_cov_mu[p] = c_cov[p] * my;
        }

        let b_mu = blur(&c_mu, w, h, &kernel);
        let b_var = blur(&c_var, w, h, &kernel);
        let b_cov = blur(&c_cov, w, h, &kernel);
        let b_var_mu = blur(&c_var_mu, w, h, &kernel);
        let b_cov_mu = blur(&c_cov_mu, w, h, &kernel);

        for py in 0..h {
            for px in 0..w {
                let p = py * w + px;
                let d = b_mu[p] + 2.0 * xp[p] * b_var[p] - 2.0 * b_var_mu[p] + yp[p] * b_cov[p] - b_cov_mu[p];
                let mut g = grad.get(px, py);
                g[ch] = d * inv_n;
                grad.set(px, py, g);
            }
        }
    }
    Ok((total * inv_n, grad))
}
