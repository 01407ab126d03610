//! Scene builders shared by the criterion benches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatlift::{CameraView, ColorImage, Gaussian, GaussianSet, Intrinsics, Quaternion, Vec3};

pub fn demo_gaussians(n: usize, seed: u64) -> GaussianSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GaussianSet::new(
        (0..n)
            .map(|_| Gaussian {
                position: Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(2.0..5.0),
                ),
                rotation: Quaternion::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
                .normalized(),
                log_scale: Vec3::new(
                    rng.gen_range(-3.5..-1.5),
                    rng.gen_range(-3.5..-1.5),
                    rng.gen_range(-3.5..-1.5),
                ),
                opacity_logit: rng.gen_range(-1.0..2.0),
                color: [rng.gen(), rng.gen(), rng.gen()],
            })
            .collect(),
    )
}

pub fn demo_view(size: usize) -> CameraView {
    let f = size as f64 * 0.9;
    let c = size as f64 / 2.0;
    CameraView::novel(
        "bench",
        Intrinsics { fx: f, fy: f, cx: c, cy: c, width: size, height: size },
        Quaternion::new(1.0, 0.0, 0.0, 0.0),
        Vec3::new(0.0, 0.0, 0.0),
    )
}

pub fn demo_image(size: usize, seed: u64) -> ColorImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = ColorImage::new(size, size);
    for y in 0..size {
        for x in 0..size {
            img.set(x, y, [rng.gen(), rng.gen(), rng.gen()]);
        }
    }
    img
}
