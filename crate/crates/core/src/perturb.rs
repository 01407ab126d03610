//! Seeded corruption of a GaussianSet: Gaussian positional jitter plus
//! axis-angle rotational jitter, used to manufacture paired clean/corrupted
//! renders.

use crate::error::CoreError;
use crate::gaussian::GaussianSet;
use crate::math::{quat_mul, Quaternion, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Validated ranges for the corruption magnitudes.
pub const SIGMA_X_RANGE: (f64, f64) = (1e-4, 1e-2);
pub const DELTA_PHI_RANGE: (f64, f64) = (5.0 * std::f64::consts::PI / 180.0, 45.0 * std::f64::consts::PI / 180.0);

/// Corruption magnitudes plus the seed of the random stream.
///
/// The stream is ChaCha8, so draws are reproducible across platforms and
/// releases for a fixed seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbConfig {
    /// Standard deviation of the positional jitter, scene units.
    pub sigma_x: f64,
    /// Maximum rotation angle, radians.
    pub delta_phi: f64,
    pub seed: u64,
}

impl PerturbConfig {
    /// Construct with the default range validation.
    pub fn new(sigma_x: f64, delta_phi: f64, seed: u64) -> Result<Self, CoreError> {
        let cfg = PerturbConfig { sigma_x, delta_phi, seed };
        cfg.check_ranges()?;
        Ok(cfg)
    }

    /// Construct without range validation (any non-negative magnitudes).
    pub fn unvalidated(sigma_x: f64, delta_phi: f64, seed: u64) -> Result<Self, CoreError> {
        if sigma_x < 0.0 || delta_phi < 0.0 {
            return Err(CoreError::invalid("perturb config", "magnitudes must be non-negative"));
        }
        Ok(PerturbConfig { sigma_x, delta_phi, seed })
    }

    /// Check the magnitudes against the documented ranges.
    pub fn check_ranges(&self) -> Result<(), CoreError> {
        if !(SIGMA_X_RANGE.0..=SIGMA_X_RANGE.1).contains(&self.sigma_x) {
            return Err(CoreError::invalid(
                "sigma_x",
                format!("{} outside [{}, {}]", self.sigma_x, SIGMA_X_RANGE.0, SIGMA_X_RANGE.1),
            ));
        }
        if !(DELTA_PHI_RANGE.0..=DELTA_PHI_RANGE.1).contains(&self.delta_phi) {
            return Err(CoreError::invalid(
                "delta_phi",
                format!("{} rad outside [{}, {}]", self.delta_phi, DELTA_PHI_RANGE.0, DELTA_PHI_RANGE.1),
            ));
        }
        Ok(())
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// x' = x + eps with eps ~ N(0, sigma_x^2 I). sigma_x = 0 returns x exactly.
pub fn jitter_position(x: Vec3, cfg: &PerturbConfig, rng: &mut ChaCha8Rng) -> Vec3 {
    let n = Vec3::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    );
    x + n * cfg.sigma_x
}

/// q_eps = [cos(phi/2), k sin(phi/2)] with k uniform on the sphere and
/// phi uniform on [-delta_phi, delta_phi].
pub fn random_rotation_quat(cfg: &PerturbConfig, rng: &mut ChaCha8Rng) -> Quaternion {
    let k = loop {
        let v = Vec3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        if v.norm() > 1e-12 {
            break v.normalized();
        }
    };
    let phi: f64 = if cfg.delta_phi > 0.0 {
        rng.gen_range(-cfg.delta_phi..=cfg.delta_phi)
    } else {
        0.0
    };
    let (s, c) = (phi / 2.0).sin_cos();
    Quaternion::new(c, k.x * s, k.y * s, k.z * s)
}

/// q' = q_eps ⊗ q. The input must be unit; delta_phi = 0 returns q exactly.
pub fn jitter_rotation(q: Quaternion, cfg: &PerturbConfig, rng: &mut ChaCha8Rng) -> Result<Quaternion, CoreError> {
    if !q.is_unit(1e-6) {
        return Err(CoreError::NonUnitQuaternion { norm: q.norm(), tol: 1e-6 });
    }
    let q_eps = random_rotation_quat(cfg, rng);
    if q_eps == Quaternion::IDENTITY {
        return Ok(q);
    }
    Ok(quat_mul(q_eps, q))
}

/// A new set with every Gaussian's position and rotation jittered by i.i.d.
/// draws from the config's seeded stream. Scales, opacities, colors, and the
/// input set itself are untouched.
pub fn perturb_set(gs: &GaussianSet, cfg: &PerturbConfig) -> Result<GaussianSet, CoreError> {
    let mut rng = cfg.rng();
    let mut out = Vec::with_capacity(gs.len());
    for g in gs.gaussians() {
        let mut p = *g;
        p.position = jitter_position(g.position, cfg, &mut rng);
        p.rotation = jitter_rotation(g.rotation, cfg, &mut rng)?;
        out.push(p);
    }
    Ok(GaussianSet::new(out))
}
