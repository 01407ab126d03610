//! Synthetic scene bundles. A random Gaussian set is rounded onto the f32
//! grid, rendered through the same camera path the loader uses, and written
//! out together with its generating checkpoint, so every stored image can be
//! reproduced bit-for-bit from the bundle alone.

use crate::config::AppConfig;
use crate::scene::{save_camera_records, CameraRecord, CONFIG_FILE, POINTCLOUD_FILE};
use crate::usage_error;
use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatlift::{
    render, save_checkpoint, save_config_sidecar, save_ply, Gaussian, GaussianSet,
    GuidancePointCloud, Mat3, Quaternion, Vec3, ViewRole,
};
use std::fs;
use std::path::Path;

pub const GENERATOR_CHECKPOINT: &str = "generator.ckpt";
pub const ORACLE_DIR: &str = "oracle";

/// Golden angle in radians; spreads view azimuths without clustering.
const GOLDEN_ANGLE: f64 = 2.399963229728653;

#[derive(Debug, Clone)]
pub struct SynthParams {
    pub gaussians: usize,
    pub size: usize,
    pub refs: usize,
    pub novels: usize,
    pub heldout: usize,
    pub seed: u64,
    pub it_s: u64,
    pub it_e: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            gaussians: 500,
            size: 64,
            refs: 4,
            novels: 60,
            heldout: 20,
            seed: 1,
            it_s: 1000,
            it_e: 4000,
        }
    }
}

fn round32(v: f64) -> f64 {
    v as f32 as f64
}

fn random_gaussian(rng: &mut ChaCha8Rng) -> Gaussian {
    let dir = loop {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        if v.norm() > 1e-3 && v.norm() < 1.0 {
            break v.normalized();
        }
    };
    let radius = 1.2 * rng.gen::<f64>().cbrt();
    let position = Vec3::new(dir.x * radius, dir.y * radius, dir.z * radius);
    let rotation = Quaternion::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    )
    .normalized();
    Gaussian {
        position: position.map(round32),
        rotation: Quaternion::new(
            round32(rotation.w),
            round32(rotation.x),
            round32(rotation.y),
            round32(rotation.z),
        ),
        log_scale: Vec3::new(
            rng.gen_range(-3.5..-2.3),
            rng.gen_range(-3.5..-2.3),
            rng.gen_range(-3.5..-2.3),
        )
        .map(round32),
        opacity_logit: round32(rng.gen_range(-0.5..2.5)),
        color: [
            round32(rng.gen_range(0.05..0.95)),
            round32(rng.gen_range(0.05..0.95)),
            round32(rng.gen_range(0.05..0.95)),
        ],
    }
}

/// World-to-camera pose for an eye looking at the origin.
fn look_at(eye: Vec3) -> (Quaternion, Vec3) {
    let z = (-eye).normalized();
    let mut up = Vec3::new(0.0, 1.0, 0.0);
    if z.cross(up).norm() < 1e-6 {
        up = Vec3::new(1.0, 0.0, 0.0);
    }
    let x = up.cross(z).normalized();
    let y = z.cross(x);
    let m = Mat3([[x.x, x.y, x.z], [y.x, y.y, y.z], [z.x, z.y, z.z]]);
    (Quaternion::from_matrix(&m).normalized(), -m.mul_vec(eye))
}

fn orbit_eye(azimuth: f64, elevation: f64, radius: f64) -> Vec3 {
    Vec3::new(
        radius * elevation.cos() * azimuth.cos(),
        radius * elevation.sin(),
        radius * elevation.cos() * azimuth.sin(),
    )
}

fn fract(v: f64) -> f64 {
    v - v.floor()
}

/// Write a complete bundle into `dir` and return the generating set.
pub fn generate_scene(dir: &Path, p: &SynthParams) -> Result<GaussianSet> {
    if p.gaussians == 0 || p.refs == 0 {
        return Err(usage_error("synth: --gaussians and --refs must be at least 1"));
    }
    if p.size < 8 {
        return Err(usage_error("synth: --size must be at least 8"));
    }
    fs::create_dir_all(dir.join("images"))
        .with_context(|| format!("cannot create {}", dir.join("images").display()))?;
    fs::create_dir_all(dir.join(ORACLE_DIR))?;

    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let gs = GaussianSet::new((0..p.gaussians).map(|_| random_gaussian(&mut rng)).collect());

    // Field of view with comfortable margin around the unit-scale cloud.
    let f = (p.size as f64 / 2.0) / 25f64.to_radians().tan();
    let c = p.size as f64 / 2.0;
    let orbit_radius = 4.0;

    let mut records = Vec::new();
    let push_cam = |records: &mut Vec<CameraRecord>,
                        id: String,
                        role: ViewRole,
                        image: Option<String>,
                        azimuth: f64,
                        elevation: f64| {
        let (q, t) = look_at(orbit_eye(azimuth, elevation, orbit_radius));
        records.push(CameraRecord {
            id,
            width: p.size,
            height: p.size,
            fx: f,
            fy: f,
            cx: c,
            cy: c,
            qw: q.w,
            qx: q.x,
            qy: q.y,
            qz: q.z,
            tx: t.x,
            ty: t.y,
            tz: t.z,
            role,
            image,
        });
    };

    for k in 0..p.refs {
        let id = format!("ref{k:02}");
        let image = Some(format!("images/{id}.png"));
        let az = k as f64 / p.refs as f64 * std::f64::consts::TAU;
        push_cam(&mut records, id, ViewRole::Reference, image, az, 0.15);
    }
    for k in 0..p.novels {
        let id = format!("nov{k:02}");
        let az = k as f64 * GOLDEN_ANGLE;
        let el = 0.45 * (fract(k as f64 * 0.618034) - 0.5) + 0.05;
        push_cam(&mut records, id, ViewRole::Novel, None, az, el);
    }
    for k in 0..p.heldout {
        let id = format!("hold{k:02}");
        let image = Some(format!("images/{id}.png"));
        let az = k as f64 * GOLDEN_ANGLE + 1.234;
        let el = 0.45 * (fract(k as f64 * 0.381966) - 0.5) + 0.08;
        push_cam(&mut records, id, ViewRole::Novel, image, az, el);
    }

    let mut cfg = AppConfig::default();
    cfg.train.it_s = p.it_s;
    cfg.train.it_e = p.it_e;
    cfg.train.seed = p.seed;
    cfg.train.densify.until = p.it_e / 2;
    cfg.train.densify.max_gaussians = (p.gaussians * 8).max(1000);
    cfg.init.log_scale = -3.2;

    for rec in &records {
        let cam = rec.camera()?;
        let out = render(&gs, &cam, &cfg.train.raster);
        let path = match &rec.image {
            Some(name) => dir.join(name),
            None => dir.join(ORACLE_DIR).join(format!("{}.png", rec.id)),
        };
        out.image
            .write_png(&path)
            .with_context(|| format!("cannot write {}", path.display()))?;
    }

    save_camera_records(&dir.join(crate::scene::CAMERAS_FILE), &records)?;

    let points = gs.gaussians().iter().map(|g| (g.position, g.color)).collect();
    save_ply(
        &dir.join(POINTCLOUD_FILE),
        &GuidancePointCloud::new(points, cfg.scene.point_radius_px),
    )?;

    let ckpt = dir.join(GENERATOR_CHECKPOINT);
    save_checkpoint(&ckpt, &gs)?;
    save_config_sidecar(&ckpt, &cfg.train)?;

    fs::write(dir.join(CONFIG_FILE), crate::config::config_echo(&cfg)?)?;

    println!(
        "wrote {}: {} gaussians, {} reference / {} novel / {} held-out cameras at {}x{}",
        dir.display(),
        p.gaussians,
        p.refs,
        p.novels,
        p.heldout,
        p.size,
        p.size
    );
    Ok(gs)
}
