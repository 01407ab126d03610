//! Versioned binary snapshots of a Gaussian set.
//!
//! Layout: 4 magic bytes, u32 version, u64 count, then 14 little-endian f32
//! per Gaussian (position xyz, rotation wxyz, log-scale xyz, pre-sigmoid
//! opacity, RGB). Training configuration rides along in a JSON sidecar next
//! to the binary file.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::CheckpointError;
use crate::gaussian::{Gaussian, GaussianSet};
use crate::math::{Quaternion, Vec3};
use crate::trainer::TrainConfig;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"GSPC";
pub const CHECKPOINT_VERSION: u32 = 1;

const FLOATS_PER_GAUSSIAN: usize = 14;

fn pack(g: &Gaussian) -> [f32; FLOATS_PER_GAUSSIAN] {
    [
        g.position.x as f32,
        g.position.y as f32,
        g.position.z as f32,
        g.rotation.w as f32,
        g.rotation.x as f32,
        g.rotation.y as f32,
        g.rotation.z as f32,
        g.log_scale.x as f32,
        g.log_scale.y as f32,
        g.log_scale.z as f32,
        g.opacity_logit as f32,
        g.color[0] as f32,
        g.color[1] as f32,
        g.color[2] as f32,
    ]
}

fn unpack(v: &[f32; FLOATS_PER_GAUSSIAN]) -> Gaussian {
    Gaussian {
        position: Vec3::new(v[0] as f64, v[1] as f64, v[2] as f64),
        rotation: Quaternion::new(v[3] as f64, v[4] as f64, v[5] as f64, v[6] as f64),
        log_scale: Vec3::new(v[7] as f64, v[8] as f64, v[9] as f64),
        opacity_logit: v[10] as f64,
        color: [v[11] as f64, v[12] as f64, v[13] as f64],
    }
}

pub fn save_checkpoint(path: &Path, gs: &GaussianSet) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(gs.len() as u64).to_le_bytes())?;
    for g in gs.gaussians() {
        for v in pack(g) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<GaussianSet, CheckpointError> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic {
            expected: CHECKPOINT_MAGIC,
            got: magic,
        });
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion {
            got: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let mut dword = [0u8; 8];
    r.read_exact(&mut dword)?;
    let count = u64::from_le_bytes(dword) as usize;

    let expected = count * FLOATS_PER_GAUSSIAN * 4;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != expected {
        return Err(CheckpointError::Truncated {
            expected,
            got: payload.len(),
        });
    }
    let mut gaussians = Vec::with_capacity(count);
    for chunk in payload.chunks_exact(FLOATS_PER_GAUSSIAN * 4) {
        let mut vals = [0f32; FLOATS_PER_GAUSSIAN];
        for (i, b) in chunk.chunks_exact(4).enumerate() {
            vals[i] = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        }
        gaussians.push(unpack(&vals));
    }
    Ok(GaussianSet::new(gaussians))
}

/// Sidecar file holding the training configuration, next to the checkpoint.
pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.file_name().unwrap_or_default().to_os_string();
    name.push(".json");
    checkpoint.with_file_name(name)
}

pub fn save_config_sidecar(checkpoint: &Path, cfg: &TrainConfig) -> Result<(), CheckpointError> {
    let json = serde_json::to_vec_pretty(cfg).map_err(|e| CheckpointError::Sidecar(e.to_string()))?;
    fs::write(sidecar_path(checkpoint), json)?;
    Ok(())
}

pub fn load_config_sidecar(checkpoint: &Path) -> Result<TrainConfig, CheckpointError> {
    let bytes = fs::read(sidecar_path(checkpoint))?;
    serde_json::from_slice(&bytes).map_err(|e| CheckpointError::Sidecar(e.to_string()))
}
