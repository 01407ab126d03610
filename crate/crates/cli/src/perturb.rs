//! `splatlift perturb`: render (clean, perturbed) image pairs from a
//! checkpoint under seeded positional and rotational jitter, for exercising
//! downstream artifact repair.

use crate::render::raster_for_checkpoint;
use crate::scene::load_camera_records;
use crate::usage_error;
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use splatlift::{load_checkpoint, perturb_set, render, PerturbConfig};
use std::fs;
use std::path::PathBuf;

pub struct PerturbArgs {
    pub checkpoint: PathBuf,
    pub cameras: PathBuf,
    pub out: PathBuf,
    pub sigma_x: f64,
    pub delta_phi: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbPair {
    pub view_id: String,
    pub clean: String,
    pub perturbed: String,
}

/// Written alongside the images; lists every file the command emitted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbManifest {
    pub sigma_x: f64,
    pub delta_phi: f64,
    pub seed: u64,
    pub pairs: Vec<PerturbPair>,
}

pub fn cmd_perturb(args: &PerturbArgs) -> Result<()> {
    let cfg = PerturbConfig::unvalidated(args.sigma_x, args.delta_phi, args.seed)
        .map_err(|e| usage_error(format!("perturb: {e}")))?;
    if args.sigma_x != 0.0 || args.delta_phi != 0.0 {
        if let Err(e) = cfg.check_ranges() {
            log::warn!("perturb: {e}");
        }
    }
    let gs = load_checkpoint(&args.checkpoint)
        .with_context(|| format!("cannot load {}", args.checkpoint.display()))?;
    let raster = raster_for_checkpoint(&args.checkpoint)?;
    let perturbed = perturb_set(&gs, &cfg)?;
    let records = load_camera_records(&args.cameras)?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;

    let mut pairs = Vec::with_capacity(records.len());
    for rec in &records {
        let cam = rec.camera()?;
        let clean_name = format!("clean_{}.png", rec.id);
        let pert_name = format!("perturbed_{}.png", rec.id);
        render(&gs, &cam, &raster).image.write_png(&args.out.join(&clean_name))?;
        render(&perturbed, &cam, &raster).image.write_png(&args.out.join(&pert_name))?;
        pairs.push(PerturbPair { view_id: rec.id.clone(), clean: clean_name, perturbed: pert_name });
    }
    let manifest = PerturbManifest {
        sigma_x: args.sigma_x,
        delta_phi: args.delta_phi,
        seed: args.seed,
        pairs,
    };
    fs::write(args.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    println!("wrote {} image pairs into {}", records.len(), args.out.display());
    Ok(())
}
