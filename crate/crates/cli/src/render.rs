//! `splatlift render`: rasterize a checkpoint through every camera in a
//! cameras.json, one PNG per view. Purely deterministic; running twice
//! produces byte-identical files.

use crate::scene::load_camera_records;
use anyhow::{Context, Result};
use splatlift::{load_checkpoint, load_config_sidecar, render, RasterConfig};
use std::fs;
use std::path::{Path, PathBuf};

pub struct RenderArgs {
    pub checkpoint: PathBuf,
    pub cameras: PathBuf,
    pub out: PathBuf,
    pub dump_transmittance: bool,
}

/// Raster settings travel with the checkpoint in its config sidecar; fall
/// back to defaults when the checkpoint has none.
pub fn raster_for_checkpoint(checkpoint: &Path) -> Result<RasterConfig> {
    let sidecar = checkpoint.with_file_name(format!(
        "{}.json",
        checkpoint.file_name().and_then(|n| n.to_str()).unwrap_or("model.ckpt")
    ));
    if sidecar.exists() {
        let cfg = load_config_sidecar(checkpoint)
            .with_context(|| format!("cannot read sidecar {}", sidecar.display()))?;
        Ok(cfg.raster)
    } else {
        Ok(RasterConfig::default())
    }
}

pub fn cmd_render(args: &RenderArgs) -> Result<()> {
    let gs = load_checkpoint(&args.checkpoint)
        .with_context(|| format!("cannot load {}", args.checkpoint.display()))?;
    let raster = raster_for_checkpoint(&args.checkpoint)?;
    let records = load_camera_records(&args.cameras)?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    for rec in &records {
        let cam = rec.camera()?;
        let out = render(&gs, &cam, &raster);
        out.image.write_png(&args.out.join(format!("{}.png", rec.id)))?;
        if args.dump_transmittance {
            fs::write(
                args.out.join(format!("{}_transmittance.png", rec.id)),
                out.transmittance.to_png_bytes(),
            )?;
        }
    }
    println!("rendered {} views from {} gaussians into {}", records.len(), gs.len(), args.out.display());
    Ok(())
}
