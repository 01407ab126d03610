//! `splatlift eval`: score a checkpoint against the held-out views of a scene
//! bundle (novel cameras that ship an image). Emits per-view and mean
//! PSNR/SSIM as JSON.

use crate::render::raster_for_checkpoint;
use crate::scene::SceneBundle;
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use splatlift::{load_checkpoint, psnr, render, ssim, ViewScore};
use std::fs;
use std::path::PathBuf;

pub struct EvalArgs {
    pub checkpoint: PathBuf,
    pub scene: PathBuf,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub views: Vec<ViewScore>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

pub fn evaluate_bundle(args: &EvalArgs) -> Result<EvalReport> {
    let gs = load_checkpoint(&args.checkpoint)
        .with_context(|| format!("cannot load {}", args.checkpoint.display()))?;
    let raster = raster_for_checkpoint(&args.checkpoint)?;
    let bundle = SceneBundle::load(&args.scene, 1.0)?;
    let heldout = bundle.heldout();
    if heldout.is_empty() {
        bail!(
            "{}: no held-out views (no novel cameras with an image)",
            args.scene.display()
        );
    }
    let mut views = Vec::with_capacity(heldout.len());
    for v in &heldout {
        let rendered = render(&gs, v, &raster).image;
        let target = v.target.as_ref().expect("held-out views carry targets");
        views.push(ViewScore {
            view_id: v.id.clone(),
            psnr: psnr(&rendered, target)?,
            ssim: ssim(&rendered, target)?,
        });
    }
    let n = views.len() as f64;
    Ok(EvalReport {
        mean_psnr: views.iter().map(|s| s.psnr).sum::<f64>() / n,
        mean_ssim: views.iter().map(|s| s.ssim).sum::<f64>() / n,
        views,
    })
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let report = evaluate_bundle(args)?;
    let json = serde_json::to_string_pretty(&report)?;
    println!("{json}");
    if let Some(path) = &args.out {
        fs::write(path, &json).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}
