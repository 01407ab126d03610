//! `splatlift train`: load a scene bundle, run the two-phase optimization,
//! and write everything a run should leave behind: resolved config echo,
//! checkpoint with config sidecar, training report, loss and schedule traces,
//! and a few sample renders from each phase.

use crate::config::{load_config, AppConfig, FixerKind, InitConfig};
use crate::scene::{SceneBundle, CONFIG_FILE};
use crate::synth::ORACLE_DIR;
use crate::usage_error;
use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatlift::gaussian::logit;
use splatlift::scheduler::write_trace_csv;
use splatlift::{
    render, render_points, save_checkpoint, save_config_sidecar, CameraView, ColorImage,
    ExternalFixer, Fixer, Gaussian, GaussianSet, GuidancePointCloud, IdentityFixer, OracleFixer,
    Quaternion, TrainReport, Trainer, Vec3, ViewScore,
};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

pub struct TrainArgs {
    pub scene: PathBuf,
    pub out: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub sets: Vec<String>,
    pub seed: Option<u64>,
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let cfg_path = args.config.clone().unwrap_or_else(|| args.scene.join(CONFIG_FILE));
    let cfg = load_config(&cfg_path, &args.sets, args.seed)?;
    let out_dir = args.out.clone().unwrap_or_else(|| args.scene.join("out"));
    let renders_dir = out_dir.join("renders");
    fs::create_dir_all(&renders_dir)
        .with_context(|| format!("cannot create {}", renders_dir.display()))?;

    let echo = crate::config::config_echo(&cfg)?;
    println!("# resolved config\n{echo}");
    fs::write(out_dir.join("config_echo.toml"), &echo)?;

    let bundle = SceneBundle::load(&args.scene, cfg.scene.point_radius_px)?;
    let refs = bundle.references();
    let mut novels = bundle.training_novels();
    let heldout = bundle.heldout();
    if refs.is_empty() {
        bail!("{}: no reference cameras", args.scene.display());
    }
    println!(
        "scene: {} reference, {} novel, {} held-out views, {} guidance points",
        refs.len(),
        novels.len(),
        heldout.len(),
        bundle.pointcloud.points().len()
    );

    let gs = init_gaussians(&bundle.pointcloud, &cfg.init, cfg.train.seed);
    let fixer = build_fixer(&cfg, &args.scene, &out_dir, &novels, &bundle.pointcloud)?;

    let mut trainer = Trainer::new(gs, cfg.train.clone())?;
    trainer.config().validate()?;

    let t0 = Instant::now();
    trainer.warmup(&refs)?;
    let t1 = Instant::now();
    println!("warmup: {} steps in {:.1}s", cfg.train.it_s, (t1 - t0).as_secs_f64());
    sample_render(&trainer, refs.first(), &renders_dir, "warmup")?;
    sample_render(&trainer, novels.first(), &renders_dir, "warmup")?;

    let fallbacks = trainer.fixing_round(&mut novels, &bundle.pointcloud, fixer.as_ref(), &refs)?;
    let t2 = Instant::now();
    println!(
        "fixing round: {} novel targets installed ({} fallbacks) in {:.1}s",
        novels.len(),
        fallbacks,
        (t2 - t1).as_secs_f64()
    );
    if let Some(v) = novels.first() {
        if let Some(target) = &v.target {
            target.write_png(&renders_dir.join(format!("fixed_target_{}.png", v.id)))?;
        }
        if let Some(wm) = &v.weight_map {
            fs::write(renders_dir.join(format!("weights_{}.png", v.id)), wm.to_png_bytes())?;
        }
    }

    let mut all = refs.clone();
    all.extend(novels.iter().cloned());
    trainer.mixed_phase(&all)?;
    let t3 = Instant::now();
    println!(
        "mixed phase: {} steps in {:.1}s, {} gaussians",
        cfg.train.it_e - cfg.train.it_s,
        (t3 - t2).as_secs_f64(),
        trainer.gaussians().len()
    );
    sample_render(&trainer, refs.first(), &renders_dir, "final")?;
    sample_render(&trainer, novels.first(), &renders_dir, "final")?;
    sample_render(&trainer, heldout.first(), &renders_dir, "final")?;

    let scores = trainer.evaluate(&heldout)?;
    let (mean_psnr, mean_ssim) = means(&scores);
    if let (Some(p), Some(s)) = (mean_psnr, mean_ssim) {
        println!("held-out: mean PSNR {p:.2} dB, mean SSIM {s:.4} over {} views", scores.len());
    }

    let trace_path = out_dir.join("schedule_trace.csv");
    write_trace_csv(trainer.schedule_trace(), &trace_path)?;

    let mut loss_csv = String::from("iteration,loss\n");
    for (i, l) in trainer.loss_trace().iter().enumerate() {
        loss_csv.push_str(&format!("{i},{l:.17e}\n"));
    }
    fs::write(out_dir.join("loss_trace.csv"), loss_csv)?;

    let ckpt_path = out_dir.join("model.ckpt");
    save_checkpoint(&ckpt_path, trainer.gaussians())?;
    save_config_sidecar(&ckpt_path, trainer.config())?;

    let report = TrainReport {
        loss_trace: trainer.loss_trace().to_vec(),
        warmup_seconds: (t1 - t0).as_secs_f64(),
        fixing_seconds: (t2 - t1).as_secs_f64(),
        mixed_seconds: (t3 - t2).as_secs_f64(),
        heldout: scores,
        mean_psnr,
        mean_ssim,
        final_gaussians: trainer.gaussians().len(),
        fix_fallbacks: fallbacks,
        schedule_trace_path: Some(trace_path),
    };
    fs::write(out_dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    println!("wrote {}", ckpt_path.display());
    Ok(())
}

fn means(scores: &[ViewScore]) -> (Option<f64>, Option<f64>) {
    if scores.is_empty() {
        return (None, None);
    }
    let n = scores.len() as f64;
    (
        Some(scores.iter().map(|s| s.psnr).sum::<f64>() / n),
        Some(scores.iter().map(|s| s.ssim).sum::<f64>() / n),
    )
}

fn sample_render(
    trainer: &Trainer,
    view: Option<&CameraView>,
    dir: &Path,
    phase: &str,
) -> Result<()> {
    if let Some(v) = view {
        let out = render(trainer.gaussians(), v, &trainer.config().raster);
        out.image.write_png(&dir.join(format!("{phase}_{}.png", v.id)))?;
    }
    Ok(())
}

/// Seed the optimizable set from the guidance cloud when there is one,
/// otherwise scatter `init.count` random Gaussians in a cube.
pub fn init_gaussians(pc: &GuidancePointCloud, init: &InitConfig, seed: u64) -> GaussianSet {
    let identity = Quaternion::new(1.0, 0.0, 0.0, 0.0);
    let scale = Vec3::new(init.log_scale, init.log_scale, init.log_scale);
    let opacity_logit = logit(init.opacity.clamp(1e-4, 1.0 - 1e-4));
    let mut gaussians = Vec::new();
    if !pc.is_empty() {
        for (pos, color) in pc.points() {
            gaussians.push(Gaussian {
                position: *pos,
                rotation: identity,
                log_scale: scale,
                opacity_logit,
                color: *color,
            });
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x517c_c1b7_2722_0a95));
        for _ in 0..init.count {
            gaussians.push(Gaussian {
                position: Vec3::new(
                    rng.gen_range(-init.extent..init.extent),
                    rng.gen_range(-init.extent..init.extent),
                    rng.gen_range(-init.extent..init.extent),
                ),
                rotation: identity,
                log_scale: scale,
                opacity_logit,
                color: [rng.gen(), rng.gen(), rng.gen()],
            });
        }
    }
    GaussianSet::new(gaussians)
}

/// Assemble the configured fixer stage.
pub fn build_fixer(
    cfg: &AppConfig,
    scene_dir: &Path,
    out_dir: &Path,
    novels: &[CameraView],
    pc: &GuidancePointCloud,
) -> Result<Box<dyn Fixer>> {
    match cfg.fixer.kind {
        FixerKind::Identity => Ok(Box::new(IdentityFixer)),
        FixerKind::Oracle => {
            let mut truth = BTreeMap::new();
            for v in novels {
                let path = scene_dir.join(ORACLE_DIR).join(format!("{}.png", v.id));
                if path.exists() {
                    truth.insert(v.id.clone(), ColorImage::read_png(&path)?);
                }
            }
            if truth.is_empty() {
                bail!(
                    "fixer.kind=oracle: no ground-truth images under {}",
                    scene_dir.join(ORACLE_DIR).display()
                );
            }
            let mut fixer = OracleFixer::new(truth).with_fidelity(cfg.fixer.fidelity);
            if cfg.fixer.corrupt_uncovered {
                let masks = novels
                    .iter()
                    .map(|v| (v.id.clone(), render_points(pc, v).1))
                    .collect();
                fixer = fixer.corrupt_only_uncovered(masks);
            }
            Ok(Box::new(fixer))
        }
        FixerKind::External => {
            let command = cfg
                .fixer
                .command
                .as_ref()
                .ok_or_else(|| usage_error("fixer.kind=external requires fixer.command"))?;
            let mut fixer = ExternalFixer::new(command, out_dir.join("fixer_exchange"))
                .with_timeout(Duration::from_secs(cfg.fixer.timeout_s));
            if let Some(coeffs) = cfg.fixer.coeffs {
                fixer = fixer.with_coeffs(coeffs);
            }
            Ok(Box::new(fixer))
        }
    }
}
