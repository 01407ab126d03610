use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use splatlift_cli::eval::{cmd_eval, EvalArgs};
use splatlift_cli::perturb::{cmd_perturb, PerturbArgs};
use splatlift_cli::render::{cmd_render, RenderArgs};
use splatlift_cli::synth::{generate_scene, SynthParams};
use splatlift_cli::train::{cmd_train, TrainArgs};
use splatlift_cli::UsageError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "splatlift", version, about = "Sparse-to-dense Gaussian splatting reconstruction")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model on a scene bundle.
    Train {
        /// Scene bundle directory (cameras.json, images/, config.toml).
        scene: PathBuf,
        /// Output directory (default: <scene>/out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Config file (default: <scene>/config.toml).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override a config key, e.g. --set train.alpha=0.5. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        /// Override train.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render every camera of a cameras.json from a checkpoint.
    Render {
        checkpoint: PathBuf,
        cameras: PathBuf,
        out: PathBuf,
        /// Also write per-view residual transmittance maps.
        #[arg(long)]
        dump_transmittance: bool,
        /// Accepted for interface uniformity; rendering is deterministic.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a checkpoint against a bundle's held-out views.
    Eval {
        checkpoint: PathBuf,
        scene: PathBuf,
        /// Also write the JSON report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Accepted for interface uniformity; evaluation is deterministic.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render (clean, perturbed) image pairs under seeded jitter.
    Perturb {
        checkpoint: PathBuf,
        cameras: PathBuf,
        out: PathBuf,
        /// Positional jitter standard deviation.
        #[arg(long, default_value_t = 1e-3)]
        sigma_x: f64,
        /// Maximum rotational jitter angle in radians.
        #[arg(long, default_value_t = 0.05)]
        delta_phi: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a self-consistent synthetic scene bundle.
    Synth {
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        gaussians: usize,
        /// Image width and height in pixels.
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 4)]
        refs: usize,
        #[arg(long, default_value_t = 60)]
        novels: usize,
        #[arg(long, default_value_t = 20)]
        heldout: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Warmup steps written into the bundle's config.toml.
        #[arg(long, default_value_t = 1000)]
        it_s: u64,
        /// Total steps written into the bundle's config.toml.
        #[arg(long, default_value_t = 4000)]
        it_e: u64,
    },
}

struct StderrLogger;

impl log::Log for StderrLogger {
    fn enabled(&self, metadata: &log::Metadata) -> bool {
        metadata.level() <= max_level()
    }

    fn log(&self, record: &log::Record) {
        if self.enabled(record.metadata()) {
            eprintln!("[{}] {}", record.level(), record.args());
        }
    }

    fn flush(&self) {}
}

fn max_level() -> log::LevelFilter {
    match std::env::var("SPLATLIFT_LOG").as_deref() {
        Ok("error") => log::LevelFilter::Error,
        Ok("info") => log::LevelFilter::Info,
        Ok("debug") => log::LevelFilter::Debug,
        Ok("trace") => log::LevelFilter::Trace,
        _ => log::LevelFilter::Warn,
    }
}

static LOGGER: StderrLogger = StderrLogger;

fn main() -> ExitCode {
    // Die quietly when the reader of our stdout goes away (`eval ... | head`),
    // like any other pipeline-friendly tool, instead of panicking on EPIPE.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }

    let _ = log::set_logger(&LOGGER);
    log::set_max_level(max_level());

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };

    let result = match cli.cmd {
        Cmd::Train { scene, out, config, sets, seed } => {
            cmd_train(&TrainArgs { scene, out, config, sets, seed })
        }
        Cmd::Render { checkpoint, cameras, out, dump_transmittance, seed: _ } => {
            cmd_render(&RenderArgs { checkpoint, cameras, out, dump_transmittance })
        }
        Cmd::Eval { checkpoint, scene, out, seed: _ } => {
            cmd_eval(&EvalArgs { checkpoint, scene, out })
        }
        Cmd::Perturb { checkpoint, cameras, out, sigma_x, delta_phi, seed } => {
            cmd_perturb(&PerturbArgs { checkpoint, cameras, out, sigma_x, delta_phi, seed })
        }
        Cmd::Synth { out, gaussians, size, refs, novels, heldout, seed, it_s, it_e } => {
            generate_scene(
                &out,
                &SynthParams { gaussians, size, refs, novels, heldout, seed, it_s, it_e },
            )
            .map(|_| ())
        }
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
