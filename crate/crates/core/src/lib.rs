//! Differentiable 3D Gaussian splatting at desk scale, with the pieces needed
//! to lift a sparse set of reference views into dense supervision: a seeded
//! perturbation stage, a point-cloud guidance renderer with confidence masks,
//! a ratio-controlled view sampler with random sample drop, confidence-weighted
//! backward passes, and a pluggable artifact-fixer boundary.

pub mod camera;
pub mod checkpoint;
pub mod error;
pub mod fixer;
pub mod gaussian;
pub mod image;
pub mod loss;
pub mod math;
pub mod metrics;
pub mod optim;
pub mod pcrender;
pub mod perturb;
pub mod ply;
pub mod scheduler;
pub mod splat;
pub mod trainer;

pub use camera::{project_point, CameraView, Intrinsics, Projection, ViewId, ViewRole};
pub use checkpoint::{load_checkpoint, load_config_sidecar, save_checkpoint, save_config_sidecar};
pub use error::{CheckpointError, CoreError, FixError, PlyError, ScheduleError, TrainError};
pub use fixer::{
    denoise_step, select_reference, DenoiseCoeffs, ExternalFixer, FixRequest, Fixer, IdentityFixer,
    OracleFixer,
};
pub use gaussian::{Gaussian, GaussianSet, ParamGrad};
pub use image::{ColorImage, GradImage, WeightMap};
pub use loss::{photometric_loss, LossWeights};
pub use math::{quat_mul, quat_to_matrix, Mat3, Quaternion, Vec3};
pub use metrics::{mse, psnr, ssim, ssim_with_grad};
pub use pcrender::{render_points, ConfidenceMask, GuidancePointCloud};
pub use perturb::{jitter_position, jitter_rotation, perturb_set, PerturbConfig};
pub use ply::{load_ply, save_ply};
pub use scheduler::{
    drop_probability, RUpdate, RefillMode, SampleSchedule, ScheduleConfig, TraceRow,
};
pub use splat::{
    compute_view_weights, render, render_backward, GradMode, RasterConfig, RenderOutput,
};
pub use trainer::{
    DensifyConfig, LearningRates, TrainConfig, TrainReport, Trainer, ViewScore,
};
