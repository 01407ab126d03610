//! Pluggable artifact-fixing stage.
//!
//! After warmup, every novel view's render is handed to a [`Fixer`] together
//! with a point-cloud guidance render and a nearby reference photo; whatever
//! comes back becomes that view's training target. The trait boundary lets a
//! learned model sit behind [`external::ExternalFixer`] while tests use the
//! identity and oracle implementations.

mod external;

pub use external::ExternalFixer;

use std::collections::BTreeMap;

use crate::camera::{CameraView, ViewId};
use crate::error::FixError;
use crate::image::ColorImage;
use crate::pcrender::ConfidenceMask;

#[derive(Debug, Clone)]
pub struct FixRequest {
    /// Novel-view render to repair.
    pub artifact_image: ColorImage,
    /// Point-cloud render of the same view.
    pub guidance_image: ColorImage,
    /// Photo of the nearest reference view.
    pub reference_image: ColorImage,
    pub view_id: ViewId,
}

impl FixRequest {
    pub fn validate(&self) -> Result<(), FixError> {
        if !self.artifact_image.same_dims(&self.guidance_image)
            || !self.artifact_image.same_dims(&self.reference_image)
        {
            return Err(FixError::Failed {
                view_id: self.view_id.clone(),
                message: format!(
                    "image dimensions disagree: artifact {}x{}, guidance {}x{}, reference {}x{}",
                    self.artifact_image.width(),
                    self.artifact_image.height(),
                    self.guidance_image.width(),
                    self.guidance_image.height(),
                    self.reference_image.width(),
                    self.reference_image.height()
                ),
            });
        }
        Ok(())
    }
}

/// Coefficients of the closed-form single-step denoise combination. The
/// schedule producing them is external configuration; nothing here assumes a
/// particular noise model.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DenoiseCoeffs {
    pub xi_t: f64,
    pub xi_prev: f64,
    pub eta_t: f64,
    pub eta_prev: f64,
    pub sigma_t: f64,
    pub t_fixed: u32,
}

impl DenoiseCoeffs {
    pub fn validate(&self) -> Result<(), FixError> {
        if self.eta_t == 0.0 || self.eta_prev == 0.0 {
            return Err(FixError::BadCoeffs("eta_t and eta_prev must be nonzero".into()));
        }
        if !(self.sigma_t >= 0.0) {
            return Err(FixError::BadCoeffs(format!("sigma_t {} must be >= 0", self.sigma_t)));
        }
        for (name, v) in [
            ("xi_t", self.xi_t),
            ("xi_prev", self.xi_prev),
            ("eta_t", self.eta_t),
            ("eta_prev", self.eta_prev),
            ("sigma_t", self.sigma_t),
        ] {
            if !v.is_finite() {
                return Err(FixError::BadCoeffs(format!("{name} is not finite")));
            }
        }
        Ok(())
    }
}

/// Single-step denoise: `sqrt(xi_prev) * eta_t / eta_prev * Z +
/// sqrt(xi_t) * eta_prev / eta_t * z + sigma_t * noise`, elementwise.
pub fn denoise_step(
    z_big: &[f64],
    z: &[f64],
    coeffs: &DenoiseCoeffs,
    noise: &[f64],
) -> Result<Vec<f64>, FixError> {
    coeffs.validate()?;
    if z_big.len() != z.len() || z_big.len() != noise.len() {
        return Err(FixError::LatentLength {
            z_big: z_big.len(),
            z: z.len(),
            noise: noise.len(),
        });
    }
    let c_big = coeffs.xi_prev.sqrt() * coeffs.eta_t / coeffs.eta_prev;
    let c_small = coeffs.xi_t.sqrt() * coeffs.eta_prev / coeffs.eta_t;
    Ok(z_big
        .iter()
        .zip(z)
        .zip(noise)
        .map(|((a, b), n)| c_big * a + c_small * b + coeffs.sigma_t * n)
        .collect())
}

/// Reference view closest to `novel` by camera-center distance; exact ties
/// resolve to the lowest view id.
pub fn select_reference(refs: &[CameraView], novel: &CameraView) -> Result<ViewId, FixError> {
    let center = novel.camera_center();
    refs.iter()
        .map(|v| {
            let c = v.camera_center();
            let d = (c.x - center.x).powi(2) + (c.y - center.y).powi(2) + (c.z - center.z).powi(2);
            (d, &v.id)
        })
        .min_by(|(da, ia), (db, ib)| da.total_cmp(db).then_with(|| ia.cmp(ib)))
        .map(|(_, id)| id.clone())
        .ok_or(FixError::NoReferences)
}

pub trait Fixer: Send + Sync {
    fn fix(&self, request: &FixRequest) -> Result<ColorImage, FixError>;

    /// Fix a whole round of requests. The default maps `fix`; implementations
    /// with per-batch transport override this.
    fn fix_batch(&self, requests: &[FixRequest]) -> Vec<Result<ColorImage, FixError>> {
        requests.iter().map(|r| self.fix(r)).collect()
    }
}

/// Returns the artifact image untouched. Turns the mixed phase into
/// self-distillation, useful as a stability baseline.
#[derive(Debug, Clone, Default)]
pub struct IdentityFixer;

impl Fixer for IdentityFixer {
    fn fix(&self, request: &FixRequest) -> Result<ColorImage, FixError> {
        request.validate()?;
        Ok(request.artifact_image.clone())
    }
}

/// Replays held-out ground truth, optionally degraded toward the artifact
/// image to emulate an imperfect fixer.
#[derive(Debug, Clone)]
pub struct OracleFixer {
    truth: BTreeMap<ViewId, ColorImage>,
    fidelity: f64,
    /// When set, the fidelity blend only degrades pixels the matching
    /// confidence mask leaves uncovered; covered pixels stay ground truth.
    corrupt_uncovered_only: Option<BTreeMap<ViewId, ConfidenceMask>>,
}

impl OracleFixer {
    pub fn new(truth: BTreeMap<ViewId, ColorImage>) -> Self {
        OracleFixer {
            truth,
            fidelity: 1.0,
            corrupt_uncovered_only: None,
        }
    }

    pub fn with_fidelity(mut self, fidelity: f64) -> Self {
        self.fidelity = fidelity.clamp(0.0, 1.0);
        self
    }

    pub fn corrupt_only_uncovered(mut self, masks: BTreeMap<ViewId, ConfidenceMask>) -> Self {
        self.corrupt_uncovered_only = Some(masks);
        self
    }
}

impl Fixer for OracleFixer {
    fn fix(&self, request: &FixRequest) -> Result<ColorImage, FixError> {
        request.validate()?;
        let truth = self.truth.get(&request.view_id).ok_or_else(|| FixError::Failed {
            view_id: request.view_id.clone(),
            message: "no ground truth registered for this view".into(),
        })?;
        if !truth.same_dims(&request.artifact_image) {
            return Err(FixError::Failed {
                view_id: request.view_id.clone(),
                message: "ground truth dimensions disagree with the request".into(),
            });
        }
        let mask = self
            .corrupt_uncovered_only
            .as_ref()
            .and_then(|m| m.get(&request.view_id));
        let lam = self.fidelity;
        let mut out = truth.clone();
        if lam < 1.0 {
            for y in 0..out.height() {
                for x in 0..out.width() {
                    if let Some(m) = mask {
                        if m.get(x, y) {
                            continue;
                        }
                    }
                    let t = truth.get(x, y);
                    let a = request.artifact_image.get(x, y);
                    out.set(
                        x,
                        y,
                        [
                            (lam * t[0] + (1.0 - lam) * a[0]).clamp(0.0, 1.0),
                            (lam * t[1] + (1.0 - lam) * a[1]).clamp(0.0, 1.0),
                            (lam * t[2] + (1.0 - lam) * a[2]).clamp(0.0, 1.0),
                        ],
                    );
                }
            }
        }
        Ok(out)
    }
}
