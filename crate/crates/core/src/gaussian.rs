//! The optimizable scene representation: anisotropic 3D Gaussians with
//! log-space scales, pre-sigmoid opacity, and flat RGB color, plus aligned
//! per-parameter gradient accumulators.

use crate::math::{Quaternion, Vec3};
use serde::{Deserialize, Serialize};

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub position: Vec3,
    /// Unit rotation quaternion; renormalized after every optimizer step.
    pub rotation: Quaternion,
    /// Per-axis standard deviations, stored as logs.
    pub log_scale: Vec3,
    /// Opacity stored pre-sigmoid.
    pub opacity_logit: f64,
    /// Flat RGB in [0, 1] (degree-0 spherical harmonics only).
    pub color: [f64; 3],
}

impl Gaussian {
    /// Decoded per-axis standard deviations (> 0).
    pub fn scale(&self) -> Vec3 {
        self.log_scale.map(f64::exp)
    }

    /// Decoded opacity in (0, 1).
    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }
}

/// Gradient accumulator with the same shape as a Gaussian's parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ParamGrad {
    pub position: Vec3,
    pub rotation: [f64; 4],
    pub log_scale: Vec3,
    pub opacity_logit: f64,
    pub color: [f64; 3],
}

impl ParamGrad {
    pub fn is_zero(&self) -> bool {
        self.position == Vec3::ZERO
            && self.rotation == [0.0; 4]
            && self.log_scale == Vec3::ZERO
            && self.opacity_logit == 0.0
            && self.color == [0.0; 3]
    }

    pub fn add(&mut self, o: &ParamGrad) {
        self.position = self.position + o.position;
        for k in 0..4 {
            self.rotation[k] += o.rotation[k];
        }
        self.log_scale = self.log_scale + o.log_scale;
        self.opacity_logit += o.opacity_logit;
        for k in 0..3 {
            self.color[k] += o.color[k];
        }
    }
}

/// Ordered Gaussians plus one gradient accumulator per Gaussian.
///
/// The accumulator list always has the same length as the Gaussian list and
/// is zero outside a backward/step cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSet {
    gaussians: Vec<Gaussian>,
    grads: Vec<ParamGrad>,
}

impl GaussianSet {
    pub fn new(gaussians: Vec<Gaussian>) -> Self {
        let grads = vec![ParamGrad::default(); gaussians.len()];
        GaussianSet { gaussians, grads }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn gaussians(&self) -> &[Gaussian] {
        &self.gaussians
    }

    pub fn get(&self, i: usize) -> &Gaussian {
        &self.gaussians[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Gaussian {
        &mut self.gaussians[i]
    }

    pub fn grad(&self, i: usize) -> &ParamGrad {
        &self.grads[i]
    }

    pub fn grads(&self) -> &[ParamGrad] {
        &self.grads
    }

    pub fn accumulate_grad(&mut self, i: usize, g: &ParamGrad) {
        self.grads[i].add(g);
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            *g = ParamGrad::default();
        }
    }

    pub fn grads_are_zero(&self) -> bool {
        self.grads.iter().all(ParamGrad::is_zero)
    }

    pub fn push(&mut self, g: Gaussian) {
        self.gaussians.push(g);
        self.grads.push(ParamGrad::default());
    }

    /// Keep only Gaussians whose index passes the predicate, preserving order.
    pub fn retain_indices(&mut self, keep: &[bool]) {
        assert_eq!(keep.len(), self.gaussians.len());
        let mut i = 0;
        self.gaussians.retain(|_| {
            let k = keep[i];
            i += 1;
            k
        });
        let mut j = 0;
        self.grads.retain(|_| {
            let k = keep[j];
            j += 1;
            k
        });
    }
}
