//! Adam optimizer over Gaussian parameters with one learning rate per
//! parameter group, plus the moment bookkeeping needed when Gaussians are
//! cloned or pruned mid-run.

use crate::error::CoreError;
use crate::gaussian::GaussianSet;

pub const PARAMS_PER_GAUSSIAN: usize = 14;

/// Effective learning rates for one step. The position rate is typically
/// decayed over training; the rest stay fixed.
#[derive(Debug, Clone, Copy)]
pub struct GroupRates {
    pub position: f64,
    pub rotation: f64,
    pub log_scale: f64,
    pub opacity: f64,
    pub color: f64,
}

#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step_count: u64,
    m: Vec<[f64; PARAMS_PER_GAUSSIAN]>,
    v: Vec<[f64; PARAMS_PER_GAUSSIAN]>,
}

fn pack_grad(g: &crate::gaussian::ParamGrad) -> [f64; PARAMS_PER_GAUSSIAN] {
    [
        g.position.x,
        g.position.y,
        g.position.z,
        g.rotation[0],
        g.rotation[1],
        g.rotation[2],
        g.rotation[3],
        g.log_scale.x,
        g.log_scale.y,
        g.log_scale.z,
        g.opacity_logit,
        g.color[0],
        g.color[1],
        g.color[2],
    ]
}

fn group_rate(param: usize, lr: &GroupRates) -> f64 {
    match param {
        0..=2 => lr.position,
        3..=6 => lr.rotation,
        7..=9 => lr.log_scale,
        10 => lr.opacity,
        _ => lr.color,
    }
}

impl Adam {
    pub fn new(count: usize) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            m: vec![[0.0; PARAMS_PER_GAUSSIAN]; count],
            v: vec![[0.0; PARAMS_PER_GAUSSIAN]; count],
        }
    }

    pub fn tracked(&self) -> usize {
        self.m.len()
    }

    /// Add zeroed moment slots for a Gaussian appended to the set.
    pub fn push_zero(&mut self) {
        self.m.push([0.0; PARAMS_PER_GAUSSIAN]);
        self.v.push([0.0; PARAMS_PER_GAUSSIAN]);
    }

    /// Drop moment slots for pruned Gaussians; mirrors `GaussianSet::retain_indices`.
    pub fn retain_indices(&mut self, keep: &[bool]) {
        let mut it = keep.iter();
        self.m.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        self.v.retain(|_| *it.next().unwrap());
    }

    /// One Adam update from the gradients accumulated in `gs`. Gradients are
    /// left in place; the caller zeroes them when the step is consumed.
    pub fn step(&mut self, gs: &mut GaussianSet, lr: &GroupRates) -> Result<(), CoreError> {
        if self.m.len() != gs.len() {
            return Err(CoreError::dims("optimizer state", self.m.len(), gs.len()));
        }
        self.step_count += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step_count as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step_count as i32);
        for i in 0..gs.len() {
            let grad = pack_grad(gs.grad(i));
            let mut update = [0.0; PARAMS_PER_GAUSSIAN];
            for p in 0..PARAMS_PER_GAUSSIAN {
                let m = self.beta1 * self.m[i][p] + (1.0 - self.beta1) * grad[p];
                let v = self.beta2 * self.v[i][p] + (1.0 - self.beta2) * grad[p] * grad[p];
                self.m[i][p] = m;
                self.v[i][p] = v;
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                update[p] = group_rate(p, lr) * m_hat / (v_hat.sqrt() + self.eps);
            }
            let g = gs.get_mut(i);
            g.position.x -= update[0];
            g.position.y -= update[1];
            g.position.z -= update[2];
            g.rotation.w -= update[3];
            g.rotation.x -= update[4];
            g.rotation.y -= update[5];
            g.rotation.z -= update[6];
            g.log_scale.x -= update[7];
            g.log_scale.y -= update[8];
            g.log_scale.z -= update[9];
            g.opacity_logit -= update[10];
            g.color[0] -= update[11];
            g.color[1] -= update[12];
            g.color[2] -= update[13];
        }
        Ok(())
    }
}

/// Exponential interpolation from `lr_init` at step 0 to `lr_final` at
/// `total_steps`, clamped at the endpoints.
pub fn decayed_rate(lr_init: f64, lr_final: f64, step: u64, total_steps: u64) -> f64 {
    if total_steps == 0 {
        return lr_final;
    }
    let t = (step as f64 / total_steps as f64).clamp(0.0, 1.0);
    lr_init * (lr_final / lr_init).powf(t)
}
