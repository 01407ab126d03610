//! Random-sample-drop view scheduler.
//!
//! Training draws views from a shuffled stack. Each drawn candidate is
//! dropped with a probability that steers the kept-sample mix toward a
//! target reference fraction `alpha`; the running reference fraction `r`
//! closes the loop.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{ViewId, ViewRole};
use crate::error::ScheduleError;

/// Value `r` reports before any sample has been kept.
pub const R_SEED: f64 = 1e-6;

const DENOM_GUARD: f64 = 1e-12;

/// Which draws update the running reference fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RUpdate {
    /// Count only samples that survive the drop decision.
    #[default]
    KeptOnly,
    /// Count every drawn candidate, kept or not.
    AllDrawn,
}

/// How the stack is rebuilt when it empties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefillMode {
    /// Compose each refill at the alpha ratio from per-role rotations, so the
    /// kept mix settles on alpha regardless of how lopsided the view counts are.
    #[default]
    RatioMatched,
    /// Refill with every view exactly once, shuffled. With very unbalanced
    /// role counts the drop rule alone cannot reach alpha from this stream;
    /// kept for comparison runs.
    UniformAllViews,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ScheduleConfig {
    pub alpha: f64,
    pub r_update: RUpdate,
    pub refill: RefillMode,
    /// Consecutive refills with no kept sample before the stream errors out.
    pub max_empty_refills: u32,
    pub seed: u64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            alpha: 0.7,
            r_update: RUpdate::default(),
            refill: RefillMode::default(),
            max_empty_refills: 100,
            seed: 0,
        }
    }
}

/// One drawn candidate, for audit.
#[derive(Debug, Clone)]
pub struct TraceRow {
    /// Index of the `next_sample` call this draw served.
    pub iteration: u64,
    pub view_id: ViewId,
    pub role: ViewRole,
    pub kept: bool,
    /// Reference fraction after this draw was accounted.
    pub r: f64,
}

/// Drop probability for a drawn candidate given the target reference
/// fraction `alpha` and the running reference fraction `r`.
pub fn drop_probability(role: ViewRole, alpha: f64, r: f64) -> f64 {
    match role {
        ViewRole::Reference => 1.0 - (alpha / r.max(DENOM_GUARD)).min(1.0),
        ViewRole::Novel => 1.0 - ((1.0 - alpha) / (1.0 - r).max(DENOM_GUARD)).min(1.0),
    }
}

#[derive(Debug, Clone)]
struct Rotation {
    order: Vec<u32>,
    cursor: usize,
}

impl Rotation {
    fn new(n: usize) -> Self {
        Rotation {
            order: (0..n as u32).collect(),
            cursor: n, // force a shuffle on first take
        }
    }

    /// Next `m` ids, never repeating one within this call. Requires m <= len.
    fn take(&mut self, m: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
        let n = self.order.len();
        debug_assert!(m <= n);
        let mut out = Vec::with_capacity(m);
        for _ in 0..m {
            if self.cursor == n {
                self.order.shuffle(rng);
                self.cursor = 0;
            }
            let mut j = self.cursor;
            while out.contains(&self.order[j]) {
                j += 1;
            }
            self.order.swap(self.cursor, j);
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SampleSchedule {
    ref_ids: Vec<ViewId>,
    novel_ids: Vec<ViewId>,
    cfg: ScheduleConfig,
    stack: Vec<(u32, ViewRole)>,
    ref_rotation: Rotation,
    novel_rotation: Rotation,
    carry_ref: f64,
    carry_novel: f64,
    counted_ref: u64,
    counted_total: u64,
    iteration: u64,
    rng: ChaCha8Rng,
    trace: Vec<TraceRow>,
}

impl SampleSchedule {
    pub fn new(
        ref_ids: Vec<ViewId>,
        novel_ids: Vec<ViewId>,
        cfg: ScheduleConfig,
    ) -> Result<Self, ScheduleError> {
        if ref_ids.is_empty() && novel_ids.is_empty() {
            return Err(ScheduleError::NoViews);
        }
        if !(0.0..=1.0).contains(&cfg.alpha) || !cfg.alpha.is_finite() {
            return Err(ScheduleError::InvalidAlpha(cfg.alpha));
        }
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(SampleSchedule {
            ref_rotation: Rotation::new(ref_ids.len()),
            novel_rotation: Rotation::new(novel_ids.len()),
            ref_ids,
            novel_ids,
            cfg,
            stack: Vec::new(),
            carry_ref: 0.0,
            carry_novel: 0.0,
            counted_ref: 0,
            counted_total: 0,
            iteration: 0,
            rng,
            trace: Vec::new(),
        })
    }

    /// Running reference fraction; seeded before the first counted sample.
    pub fn r(&self) -> f64 {
        if self.counted_total == 0 {
            R_SEED
        } else {
            self.counted_ref as f64 / self.counted_total as f64
        }
    }

    pub fn alpha(&self) -> f64 {
        self.cfg.alpha
    }

    fn refill(&mut self) {
        let (n_ref, n_novel) = (self.ref_ids.len(), self.novel_ids.len());
        let alpha = self.cfg.alpha;
        let (m_ref, m_novel) = match self.cfg.refill {
            RefillMode::UniformAllViews => (n_ref, n_novel),
            RefillMode::RatioMatched => {
                if alpha >= 1.0 || n_novel == 0 {
                    (n_ref, 0)
                } else if alpha <= 0.0 || n_ref == 0 {
                    (0, n_novel)
                } else {
                    // Largest stack that holds the alpha ratio without
                    // repeating a view; carries keep the long-run ratio exact.
                    let m = (n_ref as f64 / alpha).min(n_novel as f64 / (1.0 - alpha));
                    let want_ref = alpha * m + self.carry_ref;
                    let want_novel = (1.0 - alpha) * m + self.carry_novel;
                    // The epsilon keeps exact integer targets from flooring
                    // one short; the carries absorb the rounding either way.
                    let m_ref = ((want_ref + 1e-9).floor() as usize).min(n_ref);
                    let m_novel = ((want_novel + 1e-9).floor() as usize).min(n_novel);
                    self.carry_ref = want_ref - m_ref as f64;
                    self.carry_novel = want_novel - m_novel as f64;
                    (m_ref, m_novel)
                }
            }
        };
        self.stack.clear();
        for idx in self.ref_rotation.take(m_ref, &mut self.rng) {
            self.stack.push((idx, ViewRole::Reference));
        }
        for idx in self.novel_rotation.take(m_novel, &mut self.rng) {
            self.stack.push((idx, ViewRole::Novel));
        }
        self.stack.shuffle(&mut self.rng);
    }

    fn view_id(&self, idx: u32, role: ViewRole) -> &ViewId {
        match role {
            ViewRole::Reference => &self.ref_ids[idx as usize],
            ViewRole::Novel => &self.novel_ids[idx as usize],
        }
    }

    /// Draw candidates until one survives its drop decision and return it.
    pub fn next_sample(&mut self) -> Result<(ViewId, ViewRole), ScheduleError> {
        self.iteration += 1;
        let mut empty_refills = 0u32;
        loop {
            if self.stack.is_empty() {
                if empty_refills >= self.cfg.max_empty_refills {
                    return Err(ScheduleError::Starved {
                        refills: empty_refills,
                    });
                }
                self.refill();
                empty_refills += 1;
                continue;
            }
            let (idx, role) = self.stack.pop().unwrap();
            if self.cfg.r_update == RUpdate::AllDrawn {
                self.count(role);
            }
            let p_drop = drop_probability(role, self.cfg.alpha, self.r());
            let kept = !(self.rng.gen::<f64>() < p_drop);
            if kept && self.cfg.r_update == RUpdate::KeptOnly {
                self.count(role);
            }
            self.trace.push(TraceRow {
                iteration: self.iteration,
                view_id: self.view_id(idx, role).clone(),
                role,
                kept,
                r: self.r(),
            });
            if kept {
                return Ok((self.view_id(idx, role).clone(), role));
            }
        }
    }

    fn count(&mut self, role: ViewRole) {
        self.counted_total += 1;
        if role == ViewRole::Reference {
            self.counted_ref += 1;
        }
    }

    /// Kept occurrences per view over the next `horizon` samples, computed on
    /// a copy so the live stream is not advanced.
    pub fn epoch_coverage(&self, horizon: u64) -> Result<BTreeMap<ViewId, u64>, ScheduleError> {
        let mut counts: BTreeMap<ViewId, u64> = BTreeMap::new();
        for id in self.ref_ids.iter().chain(&self.novel_ids) {
            counts.insert(id.clone(), 0);
        }
        let mut sim = self.clone();
        sim.trace.clear();
        for _ in 0..horizon {
            let (id, _) = sim.next_sample()?;
            *counts.get_mut(&id).unwrap() += 1;
        }
        Ok(counts)
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn take_trace(&mut self) -> Vec<TraceRow> {
        std::mem::take(&mut self.trace)
    }

    /// Write the draw audit trail as CSV.
    pub fn write_trace_csv(&self, path: &Path) -> Result<(), std::io::Error> {
        write_trace_csv(&self.trace, path)
    }
}

pub fn write_trace_csv(rows: &[TraceRow], path: &Path) -> Result<(), std::io::Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "view_id", "role", "status", "r"])?;
    for row in rows {
        let role = match row.role {
            ViewRole::Reference => "reference",
            ViewRole::Novel => "novel",
        };
        let status = if row.kept { "kept" } else { "dropped" };
        w.write_record([
            row.iteration.to_string(),
            row.view_id.0.clone(),
            role.to_string(),
            status.to_string(),
            format!("{:.9}", row.r),
        ])?;
    }
    w.flush()
}
