//! Run configuration: a TOML file of flat dotted keys (`train.alpha = 0.7`,
//! `fixer.kind = "oracle"`) merged with `--set key=value` overrides from the
//! command line. The fully resolved config is echoed back so every run
//! records exactly what it used.

use crate::{usage_error, UsageError};
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use splatlift::{DenoiseCoeffs, TrainConfig};
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub train: TrainConfig,
    pub fixer: FixerConfig,
    pub init: InitConfig,
    pub scene: SceneParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixerKind {
    /// Returns the artifact render unchanged.
    Identity,
    /// Replays ground-truth images stored under oracle/ in the bundle.
    Oracle,
    /// Spawns an external command speaking the batch-directory protocol.
    External,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixerConfig {
    pub kind: FixerKind,
    /// Oracle blend toward ground truth; 1 replays it exactly.
    pub fidelity: f64,
    /// Oracle only: restrict the (1 - fidelity) corruption to pixels the
    /// guidance mask leaves uncovered.
    pub corrupt_uncovered: bool,
    /// Command to run for kind = "external".
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    pub timeout_s: u64,
    /// Optional denoise coefficients forwarded in the external manifest.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<DenoiseCoeffs>,
}

impl Default for FixerConfig {
    fn default() -> Self {
        FixerConfig {
            kind: FixerKind::Identity,
            fidelity: 1.0,
            corrupt_uncovered: false,
            command: None,
            timeout_s: 300,
            coeffs: None,
        }
    }
}

/// How the optimizable set is seeded before warmup.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    /// Per-axis log standard deviation for seeded Gaussians.
    pub log_scale: f64,
    pub opacity: f64,
    /// Number of random Gaussians when the bundle has no point cloud.
    pub count: usize,
    /// Half-extent of the random seeding cube.
    pub extent: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig { log_scale: -3.0, opacity: 0.1, count: 1000, extent: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneParams {
    /// Projected radius of guidance points, in pixels.
    pub point_radius_px: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams { point_radius_px: 1.0 }
    }
}

/// Load `path` if it exists (a missing file means all defaults), apply each
/// `--set key=value` override, then the `--seed` flag on top.
pub fn load_config(path: &Path, sets: &[String], seed: Option<u64>) -> Result<AppConfig> {
    let mut table: toml::Table = if path.exists() {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        text.parse()
            .with_context(|| format!("{}: invalid TOML", path.display()))?
    } else {
        toml::Table::new()
    };
    for spec in sets {
        apply_set(&mut table, spec)?;
    }
    let mut cfg: AppConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e| usage_error(format!("config: {e}")))?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    Ok(cfg)
}

pub fn config_echo(cfg: &AppConfig) -> Result<String> {
    Ok(toml::to_string_pretty(cfg)?)
}

fn apply_set(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| UsageError(format!("--set expects key=value, got '{spec}'")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(usage_error(format!("--set: empty key segment in '{key}'")));
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        node = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| UsageError(format!("--set: '{part}' in '{key}' is not a table")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Interpret an override value the way TOML would: integer, float, bool,
/// comma-separated float array, else string.
fn parse_value(raw: &str) -> toml::Value {
    if let Ok(v) = raw.parse::<i64>() {
        return toml::Value::Integer(v);
    }
    if let Ok(v) = raw.parse::<f64>() {
        return toml::Value::Float(v);
    }
    if let Ok(v) = raw.parse::<bool>() {
        return toml::Value::Boolean(v);
    }
    if raw.contains(',') {
        let floats: Option<Vec<f64>> = raw.split(',').map(|s| s.trim().parse().ok()).collect();
        if let Some(fs) = floats {
            return toml::Value::Array(fs.into_iter().map(toml::Value::Float).collect());
        }
    }
    toml::Value::String(raw.trim_matches('"').to_string())
}
