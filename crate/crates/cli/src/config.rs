//! Strict run configuration: unknown keys are fatal so that mathematical
//! parameters cannot be silently misspelled, and every run embeds the
//! fully resolved config in its output for provenance.

use serde::{Deserialize, Serialize};

use moran::codetree::ConstructionSpec;
use moran::measure::WeightRule;
use moran::realization::GapRule;
use moran::{MoranError, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_DEPTH: usize = 50;
pub const DEFAULT_TAIL_WINDOW: usize = 10;
pub const DEFAULT_SCALE_BASE: f64 = 1.0 / 3.0;
pub const DEFAULT_SCALE_COUNT: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Dim,
    LocalDim,
    Lq,
    Realize,
    Estimate,
    Verify,
    Conditions,
}

/// Geometric scale grid parameters for the estimate command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleConfig {
    pub r_max: f64,
    pub base: f64,
    pub count: usize,
}

impl Default for ScaleConfig {
    fn default() -> Self {
        ScaleConfig {
            r_max: DEFAULT_SCALE_BASE.powi(4),
            base: DEFAULT_SCALE_BASE,
            count: DEFAULT_SCALE_COUNT,
        }
    }
}

/// Hand-specified absolute intervals, mainly for `verify` on explicit
/// geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealizationConfig {
    pub root: (f64, f64),
    pub levels: Vec<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    pub spec: ConstructionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<WeightRule>,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_tail_window")]
    pub tail_window: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scales: Option<ScaleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_rule: Option<GapRule>,
    /// Explicit path (1-based branch indices) for local-dim; sampled from
    /// the measure when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub realization: Option<RealizationConfig>,
}

fn default_depth() -> usize {
    DEFAULT_DEPTH
}

fn default_tail_window() -> usize {
    DEFAULT_TAIL_WINDOW
}

/// Parses and validates a config, applying documented defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let config: RunConfig = serde_json::from_str(text)
        .map_err(|e| MoranError::InvalidArgument(format!("config: {e}")))?;
    if config.schema != SCHEMA_VERSION {
        return Err(MoranError::InvalidArgument(format!(
            "config: unsupported schema {} (expected {SCHEMA_VERSION})",
            config.schema
        )));
    }
    if config.depth == 0 {
        return Err(MoranError::InvalidArgument("config: depth must be >= 1".into()));
    }
    if config.tail_window == 0 || config.tail_window > config.depth {
        return Err(MoranError::InvalidArgument(format!(
            "config: tail_window {} must be in 1..=depth ({})",
            config.tail_window, config.depth
        )));
    }
    if let Some(grid) = &config.q_grid {
        if grid.contains(&1.0) {
            return Err(MoranError::InvalidArgument(
                "config: q_grid contains 1, where the L^q dimension is undefined".into(),
            ));
        }
        if grid.iter().any(|&q| q < 0.0 || !q.is_finite()) {
            return Err(MoranError::InvalidArgument(
                "config: q_grid entries must be finite and >= 0".into(),
            ));
        }
    }
    if let Some(s) = &config.scales {
        if !(s.r_max > 0.0) || !(s.base > 0.0 && s.base < 1.0) || s.count < 4 {
            return Err(MoranError::InvalidArgument(
                "config: scales need r_max > 0, base in (0, 1), count >= 4".into(),
            ));
        }
    }
    Ok(config)
}
