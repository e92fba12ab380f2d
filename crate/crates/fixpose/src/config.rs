//! Run configuration (JSON) and the on-disk rotation bound table cache.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use fixpose_core::pose_distribution::DistributionConfig;
use fixpose_core::pose_search::{SearchConfig, COMPONENT_FACTOR};
use fixpose_core::se3_grid::{standard_bound_table, RotationBoundTable, DEFAULT_SAFETY_FACTOR, MAX_ROTATION_LEVEL};
use fixpose_core::tip_calibration::CalibrationOptions;
use serde::{Deserialize, Serialize};

use crate::formats::{read_json, write_json, FormatError, LengthUnit};

/// Every tunable of a run. Missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub search: SearchConfig,
    pub distribution: DistributionConfig,
    /// Measurement error bound b_s, meters.
    pub sample_bound: f64,
    /// Numeric slack b_eps added to every rejection bound, meters.
    pub numeric_slack: f64,
    /// Probe ball radius when measurements are ball centers, meters.
    pub probe_radius: f64,
    pub unit: LengthUnit,
    pub calibration: CalibrationOptions,
    /// Rotation cells closer than this many gamma are one mode.
    pub component_factor: f64,
    /// Where to cache the rotation bound table between runs.
    pub table_cache: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            search: SearchConfig::default(),
            distribution: DistributionConfig::default(),
            sample_bound: 1e-3,
            numeric_slack: fixpose_core::init_bound::DEFAULT_NUMERIC_SLACK,
            probe_radius: 0.0,
            unit: LengthUnit::M,
            calibration: CalibrationOptions::default(),
            component_factor: COMPONENT_FACTOR,
            table_cache: None,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, FormatError> {
        read_json(path)
    }
}

/// The table for the full rotation depth: from `cache` when it holds a
/// matching table, otherwise computed (and written to `cache` if given).
pub fn bound_table(cache: Option<&Path>) -> Result<Arc<RotationBoundTable>, FormatError> {
    let Some(path) = cache else {
        return Ok(standard_bound_table());
    };
    if path.exists() {
        match read_json::<RotationBoundTable>(path) {
            Ok(table)
                if table.max_level() == MAX_ROTATION_LEVEL
                    && table.safety_factor == DEFAULT_SAFETY_FACTOR
                    && table.gamma.len() == MAX_ROTATION_LEVEL as usize + 1 =>
            {
                return Ok(Arc::new(table));
            }
            Ok(_) => log::warn!("{}: bound table does not match; recomputing", path.display()),
            Err(e) => log::warn!("{e}; recomputing the bound table"),
        }
    }
    let table = standard_bound_table();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| FormatError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    write_json(table.as_ref(), path)?;
    Ok(table)
}
