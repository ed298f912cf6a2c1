use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matcher::MatchPolicy;
use crate::stitch::CanvasSpec;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid session config: {0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrivacyConfig {
    /// Keep raw tiles in memory after publishing (off by default).
    pub retain_tiles: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub refresh_interval_s: f64,
    #[serde(rename = "match")]
    pub policy: MatchPolicy,
    pub sticky_iou: f64,
    pub privacy: PrivacyConfig,
    /// Snapshots kept in memory.
    pub retention: usize,
    pub panorama: CanvasSpec,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            refresh_interval_s: 90.0,
            policy: MatchPolicy::default(),
            sticky_iou: 0.3,
            privacy: PrivacyConfig::default(),
            retention: 5,
            panorama: CanvasSpec::default(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.refresh_interval_s > 0.0 && self.refresh_interval_s.is_finite()) {
            return Err(ConfigError(format!(
                "refresh_interval_s must be > 0, got {}",
                self.refresh_interval_s
            )));
        }
        if !(0.0..=1.0).contains(&self.sticky_iou) {
            return Err(ConfigError(format!("sticky_iou must lie in [0, 1], got {}", self.sticky_iou)));
        }
        if self.retention == 0 {
            return Err(ConfigError("retention must be >= 1".into()));
        }
        self.policy.validate().map_err(|e| ConfigError(e.to_string()))
    }
}
