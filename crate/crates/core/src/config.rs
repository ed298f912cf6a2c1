//! Service configuration file (TOML).
//!
//! ```toml
//! profile = "feasibility-test"
//! refresh_interval_s = 90
//! sticky_iou = 0.3
//! match.high_threshold = 0.8
//! match.low_threshold = 0.5
//! match.assignment = "greedy"
//! privacy.retain_tiles = false
//!
//! [api]
//! port = 8080
//! token = "change-me"
//! ```
//!
//! `NAMEMO_CAPTURE` and `NAMEMO_BACKEND` override `capture.source` and
//! `backend.kind`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::capture::SourceKind;
use crate::profile::RunProfile;
use crate::session::{ConfigError, SessionConfig};
use crate::vision::BackendKind;

const TOP_LEVEL_KEYS: &[&str] = &[
    "profile",
    "refresh_interval_s",
    "match",
    "sticky_iou",
    "privacy",
    "retention",
    "panorama",
    "api",
    "capture",
    "backend",
    "paths",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApiConfig {
    pub bind: String,
    pub port: u16,
    /// Required in `X-NaMemo-Token` on every POST when set.
    pub token: Option<String>,
    pub heartbeat_s: f64,
    /// Push clients silent for this long are disconnected.
    pub stall_timeout_s: f64,
}

impl Default for ApiConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            port: 8080,
            token: None,
            heartbeat_s: 15.0,
            stall_timeout_s: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaptureConfig {
    /// `sim` or `hw`.
    pub source: String,
    pub students: usize,
    pub seed: u64,
    /// Synthetic embedding noise.
    pub noise: f64,
}

impl Default for CaptureConfig {
    fn default() -> Self {
        Self { source: "sim".into(), students: 161, seed: 1, noise: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    /// `synthetic` or `adapter`.
    pub kind: String,
    /// Adapter command line, run through `sh -c`.
    pub command: Option<String>,
    pub reply_timeout_s: f64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self { kind: "synthetic".into(), command: None, reply_timeout_s: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub gallery: Option<PathBuf>,
    pub call_log: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub profile: String,
    #[serde(flatten)]
    pub session: SessionConfig,
    pub api: ApiConfig,
    pub capture: CaptureConfig,
    pub backend: BackendConfig,
    pub paths: PathsConfig,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            profile: crate::profile::FEASIBILITY_TEST.into(),
            session: SessionConfig::default(),
            api: ApiConfig::default(),
            capture: CaptureConfig::default(),
            backend: BackendConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl AppConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError(e.to_string()))?;
        if let Some(k) = table.keys().find(|k| !TOP_LEVEL_KEYS.contains(&k.as_str())) {
            return Err(ConfigError(format!("unknown key {k:?}")));
        }
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.session.validate()?;
        self.run_profile()?;
        SourceKind::parse(&self.capture.source).map_err(|e| ConfigError(e.to_string()))?;
        BackendKind::parse(&self.backend.kind).map_err(|e| ConfigError(e.to_string()))?;
        if !(self.api.heartbeat_s > 0.0 && self.api.stall_timeout_s > 0.0) {
            return Err(ConfigError("api heartbeat and stall timeout must be > 0".into()));
        }
        if self.capture.noise < 0.0 || !self.capture.noise.is_finite() {
            return Err(ConfigError("capture.noise must be >= 0".into()));
        }
        Ok(())
    }

    /// Applies `NAMEMO_CAPTURE` / `NAMEMO_BACKEND` when set.
    pub fn with_env_overrides(mut self) -> Result<Self, ConfigError> {
        if let Ok(v) = std::env::var("NAMEMO_CAPTURE") {
            SourceKind::parse(&v).map_err(|e| ConfigError(e.to_string()))?;
            self.capture.source = v.trim().to_string();
        }
        if let Ok(v) = std::env::var("NAMEMO_BACKEND") {
            BackendKind::parse(&v).map_err(|e| ConfigError(e.to_string()))?;
            self.backend.kind = v.trim().to_string();
        }
        Ok(self)
    }

    /// The named built-in profile carrying this file's session settings.
    pub fn run_profile(&self) -> Result<RunProfile, ConfigError> {
        let mut p = RunProfile::builtin(&self.profile)
            .ok_or_else(|| ConfigError(format!("unknown profile {:?}", self.profile)))?;
        p.session = self.session.clone();
        Ok(p)
    }

    pub fn source_kind(&self) -> SourceKind {
        SourceKind::parse(&self.capture.source).unwrap_or(SourceKind::Simulator)
    }

    pub fn backend_kind(&self) -> BackendKind {
        BackendKind::parse(&self.backend.kind).unwrap_or(BackendKind::Synthetic)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcher::Assignment;

    #[test]
    fn empty_file_gives_defaults() {
        let c = AppConfig::from_toml_str("").unwrap();
        assert_eq!(c, AppConfig::default());
        assert_eq!(c.session.refresh_interval_s, 90.0);
        assert_eq!(c.session.sticky_iou, 0.3);
        assert!(!c.session.privacy.retain_tiles);
        assert_eq!(c.api.bind, "127.0.0.1");
    }

    #[test]
    fn dotted_keys_reach_the_session() {
        let c = AppConfig::from_toml_str(
            "refresh_interval_s = 30\nsticky_iou = 0.4\nmatch.high_threshold = 0.85\n\
             match.low_threshold = 0.4\nmatch.assignment = \"optimal\"\nprivacy.retain_tiles = true\n\
             [api]\ntoken = \"t0k\"\nport = 9001\n",
        )
        .unwrap();
        assert_eq!(c.session.refresh_interval_s, 30.0);
        assert_eq!(c.session.sticky_iou, 0.4);
        assert_eq!(c.session.policy.high_threshold, 0.85);
        assert_eq!(c.session.policy.low_threshold, 0.4);
        assert_eq!(c.session.policy.assignment, Assignment::Optimal);
        assert!(c.session.privacy.retain_tiles);
        assert_eq!(c.api.token.as_deref(), Some("t0k"));
        assert_eq!(c.api.port, 9001);
        assert_eq!(c.run_profile().unwrap().session, c.session);
    }

    #[test]
    fn bad_values_and_typos_are_rejected() {
        for text in [
            "refresh_interval_s = 0",
            "match.low_threshold = 0.9",
            "match.assignment = \"best\"",
            "refresh_intervals = 3",
            "[api]\nprot = 1",
            "profile = \"lecture-hall-b\"",
            "capture.source = \"usb\"",
        ] {
            assert!(AppConfig::from_toml_str(text).is_err(), "{text}");
        }
    }
}
