//! Detect, align and embed faces in a tile.
//!
//! Two backends implement [`VisionBackend`]: the deterministic
//! [`SyntheticBackend`] driven by simulator ground truth, and
//! [`AdapterBackend`], which forwards tiles to an external model process.

mod adapter;
mod align;
mod synthetic;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boxes::BBox;
use crate::capture::TileImage;
use crate::embedding::Embedding;

pub use adapter::{AdapterBackend, AdapterReply, AdapterRequest, WireDetection};
pub use align::{compute_alignment, AlignTransform, ALIGNED_CROP_PX, CANONICAL_TEMPLATE_112, NOSE};
pub use synthetic::{synthetic_landmarks, SyntheticBackend};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("vision backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("malformed adapter reply: {0}")]
    MalformedAdapterReply(String),
    #[error("landmarks are degenerate (collinear or coincident)")]
    DegenerateLandmarks,
    #[error("unknown backend {0:?} (expected synthetic or adapter)")]
    UnknownBackend(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Tile pixels.
    pub bbox: BBox,
    /// Eyes, nose, mouth corners in tile pixels.
    pub landmarks: [[f64; 2]; 5],
    pub embedding: Embedding,
    pub det_score: f64,
}

impl Detection {
    /// Nose landmark, the point used to place a detection on the sphere.
    pub fn anchor(&self) -> (f64, f64) {
        let n = self.landmarks[NOSE];
        (n[0], n[1])
    }
}

pub trait VisionBackend: Send + Sync {
    fn detect_and_embed(&self, tile: &TileImage) -> Result<Vec<Detection>, BackendError>;
}

impl<B: VisionBackend + ?Sized> VisionBackend for std::sync::Arc<B> {
    fn detect_and_embed(&self, tile: &TileImage) -> Result<Vec<Detection>, BackendError> {
        (**self).detect_and_embed(tile)
    }
}

/// Value of `NAMEMO_BACKEND`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Synthetic,
    Adapter,
}

impl BackendKind {
    pub fn parse(s: &str) -> Result<Self, BackendError> {
        match s.trim() {
            "synthetic" => Ok(Self::Synthetic),
            "adapter" => Ok(Self::Adapter),
            other => Err(BackendError::UnknownBackend(other.to_string())),
        }
    }

    pub fn from_env() -> Result<Option<Self>, BackendError> {
        std::env::var("NAMEMO_BACKEND").ok().map(|v| Self::parse(&v)).transpose()
    }
}
