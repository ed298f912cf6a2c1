//! Tile acquisition: the classroom simulator and the hardware adapter seam.

mod hardware;
mod sim;

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boxes::BBox;
use crate::geometry::TilePose;

pub use hardware::{HardwareSource, PanTiltCamera, RgbFrame};
pub use sim::{
    generate_scene, generate_scene_with, IdentityBank, SceneOptions, SeatGrid, SimScene,
    SimStudent, Simulator, FACE_HEIGHT_M, FACE_WIDTH_M,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaptureError {
    #[error("pose (pan {pan}, tilt {tilt}) outside mount range")]
    PoseOutOfRange { pan: f64, tilt: f64 },
    #[error("camera did not deliver a frame within {0:?}")]
    CaptureTimeout(Duration),
    #[error("hardware error: {0}")]
    Hardware(String),
    #[error("{requested} students exceed seat capacity {capacity}")]
    SeatingOverflow { requested: usize, capacity: usize },
    #[error("pixel buffer has {got} bytes, expected {expected}")]
    BadBuffer { got: usize, expected: usize },
    #[error("unknown capture source {0:?} (expected sim or hw)")]
    UnknownSource(String),
}

/// Counts tile pixel buffers that are still alive.
///
/// Every [`TileImage`] produced by a source holds a lease on that source's
/// registry; dropping the image releases it.
#[derive(Debug, Default)]
pub struct TileRegistry {
    live: AtomicUsize,
    created: AtomicUsize,
}

impl TileRegistry {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    pub fn live(&self) -> usize {
        self.live.load(Ordering::SeqCst)
    }

    pub fn created(&self) -> usize {
        self.created.load(Ordering::SeqCst)
    }

    fn lease(self: &Arc<Self>) -> Arc<Self> {
        self.live.fetch_add(1, Ordering::SeqCst);
        self.created.fetch_add(1, Ordering::SeqCst);
        Arc::clone(self)
    }
}

struct TileBuffer {
    data: Vec<u8>,
    lease: Option<Arc<TileRegistry>>,
}

impl Drop for TileBuffer {
    fn drop(&mut self) {
        if let Some(reg) = &self.lease {
            reg.live.fetch_sub(1, Ordering::SeqCst);
        }
    }
}

/// Ground truth for one student visible in a simulated tile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthEntry {
    /// Also the key of the student's true embedding in the [`IdentityBank`].
    pub student_id: String,
    /// Face box clipped to the image.
    pub bbox: BBox,
    /// Projected face center (always inside the image).
    pub face_center: (f64, f64),
    /// Unclipped projected face size in pixels.
    pub face_size: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub scene_seed: u64,
    pub cycle: u64,
    pub entries: Vec<TruthEntry>,
}

/// One still frame at a tile pose: row-major 8-bit RGB.
pub struct TileImage {
    pub tile_id: u32,
    pub pose: TilePose,
    pub width: u32,
    pub height: u32,
    /// Monotonic time since the source started.
    pub captured_at: Duration,
    pub sim_truth: Option<SimTruth>,
    buffer: TileBuffer,
}

impl TileImage {
    pub fn new(
        pose: TilePose,
        width: u32,
        height: u32,
        pixels: Vec<u8>,
        captured_at: Duration,
        sim_truth: Option<SimTruth>,
        registry: Option<&Arc<TileRegistry>>,
    ) -> Result<Self, CaptureError> {
        let expected = 3 * width as usize * height as usize;
        if pixels.len() != expected {
            return Err(CaptureError::BadBuffer {
                got: pixels.len(),
                expected,
            });
        }
        Ok(Self {
            tile_id: pose.tile_id,
            pose,
            width,
            height,
            captured_at,
            sim_truth,
            buffer: TileBuffer {
                data: pixels,
                lease: registry.map(TileRegistry::lease),
            },
        })
    }

    pub fn pixels(&self) -> &[u8] {
        &self.buffer.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        let d = &self.buffer.data;
        [d[i], d[i + 1], d[i + 2]]
    }
}

impl Clone for TileImage {
    fn clone(&self) -> Self {
        Self {
            tile_id: self.tile_id,
            pose: self.pose,
            width: self.width,
            height: self.height,
            captured_at: self.captured_at,
            sim_truth: self.sim_truth.clone(),
            buffer: TileBuffer {
                data: self.buffer.data.clone(),
                lease: self.buffer.lease.as_ref().map(TileRegistry::lease),
            },
        }
    }
}

impl fmt::Debug for TileImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TileImage")
            .field("tile_id", &self.tile_id)
            .field("pose", &self.pose)
            .field("size", &(self.width, self.height))
            .field("captured_at", &self.captured_at)
            .field("sim_truth", &self.sim_truth.as_ref().map(|t| t.entries.len()))
            .finish()
    }
}

/// Anything that can aim and shoot one tile at a time.
pub trait CaptureSource: Send {
    /// Called once before the tiles of a refresh cycle are captured.
    fn begin_cycle(&mut self, _cycle: u64) {}

    fn capture_tile(&mut self, pose: &TilePose) -> Result<TileImage, CaptureError>;

    /// Registry tracking this source's live tile buffers.
    fn registry(&self) -> Arc<TileRegistry>;
}

impl<S: CaptureSource + ?Sized> CaptureSource for Box<S> {
    fn begin_cycle(&mut self, cycle: u64) {
        (**self).begin_cycle(cycle)
    }

    fn capture_tile(&mut self, pose: &TilePose) -> Result<TileImage, CaptureError> {
        (**self).capture_tile(pose)
    }

    fn registry(&self) -> Arc<TileRegistry> {
        (**self).registry()
    }
}

/// Value of `NAMEMO_CAPTURE`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    Simulator,
    Hardware,
}

impl SourceKind {
    pub fn parse(s: &str) -> Result<Self, CaptureError> {
        match s.trim() {
            "sim" => Ok(Self::Simulator),
            "hw" => Ok(Self::Hardware),
            other => Err(CaptureError::UnknownSource(other.to_string())),
        }
    }

    /// Reads `NAMEMO_CAPTURE`, defaulting to the simulator.
    pub fn from_env() -> Result<Self, CaptureError> {
        match std::env::var("NAMEMO_CAPTURE") {
            Ok(v) => Self::parse(&v),
            Err(_) => Ok(Self::Simulator),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pose() -> TilePose {
        TilePose { tile_id: 4, pan_deg: 0.0, tilt_deg: 0.0 }
    }

    #[test]
    fn registry_tracks_clones_and_drops() {
        let reg = TileRegistry::new();
        let t = TileImage::new(pose(), 2, 2, vec![0; 12], Duration::ZERO, None, Some(&reg)).unwrap();
        let c = t.clone();
        assert_eq!(reg.live(), 2);
        drop(t);
        assert_eq!(reg.live(), 1);
        drop(c);
        assert_eq!(reg.live(), 0);
        assert_eq!(reg.created(), 2);
    }

    #[test]
    fn buffer_length_is_checked() {
        let err = TileImage::new(pose(), 2, 2, vec![0; 11], Duration::ZERO, None, None).unwrap_err();
        assert_eq!(err, CaptureError::BadBuffer { got: 11, expected: 12 });
    }

    #[test]
    fn source_kind_parses() {
        assert_eq!(SourceKind::parse("sim").unwrap(), SourceKind::Simulator);
        assert_eq!(SourceKind::parse("hw").unwrap(), SourceKind::Hardware);
        assert!(SourceKind::parse("usb").is_err());
    }
}
