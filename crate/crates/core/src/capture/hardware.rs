//! Open-loop hardware capture: command a pose, wait for the head to settle,
//! read one frame. No camera protocol is bundled; drivers implement
//! [`PanTiltCamera`].

use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use super::{CaptureError, CaptureSource, TileImage, TileRegistry};
use crate::geometry::{CameraMount, TilePose};

pub struct RgbFrame {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

pub trait PanTiltCamera: Send {
    fn command_pose(&mut self, pan_deg: f64, tilt_deg: f64) -> Result<(), CaptureError>;

    /// Blocks for at most `timeout`; drivers return [`CaptureError::CaptureTimeout`] past it.
    fn read_frame(&mut self, timeout: Duration) -> Result<RgbFrame, CaptureError>;
}

pub struct HardwareSource<C> {
    camera: C,
    mount: CameraMount,
    frame_timeout: Duration,
    registry: Arc<TileRegistry>,
    started: Instant,
}

impl<C: PanTiltCamera> HardwareSource<C> {
    pub fn new(camera: C, mount: CameraMount, frame_timeout: Duration) -> Self {
        Self {
            camera,
            mount,
            frame_timeout,
            registry: TileRegistry::new(),
            started: Instant::now(),
        }
    }
}

impl<C: PanTiltCamera> CaptureSource for HardwareSource<C> {
    fn capture_tile(&mut self, pose: &TilePose) -> Result<TileImage, CaptureError> {
        if !self.mount.in_range(pose) {
            return Err(CaptureError::PoseOutOfRange {
                pan: pose.pan_deg,
                tilt: pose.tilt_deg,
            });
        }
        self.camera.command_pose(pose.pan_deg, pose.tilt_deg)?;
        if self.mount.settle_time_s > 0.0 {
            thread::sleep(Duration::from_secs_f64(self.mount.settle_time_s));
        }
        let frame = self.camera.read_frame(self.frame_timeout)?;
        TileImage::new(
            *pose,
            frame.width,
            frame.height,
            frame.pixels,
            self.started.elapsed(),
            None,
            Some(&self.registry),
        )
    }

    fn registry(&self) -> Arc<TileRegistry> {
        Arc::clone(&self.registry)
    }
}
