//! Pinhole ray math shared by the planner, the simulator and the stitcher.
//!
//! Room coordinates: origin at the front-left floor corner, `x` across the
//! room width, `y` into the room away from the camera wall, `z` up.
//! Pan is azimuth measured from `+y` towards `+x`; tilt is elevation, positive up.
//! Image coordinates are continuous: the image spans `[0, W] x [0, H]`, `y`
//! grows downward and the principal point sits at the image center.

use super::{CameraIntrinsics, TilePose};

/// Unit direction for an (azimuth, elevation) pair in degrees.
pub fn direction(az_deg: f64, el_deg: f64) -> [f64; 3] {
    let (az, el) = (az_deg.to_radians(), el_deg.to_radians());
    [az.sin() * el.cos(), az.cos() * el.cos(), el.sin()]
}

/// (azimuth, elevation) in degrees of a direction vector (need not be unit).
pub fn angles(dir: [f64; 3]) -> (f64, f64) {
    let az = dir[0].atan2(dir[1]).to_degrees();
    let el = dir[2].atan2(dir[0].hypot(dir[1])).to_degrees();
    (az, el)
}

/// Orthonormal camera frame for a pose: forward, right, up.
#[derive(Debug, Clone, Copy)]
pub struct CameraFrame {
    pub forward: [f64; 3],
    pub right: [f64; 3],
    pub up: [f64; 3],
}

impl CameraFrame {
    pub fn new(pan_deg: f64, tilt_deg: f64) -> Self {
        let (p, t) = (pan_deg.to_radians(), tilt_deg.to_radians());
        let forward = [p.sin() * t.cos(), p.cos() * t.cos(), t.sin()];
        let right = [p.cos(), -p.sin(), 0.0];
        // up = right x forward
        let up = [
            right[1] * forward[2] - right[2] * forward[1],
            right[2] * forward[0] - right[0] * forward[2],
            right[0] * forward[1] - right[1] * forward[0],
        ];
        Self { forward, right, up }
    }

    pub fn for_pose(pose: &TilePose) -> Self {
        Self::new(pose.pan_deg, pose.tilt_deg)
    }

    /// Normalized image-plane coordinates `(u, v)` (u right, v up) of a
    /// world direction, or `None` when the direction points behind the camera.
    pub fn project(&self, dir: [f64; 3]) -> Option<(f64, f64)> {
        let zc = dot(dir, self.forward);
        if zc <= 1e-12 {
            return None;
        }
        Some((dot(dir, self.right) / zc, dot(dir, self.up) / zc))
    }

    pub fn unproject(&self, u: f64, v: f64) -> [f64; 3] {
        [
            self.forward[0] + u * self.right[0] + v * self.up[0],
            self.forward[1] + u * self.right[1] + v * self.up[1],
            self.forward[2] + u * self.right[2] + v * self.up[2],
        ]
    }
}

pub fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Pinhole camera: intrinsics resolved into pixel focal lengths.
#[derive(Debug, Clone, Copy)]
pub struct Pinhole {
    pub fx: f64,
    pub fy: f64,
    pub width: f64,
    pub height: f64,
}

impl Pinhole {
    pub fn new(intr: &CameraIntrinsics) -> Self {
        Self {
            fx: intr.focal_length_mm * intr.image_width_px as f64 / intr.sensor_width_mm,
            fy: intr.focal_length_mm * intr.image_height_px as f64 / intr.sensor_height_mm,
            width: intr.image_width_px as f64,
            height: intr.image_height_px as f64,
        }
    }

    pub fn pixel_to_uv(&self, px: f64, py: f64) -> (f64, f64) {
        ((px - self.width / 2.0) / self.fx, (self.height / 2.0 - py) / self.fy)
    }

    pub fn uv_to_pixel(&self, u: f64, v: f64) -> (f64, f64) {
        (self.width / 2.0 + u * self.fx, self.height / 2.0 - v * self.fy)
    }

    /// Half-extent of the image plane in normalized coordinates.
    pub fn half_extent(&self) -> (f64, f64) {
        (self.width / 2.0 / self.fx, self.height / 2.0 / self.fy)
    }
}

/// A posed tile camera: ray/pixel conversions for one tile.
#[derive(Debug, Clone, Copy)]
pub struct TileCamera {
    pub frame: CameraFrame,
    pub pinhole: Pinhole,
}

impl TileCamera {
    pub fn new(pose: &TilePose, intr: &CameraIntrinsics) -> Self {
        Self {
            frame: CameraFrame::for_pose(pose),
            pinhole: Pinhole::new(intr),
        }
    }

    pub fn pixel_to_dir(&self, px: f64, py: f64) -> [f64; 3] {
        let (u, v) = self.pinhole.pixel_to_uv(px, py);
        self.frame.unproject(u, v)
    }

    /// Pixel coordinates of a direction; may lie outside the image.
    pub fn dir_to_pixel(&self, dir: [f64; 3]) -> Option<(f64, f64)> {
        self.frame
            .project(dir)
            .map(|(u, v)| self.pinhole.uv_to_pixel(u, v))
    }

    /// Largest of `|u| / half_u` and `|v| / half_v`: below 1 means in frame,
    /// 0 is the optical axis.
    pub fn centrality(&self, dir: [f64; 3]) -> Option<f64> {
        let (u, v) = self.frame.project(dir)?;
        let (hu, hv) = self.pinhole.half_extent();
        Some((u.abs() / hu).max(v.abs() / hv))
    }

    /// In-frustum test against the frustum shrunk by `margin` (0.01 = 1%).
    pub fn contains(&self, dir: [f64; 3], margin: f64) -> bool {
        matches!(self.centrality(dir), Some(c) if c < 1.0 - margin)
    }
}
