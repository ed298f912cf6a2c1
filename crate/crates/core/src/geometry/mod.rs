//! Room geometry, lens optics and pan-tilt scan planning.

pub mod optics;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use optics::TileCamera;

/// Coverage tests shrink every tile frustum by this fraction.
pub const COVERAGE_MARGIN: f64 = 0.01;
/// Seating-plane sampling pitch for coverage estimation, meters.
pub const COVERAGE_RESOLUTION_M: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid room: {0}")]
    InvalidRoom(String),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid camera mount: {0}")]
    InvalidMount(String),
    #[error("overlap must lie in [0, 0.5), got {0}")]
    InvalidOverlap(f64),
    #[error("seating area is empty (front offset {offset} m >= depth {depth} m)")]
    SeatingAreaEmpty { offset: f64, depth: f64 },
    #[error("coverage infeasible: {0}")]
    CoverageInfeasible(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomModel {
    pub width_m: f64,
    pub depth_m: f64,
    pub seating_front_offset_m: f64,
    #[serde(default = "default_seat_height")]
    pub seat_plane_height_m: f64,
}

fn default_seat_height() -> f64 {
    1.2
}

impl RoomModel {
    pub fn new(width_m: f64, depth_m: f64, seating_front_offset_m: f64) -> Self {
        Self {
            width_m,
            depth_m,
            seating_front_offset_m,
            seat_plane_height_m: default_seat_height(),
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let finite = [
            self.width_m,
            self.depth_m,
            self.seating_front_offset_m,
            self.seat_plane_height_m,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(GeometryError::InvalidRoom("non-finite dimension".into()));
        }
        if self.width_m <= 0.0 || self.depth_m <= 0.0 {
            return Err(GeometryError::InvalidRoom(format!(
                "dimensions must be positive, got {} x {}",
                self.width_m, self.depth_m
            )));
        }
        if self.seating_front_offset_m < 0.0 {
            return Err(GeometryError::InvalidRoom(
                "seating front offset must be >= 0".into(),
            ));
        }
        self.check_seating()
    }

    fn check_seating(&self) -> Result<(), GeometryError> {
        if self.seating_front_offset_m >= self.depth_m {
            return Err(GeometryError::SeatingAreaEmpty {
                offset: self.seating_front_offset_m,
                depth: self.depth_m,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub focal_length_mm: f64,
    pub sensor_width_mm: f64,
    pub sensor_height_mm: f64,
    pub image_width_px: u32,
    pub image_height_px: u32,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let mm = [
            self.focal_length_mm,
            self.sensor_width_mm,
            self.sensor_height_mm,
        ];
        if mm.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(GeometryError::InvalidIntrinsics(
                "focal length and sensor size must be positive".into(),
            ));
        }
        if self.image_width_px == 0 || self.image_height_px == 0 {
            return Err(GeometryError::InvalidIntrinsics(
                "image size must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraMount {
    pub position_m: [f64; 3],
    pub pan_range_deg: [f64; 2],
    pub tilt_range_deg: [f64; 2],
    pub settle_time_s: f64,
    /// Angular speed of the pan-tilt head; both axes move simultaneously.
    #[serde(default = "default_slew_rate")]
    pub slew_rate_deg_s: f64,
}

fn default_slew_rate() -> f64 {
    120.0
}

impl CameraMount {
    pub fn validate(&self, room: &RoomModel) -> Result<(), GeometryError> {
        let [x, y, z] = self.position_m;
        if self.pan_range_deg[0] >= self.pan_range_deg[1]
            || self.tilt_range_deg[0] >= self.tilt_range_deg[1]
        {
            return Err(GeometryError::InvalidMount(
                "pan/tilt ranges must satisfy min < max".into(),
            ));
        }
        if self.pan_range_deg[0] < -180.0 || self.pan_range_deg[1] > 180.0 {
            return Err(GeometryError::InvalidMount(
                "pan range must lie within [-180, 180]".into(),
            ));
        }
        if self.tilt_range_deg[0] < -90.0 || self.tilt_range_deg[1] > 90.0 {
            return Err(GeometryError::InvalidMount(
                "tilt range must lie within [-90, 90]".into(),
            ));
        }
        if !(0.0..=room.width_m).contains(&x)
            || !(0.0..=room.depth_m).contains(&y)
            || z < 0.0
            || !z.is_finite()
        {
            return Err(GeometryError::InvalidMount(format!(
                "position ({x}, {y}, {z}) outside the room"
            )));
        }
        if self.settle_time_s < 0.0 || !self.settle_time_s.is_finite() {
            return Err(GeometryError::InvalidMount("settle time must be >= 0".into()));
        }
        if self.slew_rate_deg_s <= 0.0 || !self.slew_rate_deg_s.is_finite() {
            return Err(GeometryError::InvalidMount("slew rate must be > 0".into()));
        }
        Ok(())
    }

    pub fn in_range(&self, pose: &TilePose) -> bool {
        let eps = 1e-9;
        pose.pan_deg >= self.pan_range_deg[0] - eps
            && pose.pan_deg <= self.pan_range_deg[1] + eps
            && pose.tilt_deg >= self.tilt_range_deg[0] - eps
            && pose.tilt_deg <= self.tilt_range_deg[1] + eps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TilePose {
    pub tile_id: u32,
    pub pan_deg: f64,
    pub tilt_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPlan {
    pub tiles: Vec<TilePose>,
    pub overlap_fraction: f64,
    pub covered_fraction: f64,
    pub columns: usize,
    pub rows: usize,
}

impl ScanPlan {
    pub fn tile(&self, tile_id: u32) -> Option<&TilePose> {
        self.tiles.iter().find(|t| t.tile_id == tile_id)
    }

    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }
}

/// Closed angular intervals, degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularInterval {
    pub pan: [f64; 2],
    pub tilt: [f64; 2],
}

impl AngularInterval {
    pub fn pan_extent(&self) -> f64 {
        self.pan[1] - self.pan[0]
    }

    pub fn tilt_extent(&self) -> f64 {
        self.tilt[1] - self.tilt[0]
    }
}

/// Horizontal and vertical field of view in degrees.
pub fn compute_fov(intr: &CameraIntrinsics) -> (f64, f64) {
    let fov = |sensor: f64| 2.0 * (sensor / (2.0 * intr.focal_length_mm)).atan().to_degrees();
    (fov(intr.sensor_width_mm), fov(intr.sensor_height_mm))
}

/// Pan and tilt intervals subtended by the seating area (at seat-plane
/// height) as seen from the mount.
///
/// When the camera stands above the seating footprint the pan interval is
/// the full circle.
pub fn required_angular_interval(
    room: &RoomModel,
    mount: &CameraMount,
) -> Result<AngularInterval, GeometryError> {
    room.check_seating()?;
    let [cx, cy, cz] = mount.position_m;
    let (x0, x1) = (0.0, room.width_m.max(0.0));
    let (y0, y1) = (room.seating_front_offset_m, room.depth_m);
    let corners = [(x0, y0), (x1, y0), (x0, y1), (x1, y1)];

    let pan = if cy < y0 {
        // Seating area lies entirely in front: its angular span is reached at corners.
        let pans = corners.map(|(x, y)| (x - cx).atan2(y - cy).to_degrees());
        [
            pans.iter().copied().fold(f64::INFINITY, f64::min),
            pans.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ]
    } else {
        [-180.0, 180.0]
    };

    let dz = room.seat_plane_height_m - cz;
    let nearest = (cx.clamp(x0, x1) - cx).hypot(cy.clamp(y0, y1) - cy);
    let farthest = corners
        .iter()
        .map(|&(x, y)| (x - cx).hypot(y - cy))
        .fold(0.0, f64::max);
    let t_near = dz.atan2(nearest).to_degrees();
    let t_far = dz.atan2(farthest).to_degrees();
    Ok(AngularInterval {
        pan,
        tilt: [t_near.min(t_far), t_near.max(t_far)],
    })
}

/// Width of the pan and tilt intervals of [`required_angular_interval`].
pub fn required_angular_extent(
    room: &RoomModel,
    mount: &CameraMount,
) -> Result<(f64, f64), GeometryError> {
    let iv = required_angular_interval(room, mount)?;
    Ok((iv.pan_extent(), iv.tilt_extent()))
}

fn grid_count(extent: f64, step: f64) -> usize {
    // 1e-9 guards against ceil(8.000000000001) when extent is an exact multiple.
    ((extent / step) - 1e-9).ceil().max(1.0) as usize
}

/// Grid centers along one axis, centered on `interval`.
fn grid_centers(interval: [f64; 2], count: usize, step: f64) -> Vec<f64> {
    let mid = 0.5 * (interval[0] + interval[1]);
    (0..count)
        .map(|i| mid + (i as f64 - (count as f64 - 1.0) / 2.0) * step)
        .collect()
}

/// Serpentine pan-tilt grid covering the seating area.
///
/// Rows run from the highest tilt (back of the room) downwards; even rows
/// sweep pan ascending, odd rows descending.
pub fn plan_scan(
    room: &RoomModel,
    intr: &CameraIntrinsics,
    mount: &CameraMount,
    overlap: f64,
) -> Result<ScanPlan, GeometryError> {
    room.validate()?;
    intr.validate()?;
    mount.validate(room)?;
    if !(0.0..0.5).contains(&overlap) {
        return Err(GeometryError::InvalidOverlap(overlap));
    }
    let (hfov, vfov) = compute_fov(intr);
    let iv = required_angular_interval(room, mount)?;
    let pan_range = mount.pan_range_deg[1] - mount.pan_range_deg[0];
    let tilt_range = mount.tilt_range_deg[1] - mount.tilt_range_deg[0];
    if iv.pan_extent() > pan_range || iv.tilt_extent() > tilt_range {
        return Err(GeometryError::CoverageInfeasible(format!(
            "required extent {:.2} x {:.2} deg exceeds mount range {:.2} x {:.2} deg",
            iv.pan_extent(),
            iv.tilt_extent(),
            pan_range,
            tilt_range
        )));
    }

    let pan_step = hfov * (1.0 - overlap);
    let tilt_step = vfov * (1.0 - overlap);
    let columns = grid_count(iv.pan_extent(), pan_step);
    let rows = grid_count(iv.tilt_extent(), tilt_step);
    let pans = grid_centers(iv.pan, columns, pan_step);
    let mut tilts = grid_centers(iv.tilt, rows, tilt_step);
    tilts.reverse();

    let mut tiles = Vec::with_capacity(columns * rows);
    for (r, &tilt) in tilts.iter().enumerate() {
        let row: Box<dyn Iterator<Item = &f64>> = if r % 2 == 0 {
            Box::new(pans.iter())
        } else {
            Box::new(pans.iter().rev())
        };
        for &pan in row {
            tiles.push(TilePose {
                tile_id: tiles.len() as u32,
                pan_deg: pan,
                tilt_deg: tilt,
            });
        }
    }
    if let Some(bad) = tiles.iter().find(|t| !mount.in_range(t)) {
        return Err(GeometryError::CoverageInfeasible(format!(
            "tile pose ({:.2}, {:.2}) outside mount range",
            bad.pan_deg, bad.tilt_deg
        )));
    }

    let covered_fraction = coverage_fraction(room, intr, mount, &tiles, COVERAGE_RESOLUTION_M);
    Ok(ScanPlan {
        tiles,
        overlap_fraction: overlap,
        covered_fraction,
        columns,
        rows,
    })
}

/// Seating-plane sample points (cell centers of a `resolution` grid).
pub fn seating_samples(room: &RoomModel, resolution: f64) -> impl Iterator<Item = [f64; 3]> + '_ {
    let nx = (room.width_m / resolution).round().max(1.0) as usize;
    let depth = room.depth_m - room.seating_front_offset_m;
    let ny = (depth / resolution).round().max(1.0) as usize;
    let (dx, dy) = (room.width_m / nx as f64, depth / ny as f64);
    (0..ny).flat_map(move |j| {
        (0..nx).map(move |i| {
            [
                (i as f64 + 0.5) * dx,
                room.seating_front_offset_m + (j as f64 + 0.5) * dy,
                room.seat_plane_height_m,
            ]
        })
    })
}

/// Direction from the mount to a room point.
pub fn ray_to(mount: &CameraMount, point: [f64; 3]) -> [f64; 3] {
    let [cx, cy, cz] = mount.position_m;
    [point[0] - cx, point[1] - cy, point[2] - cz]
}

/// Fraction of seating-plane samples inside at least one (shrunk) tile frustum.
pub fn coverage_fraction(
    room: &RoomModel,
    intr: &CameraIntrinsics,
    mount: &CameraMount,
    tiles: &[TilePose],
    resolution: f64,
) -> f64 {
    let cams: Vec<TileCamera> = tiles.iter().map(|t| TileCamera::new(t, intr)).collect();
    let (mut total, mut covered) = (0usize, 0usize);
    for p in seating_samples(room, resolution) {
        let dir = ray_to(mount, p);
        total += 1;
        if cams.iter().any(|c| c.contains(dir, COVERAGE_MARGIN)) {
            covered += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        covered as f64 / total as f64
    }
}

/// Head travel time between consecutive tiles, seconds.
pub fn travel_time(tiles: &[TilePose], mount: &CameraMount) -> f64 {
    tiles
        .windows(2)
        .map(|w| {
            let dp = (w[1].pan_deg - w[0].pan_deg).abs();
            let dt = (w[1].tilt_deg - w[0].tilt_deg).abs();
            dp.max(dt) / mount.slew_rate_deg_s
        })
        .sum()
}

/// Total pan-axis travel in degrees along the tile order.
pub fn pan_travel(tiles: &[TilePose]) -> f64 {
    tiles
        .windows(2)
        .map(|w| (w[1].pan_deg - w[0].pan_deg).abs())
        .sum()
}

/// Same tiles ordered row by row with every row ascending in pan.
pub fn row_major_order(plan: &ScanPlan) -> Vec<TilePose> {
    let mut tiles = plan.tiles.clone();
    tiles.sort_by(|a, b| {
        b.tilt_deg
            .total_cmp(&a.tilt_deg)
            .then(a.pan_deg.total_cmp(&b.pan_deg))
    });
    tiles
}

/// Seconds for one full scan: per-tile settle and processing plus head travel.
pub fn estimate_cycle_time(plan: &ScanPlan, mount: &CameraMount, per_tile_process_s: f64) -> f64 {
    plan.tiles.len() as f64 * (mount.settle_time_s + per_tile_process_s)
        + travel_time(&plan.tiles, mount)
}
