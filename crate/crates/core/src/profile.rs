//! Named bundles of room, optics, mount and session settings.

use serde::{Deserialize, Serialize};

use crate::geometry::{
    estimate_cycle_time, plan_scan, CameraIntrinsics, CameraMount, GeometryError, RoomModel, ScanPlan,
};
use crate::session::SessionConfig;

pub const FEASIBILITY_TEST: &str = "feasibility-test";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunProfile {
    pub name: String,
    pub room: RoomModel,
    pub intrinsics: CameraIntrinsics,
    pub mount: CameraMount,
    /// Tile overlap used by the scan planner.
    pub overlap: f64,
    /// Detection and matching time budgeted per tile, seconds.
    pub per_tile_process_s: f64,
    pub session: SessionConfig,
}

impl RunProfile {
    /// 20 x 15 m hall, 35 mm lens on a 6.4 x 4.8 mm sensor, camera in the
    /// front-left corner at 3 m. Plans to a 9 x 7 grid.
    pub fn feasibility_test() -> Self {
        Self {
            name: FEASIBILITY_TEST.to_string(),
            room: RoomModel::new(20.0, 15.0, 2.0),
            intrinsics: CameraIntrinsics {
                focal_length_mm: 35.0,
                sensor_width_mm: 6.4,
                sensor_height_mm: 4.8,
                image_width_px: 640,
                image_height_px: 480,
            },
            mount: CameraMount {
                position_m: [0.0, 0.5, 3.0],
                pan_range_deg: [-170.0, 170.0],
                tilt_range_deg: [-90.0, 30.0],
                settle_time_s: 0.5,
                slew_rate_deg_s: 120.0,
            },
            overlap: 0.05,
            per_tile_process_s: 0.8,
            session: SessionConfig::default(),
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        (name == FEASIBILITY_TEST).then(Self::feasibility_test)
    }

    pub fn plan(&self) -> Result<ScanPlan, GeometryError> {
        plan_scan(&self.room, &self.intrinsics, &self.mount, self.overlap)
    }

    pub fn estimated_cycle_s(&self, plan: &ScanPlan) -> f64 {
        estimate_cycle_time(plan, &self.mount, self.per_tile_process_s)
    }
}
