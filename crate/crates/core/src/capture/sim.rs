//! Deterministic classroom simulator.
//!
//! Students sit on a regular seat grid over the seating area. Each tile is
//! rendered as a flat background with one filled rectangle per visible face,
//! and carries the ground truth (who is visible and where) alongside the
//! pixels so the synthetic backend and the accuracy harness can use it.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CaptureError, CaptureSource, SimTruth, TileImage, TileRegistry, TruthEntry};
use crate::boxes::BBox;
use crate::embedding::Embedding;
use crate::geometry::optics::TileCamera;
use crate::geometry::{ray_to, CameraIntrinsics, CameraMount, RoomModel, TilePose};
use crate::seed;

pub const FACE_WIDTH_M: f64 = 0.16;
pub const FACE_HEIGHT_M: f64 = 0.22;
const BACKGROUND: [u8; 3] = [46, 52, 64];
/// Largest cosine allowed between two simulated identities (60 degrees).
const MAX_IDENTITY_COSINE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStudent {
    pub student_id: String,
    /// Seat position (x, y) in meters.
    pub seat: [f64; 2],
    pub present: bool,
    pub face_yaw_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScene {
    pub students: Vec<SimStudent>,
    pub seed: u64,
}

impl SimScene {
    pub fn student(&self, id: &str) -> Option<&SimStudent> {
        self.students.iter().find(|s| s.student_id == id)
    }

    pub fn present_ids(&self) -> impl Iterator<Item = &str> {
        self.students
            .iter()
            .filter(|s| s.present)
            .map(|s| s.student_id.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneOptions {
    /// Probability that a student is absent.
    pub absent_rate: f64,
    /// Face yaw is drawn uniformly from `[-j, j]`.
    pub yaw_jitter_deg: f64,
    pub seat_pitch_m: f64,
    pub row_pitch_m: f64,
}

impl Default for SceneOptions {
    fn default() -> Self {
        Self {
            absent_rate: 0.0,
            yaw_jitter_deg: 20.0,
            seat_pitch_m: 1.0,
            row_pitch_m: 1.0,
        }
    }
}

/// Regular seat grid filling the seating area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeatGrid {
    pub columns: usize,
    pub rows: usize,
    cell_w: f64,
    cell_d: f64,
    front: f64,
}

impl SeatGrid {
    pub fn new(room: &RoomModel, opts: &SceneOptions) -> Self {
        let depth = (room.depth_m - room.seating_front_offset_m).max(0.0);
        let columns = (room.width_m / opts.seat_pitch_m).floor().max(0.0) as usize;
        let rows = (depth / opts.row_pitch_m).floor().max(0.0) as usize;
        Self {
            columns,
            rows,
            cell_w: if columns > 0 { room.width_m / columns as f64 } else { 0.0 },
            cell_d: if rows > 0 { depth / rows as f64 } else { 0.0 },
            front: room.seating_front_offset_m,
        }
    }

    pub fn capacity(&self) -> usize {
        self.columns * self.rows
    }

    /// Seat center for a row-major seat index.
    pub fn seat(&self, index: usize) -> [f64; 2] {
        let (r, c) = (index / self.columns, index % self.columns);
        [
            (c as f64 + 0.5) * self.cell_w,
            self.front + (r as f64 + 0.5) * self.cell_d,
        ]
    }
}

pub fn student_id(index: usize) -> String {
    format!("S{:03}", index + 1)
}

pub fn generate_scene(n_students: usize, room: &RoomModel, seed: u64) -> Result<SimScene, CaptureError> {
    generate_scene_with(n_students, room, seed, &SceneOptions::default())
}

/// Spreads `n_students` evenly over the seat grid. Seat assignment depends
/// only on the room and count; presence and yaw jitter depend on `seed`.
pub fn generate_scene_with(
    n_students: usize,
    room: &RoomModel,
    seed: u64,
    opts: &SceneOptions,
) -> Result<SimScene, CaptureError> {
    let grid = SeatGrid::new(room, opts);
    let capacity = grid.capacity();
    if n_students > capacity {
        return Err(CaptureError::SeatingOverflow {
            requested: n_students,
            capacity,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(&[seed, seed::hash_str("scene")]));
    let students = (0..n_students)
        .map(|i| {
            let seat_index = i * capacity / n_students;
            let present = !rng.gen_bool(opts.absent_rate.clamp(0.0, 1.0));
            let yaw = if opts.yaw_jitter_deg > 0.0 {
                rng.gen_range(-opts.yaw_jitter_deg..=opts.yaw_jitter_deg)
            } else {
                0.0
            };
            SimStudent {
                student_id: student_id(i),
                seat: grid.seat(seat_index),
                present,
                face_yaw_deg: yaw,
            }
        })
        .collect();
    Ok(SimScene { students, seed })
}

/// True identity embeddings of simulated students.
#[derive(Debug, Clone)]
pub struct IdentityBank {
    embeddings: BTreeMap<String, Embedding>,
}

impl IdentityBank {
    /// Draws one random identity per id; every pair is more than 60 degrees apart.
    pub fn generate<'a>(ids: impl IntoIterator<Item = &'a str>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(&[seed, seed::hash_str("identities")]));
        let mut drawn: Vec<Embedding> = Vec::new();
        let mut embeddings = BTreeMap::new();
        for id in ids {
            let e = loop {
                let cand = Embedding::random(&mut rng);
                if drawn.iter().all(|d| d.dot(&cand) < MAX_IDENTITY_COSINE) {
                    break cand;
                }
            };
            drawn.push(e.clone());
            embeddings.insert(id.to_string(), e);
        }
        Self { embeddings }
    }

    pub fn for_scene(scene: &SimScene) -> Self {
        Self::generate(scene.students.iter().map(|s| s.student_id.as_str()), scene.seed)
    }

    pub fn get(&self, id: &str) -> Option<&Embedding> {
        self.embeddings.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Embedding)> {
        self.embeddings.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }
}

/// Simulated pan-tilt camera looking at a [`SimScene`].
pub struct Simulator {
    room: RoomModel,
    intrinsics: CameraIntrinsics,
    mount: CameraMount,
    scene: SimScene,
    registry: Arc<TileRegistry>,
    cycle: u64,
    started: Instant,
    render_pixels: bool,
}

impl Simulator {
    pub fn new(room: RoomModel, intrinsics: CameraIntrinsics, mount: CameraMount, scene: SimScene) -> Self {
        Self {
            room,
            intrinsics,
            mount,
            scene,
            registry: TileRegistry::new(),
            cycle: 0,
            started: Instant::now(),
            render_pixels: true,
        }
    }

    /// Skip face rectangles and leave the background only. Ground truth is unaffected.
    pub fn without_face_pixels(mut self) -> Self {
        self.render_pixels = false;
        self
    }

    pub fn scene(&self) -> &SimScene {
        &self.scene
    }

    pub fn scene_mut(&mut self) -> &mut SimScene {
        &mut self.scene
    }

    /// Present students whose projected face center falls inside the tile.
    pub fn visible_students(&self, pose: &TilePose) -> Vec<TruthEntry> {
        self.faces_in_view(pose)
            .into_iter()
            .filter(|(_, centered)| *centered)
            .map(|(e, _)| e)
            .collect()
    }

    /// Every present face whose box overlaps the tile, flagged with whether
    /// its center is in frame.
    fn faces_in_view(&self, pose: &TilePose) -> Vec<(TruthEntry, bool)> {
        let cam = TileCamera::new(pose, &self.intrinsics);
        let (w, h) = (cam.pinhole.width, cam.pinhole.height);
        self.scene
            .students
            .iter()
            .filter(|s| s.present)
            .filter_map(|s| {
                let face = [s.seat[0], s.seat[1], self.room.seat_plane_height_m];
                let dir = ray_to(&self.mount, face);
                let depth = crate::geometry::optics::dot(dir, cam.frame.forward);
                let (px, py) = cam.dir_to_pixel(dir)?;
                let centered = (0.0..w).contains(&px) && (0.0..h).contains(&py);
                let fw = cam.pinhole.fx * FACE_WIDTH_M * s.face_yaw_deg.to_radians().cos() / depth;
                let fh = cam.pinhole.fy * FACE_HEIGHT_M / depth;
                let bbox = BBox::new(px - fw / 2.0, py - fh / 2.0, fw, fh).clip(w, h)?;
                let entry = TruthEntry {
                    student_id: s.student_id.clone(),
                    bbox,
                    face_center: (px, py),
                    face_size: (fw, fh),
                };
                Some((entry, centered))
            })
            .collect()
    }

    fn render(&self, faces: &[(TruthEntry, bool)]) -> Vec<u8> {
        let (w, h) = (
            self.intrinsics.image_width_px as usize,
            self.intrinsics.image_height_px as usize,
        );
        let mut pixels = BACKGROUND.repeat(w * h);
        if !self.render_pixels {
            return pixels;
        }
        for (e, _) in faces {
            let color = face_color(&e.student_id);
            let x0 = e.bbox.x.floor().max(0.0) as usize;
            let y0 = e.bbox.y.floor().max(0.0) as usize;
            let x1 = (e.bbox.right().ceil() as usize).min(w);
            let y1 = (e.bbox.bottom().ceil() as usize).min(h);
            for y in y0..y1 {
                let row = &mut pixels[3 * (y * w + x0)..3 * (y * w + x1)];
                for px in row.chunks_exact_mut(3) {
                    px.copy_from_slice(&color);
                }
            }
        }
        pixels
    }
}

fn face_color(id: &str) -> [u8; 3] {
    let h = seed::hash_str(id);
    [
        170 + (h % 70) as u8,
        120 + ((h >> 8) % 60) as u8,
        90 + ((h >> 16) % 50) as u8,
    ]
}

impl CaptureSource for Simulator {
    fn begin_cycle(&mut self, cycle: u64) {
        self.cycle = cycle;
    }

    fn capture_tile(&mut self, pose: &TilePose) -> Result<TileImage, CaptureError> {
        if !self.mount.in_range(pose) {
            return Err(CaptureError::PoseOutOfRange {
                pan: pose.pan_deg,
                tilt: pose.tilt_deg,
            });
        }
        let faces = self.faces_in_view(pose);
        let pixels = self.render(&faces);
        let entries = faces.into_iter().filter(|(_, c)| *c).map(|(e, _)| e).collect();
        TileImage::new(
            *pose,
            self.intrinsics.image_width_px,
            self.intrinsics.image_height_px,
            pixels,
            self.started.elapsed(),
            Some(SimTruth {
                scene_seed: self.scene.seed,
                cycle: self.cycle,
                entries,
            }),
            Some(&self.registry),
        )
    }

    fn registry(&self) -> Arc<TileRegistry> {
        Arc::clone(&self.registry)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::optics::angles;
    use crate::profile::RunProfile;

    fn sim_with(scene: SimScene) -> Simulator {
        let p = RunProfile::feasibility_test();
        Simulator::new(p.room, p.intrinsics, p.mount, scene)
    }

    #[test]
    fn pilot_sized_scene_fills_distinct_seats() {
        let room = RunProfile::feasibility_test().room;
        let scene = generate_scene(161, &room, 7).unwrap();
        assert_eq!(scene.students.len(), 161);
        let seats: std::collections::BTreeSet<_> = scene
            .students
            .iter()
            .map(|s| (s.seat[0].to_bits(), s.seat[1].to_bits()))
            .collect();
        assert_eq!(seats.len(), 161);
        for s in &scene.students {
            assert!(s.seat[0] > 0.0 && s.seat[0] < room.width_m);
            assert!(s.seat[1] > room.seating_front_offset_m && s.seat[1] < room.depth_m);
        }
    }

    #[test]
    fn empty_scene() {
        let room = RunProfile::feasibility_test().room;
        assert!(generate_scene(0, &room, 1).unwrap().students.is_empty());
    }

    #[test]
    fn overflow_is_reported() {
        let room = RunProfile::feasibility_test().room;
        let err = generate_scene(10_000, &room, 1).unwrap_err();
        assert!(matches!(err, CaptureError::SeatingOverflow { capacity: 260, .. }));
    }

    #[test]
    fn seeds_change_jitter_not_seats() {
        let room = RunProfile::feasibility_test().room;
        let opts = SceneOptions { absent_rate: 0.2, ..Default::default() };
        let a = generate_scene_with(100, &room, 1, &opts).unwrap();
        let b = generate_scene_with(100, &room, 2, &opts).unwrap();
        let mut yaw_diff = 0;
        let mut presence_diff = 0;
        for (x, y) in a.students.iter().zip(&b.students) {
            assert_eq!(x.seat, y.seat);
            assert_eq!(x.student_id, y.student_id);
            yaw_diff += usize::from(x.face_yaw_deg != y.face_yaw_deg);
            presence_diff += usize::from(x.present != y.present);
        }
        assert!(yaw_diff > 90, "{yaw_diff}");
        assert!(presence_diff > 0);
    }

    #[test]
    fn student_at_tile_center_has_centered_box() {
        let p = RunProfile::feasibility_test();
        let seat = [8.0, 9.0];
        let scene = SimScene {
            students: vec![SimStudent {
                student_id: "S001".into(),
                seat,
                present: true,
                face_yaw_deg: 0.0,
            }],
            seed: 1,
        };
        let mut sim = sim_with(scene);
        // Aim the tile at the face through the same ray model.
        let (pan, tilt) = angles(ray_to(&p.mount, [seat[0], seat[1], p.room.seat_plane_height_m]));
        let tile = sim.capture_tile(&TilePose { tile_id: 0, pan_deg: pan, tilt_deg: tilt }).unwrap();
        let truth = tile.sim_truth.as_ref().unwrap();
        assert_eq!(truth.entries.len(), 1);
        let (cx, cy) = truth.entries[0].bbox.center();
        assert!((cx - 320.0).abs() < 1e-6 && (cy - 240.0).abs() < 1e-6, "{cx} {cy}");
        // The face is painted at the center.
        assert_ne!(tile.pixel(320, 240), BACKGROUND);
        assert_eq!(tile.pixel(0, 0), BACKGROUND);
    }

    #[test]
    fn ceiling_tile_sees_nobody() {
        let room = RunProfile::feasibility_test().room;
        let mut sim = sim_with(generate_scene(161, &room, 3).unwrap());
        let tile = sim.capture_tile(&TilePose { tile_id: 0, pan_deg: 40.0, tilt_deg: 25.0 }).unwrap();
        assert!(tile.sim_truth.unwrap().entries.is_empty());
    }

    #[test]
    fn capture_is_deterministic() {
        let room = RunProfile::feasibility_test().room;
        let scene = generate_scene(161, &room, 11).unwrap();
        let mut a = sim_with(scene.clone());
        let mut b = sim_with(scene);
        let pose = TilePose { tile_id: 5, pan_deg: 30.0, tilt_deg: -12.0 };
        let (ta, tb) = (a.capture_tile(&pose).unwrap(), b.capture_tile(&pose).unwrap());
        assert!(ta.pixels() == tb.pixels());
        assert_eq!(ta.sim_truth, tb.sim_truth);
        assert!(!ta.sim_truth.as_ref().unwrap().entries.is_empty());
    }

    #[test]
    fn pose_out_of_range_is_rejected() {
        let room = RunProfile::feasibility_test().room;
        let mut sim = sim_with(generate_scene(1, &room, 3).unwrap());
        let err = sim
            .capture_tile(&TilePose { tile_id: 0, pan_deg: 179.5, tilt_deg: 0.0 })
            .unwrap_err();
        assert!(matches!(err, CaptureError::PoseOutOfRange { .. }));
    }

    #[test]
    fn identities_are_well_separated() {
        let room = RunProfile::feasibility_test().room;
        let scene = generate_scene(161, &room, 5).unwrap();
        let bank = IdentityBank::for_scene(&scene);
        let all: Vec<_> = bank.iter().map(|(_, e)| e.clone()).collect();
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                assert!(all[i].dot(&all[j]) < 0.5);
            }
        }
    }
}
