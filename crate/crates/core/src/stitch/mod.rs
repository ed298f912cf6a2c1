//! Equirectangular panorama from posed tiles.
//!
//! Tiles are placed with their known pan/tilt angles (no feature
//! registration). Canvas pixels take a feather blend of every tile that
//! sees them, weighted by distance to that tile's border.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boxes::BBox;
use crate::capture::TileImage;
use crate::geometry::optics::{angles, direction, TileCamera};
use crate::geometry::{compute_fov, CameraIntrinsics, ScanPlan, TilePose};
use crate::imaging::encode_png_rgb;

const EDGE_SAMPLES: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StitchError {
    #[error("scan plan has no tiles")]
    EmptyPlan,
    #[error("tile {0} is not part of the scan plan")]
    UnknownTile(u32),
    #[error("({az:.4}, {el:.4}) deg lies outside the canvas")]
    OutOfCanvas { az: f64, el: f64 },
    #[error("composition cancelled")]
    Cancelled,
    #[error("png encoding failed: {0}")]
    Encode(String),
}

/// Canvas resolution request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CanvasSpec {
    /// Angular pixel size; `None` uses the tiles' native resolution.
    pub deg_per_px: Option<f64>,
    /// Neither canvas side may exceed this; the scale is coarsened to fit.
    pub max_dim_px: u32,
}

impl Default for CanvasSpec {
    fn default() -> Self {
        Self { deg_per_px: None, max_dim_px: 4096 }
    }
}

/// Angular extent and pixel grid of a canvas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanvasLayout {
    pub az_range_deg: [f64; 2],
    pub el_range_deg: [f64; 2],
    pub width_px: u32,
    pub height_px: u32,
}

impl CanvasLayout {
    pub fn deg_per_px(&self) -> (f64, f64) {
        (
            (self.az_range_deg[1] - self.az_range_deg[0]) / f64::from(self.width_px),
            (self.el_range_deg[1] - self.el_range_deg[0]) / f64::from(self.height_px),
        )
    }

    /// Continuous canvas coordinates; no range check.
    pub fn sphere_to_canvas(&self, az: f64, el: f64) -> (f64, f64) {
        let [a0, a1] = self.az_range_deg;
        let [e0, e1] = self.el_range_deg;
        (
            (az - a0) / (a1 - a0) * f64::from(self.width_px),
            (e1 - el) / (e1 - e0) * f64::from(self.height_px),
        )
    }

    pub fn canvas_to_sphere(&self, x: f64, y: f64) -> (f64, f64) {
        let [a0, a1] = self.az_range_deg;
        let [e0, e1] = self.el_range_deg;
        (
            a0 + x / f64::from(self.width_px) * (a1 - a0),
            e1 - y / f64::from(self.height_px) * (e1 - e0),
        )
    }

    fn contains_angles(&self, az: f64, el: f64) -> bool {
        let eps = 1e-9;
        az >= self.az_range_deg[0] - eps
            && az <= self.az_range_deg[1] + eps
            && el >= self.el_range_deg[0] - eps
            && el <= self.el_range_deg[1] + eps
    }
}

/// Pixel column/row of an (azimuth, elevation) pair; the far edges clamp
/// onto the last column/row.
pub fn sphere_to_pano(az: f64, el: f64, layout: &CanvasLayout) -> Result<(u32, u32), StitchError> {
    if !layout.contains_angles(az, el) {
        return Err(StitchError::OutOfCanvas { az, el });
    }
    let (x, y) = layout.sphere_to_canvas(az, el);
    let clamp = |v: f64, n: u32| (v.floor().max(0.0) as u32).min(n - 1);
    Ok((clamp(x, layout.width_px), clamp(y, layout.height_px)))
}

/// (azimuth, elevation) in degrees of a tile pixel.
pub fn tile_pixel_to_sphere(pose: &TilePose, px: (f64, f64), intr: &CameraIntrinsics) -> (f64, f64) {
    angles(TileCamera::new(pose, intr).pixel_to_dir(px.0, px.1))
}

/// Tile pixel of an (azimuth, elevation) pair; `None` behind the camera.
pub fn sphere_to_tile_pixel(
    pose: &TilePose,
    az_el: (f64, f64),
    intr: &CameraIntrinsics,
) -> Option<(f64, f64)> {
    TileCamera::new(pose, intr).dir_to_pixel(direction(az_el.0, az_el.1))
}

/// A detection box on the panorama.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanoBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    #[serde(rename = "tile_id")]
    pub source_tile: u32,
}

impl PanoBox {
    pub fn to_bbox(&self) -> BBox {
        BBox::new(f64::from(self.x), f64::from(self.y), f64::from(self.w), f64::from(self.h))
    }

    pub fn iou(&self, other: &PanoBox) -> f64 {
        self.to_bbox().iou(&other.to_bbox())
    }
}

/// Box metadata export: `{"boxes":[{x,y,w,h,tile_id}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxesDocument {
    pub boxes: Vec<PanoBox>,
}

#[derive(Clone)]
pub struct PanoramaCanvas {
    pub layout: CanvasLayout,
    pub pixels: Vec<u8>,
}

impl std::fmt::Debug for PanoramaCanvas {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PanoramaCanvas").field("layout", &self.layout).finish()
    }
}

impl PanoramaCanvas {
    pub fn width(&self) -> u32 {
        self.layout.width_px
    }

    pub fn height(&self) -> u32 {
        self.layout.height_px
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y as usize * self.layout.width_px as usize + x as usize);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn to_png(&self) -> Result<Vec<u8>, StitchError> {
        encode_png_rgb(self.layout.width_px, self.layout.height_px, &self.pixels)
            .map_err(|e| StitchError::Encode(e.to_string()))
    }
}

/// Tile cameras of one plan plus the canvas they project onto.
#[derive(Debug, Clone)]
pub struct Stitcher {
    layout: CanvasLayout,
    intrinsics: CameraIntrinsics,
    /// Sorted by tile id.
    tiles: Vec<(TilePose, TileCamera, [f64; 4])>,
}

impl Stitcher {
    pub fn new(plan: &ScanPlan, intr: &CameraIntrinsics, spec: &CanvasSpec) -> Result<Self, StitchError> {
        if plan.tiles.is_empty() {
            return Err(StitchError::EmptyPlan);
        }
        let mut poses = plan.tiles.clone();
        poses.sort_by_key(|t| t.tile_id);
        let footprints: Vec<[f64; 4]> = poses.iter().map(|p| angular_footprint(p, intr)).collect();
        let az0 = footprints.iter().map(|f| f[0]).fold(f64::INFINITY, f64::min);
        let az1 = footprints.iter().map(|f| f[1]).fold(f64::NEG_INFINITY, f64::max);
        let el0 = footprints.iter().map(|f| f[2]).fold(f64::INFINITY, f64::min);
        let el1 = footprints.iter().map(|f| f[3]).fold(f64::NEG_INFINITY, f64::max);

        let native = compute_fov(intr).0 / f64::from(intr.image_width_px);
        let mut dpp = spec.deg_per_px.unwrap_or(native);
        let longest = (az1 - az0).max(el1 - el0);
        if longest / dpp > f64::from(spec.max_dim_px) {
            dpp = longest / f64::from(spec.max_dim_px);
        }
        let dim = |span: f64| ((span / dpp).ceil() as u32).clamp(1, spec.max_dim_px.max(1));
        let layout = CanvasLayout {
            az_range_deg: [az0, az1],
            el_range_deg: [el0, el1],
            width_px: dim(az1 - az0),
            height_px: dim(el1 - el0),
        };
        let tiles = poses
            .into_iter()
            .map(|p| {
                let cam = TileCamera::new(&p, intr);
                let f = angular_footprint(&p, intr);
                let (x0, y0) = layout.sphere_to_canvas(f[0], f[3]);
                let (x1, y1) = layout.sphere_to_canvas(f[1], f[2]);
                (p, cam, [x0 - 1.0, x1 + 1.0, y0 - 1.0, y1 + 1.0])
            })
            .collect();
        Ok(Self { layout, intrinsics: *intr, tiles })
    }

    pub fn layout(&self) -> &CanvasLayout {
        &self.layout
    }

    pub fn pose(&self, tile_id: u32) -> Option<&TilePose> {
        self.tiles.iter().find(|t| t.0.tile_id == tile_id).map(|t| &t.0)
    }

    /// Normalized feather weights of every tile covering canvas pixel
    /// `(x, y)` (sampled at the pixel center), with the tile-pixel each
    /// weight samples. Empty where no tile covers the pixel.
    pub fn feather_weights(&self, x: u32, y: u32) -> Vec<(u32, f64, (f64, f64))> {
        let (cx, cy) = (f64::from(x) + 0.5, f64::from(y) + 0.5);
        let (az, el) = self.layout.canvas_to_sphere(cx, cy);
        let dir = direction(az, el);
        let mut out = Vec::new();
        let mut total = 0.0;
        for (pose, cam, b) in &self.tiles {
            if cx < b[0] || cx > b[1] || cy < b[2] || cy > b[3] {
                continue;
            }
            let Some((px, py)) = cam.dir_to_pixel(dir) else { continue };
            let (w, h) = (cam.pinhole.width, cam.pinhole.height);
            let weight = 2.0 * (px / w).min(1.0 - px / w).min(py / h).min(1.0 - py / h);
            if weight > 0.0 {
                total += weight;
                out.push((pose.tile_id, weight, (px, py)));
            }
        }
        for o in &mut out {
            o.1 /= total;
        }
        out
    }

    /// Blends `tiles` onto the canvas. Input order does not matter.
    pub fn compose(&self, tiles: &[TileImage]) -> Result<PanoramaCanvas, StitchError> {
        self.compose_until(tiles, &|| false)
    }

    /// [`Stitcher::compose`] that gives up with `Cancelled` once `cancelled` returns true.
    pub fn compose_until(
        &self,
        tiles: &[TileImage],
        cancelled: &(dyn Fn() -> bool + Sync),
    ) -> Result<PanoramaCanvas, StitchError> {
        let mut by_id: Vec<Option<&TileImage>> = vec![None; self.tiles.len()];
        for t in tiles {
            let slot = self
                .tiles
                .iter()
                .position(|(p, _, _)| p.tile_id == t.tile_id)
                .ok_or(StitchError::UnknownTile(t.tile_id))?;
            by_id[slot] = Some(t);
        }
        let ids: Vec<u32> = self.tiles.iter().map(|t| t.0.tile_id).collect();
        let (w, h) = (self.layout.width_px as usize, self.layout.height_px as usize);
        let mut pixels = vec![0u8; 3 * w * h];
        pixels.par_chunks_mut(3 * w).enumerate().try_for_each(|(y, row)| {
            if cancelled() {
                return Err(StitchError::Cancelled);
            }
            for x in 0..w {
                let weights = self.feather_weights(x as u32, y as u32);
                let mut acc = [0.0f64; 3];
                let mut total = 0.0;
                for (id, wt, (px, py)) in weights {
                    let slot = ids.iter().position(|&i| i == id).expect("weights come from known tiles");
                    let Some(tile) = by_id[slot] else { continue };
                    let sx = (px.floor() as u32).min(tile.width - 1);
                    let sy = (py.floor() as u32).min(tile.height - 1);
                    let c = tile.pixel(sx, sy);
                    for k in 0..3 {
                        acc[k] += wt * f64::from(c[k]);
                    }
                    total += wt;
                }
                if total > 0.0 {
                    for k in 0..3 {
                        row[3 * x + k] = (acc[k] / total).round().clamp(0.0, 255.0) as u8;
                    }
                }
            }
            Ok(())
        })?;
        Ok(PanoramaCanvas { layout: self.layout, pixels })
    }

    /// Axis-aligned hull of the projected box corners, clamped to the canvas.
    pub fn project_box(&self, bbox: &BBox, tile_id: u32) -> Result<PanoBox, StitchError> {
        let pose = self.pose(tile_id).ok_or(StitchError::UnknownTile(tile_id))?;
        project_box(bbox, pose, &self.intrinsics, &self.layout)
    }
}

/// [min_az, max_az, min_el, max_el] of a tile's frustum, from border samples.
fn angular_footprint(pose: &TilePose, intr: &CameraIntrinsics) -> [f64; 4] {
    let cam = TileCamera::new(pose, intr);
    let (w, h) = (cam.pinhole.width, cam.pinhole.height);
    let mut f = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
    for i in 0..=EDGE_SAMPLES {
        let t = i as f64 / EDGE_SAMPLES as f64;
        for (px, py) in [(t * w, 0.0), (t * w, h), (0.0, t * h), (w, t * h)] {
            let (az, el) = angles(cam.pixel_to_dir(px, py));
            f = [f[0].min(az), f[1].max(az), f[2].min(el), f[3].max(el)];
        }
    }
    f
}

pub fn compose_panorama(
    tiles: &[TileImage],
    plan: &ScanPlan,
    intr: &CameraIntrinsics,
    spec: &CanvasSpec,
) -> Result<PanoramaCanvas, StitchError> {
    Stitcher::new(plan, intr, spec)?.compose(tiles)
}

pub fn project_box(
    bbox: &BBox,
    pose: &TilePose,
    intr: &CameraIntrinsics,
    layout: &CanvasLayout,
) -> Result<PanoBox, StitchError> {
    let cam = TileCamera::new(pose, intr);
    let corners = [
        (bbox.x, bbox.y),
        (bbox.right(), bbox.y),
        (bbox.x, bbox.bottom()),
        (bbox.right(), bbox.bottom()),
    ];
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (px, py) in corners {
        let (az, el) = angles(cam.pixel_to_dir(px, py));
        let (x, y) = layout.sphere_to_canvas(az, el);
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let (w, h) = (f64::from(layout.width_px), f64::from(layout.height_px));
    if x1 < 0.0 || y1 < 0.0 || x0 > w || y0 > h {
        let (az, el) = tile_pixel_to_sphere(pose, bbox.center(), intr);
        return Err(StitchError::OutOfCanvas { az, el });
    }
    let left = (x0.floor().max(0.0) as u32).min(layout.width_px - 1);
    let top = (y0.floor().max(0.0) as u32).min(layout.height_px - 1);
    let right = (x1.ceil().min(w) as u32).max(left + 1).min(layout.width_px);
    let bottom = (y1.ceil().min(h) as u32).max(top + 1).min(layout.height_px);
    Ok(PanoBox {
        x: left,
        y: top,
        w: (right - left).max(1),
        h: (bottom - top).max(1),
        source_tile: pose.tile_id,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics {
            focal_length_mm: 35.0,
            sensor_width_mm: 6.4,
            sensor_height_mm: 4.8,
            image_width_px: 64,
            image_height_px: 48,
        }
    }

    fn plan(poses: &[(f64, f64)]) -> ScanPlan {
        ScanPlan {
            tiles: poses
                .iter()
                .enumerate()
                .map(|(i, &(p, t))| TilePose { tile_id: i as u32, pan_deg: p, tilt_deg: t })
                .collect(),
            overlap_fraction: 0.2,
            covered_fraction: 1.0,
            columns: poses.len(),
            rows: 1,
        }
    }

    fn uniform(pose: TilePose, color: [u8; 3]) -> TileImage {
        let i = intr();
        let px = color.repeat((i.image_width_px * i.image_height_px) as usize);
        TileImage::new(pose, i.image_width_px, i.image_height_px, px, Duration::ZERO, None, None).unwrap()
    }

    #[test]
    fn optical_axis_maps_to_pose() {
        let pose = TilePose { tile_id: 0, pan_deg: 10.0, tilt_deg: 5.0 };
        let (az, el) = tile_pixel_to_sphere(&pose, (32.0, 24.0), &intr());
        assert!((az - 10.0).abs() < 1e-12 && (el - 5.0).abs() < 1e-12);
    }

    #[test]
    fn right_edge_is_half_fov() {
        let pose = TilePose { tile_id: 0, pan_deg: 0.0, tilt_deg: 0.0 };
        let (az, el) = tile_pixel_to_sphere(&pose, (64.0, 24.0), &intr());
        let half = compute_fov(&intr()).0 / 2.0;
        assert!((az - half).abs() < 1e-9, "{az} vs {half}");
        assert!(el.abs() < 1e-12);
    }

    #[test]
    fn linear_map_midpoint_and_clamped_edge() {
        let layout = CanvasLayout {
            az_range_deg: [-45.0, 45.0],
            el_range_deg: [-10.0, 10.0],
            width_px: 3600,
            height_px: 800,
        };
        assert_eq!(sphere_to_pano(0.0, 0.0, &layout).unwrap(), (1800, 400));
        assert_eq!(sphere_to_pano(45.0, 0.0, &layout).unwrap().0, 3599);
        assert_eq!(sphere_to_pano(-45.0, -10.0, &layout).unwrap(), (0, 799));
        assert!(matches!(sphere_to_pano(46.0, 0.0, &layout), Err(StitchError::OutOfCanvas { .. })));
        let xs: Vec<u32> = (-45..=45).map(|a| sphere_to_pano(a as f64, 0.0, &layout).unwrap().0).collect();
        assert!(xs.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn single_tile_reprojects_without_blending() {
        let p = plan(&[(0.0, 0.0)]);
        let s = Stitcher::new(&p, &intr(), &CanvasSpec::default()).unwrap();
        let tile = uniform(p.tiles[0], [200, 10, 30]);
        let canvas = s.compose(&[tile]).unwrap();
        let (w, h) = (canvas.width(), canvas.height());
        assert_eq!(canvas.pixel(w / 2, h / 2), [200, 10, 30]);
        for (x, y) in [(w / 2, h / 2), (1, h / 2), (w / 2, 1)] {
            let ws = s.feather_weights(x, y);
            assert!(ws.len() <= 1);
            if let Some(&(_, wt, _)) = ws.first() {
                assert_eq!(wt, 1.0);
            }
        }
    }

    #[test]
    fn overlap_blends_monotonically() {
        let step = compute_fov(&intr()).0 * 0.6;
        let p = plan(&[(0.0, 0.0), (step, 0.0)]);
        let s = Stitcher::new(&p, &intr(), &CanvasSpec::default()).unwrap();
        let a = uniform(p.tiles[0], [250, 0, 0]);
        let b = uniform(p.tiles[1], [0, 0, 250]);
        let canvas = s.compose(&[a, b]).unwrap();
        let y = canvas.height() / 2;
        let reds: Vec<u8> = (0..canvas.width()).map(|x| canvas.pixel(x, y)[0]).collect();
        let covered: Vec<u8> = reds
            .iter()
            .zip(0..)
            .filter(|(_, x)| !s.feather_weights(*x, y).is_empty())
            .map(|(r, _)| *r)
            .collect();
        assert_eq!(covered.first(), Some(&250));
        assert_eq!(covered.last(), Some(&0));
        assert!(covered.windows(2).all(|w| w[1] <= w[0]), "{covered:?}");
        assert!(covered.iter().any(|&r| r > 20 && r < 230), "no blended strip");
    }

    #[test]
    fn composition_ignores_input_order() {
        let step = compute_fov(&intr()).0 * 0.7;
        let p = plan(&[(0.0, 0.0), (step, 0.0), (step / 2.0, -4.0)]);
        let s = Stitcher::new(&p, &intr(), &CanvasSpec::default()).unwrap();
        let tiles = || {
            vec![
                uniform(p.tiles[0], [250, 20, 0]),
                uniform(p.tiles[1], [0, 90, 250]),
                uniform(p.tiles[2], [10, 250, 40]),
            ]
        };
        let fwd = s.compose(&tiles()).unwrap();
        let mut rev = tiles();
        rev.reverse();
        let back = s.compose(&rev).unwrap();
        assert!(fwd.pixels == back.pixels);
        assert!(fwd.pixels == s.compose(&tiles()).unwrap().pixels);
    }

    #[test]
    fn weights_sum_to_one_where_covered() {
        let step = compute_fov(&intr()).0 * 0.7;
        let p = plan(&[(0.0, 0.0), (step, 0.0), (step / 2.0, -4.0)]);
        let s = Stitcher::new(&p, &intr(), &CanvasSpec::default()).unwrap();
        let l = *s.layout();
        let mut covered = 0;
        for y in (0..l.height_px).step_by(3) {
            for x in (0..l.width_px).step_by(3) {
                let ws = s.feather_weights(x, y);
                if !ws.is_empty() {
                    covered += 1;
                    let sum: f64 = ws.iter().map(|w| w.1).sum();
                    assert!((sum - 1.0).abs() < 1e-12);
                }
            }
        }
        assert!(covered > 100);
    }

    #[test]
    fn uncovered_pixels_are_black() {
        let p = plan(&[(0.0, 0.0), (0.0, -15.0)]);
        let s = Stitcher::new(&p, &intr(), &CanvasSpec::default()).unwrap();
        let canvas = s.compose(&[uniform(p.tiles[0], [9, 9, 9])]).unwrap();
        // Tile 1 was not supplied, so its exclusive region stays black.
        let y = canvas.height() - 2;
        assert_eq!(canvas.pixel(canvas.width() / 2, y), [0, 0, 0]);
    }

    #[test]
    fn centered_box_lands_centered() {
        let p = plan(&[(0.0, 0.0)]);
        let s = Stitcher::new(&p, &intr(), &CanvasSpec::default()).unwrap();
        let b = s.project_box(&BBox::new(28.0, 20.0, 8.0, 8.0), 0).unwrap();
        let l = s.layout();
        let (cx, cy) = (f64::from(b.x) + f64::from(b.w) / 2.0, f64::from(b.y) + f64::from(b.h) / 2.0);
        assert!((cx - f64::from(l.width_px) / 2.0).abs() <= 1.0);
        assert!((cy - f64::from(l.height_px) / 2.0).abs() <= 1.0);
    }

    #[test]
    fn degenerate_box_still_has_area() {
        let p = plan(&[(0.0, 0.0)]);
        let s = Stitcher::new(&p, &intr(), &CanvasSpec::default()).unwrap();
        let b = s.project_box(&BBox::new(10.0, 10.0, 1.0, 1.0), 0).unwrap();
        assert!(b.w >= 1 && b.h >= 1);
        let z = s.project_box(&BBox::new(10.0, 10.0, 0.0, 0.0), 0).unwrap();
        assert!(z.w >= 1 && z.h >= 1);
    }

    #[test]
    fn empty_plan_is_rejected() {
        let p = plan(&[]);
        assert_eq!(Stitcher::new(&p, &intr(), &CanvasSpec::default()).unwrap_err(), StitchError::EmptyPlan);
    }

    #[test]
    fn boxes_document_uses_tile_id_key() {
        let doc = BoxesDocument { boxes: vec![PanoBox { x: 1, y: 2, w: 3, h: 4, source_tile: 5 }] };
        assert_eq!(
            serde_json::to_string(&doc).unwrap(),
            r#"{"boxes":[{"x":1,"y":2,"w":3,"h":4,"tile_id":5}]}"#
        );
    }
}
