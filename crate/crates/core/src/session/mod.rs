//! Refresh cycle orchestration: scan, detect, stitch, match, publish.

mod calls;
mod config;
mod store;

use std::collections::HashSet;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use thiserror::Error;

use crate::capture::{CaptureSource, TileImage};
use crate::geometry::optics::TileCamera;
use crate::geometry::{CameraIntrinsics, ScanPlan};
use crate::gallery::GalleryStore;
use crate::matcher::{match_cycle, Band, DetectionRef, MatchResult, Probe};
use crate::stitch::{StitchError, Stitcher};
use crate::vision::{BackendError, Detection, VisionBackend};

pub use calls::{CallEvent, CallLog, CallSource};
pub use config::{ConfigError, PrivacyConfig, SessionConfig};
pub use store::{unix_ms, Annotation, Panorama, Snapshot, SnapshotStats, SnapshotStore};

/// Centrality difference below which two tiles count as equally central.
const OWNERSHIP_TIE: f64 = 1e-9;
const STOP_POLL: Duration = Duration::from_millis(20);

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("cycle aborted: {failed} of {total} tile captures failed")]
    CycleAborted { failed: usize, total: usize },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Stitch(StitchError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("stopped before publishing")]
    Stopped,
    #[error("unknown student {0:?}")]
    UnknownId(String),
    #[error("session i/o: {0}")]
    Io(String),
}

impl From<StitchError> for SessionError {
    fn from(e: StitchError) -> Self {
        match e {
            StitchError::Cancelled => SessionError::Stopped,
            other => SessionError::Stitch(other),
        }
    }
}

/// A detection kept after cross-tile deduplication.
#[derive(Debug, Clone, PartialEq)]
pub struct OwnedDetection {
    pub detection_ref: DetectionRef,
    pub detection: Detection,
}

/// Keeps each detection only in the tile that sees its anchor ray closest to
/// the optical axis, so a face in an overlap is reported once. Ties go to the
/// lower tile id. `per_tile` holds detections of the tiles in `cameras`.
pub fn owned_detections(
    cameras: &[(u32, TileCamera)],
    per_tile: Vec<(u32, Vec<Detection>)>,
) -> Vec<OwnedDetection> {
    let mut out = Vec::new();
    for (tile_id, dets) in per_tile {
        let Some(own_cam) = cameras.iter().find(|c| c.0 == tile_id).map(|c| c.1) else {
            continue;
        };
        for (index, detection) in dets.into_iter().enumerate() {
            let (ax, ay) = detection.anchor();
            let dir = own_cam.pixel_to_dir(ax, ay);
            let Some(own) = own_cam.centrality(dir) else { continue };
            let owned = cameras.iter().all(|(other_id, cam)| {
                if *other_id == tile_id {
                    return true;
                }
                match cam.centrality(dir) {
                    None => true,
                    Some(c) if (c - own).abs() <= OWNERSHIP_TIE => tile_id < *other_id,
                    Some(c) => c > own,
                }
            });
            if owned {
                out.push(OwnedDetection { detection_ref: DetectionRef { tile_id, index }, detection });
            }
        }
    }
    out.sort_by_key(|d| d.detection_ref);
    out
}

/// Re-labels unknown/tentative annotations that sit on a previous high-band
/// box. Inherited identities become tentative and never displace an identity
/// already used in this cycle.
pub fn apply_stickiness(
    annotations: &mut [Annotation],
    embeddings: &[&crate::embedding::Embedding],
    previous: &[Annotation],
    gallery: &GalleryStore,
    sticky_iou: f64,
) {
    let mut used: HashSet<String> = annotations.iter().filter_map(|a| a.result.student_id.clone()).collect();
    for (a, emb) in annotations.iter_mut().zip(embeddings) {
        if a.result.band == Band::High {
            continue;
        }
        let best = previous
            .iter()
            .filter(|p| p.result.band == Band::High)
            .filter_map(|p| Some((p.pano_box.iou(&a.pano_box), p.result.student_id.as_deref()?)))
            .filter(|(iou, _)| *iou >= sticky_iou)
            .max_by(|x, y| x.0.total_cmp(&y.0).then_with(|| y.1.cmp(x.1)));
        let Some((_, id)) = best else { continue };
        if a.result.student_id.as_deref() == Some(id) || used.contains(id) {
            continue;
        }
        let Some(record) = gallery.matchable(id) else { continue };
        if let Some(old) = a.result.student_id.take() {
            used.remove(&old);
        }
        used.insert(id.to_string());
        a.result.student_id = Some(id.to_string());
        a.result.confidence = emb.dot(&record.gallery_embedding).clamp(0.0, 1.0);
        a.result.band = Band::Tentative;
        a.sticky = true;
    }
}

fn stats(tiles: usize, annotations: &[Annotation]) -> SnapshotStats {
    let count = |b: Band| annotations.iter().filter(|a| a.result.band == b).count();
    SnapshotStats {
        tiles,
        detections: annotations.len(),
        matched_high: count(Band::High),
        matched_tentative: count(Band::Tentative),
        unknown: count(Band::Unknown),
    }
}

/// Cooperative stop signal shared between a loop and its controller.
#[derive(Debug, Clone, Default)]
pub struct StopToken(Arc<AtomicBool>);

impl StopToken {
    pub fn stop(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_stopped(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.0.store(false, Ordering::SeqCst);
    }
}

/// Owns one camera, one backend and the cycle state.
pub struct Session {
    config: SessionConfig,
    plan: ScanPlan,
    intrinsics: CameraIntrinsics,
    stitcher: Stitcher,
    source: Box<dyn CaptureSource>,
    backend: Arc<dyn VisionBackend>,
    gallery: Arc<GalleryStore>,
    store: Arc<SnapshotStore>,
    stop: StopToken,
    cycle: u64,
    matcher_calls: Vec<Vec<String>>,
}

impl Session {
    pub fn new(
        config: SessionConfig,
        plan: ScanPlan,
        intrinsics: CameraIntrinsics,
        source: Box<dyn CaptureSource>,
        backend: Arc<dyn VisionBackend>,
        gallery: Arc<GalleryStore>,
        store: Arc<SnapshotStore>,
    ) -> Result<Self, SessionError> {
        config.validate()?;
        let stitcher = Stitcher::new(&plan, &intrinsics, &config.panorama)?;
        Ok(Self {
            config,
            plan,
            intrinsics,
            stitcher,
            source,
            backend,
            gallery,
            store,
            stop: StopToken::default(),
            cycle: 0,
            matcher_calls: Vec::new(),
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn plan(&self) -> &ScanPlan {
        &self.plan
    }

    pub fn store(&self) -> &Arc<SnapshotStore> {
        &self.store
    }

    pub fn gallery(&self) -> &Arc<GalleryStore> {
        &self.gallery
    }

    pub fn stop_token(&self) -> StopToken {
        self.stop.clone()
    }

    pub fn source_mut(&mut self) -> &mut dyn CaptureSource {
        self.source.as_mut()
    }

    /// Gallery ids handed to the matcher, one list per completed match step.
    pub fn matcher_calls(&self) -> &[Vec<String>] {
        &self.matcher_calls
    }

    fn check_stop(&self) -> Result<(), SessionError> {
        if self.stop.is_stopped() {
            Err(SessionError::Stopped)
        } else {
            Ok(())
        }
    }

    /// Runs one full cycle and publishes its snapshot.
    pub fn run_cycle(&mut self) -> Result<Arc<Snapshot>, SessionError> {
        let started_at = SystemTime::now();
        self.cycle += 1;
        self.source.begin_cycle(self.cycle);

        let mut tiles: Vec<TileImage> = Vec::with_capacity(self.plan.len());
        let mut failed = 0;
        for pose in &self.plan.tiles {
            self.check_stop()?;
            match self.source.capture_tile(pose) {
                Ok(t) => tiles.push(t),
                Err(e) => {
                    failed += 1;
                    tracing::warn!(tile = pose.tile_id, error = %e, "capture failed");
                }
            }
        }
        let total = self.plan.len();
        if 2 * failed > total {
            return Err(SessionError::CycleAborted { failed, total });
        }
        self.check_stop()?;

        let backend = &self.backend;
        let per_tile: Vec<(u32, Vec<Detection>)> = tiles
            .par_iter()
            .map(|t| backend.detect_and_embed(t).map(|d| (t.tile_id, d)))
            .collect::<Result<_, _>>()?;
        let cameras: Vec<(u32, TileCamera)> = tiles
            .iter()
            .map(|t| (t.tile_id, TileCamera::new(&t.pose, &self.intrinsics)))
            .collect();
        let owned = owned_detections(&cameras, per_tile);

        let stop = self.stop.clone();
        let canvas = self.stitcher.compose_until(&tiles, &move || stop.is_stopped())?;
        let tile_count = tiles.len();
        let retained_tiles = if self.config.privacy.retain_tiles { tiles } else { Vec::new() };
        let png = canvas.to_png()?;
        let layout = canvas.layout;
        drop(canvas);

        let gallery = self.gallery.snapshot();
        self.matcher_calls.push(gallery.entries.iter().map(|e| e.student_id.clone()).collect());
        let probes: Vec<Probe<'_>> = owned
            .iter()
            .map(|o| Probe { detection_ref: o.detection_ref, embedding: &o.detection.embedding })
            .collect();
        let results: Vec<MatchResult> = match_cycle(&probes, &gallery.entries, &self.config.policy);

        let mut annotations = Vec::with_capacity(results.len());
        let mut embeddings = Vec::with_capacity(results.len());
        for (o, result) in owned.iter().zip(results) {
            match self.stitcher.project_box(&o.detection.bbox, o.detection_ref.tile_id) {
                Ok(pano_box) => {
                    annotations.push(Annotation { pano_box, result, sticky: false });
                    embeddings.push(&o.detection.embedding);
                }
                Err(e) => tracing::warn!(tile = o.detection_ref.tile_id, error = %e, "box off canvas"),
            }
        }
        if let Some(prev) = self.store.latest() {
            apply_stickiness(&mut annotations, &embeddings, &prev.annotations, &self.gallery, self.config.sticky_iou);
        }
        self.check_stop()?;

        let snapshot = Snapshot {
            version: 0,
            cycle: self.cycle,
            started_at,
            published_at: UNIX_EPOCH,
            panorama: Panorama { layout, png: Arc::from(png) },
            stats: stats(tile_count, &annotations),
            annotations,
            retained_tiles,
        };
        let published = self.store.publish(snapshot);
        tracing::info!(
            version = published.version,
            detections = published.stats.detections,
            high = published.stats.matched_high,
            "snapshot published"
        );
        Ok(published)
    }

    /// Runs cycles on a background thread until stopped.
    ///
    /// After a cycle ends the loop waits `max(refresh_interval_s - cycle
    /// duration, 0)`, so an overrunning cycle is followed immediately. Failed cycles are
    /// logged and the loop carries on.
    pub fn spawn_loop(self) -> SessionLoop {
        let stop = self.stop.clone();
        stop.reset();
        let handle = thread::Builder::new()
            .name("namemo-session".into())
            .spawn(move || {
                let mut session = self;
                let interval = Duration::from_secs_f64(session.config.refresh_interval_s);
                while !session.stop.is_stopped() {
                    let began = Instant::now();
                    match session.run_cycle() {
                        Ok(_) | Err(SessionError::Stopped) => {}
                        Err(e) => tracing::error!(error = %e, "cycle failed"),
                    }
                    let next = Instant::now() + interval.saturating_sub(began.elapsed());
                    while !session.stop.is_stopped() && Instant::now() < next {
                        thread::sleep(STOP_POLL.min(next.saturating_duration_since(Instant::now())));
                    }
                }
                session
            })
            .expect("spawn session thread");
        SessionLoop { stop, handle }
    }
}

/// Handle to a running [`Session::spawn_loop`].
pub struct SessionLoop {
    stop: StopToken,
    handle: JoinHandle<Session>,
}

impl SessionLoop {
    pub fn stop_token(&self) -> StopToken {
        self.stop.clone()
    }

    /// Signals the loop, waits for the in-flight cycle to finish or abort,
    /// and hands the session back ready to run again.
    pub fn stop(self) -> Session {
        self.stop.stop();
        let session = self.handle.join().expect("session thread panicked");
        self.stop.reset();
        session
    }

    pub fn is_finished(&self) -> bool {
        self.handle.is_finished()
    }
}
