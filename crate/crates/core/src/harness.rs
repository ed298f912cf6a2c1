//! Recognition accuracy over repeated simulated cycles.
//!
//! Every trial captures the full plan with fresh embedding noise, keeps one
//! detection per face, matches against a gallery of the true identities
//! and scores against simulator ground truth. Panorama composition is
//! skipped since it does not affect identities.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capture::{generate_scene, CaptureError, CaptureSource, IdentityBank, Simulator};
use crate::geometry::optics::TileCamera;
use crate::geometry::GeometryError;
use crate::matcher::{match_cycle, Band, GalleryEntry, MatchPolicy, Probe};
use crate::profile::RunProfile;
use crate::session::owned_detections;
use crate::vision::{BackendError, Detection, SyntheticBackend, VisionBackend};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Capture(#[from] CaptureError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone)]
pub struct HarnessOptions {
    pub students: usize,
    pub noise: f64,
    pub trials: usize,
    pub seed: u64,
    pub policy: MatchPolicy,
    pub profile: RunProfile,
}

impl HarnessOptions {
    pub fn new(students: usize, noise: f64, trials: usize, seed: u64) -> Self {
        Self {
            students,
            noise,
            trials,
            seed,
            policy: MatchPolicy::default(),
            profile: RunProfile::feasibility_test(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessReport {
    /// Present students named correctly, over all present students and trials.
    pub top1_accuracy: f64,
    /// Share of present students named correctly in the high band.
    pub high_band_rate: f64,
    /// Identities assigned to more than one detection within a trial.
    pub duplicate_assignments: usize,
    #[serde(skip)]
    pub trials: usize,
    #[serde(skip)]
    pub faces: usize,
    #[serde(skip)]
    pub detections: usize,
}

#[derive(Default)]
struct Tally {
    faces: usize,
    detections: usize,
    correct: usize,
    correct_high: usize,
    duplicates: usize,
}

pub fn run_accuracy_harness(opts: &HarnessOptions) -> Result<HarnessReport, HarnessError> {
    let p = &opts.profile;
    let plan = p.plan()?;
    let scene = generate_scene(opts.students, &p.room, opts.seed)?;
    let bank = Arc::new(IdentityBank::for_scene(&scene));
    let gallery: Vec<GalleryEntry> = bank
        .iter()
        .map(|(id, e)| GalleryEntry { student_id: id.to_string(), embedding: e.clone() })
        .collect();
    let backend = SyntheticBackend::new(Arc::clone(&bank), opts.noise);
    let cameras: Vec<(u32, TileCamera)> =
        plan.tiles.iter().map(|t| (t.tile_id, TileCamera::new(t, &p.intrinsics))).collect();
    let present = scene.present_ids().count();

    let tallies: Vec<Tally> = (1..=opts.trials as u64)
        .into_par_iter()
        .map(|cycle| -> Result<Tally, HarnessError> {
            let mut sim = Simulator::new(p.room, p.intrinsics, p.mount, scene.clone()).without_face_pixels();
            sim.begin_cycle(cycle);
            let mut truth: HashMap<(u32, usize), String> = HashMap::new();
            let mut per_tile: Vec<(u32, Vec<Detection>)> = Vec::with_capacity(plan.len());
            for pose in &plan.tiles {
                let tile = sim.capture_tile(pose)?;
                let dets = backend.detect_and_embed(&tile)?;
                if let Some(t) = &tile.sim_truth {
                    for (i, e) in t.entries.iter().enumerate() {
                        truth.insert((tile.tile_id, i), e.student_id.clone());
                    }
                }
                per_tile.push((tile.tile_id, dets));
            }
            let owned = owned_detections(&cameras, per_tile);
            let probes: Vec<Probe<'_>> = owned
                .iter()
                .map(|o| Probe { detection_ref: o.detection_ref, embedding: &o.detection.embedding })
                .collect();
            let results = match_cycle(&probes, &gallery, &opts.policy);

            let mut tally = Tally { faces: present, detections: owned.len(), ..Tally::default() };
            let mut seen: HashMap<&str, usize> = HashMap::new();
            for r in &results {
                let Some(id) = r.student_id.as_deref() else { continue };
                *seen.entry(id).or_default() += 1;
                let key = (r.detection_ref.tile_id, r.detection_ref.index);
                if truth.get(&key).map(String::as_str) == Some(id) {
                    tally.correct += 1;
                    if r.band == Band::High {
                        tally.correct_high += 1;
                    }
                }
            }
            tally.duplicates = seen.values().filter(|&&n| n > 1).map(|n| n - 1).sum();
            // A face kept twice would inflate `correct`; count it against accuracy.
            tally.correct = tally.correct.min(present);
            tally.correct_high = tally.correct_high.min(present);
            Ok(tally)
        })
        .collect::<Result<_, _>>()?;

    let total = tallies.iter().fold(Tally::default(), |mut acc, t| {
        acc.faces += t.faces;
        acc.detections += t.detections;
        acc.correct += t.correct;
        acc.correct_high += t.correct_high;
        acc.duplicates += t.duplicates;
        acc
    });
    let rate = |n: usize| if total.faces == 0 { 1.0 } else { n as f64 / total.faces as f64 };
    Ok(HarnessReport {
        top1_accuracy: rate(total.correct),
        high_band_rate: rate(total.correct_high),
        duplicate_assignments: total.duplicates,
        trials: opts.trials,
        faces: total.faces,
        detections: total.detections,
    })
}
