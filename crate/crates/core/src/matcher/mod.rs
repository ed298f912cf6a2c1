//! Identity assignment by cosine similarity with confidence banding.
//!
//! Confidence is the cosine similarity clamped to `[0, 1]`. Pairs below the
//! low threshold are never assigned. Bands: `>= high` is high,
//! `[low, high)` is tentative, anything unassigned is unknown.

mod assignment;

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::Embedding;

pub use assignment::max_weight_assignment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Assignment {
    Greedy,
    Optimal,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid match policy: need 0 <= low ({low}) < high ({high}) <= 1")]
pub struct PolicyError {
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchPolicy {
    pub high_threshold: f64,
    pub low_threshold: f64,
    pub assignment: Assignment,
}

impl Default for MatchPolicy {
    fn default() -> Self {
        Self {
            high_threshold: 0.8,
            low_threshold: 0.5,
            assignment: Assignment::Greedy,
        }
    }
}

impl MatchPolicy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let (low, high) = (self.low_threshold, self.high_threshold);
        if (0.0..high).contains(&low) && high <= 1.0 {
            Ok(())
        } else {
            Err(PolicyError { low, high })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    High,
    Tentative,
    Unknown,
}

impl Band {
    pub fn as_str(&self) -> &'static str {
        match self {
            Band::High => "high",
            Band::Tentative => "tentative",
            Band::Unknown => "unknown",
        }
    }
}

/// (tile, index within that tile's detections)
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DetectionRef {
    pub tile_id: u32,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub detection_ref: DetectionRef,
    pub student_id: Option<String>,
    pub confidence: f64,
    pub band: Band,
}

/// A probe embedding awaiting identification.
#[derive(Debug, Clone)]
pub struct Probe<'a> {
    pub detection_ref: DetectionRef,
    pub embedding: &'a Embedding,
}

/// One matchable gallery identity.
#[derive(Debug, Clone, PartialEq)]
pub struct GalleryEntry {
    pub student_id: String,
    pub embedding: Embedding,
}

pub fn similarity(a: &Embedding, b: &Embedding) -> f64 {
    a.dot(b)
}

pub fn band(confidence: f64, policy: &MatchPolicy) -> Band {
    if confidence >= policy.high_threshold {
        Band::High
    } else if confidence >= policy.low_threshold {
        Band::Tentative
    } else {
        Band::Unknown
    }
}

/// Confidence matrix, probes x gallery.
fn confidences(probes: &[Probe<'_>], gallery: &[GalleryEntry]) -> Vec<Vec<f64>> {
    probes
        .par_iter()
        .map(|p| {
            gallery
                .iter()
                .map(|g| similarity(p.embedding, &g.embedding).clamp(0.0, 1.0))
                .collect()
        })
        .collect()
}

fn greedy(conf: &[Vec<f64>], probes: &[Probe<'_>], gallery: &[GalleryEntry], low: f64) -> Vec<Option<usize>> {
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (r, row) in conf.iter().enumerate() {
        for (c, &w) in row.iter().enumerate() {
            if w >= low {
                pairs.push((r, c));
            }
        }
    }
    pairs.sort_by(|&(r1, c1), &(r2, c2)| {
        conf[r2][c2]
            .partial_cmp(&conf[r1][c1])
            .unwrap_or(Ordering::Equal)
            .then_with(|| probes[r1].detection_ref.cmp(&probes[r2].detection_ref))
            .then_with(|| gallery[c1].student_id.cmp(&gallery[c2].student_id))
    });
    let mut row_taken = vec![None; conf.len()];
    let mut col_taken = vec![false; gallery.len()];
    for (r, c) in pairs {
        if row_taken[r].is_none() && !col_taken[c] {
            row_taken[r] = Some(c);
            col_taken[c] = true;
        }
    }
    row_taken
}

/// Assigns at most one detection per identity and bands every probe.
/// Results come back in probe order.
pub fn match_cycle(probes: &[Probe<'_>], gallery: &[GalleryEntry], policy: &MatchPolicy) -> Vec<MatchResult> {
    let conf = confidences(probes, gallery);
    let chosen = match policy.assignment {
        Assignment::Greedy => greedy(&conf, probes, gallery, policy.low_threshold),
        Assignment::Optimal => {
            let eligible: Vec<Vec<f64>> = conf
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|&w| if w >= policy.low_threshold { w } else { 0.0 })
                        .collect()
                })
                .collect();
            max_weight_assignment(&eligible)
        }
    };
    probes
        .iter()
        .zip(chosen)
        .enumerate()
        .map(|(r, (p, c))| match c {
            Some(c) if conf[r][c] >= policy.low_threshold => MatchResult {
                detection_ref: p.detection_ref,
                student_id: Some(gallery[c].student_id.clone()),
                confidence: conf[r][c],
                band: band(conf[r][c], policy),
            },
            _ => MatchResult {
                detection_ref: p.detection_ref,
                student_id: None,
                confidence: conf[r].iter().copied().fold(0.0, f64::max),
                band: Band::Unknown,
            },
        })
        .collect()
}

/// Sum of matched confidences in result order.
pub fn total_confidence(results: &[MatchResult]) -> f64 {
    results
        .iter()
        .filter(|r| r.student_id.is_some())
        .map(|r| r.confidence)
        .sum()
}
