use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::align::{CANONICAL_TEMPLATE_112, NOSE};
use super::{BackendError, Detection, VisionBackend};
use crate::capture::{IdentityBank, TileImage, TruthEntry};
use crate::embedding::Embedding;
use crate::seed;

const SYNTHETIC_DET_SCORE: f64 = 0.99;

/// Ground-truth driven backend.
///
/// Each visible student yields one detection whose embedding is the
/// student's true identity perturbed by isotropic Gaussian noise in the
/// tangent plane, then renormalized. Noise is seeded by
/// (scene seed, cycle, tile id, student id).
pub struct SyntheticBackend {
    bank: Arc<IdentityBank>,
    sigma: f64,
    forced: Mutex<HashMap<String, f64>>,
}

impl SyntheticBackend {
    pub fn new(bank: Arc<IdentityBank>, sigma: f64) -> Self {
        Self {
            bank,
            sigma: sigma.max(0.0),
            forced: Mutex::new(HashMap::new()),
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn bank(&self) -> &IdentityBank {
        &self.bank
    }

    /// Replace the noise model for one student: subsequent detections sit
    /// at exactly `cosine` from the true identity. Used to script spikes.
    pub fn force_similarity(&self, student_id: &str, cosine: f64) {
        self.forced.lock().unwrap().insert(student_id.to_string(), cosine);
    }

    pub fn clear_forced(&self) {
        self.forced.lock().unwrap().clear();
    }

    /// Noisy observation of `truth` with the configured sigma.
    pub fn observe<R: Rng + ?Sized>(&self, truth: &Embedding, rng: &mut R) -> Embedding {
        add_tangent_noise(truth, self.sigma, rng)
    }

    fn identity(&self, id: &str) -> Embedding {
        match self.bank.get(id) {
            Some(e) => e.clone(),
            // Not in the bank: a stranger with a stable random identity.
            None => Embedding::random(&mut ChaCha8Rng::seed_from_u64(seed::hash_str(id))),
        }
    }
}

/// `normalize(e + sigma * g_t)` with `g_t` an isotropic Gaussian projected
/// onto the tangent plane at `e`.
pub fn add_tangent_noise<R: Rng + ?Sized>(truth: &Embedding, sigma: f64, rng: &mut R) -> Embedding {
    if sigma == 0.0 {
        return truth.clone();
    }
    let e = truth.to_f64();
    let mut g: Vec<f64> = (0..e.len()).map(|_| rng.sample(StandardNormal)).collect();
    let along: f64 = g.iter().zip(&e).map(|(a, b)| a * b).sum();
    g.iter_mut().zip(&e).for_each(|(gi, ei)| *gi -= along * ei);
    let v: Vec<f64> = e.iter().zip(&g).map(|(ei, gi)| ei + sigma * gi).collect();
    Embedding::normalized(&v).expect("unit vector plus tangent offset is non-zero")
}

/// Canonical landmarks scaled to the unclipped face size with the nose on
/// the projected face center, then clamped into the (clipped) box.
pub fn synthetic_landmarks(entry: &TruthEntry) -> [[f64; 2]; 5] {
    let (sx, sy) = (entry.face_size.0 / 112.0, entry.face_size.1 / 112.0);
    let nose = CANONICAL_TEMPLATE_112[NOSE];
    let b = &entry.bbox;
    let mut out = [[0.0; 2]; 5];
    for (o, t) in out.iter_mut().zip(CANONICAL_TEMPLATE_112) {
        let x = entry.face_center.0 + (t[0] - nose[0]) * sx;
        let y = entry.face_center.1 + (t[1] - nose[1]) * sy;
        *o = [x.clamp(b.x, b.right()), y.clamp(b.y, b.bottom())];
    }
    out
}

impl VisionBackend for SyntheticBackend {
    fn detect_and_embed(&self, tile: &TileImage) -> Result<Vec<Detection>, BackendError> {
        let truth = tile.sim_truth.as_ref().ok_or_else(|| {
            BackendError::BackendUnavailable("synthetic backend requires simulated tiles".into())
        })?;
        let forced = self.forced.lock().unwrap().clone();
        Ok(truth
            .entries
            .iter()
            .map(|entry| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(&[
                    truth.scene_seed,
                    truth.cycle,
                    u64::from(tile.tile_id),
                    seed::hash_str(&entry.student_id),
                ]));
                let identity = self.identity(&entry.student_id);
                let embedding = match forced.get(&entry.student_id) {
                    Some(&cos) => identity.at_similarity(cos, &mut rng),
                    None => self.observe(&identity, &mut rng),
                };
                Detection {
                    bbox: entry.bbox,
                    landmarks: synthetic_landmarks(entry),
                    embedding,
                    det_score: SYNTHETIC_DET_SCORE,
                }
            })
            .collect())
    }
}
