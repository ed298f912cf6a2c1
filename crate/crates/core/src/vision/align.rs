//! Five-point similarity alignment.

use serde::{Deserialize, Serialize};

use super::BackendError;

/// Canonical landmark template for a 112x112 aligned crop:
/// left eye, right eye, nose, left mouth corner, right mouth corner.
pub const CANONICAL_TEMPLATE_112: [[f64; 2]; 5] = [
    [38.2946, 51.6963],
    [73.5318, 51.5014],
    [56.0252, 71.7366],
    [41.5493, 92.3655],
    [70.7299, 92.2041],
];
pub const ALIGNED_CROP_PX: u32 = 112;
pub const NOSE: usize = 2;

/// `p -> scale * R(rotation) * p + translation`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignTransform {
    pub scale: f64,
    pub rotation_deg: f64,
    pub translation: (f64, f64),
}

impl AlignTransform {
    pub fn identity() -> Self {
        Self { scale: 1.0, rotation_deg: 0.0, translation: (0.0, 0.0) }
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        [
            self.scale * (c * p[0] - s * p[1]) + self.translation.0,
            self.scale * (s * p[0] + c * p[1]) + self.translation.1,
        ]
    }

    /// Sum of squared distances between mapped `src` and `dst`.
    pub fn residual(&self, src: &[[f64; 2]; 5], dst: &[[f64; 2]; 5]) -> f64 {
        src.iter()
            .zip(dst)
            .map(|(p, q)| {
                let m = self.apply(*p);
                (m[0] - q[0]).powi(2) + (m[1] - q[1]).powi(2)
            })
            .sum()
    }
}

fn centroid(pts: &[[f64; 2]; 5]) -> [f64; 2] {
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(x, y), p| (x + p[0], y + p[1]));
    [sx / 5.0, sy / 5.0]
}

/// Least-squares similarity transform taking `landmarks` onto `template`.
pub fn compute_alignment(
    landmarks: &[[f64; 2]; 5],
    template: &[[f64; 2]; 5],
) -> Result<AlignTransform, BackendError> {
    if landmarks.iter().chain(template).flatten().any(|v| !v.is_finite()) {
        return Err(BackendError::DegenerateLandmarks);
    }
    let ls = centroid(landmarks);
    let ts = centroid(template);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    let (mut dot, mut cross) = (0.0, 0.0);
    for (l, t) in landmarks.iter().zip(template) {
        let (px, py) = (l[0] - ls[0], l[1] - ls[1]);
        let (qx, qy) = (t[0] - ts[0], t[1] - ts[1]);
        sxx += px * px;
        syy += py * py;
        sxy += px * py;
        dot += px * qx + py * qy;
        cross += px * qy - py * qx;
    }
    let spread = sxx + syy;
    // Collinear (or coincident) landmarks leave the covariance rank-deficient.
    if spread <= f64::EPSILON || sxx * syy - sxy * sxy <= 1e-12 * spread * spread {
        return Err(BackendError::DegenerateLandmarks);
    }
    let (a, b) = (dot / spread, cross / spread);
    let scale = a.hypot(b);
    if scale <= 0.0 {
        return Err(BackendError::DegenerateLandmarks);
    }
    let translation = (
        ts[0] - (a * ls[0] - b * ls[1]),
        ts[1] - (b * ls[0] + a * ls[1]),
    );
    Ok(AlignTransform {
        scale,
        rotation_deg: b.atan2(a).to_degrees(),
        translation,
    })
}
