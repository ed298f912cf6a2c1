//! Unit-norm face identity vectors.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const EMBEDDING_DIM: usize = 128;
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("embedding must have {EMBEDDING_DIM} components, got {0}")]
    Dimension(usize),
    #[error("embedding has non-finite components")]
    NonFinite,
    #[error("embedding norm {0} is not 1 within {UNIT_NORM_TOLERANCE}")]
    NotUnit(f64),
    #[error("cannot normalize a zero vector")]
    Zero,
}

/// A 128-dimensional unit vector.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f32>", into = "Vec<f32>")]
pub struct Embedding(Vec<f32>);

impl Embedding {
    /// Wraps an already unit-norm vector.
    pub fn new(v: Vec<f32>) -> Result<Self, EmbeddingError> {
        check_shape(&v)?;
        let n = norm(&v);
        if (n - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(EmbeddingError::NotUnit(n));
        }
        Ok(Self(v))
    }

    /// Scales an arbitrary non-zero vector to unit length.
    pub fn normalized(v: &[f64]) -> Result<Self, EmbeddingError> {
        if v.len() != EMBEDDING_DIM {
            return Err(EmbeddingError::Dimension(v.len()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(EmbeddingError::Zero);
        }
        Ok(Self(v.iter().map(|x| (x / n) as f32).collect()))
    }

    /// Uniformly random direction.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let v: Vec<f64> = (0..EMBEDDING_DIM).map(|_| rng.sample(StandardNormal)).collect();
            if let Ok(e) = Self::normalized(&v) {
                return e;
            }
        }
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&x| f64::from(x)).collect()
    }

    /// Dot product accumulated in f64.
    pub fn dot(&self, other: &Embedding) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    /// Random unit vector at exactly `cos` similarity to `self` (up to f32 rounding).
    pub fn at_similarity<R: Rng + ?Sized>(&self, cos: f64, rng: &mut R) -> Self {
        let base = self.to_f64();
        let tangent = random_tangent(&base, rng);
        let sin = (1.0 - cos * cos).max(0.0).sqrt();
        let v: Vec<f64> = base
            .iter()
            .zip(&tangent)
            .map(|(b, t)| cos * b + sin * t)
            .collect();
        Self::normalized(&v).expect("combination of orthonormal vectors is non-zero")
    }
}

impl TryFrom<Vec<f32>> for Embedding {
    type Error = EmbeddingError;

    fn try_from(v: Vec<f32>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<Embedding> for Vec<f32> {
    fn from(e: Embedding) -> Self {
        e.0
    }
}

impl fmt::Debug for Embedding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Embedding([{:.4}, {:.4}, ..; {}])", self.0[0], self.0[1], self.0.len())
    }
}

fn check_shape(v: &[f32]) -> Result<(), EmbeddingError> {
    if v.len() != EMBEDDING_DIM {
        return Err(EmbeddingError::Dimension(v.len()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(EmbeddingError::NonFinite);
    }
    Ok(())
}

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

/// Unit vector orthogonal to the unit vector `base`.
pub(crate) fn random_tangent<R: Rng + ?Sized>(base: &[f64], rng: &mut R) -> Vec<f64> {
    loop {
        let mut g: Vec<f64> = (0..base.len()).map(|_| rng.sample(StandardNormal)).collect();
        let along: f64 = g.iter().zip(base).map(|(a, b)| a * b).sum();
        for (gi, bi) in g.iter_mut().zip(base) {
            *gi -= along * bi;
        }
        let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            g.iter_mut().for_each(|x| *x /= n);
            return g;
        }
    }
}
