use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RmsError};

/// Smallest norm accepted by [`normalize`].
pub const MIN_NORM: f64 = 1e-12;

/// A unit-norm vector on the sphere.
///
/// Deserializing from a plain array renormalizes, so configs may write
/// rounded coordinates such as `[0.57735, -0.57735, 0.57735]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Direction(Vec<f64>);

impl Direction {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Antipodal direction.
    pub fn flipped(&self) -> Direction {
        Direction(self.0.iter().map(|x| -x).collect())
    }

    /// Cosine of the angle to `other`, clamped to [-1, 1].
    pub fn cos_angle(&self, other: &Direction) -> f64 {
        dot(&self.0, &other.0).clamp(-1.0, 1.0)
    }

    /// Unit vector along coordinate axis `k`.
    pub fn axis(dim: usize, k: usize) -> Direction {
        let mut v = vec![0.0; dim];
        v[k] = 1.0;
        Direction(v)
    }
}

impl Deref for Direction {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Direction {
    type Error = RmsError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        // already unit: keep bits so serialized estimates round-trip exactly
        if (norm(&v) - 1.0).abs() <= 4.0 * f64::EPSILON {
            return Ok(Direction(v));
        }
        normalize(&v)
    }
}

impl From<Direction> for Vec<f64> {
    fn from(d: Direction) -> Vec<f64> {
        d.0
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Project `v` onto the unit sphere.
pub fn normalize(v: &[f64]) -> Result<Direction> {
    let n = norm(v);
    if !n.is_finite() || n <= MIN_NORM {
        return Err(RmsError::ZeroVector(n));
    }
    Ok(Direction(v.iter().map(|x| x / n).collect()))
}
