//! Input domains, test points, random sampling and the distance metric.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ArtError, Result};

/// Source of uniform reals in `[0, 1)`.
///
/// Every random decision in the crate goes through this trait so a trial can
/// be replayed from its seed, and so tests can script exact draws.
pub trait RandomSource {
    fn next_unit(&mut self) -> f64;
}

impl<R: RngCore + ?Sized> RandomSource for R {
    fn next_unit(&mut self) -> f64 {
        // 53 random mantissa bits, same construction as rand's `StandardUniform`.
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Deterministic generator used for all trials.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Replays a fixed list of draws, cycling when exhausted.
#[derive(Debug, Clone)]
pub struct ScriptedSource {
    draws: Vec<f64>,
    pos: usize,
}

impl ScriptedSource {
    pub fn new(draws: Vec<f64>) -> Self {
        assert!(!draws.is_empty(), "scripted source needs at least one draw");
        ScriptedSource { draws, pos: 0 }
    }
}

impl RandomSource for ScriptedSource {
    fn next_unit(&mut self) -> f64 {
        let v = self.draws[self.pos % self.draws.len()];
        self.pos += 1;
        v
    }
}

/// A point of the input domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestPoint {
    coords: Vec<f64>,
}

impl TestPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(ArtError::InvalidPoint("point has no coordinates".into()));
        }
        if let Some(c) = coords.iter().find(|c| !c.is_finite()) {
            return Err(ArtError::InvalidPoint(format!("non-finite coordinate {c}")));
        }
        Ok(TestPoint { coords })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }
}

impl From<TestPoint> for Vec<f64> {
    fn from(p: TestPoint) -> Self {
        p.coords
    }
}

/// Closed interval on one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Hyper-rectangular input domain; bounds are closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDomain {
    bounds: Vec<Interval>,
}

impl InputDomain {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(ArtError::InvalidDomain("domain needs at least one dimension".into()));
        }
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(ArtError::InvalidDomain(format!(
                    "dimension {i}: expected finite lo < hi, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(InputDomain {
            bounds: bounds.into_iter().map(|(lo, hi)| Interval { lo, hi }).collect(),
        })
    }

    /// `[lo, hi]^dim`.
    pub fn hypercube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![(lo, hi); dim])
    }

    pub fn unit(dim: usize) -> Result<Self> {
        Self::hypercube(dim, 0.0, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[Interval] {
        &self.bounds
    }

    pub fn volume(&self) -> f64 {
        self.bounds.iter().map(Interval::width).product()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim() && p.iter().zip(&self.bounds).all(|(&x, b)| b.lo <= x && x <= b.hi)
    }

    /// Maps a point of the unit cube onto the domain.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.bounds)
            .map(|(&x, b)| (b.lo + x * b.width()).clamp(b.lo, b.hi))
            .collect()
    }

    /// Maps a domain point into unit-cube coordinates.
    pub fn to_unit(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(&self.bounds)
            .map(|(&x, b)| (x - b.lo) / b.width())
            .collect()
    }

    pub(crate) fn sample_into<R: RandomSource + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for (slot, b) in out.iter_mut().zip(&self.bounds) {
            *slot = (b.lo + rng.next_unit() * b.width()).clamp(b.lo, b.hi);
        }
    }
}

/// Draws a point uniformly from `domain`, one independent draw per dimension.
pub fn sample_uniform<R: RandomSource + ?Sized>(domain: &InputDomain, rng: &mut R) -> TestPoint {
    let mut coords = vec![0.0; domain.dim()];
    domain.sample_into(rng, &mut coords);
    TestPoint { coords }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[default]
    Euclidean,
}

impl Metric {
    pub fn distance(&self, a: &TestPoint, b: &TestPoint) -> Result<f64> {
        if a.dim() != b.dim() {
            return Err(ArtError::DimensionMismatch {
                expected: a.dim(),
                found: b.dim(),
            });
        }
        Ok(self.distance_raw(a.coords(), b.coords()))
    }

    /// Distance on raw slices of equal length.
    #[inline]
    pub fn distance_raw(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => squared_euclidean(a, b).sqrt(),
        }
    }

    /// A strictly increasing transform of the distance, cheaper to compute.
    /// Comparisons may use it in place of [`Metric::distance_raw`].
    #[inline]
    pub(crate) fn rank_key(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => squared_euclidean(a, b),
        }
    }

    #[inline]
    pub(crate) fn key_to_distance(&self, key: f64) -> f64 {
        match self {
            Metric::Euclidean => key.sqrt(),
        }
    }
}

#[inline]
pub(crate) fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    // Four independent accumulators so the sum is not one serial dependency chain.
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for i in 0..4 {
            let t = x[i] - y[i];
            acc[i] += t * t;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        let t = x - y;
        tail += t * t;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Euclidean distance between two points.
pub fn distance(metric: Metric, a: &TestPoint, b: &TestPoint) -> Result<f64> {
    metric.distance(a, b)
}
