//! Domain types: ranked examples, datasets and per-level weight stacks.
//!
//! Ranks are 1-based everywhere (`1..=rank_count`). Every feature vector
//! carries a trailing constant `-1` so that per-level biases live inside the
//! weight vectors.

use crate::error::{Error, Result};
use crate::vector::{dot, norm, norm_sq};

/// A 1-based ordinal label.
pub type Rank = usize;

/// Bias value expected in the last feature slot.
pub const BIAS: f64 = -1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RankedExample {
    pub features: Vec<f64>,
    pub rank: Rank,
}

impl RankedExample {
    pub fn new(features: Vec<f64>, rank: Rank) -> Self {
        Self { features, rank }
    }

    /// Builds an example from the non-bias part `z`, appending the `-1`.
    pub fn from_unbiased(z: &[f64], rank: Rank) -> Self {
        let mut features = Vec::with_capacity(z.len() + 1);
        features.extend_from_slice(z);
        features.push(BIAS);
        Self { features, rank }
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    /// The features without the trailing bias component.
    pub fn unbiased(&self) -> &[f64] {
        &self.features[..self.features.len() - 1]
    }
}

/// An ordered, validated collection of ranked examples.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedDataset {
    examples: Vec<RankedExample>,
    rank_count: usize,
    dim: usize,
}

impl RankedDataset {
    /// Validates shape, rank range and the bias convention.
    pub fn new(examples: Vec<RankedExample>, rank_count: usize) -> Result<Self> {
        if rank_count < 2 {
            return Err(Error::TooFewRanks(rank_count));
        }
        let dim = examples.first().ok_or(Error::Empty)?.dim();
        if dim == 0 {
            return Err(Error::InvalidParameter("feature vectors must not be empty".into()));
        }
        for (index, ex) in examples.iter().enumerate() {
            if ex.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: ex.dim() });
            }
            if ex.rank < 1 || ex.rank > rank_count {
                return Err(Error::RankOutOfRange { rank: ex.rank, rank_count });
            }
            let last = ex.features[dim - 1];
            if last != BIAS {
                return Err(Error::MissingBias { index, found: last });
            }
            if ex.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("features of example {index}")));
            }
        }
        Ok(Self { examples, rank_count, dim })
    }

    pub fn examples(&self) -> &[RankedExample] {
        &self.examples
    }

    pub fn iter(&self) -> std::slice::Iter<'_, RankedExample> {
        self.examples.iter()
    }

    pub fn get(&self, index: usize) -> Option<&RankedExample> {
        self.examples.get(index)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn rank_count(&self) -> usize {
        self.rank_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ranks(&self) -> Vec<Rank> {
        self.examples.iter().map(|e| e.rank).collect()
    }

    /// Largest Euclidean norm of a feature vector (bias included).
    pub fn radius(&self) -> f64 {
        self.examples.iter().map(|e| norm(&e.features)).fold(0.0, f64::max)
    }

    /// Largest norm of the non-bias part of a feature vector.
    pub fn unbiased_radius(&self) -> f64 {
        self.examples.iter().map(|e| norm(e.unbiased())).fold(0.0, f64::max)
    }

    /// Examples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let examples = indices
            .iter()
            .map(|&i| {
                self.examples.get(i).cloned().ok_or_else(|| Error::InvalidParameter(format!("index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(examples, self.rank_count)
    }
}

impl<'a> IntoIterator for &'a RankedDataset {
    type Item = &'a RankedExample;
    type IntoIter = std::slice::Iter<'a, RankedExample>;

    fn into_iter(self) -> Self::IntoIter {
        self.examples.iter()
    }
}

/// The `r` per-level weight vectors `w_1..w_r`, stored level-major.
///
/// Level 1 is the zero vector at all times: no mutable access to it is
/// handed out.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStack {
    rank_count: usize,
    dim: usize,
    data: Vec<f64>,
}

impl WeightStack {
    pub fn zeros(rank_count: usize, dim: usize) -> Self {
        Self { rank_count, dim, data: vec![0.0; rank_count * dim] }
    }

    /// Builds a stack from explicit levels; the first level must be zero.
    pub fn from_levels(levels: Vec<Vec<f64>>) -> Result<Self> {
        let rank_count = levels.len();
        if rank_count < 2 {
            return Err(Error::TooFewRanks(rank_count));
        }
        let dim = levels[0].len();
        let mut data = Vec::with_capacity(rank_count * dim);
        for level in &levels {
            if level.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: level.len() });
            }
            data.extend_from_slice(level);
        }
        Self::from_flat(rank_count, dim, data)
    }

    /// Builds a stack from the flat `r*d` layout used by the structured engine.
    pub fn from_flat(rank_count: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if rank_count < 2 {
            return Err(Error::TooFewRanks(rank_count));
        }
        if data.len() != rank_count * dim {
            return Err(Error::DimensionMismatch { expected: rank_count * dim, found: data.len() });
        }
        if data[..dim].iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidParameter("level 1 weights must be zero".into()));
        }
        Ok(Self { rank_count, dim, data })
    }

    pub fn rank_count(&self) -> usize {
        self.rank_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Weights of level `k` (1-based).
    pub fn level(&self, k: Rank) -> &[f64] {
        assert!(k >= 1 && k <= self.rank_count, "level {k} out of range");
        &self.data[(k - 1) * self.dim..k * self.dim]
    }

    /// Mutable weights of level `k`; level 1 is pinned to zero and refused.
    pub fn level_mut(&mut self, k: Rank) -> &mut [f64] {
        assert!(k >= 2 && k <= self.rank_count, "level {k} is not trainable");
        &mut self.data[(k - 1) * self.dim..k * self.dim]
    }

    /// `w_k . x`
    pub fn response(&self, k: Rank, x: &[f64]) -> f64 {
        dot(self.level(k), x)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }

    pub fn norm(&self) -> f64 {
        norm_sq(&self.data).sqrt()
    }

    /// Multiplies every level by `factor`.
    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }
}
