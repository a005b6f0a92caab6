//! Counting baseline: independent binary perceptrons, one per level.
//!
//! Level `k >= 2` answers "is the rank at least `k`?" and the prediction
//! counts the levels that say yes, `sum_k 1[w_k.x >= 0]`. Level 1 is the
//! zero vector and always fires. Nothing forces the answers to be monotone
//! in `k`; [`consistency_violations`] finds the inputs where they are not.

use crate::engine::OnlineOptions;
use crate::error::{Error, Result};
use crate::prank::PRankModel;
use crate::types::{Rank, RankedDataset, WeightStack};
use crate::vector::axpy;

#[derive(Debug, Clone, PartialEq)]
pub struct CountingModel {
    weights: WeightStack,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountingFit {
    pub model: CountingModel,
    /// Mistakes made by each level's perceptron; entry `k - 1` is level `k`.
    pub mistakes: Vec<usize>,
    pub epochs_run: usize,
    pub converged: bool,
}

impl CountingModel {
    pub fn zeros(rank_count: usize, dim: usize) -> Self {
        Self { weights: WeightStack::zeros(rank_count, dim) }
    }

    /// Reuses any per-level stack as independent level perceptrons.
    pub fn from_weight_stack(weights: WeightStack) -> Self {
        Self { weights }
    }

    /// `w_k = (u, b_k)` for `k >= 2`, which answers `u.z >= b_k` on `(z, -1)`.
    pub fn from_prank(model: &PRankModel) -> Self {
        let m = model.input_dim();
        let r = model.rank_count();
        let mut flat = vec![0.0; m + 1];
        for &b in &model.thresholds()[1..] {
            flat.extend_from_slice(model.direction());
            flat.push(b);
        }
        let weights = WeightStack::from_flat(r, m + 1, flat).expect("layout built above");
        Self { weights }
    }

    pub fn weights(&self) -> &WeightStack {
        &self.weights
    }

    pub fn rank_count(&self) -> usize {
        self.weights.rank_count()
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.weights.dim() {
            return Err(Error::DimensionMismatch { expected: self.weights.dim(), found: x.len() });
        }
        Ok(())
    }

    /// `1[w_k.x >= 0]` for `k = 1..=r`.
    pub fn indicators(&self, x: &[f64]) -> Result<Vec<bool>> {
        self.check(x)?;
        Ok((1..=self.rank_count()).map(|k| self.weights.response(k, x) >= 0.0).collect())
    }

    pub fn predict(&self, x: &[f64]) -> Result<Rank> {
        Ok(self.indicators(x)?.into_iter().filter(|&b| b).count())
    }

    pub fn predict_all(&self, data: &RankedDataset) -> Result<Vec<Rank>> {
        data.iter().map(|ex| self.predict(&ex.features)).collect()
    }
}

/// Trains every level `k >= 2` as a separate perceptron on the targets
/// `+1` if `y >= k` else `-1`. Each epoch runs the levels one after the
/// other over the whole dataset.
pub fn fit_online(data: &RankedDataset, opts: &OnlineOptions) -> Result<CountingFit> {
    opts.validate()?;
    let r = data.rank_count();
    let mut model = CountingModel::zeros(r, data.dim());
    let mut mistakes = vec![0; r];
    let mut epochs_run = 0;
    let mut converged = false;
    for epoch in 0..opts.epochs {
        let mut epoch_mistakes = 0;
        for k in 2..=r {
            for ex in data {
                let target = if ex.rank >= k { 1.0 } else { -1.0 };
                let fires = model.weights.response(k, &ex.features) >= 0.0;
                if fires != (target > 0.0) {
                    axpy(target, &ex.features, model.weights.level_mut(k));
                    mistakes[k - 1] += 1;
                    epoch_mistakes += 1;
                }
            }
        }
        epochs_run = epoch + 1;
        if epoch_mistakes == 0 {
            converged = true;
            if opts.stop_when_converged {
                break;
            }
        }
    }
    Ok(CountingFit { model, mistakes, epochs_run, converged })
}

/// Indices of inputs whose level answers are not non-increasing in `k`,
/// i.e. some level says no while a higher one says yes.
pub fn consistency_violations(model: &CountingModel, data: &RankedDataset) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (i, ex) in data.iter().enumerate() {
        let ind = model.indicators(&ex.features)?;
        if ind.windows(2).any(|p| !p[0] && p[1]) {
            out.push(i);
        }
    }
    Ok(out)
}
