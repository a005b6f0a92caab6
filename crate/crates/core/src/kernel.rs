//! Kernelized cumulative-sum ranker with per-level dual coefficients.
//!
//! The primal level weights are `w_j = sum_i beta_{i,j} phi(x_i)`, so the
//! score of rank `k` is `sum_{j=2..k} sum_i beta_{i,j} K(x_i, x)`. A mistake
//! on example `i` adds `sign(y - yhat)` to `beta_{i,j}` over the same level
//! range the primal learner would touch. Level 1 never carries weight and is
//! not stored.

use crate::cusum::argmax_lowest;
use crate::engine::{Fitted, OnlineOptions, StepRecord, TrainTrace};
use crate::error::{Error, Result};
use crate::types::{Rank, RankedDataset};
use crate::vector::{dot, norm_sq, sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Linear,
    /// `(a.b + coef0)^degree`
    Polynomial {
        degree: u32,
        coef0: f64,
    },
    /// `exp(-gamma |a - b|^2)`
    Rbf {
        gamma: f64,
    },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => dot(a, b),
            Kernel::Polynomial { degree, coef0 } => (dot(a, b) + coef0).powi(degree as i32),
            Kernel::Rbf { gamma } => (-gamma * norm_sq(&sub(a, b))).exp(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Linear => Ok(()),
            Kernel::Polynomial { degree, coef0 } => {
                if degree == 0 || !coef0.is_finite() || coef0 < 0.0 {
                    Err(Error::InvalidParameter(format!(
                        "polynomial kernel needs degree >= 1 and coef0 >= 0, got ({degree}, {coef0})"
                    )))
                } else {
                    Ok(())
                }
            }
            Kernel::Rbf { gamma } => {
                if gamma.is_finite() && gamma > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!("rbf gamma must be positive, got {gamma}")))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportVector {
    /// Index of the training example this entry came from.
    pub index: usize,
    pub features: Vec<f64>,
    /// `beta_{i,k}` for levels `k = 2..=r`; entry `k - 2`.
    pub beta: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualCuSumModel {
    kernel: Kernel,
    rank_count: usize,
    dim: usize,
    support: Vec<SupportVector>,
}

impl DualCuSumModel {
    pub fn empty(kernel: Kernel, rank_count: usize, dim: usize) -> Self {
        Self { kernel, rank_count, dim, support: Vec::new() }
    }

    /// Rebuilds a model from stored support entries.
    pub fn from_support(kernel: Kernel, rank_count: usize, dim: usize, support: Vec<SupportVector>) -> Result<Self> {
        kernel.validate()?;
        if rank_count < 2 {
            return Err(Error::TooFewRanks(rank_count));
        }
        for sv in &support {
            if sv.features.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: sv.features.len() });
            }
            if sv.beta.len() != rank_count - 1 {
                return Err(Error::DimensionMismatch { expected: rank_count - 1, found: sv.beta.len() });
            }
        }
        Ok(Self { kernel, rank_count, dim, support })
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn rank_count(&self) -> usize {
        self.rank_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> &[SupportVector] {
        &self.support
    }

    /// Cumulative scores from the kernel values against each support entry.
    fn scores_from(&self, kvals: impl Fn(usize) -> f64) -> Result<Vec<f64>> {
        let mut level = vec![0.0; self.rank_count];
        for (s, sv) in self.support.iter().enumerate() {
            let kv = kvals(s);
            for (l, &b) in level[1..].iter_mut().zip(&sv.beta) {
                if b != 0 {
                    *l += b as f64 * kv;
                }
            }
        }
        let mut acc = 0.0;
        let scores: Vec<f64> = level
            .into_iter()
            .map(|g| {
                acc += g;
                acc
            })
            .collect();
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("kernel scores".into()));
        }
        Ok(scores)
    }

    /// Scores of ranks `1..=r`.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: x.len() });
        }
        self.scores_from(|s| self.kernel.eval(&self.support[s].features, x))
    }

    /// Best-scoring rank, ties to the lowest.
    pub fn predict(&self, x: &[f64]) -> Result<Rank> {
        Ok(argmax_lowest(&self.scores(x)?) + 1)
    }

    pub fn predict_all(&self, data: &RankedDataset) -> Result<Vec<Rank>> {
        data.iter().map(|ex| self.predict(&ex.features)).collect()
    }
}

/// Mistake-driven dual training. With `use_cache` the kernel row of every
/// support entry against the whole training set is computed once, when the
/// entry is created.
pub fn dual_fit_online(
    data: &RankedDataset,
    kernel: Kernel,
    opts: &OnlineOptions,
    use_cache: bool,
) -> Result<Fitted<DualCuSumModel>> {
    dual_fit_online_observed(data, kernel, opts, use_cache, |_, _| {})
}

/// [`dual_fit_online`] with a callback after every visit.
pub fn dual_fit_online_observed<F>(
    data: &RankedDataset,
    kernel: Kernel,
    opts: &OnlineOptions,
    use_cache: bool,
    mut observer: F,
) -> Result<Fitted<DualCuSumModel>>
where
    F: FnMut(&StepRecord, &DualCuSumModel),
{
    kernel.validate()?;
    opts.validate()?;
    let r = data.rank_count();
    let mut model = DualCuSumModel::empty(kernel, r, data.dim());
    let mut slot_of: Vec<Option<usize>> = vec![None; data.len()];
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut trace = TrainTrace::new();
    let mut visit = 0;
    let mut epochs_run = 0;
    let mut converged = false;

    for epoch in 0..opts.epochs {
        let mut mistakes = 0;
        for (index, ex) in data.iter().enumerate() {
            let (x, y) = (ex.features.as_slice(), ex.rank);
            let scores = if use_cache { model.scores_from(|s| rows[s][index])? } else { model.scores(x)? };
            let yhat = argmax_lowest(&scores) + 1;
            let mut step = 0.0;
            if yhat != y {
                mistakes += 1;
                step = opts.fault_sign(visit);
                let slot = match slot_of[index] {
                    Some(s) => s,
                    None => {
                        model.support.push(SupportVector { index, features: x.to_vec(), beta: vec![0; r - 1] });
                        if use_cache {
                            rows.push(data.iter().map(|other| kernel.eval(x, &other.features)).collect());
                        }
                        slot_of[index] = Some(model.support.len() - 1);
                        model.support.len() - 1
                    }
                };
                let delta = if (y > yhat) == (step > 0.0) { 1 } else { -1 };
                for k in y.min(yhat) + 1..=y.max(yhat) {
                    model.support[slot].beta[k - 2] += delta;
                }
            }
            trace.push(epoch, index, y, yhat, y.abs_diff(yhat) as f64, step);
            observer(trace.records().last().expect("just pushed"), &model);
            visit += 1;
        }
        epochs_run = epoch + 1;
        if mistakes == 0 {
            converged = true;
            if opts.stop_when_converged {
                break;
            }
        }
    }
    Ok(Fitted { model, trace, epochs_run, converged })
}
