//! Cumulative-sum rank prediction.
//!
//! Level `k` owns a perceptron `w_k`; the score of rank `k` is the running
//! sum `w_1.x + ... + w_k.x` and the prediction is the best-scoring rank.
//! [`fit_online`] and [`fit_pa`] are the direct learners; [`CuSumProblem`]
//! is the same model expressed through the generic structured engine.

use crate::engine::{Fitted, OnlineOptions, StepRecord, StructuredProblem, TrainTrace};
use crate::error::{Error, Result};
use crate::loss::LossFn;
use crate::types::{Rank, RankedDataset, WeightStack};
use crate::vector::{axpy, norm_sq};

#[derive(Debug, Clone, PartialEq)]
pub struct CuSumModel {
    weights: WeightStack,
}

impl CuSumModel {
    pub fn zeros(rank_count: usize, dim: usize) -> Self {
        Self { weights: WeightStack::zeros(rank_count, dim) }
    }

    pub fn from_weights(weights: WeightStack) -> Self {
        Self { weights }
    }

    pub fn weights(&self) -> &WeightStack {
        &self.weights
    }

    pub fn into_weights(self) -> WeightStack {
        self.weights
    }

    pub fn rank_count(&self) -> usize {
        self.weights.rank_count()
    }

    pub fn dim(&self) -> usize {
        self.weights.dim()
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        Ok(())
    }

    /// `sum_{j<=k} w_j.x`
    pub fn score(&self, x: &[f64], k: Rank) -> Result<f64> {
        self.check(x)?;
        if k < 1 || k > self.rank_count() {
            return Err(Error::RankOutOfRange { rank: k, rank_count: self.rank_count() });
        }
        Ok((1..=k).map(|j| self.weights.response(j, x)).sum())
    }

    /// Scores of ranks `1..=r`; entry `k - 1` holds the score of rank `k`.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let mut acc = 0.0;
        Ok((1..=self.rank_count())
            .map(|k| {
                acc += self.weights.response(k, x);
                acc
            })
            .collect())
    }

    /// Best-scoring rank, ties to the lowest.
    pub fn predict(&self, x: &[f64]) -> Result<Rank> {
        let scores = self.scores(x)?;
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::NonFinite("cumulative scores".into()));
        }
        Ok(argmax_lowest(&scores) + 1)
    }

    pub fn predict_all(&self, data: &RankedDataset) -> Result<Vec<Rank>> {
        data.iter().map(|ex| self.predict(&ex.features)).collect()
    }
}

/// Index of the first maximum.
pub(crate) fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Score built from signed per-level margins:
/// `sum_j sign(k - j) w_j.x` with `sign(0) = +1`, i.e. levels up to `k`
/// vote for and the rest against.
pub fn signed_sum_score(weights: &WeightStack, x: &[f64], k: Rank) -> f64 {
    (1..=weights.rank_count())
        .map(|j| {
            let s = if j <= k { 1.0 } else { -1.0 };
            s * weights.response(j, x)
        })
        .sum()
}

fn sign_of(y: Rank, yhat: Rank) -> f64 {
    if y > yhat {
        1.0
    } else {
        -1.0
    }
}

/// The mistake-driven learner: on `yhat != y` every level strictly above
/// `min(y, yhat)` and up to `max(y, yhat)` moves by `sign(y - yhat) x`.
pub fn fit_online(data: &RankedDataset, opts: &OnlineOptions) -> Result<Fitted<CuSumModel>> {
    fit_online_observed(data, opts, |_, _| {})
}

/// [`fit_online`] with a callback after every visit.
pub fn fit_online_observed<F>(data: &RankedDataset, opts: &OnlineOptions, observer: F) -> Result<Fitted<CuSumModel>>
where
    F: FnMut(&StepRecord, &CuSumModel),
{
    run(data, opts, |_, _, _, _| Ok(1.0), observer)
}

/// Passive-aggressive variant with known margin `delta`: on a mistake the
/// levels in the update range move by `rho x`, with
/// `rho = (sign(y - yhat) delta - wbar.x) / (|y - yhat| |x|^2)` and `wbar`
/// the sum of those levels. The trace records `rho * sign(y - yhat)`.
pub fn fit_pa(data: &RankedDataset, delta: f64, opts: &OnlineOptions) -> Result<Fitted<CuSumModel>> {
    fit_pa_observed(data, delta, opts, |_, _| {})
}

/// [`fit_pa`] with a callback after every visit.
pub fn fit_pa_observed<F>(
    data: &RankedDataset,
    delta: f64,
    opts: &OnlineOptions,
    observer: F,
) -> Result<Fitted<CuSumModel>>
where
    F: FnMut(&StepRecord, &CuSumModel),
{
    LossFn::ScaledZeroOne(delta).validate()?;
    run(
        data,
        opts,
        |w, x, y, yhat| {
            let (lo, hi) = (y.min(yhat), y.max(yhat));
            let xx = norm_sq(x);
            if xx == 0.0 {
                return Err(Error::ZeroFeatureDifference);
            }
            let wbar_x: f64 = (lo + 1..=hi).map(|j| w.response(j, x)).sum();
            let sign = sign_of(y, yhat);
            let rho = (sign * delta - wbar_x) / ((hi - lo) as f64 * xx);
            Ok(rho * sign)
        },
        observer,
    )
}

/// Shared loop; `step` returns the multiplier of `sign(y - yhat) x`.
fn run<F, G>(data: &RankedDataset, opts: &OnlineOptions, mut step: F, mut observer: G) -> Result<Fitted<CuSumModel>>
where
    F: FnMut(&WeightStack, &[f64], Rank, Rank) -> Result<f64>,
    G: FnMut(&StepRecord, &CuSumModel),
{
    opts.validate()?;
    let mut model = CuSumModel::zeros(data.rank_count(), data.dim());
    let mut trace = TrainTrace::new();
    let mut visit = 0;
    let mut epochs_run = 0;
    let mut converged = false;
    for epoch in 0..opts.epochs {
        let mut mistakes = 0;
        for (index, ex) in data.iter().enumerate() {
            let (x, y) = (ex.features.as_slice(), ex.rank);
            let yhat = model.predict(x)?;
            let mut recorded = 0.0;
            if yhat != y {
                mistakes += 1;
                let s = step(&model.weights, x, y, yhat)? * opts.fault_sign(visit);
                let alpha = s * sign_of(y, yhat);
                for k in y.min(yhat) + 1..=y.max(yhat) {
                    axpy(alpha, x, model.weights.level_mut(k));
                }
                recorded = s;
            }
            trace.push(epoch, index, y, yhat, y.abs_diff(yhat) as f64, recorded);
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

/// The cumulative-sum ranker as a structured problem over `r * d` weights,
/// with `Phi(x, y) = (x, ..., x, 0, ..., 0)`: `y` copies of `x` followed by
/// `r - y` zero blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CuSumProblem {
    pub rank_count: usize,
    pub input_dim: usize,
}

impl CuSumProblem {
    pub fn new(rank_count: usize, input_dim: usize) -> Self {
        Self { rank_count, input_dim }
    }

    pub fn for_dataset(data: &RankedDataset) -> Self {
        Self::new(data.rank_count(), data.dim())
    }
}

impl StructuredProblem for CuSumProblem {
    fn dim(&self) -> usize {
        self.rank_count * self.input_dim
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn feasible_outputs(&self, _x: &[f64]) -> Vec<Rank> {
        (1..=self.rank_count).collect()
    }

    fn feature_map(&self, x: &[f64], y: Rank) -> Vec<f64> {
        let d = self.input_dim;
        let mut phi = vec![0.0; self.dim()];
        for block in phi.chunks_exact_mut(d).take(y) {
            block.copy_from_slice(x);
        }
        phi
    }
}
