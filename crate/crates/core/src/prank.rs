//! PRank: one shared direction `u` and ordered thresholds `b`.
//!
//! The prediction is `max { y : u.z >= b_y }` with `b_1 = -inf`, where `z`
//! is the input without its bias component. [`PRankProblem`] expresses the
//! same learner through the structured engine with
//! `Phi(x, y) = (y z, -1, ..., -1, 0, ..., 0)` (`y` entries of `-1`).

use crate::engine::{Fitted, OnlineOptions, StepRecord, StructuredProblem, TieBreak, TrainTrace};
use crate::error::{Error, Result};
use crate::types::{Rank, RankedDataset};
use crate::vector::{axpy, dot};
use crate::TOLERANCE;

#[derive(Debug, Clone, PartialEq)]
pub struct PRankModel {
    direction: Vec<f64>,
    /// `b_1..b_r`; `b_1` is always `-inf`.
    thresholds: Vec<f64>,
}

fn is_sorted(b: &[f64]) -> bool {
    b.windows(2).all(|p| p[0] <= p[1])
}

impl PRankModel {
    /// `u = 0`, `b = (-inf, 0, ..., 0)`.
    pub fn zeros(input_dim: usize, rank_count: usize) -> Self {
        let mut thresholds = vec![0.0; rank_count];
        thresholds[0] = f64::NEG_INFINITY;
        Self { direction: vec![0.0; input_dim], thresholds }
    }

    /// Builds a model from `u` and the finite thresholds `b_2..b_r`.
    pub fn from_parts(direction: Vec<f64>, upper_thresholds: &[f64]) -> Result<Self> {
        if upper_thresholds.is_empty() {
            return Err(Error::TooFewRanks(1));
        }
        if !is_sorted(upper_thresholds) {
            return Err(Error::UnsortedThresholds);
        }
        if direction.iter().chain(upper_thresholds).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("PRank parameters".into()));
        }
        let mut thresholds = Vec::with_capacity(upper_thresholds.len() + 1);
        thresholds.push(f64::NEG_INFINITY);
        thresholds.extend_from_slice(upper_thresholds);
        Ok(Self { direction, thresholds })
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    /// All thresholds including the `-inf` sentinel.
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn rank_count(&self) -> usize {
        self.thresholds.len()
    }

    /// Length of `z` (the input without the bias).
    pub fn input_dim(&self) -> usize {
        self.direction.len()
    }

    pub fn thresholds_sorted(&self) -> bool {
        is_sorted(&self.thresholds)
    }

    fn project(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), found: z.len() });
        }
        let a = dot(&self.direction, z);
        if a.is_nan() {
            return Err(Error::NonFinite("projection".into()));
        }
        Ok(a)
    }

    /// Binary search over the ordered thresholds.
    pub fn predict(&self, z: &[f64]) -> Result<Rank> {
        let a = self.project(z)?;
        Ok(self.thresholds.partition_point(|&b| b <= a))
    }

    /// Linear scan over all ranks, kept as a reference.
    pub fn predict_linear(&self, z: &[f64]) -> Result<Rank> {
        let a = self.project(z)?;
        Ok((1..=self.rank_count()).filter(|&y| a >= self.thresholds[y - 1]).max().unwrap_or(1))
    }

    /// Predicts from a biased feature vector `(z, -1)`.
    pub fn predict_features(&self, x: &[f64]) -> Result<Rank> {
        let z = x.split_last().map(|(_, z)| z).unwrap_or(&[]);
        self.predict(z)
    }

    pub fn predict_all(&self, data: &RankedDataset) -> Result<Vec<Rank>> {
        data.iter().map(|ex| self.predict(ex.unbiased())).collect()
    }

    /// Engine weight layout `(u, b_1 slot, b_2, ..., b_r)` with the `b_1`
    /// slot stored as 0.
    pub fn to_structured(&self) -> Vec<f64> {
        let mut w = self.direction.clone();
        w.push(0.0);
        w.extend_from_slice(&self.thresholds[1..]);
        w
    }

    /// Inverse of [`PRankModel::to_structured`].
    pub fn from_structured(w: &[f64], input_dim: usize) -> Result<Self> {
        if w.len() < input_dim + 2 {
            return Err(Error::DimensionMismatch { expected: input_dim + 2, found: w.len() });
        }
        Self::from_parts(w[..input_dim].to_vec(), &w[input_dim + 1..])
    }
}

/// The perceptron-style learner: on a mistake `u += (y - yhat) z` and
/// `b_k -= sign(y - yhat)` for `k = min(y, yhat) + 1 ..= max(y, yhat)`.
pub fn fit_online(data: &RankedDataset, opts: &OnlineOptions) -> Result<Fitted<PRankModel>> {
    fit_online_observed(data, opts, |_, _| {})
}

/// [`fit_online`] with a callback after every visit.
pub fn fit_online_observed<F>(data: &RankedDataset, opts: &OnlineOptions, mut observer: F) -> Result<Fitted<PRankModel>>
where
    F: FnMut(&StepRecord, &PRankModel),
{
    opts.validate()?;
    let mut model = PRankModel::zeros(data.dim() - 1, data.rank_count());
    let mut trace = TrainTrace::new();
    let mut visit = 0;
    let mut epochs_run = 0;
    let mut converged = false;
    for epoch in 0..opts.epochs {
        let mut mistakes = 0;
        for (index, ex) in data.iter().enumerate() {
            let (z, y) = (ex.unbiased(), ex.rank);
            let yhat = model.predict(z)?;
            let mut step = 0.0;
            if yhat != y {
                mistakes += 1;
                step = opts.fault_sign(visit);
                let diff = (y as f64 - yhat as f64) * step;
                axpy(diff, z, &mut model.direction);
                let sign = diff.signum();
                for k in y.min(yhat) + 1..=y.max(yhat) {
                    model.thresholds[k - 1] -= sign;
                }
                debug_assert!(model.thresholds_sorted(), "thresholds out of order after visit {visit}");
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

/// Checks `b_y + delta <= u.z <= b_{y+1} - delta` for every example (the
/// upper side is skipped for the top rank), up to [`TOLERANCE`].
/// `upper_thresholds` holds `b_2..b_r`.
pub fn prank_margin_check(
    data: &RankedDataset,
    direction: &[f64],
    upper_thresholds: &[f64],
    delta: f64,
) -> Result<bool> {
    if !is_sorted(upper_thresholds) {
        return Err(Error::UnsortedThresholds);
    }
    if upper_thresholds.len() + 1 != data.rank_count() {
        return Err(Error::DimensionMismatch { expected: data.rank_count() - 1, found: upper_thresholds.len() });
    }
    if direction.len() + 1 != data.dim() {
        return Err(Error::DimensionMismatch { expected: data.dim() - 1, found: direction.len() });
    }
    let b = |y: Rank| if y == 1 { f64::NEG_INFINITY } else { upper_thresholds[y - 2] };
    Ok(data.iter().all(|ex| {
        let a = dot(direction, ex.unbiased());
        let y = ex.rank;
        let low = b(y) + delta <= a + TOLERANCE;
        let high = y == data.rank_count() || a <= b(y + 1) - delta + TOLERANCE;
        low && high
    }))
}

/// PRank as a structured problem over `(u, b_1..b_r)`.
///
/// Ties go to the highest rank so that decoding agrees with
/// `max { y : u.z >= b_y }`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PRankProblem {
    pub rank_count: usize,
    /// Length of the biased input `x = (z, -1)`.
    pub input_dim: usize,
}

impl PRankProblem {
    pub fn new(rank_count: usize, input_dim: usize) -> Self {
        Self { rank_count, input_dim }
    }

    pub fn for_dataset(data: &RankedDataset) -> Self {
        Self::new(data.rank_count(), data.dim())
    }
}

impl StructuredProblem for PRankProblem {
    fn dim(&self) -> usize {
        self.input_dim - 1 + self.rank_count
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn feasible_outputs(&self, _x: &[f64]) -> Vec<Rank> {
        (1..=self.rank_count).collect()
    }

    fn feature_map(&self, x: &[f64], y: Rank) -> Vec<f64> {
        let m = self.input_dim - 1;
        let mut phi = vec![0.0; self.dim()];
        for (p, z) in phi.iter_mut().zip(&x[..m]) {
            *p = y as f64 * z;
        }
        for p in &mut phi[m..m + y] {
            *p = -1.0;
        }
        phi
    }

    fn tie_break(&self) -> TieBreak {
        TieBreak::Highest
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{predict as sp_predict, StructuredProblem};
    use crate::types::RankedExample;
    use proptest::prelude::*;

    #[test]
    fn zero_direction_predicts_top_rank_on_ties() {
        let m = PRankModel::from_parts(vec![0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(m.predict(&[1.0, 1.0]).unwrap(), 3);
        let m = PRankModel::from_parts(vec![0.0, 0.0], &[1.0, 2.0]).unwrap();
        assert_eq!(m.predict(&[5.0, -7.0]).unwrap(), 1);
    }

    #[test]
    fn one_step_update() {
        let data = RankedDataset::new(vec![RankedExample::from_unbiased(&[1.0, 1.0], 1)], 3).unwrap();
        let fit = fit_online(&data, &OnlineOptions::with_epochs(1)).unwrap();
        assert_eq!(fit.trace.records()[0].predicted, 3);
        assert_eq!(fit.model.direction(), &[-2.0, -2.0]);
        assert_eq!(&fit.model.thresholds()[1..], &[1.0, 1.0]);
        assert_eq!(fit.model.thresholds()[0], f64::NEG_INFINITY);
    }

    #[test]
    fn correct_prediction_changes_nothing() {
        // zero model predicts the top rank
        let data = RankedDataset::new(vec![RankedExample::from_unbiased(&[0.4, 2.0], 3)], 3).unwrap();
        let fit = fit_online(&data, &OnlineOptions::with_epochs(1)).unwrap();
        assert_eq!(fit.model, PRankModel::zeros(2, 3));
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(PRankModel::from_parts(vec![1.0], &[2.0, 1.0]), Err(Error::UnsortedThresholds)));
        let m = PRankModel::zeros(2, 3);
        assert!(matches!(m.predict(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn margin_check() {
        let ex = |z: f64, y| RankedExample::from_unbiased(&[z], y);
        let data = RankedDataset::new(vec![ex(-1.0, 1), ex(0.5, 2), ex(2.0, 3)], 3).unwrap();
        assert!(prank_margin_check(&data, &[1.0], &[0.0, 1.0], 0.5).unwrap());
        assert!(!prank_margin_check(&data, &[1.0], &[0.0, 1.0], 0.51).unwrap());
        assert!(matches!(prank_margin_check(&data, &[1.0], &[1.0, 0.0], 0.1), Err(Error::UnsortedThresholds)));
    }

    #[test]
    fn two_ranks_match_a_binary_perceptron() {
        let pts = [([0.3, -1.2], 1), ([1.0, 0.7], 2), ([-0.4, 0.1], 1), ([2.0, 0.0], 2), ([0.1, 0.1], 2)];
        let data =
            RankedDataset::new(pts.iter().map(|(z, y)| RankedExample::from_unbiased(z, *y)).collect(), 2).unwrap();
        let fit =
            fit_online(&data, &OnlineOptions { epochs: 20, stop_when_converged: false, sign_fault: None }).unwrap();

        // standalone perceptron on (z, -1) with labels +-1, predicting +1 on v.x >= 0
        let mut v = [0.0f64; 3];
        let mut preds = Vec::new();
        for _ in 0..20 {
            for ex in &data {
                let s = dot(&v, &ex.features);
                let guess = if s >= 0.0 { 1.0 } else { -1.0 };
                let truth = if ex.rank == 2 { 1.0 } else { -1.0 };
                preds.push(if guess > 0.0 { 2 } else { 1 });
                if guess != truth {
                    axpy(truth, &ex.features, &mut v);
                }
            }
        }
        assert_eq!(fit.trace.predictions(), preds);
        assert_eq!(fit.model.direction(), &v[..2]);
        assert_eq!(fit.model.thresholds()[1], v[2]);
    }

    fn model_strategy() -> impl Strategy<Value = (PRankModel, Vec<f64>)> {
        (2usize..7, 1usize..5).prop_flat_map(|(r, m)| {
            (
                proptest::collection::vec(-2.0f64..2.0, m),
                proptest::collection::vec(-3.0f64..3.0, r - 1),
                proptest::collection::vec(-2.0f64..2.0, m),
            )
                .prop_map(|(u, mut b, z)| {
                    b.sort_by(f64::total_cmp);
                    (PRankModel::from_parts(u, &b).unwrap(), z)
                })
        })
    }

    proptest! {
        #[test]
        fn binary_search_matches_linear_scan((m, z) in model_strategy()) {
            prop_assert_eq!(m.predict(&z).unwrap(), m.predict_linear(&z).unwrap());
        }

        #[test]
        fn structured_argmax_matches_threshold_rule((m, z) in model_strategy()) {
            let mut x = z.clone();
            x.push(-1.0);
            let p = PRankProblem::new(m.rank_count(), x.len());
            let w = m.to_structured();
            prop_assert_eq!(w.len(), p.dim());
            prop_assert_eq!(sp_predict(&p, &w, &x).unwrap(), m.predict(&z).unwrap());
            prop_assert_eq!(PRankModel::from_structured(&w, z.len()).unwrap(), m);
        }

        #[test]
        fn thresholds_stay_sorted(ranks in proptest::collection::vec(1usize..6, 1..30), phase in 0.0f64..6.0) {
            let examples: Vec<_> = ranks.iter().enumerate().map(|(i, &y)| {
                let t = i as f64 + phase;
                RankedExample::from_unbiased(&[t.sin(), t.cos()], y)
            }).collect();
            let data = RankedDataset::new(examples, 5).unwrap();
            let mut violations = 0;
            fit_online_observed(&data, &OnlineOptions::with_epochs(10), |_, m| {
                if !m.thresholds_sorted() { violations += 1; }
            }).unwrap();
            prop_assert_eq!(violations, 0);
        }
    }

    #[test]
    fn feature_map_layout() {
        let p = PRankProblem::new(4, 3);
        assert_eq!(p.feature_map(&[2.0, 3.0, -1.0], 2), vec![4.0, 6.0, -1.0, -1.0, 0.0, 0.0]);
    }
}
