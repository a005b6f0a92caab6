//! The online structured perceptron.
//!
//! A [`StructuredProblem`] supplies the four pluggable pieces of the
//! framework: the weight dimension, the feasible outputs `Y(x)`, the joint
//! feature map `Phi(x, y)` and the argmax solver. [`train_online`] runs the
//! mistake-driven loop with either the vanilla update or the loss-sensitive
//! passive-aggressive step, optional margin-rescaled decoding, optional
//! shrinkage and optional weight averaging.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::loss::{absolute_loss, LossFn};
use crate::types::{Rank, RankedDataset};
use crate::vector::{axpy, dot, norm_sq, sub};

/// Which maximiser wins when several outputs share the top score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieBreak {
    Lowest,
    Highest,
}

/// Loss term added to the score during training-time decoding:
/// `argmax_k w.Phi(x, k) + scale * loss(truth, k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostAugment {
    pub loss: LossFn,
    pub scale: f64,
    pub truth: Rank,
}

pub trait StructuredProblem {
    /// Length of the joint feature map (and of the weight vector).
    fn dim(&self) -> usize;

    /// Expected input length.
    fn input_dim(&self) -> usize;

    /// Feasible outputs for `x`, in ascending order.
    fn feasible_outputs(&self, x: &[f64]) -> Vec<Rank>;

    fn feature_map(&self, x: &[f64], y: Rank) -> Vec<f64>;

    fn tie_break(&self) -> TieBreak {
        TieBreak::Lowest
    }

    fn score(&self, w: &[f64], x: &[f64], y: Rank) -> f64 {
        dot(w, &self.feature_map(x, y))
    }

    /// `Phi(x, y) - Phi(x, yhat)`
    fn feature_difference(&self, x: &[f64], y: Rank, yhat: Rank) -> Vec<f64> {
        sub(&self.feature_map(x, y), &self.feature_map(x, yhat))
    }

    /// `w += scale * (Phi(x, y) - Phi(x, yhat))`
    fn add_scaled_difference(&self, w: &mut [f64], x: &[f64], y: Rank, yhat: Rank, scale: f64) {
        axpy(scale, &self.feature_difference(x, y, yhat), w);
    }

    /// Solves the (optionally cost-augmented) prediction problem.
    fn argmax(&self, w: &[f64], x: &[f64], augment: Option<&CostAugment>) -> Result<Rank> {
        brute_force_argmax(self, w, x, augment)
    }
}

/// Exhaustive maximisation over `feasible_outputs(x)` honouring the
/// problem's tie rule.
pub fn brute_force_argmax<P: StructuredProblem + ?Sized>(
    problem: &P,
    w: &[f64],
    x: &[f64],
    augment: Option<&CostAugment>,
) -> Result<Rank> {
    let tie = problem.tie_break();
    let mut best: Option<(Rank, f64)> = None;
    for y in problem.feasible_outputs(x) {
        let mut s = problem.score(w, x, y);
        if let Some(aug) = augment {
            s += aug.scale * aug.loss.eval(aug.truth, y);
        }
        if s.is_nan() {
            return Err(Error::NonFinite(format!("score of output {y}")));
        }
        let better = match best {
            None => true,
            Some((by, bs)) => {
                s > bs
                    || (s == bs
                        && match tie {
                            TieBreak::Lowest => y < by,
                            TieBreak::Highest => y > by,
                        })
            }
        };
        if better {
            best = Some((y, s));
        }
    }
    best.map(|(y, _)| y).ok_or(Error::NoFeasibleOutput)
}

fn check_dims<P: StructuredProblem + ?Sized>(problem: &P, w: &[f64], x: &[f64]) -> Result<()> {
    if w.len() != problem.dim() {
        return Err(Error::DimensionMismatch { expected: problem.dim(), found: w.len() });
    }
    if x.len() != problem.input_dim() {
        return Err(Error::DimensionMismatch { expected: problem.input_dim(), found: x.len() });
    }
    Ok(())
}

/// `argmax_{y in Y(x)} w.Phi(x, y)` under the problem's tie rule.
pub fn predict<P: StructuredProblem + ?Sized>(problem: &P, w: &[f64], x: &[f64]) -> Result<Rank> {
    check_dims(problem, w, x)?;
    problem.argmax(w, x, None)
}

/// The perceptron update `w + Phi(x, y) - Phi(x, yhat)`.
///
/// Callers skip correct predictions; with `y == yhat` this is the identity.
pub fn update_vanilla<P: StructuredProblem + ?Sized>(problem: &P, w: &mut [f64], x: &[f64], y: Rank, yhat: Rank) {
    problem.add_scaled_difference(w, x, y, yhat, 1.0);
}

/// Loss-sensitive passive-aggressive step size
/// `(w.Phi(x, yhat) - w.Phi(x, y) + loss(y, yhat)) / |Phi(x, y) - Phi(x, yhat)|^2`.
pub fn pa_step<P: StructuredProblem + ?Sized>(
    problem: &P,
    w: &[f64],
    x: &[f64],
    y: Rank,
    yhat: Rank,
    loss: &LossFn,
) -> Result<f64> {
    let diff = problem.feature_difference(x, y, yhat);
    let denom = norm_sq(&diff);
    if denom == 0.0 {
        return Err(Error::ZeroFeatureDifference);
    }
    Ok((loss.eval(y, yhat) - dot(w, &diff)) / denom)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateRule {
    Vanilla,
    PassiveAggressive(LossFn),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    /// Keep the uniform average of the weights after every example visit.
    pub averaging: bool,
    /// Margin-rescaled decoding during training: `(loss, scale)`.
    pub cost_augment: Option<(LossFn, f64)>,
    /// Multiplies the weights before every update; `1.0` disables it.
    pub shrinkage: f64,
    /// Seeded per-epoch shuffling; `None` visits examples in order.
    pub shuffle_seed: Option<u64>,
    /// Loss recorded in the trace.
    pub trace_loss: LossFn,
    /// Stop after the first epoch without a mistake.
    pub stop_when_converged: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 1,
            averaging: false,
            cost_augment: None,
            shrinkage: 1.0,
            shuffle_seed: None,
            trace_loss: LossFn::Absolute,
            stop_when_converged: true,
        }
    }
}

impl TrainOptions {
    pub fn with_epochs(epochs: usize) -> Self {
        Self { epochs, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be at least 1".into()));
        }
        if !(self.shrinkage.is_finite() && self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return Err(Error::InvalidParameter(format!("shrinkage must lie in (0, 1], got {}", self.shrinkage)));
        }
        if let Some((loss, scale)) = &self.cost_augment {
            loss.validate()?;
            if !(scale.is_finite() && *scale >= 0.0) {
                return Err(Error::InvalidParameter(format!("cost scale must be >= 0, got {scale}")));
            }
        }
        Ok(())
    }
}

/// One example visit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    /// Index of the example in the training set.
    pub index: usize,
    pub truth: Rank,
    pub predicted: Rank,
    pub loss: f64,
    /// Multiplier applied to the feature difference (0 when no update).
    pub step: f64,
    pub cumulative_loss: f64,
    pub cumulative_squared_loss: f64,
}

/// Per-visit records of an online run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    records: Vec<StepRecord>,
}

impl TrainTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a visit, filling in the cumulative columns.
    pub fn push(&mut self, epoch: usize, index: usize, truth: Rank, predicted: Rank, loss: f64, step: f64) {
        let (cl, csl) =
            self.records.last().map(|r| (r.cumulative_loss, r.cumulative_squared_loss)).unwrap_or((0.0, 0.0));
        self.records.push(StepRecord {
            epoch,
            index,
            truth,
            predicted,
            loss,
            step,
            cumulative_loss: cl + loss,
            cumulative_squared_loss: csl + loss * loss,
        });
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn mistakes(&self) -> usize {
        self.records.iter().filter(|r| r.truth != r.predicted).count()
    }

    pub fn cumulative_loss(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cumulative_loss)
    }

    pub fn cumulative_absolute_loss(&self) -> usize {
        self.records.iter().map(|r| absolute_loss(r.truth, r.predicted)).sum()
    }

    pub fn predictions(&self) -> Vec<Rank> {
        self.records.iter().map(|r| r.predicted).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub weights: Vec<f64>,
    pub averaged: Option<Vec<f64>>,
    pub trace: TrainTrace,
    pub epochs_run: usize,
    pub converged: bool,
}

/// Loop controls shared by the direct (non-engine) online learners.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OnlineOptions {
    pub epochs: usize,
    /// Stop after the first epoch without a mistake.
    pub stop_when_converged: bool,
    /// Fault-injection hook: negate every update from this visit index
    /// (0-based, counted across epochs) onwards.
    pub sign_fault: Option<usize>,
}

impl OnlineOptions {
    pub fn with_epochs(epochs: usize) -> Self {
        Self { epochs, stop_when_converged: true, sign_fault: None }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be at least 1".into()));
        }
        Ok(())
    }

    /// Update multiplier at global visit `visit`.
    pub(crate) fn fault_sign(&self, visit: usize) -> f64 {
        match self.sign_fault {
            Some(from) if visit >= from => -1.0,
            _ => 1.0,
        }
    }
}

impl Default for OnlineOptions {
    fn default() -> Self {
        Self::with_epochs(1)
    }
}

/// A model produced by one of the direct online learners.
#[derive(Debug, Clone, PartialEq)]
pub struct Fitted<M> {
    pub model: M,
    pub trace: TrainTrace,
    pub epochs_run: usize,
    pub converged: bool,
}

/// Runs the online structured perceptron over `data`.
pub fn train_online<P: StructuredProblem + ?Sized>(
    problem: &P,
    rule: UpdateRule,
    data: &RankedDataset,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    train_online_observed(problem, rule, data, opts, |_, _| {})
}

/// [`train_online`] with a callback receiving each visit record and the
/// weights right after that visit.
pub fn train_online_observed<P, F>(
    problem: &P,
    rule: UpdateRule,
    data: &RankedDataset,
    opts: &TrainOptions,
    mut observer: F,
) -> Result<TrainOutcome>
where
    P: StructuredProblem + ?Sized,
    F: FnMut(&StepRecord, &[f64]),
{
    opts.validate()?;
    if let UpdateRule::PassiveAggressive(loss) = &rule {
        loss.validate()?;
    }
    if data.dim() != problem.input_dim() {
        return Err(Error::DimensionMismatch { expected: problem.input_dim(), found: data.dim() });
    }

    let dim = problem.dim();
    let mut w = vec![0.0; dim];
    let mut averager = opts.averaging.then(|| Averager::new(dim, opts.shrinkage == 1.0));
    let mut trace = TrainTrace::new();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = opts.shuffle_seed.map(ChaCha8Rng::seed_from_u64);
    let mut epochs_run = 0;
    let mut converged = false;

    for epoch in 0..opts.epochs {
        if let Some(rng) = rng.as_mut() {
            order.shuffle(rng);
        }
        let mut epoch_mistakes = 0;
        for &index in &order {
            let ex = &data.examples()[index];
            let (x, y) = (ex.features.as_slice(), ex.rank);
            let augment = opts.cost_augment.map(|(loss, scale)| CostAugment { loss, scale, truth: y });
            let yhat = problem.argmax(&w, x, augment.as_ref())?;

            let mut step = 0.0;
            if yhat != y {
                epoch_mistakes += 1;
                if opts.shrinkage != 1.0 {
                    w.iter_mut().for_each(|v| *v *= opts.shrinkage);
                }
                step = match &rule {
                    UpdateRule::Vanilla => 1.0,
                    UpdateRule::PassiveAggressive(loss) => pa_step(problem, &w, x, y, yhat, loss)?,
                };
                if let Some(avg) = averager.as_mut() {
                    avg.before_update(problem, x, y, yhat, step);
                }
                problem.add_scaled_difference(&mut w, x, y, yhat, step);
            }
            if let Some(avg) = averager.as_mut() {
                avg.after_visit(&w);
            }
            trace.push(epoch, index, y, yhat, opts.trace_loss.eval(y, yhat), step);
            observer(trace.records().last().expect("just pushed"), &w);
        }
        epochs_run = epoch + 1;
        if epoch_mistakes == 0 {
            converged = true;
            if opts.stop_when_converged {
                break;
            }
        }
    }

    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("weights".into()));
    }
    let averaged = averager.map(|a| a.average(&w));
    Ok(TrainOutcome { weights: w, averaged, trace, epochs_run, converged })
}

/// Uniform average of the weight vector after every visit.
///
/// Without shrinkage the average is maintained lazily: with updates `u_t`
/// applied at visit `t`, `sum_t w_t = T * w_T - sum_t (t - 1) u_t`, so only
/// the weighted update sum has to be stored. With shrinkage every past
/// update is rescaled and the running sum is kept explicitly.
struct Averager {
    visits: usize,
    lazy: bool,
    acc: Vec<f64>,
}

impl Averager {
    fn new(dim: usize, lazy: bool) -> Self {
        Self { visits: 0, lazy, acc: vec![0.0; dim] }
    }

    fn before_update<P: StructuredProblem + ?Sized>(&mut self, problem: &P, x: &[f64], y: Rank, yhat: Rank, step: f64) {
        if self.lazy {
            // the update belongs to visit `self.visits + 1`
            problem.add_scaled_difference(&mut self.acc, x, y, yhat, step * self.visits as f64);
        }
    }

    fn after_visit(&mut self, w: &[f64]) {
        self.visits += 1;
        if !self.lazy {
            axpy(1.0, w, &mut self.acc);
        }
    }

    fn average(&self, w: &[f64]) -> Vec<f64> {
        if self.visits == 0 {
            return w.to_vec();
        }
        let t = self.visits as f64;
        if self.lazy {
            w.iter().zip(&self.acc).map(|(wi, ai)| wi - ai / t).collect()
        } else {
            self.acc.iter().map(|ai| ai / t).collect()
        }
    }
}
