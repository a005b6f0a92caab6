//! Mistake-bound verification on planted problems.
//!
//! Every bound is computed from the planted problem before training starts
//! and then compared with the running totals after every example visit.

use std::io::Write;

use super::checks::{check_loss_augmented, check_prank_margin, check_rank_separable};
use super::generators::{PlantedProblem, Separator};
use crate::cusum::{self, CuSumProblem};
use crate::engine::{train_online, OnlineOptions, TrainOptions, TrainTrace, UpdateRule};
use crate::error::Result;
use crate::loss::LossFn;
use crate::prank::{self, PRankModel, PRankProblem};
use crate::TOLERANCE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Learner {
    /// Direct cumulative-sum perceptron.
    CusumVanilla,
    /// Direct passive-aggressive cumulative-sum learner with the planted margin.
    CusumPa,
    Prank,
    /// Cumulative-sum feature map trained through the generic engine.
    EngineGeneric,
}

impl Learner {
    pub fn name(&self) -> &'static str {
        match self {
            Learner::CusumVanilla => "cusum-vanilla",
            Learner::CusumPa => "cusum-pa",
            Learner::Prank => "prank",
            Learner::EngineGeneric => "engine-generic",
        }
    }
}

/// Which running total a bound caps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Mistakes,
    AbsoluteLoss,
    /// Sum of the loss the theorem is stated for.
    Loss,
    SquaredLoss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    /// Perceptron: cumulative loss within the loss-augmented radius squared.
    T1,
    /// Passive-aggressive: cumulative squared loss within the same quantity.
    T2,
    /// Mistakes within `R_phi^2 / delta^2`, `R_phi` the largest feature difference.
    C1,
    /// Passive-aggressive mistakes within `R_phi^2 / delta^4`.
    C2,
    /// Cumulative absolute loss within `R^2 / delta^2`.
    C3,
    /// Passive-aggressive cumulative absolute loss within `R^2 / delta^4`, `delta <= 1`.
    C4,
    /// PRank cumulative absolute loss within `(r - 1)(R_z^2 + 1) / delta^2`.
    PrankRanks,
}

impl BoundKind {
    pub fn name(&self) -> &'static str {
        match self {
            BoundKind::T1 => "T1",
            BoundKind::T2 => "T2",
            BoundKind::C1 => "C1",
            BoundKind::C2 => "C2",
            BoundKind::C3 => "C3",
            BoundKind::C4 => "C4",
            BoundKind::PrankRanks => "PRANK",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerRow {
    pub step: usize,
    pub mistakes: usize,
    pub absolute_loss: f64,
    pub loss: f64,
    pub squared_loss: f64,
}

impl LedgerRow {
    pub fn get(&self, q: Quantity) -> f64 {
        match q {
            Quantity::Mistakes => self.mistakes as f64,
            Quantity::AbsoluteLoss => self.absolute_loss,
            Quantity::Loss => self.loss,
            Quantity::SquaredLoss => self.squared_loss,
        }
    }
}

/// Running totals of one training run next to the bound values.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundLedger {
    pub learner: Learner,
    pub rank_count: usize,
    pub delta: f64,
    /// `R` for the bound family in use: `max |x|` for the cumulative-sum
    /// learners, `max |z|` for PRank.
    pub radius: f64,
    /// Loss the theorem-level bound is stated for.
    pub loss: LossFn,
    /// Loss-augmented radius squared for `loss`.
    pub augmented_radius_sq: f64,
    /// Largest squared feature difference.
    pub feature_radius_sq: f64,
    pub bounds: Vec<(BoundKind, Quantity, f64)>,
    pub rows: Vec<LedgerRow>,
}

impl BoundLedger {
    pub fn bound(&self, kind: BoundKind) -> Option<f64> {
        self.bounds.iter().find(|b| b.0 == kind).map(|b| b.2)
    }

    pub fn final_row(&self) -> Option<&LedgerRow> {
        self.rows.last()
    }

    /// One CSV row per visit: the running totals then one column per bound.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header =
            vec!["step".to_string(), "mistakes".into(), "absolute_loss".into(), "loss".into(), "squared_loss".into()];
        header.extend(self.bounds.iter().map(|b| format!("bound_{}", b.0.name())));
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![
                row.step.to_string(),
                row.mistakes.to_string(),
                format!("{}", row.absolute_loss),
                format!("{}", row.loss),
                format!("{}", row.squared_loss),
            ];
            rec.extend(self.bounds.iter().map(|b| format!("{}", b.2)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub kind: BoundKind,
    pub bound: f64,
    /// Final value of the capped quantity.
    pub observed: f64,
    /// First visit (0-based) where the quantity exceeded the bound.
    pub violation: Option<usize>,
}

impl BoundCheck {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub learner: Learner,
    /// `None` when the planted separator fails its own check; no bound is
    /// asserted then.
    pub ledger: Option<BoundLedger>,
    pub checks: Vec<BoundCheck>,
    pub not_separable: Option<String>,
    pub converged: bool,
    /// Mistakes in the last epoch run.
    pub final_epoch_mistakes: usize,
    /// Bounds that were not asserted, with the reason.
    pub skipped: Vec<(BoundKind, String)>,
}

impl BoundReport {
    pub fn separable(&self) -> bool {
        self.not_separable.is_none()
    }

    pub fn passed(&self) -> bool {
        self.separable() && self.checks.iter().all(BoundCheck::passed)
    }

    pub fn first_violation(&self) -> Option<(BoundKind, usize)> {
        self.checks.iter().filter_map(|c| c.violation.map(|v| (c.kind, v))).min_by_key(|&(_, v)| v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOptions {
    pub epochs: usize,
    /// Negate updates from this visit on (direct learners only).
    pub sign_fault: Option<usize>,
}

impl VerifyOptions {
    pub fn with_epochs(epochs: usize) -> Self {
        Self { epochs, sign_fault: None }
    }
}

fn not_separable(learner: Learner, reason: String) -> BoundReport {
    BoundReport {
        learner,
        ledger: None,
        checks: Vec::new(),
        not_separable: Some(reason),
        converged: false,
        final_epoch_mistakes: 0,
        skipped: Vec::new(),
    }
}

/// Trains `learner` on the planted problem and checks every applicable
/// bound after every visit.
pub fn verify_bounds(problem: &PlantedProblem, learner: Learner, opts: &VerifyOptions) -> Result<BoundReport> {
    let data = &problem.dataset;
    let r = data.rank_count();
    let online = OnlineOptions { epochs: opts.epochs, stop_when_converged: true, sign_fault: opts.sign_fault };

    // precondition and bound values
    let (delta, radius, loss, aug, bounds) = match learner {
        Learner::Prank => {
            let Separator::Prank { direction, upper_thresholds } = &problem.separator else {
                return Ok(not_separable(learner, "no planted PRank separator".into()));
            };
            let delta = problem.margin;
            if !check_prank_margin(data, direction, upper_thresholds, delta)? {
                return Ok(not_separable(learner, format!("PRank margin {delta} does not hold")));
            }
            let wbar = PRankModel::from_parts(direction.clone(), upper_thresholds)?.to_structured();
            let loss = LossFn::ScaledAbsolute(delta);
            let aug = check_loss_augmented(data, &PRankProblem::for_dataset(data), &wbar, &loss)?;
            if !aug.separable {
                return Ok(not_separable(learner, "loss-augmented margin fails".into()));
            }
            let rz = problem.unbiased_radius;
            let bounds = vec![
                (BoundKind::T1, Quantity::Loss, aug.radius.powi(2)),
                (BoundKind::C1, Quantity::Mistakes, aug.feature_radius.powi(2) / (delta * delta)),
                (BoundKind::PrankRanks, Quantity::AbsoluteLoss, (r - 1) as f64 * (rz * rz + 1.0) / (delta * delta)),
            ];
            (delta, rz, loss, aug, bounds)
        }
        _ => {
            let (w, delta) = problem.rank_view();
            let rep = check_rank_separable(data, &w, delta)?;
            if !rep.separable {
                return Ok(not_separable(learner, format!("rank margin {delta} does not hold: {:?}", rep.worst)));
            }
            let loss = match learner {
                Learner::CusumPa => LossFn::ScaledZeroOne(delta),
                _ => LossFn::ScaledAbsolute(delta),
            };
            let aug = check_loss_augmented(data, &CuSumProblem::for_dataset(data), w.as_flat(), &loss)?;
            if !aug.separable {
                return Ok(not_separable(learner, "loss-augmented margin fails".into()));
            }
            let rr = problem.radius * problem.radius;
            let phi = aug.feature_radius.powi(2);
            let d2 = delta * delta;
            let bounds = if learner == Learner::CusumPa {
                vec![
                    (BoundKind::T2, Quantity::SquaredLoss, aug.radius.powi(2)),
                    (BoundKind::C2, Quantity::Mistakes, phi / (d2 * d2)),
                    (BoundKind::C4, Quantity::AbsoluteLoss, rr / (d2 * d2)),
                ]
            } else {
                vec![
                    (BoundKind::T1, Quantity::Loss, aug.radius.powi(2)),
                    (BoundKind::C1, Quantity::Mistakes, phi / d2),
                    (BoundKind::C3, Quantity::AbsoluteLoss, rr / d2),
                ]
            };
            (delta, problem.radius, loss, aug, bounds)
        }
    };

    let (trace, converged, epochs_run): (TrainTrace, bool, usize) = match learner {
        Learner::CusumVanilla => {
            let f = cusum::fit_online(data, &online)?;
            (f.trace, f.converged, f.epochs_run)
        }
        Learner::CusumPa => {
            let f = cusum::fit_pa(data, delta, &online)?;
            (f.trace, f.converged, f.epochs_run)
        }
        Learner::Prank => {
            let f = prank::fit_online(data, &online)?;
            (f.trace, f.converged, f.epochs_run)
        }
        Learner::EngineGeneric => {
            let p = CuSumProblem::for_dataset(data);
            let o = train_online(&p, UpdateRule::Vanilla, data, &TrainOptions::with_epochs(opts.epochs))?;
            (o.trace, o.converged, o.epochs_run)
        }
    };

    let mut rows = Vec::with_capacity(trace.len());
    let mut acc = LedgerRow { step: 0, mistakes: 0, absolute_loss: 0.0, loss: 0.0, squared_loss: 0.0 };
    for (step, rec) in trace.records().iter().enumerate() {
        let l = loss.eval(rec.truth, rec.predicted);
        acc.step = step;
        acc.mistakes += usize::from(rec.truth != rec.predicted);
        acc.absolute_loss += rec.truth.abs_diff(rec.predicted) as f64;
        acc.loss += l;
        acc.squared_loss += l * l;
        rows.push(acc);
    }

    let mut skipped = Vec::new();
    let mut checks = Vec::new();
    for &(kind, q, bound) in &bounds {
        if kind == BoundKind::C4 && delta > 1.0 {
            skipped.push((kind, format!("margin {delta} exceeds 1")));
            continue;
        }
        let violation = rows.iter().find(|row| row.get(q) > bound + TOLERANCE).map(|row| row.step);
        let observed = rows.last().map_or(0.0, |row| row.get(q));
        checks.push(BoundCheck { kind, bound, observed, violation });
    }

    let n = data.len();
    let final_epoch_mistakes =
        trace.records()[(epochs_run - 1) * n..].iter().filter(|rec| rec.truth != rec.predicted).count();

    let ledger = BoundLedger {
        learner,
        rank_count: r,
        delta,
        radius,
        loss,
        augmented_radius_sq: aug.radius.powi(2),
        feature_radius_sq: aug.feature_radius.powi(2),
        bounds,
        rows,
    };
    Ok(BoundReport {
        learner,
        ledger: Some(ledger),
        checks,
        not_separable: None,
        converged,
        final_epoch_mistakes,
        skipped,
    })
}
