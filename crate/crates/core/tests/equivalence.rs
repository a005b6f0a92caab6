//! The direct learners replayed against the generic engine, visit by visit.

use cusumrank::cusum::{self, CuSumModel, CuSumProblem};
use cusumrank::engine::{train_online_observed, OnlineOptions, TrainOptions, UpdateRule};
use cusumrank::kernel::{dual_fit_online_observed, Kernel};
use cusumrank::prank::{self, PRankModel, PRankProblem};
use cusumrank::{LossFn, RankedDataset, RankedExample, WeightStack};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const TOL: f64 = 1e-9;
const EPOCHS: usize = 4;

fn random_dataset(seed: u64) -> RankedDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(5..=50);
    let d = rng.random_range(2..=8);
    let r = rng.random_range(2..=6);
    let examples = (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..d - 1).map(|_| rng.sample(StandardNormal)).collect();
            RankedExample::from_unbiased(&z, rng.random_range(1..=r))
        })
        .collect();
    RankedDataset::new(examples, r).unwrap()
}

fn opts() -> OnlineOptions {
    OnlineOptions { epochs: EPOCHS, stop_when_converged: false, sign_fault: None }
}

fn engine_opts() -> TrainOptions {
    TrainOptions { stop_when_converged: false, ..TrainOptions::with_epochs(EPOCHS) }
}

fn assert_close(a: &[f64], b: &[f64], what: &str) {
    assert_eq!(a.len(), b.len(), "{what}");
    for (i, (p, q)) in a.iter().zip(b).enumerate() {
        assert!((p - q).abs() <= TOL, "{what}[{i}]: {p} vs {q}");
    }
}

fn assert_scores_agree(data: &RankedDataset, direct: &CuSumModel, engine: &[f64], what: &str) {
    let engine =
        CuSumModel::from_weights(WeightStack::from_flat(data.rank_count(), data.dim(), engine.to_vec()).unwrap());
    for ex in data {
        assert_close(&direct.scores(&ex.features).unwrap(), &engine.scores(&ex.features).unwrap(), what);
    }
}

/// Collects `(record, flat weights)` after every visit of an engine run.
fn engine_run<P: cusumrank::engine::StructuredProblem>(
    problem: &P,
    rule: UpdateRule,
    data: &RankedDataset,
) -> Vec<(cusumrank::engine::StepRecord, Vec<f64>)> {
    let mut snaps = Vec::new();
    train_online_observed(problem, rule, data, &engine_opts(), |rec, w| snaps.push((*rec, w.to_vec()))).unwrap();
    snaps
}

#[test]
fn mistake_driven_cusum_matches_engine() {
    for seed in 0..20 {
        let data = random_dataset(seed);
        let snaps = engine_run(&CuSumProblem::for_dataset(&data), UpdateRule::Vanilla, &data);
        let mut visit = 0;
        cusum::fit_online_observed(&data, &opts(), |rec, model| {
            let (erec, w) = &snaps[visit];
            assert_eq!(rec.predicted, erec.predicted, "seed {seed} visit {visit}");
            assert_scores_agree(&data, model, w, &format!("seed {seed} visit {visit}"));
            visit += 1;
        })
        .unwrap();
        assert_eq!(visit, snaps.len());
    }
}

#[test]
fn pa_cusum_matches_engine_with_scaled_zero_one_loss() {
    for seed in 0..20 {
        let data = random_dataset(100 + seed);
        let delta = 0.05 + 0.1 * (seed % 5) as f64;
        let rule = UpdateRule::PassiveAggressive(LossFn::ScaledZeroOne(delta));
        let snaps = engine_run(&CuSumProblem::for_dataset(&data), rule, &data);
        let mut visit = 0;
        cusum::fit_pa_observed(&data, delta, &opts(), |rec, model| {
            let (erec, w) = &snaps[visit];
            assert_eq!(rec.predicted, erec.predicted, "seed {seed} visit {visit}");
            assert!((rec.step - erec.step).abs() <= TOL, "seed {seed} visit {visit}: {} vs {}", rec.step, erec.step);
            assert_scores_agree(&data, model, w, &format!("seed {seed} visit {visit}"));
            visit += 1;
        })
        .unwrap();
        assert_eq!(visit, snaps.len());
    }
}

#[test]
fn direct_prank_matches_engine() {
    for seed in 0..20 {
        let data = random_dataset(200 + seed);
        let snaps = engine_run(&PRankProblem::for_dataset(&data), UpdateRule::Vanilla, &data);
        let mut visit = 0;
        prank::fit_online_observed(&data, &opts(), |rec, model| {
            let (erec, w) = &snaps[visit];
            assert_eq!(rec.predicted, erec.predicted, "seed {seed} visit {visit}");
            let engine = PRankModel::from_structured(w, data.dim() - 1).unwrap();
            assert_close(model.direction(), engine.direction(), "direction");
            assert_close(&model.thresholds()[1..], &engine.thresholds()[1..], "thresholds");
            assert!(model.thresholds_sorted());
            visit += 1;
        })
        .unwrap();
        assert_eq!(visit, snaps.len());
    }
}

#[test]
fn linear_dual_matches_primal() {
    for seed in 0..20 {
        let data = random_dataset(300 + seed);
        let mut primal = Vec::new();
        cusum::fit_online_observed(&data, &opts(), |rec, model| primal.push((*rec, model.clone()))).unwrap();
        let mut visit = 0;
        dual_fit_online_observed(&data, Kernel::Linear, &opts(), true, |rec, dual| {
            let (prec, model) = &primal[visit];
            assert_eq!(rec.predicted, prec.predicted, "seed {seed} visit {visit}");
            for ex in &data {
                assert_close(&dual.scores(&ex.features).unwrap(), &model.scores(&ex.features).unwrap(), "scores");
            }
            visit += 1;
        })
        .unwrap();
        assert_eq!(visit, primal.len());
    }
}
