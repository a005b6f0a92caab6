use cusumrank::cusum;
use cusumrank::engine::OnlineOptions;
use cusumrank::prank;
use cusumrank::synthlab::{
    check_rank_separable, generate_loss_augmented, generate_prank_separable, generate_rank_separable,
    prank_grid_search, rank_grid_search, symmetric_grid, verify_bounds, BoundKind, Family, Learner, PlantedProblem,
    Quantity, Separator, VerifyOptions,
};
use cusumrank::{mean_absolute_error, RankedDataset, RankedExample, WeightStack};

fn d0() -> RankedDataset {
    let ex = |a: f64, b: f64, y| RankedExample::from_unbiased(&[a, b], y);
    RankedDataset::new(vec![ex(0.0, 0.0, 1), ex(0.0, 1.0, 2), ex(1.0, 1.0, 2), ex(1.0, 0.0, 3)], 3).unwrap()
}

fn d0_planted() -> PlantedProblem {
    let raw = [0.0, 0.0, 0.0, 1.0, 1.0, 0.5, 1.0, -1.0, 0.5];
    let n = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let w = WeightStack::from_flat(3, 3, raw.iter().map(|v| v / n).collect()).unwrap();
    PlantedProblem::new(d0(), Separator::Levels(w), 0.5 / n, Family::RankSeparable)
}

#[test]
fn d0_cusum_bounds_hold_and_prank_never_fits() {
    let planted = d0_planted();
    assert!((planted.empirical_margin - planted.margin).abs() < 1e-12);
    for learner in [Learner::CusumVanilla, Learner::CusumPa, Learner::EngineGeneric] {
        let rep = verify_bounds(&planted, learner, &VerifyOptions::with_epochs(100)).unwrap();
        assert!(rep.separable() && rep.passed() && rep.converged, "{learner:?}: {rep:?}");
    }
    let fit = cusum::fit_online(&d0(), &OnlineOptions::with_epochs(100)).unwrap();
    assert_eq!(mean_absolute_error(&fit.model.predict_all(&d0()).unwrap(), &d0().ranks()).unwrap(), 0.0);

    let rep = verify_bounds(&planted, Learner::Prank, &VerifyOptions::with_epochs(100)).unwrap();
    assert!(!rep.separable());
    let fit = prank::fit_online(&d0(), &OnlineOptions::with_epochs(2000)).unwrap();
    assert!(!fit.converged);
    assert!(mean_absolute_error(&fit.model.predict_all(&d0()).unwrap(), &d0().ranks()).unwrap() > 0.0);
    assert!(prank_grid_search(&d0(), &symmetric_grid(10)).is_none());
}

#[test]
fn rings_are_not_rank_separable() {
    let mut examples = Vec::new();
    for (radius, rank) in [(0.2, 1), (1.0, 2), (2.0, 3)] {
        for i in 0..12 {
            let t = i as f64 * std::f64::consts::TAU / 12.0;
            examples.push(RankedExample::from_unbiased(&[radius * t.cos(), radius * t.sin()], rank));
        }
    }
    let data = RankedDataset::new(examples, 3).unwrap();
    assert!(rank_grid_search(&data, &symmetric_grid(10)).is_none());
    assert!(rank_grid_search(&d0(), &symmetric_grid(10)).is_some());
}

#[test]
fn generated_families_pass_every_applicable_bound() {
    for seed in 0..10 {
        let p = generate_rank_separable(seed, 80, 5, 4, 0.1, 1.0).unwrap();
        let (w, delta) = p.rank_view();
        assert!(check_rank_separable(&p.dataset, &w, delta).unwrap().separable);
        for learner in [Learner::CusumVanilla, Learner::CusumPa, Learner::EngineGeneric] {
            let rep = verify_bounds(&p, learner, &VerifyOptions::with_epochs(500)).unwrap();
            assert!(rep.passed() && rep.converged, "seed {seed} {learner:?}");
        }
        let q = generate_prank_separable(seed, 80, 5, 4, 0.1, 1.0).unwrap();
        for learner in [Learner::Prank, Learner::CusumVanilla, Learner::CusumPa] {
            let rep = verify_bounds(&q, learner, &VerifyOptions::with_epochs(2000)).unwrap();
            assert!(rep.passed() && rep.converged, "seed {seed} {learner:?}");
        }
        let a = generate_loss_augmented(seed, 80, 5, 4, 0.1, 1.0).unwrap();
        assert_eq!(a.dataset, p.dataset);
        assert_eq!(a.family, Family::LossAugmented);
    }
}

#[test]
fn mistakes_never_exceed_absolute_loss() {
    let p = generate_rank_separable(5, 150, 6, 5, 0.05, 1.0).unwrap();
    let rep = verify_bounds(&p, Learner::CusumVanilla, &VerifyOptions::with_epochs(500)).unwrap();
    let ledger = rep.ledger.as_ref().unwrap();
    for row in &ledger.rows {
        assert!(row.mistakes as f64 <= row.absolute_loss);
    }
    let c1 = ledger.bound(BoundKind::C1).unwrap();
    let c3 = ledger.bound(BoundKind::C3).unwrap();
    assert!(c1 > 0.0 && c3 > 0.0);
    assert!(rep.checks.iter().any(|c| c.kind == BoundKind::C3));
    assert!(ledger.bounds.iter().any(|(k, q, _)| *k == BoundKind::C1 && *q == Quantity::Mistakes));
}

#[test]
fn fault_injection_is_caught() {
    let p = generate_rank_separable(2, 100, 5, 4, 0.1, 1.0).unwrap();
    let rep = verify_bounds(&p, Learner::CusumVanilla, &VerifyOptions { epochs: 200, sign_fault: Some(0) }).unwrap();
    assert!(!rep.passed());
    assert!(rep.first_violation().is_some());
}
