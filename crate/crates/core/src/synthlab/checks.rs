//! Separability checks and brute-force separator searches.

use crate::engine::StructuredProblem;
use crate::error::{Error, Result};
use crate::loss::LossFn;
use crate::prank::prank_margin_check;
use crate::types::{Rank, RankedDataset, WeightStack};
use crate::vector::{dot, norm, norm_sq};
use crate::TOLERANCE;

/// The example and level with the least slack `sign(y - k) w_k.x - delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Witness {
    pub example: usize,
    pub level: Rank,
    pub slack: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparabilityReport {
    pub separable: bool,
    pub worst: Option<Witness>,
}

/// `(sign(y - k) w_k.x, example, level)` over examples and levels `k >= 2`,
/// with `sign(0) = +1`.
pub(crate) fn level_slacks<'a>(
    data: &'a RankedDataset,
    w: &'a WeightStack,
) -> impl Iterator<Item = (f64, usize, Rank)> + 'a {
    data.iter().enumerate().flat_map(move |(i, ex)| {
        (2..=w.rank_count()).map(move |k| {
            let s = if ex.rank >= k { 1.0 } else { -1.0 };
            (s * w.response(k, &ex.features), i, k)
        })
    })
}

fn require_unit(n: f64) -> Result<()> {
    if (n - 1.0).abs() > TOLERANCE {
        return Err(Error::NotNormalized(n));
    }
    Ok(())
}

/// Checks `sign(y - k) w_k.x >= delta` for every example and level
/// `k = 2..=r` (`sign(0) = +1`), for unit-norm `w`.
pub fn check_rank_separable(data: &RankedDataset, w: &WeightStack, delta: f64) -> Result<SeparabilityReport> {
    require_unit(w.norm())?;
    if w.rank_count() != data.rank_count() || w.dim() != data.dim() {
        return Err(Error::DimensionMismatch { expected: data.rank_count() * data.dim(), found: w.as_flat().len() });
    }
    let worst = level_slacks(data, w)
        .map(|(m, example, level)| Witness { example, level, slack: m - delta })
        .min_by(|a, b| a.slack.total_cmp(&b.slack));
    let separable = worst.is_none_or(|w| w.slack >= -TOLERANCE);
    Ok(SeparabilityReport { separable, worst })
}

/// PRank margin check for `|(u, b_2..b_r)| = 1`.
pub fn check_prank_margin(
    data: &RankedDataset,
    direction: &[f64],
    upper_thresholds: &[f64],
    delta: f64,
) -> Result<bool> {
    require_unit((norm_sq(direction) + norm_sq(upper_thresholds)).sqrt())?;
    prank_margin_check(data, direction, upper_thresholds, delta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossAugmentedReport {
    /// Whether `wbar.(Phi(x, y) - Phi(x, y')) >= loss(y, y')` everywhere.
    pub separable: bool,
    /// Smallest `R` with `|Phi(x, y) - Phi(x, y')|^2 <= loss(y, y') R^2`.
    pub radius: f64,
    /// Largest `|Phi(x, y) - Phi(x, y')|`.
    pub feature_radius: f64,
    /// First `(example, output)` pair breaking the margin condition.
    pub violation: Option<(usize, Rank)>,
}

/// Evaluates both loss-augmented conditions over every example and every
/// wrong output.
pub fn check_loss_augmented<P: StructuredProblem + ?Sized>(
    data: &RankedDataset,
    problem: &P,
    wbar: &[f64],
    loss: &LossFn,
) -> Result<LossAugmentedReport> {
    require_unit(norm(wbar))?;
    if wbar.len() != problem.dim() {
        return Err(Error::DimensionMismatch { expected: problem.dim(), found: wbar.len() });
    }
    loss.validate()?;
    let mut r_sq: f64 = 0.0;
    let mut phi_sq: f64 = 0.0;
    let mut violation = None;
    for (i, ex) in data.iter().enumerate() {
        for other in problem.feasible_outputs(&ex.features) {
            if other == ex.rank {
                continue;
            }
            let diff = problem.feature_difference(&ex.features, ex.rank, other);
            let l = loss.eval(ex.rank, other);
            let dd = norm_sq(&diff);
            r_sq = r_sq.max(dd / l);
            phi_sq = phi_sq.max(dd);
            if violation.is_none() && dot(wbar, &diff) < l - TOLERANCE {
                violation = Some((i, other));
            }
        }
    }
    Ok(LossAugmentedReport {
        separable: violation.is_none(),
        radius: r_sq.sqrt(),
        feature_radius: phi_sq.sqrt(),
        violation,
    })
}

/// Every vector with entries from `grid` in `dim` coordinates.
fn grid_points(grid: &[f64], dim: usize) -> impl Iterator<Item = Vec<f64>> + '_ {
    let total = grid.len().pow(dim as u32);
    (0..total).map(move |mut code| {
        (0..dim)
            .map(|_| {
                let v = grid[code % grid.len()];
                code /= grid.len();
                v
            })
            .collect()
    })
}

/// Searches `grid^d` level by level for weights with a strictly positive
/// margin; the levels are independent, so a separator exists on the grid
/// iff every level finds one. Returns the unit-norm stack.
pub fn rank_grid_search(data: &RankedDataset, grid: &[f64]) -> Option<WeightStack> {
    let (r, d) = (data.rank_count(), data.dim());
    let mut flat = vec![0.0; d];
    for k in 2..=r {
        let found = grid_points(grid, d).find(|w| {
            data.iter().all(|ex| {
                let s = if ex.rank >= k { 1.0 } else { -1.0 };
                s * dot(w, &ex.features) > TOLERANCE
            })
        })?;
        flat.extend(found);
    }
    let n = norm(&flat);
    flat.iter_mut().for_each(|v| *v /= n);
    WeightStack::from_flat(r, d, flat).ok()
}

/// Searches directions in `grid^(d-1)` and sorted threshold tuples from
/// `grid` for a PRank separator with a strictly positive margin.
pub fn prank_grid_search(data: &RankedDataset, grid: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let m = data.dim() - 1;
    let r = data.rank_count();
    let thresholds: Vec<Vec<f64>> = grid_points(grid, r - 1).filter(|b| b.windows(2).all(|p| p[0] <= p[1])).collect();
    for u in grid_points(grid, m) {
        for b in &thresholds {
            let ok = data.iter().all(|ex| {
                let a = dot(&u, ex.unbiased());
                let y = ex.rank;
                (y == 1 || a - b[y - 2] > TOLERANCE) && (y == r || b[y - 1] - a > TOLERANCE)
            });
            if ok {
                return Some((u, b.clone()));
            }
        }
    }
    None
}

/// `-1, -1 + step, ..., 1` with `steps + 1` points.
pub fn symmetric_grid(steps: usize) -> Vec<f64> {
    (0..=steps).map(|i| -1.0 + 2.0 * i as f64 / steps as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cusum::CuSumProblem;
    use crate::types::RankedExample;

    fn d0() -> RankedDataset {
        let ex = |a: f64, b: f64, y| RankedExample::from_unbiased(&[a, b], y);
        RankedDataset::new(vec![ex(0.0, 0.0, 1), ex(0.0, 1.0, 2), ex(1.0, 1.0, 2), ex(1.0, 0.0, 3)], 3).unwrap()
    }

    fn d0_unit_separator() -> (WeightStack, f64) {
        let raw = [0.0, 0.0, 0.0, 1.0, 1.0, 0.5, 1.0, -1.0, 0.5];
        let n = norm(&raw);
        let w = WeightStack::from_flat(3, 3, raw.iter().map(|v| v / n).collect()).unwrap();
        (w, 0.5 / n)
    }

    #[test]
    fn d0_is_rank_separable_at_its_margin() {
        let (w, delta) = d0_unit_separator();
        assert!((delta - 0.5 / 4.5f64.sqrt()).abs() < 1e-15);
        let rep = check_rank_separable(&d0(), &w, delta).unwrap();
        assert!(rep.separable);
        assert!(rep.worst.unwrap().slack.abs() < 1e-12);
        assert!(!check_rank_separable(&d0(), &w, delta * 1.01).unwrap().separable);
    }

    #[test]
    fn zero_weights_are_rejected() {
        let w = WeightStack::zeros(3, 3);
        assert!(matches!(check_rank_separable(&d0(), &w, 0.1), Err(Error::NotNormalized(_))));
        let mut w = WeightStack::zeros(3, 3);
        w.level_mut(2)[0] = 2.0;
        assert!(matches!(check_rank_separable(&d0(), &w, 0.1), Err(Error::NotNormalized(_))));
    }

    #[test]
    fn d0_grid_searches() {
        let grid = symmetric_grid(8);
        assert!(prank_grid_search(&d0(), &grid).is_none());
        let w = rank_grid_search(&d0(), &grid).expect("rank separator on the grid");
        assert!(check_rank_separable(&d0(), &w, 0.0).unwrap().separable);
    }

    #[test]
    fn loss_augmented_cusum_radius() {
        let (w, delta) = d0_unit_separator();
        let p = CuSumProblem::for_dataset(&d0());
        let rep = check_loss_augmented(&d0(), &p, w.as_flat(), &LossFn::ScaledAbsolute(delta)).unwrap();
        assert!(rep.separable);
        let r = d0().radius();
        assert!((rep.radius.powi(2) - r * r / delta).abs() < 1e-9);
        // |y - y'| = 2 only on the last point, |x|^2 = 2 there
        assert!((rep.feature_radius.powi(2) - 4.0).abs() < 1e-9);
    }

    #[test]
    fn huge_loss_breaks_margin_condition() {
        let (w, _) = d0_unit_separator();
        let p = CuSumProblem::for_dataset(&d0());
        let rep = check_loss_augmented(&d0(), &p, w.as_flat(), &LossFn::ScaledZeroOne(1e6)).unwrap();
        assert!(!rep.separable);
        assert_eq!(rep.violation, Some((0, 2)));
    }

    #[test]
    fn boundary_case_is_separable() {
        let data = RankedDataset::new(vec![RankedExample::from_unbiased(&[3.0], 2)], 2).unwrap();
        let p = CuSumProblem::for_dataset(&data);
        let diff = p.feature_difference(&data.examples()[0].features, 2, 1);
        let n = norm(&diff);
        let wbar: Vec<f64> = diff.iter().map(|v| v / n).collect();
        let l = dot(&wbar, &diff);
        let rep = check_loss_augmented(&data, &p, &wbar, &LossFn::ScaledZeroOne(l)).unwrap();
        assert!(rep.separable);
    }
}
