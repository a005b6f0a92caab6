//! Seeded generators of separable ranked data with a planted margin.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::checks::{check_rank_separable, level_slacks};
use crate::error::{Error, Result};
use crate::prank::prank_margin_check;
use crate::types::{RankedDataset, RankedExample, WeightStack};
use crate::vector::{dot, norm, norm_sq};

const LEVEL_TILT: f64 = 0.3;
const THRESHOLD_SPAN: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    RankSeparable,
    PrankSeparable,
    LossAugmented,
}

/// The planted separator of a generated problem.
#[derive(Debug, Clone, PartialEq)]
pub enum Separator {
    /// Per-level weights with unit total norm.
    Levels(WeightStack),
    /// Shared direction and thresholds `b_2..b_r` with `|(u, b)| = 1`.
    Prank { direction: Vec<f64>, upper_thresholds: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedProblem {
    pub dataset: RankedDataset,
    pub separator: Separator,
    /// Requested margin; the data satisfies it for the planted separator.
    pub margin: f64,
    /// Smallest margin actually present in the data.
    pub empirical_margin: f64,
    /// Largest `|x|`, bias included.
    pub radius: f64,
    /// Largest `|z|`, bias excluded.
    pub unbiased_radius: f64,
    pub family: Family,
}

impl PlantedProblem {
    /// Wraps an arbitrary dataset and separator; nothing is verified here.
    pub fn new(dataset: RankedDataset, separator: Separator, margin: f64, family: Family) -> Self {
        let radius = dataset.radius();
        let unbiased_radius = dataset.unbiased_radius();
        let empirical_margin = match &separator {
            Separator::Levels(w) => level_slacks(&dataset, w).map(|(s, _, _)| s).fold(f64::INFINITY, f64::min),
            Separator::Prank { direction, upper_thresholds } => prank_min_margin(&dataset, direction, upper_thresholds),
        };
        Self { dataset, separator, margin, empirical_margin, radius, unbiased_radius, family }
    }

    /// Unit-norm level weights and the margin they achieve.
    ///
    /// A PRank separator `(u, b)` becomes the levels `(u, b_k) / s` where `s`
    /// is the norm of the stacked levels, so its margin shrinks by `s`.
    pub fn rank_view(&self) -> (WeightStack, f64) {
        match &self.separator {
            Separator::Levels(w) => (w.clone(), self.margin),
            Separator::Prank { direction, upper_thresholds } => {
                let d = direction.len() + 1;
                let mut flat = vec![0.0; d];
                for &b in upper_thresholds {
                    flat.extend_from_slice(direction);
                    flat.push(b);
                }
                let s = norm(&flat);
                flat.iter_mut().for_each(|v| *v /= s);
                let w = WeightStack::from_flat(upper_thresholds.len() + 1, d, flat).expect("layout built above");
                (w, self.margin / s)
            }
        }
    }
}

fn prank_min_margin(data: &RankedDataset, u: &[f64], b: &[f64]) -> f64 {
    let r = data.rank_count();
    data.iter()
        .map(|ex| {
            let a = dot(u, ex.unbiased());
            let low = if ex.rank >= 2 { a - b[ex.rank - 2] } else { f64::INFINITY };
            let high = if ex.rank < r { b[ex.rank - 1] - a } else { f64::INFINITY };
            low.min(high)
        })
        .fold(f64::INFINITY, f64::min)
}

fn validate(n: usize, d: usize, r: usize, delta: f64, radius: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::Empty);
    }
    if r < 2 {
        return Err(Error::TooFewRanks(r));
    }
    if d < 2 {
        return Err(Error::InvalidParameter(format!("dimension must be at least 2, got {d}")));
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::InvalidParameter(format!("margin must be positive, got {delta}")));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {radius}")));
    }
    Ok(())
}

fn gaussian(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    (0..m).map(|_| rng.sample(StandardNormal)).collect()
}

/// A point of the ball written as `t dir + orth`: `t` is uniform over
/// `[-radius, radius]` and `orth` uniform in the orthogonal slice, so every
/// level along `dir` is hit about equally often.
fn slab_draw(rng: &mut ChaCha8Rng, dir: &[f64], radius: f64) -> (f64, Vec<f64>) {
    let m = dir.len();
    let t = radius * (2.0 * rng.random::<f64>() - 1.0);
    if m < 2 {
        return (t, vec![0.0; m]);
    }
    let mut g = gaussian(rng, m);
    let p = dot(&g, dir);
    g.iter_mut().zip(dir).for_each(|(gi, ui)| *gi -= p * ui);
    let gn = norm(&g);
    let room = (radius * radius - t * t).max(0.0).sqrt();
    let len = room * rng.random::<f64>().powf(1.0 / (m - 1) as f64);
    g.iter_mut().for_each(|v| *v *= len / gn);
    (t, g)
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    v.iter_mut().for_each(|e| *e /= n);
    v
}

fn with_bias(z: &[f64]) -> Vec<f64> {
    let mut x = z.to_vec();
    x.push(-1.0);
    x
}

/// Rank-separable data: `sign(y - k) w_k.x >= delta` for every example and
/// level `k >= 2` (with `sign(0) = +1`), for a random unit-norm stack `w`.
///
/// Each level direction is a shared random unit vector tilted by its own
/// random unit vector, and the level biases are evenly spaced over
/// `[-0.6, 0.6] * radius`. The stack is then scaled to unit norm. `d` counts
/// the bias, so inputs are `(z, -1)` with `z` in the `(d-1)`-ball of radius
/// `radius`, drawn with a uniform projection on the shared direction. Draws
/// whose level answers are not monotone or fall inside the margin are
/// rejected. One boundary example is then moved onto the margin
/// so the smallest margin equals `delta` whenever the geometry allows it.
pub fn generate_rank_separable(
    seed: u64,
    n: usize,
    d: usize,
    r: usize,
    delta: f64,
    radius: f64,
) -> Result<PlantedProblem> {
    validate(n, d, r, delta, radius)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // a shared direction tilted per level keeps most draws monotone while
    // leaving the stack outside the single-direction family
    let shared = unit(gaussian(&mut rng, d - 1));
    let spread = THRESHOLD_SPAN * radius;
    let mut flat = vec![0.0; d];
    for k in 2..=r {
        let tilt = unit(gaussian(&mut rng, d - 1));
        let v: Vec<f64> = shared.iter().zip(&tilt).map(|(a, b)| a + LEVEL_TILT * b).collect();
        flat.extend(unit(v));
        let bias = if r == 2 { 0.0 } else { spread * (2.0 * (k - 2) as f64 / (r - 2) as f64 - 1.0) };
        flat.push(bias);
    }
    let s = norm(&flat);
    flat.iter_mut().for_each(|v| *v /= s);
    let w = WeightStack::from_flat(r, d, flat)?;

    let budget = 1000 * n;
    let mut examples = Vec::with_capacity(n);
    for _ in 0..budget {
        if examples.len() == n {
            break;
        }
        let (t, orth) = slab_draw(&mut rng, &shared, radius);
        let z: Vec<f64> = shared.iter().zip(&orth).map(|(a, o)| t * a + o).collect();
        let x = with_bias(&z);
        let answers: Vec<f64> = (2..=r).map(|k| w.response(k, &x)).collect();
        let y = 1 + answers.iter().take_while(|&&a| a >= 0.0).count();
        let consistent = answers[y - 1..].iter().all(|&a| a < 0.0);
        if consistent && answers.iter().all(|a| a.abs() >= delta) {
            examples.push(RankedExample::new(x, y));
        }
    }
    if examples.len() < n {
        return Err(Error::RejectionBudget { budget, accepted: examples.len() });
    }

    snap_levels(&mut examples, &w, delta, radius, r);
    let dataset = RankedDataset::new(examples, r)?;
    if !check_rank_separable(&dataset, &w, delta)?.separable {
        return Err(Error::InvalidParameter("generated data failed its margin check".into()));
    }
    Ok(PlantedProblem::new(dataset, Separator::Levels(w), delta, Family::RankSeparable))
}

/// Same data as [`generate_rank_separable`], labelled as the loss-augmented
/// family (the cumulative-sum feature map with loss `delta |y - y'|`).
pub fn generate_loss_augmented(
    seed: u64,
    n: usize,
    d: usize,
    r: usize,
    delta: f64,
    radius: f64,
) -> Result<PlantedProblem> {
    let mut p = generate_rank_separable(seed, n, d, r, delta, radius)?;
    p.family = Family::LossAugmented;
    Ok(p)
}

/// Moves the tightest example along the binding level so that its margin
/// becomes exactly `delta`, provided nothing else breaks.
fn snap_levels(examples: &mut [RankedExample], w: &WeightStack, delta: f64, radius: f64, r: usize) {
    let slack = |x: &[f64], y: usize| -> (f64, usize) {
        (2..=r)
            .map(|k| {
                let s = if y >= k { 1.0 } else { -1.0 };
                (s * w.response(k, x), k)
            })
            .fold((f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a })
    };
    let mut order: Vec<(f64, usize, usize)> = examples
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            let (m, k) = slack(&ex.features, ex.rank);
            (m, k, i)
        })
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let d = w.dim();
    for (m, k, i) in order {
        let y = examples[i].rank;
        let g = &w.level(k)[..d - 1];
        let gg = norm_sq(g);
        if gg == 0.0 {
            continue;
        }
        let s = if y >= k { 1.0 } else { -1.0 };
        let mut x = examples[i].features.clone();
        let shift = s * (m - delta) / gg;
        for (xi, gi) in x[..d - 1].iter_mut().zip(g) {
            *xi -= shift * gi;
        }
        if norm(&x[..d - 1]) > radius {
            continue;
        }
        if slack(&x, y).0 >= delta - 1e-12 {
            examples[i].features = x;
            return;
        }
    }
}

/// PRank-separable data: `b_y + delta <= u.z <= b_{y+1} - delta` with
/// `|(u, b_2, ..., b_r)| = 1`.
///
/// The thresholds are evenly spaced over `[-0.6, 0.6] * radius` before
/// normalisation. The projection of `z` on `u` is drawn uniformly over
/// `[-radius, radius]` and the orthogonal part uniformly from the remaining
/// ball, so every rank gets a fair share of the draws.
pub fn generate_prank_separable(
    seed: u64,
    n: usize,
    d: usize,
    r: usize,
    delta: f64,
    radius: f64,
) -> Result<PlantedProblem> {
    validate(n, d, r, delta, radius)?;
    let m = d - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = unit(gaussian(&mut rng, m));
    let raw: Vec<f64> = if r == 2 {
        vec![0.0]
    } else {
        (0..r - 1).map(|i| THRESHOLD_SPAN * radius * (2.0 * i as f64 / (r - 2) as f64 - 1.0)).collect()
    };
    let c = (1.0 + norm_sq(&raw)).sqrt();
    let u: Vec<f64> = dir.iter().map(|v| v / c).collect();
    let b: Vec<f64> = raw.iter().map(|v| v / c).collect();
    let rank_of = |a: f64| 1 + b.iter().filter(|&&t| a >= t).count();
    let margin_of = |a: f64, y: usize| {
        let low = if y >= 2 { a - b[y - 2] } else { f64::INFINITY };
        let high = if y < r { b[y - 1] - a } else { f64::INFINITY };
        low.min(high)
    };

    let budget = 1000 * n;
    let mut parts: Vec<(f64, Vec<f64>)> = Vec::with_capacity(n);
    for _ in 0..budget {
        if parts.len() == n {
            break;
        }
        let (t, orth) = slab_draw(&mut rng, &dir, radius);
        let a = t / c;
        if margin_of(a, rank_of(a)) >= delta {
            parts.push((t, orth));
        }
    }
    if parts.len() < n {
        return Err(Error::RejectionBudget { budget, accepted: parts.len() });
    }

    // snap the tightest draw onto its binding threshold
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        let (ai, aj) = (parts[i].0 / c, parts[j].0 / c);
        margin_of(ai, rank_of(ai)).total_cmp(&margin_of(aj, rank_of(aj)))
    });
    for i in order {
        let a = parts[i].0 / c;
        let y = rank_of(a);
        let low = if y >= 2 { b[y - 2] + delta } else { f64::NEG_INFINITY };
        let high = if y < r { b[y - 1] - delta } else { f64::INFINITY };
        let target = if a - low <= high - a { low } else { high };
        let t = target * c;
        if t.abs() <= radius && (t * t + norm_sq(&parts[i].1)).sqrt() <= radius && rank_of(target) == y {
            parts[i].0 = t;
            break;
        }
    }

    let examples: Vec<RankedExample> = parts
        .iter()
        .map(|(t, orth)| {
            let z: Vec<f64> = dir.iter().zip(orth).map(|(ui, oi)| t * ui + oi).collect();
            RankedExample::from_unbiased(&z, rank_of(dot(&u, &z)))
        })
        .collect();
    let dataset = RankedDataset::new(examples, r)?;
    if !prank_margin_check(&dataset, &u, &b, delta)? {
        return Err(Error::InvalidParameter("generated data failed its margin check".into()));
    }
    let separator = Separator::Prank { direction: u, upper_thresholds: b };
    Ok(PlantedProblem::new(dataset, separator, delta, Family::PrankSeparable))
}
