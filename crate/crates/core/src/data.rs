//! Benchmark ingestion: raw regression files, target binning, feature
//! scaling and seeded train/test splits.

use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::{Rank, RankedDataset, RankedExample};

/// Rectangular numeric rows with a continuous target.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    features: Vec<Vec<f64>>,
    targets: Vec<f64>,
}

impl RawDataset {
    pub fn new(features: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if features.len() != targets.len() {
            return Err(Error::LengthMismatch { left: features.len(), right: targets.len() });
        }
        let width = features.first().ok_or(Error::Empty)?.len();
        for row in &features {
            if row.len() != width {
                return Err(Error::DimensionMismatch { expected: width, found: row.len() });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("raw features".into()));
            }
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("raw targets".into()));
        }
        Ok(Self { features, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Number of raw features (without target or bias).
    pub fn feature_dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len());
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidParameter(format!("row index {i} out of range for {} rows", self.len())));
            }
            features.push(self.features[i].clone());
            targets.push(self.targets[i]);
        }
        Self::new(features, targets)
    }
}

/// Parses whitespace-separated numeric rows, last column the target. Blank
/// lines are skipped; line numbers in errors are 1-based.
pub fn parse_raw<R: Read>(reader: R) -> Result<RawDataset> {
    let mut features = Vec::new();
    let mut targets = Vec::new();
    let mut width = None;
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        let mut row = Vec::with_capacity(tokens.len());
        for tok in &tokens {
            let v: f64 =
                tok.parse().map_err(|_| Error::Parse { line: lineno, message: format!("not a number: {tok:?}") })?;
            if !v.is_finite() {
                return Err(Error::Parse { line: lineno, message: format!("non-finite value {tok:?}") });
            }
            row.push(v);
        }
        match width {
            None if row.len() < 2 => {
                return Err(Error::Parse { line: lineno, message: "need at least one feature and a target".into() });
            }
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected {w} columns, found {}", row.len()),
                });
            }
            Some(_) => {}
        }
        targets.push(row.pop().expect("row has a target"));
        features.push(row);
    }
    if targets.is_empty() {
        return Err(Error::Parse { line: 0, message: "no data rows".into() });
    }
    RawDataset::new(features, targets)
}

pub fn load_raw(path: impl AsRef<Path>) -> Result<RawDataset> {
    parse_raw(std::fs::File::open(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binning {
    /// `r` bins of equal length over `[min, max]`.
    EqualWidth,
    /// Cut points at the `i / r` empirical quantiles.
    EqualFrequency,
    /// Targets already are ranks `1..=r`.
    Ranks,
}

impl Binning {
    pub fn name(self) -> &'static str {
        match self {
            Binning::EqualWidth => "equal-width",
            Binning::EqualFrequency => "equal-frequency",
            Binning::Ranks => "ranks",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "equal-width" => Some(Binning::EqualWidth),
            "equal-frequency" => Some(Binning::EqualFrequency),
            "ranks" => Some(Binning::Ranks),
            _ => None,
        }
    }
}

/// Maps continuous targets to ranks through `r - 1` ascending cut points:
/// `rank(v) = 1 + #{cuts <= v}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretizer {
    strategy: Binning,
    bin_count: usize,
    cuts: Vec<f64>,
}

impl Discretizer {
    pub fn fit(targets: &[f64], strategy: Binning, r: usize) -> Result<Self> {
        if r < 2 {
            return Err(Error::TooFewRanks(r));
        }
        if targets.is_empty() {
            return Err(Error::Empty);
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("targets".into()));
        }
        let cuts = match strategy {
            Binning::EqualWidth => {
                let lo = targets.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = targets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if hi <= lo {
                    return Err(Error::DegenerateTargets(format!("all targets equal {lo}")));
                }
                let width = (hi - lo) / r as f64;
                (1..r).map(|i| lo + i as f64 * width).collect()
            }
            Binning::EqualFrequency => {
                let mut sorted = targets.to_vec();
                sorted.sort_by(f64::total_cmp);
                let mut distinct = sorted.clone();
                distinct.dedup();
                if distinct.len() < r {
                    return Err(Error::DegenerateTargets(format!("{} distinct targets for {r} bins", distinct.len())));
                }
                let n = sorted.len();
                (1..r).map(|i| sorted[i * n / r]).collect()
            }
            Binning::Ranks => {
                if let Some(v) = targets.iter().find(|&&v| v.fract() != 0.0 || v < 1.0 || v > r as f64) {
                    return Err(Error::DegenerateTargets(format!("{v} is not a rank in 1..={r}")));
                }
                (1..r).map(|k| k as f64 + 0.5).collect()
            }
        };
        Ok(Self { strategy, bin_count: r, cuts })
    }

    /// Rebuilds a fitted discretizer from stored cut points.
    pub fn from_cuts(strategy: Binning, cuts: Vec<f64>) -> Result<Self> {
        if cuts.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cut points".into()));
        }
        if cuts.windows(2).any(|p| p[0] > p[1]) {
            return Err(Error::UnsortedThresholds);
        }
        Ok(Self { strategy, bin_count: cuts.len() + 1, cuts })
    }

    pub fn strategy(&self) -> Binning {
        self.strategy
    }

    pub fn bin_count(&self) -> usize {
        self.bin_count
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn rank(&self, v: f64) -> Rank {
        1 + self.cuts.partition_point(|&c| c <= v)
    }

    pub fn ranks(&self, targets: &[f64]) -> Vec<Rank> {
        targets.iter().map(|&v| self.rank(v)).collect()
    }
}

pub fn discretize(targets: &[f64], strategy: Binning, r: usize) -> Result<(Discretizer, Vec<Rank>)> {
    let d = Discretizer::fit(targets, strategy, r)?;
    let ranks = d.ranks(targets);
    Ok((d, ranks))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// Zero mean, unit population variance.
    Standardize,
    /// Affine map of the fit range onto `[0, 1]`.
    MinMax,
    Identity,
}

impl Normalization {
    pub fn name(self) -> &'static str {
        match self {
            Normalization::Standardize => "standardize",
            Normalization::MinMax => "minmax",
            Normalization::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "standardize" => Some(Normalization::Standardize),
            "minmax" => Some(Normalization::MinMax),
            "identity" => Some(Normalization::Identity),
            _ => None,
        }
    }
}

/// Per-feature `(x - offset) * factor`. A constant feature gets factor 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    strategy: Normalization,
    offset: Vec<f64>,
    factor: Vec<f64>,
}

impl Normalizer {
    pub fn fit(strategy: Normalization, rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().ok_or(Error::Empty)?.len();
        if let Some(row) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, found: row.len() });
        }
        let n = rows.len() as f64;
        let column = |j: usize| rows.iter().map(move |r| r[j]);
        let (offset, factor) = match strategy {
            Normalization::Identity => (vec![0.0; d], vec![1.0; d]),
            Normalization::Standardize => (0..d)
                .map(|j| {
                    let mean = column(j).sum::<f64>() / n;
                    let var = column(j).map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                    let sd = var.sqrt();
                    (mean, if sd > 0.0 { 1.0 / sd } else { 0.0 })
                })
                .unzip(),
            Normalization::MinMax => (0..d)
                .map(|j| {
                    let lo = column(j).fold(f64::INFINITY, f64::min);
                    let hi = column(j).fold(f64::NEG_INFINITY, f64::max);
                    (lo, if hi > lo { 1.0 / (hi - lo) } else { 0.0 })
                })
                .unzip(),
        };
        Ok(Self { strategy, offset, factor })
    }

    pub fn from_parts(strategy: Normalization, offset: Vec<f64>, factor: Vec<f64>) -> Result<Self> {
        if offset.len() != factor.len() {
            return Err(Error::LengthMismatch { left: offset.len(), right: factor.len() });
        }
        if offset.iter().chain(&factor).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("normalizer statistics".into()));
        }
        Ok(Self { strategy, offset, factor })
    }

    pub fn strategy(&self) -> Normalization {
        self.strategy
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn factor(&self) -> &[f64] {
        &self.factor
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        Ok(x.iter().zip(&self.offset).zip(&self.factor).map(|((v, o), f)| (v - o) * f).collect())
    }

    pub fn transform_all(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.transform(r)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle of `0..n`; the first `round(n * train_fraction)` indices
/// train. Both index lists are returned sorted.
pub fn partition(n: usize, seed: u64, train_fraction: f64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!("train fraction must lie in (0, 1), got {train_fraction}")));
    }
    let n_train = (n as f64 * train_fraction).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::InvalidParameter(format!(
            "train fraction {train_fraction} leaves an empty split of {n} rows"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

/// Reads fold files: one line per fold holding space-separated 0-based test
/// indices; every other index trains.
pub fn parse_partitions<R: Read>(reader: R, n: usize) -> Result<Vec<Split>> {
    let mut folds = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut in_test = vec![false; n];
        for tok in line.split_whitespace() {
            let j: usize =
                tok.parse().map_err(|_| Error::Parse { line: i + 1, message: format!("not an index: {tok:?}") })?;
            if j >= n {
                return Err(Error::Parse { line: i + 1, message: format!("index {j} out of range for {n} rows") });
            }
            if std::mem::replace(&mut in_test[j], true) {
                return Err(Error::Parse { line: i + 1, message: format!("index {j} repeated") });
            }
        }
        let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&j| in_test[j]);
        if train.is_empty() {
            return Err(Error::Parse { line: i + 1, message: "fold leaves no training rows".into() });
        }
        folds.push(Split { train, test });
    }
    if folds.is_empty() {
        return Err(Error::Parse { line: 0, message: "no folds".into() });
    }
    Ok(folds)
}

/// Normalizes rows, appends the `-1` bias and pairs them with ranks.
pub fn finalize(rows: &[Vec<f64>], normalizer: &Normalizer, ranks: &[Rank], r: usize) -> Result<RankedDataset> {
    if rows.len() != ranks.len() {
        return Err(Error::LengthMismatch { left: rows.len(), right: ranks.len() });
    }
    let examples = rows
        .iter()
        .zip(ranks)
        .map(|(row, &y)| Ok(RankedExample::from_unbiased(&normalizer.transform(row)?, y)))
        .collect::<Result<Vec<_>>>()?;
    RankedDataset::new(examples, r)
}
