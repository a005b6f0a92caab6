//! Run and bound-suite configuration: flat TOML key/value files. Any
//! tunable key accepts either a single value or a list; lists span the
//! selection grid.

use std::path::{Path, PathBuf};

use cusumrank::data::{Binning, Normalization};
use cusumrank::features::Activation;
use cusumrank::kernel::Kernel;
use serde::Deserialize;

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Grid<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> Grid<T> {
    fn values(&self) -> Vec<T> {
        match self {
            Grid::One(v) => vec![v.clone()],
            Grid::Many(v) => v.clone(),
        }
    }
}

fn grid_or<T: Clone>(key: &'static str, g: Option<Grid<T>>, default: T) -> Result<Vec<T>> {
    let v = g.map_or_else(|| vec![default], |g| g.values());
    if v.is_empty() {
        return Err(BenchError::config(key, "empty list"));
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    CuSum,
    CuSumPa,
    Prank,
    Counting,
    KernelCuSum,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] =
        [Algorithm::CuSum, Algorithm::CuSumPa, Algorithm::Prank, Algorithm::Counting, Algorithm::KernelCuSum];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::CuSum => "cusum",
            Algorithm::CuSumPa => "cusum-pa",
            Algorithm::Prank => "prank",
            Algorithm::Counting => "counting",
            Algorithm::KernelCuSum => "kernel-cusum",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }

    /// Learners trained by the generic engine accept averaging, cost
    /// augmentation and shrinkage.
    pub fn uses_engine(self) -> bool {
        matches!(self, Algorithm::CuSum | Algorithm::CuSumPa | Algorithm::Prank)
    }

    /// Margin-rescaled decoding only applies to the cumulative-sum learners;
    /// PRank keeps its thresholds ordered only under plain decoding.
    pub fn uses_cost(self) -> bool {
        matches!(self, Algorithm::CuSum | Algorithm::CuSumPa)
    }
}

/// `linear`, `poly:<degree>:<coef0>` or `rbf:<gamma>`.
pub fn parse_kernel(s: &str) -> Option<Kernel> {
    let parts: Vec<&str> = s.split(':').collect();
    let k = match parts.as_slice() {
        ["linear"] => Kernel::Linear,
        ["poly", d, c] => Kernel::Polynomial { degree: d.parse().ok()?, coef0: c.parse().ok()? },
        ["rbf", g] => Kernel::Rbf { gamma: g.parse().ok()? },
        _ => return None,
    };
    k.validate().ok().map(|_| k)
}

pub fn kernel_spec(k: &Kernel) -> String {
    match k {
        Kernel::Linear => "linear".into(),
        Kernel::Polynomial { degree, coef0 } => format!("poly:{degree}:{coef0}"),
        Kernel::Rbf { gamma } => format!("rbf:{gamma}"),
    }
}

/// One point of the selection grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub normalization: Normalization,
    pub epochs: usize,
    pub delta: f64,
    pub averaging: bool,
    pub cost_scale: f64,
    pub shrinkage: f64,
    pub kernel: Kernel,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            normalization: Normalization::Standardize,
            epochs: 100,
            delta: 0.1,
            averaging: false,
            cost_scale: 0.0,
            shrinkage: 1.0,
            kernel: Kernel::Rbf { gamma: 1.0 },
        }
    }
}

impl Params {
    /// Compact description listing only the keys the algorithm reads.
    pub fn describe(&self, algo: Algorithm) -> String {
        let mut s = format!("normalization={} epochs={}", self.normalization.name(), self.epochs);
        if algo == Algorithm::CuSumPa {
            s += &format!(" delta={}", self.delta);
        }
        if algo.uses_engine() {
            s += &format!(" averaging={} shrinkage={}", self.averaging, self.shrinkage);
        }
        if algo.uses_cost() {
            s += &format!(" cost_scale={}", self.cost_scale);
        }
        if algo == Algorithm::KernelCuSum {
            s += &format!(" kernel={}", kernel_spec(&self.kernel));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrid {
    pub normalization: Vec<Normalization>,
    pub epochs: Vec<usize>,
    pub delta: Vec<f64>,
    pub averaging: Vec<bool>,
    pub cost_scale: Vec<f64>,
    pub shrinkage: Vec<f64>,
    pub kernel: Vec<Kernel>,
}

impl ParamGrid {
    /// Cartesian product over the keys `algo` reads, in key order with the
    /// last key varying fastest.
    pub fn combinations(&self, algo: Algorithm) -> Vec<Params> {
        fn pick<T: Clone>(v: &[T], used: bool) -> Vec<T> {
            if used {
                v.to_vec()
            } else {
                v[..1].to_vec()
            }
        }
        let eng = algo.uses_engine();
        let mut out = Vec::new();
        for normalization in &self.normalization {
            for &epochs in &self.epochs {
                for &delta in &pick(&self.delta, algo == Algorithm::CuSumPa) {
                    for &averaging in &pick(&self.averaging, eng) {
                        for &cost_scale in &pick(&self.cost_scale, algo.uses_cost()) {
                            for &shrinkage in &pick(&self.shrinkage, eng) {
                                for kernel in &pick(&self.kernel, algo == Algorithm::KernelCuSum) {
                                    out.push(Params {
                                        normalization: *normalization,
                                        epochs,
                                        delta,
                                        averaging,
                                        cost_scale,
                                        shrinkage,
                                        kernel: *kernel,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitSource {
    /// Train and test on every row.
    Whole,
    Fraction(f64),
    Size(usize),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpSettings {
    pub hidden: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub activation: Activation,
    /// Share of each training split held out for early stopping.
    pub validation_fraction: f64,
    pub batch_size: Option<usize>,
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub bins: Option<usize>,
    pub algo: Option<String>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub delta: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRunConfig {
    dataset: String,
    bins: Option<usize>,
    binning: Option<String>,
    normalization: Option<Grid<String>>,
    algorithm: Option<String>,
    epochs: Option<Grid<usize>>,
    delta: Option<Grid<f64>>,
    averaging: Option<Grid<bool>>,
    cost_scale: Option<Grid<f64>>,
    shrinkage: Option<Grid<f64>>,
    kernel: Option<Grid<String>>,
    seed: Option<u64>,
    folds: Option<usize>,
    train_size: Option<usize>,
    train_fraction: Option<f64>,
    partitions: Option<String>,
    mlp: Option<bool>,
    mlp_hidden: Option<usize>,
    mlp_learning_rate: Option<f64>,
    mlp_patience: Option<usize>,
    mlp_max_epochs: Option<usize>,
    mlp_activation: Option<String>,
    mlp_validation_fraction: Option<f64>,
    mlp_batch_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub bins: usize,
    pub binning: Binning,
    pub algorithm: Algorithm,
    pub grid: ParamGrid,
    pub seed: u64,
    pub folds: usize,
    pub split: SplitSource,
    pub mlp: Option<MlpSettings>,
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn positive(key: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(BenchError::config(key, format!("must be positive, got {v}")))
    }
}

fn fraction(key: &'static str, v: f64) -> Result<f64> {
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(BenchError::config(key, format!("must lie in (0, 1), got {v}")))
    }
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, overrides)
    }

    /// Parses and validates; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path, overrides: &Overrides) -> Result<Self> {
        let raw: RawRunConfig = toml::from_str(text)?;
        let bins = overrides.bins.or(raw.bins).unwrap_or(5);
        if bins < 2 {
            return Err(BenchError::config("bins", format!("need at least 2 bins, got {bins}")));
        }
        let binning_name = raw.binning.unwrap_or_else(|| "equal-frequency".into());
        let binning = Binning::parse(&binning_name)
            .ok_or_else(|| BenchError::config("binning", format!("unknown strategy {binning_name:?}")))?;
        let algo_name = overrides.algo.clone().or(raw.algorithm).unwrap_or_else(|| "cusum".into());
        let algorithm = Algorithm::parse(&algo_name)
            .ok_or_else(|| BenchError::config("algorithm", format!("unknown algorithm {algo_name:?}")))?;

        let normalization = grid_or("normalization", raw.normalization, "standardize".into())?
            .iter()
            .map(|s| {
                Normalization::parse(s)
                    .ok_or_else(|| BenchError::config("normalization", format!("unknown normalization {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let epochs = match overrides.epochs {
            Some(e) => vec![e],
            None => grid_or("epochs", raw.epochs, 100)?,
        };
        if epochs.contains(&0) {
            return Err(BenchError::config("epochs", "must be at least 1"));
        }
        let delta = match overrides.delta {
            Some(d) => vec![d],
            None => grid_or("delta", raw.delta, 0.1)?,
        };
        for &d in &delta {
            positive("delta", d)?;
        }
        let averaging = grid_or("averaging", raw.averaging, false)?;
        let cost_scale = grid_or("cost_scale", raw.cost_scale, 0.0)?;
        if let Some(c) = cost_scale.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(BenchError::config("cost_scale", format!("must be >= 0, got {c}")));
        }
        let shrinkage = grid_or("shrinkage", raw.shrinkage, 1.0)?;
        if let Some(s) = shrinkage.iter().find(|s| !(**s > 0.0 && **s <= 1.0)) {
            return Err(BenchError::config("shrinkage", format!("must lie in (0, 1], got {s}")));
        }
        let kernel = grid_or("kernel", raw.kernel, "rbf:1".into())?
            .iter()
            .map(|s| parse_kernel(s).ok_or_else(|| BenchError::config("kernel", format!("bad kernel spec {s:?}"))))
            .collect::<Result<Vec<_>>>()?;

        let folds = raw.folds.unwrap_or(1);
        if folds == 0 {
            return Err(BenchError::config("folds", "must be at least 1"));
        }
        let split = match (raw.train_size, raw.train_fraction, raw.partitions) {
            (None, None, None) => SplitSource::Whole,
            (Some(n), None, None) if n > 0 => SplitSource::Size(n),
            (Some(_), None, None) => return Err(BenchError::config("train_size", "must be positive")),
            (None, Some(f), None) => SplitSource::Fraction(fraction("train_fraction", f)?),
            (None, None, Some(p)) => SplitSource::File(resolve(base, &p)),
            _ => {
                return Err(BenchError::config(
                    "train_size",
                    "set at most one of train_size, train_fraction and partitions",
                ))
            }
        };

        let mlp = if raw.mlp.unwrap_or(false) {
            let act = raw.mlp_activation.unwrap_or_else(|| "tanh".into());
            Some(MlpSettings {
                hidden: match raw.mlp_hidden.unwrap_or(100) {
                    0 => return Err(BenchError::config("mlp_hidden", "must be at least 1")),
                    h => h,
                },
                learning_rate: positive("mlp_learning_rate", raw.mlp_learning_rate.unwrap_or(0.001))?,
                patience: raw.mlp_patience.unwrap_or(100),
                max_epochs: raw.mlp_max_epochs.unwrap_or(20_000),
                activation: Activation::parse(&act)
                    .ok_or_else(|| BenchError::config("mlp_activation", format!("unknown activation {act:?}")))?,
                validation_fraction: fraction("mlp_validation_fraction", raw.mlp_validation_fraction.unwrap_or(0.2))?,
                batch_size: match raw.mlp_batch_size {
                    Some(0) => return Err(BenchError::config("mlp_batch_size", "must be at least 1")),
                    b => b,
                },
            })
        } else {
            None
        };

        Ok(RunConfig {
            dataset: resolve(base, &raw.dataset),
            bins,
            binning,
            algorithm,
            grid: ParamGrid { normalization, epochs, delta, averaging, cost_scale, shrinkage, kernel },
            seed: overrides.seed.or(raw.seed).unwrap_or(0),
            folds,
            split,
            mlp,
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVerifyConfig {
    learners: Option<Grid<String>>,
    seeds: Option<usize>,
    seed: Option<u64>,
    n: Option<usize>,
    d: Option<usize>,
    bins: Option<usize>,
    delta: Option<f64>,
    radius: Option<f64>,
    epochs: Option<usize>,
}

/// Parameters of the seeded bound suite.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub learners: Vec<cusumrank::synthlab::Learner>,
    pub seeds: usize,
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub bins: usize,
    pub delta: f64,
    pub radius: f64,
    pub epochs: usize,
}

pub fn parse_learner(s: &str) -> Option<cusumrank::synthlab::Learner> {
    use cusumrank::synthlab::Learner;
    [Learner::CusumVanilla, Learner::CusumPa, Learner::Prank, Learner::EngineGeneric]
        .into_iter()
        .find(|l| l.name() == s)
}

impl VerifyConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)?,
            None => String::new(),
        };
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &Overrides) -> Result<Self> {
        let raw: RawVerifyConfig = toml::from_str(text)?;
        let names = match &overrides.algo {
            Some(a) => vec![a.clone()],
            None => grid_or("learners", raw.learners, String::new())?,
        };
        let names: Vec<String> = if names == [String::new()] {
            vec!["cusum-vanilla".into(), "cusum-pa".into(), "prank".into()]
        } else {
            names
        };
        let learners = names
            .iter()
            .map(|s| parse_learner(s).ok_or_else(|| BenchError::config("learners", format!("unknown learner {s:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let cfg = VerifyConfig {
            learners,
            seeds: raw.seeds.unwrap_or(100),
            seed: overrides.seed.or(raw.seed).unwrap_or(0),
            n: raw.n.unwrap_or(200),
            d: raw.d.unwrap_or(10),
            bins: overrides.bins.or(raw.bins).unwrap_or(5),
            delta: positive("delta", overrides.delta.or(raw.delta).unwrap_or(0.1))?,
            radius: positive("radius", raw.radius.unwrap_or(1.0))?,
            epochs: overrides.epochs.or(raw.epochs).unwrap_or(1000),
        };
        if cfg.seeds == 0 || cfg.n == 0 || cfg.epochs == 0 {
            return Err(BenchError::config("seeds", "seeds, n and epochs must be at least 1"));
        }
        if cfg.d < 2 || cfg.bins < 2 {
            return Err(BenchError::config("d", "d and bins must be at least 2"));
        }
        Ok(cfg)
    }
}
