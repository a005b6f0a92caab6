//! Per-fold preparation, training and evaluation.
//!
//! A fold fits its normalizer (and the optional feature network) on the
//! training rows only. Target bins are a property of the dataset and are
//! fitted once on all targets. Fold 0 selects the grid point; the
//! remaining folds report.

use cusumrank::cusum::{CuSumModel, CuSumProblem};
use cusumrank::data::{load_raw, parse_partitions, partition, Discretizer, Normalizer, RawDataset, Split};
use cusumrank::engine::{train_online, OnlineOptions, TrainOptions, UpdateRule};
use cusumrank::ensemble::{self, CountingModel};
use cusumrank::features::{train_mlp, Mlp, MlpConfig};
use cusumrank::kernel::{dual_fit_online, DualCuSumModel};
use cusumrank::prank::{PRankModel, PRankProblem};
use cusumrank::{mean_absolute_error, LossFn, Rank, RankedDataset, RankedExample, WeightStack};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{Algorithm, MlpSettings, Params, RunConfig, SplitSource};
use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum OrdinalModel {
    CuSum(CuSumModel),
    CuSumPa(CuSumModel),
    Prank(PRankModel),
    Counting(CountingModel),
    Kernel(DualCuSumModel),
}

impl OrdinalModel {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            OrdinalModel::CuSum(_) => Algorithm::CuSum,
            OrdinalModel::CuSumPa(_) => Algorithm::CuSumPa,
            OrdinalModel::Prank(_) => Algorithm::Prank,
            OrdinalModel::Counting(_) => Algorithm::Counting,
            OrdinalModel::Kernel(_) => Algorithm::KernelCuSum,
        }
    }

    pub fn rank_count(&self) -> usize {
        match self {
            OrdinalModel::CuSum(m) | OrdinalModel::CuSumPa(m) => m.rank_count(),
            OrdinalModel::Prank(m) => m.rank_count(),
            OrdinalModel::Counting(m) => m.rank_count(),
            OrdinalModel::Kernel(m) => m.rank_count(),
        }
    }

    /// Predicts from a biased feature vector.
    pub fn predict(&self, x: &[f64]) -> cusumrank::Result<Rank> {
        match self {
            OrdinalModel::CuSum(m) | OrdinalModel::CuSumPa(m) => m.predict(x),
            OrdinalModel::Prank(m) => m.predict_features(x),
            OrdinalModel::Counting(m) => m.predict(x),
            OrdinalModel::Kernel(m) => m.predict(x),
        }
    }
}

/// Raw features to the biased vector the ordinal model reads.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub normalizer: Normalizer,
    /// Feature network and the normalizer fitted on its embeddings.
    pub mlp: Option<(Mlp, Normalizer)>,
}

impl FeatureMap {
    pub fn raw_dim(&self) -> usize {
        self.normalizer.dim()
    }

    /// The model input without the bias.
    pub fn unbiased(&self, raw: &[f64]) -> Result<Vec<f64>> {
        let z = self.normalizer.transform(raw)?;
        Ok(match &self.mlp {
            Some((mlp, norm)) => norm.transform(&mlp.embed(&z)?)?,
            None => z,
        })
    }

    pub fn transform(&self, raw: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.unbiased(raw)?;
        x.push(cusumrank::BIAS);
        Ok(x)
    }

    fn transform_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.unbiased(r)).collect()
    }
}

/// Everything needed to rank a raw feature row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPipeline {
    pub features: FeatureMap,
    pub discretizer: Discretizer,
    pub model: OrdinalModel,
}

impl TrainedPipeline {
    pub fn predict_raw(&self, raw: &[f64]) -> Result<Rank> {
        Ok(self.model.predict(&self.features.transform(raw)?)?)
    }

    /// Dimension of the model input including the bias.
    pub fn model_dim(&self) -> usize {
        match &self.features.mlp {
            Some((mlp, _)) => mlp.hidden() + 1,
            None => self.features.raw_dim() + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub train_mae: f64,
    pub test_mae: f64,
    pub mistakes: usize,
    pub epochs_run: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub best: usize,
    pub candidates: Vec<(Params, FoldResult)>,
}

impl Selection {
    pub fn params(&self) -> &Params {
        &self.candidates[self.best].0
    }
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub selection: Selection,
    pub folds: Vec<FoldResult>,
}

impl BenchResult {
    pub fn mean_test_mae(&self) -> f64 {
        mean(self.folds.iter().map(|f| f.test_mae))
    }

    /// Sample standard deviation over folds divided by `sqrt(folds)`.
    pub fn stderr_test_mae(&self) -> f64 {
        let k = self.folds.len();
        if k < 2 {
            return 0.0;
        }
        let m = self.mean_test_mae();
        let var = self.folds.iter().map(|f| (f.test_mae - m).powi(2)).sum::<f64>() / (k - 1) as f64;
        (var / k as f64).sqrt()
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    s / n as f64
}

/// Seed of fold `fold`; distinct folds get unrelated streams.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed ^ (fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

struct PreparedFold {
    features: FeatureMap,
    train: RankedDataset,
    test: RankedDataset,
}

pub struct Experiment {
    config: RunConfig,
    raw: RawDataset,
    discretizer: Discretizer,
    ranks: Vec<Rank>,
    splits: Vec<Split>,
}

impl Experiment {
    pub fn load(config: RunConfig) -> Result<Self> {
        let raw = load_raw(&config.dataset)?;
        Self::new(config, raw)
    }

    pub fn new(config: RunConfig, raw: RawDataset) -> Result<Self> {
        let discretizer = Discretizer::fit(raw.targets(), config.binning, config.bins)?;
        let ranks = discretizer.ranks(raw.targets());
        let n = raw.len();
        let splits = match &config.split {
            SplitSource::Whole => vec![Split { train: (0..n).collect(), test: (0..n).collect() }; config.folds],
            SplitSource::Fraction(f) => (0..config.folds)
                .map(|k| partition(n, fold_seed(config.seed, k), *f))
                .collect::<cusumrank::Result<_>>()?,
            SplitSource::Size(m) => {
                if *m >= n {
                    return Err(BenchError::config("train_size", format!("{m} leaves no test rows out of {n}")));
                }
                let f = *m as f64 / n as f64;
                (0..config.folds)
                    .map(|k| partition(n, fold_seed(config.seed, k), f))
                    .collect::<cusumrank::Result<_>>()?
            }
            SplitSource::File(p) => {
                let mut all = parse_partitions(std::fs::File::open(p)?, n)?;
                if all.len() < config.folds {
                    return Err(BenchError::FoldOutOfRange { fold: config.folds - 1, count: all.len() });
                }
                all.truncate(config.folds);
                all
            }
        };
        Ok(Self { config, raw, discretizer, ranks, splits })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn raw(&self) -> &RawDataset {
        &self.raw
    }

    pub fn discretizer(&self) -> &Discretizer {
        &self.discretizer
    }

    pub fn ranks(&self) -> &[Rank] {
        &self.ranks
    }

    pub fn fold_count(&self) -> usize {
        self.splits.len()
    }

    pub fn split(&self, fold: usize) -> Result<&Split> {
        self.splits.get(fold).ok_or(BenchError::FoldOutOfRange { fold, count: self.splits.len() })
    }

    fn prepare(&self, fold: usize, normalization: cusumrank::data::Normalization) -> Result<PreparedFold> {
        let split = self.split(fold)?;
        let seed = fold_seed(self.config.seed, fold);
        let mut order = split.train.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

        let rows = |idx: &[usize]| idx.iter().map(|&i| self.raw.features()[i].clone()).collect::<Vec<_>>();
        let train_rows = rows(&order);
        let test_rows = rows(&split.test);
        let normalizer = Normalizer::fit(normalization, &train_rows)?;
        let mut features = FeatureMap { normalizer, mlp: None };

        if let Some(settings) = &self.config.mlp {
            let z = features.transform_rows(&train_rows)?;
            let targets: Vec<f64> = order.iter().map(|&i| self.raw.targets()[i]).collect();
            let mlp = fit_feature_network(&z, &targets, settings, seed)?;
            let emb: Vec<Vec<f64>> = z.iter().map(|x| mlp.embed(x)).collect::<cusumrank::Result<_>>()?;
            let emb_norm = Normalizer::fit(normalization, &emb)?;
            features.mlp = Some((mlp, emb_norm));
        }

        let r = self.config.bins;
        let labels = |idx: &[usize]| idx.iter().map(|&i| self.ranks[i]).collect::<Vec<_>>();
        let build = |rows: &[Vec<f64>], idx: &[usize]| -> Result<RankedDataset> {
            let examples = features
                .transform_rows(rows)?
                .iter()
                .zip(labels(idx))
                .map(|(z, y)| RankedExample::from_unbiased(z, y))
                .collect();
            Ok(RankedDataset::new(examples, r)?)
        };
        let train = build(&train_rows, &order)?;
        let test = build(&test_rows, &split.test)?;
        Ok(PreparedFold { features, train, test })
    }

    fn run_prepared(&self, fold: usize, prep: &PreparedFold, params: &Params) -> Result<(TrainedPipeline, FoldResult)> {
        let seed = fold_seed(self.config.seed, fold);
        let (model, mistakes, epochs_run, converged) = fit_model(self.config.algorithm, params, &prep.train, seed)?;
        let mae = |data: &RankedDataset| -> Result<f64> {
            let pred = data.iter().map(|ex| model.predict(&ex.features)).collect::<cusumrank::Result<Vec<_>>>()?;
            Ok(mean_absolute_error(&pred, &data.ranks())?)
        };
        let result = FoldResult {
            fold,
            train_mae: mae(&prep.train)?,
            test_mae: mae(&prep.test)?,
            mistakes,
            epochs_run,
            converged,
        };
        let pipeline =
            TrainedPipeline { features: prep.features.clone(), discretizer: self.discretizer.clone(), model };
        Ok((pipeline, result))
    }

    /// Trains one grid point on one fold.
    pub fn train_fold(&self, fold: usize, params: &Params) -> Result<(TrainedPipeline, FoldResult)> {
        let prep = self.prepare(fold, params.normalization)?;
        self.run_prepared(fold, &prep, params)
    }

    /// Evaluates every grid point on fold 0 and keeps the lowest test MAE
    /// (first one on ties).
    pub fn select(&self) -> Result<Selection> {
        let combos = self.config.grid.combinations(self.config.algorithm);
        let preps = self
            .config
            .grid
            .normalization
            .par_iter()
            .map(|&n| Ok((n, self.prepare(0, n)?)))
            .collect::<Result<Vec<_>>>()?;
        let candidates = combos
            .into_par_iter()
            .map(|p| {
                let prep = &preps.iter().find(|(n, _)| *n == p.normalization).expect("prepared above").1;
                let (_, res) = self.run_prepared(0, prep, &p)?;
                Ok((p, res))
            })
            .collect::<Result<Vec<_>>>()?;
        let best = candidates
            .iter()
            .enumerate()
            .fold(0, |b, (i, c)| if c.1.test_mae < candidates[b].1.test_mae { i } else { b });
        Ok(Selection { best, candidates })
    }

    /// Folds used for reporting: all but the selection fold, or fold 0
    /// alone when there is only one.
    pub fn report_folds(&self) -> Vec<usize> {
        if self.splits.len() == 1 {
            vec![0]
        } else {
            (1..self.splits.len()).collect()
        }
    }

    pub fn bench(&self) -> Result<BenchResult> {
        let selection = self.select()?;
        let params = selection.params().clone();
        let folds = self
            .report_folds()
            .into_par_iter()
            .map(|k| Ok(self.train_fold(k, &params)?.1))
            .collect::<Result<Vec<_>>>()?;
        Ok(BenchResult { selection, folds })
    }
}

fn fit_feature_network(z: &[Vec<f64>], targets: &[f64], s: &MlpSettings, seed: u64) -> Result<Mlp> {
    let split = partition(z.len(), seed ^ 0xfeed, 1.0 - s.validation_fraction)?;
    let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<f64>) {
        (idx.iter().map(|&i| z[i].clone()).collect(), idx.iter().map(|&i| targets[i]).collect())
    };
    let (tx, ty) = pick(&split.train);
    let (vx, vy) = pick(&split.test);
    let cfg = MlpConfig {
        hidden: s.hidden,
        learning_rate: s.learning_rate,
        patience: s.patience,
        max_epochs: s.max_epochs,
        activation: s.activation,
        batch_size: s.batch_size,
        freeze_hidden: false,
        seed,
    };
    Ok(train_mlp(&tx, &ty, &vx, &vy, &cfg)?.model)
}

/// Trains the configured ordinal learner; returns the model, training
/// mistakes, epochs run and whether an epoch finished without mistakes.
pub fn fit_model(
    algo: Algorithm,
    params: &Params,
    train: &RankedDataset,
    seed: u64,
) -> Result<(OrdinalModel, usize, usize, bool)> {
    let (r, d) = (train.rank_count(), train.dim());
    let engine_opts = TrainOptions {
        epochs: params.epochs,
        averaging: params.averaging,
        cost_augment: (algo.uses_cost() && params.cost_scale > 0.0).then_some((LossFn::Absolute, params.cost_scale)),
        shrinkage: params.shrinkage,
        shuffle_seed: Some(seed),
        trace_loss: LossFn::Absolute,
        stop_when_converged: true,
    };
    let online = OnlineOptions::with_epochs(params.epochs);
    Ok(match algo {
        Algorithm::CuSum | Algorithm::CuSumPa => {
            let rule = if algo == Algorithm::CuSum {
                UpdateRule::Vanilla
            } else {
                UpdateRule::PassiveAggressive(LossFn::ScaledZeroOne(params.delta))
            };
            let out = train_online(&CuSumProblem::for_dataset(train), rule, train, &engine_opts)?;
            let mistakes = out.trace.mistakes();
            let w = out.averaged.unwrap_or(out.weights);
            let m = CuSumModel::from_weights(WeightStack::from_flat(r, d, w)?);
            let model = if algo == Algorithm::CuSum { OrdinalModel::CuSum(m) } else { OrdinalModel::CuSumPa(m) };
            (model, mistakes, out.epochs_run, out.converged)
        }
        Algorithm::Prank => {
            let out = train_online(&PRankProblem::for_dataset(train), UpdateRule::Vanilla, train, &engine_opts)?;
            let w = out.averaged.as_deref().unwrap_or(&out.weights);
            let m = PRankModel::from_structured(w, d - 1)?;
            (OrdinalModel::Prank(m), out.trace.mistakes(), out.epochs_run, out.converged)
        }
        Algorithm::Counting => {
            let fit = ensemble::fit_online(train, &online)?;
            (OrdinalModel::Counting(fit.model), fit.mistakes.iter().sum(), fit.epochs_run, fit.converged)
        }
        Algorithm::KernelCuSum => {
            let fit = dual_fit_online(train, params.kernel, &online, true)?;
            (OrdinalModel::Kernel(fit.model), fit.trace.mistakes(), fit.epochs_run, fit.converged)
        }
    })
}
