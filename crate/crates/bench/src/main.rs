use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use cusumrank_bench::config::{Overrides, RunConfig, VerifyConfig};
use cusumrank_bench::pipeline::{Experiment, TrainedPipeline};
use cusumrank_bench::{artifact, report, verify};

#[derive(Parser)]
#[command(name = "cusumrank", version, about = "Online ordinal regression with cumulative-sum rank learners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Override the number of bins (ranks).
    #[arg(long)]
    bins: Option<usize>,
    /// Override the algorithm, or the learner for verify-bounds.
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Override the margin used by cusum-pa and the bound suite.
    #[arg(long)]
    delta: Option<f64>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides { bins: self.bins, algo: self.algo.clone(), seed: self.seed, epochs: self.epochs, delta: self.delta }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train on one fold and write a model artifact.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// CSV metrics report.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        fold: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Predict ranks for feature rows with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Whitespace-separated rows, optionally with the target last.
        /// Defaults to the dataset named in --config.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Select parameters on fold 0 and report MAE over the remaining folds.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the seeded mistake-bound suite; exits nonzero on any violation.
    VerifyBounds {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Directory receiving one running-total CSV per run.
        #[arg(long)]
        ledger_dir: Option<PathBuf>,
        #[arg(long, hide = true)]
        fault_flip_from: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

fn create(path: &Path) -> anyhow::Result<std::io::BufWriter<std::fs::File>> {
    let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(std::io::BufWriter::new(f))
}

fn train(config: &Path, model: &Path, report_path: Option<&Path>, fold: usize, ov: Overrides) -> anyhow::Result<()> {
    let cfg = RunConfig::load(config, &ov).with_context(|| format!("config {}", config.display()))?;
    let algo = cfg.algorithm;
    let exp = Experiment::load(cfg)?;
    exp.split(fold)?;
    let combos = exp.config().grid.combinations(algo);
    let params = if combos.len() == 1 { combos[0].clone() } else { exp.select()?.params().clone() };
    let (pipeline, result) = exp.train_fold(fold, &params)?;
    let described = params.describe(algo);
    artifact::save(&pipeline, model)?;
    if let Some(p) = report_path {
        report::write_train_csv(create(p)?, algo, &described, &result)?;
    }
    print!("{}", report::train_table(algo, &described, &result));
    Ok(())
}

fn read_rows(path: &Path) -> anyhow::Result<Vec<Vec<f64>>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().with_context(|| format!("{}:{}: bad number {t:?}", path.display(), i + 1)))
            .collect::<anyhow::Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn predict(pipeline: &TrainedPipeline, rows: &[Vec<f64>], out: impl Write) -> anyhow::Result<()> {
    let d = pipeline.features.raw_dim();
    let with_target = match rows.first().map(Vec::len) {
        Some(w) if w == d => false,
        Some(w) if w == d + 1 => true,
        Some(w) => bail!("rows hold {w} values; the model expects {d} features, optionally followed by a target"),
        None => false,
    };
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["schema_version", "row", "predicted_rank"];
    if with_target {
        header.extend(["target", "true_rank", "absolute_error"]);
    }
    w.write_record(&header)?;
    for (i, row) in rows.iter().enumerate() {
        if row.len() != d + usize::from(with_target) {
            bail!("row {} holds {} values, expected {}", i + 1, row.len(), d + usize::from(with_target));
        }
        let rank = pipeline.predict_raw(&row[..d])?;
        let mut rec = vec![report::PREDICT_SCHEMA.to_string(), i.to_string(), rank.to_string()];
        if with_target {
            let truth = pipeline.discretizer.rank(row[d]);
            rec.extend([format!("{}", row[d]), truth.to_string(), truth.abs_diff(rank).to_string()]);
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn bench(config: &Path, output: Option<&Path>, ov: Overrides) -> anyhow::Result<()> {
    let cfg = RunConfig::load(config, &ov).with_context(|| format!("config {}", config.display()))?;
    let algo = cfg.algorithm;
    let exp = Experiment::load(cfg)?;
    let res = exp.bench()?;
    match output {
        Some(p) => report::write_bench_csv(create(p)?, algo, &res)?,
        None => report::write_bench_csv(std::io::stdout().lock(), algo, &res)?,
    }
    eprint!("{}", report::bench_table(algo, &res));
    Ok(())
}

fn verify_bounds(
    config: Option<&Path>,
    report_path: Option<&Path>,
    ledger_dir: Option<&Path>,
    fault: Option<usize>,
    ov: Overrides,
) -> anyhow::Result<bool> {
    let cfg = VerifyConfig::load(config, &ov)?;
    let run = verify::run(&cfg, fault)?;
    if let Some(p) = report_path {
        report::write_verify_csv(create(p)?, &run.runs)?;
    }
    if let Some(dir) = ledger_dir {
        verify::export_ledgers(&run, dir)?;
    }
    print!("{}", verify::summary_table(&run));
    for (seed, learner, first) in run.violations() {
        match first {
            Some((kind, step)) => {
                println!("VIOLATION {} seed {seed}: {} exceeded at step {step}", learner.name(), kind.name())
            }
            None => println!("VIOLATION {} seed {seed}: planted problem not separable", learner.name()),
        }
    }
    Ok(run.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Train { config, model, report, fold, common } => {
            train(&config, &model, report.as_deref(), fold, common.overrides()).map(|_| true)
        }
        Command::Predict { model, input, config, output, common } => (|| {
            let pipeline = artifact::load(&model).with_context(|| format!("model {}", model.display()))?;
            let input = match (input, config) {
                (Some(p), _) => p,
                (None, Some(c)) => RunConfig::load(&c, &common.overrides())?.dataset,
                (None, None) => bail!("predict needs --input or --config"),
            };
            let rows = read_rows(&input)?;
            match output {
                Some(p) => predict(&pipeline, &rows, create(&p)?)?,
                None => predict(&pipeline, &rows, std::io::stdout().lock())?,
            }
            Ok(true)
        })(),
        Command::Bench { config, output, common } => {
            bench(&config, output.as_deref(), common.overrides()).map(|_| true)
        }
        Command::VerifyBounds { config, report, ledger_dir, fault_flip_from, common } => verify_bounds(
            config.as_deref(),
            report.as_deref(),
            ledger_dir.as_deref(),
            fault_flip_from,
            common.overrides(),
        ),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
