//! CSV and text reports. Every CSV starts with a `schema_version` column so
//! consumers can reject files written by a different layout.

use std::io::Write;

use cusumrank::synthlab::BoundReport;

use crate::config::Algorithm;
use crate::error::Result;
use crate::pipeline::{BenchResult, FoldResult};

pub const BENCH_SCHEMA: &str = "bench/1";
pub const TRAIN_SCHEMA: &str = "train/1";
pub const PREDICT_SCHEMA: &str = "predict/1";
pub const VERIFY_SCHEMA: &str = "verify/1";

pub const BENCH_HEADER: [&str; 9] =
    ["schema_version", "row", "fold", "train_mae", "test_mae", "mistakes", "epochs_run", "converged", "params"];
pub const TRAIN_HEADER: [&str; 9] =
    ["schema_version", "algorithm", "fold", "train_mae", "test_mae", "mistakes", "epochs_run", "converged", "params"];
pub const VERIFY_HEADER: [&str; 10] = [
    "schema_version",
    "seed",
    "learner",
    "separable",
    "bound",
    "bound_value",
    "observed",
    "violation_step",
    "converged",
    "final_epoch_mistakes",
];

fn fold_fields(f: &FoldResult) -> [String; 5] {
    [
        format!("{}", f.train_mae),
        format!("{}", f.test_mae),
        f.mistakes.to_string(),
        f.epochs_run.to_string(),
        f.converged.to_string(),
    ]
}

pub fn write_bench_csv<W: Write>(out: W, algo: Algorithm, res: &BenchResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BENCH_HEADER)?;
    let params = res.selection.params().describe(algo);
    for f in &res.folds {
        let mut rec = vec![BENCH_SCHEMA.to_string(), "fold".into(), f.fold.to_string()];
        rec.extend(fold_fields(f));
        rec.push(params.clone());
        w.write_record(&rec)?;
    }
    for (row, v) in [("mean", res.mean_test_mae()), ("stderr", res.stderr_test_mae())] {
        w.write_record([BENCH_SCHEMA, row, "", "", &format!("{v}"), "", "", "", &params])?;
    }
    w.flush()?;
    Ok(())
}

pub fn bench_table(algo: Algorithm, res: &BenchResult) -> String {
    let mut s = format!("algorithm {}  selected {}\n", algo.name(), res.selection.params().describe(algo));
    s.push_str(&format!("{:>6} {:>10} {:>10} {:>9} {:>7}\n", "fold", "train_mae", "test_mae", "mistakes", "epochs"));
    for f in &res.folds {
        s.push_str(&format!(
            "{:>6} {:>10.4} {:>10.4} {:>9} {:>7}\n",
            f.fold, f.train_mae, f.test_mae, f.mistakes, f.epochs_run
        ));
    }
    s.push_str(&format!("{:>6} {:>10} {:>10.4}\n", "mean", "", res.mean_test_mae()));
    s.push_str(&format!("{:>6} {:>10} {:>10.4}\n", "stderr", "", res.stderr_test_mae()));
    s
}

pub fn write_train_csv<W: Write>(out: W, algo: Algorithm, params: &str, f: &FoldResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAIN_HEADER)?;
    let mut rec = vec![TRAIN_SCHEMA.to_string(), algo.name().into(), f.fold.to_string()];
    rec.extend(fold_fields(f));
    rec.push(params.to_string());
    w.write_record(&rec)?;
    w.flush()?;
    Ok(())
}

pub fn train_table(algo: Algorithm, params: &str, f: &FoldResult) -> String {
    format!(
        "algorithm {}  fold {}  {}\ntrain_mae  {:.4}\ntest_mae   {:.4}\nmistakes   {}\nepochs     {}{}\n",
        algo.name(),
        f.fold,
        params,
        f.train_mae,
        f.test_mae,
        f.mistakes,
        f.epochs_run,
        if f.converged { " (converged)" } else { "" },
    )
}

/// One row per checked bound; reports without checks get a single row with
/// an empty bound column.
pub fn write_verify_csv<W: Write>(out: W, runs: &[(u64, BoundReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(VERIFY_HEADER)?;
    for (seed, rep) in runs {
        let head =
            [VERIFY_SCHEMA.to_string(), seed.to_string(), rep.learner.name().into(), rep.separable().to_string()];
        let tail = [rep.converged.to_string(), rep.final_epoch_mistakes.to_string()];
        if rep.checks.is_empty() {
            let mut rec = head.to_vec();
            rec.extend(["".into(), "".into(), "".into(), "".into()]);
            rec.extend(tail.clone());
            w.write_record(&rec)?;
        }
        for c in &rep.checks {
            let mut rec = head.to_vec();
            rec.extend([
                c.kind.name().to_string(),
                format!("{}", c.bound),
                format!("{}", c.observed),
                c.violation.map_or(String::new(), |v| v.to_string()),
            ]);
            rec.extend(tail.clone());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Params;
    use crate::pipeline::Selection;

    fn fold(k: usize, mae: f64) -> FoldResult {
        FoldResult { fold: k, train_mae: 0.1, test_mae: mae, mistakes: 7, epochs_run: 3, converged: false }
    }

    fn result() -> BenchResult {
        BenchResult {
            selection: Selection { best: 0, candidates: vec![(Params::default(), fold(0, 0.5))] },
            folds: vec![fold(1, 0.25), fold(2, 0.75)],
        }
    }

    #[test]
    fn bench_csv_is_schema_stable() {
        let mut buf = Vec::new();
        write_bench_csv(&mut buf, Algorithm::CuSum, &result()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], BENCH_HEADER.join(","));
        assert_eq!(lines.len(), 5);
        assert!(lines[3].starts_with("bench/1,mean,,,0.5,"));
        assert!(lines[4].starts_with("bench/1,stderr,,,0.25,"));
    }

    #[test]
    fn table_uses_four_decimals() {
        let t = bench_table(Algorithm::CuSum, &result());
        assert!(t.contains("0.2500") && t.contains("0.7500") && t.contains("0.5000"));
    }

    #[test]
    fn train_report_lists_the_metrics() {
        let mut buf = Vec::new();
        write_train_csv(&mut buf, Algorithm::Prank, "epochs=3", &fold(0, 0.5)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "train/1,prank,0,0.1,0.5,7,3,false,epochs=3");
        assert!(train_table(Algorithm::Prank, "", &fold(0, 0.5)).contains("mistakes   7"));
    }
}
