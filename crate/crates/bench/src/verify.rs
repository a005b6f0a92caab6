//! Seeded bound suite over planted problems.

use std::path::Path;

use cusumrank::synthlab::{
    generate_prank_separable, generate_rank_separable, verify_bounds, BoundKind, BoundReport, Learner, VerifyOptions,
};
use rayon::prelude::*;

use crate::config::VerifyConfig;
use crate::error::{BenchError, Result};

/// Seed, learner and the first exceeded bound with its step, if any.
pub type Violation = (u64, Learner, Option<(BoundKind, usize)>);

#[derive(Debug, Clone)]
pub struct VerifyRun {
    /// `(seed, report)` ordered by learner then seed.
    pub runs: Vec<(u64, BoundReport)>,
}

impl VerifyRun {
    pub fn passed(&self) -> bool {
        self.runs.iter().all(|(_, r)| r.passed())
    }

    /// Seed, learner, bound and step of every failing run.
    pub fn violations(&self) -> Vec<Violation> {
        self.runs.iter().filter(|(_, r)| !r.passed()).map(|(s, r)| (*s, r.learner, r.first_violation())).collect()
    }
}

/// Rejects configurations whose bounds would be asserted outside their
/// stated range.
pub fn check_config(cfg: &VerifyConfig) -> Result<()> {
    if cfg.delta > 1.0 && cfg.learners.contains(&Learner::CusumPa) {
        return Err(BenchError::Refused(format!(
            "delta = {} > 1: the passive-aggressive absolute-loss bound R^2/delta^4 only holds for delta <= 1; \
             lower --delta or drop cusum-pa from the learners",
            cfg.delta
        )));
    }
    Ok(())
}

fn problem(cfg: &VerifyConfig, learner: Learner, seed: u64) -> Result<cusumrank::synthlab::PlantedProblem> {
    let gen = if learner == Learner::Prank { generate_prank_separable } else { generate_rank_separable };
    Ok(gen(seed, cfg.n, cfg.d, cfg.bins, cfg.delta, cfg.radius)?)
}

/// Runs every learner on `cfg.seeds` planted problems, seeds
/// `cfg.seed..cfg.seed + cfg.seeds`, in parallel over seeds.
pub fn run(cfg: &VerifyConfig, sign_fault: Option<usize>) -> Result<VerifyRun> {
    check_config(cfg)?;
    let opts = VerifyOptions { epochs: cfg.epochs, sign_fault };
    let jobs: Vec<(Learner, u64)> =
        cfg.learners.iter().flat_map(|&l| (0..cfg.seeds as u64).map(move |i| (l, cfg.seed + i))).collect();
    let runs = jobs
        .into_par_iter()
        .map(|(learner, seed)| Ok((seed, verify_bounds(&problem(cfg, learner, seed)?, learner, &opts)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(VerifyRun { runs })
}

/// Writes one ledger CSV per run as `<learner>-<seed>.csv`.
pub fn export_ledgers(run: &VerifyRun, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (seed, rep) in &run.runs {
        if let Some(ledger) = &rep.ledger {
            let file = std::fs::File::create(dir.join(format!("{}-{seed}.csv", rep.learner.name())))?;
            ledger.write_csv(std::io::BufWriter::new(file))?;
        }
    }
    Ok(())
}

/// Per learner and bound: runs, failures, largest observed/bound ratio.
pub fn summary_table(run: &VerifyRun) -> String {
    let mut s = format!(
        "{:<15} {:>6} {:>6} {:>6} {:>10} {:>10}\n",
        "learner", "bound", "runs", "fail", "max_ratio", "converged"
    );
    let mut learners: Vec<Learner> = Vec::new();
    for (_, r) in &run.runs {
        if !learners.contains(&r.learner) {
            learners.push(r.learner);
        }
    }
    for l in learners {
        let reps: Vec<&BoundReport> = run.runs.iter().filter(|(_, r)| r.learner == l).map(|(_, r)| r).collect();
        let converged = reps.iter().filter(|r| r.converged).count();
        let unseparable = reps.iter().filter(|r| !r.separable()).count();
        if unseparable > 0 {
            s.push_str(&format!(
                "{:<15} {:>6} {:>6} {:>6} {:>10} {:>10}\n",
                l.name(),
                "-",
                reps.len(),
                unseparable,
                "",
                ""
            ));
        }
        let mut kinds: Vec<BoundKind> = Vec::new();
        for r in &reps {
            for c in &r.checks {
                if !kinds.contains(&c.kind) {
                    kinds.push(c.kind);
                }
            }
        }
        for k in kinds {
            let checks: Vec<_> = reps.iter().flat_map(|r| r.checks.iter().filter(move |c| c.kind == k)).collect();
            let fails = checks.iter().filter(|c| !c.passed()).count();
            let ratio = checks.iter().map(|c| c.observed / c.bound).fold(0.0, f64::max);
            s.push_str(&format!(
                "{:<15} {:>6} {:>6} {:>6} {:>10.4} {:>10}\n",
                l.name(),
                k.name(),
                checks.len(),
                fails,
                ratio,
                format!("{converged}/{}", reps.len())
            ));
        }
    }
    s
}
