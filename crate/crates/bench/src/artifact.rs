//! Versioned text format for trained pipelines.
//!
//! Header lines `format=1`, `algo=`, `r=`, `d=` (model input including the
//! bias), `h=` (hidden width, 0 without a feature network), then the
//! preprocessing blocks and one block per level or layer. Floats use 17
//! significant digits so a load/save cycle reproduces the file exactly.

use std::fmt::Write as _;

use cusumrank::cusum::CuSumModel;
use cusumrank::data::{Binning, Discretizer, Normalization, Normalizer};
use cusumrank::ensemble::CountingModel;
use cusumrank::features::{Activation, Mlp};
use cusumrank::kernel::{DualCuSumModel, SupportVector};
use cusumrank::prank::PRankModel;
use cusumrank::WeightStack;

use crate::config::{kernel_spec, parse_kernel, Algorithm};
use crate::error::{BenchError, Result};
use crate::pipeline::{FeatureMap, OrdinalModel, TrainedPipeline};

pub const FORMAT_VERSION: u32 = 1;

fn floats(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(" ")
}

fn ints(v: &[i64]) -> String {
    v.iter().map(i64::to_string).collect::<Vec<_>>().join(" ")
}

fn write_normalizer(out: &mut String, prefix: &str, n: &Normalizer) {
    let _ = writeln!(out, "{prefix}.normalization={}", n.strategy().name());
    let _ = writeln!(out, "{prefix}.offset={}", floats(n.offset()));
    let _ = writeln!(out, "{prefix}.factor={}", floats(n.factor()));
}

fn write_levels(out: &mut String, w: &WeightStack) {
    for k in 1..=w.rank_count() {
        let _ = writeln!(out, "level.{k}={}", floats(w.level(k)));
    }
}

pub fn to_text(p: &TrainedPipeline) -> String {
    let mut out = String::new();
    let h = p.features.mlp.as_ref().map_or(0, |(m, _)| m.hidden());
    let _ = writeln!(out, "format={FORMAT_VERSION}");
    let _ = writeln!(out, "algo={}", p.model.algorithm().name());
    let _ = writeln!(out, "r={}", p.model.rank_count());
    let _ = writeln!(out, "d={}", p.model_dim());
    let _ = writeln!(out, "h={h}");
    let _ = writeln!(out, "raw_dim={}", p.features.raw_dim());
    let _ = writeln!(out, "binning={}", p.discretizer.strategy().name());
    let _ = writeln!(out, "cuts={}", floats(p.discretizer.cuts()));
    write_normalizer(&mut out, "input", &p.features.normalizer);
    if let Some((mlp, norm)) = &p.features.mlp {
        let split = mlp.hidden() * mlp.input_dim() + mlp.hidden();
        let _ = writeln!(out, "mlp.activation={}", mlp.activation().name());
        let _ = writeln!(out, "mlp.target={}", floats(&[mlp.target_mean(), mlp.target_scale()]));
        let _ = writeln!(out, "mlp.hidden_layer={}", floats(&mlp.params()[..split]));
        let _ = writeln!(out, "mlp.output_layer={}", floats(&mlp.params()[split..]));
        write_normalizer(&mut out, "embed", norm);
    }
    match &p.model {
        OrdinalModel::CuSum(m) | OrdinalModel::CuSumPa(m) => write_levels(&mut out, m.weights()),
        OrdinalModel::Counting(m) => write_levels(&mut out, m.weights()),
        OrdinalModel::Prank(m) => {
            let _ = writeln!(out, "direction={}", floats(m.direction()));
            let _ = writeln!(out, "thresholds={}", floats(&m.thresholds()[1..]));
        }
        OrdinalModel::Kernel(m) => {
            let _ = writeln!(out, "kernel={}", kernel_spec(&m.kernel()));
            let _ = writeln!(out, "support={}", m.support().len());
            for (i, sv) in m.support().iter().enumerate() {
                let _ = writeln!(out, "sv.{i}.index={}", sv.index);
                let _ = writeln!(out, "sv.{i}.beta={}", ints(&sv.beta));
                let _ = writeln!(out, "sv.{i}.x={}", floats(&sv.features));
            }
        }
    }
    out
}

/// Reads `key=value` lines in a fixed order.
struct Reader<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        let lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.trim().is_empty()).collect();
        Self { lines, pos: 0 }
    }

    fn err(&self, message: String) -> BenchError {
        let line = self.lines.get(self.pos.saturating_sub(1)).map_or(0, |l| l.0);
        BenchError::Artifact { line, message }
    }

    fn value(&mut self, key: &str) -> Result<&'a str> {
        let Some(&(line, text)) = self.lines.get(self.pos) else {
            return Err(BenchError::Artifact { line: 0, message: format!("missing `{key}`") });
        };
        self.pos += 1;
        match text.split_once('=') {
            Some((k, v)) if k == key => Ok(v),
            _ => Err(BenchError::Artifact { line, message: format!("expected `{key}=`, found {text:?}") }),
        }
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let v = self.value(key)?;
        v.parse().map_err(|_| self.err(format!("bad value {v:?} for `{key}`")))
    }

    fn list<T: std::str::FromStr>(&mut self, key: &str, len: usize) -> Result<Vec<T>> {
        let v = self.value(key)?;
        let out = v
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| self.err(format!("bad number {t:?} in `{key}`"))))
            .collect::<Result<Vec<T>>>()?;
        if out.len() != len {
            return Err(self.err(format!("`{key}` holds {} values, expected {len}", out.len())));
        }
        Ok(out)
    }

    fn named<T>(&mut self, key: &str, parse: impl Fn(&str) -> Option<T>) -> Result<T> {
        let v = self.value(key)?;
        parse(v).ok_or_else(|| self.err(format!("unknown value {v:?} for `{key}`")))
    }

    fn normalizer(&mut self, prefix: &str, dim: usize) -> Result<Normalizer> {
        let strategy = self.named(&format!("{prefix}.normalization"), Normalization::parse)?;
        let offset = self.list(&format!("{prefix}.offset"), dim)?;
        let factor = self.list(&format!("{prefix}.factor"), dim)?;
        Ok(Normalizer::from_parts(strategy, offset, factor)?)
    }

    fn levels(&mut self, r: usize, d: usize) -> Result<WeightStack> {
        let levels = (1..=r).map(|k| self.list(&format!("level.{k}"), d)).collect::<Result<Vec<_>>>()?;
        Ok(WeightStack::from_levels(levels)?)
    }
}

pub fn from_text(text: &str) -> Result<TrainedPipeline> {
    let mut rd = Reader::new(text);
    let version: u32 = rd.parse("format")?;
    if version != FORMAT_VERSION {
        return Err(rd.err(format!("unsupported format {version}")));
    }
    let algo = rd.named("algo", Algorithm::parse)?;
    let r: usize = rd.parse("r")?;
    let d: usize = rd.parse("d")?;
    let h: usize = rd.parse("h")?;
    let raw_dim: usize = rd.parse("raw_dim")?;
    if r < 2 || d < 1 {
        return Err(rd.err(format!("bad shape r={r} d={d}")));
    }
    let binning = rd.named("binning", Binning::parse)?;
    let cuts = rd.list("cuts", r - 1)?;
    let discretizer = Discretizer::from_cuts(binning, cuts)?;
    let normalizer = rd.normalizer("input", raw_dim)?;
    let mlp = if h > 0 {
        if d != h + 1 {
            return Err(rd.err(format!("d={d} does not match h={h}")));
        }
        let activation = rd.named("mlp.activation", Activation::parse)?;
        let target: Vec<f64> = rd.list("mlp.target", 2)?;
        let mut params = rd.list("mlp.hidden_layer", h * raw_dim + h)?;
        params.extend(rd.list::<f64>("mlp.output_layer", h + 1)?);
        let net = Mlp::from_params(raw_dim, h, activation, params, target[0], target[1])?;
        Some((net, rd.normalizer("embed", h)?))
    } else {
        if d != raw_dim + 1 {
            return Err(rd.err(format!("d={d} does not match raw_dim={raw_dim}")));
        }
        None
    };
    let model = match algo {
        Algorithm::CuSum => OrdinalModel::CuSum(CuSumModel::from_weights(rd.levels(r, d)?)),
        Algorithm::CuSumPa => OrdinalModel::CuSumPa(CuSumModel::from_weights(rd.levels(r, d)?)),
        Algorithm::Counting => OrdinalModel::Counting(CountingModel::from_weight_stack(rd.levels(r, d)?)),
        Algorithm::Prank => {
            let u = rd.list("direction", d - 1)?;
            let b: Vec<f64> = rd.list("thresholds", r - 1)?;
            OrdinalModel::Prank(PRankModel::from_parts(u, &b)?)
        }
        Algorithm::KernelCuSum => {
            let kernel = rd.named("kernel", parse_kernel)?;
            let count: usize = rd.parse("support")?;
            let support = (0..count)
                .map(|i| {
                    Ok(SupportVector {
                        index: rd.parse(&format!("sv.{i}.index"))?,
                        beta: rd.list(&format!("sv.{i}.beta"), r - 1)?,
                        features: rd.list(&format!("sv.{i}.x"), d)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            OrdinalModel::Kernel(DualCuSumModel::from_support(kernel, r, d, support)?)
        }
    };
    if rd.pos != rd.lines.len() {
        let (line, text) = rd.lines[rd.pos];
        return Err(BenchError::Artifact { line, message: format!("unexpected trailing line {text:?}") });
    }
    Ok(TrainedPipeline { features: FeatureMap { normalizer, mlp }, discretizer, model })
}

pub fn save(p: &TrainedPipeline, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, to_text(p))?;
    Ok(())
}

pub fn load(path: &std::path::Path) -> Result<TrainedPipeline> {
    from_text(&std::fs::read_to_string(path)?)
}
