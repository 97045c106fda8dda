//! Macro precision/recall/F1, per-context-length breakdowns, Welch's
//! t-test and report rendering. Metrics are percentages.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::corpus::ImpactClass3;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {golds} gold labels vs {preds} predictions")]
    LengthMismatch { golds: usize, preds: usize },
    #[error("no labels to evaluate")]
    Empty,
    #[error("need at least 2 values per sample, got {0}")]
    TooFewValues(usize),
    #[error("unknown report format `{0}` (expected text or kv)")]
    UnknownFormat(String),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Rows are gold labels, columns predictions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn new(golds: &[ImpactClass3], preds: &[ImpactClass3]) -> Result<Self> {
        if golds.len() != preds.len() {
            return Err(EvalError::LengthMismatch {
                golds: golds.len(),
                preds: preds.len(),
            });
        }
        let mut counts = [[0u64; 3]; 3];
        for (g, p) in golds.iter().zip(preds) {
            counts[g.index()][p.index()] += 1;
        }
        Ok(Self { counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let diag: u64 = (0..3).map(|i| self.counts[i][i]).sum();
        match self.total() {
            0 => 0.0,
            t => 100.0 * diag as f64 / t as f64,
        }
    }

    /// Per-class metrics; undefined precision or recall counts as 0.
    pub fn per_class(&self) -> [Prf; 3] {
        std::array::from_fn(|k| {
            let tp = self.counts[k][k] as f64;
            let predicted: u64 = (0..3).map(|g| self.counts[g][k]).sum();
            let actual: u64 = self.counts[k].iter().sum();
            let p = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
            let r = if actual == 0 { 0.0 } else { tp / actual as f64 };
            let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            Prf {
                precision: 100.0 * p,
                recall: 100.0 * r,
                f1: 100.0 * f,
            }
        })
    }

    /// Unweighted means of the per-class metrics.
    pub fn macro_prf(&self) -> Prf {
        let pc = self.per_class();
        Prf {
            precision: pc.iter().map(|m| m.precision).sum::<f64>() / 3.0,
            recall: pc.iter().map(|m| m.recall).sum::<f64>() / 3.0,
            f1: pc.iter().map(|m| m.f1).sum::<f64>() / 3.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn macro_prf(golds: &[ImpactClass3], preds: &[ImpactClass3]) -> Result<Prf> {
    if golds.is_empty() && preds.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(ConfusionMatrix::new(golds, preds)?.macro_prf())
}

/// Context lengths reported separately.
pub const CONTEXT_BUCKETS: [usize; 4] = [1, 2, 3, 4];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub n: usize,
    pub prf: Prf,
}

/// Macro metrics restricted to claims with C_l = 1, 2, 3 and 4. Empty
/// buckets are absent from the map; longer contexts are not bucketed.
pub fn per_context_length(
    golds: &[ImpactClass3],
    preds: &[ImpactClass3],
    context_lengths: &[usize],
) -> Result<BTreeMap<usize, Bucket>> {
    if golds.len() != preds.len() || golds.len() != context_lengths.len() {
        return Err(EvalError::LengthMismatch {
            golds: golds.len(),
            preds: preds.len().min(context_lengths.len()),
        });
    }
    let mut out = BTreeMap::new();
    for b in CONTEXT_BUCKETS {
        let (g, p): (Vec<_>, Vec<_>) = golds
            .iter()
            .zip(preds)
            .zip(context_lengths)
            .filter(|(_, &l)| l == b)
            .map(|((g, p), _)| (*g, *p))
            .unzip();
        if !g.is_empty() {
            out.insert(
                b,
                Bucket {
                    n: g.len(),
                    prf: macro_prf(&g, &p)?,
                },
            );
        }
    }
    Ok(out)
}

/// Two-sided Welch t-test; returns the p-value. When both samples have zero
/// variance the result is 1 for equal means and 0 otherwise.
pub fn t_test_two_sided(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(welch(a, b)?.p_value)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

pub fn welch(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(EvalError::TooFewValues(s.len()));
        }
    }
    let (ma, va) = (mean(a), sample_variance(a));
    let (mb, vb) = (mean(b), sample_variance(b));
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if se2 == 0.0 {
        let same = ma == mb;
        return Ok(WelchResult {
            t: if same { 0.0 } else { f64::INFINITY.copysign(ma - mb) },
            df: f64::NAN,
            p_value: if same { 1.0 } else { 0.0 },
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (a.len() - 1) as f64 + sb * sb / (b.len() - 1) as f64);
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    let p = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    Ok(WelchResult { t, df, p_value: p })
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Variance with the n - 1 denominator (0 for fewer than two values).
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn sample_std(xs: &[f64]) -> f64 {
    sample_variance(xs).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub accuracy: f64,
    pub macro_avg: Prf,
    pub per_class: [Prf; 3],
    pub confusion: ConfusionMatrix,
    pub by_context_length: BTreeMap<usize, Bucket>,
}

impl EvalReport {
    pub fn new(golds: &[ImpactClass3], preds: &[ImpactClass3], context_lengths: &[usize]) -> Result<Self> {
        if golds.is_empty() {
            return Err(EvalError::Empty);
        }
        let confusion = ConfusionMatrix::new(golds, preds)?;
        Ok(Self {
            n: golds.len(),
            accuracy: confusion.accuracy(),
            macro_avg: confusion.macro_prf(),
            per_class: confusion.per_class(),
            confusion,
            by_context_length: per_context_length(golds, preds, context_lengths)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Kv,
}

impl std::str::FromStr for ReportFormat {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "kv" => Ok(ReportFormat::Kv),
            other => Err(EvalError::UnknownFormat(other.to_string())),
        }
    }
}

pub fn fmt2(x: f64) -> String {
    format!("{x:.2}")
}

pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    let mut s = String::new();
    match format {
        ReportFormat::Text => {
            let _ = writeln!(s, "claims evaluated: {}", report.n);
            let _ = writeln!(s, "accuracy: {}", fmt2(report.accuracy));
            let _ = writeln!(s);
            let _ = writeln!(s, "{:<14} {:>9} {:>9} {:>9}", "class", "precision", "recall", "f1");
            let row = |s: &mut String, name: &str, m: &Prf| {
                let _ = writeln!(
                    s,
                    "{:<14} {:>9} {:>9} {:>9}",
                    name,
                    fmt2(m.precision),
                    fmt2(m.recall),
                    fmt2(m.f1)
                );
            };
            for c in ImpactClass3::ALL {
                row(&mut s, c.name(), &report.per_class[c.index()]);
            }
            row(&mut s, "macro", &report.macro_avg);
            if !report.by_context_length.is_empty() {
                let _ = writeln!(s);
                let _ = writeln!(s, "{:<14} {:>9} {:>9}", "context_length", "n", "f1");
                for (len, b) in &report.by_context_length {
                    let _ = writeln!(s, "{:<14} {:>9} {:>9}", len, b.n, fmt2(b.prf.f1));
                }
            }
            let _ = writeln!(s);
            let _ = writeln!(s, "confusion (rows gold, columns predicted)");
            for g in ImpactClass3::ALL {
                let c = report.confusion.counts[g.index()];
                let _ = writeln!(s, "{:<14} {:>9} {:>9} {:>9}", g.name(), c[0], c[1], c[2]);
            }
        }
        ReportFormat::Kv => {
            let _ = writeln!(s, "n={}", report.n);
            let _ = writeln!(s, "accuracy={}", fmt2(report.accuracy));
            let _ = writeln!(s, "macro.precision={}", fmt2(report.macro_avg.precision));
            let _ = writeln!(s, "macro.recall={}", fmt2(report.macro_avg.recall));
            let _ = writeln!(s, "macro.f1={}", fmt2(report.macro_avg.f1));
            for c in ImpactClass3::ALL {
                let m = &report.per_class[c.index()];
                let _ = writeln!(s, "class.{}.precision={}", c.name(), fmt2(m.precision));
                let _ = writeln!(s, "class.{}.recall={}", c.name(), fmt2(m.recall));
                let _ = writeln!(s, "class.{}.f1={}", c.name(), fmt2(m.f1));
            }
            for (len, b) in &report.by_context_length {
                let _ = writeln!(s, "context_length.{len}.n={}", b.n);
                let _ = writeln!(s, "context_length.{len}.f1={}", fmt2(b.prf.f1));
            }
            for g in ImpactClass3::ALL {
                for p in ImpactClass3::ALL {
                    let _ = writeln!(
                        s,
                        "confusion.{}.{}={}",
                        g.name(),
                        p.name(),
                        report.confusion.counts[g.index()][p.index()]
                    );
                }
            }
        }
    }
    s
}
