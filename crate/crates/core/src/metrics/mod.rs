//! Evaluation metrics: CPass, Pass@k, BLEU, keyword-weighted n-gram BLEU,
//! error histograms and Pearson correlation.

mod bleu;
mod passk;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::ErrorType;

pub use bleu::{
    bleu, code_tokenize, corpus_bleu, corpus_weighted_ngram_bleu, weighted_ngram_bleu, KEYWORDS, SMOOTHING,
};
pub use passk::{aggregate_pass_at_k, cpass, pass_at_k, SampleOutcome};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("k must satisfy 1 <= k <= n (n = {n}, k = {k})")]
    BadK { n: u64, k: u64 },
    #[error("count {c} exceeds sample count {n}")]
    BadCount { n: u64, c: u64 },
    #[error("no data")]
    Empty,
    #[error("reference is empty")]
    EmptyReference,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least two points")]
    TooShort,
    #[error("constant series has no correlation")]
    Constant,
}

/// Count error types. Every type appears as a key, so the counts always sum
/// to the number of inputs; `None` is counted as `unknown`.
pub fn error_histogram<I>(types: I) -> BTreeMap<ErrorType, usize>
where
    I: IntoIterator<Item = Option<ErrorType>>,
{
    let mut h: BTreeMap<ErrorType, usize> = ErrorType::ALL.iter().map(|t| (*t, 0)).collect();
    for t in types {
        *h.entry(t.unwrap_or(ErrorType::Unknown)).or_insert(0) += 1;
    }
    h
}

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, MetricsError> {
    if xs.len() != ys.len() {
        return Err(MetricsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(MetricsError::TooShort);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::Constant);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Everything `evaluate` reports. Rates are in [0, 1]; scaling for display
/// happens at render time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub bleu: f64,
    /// Only the keyword-weighted n-gram component of CodeBLEU.
    pub codebleu_ngram: Option<f64>,
    pub cpass: f64,
    pub pass_at: BTreeMap<u64, f64>,
    pub vt: Option<f64>,
    pub error_histogram: BTreeMap<ErrorType, usize>,
    /// Keyed `"a~b"` for the metric pair (a, b).
    pub pearson: BTreeMap<String, f64>,
    pub problems: usize,
    pub samples_per_problem: u64,
    pub extraction_failures: usize,
    pub notes: Vec<String>,
}
