use std::collections::HashMap;

use crate::lex;

use super::MetricsError;

/// Lexer-level tokens with comments dropped.
pub fn code_tokenize(source: &str) -> Vec<String> {
    lex::code_tokens(source, false).into_iter().map(|t| t.text.to_string()).collect()
}

/// C keywords plus CUDA qualifiers and built-in variables, the tokens the
/// weighted n-gram match counts extra.
pub const KEYWORDS: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else", "enum",
    "extern", "float", "for", "goto", "if", "inline", "int", "long", "register", "restrict", "return",
    "short", "signed", "sizeof", "static", "struct", "switch", "typedef", "union", "unsigned", "void",
    "volatile", "while", "bool", "true", "false", "nullptr", "NULL", "__global__", "__device__",
    "__host__", "__shared__", "__constant__", "__restrict__", "__syncthreads", "threadIdx", "blockIdx",
    "blockDim", "gridDim", "dim3", "cudaMalloc", "cudaMemcpy", "cudaFree", "cudaDeviceSynchronize",
    "cudaMemcpyHostToDevice", "cudaMemcpyDeviceToHost", "atomicAdd",
];

pub const SMOOTHING: &str = "add-one on zero-match n-gram orders above 1";

fn ngrams(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Clipped n-gram statistics for one candidate/reference pair.
#[derive(Debug, Clone, Default, PartialEq)]
struct Stats {
    matches: Vec<f64>,
    totals: Vec<f64>,
    cand_len: usize,
    ref_len: usize,
}

fn stats(cand: &[String], reference: &[String], max_n: usize, unigram_weight: &dyn Fn(&str) -> f64) -> Stats {
    let mut s = Stats {
        matches: vec![0.0; max_n],
        totals: vec![0.0; max_n],
        cand_len: cand.len(),
        ref_len: reference.len(),
    };
    for n in 1..=max_n {
        let c = ngrams(cand, n);
        let r = ngrams(reference, n);
        for (gram, &count) in &c {
            let w = if n == 1 { unigram_weight(&gram[0]) } else { 1.0 };
            let clipped = count.min(r.get(gram).copied().unwrap_or(0));
            s.matches[n - 1] += w * clipped as f64;
            s.totals[n - 1] += w * count as f64;
        }
    }
    s
}

fn score(s: &Stats) -> f64 {
    if s.cand_len == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    let mut orders = 0;
    for (n, (&m, &t)) in s.matches.iter().zip(&s.totals).enumerate() {
        if t == 0.0 {
            // candidate too short to have n-grams of this order
            continue;
        }
        let p = if m > 0.0 {
            m / t
        } else if n == 0 {
            return 0.0;
        } else {
            1.0 / (t + 1.0)
        };
        log_sum += p.ln();
        orders += 1;
    }
    let bp = if s.cand_len > s.ref_len {
        1.0
    } else {
        (1.0 - s.ref_len as f64 / s.cand_len as f64).exp()
    };
    bp * (log_sum / orders as f64).exp()
}

fn plain(_: &str) -> f64 {
    1.0
}

/// Sentence BLEU with uniform weights over orders 1..=max_n.
///
/// Orders for which the candidate has no n-grams are left out of the mean,
/// so a short candidate identical to its reference still scores 1.
pub fn bleu(candidate: &[String], reference: &[String], max_n: usize) -> Result<f64, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    Ok(score(&stats(candidate, reference, max_n.max(1), &plain)))
}

/// Corpus BLEU: n-gram counts and lengths are summed over all pairs before
/// the precisions and brevity penalty are formed.
pub fn corpus_bleu(pairs: &[(Vec<String>, Vec<String>)], max_n: usize) -> Result<f64, MetricsError> {
    corpus_score(pairs, max_n, &plain)
}

/// BLEU with keyword unigrams counted `keyword_weight` times, the weighted
/// n-gram component of CodeBLEU.
pub fn weighted_ngram_bleu(candidate: &[String], reference: &[String], keyword_weight: f64) -> Result<f64, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    let w = keyword_weigher(keyword_weight);
    Ok(score(&stats(candidate, reference, 4, &w)))
}

pub fn corpus_weighted_ngram_bleu(
    pairs: &[(Vec<String>, Vec<String>)],
    keyword_weight: f64,
) -> Result<f64, MetricsError> {
    corpus_score(pairs, 4, &keyword_weigher(keyword_weight))
}

fn keyword_weigher(keyword_weight: f64) -> impl Fn(&str) -> f64 {
    move |t: &str| if KEYWORDS.contains(&t) { keyword_weight } else { 1.0 }
}

fn corpus_score(
    pairs: &[(Vec<String>, Vec<String>)],
    max_n: usize,
    weight: &dyn Fn(&str) -> f64,
) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let max_n = max_n.max(1);
    let mut total = Stats { matches: vec![0.0; max_n], totals: vec![0.0; max_n], ..Default::default() };
    for (c, r) in pairs {
        if r.is_empty() {
            return Err(MetricsError::EmptyReference);
        }
        let s = stats(c, r, max_n, weight);
        for n in 0..max_n {
            total.matches[n] += s.matches[n];
            total.totals[n] += s.totals[n];
        }
        total.cand_len += s.cand_len;
        total.ref_len += s.ref_len;
    }
    Ok(score(&total))
}
