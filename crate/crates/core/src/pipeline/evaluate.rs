use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{fatal, translate_unit, EvaluateSettings, Gateways, PipelineError};
use crate::corpus::{Direction, FunctionUnit, Language};
use crate::executor::{parallel_map, ErrorType};
use crate::metrics::{
    aggregate_pass_at_k, code_tokenize, corpus_bleu, corpus_weighted_ngram_bleu, cpass, error_histogram, pearson,
    MetricsReport, SampleOutcome,
};
use crate::suite::{split_cases, TestSuite};
use crate::verify::{read_jsonl, vt_metric, Stage, Verdict, Verifier};

/// Keyword unigrams count this many times in the weighted n-gram score.
pub const KEYWORD_WEIGHT: f64 = 5.0;

/// One held-out problem: a program, its reference translation and the test
/// inputs the candidate must agree on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestPair {
    pub id: String,
    pub direction: Direction,
    pub source: String,
    pub reference: String,
    /// Host launcher for a CUDA source kernel.
    #[serde(default)]
    pub source_wrapper: Option<String>,
    /// Inputs in the `//Input case n:` format.
    pub tests: String,
}

impl TestPair {
    fn unit(&self) -> Result<FunctionUnit, String> {
        let lang = self.direction.source();
        let wrapper = if lang == Language::Cuda { self.source_wrapper.clone() } else { None };
        let mut u = FunctionUnit::from_source(lang, &self.source, wrapper, format!("test set: {}", self.id))?;
        u.id = self.id.clone();
        Ok(u)
    }

    fn suite(&self, name: &str) -> Result<TestSuite, String> {
        let found = split_cases(&self.tests, usize::MAX).err().map_or(0, |e| e.found);
        let cases = split_cases(&self.tests, found).map_err(|e| format!("{}: {e}", self.id))?;
        Ok(TestSuite { function_id: self.id.clone(), function_name: name.to_string(), cases })
    }
}

pub fn read_test_set(path: &Path) -> Result<Vec<TestPair>, PipelineError> {
    read_jsonl(path).map_err(|e| PipelineError::io(path, e))
}

struct Scored {
    outcome: SampleOutcome,
    /// First sample's text, empty when nothing was extracted.
    first: String,
    reference: String,
    failures: Vec<Option<ErrorType>>,
    extraction_failures: usize,
    suite_cases: usize,
    suite_valid: Option<bool>,
}

fn score_pair(
    pair: &TestPair,
    settings: &EvaluateSettings,
    gw: &Gateways<'_>,
    verifier: &Verifier<'_>,
) -> Result<Scored, PipelineError> {
    let mut x = pair.unit().map_err(|e| PipelineError::Config(format!("{}: {e}", pair.id)))?;
    if x.language == Language::Cuda && x.wrapper_source.is_none() {
        gw.wrapper.request_cuda_wrapper(&mut x)?;
    }
    let suite = pair.suite(&x.name).map_err(PipelineError::Config)?;
    let source_run = verifier.run_source(&x, &suite)?;
    if !source_run.all_valid() {
        ::log::warn!("{}: reference inputs fail on the source program", pair.id);
    }
    let candidates = translate_unit(&x, pair.direction, settings.n_samples, gw)?;
    let mut s = Scored {
        outcome: SampleOutcome { problem_id: pair.id.clone(), n: candidates.len() as u64, c: 0, compile_ok: 0 },
        first: candidates.first().and_then(|c| c.source.clone()).unwrap_or_default(),
        reference: pair.reference.clone(),
        failures: Vec::new(),
        extraction_failures: 0,
        suite_cases: 0,
        suite_valid: None,
    };
    for c in &candidates {
        match verifier.verify_candidate(&x, &source_run, c, &suite, 0)? {
            Verdict::Accepted(_) => {
                s.outcome.c += 1;
                s.outcome.compile_ok += 1;
            }
            Verdict::Rejected(r) => match r.stage {
                Stage::Extraction => s.extraction_failures += 1,
                Stage::YCompile => s.failures.push(r.error_type),
                Stage::YRun | Stage::Mismatch => {
                    s.outcome.compile_ok += 1;
                    if r.stage == Stage::YRun {
                        s.failures.push(r.error_type);
                    }
                }
                Stage::XCompile | Stage::XRun => {}
            },
        }
    }
    if settings.tester_vt {
        match gw.tester.request_tests(&x, suite.cases.len().max(1)) {
            Ok(generated) => {
                s.suite_cases = generated.cases.len();
                s.suite_valid = Some(verifier.run_source(&x, &generated)?.all_valid());
            }
            Err(e) if fatal(&e) => return Err(e.into()),
            Err(_) => s.suite_valid = Some(false),
        }
    }
    Ok(s)
}

/// Translate every test problem `n_samples` times and score the results.
///
/// Samples with no extractable program count as drawn and failing.
pub fn evaluate(
    pairs: &[TestPair],
    settings: &EvaluateSettings,
    gw: &Gateways<'_>,
    verifier: &Verifier<'_>,
    workers: usize,
) -> Result<MetricsReport, PipelineError> {
    if pairs.is_empty() {
        return Err(PipelineError::Config("test set is empty".into()));
    }
    let max_k = settings.k_values.iter().copied().max().unwrap_or(1);
    if (settings.n_samples as u64) < max_k || settings.k_values.contains(&0) {
        return Err(PipelineError::Config(format!(
            "evaluate.n_samples ({}) is smaller than the largest k ({max_k})",
            settings.n_samples
        )));
    }
    let scored: Vec<Scored> = parallel_map(pairs.iter().collect(), workers.max(1), |p| {
        score_pair(p, settings, gw, verifier)
    })
    .into_iter()
    .collect::<Result<_, _>>()?;

    let outcomes: Vec<SampleOutcome> = scored.iter().map(|s| s.outcome.clone()).collect();
    let mut pass_at = BTreeMap::new();
    for &k in &settings.k_values {
        pass_at.insert(k, aggregate_pass_at_k(&outcomes, k)?);
    }
    let tokenized: Vec<(Vec<String>, Vec<String>)> =
        scored.iter().map(|s| (code_tokenize(&s.first), code_tokenize(&s.reference))).collect();
    let bleu = corpus_bleu(&tokenized, 4)?;
    let codebleu_ngram = corpus_weighted_ngram_bleu(&tokenized, KEYWORD_WEIGHT).ok();

    let per_problem = |f: &dyn Fn(usize, &Scored) -> Option<f64>| -> Vec<f64> {
        scored.iter().enumerate().filter_map(|(i, s)| f(i, s)).collect()
    };
    let mut series: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    series.insert("bleu", per_problem(&|i, _| corpus_bleu(&tokenized[i..=i], 4).ok()));
    series.insert(
        "codebleu_ngram",
        per_problem(&|i, _| corpus_weighted_ngram_bleu(&tokenized[i..=i], KEYWORD_WEIGHT).ok()),
    );
    series.insert("pass", per_problem(&|_, s| Some(s.outcome.c as f64 / s.outcome.n.max(1) as f64)));
    series.insert("compile", per_problem(&|_, s| Some(s.outcome.compile_ok as f64 / s.outcome.n.max(1) as f64)));
    let mut correlations = BTreeMap::new();
    let names: Vec<&str> = series.keys().copied().collect();
    for (i, a) in names.iter().enumerate() {
        for b in &names[i + 1..] {
            if series[a].len() == pairs.len() && series[b].len() == pairs.len() {
                if let Ok(r) = pearson(&series[a], &series[b]) {
                    correlations.insert(format!("{a}~{b}"), r);
                }
            }
        }
    }

    let extraction_failures = scored.iter().map(|s| s.extraction_failures).sum();
    let vt = if settings.tester_vt {
        let per: Vec<(usize, bool)> =
            scored.iter().map(|s| (s.suite_cases, s.suite_valid.unwrap_or(false))).collect();
        Some(vt_metric(&per)?)
    } else {
        None
    };
    let mut notes = Vec::new();
    if extraction_failures > 0 {
        notes.push(format!("{extraction_failures} sample(s) had no extractable program and count as failing"));
    }
    Ok(MetricsReport {
        bleu,
        codebleu_ngram,
        cpass: cpass(&outcomes)?,
        pass_at,
        vt,
        error_histogram: error_histogram(scored.iter().flat_map(|s| s.failures.iter().copied())),
        pearson: correlations,
        problems: pairs.len(),
        samples_per_problem: settings.n_samples as u64,
        extraction_failures,
        notes,
    })
}
