//! Co-verification: a source function and a candidate translation are run on
//! the same generated tests and accepted only when their transcripts agree.

mod output;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{parse_signature, source_id, split_functions, Direction, FunctionUnit, Language, Signature};
use crate::executor::{parallel_map, Classifier, CompileSpec, ErrorType, ExecError, Execute, ExecutionResult, Phase, Status};
use crate::suite::TestSuite;
use crate::wrapgen::{emit_harness, find_launches};

pub use output::{
    check, outputs_equal, parse_output, parse_record, tokens_equal, CanonicalOutput, CaseRecord, CompareError,
    Difference, NumericTolerance, ParseError, Snapshot,
};

/// A sampled translation of one corpus function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    /// Id of the source function.
    pub function_id: String,
    pub direction: Direction,
    /// Sample number within the request, from 0.
    pub sample: usize,
    /// Extracted program text; `None` when extraction failed.
    pub source: Option<String>,
    /// Host wrapper obtained separately for a CUDA candidate without one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wrapper: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extraction_error: Option<String>,
}

impl Candidate {
    /// Stable id: hash of the program text, or of the failure for a
    /// candidate that could not be extracted.
    pub fn id(&self) -> String {
        match &self.source {
            Some(s) => match &self.wrapper {
                Some(w) => source_id(&format!("{s}\n{w}")),
                None => source_id(s),
            },
            None => source_id(&format!(
                "extraction failure {} {} {}",
                self.function_id,
                self.sample,
                self.extraction_error.as_deref().unwrap_or("")
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    XCompile,
    XRun,
    YCompile,
    YRun,
    Mismatch,
    Extraction,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::XCompile => "x_compile",
            Stage::XRun => "x_run",
            Stage::YCompile => "y_compile",
            Stage::YRun => "y_run",
            Stage::Mismatch => "mismatch",
            Stage::Extraction => "extraction",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub function_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<usize>,
    pub direction: Direction,
    pub iteration: u32,
    pub stage: Stage,
    pub detail: String,
    pub error_type: Option<ErrorType>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifiedTriplet {
    pub x: FunctionUnit,
    pub candidate_id: String,
    pub sample: usize,
    pub y: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_wrapper: Option<String>,
    pub suite: TestSuite,
    pub x_transcript: CanonicalOutput,
    pub y_transcript: CanonicalOutput,
    pub direction: Direction,
    pub iteration: u32,
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Verdict {
    Accepted(VerifiedTriplet),
    Rejected(Rejection),
}

impl Verdict {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Verdict::Accepted(_))
    }
}

/// Outcome of running the source program on its suite.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceRun {
    Valid(CanonicalOutput),
    Invalid { stage: Stage, detail: String, error_type: Option<ErrorType>, cases: usize },
}

impl SourceRun {
    /// Every test case ran to completion on the source program.
    pub fn all_valid(&self) -> bool {
        matches!(self, SourceRun::Valid(_))
    }
}

/// Compiler settings for the two languages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backends {
    pub c: CompileSpec,
    pub cuda: CompileSpec,
}

impl Backends {
    pub fn for_language(&self, lang: Language) -> &CompileSpec {
        match lang {
            Language::C => &self.c,
            Language::Cuda => &self.cuda,
        }
    }
}

pub struct Verifier<'a> {
    pub executor: &'a dyn Execute,
    pub backends: Backends,
    pub tolerance: NumericTolerance,
    pub classifier: Classifier,
}

enum Ran {
    Output(CanonicalOutput),
    Failed { compile: bool, detail: String, error_type: Option<ErrorType> },
}

impl<'a> Verifier<'a> {
    pub fn new(executor: &'a dyn Execute, backends: Backends) -> Self {
        Verifier { executor, backends, tolerance: NumericTolerance::default(), classifier: Classifier::builtin() }
    }

    fn run_program(
        &self,
        lang: Language,
        source: &str,
        sig: &Signature,
        wrapper: Option<&str>,
        suite: &TestSuite,
    ) -> Result<Ran, ExecError> {
        let spec = self.backends.for_language(lang);
        let unit = match emit_harness(source, sig, wrapper, suite, spec.backend) {
            Ok(u) => u,
            Err(e) => {
                let detail = format!("harness generation: {e}");
                let error_type = Some(self.classifier.classify(&e.to_string(), Phase::Compile));
                return Ok(Ran::Failed { compile: true, detail, error_type });
            }
        };
        let result = self.executor.execute(&unit, spec)?;
        Ok(self.interpret(&result, unit.case_count))
    }

    fn interpret(&self, r: &ExecutionResult, expected_cases: usize) -> Ran {
        match (r.phase, r.status) {
            (Phase::Compile, _) | (_, Status::CompileError) => Ran::Failed {
                compile: true,
                detail: excerpt(&r.stderr),
                error_type: r.error_type,
            },
            (_, Status::Timeout) => Ran::Failed {
                compile: false,
                detail: format!("timed out after {:.1}s", r.duration.as_secs_f64()),
                error_type: r.error_type,
            },
            (_, Status::RuntimeError) => {
                let done = parse_output(&r.stdout).map_or(0, |o| o.cases.len());
                Ran::Failed {
                    compile: false,
                    detail: format!("crashed after {done} of {expected_cases} cases: {}", excerpt(&r.stderr)),
                    error_type: r.error_type,
                }
            }
            (_, Status::Ok) => match parse_output(&r.stdout) {
                Ok(out) if out.complete && out.cases.len() == expected_cases => Ran::Output(out),
                Ok(out) => Ran::Failed {
                    compile: false,
                    detail: format!("printed {} of {expected_cases} cases", out.cases.len()),
                    error_type: Some(ErrorType::Unknown),
                },
                Err(e) => Ran::Failed {
                    compile: false,
                    detail: format!("unreadable output: {e}"),
                    error_type: Some(ErrorType::Unknown),
                },
            },
        }
    }

    /// Compile and run the source function on its suite. A harness failure
    /// here means the tests are not all valid inputs.
    pub fn run_source(&self, x: &FunctionUnit, suite: &TestSuite) -> Result<SourceRun, ExecError> {
        let ran = self.run_program(x.language, &x.source, &x.signature, x.wrapper_source.as_deref(), suite)?;
        Ok(match ran {
            Ran::Output(o) => SourceRun::Valid(o),
            Ran::Failed { compile, detail, error_type } => SourceRun::Invalid {
                stage: if compile { Stage::XCompile } else { Stage::XRun },
                detail,
                error_type,
                cases: suite.cases.len(),
            },
        })
    }

    /// Verify one candidate against an already computed source run.
    pub fn verify_candidate(
        &self,
        x: &FunctionUnit,
        source_run: &SourceRun,
        y: &Candidate,
        suite: &TestSuite,
        iteration: u32,
    ) -> Result<Verdict, ExecError> {
        let reject = |stage, detail: String, error_type| {
            Ok(Verdict::Rejected(Rejection {
                function_id: x.id.clone(),
                candidate_id: Some(y.id()),
                sample: Some(y.sample),
                direction: y.direction,
                iteration,
                stage,
                detail,
                error_type,
            }))
        };
        let x_out = match source_run {
            SourceRun::Valid(o) => o,
            SourceRun::Invalid { stage, detail, error_type, .. } => return reject(*stage, detail.clone(), *error_type),
        };
        let Some(y_source) = &y.source else {
            let why = y.extraction_error.clone().unwrap_or_else(|| "no program extracted".into());
            return reject(Stage::Extraction, why, None);
        };
        let target = y.direction.target();
        let sig = match candidate_signature(y_source, y.wrapper.as_deref(), target, x) {
            Ok(s) => s,
            Err(why) => return reject(Stage::YCompile, why, None),
        };
        match self.run_program(target, y_source, &sig, y.wrapper.as_deref(), suite)? {
            Ran::Failed { compile: true, detail, error_type } => reject(Stage::YCompile, detail, error_type),
            Ran::Failed { compile: false, detail, error_type } => reject(Stage::YRun, detail, error_type),
            Ran::Output(y_out) => match outputs_equal(x_out, &y_out, &self.tolerance) {
                Ok(None) => Ok(Verdict::Accepted(VerifiedTriplet {
                    x: x.clone(),
                    candidate_id: y.id(),
                    sample: y.sample,
                    y: y_source.clone(),
                    y_wrapper: y.wrapper.clone(),
                    suite: suite.clone(),
                    x_transcript: x_out.clone(),
                    y_transcript: y_out,
                    direction: y.direction,
                    iteration,
                })),
                Ok(Some(d)) => reject(Stage::Mismatch, d.to_string(), None),
                Err(e) => reject(Stage::YRun, e.to_string(), Some(ErrorType::Unknown)),
            },
        }
    }

    /// Run both sides on the same suite and compare.
    pub fn verify_triplet(
        &self,
        x: &FunctionUnit,
        y: &Candidate,
        suite: &TestSuite,
        iteration: u32,
    ) -> Result<Verdict, ExecError> {
        let run = self.run_source(x, suite)?;
        self.verify_candidate(x, &run, y, suite, iteration)
    }
}

fn excerpt(text: &str) -> String {
    const MAX: usize = 2000;
    let t = text.trim();
    if t.len() <= MAX {
        return t.to_string();
    }
    let mut end = MAX;
    while !t.is_char_boundary(end) {
        end -= 1;
    }
    format!("{}...", &t[..end])
}

/// Pick the function of a candidate program the tests should reach.
///
/// CUDA: the kernel launched by a host function (or the first kernel). C: the
/// function named like the source, else the last function defined.
fn candidate_signature(
    source: &str,
    wrapper: Option<&str>,
    target: Language,
    x: &FunctionUnit,
) -> Result<Signature, String> {
    let program = match wrapper {
        Some(w) => format!("{source}\n{w}"),
        None => source.to_string(),
    };
    let functions = split_functions(&program);
    if functions.is_empty() {
        return Err("no function definition in candidate".into());
    }
    let mut parsed = Vec::new();
    let mut last_error = None;
    for f in &functions {
        match parse_signature(f) {
            Ok(s) => parsed.push((s, *f)),
            Err(e) => last_error = Some(e.to_string()),
        }
    }
    if parsed.is_empty() {
        return Err(format!("unsupported candidate: {}", last_error.unwrap_or_default()));
    }
    if target == Language::Cuda {
        let launched: Vec<String> = parsed
            .iter()
            .filter(|(s, _)| !s.is_kernel)
            .flat_map(|(_, f)| find_launches(f).unwrap_or_default())
            .map(|l| l.name)
            .collect();
        let kernel = parsed
            .iter()
            .find(|(s, _)| s.is_kernel && launched.contains(&s.name))
            .or_else(|| parsed.iter().find(|(s, _)| s.is_kernel));
        if let Some((s, _)) = kernel {
            return Ok(s.clone());
        }
    }
    let host: Vec<&Signature> = parsed.iter().map(|(s, _)| s).filter(|s| !s.is_kernel).collect();
    host.iter()
        .find(|s| s.name == x.name)
        .or(host.last())
        .map(|s| (*s).clone())
        .ok_or_else(|| "candidate has no callable host function".into())
}

/// Result of verifying a whole corpus for one iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoVerifyOutput {
    pub accepted: Vec<VerifiedTriplet>,
    pub rejections: Vec<Rejection>,
    /// (function id, case count, all cases valid on the source program)
    pub validity: Vec<(String, usize, bool)>,
}

impl CoVerifyOutput {
    pub fn accepted_by_language(&self) -> BTreeMap<Language, usize> {
        let mut m = BTreeMap::from([(Language::C, 0), (Language::Cuda, 0)]);
        for t in &self.accepted {
            *m.entry(t.direction.target()).or_insert(0) += 1;
        }
        m
    }
}

/// Verify every candidate of every function. Candidates are verified
/// independently; the source program runs once per function. Functions with
/// no suite get an extraction rejection per candidate.
pub fn co_verify_corpus(
    verifier: &Verifier<'_>,
    corpus: &[FunctionUnit],
    translations: &BTreeMap<String, Vec<Candidate>>,
    suites: &BTreeMap<String, Result<TestSuite, String>>,
    iteration: u32,
    workers: usize,
) -> Result<CoVerifyOutput, ExecError> {
    let source_runs: Vec<Result<Option<SourceRun>, ExecError>> = parallel_map(corpus.iter().collect(), workers, |x| {
        match suites.get(&x.id) {
            Some(Ok(suite)) => verifier.run_source(x, suite).map(Some),
            _ => Ok(None),
        }
    });
    let mut jobs = Vec::new();
    let mut out = CoVerifyOutput::default();
    for (x, run) in corpus.iter().zip(source_runs) {
        let run = run?;
        let candidates = translations.get(&x.id).map(Vec::as_slice).unwrap_or(&[]);
        match (&run, suites.get(&x.id)) {
            (Some(r), Some(Ok(suite))) => {
                out.validity.push((x.id.clone(), suite.cases.len(), r.all_valid()));
                for c in candidates {
                    jobs.push((x, r.clone(), c, suite));
                }
            }
            (_, failed) => {
                let why = match failed {
                    Some(Err(e)) => format!("test generation: {e}"),
                    _ => "no test suite".to_string(),
                };
                out.validity.push((x.id.clone(), 0, false));
                for c in candidates {
                    out.rejections.push(Rejection {
                        function_id: x.id.clone(),
                        candidate_id: Some(c.id()),
                        sample: Some(c.sample),
                        direction: c.direction,
                        iteration,
                        stage: Stage::Extraction,
                        detail: why.clone(),
                        error_type: None,
                    });
                }
            }
        }
    }
    let verdicts = parallel_map(jobs, workers, |(x, run, c, suite)| {
        verifier.verify_candidate(x, &run, c, suite, iteration)
    });
    for v in verdicts {
        match v? {
            Verdict::Accepted(t) => out.accepted.push(t),
            Verdict::Rejected(r) => out.rejections.push(r),
        }
    }
    sort_output(&mut out);
    Ok(out)
}

/// Canonical order: by function id, then sample.
pub fn sort_output(out: &mut CoVerifyOutput) {
    out.accepted.sort_by(|a, b| (&a.x.id, a.sample, &a.candidate_id).cmp(&(&b.x.id, b.sample, &b.candidate_id)));
    out.rejections.sort_by(|a, b| {
        (&a.function_id, a.sample, &a.candidate_id, a.stage).cmp(&(&b.function_id, b.sample, &b.candidate_id, b.stage))
    });
    out.validity.sort();
}

/// Fraction of functions whose whole suite ran without error on the source
/// program. Entries are `(case count, all valid)`.
pub fn vt_metric(per_function: &[(usize, bool)]) -> Result<f64, crate::metrics::MetricsError> {
    if per_function.is_empty() {
        return Err(crate::metrics::MetricsError::Empty);
    }
    let ok = per_function.iter().filter(|(n, valid)| *n > 0 && *valid).count();
    Ok(ok as f64 / per_function.len() as f64)
}

/// Write one JSON object per line.
pub fn write_jsonl<T: Serialize>(items: &[T], path: &Path) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for it in items {
        serde_json::to_writer(&mut f, it).map_err(std::io::Error::other)?;
        f.write_all(b"\n")?;
    }
    f.flush()
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> std::io::Result<Vec<T>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(std::io::Error::other))
        .collect()
}
