//! Iteration driver: sample translations and tests, co-verify, export
//! back-translation data, evaluate, and report.

mod config;
mod evaluate;
mod export;
mod log;
mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ingest, parse_signature, split_functions, CorpusError, Direction, FunctionUnit, Language};
use crate::executor::{
    parallel_map, Classifier, ErrorType, ExecError, Execute, MockExecutor, MockTranscripts, ProcessExecutor,
};
use crate::gateway::{Gateway, GatewayError, HttpTransport, MockEndpoint, MockResponses, TemplateSet, Transport};
use crate::metrics::{error_histogram, MetricsError};
use crate::verify::{co_verify_corpus, vt_metric, write_jsonl, Candidate, Rejection, Stage, Verifier, VerifiedTriplet};
use crate::wrapgen::find_launches;

pub use config::{
    iteration_dir, BackendOverride, BackendSettings, Convergence, Endpoints, EvaluateSettings, ExecutorSettings,
    Paths, PipelineConfig, RunSettings,
};
pub use evaluate::{evaluate, read_test_set, TestPair, KEYWORD_WEIGHT};
pub use export::{export_training_data, training_examples, ExportManifest, ExportPaths, TrainingExample};
pub use log::{CompletionLog, Generated, LogEntry, SuiteOutcome, SuiteRecord, Verified};
pub use report::{render_iteration_html, render_metrics_html, write_report};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("stopped after {completed} functions; rerun to resume")]
    Interrupted { completed: usize },
    #[error("convergence needs at least one iteration report")]
    EmptyHistory,
}

impl PipelineError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io { path: path.to_path_buf(), source }
    }

    /// Whether the failure is the user's configuration rather than the task.
    pub fn is_config(&self) -> bool {
        matches!(self, PipelineError::Config(_) | PipelineError::Gateway(GatewayError::Config(_)))
    }
}

/// The three model roles. The wrapper writer is usually the translator.
#[derive(Debug, Clone, Copy)]
pub struct Gateways<'a> {
    pub translator: &'a Gateway,
    pub tester: &'a Gateway,
    pub wrapper: &'a Gateway,
}

/// Owned gateways built from a configuration.
#[derive(Debug)]
pub struct GatewaySet {
    pub translator: Gateway,
    pub tester: Gateway,
    pub wrapper: Gateway,
    /// Set when the canned endpoint is in use.
    pub mock: Option<Arc<MockEndpoint>>,
}

impl GatewaySet {
    pub fn from_config(cfg: &PipelineConfig, mock: bool) -> Result<Self, PipelineError> {
        let templates = match &cfg.paths.templates {
            Some(dir) => TemplateSet::load_dir(dir)?,
            None => TemplateSet::builtin(),
        };
        let (transport, mock_ep): (Arc<dyn Transport>, _) = if mock {
            let path = cfg
                .paths
                .mock_responses
                .as_ref()
                .ok_or_else(|| PipelineError::Config("--mock needs paths.mock_responses".into()))?;
            let canned = MockResponses::load(path)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
            let m = Arc::new(MockEndpoint::new(canned));
            (m.clone(), Some(m))
        } else {
            (Arc::new(HttpTransport::new()), None)
        };
        let seeded = |e: &crate::gateway::ModelEndpoint| {
            let mut e = e.clone();
            e.seed.get_or_insert(cfg.run.seed);
            e
        };
        let ep = &cfg.endpoints;
        Ok(GatewaySet {
            translator: Gateway::new(seeded(&ep.translator), templates.clone(), transport.clone())?,
            tester: Gateway::new(seeded(&ep.tester), templates.clone(), transport.clone())?,
            wrapper: Gateway::new(
                seeded(ep.wrapper.as_ref().unwrap_or(&ep.translator)),
                templates,
                transport,
            )?,
            mock: mock_ep,
        })
    }

    pub fn borrow(&self) -> Gateways<'_> {
        Gateways { translator: &self.translator, tester: &self.tester, wrapper: &self.wrapper }
    }
}

/// Mock transcripts when configured, otherwise real compilers.
pub fn build_executor(cfg: &PipelineConfig, keep_scratch: bool) -> Result<Box<dyn Execute>, PipelineError> {
    let classifier = Arc::new(build_classifier(cfg)?);
    if let Some(p) = &cfg.paths.mock_transcripts {
        let t = MockTranscripts::load(p).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?;
        let mut m = MockExecutor::new(t);
        m.classifier = classifier;
        m.run_timeout = cfg.run_timeout();
        return Ok(Box::new(m));
    }
    Ok(Box::new(ProcessExecutor {
        run_timeout: cfg.run_timeout(),
        scratch_root: cfg.executor.scratch_root.clone(),
        keep_scratch: keep_scratch || cfg.executor.keep_scratch,
        classifier,
        ..ProcessExecutor::default()
    }))
}

pub fn build_classifier(cfg: &PipelineConfig) -> Result<Classifier, PipelineError> {
    match &cfg.paths.classifier_rules {
        Some(p) => Classifier::from_rules_file(p).map_err(|e| PipelineError::Config(e.to_string())),
        None => Ok(Classifier::builtin()),
    }
}

pub fn build_verifier<'a>(cfg: &PipelineConfig, executor: &'a dyn Execute) -> Result<Verifier<'a>, PipelineError> {
    let mut v = Verifier::new(executor, cfg.backends()?);
    v.tolerance = cfg.tolerance;
    v.classifier = build_classifier(cfg)?;
    Ok(v)
}

/// Ingest the configured corpus; rejected records are logged and skipped.
pub fn load_corpus(path: &Path) -> Result<Vec<FunctionUnit>, PipelineError> {
    let ing = ingest(path, None)?;
    for r in &ing.rejects {
        ::log::warn!("{}: skipped: {}", r.origin, r.reason);
    }
    Ok(ing.units)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: u32,
    pub functions: usize,
    /// Sampled candidates per direction.
    pub attempted: BTreeMap<Direction, usize>,
    pub accepted: BTreeMap<Direction, usize>,
    pub rejected: BTreeMap<Direction, usize>,
    /// Size of S_i after the per-function cap.
    pub exported: usize,
    /// Exported triplets by the language of the generated program.
    pub accepted_by_language: BTreeMap<Language, usize>,
    pub rejections_by_stage: BTreeMap<Stage, usize>,
    /// Error types of rejections that carry one.
    pub rejection_histogram: BTreeMap<ErrorType, usize>,
    pub vt: Option<f64>,
    pub elapsed_secs: f64,
    pub exports: ExportPaths,
    pub converged: bool,
    /// Endpoint id per role.
    pub endpoints: BTreeMap<String, String>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Stop after verifying this many functions in this call. For testing
    /// resumption.
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct IterationOutcome {
    pub s_i: Vec<VerifiedTriplet>,
    pub rejections: Vec<Rejection>,
    pub report: IterationReport,
}

pub const S_I_FILE: &str = "s_i.jsonl";
pub const REJECTIONS_FILE: &str = "rejections.jsonl";
pub const COMPLETION_LOG: &str = "completion.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_HTML: &str = "report.html";

pub(crate) fn fatal(e: &GatewayError) -> bool {
    matches!(e, GatewayError::Unreachable { .. } | GatewayError::Rejected(_) | GatewayError::Config(_))
}

/// Give a CUDA candidate without a launching host function a wrapper.
fn attach_wrapper(c: &mut Candidate, wrapper: &Gateway) -> Result<(), GatewayError> {
    let Some(src) = &c.source else { return Ok(()) };
    let functions = split_functions(src);
    let parsed: Vec<_> = functions.iter().filter_map(|f| parse_signature(f).ok().map(|s| (s, *f))).collect();
    if parsed.iter().any(|(s, f)| !s.is_kernel && find_launches(f).is_ok_and(|l| !l.is_empty())) {
        return Ok(());
    }
    let Some((sig, _)) = parsed.iter().find(|(s, _)| s.is_kernel) else { return Ok(()) };
    match wrapper.wrapper_for_kernel(src, sig, c.sample) {
        Ok(w) => c.wrapper = Some(w),
        Err(e) if fatal(&e) => return Err(e),
        Err(e) => ::log::warn!("{}: no wrapper for sample {}: {e}", sig.name, c.sample),
    }
    Ok(())
}

/// Sample translations of `x`, with host wrappers for CUDA candidates that
/// lack one. Samples that could not be extracted are kept.
pub fn translate_unit(
    x: &FunctionUnit,
    direction: Direction,
    n_samples: usize,
    gw: &Gateways<'_>,
) -> Result<Vec<Candidate>, GatewayError> {
    let mut candidates = match gw.translator.request_translation(x, direction, n_samples) {
        Ok(c) => c,
        Err(GatewayError::NothingExtracted { candidates }) => candidates,
        Err(e) => return Err(e),
    };
    if direction.target() == Language::Cuda {
        for c in &mut candidates {
            attach_wrapper(c, gw.wrapper)?;
        }
    }
    Ok(candidates)
}

/// All model calls for one function.
pub fn generate(
    x: &FunctionUnit,
    direction: Direction,
    run: &RunSettings,
    gw: &Gateways<'_>,
) -> Result<Generated, GatewayError> {
    let mut source_wrapper = None;
    if x.language == Language::Cuda && x.wrapper_source.is_none() {
        let mut u = x.clone();
        match gw.wrapper.request_cuda_wrapper(&mut u) {
            Ok(w) => source_wrapper = Some(w),
            Err(e) if fatal(&e) => return Err(e),
            Err(e) => ::log::warn!("{}: no wrapper for the source kernel: {e}", x.name),
        }
    }
    let candidates = translate_unit(x, direction, run.n_translation_samples, gw)?;
    let suite = match gw.tester.request_tests(x, run.n_tests) {
        Ok(s) => SuiteOutcome::Ok(s),
        Err(e) if fatal(&e) => return Err(e),
        Err(e) => SuiteOutcome::Failed(e.to_string()),
    };
    Ok(Generated { function_id: x.id.clone(), direction, source_wrapper, candidates, suite })
}

fn endpoint_ids(gw: &Gateways<'_>) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("translator".to_string(), gw.translator.endpoint().id().to_string()),
        ("tester".to_string(), gw.tester.endpoint().id().to_string()),
        ("wrapper".to_string(), gw.wrapper.endpoint().id().to_string()),
    ])
}

/// Read the reports of iterations before `iteration` that exist on disk.
pub fn load_history(work_dir: &Path, iteration: u32) -> Result<Vec<IterationReport>, PipelineError> {
    let mut out = Vec::new();
    for i in 1..iteration {
        let p = iteration_dir(work_dir, i).join(REPORT_JSON);
        match std::fs::read_to_string(&p) {
            Ok(text) => out.push(
                serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))?,
            ),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(PipelineError::io(&p, e)),
        }
    }
    Ok(out)
}

/// True when growth in accepted triplets over the previous iteration is below
/// the threshold, or the iteration budget is spent.
pub fn converged(history: &[IterationReport], conv: &Convergence) -> Result<bool, PipelineError> {
    let last = history.last().ok_or(PipelineError::EmptyHistory)?;
    if last.iteration >= conv.max_iterations {
        return Ok(true);
    }
    let Some(prev) = history.len().checked_sub(2).map(|i| &history[i]) else { return Ok(false) };
    let (p, c) = (prev.exported as f64, last.exported as f64);
    let growth = if p == 0.0 {
        if c == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (c - p) / p
    };
    Ok(growth < conv.min_growth_fraction)
}

/// One Co-verify pass over the corpus, resumable from the completion log in
/// the iteration directory.
pub fn run_iteration(
    cfg: &PipelineConfig,
    corpus: &[FunctionUnit],
    gw: &Gateways<'_>,
    executor: &dyn Execute,
    opts: &RunOptions,
) -> Result<IterationOutcome, PipelineError> {
    cfg.validate()?;
    let started = Instant::now();
    let iteration = cfg.run.iteration;
    let dir = cfg.iteration_dir();
    std::fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
    let mut log = CompletionLog::open(&dir.join(COMPLETION_LOG))?;
    let verifier = build_verifier(cfg, executor)?;
    let workers = cfg.run.workers.max(1);

    let mut work: Vec<(&FunctionUnit, Direction)> = corpus
        .iter()
        .map(|x| (x, Direction::from_source(x.language)))
        .filter(|(_, d)| cfg.run.directions.contains(d))
        .collect();
    work.sort_by(|a, b| (&a.0.id, a.1).cmp(&(&b.0.id, b.1)));
    work.dedup_by(|a, b| a.0.id == b.0.id && a.1 == b.1);

    let pending: Vec<(&FunctionUnit, Direction)> =
        work.iter().copied().filter(|(x, d)| !log.verified.contains_key(&(x.id.clone(), *d))).collect();
    let mut done_now = 0usize;
    for chunk in pending.chunks(workers * 2) {
        let to_generate: Vec<(&FunctionUnit, Direction)> =
            chunk.iter().copied().filter(|(x, d)| !log.generated.contains_key(&(x.id.clone(), *d))).collect();
        let results = parallel_map(to_generate, workers, |(x, d)| generate(x, d, &cfg.run, gw));
        let mut first_error = None;
        for r in results {
            match r {
                Ok(g) => log.append(LogEntry::Generated(g))?,
                Err(e) => {
                    first_error.get_or_insert(e);
                }
            }
        }
        if let Some(e) = first_error {
            return Err(e.into());
        }

        let mut units = Vec::with_capacity(chunk.len());
        let mut translations = BTreeMap::new();
        let mut suites = BTreeMap::new();
        for (x, d) in chunk {
            let g = &log.generated[&(x.id.clone(), *d)];
            let mut u = (*x).clone();
            if u.wrapper_source.is_none() {
                u.wrapper_source = g.source_wrapper.clone();
            }
            translations.insert(x.id.clone(), g.candidates.clone());
            suites.insert(x.id.clone(), g.suite.as_result());
            units.push(u);
        }
        let out = co_verify_corpus(&verifier, &units, &translations, &suites, iteration, workers)?;
        for (x, d) in chunk {
            let (cases, valid) = out
                .validity
                .iter()
                .find(|(id, ..)| *id == x.id)
                .map(|(_, n, ok)| (*n, *ok))
                .unwrap_or((0, false));
            log.append(LogEntry::Verified(Verified {
                function_id: x.id.clone(),
                direction: *d,
                accepted: out.accepted.iter().filter(|t| t.x.id == x.id).cloned().collect(),
                rejections: out.rejections.iter().filter(|r| r.function_id == x.id).cloned().collect(),
                cases,
                valid,
            }))?;
            done_now += 1;
            if opts.stop_after.is_some_and(|n| done_now >= n) {
                return Err(PipelineError::Interrupted { completed: log.verified.len() });
            }
        }
    }

    finish_iteration(cfg, &work, &log, gw, started)
}

fn finish_iteration(
    cfg: &PipelineConfig,
    work: &[(&FunctionUnit, Direction)],
    log: &CompletionLog,
    gw: &Gateways<'_>,
    started: Instant,
) -> Result<IterationOutcome, PipelineError> {
    let iteration = cfg.run.iteration;
    let dir = cfg.iteration_dir();
    let mut s_i = Vec::new();
    let mut rejections = Vec::new();
    let mut validity = Vec::new();
    let mut attempted: BTreeMap<Direction, usize> = cfg.run.directions.iter().map(|d| (*d, 0)).collect();
    let mut accepted = attempted.clone();
    let mut rejected = attempted.clone();
    for (x, d) in work {
        let key = (x.id.clone(), *d);
        let v = &log.verified[&key];
        *attempted.entry(*d).or_default() += log.generated.get(&key).map_or(0, |g| g.candidates.len());
        *accepted.entry(*d).or_default() += v.accepted.len();
        *rejected.entry(*d).or_default() += v.rejections.len();
        let mut acc = v.accepted.clone();
        acc.sort_by_key(|t| t.sample);
        s_i.extend(acc.into_iter().take(cfg.run.per_function_cap));
        rejections.extend(v.rejections.iter().cloned());
        validity.push((v.cases, v.valid));
    }
    s_i.sort_by(|a, b| (&a.x.id, a.direction, a.sample).cmp(&(&b.x.id, b.direction, b.sample)));
    rejections.sort_by(|a, b| {
        (&a.function_id, a.sample, &a.candidate_id, a.stage).cmp(&(&b.function_id, b.sample, &b.candidate_id, b.stage))
    });

    let s_path = dir.join(S_I_FILE);
    write_jsonl(&s_i, &s_path).map_err(|e| PipelineError::io(&s_path, e))?;
    let r_path = dir.join(REJECTIONS_FILE);
    write_jsonl(&rejections, &r_path).map_err(|e| PipelineError::io(&r_path, e))?;
    let exports = export_training_data(&s_i, iteration, gw.translator.templates(), &dir, cfg.run.split_by_direction)?;

    let mut accepted_by_language = BTreeMap::from([(Language::C, 0), (Language::Cuda, 0)]);
    for t in &s_i {
        *accepted_by_language.entry(t.direction.target()).or_default() += 1;
    }
    let mut rejections_by_stage = BTreeMap::new();
    for r in &rejections {
        *rejections_by_stage.entry(r.stage).or_insert(0) += 1;
    }
    let rejection_histogram = error_histogram(rejections.iter().filter(|r| r.error_type.is_some()).map(|r| r.error_type));

    let endpoints = endpoint_ids(gw);
    let mut notes = vec!["samples whose payload could not be extracted count as rejected at the extraction stage".to_string()];
    let mut history = load_history(&cfg.paths.work_dir, iteration)?;
    if let Some(prev) = history.last() {
        if prev.endpoints == endpoints {
            let msg = format!(
                "endpoints unchanged since iteration {}; point the configuration at the fine-tuned models",
                prev.iteration
            );
            ::log::warn!("{msg}");
            notes.push(msg);
        }
    }
    let mut report = IterationReport {
        iteration,
        functions: work.len(),
        attempted,
        accepted,
        rejected,
        exported: s_i.len(),
        accepted_by_language,
        rejections_by_stage,
        rejection_histogram,
        vt: vt_metric(&validity).ok(),
        elapsed_secs: started.elapsed().as_secs_f64(),
        exports,
        converged: false,
        endpoints,
        notes,
    };
    history.push(report.clone());
    report.converged = converged(&history, &cfg.convergence)?;
    write_report(&report, &dir.join(REPORT_JSON), &dir.join(REPORT_HTML), render_iteration_html)?;
    Ok(IterationOutcome { s_i, rejections, report })
}
