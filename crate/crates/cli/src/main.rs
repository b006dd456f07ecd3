//! `coverify` command line: run the co-verification pipeline stage by stage
//! or one whole iteration at a time.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use coverify::corpus::{self, Direction, FunctionUnit, Language};
use coverify::executor::{parallel_map, Backend};
use coverify::gateway::GatewayError;
use coverify::metrics::MetricsReport;
use coverify::pipeline::{
    build_executor, build_verifier, evaluate, export_training_data, load_corpus, read_test_set, render_iteration_html,
    render_metrics_html, run_iteration, translate_unit, write_report, GatewaySet, IterationReport, PipelineConfig,
    PipelineError, RunOptions, SuiteOutcome, SuiteRecord, REJECTIONS_FILE, REPORT_HTML, REPORT_JSON, S_I_FILE,
};
use coverify::verify::{co_verify_corpus, read_jsonl, write_jsonl, Candidate, VerifiedTriplet};

const CORPUS_FILE: &str = "corpus.jsonl";
const TRANSLATIONS_FILE: &str = "translations.jsonl";
const SUITES_FILE: &str = "suites.jsonl";
const METRICS_JSON: &str = "metrics.json";
const METRICS_HTML: &str = "metrics.html";

#[derive(Debug, Parser)]
#[command(name = "coverify", version, about = "Co-verified C/CUDA translation data pipeline")]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true, default_value = "coverify.toml")]
    config: PathBuf,
    /// Answer model requests from the configured canned responses.
    #[arg(long, global = true)]
    mock: bool,
    /// CUDA backend: cuda_shim or nvcc.
    #[arg(long, global = true)]
    backend: Option<Backend>,
    /// Keep compiler scratch directories for inspection.
    #[arg(long, global = true)]
    keep_scratch: bool,
    /// Override run.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override run.iteration.
    #[arg(long, global = true)]
    iteration: Option<u32>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split, normalize and deduplicate the corpus into <work_dir>/corpus.jsonl.
    Ingest,
    /// Ask the wrapper model for host launchers of unwrapped CUDA kernels.
    GenWrappers,
    /// Sample translations into <iteration>/translations.jsonl.
    Translate,
    /// Generate test suites into <iteration>/suites.jsonl.
    GenTests,
    /// Co-verify staged translations against staged suites.
    Verify,
    /// Run one whole iteration: generate, verify, export and report.
    Iterate {
        /// Stop after this many functions (the next run resumes).
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Score the translator on the configured test set.
    Evaluate,
    /// Re-render the HTML page for an iteration or evaluation report.
    Report {
        /// Render <work_dir>/metrics.json instead of the iteration report.
        #[arg(long)]
        metrics: bool,
    },
    /// Write fine-tuning files from an iteration's accepted triplets.
    ExportTraining {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Exit 2 for configuration and usage problems, 1 for everything else.
fn exit_code(e: &anyhow::Error) -> u8 {
    let config = e.chain().any(|c| {
        c.downcast_ref::<PipelineError>().is_some_and(PipelineError::is_config)
            || c.downcast_ref::<GatewayError>().is_some_and(|g| matches!(g, GatewayError::Config(_)))
    });
    if config {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(&cli.config)?;
    if let Some(b) = cli.backend {
        if b == Backend::NativeC {
            return Err(PipelineError::Config("--backend takes cuda_shim or nvcc".into()).into());
        }
        cfg.backends.cuda.backend = Some(b);
        cfg.backends.cuda.compiler_path = None;
        cfg.backends.cuda.flags = None;
    }
    if let Some(s) = cli.seed {
        cfg.run.seed = s;
    }
    if let Some(i) = cli.iteration {
        cfg.run.iteration = i;
    }
    cfg.executor.keep_scratch |= cli.keep_scratch;
    cfg.validate()?;
    Ok(cfg)
}

/// Staged commands read the ingested corpus when present.
fn staged_corpus(cfg: &PipelineConfig) -> anyhow::Result<Vec<FunctionUnit>> {
    let staged = cfg.paths.work_dir.join(CORPUS_FILE);
    let path = if staged.exists() { staged } else { cfg.paths.corpus.clone() };
    Ok(load_corpus(&path)?)
}

fn work_items(cfg: &PipelineConfig, corpus: &[FunctionUnit]) -> Vec<(FunctionUnit, Direction)> {
    corpus
        .iter()
        .map(|u| (u.clone(), Direction::from_source(u.language)))
        .filter(|(_, d)| cfg.run.directions.contains(d))
        .collect()
}

fn ensure_dir(p: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = load_config(cli)?;
    let dir = cfg.iteration_dir();
    match &cli.command {
        Command::Ingest => {
            let ing = corpus::ingest(&cfg.paths.corpus, None)?;
            for r in &ing.rejects {
                log::warn!("{}: skipped: {}", r.origin, r.reason);
            }
            ensure_dir(&cfg.paths.work_dir)?;
            let out = cfg.paths.work_dir.join(CORPUS_FILE);
            corpus::write_jsonl(&ing.units, &out)?;
            println!(
                "{} functions ({} rejected, {} duplicates) -> {}",
                ing.units.len(),
                ing.rejects.len(),
                ing.duplicates,
                out.display()
            );
        }
        Command::GenWrappers => {
            let gws = GatewaySet::from_config(&cfg, cli.mock)?;
            let mut units = staged_corpus(&cfg)?;
            let todo: Vec<usize> = (0..units.len())
                .filter(|&i| units[i].language == Language::Cuda && units[i].wrapper_source.is_none())
                .collect();
            let mut written = 0;
            for i in todo {
                match gws.wrapper.request_cuda_wrapper(&mut units[i]) {
                    Ok(_) => written += 1,
                    Err(e @ (GatewayError::Unreachable { .. } | GatewayError::Rejected(_))) => return Err(e.into()),
                    Err(e) => log::warn!("{}: {e}", units[i].name),
                }
            }
            ensure_dir(&cfg.paths.work_dir)?;
            let out = cfg.paths.work_dir.join(CORPUS_FILE);
            corpus::write_jsonl(&units, &out)?;
            println!("{written} wrappers written -> {}", out.display());
        }
        Command::Translate => {
            let gws = GatewaySet::from_config(&cfg, cli.mock)?;
            let gw = gws.borrow();
            let items = work_items(&cfg, &staged_corpus(&cfg)?);
            let results = parallel_map(items, cfg.run.workers, |(x, d)| {
                translate_unit(&x, d, cfg.run.n_translation_samples, &gw)
            });
            let mut all: Vec<Candidate> = Vec::new();
            for r in results {
                all.extend(r?);
            }
            ensure_dir(&dir)?;
            let out = dir.join(TRANSLATIONS_FILE);
            write_jsonl(&all, &out)?;
            println!("{} candidates -> {}", all.len(), out.display());
        }
        Command::GenTests => {
            let gws = GatewaySet::from_config(&cfg, cli.mock)?;
            let items = work_items(&cfg, &staged_corpus(&cfg)?);
            let results = parallel_map(items, cfg.run.workers, |(x, _)| {
                match gws.tester.request_tests(&x, cfg.run.n_tests) {
                    Ok(s) => Ok(SuiteRecord { function_id: x.id.clone(), suite: SuiteOutcome::Ok(s) }),
                    Err(e @ (GatewayError::Unreachable { .. } | GatewayError::Rejected(_) | GatewayError::Config(_))) => {
                        Err(e)
                    }
                    Err(e) => Ok(SuiteRecord { function_id: x.id.clone(), suite: SuiteOutcome::Failed(e.to_string()) }),
                }
            });
            let records: Vec<SuiteRecord> = results.into_iter().collect::<Result<_, _>>()?;
            let ok = records.iter().filter(|r| matches!(r.suite, SuiteOutcome::Ok(_))).count();
            ensure_dir(&dir)?;
            let out = dir.join(SUITES_FILE);
            write_jsonl(&records, &out)?;
            println!("{ok} of {} suites usable -> {}", records.len(), out.display());
        }
        Command::Verify => {
            let corpus = staged_corpus(&cfg)?;
            let candidates: Vec<Candidate> = read_jsonl(&dir.join(TRANSLATIONS_FILE))
                .with_context(|| format!("reading {}; run `coverify translate` first", TRANSLATIONS_FILE))?;
            let suites: Vec<SuiteRecord> = read_jsonl(&dir.join(SUITES_FILE))
                .with_context(|| format!("reading {}; run `coverify gen-tests` first", SUITES_FILE))?;
            let mut translations: BTreeMap<String, Vec<Candidate>> = BTreeMap::new();
            for c in candidates {
                translations.entry(c.function_id.clone()).or_default().push(c);
            }
            let suites = suites.into_iter().map(|r| (r.function_id, r.suite.as_result())).collect();
            let exec = build_executor(&cfg, cli.keep_scratch)?;
            let verifier = build_verifier(&cfg, exec.as_ref())?;
            let out = co_verify_corpus(&verifier, &corpus, &translations, &suites, cfg.run.iteration, cfg.run.workers)?;
            let s_path = dir.join(S_I_FILE);
            write_jsonl(&out.accepted, &s_path)?;
            write_jsonl(&out.rejections, &dir.join(REJECTIONS_FILE))?;
            println!("{} accepted, {} rejected -> {}", out.accepted.len(), out.rejections.len(), s_path.display());
        }
        Command::Iterate { stop_after } => {
            let gws = GatewaySet::from_config(&cfg, cli.mock)?;
            let exec = build_executor(&cfg, cli.keep_scratch)?;
            let corpus = staged_corpus(&cfg)?;
            let out = run_iteration(&cfg, &corpus, &gws.borrow(), exec.as_ref(), &RunOptions { stop_after: *stop_after })?;
            let r = &out.report;
            println!(
                "iteration {}: {} functions, {} triplets exported, VT {}{}",
                r.iteration,
                r.functions,
                r.exported,
                r.vt.map_or("n/a".to_string(), |v| format!("{:.2}%", 100.0 * v)),
                if r.converged { ", converged" } else { "" }
            );
            println!("report: {}", dir.join(REPORT_HTML).display());
        }
        Command::Evaluate => {
            let path = cfg.paths.test_set.as_ref().ok_or_else(|| PipelineError::Config("paths.test_set is not set".into()))?;
            let pairs = read_test_set(path)?;
            let gws = GatewaySet::from_config(&cfg, cli.mock)?;
            let exec = build_executor(&cfg, cli.keep_scratch)?;
            let verifier = build_verifier(&cfg, exec.as_ref())?;
            let m = evaluate(&pairs, &cfg.evaluate, &gws.borrow(), &verifier, cfg.run.workers)?;
            ensure_dir(&cfg.paths.work_dir)?;
            write_report(&m, &cfg.paths.work_dir.join(METRICS_JSON), &cfg.paths.work_dir.join(METRICS_HTML), render_metrics_html)?;
            println!("{}", serde_json::to_string_pretty(&m)?);
        }
        Command::Report { metrics } => {
            let (json, html) = if *metrics {
                (cfg.paths.work_dir.join(METRICS_JSON), cfg.paths.work_dir.join(METRICS_HTML))
            } else {
                (dir.join(REPORT_JSON), dir.join(REPORT_HTML))
            };
            let text = std::fs::read_to_string(&json).with_context(|| format!("reading {}", json.display()))?;
            if *metrics {
                let m: MetricsReport = serde_json::from_str(&text)?;
                write_report(&m, &json, &html, render_metrics_html)?;
            } else {
                let r: IterationReport = serde_json::from_str(&text)?;
                write_report(&r, &json, &html, render_iteration_html)?;
            }
            println!("{}", html.display());
        }
        Command::ExportTraining { out } => {
            let s_i: Vec<VerifiedTriplet> = read_jsonl(&dir.join(S_I_FILE))
                .with_context(|| format!("reading {}", dir.join(S_I_FILE).display()))?;
            let gws = GatewaySet::from_config(&cfg, cli.mock)?;
            let out_dir = out.clone().unwrap_or_else(|| dir.clone());
            let paths = export_training_data(
                &s_i,
                cfg.run.iteration,
                gws.translator.templates(),
                &out_dir,
                cfg.run.split_by_direction,
            )?;
            println!("{} examples per task -> {}", s_i.len(), paths.manifest.display());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_errors_exit_two() {
        let e: anyhow::Error = PipelineError::Config("bad".into()).into();
        assert_eq!(exit_code(&e), 2);
        let e: anyhow::Error = PipelineError::EmptyHistory.into();
        assert_eq!(exit_code(&e), 1);
    }
}
