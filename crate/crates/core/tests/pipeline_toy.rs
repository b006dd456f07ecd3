//! Full iterations over the 20-function toy corpus with canned model answers.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use coverify::corpus::Direction;
use coverify::executor::ErrorType;
use coverify::pipeline::{
    build_executor, load_corpus, run_iteration, GatewaySet, PipelineConfig, PipelineError, RunOptions,
    TrainingExample, COMPLETION_LOG, REJECTIONS_FILE, S_I_FILE,
};
use coverify::verify::{read_jsonl, Rejection, Stage, VerifiedTriplet};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/toy")
}

fn config(work: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::load(&fixture().join("config.toml")).unwrap();
    cfg.paths.work_dir = work.to_path_buf();
    cfg
}

fn run(cfg: &PipelineConfig, opts: &RunOptions) -> (Result<coverify::pipeline::IterationOutcome, PipelineError>, usize) {
    let gws = GatewaySet::from_config(cfg, true).unwrap();
    let exec = build_executor(cfg, false).unwrap();
    let corpus = load_corpus(&cfg.paths.corpus).unwrap();
    let out = run_iteration(cfg, &corpus, &gws.borrow(), exec.as_ref(), opts);
    (out, gws.mock.as_ref().unwrap().served().len())
}

fn names(s: &[VerifiedTriplet]) -> Vec<String> {
    s.iter().map(|t| t.x.name.clone()).collect()
}

fn expected_s1() -> Vec<String> {
    (0..10).map(|k| format!("toy_{k:02}")).collect()
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn first_iteration_accepts_exactly_the_correct_functions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let (out, _) = run(&cfg, &RunOptions::default());
    let out = out.unwrap();

    let mut got = names(&out.s_i);
    got.sort();
    assert_eq!(got, expected_s1());
    for t in &out.s_i {
        let k: usize = t.x.name[4..].parse().unwrap();
        let want = if k % 2 == 0 { Direction::CToCuda } else { Direction::CudaToC };
        assert_eq!(t.direction, want, "{}", t.x.name);
        assert_eq!(t.suite.cases.len(), 3);
    }

    let r = &out.report;
    assert_eq!(r.functions, 20);
    assert_eq!(r.exported, 10);
    assert_eq!(r.attempted[&Direction::CToCuda], 20);
    assert_eq!(r.attempted[&Direction::CudaToC], 20);
    // Both samples of every correct translation pass; the cap keeps one.
    assert_eq!(r.accepted[&Direction::CToCuda] + r.accepted[&Direction::CudaToC], 20);
    assert_eq!(r.vt, Some(16.0 / 20.0));

    let on_disk: Vec<VerifiedTriplet> = read_jsonl(&cfg.iteration_dir().join(S_I_FILE)).unwrap();
    assert_eq!(on_disk, out.s_i);
    let translator: Vec<TrainingExample> = read_jsonl(&r.exports.translator[0]).unwrap();
    let tester: Vec<TrainingExample> = read_jsonl(&r.exports.tester[0]).unwrap();
    assert_eq!(translator.len(), 10);
    assert_eq!(tester.len(), 10);
    for (ex, t) in translator.iter().zip(&out.s_i) {
        assert_eq!(ex.direction, Some(t.direction.reversed()));
        assert_eq!(ex.target, t.x.source);
        assert!(ex.prompt.contains(&t.y));
    }
}

#[test]
fn rejections_land_in_the_expected_stages() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let (out, _) = run(&cfg, &RunOptions::default());
    let out = out.unwrap();
    let corpus = load_corpus(&cfg.paths.corpus).unwrap();
    let name_of = |id: &str| corpus.iter().find(|u| u.id == id).unwrap().name.clone();
    let stages = |name: &str| -> BTreeSet<(Stage, Option<ErrorType>)> {
        out.rejections.iter().filter(|r| name_of(&r.function_id) == name).map(|r| (r.stage, r.error_type)).collect()
    };
    assert_eq!(stages("toy_10"), BTreeSet::from([(Stage::XRun, Some(ErrorType::Unknown))]));
    assert_eq!(stages("toy_11"), BTreeSet::from([(Stage::Extraction, None)]));
    for k in [12, 13, 14] {
        assert_eq!(stages(&format!("toy_{k}")), BTreeSet::from([(Stage::Mismatch, None)]));
    }
    for k in [15, 16] {
        assert_eq!(stages(&format!("toy_{k}")), BTreeSet::from([(Stage::YCompile, Some(ErrorType::Type5))]));
    }
    assert_eq!(stages("toy_17"), BTreeSet::from([(Stage::Extraction, None)]));
    assert_eq!(stages("toy_18"), BTreeSet::from([(Stage::XCompile, Some(ErrorType::Type2))]));
    assert_eq!(stages("toy_19"), BTreeSet::from([(Stage::Extraction, None)]));
    let on_disk: Vec<Rejection> = read_jsonl(&cfg.iteration_dir().join(REJECTIONS_FILE)).unwrap();
    assert_eq!(on_disk.len(), 20);
}

#[test]
fn rerun_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ca, cb) = (config(a.path()), config(b.path()));
    run(&ca, &RunOptions::default()).0.unwrap();
    run(&cb, &RunOptions::default()).0.unwrap();
    for f in [S_I_FILE, REJECTIONS_FILE, "translator.jsonl", "tester.jsonl", "export_manifest.json"] {
        assert_eq!(read(&ca.iteration_dir().join(f)), read(&cb.iteration_dir().join(f)), "{f}");
    }
}

#[test]
fn interrupted_run_resumes_without_repeating_work() {
    let (full, cut) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg_full = config(full.path());
    let (_, served_full) = run(&cfg_full, &RunOptions::default());

    let cfg = config(cut.path());
    let (first, served_a) = run(&cfg, &RunOptions { stop_after: Some(3) });
    match first {
        Err(PipelineError::Interrupted { completed }) => assert_eq!(completed, 3),
        other => panic!("expected an interruption, got {other:?}"),
    }
    // Simulate a crash mid-write of the next entry.
    let log = cfg.iteration_dir().join(COMPLETION_LOG);
    let mut text = std::fs::read_to_string(&log).unwrap();
    text.push_str("{\"step\":\"verified\",\"function_id\":\"");
    std::fs::write(&log, text).unwrap();

    let (second, served_b) = run(&cfg, &RunOptions::default());
    second.unwrap();
    assert_eq!(served_a + served_b, served_full, "model calls were repeated");
    for f in [S_I_FILE, REJECTIONS_FILE, "translator.jsonl", "tester.jsonl"] {
        assert_eq!(read(&cfg.iteration_dir().join(f)), read(&cfg_full.iteration_dir().join(f)), "{f}");
    }
}

#[test]
fn empty_corpus_produces_empty_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    cfg.paths.corpus = empty;
    let (out, served) = run(&cfg, &RunOptions::default());
    let out = out.unwrap();
    assert!(out.s_i.is_empty());
    assert_eq!(served, 0);
    assert_eq!(out.report.exported, 0);
    assert_eq!(out.report.vt, None);
    assert!(read(&cfg.iteration_dir().join(S_I_FILE)).is_empty());
    assert!(read(&out.report.exports.translator[0]).is_empty());
}

#[test]
fn second_iteration_warns_about_unchanged_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    run(&cfg, &RunOptions::default()).0.unwrap();
    cfg.run.iteration = 2;
    let out = run(&cfg, &RunOptions::default()).0.unwrap();
    assert!(out.report.notes.iter().any(|n| n.contains("unchanged since iteration 1")), "{:?}", out.report.notes);
    // Same models, same data: no growth, so the loop has converged.
    assert!(out.report.converged);
    let manifest = std::fs::read_to_string(cfg.iteration_dir().join("export_manifest.json")).unwrap();
    assert!(manifest.contains("\"suggested_epochs\": 2"), "{manifest}");
}

#[test]
fn split_exports_by_direction() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.run.split_by_direction = true;
    let out = run(&cfg, &RunOptions::default()).0.unwrap();
    let e = &out.report.exports;
    assert_eq!(e.translator.len(), 2);
    for p in e.translator.iter().chain(&e.tester) {
        let rows: Vec<TrainingExample> = read_jsonl(p).unwrap();
        assert_eq!(rows.len(), 5, "{}", p.display());
    }
}

#[test]
fn native_toolchain_agrees_with_canned_transcripts() {
    if std::process::Command::new("g++").arg("--version").output().is_err() {
        eprintln!("skipped: g++ not found");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.paths.mock_transcripts = None;
    let out = run(&cfg, &RunOptions::default()).0.unwrap();
    let mut got = names(&out.s_i);
    got.sort();
    assert_eq!(got, expected_s1());

    let canned = config(tempfile::tempdir().unwrap().path());
    let mock_out = run(&canned, &RunOptions::default()).0.unwrap();
    let records = |s: &[VerifiedTriplet]| -> Vec<Vec<String>> {
        s.iter().map(|t| t.x_transcript.cases.iter().map(|c| c.to_string()).collect()).collect()
    };
    assert_eq!(records(&out.s_i), records(&mock_out.s_i));
    let stage_of = |rs: &[Rejection]| -> BTreeSet<(String, Stage)> {
        rs.iter().map(|r| (r.function_id.clone(), r.stage)).collect()
    };
    assert_eq!(stage_of(&out.rejections), stage_of(&mock_out.rejections));
}

#[test]
fn evaluate_scores_the_held_out_pairs() {
    use coverify::pipeline::{build_verifier, evaluate, read_test_set};
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let gws = GatewaySet::from_config(&cfg, true).unwrap();
    let exec = build_executor(&cfg, false).unwrap();
    let verifier = build_verifier(&cfg, exec.as_ref()).unwrap();
    let pairs = read_test_set(cfg.paths.test_set.as_ref().unwrap()).unwrap();
    let m = evaluate(&pairs, &cfg.evaluate, &gws.borrow(), &verifier, 2).unwrap();

    assert_eq!(m.problems, 4);
    assert_eq!(m.samples_per_problem, 2);
    // toy_00 passes both samples; the mismatch, compile error and extraction
    // failure pass none.
    assert_eq!(m.pass_at[&1], 0.25);
    assert_eq!(m.pass_at[&2], 0.25);
    // Compiled: both toy_00 and both toy_12 samples.
    assert_eq!(m.cpass, 0.5);
    assert_eq!(m.extraction_failures, 2);
    assert_eq!(m.error_histogram[&ErrorType::Type5], 2);
    assert_eq!(m.error_histogram.values().sum::<usize>(), 2);
    assert_eq!(m.vt, Some(1.0));
    assert!(m.bleu > 0.0 && m.bleu < 1.0, "{}", m.bleu);
    assert!(m.pearson.contains_key("compile~pass"), "{:?}", m.pearson);
    assert!(m.notes.iter().any(|n| n.contains("count as failing")));
}

#[test]
fn every_accepted_triplet_reverifies() {
    use coverify::pipeline::build_verifier;
    use coverify::verify::{Candidate, Verdict};
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let out = run(&cfg, &RunOptions::default()).0.unwrap();
    let exec = build_executor(&cfg, false).unwrap();
    let v = build_verifier(&cfg, exec.as_ref()).unwrap();
    for t in &out.s_i {
        let c = Candidate {
            function_id: t.x.id.clone(),
            direction: t.direction,
            sample: t.sample,
            source: Some(t.y.clone()),
            wrapper: t.y_wrapper.clone(),
            extraction_error: None,
        };
        assert_eq!(c.id(), t.candidate_id);
        match v.verify_triplet(&t.x, &c, &t.suite, t.iteration).unwrap() {
            Verdict::Accepted(again) => assert_eq!(&again, t),
            Verdict::Rejected(r) => panic!("{}: {r:?}", t.x.name),
        }
    }
}
