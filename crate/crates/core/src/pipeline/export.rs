use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::corpus::Direction;
use crate::gateway::{PromptMode, PromptVars, Task, TemplateSet, DEFAULT_N_TESTS};
use crate::suite::render_cases;
use crate::verify::{write_jsonl, VerifiedTriplet};

/// One instruction pair for an external fine-tuning run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub task: Task,
    pub prompt: String,
    pub target: String,
    #[serde(default)]
    pub direction: Option<Direction>,
    pub iteration: u32,
    /// Candidate id of the triplet the example came from.
    pub origin: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportPaths {
    pub translator: Vec<PathBuf>,
    pub tester: Vec<PathBuf>,
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub iteration: u32,
    pub translate_examples: usize,
    pub gen_tests_examples: usize,
    pub files: Vec<PathBuf>,
    pub suggested_epochs: u32,
    pub note: String,
}

fn prompt(templates: &TemplateSet, task: Task, direction: Option<Direction>, vars: &PromptVars<'_>) -> String {
    let t = templates
        .get(task, PromptMode::TaskPrompt, direction)
        .expect("template sets always hold task prompts");
    match t.render(vars) {
        (Some(system), user) => format!("{system}\n\n{user}"),
        (None, user) => user,
    }
}

/// Back-translation pairs for one triplet: the translator learns to map the
/// generated program back to the original, the tester learns to write the
/// suite that verified it.
pub fn training_examples(t: &VerifiedTriplet, templates: &TemplateSet) -> (TrainingExample, TrainingExample) {
    let back = t.direction.reversed();
    let translate = TrainingExample {
        task: Task::Translate,
        prompt: prompt(
            templates,
            Task::Translate,
            Some(back),
            &PromptVars {
                source_code: &t.y,
                source_lang: back.source().display_name(),
                target_lang: back.target().display_name(),
                n_tests: DEFAULT_N_TESTS,
            },
        ),
        target: t.x.source.clone(),
        direction: Some(back),
        iteration: t.iteration,
        origin: t.candidate_id.clone(),
    };
    let lang = t.direction.target().display_name();
    let tests = TrainingExample {
        task: Task::GenTests,
        prompt: prompt(
            templates,
            Task::GenTests,
            None,
            &PromptVars { source_code: &t.y, source_lang: lang, target_lang: lang, n_tests: t.suite.cases.len() },
        ),
        target: render_cases(&t.suite.cases),
        direction: None,
        iteration: t.iteration,
        origin: t.candidate_id.clone(),
    };
    (translate, tests)
}

/// Write `translator.jsonl` and `tester.jsonl` (or one pair per direction)
/// plus a manifest into `out_dir`.
pub fn export_training_data(
    s_i: &[VerifiedTriplet],
    iteration: u32,
    templates: &TemplateSet,
    out_dir: &Path,
    split_by_direction: bool,
) -> Result<ExportPaths, PipelineError> {
    std::fs::create_dir_all(out_dir).map_err(|e| PipelineError::io(out_dir, e))?;
    let pairs: Vec<(Direction, TrainingExample, TrainingExample)> = s_i
        .iter()
        .map(|t| {
            let (a, b) = training_examples(t, templates);
            (t.direction, a, b)
        })
        .collect();
    let groups: Vec<(String, Option<Direction>)> = if split_by_direction {
        [Direction::CToCuda, Direction::CudaToC].iter().map(|d| (format!(".{}", d.as_str()), Some(*d))).collect()
    } else {
        vec![(String::new(), None)]
    };
    let mut paths = ExportPaths { manifest: out_dir.join("export_manifest.json"), ..Default::default() };
    for (suffix, dir) in groups {
        // Split files are grouped by the direction the triplet was generated in.
        let pick = |d: &Direction| dir.is_none_or(|x| x == *d);
        let tr: Vec<&TrainingExample> = pairs.iter().filter(|(d, ..)| pick(d)).map(|(_, a, _)| a).collect();
        let te: Vec<&TrainingExample> = pairs.iter().filter(|(d, ..)| pick(d)).map(|(_, _, b)| b).collect();
        let tp = out_dir.join(format!("translator{suffix}.jsonl"));
        let sp = out_dir.join(format!("tester{suffix}.jsonl"));
        write_jsonl(&tr, &tp).map_err(|e| PipelineError::io(&tp, e))?;
        write_jsonl(&te, &sp).map_err(|e| PipelineError::io(&sp, e))?;
        paths.translator.push(tp);
        paths.tester.push(sp);
    }
    let manifest = ExportManifest {
        iteration,
        translate_examples: pairs.len(),
        gen_tests_examples: pairs.len(),
        // File names only, so the manifest does not depend on where the run lives.
        files: paths.translator.iter().chain(&paths.tester).filter_map(|p| p.file_name()).map(PathBuf::from).collect(),
        suggested_epochs: iteration,
        note: format!(
            "training is external; iteration {iteration} examples are meant for {iteration} epoch(s) of fine-tuning"
        ),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&paths.manifest, text + "\n").map_err(|e| PipelineError::io(&paths.manifest, e))?;
    Ok(paths)
}
