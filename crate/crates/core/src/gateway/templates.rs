use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GatewayError;
use crate::corpus::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[default]
    Translate,
    GenTests,
    GenWrapper,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Translate => "translate",
            Task::GenTests => "gen_tests",
            Task::GenWrapper => "gen_wrapper",
        }
    }

    fn file_stem(self) -> &'static str {
        match self {
            Task::Translate => "translate",
            Task::GenTests => "tests",
            Task::GenWrapper => "wrapper",
        }
    }
}

/// Fine-tuned endpoints get the bare task prompt; generic ones get a worked
/// example first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    TaskPrompt,
    #[default]
    OneShot,
}

impl PromptMode {
    fn file_part(self) -> &'static str {
        match self {
            PromptMode::TaskPrompt => "task",
            PromptMode::OneShot => "one_shot",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub task: Task,
    pub mode: PromptMode,
    pub direction: Option<Direction>,
    pub system: Option<String>,
    pub body: String,
}

/// Values substituted into `{source_code}`, `{source_lang}`, `{target_lang}`
/// and `{n_tests}`.
#[derive(Debug, Clone, Default)]
pub struct PromptVars<'a> {
    pub source_code: &'a str,
    pub source_lang: &'a str,
    pub target_lang: &'a str,
    pub n_tests: usize,
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.task == Task::Translate && self.direction.is_none() {
            return Err(GatewayError::Config("translate template without a direction".into()));
        }
        if !self.body.contains("{source_code}") {
            return Err(GatewayError::Config(format!("{} template lacks {{source_code}}", self.task.as_str())));
        }
        Ok(())
    }

    /// Whether the template text itself states the number of tests.
    pub fn has_n_tests(&self) -> bool {
        self.body.contains("{n_tests}") || self.system.as_deref().is_some_and(|s| s.contains("{n_tests}"))
    }

    pub fn render(&self, vars: &PromptVars<'_>) -> (Option<String>, String) {
        (self.system.as_deref().map(|s| render(s, vars)), render(&self.body, vars))
    }
}

/// Single-pass substitution. `{{` and `}}` collapse to one brace; any other
/// brace, including those in C code, is copied as is. Substituted values are
/// never rescanned.
pub fn render(text: &str, vars: &PromptVars<'_>) -> String {
    let n_tests = vars.n_tests.to_string();
    let keys: [(&str, &str); 4] = [
        ("{source_code}", vars.source_code),
        ("{source_lang}", vars.source_lang),
        ("{target_lang}", vars.target_lang),
        ("{n_tests}", &n_tests),
    ];
    let mut out = String::with_capacity(text.len() + vars.source_code.len());
    let mut rest = text;
    'outer: while let Some(c) = rest.chars().next() {
        if rest.starts_with("{{") || rest.starts_with("}}") {
            out.push(c);
            rest = &rest[2..];
            continue;
        }
        if c == '{' {
            for (k, v) in keys {
                if let Some(after) = rest.strip_prefix(k) {
                    out.push_str(v);
                    rest = after;
                    continue 'outer;
                }
            }
        }
        out.push(c);
        rest = &rest[c.len_utf8()..];
    }
    out
}

/// All templates, keyed by task, mode and direction.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    templates: BTreeMap<(Task, PromptMode, Option<Direction>), PromptTemplate>,
}

const TRANSLATE_SYSTEM: &str = include_str!("../../templates/translate.system.txt");
const TRANSLATE_TASK: &str = include_str!("../../templates/translate.task.txt");
const TRANSLATE_C_TO_CUDA: &str = include_str!("../../templates/translate.one_shot.C_to_CUDA.txt");
const TRANSLATE_CUDA_TO_C: &str = include_str!("../../templates/translate.one_shot.CUDA_to_C.txt");
const TESTS_SYSTEM: &str = include_str!("../../templates/tests.system.txt");
const TESTS_TASK: &str = include_str!("../../templates/tests.task.txt");
const TESTS_ONE_SHOT: &str = include_str!("../../templates/tests.one_shot.txt");
const WRAPPER: &str = include_str!("../../templates/wrapper.txt");

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet::builtin()
    }
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let mut set = TemplateSet { templates: BTreeMap::new() };
        for d in [Direction::CToCuda, Direction::CudaToC] {
            let one_shot = if d == Direction::CToCuda { TRANSLATE_C_TO_CUDA } else { TRANSLATE_CUDA_TO_C };
            for (mode, body) in [(PromptMode::TaskPrompt, TRANSLATE_TASK), (PromptMode::OneShot, one_shot)] {
                set.insert(PromptTemplate {
                    task: Task::Translate,
                    mode,
                    direction: Some(d),
                    system: Some(TRANSLATE_SYSTEM.trim_end().to_string()),
                    body: body.to_string(),
                });
            }
        }
        for (mode, body) in [(PromptMode::TaskPrompt, TESTS_TASK), (PromptMode::OneShot, TESTS_ONE_SHOT)] {
            set.insert(PromptTemplate {
                task: Task::GenTests,
                mode,
                direction: None,
                system: Some(TESTS_SYSTEM.trim_end().to_string()),
                body: body.to_string(),
            });
        }
        for mode in [PromptMode::TaskPrompt, PromptMode::OneShot] {
            set.insert(PromptTemplate {
                task: Task::GenWrapper,
                mode,
                direction: None,
                system: None,
                body: WRAPPER.to_string(),
            });
        }
        set
    }

    pub fn insert(&mut self, t: PromptTemplate) {
        self.templates.insert((t.task, t.mode, t.direction), t);
    }

    /// Start from the built-in set and replace whatever the directory provides.
    ///
    /// Bodies are read from `<task>.<mode>[.<direction>].txt` (task one of
    /// `translate`, `tests`, `wrapper`; mode `task` or `one_shot`) and system
    /// prompts from `<task>.system.txt`. A body file without a direction
    /// applies to both directions.
    pub fn load_dir(dir: &Path) -> Result<Self, GatewayError> {
        let mut set = TemplateSet::builtin();
        let read = |name: String| -> Result<Option<String>, GatewayError> {
            let p = dir.join(&name);
            match std::fs::read_to_string(&p) {
                Ok(s) => Ok(Some(s)),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                Err(e) => Err(GatewayError::Config(format!("{}: {e}", p.display()))),
            }
        };
        let keys: Vec<_> = set.templates.keys().copied().collect();
        for (task, mode, dir_key) in keys {
            let stem = task.file_stem();
            let mut body = read(format!("{stem}.{}.txt", mode.file_part()))?;
            if let Some(d) = dir_key {
                if let Some(b) = read(format!("{stem}.{}.{}.txt", mode.file_part(), d.as_str()))? {
                    body = Some(b);
                }
            }
            let system = read(format!("{stem}.system.txt"))?;
            let t = set.templates.get_mut(&(task, mode, dir_key)).expect("key from the same map");
            if let Some(b) = body {
                t.body = b;
            }
            if let Some(s) = system {
                t.system = Some(s.trim_end().to_string());
            }
            t.validate()?;
        }
        Ok(set)
    }

    pub fn get(&self, task: Task, mode: PromptMode, direction: Option<Direction>) -> Option<&PromptTemplate> {
        self.templates.get(&(task, mode, direction))
    }
}
