use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Classifier, CompileSpec, ExecError, Execute, ExecutionResult, Phase, Status, DEFAULT_RUN_TIMEOUT};
use crate::wrapgen::{case_begin_line, case_end_line, HarnessUnit};

/// Canned behaviour for one program.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockCase {
    /// One record line per test case, printed between case delimiters.
    #[serde(default)]
    pub records: Vec<String>,
    /// Compiler diagnostics; when set the program never runs.
    #[serde(default)]
    pub compile_error: Option<String>,
    /// Crash after printing this many cases.
    #[serde(default)]
    pub crash_after: Option<usize>,
    /// stderr for a crash; defaults to a segmentation fault message.
    #[serde(default)]
    pub runtime_error: Option<String>,
    #[serde(default)]
    pub timeout: bool,
}

/// Transcripts keyed, in lookup order, by function id, `name@backend`, or
/// plain entry name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MockTranscripts(pub BTreeMap<String, MockCase>);

impl MockTranscripts {
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn lookup(&self, unit: &HarnessUnit) -> Option<&MockCase> {
        self.0
            .get(&unit.function_id)
            .or_else(|| self.0.get(&format!("{}@{}", unit.entry_name, unit.backend)))
            .or_else(|| self.0.get(&unit.entry_name))
    }
}

/// Executor that never touches a compiler.
#[derive(Debug, Clone)]
pub struct MockExecutor {
    pub transcripts: MockTranscripts,
    pub run_timeout: Duration,
    pub classifier: Arc<Classifier>,
    calls: Arc<Mutex<Vec<String>>>,
}

impl MockExecutor {
    pub fn new(transcripts: MockTranscripts) -> Self {
        MockExecutor {
            transcripts,
            run_timeout: DEFAULT_RUN_TIMEOUT,
            classifier: Arc::new(Classifier::builtin()),
            calls: Arc::default(),
        }
    }

    /// Function ids of every unit executed so far, in call order.
    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().unwrap().clone()
    }
}

impl Execute for MockExecutor {
    fn execute(&self, unit: &HarnessUnit, _spec: &CompileSpec) -> Result<ExecutionResult, ExecError> {
        self.calls.lock().unwrap().push(unit.function_id.clone());
        let case = self.transcripts.lookup(unit).ok_or_else(|| {
            ExecError::NoTranscript(format!("{} ({}@{})", unit.function_id, unit.entry_name, unit.backend))
        })?;
        if let Some(diag) = &case.compile_error {
            return Ok(ExecutionResult::failed(Phase::Compile, Status::CompileError, diag.clone(), &self.classifier));
        }
        if case.timeout {
            let mut r = ExecutionResult::failed(Phase::Run, Status::Timeout, String::new(), &self.classifier);
            r.duration = self.run_timeout;
            return Ok(r);
        }
        let shown = case.crash_after.unwrap_or(case.records.len()).min(case.records.len());
        let mut stdout = String::new();
        for (i, rec) in case.records[..shown].iter().enumerate() {
            let k = i + 1;
            stdout.push_str(&format!("{}\n{rec}\n{}\n", case_begin_line(k), case_end_line(k)));
        }
        if case.crash_after.is_some() {
            let stderr = case
                .runtime_error
                .clone()
                .unwrap_or_else(|| "terminated by signal 11 (SIGSEGV)".to_string());
            let mut r = ExecutionResult::failed(Phase::Run, Status::RuntimeError, stderr, &self.classifier);
            r.stdout = stdout;
            r.exit_code = Some(139);
            return Ok(r);
        }
        Ok(ExecutionResult {
            phase: Phase::Run,
            status: Status::Ok,
            stdout,
            stderr: String::new(),
            exit_code: Some(0),
            duration: Duration::ZERO,
            error_type: None,
        })
    }
}
