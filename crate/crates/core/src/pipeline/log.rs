use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::corpus::Direction;
use crate::suite::TestSuite;
use crate::verify::{Candidate, Rejection, VerifiedTriplet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteOutcome {
    Ok(TestSuite),
    Failed(String),
}

impl SuiteOutcome {
    pub fn as_result(&self) -> Result<TestSuite, String> {
        match self {
            SuiteOutcome::Ok(s) => Ok(s.clone()),
            SuiteOutcome::Failed(e) => Err(e.clone()),
        }
    }
}

/// Test-generation result for one function, as written by the staged CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRecord {
    pub function_id: String,
    pub suite: SuiteOutcome,
}

/// Model output for one function, recorded before anything runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generated {
    pub function_id: String,
    pub direction: Direction,
    /// Wrapper written for a CUDA source kernel that came without one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_wrapper: Option<String>,
    pub candidates: Vec<Candidate>,
    pub suite: SuiteOutcome,
}

/// Co-verification verdicts for one function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verified {
    pub function_id: String,
    pub direction: Direction,
    pub accepted: Vec<VerifiedTriplet>,
    pub rejections: Vec<Rejection>,
    pub cases: usize,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum LogEntry {
    Generated(Generated),
    Verified(Verified),
}

pub type Key = (String, Direction);

/// Append-only record of finished work for one iteration. The pipeline is
/// its only writer.
#[derive(Debug)]
pub struct CompletionLog {
    path: PathBuf,
    pub generated: BTreeMap<Key, Generated>,
    pub verified: BTreeMap<Key, Verified>,
}

impl CompletionLog {
    /// Open or create. A torn final line from an interrupted write is
    /// dropped; any other unreadable line is an error.
    pub fn open(path: &Path) -> Result<Self, PipelineError> {
        let mut log = CompletionLog { path: path.to_path_buf(), generated: BTreeMap::new(), verified: BTreeMap::new() };
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(log),
            Err(e) => return Err(PipelineError::io(path, e)),
        };
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let mut good_len = 0;
        for (i, line) in lines.iter().enumerate() {
            match serde_json::from_str::<LogEntry>(line) {
                Ok(e) => {
                    log.insert(e);
                    good_len += line.len() + 1;
                }
                Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => {
                    log::warn!("{}: dropping torn last entry", path.display());
                    std::fs::write(path, &text[..good_len.min(text.len())]).map_err(|e| PipelineError::io(path, e))?;
                }
                Err(e) => {
                    return Err(PipelineError::Config(format!("{}:{}: bad log entry: {e}", path.display(), i + 1)))
                }
            }
        }
        Ok(log)
    }

    fn insert(&mut self, e: LogEntry) {
        match e {
            LogEntry::Generated(g) => {
                self.generated.insert((g.function_id.clone(), g.direction), g);
            }
            LogEntry::Verified(v) => {
                self.verified.insert((v.function_id.clone(), v.direction), v);
            }
        }
    }

    pub fn append(&mut self, e: LogEntry) -> Result<(), PipelineError> {
        let mut line = serde_json::to_string(&e).expect("log entry serializes");
        line.push('\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|err| PipelineError::io(&self.path, err))?;
        f.write_all(line.as_bytes()).and_then(|_| f.sync_data()).map_err(|err| PipelineError::io(&self.path, err))?;
        self.insert(e);
        Ok(())
    }
}
