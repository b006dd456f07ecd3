//! Compiling and running harness units in isolated scratch directories.

mod classify;
mod mock;
mod pool;
mod process;

use std::fmt;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use classify::{classify_error, Classifier, ErrorType, RuleSpec, RulesError};
pub use mock::{MockCase, MockExecutor, MockTranscripts};
pub use pool::parallel_map;
pub use process::{Artifact, CompileOutcome, ProcessExecutor, ResourceLimits};

use crate::wrapgen::HarnessUnit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Compile,
    Run,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Compile => "compile",
            Phase::Run => "run",
        })
    }
}

/// How a harness unit gets built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// C compiled as C++ by a host compiler.
    NativeC,
    /// CUDA compiled by nvcc and run on a GPU.
    Nvcc,
    /// CUDA compiled by a host compiler against the serial emulation header.
    CudaShim,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::NativeC => "native_c",
            Backend::Nvcc => "nvcc",
            Backend::CudaShim => "cuda_shim",
        }
    }

    pub fn source_extension(self) -> &'static str {
        match self {
            Backend::Nvcc => "cu",
            _ => "cpp",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "native_c" => Ok(Backend::NativeC),
            "nvcc" => Ok(Backend::Nvcc),
            "cuda_shim" => Ok(Backend::CudaShim),
            other => Err(format!("unknown backend '{other}' (expected native_c, nvcc or cuda_shim)")),
        }
    }
}

/// Compiler invocation for one backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileSpec {
    pub backend: Backend,
    pub compiler_path: PathBuf,
    pub flags: Vec<String>,
    /// Searched before the built-in header directory.
    #[serde(default)]
    pub include_dirs: Vec<PathBuf>,
    #[serde(with = "secs")]
    pub compile_timeout: Duration,
}

pub const DEFAULT_COMPILE_TIMEOUT: Duration = Duration::from_secs(120);
pub const DEFAULT_RUN_TIMEOUT: Duration = Duration::from_secs(60);

impl CompileSpec {
    pub fn default_for(backend: Backend) -> Self {
        let (compiler, flags): (&str, &[&str]) = match backend {
            Backend::NativeC | Backend::CudaShim => ("g++", &["-std=c++17", "-O0", "-w", "-fstack-protector-all"]),
            Backend::Nvcc => ("nvcc", &["-std=c++17", "-O0", "-w"]),
        };
        CompileSpec {
            backend,
            compiler_path: PathBuf::from(compiler),
            flags: flags.iter().map(|s| s.to_string()).collect(),
            include_dirs: Vec::new(),
            compile_timeout: DEFAULT_COMPILE_TIMEOUT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    CompileError,
    RuntimeError,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub phase: Phase,
    pub status: Status,
    pub stdout: String,
    pub stderr: String,
    pub exit_code: Option<i32>,
    #[serde(with = "secs")]
    pub duration: Duration,
    pub error_type: Option<ErrorType>,
}

impl ExecutionResult {
    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }

    pub(crate) fn failed(phase: Phase, status: Status, stderr: String, classifier: &Classifier) -> Self {
        let error_type = match status {
            Status::Ok => None,
            Status::Timeout => Some(ErrorType::Unknown),
            _ => Some(classifier.classify(&stderr, phase)),
        };
        ExecutionResult {
            phase,
            status,
            stdout: String::new(),
            stderr,
            exit_code: None,
            duration: Duration::ZERO,
            error_type,
        }
    }
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("toolchain not found: {0}")]
    ToolchainMissing(String),
    #[error("no mock transcript for {0}")]
    NoTranscript(String),
    #[error("scratch directory: {0}")]
    Scratch(#[from] std::io::Error),
}

/// Anything that can turn a harness unit into an execution result.
pub trait Execute: Send + Sync {
    /// Compile then run. A compile failure comes back as a result with
    /// `phase == Compile`; only infrastructure problems are errors.
    fn execute(&self, unit: &HarnessUnit, spec: &CompileSpec) -> Result<ExecutionResult, ExecError>;
}

pub(crate) mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}
