use std::io::{ErrorKind, Read};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use tempfile::TempDir;

use super::{Classifier, CompileSpec, ExecError, Execute, ExecutionResult, Phase, Status, DEFAULT_RUN_TIMEOUT};
use crate::wrapgen::{HarnessUnit, CUDA_SHIM_HEADER, CUDA_SHIM_HEADER_NAME, HARNESS_HEADER, HARNESS_HEADER_NAME};

#[derive(Debug, Clone, PartialEq)]
pub struct ResourceLimits {
    /// Address-space limit applied to harness binaries (not to compilers).
    pub address_space_bytes: Option<u64>,
    pub max_stdout_bytes: usize,
    pub max_stderr_bytes: usize,
}

impl Default for ResourceLimits {
    fn default() -> Self {
        ResourceLimits {
            address_space_bytes: Some(4 << 30),
            max_stdout_bytes: 16 << 20,
            max_stderr_bytes: 1 << 20,
        }
    }
}

/// Runs real compilers and binaries, one scratch directory per job.
#[derive(Debug, Clone)]
pub struct ProcessExecutor {
    pub run_timeout: Duration,
    pub limits: ResourceLimits,
    pub scratch_root: Option<PathBuf>,
    pub keep_scratch: bool,
    pub classifier: Arc<Classifier>,
    /// Extra environment variables removed from child processes, on top of
    /// anything that looks like a credential.
    pub scrub_env: Vec<String>,
}

impl Default for ProcessExecutor {
    fn default() -> Self {
        ProcessExecutor {
            run_timeout: DEFAULT_RUN_TIMEOUT,
            limits: ResourceLimits::default(),
            scratch_root: None,
            keep_scratch: false,
            classifier: Arc::new(Classifier::builtin()),
            scrub_env: Vec::new(),
        }
    }
}

/// A compiled harness binary together with the scratch directory holding it.
#[derive(Debug)]
pub struct Artifact {
    pub binary: PathBuf,
    dir: TempDir,
}

impl Artifact {
    pub fn scratch_dir(&self) -> &Path {
        self.dir.path()
    }
}

#[derive(Debug)]
pub enum CompileOutcome {
    Built(Artifact),
    Failed(ExecutionResult),
}

impl ProcessExecutor {
    pub fn compile(&self, unit: &HarnessUnit, spec: &CompileSpec) -> Result<CompileOutcome, ExecError> {
        let mut builder = tempfile::Builder::new();
        builder.prefix("coverify-job-");
        let mut dir = match &self.scratch_root {
            Some(root) => {
                std::fs::create_dir_all(root)?;
                builder.tempdir_in(root)?
            }
            None => builder.tempdir()?,
        };
        dir.disable_cleanup(self.keep_scratch);
        if self.keep_scratch {
            log::info!("scratch for {} kept at {}", unit.function_id, dir.path().display());
        }
        let include = dir.path().join("include");
        std::fs::create_dir_all(&include)?;
        std::fs::write(include.join(HARNESS_HEADER_NAME), HARNESS_HEADER)?;
        std::fs::write(include.join(CUDA_SHIM_HEADER_NAME), CUDA_SHIM_HEADER)?;
        let source = dir.path().join(format!("harness.{}", spec.backend.source_extension()));
        std::fs::write(&source, &unit.unit_source)?;
        let binary = dir.path().join("harness");

        let mut cmd = Command::new(&spec.compiler_path);
        cmd.args(&spec.flags);
        for d in &spec.include_dirs {
            cmd.arg("-I").arg(d);
        }
        cmd.arg("-I").arg(&include).arg(&source).arg("-o").arg(&binary).arg("-lm");
        cmd.current_dir(dir.path());
        self.scrub(&mut cmd);

        let out = match run_with_timeout(cmd, spec.compile_timeout, None, &self.limits) {
            Ok(o) => o,
            Err(e) if e.kind() == ErrorKind::NotFound => {
                return Err(ExecError::ToolchainMissing(spec.compiler_path.display().to_string()))
            }
            Err(e) => return Err(e.into()),
        };
        if out.timed_out || !out.status.is_some_and(|s| s.success()) {
            let mut diag = out.stderr;
            if !out.stdout.trim().is_empty() {
                // nvcc reports some errors on stdout
                diag.push_str(&out.stdout);
            }
            let status = if out.timed_out { Status::Timeout } else { Status::CompileError };
            let mut r = ExecutionResult::failed(Phase::Compile, status, diag, &self.classifier);
            r.exit_code = out.status.and_then(exit_code);
            r.duration = out.duration;
            return Ok(CompileOutcome::Failed(r));
        }
        Ok(CompileOutcome::Built(Artifact { binary, dir }))
    }

    pub fn run(&self, artifact: &Artifact) -> Result<ExecutionResult, ExecError> {
        let mut cmd = Command::new(&artifact.binary);
        cmd.current_dir(artifact.scratch_dir());
        self.scrub(&mut cmd);
        let out = run_with_timeout(cmd, self.run_timeout, self.limits.address_space_bytes, &self.limits)?;
        let mut stderr = out.stderr;
        let status = if out.timed_out {
            Status::Timeout
        } else if out.overflow {
            stderr.push_str("\noutput limit exceeded");
            Status::RuntimeError
        } else if out.status.is_some_and(|s| s.success()) {
            Status::Ok
        } else {
            if let Some(sig) = out.status.and_then(|s| s.signal()) {
                stderr.push_str(&format!("\nterminated by signal {sig} ({})", signal_name(sig)));
            }
            Status::RuntimeError
        };
        let error_type = match status {
            Status::Ok => None,
            Status::Timeout => Some(super::ErrorType::Unknown),
            _ => Some(self.classifier.classify(&stderr, Phase::Run)),
        };
        Ok(ExecutionResult {
            phase: Phase::Run,
            status,
            stdout: out.stdout,
            stderr,
            exit_code: out.status.and_then(exit_code),
            duration: out.duration,
            error_type,
        })
    }

    fn scrub(&self, cmd: &mut Command) {
        for (k, _) in std::env::vars_os() {
            let name = k.to_string_lossy();
            if looks_like_secret(&name) || self.scrub_env.iter().any(|s| s == name.as_ref()) {
                cmd.env_remove(&k);
            }
        }
    }
}

impl Execute for ProcessExecutor {
    fn execute(&self, unit: &HarnessUnit, spec: &CompileSpec) -> Result<ExecutionResult, ExecError> {
        match self.compile(unit, spec)? {
            CompileOutcome::Failed(r) => Ok(r),
            CompileOutcome::Built(a) => self.run(&a),
        }
    }
}

fn looks_like_secret(name: &str) -> bool {
    let upper = name.to_ascii_uppercase();
    ["KEY", "TOKEN", "SECRET", "PASSWORD", "CREDENTIAL"]
        .iter()
        .any(|w| upper.contains(w))
}

fn exit_code(s: ExitStatus) -> Option<i32> {
    s.code().or_else(|| s.signal().map(|sig| 128 + sig))
}

fn signal_name(sig: i32) -> &'static str {
    match sig {
        libc::SIGSEGV => "SIGSEGV",
        libc::SIGABRT => "SIGABRT",
        libc::SIGFPE => "SIGFPE",
        libc::SIGBUS => "SIGBUS",
        libc::SIGILL => "SIGILL",
        libc::SIGKILL => "SIGKILL",
        _ => "signal",
    }
}

struct RawOutput {
    stdout: String,
    stderr: String,
    status: Option<ExitStatus>,
    timed_out: bool,
    overflow: bool,
    duration: Duration,
}

fn run_with_timeout(
    mut cmd: Command,
    timeout: Duration,
    address_space: Option<u64>,
    limits: &ResourceLimits,
) -> std::io::Result<RawOutput> {
    cmd.stdin(Stdio::null()).stdout(Stdio::piped()).stderr(Stdio::piped());
    // SAFETY: only async-signal-safe libc calls between fork and exec.
    unsafe {
        cmd.pre_exec(move || {
            libc::setpgid(0, 0);
            let core = libc::rlimit { rlim_cur: 0, rlim_max: 0 };
            libc::setrlimit(libc::RLIMIT_CORE, &core);
            if let Some(bytes) = address_space {
                let lim = libc::rlimit { rlim_cur: bytes as libc::rlim_t, rlim_max: bytes as libc::rlim_t };
                libc::setrlimit(libc::RLIMIT_AS, &lim);
            }
            Ok(())
        });
    }
    let start = Instant::now();
    let mut child = cmd.spawn()?;
    let overflow = Arc::new(AtomicBool::new(false));
    let out_reader = reader(child.stdout.take().expect("piped"), limits.max_stdout_bytes, overflow.clone());
    let err_reader = reader(child.stderr.take().expect("piped"), limits.max_stderr_bytes, Arc::new(AtomicBool::new(false)));

    let mut timed_out = false;
    let status = loop {
        if let Some(s) = child.try_wait()? {
            break Some(s);
        }
        if start.elapsed() >= timeout {
            timed_out = true;
            kill_group(&mut child);
            break None;
        }
        if overflow.load(Ordering::Relaxed) {
            kill_group(&mut child);
            break child.wait().ok();
        }
        std::thread::sleep(Duration::from_millis(2));
    };
    let duration = start.elapsed();
    let stdout = out_reader.join().unwrap_or_default();
    let stderr = err_reader.join().unwrap_or_default();
    Ok(RawOutput {
        stdout: String::from_utf8_lossy(&stdout).into_owned(),
        stderr: String::from_utf8_lossy(&stderr).into_owned(),
        status: if timed_out { None } else { status },
        timed_out,
        overflow: overflow.load(Ordering::Relaxed),
        duration,
    })
}

fn kill_group(child: &mut Child) {
    let pid = child.id() as libc::pid_t;
    // SAFETY: signalling our own child's process group.
    unsafe {
        libc::kill(-pid, libc::SIGKILL);
    }
    let _ = child.kill();
    let _ = child.wait();
}

fn reader<R: Read + Send + 'static>(mut src: R, cap: usize, overflow: Arc<AtomicBool>) -> JoinHandle<Vec<u8>> {
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        let mut chunk = [0u8; 8192];
        loop {
            match src.read(&mut chunk) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let room = cap.saturating_sub(buf.len());
                    buf.extend_from_slice(&chunk[..n.min(room)]);
                    if n > room {
                        overflow.store(true, Ordering::Relaxed);
                    }
                }
            }
        }
        buf
    })
}
