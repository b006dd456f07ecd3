use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::corpus::Direction;
use crate::executor::{Backend, CompileSpec, DEFAULT_RUN_TIMEOUT};
use crate::gateway::ModelEndpoint;
use crate::verify::{Backends, NumericTolerance};

/// Whole configuration file. Relative paths resolve against the file's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    #[serde(default)]
    pub run: RunSettings,
    pub endpoints: Endpoints,
    #[serde(default)]
    pub backends: BackendSettings,
    #[serde(default)]
    pub executor: ExecutorSettings,
    #[serde(default)]
    pub tolerance: NumericTolerance,
    #[serde(default)]
    pub convergence: Convergence,
    #[serde(default)]
    pub evaluate: EvaluateSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Source directory or corpus JSON Lines.
    pub corpus: PathBuf,
    pub work_dir: PathBuf,
    #[serde(default)]
    pub templates: Option<PathBuf>,
    /// Canned model responses used with `--mock`.
    #[serde(default)]
    pub mock_responses: Option<PathBuf>,
    /// Canned program transcripts; when set, nothing is compiled.
    #[serde(default)]
    pub mock_transcripts: Option<PathBuf>,
    #[serde(default)]
    pub test_set: Option<PathBuf>,
    /// User rules tried before the built-in diagnostic table.
    #[serde(default)]
    pub classifier_rules: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSettings {
    pub iteration: u32,
    pub directions: Vec<Direction>,
    pub n_translation_samples: usize,
    pub n_tests: usize,
    pub seed: u64,
    pub workers: usize,
    /// Accepted triplets kept per function and direction.
    pub per_function_cap: usize,
    pub split_by_direction: bool,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            iteration: 1,
            directions: vec![Direction::CToCuda, Direction::CudaToC],
            n_translation_samples: 1,
            n_tests: 5,
            seed: 0,
            workers: 4,
            per_function_cap: 1,
            split_by_direction: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Endpoints {
    pub translator: ModelEndpoint,
    pub tester: ModelEndpoint,
    /// Writes host wrappers for kernels; defaults to the translator.
    #[serde(default)]
    pub wrapper: Option<ModelEndpoint>,
}

/// Per-language compiler settings. Unset fields take the backend defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendSettings {
    pub c: BackendOverride,
    pub cuda: BackendOverride,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendOverride {
    pub backend: Option<Backend>,
    pub compiler_path: Option<PathBuf>,
    pub flags: Option<Vec<String>>,
    pub include_dirs: Vec<PathBuf>,
    pub compile_timeout_secs: Option<f64>,
}

impl BackendOverride {
    fn resolve(&self, default: Backend) -> Result<CompileSpec, PipelineError> {
        let mut spec = CompileSpec::default_for(self.backend.unwrap_or(default));
        if let Some(p) = &self.compiler_path {
            spec.compiler_path = p.clone();
        }
        if let Some(f) = &self.flags {
            spec.flags = f.clone();
        }
        spec.include_dirs = self.include_dirs.clone();
        if let Some(s) = self.compile_timeout_secs {
            spec.compile_timeout =
                Duration::try_from_secs_f64(s).map_err(|e| PipelineError::Config(format!("compile_timeout_secs: {e}")))?;
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExecutorSettings {
    pub run_timeout_secs: f64,
    pub keep_scratch: bool,
    pub scratch_root: Option<PathBuf>,
}

impl Default for ExecutorSettings {
    fn default() -> Self {
        ExecutorSettings {
            run_timeout_secs: DEFAULT_RUN_TIMEOUT.as_secs_f64(),
            keep_scratch: false,
            scratch_root: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Convergence {
    pub min_growth_fraction: f64,
    pub max_iterations: u32,
}

impl Default for Convergence {
    fn default() -> Self {
        Convergence { min_growth_fraction: 0.05, max_iterations: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateSettings {
    pub k_values: Vec<u64>,
    pub n_samples: usize,
    /// Also generate suites with the tester and report VT.
    pub tester_vt: bool,
}

impl Default for EvaluateSettings {
    fn default() -> Self {
        EvaluateSettings { k_values: vec![1], n_samples: 1, tester_vt: false }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let p = &mut self.paths;
        fix(&mut p.corpus);
        fix(&mut p.work_dir);
        for opt in [&mut p.templates, &mut p.mock_responses, &mut p.mock_transcripts, &mut p.test_set, &mut p.classifier_rules] {
            if let Some(x) = opt {
                fix(x);
            }
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        let r = &self.run;
        if r.iteration < 1 {
            return bad("run.iteration must be at least 1");
        }
        if r.n_tests < 1 {
            return bad("run.n_tests must be at least 1");
        }
        if r.n_translation_samples < 1 {
            return bad("run.n_translation_samples must be at least 1");
        }
        if r.directions.is_empty() {
            return bad("run.directions is empty");
        }
        if r.per_function_cap < 1 {
            return bad("run.per_function_cap must be at least 1");
        }
        let c = &self.convergence;
        if !(0.0..1.0).contains(&c.min_growth_fraction) {
            return bad("convergence.min_growth_fraction must be in [0, 1)");
        }
        if c.max_iterations < 1 {
            return bad("convergence.max_iterations must be at least 1");
        }
        if !(self.executor.run_timeout_secs > 0.0) {
            return bad("executor.run_timeout_secs must be positive");
        }
        let e = &self.evaluate;
        if e.k_values.is_empty() || e.k_values.contains(&0) {
            return bad("evaluate.k_values must be non-empty and positive");
        }
        let max_k = e.k_values.iter().copied().max().unwrap_or(1);
        if (e.n_samples as u64) < max_k {
            return Err(PipelineError::Config(format!(
                "evaluate.n_samples ({}) is smaller than the largest k ({max_k})",
                e.n_samples
            )));
        }
        for ep in [Some(&self.endpoints.translator), Some(&self.endpoints.tester), self.endpoints.wrapper.as_ref()]
            .into_iter()
            .flatten()
        {
            ep.validate().map_err(|e| PipelineError::Config(format!("endpoint {}: {e}", ep.id())))?;
        }
        self.backends()?;
        Ok(())
    }

    pub fn backends(&self) -> Result<Backends, PipelineError> {
        Ok(Backends { c: self.backends.c.resolve(Backend::NativeC)?, cuda: self.backends.cuda.resolve(Backend::CudaShim)? })
    }

    pub fn run_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.executor.run_timeout_secs)
    }

    pub fn iteration_dir(&self) -> PathBuf {
        iteration_dir(&self.paths.work_dir, self.run.iteration)
    }
}

pub fn iteration_dir(work_dir: &Path, iteration: u32) -> PathBuf {
    work_dir.join(format!("iteration-{iteration}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[paths]
corpus = "corpus.jsonl"
work_dir = "runs"

[endpoints.translator]
base_url = "http://localhost:8000/v1"
model_name = "translator"

[endpoints.tester]
base_url = "http://localhost:8000/v1"
model_name = "tester"
"#;

    #[test]
    fn defaults() {
        let mut cfg: PipelineConfig = toml::from_str(MINIMAL).unwrap();
        cfg.resolve_paths(Path::new("/base"));
        cfg.validate().unwrap();
        assert_eq!(cfg.paths.corpus, PathBuf::from("/base/corpus.jsonl"));
        assert_eq!(cfg.run.n_tests, 5);
        assert_eq!(cfg.convergence, Convergence { min_growth_fraction: 0.05, max_iterations: 4 });
        let b = cfg.backends().unwrap();
        assert_eq!(b.c.backend, Backend::NativeC);
        assert_eq!(b.cuda.backend, Backend::CudaShim);
        assert_eq!(cfg.iteration_dir(), PathBuf::from("/base/runs/iteration-1"));
    }

    #[test]
    fn rejects_bad_values() {
        for (extra, what) in [
            ("[run]\nn_tests = 0\n", "n_tests"),
            ("[convergence]\nmin_growth_fraction = 1.0\n", "min_growth_fraction"),
            ("[evaluate]\nk_values = [1, 10]\nn_samples = 5\n", "largest k"),
        ] {
            let cfg: PipelineConfig = toml::from_str(&format!("{MINIMAL}{extra}")).unwrap();
            let err = cfg.validate().unwrap_err().to_string();
            assert!(err.contains(what), "{err}");
        }
        assert!(toml::from_str::<PipelineConfig>(&format!("{MINIMAL}[run]\nbogus = 1\n")).is_err());
    }

    #[test]
    fn backend_overrides() {
        let cfg: PipelineConfig = toml::from_str(&format!(
            "{MINIMAL}[backends.cuda]\nbackend = \"nvcc\"\nflags = [\"-O2\"]\ncompile_timeout_secs = 5\n"
        ))
        .unwrap();
        let b = cfg.backends().unwrap();
        assert_eq!(b.cuda.backend, Backend::Nvcc);
        assert_eq!(b.cuda.compiler_path, PathBuf::from("nvcc"));
        assert_eq!(b.cuda.flags, vec!["-O2"]);
        assert_eq!(b.cuda.compile_timeout, Duration::from_secs(5));
    }
}
