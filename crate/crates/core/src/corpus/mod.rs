//! Monolingual C and CUDA function corpora.
//!
//! A corpus is either a directory of `.c` / `.cu` files or a JSON Lines file
//! with one function per record. Every function is parsed and deduplicated by
//! the hash of its normalized text. Functions that cannot be used are handed
//! back as [`Reject`]s with a reason.

mod normalize;
mod signature;

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lex::{self, TokenKind};

pub use normalize::{normalize, source_id};
pub use signature::{parse_signature, Param, Signature, SignatureError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    C,
    Cuda,
}

impl Language {
    pub fn display_name(self) -> &'static str {
        match self {
            Language::C => "C",
            Language::Cuda => "CUDA",
        }
    }

    pub fn other(self) -> Language {
        match self {
            Language::C => Language::Cuda,
            Language::Cuda => Language::C,
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

/// Translation direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "C_to_CUDA")]
    CToCuda,
    #[serde(rename = "CUDA_to_C")]
    CudaToC,
}

impl Direction {
    pub fn from_source(lang: Language) -> Direction {
        match lang {
            Language::C => Direction::CToCuda,
            Language::Cuda => Direction::CudaToC,
        }
    }

    pub fn source(self) -> Language {
        match self {
            Direction::CToCuda => Language::C,
            Direction::CudaToC => Language::Cuda,
        }
    }

    pub fn target(self) -> Language {
        self.source().other()
    }

    pub fn reversed(self) -> Direction {
        Direction::from_source(self.target())
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::CToCuda => "C_to_CUDA",
            Direction::CudaToC => "CUDA_to_C",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One source-language function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionUnit {
    pub id: String,
    pub language: Language,
    pub source: String,
    pub name: String,
    pub signature: Signature,
    /// Host-side function that launches the kernel like a plain call. CUDA only.
    pub wrapper_source: Option<String>,
    pub provenance: String,
}

impl FunctionUnit {
    /// Build a unit from a single function definition.
    pub fn from_source(
        language: Language,
        source: &str,
        wrapper_source: Option<String>,
        provenance: impl Into<String>,
    ) -> Result<Self, String> {
        let signature = parse_signature(source).map_err(|e| e.to_string())?;
        match (language, signature.is_kernel) {
            (Language::C, true) => return Err("kernel definition in a C record".into()),
            (Language::Cuda, false) if wrapper_source.is_none() => {
                return Err("CUDA function is neither a kernel nor wrapped".into())
            }
            _ => {}
        }
        if language == Language::C && wrapper_source.is_some() {
            return Err("wrapper given for a C function".into());
        }
        Ok(FunctionUnit {
            id: source_id(source),
            language,
            source: source.trim().to_string(),
            name: signature.name.clone(),
            signature,
            wrapper_source,
            provenance: provenance.into(),
        })
    }

    pub fn to_record(&self) -> CorpusRecord {
        CorpusRecord {
            id: Some(self.id.clone()),
            language: self.language,
            source: self.source.clone(),
            wrapper: self.wrapper_source.clone(),
            provenance: Some(self.provenance.clone()),
        }
    }
}

/// One line of a corpus JSON Lines file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub language: Language,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wrapper: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub origin: String,
    pub reason: String,
    pub source: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Ingested {
    pub units: Vec<FunctionUnit>,
    pub rejects: Vec<Reject>,
    /// Functions dropped because an identical (normalized) one came first.
    pub duplicates: usize,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed corpus record: {message}")]
    MalformedRecord { path: PathBuf, line: usize, message: String },
}

/// Load a corpus from a directory or a JSON Lines file.
///
/// `only` restricts the result to one language; functions of the other
/// language are skipped without being reported.
pub fn ingest(path: &Path, only: Option<Language>) -> Result<Ingested, CorpusError> {
    let io_err = |source| CorpusError::Io { path: path.to_path_buf(), source };
    let meta = fs::metadata(path).map_err(io_err)?;
    let mut acc = Accumulator::default();
    if meta.is_dir() {
        let mut files = Vec::new();
        collect_files(path, &mut files)?;
        for file in files {
            let lang = match file.extension().and_then(|e| e.to_str()) {
                Some("c") => Language::C,
                Some("cu") | Some("cuh") => Language::Cuda,
                _ => continue,
            };
            if only.is_some_and(|l| l != lang) {
                continue;
            }
            let text = fs::read_to_string(&file).map_err(|source| CorpusError::Io { path: file.clone(), source })?;
            acc.add_file(&file.display().to_string(), lang, &text);
        }
    } else {
        let file = fs::File::open(path).map_err(io_err)?;
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io_err)?;
            if line.trim().is_empty() {
                continue;
            }
            let record: CorpusRecord =
                serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            if only.is_some_and(|l| l != record.language) {
                continue;
            }
            acc.add_record(&format!("{}:{}", path.display(), idx + 1), record);
        }
    }
    Ok(acc.finish())
}

/// Write units as corpus JSON Lines.
pub fn write_jsonl(units: &[FunctionUnit], path: &Path) -> std::io::Result<()> {
    let mut out = String::new();
    for u in units {
        out.push_str(&serde_json::to_string(&u.to_record()).expect("record serializes"));
        out.push('\n');
    }
    fs::write(path, out)
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io { path: dir.to_path_buf(), source };
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(io_err)?
        .collect::<Result<Vec<_>, _>>()
        .map_err(io_err)?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

#[derive(Default)]
struct Accumulator {
    seen: HashSet<String>,
    out: Ingested,
}

impl Accumulator {
    fn push(&mut self, origin: &str, result: Result<FunctionUnit, String>, source: &str) {
        match result {
            Ok(unit) => {
                if self.seen.insert(unit.id.clone()) {
                    self.out.units.push(unit);
                } else {
                    self.out.duplicates += 1;
                }
            }
            Err(reason) => self.out.rejects.push(Reject {
                origin: origin.to_string(),
                reason,
                source: source.to_string(),
            }),
        }
    }

    fn add_file(&mut self, origin: &str, lang: Language, text: &str) {
        let functions = split_functions(text);
        if functions.is_empty() {
            self.out.rejects.push(Reject {
                origin: origin.to_string(),
                reason: "no function definition found".into(),
                source: text.to_string(),
            });
            return;
        }
        match lang {
            Language::C => {
                for f in functions {
                    let r = FunctionUnit::from_source(Language::C, f, None, origin);
                    self.push(origin, r, f);
                }
            }
            Language::Cuda => {
                for (kernel, wrapper, rest) in pair_kernels(&functions) {
                    if let Some(k) = kernel {
                        let r = FunctionUnit::from_source(Language::Cuda, k, wrapper.map(str::to_string), origin);
                        self.push(origin, r, k);
                    }
                    for f in rest {
                        self.push(origin, Err("CUDA host or device function without a kernel to wrap".into()), f);
                    }
                }
            }
        }
    }

    fn add_record(&mut self, origin: &str, record: CorpusRecord) {
        let functions = split_functions(&record.source);
        let mut provenance = record.provenance.clone().unwrap_or_default();
        let (source, wrapper) = match (record.language, functions.as_slice()) {
            (_, [single]) => (single.to_string(), record.wrapper.clone()),
            (Language::Cuda, [_, _]) if record.wrapper.is_none() => {
                let pairs = pair_kernels(&functions);
                match pairs.as_slice() {
                    [(Some(k), Some(w), rest)] if rest.is_empty() => (k.to_string(), Some(w.to_string())),
                    _ => {
                        self.push(origin, Err("record holds more than one function".into()), &record.source);
                        return;
                    }
                }
            }
            (_, []) => {
                self.push(origin, Err("no function definition found".into()), &record.source);
                return;
            }
            _ => {
                self.push(origin, Err("record holds more than one function".into()), &record.source);
                return;
            }
        };
        let result = FunctionUnit::from_source(record.language, &source, wrapper, String::new());
        let result = result.map(|mut u| {
            if let Some(given) = record.id.as_deref() {
                if given != u.id && !provenance.contains(given) {
                    if !provenance.is_empty() {
                        provenance.push_str("; ");
                    }
                    provenance.push_str("record id ");
                    provenance.push_str(given);
                }
            }
            u.provenance = provenance;
            u
        });
        self.push(origin, result, &record.source);
    }

    fn finish(self) -> Ingested {
        self.out
    }
}

/// Split a translation unit into its top-level function definitions.
///
/// Each returned slice starts at the first token of the declaration and ends
/// at the closing brace. Leading comments and directives are not included.
/// Top-level braces that do not belong to a function (struct bodies, extern
/// blocks) are skipped whole.
pub fn split_functions(text: &str) -> Vec<&str> {
    let tokens = lex::code_tokens(text, true);
    let mut out = Vec::new();
    let mut decl_start: Option<usize> = None;
    let mut i = 0;
    while i < tokens.len() {
        let t = &tokens[i];
        if t.kind == TokenKind::Directive {
            decl_start = None;
            i += 1;
            continue;
        }
        if t.is(";") {
            decl_start = None;
            i += 1;
            continue;
        }
        if decl_start.is_none() {
            decl_start = Some(i);
        }
        if t.is("{") {
            let Some(close) = lex::matching_close(&tokens, i) else { break };
            let is_fn = i > 0 && (tokens[i - 1].is(")") || tokens[i - 1].is_ident("const"));
            if is_fn {
                let start = tokens[decl_start.unwrap()].span.start;
                out.push(&text[start..tokens[close].span.end]);
            }
            decl_start = None;
            i = close + 1;
            continue;
        }
        i += 1;
    }
    out
}

type KernelGroup<'a> = (Option<&'a str>, Option<&'a str>, Vec<&'a str>);

/// Group the functions of a CUDA file: each kernel with the first host function
/// that launches it, plus the functions that are neither.
fn pair_kernels<'a>(functions: &[&'a str]) -> Vec<KernelGroup<'a>> {
    let sigs: Vec<Option<Signature>> = functions.iter().map(|f| parse_signature(f).ok()).collect();
    let mut used = vec![false; functions.len()];
    let mut groups = Vec::new();
    for (ki, sig) in sigs.iter().enumerate() {
        let Some(sig) = sig else { continue };
        if !sig.is_kernel {
            continue;
        }
        used[ki] = true;
        let launch = format!("{}<<<", sig.name);
        let wrapper = (0..functions.len()).find(|&wi| {
            !used[wi]
                && sigs[wi].as_ref().is_some_and(|s| !s.is_kernel)
                && functions[wi].replace(char::is_whitespace, "").contains(&launch)
        });
        if let Some(wi) = wrapper {
            used[wi] = true;
        }
        groups.push((Some(functions[ki]), wrapper.map(|wi| functions[wi]), Vec::new()));
    }
    let rest: Vec<&str> = (0..functions.len()).filter(|&i| !used[i]).map(|i| functions[i]).collect();
    if !rest.is_empty() {
        groups.push((None, None, rest));
    }
    groups
}
