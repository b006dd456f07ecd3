//! Harness generation: one compilable translation unit per program and test
//! suite, printing one delimited record per test case.

mod launch;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{parse_signature, source_id, split_functions, Signature};
use crate::executor::Backend;
use crate::lex::{self, Token, TokenKind};
use crate::suite::TestSuite;

pub use launch::{find_launches, host_function_launches, rewrite_kernel_launch, shim_compatible, Launch, LaunchError, ShimCheck};

pub const HARNESS_HEADER_NAME: &str = "coverify_harness.h";
pub const HARNESS_HEADER: &str = include_str!("../../include/coverify_harness.h");
pub const CUDA_SHIM_HEADER_NAME: &str = "coverify_cuda_shim.h";
pub const CUDA_SHIM_HEADER: &str = include_str!("../../include/coverify_cuda_shim.h");

/// The name test snippets use for the generic call-and-print entry.
pub const WRAPPER_CALL: &str = "wrapper";

pub fn case_begin_line(k: usize) -> String {
    format!("=== CASE {k} ===")
}

pub fn case_end_line(k: usize) -> String {
    format!("=== END {k} ===")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarnessUnit {
    /// Id of the program under test (not of the suite's function).
    pub function_id: String,
    pub backend: Backend,
    /// The function every test case calls: the C function itself, or the
    /// host wrapper for a CUDA kernel.
    pub entry_name: String,
    pub unit_source: String,
    pub case_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WrapgenError {
    #[error("test suite is empty")]
    EmptySuite,
    #[error("kernel '{0}' has no host wrapper that launches it")]
    MissingWrapper(String),
    #[error("program cannot be emulated without a GPU: {}", .0.join(", "))]
    ShimIncompatible(Vec<String>),
    #[error("host function '{0}' cannot be launched as a kernel")]
    HostLaunch(String),
    #[error(transparent)]
    Launch(#[from] LaunchError),
    #[error("test case {case}: {message}")]
    Snippet { case: usize, message: String },
}

impl WrapgenError {
    /// True when the test suite, not the program, is at fault.
    pub fn blames_tests(&self) -> bool {
        matches!(self, WrapgenError::EmptySuite | WrapgenError::Snippet { .. })
    }
}

/// Build the harness translation unit for `fn_source` (plus `wrapper` for a
/// CUDA kernel) running every case of `suite`.
///
/// For CUDA the wrapper may also be part of `fn_source`. Test snippets call
/// `wrapper(callee, args...)`; the callee is retargeted to the entry function
/// of the program under test so the same suite runs against a source and its
/// translation. A direct call `name(args...)` to the suite's function is
/// accepted in place of the wrapper form.
pub fn emit_harness(
    fn_source: &str,
    sig: &Signature,
    wrapper: Option<&str>,
    suite: &TestSuite,
    backend: Backend,
) -> Result<HarnessUnit, WrapgenError> {
    if suite.cases.is_empty() {
        return Err(WrapgenError::EmptySuite);
    }
    let mut program = fn_source.trim_end().to_string();
    if let Some(w) = wrapper {
        program.push_str("\n\n");
        program.push_str(w.trim_end());
    }
    let (entry_name, entry_sig) = entry_point(&program, sig)?;
    if backend == Backend::CudaShim {
        if let Some(name) = host_function_launches(&program).into_iter().next() {
            return Err(WrapgenError::HostLaunch(name));
        }
        let check = shim_compatible(&program);
        if !check.compatible {
            return Err(WrapgenError::ShimIncompatible(check.reasons));
        }
        program = rewrite_kernel_launch(&program)?;
    }

    let mut callees = vec![entry_name.clone(), sig.name.clone()];
    if !suite.function_name.is_empty() {
        callees.push(suite.function_name.clone());
    }
    let mut directives: Vec<String> = Vec::new();
    let mut bodies = Vec::with_capacity(suite.cases.len());
    for (pos, case) in suite.cases.iter().enumerate() {
        let k = pos + 1;
        let (body, dirs) = rewrite_snippet(&case.snippet, &entry_name, entry_sig.as_ref(), &callees)
            .map_err(|message| WrapgenError::Snippet { case: k, message })?;
        for d in dirs {
            if !directives.contains(&d) {
                directives.push(d);
            }
        }
        bodies.push(body);
    }

    let header = match backend {
        Backend::CudaShim => CUDA_SHIM_HEADER_NAME,
        _ => HARNESS_HEADER_NAME,
    };
    let mut unit = format!(
        "// coverify harness: {} cases, backend {backend}\n#include \"{header}\"\n",
        bodies.len()
    );
    for d in &directives {
        unit.push_str(d);
        unit.push('\n');
    }
    unit.push('\n');
    unit.push_str(&program);
    unit.push_str("\n\nint main() {\n");
    for (pos, body) in bodies.iter().enumerate() {
        let k = pos + 1;
        unit.push_str(&format!("    {{\n        ::coverify::begin_case({k});\n"));
        for line in body.lines() {
            if line.trim().is_empty() {
                unit.push('\n');
            } else {
                unit.push_str("        ");
                unit.push_str(line);
                unit.push('\n');
            }
        }
        unit.push_str(&format!("        ::coverify::end_case({k});\n    }}\n"));
    }
    unit.push_str("    return 0;\n}\n");

    Ok(HarnessUnit {
        function_id: source_id(&program_id_text(fn_source, wrapper)),
        backend,
        entry_name,
        unit_source: unit,
        case_count: bodies.len(),
    })
}

fn program_id_text(fn_source: &str, wrapper: Option<&str>) -> String {
    match wrapper {
        Some(w) => format!("{fn_source}\n{w}"),
        None => fn_source.to_string(),
    }
}

/// Name and signature of the function the tests call.
fn entry_point(program: &str, sig: &Signature) -> Result<(String, Option<Signature>), WrapgenError> {
    if !sig.is_kernel {
        return Ok((sig.name.clone(), Some(sig.clone())));
    }
    for f in split_functions(program) {
        let Ok(s) = parse_signature(f) else { continue };
        if s.is_kernel {
            continue;
        }
        let launches = find_launches(f).unwrap_or_default();
        if launches.iter().any(|l| l.name == sig.name || l.name.ends_with(&format!("::{}", sig.name))) {
            return Ok((s.name.clone(), Some(s)));
        }
    }
    Err(WrapgenError::MissingWrapper(sig.name.clone()))
}

/// Rewrite one snippet. Returns the body and the directive lines to hoist.
fn rewrite_snippet(
    snippet: &str,
    entry: &str,
    entry_sig: Option<&Signature>,
    callees: &[String],
) -> Result<(String, Vec<String>), String> {
    let all = lex::lex(snippet, true);
    let directives: Vec<String> = all
        .iter()
        .filter(|t| t.kind == TokenKind::Directive)
        .map(|t| t.text.trim_end().to_string())
        .collect();
    let tokens: Vec<Token<'_>> = all
        .iter()
        .filter(|t| t.kind != TokenKind::Comment && t.kind != TokenKind::Directive)
        .cloned()
        .collect();
    if tokens.iter().any(|t| t.is("<<<")) {
        return Err("launches a kernel directly; tests must go through wrapper(...)".into());
    }

    let calls_of = |names: &[&str]| -> Vec<usize> {
        (0..tokens.len())
            .filter(|&i| {
                tokens[i].kind == TokenKind::Ident
                    && names.contains(&tokens[i].text)
                    && tokens.get(i + 1).is_some_and(|t| t.is("("))
                    && !i
                        .checked_sub(1)
                        .map(|p| &tokens[p])
                        .is_some_and(|p| p.kind == TokenKind::Ident || p.is(".") || p.is("->") || p.is("::"))
            })
            .collect()
    };
    let wrapped = calls_of(&[WRAPPER_CALL]);
    let (at, via_wrapper) = match wrapped.as_slice() {
        [one] => (*one, true),
        [] => {
            let names: Vec<&str> = callees.iter().map(String::as_str).collect();
            match calls_of(&names).as_slice() {
                [one] => (*one, false),
                [] => return Err(format!("no {WRAPPER_CALL}(...) invocation")),
                _ => return Err("more than one call to the function under test".into()),
            }
        }
        _ => return Err(format!("more than one {WRAPPER_CALL}(...) invocation")),
    };
    let close = lex::matching_close(&tokens, at + 1).ok_or("unbalanced parentheses in invocation")?;
    let inner = &tokens[at + 2..close];
    let mut parts = if inner.is_empty() { Vec::new() } else { lex::split_top_level_commas(inner) };
    if via_wrapper {
        if parts.is_empty() || parts[0].is_empty() {
            return Err(format!("{WRAPPER_CALL}(...) needs the function as its first argument"));
        }
        parts.remove(0);
    }
    let args: Vec<&str> = parts.iter().map(|p| lex::span_text(snippet, p)).collect();

    if let Some(sig) = entry_sig {
        for (i, (param, arg)) in sig.params.iter().zip(&args).enumerate() {
            if param.is_pointer && !declares_array(&tokens, arg.trim()) {
                return Err(format!(
                    "argument {} (`{}`) for pointer parameter '{}' must be a sized array declared in the test",
                    i + 1,
                    arg.trim(),
                    param.name
                ));
            }
        }
    }

    let call = if args.is_empty() {
        format!("COVERIFY_WRAPPER0({entry})")
    } else {
        format!("COVERIFY_WRAPPER({entry}, {})", args.join(", "))
    };
    let start = tokens[at].span.start;
    let end = tokens[close].span.end;
    let mut out = strip_directives(&snippet[..start], &all, 0);
    out.push_str(&call);
    out.push_str(&strip_directives(&snippet[end..], &all, end));
    Ok((dedent_lines(&out), directives))
}

fn strip_directives(text: &str, all: &[Token<'_>], offset: usize) -> String {
    let mut out = String::new();
    let mut last = 0;
    for t in all.iter().filter(|t| t.kind == TokenKind::Directive) {
        if t.span.start < offset || t.span.end > offset + text.len() {
            continue;
        }
        out.push_str(&text[last..t.span.start - offset]);
        last = t.span.end - offset;
    }
    out.push_str(&text[last..]);
    out
}

fn dedent_lines(text: &str) -> String {
    text.lines()
        .map(str::trim_end)
        .collect::<Vec<_>>()
        .join("\n")
        .trim_matches('\n')
        .to_string()
}

/// Whether `name` is declared in the snippet as an array with a visible
/// extent: `T name[N]` or `T name[] = {...}`.
fn declares_array(tokens: &[Token<'_>], name: &str) -> bool {
    let mut stmt_start = 0;
    let mut depth = 0i32;
    for (i, t) in tokens.iter().enumerate() {
        if t.kind == TokenKind::Punct {
            match t.text {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" | "}" => depth -= 1,
                ";" if depth == 0 => {
                    stmt_start = i + 1;
                    continue;
                }
                _ => {}
            }
        }
        if !(t.is_ident(name) && tokens.get(i + 1).is_some_and(|n| n.is("[")) && depth == 0) {
            continue;
        }
        let before = &tokens[stmt_start..i];
        let typed = before.first().is_some_and(|f| f.kind == TokenKind::Ident);
        let no_assign = !before.iter().any(|b| b.is("="));
        let prev_ok = before.last().is_some_and(|p| p.kind == TokenKind::Ident || p.is("*") || p.is(","));
        if typed && no_assign && prev_ok {
            return true;
        }
    }
    false
}
