use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{parse_signature, split_functions};
use crate::lex::{self, Token, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LaunchError {
    #[error("unbalanced kernel launch: `<<<` at byte {0} has no matching `>>>`")]
    Unbalanced(usize),
    #[error("kernel launch at byte {0} is not followed by an argument list")]
    MissingArguments(usize),
    #[error("kernel launch at byte {0} has {1} configuration arguments (expected 2 to 4)")]
    BadConfiguration(usize, usize),
}

/// One `name<<<config>>>(args)` occurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Launch {
    pub name: String,
    pub config: Vec<String>,
    pub args: String,
    pub span: std::ops::Range<usize>,
}

/// Find every kernel launch in `source`, in order.
pub fn find_launches(source: &str) -> Result<Vec<Launch>, LaunchError> {
    let tokens = lex::code_tokens(source, true);
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if !tokens[i].is("<<<") {
            i += 1;
            continue;
        }
        let at = tokens[i].span.start;
        let name_start = name_start(&tokens, i);
        if name_start == i {
            return Err(LaunchError::Unbalanced(at));
        }
        let close = config_close(&tokens, i).ok_or(LaunchError::Unbalanced(at))?;
        let config: Vec<String> = lex::split_top_level_commas(&tokens[i + 1..close])
            .iter()
            .map(|p| lex::span_text(source, p).to_string())
            .collect();
        if !(2..=4).contains(&config.len()) || config.iter().any(String::is_empty) {
            return Err(LaunchError::BadConfiguration(at, config.len()));
        }
        let open = close + 1;
        if !tokens.get(open).is_some_and(|t| t.is("(")) {
            return Err(LaunchError::MissingArguments(at));
        }
        let args_close = lex::matching_close(&tokens, open).ok_or(LaunchError::MissingArguments(at))?;
        out.push(Launch {
            name: lex::span_text(source, &tokens[name_start..i]).to_string(),
            config,
            args: lex::span_text(source, &tokens[open + 1..args_close]).to_string(),
            span: tokens[name_start].span.start..tokens[args_close].span.end,
        });
        i = args_close + 1;
    }
    Ok(out)
}

// The launched name may be qualified: `ns::kernel<<<...`.
fn name_start(tokens: &[Token<'_>], lt: usize) -> usize {
    let mut s = lt;
    while s > 0 {
        let t = &tokens[s - 1];
        let qualifier = t.is("::");
        let ident = t.kind == TokenKind::Ident;
        if !(ident || qualifier) || (ident && s < lt && tokens[s].kind == TokenKind::Ident) {
            break;
        }
        s -= 1;
    }
    s
}

fn config_close(tokens: &[Token<'_>], open: usize) -> Option<usize> {
    let mut depth = 0i32;
    for (idx, t) in tokens.iter().enumerate().skip(open + 1) {
        if t.kind != TokenKind::Punct {
            continue;
        }
        match t.text {
            "(" | "[" | "{" => depth += 1,
            ")" | "]" | "}" => {
                depth -= 1;
                if depth < 0 {
                    return None;
                }
            }
            ";" if depth == 0 => return None,
            "<<<" => return None,
            ">>>" if depth == 0 => return Some(idx),
            _ => {}
        }
    }
    None
}

/// Replace `name<<<G, B>>>(args)` by `CUDA_LAUNCH(name, G, B, args)`.
///
/// Launches with shared-memory or stream arguments become
/// `CUDA_LAUNCH_EXT(name, G, B, S, St, args)`. Everything else, including
/// shift operators, is copied through unchanged.
pub fn rewrite_kernel_launch(source: &str) -> Result<String, LaunchError> {
    let launches = find_launches(source)?;
    if launches.is_empty() {
        return Ok(source.to_string());
    }
    let mut out = String::with_capacity(source.len() + 32 * launches.len());
    let mut last = 0;
    for l in &launches {
        out.push_str(&source[last..l.span.start]);
        let args = if l.args.trim().is_empty() { String::new() } else { format!(", {}", l.args) };
        match l.config.as_slice() {
            [g, b] => out.push_str(&format!("CUDA_LAUNCH({}, {g}, {b}{args})", l.name)),
            [g, b, s] => out.push_str(&format!("CUDA_LAUNCH_EXT({}, {g}, {b}, {s}, 0{args})", l.name)),
            [g, b, s, st] => out.push_str(&format!("CUDA_LAUNCH_EXT({}, {g}, {b}, {s}, {st}{args})", l.name)),
            _ => unreachable!("checked in find_launches"),
        }
        last = l.span.end;
    }
    out.push_str(&source[last..]);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShimCheck {
    pub compatible: bool,
    pub reasons: Vec<String>,
}

const BARRIERS: &[&str] = &[
    "__syncthreads",
    "__syncthreads_count",
    "__syncthreads_and",
    "__syncthreads_or",
    "__syncwarp",
    "__threadfence_block",
    "this_grid",
    "this_thread_block",
];
const WARP: &[&str] = &[
    "__shfl",
    "__shfl_up",
    "__shfl_down",
    "__shfl_xor",
    "__shfl_sync",
    "__shfl_up_sync",
    "__shfl_down_sync",
    "__shfl_xor_sync",
    "__ballot",
    "__ballot_sync",
    "__any",
    "__all",
    "__any_sync",
    "__all_sync",
    "__activemask",
    "__match_any_sync",
    "__match_all_sync",
    "__reduce_add_sync",
    "__reduce_min_sync",
    "__reduce_max_sync",
];

/// Token-level scan for features the serial emulation cannot honour.
pub fn shim_compatible(kernel_source: &str) -> ShimCheck {
    let mut barrier = false;
    let mut shared = false;
    let mut warp = false;
    for t in lex::code_tokens(kernel_source, false) {
        if t.kind != TokenKind::Ident {
            continue;
        }
        barrier |= BARRIERS.contains(&t.text);
        shared |= t.text == "__shared__";
        warp |= WARP.contains(&t.text);
    }
    let dynamic = split_functions(kernel_source).iter().any(|f| {
        parse_signature(f).is_ok_and(|s| s.is_kernel) && lex::code_tokens(f, false).iter().any(|t| t.is("<<<"))
    });
    let mut reasons = Vec::new();
    for (hit, reason) in [
        (barrier, "barrier"),
        (shared, "shared memory"),
        (dynamic, "dynamic parallelism"),
        (warp, "warp intrinsic"),
    ] {
        if hit {
            reasons.push(reason.to_string());
        }
    }
    ShimCheck { compatible: reasons.is_empty(), reasons }
}

/// Names launched with `<<<...>>>` that are defined in `source` as ordinary
/// (non-kernel) functions.
pub fn host_function_launches(source: &str) -> Vec<String> {
    let Ok(launches) = find_launches(source) else { return Vec::new() };
    let host: Vec<String> = split_functions(source)
        .iter()
        .filter_map(|f| parse_signature(f).ok())
        .filter(|s| !s.is_kernel)
        .map(|s| s.name)
        .collect();
    let mut out: Vec<String> = launches
        .into_iter()
        .map(|l| l.name)
        .filter(|n| host.contains(n))
        .collect();
    out.dedup();
    out
}
