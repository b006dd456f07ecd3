use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const RETURN_PREFIX: &str = "Return value: ";
const ARGS_INFIX: &str = " Arguments after function call: ";

/// One printed value: a scalar token or a bracketed array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Snapshot {
    Scalar(String),
    Array(Vec<Snapshot>),
}

impl fmt::Display for Snapshot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Snapshot::Scalar(s) => f.write_str(s),
            Snapshot::Array(items) => {
                f.write_str("[ ")?;
                for (i, it) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{it}")?;
                }
                f.write_str(" ]")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub index: usize,
    pub return_token: String,
    pub arguments: Vec<Snapshot>,
    /// Other lines the program printed inside the case. Kept, not compared.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra: Vec<String>,
}

impl fmt::Display for CaseRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{RETURN_PREFIX}{}{ARGS_INFIX}(", self.return_token)?;
        for (i, a) in self.arguments.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

/// Parsed transcript of one harness run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalOutput {
    pub cases: Vec<CaseRecord>,
    /// False when the run stopped inside a case.
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no case delimiters in output")]
    NoDelimiters,
    #[error("case {found} follows case {previous}")]
    OutOfOrder { previous: usize, found: usize },
    #[error("case {case}: malformed record `{line}`")]
    MalformedRecord { case: usize, line: String },
}

fn delimiter(line: &str, word: &str) -> Option<usize> {
    line.trim()
        .strip_prefix("=== ")?
        .strip_prefix(word)?
        .strip_prefix(' ')?
        .strip_suffix(" ===")?
        .parse()
        .ok()
}

/// Parse delimited harness stdout into per-case records.
pub fn parse_output(stdout: &str) -> Result<CanonicalOutput, ParseError> {
    let mut cases = Vec::new();
    let mut open: Option<(usize, Option<(String, Vec<Snapshot>)>, Vec<String>)> = None;
    let mut seen_any = false;
    let mut complete = true;
    for line in stdout.lines() {
        if let Some(k) = delimiter(line, "CASE") {
            seen_any = true;
            if open.is_some() {
                // previous case never ended
                complete = false;
            }
            let previous = cases.last().map_or(0, |c: &CaseRecord| c.index);
            if k <= previous {
                return Err(ParseError::OutOfOrder { previous, found: k });
            }
            open = Some((k, None, Vec::new()));
            continue;
        }
        if let Some(k) = delimiter(line, "END") {
            seen_any = true;
            match open.take() {
                Some((index, Some((ret, args)), extra)) if index == k => {
                    cases.push(CaseRecord { index, return_token: ret, arguments: args, extra });
                }
                _ => complete = false,
            }
            continue;
        }
        let Some((index, record, extra)) = open.as_mut() else { continue };
        if record.is_none() && line.trim_start().starts_with(RETURN_PREFIX) {
            let parsed = parse_record(line.trim())
                .ok_or_else(|| ParseError::MalformedRecord { case: *index, line: line.to_string() })?;
            *record = Some(parsed);
        } else {
            extra.push(line.to_string());
        }
    }
    if !seen_any {
        return Err(ParseError::NoDelimiters);
    }
    if open.is_some() {
        complete = false;
    }
    Ok(CanonicalOutput { cases, complete })
}

/// Split one record line into the return token and argument snapshots.
pub fn parse_record(line: &str) -> Option<(String, Vec<Snapshot>)> {
    let rest = line.strip_prefix(RETURN_PREFIX)?;
    let at = rest.find(ARGS_INFIX)?;
    let ret = rest[..at].trim().to_string();
    let args = rest[at + ARGS_INFIX.len()..].trim();
    let inner = args.strip_prefix('(')?.strip_suffix(')')?;
    let mut chars = inner.char_indices().peekable();
    let items = parse_items(inner, &mut chars, None)?;
    Some((ret, items))
}

type Chars<'a> = std::iter::Peekable<std::str::CharIndices<'a>>;

fn parse_items(src: &str, chars: &mut Chars<'_>, close: Option<char>) -> Option<Vec<Snapshot>> {
    let mut items = Vec::new();
    loop {
        while chars.peek().is_some_and(|(_, c)| c.is_whitespace()) {
            chars.next();
        }
        match chars.peek().copied() {
            None => return if close.is_none() { Some(items) } else { None },
            Some((_, c)) if Some(c) == close => {
                chars.next();
                return Some(items);
            }
            Some((_, '[')) => {
                chars.next();
                items.push(Snapshot::Array(parse_items(src, chars, Some(']'))?));
            }
            Some((start, _)) => {
                let mut end = src.len();
                while let Some(&(i, c)) = chars.peek() {
                    if c == ',' || Some(c) == close {
                        end = i;
                        break;
                    }
                    chars.next();
                }
                items.push(Snapshot::Scalar(src[start..end].trim().to_string()));
            }
        }
        while chars.peek().is_some_and(|(_, c)| c.is_whitespace()) {
            chars.next();
        }
        match chars.peek().copied() {
            Some((_, ',')) => {
                chars.next();
            }
            Some((_, c)) if Some(c) == close => {}
            None if close.is_none() => {}
            _ => return None,
        }
    }
}

/// Numeric comparison tolerance: `|u - v| <= abs + rel * max(|u|, |v|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NumericTolerance {
    pub abs: f64,
    pub rel: f64,
    /// When set, NaN never equals NaN.
    pub strict_nan: bool,
}

impl Default for NumericTolerance {
    fn default() -> Self {
        NumericTolerance { abs: 1e-6, rel: 1e-4, strict_nan: false }
    }
}

fn number(token: &str) -> Option<f64> {
    let t = token.trim();
    let unsigned = t.strip_prefix('-').unwrap_or(t);
    if unsigned.eq_ignore_ascii_case("nan") || unsigned.eq_ignore_ascii_case("-nan") {
        return Some(f64::NAN);
    }
    t.parse::<f64>().ok()
}

/// Compare two printed tokens.
pub fn tokens_equal(a: &str, b: &str, tol: &NumericTolerance) -> bool {
    match (number(a), number(b)) {
        (Some(u), Some(v)) => {
            if u.is_nan() || v.is_nan() {
                return u.is_nan() && v.is_nan() && !tol.strict_nan;
            }
            if u.is_infinite() || v.is_infinite() {
                return u == v;
            }
            (u - v).abs() <= tol.abs + tol.rel * u.abs().max(v.abs())
        }
        _ => a == b,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Difference {
    pub case: usize,
    /// Where in the record, e.g. `argument 2, element 1`.
    pub location: String,
    pub left: String,
    pub right: String,
}

impl fmt::Display for Difference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "case {}, {}: `{}` vs `{}`", self.case, self.location, self.left, self.right)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum CompareError {
    #[error("left transcript is incomplete")]
    LeftIncomplete,
    #[error("right transcript is incomplete")]
    RightIncomplete,
}

/// Token-wise comparison of two complete transcripts. Returns the first
/// difference, or `None` when they agree.
pub fn outputs_equal(
    a: &CanonicalOutput,
    b: &CanonicalOutput,
    tol: &NumericTolerance,
) -> Result<Option<Difference>, CompareError> {
    if !a.complete {
        return Err(CompareError::LeftIncomplete);
    }
    if !b.complete {
        return Err(CompareError::RightIncomplete);
    }
    if a.cases.len() != b.cases.len() {
        return Ok(Some(Difference {
            case: a.cases.len().min(b.cases.len()) + 1,
            location: "case count".into(),
            left: a.cases.len().to_string(),
            right: b.cases.len().to_string(),
        }));
    }
    for (ca, cb) in a.cases.iter().zip(&b.cases) {
        let diff = |location: String, l: String, r: String| Some(Difference { case: ca.index, location, left: l, right: r });
        if ca.index != cb.index {
            return Ok(diff("case index".into(), ca.index.to_string(), cb.index.to_string()));
        }
        if !tokens_equal(&ca.return_token, &cb.return_token, tol) {
            return Ok(diff("return value".into(), ca.return_token.clone(), cb.return_token.clone()));
        }
        if ca.arguments.len() != cb.arguments.len() {
            return Ok(diff(
                "argument count".into(),
                ca.arguments.len().to_string(),
                cb.arguments.len().to_string(),
            ));
        }
        for (i, (sa, sb)) in ca.arguments.iter().zip(&cb.arguments).enumerate() {
            if let Some((path, l, r)) = snapshot_diff(sa, sb, tol) {
                let location = if path.is_empty() {
                    format!("argument {}", i + 1)
                } else {
                    format!("argument {}, element {path}", i + 1)
                };
                return Ok(diff(location, l, r));
            }
        }
    }
    Ok(None)
}

fn snapshot_diff(a: &Snapshot, b: &Snapshot, tol: &NumericTolerance) -> Option<(String, String, String)> {
    match (a, b) {
        (Snapshot::Scalar(x), Snapshot::Scalar(y)) => {
            (!tokens_equal(x, y, tol)).then(|| (String::new(), x.clone(), y.clone()))
        }
        (Snapshot::Array(xs), Snapshot::Array(ys)) => {
            for (j, (x, y)) in xs.iter().zip(ys).enumerate() {
                if let Some((path, l, r)) = snapshot_diff(x, y, tol) {
                    let p = if path.is_empty() { (j + 1).to_string() } else { format!("{}.{path}", j + 1) };
                    return Some((p, l, r));
                }
            }
            (xs.len() != ys.len()).then(|| ("length".to_string(), xs.len().to_string(), ys.len().to_string()))
        }
        _ => Some((String::new(), a.to_string(), b.to_string())),
    }
}

/// The functional check: both complete, same cases, every case equal.
pub fn check(x: &CanonicalOutput, y: &CanonicalOutput, tol: &NumericTolerance) -> bool {
    matches!(outputs_equal(x, y, tol), Ok(None))
}
