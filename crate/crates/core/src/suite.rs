//! Unit-test suites produced by the tester model.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub index: usize,
    /// Declarations followed by exactly one harness invocation.
    pub snippet: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSuite {
    pub function_id: String,
    /// Name of the function the tests were written against.
    #[serde(default)]
    pub function_name: String,
    pub cases: Vec<TestCase>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("expected {expected} input cases, found {found} markers")]
pub struct MarkerMismatch {
    pub expected: usize,
    pub found: usize,
    pub raw: String,
}

fn marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^[ \t]*//[ \t]*Input case[ \t]*(\d+)[ \t]*:.*$").unwrap())
}

/// Split tester output on `//Input case n:` lines.
///
/// Cases keep their order of appearance and are renumbered 1..n whatever
/// numbers the markers carried. Text before the first marker is dropped.
pub fn split_cases(raw: &str, expected: usize) -> Result<Vec<TestCase>, MarkerMismatch> {
    let starts: Vec<_> = marker().find_iter(raw).collect();
    if starts.len() != expected || expected == 0 {
        return Err(MarkerMismatch { expected, found: starts.len(), raw: raw.to_string() });
    }
    let mut cases = Vec::with_capacity(starts.len());
    for (i, m) in starts.iter().enumerate() {
        let end = starts.get(i + 1).map_or(raw.len(), |n| n.start());
        cases.push(TestCase { index: i + 1, snippet: dedent(raw[m.end()..end].trim_matches('\n')) });
    }
    Ok(cases)
}

/// Render cases back in the marker format, one block per case.
pub fn render_cases(cases: &[TestCase]) -> String {
    let mut out = String::new();
    for c in cases {
        out.push_str(&format!("//Input case {}:\n{}\n", c.index, c.snippet.trim_end()));
    }
    out
}

fn dedent(text: &str) -> String {
    let indent = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.len() - l.trim_start().len())
        .min()
        .unwrap_or(0);
    text.lines()
        .map(|l| if l.len() >= indent { &l[indent..] } else { l.trim_start() })
        .collect::<Vec<_>>()
        .join("\n")
        .trim_end()
        .to_string()
}
