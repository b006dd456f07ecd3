//! Compiler and runtime diagnostics mapped onto the eleven-type error taxonomy.
//!
//! Rules are tried in table order and the first one that matches anywhere in
//! the diagnostic text decides the type. The built-in table covers GCC, Clang
//! and the NVCC front end. User rules loaded from a file take precedence.

use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Phase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorType {
    /// Function overload resolution.
    Type1,
    /// Insufficient arguments.
    Type2,
    /// Argument type mismatch.
    Type3,
    /// Syntax error: missing symbol.
    Type4,
    /// Undefined identifier.
    Type5,
    /// Preprocessor directive error.
    Type6,
    /// Unrecognized token.
    Type7,
    /// Duplicate declaration or standard library conflict.
    Type8,
    /// Logical sequence, block index or shared memory error.
    Type9,
    /// Control flow bypassing a variable initialization.
    Type10,
    /// Host function configured as a kernel launch.
    Type11,
    #[serde(rename = "unknown")]
    Unknown,
}

impl ErrorType {
    pub const ALL: [ErrorType; 12] = [
        ErrorType::Type1,
        ErrorType::Type2,
        ErrorType::Type3,
        ErrorType::Type4,
        ErrorType::Type5,
        ErrorType::Type6,
        ErrorType::Type7,
        ErrorType::Type8,
        ErrorType::Type9,
        ErrorType::Type10,
        ErrorType::Type11,
        ErrorType::Unknown,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ErrorType::Type1 => "Type1",
            ErrorType::Type2 => "Type2",
            ErrorType::Type3 => "Type3",
            ErrorType::Type4 => "Type4",
            ErrorType::Type5 => "Type5",
            ErrorType::Type6 => "Type6",
            ErrorType::Type7 => "Type7",
            ErrorType::Type8 => "Type8",
            ErrorType::Type9 => "Type9",
            ErrorType::Type10 => "Type10",
            ErrorType::Type11 => "Type11",
            ErrorType::Unknown => "unknown",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ErrorType::Type1 => "function overload resolution",
            ErrorType::Type2 => "insufficient arguments",
            ErrorType::Type3 => "argument type mismatch",
            ErrorType::Type4 => "syntax error: missing symbol",
            ErrorType::Type5 => "undefined identifier",
            ErrorType::Type6 => "preprocessor directive error",
            ErrorType::Type7 => "unrecognized token",
            ErrorType::Type8 => "duplicate declaration or standard library conflict",
            ErrorType::Type9 => "logical sequence, block index, or shared memory error",
            ErrorType::Type10 => "control flow error: variable initialization bypass",
            ErrorType::Type11 => "CUDA kernel call error",
            ErrorType::Unknown => "unclassified",
        }
    }
}

impl fmt::Display for ErrorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

type Guard = fn(&Captures<'_>) -> bool;

struct Rule {
    error_type: ErrorType,
    pattern: Regex,
    phase: Option<Phase>,
    guard: Option<Guard>,
}

/// User rule as stored in a rules file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuleSpec {
    #[serde(rename = "type")]
    pub error_type: ErrorType,
    pub pattern: String,
    #[serde(default)]
    pub phase: Option<Phase>,
}

#[derive(Debug, Deserialize)]
struct RulesFile {
    #[serde(default)]
    rule: Vec<RuleSpec>,
}

#[derive(Debug, Error)]
pub enum RulesError {
    #[error("cannot read rules file {0}: {1}")]
    Io(String, std::io::Error),
    #[error("invalid rules file: {0}")]
    Parse(String),
    #[error("invalid pattern `{pattern}`: {message}")]
    Pattern { pattern: String, message: String },
}

fn fewer_provided(c: &Captures<'_>) -> bool {
    let want: u64 = c[1].parse().unwrap_or(0);
    let got: u64 = c[2].parse().unwrap_or(u64::MAX);
    got < want
}

// Order matters: more specific families first, the broad "expected X" syntax
// family last.
const BUILTIN: &[(ErrorType, &str, Option<Phase>, Option<Guard>)] = &[
    // Type11
    (ErrorType::Type11, r"a host function call cannot be configured", None, None),
    (ErrorType::Type11, r"kernel call to non-global function", None, None),
    (ErrorType::Type11, r"host function '[^']*' cannot be launched", None, None),
    // Type6
    (ErrorType::Type6, r"#include expects", None, None),
    (ErrorType::Type6, r#"expected "FILENAME" or <FILENAME>"#, None, None),
    (ErrorType::Type6, r"fatal error: .*: No such file or directory", None, None),
    (ErrorType::Type6, r"'[^']*' file not found", None, None),
    (ErrorType::Type6, r"(invalid|unrecognized) preprocessing directive", None, None),
    (ErrorType::Type6, r"cannot open source file", None, None),
    (ErrorType::Type6, r"#(endif|else|elif) without #if", None, None),
    (ErrorType::Type6, r"unterminated #(if|ifdef|ifndef|else)", None, None),
    (ErrorType::Type6, r"unterminated conditional directive", None, None),
    // Type10
    (ErrorType::Type10, r"jump to (case )?label", None, None),
    (ErrorType::Type10, r"crosses initialization of", None, None),
    (ErrorType::Type10, r"cannot jump from .* to (this case label|its label)", None, None),
    (ErrorType::Type10, r"jump bypasses variable initialization", None, None),
    (ErrorType::Type10, r"transfer of control bypasses initialization of", None, None),
    // Type9
    (ErrorType::Type9, r"initializer not allowed for __shared__ variable", None, None),
    (ErrorType::Type9, r"__shared__ (variable|memory)", None, None),
    (ErrorType::Type9, r"invalid configuration argument", None, None),
    (ErrorType::Type9, r"too many resources requested for launch", None, None),
    (ErrorType::Type9, r"__syncthreads\(\) (is )?not allowed", None, None),
    // Type1
    (ErrorType::Type1, r"call of overloaded '[^']*' is ambiguous", None, None),
    (ErrorType::Type1, r"call to '[^']*' is ambiguous", None, None),
    (ErrorType::Type1, r"more than one instance of overloaded function", None, None),
    (ErrorType::Type1, r"ambiguous overload", None, None),
    // Type2
    (ErrorType::Type2, r"too few arguments to function", None, None),
    (ErrorType::Type2, r"too few arguments in function call", None, None),
    (ErrorType::Type2, r"requires (?:at least )?(\d+) arguments?, but (\d+) (?:was|were) provided", None, Some(fewer_provided)),
    (ErrorType::Type2, r"candidate expects (?:at least )?(\d+) arguments?, (\d+) provided", None, Some(fewer_provided)),
    // Type3
    (ErrorType::Type3, r"cannot convert '[^']*' to '[^']*'", None, None),
    (ErrorType::Type3, r"invalid conversion from '[^']*' to '[^']*'", None, None),
    (ErrorType::Type3, r"no known conversion (from|for)", None, None),
    (ErrorType::Type3, r"cannot initialize a (parameter|variable) of type", None, None),
    (ErrorType::Type3, r#"argument of type "[^"]*" is incompatible with parameter of type"#, None, None),
    (ErrorType::Type3, r#"a value of type "[^"]*" cannot be used to initialize"#, None, None),
    (ErrorType::Type3, r"incompatible (pointer )?types? (passing|when|in)", None, None),
    // Type8
    (ErrorType::Type8, r"redeclaration of", None, None),
    (ErrorType::Type8, r"redefinition of", None, None),
    (ErrorType::Type8, r"conflicting declaration", None, None),
    (ErrorType::Type8, r"conflicts with a previous declaration", None, None),
    (ErrorType::Type8, r"redeclared as different kind of (entity|symbol)", None, None),
    (ErrorType::Type8, r"ambiguating new declaration", None, None),
    (ErrorType::Type8, r"has already been defined", None, None),
    (ErrorType::Type8, r"invalid redeclaration", None, None),
    (ErrorType::Type8, r"declaration is incompatible with", None, None),
    (ErrorType::Type8, r"multiple definition of", None, None),
    // Type7
    (ErrorType::Type7, r"stray '[^']*' in program", None, None),
    (ErrorType::Type7, r"unrecognized token", None, None),
    (ErrorType::Type7, r"invalid character", None, None),
    (ErrorType::Type7, r"missing terminating ['\x22] character", None, None),
    (ErrorType::Type7, r"non-ASCII characters are not allowed", None, None),
    // Type5
    (ErrorType::Type5, r#"identifier "[^"]*" is undefined"#, None, None),
    (ErrorType::Type5, r"'[^']*' was not declared in this scope", None, None),
    (ErrorType::Type5, r"'[^']*' has not been declared", None, None),
    (ErrorType::Type5, r"'[^']*' does not name a type", None, None),
    (ErrorType::Type5, r"use of undeclared identifier", None, None),
    (ErrorType::Type5, r"unknown type name", None, None),
    (ErrorType::Type5, r"undefined reference to", None, None),
    (ErrorType::Type5, r"undefined symbol", None, None),
    // Type4
    (ErrorType::Type4, r#"expected a ["'][;}\)\],]["']"#, None, None),
    (ErrorType::Type4, r"expected '[;}\)\],]'", None, None),
    (ErrorType::Type4, r"expected .* (before|at end of input)", None, None),
    (ErrorType::Type4, r"expected (primary-)?expression", None, None),
];

/// Ordered rule table.
pub struct Classifier {
    rules: Vec<Rule>,
}

impl fmt::Debug for Classifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Classifier").field("rules", &self.rules.len()).finish()
    }
}

impl Default for Classifier {
    fn default() -> Self {
        Classifier::builtin()
    }
}

impl Classifier {
    pub fn builtin() -> Self {
        let rules = BUILTIN
            .iter()
            .map(|(error_type, pattern, phase, guard)| Rule {
                error_type: *error_type,
                pattern: Regex::new(pattern).expect("built-in pattern compiles"),
                phase: *phase,
                guard: *guard,
            })
            .collect();
        Classifier { rules }
    }

    /// Built-in table with `extra` rules placed in front of it.
    pub fn with_rules(extra: &[RuleSpec]) -> Result<Self, RulesError> {
        let mut rules = Vec::with_capacity(extra.len() + BUILTIN.len());
        for spec in extra {
            let pattern = Regex::new(&spec.pattern).map_err(|e| RulesError::Pattern {
                pattern: spec.pattern.clone(),
                message: e.to_string(),
            })?;
            rules.push(Rule { error_type: spec.error_type, pattern, phase: spec.phase, guard: None });
        }
        rules.extend(Classifier::builtin().rules);
        Ok(Classifier { rules })
    }

    /// Load user rules from a TOML file of `[[rule]]` tables with `type`,
    /// `pattern` and optional `phase` keys.
    pub fn from_rules_file(path: &Path) -> Result<Self, RulesError> {
        let text = std::fs::read_to_string(path).map_err(|e| RulesError::Io(path.display().to_string(), e))?;
        let file: RulesFile = toml::from_str(&text).map_err(|e| RulesError::Parse(e.to_string()))?;
        Classifier::with_rules(&file.rule)
    }

    /// Later diagnostics are often fallout from the first one, so the first
    /// `error` line any rule recognises decides. Text without such a line is
    /// matched as a whole.
    pub fn classify(&self, diagnostics: &str, phase: Phase) -> ErrorType {
        // GCC quotes with U+2018/U+2019 under UTF-8 locales.
        let ascii = diagnostics.replace(['\u{2018}', '\u{2019}'], "'").replace(['\u{201c}', '\u{201d}'], "\"");
        let diagnostics = ascii.as_str();
        for line in diagnostics.lines().filter(|l| l.contains("error")) {
            if let Some(t) = self.first_match(line, phase) {
                return t;
            }
        }
        self.first_match(diagnostics, phase).unwrap_or(ErrorType::Unknown)
    }

    fn first_match(&self, diagnostics: &str, phase: Phase) -> Option<ErrorType> {
        for rule in &self.rules {
            if rule.phase.is_some_and(|p| p != phase) {
                continue;
            }
            let hit = match rule.guard {
                None => rule.pattern.is_match(diagnostics),
                Some(guard) => rule.pattern.captures_iter(diagnostics).any(|c| guard(&c)),
            };
            if hit {
                return Some(rule.error_type);
            }
        }
        None
    }
}

/// Classify with the built-in table.
pub fn classify_error(diagnostics: &str, phase: Phase) -> ErrorType {
    static DEFAULT: OnceLock<Classifier> = OnceLock::new();
    DEFAULT.get_or_init(Classifier::builtin).classify(diagnostics, phase)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn undefined_template_type() {
        assert_eq!(classify_error(r#"identifier "T" is undefined"#, Phase::Compile), ErrorType::Type5);
    }

    #[test]
    fn argument_count_guard() {
        let fewer = "note: candidate function not viable: requires 2 arguments, but 1 was provided";
        let more = "note: candidate function not viable: requires 2 arguments, but 3 were provided";
        assert_eq!(classify_error(fewer, Phase::Compile), ErrorType::Type2);
        assert_eq!(classify_error(more, Phase::Compile), ErrorType::Unknown);
    }

    #[test]
    fn no_match_is_unknown() {
        assert_eq!(classify_error("", Phase::Run), ErrorType::Unknown);
        assert_eq!(classify_error("Segmentation fault", Phase::Run), ErrorType::Unknown);
    }

    #[test]
    fn user_rules_take_precedence() {
        let c = Classifier::with_rules(&[RuleSpec {
            error_type: ErrorType::Type9,
            pattern: "stack smashing detected".into(),
            phase: Some(Phase::Run),
        }])
        .unwrap();
        assert_eq!(c.classify("*** stack smashing detected ***: terminated", Phase::Run), ErrorType::Type9);
        assert_eq!(c.classify("*** stack smashing detected ***", Phase::Compile), ErrorType::Unknown);
    }

    #[test]
    fn rules_file_parses() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rules.toml");
        std::fs::write(&p, "[[rule]]\ntype = \"Type7\"\npattern = \"weird token\"\n").unwrap();
        let c = Classifier::from_rules_file(&p).unwrap();
        assert_eq!(c.classify("a weird token here", Phase::Compile), ErrorType::Type7);
    }

    #[test]
    fn deterministic() {
        let d = "x.cpp:1:1: error: 'y' was not declared in this scope\nx.cpp:2:1: error: expected ';' before '}'";
        let first = classify_error(d, Phase::Compile);
        for _ in 0..3 {
            assert_eq!(classify_error(d, Phase::Compile), first);
        }
        assert_eq!(first, ErrorType::Type5);
    }

    #[test]
    fn typographic_quotes() {
        let gcc = "harness.cpp:1:63: error: \u{2018}T\u{2019} was not declared in this scope";
        assert_eq!(classify_error(gcc, Phase::Compile), ErrorType::Type5);
        let stray = "harness.cpp:1:27: error: stray \u{2018}@\u{2019} in program\nharness.cpp:1:26: error: expected \u{2018};\u{2019} before numeric constant";
        assert_eq!(classify_error(stray, Phase::Compile), ErrorType::Type7);
    }

    #[test]
    fn first_error_line_wins_over_cascade() {
        let d = "h.cpp:3:38: error: 'T' does not name a type\n\
                 h.cpp:9:5: error: cannot convert 'float*' to 'const int*'\n";
        assert_eq!(classify_error(d, Phase::Compile), ErrorType::Type5);
        let swapped = "h.cpp:9:5: error: cannot convert 'float*' to 'const int*'\n\
                       h.cpp:3:38: error: 'T' does not name a type\n";
        assert_eq!(classify_error(swapped, Phase::Compile), ErrorType::Type3);
    }
}
