//! A small lexer for C, C++ and CUDA source text.
//!
//! It is not a preprocessor and it does not know the grammar. It splits text
//! into identifiers, numerals, literals, punctuators, comments and (optionally)
//! whole preprocessor directive lines, recording byte spans so callers can
//! slice the original text back out.

use std::ops::Range;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    Number,
    Str,
    Char,
    Punct,
    Comment,
    /// A full `#...` line, only produced when directive mode is on.
    Directive,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token<'a> {
    pub kind: TokenKind,
    pub text: &'a str,
    pub span: Range<usize>,
}

impl Token<'_> {
    pub fn is(&self, text: &str) -> bool {
        self.kind == TokenKind::Punct && self.text == text
    }

    pub fn is_ident(&self, text: &str) -> bool {
        self.kind == TokenKind::Ident && self.text == text
    }
}

const PUNCT3: &[&str] = &["<<<", ">>>", "<<=", ">>=", "...", "->*"];
const PUNCT2: &[&str] = &[
    "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=", "-=", "*=", "/=", "%=",
    "&=", "|=", "^=", "::", "##",
];

/// Lex `src`. Comments are kept as tokens; filter them with [`code_tokens`]
/// when they are not wanted.
pub fn lex(src: &str, directives: bool) -> Vec<Token<'_>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let mut at_line_start = true;
    while i < bytes.len() {
        let c = bytes[i];
        if c == b'\n' {
            at_line_start = true;
            i += 1;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let kind;
        if directives && at_line_start && c == b'#' {
            i = directive_end(bytes, i);
            kind = TokenKind::Directive;
        } else if c == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            kind = TokenKind::Comment;
        } else if c == b'/' && bytes.get(i + 1) == Some(&b'*') {
            i += 2;
            while i < bytes.len() && !(bytes[i] == b'*' && bytes.get(i + 1) == Some(&b'/')) {
                i += 1;
            }
            i = (i + 2).min(bytes.len());
            kind = TokenKind::Comment;
        } else if c == b'"' || c == b'\'' {
            i = quoted_end(bytes, i);
            kind = if c == b'"' { TokenKind::Str } else { TokenKind::Char };
        } else if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            i += 1;
            while i < bytes.len() {
                let b = bytes[i];
                if b.is_ascii_alphanumeric() || b == b'_' || b == b'.' {
                    i += 1;
                } else if (b == b'+' || b == b'-') && matches!(bytes[i - 1], b'e' | b'E' | b'p' | b'P') {
                    i += 1;
                } else {
                    break;
                }
            }
            kind = TokenKind::Number;
        } else if c.is_ascii_alphabetic() || c == b'_' || c >= 0x80 {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] >= 0x80) {
                i += 1;
            }
            kind = TokenKind::Ident;
        } else {
            let rest = &src[i..];
            let len = PUNCT3
                .iter()
                .chain(PUNCT2)
                .find(|p| rest.starts_with(**p))
                .map_or(1, |p| p.len());
            i += len;
            kind = TokenKind::Punct;
        }
        at_line_start = false;
        // Identifier scanning may stop inside a multi-byte char only if the
        // input is not valid UTF-8, which `&str` rules out.
        out.push(Token { kind, text: &src[start..i], span: start..i });
    }
    out
}

/// Lex and drop comments.
pub fn code_tokens(src: &str, directives: bool) -> Vec<Token<'_>> {
    lex(src, directives)
        .into_iter()
        .filter(|t| t.kind != TokenKind::Comment)
        .collect()
}

fn directive_end(bytes: &[u8], mut i: usize) -> usize {
    while i < bytes.len() {
        if bytes[i] == b'\\' && bytes.get(i + 1) == Some(&b'\n') {
            i += 2;
            continue;
        }
        if bytes[i] == b'\n' {
            break;
        }
        i += 1;
    }
    i
}

/// End of a string or char literal starting at `i`. Unterminated literals end
/// at the next newline (or end of input).
pub(crate) fn quoted_end(bytes: &[u8], i: usize) -> usize {
    let quote = bytes[i];
    let mut j = i + 1;
    while j < bytes.len() {
        match bytes[j] {
            b'\\' if j + 1 < bytes.len() && bytes[j + 1] != b'\n' => j += 2,
            b'\n' => return j,
            b if b == quote => return j + 1,
            _ => j += 1,
        }
    }
    bytes.len()
}

/// Index of the token closing the bracket opened at `open`, honouring nesting
/// of `()`, `[]` and `{}`.
pub fn matching_close(tokens: &[Token<'_>], open: usize) -> Option<usize> {
    let mut stack: Vec<&str> = Vec::new();
    for (idx, t) in tokens.iter().enumerate().skip(open) {
        if t.kind != TokenKind::Punct {
            continue;
        }
        match t.text {
            "(" => stack.push(")"),
            "[" => stack.push("]"),
            "{" => stack.push("}"),
            ")" | "]" | "}" => {
                if stack.pop() != Some(t.text) {
                    return None;
                }
                if stack.is_empty() {
                    return Some(idx);
                }
            }
            _ => {}
        }
    }
    None
}

/// Split a token slice on commas that are not nested in any bracket.
pub fn split_top_level_commas<'t, 'a>(tokens: &'t [Token<'a>]) -> Vec<&'t [Token<'a>]> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (idx, t) in tokens.iter().enumerate() {
        if t.kind != TokenKind::Punct {
            continue;
        }
        match t.text {
            "(" | "[" | "{" => depth += 1,
            ")" | "]" | "}" => depth -= 1,
            "," if depth == 0 => {
                parts.push(&tokens[start..idx]);
                start = idx + 1;
            }
            _ => {}
        }
    }
    parts.push(&tokens[start..]);
    parts
}

/// Source text covered by a token run, sliced from the original.
pub fn span_text<'a>(src: &'a str, tokens: &[Token<'_>]) -> &'a str {
    match (tokens.first(), tokens.last()) {
        (Some(a), Some(b)) => &src[a.span.start..b.span.end],
        _ => "",
    }
}
