use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lex::{self, Token, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    /// Base type with `const`, restrict annotations and pointer stars removed.
    pub type_text: String,
    pub is_pointer: bool,
    pub is_const: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_value: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub return_type: String,
    pub name: String,
    pub params: Vec<Param>,
    pub is_kernel: bool,
    /// Raw qualifier tokens in order of first appearance: function specifiers
    /// such as `__global__` or `static`, and parameter annotations such as
    /// `__restrict__`.
    pub qualifiers: Vec<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SignatureError {
    #[error("no function header found")]
    NoHeader,
    #[error("unbalanced parentheses in function header")]
    Unbalanced,
    #[error("unsupported signature: {0}")]
    Unsupported(String),
}

const FN_SPECIFIERS: &[&str] = &[
    "__global__",
    "__device__",
    "__host__",
    "static",
    "inline",
    "extern",
    "__inline__",
    "__forceinline__",
    "__noinline__",
];

const RESTRICT: &[&str] = &["__restrict__", "__restrict", "restrict"];

/// Parse the header of the first function in `source`.
///
/// This is a lexical parser. It understands specifiers, `const`, pointers,
/// arrays written as parameters, restrict annotations and default arguments,
/// and rejects function pointers, templates and variadic parameter lists.
pub fn parse_signature(source: &str) -> Result<Signature, SignatureError> {
    let tokens: Vec<Token<'_>> = lex::code_tokens(source, true)
        .into_iter()
        .filter(|t| t.kind != TokenKind::Directive)
        .collect();

    let mut qualifiers = Vec::new();
    let mut ret: Vec<&str> = Vec::new();
    let mut i = 0;
    let name_idx = loop {
        let Some(t) = tokens.get(i) else {
            return Err(SignatureError::NoHeader);
        };
        if t.is_ident("template") || t.is("<") {
            return Err(SignatureError::Unsupported("template function".into()));
        }
        if t.is_ident("__launch_bounds__") {
            let close = if tokens.get(i + 1).is_some_and(|t| t.is("(")) {
                lex::matching_close(&tokens, i + 1).ok_or(SignatureError::Unbalanced)?
            } else {
                i
            };
            push_unique(&mut qualifiers, lex::span_text(source, &tokens[i..=close]));
            i = close + 1;
            continue;
        }
        if t.kind == TokenKind::Str && i > 0 && tokens[i - 1].is_ident("extern") {
            // extern "C"
            push_unique(&mut qualifiers, t.text);
            i += 1;
            continue;
        }
        if t.kind == TokenKind::Ident && tokens.get(i + 1).is_some_and(|n| n.is("(")) {
            break i;
        }
        match t.kind {
            TokenKind::Ident if FN_SPECIFIERS.contains(&t.text) => push_unique(&mut qualifiers, t.text),
            TokenKind::Ident => ret.push(t.text),
            TokenKind::Punct if t.text == "*" || t.text == "&" || t.text == "::" => ret.push(t.text),
            _ => return Err(SignatureError::NoHeader),
        }
        i += 1;
    };
    if ret.is_empty() {
        return Err(SignatureError::NoHeader);
    }
    let open = name_idx + 1;
    let close = lex::matching_close(&tokens, open).ok_or(SignatureError::Unbalanced)?;
    if !tokens[open..=close].iter().all(|t| !t.is("{") && !t.is("}")) {
        return Err(SignatureError::Unbalanced);
    }
    match tokens.get(close + 1) {
        None => {}
        Some(t) if t.is("{") || t.is(";") || t.is_ident("const") => {}
        Some(_) => return Err(SignatureError::NoHeader),
    }

    let is_kernel = qualifiers.iter().any(|q| q == "__global__");
    let return_type = join_type(&ret);
    if is_kernel && return_type != "void" {
        return Err(SignatureError::Unsupported(format!(
            "kernel must return void, found `{return_type}`"
        )));
    }

    let inner = &tokens[open + 1..close];
    let mut params = Vec::new();
    let is_void_list = inner.len() == 1 && inner[0].is_ident("void");
    if !inner.is_empty() && !is_void_list {
        for part in lex::split_top_level_commas(inner) {
            params.push(parse_param(source, part, &mut qualifiers)?);
        }
    }

    Ok(Signature {
        return_type,
        name: tokens[name_idx].text.to_string(),
        params,
        is_kernel,
        qualifiers,
    })
}

fn parse_param(
    source: &str,
    tokens: &[Token<'_>],
    qualifiers: &mut Vec<String>,
) -> Result<Param, SignatureError> {
    if tokens.is_empty() {
        return Err(SignatureError::Unsupported("empty parameter".into()));
    }
    if tokens.iter().any(|t| t.is("...")) {
        return Err(SignatureError::Unsupported("variadic parameter list".into()));
    }
    if tokens.iter().any(|t| t.is("<")) {
        return Err(SignatureError::Unsupported(format!(
            "template parameter type `{}`",
            lex::span_text(source, tokens)
        )));
    }
    let (decl, default_value) = match tokens.iter().position(|t| t.is("=")) {
        Some(eq) => {
            let value = lex::span_text(source, &tokens[eq + 1..]).trim();
            if value.is_empty() {
                return Err(SignatureError::Unsupported("empty default argument".into()));
            }
            (&tokens[..eq], Some(value.to_string()))
        }
        None => (tokens, None),
    };
    if decl.iter().any(|t| t.is("(")) {
        return Err(SignatureError::Unsupported(format!(
            "function pointer parameter `{}`",
            lex::span_text(source, decl)
        )));
    }

    // Array declarators: everything from the first `[` on.
    let (decl, is_array) = match decl.iter().position(|t| t.is("[")) {
        Some(b) => (&decl[..b], true),
        None => (decl, false),
    };

    let mut is_const = false;
    let mut stars = 0;
    let mut words: Vec<&str> = Vec::new();
    for t in decl {
        match t.kind {
            TokenKind::Ident if t.text == "const" => is_const = true,
            TokenKind::Ident if t.text == "volatile" || t.text == "register" => {}
            TokenKind::Ident if RESTRICT.contains(&t.text) => push_unique(qualifiers, t.text),
            TokenKind::Ident => words.push(t.text),
            TokenKind::Punct if t.text == "*" => stars += 1,
            TokenKind::Punct if t.text == "&" || t.text == "::" => words.push(t.text),
            _ => {
                return Err(SignatureError::Unsupported(format!(
                    "unrecognized parameter `{}`",
                    lex::span_text(source, tokens)
                )))
            }
        }
    }
    let name = match words.pop() {
        Some(n) if !words.is_empty() && !matches!(words.last(), Some(&"::")) => n,
        _ => {
            return Err(SignatureError::Unsupported(format!(
                "unnamed parameter `{}`",
                lex::span_text(source, tokens)
            )))
        }
    };
    Ok(Param {
        name: name.to_string(),
        type_text: join_type(&words),
        is_pointer: stars > 0 || is_array,
        is_const,
        default_value,
    })
}

fn join_type(words: &[&str]) -> String {
    let mut out = String::new();
    for w in words {
        let glue = matches!(*w, "*" | "&" | "::") || out.ends_with("::") || out.is_empty();
        if !glue {
            out.push(' ');
        }
        out.push_str(w);
    }
    out
}

fn push_unique(list: &mut Vec<String>, item: &str) {
    if !list.iter().any(|q| q == item) {
        list.push(item.to_string());
    }
}
