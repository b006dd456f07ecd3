use sha2::{Digest, Sha256};

/// Strip comments, collapse whitespace runs to one space, trim.
///
/// String and character literals are copied verbatim, so whitespace inside
/// them is significant. The result is idempotent.
pub fn normalize(source: &str) -> String {
    let bytes = source.as_bytes();
    let mut out = String::with_capacity(source.len());
    let mut pending_space = false;
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            pending_space = true;
            i += 1;
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            pending_space = true;
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'*') {
            i += 2;
            while i < bytes.len() && !(bytes[i] == b'*' && bytes.get(i + 1) == Some(&b'/')) {
                i += 1;
            }
            i = (i + 2).min(bytes.len());
            pending_space = true;
            continue;
        }
        if pending_space && !out.is_empty() {
            out.push(' ');
        }
        pending_space = false;
        let end = if c == b'"' || c == b'\'' {
            literal_end(bytes, i)
        } else {
            // advance one whole UTF-8 character
            i + source[i..].chars().next().map_or(1, char::len_utf8)
        };
        out.push_str(&source[i..end]);
        i = end;
    }
    out
}

// Literals run to the closing quote or end of input. Newlines do not end
// them: that keeps literal boundaries identical between passes.
fn literal_end(bytes: &[u8], i: usize) -> usize {
    let quote = bytes[i];
    let mut j = i + 1;
    while j < bytes.len() {
        match bytes[j] {
            b'\\' => j += 2,
            b if b == quote => return j + 1,
            _ => j += 1,
        }
    }
    bytes.len().min(j)
}

/// Stable identifier of a function: SHA-256 of its normalized text, hex.
pub fn source_id(source: &str) -> String {
    hex::encode(Sha256::digest(normalize(source).as_bytes()))
}
