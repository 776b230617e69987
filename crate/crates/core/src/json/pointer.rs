use thiserror::Error;

use super::{LocatedNode, NodeValue};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PointerError {
    #[error("malformed JSON pointer '{pointer}': {reason}")]
    MalformedPointer { pointer: String, reason: &'static str },
}

/// Resolves an RFC 6901 pointer against a located tree.
///
/// Returns `Ok(None)` when a step is missing, and an error only when the
/// pointer itself is not well-formed.
pub fn node_at<'a>(root: &'a LocatedNode, pointer: &str) -> Result<Option<&'a LocatedNode>, PointerError> {
    if pointer.is_empty() {
        return Ok(Some(root));
    }
    let malformed = |reason| PointerError::MalformedPointer {
        pointer: pointer.to_owned(),
        reason,
    };
    let Some(rest) = pointer.strip_prefix('/') else {
        return Err(malformed("must be empty or start with '/'"));
    };
    let tokens = rest
        .split('/')
        .map(|raw| unescape(raw).ok_or_else(|| malformed("'~' must be followed by '0' or '1'")))
        .collect::<Result<Vec<_>, _>>()?;

    let mut node = root;
    for token in &tokens {
        let next = match &node.value {
            NodeValue::Object(members) => members.iter().find(|m| m.key == *token).map(|m| &m.value),
            NodeValue::Array(items) => array_index(token).and_then(|i| items.get(i)),
            _ => None,
        };
        match next {
            Some(n) => node = n,
            None => return Ok(None),
        }
    }
    Ok(Some(node))
}

/// Escapes one reference token (`~` → `~0`, `/` → `~1`).
pub fn escape_token(token: &str) -> String {
    token.replace('~', "~0").replace('/', "~1")
}

fn unescape(raw: &str) -> Option<String> {
    let mut out = String::with_capacity(raw.len());
    let mut chars = raw.chars();
    while let Some(c) = chars.next() {
        if c == '~' {
            match chars.next() {
                Some('0') => out.push('~'),
                Some('1') => out.push('/'),
                _ => return None,
            }
        } else {
            out.push(c);
        }
    }
    Some(out)
}

fn array_index(token: &str) -> Option<usize> {
    let leading_zero = token.len() > 1 && token.starts_with('0');
    if token.is_empty() || leading_zero || !token.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    token.parse().ok()
}
