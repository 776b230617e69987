//! JSON documents whose every node remembers where it came from.
//!
//! Templates are parsed into [`LocatedNode`] trees so the linter can report
//! `file:line:column` positions and resolve JSON pointers back to source
//! spans.

mod parse;
mod pointer;
mod render;

use serde::{Deserialize, Serialize};

pub use parse::{parse_located, ParseError};
pub use pointer::{escape_token, node_at, PointerError};
pub use render::render_fragment;
pub(crate) use render::write_quoted;

/// Position of the first character of a node.
///
/// `line` and `column` are 1-based, with the column counted in characters
/// rather than bytes. `byte_offset` is 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SourceSpan {
    pub line: u32,
    pub column: u32,
    pub byte_offset: usize,
}

impl SourceSpan {
    pub const START: SourceSpan = SourceSpan {
        line: 1,
        column: 1,
        byte_offset: 0,
    };
}

/// A number literal, kept both as source text and as a parsed double.
#[derive(Debug, Clone, PartialEq)]
pub struct JsonNumber {
    text: String,
    value: f64,
}

impl JsonNumber {
    pub(crate) fn new(text: String, value: f64) -> Self {
        Self { text, value }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// True when the literal has no fraction or exponent part.
    pub fn is_integer_literal(&self) -> bool {
        !self.text.contains(['.', 'e', 'E'])
    }

    /// True when the value is mathematically an integer, whatever its spelling.
    pub fn is_integral(&self) -> bool {
        self.value.is_finite() && self.value.fract() == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeValue {
    Null,
    Bool(bool),
    Number(JsonNumber),
    String(String),
    Array(Vec<LocatedNode>),
    Object(Vec<Member>),
}

/// One `"key": value` pair of an object, in source order.
#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub key: String,
    pub key_span: SourceSpan,
    pub value: LocatedNode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocatedNode {
    pub value: NodeValue,
    pub span: SourceSpan,
}

impl LocatedNode {
    pub fn as_object(&self) -> Option<&[Member]> {
        match &self.value {
            NodeValue::Object(members) => Some(members),
            _ => None,
        }
    }

    pub fn as_array(&self) -> Option<&[LocatedNode]> {
        match &self.value {
            NodeValue::Array(items) => Some(items),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match &self.value {
            NodeValue::String(s) => Some(s),
            _ => None,
        }
    }

    /// Member lookup for object nodes; `None` for anything else.
    pub fn get(&self, key: &str) -> Option<&LocatedNode> {
        self.as_object()?.iter().find(|m| m.key == key).map(|m| &m.value)
    }

    pub fn is_object(&self) -> bool {
        matches!(self.value, NodeValue::Object(_))
    }

    /// JSON type name of the node as used in diagnostic messages.
    pub fn kind_name(&self) -> &'static str {
        match &self.value {
            NodeValue::Null => "null",
            NodeValue::Bool(_) => "boolean",
            NodeValue::Number(_) => "number",
            NodeValue::String(_) => "string",
            NodeValue::Array(_) => "array",
            NodeValue::Object(_) => "object",
        }
    }

    /// Visits this node and all descendants in document order.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a LocatedNode)) {
        f(self);
        match &self.value {
            NodeValue::Array(items) => items.iter().for_each(|n| n.walk(f)),
            NodeValue::Object(members) => members.iter().for_each(|m| m.value.walk(f)),
            _ => {}
        }
    }

    /// Drops position information, keeping key order.
    pub fn to_value(&self) -> serde_json::Value {
        use serde_json::Value;
        match &self.value {
            NodeValue::Null => Value::Null,
            NodeValue::Bool(b) => Value::Bool(*b),
            NodeValue::Number(n) => serde_json::from_str::<serde_json::Number>(n.text())
                .map(Value::Number)
                .unwrap_or_else(|_| {
                    serde_json::Number::from_f64(n.value())
                        .map(Value::Number)
                        .unwrap_or(Value::Null)
                }),
            NodeValue::String(s) => Value::String(s.clone()),
            NodeValue::Array(items) => Value::Array(items.iter().map(Self::to_value).collect()),
            NodeValue::Object(members) => {
                Value::Object(members.iter().map(|m| (m.key.clone(), m.value.to_value())).collect())
            }
        }
    }
}
