use std::fmt::Write;

use super::{JsonNumber, LocatedNode, NodeValue};

/// Renders a value the way lint messages quote offending fragments:
/// single-quoted strings, `True`/`False`/`None`, `{'k': v}` objects in
/// source key order.
pub fn render_fragment(node: &LocatedNode) -> String {
    let mut out = String::new();
    write_node(&mut out, node);
    out
}

fn write_node(out: &mut String, node: &LocatedNode) {
    match &node.value {
        NodeValue::Null => out.push_str("None"),
        NodeValue::Bool(true) => out.push_str("True"),
        NodeValue::Bool(false) => out.push_str("False"),
        NodeValue::Number(n) => out.push_str(&render_number(n)),
        NodeValue::String(s) => write_quoted(out, s),
        NodeValue::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_node(out, item);
            }
            out.push(']');
        }
        NodeValue::Object(members) => {
            out.push('{');
            for (i, m) in members.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_quoted(out, &m.key);
                out.push_str(": ");
                write_node(out, &m.value);
            }
            out.push('}');
        }
    }
}

pub(crate) fn write_quoted(out: &mut String, s: &str) {
    out.push('\'');
    for c in s.chars() {
        match c {
            '\'' => out.push_str("\\'"),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 || c == '\u{7f}' => {
                let _ = write!(out, "\\x{:02x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('\'');
}

fn render_number(n: &JsonNumber) -> String {
    if n.is_integer_literal() {
        let digits = n.text().trim_start_matches('-');
        if digits == "0" {
            return "0".into();
        }
        return n.text().to_owned();
    }
    render_float(n.value())
}

/// Shortest round-trip form, fixed notation for exponents in `[-4, 16)`.
fn render_float(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0.0" } else { "0.0" }.into();
    }
    // `{:e}` yields the shortest digit string that round-trips, e.g. "1.25e-7".
    let sci = format!("{v:e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let sign = if negative { "-" } else { "" };

    if (-4..16).contains(&exp) {
        let point = exp + 1;
        let body = if point <= 0 {
            format!("0.{}{}", "0".repeat((-point) as usize), digits)
        } else if point as usize >= digits.len() {
            format!("{}{}.0", digits, "0".repeat(point as usize - digits.len()))
        } else {
            let (int, frac) = digits.split_at(point as usize);
            format!("{int}.{frac}")
        };
        format!("{sign}{body}")
    } else {
        let (first, rest) = digits.split_at(1);
        let frac = if rest.is_empty() {
            String::new()
        } else {
            format!(".{rest}")
        };
        let esign = if exp < 0 { '-' } else { '+' };
        format!("{sign}{first}{frac}e{esign}{:02}", exp.abs())
    }
}
