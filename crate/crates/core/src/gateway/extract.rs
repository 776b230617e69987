use thiserror::Error;

use crate::json::{parse_located, LocatedNode};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no JSON template found in model response")]
pub struct NoTemplateFound;

/// A template pulled out of a model response, with the exact text it was
/// parsed from. Spans in `root` are relative to `text`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedTemplate {
    pub text: String,
    pub root: LocatedNode,
}

/// Finds the template in free-form model output.
///
/// Tries fenced code blocks in order, then the largest balanced `{...}`
/// region, then the whole response.
pub fn extract_template(response: &str) -> Result<ExtractedTemplate, NoTemplateFound> {
    let attempt = |candidate: &str| {
        parse_located(candidate).ok().map(|root| ExtractedTemplate {
            text: candidate.to_owned(),
            root,
        })
    };

    fenced_blocks(response)
        .into_iter()
        .find_map(attempt)
        .or_else(|| largest_brace_region(response).and_then(attempt))
        .or_else(|| attempt(response))
        .ok_or(NoTemplateFound)
}

fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut blocks = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        // the info string (e.g. "json") runs to the end of the fence line
        let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
        let body = &after[body_start..];
        let Some(close) = body.find("```") else {
            break;
        };
        blocks.push(&body[..close]);
        rest = &body[close + 3..];
    }
    blocks
}

fn largest_brace_region(text: &str) -> Option<&str> {
    let bytes = text.as_bytes();
    let mut best: Option<(usize, usize)> = None;
    let mut depth = 0usize;
    let mut start = 0;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate() {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' if depth > 0 => in_string = true,
            b'{' => {
                if depth == 0 {
                    start = i;
                }
                depth += 1;
            }
            b'}' if depth > 0 => {
                depth -= 1;
                if depth == 0 && best.is_none_or(|(s, e)| i + 1 - start > e - s) {
                    best = Some((start, i + 1));
                }
            }
            _ => {}
        }
    }
    best.map(|(s, e)| &text[s..e])
}
