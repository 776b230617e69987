//! Template linting against a [`SchemaStore`].
//!
//! Every finding is a [`Diagnostic`] with a rule code from [`Rule`], a
//! fixed-template message, and the source span of the offending node.
//! A template is schematically valid exactly when its report is empty.

mod rules;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::json::SourceSpan;
use crate::schema::SchemaStore;

pub use rules::{intrinsic, Intrinsic, TEMPLATE_SECTIONS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
}

/// Rule registry. The code's leading letter encodes the severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    /// Template root is not an object.
    E0001,
    /// Unknown top-level section.
    E1001,
    /// Resources section missing or empty.
    E1002,
    /// Intrinsic function whose result type cannot satisfy a non-string property.
    E1010,
    /// `Fn::GetAZs` (a list) where a plain string is required.
    E1015,
    /// Resource without a `Type`.
    E3001,
    /// Resource type unknown to the schema store (strict mode only).
    E3002,
    /// Required property missing.
    E3003,
    /// Property value has the wrong JSON type.
    E3012,
    /// String property value outside its allowed values.
    E3030,
    /// Unexpected `AWSTemplateFormatVersion`.
    W1020,
    /// Parameter never referenced.
    W2001,
}

impl Rule {
    pub const ALL: [Rule; 12] = [
        Rule::E0001,
        Rule::E1001,
        Rule::E1002,
        Rule::E1010,
        Rule::E1015,
        Rule::E3001,
        Rule::E3002,
        Rule::E3003,
        Rule::E3012,
        Rule::E3030,
        Rule::W1020,
        Rule::W2001,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Rule::E0001 => "E0001",
            Rule::E1001 => "E1001",
            Rule::E1002 => "E1002",
            Rule::E1010 => "E1010",
            Rule::E1015 => "E1015",
            Rule::E3001 => "E3001",
            Rule::E3002 => "E3002",
            Rule::E3003 => "E3003",
            Rule::E3012 => "E3012",
            Rule::E3030 => "E3030",
            Rule::W1020 => "W1020",
            Rule::W2001 => "W2001",
        }
    }

    pub fn from_code(code: &str) -> Option<Rule> {
        Rule::ALL.into_iter().find(|r| r.code() == code)
    }

    pub fn severity(self) -> Severity {
        if self.code().starts_with('W') {
            Severity::Warning
        } else {
            Severity::Error
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub rule: Rule,
    pub message: String,
    pub span: SourceSpan,
    /// JSON pointer to the offending node.
    pub pointer: String,
}

impl Diagnostic {
    pub fn severity(&self) -> Severity {
        self.rule.severity()
    }
}

/// Diagnostics ordered by `(byte_offset, code)`, with counts per severity.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LintReport {
    diagnostics: Vec<Diagnostic>,
    error_count: usize,
    warning_count: usize,
}

impl LintReport {
    pub fn new(mut diagnostics: Vec<Diagnostic>) -> Self {
        diagnostics
            .sort_by(|a, b| (a.span.byte_offset, a.rule, &a.message).cmp(&(b.span.byte_offset, b.rule, &b.message)));
        let error_count = diagnostics.iter().filter(|d| d.severity() == Severity::Error).count();
        let warning_count = diagnostics.len() - error_count;
        Self {
            diagnostics,
            error_count,
            warning_count,
        }
    }

    pub fn diagnostics(&self) -> &[Diagnostic] {
        &self.diagnostics
    }

    pub fn error_count(&self) -> usize {
        self.error_count
    }

    pub fn warning_count(&self) -> usize {
        self.warning_count
    }

    /// `(errors, warnings)`.
    pub fn counts(&self) -> (usize, usize) {
        (self.error_count, self.warning_count)
    }

    pub fn is_empty(&self) -> bool {
        self.diagnostics.is_empty()
    }

    /// Keeps only error-severity diagnostics.
    pub fn errors_only(&self) -> LintReport {
        LintReport::new(
            self.diagnostics
                .iter()
                .filter(|d| d.severity() == Severity::Error)
                .cloned()
                .collect(),
        )
    }
}

/// `(errors, warnings)` of a report.
pub fn report_counts(report: &LintReport) -> (usize, usize) {
    report.counts()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LintOptions {
    /// Report unknown resource types (E3002) even if the store does not ask for it.
    pub strict_unknown_types: bool,
}

/// Runs every rule of the registry over a parsed template.
pub fn lint_template(root: &crate::json::LocatedNode, store: &SchemaStore, options: LintOptions) -> LintReport {
    let strict = options.strict_unknown_types || store.strict_unknown_types;
    LintReport::new(rules::run(root, store, strict))
}

/// Two-line rendering: `<code> <message>` and `Error location - <path>:<line>:<column>`.
pub fn format_diagnostic(d: &Diagnostic, file_path: &str) -> String {
    format!(
        "{} {}\nError location - {}:{}:{}",
        d.rule, d.message, file_path, d.span.line, d.span.column
    )
}

/// All diagnostics of a report, separated by blank lines. Empty for a clean report.
pub fn format_report(report: &LintReport, file_path: &str) -> String {
    report
        .diagnostics()
        .iter()
        .map(|d| format_diagnostic(d, file_path))
        .collect::<Vec<_>>()
        .join("\n\n")
}
