//! The generate / lint / refeed loop for a single prompt.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{extract_template, generate, Backend, ChatMessage, GatewayError, GenerationConfig};
use crate::lint::{format_report, lint_template, LintOptions, LintReport};
use crate::schema::SchemaStore;

pub const SYSTEM_PROMPT: &str =
    "You are an expert AWS CloudFormation engineer. Respond with a single JSON CloudFormation template and no other text.";
pub const FEEDBACK_TEMPLATE_HEADER: &str = "Here is a CloudFormation template:\n";
pub const FEEDBACK_LINT_HEADER: &str = "\nRunning cfn-lint produced:\n";
pub const FEEDBACK_INSTRUCTION: &str =
    "\nModify the template to fix these problems. Respond with only the corrected JSON template.";
pub const DEFAULT_FILE_ALIAS: &str = "template.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkCase {
    pub id: String,
    pub prompt: String,
}

impl BenchmarkCase {
    pub fn new(id: impl Into<String>, prompt: impl Into<String>) -> Result<Self, FeedbackError> {
        let case = Self {
            id: id.into(),
            prompt: prompt.into(),
        };
        if case.id.is_empty() {
            return Err(FeedbackError::InvalidCase("case id is empty".into()));
        }
        if case.prompt.trim().is_empty() {
            return Err(FeedbackError::InvalidCase(format!(
                "case {} has an empty prompt",
                case.id
            )));
        }
        Ok(case)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeedbackError {
    #[error("invalid case: {0}")]
    InvalidCase(String),
    #[error("feedback needs at least one diagnostic")]
    EmptyReport,
    #[error("max_iterations must be at least 1")]
    InvalidConfig,
}

pub fn build_initial_messages(case: &BenchmarkCase) -> Vec<ChatMessage> {
    vec![
        ChatMessage::system(SYSTEM_PROMPT),
        ChatMessage::user(case.prompt.clone()),
    ]
}

/// A fresh two-message conversation asking for `prev_template` to be fixed.
pub fn build_feedback_messages(
    prev_template: &str,
    report: &LintReport,
    file_alias: &str,
) -> Result<Vec<ChatMessage>, FeedbackError> {
    if report.is_empty() {
        return Err(FeedbackError::EmptyReport);
    }
    let body = format!(
        "{FEEDBACK_TEMPLATE_HEADER}{prev_template}{FEEDBACK_LINT_HEADER}{}{FEEDBACK_INSTRUCTION}",
        format_report(report, file_alias)
    );
    Ok(vec![ChatMessage::system(SYSTEM_PROMPT), ChatMessage::user(body)])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    pub max_iterations: usize,
    pub early_stop: bool,
    pub include_warnings_in_feedback: bool,
    pub file_alias: String,
    pub strict_unknown_types: bool,
    pub generation: GenerationConfig,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            early_stop: false,
            include_warnings_in_feedback: true,
            file_alias: DEFAULT_FILE_ALIAS.into(),
            strict_unknown_types: false,
            generation: GenerationConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: usize,
    pub error_count: usize,
    pub warning_count: usize,
    pub extraction_failed: bool,
    /// The extracted template, or the raw response when extraction failed.
    pub template_text: String,
    pub diagnostics_rendered: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopTrace {
    pub case_id: String,
    pub generation_index: usize,
    pub records: Vec<IterationRecord>,
}

impl LoopTrace {
    /// `(errors, warnings)` at each recorded iteration.
    pub fn counts(&self) -> Vec<(usize, usize)> {
        self.records.iter().map(|r| (r.error_count, r.warning_count)).collect()
    }
}

/// A backend call failed; `trace` holds every record completed before it.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("backend failure at iteration {}: {source}", trace.records.len())]
pub struct LoopFailure {
    pub trace: LoopTrace,
    pub source: GatewayError,
}

/// Runs one cell: the initial generation followed by up to
/// `max_iterations` feedback rounds.
///
/// A round whose report has nothing to feed back (possible when warnings are
/// withheld) repeats the previous record without calling the backend.
pub fn run_loop(
    case: &BenchmarkCase,
    generation_index: usize,
    backend: &mut dyn Backend,
    store: &SchemaStore,
    cfg: &LoopConfig,
) -> Result<LoopTrace, LoopFailure> {
    let mut trace = LoopTrace {
        case_id: case.id.clone(),
        generation_index,
        records: Vec::with_capacity(cfg.max_iterations + 1),
    };
    if cfg.max_iterations == 0 {
        return Err(LoopFailure {
            trace,
            source: GatewayError::InvalidConfig(FeedbackError::InvalidConfig.to_string()),
        });
    }
    let lint_options = LintOptions {
        strict_unknown_types: cfg.strict_unknown_types,
    };
    let mut last_good: Option<(String, LintReport)> = None;

    for index in 0..=cfg.max_iterations {
        let conversation = match &last_good {
            None => build_initial_messages(case),
            Some((text, report)) => {
                let fed = if cfg.include_warnings_in_feedback {
                    report.clone()
                } else {
                    report.errors_only()
                };
                match build_feedback_messages(text, &fed, &cfg.file_alias) {
                    Ok(c) => c,
                    Err(_) => {
                        let mut repeat = trace.records.last().expect("a good template was recorded").clone();
                        repeat.index = index;
                        trace.records.push(repeat);
                        continue;
                    }
                }
            }
        };

        let response = match generate(&conversation, &cfg.generation, backend) {
            Ok(r) => r,
            Err(source) => return Err(LoopFailure { trace, source }),
        };

        let record = match extract_template(&response) {
            Ok(extracted) => {
                let report = lint_template(&extracted.root, store, lint_options);
                let (error_count, warning_count) = report.counts();
                let record = IterationRecord {
                    index,
                    error_count,
                    warning_count,
                    extraction_failed: false,
                    template_text: extracted.text.clone(),
                    diagnostics_rendered: format_report(&report, &cfg.file_alias),
                };
                last_good = Some((extracted.text, report));
                record
            }
            Err(_) => {
                log::debug!(
                    "case {} generation {generation_index}: no template at iteration {index}",
                    case.id
                );
                let (error_count, warning_count) = trace
                    .records
                    .last()
                    .map_or((0, 0), |r| (r.error_count, r.warning_count));
                IterationRecord {
                    index,
                    error_count,
                    warning_count,
                    extraction_failed: true,
                    template_text: response,
                    diagnostics_rendered: String::new(),
                }
            }
        };
        let clean = !record.extraction_failed && record.error_count == 0 && record.warning_count == 0;
        trace.records.push(record);
        if cfg.early_stop && clean {
            break;
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Role, ScriptedBackend};
    use crate::schema::builtin_core_schemas;

    const FIG3: &str = "Create a AWS CloudFormation template that deploys a VPC";

    fn template_with_errors(n: usize) -> String {
        let extra: String = (0..n).map(|i| format!(",\n  \"Bogus{i}\": {{}}")).collect();
        format!("{{\n  \"Resources\": {{\n    \"B\": {{\"Type\": \"AWS::S3::Bucket\"}}\n  }}{extra}\n}}")
    }

    fn case() -> BenchmarkCase {
        BenchmarkCase::new("vpc", FIG3).unwrap()
    }

    fn script(counts: &[usize], pad_to: usize) -> ScriptedBackend {
        let mut s: Vec<String> = counts.iter().map(|&n| template_with_errors(n)).collect();
        while s.len() < pad_to {
            s.push(template_with_errors(0));
        }
        ScriptedBackend::new(s)
    }

    #[test]
    fn initial_messages() {
        let m = build_initial_messages(&case());
        assert_eq!(m.len(), 2);
        assert_eq!([m[0].role, m[1].role], [Role::System, Role::User]);
        assert_eq!(m[1].content, FIG3);
        assert!(BenchmarkCase::new("x", "  ").is_err());
    }

    #[test]
    fn feedback_message_layout() {
        let store = builtin_core_schemas();
        let text = template_with_errors(3);
        let root = crate::json::parse_located(&text).unwrap();
        let report = lint_template(&root, &store, LintOptions::default());
        let m = build_feedback_messages(&text, &report, "template.json").unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].content, SYSTEM_PROMPT);
        let body = &m[1].content;
        assert!(body.starts_with(&format!("{FEEDBACK_TEMPLATE_HEADER}{text}{FEEDBACK_LINT_HEADER}")));
        assert!(body.ends_with(FEEDBACK_INSTRUCTION));
        assert_eq!(body.matches("\nError location - template.json:").count(), 3);
        assert_eq!(
            build_feedback_messages(&text, &LintReport::default(), "t.json"),
            Err(FeedbackError::EmptyReport)
        );
    }

    #[test]
    fn early_stop_ends_at_clean_record() {
        let store = builtin_core_schemas();
        let cfg = LoopConfig {
            early_stop: true,
            ..Default::default()
        };
        let mut backend = script(&[3, 1, 0], 3);
        let trace = run_loop(&case(), 0, &mut backend, &store, &cfg).unwrap();
        assert_eq!(trace.counts(), vec![(3, 0), (1, 0), (0, 0)]);
        assert_eq!(backend.calls(), 3);
    }

    #[test]
    fn without_early_stop_all_rounds_are_recorded() {
        let store = builtin_core_schemas();
        let mut backend = script(&[3, 1, 0], 11);
        let trace = run_loop(&case(), 2, &mut backend, &store, &LoopConfig::default()).unwrap();
        assert_eq!(trace.records.len(), 11);
        assert_eq!(trace.generation_index, 2);
        assert!(trace.records.iter().enumerate().all(|(i, r)| r.index == i));
        assert_eq!(trace.counts()[..3], [(3, 0), (1, 0), (0, 0)]);
        // clean templates are not fed back
        assert_eq!(backend.calls(), 3);
    }

    #[test]
    fn extraction_failure_carries_counts() {
        let store = builtin_core_schemas();
        let mut backend = ScriptedBackend::new(vec![
            template_with_errors(2),
            "Sorry, I cannot do that.".into(),
            template_with_errors(1),
        ]);
        let cfg = LoopConfig {
            max_iterations: 2,
            ..Default::default()
        };
        let trace = run_loop(&case(), 0, &mut backend, &store, &cfg).unwrap();
        assert_eq!(trace.counts(), vec![(2, 0), (2, 0), (1, 0)]);
        assert!(trace.records[1].extraction_failed);
    }

    #[test]
    fn backend_failure_keeps_partial_trace() {
        let store = builtin_core_schemas();
        let mut backend = ScriptedBackend::new(vec![template_with_errors(2)]);
        let err = run_loop(&case(), 0, &mut backend, &store, &LoopConfig::default()).unwrap_err();
        assert_eq!(err.trace.records.len(), 1);
        assert_eq!(err.source, GatewayError::ScriptExhausted(1));
    }

    #[test]
    fn withheld_warnings_repeat_the_record() {
        let store = builtin_core_schemas();
        let warn_only = r#"{"Parameters": {"P": {"Type": "String"}}, "Resources": {"B": {"Type": "AWS::S3::Bucket"}}}"#;
        let mut backend = ScriptedBackend::new(vec![warn_only.into()]);
        let cfg = LoopConfig {
            max_iterations: 3,
            include_warnings_in_feedback: false,
            ..Default::default()
        };
        let trace = run_loop(&case(), 0, &mut backend, &store, &cfg).unwrap();
        assert_eq!(trace.counts(), vec![(0, 1); 4]);
        assert_eq!(backend.calls(), 1);
    }

    #[test]
    fn trace_json_field_names() {
        let trace = LoopTrace {
            case_id: "c".into(),
            generation_index: 0,
            records: vec![IterationRecord {
                index: 0,
                error_count: 1,
                warning_count: 0,
                extraction_failed: false,
                template_text: "{}".into(),
                diagnostics_rendered: String::new(),
            }],
        };
        let v = serde_json::to_value(&trace).unwrap();
        let rec = v["records"][0].as_object().unwrap();
        let keys: Vec<_> = rec.keys().map(String::as_str).collect();
        assert_eq!(
            keys,
            [
                "index",
                "error_count",
                "warning_count",
                "extraction_failed",
                "template_text",
                "diagnostics_rendered"
            ]
        );
        assert_eq!(v["case_id"], "c");
    }
}
