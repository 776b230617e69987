use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;

use iacloop_core::gateway::{GenerationConfig, SyntheticParams};
use iacloop_core::json::{parse_located, LocatedNode, SourceSpan};

pub const DEFAULT_API_BASE_URL: &str = "https://api.openai.com";

/// Settings shared by every subcommand, read from `--config`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GlobalConfig {
    pub schemas_dir: Option<PathBuf>,
    pub strict_types: bool,
    pub api_base_url: Option<String>,
    pub verbosity: u8,
    pub generation: GenerationConfig,
    pub synthetic: SyntheticParams,
    pub script_dir: Option<PathBuf>,
    pub loop_settings: LoopSettings,
    pub bench: BenchSettings,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopSettings {
    pub iterations: Option<usize>,
    pub early_stop: Option<bool>,
    pub include_warnings: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSettings {
    pub cases_dir: Option<PathBuf>,
    pub trials: Option<usize>,
    pub generations: Option<usize>,
    pub seed: Option<u64>,
    pub parallel: Option<usize>,
}

/// A config file problem, positioned in the file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: PathBuf,
    pub span: Option<SourceSpan>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.span {
            Some(s) => write!(f, "{}:{}:{}: {}", self.path.display(), s.line, s.column, self.message),
            None => write!(f, "{}: {}", self.path.display(), self.message),
        }
    }
}

const KEYS: [&str; 9] = [
    "schemas_dir",
    "strict_types",
    "api_base_url",
    "verbosity",
    "generation",
    "synthetic",
    "script_dir",
    "loop",
    "bench",
];

impl GlobalConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError {
            path: path.to_owned(),
            span: None,
            message: e.to_string(),
        })?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let err = |span: Option<SourceSpan>, message: String| ConfigError {
            path: path.to_owned(),
            span,
            message,
        };
        let root = parse_located(text).map_err(|e| err(Some(e.span()), e.to_string()))?;
        let members = root.as_object().ok_or_else(|| {
            err(
                Some(root.span),
                format!("expected an object, found {}", root.kind_name()),
            )
        })?;

        let mut cfg = GlobalConfig::default();
        for m in members {
            let node = &m.value;
            let field = |message: String| err(Some(node.span), format!("{}: {message}", m.key));
            match m.key.as_str() {
                "schemas_dir" => cfg.schemas_dir = Some(decode(node).map_err(field)?),
                "strict_types" => cfg.strict_types = decode(node).map_err(field)?,
                "api_base_url" => cfg.api_base_url = Some(decode(node).map_err(field)?),
                "verbosity" => cfg.verbosity = decode(node).map_err(field)?,
                "generation" => cfg.generation = decode(node).map_err(field)?,
                "synthetic" => cfg.synthetic = decode(node).map_err(field)?,
                "script_dir" => cfg.script_dir = Some(decode(node).map_err(field)?),
                "loop" => cfg.loop_settings = decode(node).map_err(field)?,
                "bench" => cfg.bench = decode(node).map_err(field)?,
                other => {
                    return Err(err(
                        Some(m.key_span),
                        format!("unknown key '{other}', expected one of {}", KEYS.join(", ")),
                    ))
                }
            }
        }
        Ok(cfg)
    }
}

fn decode<T: DeserializeOwned>(node: &LocatedNode) -> Result<T, String> {
    serde_json::from_value(node.to_value()).map_err(|e| e.to_string())
}
