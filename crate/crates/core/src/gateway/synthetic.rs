use std::collections::HashSet;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::defects::eligible_sites;
use super::templates::base_template;
use super::{AppliedDefect, Backend, ChatMessage, DefectKind, GatewayError, GenerationConfig, Role};
use crate::feedback::{FEEDBACK_INSTRUCTION, FEEDBACK_LINT_HEADER, FEEDBACK_TEMPLATE_HEADER};
use crate::json::parse_located;
use crate::lint::{lint_template, Diagnostic, LintOptions, LintReport};
use crate::schema::SchemaStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticParams {
    /// Chance that one flagged, non-stubborn defect is repaired in a round.
    pub p_fix: f64,
    /// Chance that an executed repair introduces one new defect.
    pub p_spawn: f64,
    /// Share of the initial defects that are never repaired.
    pub stubborn_fraction: f64,
    pub seed: u64,
    pub initial_defects: usize,
    /// Defect kinds drawn for both seeding and spawning.
    pub kinds: Vec<DefectKind>,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            p_fix: 0.55,
            p_spawn: 0.15,
            stubborn_fraction: 0.25,
            seed: 0,
            initial_defects: 12,
            kinds: DefectKind::ALL.to_vec(),
        }
    }
}

impl SyntheticParams {
    pub fn validate(&self) -> Result<(), GatewayError> {
        for (name, p) in [
            ("p_fix", self.p_fix),
            ("p_spawn", self.p_spawn),
            ("stubborn_fraction", self.stubborn_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(GatewayError::InvalidConfig(format!(
                    "{name} must be in [0, 1], got {p}"
                )));
            }
        }
        if self.kinds.is_empty() {
            return Err(GatewayError::InvalidConfig("kinds must not be empty".into()));
        }
        Ok(())
    }
}

/// A template plus the defects currently injected into it.
///
/// Defects are kept in injection order, which is also the order in which
/// repair draws are made.
#[derive(Debug, Clone)]
pub struct SyntheticFixer {
    params: SyntheticParams,
    store: Arc<SchemaStore>,
    rng: ChaCha8Rng,
    template: Value,
    live: Vec<AppliedDefect>,
}

impl SyntheticFixer {
    /// Starts from `template` with no defects.
    pub fn new(params: SyntheticParams, store: Arc<SchemaStore>, template: Value) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(params.seed);
        Self {
            params,
            store,
            rng,
            template,
            live: Vec::new(),
        }
    }

    /// Starts from a generated clean template described by `description`.
    pub fn generated(params: SyntheticParams, store: Arc<SchemaStore>, description: &str) -> Self {
        let mut fixer = Self::new(params, store, Value::Null);
        fixer.template = base_template(&mut fixer.rng, description);
        fixer
    }

    pub fn template(&self) -> &Value {
        &self.template
    }

    pub fn live(&self) -> &[AppliedDefect] {
        &self.live
    }

    pub fn text(&self) -> String {
        serde_json::to_string_pretty(&self.template).expect("templates serialize")
    }

    /// Injects `n` defects and marks `round(stubborn_fraction * n)` of them,
    /// chosen uniformly, as stubborn. Returns how many were injected, which is
    /// less than `n` only if the template runs out of sites.
    pub fn seed_defects(&mut self, n: usize) -> usize {
        let start = self.live.len();
        for _ in 0..n {
            if !self.inject_random() {
                break;
            }
        }
        let injected = self.live.len() - start;
        let stubborn = ((self.params.stubborn_fraction * injected as f64).round() as usize).min(injected);
        for i in sample(&mut self.rng, injected, stubborn) {
            self.live[start + i].stubborn = true;
        }
        injected
    }

    fn inject_random(&mut self) -> bool {
        let occupied: HashSet<String> = self.live.iter().map(|d| d.spec.target_pointer.clone()).collect();
        let candidates: Vec<_> = self
            .params
            .kinds
            .iter()
            .map(|&k| eligible_sites(&self.template, &self.store, k, &occupied))
            .filter(|sites| !sites.is_empty())
            .collect();
        if candidates.is_empty() {
            return false;
        }
        let sites = &candidates[self.rng.random_range(0..candidates.len())];
        let site = &sites[self.rng.random_range(0..sites.len())];
        match site.inject(&mut self.template, &self.store) {
            Ok(applied) => {
                self.live.push(applied);
                true
            }
            Err(e) => {
                log::warn!("synthetic injection failed: {e}");
                false
            }
        }
    }

    /// The current lint report of [`Self::text`].
    pub fn lint(&self) -> LintReport {
        let root = parse_located(&self.text()).expect("serialized templates parse");
        lint_template(&root, &self.store, LintOptions::default())
    }

    /// For each live defect, whether some diagnostic in `diagnostics` is its own.
    pub fn flags(&self, diagnostics: &[Diagnostic]) -> Vec<bool> {
        self.live
            .iter()
            .map(|d| diagnostics.iter().any(|x| d.spec.matches(x)))
            .collect()
    }

    /// One repair round. `flagged[i]` says whether live defect `i` was reported.
    /// Returns the number of repairs executed.
    pub fn step(&mut self, flagged: &[bool]) -> usize {
        let mut repaired = Vec::new();
        for (i, d) in self.live.iter().enumerate() {
            if flagged.get(i).copied().unwrap_or(false) && !d.stubborn && self.rng.random::<f64>() < self.params.p_fix {
                repaired.push(i);
            }
        }
        let mut orphaned_section = false;
        for &i in repaired.iter().rev() {
            let d = self.live.remove(i);
            d.repair(&mut self.template);
            orphaned_section |= d.created_section;
        }
        if orphaned_section && self.template.get("Parameters").is_some() {
            if let Some(heir) = self
                .live
                .iter_mut()
                .find(|d| d.spec.kind == DefectKind::UnusedParameter)
            {
                heir.created_section = true;
            }
        }
        let spawns = (0..repaired.len())
            .filter(|_| self.rng.random::<f64>() < self.params.p_spawn)
            .count();
        for _ in 0..spawns {
            self.inject_random();
        }
        repaired.len()
    }
}

/// Offline backend built on [`SyntheticFixer`].
///
/// The first call answers the prompt with a generated template carrying the
/// initial defects. Later calls read the diagnostics quoted in the feedback
/// message, run one repair round on the defects they flag, and answer with
/// the new template in a fenced block.
pub struct SyntheticBackend {
    params: SyntheticParams,
    store: Arc<SchemaStore>,
    fixer: Option<SyntheticFixer>,
}

impl SyntheticBackend {
    pub fn new(params: SyntheticParams, store: Arc<SchemaStore>) -> Result<Self, GatewayError> {
        params.validate()?;
        Ok(Self {
            params,
            store,
            fixer: None,
        })
    }

    pub fn fixer(&self) -> Option<&SyntheticFixer> {
        self.fixer.as_ref()
    }
}

fn fenced(text: &str) -> String {
    format!("```json\n{text}\n```")
}

/// `(code and message line, line, column)` of every diagnostic quoted in a
/// feedback message, or `None` if the message is not feedback.
fn quoted_diagnostics(content: &str) -> Option<HashSet<(String, u32, u32)>> {
    let rest = content.strip_prefix(FEEDBACK_TEMPLATE_HEADER)?;
    let rest = rest.strip_suffix(FEEDBACK_INSTRUCTION)?;
    let (_, block) = rest.rsplit_once(FEEDBACK_LINT_HEADER)?;
    let mut out = HashSet::new();
    for entry in block.split("\n\n") {
        let Some((head, location)) = entry.rsplit_once("\nError location - ") else {
            continue;
        };
        let mut parts = location.rsplitn(3, ':');
        let col = parts.next().and_then(|c| c.trim().parse().ok());
        let line = parts.next().and_then(|l| l.parse().ok());
        if let (Some(line), Some(col)) = (line, col) {
            out.insert((head.to_owned(), line, col));
        }
    }
    Some(out)
}

fn description_for(prompt: &str) -> String {
    let first = prompt.lines().next().unwrap_or_default().trim();
    first.chars().take(200).collect()
}

impl Backend for SyntheticBackend {
    fn complete(&mut self, conversation: &[ChatMessage], _cfg: &GenerationConfig) -> Result<String, GatewayError> {
        let user = conversation
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .ok_or_else(|| GatewayError::InvalidConversation("no user message".into()))?;

        let Some(fixer) = self.fixer.as_mut() else {
            let mut fixer = SyntheticFixer::generated(
                self.params.clone(),
                Arc::clone(&self.store),
                &description_for(&user.content),
            );
            fixer.seed_defects(self.params.initial_defects);
            let text = fixer.text();
            self.fixer = Some(fixer);
            return Ok(fenced(&text));
        };

        if let Some(quoted) = quoted_diagnostics(&user.content) {
            let text = fixer.text();
            let root = parse_located(&text).expect("serialized templates parse");
            let reported: Vec<Diagnostic> = lint_template(&root, &fixer.store, LintOptions::default())
                .diagnostics()
                .iter()
                .filter(|d| {
                    let head = format!("{} {}", d.rule.code(), d.message);
                    quoted.contains(&(head, d.span.line, d.span.column))
                })
                .cloned()
                .collect();
            let flagged = fixer.flags(&reported);
            fixer.step(&flagged);
        }
        Ok(fenced(&fixer.text()))
    }
}
