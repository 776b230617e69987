//! Injectable template defects, each undone exactly by its repair.
//!
//! Every kind produces exactly one linter diagnostic at a known pointer, so
//! the synthetic backend can tell which of its defects a report flags.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::json::escape_token;
use crate::lint::{Diagnostic, Rule};
use crate::schema::{Primitive, PropertySpec, SchemaStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectKind {
    DropRequired,
    WrongType,
    BadIntrinsicGetazs,
    UnknownTopKey,
    UnusedParameter,
    BadEnum,
}

impl DefectKind {
    pub const ALL: [DefectKind; 6] = [
        DefectKind::DropRequired,
        DefectKind::WrongType,
        DefectKind::BadIntrinsicGetazs,
        DefectKind::UnknownTopKey,
        DefectKind::UnusedParameter,
        DefectKind::BadEnum,
    ];

    /// Kinds whose diagnostic is an error rather than a warning.
    pub const ERRORS: [DefectKind; 5] = [
        DefectKind::DropRequired,
        DefectKind::WrongType,
        DefectKind::BadIntrinsicGetazs,
        DefectKind::UnknownTopKey,
        DefectKind::BadEnum,
    ];

    pub fn rule(self) -> Rule {
        match self {
            DefectKind::DropRequired => Rule::E3003,
            DefectKind::WrongType => Rule::E3012,
            DefectKind::BadIntrinsicGetazs => Rule::E1015,
            DefectKind::UnknownTopKey => Rule::E1001,
            DefectKind::UnusedParameter => Rule::W2001,
            DefectKind::BadEnum => Rule::E3030,
        }
    }
}

/// A defect kind aimed at one location of a template.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DefectSpec {
    pub kind: DefectKind,
    pub target_pointer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DefectError {
    #[error("no {kind:?} site at '{pointer}'")]
    IneligibleSite { kind: DefectKind, pointer: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Undo {
    Reinsert { index: usize, value: Value },
    Restore(Value),
    Remove,
}

/// A defect that has been injected, with what is needed to take it back out.
#[derive(Debug, Clone, PartialEq)]
pub struct AppliedDefect {
    pub spec: DefectSpec,
    /// Never repaired by the synthetic fixer.
    pub stubborn: bool,
    undo: Undo,
    /// The `Parameters` section did not exist before this defect.
    pub(crate) created_section: bool,
}

const TYPO_SECTIONS: [&str; 10] = [
    "Resource",
    "Output",
    "Outputz",
    "Parameter",
    "Mapping",
    "Condition",
    "Metadatas",
    "Transforms",
    "Descriptions",
    "Resourcess",
];

fn tokens(pointer: &str) -> Vec<String> {
    pointer
        .split('/')
        .skip(1)
        .map(|t| t.replace("~1", "/").replace("~0", "~"))
        .collect()
}

fn parent_and_key<'a>(root: &'a mut Value, pointer: &str) -> Option<(&'a mut Map<String, Value>, String)> {
    let mut toks = tokens(pointer);
    let key = toks.pop()?;
    let mut node = root;
    for t in &toks {
        node = node.as_object_mut()?.get_mut(t)?;
    }
    Some((node.as_object_mut()?, key))
}

fn contains_intrinsic(value: &Value) -> bool {
    match value {
        Value::Object(map) => {
            let is_fn = map.len() == 1 && map.keys().next().is_some_and(|k| k == "Ref" || k.starts_with("Fn::"));
            is_fn || map.values().any(contains_intrinsic)
        }
        Value::Array(items) => items.iter().any(contains_intrinsic),
        _ => false,
    }
}

fn literal_accepts(primitive: Primitive, value: &Value) -> bool {
    match (primitive, value) {
        (Primitive::String, Value::String(_)) => true,
        (Primitive::Integer, Value::Number(n)) => n.as_f64().is_some_and(|f| f.fract() == 0.0),
        (Primitive::Number, Value::Number(_)) => true,
        (Primitive::Boolean, Value::Bool(_)) => true,
        (Primitive::Object, Value::Object(_)) => true,
        (Primitive::Array, Value::Array(_)) => true,
        _ => false,
    }
}

fn wrong_type_value(primitive: Primitive) -> Value {
    match primitive {
        Primitive::String => json!(42),
        Primitive::Integer | Primitive::Number => json!("many"),
        Primitive::Boolean => json!("yes"),
        Primitive::Object | Primitive::Array => json!("none"),
    }
}

fn bad_enum_value(original: &str, allowed: &[String]) -> String {
    let lower = original.to_ascii_lowercase();
    if !allowed.contains(&lower) {
        lower
    } else {
        format!("{original}-unsupported")
    }
}

/// Every location in `template` where a defect of `kind` can be injected
/// without overlapping `occupied` pointers or disturbing other rules.
pub fn eligible_sites(
    template: &Value,
    store: &SchemaStore,
    kind: DefectKind,
    occupied: &HashSet<String>,
) -> Vec<DefectSpec> {
    let Some(root) = template.as_object() else {
        return Vec::new();
    };
    let spec = |pointer: String| DefectSpec {
        kind,
        target_pointer: pointer,
    };
    match kind {
        DefectKind::UnknownTopKey => {
            let name = TYPO_SECTIONS
                .iter()
                .map(|s| s.to_string())
                .chain((1..).map(|n| format!("Section{n}")))
                .find(|n| !root.contains_key(n) && !occupied.contains(&format!("/{}", escape_token(n))))
                .expect("unbounded candidates");
            vec![spec(format!("/{}", escape_token(&name)))]
        }
        DefectKind::UnusedParameter => {
            let params = root.get("Parameters").and_then(Value::as_object);
            if root.get("Parameters").is_some() && params.is_none() {
                return Vec::new();
            }
            let name = (1..)
                .map(|n| format!("UnusedParam{n}"))
                .find(|n| !params.is_some_and(|p| p.contains_key(n)))
                .expect("unbounded candidates");
            vec![spec(format!("/Parameters/{name}"))]
        }
        _ => {
            let mut out = Vec::new();
            let Some(resources) = root.get("Resources").and_then(Value::as_object) else {
                return out;
            };
            for (name, resource) in resources {
                let Some(schema) = resource
                    .get("Type")
                    .and_then(Value::as_str)
                    .and_then(|t| store.lookup(t))
                else {
                    continue;
                };
                let Some(props) = resource.get("Properties").and_then(Value::as_object) else {
                    continue;
                };
                for (prop, value) in props {
                    let Some(pspec) = schema.property(prop) else {
                        continue;
                    };
                    let pointer = format!("/Resources/{}/Properties/{}", escape_token(name), escape_token(prop));
                    if occupied.contains(&pointer)
                        || contains_intrinsic(value)
                        || !literal_accepts(pspec.primitive, value)
                    {
                        continue;
                    }
                    let ok = match kind {
                        DefectKind::DropRequired => pspec.required,
                        DefectKind::WrongType => true,
                        DefectKind::BadIntrinsicGetazs => pspec.primitive == Primitive::String,
                        DefectKind::BadEnum => match (&pspec.enum_values, value.as_str()) {
                            (Some(allowed), Some(v)) => allowed.iter().any(|a| a == v),
                            _ => false,
                        },
                        DefectKind::UnknownTopKey | DefectKind::UnusedParameter => unreachable!(),
                    };
                    if ok {
                        out.push(spec(pointer));
                    }
                }
            }
            out
        }
    }
}

impl DefectSpec {
    /// Applies the defect to `template`.
    pub fn inject(&self, template: &mut Value, store: &SchemaStore) -> Result<AppliedDefect, DefectError> {
        let ineligible = || DefectError::IneligibleSite {
            kind: self.kind,
            pointer: self.target_pointer.clone(),
        };
        let applied = |undo, created_section| AppliedDefect {
            spec: self.clone(),
            stubborn: false,
            undo,
            created_section,
        };
        match self.kind {
            DefectKind::UnknownTopKey => {
                let (root, key) = parent_and_key(template, &self.target_pointer).ok_or_else(ineligible)?;
                if tokens(&self.target_pointer).len() != 1 || root.contains_key(&key) {
                    return Err(ineligible());
                }
                root.insert(key, json!({}));
                Ok(applied(Undo::Remove, false))
            }
            DefectKind::UnusedParameter => {
                let toks = tokens(&self.target_pointer);
                if toks.len() != 2 || toks[0] != "Parameters" {
                    return Err(ineligible());
                }
                let root = template.as_object_mut().ok_or_else(ineligible)?;
                let created = !root.contains_key("Parameters");
                let params = root
                    .entry("Parameters")
                    .or_insert_with(|| json!({}))
                    .as_object_mut()
                    .ok_or_else(ineligible)?;
                if params.contains_key(&toks[1]) {
                    return Err(ineligible());
                }
                params.insert(toks[1].clone(), json!({"Type": "String"}));
                Ok(applied(Undo::Remove, created))
            }
            kind => {
                let toks = tokens(&self.target_pointer);
                if toks.len() != 4 || toks[0] != "Resources" || toks[2] != "Properties" {
                    return Err(ineligible());
                }
                let pspec = self.property_spec(template, store).cloned().ok_or_else(ineligible)?;
                let (props, key) = parent_and_key(template, &self.target_pointer).ok_or_else(ineligible)?;
                let index = props.keys().position(|k| *k == key).ok_or_else(ineligible)?;
                let current = props[&key].clone();
                let undo = match kind {
                    DefectKind::DropRequired => {
                        props.shift_remove(&key);
                        Undo::Reinsert { index, value: current }
                    }
                    DefectKind::WrongType => {
                        props.insert(key, wrong_type_value(pspec.primitive));
                        Undo::Restore(current)
                    }
                    DefectKind::BadIntrinsicGetazs => {
                        props.insert(key, json!({"Fn::GetAZs": ""}));
                        Undo::Restore(current)
                    }
                    DefectKind::BadEnum => {
                        let allowed = pspec.enum_values.as_deref().ok_or_else(ineligible)?;
                        let original = current.as_str().ok_or_else(ineligible)?;
                        props.insert(key, json!(bad_enum_value(original, allowed)));
                        Undo::Restore(current)
                    }
                    DefectKind::UnknownTopKey | DefectKind::UnusedParameter => unreachable!(),
                };
                Ok(applied(undo, false))
            }
        }
    }

    fn property_spec<'s>(&self, template: &Value, store: &'s SchemaStore) -> Option<&'s PropertySpec> {
        let toks = tokens(&self.target_pointer);
        let type_name = template.get("Resources")?.get(&toks[1])?.get("Type")?.as_str()?;
        store.lookup(type_name)?.property(&toks[3])
    }

    /// Whether `d` is the diagnostic this defect produces.
    pub fn matches(&self, d: &Diagnostic) -> bool {
        if d.rule != self.kind.rule() {
            return false;
        }
        match self.kind {
            DefectKind::DropRequired => {
                let Some((holder, prop)) = self.target_pointer.rsplit_once('/') else {
                    return false;
                };
                let prop = prop.replace("~1", "/").replace("~0", "~");
                d.pointer == holder && d.message == format!("'{prop}' is a required property")
            }
            _ => d.pointer == self.target_pointer,
        }
    }
}

impl AppliedDefect {
    /// Undoes the injection. Applying repairs in reverse injection order
    /// restores the original template exactly.
    pub fn repair(&self, template: &mut Value) {
        let Some((parent, key)) = parent_and_key(template, &self.spec.target_pointer) else {
            return;
        };
        match &self.undo {
            Undo::Reinsert { index, value } => {
                let at = (*index).min(parent.len());
                parent.shift_insert(at, key, value.clone());
            }
            Undo::Restore(value) => {
                parent.insert(key, value.clone());
            }
            Undo::Remove => {
                parent.shift_remove(&key);
                let emptied = parent.is_empty();
                if self.created_section && emptied {
                    if let Some(root) = template.as_object_mut() {
                        root.shift_remove("Parameters");
                    }
                }
            }
        }
    }
}
