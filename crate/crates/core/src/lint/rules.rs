use std::collections::BTreeSet;

use super::{Diagnostic, Rule};
use crate::json::{escape_token, render_fragment, LocatedNode, NodeValue};
use crate::schema::{Primitive, PropertySpec, SchemaStore};

pub const TEMPLATE_SECTIONS: [&str; 9] = [
    "AWSTemplateFormatVersion",
    "Description",
    "Metadata",
    "Parameters",
    "Mappings",
    "Conditions",
    "Transform",
    "Resources",
    "Outputs",
];

const TEMPLATE_VERSION: &str = "2010-09-09";

/// Recognised intrinsic functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Intrinsic {
    Ref,
    GetAtt,
    GetAZs,
    Join,
    Sub,
    Select,
}

impl Intrinsic {
    fn from_key(key: &str) -> Option<Intrinsic> {
        Some(match key {
            "Ref" => Intrinsic::Ref,
            "Fn::GetAtt" => Intrinsic::GetAtt,
            "Fn::GetAZs" => Intrinsic::GetAZs,
            "Fn::Join" => Intrinsic::Join,
            "Fn::Sub" => Intrinsic::Sub,
            "Fn::Select" => Intrinsic::Select,
            _ => return None,
        })
    }
}

/// Returns the function and its argument when `node` is a single-key
/// intrinsic object such as `{"Ref": "X"}`.
pub fn intrinsic(node: &LocatedNode) -> Option<(Intrinsic, &LocatedNode)> {
    match node.as_object()? {
        [only] => Intrinsic::from_key(&only.key).map(|f| (f, &only.value)),
        _ => None,
    }
}

struct Ctx<'a> {
    root: &'a LocatedNode,
    store: &'a SchemaStore,
    strict: bool,
    out: Vec<Diagnostic>,
}

impl Ctx<'_> {
    fn push(&mut self, rule: Rule, node: &LocatedNode, pointer: String, message: String) {
        self.out.push(Diagnostic {
            rule,
            message,
            span: node.span,
            pointer,
        });
    }
}

fn child(pointer: &str, token: &str) -> String {
    format!("{pointer}/{}", escape_token(token))
}

pub(super) fn run(root: &LocatedNode, store: &SchemaStore, strict: bool) -> Vec<Diagnostic> {
    let mut cx = Ctx {
        root,
        store,
        strict,
        out: Vec::new(),
    };
    let Some(sections) = root.as_object() else {
        cx.push(
            Rule::E0001,
            root,
            String::new(),
            format!("Template needs to be an object, found {}", root.kind_name()),
        );
        return cx.out;
    };

    for section in sections {
        if !TEMPLATE_SECTIONS.contains(&section.key.as_str()) {
            cx.push(
                Rule::E1001,
                &section.value,
                child("", &section.key),
                format!("Top level template section {} is not valid", section.key),
            );
        }
    }

    if let Some(version) = root.get("AWSTemplateFormatVersion") {
        if version.as_str() != Some(TEMPLATE_VERSION) {
            cx.push(
                Rule::W1020,
                version,
                "/AWSTemplateFormatVersion".into(),
                format!(
                    "AWSTemplateFormatVersion should be '{TEMPLATE_VERSION}', found {}",
                    render_fragment(version)
                ),
            );
        }
    }

    match root.get("Resources") {
        None => cx.push(
            Rule::E1002,
            root,
            String::new(),
            "Missing top level template section Resources".into(),
        ),
        Some(resources) => match resources.as_object() {
            Some([]) => cx.push(
                Rule::E1002,
                resources,
                "/Resources".into(),
                "Top level template section Resources must not be empty".into(),
            ),
            Some(entries) => {
                for entry in entries {
                    check_resource(&mut cx, &entry.key, &entry.value);
                }
            }
            None => cx.push(
                Rule::E1002,
                resources,
                "/Resources".into(),
                format!(
                    "Top level template section Resources must be an object, found {}",
                    resources.kind_name()
                ),
            ),
        },
    }

    if let Some(params) = root.get("Parameters").and_then(LocatedNode::as_object) {
        let referenced = collect_refs(root);
        for p in params {
            if !referenced.contains(p.key.as_str()) {
                cx.push(
                    Rule::W2001,
                    &p.value,
                    child("/Parameters", &p.key),
                    format!("Parameter '{}' is never used", p.key),
                );
            }
        }
    }

    cx.out
}

fn check_resource(cx: &mut Ctx<'_>, name: &str, resource: &LocatedNode) {
    let pointer = child("/Resources", name);
    let Some(type_node) = resource.get("Type") else {
        cx.push(
            Rule::E3001,
            resource,
            pointer,
            format!("Type not defined for resource {name}"),
        );
        return;
    };
    let type_pointer = child(&pointer, "Type");
    let Some(type_name) = type_node.as_str() else {
        cx.push(
            Rule::E3012,
            type_node,
            type_pointer,
            format!("{} is not of type 'string'", render_fragment(type_node)),
        );
        return;
    };
    let Some(schema) = cx.store.lookup(type_name) else {
        if cx.strict {
            cx.push(
                Rule::E3002,
                type_node,
                type_pointer,
                format!("Invalid or unsupported Type {type_name} for resource {name}"),
            );
        }
        return;
    };

    let props_pointer = child(&pointer, "Properties");
    let (holder, holder_pointer, props) = match resource.get("Properties") {
        None => (resource, pointer, None),
        Some(props) => match props.as_object() {
            Some(members) => (props, props_pointer.clone(), Some(members)),
            None => {
                cx.push(
                    Rule::E3012,
                    props,
                    props_pointer,
                    format!("{} is not of type 'object'", render_fragment(props)),
                );
                return;
            }
        },
    };

    for spec in schema.required() {
        let present = props.is_some_and(|ms| ms.iter().any(|m| m.key == spec.name));
        if !present {
            cx.push(
                Rule::E3003,
                holder,
                holder_pointer.clone(),
                format!("'{}' is a required property", spec.name),
            );
        }
    }

    for member in props.unwrap_or_default() {
        if let Some(spec) = schema.property(&member.key) {
            check_value(cx, spec, &member.value, child(&props_pointer, &member.key));
        }
    }
}

/// Result type of an intrinsic, when it is known without evaluation.
fn intrinsic_yield(cx: &Ctx<'_>, func: Intrinsic, arg: &LocatedNode) -> Option<Primitive> {
    match func {
        Intrinsic::GetAZs => Some(Primitive::Array),
        Intrinsic::Join | Intrinsic::Sub => Some(Primitive::String),
        Intrinsic::GetAtt | Intrinsic::Select => None,
        Intrinsic::Ref => {
            let param_type = arg
                .as_str()
                .and_then(|name| cx.root.get("Parameters")?.get(name)?.get("Type")?.as_str());
            match param_type {
                Some("Number") => Some(Primitive::Number),
                Some(t) if t == "CommaDelimitedList" || t.starts_with("List<") => Some(Primitive::Array),
                _ => Some(Primitive::String),
            }
        }
    }
}

fn yield_satisfies(yielded: Primitive, wanted: Primitive) -> bool {
    yielded == wanted || (yielded == Primitive::Number && wanted == Primitive::Integer)
}

fn check_value(cx: &mut Ctx<'_>, spec: &PropertySpec, node: &LocatedNode, pointer: String) {
    if let Some((func, arg)) = intrinsic(node) {
        if func == Intrinsic::GetAZs && spec.primitive == Primitive::String {
            cx.push(
                Rule::E1015,
                node,
                pointer,
                format!("{} is not of type 'string'", render_fragment(node)),
            );
        } else if spec.primitive != Primitive::String {
            if let Some(yielded) = intrinsic_yield(cx, func, arg) {
                if !yield_satisfies(yielded, spec.primitive) {
                    cx.push(
                        Rule::E1010,
                        node,
                        pointer,
                        format!("{} is not of type '{}'", render_fragment(node), spec.primitive),
                    );
                }
            }
        }
        return;
    }

    if !spec.primitive.accepts(node) {
        cx.push(
            Rule::E3012,
            node,
            pointer,
            format!("{} is not of type '{}'", render_fragment(node), spec.primitive),
        );
        return;
    }

    match &node.value {
        NodeValue::String(s) => {
            if let Some(allowed) = &spec.enum_values {
                if !allowed.contains(s) {
                    let mut listed = String::from("[");
                    for (i, v) in allowed.iter().enumerate() {
                        if i > 0 {
                            listed.push_str(", ");
                        }
                        crate::json::write_quoted(&mut listed, v);
                    }
                    listed.push(']');
                    cx.push(
                        Rule::E3030,
                        node,
                        pointer,
                        format!("{} is not one of {listed}", render_fragment(node)),
                    );
                }
            }
        }
        NodeValue::Array(items) => {
            if let Some(item_type) = spec.item_primitive {
                for (i, item) in items.iter().enumerate() {
                    if intrinsic(item).is_none() && !item_type.accepts(item) {
                        cx.push(
                            Rule::E3012,
                            item,
                            child(&pointer, &i.to_string()),
                            format!("{} is not of type '{item_type}'", render_fragment(item)),
                        );
                    }
                }
            }
        }
        _ => {}
    }
}

/// Names targeted by `{"Ref": name}` anywhere in the document.
fn collect_refs(root: &LocatedNode) -> BTreeSet<&str> {
    let mut names = BTreeSet::new();
    root.walk(&mut |node| {
        if let Some((Intrinsic::Ref, arg)) = intrinsic(node) {
            if let Some(name) = arg.as_str() {
                names.insert(name);
            }
        }
    });
    names
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::json::parse_located;
    use crate::lint::{lint_template, LintOptions};
    use crate::schema::builtin_core_schemas;

    fn messages(text: &str) -> Vec<String> {
        let root = parse_located(text).unwrap();
        lint_template(&root, &builtin_core_schemas(), LintOptions::default())
            .diagnostics()
            .iter()
            .map(|d| format!("{} {}", d.rule, d.message))
            .collect()
    }

    #[test]
    fn intrinsic_detection() {
        let n = parse_located(r#"{"Ref": "X"}"#).unwrap();
        assert_eq!(intrinsic(&n).map(|(f, _)| f), Some(Intrinsic::Ref));
        let n = parse_located(r#"{"Fn::If": ["C", 1, 2]}"#).unwrap();
        assert!(intrinsic(&n).is_none());
        let n = parse_located(r#"{"Ref": "X", "Other": 1}"#).unwrap();
        assert!(intrinsic(&n).is_none());
    }

    #[test]
    fn ref_yield_follows_parameter_type() {
        let base = |param_type: &str| {
            format!(
                r#"{{"Parameters": {{"P": {{"Type": "{param_type}"}}}},
                   "Resources": {{"V": {{"Type": "AWS::EC2::VPC", "Properties": {{
                     "CidrBlock": "10.0.0.0/16", "Ipv4NetmaskLength": {{"Ref": "P"}}}}}}}}}}"#
            )
        };
        assert!(messages(&base("Number")).is_empty());
        assert_eq!(
            messages(&base("String")),
            ["E1010 {'Ref': 'P'} is not of type 'integer'"]
        );
    }

    #[test]
    fn getazs_is_fine_in_array_properties() {
        let text = r#"{"Resources": {"E": {"Type": "AWS::EC2::VPCEndpoint", "Properties": {
            "ServiceName": "s", "VpcId": "v", "SubnetIds": {"Fn::GetAZs": ""}}}}}"#;
        assert!(messages(text).is_empty());
    }

    #[test]
    fn array_items_checked_one_level() {
        let text = r#"{"Resources": {"E": {"Type": "AWS::EC2::VPCEndpoint", "Properties": {
            "ServiceName": "s", "VpcId": "v", "SubnetIds": ["a", 3, {"Ref": "X"}, {"k": [1]}]}}}}"#;
        assert_eq!(
            messages(text),
            [
                "E3012 3 is not of type 'string'",
                "E3012 {'k': [1]} is not of type 'string'"
            ]
        );
    }

    #[test]
    fn enum_message_lists_allowed_values() {
        let text = r#"{"Resources": {"V": {"Type": "AWS::EC2::VPC", "Properties": {
            "CidrBlock": "10.0.0.0/16", "InstanceTenancy": "shared"}}}}"#;
        assert_eq!(
            messages(text),
            ["E3030 'shared' is not one of ['default', 'dedicated', 'host']"]
        );
    }

    #[test]
    fn integer_requires_integral_number() {
        let text = r#"{"Resources": {"V": {"Type": "AWS::EC2::VPC", "Properties": {
            "CidrBlock": "10.0.0.0/16", "Ipv4NetmaskLength": 16.5}}}}"#;
        assert_eq!(messages(text), ["E3012 16.5 is not of type 'integer'"]);
        let ok = r#"{"Resources": {"V": {"Type": "AWS::EC2::VPC", "Properties": {
            "CidrBlock": "10.0.0.0/16", "Ipv4NetmaskLength": 16}}}}"#;
        assert!(messages(ok).is_empty());
    }

    #[test]
    fn nested_objects_are_not_descended() {
        let text = r#"{"Resources": {"B": {"Type": "AWS::S3::Bucket", "Properties": {
            "VersioningConfiguration": {"Status": 12345, "Nested": {"Deep": true}}}}}}"#;
        assert!(messages(text).is_empty());
    }

    #[test]
    fn unrecognised_fn_is_a_plain_object() {
        let text = r#"{"Resources": {"B": {"Type": "AWS::S3::Bucket", "Properties": {
            "BucketName": {"Fn::If": ["C", "a", "b"]}}}}}"#;
        assert_eq!(
            messages(text),
            ["E3012 {'Fn::If': ['C', 'a', 'b']} is not of type 'string'"]
        );
    }

    #[test]
    fn properties_must_be_object() {
        let text = r#"{"Resources": {"B": {"Type": "AWS::S3::Bucket", "Properties": []}}}"#;
        assert_eq!(messages(text), ["E3012 [] is not of type 'object'"]);
    }

    #[test]
    fn resources_must_be_object() {
        assert_eq!(
            messages(r#"{"Resources": [1]}"#),
            ["E1002 Top level template section Resources must be an object, found array"]
        );
    }
}
