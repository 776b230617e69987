use proptest::prelude::*;
use serde_json::Value;

use iacloop_core::gateway::extract_template;
use iacloop_core::json::{parse_located, LocatedNode, ParseError};

fn arb_json() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<i64>().prop_map(Value::from),
        (-1e12f64..1e12).prop_map(Value::from),
        "[a-zA-Z0-9 é日\\\\\"\n\t🙂]{0,12}".prop_map(Value::String),
    ];
    leaf.prop_recursive(4, 48, 6, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..6).prop_map(Value::Array),
            prop::collection::btree_map("[A-Za-z~/]{1,8}", inner, 0..6)
                .prop_map(|m| Value::Object(m.into_iter().collect())),
        ]
    })
}

fn check_spans(text: &str, node: &LocatedNode) -> Result<(), TestCaseError> {
    let mut err = None;
    node.walk(&mut |n| {
        let off = n.span.byte_offset;
        let before = &text[..off];
        let line = before.matches('\n').count() as u32 + 1;
        let col = before[before.rfind('\n').map_or(0, |i| i + 1)..].chars().count() as u32 + 1;
        let first = text[off..].chars().next();
        let first_ok = match n.kind_name() {
            "object" => first == Some('{'),
            "array" => first == Some('['),
            "string" => first == Some('"'),
            "null" => text[off..].starts_with("null"),
            "boolean" => text[off..].starts_with("true") || text[off..].starts_with("false"),
            _ => first.is_some_and(|c| c == '-' || c.is_ascii_digit()),
        };
        if err.is_none() && (!first_ok || (n.span.line, n.span.column) != (line, col)) {
            err = Some(format!("bad span {:?} at {off}", n.span));
        }
    });
    match err {
        Some(e) => Err(TestCaseError::fail(e)),
        None => Ok(()),
    }
}

proptest! {
    #[test]
    fn spans_point_at_their_literals(v in arb_json(), pretty in any::<bool>()) {
        let text = if pretty { serde_json::to_string_pretty(&v) } else { serde_json::to_string(&v) }.unwrap();
        let root = parse_located(&text).unwrap();
        check_spans(&text, &root)?;
        prop_assert_eq!(root.to_value(), v);
    }

    #[test]
    fn accepts_exactly_what_serde_json_accepts(s in "[ \\[\\]{}:,\"0-9a-z.eE+\\-\\\\]{0,24}") {
        let reference = serde_json::from_str::<Value>(&s);
        match parse_located(&s) {
            Ok(root) => prop_assert_eq!(Some(root.to_value()), reference.ok(), "input {:?}", s),
            // duplicate keys are the one deliberate difference
            Err(ParseError::DuplicateKey { .. }) => {}
            Err(e) => prop_assert!(reference.is_err(), "rejected {:?}: {}", s, e),
        }
    }

    #[test]
    fn extraction_round_trips(body in arb_json(), prose in "[A-Za-z .]{0,20}") {
        let v = serde_json::json!({"Resources": body});
        let text = serde_json::to_string_pretty(&v).unwrap();
        let found = extract_template(&text).unwrap();
        prop_assert_eq!(found.root.to_value(), v.clone());
        let fenced = format!("{prose}\n```json\n{text}\n```\n{prose}");
        prop_assert_eq!(extract_template(&fenced).unwrap().root.to_value(), v);
    }
}
