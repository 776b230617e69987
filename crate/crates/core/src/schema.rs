//! Resource property schemas.
//!
//! A schema document is a small subset of the resource-provider format:
//!
//! ```json
//! {
//!   "typeName": "AWS::EC2::Subnet",
//!   "properties": {
//!     "VpcId": { "type": "string" },
//!     "AvailabilityZone": { "type": "string" },
//!     "Tags": { "type": "array", "items": { "type": "object" } }
//!   },
//!   "required": ["VpcId"]
//! }
//! ```
//!
//! Keywords outside that subset are ignored with a warning in the
//! [`LoadReport`]. Type checks driven by these schemas never look below a
//! property's own value.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::json::{parse_located, LocatedNode, NodeValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Primitive {
    String,
    Integer,
    Number,
    Boolean,
    Object,
    Array,
}

impl Primitive {
    pub fn parse(name: &str) -> Option<Primitive> {
        Some(match name {
            "string" => Primitive::String,
            "integer" => Primitive::Integer,
            "number" => Primitive::Number,
            "boolean" => Primitive::Boolean,
            "object" => Primitive::Object,
            "array" => Primitive::Array,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Primitive::String => "string",
            Primitive::Integer => "integer",
            Primitive::Number => "number",
            Primitive::Boolean => "boolean",
            Primitive::Object => "object",
            Primitive::Array => "array",
        }
    }

    /// Whether a literal (non-intrinsic) value satisfies this primitive.
    pub fn accepts(self, node: &LocatedNode) -> bool {
        match (self, &node.value) {
            (Primitive::String, NodeValue::String(_)) => true,
            (Primitive::Integer, NodeValue::Number(n)) => n.is_integral(),
            (Primitive::Number, NodeValue::Number(_)) => true,
            (Primitive::Boolean, NodeValue::Bool(_)) => true,
            (Primitive::Object, NodeValue::Object(_)) => true,
            (Primitive::Array, NodeValue::Array(_)) => true,
            _ => false,
        }
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropertySpec {
    pub name: String,
    pub primitive: Primitive,
    pub required: bool,
    /// Only for string properties.
    pub enum_values: Option<Vec<String>>,
    /// Only for array properties.
    pub item_primitive: Option<Primitive>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceSchema {
    pub type_name: String,
    pub properties: BTreeMap<String, PropertySpec>,
}

impl ResourceSchema {
    pub fn property(&self, name: &str) -> Option<&PropertySpec> {
        self.properties.get(name)
    }

    pub fn required(&self) -> impl Iterator<Item = &PropertySpec> {
        self.properties.values().filter(|p| p.required)
    }

    /// Serializes back into the on-disk document format.
    pub fn to_document(&self) -> Value {
        let mut props = Map::new();
        for spec in self.properties.values() {
            let mut p = Map::new();
            p.insert("type".into(), json!(spec.primitive.as_str()));
            if let Some(values) = &spec.enum_values {
                p.insert("enum".into(), json!(values));
            }
            if let Some(item) = spec.item_primitive {
                p.insert("items".into(), json!({ "type": item.as_str() }));
            }
            props.insert(spec.name.clone(), Value::Object(p));
        }
        let required: Vec<&str> = self.required().map(|p| p.name.as_str()).collect();
        json!({
            "typeName": self.type_name,
            "properties": props,
            "required": required,
        })
    }

    /// Suggested file name for [`SchemaStore::write_dir`].
    pub fn file_name(&self) -> String {
        format!("{}.json", self.type_name.replace("::", "-").to_ascii_lowercase())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SchemaStore {
    schemas: BTreeMap<String, ResourceSchema>,
    /// Report resource types missing from the store as errors.
    pub strict_unknown_types: bool,
}

impl SchemaStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Case-sensitive exact-match lookup.
    pub fn lookup(&self, type_name: &str) -> Option<&ResourceSchema> {
        self.schemas.get(type_name)
    }

    pub fn insert(&mut self, schema: ResourceSchema) -> Option<ResourceSchema> {
        self.schemas.insert(schema.type_name.clone(), schema)
    }

    pub fn len(&self) -> usize {
        self.schemas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schemas.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ResourceSchema> {
        self.schemas.values()
    }

    pub fn type_names(&self) -> impl Iterator<Item = &str> {
        self.schemas.keys().map(String::as_str)
    }

    /// Writes one document per schema into `dir`, which must exist.
    pub fn write_dir(&self, dir: &Path) -> io::Result<()> {
        for schema in self.schemas.values() {
            let text = serde_json::to_string_pretty(&schema.to_document()).map_err(io::Error::other)?;
            fs::write(dir.join(schema.file_name()), text + "\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("cannot read schema directory {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// A schema file that was rejected during loading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaFormatError {
    pub file: PathBuf,
    pub property: Option<String>,
    pub message: String,
}

impl fmt::Display for SchemaFormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.file.display())?;
        if let Some(p) = &self.property {
            write!(f, ": property '{p}'")?;
        }
        write!(f, ": {}", self.message)
    }
}

/// Per-file outcome of [`load_schema_dir`]. Rejected files are skipped.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub errors: Vec<SchemaFormatError>,
    pub warnings: Vec<String>,
}

impl LoadReport {
    pub fn is_clean(&self) -> bool {
        self.errors.is_empty() && self.warnings.is_empty()
    }
}

/// Loads every `*.json` file in `dir`, in file-name order.
pub fn load_schema_dir(dir: &Path) -> Result<(SchemaStore, LoadReport), SchemaError> {
    let io_err = |source| SchemaError::Io {
        path: dir.to_owned(),
        source,
    };
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    files.sort();

    let mut store = SchemaStore::new();
    let mut report = LoadReport::default();
    for file in files {
        let text = match fs::read_to_string(&file) {
            Ok(t) => t,
            Err(e) => {
                report.errors.push(SchemaFormatError {
                    file,
                    property: None,
                    message: format!("unreadable: {e}"),
                });
                continue;
            }
        };
        match parse_schema_document(&text, &file, &mut report.warnings) {
            Ok(schema) => {
                if store.lookup(&schema.type_name).is_some() {
                    report.errors.push(SchemaFormatError {
                        file,
                        property: None,
                        message: format!("duplicate typeName '{}'", schema.type_name),
                    });
                } else {
                    store.insert(schema);
                }
            }
            Err(e) => report.errors.push(e),
        }
    }
    Ok((store, report))
}

fn is_type_name(s: &str) -> bool {
    let parts: Vec<&str> = s.split("::").collect();
    parts.len() == 3
        && parts
            .iter()
            .all(|p| !p.is_empty() && p.chars().all(|c| c.is_ascii_alphanumeric()))
}

/// Validates and converts one schema document.
pub fn parse_schema_document(
    text: &str,
    file: &Path,
    warnings: &mut Vec<String>,
) -> Result<ResourceSchema, SchemaFormatError> {
    let fail = |property: Option<&str>, message: String| SchemaFormatError {
        file: file.to_owned(),
        property: property.map(str::to_owned),
        message,
    };
    let root = parse_located(text).map_err(|e| fail(None, e.to_string()))?;
    let members = root
        .as_object()
        .ok_or_else(|| fail(None, "document is not an object".into()))?;

    for m in members {
        if !matches!(m.key.as_str(), "typeName" | "properties" | "required" | "description") {
            warnings.push(format!("{}: ignoring unsupported keyword '{}'", file.display(), m.key));
        }
    }

    let type_name = root
        .get("typeName")
        .and_then(LocatedNode::as_str)
        .ok_or_else(|| fail(None, "missing string field 'typeName'".into()))?;
    if !is_type_name(type_name) {
        return Err(fail(
            None,
            format!("typeName '{type_name}' is not of the form Service::Provider::Resource"),
        ));
    }

    let mut properties = BTreeMap::new();
    if let Some(props) = root.get("properties") {
        let props = props
            .as_object()
            .ok_or_else(|| fail(None, "'properties' is not an object".into()))?;
        for m in props {
            let spec = parse_property(&m.key, &m.value, file, warnings).map_err(|msg| fail(Some(&m.key), msg))?;
            properties.insert(m.key.clone(), spec);
        }
    }

    if let Some(required) = root.get("required") {
        let names = required
            .as_array()
            .ok_or_else(|| fail(None, "'required' is not an array".into()))?;
        for n in names {
            let name = n
                .as_str()
                .ok_or_else(|| fail(None, "'required' entries must be strings".into()))?;
            match properties.get_mut(name) {
                Some(spec) => spec.required = true,
                None => {
                    return Err(fail(
                        Some(name),
                        "listed in 'required' but not defined in 'properties'".into(),
                    ))
                }
            }
        }
    }

    Ok(ResourceSchema {
        type_name: type_name.to_owned(),
        properties,
    })
}

fn parse_property(
    name: &str,
    node: &LocatedNode,
    file: &Path,
    warnings: &mut Vec<String>,
) -> Result<PropertySpec, String> {
    let members = node.as_object().ok_or("property definition is not an object")?;
    for m in members {
        if !matches!(m.key.as_str(), "type" | "enum" | "items" | "description") {
            warnings.push(format!(
                "{}: property '{name}': ignoring unsupported keyword '{}'",
                file.display(),
                m.key
            ));
        }
    }
    let type_node = node.get("type").ok_or("missing 'type'")?;
    let type_str = type_node.as_str().ok_or("'type' is not a string")?;
    let primitive = Primitive::parse(type_str).ok_or_else(|| format!("unknown type '{type_str}'"))?;

    let enum_values = match node.get("enum") {
        None => None,
        Some(_) if primitive != Primitive::String => return Err("'enum' is only allowed on string properties".into()),
        Some(e) => {
            let items = e.as_array().ok_or("'enum' is not an array")?;
            let values = items
                .iter()
                .map(|v| v.as_str().map(str::to_owned))
                .collect::<Option<Vec<_>>>()
                .ok_or("'enum' values must be strings")?;
            Some(values)
        }
    };

    let item_primitive = match node.get("items") {
        None => None,
        Some(_) if primitive != Primitive::Array => return Err("'items' is only allowed on array properties".into()),
        Some(items) => {
            let t = items
                .get("type")
                .and_then(LocatedNode::as_str)
                .ok_or("'items' must have a string 'type'")?;
            Some(Primitive::parse(t).ok_or_else(|| format!("unknown item type '{t}'"))?)
        }
    };

    Ok(PropertySpec {
        name: name.to_owned(),
        primitive,
        required: false,
        enum_values,
        item_primitive,
    })
}

const BUILTIN_DOCUMENTS: &[(&str, &str)] = &[
    (
        "aws-ec2-instance.json",
        include_str!("../schemas/aws-ec2-instance.json"),
    ),
    (
        "aws-ec2-internetgateway.json",
        include_str!("../schemas/aws-ec2-internetgateway.json"),
    ),
    (
        "aws-ec2-routetable.json",
        include_str!("../schemas/aws-ec2-routetable.json"),
    ),
    (
        "aws-ec2-securitygroup.json",
        include_str!("../schemas/aws-ec2-securitygroup.json"),
    ),
    ("aws-ec2-subnet.json", include_str!("../schemas/aws-ec2-subnet.json")),
    ("aws-ec2-vpc.json", include_str!("../schemas/aws-ec2-vpc.json")),
    (
        "aws-ec2-vpcendpoint.json",
        include_str!("../schemas/aws-ec2-vpcendpoint.json"),
    ),
    (
        "aws-ec2-vpcgatewayattachment.json",
        include_str!("../schemas/aws-ec2-vpcgatewayattachment.json"),
    ),
    ("aws-s3-bucket.json", include_str!("../schemas/aws-s3-bucket.json")),
];

/// The embedded schema set used when no `--schemas` directory is given.
pub fn builtin_core_schemas() -> SchemaStore {
    let mut store = SchemaStore::new();
    let mut warnings = Vec::new();
    for (name, text) in BUILTIN_DOCUMENTS {
        let schema = parse_schema_document(text, Path::new(name), &mut warnings)
            .unwrap_or_else(|e| panic!("embedded schema is invalid: {e}"));
        store.insert(schema);
    }
    debug_assert!(warnings.is_empty());
    store
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) {
        fs::write(dir.join(name), text).unwrap();
    }

    #[test]
    fn empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        let (store, report) = load_schema_dir(dir.path()).unwrap();
        assert!(store.is_empty());
        assert!(report.is_clean());
    }

    #[test]
    fn missing_directory_is_io_error() {
        let err = load_schema_dir(Path::new("/definitely/not/here")).unwrap_err();
        assert!(matches!(err, SchemaError::Io { .. }));
    }

    #[test]
    fn loads_instance_fixture() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "aws-ec2-instance.json",
            r#"{"typeName": "AWS::EC2::Instance",
                "properties": {"InstanceType": {"type": "string"}, "ImageId": {"type": "string"}},
                "required": ["ImageId"]}"#,
        );
        let (store, report) = load_schema_dir(dir.path()).unwrap();
        assert!(report.is_clean());
        let schema = store.lookup("AWS::EC2::Instance").unwrap();
        assert_eq!(schema.properties.len(), 2);
        let it = schema.property("InstanceType").unwrap();
        assert_eq!(it.primitive, Primitive::String);
        assert!(!it.required);
        assert!(schema.property("ImageId").unwrap().required);
    }

    #[test]
    fn bad_type_is_reported_and_skipped() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "bad.json",
            r#"{"typeName": "AWS::X::Y", "properties": {"Name": {"type": "strng"}}}"#,
        );
        write(
            dir.path(),
            "good.json",
            r#"{"typeName": "AWS::X::Z", "properties": {}}"#,
        );
        let (store, report) = load_schema_dir(dir.path()).unwrap();
        assert_eq!(store.len(), 1);
        assert_eq!(report.errors.len(), 1);
        let err = &report.errors[0];
        assert!(err.file.ends_with("bad.json"));
        assert_eq!(err.property.as_deref(), Some("Name"));
        assert!(err.to_string().contains("strng"));
    }

    #[test]
    fn structural_violations() {
        let cases = [
            r#"{"typeName": "AWS::EC2", "properties": {}}"#,
            r#"{"properties": {}}"#,
            r#"{"typeName": "A::B::C", "properties": {"P": {"type": "integer", "enum": ["a"]}}}"#,
            r#"{"typeName": "A::B::C", "properties": {"P": {"type": "string", "items": {"type": "string"}}}}"#,
            r#"{"typeName": "A::B::C", "properties": {}, "required": ["Nope"]}"#,
            r#"[1]"#,
            r#"{"typeName": "A::B::C", "typeName": "A::B::D"}"#,
        ];
        for text in cases {
            let mut w = Vec::new();
            assert!(
                parse_schema_document(text, Path::new("x.json"), &mut w).is_err(),
                "accepted {text}"
            );
        }
    }

    #[test]
    fn unsupported_keywords_warn() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "a.json",
            r#"{"typeName": "A::B::C", "additionalProperties": false,
                "properties": {"P": {"type": "string", "pattern": "^x$"}}}"#,
        );
        let (store, report) = load_schema_dir(dir.path()).unwrap();
        assert_eq!(store.len(), 1);
        assert!(report.errors.is_empty());
        assert_eq!(report.warnings.len(), 2);
    }

    #[test]
    fn lookup_is_case_sensitive() {
        let store = builtin_core_schemas();
        assert!(store.lookup("AWS::EC2::Instance").is_some());
        assert!(store.lookup("aws::ec2::instance").is_none());
        assert!(SchemaStore::new().lookup("AWS::EC2::Instance").is_none());
    }

    #[test]
    fn builtin_subset_is_pinned() {
        let store = builtin_core_schemas();
        let names: Vec<&str> = store.type_names().collect();
        assert_eq!(
            names,
            [
                "AWS::EC2::Instance",
                "AWS::EC2::InternetGateway",
                "AWS::EC2::RouteTable",
                "AWS::EC2::SecurityGroup",
                "AWS::EC2::Subnet",
                "AWS::EC2::VPC",
                "AWS::EC2::VPCEndpoint",
                "AWS::EC2::VPCGatewayAttachment",
                "AWS::S3::Bucket",
            ]
        );
        let instance = store.lookup("AWS::EC2::Instance").unwrap();
        assert_eq!(instance.property("InstanceType").unwrap().primitive, Primitive::String);
        let required: Vec<&str> = instance.required().map(|p| p.name.as_str()).collect();
        assert_eq!(required, ["ImageId"]);
        assert!(
            store
                .lookup("AWS::EC2::VPC")
                .unwrap()
                .property("CidrBlock")
                .unwrap()
                .required
        );
        assert!(store.lookup("AWS::Lambda::Function").is_none());
    }

    #[test]
    fn builtin_round_trips_through_directory_loader() {
        let store = builtin_core_schemas();
        let dir = tempfile::tempdir().unwrap();
        store.write_dir(dir.path()).unwrap();
        let (loaded, report) = load_schema_dir(dir.path()).unwrap();
        assert!(report.is_clean(), "{report:?}");
        assert_eq!(loaded, store);

        let again = tempfile::tempdir().unwrap();
        loaded.write_dir(again.path()).unwrap();
        let (reloaded, _) = load_schema_dir(again.path()).unwrap();
        assert_eq!(reloaded, loaded);
    }
}
