//! Canonical tool contracts: the single source from which every interface
//! representation is generated.
//!
//! A [`ToolContract`] declares fields, types, requiredness, enumerations,
//! bounds, patterns, and equality-triggered conditional rules. Contracts are
//! immutable after load; all renderers and the validator read the same IR.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::textmatch::Pattern;

/// The seven value kinds the contract IR supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    String,
    Integer,
    Number,
    Boolean,
    Enum,
    Object,
    Array,
}

impl FieldKind {
    /// The word used in prose, schemas, and diagnostics for this kind.
    /// Enum fields are strings with a closed member set.
    pub fn type_word(self) -> &'static str {
        match self {
            FieldKind::String | FieldKind::Enum => "string",
            FieldKind::Integer => "integer",
            FieldKind::Number => "number",
            FieldKind::Boolean => "boolean",
            FieldKind::Object => "object",
            FieldKind::Array => "array",
        }
    }
}

/// One argument field. `path` is the absolute JSONPath of the field within
/// the args document (`$.window.minutes`); array item specs use `[*]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub path: String,
    pub kind: FieldKind,
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enum_members: Option<Vec<String>>,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        serialize_with = "ser_opt_num"
    )]
    pub min: Option<f64>,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        serialize_with = "ser_opt_num"
    )]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_length: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_length: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<FieldSpec>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
}

impl FieldSpec {
    /// A bare field under `parent`; constraints attach via the `with_*`
    /// builders. The item spec of an array is named `*`.
    pub fn new(name: &str, parent: &str, kind: FieldKind, required: bool) -> Self {
        let path = if name == "*" {
            item_path(parent)
        } else {
            path_join(parent, name)
        };
        FieldSpec {
            name: name.into(),
            path,
            kind,
            required,
            enum_members: None,
            min: None,
            max: None,
            pattern: None,
            min_length: None,
            max_length: None,
            children: Vec::new(),
            description: String::new(),
        }
    }

    pub fn describe(mut self, text: &str) -> Self {
        self.description = text.into();
        self
    }

    pub fn with_enum(mut self, members: &[&str]) -> Self {
        self.enum_members = Some(members.iter().map(|m| m.to_string()).collect());
        self
    }

    pub fn with_bounds(mut self, min: Option<f64>, max: Option<f64>) -> Self {
        self.min = min;
        self.max = max;
        self
    }

    pub fn with_pattern(mut self, pattern: &str) -> Self {
        self.pattern = Some(pattern.into());
        self
    }

    pub fn with_lengths(mut self, min: Option<u64>, max: Option<u64>) -> Self {
        self.min_length = min;
        self.max_length = max;
        self
    }

    pub fn with_children(mut self, children: Vec<FieldSpec>) -> Self {
        self.children = children;
        self
    }
}

/// Equality-triggered requiredness: when the field at `if_path` equals
/// `if_equals`, every path in `then_required` must be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalRule {
    pub if_path: String,
    pub if_equals: Value,
    pub then_required: Vec<String>,
}

/// A worked example: a full args document plus a short note.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractExample {
    pub args: Value,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

/// Canonical input contract for one tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolContract {
    pub name: String,
    pub description: String,
    pub fields: Vec<FieldSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conditional_rules: Vec<ConditionalRule>,
    pub examples: Vec<ContractExample>,
}

/// On-disk contract pack: `{"version": 1, "tools": [...]}`, tool order
/// preserved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractPack {
    pub version: u32,
    pub tools: Vec<ToolContract>,
}

pub const CONTRACT_PACK_VERSION: u32 = 1;

/// One violated contract invariant. Findings are reports, not failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrityFinding {
    /// Field path the finding is anchored to; `$` for contract-level rules.
    pub path: String,
    pub rule: String,
    pub detail: String,
}

#[derive(Debug, Error)]
pub enum ContractError {
    #[error("parse error at byte {offset} (line {line}, column {column}): {message}")]
    Parse {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported contract pack version {0}")]
    UnsupportedVersion(u32),
    #[error("contract `{contract}` failed integrity checks: {}", summarize(.findings))]
    Integrity {
        contract: String,
        findings: Vec<IntegrityFinding>,
    },
}

fn summarize(findings: &[IntegrityFinding]) -> String {
    findings
        .iter()
        .map(|f| format!("{} at {}", f.rule, f.path))
        .collect::<Vec<_>>()
        .join("; ")
}

fn ser_opt_num<S: serde::Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(f) => s.serialize_some(&number_value(*f)),
        None => s.serialize_none(),
    }
}

/// Render an f64 as a JSON number, collapsing integral values to integers
/// so canonical output never shows `1.0` where `1` is meant.
pub fn number_value(f: f64) -> Value {
    if f.is_finite() && f.fract() == 0.0 && f.abs() < 9e15 {
        Value::Number((f as i64).into())
    } else {
        serde_json::Number::from_f64(f)
            .map(Value::Number)
            .unwrap_or(Value::Null)
    }
}

/// Format an f64 the way diagnostics and prose show it: `1`, not `1.0`.
pub fn format_number(f: f64) -> String {
    number_value(f).to_string()
}

// ---------------------------------------------------------------------------
// Canonical serialization and digests
// ---------------------------------------------------------------------------

/// Serialize a JSON value with recursively sorted keys and no whitespace.
/// This is the form every digest in the system is computed over.
pub fn canonical_json(v: &Value) -> String {
    let mut out = String::new();
    write_canonical(v, &mut out);
    out
}

fn write_canonical(v: &Value, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => out.push_str(&n.to_string()),
        Value::String(s) => {
            out.push_str(&serde_json::to_string(s).expect("string serialization"))
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("key serialization"));
                out.push(':');
                write_canonical(&map[*k], out);
            }
            out.push('}');
        }
    }
}

/// SHA-256 of a byte string, as 64 lowercase hex digits.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Digest of the canonical serialization of a contract. Equal contracts hash
/// equal regardless of source key order or whitespace.
pub fn canonical_hash(contract: &ToolContract) -> String {
    let value = serde_json::to_value(contract).expect("contract serialization");
    value_digest(&value)
}

/// Digest of any JSON value in canonical form.
pub fn value_digest(value: &Value) -> String {
    sha256_hex(canonical_json(value).as_bytes())
}

/// Digest of a whole pack in canonical form.
pub fn pack_digest(pack: &ContractPack) -> String {
    let value = serde_json::to_value(pack).expect("pack serialization");
    sha256_hex(canonical_json(&value).as_bytes())
}

// ---------------------------------------------------------------------------
// Path handling
// ---------------------------------------------------------------------------

/// Join a parent path and a field name: `$` + `window` -> `$.window`.
pub fn path_join(parent: &str, name: &str) -> String {
    format!("{parent}.{name}")
}

/// Path of an array's item spec: `$.tags` -> `$.tags[*]`.
pub fn item_path(parent: &str) -> String {
    format!("{parent}[*]")
}

/// Resolve a dotted JSONPath (`$.a.b`) against a document. Rule paths only
/// address object fields, never array elements.
pub fn resolve_path<'a>(doc: &'a Value, path: &str) -> Option<&'a Value> {
    let rest = path.strip_prefix('$')?;
    let mut current = doc;
    for seg in rest.split('.').filter(|s| !s.is_empty()) {
        current = current.as_object()?.get(seg)?;
    }
    Some(current)
}

/// All declared field paths in a contract, including nested ones.
pub fn declared_paths(contract: &ToolContract) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    fn walk(fields: &[FieldSpec], out: &mut BTreeSet<String>) {
        for f in fields {
            out.insert(f.path.clone());
            walk(&f.children, out);
        }
    }
    walk(&contract.fields, &mut out);
    out
}

// ---------------------------------------------------------------------------
// Integrity checks
// ---------------------------------------------------------------------------

const NAME_PATTERN: &str = "^[a-z][a-z0-9_]*$";

/// Check every contract invariant. Returns an empty list iff the contract is
/// well-formed; each finding names the offending path and rule.
pub fn check_contract(contract: &ToolContract) -> Vec<IntegrityFinding> {
    let mut findings = Vec::new();
    let name_ok = Pattern::compile(NAME_PATTERN).expect("static pattern");

    if !name_ok.is_match(&contract.name) {
        findings.push(IntegrityFinding {
            path: "$".into(),
            rule: "bad-name".into(),
            detail: format!("tool name `{}` must match [a-z][a-z0-9_]*", contract.name),
        });
    }

    check_fields(&contract.fields, "$", &name_ok, &mut findings);

    let paths = declared_paths(contract);
    for (i, rule) in contract.conditional_rules.iter().enumerate() {
        if !paths.contains(&rule.if_path) {
            findings.push(IntegrityFinding {
                path: rule.if_path.clone(),
                rule: "dangling-rule-path".into(),
                detail: format!("conditional rule {i} references undeclared path"),
            });
        }
        for p in &rule.then_required {
            if !paths.contains(p) {
                findings.push(IntegrityFinding {
                    path: p.clone(),
                    rule: "dangling-rule-path".into(),
                    detail: format!("conditional rule {i} requires undeclared path"),
                });
            }
        }
    }

    let any_valid_example = contract
        .examples
        .iter()
        .any(|ex| crate::validate::check_args(contract, &ex.args).is_empty());
    if !any_valid_example {
        findings.push(IntegrityFinding {
            path: "$".into(),
            rule: "no-valid-example".into(),
            detail: "no example args document validates against the contract".into(),
        });
    }

    findings
}

fn check_fields(
    fields: &[FieldSpec],
    parent_path: &str,
    name_ok: &Pattern,
    findings: &mut Vec<IntegrityFinding>,
) {
    let mut seen = BTreeSet::new();
    for field in fields {
        if !seen.insert(field.name.clone()) {
            findings.push(IntegrityFinding {
                path: field.path.clone(),
                rule: "duplicate-field".into(),
                detail: format!("field name `{}` repeats among siblings", field.name),
            });
        }
        check_field(field, parent_path, name_ok, findings);
    }
}

fn check_field(
    field: &FieldSpec,
    parent_path: &str,
    name_ok: &Pattern,
    findings: &mut Vec<IntegrityFinding>,
) {
    let mut push = |rule: &str, detail: String| {
        findings.push(IntegrityFinding {
            path: field.path.clone(),
            rule: rule.into(),
            detail,
        });
    };

    // Array item specs are named `*`; everything else must be an identifier.
    if field.name != "*" && !name_ok.is_match(&field.name) {
        push(
            "bad-name",
            format!("field name `{}` must match [a-z][a-z0-9_]*", field.name),
        );
    }

    let expected_path = if field.name == "*" {
        item_path(parent_path)
    } else {
        path_join(parent_path, &field.name)
    };
    if field.path != expected_path {
        push(
            "path-mismatch",
            format!("declared path `{}`, expected `{expected_path}`", field.path),
        );
    }

    match (&field.enum_members, field.kind) {
        (Some(members), FieldKind::Enum) => {
            let distinct: BTreeSet<&String> = members.iter().collect();
            if distinct.len() < 2 {
                push(
                    "degenerate-enum",
                    format!("enum has {} distinct member(s), need at least 2", distinct.len()),
                );
            }
        }
        (Some(_), _) => push(
            "enum-members-mismatch",
            "enum_members present on a non-enum field".into(),
        ),
        (None, FieldKind::Enum) => push(
            "enum-members-mismatch",
            "enum field without enum_members".into(),
        ),
        (None, _) => {}
    }

    let container = matches!(field.kind, FieldKind::Object | FieldKind::Array);
    if container && field.children.is_empty() {
        push("children-mismatch", "object/array field without children".into());
    }
    if !container && !field.children.is_empty() {
        push("children-mismatch", "scalar field with children".into());
    }
    if field.kind == FieldKind::Array && field.children.len() != 1 {
        push(
            "array-item-arity",
            format!("array field declares {} item specs, need exactly 1", field.children.len()),
        );
    }
    if field.kind == FieldKind::Array && field.children.len() == 1 && field.children[0].name != "*"
    {
        push("array-item-arity", "array item spec must be named `*`".into());
    }

    let numeric = matches!(field.kind, FieldKind::Integer | FieldKind::Number);
    if (field.min.is_some() || field.max.is_some()) && !numeric {
        push("misplaced-bounds", "numeric bounds on a non-numeric field".into());
    }
    if let (Some(min), Some(max)) = (field.min, field.max) {
        if min > max {
            push("bad-bounds", format!("min {min} exceeds max {max}"));
        }
    }

    let stringy = field.kind == FieldKind::String;
    if (field.min_length.is_some() || field.max_length.is_some()) && !stringy {
        push(
            "misplaced-length-bounds",
            "length bounds on a non-string field".into(),
        );
    }
    if let (Some(lo), Some(hi)) = (field.min_length, field.max_length) {
        if lo > hi {
            push("bad-length-bounds", format!("min_length {lo} exceeds max_length {hi}"));
        }
    }

    match (&field.pattern, field.kind) {
        (Some(p), FieldKind::String) => {
            if let Err(e) = Pattern::compile(p) {
                push("bad-pattern", format!("pattern does not compile: {e}"));
            }
        }
        (Some(_), _) => push("misplaced-pattern", "pattern on a non-string field".into()),
        (None, _) => {}
    }

    if !field.children.is_empty() {
        check_fields(&field.children, &field.path, name_ok, findings);
    }
}

// ---------------------------------------------------------------------------
// Pack IO
// ---------------------------------------------------------------------------

/// Parse and integrity-check a contract pack from raw bytes. Contracts come
/// back in document order; every one passes [`check_contract`].
pub fn load_contract_pack(source: &[u8]) -> Result<Vec<ToolContract>, ContractError> {
    let pack = parse_pack(source)?;
    for contract in &pack.tools {
        let findings = check_contract(contract);
        if !findings.is_empty() {
            return Err(ContractError::Integrity {
                contract: contract.name.clone(),
                findings,
            });
        }
    }
    Ok(pack.tools)
}

fn parse_pack(source: &[u8]) -> Result<ContractPack, ContractError> {
    let pack: ContractPack = serde_json::from_slice(source).map_err(|e| {
        let (line, column) = (e.line(), e.column());
        ContractError::Parse {
            offset: byte_offset(source, line, column),
            line,
            column,
            message: e.to_string(),
        }
    })?;
    if pack.version != CONTRACT_PACK_VERSION {
        return Err(ContractError::UnsupportedVersion(pack.version));
    }
    Ok(pack)
}

fn byte_offset(source: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut seen_lines = 1;
    let mut offset = 0;
    for (i, b) in source.iter().enumerate() {
        if seen_lines == line {
            offset = i;
            break;
        }
        if *b == b'\n' {
            seen_lines += 1;
            offset = i + 1;
        }
    }
    offset + column.saturating_sub(1)
}

/// Serialize a pack to its on-disk form: pretty-printed, tool order kept.
pub fn pack_to_string(pack: &ContractPack) -> String {
    let mut out = serde_json::to_string_pretty(pack).expect("pack serialization");
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::standard::standard_contract_pack;
    use serde_json::json;

    fn minimal_contract() -> ToolContract {
        ToolContract {
            name: "probe".into(),
            description: "A probe tool.".into(),
            fields: vec![FieldSpec {
                name: "q".into(),
                path: "$.q".into(),
                kind: FieldKind::String,
                required: true,
                enum_members: None,
                min: None,
                max: None,
                pattern: None,
                min_length: Some(1),
                max_length: None,
                children: Vec::new(),
                description: "query text".into(),
            }],
            conditional_rules: Vec::new(),
            examples: vec![ContractExample {
                args: json!({"q": "hello"}),
                note: "simple".into(),
            }],
        }
    }

    #[test]
    fn well_formed_contract_has_no_findings() {
        assert!(check_contract(&minimal_contract()).is_empty());
    }

    #[test]
    fn duplicate_field_is_found() {
        let mut c = minimal_contract();
        c.fields.push(c.fields[0].clone());
        let findings = check_contract(&c);
        assert!(findings.iter().any(|f| f.rule == "duplicate-field"));
    }

    #[test]
    fn degenerate_enum_is_found() {
        let mut c = minimal_contract();
        c.fields[0].kind = FieldKind::Enum;
        c.fields[0].min_length = None;
        c.fields[0].enum_members = Some(vec!["only".into(), "only".into()]);
        c.examples[0].args = json!({"q": "only"});
        let findings = check_contract(&c);
        assert!(findings.iter().any(|f| f.rule == "degenerate-enum"));
    }

    #[test]
    fn dangling_rule_path_is_found() {
        let mut c = minimal_contract();
        c.conditional_rules.push(ConditionalRule {
            if_path: "$.missing".into(),
            if_equals: json!("x"),
            then_required: vec!["$.q".into()],
        });
        let findings = check_contract(&c);
        assert!(findings.iter().any(|f| f.rule == "dangling-rule-path"));
    }

    #[test]
    fn invalid_example_is_found() {
        let mut c = minimal_contract();
        c.examples[0].args = json!({});
        let findings = check_contract(&c);
        assert!(findings.iter().any(|f| f.rule == "no-valid-example"));
    }

    #[test]
    fn canonical_json_sorts_keys_and_strips_whitespace() {
        let v = json!({"b": 1, "a": {"z": [1, 2], "y": "s"}});
        assert_eq!(canonical_json(&v), r#"{"a":{"y":"s","z":[1,2]},"b":1}"#);
    }

    #[test]
    fn hash_invariant_under_key_order_and_whitespace() {
        let a = r#"{"version":1,"tools":[{"name":"probe","description":"A probe tool.","fields":[{"name":"q","path":"$.q","kind":"string","required":true,"min_length":1,"description":"query text"}],"examples":[{"args":{"q":"hello"},"note":"simple"}]}]}"#;
        let b = "{\n  \"tools\": [ {\"examples\":[{\"note\":\"simple\",\"args\":{\"q\":\"hello\"}}],\n    \"description\": \"A probe tool.\",\n    \"fields\": [ {\"description\":\"query text\",\"min_length\":1,\"required\":true,\"kind\":\"string\",\"path\":\"$.q\",\"name\":\"q\"} ],\n    \"name\": \"probe\" } ],\n  \"version\": 1\n}";
        let ca = load_contract_pack(a.as_bytes()).unwrap();
        let cb = load_contract_pack(b.as_bytes()).unwrap();
        assert_eq!(canonical_hash(&ca[0]), canonical_hash(&cb[0]));
    }

    #[test]
    fn differing_enum_member_changes_hash() {
        let mut a = minimal_contract();
        a.fields[0].kind = FieldKind::Enum;
        a.fields[0].min_length = None;
        a.fields[0].enum_members = Some(vec!["p95_latency".into(), "error_rate".into()]);
        a.examples[0].args = json!({"q": "error_rate"});
        let mut b = a.clone();
        b.fields[0].enum_members = Some(vec!["p95_latency".into(), "error_ratio".into()]);
        assert_ne!(canonical_hash(&a), canonical_hash(&b));
    }

    #[test]
    fn parse_error_reports_byte_offset() {
        let bad = b"{\"version\": 1, \"tools\": [oops]}";
        match load_contract_pack(bad) {
            Err(ContractError::Parse { offset, .. }) => assert_eq!(offset, 25),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_tool_list_loads() {
        let contracts = load_contract_pack(br#"{"version": 1, "tools": []}"#).unwrap();
        assert!(contracts.is_empty());
    }

    #[test]
    fn integrity_error_names_the_contract() {
        let pack = standard_contract_pack();
        let mut value = serde_json::to_value(&pack).unwrap();
        // Drop the required metric_key from get_metric's worked example.
        let tools = value["tools"].as_array_mut().unwrap();
        let get_metric = tools
            .iter_mut()
            .find(|t| t["name"] == "get_metric")
            .unwrap();
        get_metric["examples"][0]["args"]
            .as_object_mut()
            .unwrap()
            .remove("metric_key");
        let bytes = serde_json::to_vec(&value).unwrap();
        match load_contract_pack(&bytes) {
            Err(ContractError::Integrity { contract, findings }) => {
                assert_eq!(contract, "get_metric");
                assert!(findings.iter().any(|f| f.rule == "no-valid-example"));
            }
            other => panic!("expected integrity error, got {other:?}"),
        }
    }

    #[test]
    fn round_trip_is_canonically_stable() {
        let pack = standard_contract_pack();
        let text = pack_to_string(&pack);
        let reloaded = load_contract_pack(text.as_bytes()).unwrap();
        let reloaded_pack = ContractPack {
            version: CONTRACT_PACK_VERSION,
            tools: reloaded,
        };
        assert_eq!(
            canonical_json(&serde_json::to_value(&pack).unwrap()),
            canonical_json(&serde_json::to_value(&reloaded_pack).unwrap())
        );
    }
}
