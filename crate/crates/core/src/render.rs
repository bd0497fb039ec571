//! Condition-specific tool representations from one canonical contract.
//!
//! Condition A gets prose built from fixed sentence templates; conditions B
//! and C share one JSON Schema rendering. Because the prose templates carry
//! machine-recognizable markers, both representations decompose into the
//! same constraint atoms, which is how information equivalence is enforced
//! rather than assumed.
//!
//! Template conventions the parity extractor relies on: one bullet line per
//! field, constraint sentences in fixed order after the free description,
//! and field descriptions that never open a sentence with a constraint
//! marker phrase ("Allowed values:", "Must be", "Must match pattern",
//! "Length must be").

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::contract::{
    canonical_hash, canonical_json, format_number, number_value, ConditionalRule, FieldKind,
    FieldSpec, ToolContract,
};
use crate::taxonomy::Condition;
use crate::tokenize::Tokenizer;

/// One rendered tool representation R_κ(u).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedSpec {
    pub condition: Condition,
    pub tool_name: String,
    pub body: String,
    /// Digest of the contract this was rendered from.
    pub source_hash: String,
}

/// A single unit of interface information: (field path, attribute, value).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Atom {
    pub path: String,
    pub attribute: String,
    pub value: String,
}

/// Atom-level diff between the prose and schema renderings of one tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityReport {
    pub tool_name: String,
    /// Atoms the schema carries but the prose does not.
    pub missing_in_prose: Vec<Atom>,
    /// Atoms the prose carries but the schema does not.
    pub missing_in_schema: Vec<Atom>,
}

impl ParityReport {
    pub fn is_empty(&self) -> bool {
        self.missing_in_prose.is_empty() && self.missing_in_schema.is_empty()
    }
}

/// The rendered toolset block plus its size accounting for overhead O.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolsetText {
    pub condition: Condition,
    pub text: String,
    pub char_count: u64,
    pub token_count: u64,
    pub tokenizer: String,
}

/// Instruction header shared byte-identically by all conditions; only the
/// per-tool spec bodies below it differ.
pub const TOOLSET_HEADER: &str = "You are a diagnostic agent working in a deterministic incident sandbox.\n\
Each turn, reply with exactly one JSON object and nothing else:\n\
  {\"tool\": \"<tool name>\", \"args\": { ... }}  to call a tool\n\
  {\"final_answer\": <value>}  to finish the task\n\
Invalid calls consume a step and return an error message.\n\
Available tools:";

// ---------------------------------------------------------------------------
// Prose rendering (condition A)
// ---------------------------------------------------------------------------

pub fn render_prose(contract: &ToolContract) -> RenderedSpec {
    let mut lines = Vec::new();
    lines.push(format!("Tool: {}", contract.name));
    lines.push(contract.description.clone());
    if contract.fields.is_empty() {
        lines.push("Arguments: none.".into());
    } else {
        lines.push("Arguments:".into());
        for field in &contract.fields {
            prose_field_lines(field, 0, &mut lines);
        }
    }
    for rule in &contract.conditional_rules {
        lines.push(prose_rule_line(rule));
    }
    if let Some(example) = contract.examples.first() {
        lines.push(format!("Example: {}", canonical_json(&example.args)));
    }
    RenderedSpec {
        condition: Condition::A,
        tool_name: contract.name.clone(),
        body: lines.join("\n"),
        source_hash: canonical_hash(contract),
    }
}

fn prose_field_lines(field: &FieldSpec, depth: usize, lines: &mut Vec<String>) {
    let mut line = String::new();
    for _ in 0..depth {
        line.push_str("  ");
    }
    let display = display_name(&field.path);
    if field.name == "*" {
        line.push_str(&format!("- `{display}` ({})", field.kind.type_word()));
    } else {
        let presence = if field.required { "required" } else { "optional" };
        line.push_str(&format!(
            "- `{display}` ({}, {presence})",
            field.kind.type_word()
        ));
    }
    line.push('.');
    if !field.description.is_empty() {
        line.push_str(&format!(" {}.", field.description));
    }
    if let Some(members) = &field.enum_members {
        let quoted: Vec<String> = members.iter().map(|m| json_str(m)).collect();
        line.push_str(&format!(" Allowed values: {}.", quoted.join(", ")));
    }
    if let Some(min) = field.min {
        line.push_str(&format!(" Must be >= {}.", format_number(min)));
    }
    if let Some(max) = field.max {
        line.push_str(&format!(" Must be <= {}.", format_number(max)));
    }
    if let Some(pattern) = &field.pattern {
        line.push_str(&format!(" Must match pattern `{pattern}`."));
    }
    if let Some(lo) = field.min_length {
        line.push_str(&format!(" Length must be >= {lo}."));
    }
    if let Some(hi) = field.max_length {
        line.push_str(&format!(" Length must be <= {hi}."));
    }
    lines.push(line);
    for child in &field.children {
        prose_field_lines(child, depth + 1, lines);
    }
}

fn prose_rule_line(rule: &ConditionalRule) -> String {
    let then_names: Vec<String> = rule
        .then_required
        .iter()
        .map(|p| format!("`{}`", display_name(p)))
        .collect();
    format!(
        "Rule: when `{}` is {}, also provide {}.",
        display_name(&rule.if_path),
        canonical_json(&rule.if_equals),
        then_names.join(", ")
    )
}

/// `$.window.minutes` -> `window.minutes`; `$.tags[*]` -> `tags[]`.
fn display_name(path: &str) -> String {
    path.strip_prefix("$.").unwrap_or(path).replace("[*]", "[]")
}

/// Inverse of [`display_name`].
fn prose_path(display: &str) -> String {
    format!("$.{}", display.replace("[]", "[*]"))
}

// ---------------------------------------------------------------------------
// Schema rendering (conditions B and C)
// ---------------------------------------------------------------------------

/// Render the JSON Schema form. B and C share this body byte-for-byte; they
/// differ only in validation feedback at run time.
pub fn render_schema(contract: &ToolContract, condition: Condition) -> RenderedSpec {
    debug_assert!(condition != Condition::A, "prose condition wants render_prose");
    let doc = json!({
        "name": contract.name,
        "description": contract.description,
        "input_schema": schema_value(contract),
    });
    RenderedSpec {
        condition,
        tool_name: contract.name.clone(),
        body: serde_json::to_string_pretty(&doc).expect("schema serialization"),
        source_hash: canonical_hash(contract),
    }
}

/// Dispatch on condition: A → prose, B/C → schema.
pub fn render_for(contract: &ToolContract, condition: Condition) -> RenderedSpec {
    match condition {
        Condition::A => render_prose(contract),
        Condition::B | Condition::C => render_schema(contract, condition),
    }
}

fn schema_value(contract: &ToolContract) -> Value {
    let mut schema = object_schema(&contract.fields);
    let map = schema.as_object_mut().expect("object schema");
    match contract.conditional_rules.len() {
        0 => {}
        1 => {
            let clause = rule_clause(&contract.conditional_rules[0]);
            map.insert("if".into(), clause["if"].clone());
            map.insert("then".into(), clause["then"].clone());
        }
        _ => {
            let clauses: Vec<Value> =
                contract.conditional_rules.iter().map(rule_clause).collect();
            map.insert("allOf".into(), Value::Array(clauses));
        }
    }
    if let Some(example) = contract.examples.first() {
        map.insert("examples".into(), json!([example.args]));
    }
    schema
}

fn object_schema(fields: &[FieldSpec]) -> Value {
    let mut map = Map::new();
    map.insert("type".into(), json!("object"));
    if !fields.is_empty() {
        let mut props = Map::new();
        for field in fields {
            props.insert(field.name.clone(), field_schema(field));
        }
        map.insert("properties".into(), Value::Object(props));
        let required: Vec<Value> = fields
            .iter()
            .filter(|f| f.required)
            .map(|f| json!(f.name))
            .collect();
        if !required.is_empty() {
            map.insert("required".into(), Value::Array(required));
        }
    }
    Value::Object(map)
}

fn field_schema(field: &FieldSpec) -> Value {
    let mut node = match field.kind {
        FieldKind::Object => object_schema(&field.children),
        FieldKind::Array => {
            let items = field
                .children
                .first()
                .map(field_schema)
                .unwrap_or_else(|| json!({}));
            json!({"type": "array", "items": items})
        }
        kind => json!({"type": kind.type_word()}),
    };
    let map = node.as_object_mut().expect("schema node");
    if !field.description.is_empty() {
        map.insert("description".into(), json!(field.description));
    }
    if let Some(members) = &field.enum_members {
        map.insert("enum".into(), json!(members));
    }
    if let Some(min) = field.min {
        map.insert("minimum".into(), number_value(min));
    }
    if let Some(max) = field.max {
        map.insert("maximum".into(), number_value(max));
    }
    if let Some(pattern) = &field.pattern {
        map.insert("pattern".into(), json!(pattern));
    }
    if let Some(lo) = field.min_length {
        map.insert("minLength".into(), json!(lo));
    }
    if let Some(hi) = field.max_length {
        map.insert("maxLength".into(), json!(hi));
    }
    node
}

fn rule_clause(rule: &ConditionalRule) -> Value {
    json!({
        "if": if_tree(&rule.if_path, &rule.if_equals),
        "then": then_tree(&rule.then_required),
    })
}

fn if_tree(path: &str, equals: &Value) -> Value {
    let segments: Vec<&str> = path.trim_start_matches("$.").split('.').collect();
    let mut node = json!({"const": equals});
    for seg in segments.iter().rev() {
        node = json!({"properties": {*seg: node}, "required": [*seg]});
    }
    node
}

/// `then` requires every prefix of every path, so "$.a.b" matches the
/// validator's resolve-the-whole-path semantics.
fn then_tree(paths: &[String]) -> Value {
    #[derive(Default)]
    struct Node {
        children: std::collections::BTreeMap<String, Node>,
    }
    fn emit(node: &Node) -> Value {
        let required: Vec<Value> = node.children.keys().map(|k| json!(k)).collect();
        let mut map = Map::new();
        map.insert("required".into(), Value::Array(required));
        let nested: Map<String, Value> = node
            .children
            .iter()
            .filter(|(_, child)| !child.children.is_empty())
            .map(|(name, child)| (name.clone(), emit(child)))
            .collect();
        if !nested.is_empty() {
            map.insert("properties".into(), Value::Object(nested));
        }
        Value::Object(map)
    }
    let mut root = Node::default();
    for path in paths {
        let mut node = &mut root;
        for seg in path.trim_start_matches("$.").split('.') {
            node = node.children.entry(seg.to_string()).or_default();
        }
    }
    emit(&root)
}

// ---------------------------------------------------------------------------
// Toolset assembly
// ---------------------------------------------------------------------------

/// Concatenate per-tool specs in pack order under the fixed header and
/// account for prompt size.
pub fn render_toolset(
    contracts: &[ToolContract],
    condition: Condition,
    tokenizer: &dyn Tokenizer,
) -> ToolsetText {
    let mut text = String::from(TOOLSET_HEADER);
    for contract in contracts {
        text.push_str("\n---\n");
        text.push_str(&render_for(contract, condition).body);
    }
    ToolsetText {
        condition,
        char_count: text.chars().count() as u64,
        token_count: tokenizer.count(&text),
        tokenizer: tokenizer.name().to_string(),
        text,
    }
}

// ---------------------------------------------------------------------------
// Constraint-atom extraction and parity
// ---------------------------------------------------------------------------

/// Decompose a prose body into constraint atoms by its template markers.
pub fn extract_prose_atoms(body: &str) -> BTreeSet<Atom> {
    let mut atoms = BTreeSet::new();
    for line in body.lines() {
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix("- `") {
            extract_prose_bullet(rest, &mut atoms);
        } else if let Some(rest) = trimmed.strip_prefix("Rule: when `") {
            extract_prose_rule(rest, &mut atoms);
        }
    }
    atoms
}

fn extract_prose_bullet(rest: &str, atoms: &mut BTreeSet<Atom>) {
    let Some((display, tail)) = rest.split_once('`') else {
        return;
    };
    let path = prose_path(display);
    let Some(tail) = tail.strip_prefix(" (") else {
        return;
    };
    let Some((head, sentences)) = tail.split_once(").") else {
        return;
    };
    match head.split_once(", ") {
        Some((type_word, presence)) => {
            atoms.insert(atom(&path, "type", type_word));
            atoms.insert(atom(&path, "presence", presence));
        }
        None => {
            atoms.insert(atom(&path, "type", head));
        }
    }
    if let Some(at) = sentences.find("Allowed values: ") {
        let fragment = sentences[at + "Allowed values: ".len()..]
            .trim_end()
            .trim_end_matches('.');
        if let Ok(members) = serde_json::from_str::<Vec<String>>(&format!("[{fragment}]")) {
            atoms.insert(atom(&path, "enum", &canonical_json(&json!(members))));
        }
    }
    if let Some(v) = marker_number(sentences, "Must be >= ") {
        atoms.insert(atom(&path, "minimum", &v));
    }
    if let Some(v) = marker_number(sentences, "Must be <= ") {
        atoms.insert(atom(&path, "maximum", &v));
    }
    if let Some(at) = sentences.find("Must match pattern `") {
        let fragment = &sentences[at + "Must match pattern `".len()..];
        if let Some((pattern, _)) = fragment.split_once('`') {
            atoms.insert(atom(&path, "pattern", pattern));
        }
    }
    if let Some(v) = marker_number(sentences, "Length must be >= ") {
        atoms.insert(atom(&path, "min-length", &v));
    }
    if let Some(v) = marker_number(sentences, "Length must be <= ") {
        atoms.insert(atom(&path, "max-length", &v));
    }
}

fn extract_prose_rule(rest: &str, atoms: &mut BTreeSet<Atom>) {
    let Some((display, tail)) = rest.split_once('`') else {
        return;
    };
    let Some(tail) = tail.strip_prefix(" is ") else {
        return;
    };
    let Some((value, consumed)) = parse_value_prefix(tail) else {
        return;
    };
    let Some(tail) = tail[consumed..].strip_prefix(", also provide ") else {
        return;
    };
    let mut then_paths: Vec<String> = tail
        .trim_end()
        .trim_end_matches('.')
        .split(", ")
        .map(|name| prose_path(name.trim_matches('`')))
        .collect();
    then_paths.sort();
    atoms.insert(conditional_atom(&prose_path(display), &value, &then_paths));
}

/// Decompose a schema body (the full tool document) into constraint atoms.
pub fn extract_schema_atoms(body: &str) -> BTreeSet<Atom> {
    let mut atoms = BTreeSet::new();
    let Ok(doc) = serde_json::from_str::<Value>(body) else {
        return atoms;
    };
    let Some(schema) = doc.get("input_schema") else {
        return atoms;
    };
    walk_object_schema(schema, "$", &mut atoms);
    let clauses: Vec<&Value> = match schema.get("allOf").and_then(Value::as_array) {
        Some(entries) => entries.iter().collect(),
        None if schema.get("if").is_some() => vec![schema],
        None => Vec::new(),
    };
    for clause in clauses {
        let (Some(if_node), Some(then_node)) = (clause.get("if"), clause.get("then")) else {
            continue;
        };
        let Some((path, value)) = parse_if_tree(if_node, "$") else {
            continue;
        };
        let mut then_paths = Vec::new();
        collect_then_paths(then_node, "$", &mut then_paths);
        then_paths.sort();
        atoms.insert(conditional_atom(&path, &value, &then_paths));
    }
    atoms
}

fn walk_object_schema(node: &Value, path: &str, atoms: &mut BTreeSet<Atom>) {
    let required: BTreeSet<&str> = node
        .get("required")
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(Value::as_str).collect())
        .unwrap_or_default();
    let Some(props) = node.get("properties").and_then(Value::as_object) else {
        return;
    };
    for (name, sub) in props {
        let child_path = format!("{path}.{name}");
        let presence = if required.contains(name.as_str()) {
            "required"
        } else {
            "optional"
        };
        atoms.insert(atom(&child_path, "presence", presence));
        walk_value_schema(sub, &child_path, atoms);
    }
}

fn walk_value_schema(node: &Value, path: &str, atoms: &mut BTreeSet<Atom>) {
    if let Some(t) = node.get("type").and_then(Value::as_str) {
        atoms.insert(atom(path, "type", t));
    }
    if let Some(members) = node.get("enum") {
        atoms.insert(atom(path, "enum", &canonical_json(members)));
    }
    if let Some(v) = node.get("minimum") {
        atoms.insert(atom(path, "minimum", &normalize_number(v)));
    }
    if let Some(v) = node.get("maximum") {
        atoms.insert(atom(path, "maximum", &normalize_number(v)));
    }
    if let Some(p) = node.get("pattern").and_then(Value::as_str) {
        atoms.insert(atom(path, "pattern", p));
    }
    if let Some(v) = node.get("minLength") {
        atoms.insert(atom(path, "min-length", &normalize_number(v)));
    }
    if let Some(v) = node.get("maxLength") {
        atoms.insert(atom(path, "max-length", &normalize_number(v)));
    }
    match node.get("type").and_then(Value::as_str) {
        Some("object") => walk_object_schema(node, path, atoms),
        Some("array") => {
            if let Some(items) = node.get("items") {
                walk_value_schema(items, &format!("{path}[*]"), atoms);
            }
        }
        _ => {}
    }
}

fn parse_if_tree(node: &Value, prefix: &str) -> Option<(String, Value)> {
    let props = node.get("properties")?.as_object()?;
    let (name, sub) = props.iter().next()?;
    let path = format!("{prefix}.{name}");
    match sub.get("const") {
        Some(v) => Some((path, v.clone())),
        None => parse_if_tree(sub, &path),
    }
}

fn collect_then_paths(node: &Value, prefix: &str, out: &mut Vec<String>) {
    let Some(required) = node.get("required").and_then(Value::as_array) else {
        return;
    };
    let props = node.get("properties").and_then(Value::as_object);
    for name in required.iter().filter_map(Value::as_str) {
        let path = format!("{prefix}.{name}");
        match props.and_then(|m| m.get(name)) {
            Some(sub) => collect_then_paths(sub, &path, out),
            None => out.push(path),
        }
    }
}

fn atom(path: &str, attribute: &str, value: &str) -> Atom {
    Atom {
        path: path.to_string(),
        attribute: attribute.to_string(),
        value: value.to_string(),
    }
}

fn conditional_atom(path: &str, equals: &Value, then_paths: &[String]) -> Atom {
    atom(
        path,
        "conditional",
        &format!("{} -> {}", canonical_json(equals), then_paths.join(",")),
    )
}

/// Parse one JSON value at the start of `s`; returns it and the byte length
/// consumed.
fn parse_value_prefix(s: &str) -> Option<(Value, usize)> {
    let mut stream = serde_json::Deserializer::from_str(s).into_iter::<Value>();
    let value = stream.next()?.ok()?;
    Some((value, stream.byte_offset()))
}

/// Numbers in template sentences abut the closing period ("Must be >= 1."),
/// so cut the fragment at the sentence boundary before parsing.
fn marker_number(text: &str, marker: &str) -> Option<String> {
    let at = text.find(marker)?;
    let rest = &text[at + marker.len()..];
    let fragment = match rest.find(". ") {
        Some(end) => &rest[..end],
        None => rest.trim_end().trim_end_matches('.'),
    };
    let value: Value = serde_json::from_str(fragment).ok()?;
    Some(normalize_number(&value))
}

fn normalize_number(v: &Value) -> String {
    match v.as_f64() {
        Some(f) => format_number(f),
        None => canonical_json(v),
    }
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization")
}

/// Diff the atom sets of independently supplied rendering texts.
pub fn parity_from_texts(tool_name: &str, prose_body: &str, schema_body: &str) -> ParityReport {
    let prose_atoms = extract_prose_atoms(prose_body);
    let schema_atoms = extract_schema_atoms(schema_body);
    ParityReport {
        tool_name: tool_name.to_string(),
        missing_in_prose: schema_atoms.difference(&prose_atoms).cloned().collect(),
        missing_in_schema: prose_atoms.difference(&schema_atoms).cloned().collect(),
    }
}

/// Render both representations of a contract and diff their atoms. Empty
/// report iff the renderings carry identical constraint information.
pub fn check_parity(contract: &ToolContract) -> ParityReport {
    let prose = render_prose(contract);
    let schema = render_schema(contract, Condition::B);
    parity_from_texts(&contract.name, &prose.body, &schema.body)
}
