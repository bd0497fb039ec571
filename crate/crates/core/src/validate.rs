//! Agent-output parsing and interface validation.
//!
//! The funnel is: raw text → first balanced JSON object → tool call or final
//! answer → contract check. Every violation carries a JSONPath, the expected
//! constraint, and the offending value; all violations are collected (never
//! fail-fast) and ordered lexicographically by path, then rule name.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::contract::{
    canonical_json, format_number, resolve_path, FieldKind, FieldSpec, ToolContract,
};
use crate::taxonomy::{Condition, Granularity, Subcategory};
use crate::textmatch::Pattern;

/// The generic failure sentence. Conditions A and B never say more than this.
pub const GENERIC_INVALID: &str = "invalid tool call";

/// A parsed tool call. `raw_text` is the agent's output byte-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    pub args: Value,
    pub raw_text: String,
}

/// A parsed final answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalAnswer {
    pub answer: Value,
    pub raw_text: String,
}

/// Why no tool call or final answer could be extracted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParseFailure {
    NoJson,
    Truncated,
    WrongShape,
}

impl ParseFailure {
    pub fn reason(self) -> &'static str {
        match self {
            ParseFailure::NoJson => "no-json",
            ParseFailure::Truncated => "truncated",
            ParseFailure::WrongShape => "wrong-shape",
        }
    }
}

/// Result of scanning one agent reply.
#[derive(Debug, Clone, PartialEq)]
pub enum ParsedOutput {
    Call(ToolCall),
    Final(FinalAnswer),
    Failure(ParseFailure),
}

/// Extract the first complete top-level JSON object from `raw`, tolerating
/// surrounding prose. An object with string `tool` and object `args` is a
/// tool call; one with `final_answer` is a final answer; any other object
/// shape fails as `wrong-shape`.
pub fn parse_agent_output(raw: &str) -> ParsedOutput {
    let bytes = raw.as_bytes();
    let mut saw_truncated = false;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'{' {
            i += 1;
            continue;
        }
        match scan_balanced(bytes, i) {
            Some(end) => {
                if let Ok(value) = serde_json::from_slice::<Value>(&bytes[i..end]) {
                    return classify_object(value, raw);
                }
                // Balanced but not JSON; keep scanning past this brace.
                i += 1;
            }
            None => {
                saw_truncated = true;
                i += 1;
            }
        }
    }
    if saw_truncated {
        ParsedOutput::Failure(ParseFailure::Truncated)
    } else {
        ParsedOutput::Failure(ParseFailure::NoJson)
    }
}

/// Find the end (exclusive) of the balanced object starting at `start`,
/// respecting string literals and escapes. None if the input ends first.
fn scan_balanced(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (off, &b) in bytes[start..].iter().enumerate() {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(start + off + 1);
                }
            }
            _ => {}
        }
    }
    None
}

fn classify_object(value: Value, raw: &str) -> ParsedOutput {
    let Some(obj) = value.as_object() else {
        return ParsedOutput::Failure(ParseFailure::WrongShape);
    };
    if let Some(tool) = obj.get("tool") {
        let (Some(name), Some(args)) = (tool.as_str(), obj.get("args")) else {
            return ParsedOutput::Failure(ParseFailure::WrongShape);
        };
        if !args.is_object() {
            return ParsedOutput::Failure(ParseFailure::WrongShape);
        }
        return ParsedOutput::Call(ToolCall {
            name: name.to_string(),
            args: args.clone(),
            raw_text: raw.to_string(),
        });
    }
    if let Some(answer) = obj.get("final_answer") {
        return ParsedOutput::Final(FinalAnswer {
            answer: answer.clone(),
            raw_text: raw.to_string(),
        });
    }
    ParsedOutput::Failure(ParseFailure::WrongShape)
}

// ---------------------------------------------------------------------------
// Violations
// ---------------------------------------------------------------------------

/// Which contract rule a violation came from. Sorted by rule *name*, so the
/// variant order here is incidental.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationRule {
    Required,
    Conditional,
    Type,
    Enum,
    Minimum,
    Maximum,
    Pattern,
    MinLength,
    MaxLength,
}

impl ViolationRule {
    pub fn name(self) -> &'static str {
        match self {
            ViolationRule::Required => "required",
            ViolationRule::Conditional => "conditional",
            ViolationRule::Type => "type",
            ViolationRule::Enum => "enum",
            ViolationRule::Minimum => "minimum",
            ViolationRule::Maximum => "maximum",
            ViolationRule::Pattern => "pattern",
            ViolationRule::MinLength => "min-length",
            ViolationRule::MaxLength => "max-length",
        }
    }

    pub fn subcategory(self) -> Subcategory {
        match self {
            ViolationRule::Required | ViolationRule::Conditional => Subcategory::MissingRequired,
            ViolationRule::Type => Subcategory::TypeMismatch,
            ViolationRule::Enum => Subcategory::EnumViolation,
            ViolationRule::Minimum
            | ViolationRule::Maximum
            | ViolationRule::Pattern
            | ViolationRule::MinLength
            | ViolationRule::MaxLength => Subcategory::ConstraintViolation,
        }
    }
}

/// One violated constraint. `found` is the offending value, or the string
/// `"missing"` for absent required fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub rule: ViolationRule,
    pub expected: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed: Option<Vec<String>>,
    pub found: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Valid,
    InterfaceInvalid,
    Unparseable,
    UnknownTool,
}

/// Full verdict for one agent output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_reason: Option<String>,
    /// Taxonomy subcategory implied by this report; None iff valid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcategory: Option<Subcategory>,
}

impl ValidationReport {
    pub fn valid(tool: &str) -> Self {
        ValidationReport {
            verdict: Verdict::Valid,
            tool: Some(tool.to_string()),
            violations: Vec::new(),
            parse_reason: None,
            subcategory: None,
        }
    }

    pub fn unparseable(failure: ParseFailure) -> Self {
        ValidationReport {
            verdict: Verdict::Unparseable,
            tool: None,
            violations: Vec::new(),
            parse_reason: Some(failure.reason().to_string()),
            subcategory: Some(Subcategory::MalformedJson),
        }
    }

    pub fn unknown_tool(name: &str) -> Self {
        ValidationReport {
            verdict: Verdict::UnknownTool,
            tool: Some(name.to_string()),
            violations: Vec::new(),
            parse_reason: None,
            subcategory: Some(Subcategory::WrongToolName),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.verdict == Verdict::Valid
    }
}

/// Validate a parsed call against the contract set: tool lookup, then the
/// full constraint walk.
pub fn validate_args(call: &ToolCall, contracts: &[ToolContract]) -> ValidationReport {
    let Some(contract) = contracts.iter().find(|c| c.name == call.name) else {
        return ValidationReport::unknown_tool(&call.name);
    };
    let violations = check_args(contract, &call.args);
    if violations.is_empty() {
        ValidationReport::valid(&call.name)
    } else {
        let subcategory = violations[0].rule.subcategory();
        ValidationReport {
            verdict: Verdict::InterfaceInvalid,
            tool: Some(call.name.clone()),
            violations,
            parse_reason: None,
            subcategory: Some(subcategory),
        }
    }
}

/// Check an args document against one contract. Returns every violation,
/// ordered by (path, rule name). A type mismatch on a node suppresses checks
/// on that node's descendants.
pub fn check_args(contract: &ToolContract, args: &Value) -> Vec<Violation> {
    let mut out = Vec::new();
    match args.as_object() {
        None => out.push(type_violation("$", "object", args)),
        Some(map) => {
            check_object_fields(&contract.fields, map, "$", &mut out);
            for rule in &contract.conditional_rules {
                if resolve_path(args, &rule.if_path) == Some(&rule.if_equals) {
                    for required in &rule.then_required {
                        if resolve_path(args, required).is_none() {
                            out.push(Violation {
                                path: required.clone(),
                                rule: ViolationRule::Conditional,
                                expected: format!(
                                    "required when {} == {}",
                                    rule.if_path,
                                    canonical_json(&rule.if_equals)
                                ),
                                allowed: None,
                                found: Value::String("missing".into()),
                            });
                        }
                    }
                }
            }
        }
    }
    out.sort_by(|a, b| a.path.cmp(&b.path).then_with(|| a.rule.name().cmp(b.rule.name())));
    out
}

fn check_object_fields(
    fields: &[FieldSpec],
    obj: &Map<String, Value>,
    parent_path: &str,
    out: &mut Vec<Violation>,
) {
    for field in fields {
        let path = format!("{parent_path}.{}", field.name);
        match obj.get(&field.name) {
            None => {
                if field.required {
                    out.push(Violation {
                        path,
                        rule: ViolationRule::Required,
                        expected: "required".into(),
                        allowed: None,
                        found: Value::String("missing".into()),
                    });
                }
            }
            Some(value) => check_value(field, value, &path, out),
        }
    }
}

fn check_value(field: &FieldSpec, value: &Value, path: &str, out: &mut Vec<Violation>) {
    match field.kind {
        FieldKind::String => {
            let Some(s) = value.as_str() else {
                out.push(type_violation(path, "string", value));
                return;
            };
            if let Some(p) = &field.pattern {
                if let Ok(pattern) = Pattern::compile(p) {
                    if !pattern.is_match(s) {
                        out.push(Violation {
                            path: path.into(),
                            rule: ViolationRule::Pattern,
                            expected: format!("string matching {p}"),
                            allowed: None,
                            found: value.clone(),
                        });
                    }
                }
            }
            let len = s.chars().count() as u64;
            if let Some(lo) = field.min_length {
                if len < lo {
                    out.push(length_violation(path, ViolationRule::MinLength, ">=", lo, value));
                }
            }
            if let Some(hi) = field.max_length {
                if len > hi {
                    out.push(length_violation(path, ViolationRule::MaxLength, "<=", hi, value));
                }
            }
        }
        FieldKind::Enum => {
            let Some(s) = value.as_str() else {
                out.push(type_violation(path, "string", value));
                return;
            };
            let members = field.enum_members.as_deref().unwrap_or(&[]);
            if !members.iter().any(|m| m == s) {
                out.push(Violation {
                    path: path.into(),
                    rule: ViolationRule::Enum,
                    expected: "enum".into(),
                    allowed: Some(members.to_vec()),
                    found: value.clone(),
                });
            }
        }
        FieldKind::Integer => {
            if !is_integer(value) {
                out.push(type_violation(path, "integer", value));
                return;
            }
            check_bounds(field, value, path, "integer", out);
        }
        FieldKind::Number => {
            if !value.is_number() {
                out.push(type_violation(path, "number", value));
                return;
            }
            check_bounds(field, value, path, "number", out);
        }
        FieldKind::Boolean => {
            if !value.is_boolean() {
                out.push(type_violation(path, "boolean", value));
            }
        }
        FieldKind::Object => {
            let Some(map) = value.as_object() else {
                out.push(type_violation(path, "object", value));
                return;
            };
            check_object_fields(&field.children, map, path, out);
        }
        FieldKind::Array => {
            let Some(items) = value.as_array() else {
                out.push(type_violation(path, "array", value));
                return;
            };
            if let Some(item_spec) = field.children.first() {
                for (i, item) in items.iter().enumerate() {
                    check_value(item_spec, item, &format!("{path}[{i}]"), out);
                }
            }
        }
    }
}

/// Mathematical-integer semantics: 3 and 3.0 both pass, 3.5 does not.
fn is_integer(value: &Value) -> bool {
    if value.is_i64() || value.is_u64() {
        return true;
    }
    value.as_f64().is_some_and(|f| f.fract() == 0.0)
}

fn check_bounds(field: &FieldSpec, value: &Value, path: &str, word: &str, out: &mut Vec<Violation>) {
    let n = value.as_f64().expect("numeric value");
    if let Some(min) = field.min {
        if n < min {
            out.push(Violation {
                path: path.into(),
                rule: ViolationRule::Minimum,
                expected: format!("{word} >= {}", format_number(min)),
                allowed: None,
                found: value.clone(),
            });
        }
    }
    if let Some(max) = field.max {
        if n > max {
            out.push(Violation {
                path: path.into(),
                rule: ViolationRule::Maximum,
                expected: format!("{word} <= {}", format_number(max)),
                allowed: None,
                found: value.clone(),
            });
        }
    }
}

fn type_violation(path: &str, expected: &str, found: &Value) -> Violation {
    Violation {
        path: path.into(),
        rule: ViolationRule::Type,
        expected: expected.into(),
        allowed: None,
        found: found.clone(),
    }
}

fn length_violation(
    path: &str,
    rule: ViolationRule,
    cmp: &str,
    bound: u64,
    found: &Value,
) -> Violation {
    Violation {
        path: path.into(),
        rule,
        expected: format!("length {cmp} {bound}"),
        allowed: None,
        found: found.clone(),
    }
}

// ---------------------------------------------------------------------------
// Diagnostics rendering
// ---------------------------------------------------------------------------

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("diagnostics requested for a valid report")]
    ReportIsValid,
}

/// Render the feedback text an agent sees after an invalid output.
///
/// Conditions A and B always return the fixed generic sentence. Condition C
/// renders per `granularity`: C1 the generic sentence, C2 adds violation
/// paths and expected categories, C3 adds allowed values, found values, and
/// one corrective hint per violation. The violation set underneath is the
/// same at every granularity.
pub fn format_diagnostics(
    report: &ValidationReport,
    condition: Condition,
    granularity: Granularity,
) -> Result<String, DiagnosticsError> {
    if report.is_valid() {
        return Err(DiagnosticsError::ReportIsValid);
    }
    let effective = match condition {
        Condition::A | Condition::B => Granularity::C1,
        Condition::C => granularity,
    };
    Ok(match effective {
        Granularity::C1 => GENERIC_INVALID.to_string(),
        Granularity::C2 => format!("{GENERIC_INVALID}\n{}", diagnostic_json(report, false)),
        Granularity::C3 => {
            let mut text = format!("{GENERIC_INVALID}\n{}", diagnostic_json(report, true));
            for hint in hints(report) {
                text.push('\n');
                text.push_str(&hint);
            }
            text
        }
    })
}

/// The structured error body. Key order is fixed (error_type, tool,
/// violations; path, expected, allowed, found) rather than alphabetical.
fn diagnostic_json(report: &ValidationReport, full: bool) -> String {
    match report.verdict {
        Verdict::InterfaceInvalid => {
            let tool = report.tool.as_deref().unwrap_or("");
            let items: Vec<String> = report
                .violations
                .iter()
                .map(|v| violation_json(v, full))
                .collect();
            format!(
                "{{\"error_type\": \"SCHEMA_VALIDATION\", \"tool\": {}, \"violations\": [{}]}}",
                json_str(tool),
                items.join(", ")
            )
        }
        Verdict::UnknownTool => format!(
            "{{\"error_type\": \"UNKNOWN_TOOL\", \"tool\": {}}}",
            json_str(report.tool.as_deref().unwrap_or(""))
        ),
        Verdict::Unparseable => format!(
            "{{\"error_type\": \"MALFORMED_OUTPUT\", \"reason\": {}}}",
            json_str(report.parse_reason.as_deref().unwrap_or(""))
        ),
        Verdict::Valid => unreachable!("checked by caller"),
    }
}

fn violation_json(v: &Violation, full: bool) -> String {
    let mut parts = vec![
        format!("\"path\": {}", json_str(&v.path)),
        format!("\"expected\": {}", json_str(&v.expected)),
    ];
    if full {
        if let Some(allowed) = &v.allowed {
            let members: Vec<String> = allowed.iter().map(|m| json_str(m)).collect();
            parts.push(format!("\"allowed\": [{}]", members.join(",")));
        }
        parts.push(format!("\"found\": {}", canonical_json(&v.found)));
    }
    format!("{{{}}}", parts.join(", "))
}

/// One corrective hint per violation: "set <path> to one of <allowed>" for
/// enums, "set <path> to satisfy <bound>" otherwise.
fn hints(report: &ValidationReport) -> Vec<String> {
    match report.verdict {
        Verdict::InterfaceInvalid => report
            .violations
            .iter()
            .map(|v| match &v.allowed {
                Some(allowed) => {
                    let members: Vec<String> = allowed.iter().map(|m| json_str(m)).collect();
                    format!("set {} to one of [{}]", v.path, members.join(","))
                }
                None => format!("set {} to satisfy {}", v.path, v.expected),
            })
            .collect(),
        Verdict::UnknownTool => vec!["set tool to one of the declared tool names".into()],
        Verdict::Unparseable => vec![
            "reply with a single JSON object: {\"tool\": <name>, \"args\": <object>} or {\"final_answer\": <value>}"
                .into(),
        ],
        Verdict::Valid => Vec::new(),
    }
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::standard::standard_contracts;
    use serde_json::json;

    fn parse_call(raw: &str) -> ToolCall {
        match parse_agent_output(raw) {
            ParsedOutput::Call(c) => c,
            other => panic!("expected call, got {other:?}"),
        }
    }

    #[test]
    fn bare_call_parses() {
        let c = parse_call(r#"{"tool":"get_metric","args":{"metric_key":"p95_latency"}}"#);
        assert_eq!(c.name, "get_metric");
        assert_eq!(c.args["metric_key"], "p95_latency");
    }

    #[test]
    fn call_embedded_in_prose_parses() {
        let raw = r#"I think {"tool":"read_file","args":{"path":"a.yaml"}} is right"#;
        let c = parse_call(raw);
        assert_eq!(c.name, "read_file");
        assert_eq!(c.raw_text, raw);
    }

    #[test]
    fn braces_inside_strings_do_not_confuse_the_scanner() {
        let c = parse_call(r#"{"tool":"grep_repo","args":{"pattern":"} \" {"}}"#);
        assert_eq!(c.args["pattern"], "} \" {");
    }

    #[test]
    fn truncated_object_is_truncated() {
        assert_eq!(
            parse_agent_output(r#"{"tool": "read_file", "args": {"#),
            ParsedOutput::Failure(ParseFailure::Truncated)
        );
    }

    #[test]
    fn empty_and_braceless_text_is_no_json() {
        assert_eq!(parse_agent_output(""), ParsedOutput::Failure(ParseFailure::NoJson));
        assert_eq!(
            parse_agent_output("let me think about this"),
            ParsedOutput::Failure(ParseFailure::NoJson)
        );
    }

    #[test]
    fn non_call_object_is_wrong_shape() {
        assert_eq!(
            parse_agent_output(r#"{"action": "read"}"#),
            ParsedOutput::Failure(ParseFailure::WrongShape)
        );
        assert_eq!(
            parse_agent_output(r#"{"tool": "read_file"}"#),
            ParsedOutput::Failure(ParseFailure::WrongShape)
        );
        assert_eq!(
            parse_agent_output(r#"{"tool": 3, "args": {}}"#),
            ParsedOutput::Failure(ParseFailure::WrongShape)
        );
    }

    #[test]
    fn scanner_skips_balanced_non_json() {
        match parse_agent_output(r#"{oops} then {"final_answer": 3}"#) {
            ParsedOutput::Final(f) => assert_eq!(f.answer, json!(3)),
            other => panic!("expected final answer, got {other:?}"),
        }
    }

    #[test]
    fn final_answer_parses() {
        match parse_agent_output(r#"{"final_answer": {"root_cause": "disk_full"}}"#) {
            ParsedOutput::Final(f) => assert_eq!(f.answer["root_cause"], "disk_full"),
            other => panic!("expected final answer, got {other:?}"),
        }
    }

    fn get_metric_report(args: Value) -> ValidationReport {
        let contracts = standard_contracts();
        let call = ToolCall {
            name: "get_metric".into(),
            args,
            raw_text: String::new(),
        };
        validate_args(&call, &contracts)
    }

    #[test]
    fn reference_error_example_yields_both_violations_in_order() {
        let report = get_metric_report(
            json!({"metric_key": "latency95", "service": "api", "window": {"minutes": 0}}),
        );
        assert_eq!(report.verdict, Verdict::InterfaceInvalid);
        assert_eq!(report.violations.len(), 2);
        let first = &report.violations[0];
        assert_eq!(first.path, "$.metric_key");
        assert_eq!(first.expected, "enum");
        assert_eq!(
            first.allowed.as_deref(),
            Some(&["p95_latency".to_string(), "error_rate".to_string()][..])
        );
        assert_eq!(first.found, json!("latency95"));
        let second = &report.violations[1];
        assert_eq!(second.path, "$.window.minutes");
        assert_eq!(second.expected, "integer >= 1");
        assert_eq!(second.found, json!(0));
        assert_eq!(report.subcategory, Some(Subcategory::EnumViolation));
    }

    #[test]
    fn example_args_are_valid() {
        let report = get_metric_report(
            json!({"metric_key": "p95_latency", "service": "checkout", "window": {"minutes": 30}}),
        );
        assert!(report.is_valid());
        assert!(report.violations.is_empty());
    }

    #[test]
    fn unknown_tool_is_reported() {
        let contracts = standard_contracts();
        let call = ToolCall {
            name: "fetch_metric".into(),
            args: json!({}),
            raw_text: String::new(),
        };
        let report = validate_args(&call, &contracts);
        assert_eq!(report.verdict, Verdict::UnknownTool);
        assert_eq!(report.subcategory, Some(Subcategory::WrongToolName));
    }

    #[test]
    fn missing_required_fields_are_all_reported() {
        let report = get_metric_report(json!({}));
        let paths: Vec<&str> = report.violations.iter().map(|v| v.path.as_str()).collect();
        assert_eq!(paths, ["$.metric_key", "$.service", "$.window"]);
        assert!(report
            .violations
            .iter()
            .all(|v| v.rule == ViolationRule::Required && v.found == json!("missing")));
        assert_eq!(report.subcategory, Some(Subcategory::MissingRequired));
    }

    #[test]
    fn mistyped_parent_suppresses_child_checks() {
        let report = get_metric_report(
            json!({"metric_key": "p95_latency", "service": "api", "window": 5}),
        );
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].path, "$.window");
        assert_eq!(report.violations[0].rule, ViolationRule::Type);
        assert_eq!(report.violations[0].expected, "object");
    }

    #[test]
    fn integral_float_passes_integer_check() {
        let report = get_metric_report(
            json!({"metric_key": "p95_latency", "service": "api", "window": {"minutes": 30.0}}),
        );
        assert!(report.is_valid());
        let report = get_metric_report(
            json!({"metric_key": "p95_latency", "service": "api", "window": {"minutes": 30.5}}),
        );
        assert_eq!(report.violations[0].rule, ViolationRule::Type);
    }

    #[test]
    fn conditional_rule_fires_only_when_triggered() {
        let contracts = standard_contracts();
        let run_tests = contracts.iter().find(|c| c.name == "run_tests").unwrap();
        assert!(check_args(run_tests, &json!({"scope": "all"})).is_empty());
        assert!(check_args(run_tests, &json!({"scope": "selected", "selector": "t1"})).is_empty());
        let v = check_args(run_tests, &json!({"scope": "selected"}));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].path, "$.selector");
        assert_eq!(v[0].rule, ViolationRule::Conditional);
        assert_eq!(v[0].expected, "required when $.scope == \"selected\"");
    }

    #[test]
    fn array_items_are_checked_per_index() {
        use crate::contract::{ContractExample, FieldSpec, ToolContract};
        let contract = ToolContract {
            name: "tagger".into(),
            description: "tagging".into(),
            fields: vec![FieldSpec::new("tags", "$", FieldKind::Array, true).with_children(
                vec![FieldSpec::new("*", "$.tags", FieldKind::Enum, true)
                    .with_enum(&["red", "blue"])],
            )],
            conditional_rules: Vec::new(),
            examples: vec![ContractExample {
                args: json!({"tags": ["red"]}),
                note: String::new(),
            }],
        };
        let v = check_args(&contract, &json!({"tags": ["red", "green", 4]}));
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].path, "$.tags[1]");
        assert_eq!(v[0].rule, ViolationRule::Enum);
        assert_eq!(v[1].path, "$.tags[2]");
        assert_eq!(v[1].rule, ViolationRule::Type);
    }

    #[test]
    fn violations_sort_by_path_then_rule() {
        let contracts = standard_contracts();
        let search = contracts.iter().find(|c| c.name == "search_logs").unwrap();
        let v = check_args(
            search,
            &json!({
                "query": "",
                "service": "smtp",
                "time_range": {"start": "tomorrow", "end": "2025-03-14T10:00:00Z"}
            }),
        );
        let keys: Vec<(&str, &str)> = v.iter().map(|x| (x.path.as_str(), x.rule.name())).collect();
        assert_eq!(
            keys,
            [
                ("$.query", "min-length"),
                ("$.service", "enum"),
                ("$.time_range.start", "pattern"),
            ]
        );
    }

    #[test]
    fn generic_sentence_is_exact_at_c1_and_for_a_b() {
        let report = get_metric_report(json!({}));
        for (cond, gran) in [
            (Condition::A, Granularity::C3),
            (Condition::B, Granularity::C3),
            (Condition::C, Granularity::C1),
        ] {
            assert_eq!(
                format_diagnostics(&report, cond, gran).unwrap(),
                GENERIC_INVALID
            );
        }
    }

    #[test]
    fn c3_json_matches_the_reference_error_shape() {
        let report = get_metric_report(
            json!({"metric_key": "latency95", "service": "api", "window": {"minutes": 0}}),
        );
        let text = format_diagnostics(&report, Condition::C, Granularity::C3).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(GENERIC_INVALID));
        let body: Value = serde_json::from_str(lines.next().unwrap()).unwrap();
        let expected = json!({
            "error_type": "SCHEMA_VALIDATION",
            "tool": "get_metric",
            "violations": [
                {"path": "$.metric_key", "expected": "enum",
                 "allowed": ["p95_latency", "error_rate"], "found": "latency95"},
                {"path": "$.window.minutes", "expected": "integer >= 1", "found": 0}
            ]
        });
        assert_eq!(body, expected);
        assert_eq!(
            lines.next(),
            Some("set $.metric_key to one of [\"p95_latency\",\"error_rate\"]")
        );
        assert_eq!(
            lines.next(),
            Some("set $.window.minutes to satisfy integer >= 1")
        );
        assert_eq!(lines.next(), None);
    }

    #[test]
    fn granularities_are_information_monotone() {
        let report = get_metric_report(
            json!({"metric_key": "latency95", "service": "api", "window": {"minutes": 0}}),
        );
        let c1 = format_diagnostics(&report, Condition::C, Granularity::C1).unwrap();
        let c2 = format_diagnostics(&report, Condition::C, Granularity::C2).unwrap();
        let c3 = format_diagnostics(&report, Condition::C, Granularity::C3).unwrap();
        assert!(c2.contains(&c1));
        assert!(c3.contains(&c1));
        for v in &report.violations {
            assert!(c2.contains(&v.path) && c2.contains(&v.expected));
            assert!(c3.contains(&v.path) && c3.contains(&v.expected));
        }
        assert!(!c2.contains("latency95"));
        assert!(c3.contains("latency95"));
    }

    #[test]
    fn diagnostics_for_valid_report_is_an_error() {
        let report = get_metric_report(
            json!({"metric_key": "p95_latency", "service": "api", "window": {"minutes": 1}}),
        );
        assert_eq!(
            format_diagnostics(&report, Condition::C, Granularity::C3),
            Err(DiagnosticsError::ReportIsValid)
        );
    }

    #[test]
    fn unknown_tool_and_unparseable_have_structured_bodies_under_c() {
        let unknown = ValidationReport::unknown_tool("fetch_metric");
        let text = format_diagnostics(&unknown, Condition::C, Granularity::C3).unwrap();
        assert!(text.contains("UNKNOWN_TOOL") && text.contains("fetch_metric"));
        let unparsed = ValidationReport::unparseable(ParseFailure::Truncated);
        let text = format_diagnostics(&unparsed, Condition::C, Granularity::C2).unwrap();
        assert!(text.contains("MALFORMED_OUTPUT") && text.contains("truncated"));
    }
}
