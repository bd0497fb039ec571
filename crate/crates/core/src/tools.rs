//! Deterministic tool executors.
//!
//! Executors run only after interface validation, so they check execution
//! preconditions (path exists, metric available, patch applies) and nothing
//! else. Runtime-error texts are fixed strings with no condition-dependent
//! content. Reads never touch the state; `apply_patch` is the only writer.

use serde_json::{json, Value};

use crate::patch::{self, PatchError};
use crate::sandbox::ArtifactStore;
use crate::textmatch::glob_match;
use crate::validate::ToolCall;

pub const SEARCH_LOGS_CAP: usize = 50;
pub const GREP_CAP: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToolStatus {
    Ok,
    RuntimeError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToolResult {
    pub status: ToolStatus,
    /// Result document, or the fixed error text as a JSON string.
    pub payload: Value,
    pub mutated_state: bool,
}

impl ToolResult {
    fn ok(payload: Value) -> Self {
        ToolResult {
            status: ToolStatus::Ok,
            payload,
            mutated_state: false,
        }
    }

    fn mutated(payload: Value) -> Self {
        ToolResult {
            status: ToolStatus::Ok,
            payload,
            mutated_state: true,
        }
    }

    fn error(text: &str) -> Self {
        ToolResult {
            status: ToolStatus::RuntimeError,
            payload: Value::String(text.to_string()),
            mutated_state: false,
        }
    }
}

pub trait ToolExecutor: Send + Sync {
    fn name(&self) -> &'static str;
    fn execute(&self, args: &Value, state: &mut ArtifactStore) -> ToolResult;
}

struct SearchLogs;
struct GetMetric;
struct ListDir;
struct ReadFile;
struct GrepRepo;
struct RunTests;
struct ApplyPatch;

static EXECUTORS: [&'static dyn ToolExecutor; 7] = [
    &SearchLogs,
    &GetMetric,
    &ListDir,
    &ReadFile,
    &GrepRepo,
    &RunTests,
    &ApplyPatch,
];

pub fn tool_executors() -> &'static [&'static dyn ToolExecutor] {
    &EXECUTORS
}

pub fn tool_executor(name: &str) -> Option<&'static dyn ToolExecutor> {
    EXECUTORS.iter().copied().find(|e| e.name() == name)
}

/// Dispatch a schema-valid call to its executor.
pub fn execute_tool(call: &ToolCall, state: &mut ArtifactStore) -> ToolResult {
    match tool_executor(&call.name) {
        Some(executor) => executor.execute(&call.args, state),
        None => ToolResult::error("unknown tool"),
    }
}

fn str_arg<'a>(args: &'a Value, key: &str) -> &'a str {
    args.get(key).and_then(Value::as_str).unwrap_or_default()
}

fn opt_str_arg<'a>(args: &'a Value, key: &str) -> Option<&'a str> {
    args.get(key).and_then(Value::as_str)
}

fn int_at(value: &Value) -> Option<i64> {
    value.as_i64().or_else(|| {
        value
            .as_f64()
            .filter(|f| f.fract() == 0.0)
            .map(|f| f as i64)
    })
}

impl ToolExecutor for SearchLogs {
    fn name(&self) -> &'static str {
        "search_logs"
    }

    fn execute(&self, args: &Value, state: &mut ArtifactStore) -> ToolResult {
        let query = str_arg(args, "query");
        let service = opt_str_arg(args, "service");
        let range = args.get("time_range").map(|tr| {
            (
                str_arg(tr, "start").to_string(),
                str_arg(tr, "end").to_string(),
            )
        });
        let mut lines = Vec::new();
        let mut truncated = false;
        for line in &state.logs {
            if !line.message.contains(query) {
                continue;
            }
            if let Some(wanted) = service {
                if line.service != wanted {
                    continue;
                }
            }
            if let Some((start, end)) = &range {
                if line.timestamp < *start || line.timestamp > *end {
                    continue;
                }
            }
            if lines.len() == SEARCH_LOGS_CAP {
                truncated = true;
                break;
            }
            lines.push(json!({
                "timestamp": line.timestamp,
                "service": line.service,
                "level": line.level,
                "message": line.message
            }));
        }
        ToolResult::ok(json!({ "lines": lines, "truncated": truncated }))
    }
}

impl ToolExecutor for GetMetric {
    fn name(&self) -> &'static str {
        "get_metric"
    }

    fn execute(&self, args: &Value, state: &mut ArtifactStore) -> ToolResult {
        let key = str_arg(args, "metric_key");
        let service = str_arg(args, "service");
        let minutes = args
            .get("window")
            .and_then(|w| w.get("minutes"))
            .and_then(int_at)
            .unwrap_or(0);
        match state.metric(service, key, minutes.max(0) as u64) {
            Some(value) => ToolResult::ok(json!({ "value": value })),
            None => ToolResult::error("metric not available"),
        }
    }
}

impl ToolExecutor for ListDir {
    fn name(&self) -> &'static str {
        "list_dir"
    }

    fn execute(&self, args: &Value, state: &mut ArtifactStore) -> ToolResult {
        match state.list_dir(str_arg(args, "path")) {
            Some(entries) => ToolResult::ok(json!({ "entries": entries })),
            None => ToolResult::error("path not found"),
        }
    }
}

impl ToolExecutor for ReadFile {
    fn name(&self) -> &'static str {
        "read_file"
    }

    fn execute(&self, args: &Value, state: &mut ArtifactStore) -> ToolResult {
        match state.file_content(str_arg(args, "path")) {
            Some(content) => ToolResult::ok(json!({ "content": content })),
            None => ToolResult::error("path not found"),
        }
    }
}

impl ToolExecutor for GrepRepo {
    fn name(&self) -> &'static str {
        "grep_repo"
    }

    fn execute(&self, args: &Value, state: &mut ArtifactStore) -> ToolResult {
        let pattern = str_arg(args, "pattern");
        let glob = opt_str_arg(args, "glob");
        let mut matches = Vec::new();
        let mut truncated = false;
        'files: for path in state.file_paths() {
            if let Some(g) = glob {
                if !glob_match(g, &path) {
                    continue;
                }
            }
            let content = state.file_content(&path).expect("listed path exists");
            for (idx, text) in content.lines().enumerate() {
                if !text.contains(pattern) {
                    continue;
                }
                if matches.len() == GREP_CAP {
                    truncated = true;
                    break 'files;
                }
                matches.push(json!({
                    "file": path,
                    "line": idx + 1,
                    "text": text
                }));
            }
        }
        ToolResult::ok(json!({ "matches": matches, "truncated": truncated }))
    }
}

impl ToolExecutor for RunTests {
    fn name(&self) -> &'static str {
        "run_tests"
    }

    fn execute(&self, args: &Value, state: &mut ArtifactStore) -> ToolResult {
        let selector = match str_arg(args, "scope") {
            "selected" => opt_str_arg(args, "selector"),
            _ => None,
        };
        run_tests_detail(state, selector)
    }
}

/// Interpret the micro-repo and run the (optionally selected) suite.
pub fn run_tests_detail(state: &ArtifactStore, selector: Option<&str>) -> ToolResult {
    match crate::sandbox::collect_repo_suite(state) {
        Ok((program, mut tests)) => {
            if let Some(glob) = selector {
                tests.retain(|t| glob_match(glob, &t.name));
            }
            let report = crate::microlang::run_suite(&program, &tests);
            ToolResult::ok(serde_json::to_value(report).expect("report serializes"))
        }
        Err(message) => ToolResult::error(&message),
    }
}

impl ToolExecutor for ApplyPatch {
    fn name(&self) -> &'static str {
        "apply_patch"
    }

    fn execute(&self, args: &Value, state: &mut ArtifactStore) -> ToolResult {
        apply_patch_detail(state, str_arg(args, "file"), str_arg(args, "diff"))
    }
}

/// Apply a unified-diff subset to one file. Error texts are fixed.
pub fn apply_patch_detail(state: &mut ArtifactStore, file: &str, diff: &str) -> ToolResult {
    let Some(content) = state.file_content(file) else {
        return ToolResult::error("path not found");
    };
    match patch::apply_diff(content, diff) {
        Ok(updated) => {
            state.set_file_content(file, updated);
            ToolResult::mutated(json!({ "applied": true, "file": file }))
        }
        Err(PatchError::Malformed) => ToolResult::error("malformed diff"),
        Err(PatchError::DoesNotApply) => ToolResult::error("patch does not apply"),
    }
}
