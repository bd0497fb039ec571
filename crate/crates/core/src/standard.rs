//! The built-in seven-tool diagnostic toolset.
//!
//! Every run uses this pack unless the caller supplies one. Constraint
//! coverage is deliberate: enums, numeric bounds, patterns, length bounds,
//! a nested object, and one conditional rule all appear at least once.

use serde_json::json;

use crate::contract::{
    ConditionalRule, ContractExample, ContractPack, FieldKind, FieldSpec, ToolContract,
    CONTRACT_PACK_VERSION,
};

/// Repo-relative paths: lowercase segments separated by `/`.
pub const PATH_PATTERN: &str = "^[a-z0-9_./-]+$";

/// Timestamps in artifacts and arguments: `2025-03-14T09:00:00Z`. Same-format
/// strings compare chronologically as plain strings.
pub const TIMESTAMP_PATTERN: &str =
    "^[0-9][0-9][0-9][0-9]-[0-9][0-9]-[0-9][0-9]T[0-9][0-9]:[0-9][0-9]:[0-9][0-9]Z$";

/// The closed set of services the sandbox simulates.
pub const SERVICES: [&str; 5] = ["api", "auth", "checkout", "inventory", "payments"];

/// The two metrics every pack exposes.
pub const METRIC_KEYS: [&str; 2] = ["p95_latency", "error_rate"];

pub fn standard_contracts() -> Vec<ToolContract> {
    vec![
        search_logs(),
        get_metric(),
        list_dir(),
        read_file(),
        grep_repo(),
        run_tests(),
        apply_patch(),
    ]
}

pub fn standard_contract_pack() -> ContractPack {
    ContractPack {
        version: CONTRACT_PACK_VERSION,
        tools: standard_contracts(),
    }
}

fn timestamp_field(name: &str, parent: &str, what: &str) -> FieldSpec {
    FieldSpec::new(name, parent, FieldKind::String, true)
        .with_pattern(TIMESTAMP_PATTERN)
        .describe(what)
}

fn search_logs() -> ToolContract {
    ToolContract {
        name: "search_logs".into(),
        description: "Search service log lines for a substring and return matching lines in \
                      chronological order."
            .into(),
        fields: vec![
            FieldSpec::new("query", "$", FieldKind::String, true)
                .with_lengths(Some(1), None)
                .describe("substring to look for in log messages"),
            FieldSpec::new("time_range", "$", FieldKind::Object, false)
                .with_children(vec![
                    timestamp_field("start", "$.time_range", "inclusive lower bound"),
                    timestamp_field("end", "$.time_range", "inclusive upper bound"),
                ])
                .describe("restrict the search to a time window"),
            FieldSpec::new("service", "$", FieldKind::Enum, false)
                .with_enum(&SERVICES)
                .describe("restrict the search to one service"),
        ],
        conditional_rules: Vec::new(),
        examples: vec![ContractExample {
            args: json!({
                "query": "timeout",
                "service": "checkout",
                "time_range": {"start": "2025-03-14T09:00:00Z", "end": "2025-03-14T10:00:00Z"}
            }),
            note: "find timeout lines for the checkout service in a one-hour window".into(),
        }],
    }
}

fn get_metric() -> ToolContract {
    ToolContract {
        name: "get_metric".into(),
        description: "Read one aggregated metric value for a service over a trailing window."
            .into(),
        fields: vec![
            FieldSpec::new("metric_key", "$", FieldKind::Enum, true)
                .with_enum(&METRIC_KEYS)
                .describe("which metric to read"),
            FieldSpec::new("service", "$", FieldKind::Enum, true)
                .with_enum(&SERVICES)
                .describe("service the metric belongs to"),
            FieldSpec::new("window", "$", FieldKind::Object, true)
                .with_children(vec![FieldSpec::new(
                    "minutes",
                    "$.window",
                    FieldKind::Integer,
                    true,
                )
                .with_bounds(Some(1.0), Some(1440.0))
                .describe("trailing window length in minutes")])
                .describe("aggregation window"),
        ],
        conditional_rules: Vec::new(),
        examples: vec![ContractExample {
            args: json!({"metric_key": "p95_latency", "service": "checkout", "window": {"minutes": 30}}),
            note: "p95 latency for checkout over the last 30 minutes".into(),
        }],
    }
}

fn list_dir() -> ToolContract {
    ToolContract {
        name: "list_dir".into(),
        description: "List the entries of one repository directory.".into(),
        fields: vec![FieldSpec::new("path", "$", FieldKind::String, true)
            .with_pattern(PATH_PATTERN)
            .describe("repository-relative directory path; `.` is the root")],
        conditional_rules: Vec::new(),
        examples: vec![ContractExample {
            args: json!({"path": "src"}),
            note: "list the src directory".into(),
        }],
    }
}

fn read_file() -> ToolContract {
    ToolContract {
        name: "read_file".into(),
        description: "Read one repository file and return its numbered lines.".into(),
        fields: vec![FieldSpec::new("path", "$", FieldKind::String, true)
            .with_pattern(PATH_PATTERN)
            .describe("repository-relative file path")],
        conditional_rules: Vec::new(),
        examples: vec![ContractExample {
            args: json!({"path": "src/calc.mc"}),
            note: "read the calculator module".into(),
        }],
    }
}

fn grep_repo() -> ToolContract {
    ToolContract {
        name: "grep_repo".into(),
        description: "Search repository files line by line for a literal substring.".into(),
        fields: vec![
            FieldSpec::new("pattern", "$", FieldKind::String, true)
                .with_lengths(Some(1), None)
                .describe("literal substring to look for"),
            FieldSpec::new("glob", "$", FieldKind::String, false)
                .with_lengths(Some(1), None)
                .describe("filter files by repository-relative path, `*` matches any span"),
        ],
        conditional_rules: Vec::new(),
        examples: vec![ContractExample {
            args: json!({"pattern": "fn add", "glob": "src/*"}),
            note: "find the add function under src".into(),
        }],
    }
}

fn run_tests() -> ToolContract {
    ToolContract {
        name: "run_tests".into(),
        description: "Run the repository test suite, either all tests or a selected subset."
            .into(),
        fields: vec![
            FieldSpec::new("scope", "$", FieldKind::Enum, true)
                .with_enum(&["all", "selected"])
                .describe("whether to run every test or a selected subset"),
            FieldSpec::new("selector", "$", FieldKind::String, false)
                .with_lengths(Some(1), None)
                .describe("test-name filter with `*` wildcards, used when scope is \"selected\""),
        ],
        conditional_rules: vec![ConditionalRule {
            if_path: "$.scope".into(),
            if_equals: json!("selected"),
            then_required: vec!["$.selector".into()],
        }],
        examples: vec![ContractExample {
            args: json!({"scope": "all"}),
            note: "run the whole suite".into(),
        }],
    }
}

fn apply_patch() -> ToolContract {
    ToolContract {
        name: "apply_patch".into(),
        description: "Apply a unified diff to one repository file.".into(),
        fields: vec![
            FieldSpec::new("file", "$", FieldKind::String, true)
                .with_pattern(PATH_PATTERN)
                .describe("repository-relative file path the diff applies to"),
            FieldSpec::new("diff", "$", FieldKind::String, true)
                .with_lengths(Some(1), None)
                .describe("unified diff with `@@ -l,n +l,m @@` hunks and exact context lines"),
        ],
        conditional_rules: Vec::new(),
        examples: vec![ContractExample {
            args: json!({
                "file": "src/calc.mc",
                "diff": "@@ -1,1 +1,1 @@\n-fn add(a, b) = a - b\n+fn add(a, b) = a + b\n"
            }),
            note: "fix the add operator".into(),
        }],
    }
}
