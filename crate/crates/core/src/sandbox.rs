//! Deterministic task instances: artifacts, hidden ground truth, checkers.
//!
//! A task is fully reproducible from (family, seed, robustness). Artifacts
//! are held in an [`ArtifactStore`]; episodes mutate a private clone, never
//! the template. File-like artifacts (configs and the micro-repo) share one
//! path namespace so the file tools see a single tree: `configs/<name>`,
//! `src/<name>`, `tests/<name>`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::contract::{sha256_hex, value_digest};
use crate::microlang::{self, TestReport};
use crate::oracle::TraceOracle;

pub const TASK_PACK_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    LogDiagnosis,
    ConfigCorrection,
    RepoDebug,
    Mixed,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::LogDiagnosis,
        Family::ConfigCorrection,
        Family::RepoDebug,
        Family::Mixed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::LogDiagnosis => "log_diagnosis",
            Family::ConfigCorrection => "config_correction",
            Family::RepoDebug => "repo_debug",
            Family::Mixed => "mixed",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "log_diagnosis" => Ok(Family::LogDiagnosis),
            "config_correction" => Ok(Family::ConfigCorrection),
            "repo_debug" => Ok(Family::RepoDebug),
            "mixed" => Ok(Family::Mixed),
            other => Err(format!("unknown family `{other}`")),
        }
    }
}

/// Generation knobs. Levels are small integers; 0 disables the effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Robustness {
    pub decoys: u32,
    pub noise: u32,
    pub schema_depth: u32,
}

impl Default for Robustness {
    fn default() -> Self {
        Robustness {
            decoys: 3,
            noise: 1,
            schema_depth: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogLine {
    pub timestamp: String,
    pub service: String,
    pub level: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricPoint {
    pub service: String,
    pub metric_key: String,
    pub window_minutes: u64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedText {
    pub path: String,
    pub content: String,
}

/// All artifacts of one task. Logs and metrics are reached only through
/// their dedicated tools; configs and repo files form one file tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ArtifactStore {
    /// Timestamps non-decreasing.
    pub logs: Vec<LogLine>,
    /// Sorted by (service, metric_key, window_minutes).
    pub metrics: Vec<MetricPoint>,
    /// Config documents, mounted under `configs/`; content is JSON text.
    pub configs: Vec<NamedText>,
    /// Micro-repo files with full paths (`src/...`, `tests/...`).
    pub repo: Vec<NamedText>,
}

impl ArtifactStore {
    pub fn metric(&self, service: &str, metric_key: &str, window_minutes: u64) -> Option<f64> {
        self.metrics
            .iter()
            .find(|m| {
                m.service == service
                    && m.metric_key == metric_key
                    && m.window_minutes == window_minutes
            })
            .map(|m| m.value)
    }

    /// Every file path in the tree, sorted.
    pub fn file_paths(&self) -> Vec<String> {
        let mut paths: Vec<String> = self
            .configs
            .iter()
            .map(|c| format!("configs/{}", c.path))
            .chain(self.repo.iter().map(|r| r.path.clone()))
            .collect();
        paths.sort();
        paths
    }

    pub fn file_content(&self, path: &str) -> Option<&str> {
        if let Some(name) = path.strip_prefix("configs/") {
            return self
                .configs
                .iter()
                .find(|c| c.path == name)
                .map(|c| c.content.as_str());
        }
        self.repo
            .iter()
            .find(|r| r.path == path)
            .map(|r| r.content.as_str())
    }

    pub fn set_file_content(&mut self, path: &str, content: String) -> bool {
        if let Some(name) = path.strip_prefix("configs/") {
            if let Some(c) = self.configs.iter_mut().find(|c| c.path == name) {
                c.content = content;
                return true;
            }
            return false;
        }
        if let Some(r) = self.repo.iter_mut().find(|r| r.path == path) {
            r.content = content;
            return true;
        }
        false
    }

    /// Immediate children of a directory, sorted and deduplicated. `.` is
    /// the root. Returns None for paths that are not directories.
    pub fn list_dir(&self, path: &str) -> Option<Vec<String>> {
        let prefix = if path == "." || path.is_empty() {
            String::new()
        } else {
            format!("{}/", path.trim_end_matches('/'))
        };
        let mut children: Vec<String> = Vec::new();
        for p in self.file_paths() {
            if let Some(rest) = p.strip_prefix(&prefix) {
                if rest.is_empty() {
                    continue;
                }
                let child = match rest.split_once('/') {
                    Some((dir, _)) => dir.to_string(),
                    None => rest.to_string(),
                };
                if !children.contains(&child) {
                    children.push(child);
                }
            }
        }
        if children.is_empty() {
            return None;
        }
        children.sort();
        Some(children)
    }

    pub fn digest(&self) -> String {
        value_digest(&serde_json::to_value(self).expect("store serializes"))
    }
}

/// Hidden ground truth θ: a diagnosis label plus whichever concrete fix the
/// family calls for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_fix: Option<ConfigFix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repo_fix: Option<RepoFix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigFix {
    /// Full path in the file tree, e.g. `configs/checkout.json`.
    pub file: String,
    /// Dotted key path inside the parsed document.
    pub key_path: String,
    pub corrected: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepoFix {
    pub file: String,
    /// Unified diff restoring the correct line.
    pub diff: String,
}

/// Family-specific success rubric, evaluated over (final answer, artifacts
/// state, ground truth).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckerSpec {
    /// Answer JSON carries `"diagnosis"` equal to the label
    /// (case-insensitive, trimmed).
    DiagnosisLabel { label: String },
    /// The named key in the (possibly patched) config equals the corrected
    /// value.
    ConfigValue {
        file: String,
        key_path: String,
        expected: Value,
    },
    /// Every test in the current repo state passes.
    TestsPass,
    Conjunction(Vec<CheckerSpec>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckerVerdict {
    pub success: bool,
    pub reason: String,
}

/// One step of the stored reference solution; replayed for oracle
/// validation and by the scripted perfect agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionStep {
    Call { tool: String, args: Value },
    Final { answer: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub task_id: String,
    pub family: Family,
    pub seed: u64,
    pub robustness: Robustness,
    /// Statement shown to the agent; names the task and the answer format.
    pub statement: String,
    pub artifacts: ArtifactStore,
    pub ground_truth: GroundTruth,
    pub checker: CheckerSpec,
    pub oracle: TraceOracle,
    pub solution: Vec<SolutionStep>,
}

impl TaskInstance {
    /// Fresh episode-private artifacts state.
    pub fn fresh_state(&self) -> ArtifactStore {
        self.artifacts.clone()
    }
}

/// Restore a pristine artifacts state, discarding any applied patches.
pub fn reset(task: &TaskInstance) -> ArtifactStore {
    task.artifacts.clone()
}

// ---------------------------------------------------------------------------
// Repo test execution (shared by the test tool and the checker)
// ---------------------------------------------------------------------------

/// Parse every `src/` file into one program and every `tests/` file into
/// one suite. Errors name the offending file and line.
pub fn collect_repo_suite(
    state: &ArtifactStore,
) -> Result<(microlang::Program, Vec<microlang::TestCase>), String> {
    let mut program = microlang::Program::default();
    let mut tests = Vec::new();
    for file in &state.repo {
        if file.path.starts_with("src/") {
            let parsed = microlang::parse_program(&file.content)
                .map_err(|e| format!("{}: {e}", file.path))?;
            program.functions.extend(parsed.functions);
        } else if file.path.starts_with("tests/") {
            let parsed = microlang::parse_tests(&file.content)
                .map_err(|e| format!("{}: {e}", file.path))?;
            tests.extend(parsed);
        }
    }
    Ok((program, tests))
}

/// Run the whole repo suite.
pub fn run_repo_tests(state: &ArtifactStore) -> Result<TestReport, String> {
    let (program, tests) = collect_repo_suite(state)?;
    Ok(microlang::run_suite(&program, &tests))
}

// ---------------------------------------------------------------------------
// Final-answer checking
// ---------------------------------------------------------------------------

/// First parseable JSON object embedded in the text, if any.
pub fn extract_json_object(text: &str) -> Option<Value> {
    for (i, c) in text.char_indices() {
        if c == '{' {
            let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
            if let Some(Ok(v)) = stream.next() {
                if v.is_object() {
                    return Some(v);
                }
            }
        }
    }
    None
}

fn eval_checker(
    spec: &CheckerSpec,
    answer: &Value,
    state: &ArtifactStore,
) -> Result<(), String> {
    match spec {
        CheckerSpec::DiagnosisLabel { label } => {
            let given = answer
                .get("diagnosis")
                .and_then(Value::as_str)
                .unwrap_or("");
            if given.trim().eq_ignore_ascii_case(label) {
                Ok(())
            } else {
                Err("wrong-diagnosis".into())
            }
        }
        CheckerSpec::ConfigValue {
            file,
            key_path,
            expected,
        } => {
            let Some(text) = state.file_content(file) else {
                return Err("config-not-corrected".into());
            };
            let Ok(doc) = serde_json::from_str::<Value>(text) else {
                return Err("config-not-corrected".into());
            };
            let mut cursor = &doc;
            for seg in key_path.split('.') {
                match cursor.get(seg) {
                    Some(v) => cursor = v,
                    None => return Err("config-not-corrected".into()),
                }
            }
            if cursor == expected {
                Ok(())
            } else {
                Err("config-not-corrected".into())
            }
        }
        CheckerSpec::TestsPass => match run_repo_tests(state) {
            Ok(report) if report.total > 0 && report.failed == 0 => Ok(()),
            _ => Err("tests-failing".into()),
        },
        CheckerSpec::Conjunction(parts) => {
            for part in parts {
                eval_checker(part, answer, state)?;
            }
            Ok(())
        }
    }
}

/// Deterministic verdict over (final answer, artifacts state, ground truth).
/// The answer must contain a JSON object; otherwise the verdict is a failure
/// with reason "unparseable-answer".
pub fn check_final_answer(
    answer: &str,
    task: &TaskInstance,
    state: &ArtifactStore,
) -> CheckerVerdict {
    let Some(parsed) = extract_json_object(answer) else {
        return CheckerVerdict {
            success: false,
            reason: "unparseable-answer".into(),
        };
    };
    match eval_checker(&task.checker, &parsed, state) {
        Ok(()) => CheckerVerdict {
            success: true,
            reason: "ok".into(),
        },
        Err(reason) => CheckerVerdict {
            success: false,
            reason,
        },
    }
}

// ---------------------------------------------------------------------------
// Task packs
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("task pack parse error: {message}")]
    Parse { message: String },
    #[error("unsupported task pack version {found} (expected {TASK_PACK_VERSION})")]
    UnsupportedVersion { found: u64 },
    #[error("integrity failure in task `{task_id}`: {detail}")]
    Integrity { task_id: String, detail: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct PackEntry {
    instance_digest: String,
    artifact_digests: BTreeMap<String, String>,
    task: TaskInstance,
}

#[derive(Debug, Serialize, Deserialize)]
struct TaskPackFile {
    version: u64,
    tasks: Vec<PackEntry>,
}

fn instance_digest(task: &TaskInstance) -> String {
    value_digest(&serde_json::to_value(task).expect("task serializes"))
}

fn artifact_digests(store: &ArtifactStore) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    out.insert(
        "logs".to_string(),
        value_digest(&serde_json::to_value(&store.logs).expect("logs serialize")),
    );
    out.insert(
        "metrics".to_string(),
        value_digest(&serde_json::to_value(&store.metrics).expect("metrics serialize")),
    );
    for path in store.file_paths() {
        let content = store.file_content(&path).expect("listed path exists");
        out.insert(path, sha256_hex(content.as_bytes()));
    }
    out
}

pub fn pack_to_string(tasks: &[TaskInstance]) -> String {
    let file = TaskPackFile {
        version: TASK_PACK_VERSION,
        tasks: tasks
            .iter()
            .map(|t| PackEntry {
                instance_digest: instance_digest(t),
                artifact_digests: artifact_digests(&t.artifacts),
                task: t.clone(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("pack serializes");
    text.push('\n');
    text
}

pub fn pack_from_str(text: &str) -> Result<Vec<TaskInstance>, SandboxError> {
    let file: TaskPackFile = serde_json::from_str(text).map_err(|e| SandboxError::Parse {
        message: e.to_string(),
    })?;
    if file.version != TASK_PACK_VERSION {
        return Err(SandboxError::UnsupportedVersion { found: file.version });
    }
    let mut tasks = Vec::with_capacity(file.tasks.len());
    for entry in file.tasks {
        let expected = instance_digest(&entry.task);
        if entry.instance_digest != expected {
            return Err(SandboxError::Integrity {
                task_id: entry.task.task_id.clone(),
                detail: "instance digest mismatch".into(),
            });
        }
        let digests = artifact_digests(&entry.task.artifacts);
        if entry.artifact_digests != digests {
            return Err(SandboxError::Integrity {
                task_id: entry.task.task_id.clone(),
                detail: "artifact digest mismatch".into(),
            });
        }
        tasks.push(entry.task);
    }
    Ok(tasks)
}

pub fn save_task_pack(tasks: &[TaskInstance], path: &Path) -> Result<(), SandboxError> {
    std::fs::write(path, pack_to_string(tasks))?;
    Ok(())
}

pub fn load_task_pack(path: &Path) -> Result<Vec<TaskInstance>, SandboxError> {
    let text = std::fs::read_to_string(path)?;
    pack_from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::generate_task;

    fn sample_task() -> TaskInstance {
        generate_task(Family::LogDiagnosis, 0, &Robustness::default())
    }

    #[test]
    fn list_dir_walks_the_tree() {
        let task = sample_task();
        let root = task.artifacts.list_dir(".").unwrap();
        assert!(root.contains(&"configs".to_string()));
        assert!(root.contains(&"src".to_string()));
        let configs = task.artifacts.list_dir("configs").unwrap();
        assert!(!configs.is_empty());
        assert!(task.artifacts.list_dir("no/such/dir").is_none());
    }

    #[test]
    fn reset_restores_the_generated_digest() {
        let task = sample_task();
        let before = task.artifacts.digest();
        let mut state = task.fresh_state();
        state.set_file_content(
            &format!("configs/{}", task.artifacts.configs[0].path),
            "{}".to_string(),
        );
        assert_ne!(state.digest(), before);
        let restored = reset(&task);
        assert_eq!(restored.digest(), before);
        assert_eq!(reset(&task).digest(), reset(&task).digest());
    }

    #[test]
    fn unparseable_answer_is_a_failure_with_fixed_reason() {
        let task = sample_task();
        let verdict = check_final_answer("I think it is the pool", &task, &task.artifacts);
        assert!(!verdict.success);
        assert_eq!(verdict.reason, "unparseable-answer");
    }

    #[test]
    fn diagnosis_matching_is_case_insensitive_and_trimmed() {
        let task = sample_task();
        let label = task.ground_truth.label.clone();
        let answer = format!("{{\"diagnosis\": \"  {}  \"}}", label.to_uppercase());
        let verdict = check_final_answer(&answer, &task, &task.artifacts);
        assert!(verdict.success, "{}", verdict.reason);
        let wrong = check_final_answer("{\"diagnosis\": \"gremlins\"}", &task, &task.artifacts);
        assert!(!wrong.success);
        assert_eq!(wrong.reason, "wrong-diagnosis");
    }

    #[test]
    fn answer_json_may_be_embedded_in_prose() {
        let task = sample_task();
        let answer = format!(
            "After checking the logs: {{\"diagnosis\": \"{}\"}} — confident.",
            task.ground_truth.label
        );
        assert!(check_final_answer(&answer, &task, &task.artifacts).success);
    }

    #[test]
    fn pack_round_trips_losslessly() {
        let tasks: Vec<TaskInstance> = Family::ALL
            .iter()
            .map(|f| generate_task(*f, 1, &Robustness::default()))
            .collect();
        let text = pack_to_string(&tasks);
        let loaded = pack_from_str(&text).unwrap();
        assert_eq!(loaded, tasks);
    }

    #[test]
    fn tampered_ground_truth_fails_integrity_on_load() {
        let tasks = vec![sample_task()];
        let text = pack_to_string(&tasks);
        let tampered = text.replace(
            &format!("\"label\": \"{}\"", tasks[0].ground_truth.label),
            "\"label\": \"nothing_wrong\"",
        );
        assert_ne!(text, tampered);
        match pack_from_str(&tampered) {
            Err(SandboxError::Integrity { task_id, .. }) => {
                assert_eq!(task_id, tasks[0].task_id)
            }
            other => panic!("expected integrity failure, got {other:?}"),
        }
    }

    #[test]
    fn save_and_load_through_the_filesystem() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pack.json");
        let tasks = vec![sample_task()];
        save_task_pack(&tasks, &path).unwrap();
        assert_eq!(load_task_pack(&path).unwrap(), tasks);
    }
}

