//! Budgeted episode loop and matrix execution.
//!
//! One episode = one (task, budget, condition, seed) cell: the agent is
//! queried up to `budget` times, every reply is classified with exactly one
//! taxonomy label, and invalid calls consume budget like any other step.
//! Matrix execution fans cells out in parallel but logs them in declared
//! cell order so reruns are byte-identical.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::sync::mpsc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::agents::{AgentTransport, HistoryItem, TransportRequest};
use crate::contract::ToolContract;
use crate::oracle::{classify_call, OracleVerdict};
use crate::render::{render_toolset, ToolsetText};
use crate::sandbox::{check_final_answer, reset, Family, TaskInstance};
use crate::taxonomy::{Condition, Granularity, StepClass, Subcategory};
use crate::tokenize::Tokenizer;
use crate::tools::{execute_tool, ToolResult, ToolStatus};
use crate::validate::{
    format_diagnostics, parse_agent_output, validate_args, ParsedOutput, ValidationReport,
};

/// Fixed interaction contract shown to every agent in every condition.
pub const SYSTEM_PROMPT: &str = "You are an agent operating tools in an incident sandbox.\n\
Reply with exactly one JSON object per turn and nothing else that parses.\n\
To call a tool: {\"tool\": \"<name>\", \"args\": { ... }}.\n\
To finish: {\"final_answer\": <answer in the format the task asks for>}.\n\
Each reply, valid or not, consumes one step of your budget.";

// ---------------------------------------------------------------------------
// Episode configuration and records
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub task_id: String,
    pub budget: usize,
    pub condition: Condition,
    pub seed: u64,
    /// Feedback granularity; present iff `condition` is C.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub granularity: Option<Granularity>,
    pub step_timeout_ms: u64,
    pub max_step_output_chars: usize,
}

impl EpisodeConfig {
    pub fn new(
        task_id: impl Into<String>,
        budget: usize,
        condition: Condition,
        seed: u64,
        granularity: Granularity,
        step_timeout_ms: u64,
        max_step_output_chars: usize,
    ) -> Self {
        assert!(budget >= 1, "budget must be at least 1");
        EpisodeConfig {
            task_id: task_id.into(),
            budget,
            condition,
            seed,
            granularity: (condition == Condition::C).then_some(granularity),
            step_timeout_ms,
            max_step_output_chars,
        }
    }

    /// Canonical cell name: `<task_id>:b<budget>:<condition>:s<seed>`.
    pub fn run_id(&self) -> String {
        format!(
            "{}:b{}:{}:s{}",
            self.task_id,
            self.budget,
            self.condition.as_str(),
            self.seed
        )
    }
}

/// What the step's raw output parsed into.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParsedOutcome {
    ToolCall { tool: String },
    FinalAnswer,
    ParseFailure { reason: String },
}

impl ParsedOutcome {
    fn of(parsed: &ParsedOutput) -> Self {
        match parsed {
            ParsedOutput::Call(call) => ParsedOutcome::ToolCall {
                tool: call.name.clone(),
            },
            ParsedOutput::Final(_) => ParsedOutcome::FinalAnswer,
            ParsedOutput::Failure(f) => ParsedOutcome::ParseFailure {
                reason: f.reason().to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub raw_output: String,
    pub parsed: ParsedOutcome,
    pub classification: StepClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcategory: Option<Subcategory>,
    /// Observation or diagnostic text appended to the history; empty on the
    /// final-answer step.
    pub feedback: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Scored,
    Excluded { reason: String },
}

impl RunStatus {
    pub fn is_scored(&self) -> bool {
        matches!(self, RunStatus::Scored)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub family: Family,
    pub config: EpisodeConfig,
    pub status: RunStatus,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checker_reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
    /// Step index of the successful final answer; None on failure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps_to_success: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_invalid_step: Option<usize>,
    pub toolset_tokens: u64,
    pub prompt_tokens_total: u64,
    pub completion_tokens_total: u64,
    pub steps: Vec<StepRecord>,
}

// ---------------------------------------------------------------------------
// Step classification
// ---------------------------------------------------------------------------

/// Collapse one step's evidence into its single taxonomy label.
///
/// Priority: final answer; then interface misuse (parse failure, unknown
/// tool, or first violation's class); then runtime error; then the oracle's
/// semantic verdict; else productive.
pub fn classify_step(
    parsed: &ParsedOutput,
    report: Option<&ValidationReport>,
    result: Option<&ToolResult>,
    verdict: Option<&OracleVerdict>,
) -> (StepClass, Option<Subcategory>) {
    if matches!(parsed, ParsedOutput::Final(_)) {
        return (StepClass::FinalAnswer, None);
    }
    if let ParsedOutput::Failure(f) = parsed {
        let implied = ValidationReport::unparseable(*f);
        let report = report.cloned().unwrap_or(implied);
        return (StepClass::InterfaceMisuse, report.subcategory);
    }
    if let Some(report) = report {
        if !report.is_valid() {
            return (StepClass::InterfaceMisuse, report.subcategory);
        }
    }
    if let Some(result) = result {
        if result.status == ToolStatus::RuntimeError {
            return (StepClass::ExecutionFailure, None);
        }
    }
    match verdict {
        Some(OracleVerdict::SemanticMisuse) => (StepClass::SemanticMisuse, None),
        _ => (StepClass::ValidProductive, None),
    }
}

// ---------------------------------------------------------------------------
// Episode execution
// ---------------------------------------------------------------------------

/// Immutable per-condition context shared by every episode in a matrix.
pub struct EpisodeContext<'a> {
    pub contracts: &'a [ToolContract],
    pub toolset: &'a ToolsetText,
    pub tokenizer: &'a dyn Tokenizer,
}

fn truncate_chars(text: String, max_chars: usize) -> String {
    match text.char_indices().nth(max_chars) {
        Some((byte, _)) => text[..byte].to_string(),
        None => text,
    }
}

/// String handed to the checker: final answers that are JSON strings pass
/// through unquoted so prose answers with embedded JSON still check.
fn answer_text(answer: &Value) -> String {
    match answer.as_str() {
        Some(s) => s.to_string(),
        None => answer.to_string(),
    }
}

/// Condition-independent observation text for an executed call.
fn observation_text(result: &ToolResult) -> String {
    match result.status {
        ToolStatus::Ok => result.payload.to_string(),
        ToolStatus::RuntimeError => json!({ "error": result.payload }).to_string(),
    }
}

pub fn run_episode(
    config: &EpisodeConfig,
    task: &TaskInstance,
    ctx: &EpisodeContext,
    transport: &dyn AgentTransport,
) -> RunRecord {
    assert_eq!(config.task_id, task.task_id, "config/task mismatch");
    let run_id = config.run_id();
    let mut state = reset(task);
    let mut oracle_states = task.oracle.initial_states();
    let mut history: Vec<HistoryItem> = Vec::new();
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut status = RunStatus::Scored;
    let mut success = false;
    let mut checker_reason = None;
    let mut final_answer = None;
    let mut steps_to_success = None;

    let base_tokens = ctx.tokenizer.count(SYSTEM_PROMPT)
        + ctx.toolset.token_count
        + ctx.tokenizer.count(&task.statement);
    let granularity = config.granularity.unwrap_or(Granularity::C1);

    for t in 1..=config.budget {
        let prompt_tokens = base_tokens
            + history
                .iter()
                .map(|h| ctx.tokenizer.count(&h.text))
                .sum::<u64>();
        let request = TransportRequest {
            run_id: &run_id,
            step: t,
            budget: config.budget,
            condition: config.condition,
            system_prompt: SYSTEM_PROMPT,
            toolset_text: &ctx.toolset.text,
            task_statement: &task.statement,
            history: &history,
            step_timeout_ms: config.step_timeout_ms,
        };
        let raw = match transport.reply(&request) {
            Ok(text) => truncate_chars(text, config.max_step_output_chars),
            Err(err) => {
                status = RunStatus::Excluded {
                    reason: err.exclusion_reason().to_string(),
                };
                break;
            }
        };
        let completion_tokens = ctx.tokenizer.count(&raw);
        let parsed = parse_agent_output(&raw);

        if let ParsedOutput::Final(fin) = &parsed {
            let text = answer_text(&fin.answer);
            let verdict = check_final_answer(&text, task, &state);
            success = verdict.success;
            checker_reason = Some(verdict.reason);
            final_answer = Some(text);
            if success {
                steps_to_success = Some(t);
            }
            steps.push(StepRecord {
                step: t,
                raw_output: raw,
                parsed: ParsedOutcome::FinalAnswer,
                classification: StepClass::FinalAnswer,
                subcategory: None,
                feedback: String::new(),
                prompt_tokens,
                completion_tokens,
            });
            break;
        }

        let report = match &parsed {
            ParsedOutput::Call(call) => validate_args(call, ctx.contracts),
            ParsedOutput::Failure(f) => ValidationReport::unparseable(*f),
            ParsedOutput::Final(_) => unreachable!("handled above"),
        };

        let (classification, subcategory, feedback) = if !report.is_valid() {
            let text = format_diagnostics(&report, config.condition, granularity)
                .expect("report is invalid here");
            let (class, sub) = classify_step(&parsed, Some(&report), None, None);
            (class, sub, text)
        } else {
            let call = match &parsed {
                ParsedOutput::Call(call) => call,
                _ => unreachable!("valid report implies a call"),
            };
            let result = execute_tool(call, &mut state);
            let verdict = if result.status == ToolStatus::Ok {
                let (verdict, next) = classify_call(&task.oracle, &oracle_states, call);
                oracle_states = next;
                Some(verdict)
            } else {
                None
            };
            let (class, sub) = classify_step(&parsed, Some(&report), Some(&result), verdict.as_ref());
            (class, sub, observation_text(&result))
        };

        history.push(HistoryItem::agent(raw.clone()));
        history.push(HistoryItem::env(feedback.clone()));
        steps.push(StepRecord {
            step: t,
            raw_output: raw,
            parsed: ParsedOutcome::of(&parsed),
            classification,
            subcategory,
            feedback,
            prompt_tokens,
            completion_tokens,
        });
    }

    let first_invalid_step = steps
        .iter()
        .find(|s| s.classification == StepClass::InterfaceMisuse)
        .map(|s| s.step);
    let prompt_tokens_total = steps.iter().map(|s| s.prompt_tokens).sum();
    let completion_tokens_total = steps.iter().map(|s| s.completion_tokens).sum();
    RunRecord {
        run_id,
        family: task.family,
        config: config.clone(),
        status,
        success,
        checker_reason,
        final_answer,
        steps_to_success,
        first_invalid_step,
        toolset_tokens: ctx.toolset.token_count,
        prompt_tokens_total,
        completion_tokens_total,
        steps,
    }
}

// ---------------------------------------------------------------------------
// Matrix execution
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSpec {
    pub budgets: Vec<usize>,
    pub conditions: Vec<Condition>,
    pub seeds: Vec<u64>,
    /// Granularity applied to condition-C cells.
    pub granularity: Granularity,
    pub step_timeout_ms: u64,
    pub max_step_output_chars: usize,
}

impl Default for MatrixSpec {
    fn default() -> Self {
        MatrixSpec {
            budgets: vec![3, 5, 8, 12],
            conditions: Condition::ALL.to_vec(),
            seeds: vec![0, 1, 2],
            granularity: Granularity::C3,
            step_timeout_ms: 30_000,
            max_step_output_chars: 4096,
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("matrix factor `{0}` is empty")]
    EmptyFactor(&'static str),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("log line {line}: {source}")]
    Log {
        line: usize,
        source: serde_json::Error,
    },
}

/// Expand the full cell list in declared order: task, budget, condition,
/// seed.
pub fn matrix_cells(pack: &[TaskInstance], spec: &MatrixSpec) -> Vec<EpisodeConfig> {
    let mut cells = Vec::new();
    for task in pack {
        for &budget in &spec.budgets {
            for &condition in &spec.conditions {
                for &seed in &spec.seeds {
                    cells.push(EpisodeConfig::new(
                        task.task_id.clone(),
                        budget,
                        condition,
                        seed,
                        spec.granularity,
                        spec.step_timeout_ms,
                        spec.max_step_output_chars,
                    ));
                }
            }
        }
    }
    cells
}

/// Run every cell of the matrix. Episodes execute in parallel; a single
/// writer appends finished runs to `log` in cell order, so log bytes are a
/// pure function of the inputs for deterministic transports.
pub fn run_matrix(
    pack: &[TaskInstance],
    contracts: &[ToolContract],
    spec: &MatrixSpec,
    transport: &dyn AgentTransport,
    tokenizer: &dyn Tokenizer,
    mut log: Option<&mut (dyn Write + Send)>,
) -> Result<Vec<RunRecord>, HarnessError> {
    if pack.is_empty() {
        return Err(HarnessError::EmptyFactor("tasks"));
    }
    if spec.budgets.is_empty() {
        return Err(HarnessError::EmptyFactor("budgets"));
    }
    if spec.conditions.is_empty() {
        return Err(HarnessError::EmptyFactor("conditions"));
    }
    if spec.seeds.is_empty() {
        return Err(HarnessError::EmptyFactor("seeds"));
    }

    let by_id: BTreeMap<&str, &TaskInstance> =
        pack.iter().map(|t| (t.task_id.as_str(), t)).collect();
    let toolsets: BTreeMap<Condition, ToolsetText> = spec
        .conditions
        .iter()
        .map(|&c| (c, render_toolset(contracts, c, tokenizer)))
        .collect();
    let cells = matrix_cells(pack, spec);

    let (tx, rx) = mpsc::channel::<(usize, RunRecord)>();
    let records = std::thread::scope(|scope| -> Result<Vec<RunRecord>, HarnessError> {
        let writer = scope.spawn(move || -> Result<Vec<RunRecord>, HarnessError> {
            let mut pending: BTreeMap<usize, RunRecord> = BTreeMap::new();
            let mut next = 0usize;
            let mut ordered = Vec::new();
            for (idx, record) in rx {
                pending.insert(idx, record);
                while let Some(record) = pending.remove(&next) {
                    if let Some(log) = log.as_deref_mut() {
                        write_run(log, &record)?;
                    }
                    ordered.push(record);
                    next += 1;
                }
            }
            Ok(ordered)
        });

        cells.par_iter().enumerate().for_each_with(tx, |tx, (idx, config)| {
            let task = by_id[config.task_id.as_str()];
            let ctx = EpisodeContext {
                contracts,
                toolset: &toolsets[&config.condition],
                tokenizer,
            };
            let record = run_episode(config, task, &ctx, transport);
            // A send failure means the writer died; its own error surfaces.
            let _ = tx.send((idx, record));
        });

        writer.join().expect("log writer panicked")
    })?;
    Ok(records)
}

// ---------------------------------------------------------------------------
// Trajectory log (JSON Lines)
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct StepLine<'a> {
    record: &'static str,
    run_id: &'a str,
    #[serde(flatten)]
    step: &'a StepRecord,
}

#[derive(Serialize)]
struct RunLine<'a> {
    record: &'static str,
    #[serde(flatten)]
    run: &'a RunRecord,
}

/// Append one run: a line per step, then the run summary.
pub fn write_run(log: &mut dyn Write, run: &RunRecord) -> io::Result<()> {
    for step in &run.steps {
        let line = serde_json::to_string(&StepLine {
            record: "step",
            run_id: &run.run_id,
            step,
        })?;
        writeln!(log, "{line}")?;
    }
    let line = serde_json::to_string(&RunLine {
        record: "run",
        run,
    })?;
    writeln!(log, "{line}")?;
    Ok(())
}

/// Read the run summaries back out of a trajectory log.
pub fn read_log_runs(text: &str) -> Result<Vec<RunRecord>, HarnessError> {
    let mut runs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: Value =
            serde_json::from_str(line).map_err(|source| HarnessError::Log { line: i + 1, source })?;
        if value.get("record").and_then(Value::as_str) == Some("run") {
            let run = serde_json::from_value(value)
                .map_err(|source| HarnessError::Log { line: i + 1, source })?;
            runs.push(run);
        }
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::agents::{scripted_agent, TimeoutInjector};
    use crate::families::generate_task;
    use crate::sandbox::Robustness;
    use crate::standard::standard_contracts;
    use crate::tokenize::WhitespaceTokenizer;
    use crate::validate::ToolCall;

    fn pack() -> Arc<Vec<TaskInstance>> {
        Arc::new(
            Family::ALL
                .iter()
                .map(|&f| generate_task(f, 0, &Robustness::default()))
                .collect(),
        )
    }

    fn ctx_for<'a>(
        contracts: &'a [ToolContract],
        toolset: &'a ToolsetText,
    ) -> EpisodeContext<'a> {
        EpisodeContext {
            contracts,
            toolset,
            tokenizer: &WhitespaceTokenizer,
        }
    }

    fn config(task_id: &str, budget: usize, condition: Condition) -> EpisodeConfig {
        EpisodeConfig::new(task_id, budget, condition, 0, Granularity::C3, 1000, 4096)
    }

    #[test]
    fn silent_agent_burns_the_whole_budget_as_malformed_json() {
        let pack = pack();
        let contracts = standard_contracts();
        let toolset = render_toolset(&contracts, Condition::B, &WhitespaceTokenizer);
        let agent = scripted_agent("silent", &pack).unwrap();
        let cfg = config(&pack[0].task_id, 3, Condition::B);
        let run = run_episode(&cfg, &pack[0], &ctx_for(&contracts, &toolset), agent.as_ref());
        assert_eq!(run.steps.len(), 3);
        assert!(!run.success);
        assert!(run.status.is_scored());
        assert_eq!(run.first_invalid_step, Some(1));
        for step in &run.steps {
            assert_eq!(step.classification, StepClass::InterfaceMisuse);
            assert_eq!(step.subcategory, Some(Subcategory::MalformedJson));
        }
    }

    #[test]
    fn perfect_agent_succeeds_cleanly_on_every_task() {
        let pack = pack();
        let contracts = standard_contracts();
        let agent = scripted_agent("perfect", &pack).unwrap();
        for task in pack.iter() {
            for condition in Condition::ALL {
                let toolset = render_toolset(&contracts, condition, &WhitespaceTokenizer);
                let cfg = config(&task.task_id, 8, condition);
                let run = run_episode(&cfg, task, &ctx_for(&contracts, &toolset), agent.as_ref());
                assert!(run.success, "{} under {condition:?}: {:?}", task.task_id, run.checker_reason);
                assert!(run.steps_to_success.unwrap() <= 8);
                assert!(run.steps.iter().all(|s| matches!(
                    s.classification,
                    StepClass::ValidProductive | StepClass::FinalAnswer
                )));
            }
        }
    }

    #[test]
    fn classification_priority_follows_the_taxonomy() {
        let contracts = standard_contracts();
        // Two violations; the one at the lexicographically first path is an
        // enum violation, so that is the step's subcategory.
        let call = ToolCall {
            name: "get_metric".into(),
            args: json!({"service": "api", "metric_key": "latency", "window": {"minutes": 15}}),
            raw_text: String::new(),
        };
        let report = validate_args(&call, &contracts);
        let parsed = ParsedOutput::Call(call);
        let (class, sub) = classify_step(&parsed, Some(&report), None, None);
        assert_eq!(class, StepClass::InterfaceMisuse);
        assert_eq!(sub, Some(Subcategory::EnumViolation));

        // Valid call, runtime error.
        let call = ToolCall {
            name: "read_file".into(),
            args: json!({"path": "nope.txt"}),
            raw_text: String::new(),
        };
        let report = validate_args(&call, &contracts);
        let result = ToolResult {
            status: ToolStatus::RuntimeError,
            payload: Value::String("path not found".into()),
            mutated_state: false,
        };
        let parsed = ParsedOutput::Call(call);
        let (class, _) = classify_step(&parsed, Some(&report), Some(&result), None);
        assert_eq!(class, StepClass::ExecutionFailure);

        // Valid, executable, off-oracle.
        let (class, _) = classify_step(
            &parsed,
            Some(&report),
            Some(&ToolResult {
                status: ToolStatus::Ok,
                payload: json!({}),
                mutated_state: false,
            }),
            Some(&OracleVerdict::SemanticMisuse),
        );
        assert_eq!(class, StepClass::SemanticMisuse);
    }

    #[test]
    fn injected_timeout_excludes_the_run_without_a_success_claim() {
        let pack = pack();
        let contracts = standard_contracts();
        let toolset = render_toolset(&contracts, Condition::A, &WhitespaceTokenizer);
        let inner = scripted_agent("perfect", &pack).unwrap();
        let repo_id = pack
            .iter()
            .find(|t| t.family == Family::RepoDebug)
            .unwrap()
            .task_id
            .clone();
        let agent = TimeoutInjector::new(inner, repo_id.clone(), 0);
        let task = pack.iter().find(|t| t.task_id == repo_id).unwrap();
        let cfg = config(&repo_id, 8, Condition::A);
        let run = run_episode(&cfg, task, &ctx_for(&contracts, &toolset), &agent);
        assert_eq!(
            run.status,
            RunStatus::Excluded {
                reason: "agent_timeout".into()
            }
        );
        assert!(!run.success);
        assert!(run.steps.is_empty());
    }

    #[test]
    fn matrix_cell_order_is_task_budget_condition_seed() {
        let pack = pack();
        let spec = MatrixSpec {
            budgets: vec![3, 5],
            conditions: vec![Condition::A, Condition::B],
            seeds: vec![0, 1],
            ..MatrixSpec::default()
        };
        let cells = matrix_cells(&pack[..1], &spec);
        let ids: Vec<String> = cells.iter().map(|c| c.run_id()).collect();
        assert_eq!(
            ids,
            vec![
                format!("{}:b3:A:s0", pack[0].task_id),
                format!("{}:b3:A:s1", pack[0].task_id),
                format!("{}:b3:B:s0", pack[0].task_id),
                format!("{}:b3:B:s1", pack[0].task_id),
                format!("{}:b5:A:s0", pack[0].task_id),
                format!("{}:b5:A:s1", pack[0].task_id),
                format!("{}:b5:B:s0", pack[0].task_id),
                format!("{}:b5:B:s1", pack[0].task_id),
            ]
        );
    }

    #[test]
    fn matrix_log_is_deterministic_and_round_trips() {
        let pack = pack();
        let contracts = standard_contracts();
        let agent = scripted_agent("perfect", &pack).unwrap();
        let spec = MatrixSpec {
            budgets: vec![3, 8],
            seeds: vec![0, 1],
            ..MatrixSpec::default()
        };
        let mut log_a: Vec<u8> = Vec::new();
        let runs_a = run_matrix(
            &pack,
            &contracts,
            &spec,
            agent.as_ref(),
            &WhitespaceTokenizer,
            Some(&mut log_a),
        )
        .unwrap();
        let mut log_b: Vec<u8> = Vec::new();
        let runs_b = run_matrix(
            &pack,
            &contracts,
            &spec,
            agent.as_ref(),
            &WhitespaceTokenizer,
            Some(&mut log_b),
        )
        .unwrap();
        assert_eq!(runs_a.len(), 4 * 2 * 3 * 2);
        assert_eq!(runs_a, runs_b);
        assert_eq!(log_a, log_b, "matrix reruns must be byte-identical");

        let parsed = read_log_runs(std::str::from_utf8(&log_a).unwrap()).unwrap();
        assert_eq!(parsed, runs_a);
        // Logged cell order matches declared order.
        let expected: Vec<String> = matrix_cells(&pack, &spec)
            .iter()
            .map(|c| c.run_id())
            .collect();
        let got: Vec<String> = parsed.iter().map(|r| r.run_id.clone()).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn feedback_ignoring_transport_isolates_the_condition_variable() {
        let pack = pack();
        let contracts = standard_contracts();
        let agent = scripted_agent("repeater", &pack).unwrap();
        let task = &pack[0];
        let mut outputs = Vec::new();
        for condition in Condition::ALL {
            let toolset = render_toolset(&contracts, condition, &WhitespaceTokenizer);
            let cfg = config(&task.task_id, 5, condition);
            let run = run_episode(&cfg, task, &ctx_for(&contracts, &toolset), agent.as_ref());
            outputs.push(
                run.steps
                    .iter()
                    .map(|s| (s.raw_output.clone(), s.classification))
                    .collect::<Vec<_>>(),
            );
        }
        assert_eq!(outputs[0], outputs[1]);
        assert_eq!(outputs[1], outputs[2]);
    }

    #[test]
    fn truncation_turns_an_overlong_reply_into_malformed_json() {
        let pack = pack();
        let contracts = standard_contracts();
        let toolset = render_toolset(&contracts, Condition::B, &WhitespaceTokenizer);
        let agent = scripted_agent("perfect", &pack).unwrap();
        let mut cfg = config(&pack[0].task_id, 2, Condition::B);
        cfg.max_step_output_chars = 10;
        let run = run_episode(&cfg, &pack[0], &ctx_for(&contracts, &toolset), agent.as_ref());
        assert_eq!(run.steps[0].classification, StepClass::InterfaceMisuse);
        assert_eq!(run.steps[0].subcategory, Some(Subcategory::MalformedJson));
        assert!(run.steps[0].raw_output.chars().count() <= 10);
    }

    #[test]
    fn prompt_tokens_grow_with_history_and_count_the_toolset() {
        let pack = pack();
        let contracts = standard_contracts();
        let toolset = render_toolset(&contracts, Condition::B, &WhitespaceTokenizer);
        let agent = scripted_agent("repeater", &pack).unwrap();
        let cfg = config(&pack[0].task_id, 3, Condition::B);
        let run = run_episode(&cfg, &pack[0], &ctx_for(&contracts, &toolset), agent.as_ref());
        assert_eq!(run.toolset_tokens, toolset.token_count);
        assert!(run.steps[0].prompt_tokens >= toolset.token_count);
        assert!(run.steps[1].prompt_tokens > run.steps[0].prompt_tokens);
        assert!(run.steps[2].prompt_tokens > run.steps[1].prompt_tokens);
    }
}
