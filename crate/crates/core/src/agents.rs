//! Agent transports: the pluggable "other side" of an episode.
//!
//! A transport receives everything the agent is allowed to see — system
//! prompt, rendered toolset, task statement, history — and returns raw text.
//! Ground truth and oracles never cross this boundary; the scripted doubles
//! below hold their own copy of the task pack instead of being fed answers
//! through the request.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::sandbox::{SolutionStep, TaskInstance};
use crate::taxonomy::Condition;

/// Role name for agent-authored history items.
pub const ROLE_AGENT: &str = "assistant";
/// Role name for observations and feedback shown to the agent.
pub const ROLE_ENV: &str = "user";

/// One prior exchange in an episode, oldest first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryItem {
    pub role: String,
    pub text: String,
}

impl HistoryItem {
    pub fn agent(text: impl Into<String>) -> Self {
        HistoryItem {
            role: ROLE_AGENT.to_string(),
            text: text.into(),
        }
    }

    pub fn env(text: impl Into<String>) -> Self {
        HistoryItem {
            role: ROLE_ENV.to_string(),
            text: text.into(),
        }
    }
}

/// Everything one step shows the agent. Serializes to the remote wire
/// format; the timeout rides along for the transport but stays off the wire.
#[derive(Debug, Clone, Serialize)]
pub struct TransportRequest<'a> {
    pub run_id: &'a str,
    pub step: usize,
    pub budget: usize,
    pub condition: Condition,
    pub system_prompt: &'a str,
    pub toolset_text: &'a str,
    pub task_statement: &'a str,
    pub history: &'a [HistoryItem],
    #[serde(skip)]
    pub step_timeout_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// No reply within the step timeout.
    Timeout,
    /// Connection or protocol failure.
    Failed(String),
}

impl TransportError {
    /// The exclusion reason recorded on the run.
    pub fn exclusion_reason(&self) -> &'static str {
        match self {
            TransportError::Timeout => "agent_timeout",
            TransportError::Failed(_) => "transport_error",
        }
    }
}

/// Produces the agent's raw text for one step.
pub trait AgentTransport: Send + Sync {
    fn kind(&self) -> &'static str;
    fn name(&self) -> &'static str;
    fn reply(&self, request: &TransportRequest) -> Result<String, TransportError>;
}

// ---------------------------------------------------------------------------
// Scripted agents
// ---------------------------------------------------------------------------

/// The task id is the run id's first `:`-separated segment.
fn task_id_of(run_id: &str) -> &str {
    run_id.split(':').next().unwrap_or(run_id)
}

/// The episode seed is the trailing `s<N>` segment of the run id.
fn seed_of(run_id: &str) -> Option<u64> {
    let last = run_id.rsplit(':').next()?;
    last.strip_prefix('s')?.parse().ok()
}

fn find_task<'a>(pack: &'a [TaskInstance], run_id: &str) -> Result<&'a TaskInstance, TransportError> {
    let id = task_id_of(run_id);
    pack.iter()
        .find(|t| t.task_id == id)
        .ok_or_else(|| TransportError::Failed(format!("no task `{id}` in scripted pack")))
}

/// Render a solution step as agent output text.
fn step_text(step: &SolutionStep) -> String {
    match step {
        SolutionStep::Call { tool, args } => json!({"tool": tool, "args": args}).to_string(),
        SolutionStep::Final { answer } => match serde_json::from_str::<serde_json::Value>(answer) {
            Ok(v) => json!({"final_answer": v}).to_string(),
            Err(_) => json!({"final_answer": answer}).to_string(),
        },
    }
}

fn agent_turns(history: &[HistoryItem]) -> usize {
    history.iter().filter(|h| h.role == ROLE_AGENT).count()
}

/// A `get_metric` probe; `metric_key` decides its validity.
fn metric_probe(metric_key: &str) -> String {
    json!({
        "tool": "get_metric",
        "args": {"service": "api", "metric_key": metric_key, "window": {"minutes": 5}}
    })
    .to_string()
}

/// The synonym a sloppy reader produces for `p95_latency`.
const ENUM_SYNONYM: &str = "latency95";
const ENUM_CORRECT: &str = "p95_latency";

/// Replays the task's stored solution verbatim, then stays silent if queried
/// past its end.
pub struct PerfectAgent {
    pack: Arc<Vec<TaskInstance>>,
}

impl AgentTransport for PerfectAgent {
    fn kind(&self) -> &'static str {
        "scripted"
    }

    fn name(&self) -> &'static str {
        "perfect"
    }

    fn reply(&self, request: &TransportRequest) -> Result<String, TransportError> {
        let task = find_task(&self.pack, request.run_id)?;
        Ok(task
            .solution
            .get(agent_turns(request.history))
            .map(step_text)
            .unwrap_or_default())
    }
}

/// Misreads enum values when documentation is prose: under condition A it
/// keeps probing with an enum synonym until some feedback spells out the
/// allowed values; under B and C the schema steers it and it plays the
/// solution after one well-formed probe.
pub struct ProseConfusedAgent {
    pack: Arc<Vec<TaskInstance>>,
}

impl AgentTransport for ProseConfusedAgent {
    fn kind(&self) -> &'static str {
        "scripted"
    }

    fn name(&self) -> &'static str {
        "prose_confused"
    }

    fn reply(&self, request: &TransportRequest) -> Result<String, TransportError> {
        let task = find_task(&self.pack, request.run_id)?;
        let corrected = request
            .history
            .iter()
            .any(|h| h.role == ROLE_ENV && h.text.contains(ENUM_CORRECT));
        if request.condition == Condition::A && !corrected {
            return Ok(metric_probe(ENUM_SYNONYM));
        }
        let turns = agent_turns(request.history);
        // Invalid probes consumed turns without advancing the plan; replay
        // relative to the first well-formed turn.
        let invalid_turns = request
            .history
            .iter()
            .filter(|h| h.role == ROLE_AGENT && h.text.contains(ENUM_SYNONYM))
            .count();
        let phase = turns - invalid_turns;
        if phase == 0 {
            return Ok(metric_probe(ENUM_CORRECT));
        }
        Ok(task
            .solution
            .get(phase - 1)
            .map(step_text)
            .unwrap_or_default())
    }
}

/// Opens with a deliberately invalid probe, then recovers only once feedback
/// carries a structured violation body — so C2/C3 rescue it and C1 never
/// does.
pub struct RecovererAgent {
    pack: Arc<Vec<TaskInstance>>,
}

/// Marker that separates structured diagnostics from the generic sentence.
const STRUCTURED_MARK: &str = "\"error_type\"";

impl AgentTransport for RecovererAgent {
    fn kind(&self) -> &'static str {
        "scripted"
    }

    fn name(&self) -> &'static str {
        "recoverer"
    }

    fn reply(&self, request: &TransportRequest) -> Result<String, TransportError> {
        let task = find_task(&self.pack, request.run_id)?;
        let mut structured_seen = false;
        let mut turns_after = 0usize;
        for item in request.history {
            if structured_seen && item.role == ROLE_AGENT {
                turns_after += 1;
            }
            if item.role == ROLE_ENV && item.text.contains(STRUCTURED_MARK) {
                structured_seen = true;
            }
        }
        if !structured_seen {
            return Ok(metric_probe(ENUM_SYNONYM));
        }
        Ok(task
            .solution
            .get(turns_after)
            .map(step_text)
            .unwrap_or_default())
    }
}

/// Makes the solution's first call and then repeats it until the budget
/// runs out; a source of pure semantic misuse.
pub struct RepeaterAgent {
    pack: Arc<Vec<TaskInstance>>,
}

impl AgentTransport for RepeaterAgent {
    fn kind(&self) -> &'static str {
        "scripted"
    }

    fn name(&self) -> &'static str {
        "repeater"
    }

    fn reply(&self, request: &TransportRequest) -> Result<String, TransportError> {
        let task = find_task(&self.pack, request.run_id)?;
        Ok(task.solution.first().map(step_text).unwrap_or_default())
    }
}

/// Returns empty text every step.
pub struct SilentAgent;

impl AgentTransport for SilentAgent {
    fn kind(&self) -> &'static str {
        "scripted"
    }

    fn name(&self) -> &'static str {
        "silent"
    }

    fn reply(&self, _request: &TransportRequest) -> Result<String, TransportError> {
        Ok(String::new())
    }
}

pub fn scripted_agent_names() -> &'static [&'static str] {
    &["perfect", "prose_confused", "recoverer", "repeater", "silent"]
}

/// Look up a scripted agent by name; the pack is its private answer key.
pub fn scripted_agent(
    name: &str,
    pack: &Arc<Vec<TaskInstance>>,
) -> Option<Box<dyn AgentTransport>> {
    match name {
        "perfect" => Some(Box::new(PerfectAgent { pack: pack.clone() })),
        "prose_confused" => Some(Box::new(ProseConfusedAgent { pack: pack.clone() })),
        "recoverer" => Some(Box::new(RecovererAgent { pack: pack.clone() })),
        "repeater" => Some(Box::new(RepeaterAgent { pack: pack.clone() })),
        "silent" => Some(Box::new(SilentAgent)),
        _ => None,
    }
}

/// All five scripted doubles over one pack.
pub fn scripted_agents(pack: &Arc<Vec<TaskInstance>>) -> Vec<Box<dyn AgentTransport>> {
    scripted_agent_names()
        .iter()
        .map(|n| scripted_agent(n, pack).expect("registry names are exhaustive"))
        .collect()
}

// ---------------------------------------------------------------------------
// Fault injection
// ---------------------------------------------------------------------------

/// Wraps a transport and times out every step of one (task, seed) cell
/// group, mimicking the infrastructure flakiness that excludes runs.
pub struct TimeoutInjector {
    inner: Box<dyn AgentTransport>,
    task_id: String,
    seed: u64,
}

impl TimeoutInjector {
    pub fn new(inner: Box<dyn AgentTransport>, task_id: impl Into<String>, seed: u64) -> Self {
        TimeoutInjector {
            inner,
            task_id: task_id.into(),
            seed,
        }
    }
}

impl AgentTransport for TimeoutInjector {
    fn kind(&self) -> &'static str {
        self.inner.kind()
    }

    fn name(&self) -> &'static str {
        self.inner.name()
    }

    fn reply(&self, request: &TransportRequest) -> Result<String, TransportError> {
        if task_id_of(request.run_id) == self.task_id && seed_of(request.run_id) == Some(self.seed)
        {
            return Err(TransportError::Timeout);
        }
        self.inner.reply(request)
    }
}

// ---------------------------------------------------------------------------
// Remote transport
// ---------------------------------------------------------------------------

/// HTTP bridge: POSTs the step request as JSON and reads the reply body as
/// the agent's raw text.
pub struct RemoteTransport {
    url: String,
    agent: ureq::Agent,
}

impl RemoteTransport {
    pub fn new(url: impl Into<String>) -> Self {
        RemoteTransport {
            url: url.into(),
            agent: ureq::Agent::new(),
        }
    }
}

impl AgentTransport for RemoteTransport {
    fn kind(&self) -> &'static str {
        "remote"
    }

    fn name(&self) -> &'static str {
        "remote"
    }

    fn reply(&self, request: &TransportRequest) -> Result<String, TransportError> {
        let body = serde_json::to_string(request)
            .map_err(|e| TransportError::Failed(format!("encode request: {e}")))?;
        let response = self
            .agent
            .post(&self.url)
            .timeout(Duration::from_millis(request.step_timeout_ms))
            .set("content-type", "application/json")
            .send_string(&body);
        match response {
            Ok(resp) => resp
                .into_string()
                .map_err(|e| TransportError::Failed(format!("read body: {e}"))),
            Err(ureq::Error::Status(code, _)) => {
                Err(TransportError::Failed(format!("agent endpoint returned {code}")))
            }
            Err(ureq::Error::Transport(t)) => {
                let text = t.to_string();
                if text.contains("timed out") || text.contains("timeout") {
                    Err(TransportError::Timeout)
                } else {
                    Err(TransportError::Failed(text))
                }
            }
        }
    }
}
