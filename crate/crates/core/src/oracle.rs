//! Trace oracles: semantic alignment of schema-valid calls.
//!
//! An oracle is a small labelled transition system over evidence states.
//! Each state lists admissible call classes; a call is aligned iff it
//! matches an admissible class in at least one currently-held state. The
//! current position is a state SET, which represents branching and partial
//! orders without a partial-order checker. Misuse never moves the set, so
//! every prefix of an aligned trace stays aligned.
//!
//! Repeating an identical call is misuse by default: transitions may not
//! self-loop, so after a call fires its class the set has moved on.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::contract::resolve_path;
use crate::sandbox::{check_final_answer, SolutionStep, TaskInstance};
use crate::validate::ToolCall;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredicateOp {
    Eq,
    In,
    Any,
}

/// One constraint on a call argument, decidable from the args alone
/// (values are baked in from ground truth at generation time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgPredicate {
    pub path: String,
    pub op: PredicateOp,
    pub value: Value,
}

impl ArgPredicate {
    pub fn holds(&self, args: &Value) -> bool {
        let resolved = resolve_path(args, &self.path);
        match self.op {
            PredicateOp::Any => resolved.is_some(),
            PredicateOp::Eq => resolved == Some(&self.value),
            PredicateOp::In => match (&self.value, resolved) {
                (Value::Array(allowed), Some(v)) => allowed.contains(v),
                _ => false,
            },
        }
    }
}

/// An admissible call class in some state, with the state the oracle moves
/// to when a call of this class fires.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Admissible {
    pub tool: String,
    pub arg_predicates: Vec<ArgPredicate>,
    pub next: String,
}

impl Admissible {
    pub fn matches(&self, call: &ToolCall) -> bool {
        call.name == self.tool && self.arg_predicates.iter().all(|p| p.holds(&call.args))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceState {
    pub state_id: String,
    /// Rubric note for auditors; not used by classification.
    pub note: String,
    pub admissible: Vec<Admissible>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceOracle {
    pub oracle_id: String,
    pub start_state: String,
    pub stop_states: Vec<String>,
    pub states: Vec<EvidenceState>,
}

impl TraceOracle {
    pub fn state(&self, id: &str) -> Option<&EvidenceState> {
        self.states.iter().find(|s| s.state_id == id)
    }

    pub fn initial_states(&self) -> BTreeSet<String> {
        BTreeSet::from([self.start_state.clone()])
    }

    /// True if the current position admits stopping with a final answer.
    pub fn admits_stop(&self, current: &BTreeSet<String>) -> bool {
        current.iter().any(|s| self.stop_states.contains(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleVerdict {
    Aligned,
    SemanticMisuse,
}

/// Classify one schema-valid, executable call against the current state
/// set. Aligned iff admissible in at least one held state; the next set is
/// every transition target. Misuse leaves the set unchanged.
pub fn classify_call(
    oracle: &TraceOracle,
    current: &BTreeSet<String>,
    call: &ToolCall,
) -> (OracleVerdict, BTreeSet<String>) {
    let mut next = BTreeSet::new();
    for state_id in current {
        let Some(state) = oracle.state(state_id) else {
            continue;
        };
        for adm in &state.admissible {
            if adm.matches(call) {
                next.insert(adm.next.clone());
            }
        }
    }
    if next.is_empty() {
        (OracleVerdict::SemanticMisuse, current.clone())
    } else {
        (OracleVerdict::Aligned, next)
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleFinding {
    pub rule: String,
    pub detail: String,
}

fn finding(rule: &str, detail: String) -> OracleFinding {
    OracleFinding {
        rule: rule.to_string(),
        detail,
    }
}

/// Length (in transitions) of the shortest start→stop path, if any.
pub fn shortest_stop_distance(oracle: &TraceOracle) -> Option<usize> {
    let mut seen = BTreeSet::from([oracle.start_state.clone()]);
    let mut queue = VecDeque::from([(oracle.start_state.clone(), 0usize)]);
    while let Some((id, dist)) = queue.pop_front() {
        if oracle.stop_states.contains(&id) {
            return Some(dist);
        }
        if let Some(state) = oracle.state(&id) {
            for adm in &state.admissible {
                if seen.insert(adm.next.clone()) {
                    queue.push_back((adm.next.clone(), dist + 1));
                }
            }
        }
    }
    None
}

/// Number of distinct start→stop paths of at most `max_len` transitions.
pub fn count_stop_paths(oracle: &TraceOracle, max_len: usize) -> usize {
    fn walk(oracle: &TraceOracle, id: &str, remaining: usize) -> usize {
        let mut total = if oracle.stop_states.contains(&id.to_string()) {
            1
        } else {
            0
        };
        if remaining == 0 {
            return total;
        }
        if let Some(state) = oracle.state(id) {
            for adm in &state.admissible {
                total += walk(oracle, &adm.next, remaining - 1);
            }
        }
        total
    }
    walk(oracle, &oracle.start_state, max_len)
}

/// Structural checks plus a full replay of the stored solution through the
/// tool executors and the checker. Empty findings = valid oracle.
pub fn validate_oracle(task: &TaskInstance) -> Vec<OracleFinding> {
    let oracle = &task.oracle;
    let mut findings = Vec::new();

    let mut ids = BTreeSet::new();
    for state in &oracle.states {
        if !ids.insert(state.state_id.clone()) {
            findings.push(finding(
                "duplicate-state",
                format!("state `{}` declared twice", state.state_id),
            ));
        }
    }
    if !ids.contains(&oracle.start_state) {
        findings.push(finding(
            "missing-state",
            format!("start state `{}` not declared", oracle.start_state),
        ));
    }
    for stop in &oracle.stop_states {
        if !ids.contains(stop) {
            findings.push(finding(
                "missing-state",
                format!("stop state `{stop}` not declared"),
            ));
        }
    }
    for state in &oracle.states {
        for adm in &state.admissible {
            if !ids.contains(&adm.next) {
                findings.push(finding(
                    "missing-state",
                    format!(
                        "transition from `{}` targets undeclared `{}`",
                        state.state_id, adm.next
                    ),
                ));
            }
            if adm.next == state.state_id {
                findings.push(finding(
                    "self-loop",
                    format!("state `{}` transitions to itself", state.state_id),
                ));
            }
        }
        if state.admissible.is_empty() && !oracle.stop_states.contains(&state.state_id) {
            findings.push(finding(
                "dead-state",
                format!("non-stop state `{}` admits no calls", state.state_id),
            ));
        }
    }

    // Reachability from start.
    let mut reachable = BTreeSet::from([oracle.start_state.clone()]);
    let mut queue = VecDeque::from([oracle.start_state.clone()]);
    while let Some(id) = queue.pop_front() {
        if let Some(state) = oracle.state(&id) {
            for adm in &state.admissible {
                if reachable.insert(adm.next.clone()) {
                    queue.push_back(adm.next.clone());
                }
            }
        }
    }
    for state in &oracle.states {
        if !reachable.contains(&state.state_id) {
            findings.push(finding(
                "unreachable-state",
                format!("state `{}` unreachable from start", state.state_id),
            ));
        }
    }

    // Shortest trace must fit a moderate budget: calls plus the final
    // answer within 8 steps.
    match shortest_stop_distance(oracle) {
        Some(dist) if dist < 8 => {}
        Some(dist) => findings.push(finding(
            "exceeds-moderate-budget",
            format!("shortest trace needs {} steps", dist + 1),
        )),
        None => findings.push(finding(
            "exceeds-moderate-budget",
            format!("no stop state reachable from `{}`", oracle.start_state),
        )),
    }

    findings.extend(replay_solution(task));
    findings
}

/// Replay the stored solution: every call must be aligned and execute
/// without runtime error; the final answer must come in a stop state and
/// satisfy the checker within 8 steps.
fn replay_solution(task: &TaskInstance) -> Vec<OracleFinding> {
    let mut findings = Vec::new();
    if task.solution.len() > 8 {
        findings.push(finding(
            "solution-exceeds-budget",
            format!("{} steps", task.solution.len()),
        ));
    }
    let mut state = task.fresh_state();
    let mut current = task.oracle.initial_states();
    let mut answered = false;
    for (idx, step) in task.solution.iter().enumerate() {
        match step {
            SolutionStep::Call { tool, args } => {
                let call = ToolCall {
                    name: tool.clone(),
                    args: args.clone(),
                    raw_text: String::new(),
                };
                let (verdict, next) = classify_call(&task.oracle, &current, &call);
                if verdict != OracleVerdict::Aligned {
                    findings.push(finding(
                        "solution-misaligned",
                        format!("step {} ({tool}) not admissible", idx + 1),
                    ));
                    return findings;
                }
                current = next;
                let result = crate::tools::execute_tool(&call, &mut state);
                if result.status != crate::tools::ToolStatus::Ok {
                    findings.push(finding(
                        "solution-runtime-error",
                        format!("step {} ({tool}): {}", idx + 1, result.payload),
                    ));
                    return findings;
                }
            }
            SolutionStep::Final { answer } => {
                answered = true;
                if !task.oracle.admits_stop(&current) {
                    findings.push(finding(
                        "solution-does-not-stop",
                        format!("final answer at step {} outside stop states", idx + 1),
                    ));
                }
                let verdict = check_final_answer(answer, task, &state);
                if !verdict.success {
                    findings.push(finding(
                        "solution-fails-checker",
                        format!("checker reason: {}", verdict.reason),
                    ));
                }
            }
        }
    }
    if !answered {
        findings.push(finding(
            "solution-missing-final",
            "solution ends without a final answer".into(),
        ));
    }
    findings
}

// ---------------------------------------------------------------------------
// Inter-annotator agreement
// ---------------------------------------------------------------------------

/// Two-rater, two-category Cohen's κ. Returns 1 when chance agreement is
/// total and the raters agree everywhere.
pub fn cohen_kappa(a: &[OracleVerdict], b: &[OracleVerdict]) -> Result<f64, String> {
    if a.len() != b.len() {
        return Err(format!(
            "label lists differ in length: {} vs {}",
            a.len(),
            b.len()
        ));
    }
    if a.is_empty() {
        return Err("label lists are empty".into());
    }
    let n = a.len() as f64;
    let observed = a
        .iter()
        .zip(b)
        .filter(|(x, y)| x == y)
        .count() as f64
        / n;
    let pa_a = a.iter().filter(|v| **v == OracleVerdict::Aligned).count() as f64 / n;
    let pa_b = b.iter().filter(|v| **v == OracleVerdict::Aligned).count() as f64 / n;
    let expected = pa_a * pa_b + (1.0 - pa_a) * (1.0 - pa_b);
    if (1.0 - expected).abs() < f64::EPSILON {
        return Ok(1.0);
    }
    Ok((observed - expected) / (1.0 - expected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::generate_task;
    use crate::sandbox::{Family, Robustness};
    use serde_json::json;

    fn call(name: &str, args: Value) -> ToolCall {
        ToolCall {
            name: name.into(),
            args,
            raw_text: String::new(),
        }
    }

    fn toy_oracle() -> TraceOracle {
        TraceOracle {
            oracle_id: "toy".into(),
            start_state: "s0".into(),
            stop_states: vec!["done".into()],
            states: vec![
                EvidenceState {
                    state_id: "s0".into(),
                    note: "look at the right service first".into(),
                    admissible: vec![
                        Admissible {
                            tool: "search_logs".into(),
                            arg_predicates: vec![ArgPredicate {
                                path: "$.service".into(),
                                op: PredicateOp::Eq,
                                value: json!("api"),
                            }],
                            next: "done".into(),
                        },
                        Admissible {
                            tool: "get_metric".into(),
                            arg_predicates: vec![ArgPredicate {
                                path: "$.service".into(),
                                op: PredicateOp::In,
                                value: json!(["api", "auth"]),
                            }],
                            next: "metrics".into(),
                        },
                    ],
                },
                EvidenceState {
                    state_id: "metrics".into(),
                    note: "confirm in the logs".into(),
                    admissible: vec![Admissible {
                        tool: "search_logs".into(),
                        arg_predicates: vec![ArgPredicate {
                            path: "$.query".into(),
                            op: PredicateOp::Any,
                            value: Value::Null,
                        }],
                        next: "done".into(),
                    }],
                },
                EvidenceState {
                    state_id: "done".into(),
                    note: "enough evidence to answer".into(),
                    admissible: vec![],
                },
            ],
        }
    }

    #[test]
    fn aligned_call_advances_the_state_set() {
        let oracle = toy_oracle();
        let current = oracle.initial_states();
        let (verdict, next) = classify_call(
            &oracle,
            &current,
            &call("search_logs", json!({"query": "x", "service": "api"})),
        );
        assert_eq!(verdict, OracleVerdict::Aligned);
        assert!(oracle.admits_stop(&next));
    }

    #[test]
    fn misuse_leaves_the_state_set_unchanged() {
        let oracle = toy_oracle();
        let current = oracle.initial_states();
        let (verdict, next) = classify_call(
            &oracle,
            &current,
            &call("get_metric", json!({"service": "payments"})),
        );
        assert_eq!(verdict, OracleVerdict::SemanticMisuse);
        assert_eq!(next, current);
    }

    #[test]
    fn repeating_a_non_progressing_call_is_misuse() {
        let oracle = toy_oracle();
        let c = call("get_metric", json!({"service": "auth"}));
        let (v1, after) = classify_call(&oracle, &oracle.initial_states(), &c);
        assert_eq!(v1, OracleVerdict::Aligned);
        let (v2, unchanged) = classify_call(&oracle, &after, &c);
        assert_eq!(v2, OracleVerdict::SemanticMisuse);
        assert_eq!(unchanged, after);
    }

    #[test]
    fn prefix_of_an_aligned_trace_stays_aligned() {
        let oracle = toy_oracle();
        let trace = [
            call("get_metric", json!({"service": "auth"})),
            call("search_logs", json!({"query": "timeout"})),
        ];
        let mut current = oracle.initial_states();
        for c in &trace {
            let (v, next) = classify_call(&oracle, &current, c);
            assert_eq!(v, OracleVerdict::Aligned);
            current = next;
        }
        assert!(oracle.admits_stop(&current));
    }

    #[test]
    fn unreachable_and_self_loop_states_are_findings() {
        let task = generate_task(Family::LogDiagnosis, 3, &Robustness::default());
        let mut broken = task.clone();
        broken.oracle.states.push(EvidenceState {
            state_id: "island".into(),
            note: String::new(),
            admissible: vec![],
        });
        let first_id = broken.oracle.states[0].state_id.clone();
        broken.oracle.states[0].admissible.push(Admissible {
            tool: "list_dir".into(),
            arg_predicates: vec![],
            next: first_id,
        });
        let findings = validate_oracle(&broken);
        let rules: Vec<&str> = findings.iter().map(|f| f.rule.as_str()).collect();
        assert!(rules.contains(&"unreachable-state"), "{rules:?}");
        assert!(rules.contains(&"self-loop"), "{rules:?}");
    }

    #[test]
    fn nine_step_shortest_trace_exceeds_the_moderate_budget() {
        let mut states: Vec<EvidenceState> = (0..9)
            .map(|i| EvidenceState {
                state_id: format!("s{i}"),
                note: String::new(),
                admissible: vec![Admissible {
                    tool: "list_dir".into(),
                    arg_predicates: vec![],
                    next: format!("s{}", i + 1),
                }],
            })
            .collect();
        states.push(EvidenceState {
            state_id: "s9".into(),
            note: String::new(),
            admissible: vec![],
        });
        let oracle = TraceOracle {
            oracle_id: "long".into(),
            start_state: "s0".into(),
            stop_states: vec!["s9".into()],
            states,
        };
        assert_eq!(shortest_stop_distance(&oracle), Some(9));
        let mut task = generate_task(Family::LogDiagnosis, 4, &Robustness::default());
        task.oracle = oracle;
        task.solution.clear();
        let findings = validate_oracle(&task);
        assert!(
            findings.iter().any(|f| f.rule == "exceeds-moderate-budget"),
            "{findings:?}"
        );
    }

    #[test]
    fn generated_tasks_validate_cleanly_and_declare_branches() {
        for family in Family::ALL {
            for seed in 0..3u64 {
                let task = generate_task(family, seed, &Robustness::default());
                let findings = validate_oracle(&task);
                assert!(
                    findings.is_empty(),
                    "{family} seed {seed}: {findings:?}"
                );
                assert!(
                    count_stop_paths(&task.oracle, 8) >= 2,
                    "{family} seed {seed}: fewer than two aligned traces"
                );
            }
        }
    }

    #[test]
    fn kappa_is_one_for_identical_lists() {
        let labels = vec![
            OracleVerdict::Aligned,
            OracleVerdict::SemanticMisuse,
            OracleVerdict::Aligned,
        ];
        assert_eq!(cohen_kappa(&labels, &labels).unwrap(), 1.0);
    }

    #[test]
    fn kappa_is_minus_one_for_opposite_balanced_lists() {
        let a = vec![
            OracleVerdict::Aligned,
            OracleVerdict::Aligned,
            OracleVerdict::SemanticMisuse,
            OracleVerdict::SemanticMisuse,
        ];
        let b = vec![
            OracleVerdict::SemanticMisuse,
            OracleVerdict::SemanticMisuse,
            OracleVerdict::Aligned,
            OracleVerdict::Aligned,
        ];
        assert_eq!(cohen_kappa(&a, &b).unwrap(), -1.0);
    }

    #[test]
    fn kappa_matches_hand_computation() {
        // 10 calls: agree on 7 (5 aligned, 2 misuse), disagree on 3.
        // p_o = 0.7; rater A marks 7 aligned, rater B marks 6 aligned;
        // p_e = 0.7*0.6 + 0.3*0.4 = 0.54; κ = (0.7-0.54)/0.46.
        use OracleVerdict::{Aligned as A, SemanticMisuse as M};
        let a = vec![A, A, A, A, A, M, M, A, A, M];
        let b = vec![A, A, A, A, A, M, M, M, M, A];
        let got = cohen_kappa(&a, &b).unwrap();
        let want = (0.7 - 0.54) / (1.0 - 0.54);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn kappa_handles_total_chance_agreement() {
        let a = vec![OracleVerdict::Aligned; 4];
        assert_eq!(cohen_kappa(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn kappa_rejects_mismatched_lengths() {
        let a = vec![OracleVerdict::Aligned];
        let b = vec![OracleVerdict::Aligned, OracleVerdict::Aligned];
        assert!(cohen_kappa(&a, &b).is_err());
    }
}
