//! Outcome metrics, budget curves, recovery contrasts, efficiency ratios,
//! and the predeclared paired tests, all computed from trajectory logs.
//!
//! Denominator conventions, fixed here and echoed in every report:
//! - a *call step* is any consumed step that was not a final answer;
//! - interface-misuse rate I = interface-misuse steps / call steps;
//! - execution-failure rate E and semantic-misuse rate M divide by
//!   schema-valid calls (call steps minus interface-misuse steps);
//! - success S divides by scored runs (excluded runs are removed, not
//!   failed);
//! - recovery R divides by scored runs with at least one interface-misuse
//!   step and is absent — never zero — when that set is empty;
//! - median steps-to-success T is censored: failed runs contribute B+1.
//!
//! The overhead outcome is decomposed rather than collapsed into one
//! number: toolset prompt tokens per step, history growth, and mean extra
//! steps consumed after the first invalid call.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::{RunRecord, RunStatus, StepRecord};
use crate::sandbox::Family;
use crate::stats::{
    bootstrap_ci, holm_adjust, wilcoxon_signed_rank, Alternative, BootstrapCi, StatsError,
    WilcoxonResult,
};
use crate::taxonomy::{Condition, StepClass};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("duplicate run key `{0}`")]
    DuplicateKey(String),
    #[error("budget curve needs at least two distinct budgets")]
    SingleBudget,
    #[error("no prompt tokens recorded for condition {0}")]
    ZeroTokens(&'static str),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

// ---------------------------------------------------------------------------
// Step bookkeeping
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct StepCounts {
    call_steps: usize,
    interface_misuse: usize,
    execution_failure: usize,
    semantic_misuse: usize,
    valid_productive: usize,
}

impl StepCounts {
    fn add(&mut self, steps: &[StepRecord]) {
        for step in steps {
            match step.classification {
                StepClass::FinalAnswer => {}
                StepClass::InterfaceMisuse => {
                    self.call_steps += 1;
                    self.interface_misuse += 1;
                }
                StepClass::ExecutionFailure => {
                    self.call_steps += 1;
                    self.execution_failure += 1;
                }
                StepClass::SemanticMisuse => {
                    self.call_steps += 1;
                    self.semantic_misuse += 1;
                }
                StepClass::ValidProductive => {
                    self.call_steps += 1;
                    self.valid_productive += 1;
                }
            }
        }
    }

    fn schema_valid(&self) -> usize {
        self.call_steps - self.interface_misuse
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Steps consumed after the run's first interface-invalid step.
fn extra_steps_after_first_invalid(run: &RunRecord) -> Option<usize> {
    run.first_invalid_step.map(|first| run.steps.len() - first)
}

// ---------------------------------------------------------------------------
// Metrics summary
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub condition: Condition,
    pub budget: usize,
    pub runs_scored: usize,
    pub runs_excluded: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub call_steps: usize,
    pub interface_misuse_steps: usize,
    pub interface_misuse_rate: f64,
    pub schema_valid_calls: usize,
    pub execution_failures: usize,
    pub execution_failure_rate: f64,
    pub semantic_misuses: usize,
    pub semantic_misuse_rate: f64,
    /// Runs with at least one interface-misuse step.
    pub conditioned_runs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recovery_probability: Option<f64>,
    /// Censored median: failed runs contribute budget + 1.
    pub median_steps_to_success: f64,
    pub censored_runs: usize,
    pub mean_invalid_calls_per_run: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_extra_steps_after_first_invalid: Option<f64>,
    pub toolset_tokens: u64,
    pub prompt_tokens_total: u64,
    pub completion_tokens_total: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub cells: usize,
    pub scored: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub totals: Totals,
    pub rows: Vec<MetricsRow>,
}

/// Aggregate scored runs into one row per (condition, budget).
pub fn compute_metrics(runs: &[RunRecord]) -> Result<MetricsSummary, AnalysisError> {
    let mut seen = BTreeSet::new();
    for run in runs {
        if !seen.insert(run.run_id.as_str()) {
            return Err(AnalysisError::DuplicateKey(run.run_id.clone()));
        }
    }

    let mut groups: BTreeMap<(Condition, usize), Vec<&RunRecord>> = BTreeMap::new();
    for run in runs {
        groups
            .entry((run.config.condition, run.config.budget))
            .or_default()
            .push(run);
    }

    let mut rows = Vec::new();
    for ((condition, budget), group) in groups {
        let scored: Vec<&&RunRecord> = group.iter().filter(|r| r.status.is_scored()).collect();
        let excluded = group.len() - scored.len();
        let mut counts = StepCounts::default();
        let mut successes = 0usize;
        let mut conditioned = 0usize;
        let mut recovered = 0usize;
        let mut extra_steps_sum = 0usize;
        let mut t_values = Vec::with_capacity(scored.len());
        let mut censored = 0usize;
        let mut prompt_tokens = 0u64;
        let mut completion_tokens = 0u64;
        for run in &scored {
            counts.add(&run.steps);
            if run.success {
                successes += 1;
                t_values.push(run.steps_to_success.expect("success sets the step") as f64);
            } else {
                censored += 1;
                t_values.push((budget + 1) as f64);
            }
            if let Some(extra) = extra_steps_after_first_invalid(run) {
                conditioned += 1;
                extra_steps_sum += extra;
                if run.success {
                    recovered += 1;
                }
            }
            prompt_tokens += run.prompt_tokens_total;
            completion_tokens += run.completion_tokens_total;
        }
        rows.push(MetricsRow {
            condition,
            budget,
            runs_scored: scored.len(),
            runs_excluded: excluded,
            successes,
            success_rate: ratio(successes, scored.len()),
            call_steps: counts.call_steps,
            interface_misuse_steps: counts.interface_misuse,
            interface_misuse_rate: ratio(counts.interface_misuse, counts.call_steps),
            schema_valid_calls: counts.schema_valid(),
            execution_failures: counts.execution_failure,
            execution_failure_rate: ratio(counts.execution_failure, counts.schema_valid()),
            semantic_misuses: counts.semantic_misuse,
            semantic_misuse_rate: ratio(counts.semantic_misuse, counts.schema_valid()),
            conditioned_runs: conditioned,
            recovery_probability: (conditioned > 0).then(|| ratio(recovered, conditioned)),
            median_steps_to_success: crate::stats::median(&t_values).unwrap_or(0.0),
            censored_runs: censored,
            mean_invalid_calls_per_run: ratio(counts.interface_misuse, scored.len()),
            mean_extra_steps_after_first_invalid: (conditioned > 0)
                .then(|| extra_steps_sum as f64 / conditioned as f64),
            toolset_tokens: group.first().map(|r| r.toolset_tokens).unwrap_or(0),
            prompt_tokens_total: prompt_tokens,
            completion_tokens_total: completion_tokens,
        });
    }

    let scored = runs.iter().filter(|r| r.status.is_scored()).count();
    Ok(MetricsSummary {
        totals: Totals {
            cells: runs.len(),
            scored,
            excluded: runs.len() - scored,
        },
        rows,
    })
}

// ---------------------------------------------------------------------------
// Budget curves
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub budget: usize,
    pub success_rate: f64,
    pub runs_scored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetCurve {
    pub points: Vec<CurvePoint>,
    /// Trapezoidal area under S(B), normalized by the budget span.
    pub auc: f64,
}

/// Success-versus-budget curve over the given runs (filter by condition
/// before calling to get per-condition curves).
pub fn budget_curve(runs: &[RunRecord]) -> Result<BudgetCurve, AnalysisError> {
    let mut by_budget: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for run in runs.iter().filter(|r| r.status.is_scored()) {
        let entry = by_budget.entry(run.config.budget).or_insert((0, 0));
        entry.1 += 1;
        if run.success {
            entry.0 += 1;
        }
    }
    if by_budget.len() < 2 {
        return Err(AnalysisError::SingleBudget);
    }
    let points: Vec<CurvePoint> = by_budget
        .into_iter()
        .map(|(budget, (succ, total))| CurvePoint {
            budget,
            success_rate: ratio(succ, total),
            runs_scored: total,
        })
        .collect();
    let mut area = 0.0;
    for pair in points.windows(2) {
        let width = (pair[1].budget - pair[0].budget) as f64;
        area += width * (pair[0].success_rate + pair[1].success_rate) / 2.0;
    }
    let span = (points.last().unwrap().budget - points[0].budget) as f64;
    Ok(BudgetCurve {
        points,
        auc: area / span,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCurve {
    pub condition: Condition,
    #[serde(flatten)]
    pub curve: BudgetCurve,
}

// ---------------------------------------------------------------------------
// Recovery-conditioned analysis
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryStats {
    pub conditioned_runs: usize,
    pub recovered: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recovery_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_extra_steps: Option<f64>,
}

/// Recovery statistics over the scored runs that had at least one
/// interface-invalid call.
pub fn recovery_stats(runs: &[RunRecord]) -> RecoveryStats {
    let mut conditioned = 0usize;
    let mut recovered = 0usize;
    let mut extra_sum = 0usize;
    for run in runs.iter().filter(|r| r.status.is_scored()) {
        if let Some(extra) = extra_steps_after_first_invalid(run) {
            conditioned += 1;
            extra_sum += extra;
            if run.success {
                recovered += 1;
            }
        }
    }
    RecoveryStats {
        conditioned_runs: conditioned,
        recovered,
        recovery_rate: (conditioned > 0).then(|| ratio(recovered, conditioned)),
        mean_extra_steps: (conditioned > 0).then(|| extra_sum as f64 / conditioned as f64),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryContrast {
    pub left_label: String,
    pub right_label: String,
    pub left: RecoveryStats,
    pub right: RecoveryStats,
    /// right − left recovery rate; present only when both sides have a
    /// conditioned run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_gap: Option<f64>,
    /// Cells — (task, budget, seed) keys — conditioned on both sides.
    pub paired_cells: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn pairing_key(run: &RunRecord) -> (String, usize, u64) {
    (
        run.config.task_id.clone(),
        run.config.budget,
        run.config.seed,
    )
}

/// Contrast recovery behavior between two run sets covering the same
/// (task, budget, seed) cells under different feedback regimes.
pub fn recovery_conditioned(
    left_label: &str,
    left: &[RunRecord],
    right_label: &str,
    right: &[RunRecord],
) -> RecoveryContrast {
    let left_stats = recovery_stats(left);
    let right_stats = recovery_stats(right);
    let conditioned_keys = |runs: &[RunRecord]| -> BTreeSet<(String, usize, u64)> {
        runs.iter()
            .filter(|r| r.status.is_scored() && r.first_invalid_step.is_some())
            .map(pairing_key)
            .collect()
    };
    let paired_cells = conditioned_keys(left)
        .intersection(&conditioned_keys(right))
        .count();
    let rate_gap = match (left_stats.recovery_rate, right_stats.recovery_rate) {
        (Some(l), Some(r)) => Some(r - l),
        _ => None,
    };
    let note = (left_stats.conditioned_runs == 0 && right_stats.conditioned_runs == 0)
        .then(|| "no conditioned runs".to_string());
    RecoveryContrast {
        left_label: left_label.to_string(),
        right_label: right_label.to_string(),
        left: left_stats,
        right: right_stats,
        rate_gap,
        paired_cells,
        note,
    }
}

// ---------------------------------------------------------------------------
// Efficiency
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRow {
    pub condition: Condition,
    pub prompt_tokens: u64,
    /// Toolset text tokens summed over every prompt that carried them.
    pub toolset_prompt_tokens: u64,
    /// Prompt growth over the first step's baseline: the history share.
    pub history_prompt_tokens: u64,
    pub successes: usize,
    pub invalid_calls: usize,
    pub success_per_1k_prompt_tokens: f64,
    pub invalid_calls_per_1k_prompt_tokens: f64,
}

/// Token-normalized outcome ratios per condition over scored runs.
pub fn efficiency(runs: &[RunRecord]) -> Result<Vec<EfficiencyRow>, AnalysisError> {
    let mut by_condition: BTreeMap<Condition, Vec<&RunRecord>> = BTreeMap::new();
    for run in runs.iter().filter(|r| r.status.is_scored()) {
        by_condition.entry(run.config.condition).or_default().push(run);
    }
    let mut rows = Vec::new();
    for (condition, group) in by_condition {
        let mut prompt_tokens = 0u64;
        let mut toolset_tokens = 0u64;
        let mut history_tokens = 0u64;
        let mut successes = 0usize;
        let mut invalid = 0usize;
        for run in group {
            prompt_tokens += run.prompt_tokens_total;
            toolset_tokens += run.toolset_tokens * run.steps.len() as u64;
            if let Some(first) = run.steps.first() {
                history_tokens += run.prompt_tokens_total
                    - first.prompt_tokens * run.steps.len() as u64;
            }
            if run.success {
                successes += 1;
            }
            invalid += run
                .steps
                .iter()
                .filter(|s| s.classification == StepClass::InterfaceMisuse)
                .count();
        }
        if prompt_tokens == 0 {
            return Err(AnalysisError::ZeroTokens(condition.as_str()));
        }
        let per_1k = prompt_tokens as f64 / 1000.0;
        rows.push(EfficiencyRow {
            condition,
            prompt_tokens,
            toolset_prompt_tokens: toolset_tokens,
            history_prompt_tokens: history_tokens,
            successes,
            invalid_calls: invalid,
            success_per_1k_prompt_tokens: successes as f64 / per_1k,
            invalid_calls_per_1k_prompt_tokens: invalid as f64 / per_1k,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Exclusion table
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionCell {
    pub reason: String,
    pub family: Family,
    pub count: usize,
}

pub fn exclusion_table(runs: &[RunRecord]) -> Vec<ExclusionCell> {
    let mut table: BTreeMap<(String, Family), usize> = BTreeMap::new();
    for run in runs {
        if let RunStatus::Excluded { reason } = &run.status {
            *table.entry((reason.clone(), run.family)).or_default() += 1;
        }
    }
    table
        .into_iter()
        .map(|((reason, family), count)| ExclusionCell {
            reason,
            family,
            count,
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Predeclared paired tests
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTestResult {
    pub endpoint: String,
    /// E.g. "C-A": first-named condition minus second.
    pub contrast: String,
    pub statistic: f64,
    pub p_value: f64,
    pub p_adjusted: f64,
    pub n_pairs: usize,
    pub method: String,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Endpoint {
    Success,
    InterfaceMisuse,
    ExecutionFailure,
    SemanticMisuse,
}

impl Endpoint {
    fn name(self) -> &'static str {
        match self {
            Endpoint::Success => "success_rate",
            Endpoint::InterfaceMisuse => "interface_misuse_rate",
            Endpoint::ExecutionFailure => "execution_failure_rate",
            Endpoint::SemanticMisuse => "semantic_misuse_rate",
        }
    }
}

/// Per-task endpoint value under one condition, pooling budgets and seeds.
fn task_value(runs: &[&RunRecord], endpoint: Endpoint) -> f64 {
    let mut counts = StepCounts::default();
    let mut successes = 0usize;
    for run in runs {
        counts.add(&run.steps);
        if run.success {
            successes += 1;
        }
    }
    match endpoint {
        Endpoint::Success => ratio(successes, runs.len()),
        Endpoint::InterfaceMisuse => ratio(counts.interface_misuse, counts.call_steps),
        Endpoint::ExecutionFailure => ratio(counts.execution_failure, counts.schema_valid()),
        Endpoint::SemanticMisuse => ratio(counts.semantic_misuse, counts.schema_valid()),
    }
}

/// hi − lo paired differences of a per-task endpoint between two conditions.
fn paired_diffs(runs: &[RunRecord], hi: Condition, lo: Condition, endpoint: Endpoint) -> Vec<f64> {
    let mut by_task: BTreeMap<&str, (Vec<&RunRecord>, Vec<&RunRecord>)> = BTreeMap::new();
    for run in runs.iter().filter(|r| r.status.is_scored()) {
        let entry = by_task.entry(run.config.task_id.as_str()).or_default();
        if run.config.condition == hi {
            entry.0.push(run);
        } else if run.config.condition == lo {
            entry.1.push(run);
        }
    }
    by_task
        .values()
        .filter(|(h, l)| !h.is_empty() && !l.is_empty())
        .map(|(h, l)| task_value(h, endpoint) - task_value(l, endpoint))
        .collect()
}

fn test_result(
    endpoint: Endpoint,
    hi: Condition,
    lo: Condition,
    diffs: &[f64],
    alternative: Alternative,
) -> PairedTestResult {
    let contrast = format!("{}-{}", hi.as_str(), lo.as_str());
    match wilcoxon_signed_rank(diffs, alternative) {
        Ok(WilcoxonResult {
            n_pairs,
            statistic,
            p_value,
            method,
        }) => PairedTestResult {
            endpoint: endpoint.name().to_string(),
            contrast,
            statistic,
            p_value,
            p_adjusted: p_value,
            n_pairs,
            method,
            degenerate: false,
        },
        Err(StatsError::Degenerate) | Err(StatsError::EmptyInput) => PairedTestResult {
            endpoint: endpoint.name().to_string(),
            contrast,
            statistic: 0.0,
            p_value: 1.0,
            p_adjusted: 1.0,
            n_pairs: diffs.iter().filter(|d| **d != 0.0).count(),
            method: "degenerate".to_string(),
            degenerate: true,
        },
        Err(e) => unreachable!("wilcoxon on diffs cannot fail otherwise: {e}"),
    }
}

/// The predeclared test battery: primary ΔS(C−A), then a Holm-adjusted
/// secondary family over the remaining condition pairs and rate endpoints.
pub fn predeclared_tests(runs: &[RunRecord], alternative: Alternative) -> Vec<PairedTestResult> {
    let present: BTreeSet<Condition> = runs
        .iter()
        .filter(|r| r.status.is_scored())
        .map(|r| r.config.condition)
        .collect();
    let have = |a: Condition, b: Condition| present.contains(&a) && present.contains(&b);

    let mut results = Vec::new();
    if have(Condition::C, Condition::A) {
        let diffs = paired_diffs(runs, Condition::C, Condition::A, Endpoint::Success);
        // Primary endpoint: a family of one, so adjusted = raw.
        results.push(test_result(
            Endpoint::Success,
            Condition::C,
            Condition::A,
            &diffs,
            alternative,
        ));
    }

    let mut family = Vec::new();
    let secondary_pairs = [
        (Condition::B, Condition::A),
        (Condition::C, Condition::B),
    ];
    for (hi, lo) in secondary_pairs {
        if have(hi, lo) {
            let diffs = paired_diffs(runs, hi, lo, Endpoint::Success);
            family.push(test_result(Endpoint::Success, hi, lo, &diffs, alternative));
        }
    }
    let all_pairs = [
        (Condition::B, Condition::A),
        (Condition::C, Condition::A),
        (Condition::C, Condition::B),
    ];
    for endpoint in [
        Endpoint::InterfaceMisuse,
        Endpoint::ExecutionFailure,
        Endpoint::SemanticMisuse,
    ] {
        for (hi, lo) in all_pairs {
            if have(hi, lo) {
                let diffs = paired_diffs(runs, hi, lo, endpoint);
                family.push(test_result(endpoint, hi, lo, &diffs, alternative));
            }
        }
    }
    let adjusted = holm_adjust(&family.iter().map(|t| t.p_value).collect::<Vec<_>>());
    for (test, adj) in family.iter_mut().zip(adjusted) {
        test.p_adjusted = adj.max(test.p_value);
    }
    results.extend(family);
    results
}

// ---------------------------------------------------------------------------
// Full report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCi {
    pub condition: Condition,
    pub endpoint: String,
    #[serde(flatten)]
    pub ci: BootstrapCi,
    pub tasks: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyzeOptions {
    pub bootstrap_resamples: usize,
    pub bootstrap_seed: u64,
    pub alternative: Alternative,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            bootstrap_resamples: 2000,
            bootstrap_seed: 17,
            alternative: Alternative::TwoSided,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub tokenizer: String,
    pub totals: Totals,
    pub metrics: Vec<MetricsRow>,
    pub curves: Vec<ConditionCurve>,
    pub efficiency: Vec<EfficiencyRow>,
    pub exclusions: Vec<ExclusionCell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recovery: Option<RecoveryContrast>,
    pub success_cis: Vec<ConditionCi>,
    pub tests: Vec<PairedTestResult>,
}

/// Compute everything the reports carry from one set of run records.
pub fn analyze_runs(
    runs: &[RunRecord],
    tokenizer: &str,
    options: &AnalyzeOptions,
) -> Result<AnalysisReport, AnalysisError> {
    let summary = compute_metrics(runs)?;

    let conditions: BTreeSet<Condition> = runs
        .iter()
        .filter(|r| r.status.is_scored())
        .map(|r| r.config.condition)
        .collect();
    let budgets: BTreeSet<usize> = runs
        .iter()
        .filter(|r| r.status.is_scored())
        .map(|r| r.config.budget)
        .collect();

    let mut curves = Vec::new();
    if budgets.len() >= 2 {
        for &condition in &conditions {
            let subset: Vec<RunRecord> = runs
                .iter()
                .filter(|r| r.config.condition == condition)
                .cloned()
                .collect();
            curves.push(ConditionCurve {
                condition,
                curve: budget_curve(&subset)?,
            });
        }
    }

    let efficiency = if runs.iter().any(|r| r.status.is_scored()) {
        efficiency(runs)?
    } else {
        Vec::new()
    };

    let recovery = (conditions.contains(&Condition::B) && conditions.contains(&Condition::C))
        .then(|| {
            let side = |c: Condition| -> Vec<RunRecord> {
                runs.iter()
                    .filter(|r| r.config.condition == c)
                    .cloned()
                    .collect()
            };
            recovery_conditioned("B", &side(Condition::B), "C", &side(Condition::C))
        });

    let mut success_cis = Vec::new();
    for &condition in &conditions {
        let mut by_task: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
        for run in runs
            .iter()
            .filter(|r| r.status.is_scored() && r.config.condition == condition)
        {
            by_task
                .entry(run.config.task_id.as_str())
                .or_default()
                .push(run);
        }
        let values: Vec<f64> = by_task
            .values()
            .map(|group| task_value(group, Endpoint::Success))
            .collect();
        if values.is_empty() {
            continue;
        }
        let ci = bootstrap_ci(
            &values,
            options.bootstrap_resamples,
            options.bootstrap_seed,
            0.95,
        )?;
        success_cis.push(ConditionCi {
            condition,
            endpoint: "success_rate".to_string(),
            ci,
            tasks: values.len(),
        });
    }

    let tests = predeclared_tests(runs, options.alternative);

    Ok(AnalysisReport {
        tokenizer: tokenizer.to_string(),
        totals: summary.totals,
        metrics: summary.rows,
        curves,
        efficiency,
        exclusions: exclusion_table(runs),
        recovery,
        success_cis,
        tests,
    })
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Long-format CSV: one row per condition × budget × metric.
pub fn render_report_csv(report: &AnalysisReport) -> String {
    let mut out = String::from("condition,budget,metric,value\n");
    for row in &report.metrics {
        let cell = |metric: &str, value: String, out: &mut String| {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.condition.as_str(),
                row.budget,
                metric,
                value
            ));
        };
        cell("runs_scored", row.runs_scored.to_string(), &mut out);
        cell("runs_excluded", row.runs_excluded.to_string(), &mut out);
        cell("success_rate", fmt_f64(row.success_rate), &mut out);
        cell(
            "interface_misuse_rate",
            fmt_f64(row.interface_misuse_rate),
            &mut out,
        );
        cell(
            "execution_failure_rate",
            fmt_f64(row.execution_failure_rate),
            &mut out,
        );
        cell(
            "semantic_misuse_rate",
            fmt_f64(row.semantic_misuse_rate),
            &mut out,
        );
        cell(
            "recovery_probability",
            fmt_opt(row.recovery_probability),
            &mut out,
        );
        cell(
            "median_steps_to_success",
            fmt_f64(row.median_steps_to_success),
            &mut out,
        );
        cell("censored_runs", row.censored_runs.to_string(), &mut out);
        cell(
            "mean_invalid_calls_per_run",
            format!("{:.2}", row.mean_invalid_calls_per_run),
            &mut out,
        );
        cell(
            "mean_extra_steps_after_first_invalid",
            fmt_opt(row.mean_extra_steps_after_first_invalid),
            &mut out,
        );
        cell("call_steps", row.call_steps.to_string(), &mut out);
        cell(
            "schema_valid_calls",
            row.schema_valid_calls.to_string(),
            &mut out,
        );
        cell("toolset_tokens", row.toolset_tokens.to_string(), &mut out);
        cell(
            "prompt_tokens_total",
            row.prompt_tokens_total.to_string(),
            &mut out,
        );
    }
    out
}

/// Curve points, one row per condition × budget, AUC repeated per row.
pub fn render_curves_csv(report: &AnalysisReport) -> String {
    let mut out = String::from("condition,budget,success_rate,auc\n");
    for curve in &report.curves {
        for point in &curve.curve.points {
            out.push_str(&format!(
                "{},{},{},{}\n",
                curve.condition.as_str(),
                point.budget,
                fmt_f64(point.success_rate),
                fmt_f64(curve.curve.auc)
            ));
        }
    }
    out
}

pub fn render_report_json(report: &AnalysisReport) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    text
}
