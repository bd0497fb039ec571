//! Task generators for the four families.
//!
//! Every instance is a pure function of (family, seed, robustness): all
//! randomness flows through labelled [`SplitMix64`] forks drawn in a fixed
//! order. Each instance carries exactly one injected failure signature;
//! decoys are plausible distractor patterns that never contain the
//! signature text and never satisfy the checker. Noise perturbs non-signal
//! log messages and metric decimals only.

use serde_json::{json, Value};

use crate::microlang::{self, BinOp, Expr, Function, Program, TestCase};
use crate::oracle::{Admissible, ArgPredicate, EvidenceState, PredicateOp, TraceOracle};
use crate::patch::single_line_diff;
use crate::rng::SplitMix64;
use crate::sandbox::{
    ArtifactStore, CheckerSpec, ConfigFix, Family, GroundTruth, LogLine, MetricPoint, NamedText,
    RepoFix, Robustness, SolutionStep, TaskInstance,
};
use crate::standard::{METRIC_KEYS, SERVICES};

/// Diagnosis labels for the log family, published with the pack.
pub const LOG_LABELS: [&str; 4] = [
    "connection_pool_exhaustion",
    "disk_space_low",
    "certificate_expired",
    "deadlock_detected",
];

/// Root-cause labels for the config families, published with the pack.
pub const CONFIG_LABELS: [&str; 3] = ["port_mismatch", "timeout_too_low", "retry_disabled"];

const METRIC_WINDOWS: [u64; 2] = [5, 60];

pub trait FamilyGenerator: Send + Sync {
    fn family(&self) -> Family;
    fn generate(&self, seed: u64, robustness: &Robustness) -> TaskInstance;
}

struct LogDiagnosisGen;
struct ConfigCorrectionGen;
struct RepoDebugGen;
struct MixedGen;

static GENERATORS: [&'static dyn FamilyGenerator; 4] =
    [&LogDiagnosisGen, &ConfigCorrectionGen, &RepoDebugGen, &MixedGen];

pub fn family_generators() -> &'static [&'static dyn FamilyGenerator] {
    &GENERATORS
}

pub fn family_generator(family: Family) -> &'static dyn FamilyGenerator {
    GENERATORS
        .iter()
        .copied()
        .find(|g| g.family() == family)
        .expect("every family registered")
}

pub fn generate_task(family: Family, seed: u64, robustness: &Robustness) -> TaskInstance {
    family_generator(family).generate(seed, robustness)
}

fn task_id(family: Family, seed: u64, robustness: &Robustness) -> String {
    let base = format!("{}-{}", family.as_str(), seed);
    if *robustness == Robustness::default() {
        base
    } else {
        format!(
            "{base}-d{}n{}c{}",
            robustness.decoys, robustness.noise, robustness.schema_depth
        )
    }
}

// ---------------------------------------------------------------------------
// Services and configs
// ---------------------------------------------------------------------------

fn service_index(service: &str) -> usize {
    SERVICES.iter().position(|s| *s == service).expect("known service")
}

fn standard_port(service: &str) -> u64 {
    8080 + service_index(service) as u64
}

fn upstream_of(service: &str) -> &'static str {
    SERVICES[(service_index(service) + 1) % SERVICES.len()]
}

/// Correct config document for a service, wrapped in `schema_depth - 1`
/// extra layers. Returns the document and the key-path prefix the layers
/// introduce ("" or "production." etc).
fn config_doc(service: &str, schema_depth: u32) -> (Value, String) {
    let core = json!({
        "features": {
            "rate_limiting": true,
            "retry_enabled": true,
            "verbose_logging": false
        },
        "server": {
            "port": standard_port(service),
            "timeout_ms": 3000
        },
        "upstream": {
            "port": standard_port(upstream_of(service)),
            "service": upstream_of(service)
        }
    });
    let layers = ["production", "settings", "overrides"];
    let wraps = (schema_depth.saturating_sub(1) as usize).min(layers.len());
    let mut doc = core;
    let mut prefix = String::new();
    for layer in layers[..wraps].iter().rev() {
        doc = json!({ *layer: doc });
    }
    for layer in &layers[..wraps] {
        prefix.push_str(layer);
        prefix.push('.');
    }
    (doc, prefix)
}

fn render_config(doc: &Value) -> String {
    let mut text = serde_json::to_string_pretty(doc).expect("config serializes");
    text.push('\n');
    text
}

fn set_doc_path(doc: &mut Value, path: &str, value: Value) {
    let mut cursor = doc;
    let segments: Vec<&str> = path.split('.').collect();
    for seg in &segments[..segments.len() - 1] {
        cursor = cursor.get_mut(seg).expect("path exists");
    }
    cursor
        .as_object_mut()
        .expect("object at leaf parent")
        .insert(segments[segments.len() - 1].to_string(), value);
}

fn all_configs(schema_depth: u32) -> Vec<NamedText> {
    SERVICES
        .iter()
        .map(|s| NamedText {
            path: format!("{s}.json"),
            content: render_config(&config_doc(s, schema_depth).0),
        })
        .collect()
}

#[derive(Clone, Copy, PartialEq)]
enum ConfigErrorKind {
    PortMismatch,
    TimeoutTooLow,
    RetryDisabled,
}

impl ConfigErrorKind {
    const ALL: [ConfigErrorKind; 3] = [
        ConfigErrorKind::PortMismatch,
        ConfigErrorKind::TimeoutTooLow,
        ConfigErrorKind::RetryDisabled,
    ];

    fn label(self) -> &'static str {
        match self {
            ConfigErrorKind::PortMismatch => "port_mismatch",
            ConfigErrorKind::TimeoutTooLow => "timeout_too_low",
            ConfigErrorKind::RetryDisabled => "retry_disabled",
        }
    }

    fn key_suffix(self) -> &'static str {
        match self {
            ConfigErrorKind::PortMismatch => "upstream.port",
            ConfigErrorKind::TimeoutTooLow => "server.timeout_ms",
            ConfigErrorKind::RetryDisabled => "features.retry_enabled",
        }
    }

    fn bad_value(self) -> Value {
        match self {
            ConfigErrorKind::PortMismatch => json!(9999),
            ConfigErrorKind::TimeoutTooLow => json!(5),
            ConfigErrorKind::RetryDisabled => json!(false),
        }
    }

    fn corrected_value(self, service: &str) -> Value {
        match self {
            ConfigErrorKind::PortMismatch => json!(standard_port(upstream_of(service))),
            ConfigErrorKind::TimeoutTooLow => json!(3000),
            ConfigErrorKind::RetryDisabled => json!(true),
        }
    }

    fn signature(self, service: &str) -> String {
        match self {
            ConfigErrorKind::PortMismatch => format!(
                "connection refused: {}:9999 unreachable",
                upstream_of(service)
            ),
            ConfigErrorKind::TimeoutTooLow => {
                "request aborted after 5 ms: deadline exceeded".to_string()
            }
            ConfigErrorKind::RetryDisabled => {
                "request failed permanently: retries disabled".to_string()
            }
        }
    }

    fn query_hint(self) -> &'static str {
        match self {
            ConfigErrorKind::PortMismatch => "connection refused",
            ConfigErrorKind::TimeoutTooLow => "deadline exceeded",
            ConfigErrorKind::RetryDisabled => "retries disabled",
        }
    }
}

/// Inject one config error. Returns (configs, fix, ground-truth diff).
fn inject_config_error(
    service: &str,
    kind: ConfigErrorKind,
    schema_depth: u32,
) -> (Vec<NamedText>, ConfigFix, String) {
    let mut configs = all_configs(schema_depth);
    let (correct_doc, prefix) = config_doc(service, schema_depth);
    let key_path = format!("{prefix}{}", kind.key_suffix());
    let mut broken_doc = correct_doc.clone();
    set_doc_path(&mut broken_doc, &key_path, kind.bad_value());
    let correct_text = render_config(&correct_doc);
    let broken_text = render_config(&broken_doc);
    let entry = configs
        .iter_mut()
        .find(|c| c.path == format!("{service}.json"))
        .expect("affected config present");
    entry.content = broken_text.clone();

    let broken_lines: Vec<&str> = broken_text.lines().collect();
    let correct_lines: Vec<&str> = correct_text.lines().collect();
    let changed = broken_lines
        .iter()
        .zip(&correct_lines)
        .position(|(b, c)| b != c)
        .expect("exactly one differing line");
    let diff = single_line_diff(&broken_text, changed + 1, correct_lines[changed], 1);

    let fix = ConfigFix {
        file: format!("configs/{service}.json"),
        key_path,
        corrected: kind.corrected_value(service),
    };
    (configs, fix, diff)
}

// ---------------------------------------------------------------------------
// Logs and metrics
// ---------------------------------------------------------------------------

struct LogDraft {
    minute: u64,
    second: u64,
    service: String,
    level: &'static str,
    message: String,
    signature: bool,
}

fn timestamp(minute: u64, second: u64) -> String {
    format!("2025-03-14T09:{minute:02}:{second:02}Z")
}

const INFO_MESSAGES: [&str; 6] = [
    "request completed in {} ms",
    "health check ok ({} ms)",
    "cache refresh completed in {} ms",
    "scheduled job finished in {} ms",
    "connection established in {} ms",
    "configuration reloaded in {} ms",
];

const DECOY_MESSAGES: [(&str, &str); 6] = [
    ("WARN", "retrying request after transient failure"),
    ("WARN", "cache miss ratio elevated above 0.40"),
    ("ERROR", "upstream returned 503; circuit breaker open"),
    ("WARN", "slow query detected: 1200 ms"),
    ("ERROR", "gc pause exceeded 200 ms"),
    ("WARN", "queue depth approaching limit"),
];

/// Background + decoys + exactly one two-line signature cluster, then noise
/// on non-signature messages, then a stable chronological sort.
fn build_logs(
    rng: &mut SplitMix64,
    affected: Option<&str>,
    signature: Option<&str>,
    robustness: &Robustness,
) -> Vec<LogLine> {
    let mut drafts: Vec<LogDraft> = Vec::new();
    for _ in 0..24 {
        let template = INFO_MESSAGES[rng.range(0, INFO_MESSAGES.len())];
        let ms = rng.range(2, 180);
        drafts.push(LogDraft {
            minute: rng.range(0, 58) as u64,
            second: rng.range(0, 60) as u64,
            service: (*rng.pick(&SERVICES)).to_string(),
            level: "INFO",
            message: template.replacen("{}", &ms.to_string(), 1),
            signature: false,
        });
    }
    let decoy_offset = rng.range(0, DECOY_MESSAGES.len());
    for i in 0..robustness.decoys as usize {
        let (level, message) = DECOY_MESSAGES[(decoy_offset + i) % DECOY_MESSAGES.len()];
        drafts.push(LogDraft {
            minute: rng.range(0, 58) as u64,
            second: rng.range(0, 60) as u64,
            service: (*rng.pick(&SERVICES)).to_string(),
            level,
            message: message.to_string(),
            signature: false,
        });
    }
    if let (Some(service), Some(signature)) = (affected, signature) {
        for minute in [30u64, 31] {
            drafts.push(LogDraft {
                minute,
                second: rng.range(0, 60) as u64,
                service: service.to_string(),
                level: "ERROR",
                message: signature.to_string(),
                signature: true,
            });
        }
    }
    let mut noise = rng.fork("log-noise");
    for d in &mut drafts {
        if d.signature {
            continue;
        }
        if robustness.noise >= 1 {
            d.message
                .push_str(&format!(" request_id={:08x}", noise.next_u64() as u32));
        }
        if robustness.noise >= 2 {
            d.message.push_str(&format!(" attempt={}", noise.range(1, 4)));
        }
    }
    drafts.sort_by_key(|d| (d.minute, d.second));
    drafts
        .into_iter()
        .map(|d| LogLine {
            timestamp: timestamp(d.minute, d.second),
            service: d.service,
            level: d.level.to_string(),
            message: d.message,
        })
        .collect()
}

fn build_metrics(
    rng: &mut SplitMix64,
    affected: Option<&str>,
    robustness: &Robustness,
) -> Vec<MetricPoint> {
    let mut points = Vec::new();
    for service in SERVICES {
        for key in METRIC_KEYS {
            for window in METRIC_WINDOWS {
                let degraded = affected == Some(service);
                let mut value = match (key, degraded) {
                    ("p95_latency", false) => rng.range(80, 200) as f64,
                    ("p95_latency", true) => rng.range(900, 2000) as f64,
                    (_, false) => rng.range(1, 10) as f64 / 1000.0,
                    (_, true) => rng.range(120, 350) as f64 / 1000.0,
                };
                if robustness.noise >= 1 && !degraded {
                    value += match key {
                        "p95_latency" => rng.range(0, 90) as f64 / 10.0,
                        _ => rng.range(0, 20) as f64 / 10000.0,
                    };
                }
                points.push(MetricPoint {
                    service: service.to_string(),
                    metric_key: key.to_string(),
                    window_minutes: window,
                    value,
                });
            }
        }
    }
    points.sort_by(|a, b| {
        (&a.service, &a.metric_key, a.window_minutes)
            .cmp(&(&b.service, &b.metric_key, b.window_minutes))
    });
    points
}

// ---------------------------------------------------------------------------
// Micro-repo construction
// ---------------------------------------------------------------------------

struct FnTemplate {
    name: &'static str,
    params: &'static [&'static str],
    build: fn(&mut SplitMix64) -> Expr,
}

fn p(name: &str) -> Expr {
    Expr::Param(name.to_string())
}

fn lit(v: i64) -> Expr {
    Expr::Int(v)
}

fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
    Expr::Binary {
        op,
        lhs: Box::new(lhs),
        rhs: Box::new(rhs),
    }
}

fn ife(cond: Expr, then: Expr, otherwise: Expr) -> Expr {
    Expr::If {
        cond: Box::new(cond),
        then: Box::new(then),
        otherwise: Box::new(otherwise),
    }
}

const FN_TEMPLATES: [FnTemplate; 8] = [
    FnTemplate {
        name: "scale_sum",
        params: &["a", "b"],
        build: |rng| {
            let k = rng.range(2, 7) as i64;
            bin(BinOp::Add, p("a"), bin(BinOp::Mul, p("b"), lit(k)))
        },
    },
    FnTemplate {
        name: "clamp_low",
        params: &["x"],
        build: |rng| {
            let l = rng.range(3, 11) as i64;
            ife(bin(BinOp::Lt, p("x"), lit(l)), lit(l), p("x"))
        },
    },
    FnTemplate {
        name: "rect_area",
        params: &["w", "h"],
        build: |_| bin(BinOp::Mul, p("w"), p("h")),
    },
    FnTemplate {
        name: "avg2",
        params: &["a", "b"],
        build: |_| bin(BinOp::Div, bin(BinOp::Add, p("a"), p("b")), lit(2)),
    },
    FnTemplate {
        name: "step_at",
        params: &["x"],
        build: |rng| {
            let t = rng.range(4, 10) as i64;
            ife(bin(BinOp::Ge, p("x"), lit(t)), lit(1), lit(0))
        },
    },
    FnTemplate {
        name: "weighted",
        params: &["a", "b"],
        build: |rng| {
            let w1 = rng.range(2, 6) as i64;
            let w2 = rng.range(2, 6) as i64;
            bin(
                BinOp::Add,
                bin(BinOp::Mul, p("a"), lit(w1)),
                bin(BinOp::Mul, p("b"), lit(w2)),
            )
        },
    },
    FnTemplate {
        name: "abs_diff",
        params: &["a", "b"],
        build: |_| {
            ife(
                bin(BinOp::Gt, p("a"), p("b")),
                bin(BinOp::Sub, p("a"), p("b")),
                bin(BinOp::Sub, p("b"), p("a")),
            )
        },
    },
    FnTemplate {
        name: "offset_scale",
        params: &["x"],
        build: |rng| {
            let m = rng.range(2, 5) as i64;
            let c = rng.range(1, 10) as i64;
            bin(BinOp::Sub, bin(BinOp::Mul, p("x"), lit(m)), lit(c))
        },
    },
];

fn instantiate(template: &FnTemplate, rng: &mut SplitMix64) -> Function {
    Function {
        name: template.name.to_string(),
        params: template.params.iter().map(|s| s.to_string()).collect(),
        body: (template.build)(rng),
    }
}

fn mutation_sites(expr: &Expr) -> usize {
    match expr {
        Expr::Int(_) => 1,
        Expr::Param(_) => 0,
        Expr::Binary { lhs, rhs, .. } => 1 + mutation_sites(lhs) + mutation_sites(rhs),
        Expr::If {
            cond,
            then,
            otherwise,
        } => mutation_sites(cond) + mutation_sites(then) + mutation_sites(otherwise),
    }
}

fn flipped(op: BinOp) -> BinOp {
    match op {
        BinOp::Add => BinOp::Sub,
        BinOp::Sub => BinOp::Add,
        BinOp::Mul => BinOp::Div,
        BinOp::Div => BinOp::Mul,
        BinOp::Lt => BinOp::Le,
        BinOp::Le => BinOp::Lt,
        BinOp::Gt => BinOp::Ge,
        BinOp::Ge => BinOp::Gt,
        BinOp::Eq => BinOp::Ne,
        BinOp::Ne => BinOp::Eq,
    }
}

/// Mutate the `target`-th site (pre-order): operators flip, literals shift.
fn mutate_expr(expr: &mut Expr, target: usize, counter: &mut usize, delta: i64) {
    match expr {
        Expr::Int(v) => {
            if *counter == target {
                *v += delta;
            }
            *counter += 1;
        }
        Expr::Param(_) => {}
        Expr::Binary { op, lhs, rhs } => {
            if *counter == target {
                *op = flipped(*op);
            }
            *counter += 1;
            mutate_expr(lhs, target, counter, delta);
            mutate_expr(rhs, target, counter, delta);
        }
        Expr::If {
            cond,
            then,
            otherwise,
        } => {
            mutate_expr(cond, target, counter, delta);
            mutate_expr(then, target, counter, delta);
            mutate_expr(otherwise, target, counter, delta);
        }
    }
}

struct MicroRepo {
    src: String,
    tests: String,
    fix_diff: String,
    mutated_fn: String,
}

/// Core functions + one test each (+ one extra test), one injected
/// operator/literal mutation making exactly one test fail. Decoy helper
/// functions are correct and untested.
fn build_buggy_repo(rng: &mut SplitMix64, decoys: u32) -> MicroRepo {
    let mut order: Vec<usize> = (0..FN_TEMPLATES.len()).collect();
    rng.shuffle(&mut order);
    let core: Vec<Function> = order[..4]
        .iter()
        .map(|i| instantiate(&FN_TEMPLATES[*i], rng))
        .collect();
    let decoy_fns: Vec<Function> = order[4..]
        .iter()
        .take(decoys as usize)
        .map(|i| instantiate(&FN_TEMPLATES[*i], rng))
        .collect();

    let mut correct = Program {
        functions: core.clone(),
    };
    correct.functions.extend(decoy_fns);

    let mut tests: Vec<TestCase> = Vec::new();
    for f in &core {
        let args: Vec<i64> = f.params.iter().map(|_| rng.range(0, 12) as i64).collect();
        let expected =
            microlang::call_function(&correct, &f.name, &args).expect("correct program evaluates");
        let rendered: Vec<String> = args.iter().map(|a| a.to_string()).collect();
        tests.push(TestCase {
            name: format!("{}({})", f.name, rendered.join(",")),
            function: f.name.clone(),
            args,
            expected,
        });
    }

    // One injected bug; redraw until exactly one test fails.
    let (mutated, mutated_fn) = loop {
        let fn_idx = rng.range(0, 4);
        let mut candidate = correct.clone();
        let body = &mut candidate.functions[fn_idx].body;
        let sites = mutation_sites(body);
        if sites == 0 {
            continue;
        }
        let target = rng.range(0, sites);
        let delta = *rng.pick(&[1i64, -1, 2]);
        let mut counter = 0;
        mutate_expr(body, target, &mut counter, delta);
        if candidate.functions[fn_idx] == correct.functions[fn_idx] {
            continue;
        }
        let report = microlang::run_suite(&candidate, &tests);
        if report.failed == 1 {
            break (candidate, correct.functions[fn_idx].name.clone());
        }
    };

    // Extra assertion on an unaffected function keeps the suite from being
    // one-test-per-function trivia.
    let extra_target = core
        .iter()
        .find(|f| f.name != mutated_fn)
        .expect("three unaffected functions");
    let args: Vec<i64> = extra_target
        .params
        .iter()
        .map(|_| rng.range(0, 12) as i64)
        .collect();
    let expected = microlang::call_function(&correct, &extra_target.name, &args)
        .expect("correct program evaluates");
    let rendered: Vec<String> = args.iter().map(|a| a.to_string()).collect();
    tests.push(TestCase {
        name: format!("{}({})", extra_target.name, rendered.join(",")),
        function: extra_target.name.clone(),
        args,
        expected,
    });

    let broken_text = microlang::render_program(&mutated);
    let correct_text = microlang::render_program(&correct);
    let changed = broken_text
        .lines()
        .zip(correct_text.lines())
        .position(|(b, c)| b != c)
        .expect("exactly one differing line");
    let correct_line = correct_text.lines().nth(changed).expect("line exists");
    let fix_diff = single_line_diff(&broken_text, changed + 1, correct_line, 1);

    MicroRepo {
        src: broken_text,
        tests: microlang::render_tests(&tests),
        fix_diff,
        mutated_fn,
    }
}

/// Small always-green repo for families whose checker ignores tests.
fn trivial_repo(rng: &mut SplitMix64) -> Vec<NamedText> {
    let mut order: Vec<usize> = (0..FN_TEMPLATES.len()).collect();
    rng.shuffle(&mut order);
    let functions: Vec<Function> = order[..2]
        .iter()
        .map(|i| instantiate(&FN_TEMPLATES[*i], rng))
        .collect();
    let program = Program {
        functions: functions.clone(),
    };
    let mut tests = Vec::new();
    for f in &functions {
        let args: Vec<i64> = f.params.iter().map(|_| rng.range(0, 12) as i64).collect();
        let expected =
            microlang::call_function(&program, &f.name, &args).expect("program evaluates");
        let rendered: Vec<String> = args.iter().map(|a| a.to_string()).collect();
        tests.push(TestCase {
            name: format!("{}({})", f.name, rendered.join(",")),
            function: f.name.clone(),
            args,
            expected,
        });
    }
    vec![
        NamedText {
            path: "src/calc.fn".into(),
            content: microlang::render_program(&program),
        },
        NamedText {
            path: "tests/calc.t".into(),
            content: microlang::render_tests(&tests),
        },
    ]
}

// ---------------------------------------------------------------------------
// Oracle construction helpers
// ---------------------------------------------------------------------------

fn pred_eq(path: &str, value: Value) -> ArgPredicate {
    ArgPredicate {
        path: path.to_string(),
        op: PredicateOp::Eq,
        value,
    }
}

fn pred_in(path: &str, values: Value) -> ArgPredicate {
    ArgPredicate {
        path: path.to_string(),
        op: PredicateOp::In,
        value: values,
    }
}

fn adm(tool: &str, preds: Vec<ArgPredicate>, next: &str) -> Admissible {
    Admissible {
        tool: tool.to_string(),
        arg_predicates: preds,
        next: next.to_string(),
    }
}

fn state(id: &str, note: &str, admissible: Vec<Admissible>) -> EvidenceState {
    EvidenceState {
        state_id: id.to_string(),
        note: note.to_string(),
        admissible,
    }
}

fn other_config_paths(affected: &str) -> Value {
    Value::Array(
        SERVICES
            .iter()
            .filter(|s| **s != affected)
            .map(|s| json!(format!("configs/{s}.json")))
            .collect(),
    )
}

// ---------------------------------------------------------------------------
// log_diagnosis
// ---------------------------------------------------------------------------

struct LogCondition {
    label: &'static str,
    signature: &'static str,
    query_hint: &'static str,
}

const LOG_CONDITIONS: [LogCondition; 4] = [
    LogCondition {
        label: "connection_pool_exhaustion",
        signature: "connection pool exhausted: all 50 connections in use",
        query_hint: "connection pool exhausted",
    },
    LogCondition {
        label: "disk_space_low",
        signature: "disk usage at 97% on /var/data; writes may fail",
        query_hint: "disk usage",
    },
    LogCondition {
        label: "certificate_expired",
        signature: "tls certificate expired; peer handshake rejected",
        query_hint: "certificate expired",
    },
    LogCondition {
        label: "deadlock_detected",
        signature: "transaction aborted: deadlock detected on orders table",
        query_hint: "deadlock detected",
    },
];

impl FamilyGenerator for LogDiagnosisGen {
    fn family(&self) -> Family {
        Family::LogDiagnosis
    }

    fn generate(&self, seed: u64, robustness: &Robustness) -> TaskInstance {
        let root = SplitMix64::new(seed).fork("log_diagnosis");
        let mut layout = root.fork("layout");
        let affected = (*layout.pick(&SERVICES)).to_string();
        let condition = &LOG_CONDITIONS[layout.range(0, LOG_CONDITIONS.len())];

        let logs = build_logs(
            &mut root.fork("logs"),
            Some(&affected),
            Some(condition.signature),
            robustness,
        );
        let metrics = build_metrics(&mut root.fork("metrics"), Some(&affected), robustness);
        let configs = all_configs(robustness.schema_depth);
        let repo = trivial_repo(&mut root.fork("repo"));

        let id = task_id(Family::LogDiagnosis, seed, robustness);
        let oracle = TraceOracle {
            oracle_id: format!("{id}-oracle"),
            start_state: "triage".into(),
            stop_states: vec!["logs_seen".into(), "confirmed".into(), "corroborated".into()],
            states: vec![
                state(
                    "triage",
                    "start from the degraded service's evidence",
                    vec![
                        adm(
                            "search_logs",
                            vec![pred_eq("$.service", json!(affected))],
                            "logs_seen",
                        ),
                        adm(
                            "get_metric",
                            vec![pred_eq("$.service", json!(affected))],
                            "metrics_seen",
                        ),
                    ],
                ),
                state(
                    "metrics_seen",
                    "metrics confirm degradation; find the cause in the logs",
                    vec![adm(
                        "search_logs",
                        vec![pred_eq("$.service", json!(affected))],
                        "logs_seen",
                    )],
                ),
                state(
                    "logs_seen",
                    "signature visible; answering now is acceptable",
                    vec![
                        adm(
                            "search_logs",
                            vec![pred_eq("$.query", json!(condition.query_hint))],
                            "confirmed",
                        ),
                        adm(
                            "get_metric",
                            vec![pred_eq("$.service", json!(affected))],
                            "corroborated",
                        ),
                    ],
                ),
                state("confirmed", "signature re-checked directly", vec![]),
                state("corroborated", "metrics corroborate the diagnosis", vec![]),
            ],
        };

        let statement = format!(
            "Task {id}. Users report degraded behavior in the {affected} service. \
             Inspect the logs and metrics, determine the root cause, and finish with \
             a final answer of the form {{\"diagnosis\": \"<label>\"}}. \
             Possible labels: {}.",
            LOG_LABELS.join(", ")
        );

        let solution = vec![
            SolutionStep::Call {
                tool: "search_logs".into(),
                args: json!({"query": condition.query_hint, "service": affected}),
            },
            SolutionStep::Final {
                answer: json!({"diagnosis": condition.label}).to_string(),
            },
        ];

        TaskInstance {
            task_id: id,
            family: Family::LogDiagnosis,
            seed,
            robustness: *robustness,
            statement,
            artifacts: ArtifactStore {
                logs,
                metrics,
                configs,
                repo,
            },
            ground_truth: GroundTruth {
                label: condition.label.to_string(),
                config_fix: None,
                repo_fix: None,
            },
            checker: CheckerSpec::DiagnosisLabel {
                label: condition.label.to_string(),
            },
            oracle,
            solution,
        }
    }
}

// ---------------------------------------------------------------------------
// config_correction
// ---------------------------------------------------------------------------

fn config_oracle(id: &str, affected: &str, with_logs_start: bool) -> TraceOracle {
    let affected_config = json!(format!("configs/{affected}.json"));
    let mut triage = vec![
        adm(
            "list_dir",
            vec![pred_in("$.path", json!([".", "configs"]))],
            "browsed",
        ),
        adm(
            "read_file",
            vec![pred_eq("$.path", affected_config.clone())],
            "config_read",
        ),
    ];
    if with_logs_start {
        triage.push(adm("search_logs", vec![], "symptom_known"));
    }
    TraceOracle {
        oracle_id: format!("{id}-oracle"),
        start_state: "triage".into(),
        stop_states: vec!["patched".into(), "verified".into()],
        states: vec![
            state("triage", "locate the suspect configuration", triage),
            state(
                "symptom_known",
                "logs point at the failing interaction",
                vec![
                    adm(
                        "read_file",
                        vec![pred_eq("$.path", affected_config.clone())],
                        "config_read",
                    ),
                    adm(
                        "list_dir",
                        vec![pred_in("$.path", json!([".", "configs"]))],
                        "browsed",
                    ),
                ],
            ),
            state(
                "browsed",
                "config tree known; read the affected document",
                vec![adm(
                    "read_file",
                    vec![pred_eq("$.path", affected_config.clone())],
                    "config_read",
                )],
            ),
            state(
                "config_read",
                "suspect value in hand; compare or fix",
                vec![
                    adm(
                        "read_file",
                        vec![pred_in("$.path", other_config_paths(affected))],
                        "compared",
                    ),
                    adm(
                        "apply_patch",
                        vec![pred_eq("$.file", affected_config.clone())],
                        "patched",
                    ),
                ],
            ),
            state(
                "compared",
                "reference value confirmed elsewhere",
                vec![adm(
                    "apply_patch",
                    vec![pred_eq("$.file", affected_config.clone())],
                    "patched",
                )],
            ),
            state(
                "patched",
                "fix applied; answering now is acceptable",
                vec![adm(
                    "read_file",
                    vec![pred_eq("$.path", affected_config)],
                    "verified",
                )],
            ),
            state("verified", "fix re-read from the store", vec![]),
        ],
    }
}

impl FamilyGenerator for ConfigCorrectionGen {
    fn family(&self) -> Family {
        Family::ConfigCorrection
    }

    fn generate(&self, seed: u64, robustness: &Robustness) -> TaskInstance {
        let root = SplitMix64::new(seed).fork("config_correction");
        let mut layout = root.fork("layout");
        let affected = (*layout.pick(&SERVICES)).to_string();
        let kind = ConfigErrorKind::ALL[layout.range(0, ConfigErrorKind::ALL.len())];

        let signature = kind.signature(&affected);
        let logs = build_logs(
            &mut root.fork("logs"),
            Some(&affected),
            Some(&signature),
            robustness,
        );
        let metrics = build_metrics(&mut root.fork("metrics"), Some(&affected), robustness);
        let (configs, fix, diff) = inject_config_error(&affected, kind, robustness.schema_depth);
        let repo = trivial_repo(&mut root.fork("repo"));

        let id = task_id(Family::ConfigCorrection, seed, robustness);
        let oracle = config_oracle(&id, &affected, true);

        let statement = format!(
            "Task {id}. One configuration value under configs/ is wrong and is breaking \
             the {affected} service. Find it, repair it with apply_patch, and finish with \
             a final answer of the form {{\"fixed\": \"<label>\"}}. \
             Possible labels: {}.",
            CONFIG_LABELS.join(", ")
        );

        // Shortest admissible trace: straight to the affected document,
        // patch it, answer. Comparison reads are legal but not needed.
        let solution = vec![
            SolutionStep::Call {
                tool: "read_file".into(),
                args: json!({"path": format!("configs/{affected}.json")}),
            },
            SolutionStep::Call {
                tool: "apply_patch".into(),
                args: json!({"file": format!("configs/{affected}.json"), "diff": diff}),
            },
            SolutionStep::Final {
                answer: json!({"fixed": kind.label()}).to_string(),
            },
        ];

        TaskInstance {
            task_id: id,
            family: Family::ConfigCorrection,
            seed,
            robustness: *robustness,
            statement,
            artifacts: ArtifactStore {
                logs,
                metrics,
                configs,
                repo,
            },
            ground_truth: GroundTruth {
                label: kind.label().to_string(),
                config_fix: Some(fix.clone()),
                repo_fix: None,
            },
            checker: CheckerSpec::ConfigValue {
                file: fix.file,
                key_path: fix.key_path,
                expected: fix.corrected,
            },
            oracle,
            solution,
        }
    }
}

// ---------------------------------------------------------------------------
// repo_debug
// ---------------------------------------------------------------------------

impl FamilyGenerator for RepoDebugGen {
    fn family(&self) -> Family {
        Family::RepoDebug
    }

    fn generate(&self, seed: u64, robustness: &Robustness) -> TaskInstance {
        let root = SplitMix64::new(seed).fork("repo_debug");
        let repo_build = build_buggy_repo(&mut root.fork("repo"), robustness.decoys);
        let logs = build_logs(&mut root.fork("logs"), None, None, robustness);
        let metrics = build_metrics(&mut root.fork("metrics"), None, robustness);
        let configs = all_configs(robustness.schema_depth);

        let id = task_id(Family::RepoDebug, seed, robustness);
        let src_file = json!("src/calc.fn");
        let test_file = json!("tests/calc.t");
        let oracle = TraceOracle {
            oracle_id: format!("{id}-oracle"),
            start_state: "start".into(),
            stop_states: vec!["green".into()],
            states: vec![
                state(
                    "start",
                    "reproduce the failure first",
                    vec![
                        adm("run_tests", vec![], "failure_seen"),
                        adm(
                            "list_dir",
                            vec![pred_in("$.path", json!([".", "src", "tests"]))],
                            "browsed",
                        ),
                    ],
                ),
                state(
                    "browsed",
                    "tree known; reproduce the failure",
                    vec![adm("run_tests", vec![], "failure_seen")],
                ),
                state(
                    "failure_seen",
                    "failing assertion known; inspect the code",
                    vec![
                        adm(
                            "read_file",
                            vec![pred_eq("$.path", src_file.clone())],
                            "code_read",
                        ),
                        adm(
                            "grep_repo",
                            vec![pred_eq("$.pattern", json!(repo_build.mutated_fn))],
                            "code_read",
                        ),
                        adm(
                            "read_file",
                            vec![pred_eq("$.path", test_file.clone())],
                            "tests_read",
                        ),
                    ],
                ),
                state(
                    "tests_read",
                    "expected values known; inspect the code",
                    vec![
                        adm(
                            "read_file",
                            vec![pred_eq("$.path", src_file.clone())],
                            "code_read",
                        ),
                        adm(
                            "grep_repo",
                            vec![pred_eq("$.pattern", json!(repo_build.mutated_fn))],
                            "code_read",
                        ),
                    ],
                ),
                state(
                    "code_read",
                    "bug located; patch it",
                    vec![adm(
                        "apply_patch",
                        vec![pred_eq("$.file", src_file.clone())],
                        "patched",
                    )],
                ),
                state(
                    "patched",
                    "verify the fix",
                    vec![adm("run_tests", vec![], "green")],
                ),
                state("green", "suite passes; answer", vec![]),
            ],
        };

        let statement = format!(
            "Task {id}. The test suite under tests/ reports a failure. Locate the bug \
             in src/, repair it with apply_patch, verify with run_tests, and finish \
             with a final answer of the form {{\"done\": true}}."
        );

        let solution = vec![
            SolutionStep::Call {
                tool: "run_tests".into(),
                args: json!({"scope": "all"}),
            },
            SolutionStep::Call {
                tool: "read_file".into(),
                args: json!({"path": "src/calc.fn"}),
            },
            SolutionStep::Call {
                tool: "apply_patch".into(),
                args: json!({"file": "src/calc.fn", "diff": repo_build.fix_diff}),
            },
            SolutionStep::Call {
                tool: "run_tests".into(),
                args: json!({"scope": "all"}),
            },
            SolutionStep::Final {
                answer: json!({"done": true}).to_string(),
            },
        ];

        TaskInstance {
            task_id: id,
            family: Family::RepoDebug,
            seed,
            robustness: *robustness,
            statement,
            artifacts: ArtifactStore {
                logs,
                metrics,
                configs,
                repo: vec![
                    NamedText {
                        path: "src/calc.fn".into(),
                        content: repo_build.src,
                    },
                    NamedText {
                        path: "tests/calc.t".into(),
                        content: repo_build.tests,
                    },
                ],
            },
            ground_truth: GroundTruth {
                label: format!("logic_bug_{}", repo_build.mutated_fn),
                config_fix: None,
                repo_fix: Some(RepoFix {
                    file: "src/calc.fn".into(),
                    diff: repo_build.fix_diff,
                }),
            },
            checker: CheckerSpec::TestsPass,
            oracle,
            solution,
        }
    }
}

// ---------------------------------------------------------------------------
// mixed
// ---------------------------------------------------------------------------

impl FamilyGenerator for MixedGen {
    fn family(&self) -> Family {
        Family::Mixed
    }

    fn generate(&self, seed: u64, robustness: &Robustness) -> TaskInstance {
        let root = SplitMix64::new(seed).fork("mixed");
        let mut layout = root.fork("layout");
        let affected = (*layout.pick(&SERVICES)).to_string();
        let kind = ConfigErrorKind::ALL[layout.range(0, ConfigErrorKind::ALL.len())];

        let signature = kind.signature(&affected);
        let logs = build_logs(
            &mut root.fork("logs"),
            Some(&affected),
            Some(&signature),
            robustness,
        );
        let metrics = build_metrics(&mut root.fork("metrics"), Some(&affected), robustness);
        let (configs, fix, diff) = inject_config_error(&affected, kind, robustness.schema_depth);
        let repo = trivial_repo(&mut root.fork("repo"));

        let id = task_id(Family::Mixed, seed, robustness);
        let affected_config = json!(format!("configs/{affected}.json"));
        let oracle = TraceOracle {
            oracle_id: format!("{id}-oracle"),
            start_state: "triage".into(),
            stop_states: vec!["patched".into(), "verified".into()],
            states: vec![
                state(
                    "triage",
                    "establish the symptom before touching configs",
                    vec![
                        adm(
                            "search_logs",
                            vec![pred_eq("$.service", json!(affected))],
                            "symptom_known",
                        ),
                        adm(
                            "get_metric",
                            vec![pred_eq("$.service", json!(affected))],
                            "metric_known",
                        ),
                        adm(
                            "list_dir",
                            vec![pred_in("$.path", json!([".", "configs"]))],
                            "browsed",
                        ),
                    ],
                ),
                state(
                    "metric_known",
                    "degradation measured; find the symptom text",
                    vec![adm(
                        "search_logs",
                        vec![pred_eq("$.service", json!(affected))],
                        "symptom_known",
                    )],
                ),
                state(
                    "browsed",
                    "tree known; still need the symptom",
                    vec![adm(
                        "search_logs",
                        vec![pred_eq("$.service", json!(affected))],
                        "symptom_known",
                    )],
                ),
                state(
                    "symptom_known",
                    "symptom links to a config value",
                    vec![adm(
                        "read_file",
                        vec![pred_eq("$.path", affected_config.clone())],
                        "config_read",
                    )],
                ),
                state(
                    "config_read",
                    "suspect value in hand; compare or fix",
                    vec![
                        adm(
                            "read_file",
                            vec![pred_in("$.path", other_config_paths(&affected))],
                            "compared",
                        ),
                        adm(
                            "apply_patch",
                            vec![pred_eq("$.file", affected_config.clone())],
                            "patched",
                        ),
                    ],
                ),
                state(
                    "compared",
                    "reference value confirmed elsewhere",
                    vec![adm(
                        "apply_patch",
                        vec![pred_eq("$.file", affected_config.clone())],
                        "patched",
                    )],
                ),
                state(
                    "patched",
                    "fix applied; answering now is acceptable",
                    vec![adm(
                        "read_file",
                        vec![pred_eq("$.path", affected_config)],
                        "verified",
                    )],
                ),
                state("verified", "fix re-read from the store", vec![]),
            ],
        };

        let statement = format!(
            "Task {id}. The {affected} service is failing and one configuration value \
             under configs/ is wrong. Diagnose the root cause from logs and metrics, \
             repair the config with apply_patch, and finish with a final answer of the \
             form {{\"diagnosis\": \"<label>\"}}. Possible labels: {}.",
            CONFIG_LABELS.join(", ")
        );

        // Shortest admissible trace: symptom, suspect document, patch.
        let solution = vec![
            SolutionStep::Call {
                tool: "search_logs".into(),
                args: json!({"query": kind.query_hint(), "service": affected}),
            },
            SolutionStep::Call {
                tool: "read_file".into(),
                args: json!({"path": format!("configs/{affected}.json")}),
            },
            SolutionStep::Call {
                tool: "apply_patch".into(),
                args: json!({"file": format!("configs/{affected}.json"), "diff": diff}),
            },
            SolutionStep::Final {
                answer: json!({"diagnosis": kind.label()}).to_string(),
            },
        ];

        TaskInstance {
            task_id: id,
            family: Family::Mixed,
            seed,
            robustness: *robustness,
            statement,
            artifacts: ArtifactStore {
                logs,
                metrics,
                configs,
                repo,
            },
            ground_truth: GroundTruth {
                label: kind.label().to_string(),
                config_fix: Some(fix.clone()),
                repo_fix: None,
            },
            checker: CheckerSpec::Conjunction(vec![
                CheckerSpec::DiagnosisLabel {
                    label: kind.label().to_string(),
                },
                CheckerSpec::ConfigValue {
                    file: fix.file,
                    key_path: fix.key_path,
                    expected: fix.corrected,
                },
            ]),
            oracle,
            solution,
        }
    }
}
