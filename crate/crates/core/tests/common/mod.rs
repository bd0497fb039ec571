//! Test-side oracles, written independently of the library internals so the
//! two implementations can disagree: a backtracking matcher for the bounded
//! regex subset, a rule-by-rule argument checker, sign-pattern enumeration
//! for the signed-rank test, and generators for contracts and argument
//! documents.

use serde_json::{json, Map, Value};

use contractbench::contract::{ConditionalRule, ContractExample, FieldKind, FieldSpec, ToolContract};
use contractbench::harness::{EpisodeConfig, RunRecord, RunStatus};
use contractbench::oracle::TraceOracle;
use contractbench::rng::SplitMix64;
use contractbench::sandbox::Family;
use contractbench::taxonomy::{Condition, Granularity};

// ---------------------------------------------------------------------------
// Independent pattern matcher (backtracking, not NFA)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
enum Atom {
    Literal(char),
    Class(Vec<(char, char)>),
}

impl Atom {
    fn hits(&self, c: char) -> bool {
        match self {
            Atom::Literal(l) => *l == c,
            Atom::Class(ranges) => ranges.iter().any(|(lo, hi)| c >= *lo && c <= *hi),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Quant {
    One,
    Star,
    Plus,
}

fn parse_pattern(pattern: &str) -> (Vec<(Atom, Quant)>, bool, bool) {
    let chars: Vec<char> = pattern.chars().collect();
    let mut i = 0;
    let anchored_start = chars.first() == Some(&'^');
    if anchored_start {
        i = 1;
    }
    let anchored_end = chars.last() == Some(&'$') && chars.len() > i;
    let end = if anchored_end { chars.len() - 1 } else { chars.len() };
    let mut items = Vec::new();
    while i < end {
        let atom = match chars[i] {
            '[' => {
                let mut ranges = Vec::new();
                i += 1;
                while i < end && chars[i] != ']' {
                    if i + 2 < end && chars[i + 1] == '-' && chars[i + 2] != ']' {
                        ranges.push((chars[i], chars[i + 2]));
                        i += 3;
                    } else {
                        ranges.push((chars[i], chars[i]));
                        i += 1;
                    }
                }
                i += 1; // closing bracket
                Atom::Class(ranges)
            }
            '\\' => {
                i += 1;
                let c = chars[i];
                i += 1;
                Atom::Literal(c)
            }
            c => {
                i += 1;
                Atom::Literal(c)
            }
        };
        let quant = match chars.get(i) {
            Some('*') => {
                i += 1;
                Quant::Star
            }
            Some('+') => {
                i += 1;
                Quant::Plus
            }
            _ => Quant::One,
        };
        items.push((atom, quant));
    }
    (items, anchored_start, anchored_end)
}

fn match_from(items: &[(Atom, Quant)], text: &[char], pos: usize, must_end: bool) -> bool {
    match items.first() {
        None => !must_end || pos == text.len(),
        Some((atom, Quant::One)) => {
            pos < text.len()
                && atom.hits(text[pos])
                && match_from(&items[1..], text, pos + 1, must_end)
        }
        Some((atom, Quant::Plus)) => {
            let mut p = pos;
            while p < text.len() && atom.hits(text[p]) {
                p += 1;
                if match_from(&items[1..], text, p, must_end) {
                    return true;
                }
            }
            false
        }
        Some((atom, Quant::Star)) => {
            if match_from(&items[1..], text, pos, must_end) {
                return true;
            }
            let mut p = pos;
            while p < text.len() && atom.hits(text[p]) {
                p += 1;
                if match_from(&items[1..], text, p, must_end) {
                    return true;
                }
            }
            false
        }
    }
}

/// Unanchored-search semantics: the pattern matches if it matches starting
/// at any position, unless `^`/`$` pin it down.
pub fn oracle_pattern_match(pattern: &str, text: &str) -> bool {
    let (items, from_start, to_end) = parse_pattern(pattern);
    let chars: Vec<char> = text.chars().collect();
    if from_start {
        return match_from(&items, &chars, 0, to_end);
    }
    (0..=chars.len()).any(|start| match_from(&items, &chars, start, to_end))
}

// ---------------------------------------------------------------------------
// Rule-by-rule argument oracle
// ---------------------------------------------------------------------------

fn is_mathematical_integer(value: &Value) -> bool {
    if value.is_i64() || value.is_u64() {
        return true;
    }
    value.as_f64().is_some_and(|f| f.fract() == 0.0)
}

fn lookup<'a>(doc: &'a Value, path: &str) -> Option<&'a Value> {
    let mut current = doc;
    for seg in path.strip_prefix('$')?.split('.').filter(|s| !s.is_empty()) {
        current = current.as_object()?.get(seg)?;
    }
    Some(current)
}

fn check_one(field: &FieldSpec, value: &Value, path: &str, out: &mut Vec<(String, String)>) {
    let fail = |rule: &str, out: &mut Vec<(String, String)>| {
        out.push((path.to_string(), rule.to_string()));
    };
    match field.kind {
        FieldKind::Boolean => {
            if !value.is_boolean() {
                fail("type", out);
            }
        }
        FieldKind::String => match value.as_str() {
            None => fail("type", out),
            Some(s) => {
                if let Some(p) = &field.pattern {
                    if !oracle_pattern_match(p, s) {
                        fail("pattern", out);
                    }
                }
                let len = s.chars().count() as u64;
                if field.min_length.is_some_and(|lo| len < lo) {
                    fail("min-length", out);
                }
                if field.max_length.is_some_and(|hi| len > hi) {
                    fail("max-length", out);
                }
            }
        },
        FieldKind::Enum => match value.as_str() {
            None => fail("type", out),
            Some(s) => {
                let ok = field
                    .enum_members
                    .as_deref()
                    .unwrap_or_default()
                    .iter()
                    .any(|m| m == s);
                if !ok {
                    fail("enum", out);
                }
            }
        },
        FieldKind::Integer | FieldKind::Number => {
            let type_ok = if field.kind == FieldKind::Integer {
                is_mathematical_integer(value)
            } else {
                value.is_number()
            };
            if !type_ok {
                fail("type", out);
                return;
            }
            let n = value.as_f64().unwrap();
            if field.min.is_some_and(|lo| n < lo) {
                fail("minimum", out);
            }
            if field.max.is_some_and(|hi| n > hi) {
                fail("maximum", out);
            }
        }
        FieldKind::Object => match value.as_object() {
            None => fail("type", out),
            Some(map) => {
                for child in &field.children {
                    check_presence(child, map, path, out);
                }
            }
        },
        FieldKind::Array => match value.as_array() {
            None => fail("type", out),
            Some(items) => {
                if let Some(item_spec) = field.children.first() {
                    for (i, item) in items.iter().enumerate() {
                        check_one(item_spec, item, &format!("{path}[{i}]"), out);
                    }
                }
            }
        },
    }
}

fn check_presence(
    field: &FieldSpec,
    obj: &Map<String, Value>,
    parent: &str,
    out: &mut Vec<(String, String)>,
) {
    let path = format!("{parent}.{}", field.name);
    match obj.get(&field.name) {
        None => {
            if field.required {
                out.push((path, "required".to_string()));
            }
        }
        Some(value) => check_one(field, value, &path, out),
    }
}

/// The full violation set as (path, rule-name) pairs, sorted the way the
/// production validator sorts.
pub fn oracle_violations(contract: &ToolContract, args: &Value) -> Vec<(String, String)> {
    let mut out = Vec::new();
    match args.as_object() {
        None => out.push(("$".to_string(), "type".to_string())),
        Some(map) => {
            for field in &contract.fields {
                check_presence(field, map, "$", &mut out);
            }
            for rule in &contract.conditional_rules {
                if lookup(args, &rule.if_path) == Some(&rule.if_equals) {
                    for req in &rule.then_required {
                        if lookup(args, req).is_none() {
                            out.push((req.clone(), "conditional".to_string()));
                        }
                    }
                }
            }
        }
    }
    out.sort();
    out
}

// ---------------------------------------------------------------------------
// Contract generator
// ---------------------------------------------------------------------------

const FIELD_NAMES: [&str; 10] = [
    "alpha", "beta", "gamma", "delta", "omega", "sigma", "count", "label", "mode", "window",
];

const ENUM_POOL: [&str; 6] = ["red", "green", "blue", "amber", "teal", "coral"];

/// Patterns paired with strings that match and strings that do not, used
/// both to build valid documents and to seed the fuzz pool.
pub const PATTERNS: [(&str, &str, &str); 5] = [
    ("^[a-z]+$", "abc", "Abc"),
    ("^svc-[0-9]+$", "svc-12", "svc-"),
    ("v[0-9]+", "xv19y", "vx"),
    ("^[a-z][a-z0-9_]*$", "metric_a", "9metric"),
    ("cfg", "main-cfg-x", "cf-g"),
];

fn scalar_kind(rng: &mut SplitMix64) -> FieldKind {
    match rng.range(0, 5) {
        0 => FieldKind::String,
        1 => FieldKind::Enum,
        2 => FieldKind::Integer,
        3 => FieldKind::Number,
        _ => FieldKind::Boolean,
    }
}

fn build_scalar(rng: &mut SplitMix64, name: &str, parent: &str, kind: FieldKind) -> FieldSpec {
    let required = rng.range(0, 100) < 70;
    let mut spec = FieldSpec::new(name, parent, kind, required);
    match kind {
        FieldKind::String => {
            if rng.range(0, 100) < 45 {
                let (pattern, _, _) = PATTERNS[rng.range(0, PATTERNS.len())];
                spec = spec.with_pattern(pattern);
            } else if rng.range(0, 100) < 40 {
                let lo = rng.range(1, 4) as u64;
                let hi = lo + rng.range(0, 5) as u64;
                spec = spec.with_lengths(Some(lo), Some(hi));
            }
        }
        FieldKind::Enum => {
            let start = rng.range(0, 3);
            let count = 2 + rng.range(0, 3);
            let members: Vec<&str> = ENUM_POOL[start..start + count].to_vec();
            spec = spec.with_enum(&members);
        }
        FieldKind::Integer => {
            if rng.range(0, 100) < 60 {
                let lo = rng.range(0, 11) as f64 - 5.0;
                let hi = lo + rng.range(0, 11) as f64;
                spec = spec.with_bounds(Some(lo), Some(hi));
            } else if rng.range(0, 100) < 50 {
                spec = spec.with_bounds(Some(1.0), None);
            }
        }
        FieldKind::Number => {
            if rng.range(0, 100) < 50 {
                let lo = rng.range(0, 21) as f64 / 2.0 - 5.0;
                let hi = lo + rng.range(0, 21) as f64 / 2.0;
                spec = spec.with_bounds(Some(lo), Some(hi));
            }
        }
        FieldKind::Boolean => {}
        FieldKind::Object | FieldKind::Array => unreachable!("scalar kinds only"),
    }
    spec
}

/// A random contract with at most four field specs total, occasionally
/// nesting an object or array and occasionally attaching a conditional
/// requiredness rule.
pub fn gen_contract(rng: &mut SplitMix64, idx: usize) -> ToolContract {
    let n_top = 1 + rng.range(0, 3);
    let mut budget: usize = 4usize.saturating_sub(n_top);
    let mut fields = Vec::new();
    for slot in 0..n_top {
        let name = FIELD_NAMES[slot * 3 + rng.range(0, 3)];
        let roll = rng.range(0, 100);
        if budget >= 1 && roll < 30 {
            let child_count = if budget >= 2 && rng.range(0, 100) < 40 { 2 } else { 1 };
            budget -= child_count;
            let parent_path = format!("$.{name}");
            let children: Vec<FieldSpec> = (0..child_count)
                .map(|c| {
                    let child_name = FIELD_NAMES[9 - c];
                    let kind = scalar_kind(rng);
                    build_scalar(rng, child_name, &parent_path, kind)
                })
                .collect();
            let required = rng.range(0, 100) < 70;
            fields.push(
                FieldSpec::new(name, "$", FieldKind::Object, required).with_children(children),
            );
        } else if budget >= 1 && roll < 45 {
            budget -= 1;
            let parent_path = format!("$.{name}");
            let kind = scalar_kind(rng);
            let item = build_scalar(rng, "*", &parent_path, kind);
            let required = rng.range(0, 100) < 70;
            fields.push(FieldSpec::new(name, "$", FieldKind::Array, required).with_children(vec![item]));
        } else {
            let kind = scalar_kind(rng);
            fields.push(build_scalar(rng, name, "$", kind));
        }
    }

    // Conditional rule: trigger on a top-level enum or string scalar and
    // require some other non-array path.
    let mut conditional_rules = Vec::new();
    if fields.len() >= 2 && rng.range(0, 100) < 35 {
        let trigger = fields
            .iter()
            .find(|f| matches!(f.kind, FieldKind::Enum | FieldKind::String));
        if let Some(trigger) = trigger {
            let if_equals = match (&trigger.enum_members, &trigger.pattern) {
                (Some(members), _) => json!(members[0].clone()),
                (None, Some(p)) => {
                    let (_, matching, _) = PATTERNS
                        .iter()
                        .find(|(pat, _, _)| pat == p)
                        .expect("generator patterns come from the table");
                    json!(matching)
                }
                (None, None) => json!("trigger"),
            };
            let target = fields.iter().find(|f| {
                f.path != trigger.path && f.kind != FieldKind::Array
            });
            if let Some(target) = target {
                let then_path = if target.kind == FieldKind::Object {
                    target.children[0].path.clone()
                } else {
                    target.path.clone()
                };
                conditional_rules.push(ConditionalRule {
                    if_path: trigger.path.clone(),
                    if_equals,
                    then_required: vec![then_path],
                });
            }
        }
    }

    let mut contract = ToolContract {
        name: format!("probe_tool_{idx}"),
        description: "Synthetic probe contract for differential validation.".into(),
        fields,
        conditional_rules,
        examples: Vec::new(),
    };
    let example = valid_args(rng, &contract);
    contract.examples.push(ContractExample {
        args: example,
        note: String::new(),
    });
    contract
}

fn valid_value(rng: &mut SplitMix64, field: &FieldSpec) -> Value {
    match field.kind {
        FieldKind::String => {
            if let Some(p) = &field.pattern {
                let (_, matching, _) = PATTERNS
                    .iter()
                    .find(|(pat, _, _)| pat == p)
                    .expect("generator patterns come from the table");
                json!(matching)
            } else {
                let len = field.min_length.unwrap_or(2).max(1) as usize;
                json!("x".repeat(len))
            }
        }
        FieldKind::Enum => {
            let members = field.enum_members.as_deref().unwrap_or_default();
            json!(members[rng.range(0, members.len())].clone())
        }
        FieldKind::Integer => {
            let base = field.min.unwrap_or_else(|| field.max.unwrap_or(0.0).min(0.0));
            json!(base as i64)
        }
        FieldKind::Number => {
            let base = field.min.unwrap_or_else(|| field.max.unwrap_or(0.0).min(0.0));
            json!(base)
        }
        FieldKind::Boolean => json!(true),
        FieldKind::Object => {
            let mut map = Map::new();
            for child in &field.children {
                map.insert(child.name.clone(), valid_value(rng, child));
            }
            Value::Object(map)
        }
        FieldKind::Array => {
            let item = field.children.first().expect("array item spec");
            let count = 1 + rng.range(0, 2);
            Value::Array((0..count).map(|_| valid_value(rng, item)).collect())
        }
    }
}

/// A document that satisfies the whole contract: every declared field is
/// present with a conforming value, so conditionals are satisfied too.
pub fn valid_args(rng: &mut SplitMix64, contract: &ToolContract) -> Value {
    let mut map = Map::new();
    for field in &contract.fields {
        map.insert(field.name.clone(), valid_value(rng, field));
    }
    Value::Object(map)
}

/// Every declared non-item path of the contract, for mutation targeting.
fn object_paths(contract: &ToolContract) -> Vec<String> {
    fn walk(fields: &[FieldSpec], out: &mut Vec<String>) {
        for f in fields {
            if f.name != "*" {
                out.push(f.path.clone());
            }
            walk(&f.children, out);
        }
    }
    let mut out = Vec::new();
    walk(&contract.fields, &mut out);
    out
}

fn remove_path(doc: &mut Value, path: &str) {
    let segs: Vec<&str> = path.trim_start_matches('$').split('.').filter(|s| !s.is_empty()).collect();
    let Some((last, parents)) = segs.split_last() else {
        return;
    };
    let mut current = doc;
    for seg in parents {
        match current.get_mut(*seg) {
            Some(next) => current = next,
            None => return,
        }
    }
    if let Some(map) = current.as_object_mut() {
        map.remove(*last);
    }
}

fn set_path(doc: &mut Value, path: &str, value: Value) {
    let segs: Vec<&str> = path.trim_start_matches('$').split('.').filter(|s| !s.is_empty()).collect();
    let Some((last, parents)) = segs.split_last() else {
        return;
    };
    let mut current = doc;
    for seg in parents {
        match current.get_mut(*seg) {
            Some(next) => current = next,
            None => return,
        }
    }
    if let Some(map) = current.as_object_mut() {
        map.insert(last.to_string(), value);
    }
}

fn junk_value(rng: &mut SplitMix64) -> Value {
    let pool = [
        json!(null),
        json!(0),
        json!(-99),
        json!(3.5),
        json!(7.25),
        json!(true),
        json!("zz"),
        json!(""),
        json!("Abc"),
        json!("svc-"),
        json!("latency95"),
        json!([1, 2]),
        json!({}),
        json!({"nested": "junk"}),
    ];
    pool[rng.range(0, pool.len())].clone()
}

/// A document derived from a valid one by a few random mutations: removed
/// fields, junk replacements, boundary violations, unknown extras, and the
/// occasional non-object root.
pub fn fuzz_args(rng: &mut SplitMix64, contract: &ToolContract) -> Value {
    if rng.range(0, 100) < 4 {
        return [json!([1, 2, 3]), json!("nope"), json!(41)][rng.range(0, 3)].clone();
    }
    let mut doc = valid_args(rng, contract);
    let paths = object_paths(contract);
    for _ in 0..rng.range(0, 4) {
        let path = &paths[rng.range(0, paths.len())];
        match rng.range(0, 10) {
            0..=2 => remove_path(&mut doc, path),
            3..=6 => {
                let junk = junk_value(rng);
                set_path(&mut doc, path, junk);
            }
            7 => set_path(&mut doc, "$.zzz_extra", json!(1)),
            8 => {
                // Nudge numerics just past their declared bounds.
                if let Some(spec) = find_spec(contract, path) {
                    if let Some(min) = spec.min {
                        set_path(&mut doc, path, json!(min - 1.0));
                    } else if let Some(max) = spec.max {
                        set_path(&mut doc, path, json!(max + 1.0));
                    }
                }
            }
            _ => {
                if let Some(spec) = find_spec(contract, path) {
                    if let Some(p) = &spec.pattern {
                        let (_, _, failing) = PATTERNS
                            .iter()
                            .find(|(pat, _, _)| pat == p)
                            .expect("generator patterns come from the table");
                        set_path(&mut doc, path, json!(failing));
                    } else if spec.enum_members.is_some() {
                        set_path(&mut doc, path, json!("bogus"));
                    }
                }
            }
        }
    }
    doc
}

fn find_spec<'a>(contract: &'a ToolContract, path: &str) -> Option<&'a FieldSpec> {
    fn walk<'a>(fields: &'a [FieldSpec], path: &str) -> Option<&'a FieldSpec> {
        for f in fields {
            if f.path == path {
                return Some(f);
            }
            if let Some(hit) = walk(&f.children, path) {
                return Some(hit);
            }
        }
        None
    }
    walk(&contract.fields, path)
}

// ---------------------------------------------------------------------------
// Signed-rank enumeration oracle
// ---------------------------------------------------------------------------

/// Exact two-sided signed-rank p by enumerating all 2^n sign patterns over
/// doubled midranks. Zero differences are dropped first; returns None when
/// nothing is left.
pub fn enumerated_wilcoxon_p(diffs: &[f64]) -> Option<f64> {
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let n = nonzero.len();
    if n == 0 || n > 20 {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| nonzero[a].abs().partial_cmp(&nonzero[b].abs()).unwrap());
    let mut ranks2 = vec![0u64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && nonzero[order[j + 1]].abs() == nonzero[order[i]].abs() {
            j += 1;
        }
        // Positions i..=j share the doubled midrank (i+1) + (j+1).
        let rank2 = (i as u64 + 1) + (j as u64 + 1);
        for &idx in &order[i..=j] {
            ranks2[idx] = rank2;
        }
        i = j + 1;
    }
    let observed2: u64 = (0..n).filter(|&k| nonzero[k] > 0.0).map(|k| ranks2[k]).sum();
    let total = 1u64 << n;
    let mut le = 0u64;
    let mut ge = 0u64;
    for mask in 0..total {
        let w2: u64 = (0..n).filter(|k| mask >> k & 1 == 1).map(|k| ranks2[k]).sum();
        if w2 <= observed2 {
            le += 1;
        }
        if w2 >= observed2 {
            ge += 1;
        }
    }
    let all = total as f64;
    let le_p = le as f64 / all;
    let ge_p = ge as f64 / all;
    Some((2.0 * le_p.min(ge_p)).min(1.0))
}

// ---------------------------------------------------------------------------
// Trace-oracle reachability by path enumeration
// ---------------------------------------------------------------------------

/// Whether any stop state is reachable from the start in at most `k`
/// transitions, by depth-first path enumeration.
pub fn stop_reachable_within(oracle: &TraceOracle, k: usize) -> bool {
    fn dfs(oracle: &TraceOracle, at: &str, left: usize) -> bool {
        if oracle.stop_states.iter().any(|s| s == at) {
            return true;
        }
        if left == 0 {
            return false;
        }
        let Some(state) = oracle.states.iter().find(|s| s.state_id == at) else {
            return false;
        };
        state
            .admissible
            .iter()
            .any(|adm| dfs(oracle, &adm.next, left - 1))
    }
    dfs(oracle, &oracle.start_state, k)
}

// ---------------------------------------------------------------------------
// Run-record fabrication
// ---------------------------------------------------------------------------

/// Minimal scored run for curve arithmetic: outcome and cell coordinates
/// only, no steps.
pub fn outcome_run(task: &str, budget: usize, seed: u64, success: bool) -> RunRecord {
    let config = EpisodeConfig::new(
        task,
        budget,
        Condition::B,
        seed,
        Granularity::C3,
        1000,
        4096,
    );
    RunRecord {
        run_id: config.run_id(),
        family: Family::LogDiagnosis,
        config,
        status: RunStatus::Scored,
        success,
        checker_reason: None,
        final_answer: None,
        steps_to_success: success.then_some(1),
        first_invalid_step: None,
        toolset_tokens: 10,
        prompt_tokens_total: 100,
        completion_tokens_total: 10,
        steps: Vec::new(),
    }
}

/// Count a run set's interface-misuse steps, the H1 comparison quantity.
pub fn misuse_steps(run: &RunRecord) -> usize {
    use contractbench::taxonomy::StepClass;
    run.steps
        .iter()
        .filter(|s| s.classification == StepClass::InterfaceMisuse)
        .count()
}

/// Deterministic sub-generator so each acceptance criterion draws from its
/// own stream.
pub fn rng(label: &str) -> SplitMix64 {
    SplitMix64::new(0xC0FFEE).fork(label)
}
