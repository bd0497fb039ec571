//! Command-line surface: pack generation, rendering, matrix execution, and
//! analysis as reproducible subcommands with a machine-readable manifest.
//!
//! Exit codes: 0 success, 1 usage, 2 validation findings (tampered packs,
//! digest mismatches, parity gaps), 3 runtime failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::agents::{scripted_agent, scripted_agent_names, AgentTransport, RemoteTransport, TimeoutInjector};
use crate::analysis::{
    analyze_runs, render_curves_csv, render_report_csv, render_report_json, AnalysisError,
    AnalyzeOptions,
};
use crate::contract::{
    load_contract_pack, pack_to_string as contract_pack_to_string, sha256_hex, value_digest,
    ContractError, ToolContract,
};
use crate::harness::{matrix_cells, read_log_runs, run_matrix, MatrixSpec};
use crate::oracle::validate_oracle;
use crate::render::{check_parity, render_toolset};
use crate::sandbox::{
    check_final_answer, load_task_pack, reset, save_task_pack, Family, Robustness, SandboxError,
    SolutionStep, TaskInstance,
};
use crate::standard::standard_contract_pack;
use crate::stats::Alternative;
use crate::taxonomy::{Condition, Granularity};
use crate::tokenize::{tokenizer, tokenizer_names};
use crate::tools::{execute_tool, ToolStatus};
use crate::validate::{validate_args, ToolCall, Verdict};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FINDINGS: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Default remote-agent endpoint when `--agent` is omitted.
pub const REMOTE_URL_ENV: &str = "CONTRACTBENCH_AGENT_URL";

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u64 = 1;

#[derive(Parser, Debug)]
#[command(
    name = "contractbench",
    version,
    about = "Contract-driven evaluation harness for tool-using agents"
)]
struct Cli {
    /// Base directory against which relative paths are resolved.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a deterministic task pack.
    GenPack(GenPackArgs),
    /// Render the toolset text for one condition.
    Render(RenderArgs),
    /// Check a task pack's digests, oracles, and reference solutions.
    ValidatePack(ValidatePackArgs),
    /// Execute the episode matrix and write manifest, log, and reports.
    Run(RunArgs),
    /// Recompute reports from an existing trajectory log.
    Analyze(AnalyzeArgs),
    /// Write the built-in tool contract pack to a file.
    ExportContracts(ExportContractsArgs),
}

#[derive(Args, Debug)]
struct GenPackArgs {
    /// Task families to generate, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = Family::ALL)]
    families: Vec<Family>,
    /// Generation seeds; each (family, seed) pair yields one task.
    #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1])]
    seeds: Vec<u64>,
    /// Decoy artifacts per task (0 disables).
    #[arg(long, default_value_t = Robustness::default().decoys)]
    decoys: u32,
    /// Noise level for logs and metrics (0 disables).
    #[arg(long, default_value_t = Robustness::default().noise)]
    noise: u32,
    /// Nesting depth knob for schema-heavy artifacts.
    #[arg(long, default_value_t = Robustness::default().schema_depth)]
    schema_depth: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RenderArgs {
    /// Contract pack to render; defaults to the built-in pack.
    #[arg(long)]
    pack: Option<PathBuf>,
    #[arg(long)]
    condition: Condition,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "whitespace")]
    tokenizer: String,
}

#[derive(Args, Debug)]
struct ValidatePackArgs {
    #[arg(long)]
    pack: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Task pack produced by gen-pack.
    #[arg(long)]
    pack: PathBuf,
    /// Tool contract pack (export-contracts writes the built-in one).
    #[arg(long)]
    contracts: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [3usize, 5, 8, 12])]
    budgets: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = Condition::ALL)]
    conditions: Vec<Condition>,
    #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2])]
    seeds: Vec<u64>,
    /// `scripted:<name>` or `remote:<url>`; defaults to remote with the
    /// CONTRACTBENCH_AGENT_URL environment variable.
    #[arg(long)]
    agent: Option<String>,
    /// Diagnostic granularity applied to condition C cells.
    #[arg(long, default_value_t = Granularity::C3)]
    granularity: Granularity,
    /// Per-step agent reply timeout.
    #[arg(long, default_value_t = 30_000)]
    timeout_ms: u64,
    #[arg(long, default_value_t = 4096)]
    max_step_output_chars: usize,
    /// Trajectory log path; manifest and reports land beside it.
    #[arg(long, default_value = "trajectories.jsonl")]
    log: PathBuf,
    #[arg(long, default_value = "whitespace")]
    tokenizer: String,
    /// Worker threads; 0 lets the runtime decide. Output bytes are
    /// identical at any degree.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Fault injection for exclusion-path testing: `<task_id>:<seed>`
    /// times out every step of that cell group.
    #[arg(long)]
    inject_timeout: Option<String>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long)]
    log: PathBuf,
    /// Report directory; defaults to the log's directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    resamples: usize,
    #[arg(long, default_value_t = 17)]
    bootstrap_seed: u64,
    /// two-sided | greater | less
    #[arg(long, default_value = "two-sided")]
    alternative: String,
}

#[derive(Args, Debug)]
struct ExportContractsArgs {
    #[arg(long)]
    out: PathBuf,
}

// ---------------------------------------------------------------------------
// Failure plumbing
// ---------------------------------------------------------------------------

#[derive(Debug)]
enum Failure {
    Usage(String),
    Findings(String),
    Runtime(String),
}

impl Failure {
    fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Findings(_) => EXIT_FINDINGS,
            Failure::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Findings(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(format!("io error: {e}"))
    }
}

impl From<SandboxError> for Failure {
    fn from(e: SandboxError) -> Self {
        match e {
            SandboxError::Io(_) => Failure::Runtime(e.to_string()),
            _ => Failure::Findings(e.to_string()),
        }
    }
}

impl From<ContractError> for Failure {
    fn from(e: ContractError) -> Self {
        Failure::Findings(e.to_string())
    }
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::DuplicateKey(_) => Failure::Findings(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

/// Everything needed to reproduce a run byte-identically with scripted
/// transports: input digests, factor lists, and tool versions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u64,
    pub pack_path: String,
    /// SHA-256 of the task pack file bytes.
    pub pack_digest: String,
    pub contracts_path: String,
    /// SHA-256 of the contract pack file bytes.
    pub contract_pack_digest: String,
    /// Per-task digest of the trace oracle, keyed by task id.
    pub oracle_digests: BTreeMap<String, String>,
    pub tasks: Vec<String>,
    pub budgets: Vec<usize>,
    pub conditions: Vec<Condition>,
    pub seeds: Vec<u64>,
    pub granularity: Granularity,
    pub agent: String,
    pub tokenizer: String,
    pub step_timeout_ms: u64,
    pub max_step_output_chars: usize,
    pub planned_cells: usize,
    pub tool_versions: BTreeMap<String, String>,
    pub timestamp_unix_secs: u64,
}

impl RunManifest {
    /// Digest over every reproducibility-relevant field; the timestamp is
    /// deliberately excluded so identical inputs give identical digests.
    pub fn digest(&self) -> String {
        let mut value = serde_json::to_value(self).expect("manifest serializes");
        value
            .as_object_mut()
            .expect("manifest is an object")
            .remove("timestamp_unix_secs");
        value_digest(&value)
    }

    /// All run ids this manifest plans, in matrix order.
    pub fn planned_run_ids(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.planned_cells);
        for task in &self.tasks {
            for &budget in &self.budgets {
                for &condition in &self.conditions {
                    for &seed in &self.seeds {
                        out.push(format!("{task}:b{budget}:{condition}:s{seed}"));
                    }
                }
            }
        }
        out
    }
}

fn now_unix_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

/// Parse argv and run; returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    let workdir = cli.workdir.clone();
    let outcome = match cli.command {
        Command::GenPack(args) => cmd_gen_pack(&workdir, args),
        Command::Render(args) => cmd_render(&workdir, args),
        Command::ValidatePack(args) => cmd_validate_pack(&workdir, args),
        Command::Run(args) => cmd_run(&workdir, args),
        Command::Analyze(args) => cmd_analyze(&workdir, args),
        Command::ExportContracts(args) => cmd_export_contracts(&workdir, args),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            failure.exit_code()
        }
    }
}

fn resolve(workdir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        workdir.join(path)
    }
}

fn ensure_parent(path: &Path) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// gen-pack
// ---------------------------------------------------------------------------

fn cmd_gen_pack(workdir: &Path, args: GenPackArgs) -> Result<(), Failure> {
    if args.families.is_empty() || args.seeds.is_empty() {
        return Err(Failure::Usage("families and seeds must be non-empty".into()));
    }
    let robustness = Robustness {
        decoys: args.decoys,
        noise: args.noise,
        schema_depth: args.schema_depth,
    };
    let mut tasks = Vec::new();
    for &family in &args.families {
        for &seed in &args.seeds {
            tasks.push(crate::families::generate_task(family, seed, &robustness));
        }
    }
    let mut ids: Vec<&str> = tasks.iter().map(|t| t.task_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() != tasks.len() {
        return Err(Failure::Usage(
            "duplicate (family, seed) pairs produce duplicate task ids".into(),
        ));
    }
    let mut findings = Vec::new();
    for task in &tasks {
        for finding in validate_oracle(task) {
            findings.push(format!("{}: {} — {}", task.task_id, finding.rule, finding.detail));
        }
    }
    if !findings.is_empty() {
        for line in &findings {
            println!("finding: {line}");
        }
        return Err(Failure::Findings(format!(
            "{} oracle finding(s) in generated pack",
            findings.len()
        )));
    }
    let out = resolve(workdir, &args.out);
    ensure_parent(&out)?;
    save_task_pack(&tasks, &out)?;
    let digest = sha256_hex(&fs::read(&out)?);
    println!("wrote {} tasks to {} (digest {digest})", tasks.len(), out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// render
// ---------------------------------------------------------------------------

fn load_contracts(workdir: &Path, path: Option<&Path>) -> Result<Vec<ToolContract>, Failure> {
    match path {
        Some(p) => {
            let resolved = resolve(workdir, p);
            let bytes = fs::read(&resolved)?;
            Ok(load_contract_pack(&bytes)?)
        }
        None => Ok(standard_contract_pack().tools),
    }
}

fn cmd_render(workdir: &Path, args: RenderArgs) -> Result<(), Failure> {
    let contracts = load_contracts(workdir, args.pack.as_deref())?;
    let tok = tokenizer(&args.tokenizer).ok_or_else(|| {
        Failure::Usage(format!(
            "unknown tokenizer `{}`, expected one of {:?}",
            args.tokenizer,
            tokenizer_names()
        ))
    })?;
    let mut gaps = Vec::new();
    for contract in &contracts {
        let report = check_parity(contract);
        if !report.is_empty() {
            gaps.push(format!(
                "{}: {} atom(s) missing in prose, {} in schema",
                report.tool_name,
                report.missing_in_prose.len(),
                report.missing_in_schema.len()
            ));
        }
    }
    if !gaps.is_empty() {
        for line in &gaps {
            println!("finding: {line}");
        }
        return Err(Failure::Findings("information parity check failed".into()));
    }
    let toolset = render_toolset(&contracts, args.condition, tok.as_ref());
    match args.out {
        Some(out) => {
            let out = resolve(workdir, &out);
            ensure_parent(&out)?;
            fs::write(&out, &toolset.text)?;
            println!(
                "wrote condition {} toolset to {} ({} chars, {} {} tokens)",
                toolset.condition,
                out.display(),
                toolset.char_count,
                toolset.token_count,
                toolset.tokenizer
            );
        }
        None => print!("{}", toolset.text),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// validate-pack
// ---------------------------------------------------------------------------

/// Replay a task's reference solution against fresh state; any invalid,
/// failing, or unsuccessful step is a finding.
fn replay_solution(task: &TaskInstance, contracts: &[ToolContract]) -> Vec<String> {
    let mut findings = Vec::new();
    let mut state = reset(task);
    let mut finished = false;
    for (i, step) in task.solution.iter().enumerate() {
        match step {
            SolutionStep::Call { tool, args } => {
                let call = ToolCall {
                    name: tool.clone(),
                    args: args.clone(),
                    raw_text: args.to_string(),
                };
                let report = validate_args(&call, contracts);
                if report.verdict != Verdict::Valid {
                    findings.push(format!(
                        "solution step {} calls `{tool}` with contract-invalid args",
                        i + 1
                    ));
                    continue;
                }
                let result = execute_tool(&call, &mut state);
                if result.status != ToolStatus::Ok {
                    findings.push(format!(
                        "solution step {} (`{tool}`) fails at runtime: {}",
                        i + 1,
                        result.payload
                    ));
                }
            }
            SolutionStep::Final { answer } => {
                finished = true;
                let verdict = check_final_answer(answer, task, &state);
                if !verdict.success {
                    findings.push(format!(
                        "solution final answer rejected: {}",
                        verdict.reason
                    ));
                }
            }
        }
    }
    if !finished {
        findings.push("solution never submits a final answer".into());
    }
    findings
}

fn cmd_validate_pack(workdir: &Path, args: ValidatePackArgs) -> Result<(), Failure> {
    let path = resolve(workdir, &args.pack);
    let tasks = load_task_pack(&path)?;
    let contracts = standard_contract_pack().tools;
    let mut findings = 0usize;
    for task in &tasks {
        let mut lines = Vec::new();
        for finding in validate_oracle(task) {
            lines.push(format!("{} — {}", finding.rule, finding.detail));
        }
        lines.extend(replay_solution(task, &contracts));
        if lines.is_empty() {
            println!("task {}: ok", task.task_id);
        } else {
            findings += lines.len();
            for line in lines {
                println!("task {}: finding: {line}", task.task_id);
            }
        }
    }
    let digest = sha256_hex(&fs::read(&path)?);
    println!("pack digest {digest}");
    if findings > 0 {
        return Err(Failure::Findings(format!("{findings} finding(s)")));
    }
    println!("{} tasks valid", tasks.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

enum AgentSpec {
    Scripted(String),
    Remote(String),
}

fn parse_agent_spec(raw: Option<&str>) -> Result<AgentSpec, Failure> {
    let text = match raw {
        Some(t) => t.to_string(),
        None => match std::env::var(REMOTE_URL_ENV) {
            Ok(url) if !url.is_empty() => return Ok(AgentSpec::Remote(url)),
            _ => {
                return Err(Failure::Usage(format!(
                    "--agent is required (or set {REMOTE_URL_ENV} for a remote default)"
                )))
            }
        },
    };
    if let Some(name) = text.strip_prefix("scripted:") {
        if !scripted_agent_names().contains(&name) {
            return Err(Failure::Usage(format!(
                "unknown scripted agent `{name}`, expected one of {:?}",
                scripted_agent_names()
            )));
        }
        Ok(AgentSpec::Scripted(name.to_string()))
    } else if let Some(url) = text.strip_prefix("remote:") {
        Ok(AgentSpec::Remote(url.to_string()))
    } else {
        Err(Failure::Usage(format!(
            "agent must be `scripted:<name>` or `remote:<url>`, got `{text}`"
        )))
    }
}

fn build_transport(
    spec: &AgentSpec,
    tasks: &Arc<Vec<TaskInstance>>,
    inject_timeout: Option<&str>,
) -> Result<Box<dyn AgentTransport>, Failure> {
    let base: Box<dyn AgentTransport> = match spec {
        AgentSpec::Scripted(name) => {
            scripted_agent(name, tasks).expect("name validated at parse time")
        }
        AgentSpec::Remote(url) => Box::new(RemoteTransport::new(url.clone())),
    };
    match inject_timeout {
        None => Ok(base),
        Some(cell) => {
            let (task_id, seed_text) = cell.rsplit_once(':').ok_or_else(|| {
                Failure::Usage("--inject-timeout wants `<task_id>:<seed>`".into())
            })?;
            let seed: u64 = seed_text
                .parse()
                .map_err(|_| Failure::Usage(format!("bad inject-timeout seed `{seed_text}`")))?;
            Ok(Box::new(TimeoutInjector::new(base, task_id, seed)))
        }
    }
}

fn cmd_run(workdir: &Path, args: RunArgs) -> Result<(), Failure> {
    let pack_path = resolve(workdir, &args.pack);
    let contracts_path = resolve(workdir, &args.contracts);
    let pack_bytes = fs::read(&pack_path)?;
    let tasks = crate::sandbox::pack_from_str(
        std::str::from_utf8(&pack_bytes)
            .map_err(|e| Failure::Findings(format!("task pack is not UTF-8: {e}")))?,
    )?;
    let contract_bytes = fs::read(&contracts_path)?;
    let contracts = load_contract_pack(&contract_bytes)?;
    let agent_spec = parse_agent_spec(args.agent.as_deref())?;
    let tok = tokenizer(&args.tokenizer).ok_or_else(|| {
        Failure::Usage(format!(
            "unknown tokenizer `{}`, expected one of {:?}",
            args.tokenizer,
            tokenizer_names()
        ))
    })?;

    if args.budgets.is_empty() || args.conditions.is_empty() || args.seeds.is_empty() {
        return Err(Failure::Usage(
            "budgets, conditions, and seeds must be non-empty".into(),
        ));
    }
    let spec = MatrixSpec {
        budgets: args.budgets.clone(),
        conditions: args.conditions.clone(),
        seeds: args.seeds.clone(),
        granularity: args.granularity,
        step_timeout_ms: args.timeout_ms,
        max_step_output_chars: args.max_step_output_chars,
    };
    let planned = matrix_cells(&tasks, &spec);

    let log_path = resolve(workdir, &args.log);
    ensure_parent(&log_path)?;
    let run_dir = log_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));

    let manifest = RunManifest {
        version: MANIFEST_VERSION,
        pack_path: args.pack.display().to_string(),
        pack_digest: sha256_hex(&pack_bytes),
        contracts_path: args.contracts.display().to_string(),
        contract_pack_digest: sha256_hex(&contract_bytes),
        oracle_digests: tasks
            .iter()
            .map(|t| {
                let oracle = serde_json::to_value(&t.oracle).expect("oracle serializes");
                (t.task_id.clone(), value_digest(&oracle))
            })
            .collect(),
        tasks: tasks.iter().map(|t| t.task_id.clone()).collect(),
        budgets: args.budgets.clone(),
        conditions: args.conditions.clone(),
        seeds: args.seeds.clone(),
        granularity: args.granularity,
        agent: match &agent_spec {
            AgentSpec::Scripted(name) => format!("scripted:{name}"),
            AgentSpec::Remote(url) => format!("remote:{url}"),
        },
        tokenizer: tok.name().to_string(),
        step_timeout_ms: args.timeout_ms,
        max_step_output_chars: args.max_step_output_chars,
        planned_cells: planned.len(),
        tool_versions: BTreeMap::from([(
            "contractbench".to_string(),
            env!("CARGO_PKG_VERSION").to_string(),
        )]),
        timestamp_unix_secs: now_unix_secs(),
    };
    // The manifest must exist before the first episode runs.
    let manifest_path = run_dir.join(MANIFEST_FILE);
    let mut manifest_text =
        serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    manifest_text.push('\n');
    fs::write(&manifest_path, manifest_text)?;
    println!(
        "manifest {} (digest {}, {} planned cells)",
        manifest_path.display(),
        manifest.digest(),
        manifest.planned_cells
    );

    let tasks = Arc::new(tasks);
    let transport = build_transport(&agent_spec, &tasks, args.inject_timeout.as_deref())?;

    let mut log_file = BufWriter::new(fs::File::create(&log_path)?);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))?;
    let runs = pool
        .install(|| {
            run_matrix(
                &tasks,
                &contracts,
                &spec,
                transport.as_ref(),
                tok.as_ref(),
                Some(&mut log_file as &mut (dyn Write + Send)),
            )
        })
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    log_file.flush()?;
    println!("log {}", log_path.display());

    let report = analyze_runs(&runs, tok.name(), &AnalyzeOptions::default())?;
    write_reports(&run_dir, &report)?;
    println!(
        "cells {}: {} scored, {} excluded",
        report.totals.cells, report.totals.scored, report.totals.excluded
    );
    Ok(())
}

fn write_reports(dir: &Path, report: &crate::analysis::AnalysisReport) -> Result<(), Failure> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.csv"), render_report_csv(report))?;
    fs::write(dir.join("report.json"), render_report_json(report))?;
    fs::write(dir.join("curves.csv"), render_curves_csv(report))?;
    println!(
        "reports {}/report.csv {}/report.json {}/curves.csv",
        dir.display(),
        dir.display(),
        dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

fn parse_alternative(text: &str) -> Result<Alternative, Failure> {
    match text {
        "two-sided" => Ok(Alternative::TwoSided),
        "greater" => Ok(Alternative::Greater),
        "less" => Ok(Alternative::Less),
        other => Err(Failure::Usage(format!(
            "unknown alternative `{other}`, expected two-sided, greater, or less"
        ))),
    }
}

/// Check the log against the manifest beside it: planned cells must cover
/// every logged run, and recorded input digests must match the files on
/// disk when those files are still present. Returns the manifest when one
/// was found.
fn verify_against_manifest(
    workdir: &Path,
    log_dir: &Path,
    run_ids: &[String],
) -> Result<Option<RunManifest>, Failure> {
    let manifest_path = log_dir.join(MANIFEST_FILE);
    let text = match fs::read_to_string(&manifest_path) {
        Ok(t) => t,
        Err(_) => {
            eprintln!(
                "note: no {MANIFEST_FILE} beside the log; skipping input verification"
            );
            return Ok(None);
        }
    };
    let manifest: RunManifest = serde_json::from_str(&text)
        .map_err(|e| Failure::Findings(format!("manifest parse error: {e}")))?;
    let planned: std::collections::BTreeSet<String> =
        manifest.planned_run_ids().into_iter().collect();
    for run_id in run_ids {
        if !planned.contains(run_id) {
            return Err(Failure::Findings(format!(
                "log run `{run_id}` is not among the manifest's planned cells"
            )));
        }
    }
    for (label, rel_path, digest) in [
        ("task pack", &manifest.pack_path, &manifest.pack_digest),
        (
            "contract pack",
            &manifest.contracts_path,
            &manifest.contract_pack_digest,
        ),
    ] {
        let path = resolve(workdir, Path::new(rel_path));
        match fs::read(&path) {
            Ok(bytes) => {
                let found = sha256_hex(&bytes);
                if &found != digest {
                    return Err(Failure::Findings(format!(
                        "{label} digest mismatch: manifest {digest}, file {found} ({})",
                        path.display()
                    )));
                }
            }
            Err(_) => eprintln!(
                "note: {label} {} not found; skipping its digest check",
                path.display()
            ),
        }
    }
    Ok(Some(manifest))
}

fn cmd_analyze(workdir: &Path, args: AnalyzeArgs) -> Result<(), Failure> {
    let log_path = resolve(workdir, &args.log);
    let text = fs::read_to_string(&log_path)?;
    let runs = read_log_runs(&text).map_err(|e| Failure::Findings(e.to_string()))?;
    let log_dir = log_path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let run_ids: Vec<String> = runs.iter().map(|r| r.run_id.clone()).collect();
    let manifest = verify_against_manifest(workdir, &log_dir, &run_ids)?;

    let options = AnalyzeOptions {
        bootstrap_resamples: args.resamples,
        bootstrap_seed: args.bootstrap_seed,
        alternative: parse_alternative(&args.alternative)?,
    };
    let tokenizer_name = manifest
        .as_ref()
        .map(|m| m.tokenizer.as_str())
        .unwrap_or("whitespace");
    let report = analyze_runs(&runs, tokenizer_name, &options)?;
    let out_dir = args
        .out
        .map(|p| resolve(workdir, &p))
        .unwrap_or(log_dir);
    write_reports(&out_dir, &report)?;
    println!(
        "cells {}: {} scored, {} excluded",
        report.totals.cells, report.totals.scored, report.totals.excluded
    );
    if let Some(primary) = report.tests.first() {
        println!(
            "primary {} {}: p = {} ({})",
            primary.endpoint, primary.contrast, primary.p_value, primary.method
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// export-contracts
// ---------------------------------------------------------------------------

fn cmd_export_contracts(workdir: &Path, args: ExportContractsArgs) -> Result<(), Failure> {
    let pack = standard_contract_pack();
    let out = resolve(workdir, &args.out);
    ensure_parent(&out)?;
    fs::write(&out, contract_pack_to_string(&pack))?;
    let digest = sha256_hex(&fs::read(&out)?);
    println!(
        "wrote {} contracts to {} (digest {digest})",
        pack.tools.len(),
        out.display()
    );
    Ok(())
}
