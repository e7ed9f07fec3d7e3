use std::collections::BTreeMap;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use exploitlab_core::analyzer::{analyze_all, sort_findings, Finding, Severity};
use exploitlab_core::lang::{parse_source, Contract, ParseError};
use exploitlab_core::scenarios::{
    builtin_fixture, builtin_manifest, run_manifest, run_scenario_streaming, scenario_names, Manifest, ScenarioError,
    ScenarioReport,
};
use exploitlab_core::vm::{NoTrace, TraceEvent, TraceSink};
use exploitlab_core::UInt;
use serde::Serialize;

const EXIT_ERROR: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_SCENARIO: u8 = 3;
const EXIT_FINDINGS: u8 = 4;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "exploitlab", version, about = "Replay smart-contract exploits on a toy VM and lint contracts")]
struct Cli {
    /// Output format; structured output is one JSON record per line.
    #[arg(long, global = true, value_enum, env = "EXPLOITLAB_FORMAT", default_value = "human")]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    Structured,
}

#[derive(Clone, Copy, ValueEnum)]
enum Threshold {
    High,
    Medium,
}

impl From<Threshold> for Severity {
    fn from(t: Threshold) -> Self {
        match t {
            Threshold::High => Severity::High,
            Threshold::Medium => Severity::Medium,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a contract source file.
    Parse { file: PathBuf },
    /// Run a scenario manifest from disk.
    Run {
        manifest: PathBuf,
        #[arg(long = "set", value_name = "K=V", value_parser = key_value)]
        set: Vec<(String, String)>,
    },
    /// Run a built-in scenario and print its report.
    Attack {
        scenario: String,
        #[arg(long = "set", value_name = "K=V", value_parser = key_value)]
        set: Vec<(String, String)>,
    },
    /// Run the static analyzer over contract files.
    Analyze {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "high")]
        fail_on: Threshold,
    },
    /// Stream the attack-phase trace of a built-in scenario.
    Trace {
        scenario: String,
        #[arg(long = "set", value_name = "K=V", value_parser = key_value)]
        set: Vec<(String, String)>,
    },
    /// List the built-in scenarios.
    ListScenarios,
}

fn key_value(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected K=V, got `{s}`"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

/// An error carrying its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure { code: EXIT_ERROR, message: format!("{e:#}") }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        // A reader that went away (`| head`) is not an error.
        if e.kind() == io::ErrorKind::BrokenPipe {
            return Failure { code: 0, message: String::new() };
        }
        anyhow::Error::from(e).into()
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let result = dispatch(&cli, &mut out).and_then(|code| {
        out.flush()?;
        Ok(code)
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            let _ = out.flush();
            if !f.message.is_empty() {
                eprintln!("exploitlab: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<u8, Failure> {
    let format = cli.format;
    match &cli.command {
        Command::Parse { file } => parse_cmd(file, format, out),
        Command::Run { manifest, set } => {
            let text = std::fs::read_to_string(manifest).with_context(|| format!("reading {}", manifest.display()))?;
            let m = Manifest::from_toml(&text).map_err(|e| anyhow!("{}: {e}", manifest.display()))?;
            let dir = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
            let resolver = move |name: &str| {
                builtin_fixture(name)
                    .map(str::to_string)
                    .or_else(|| std::fs::read_to_string(dir.join(format!("{name}.toy"))).ok())
            };
            let report = run_manifest(&m, &overrides(set), &resolver, Some(&mut NoTrace)).map_err(scenario_failure)?;
            report_cmd(&report, format, out)
        }
        Command::Attack { scenario, set } => {
            let report = run_scenario_streaming(scenario, &overrides(set), &mut NoTrace).map_err(scenario_failure)?;
            report_cmd(&report, format, out)
        }
        Command::Analyze { files, fail_on } => analyze_cmd(files, (*fail_on).into(), format, out),
        Command::Trace { scenario, set } => {
            let mut sink = StreamSink { out: &mut *out, format, error: None };
            let report = run_scenario_streaming(scenario, &overrides(set), &mut sink).map_err(scenario_failure)?;
            if let Some(e) = sink.error {
                return Err(e.into());
            }
            Ok(if report.passed() { 0 } else { EXIT_SCENARIO })
        }
        Command::ListScenarios => {
            for name in scenario_names() {
                match format {
                    Format::Human => writeln!(out, "{name}")?,
                    Format::Structured => {
                        let m = Manifest::from_toml(builtin_manifest(name).unwrap()).map_err(|e| anyhow!(e))?;
                        json_line(
                            out,
                            &serde_json::json!({ "name": name, "exploit_expected": m.exploit_expected }),
                        )?
                    }
                }
            }
            Ok(0)
        }
    }
}

fn overrides(set: &[(String, String)]) -> BTreeMap<String, String> {
    set.iter().cloned().collect()
}

fn scenario_failure(e: ScenarioError) -> Failure {
    let code = match &e {
        ScenarioError::UnknownScenario(_) | ScenarioError::UnknownParam(_) | ScenarioError::BadOverride { .. } => {
            EXIT_USAGE
        }
        ScenarioError::Fixture { .. } => EXIT_PARSE,
        ScenarioError::Setup { .. } => EXIT_SCENARIO,
        _ => EXIT_ERROR,
    };
    Failure { code, message: e.to_string() }
}

fn json_line(out: &mut dyn Write, value: &impl Serialize) -> io::Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")
}

fn parse_failure(path: &Path, e: &ParseError) -> Failure {
    Failure { code: EXIT_PARSE, message: format!("{}:{e}", path.display()) }
}

fn read_contracts(path: &Path) -> Result<Vec<Contract>, Failure> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_source(&text).map_err(|e| parse_failure(path, &e))
}

fn parse_cmd(file: &Path, format: Format, out: &mut dyn Write) -> Result<u8, Failure> {
    let contracts = read_contracts(file)?;
    for c in &contracts {
        let functions: Vec<&str> = c.functions.iter().map(|f| f.name.as_str()).collect();
        match format {
            Format::Human => writeln!(
                out,
                "{}: contract {} ({} storage, functions: {}{})",
                file.display(),
                c.name,
                c.storage.len(),
                if functions.is_empty() { "none".to_string() } else { functions.join(", ") },
                if c.fallback.is_some() { ", fallback" } else { "" }
            )?,
            Format::Structured => json_line(
                out,
                &serde_json::json!({
                    "file": file.display().to_string(),
                    "contract": c.name,
                    "storage": c.storage.iter().map(|d| &d.name).collect::<Vec<_>>(),
                    "functions": functions,
                    "fallback": c.fallback.is_some(),
                }),
            )?,
        }
    }
    Ok(0)
}

/// `fixtures/bank` also finds `fixtures/bank.toy`.
fn resolve_source(path: &Path) -> PathBuf {
    if !path.exists() && path.extension().is_none() {
        let with_ext = path.with_extension("toy");
        if with_ext.exists() {
            return with_ext;
        }
    }
    path.to_path_buf()
}

fn analyze_cmd(files: &[PathBuf], threshold: Severity, format: Format, out: &mut dyn Write) -> Result<u8, Failure> {
    let parsed: Vec<Result<Vec<Contract>, Failure>> = thread::scope(|s| {
        let handles: Vec<_> = files
            .iter()
            .map(|f| s.spawn(move || read_contracts(&resolve_source(f))))
            .collect();
        handles.into_iter().map(|h| h.join().expect("parser thread panicked")).collect()
    });
    let mut contracts = Vec::new();
    for r in parsed {
        contracts.extend(r?);
    }
    let mut findings: Vec<Finding> = thread::scope(|s| {
        let handles: Vec<_> = contracts.iter().map(|c| s.spawn(move || analyze_all([c]))).collect();
        handles.into_iter().flat_map(|h| h.join().expect("analyzer thread panicked")).collect()
    });
    sort_findings(&mut findings);
    for f in &findings {
        match format {
            Format::Human => {
                writeln!(
                    out,
                    "{:<6} {} {}.{} @ {}: {}",
                    f.severity.as_str(),
                    f.detector,
                    f.contract,
                    f.function,
                    f.location,
                    f.message
                )?;
                for e in &f.evidence {
                    writeln!(out, "         {}: {}", e.location, e.statement)?;
                }
            }
            Format::Structured => json_line(out, f)?,
        }
    }
    let failing = findings.iter().filter(|f| f.severity.at_least(threshold)).count();
    if format == Format::Human {
        writeln!(out, "{} finding(s), {failing} at or above {threshold}", findings.len())?;
    }
    Ok(if failing > 0 { EXIT_FINDINGS } else { 0 })
}

const WEI_PER_ETHER: u128 = 1_000_000_000_000_000_000;

/// `12 ether 2 wei`, `2 wei`, `0 wei`, or the raw integer past u128.
fn wei(v: &UInt) -> String {
    let Some(n) = v.to_u128() else { return format!("{v} wei") };
    let (ether, rest) = (n / WEI_PER_ETHER, n % WEI_PER_ETHER);
    match (ether, rest) {
        (0, r) => format!("{r} wei"),
        (e, 0) => format!("{e} ether"),
        (e, r) => format!("{e} ether {r} wei"),
    }
}

fn report_cmd(report: &ScenarioReport, format: Format, out: &mut dyn Write) -> Result<u8, Failure> {
    match format {
        Format::Structured => json_line(out, report)?,
        Format::Human => human_report(report, out)?,
    }
    Ok(if report.passed() { 0 } else { EXIT_SCENARIO })
}

fn human_report(r: &ScenarioReport, out: &mut dyn Write) -> io::Result<()> {
    writeln!(out, "scenario {}", r.name)?;
    if !r.description.is_empty() {
        writeln!(out, "  {}", r.description)?;
    }
    if !r.params.is_empty() {
        let params: Vec<String> = r.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        writeln!(out, "params: {}", params.join(" "))?;
    }
    writeln!(out, "attack:")?;
    for t in &r.outcomes {
        let function = t.function.as_deref().unwrap_or("<fallback>");
        writeln!(out, "  {} -> {}.{function}: {} (gas {})", t.from, t.to, t.status, t.gas_used)?;
    }
    writeln!(out, "balances:")?;
    for (name, after) in &r.final_balances {
        let before = &r.initial_balances[name];
        if before == after {
            writeln!(out, "  {name}: {}", wei(after))?;
        } else {
            writeln!(out, "  {name}: {} -> {}", wei(before), wei(after))?;
        }
    }
    if !r.storage_deltas.is_empty() {
        writeln!(out, "storage:")?;
        for d in &r.storage_deltas {
            writeln!(out, "  {}.{}: {} -> {}", d.account, d.slot, d.before, d.after)?;
        }
    }
    writeln!(out, "expectations:")?;
    for e in &r.expectations {
        let tag = if e.exploit { " exploit" } else { "" };
        let mark = if e.passed { "ok  " } else { "FAIL" };
        writeln!(out, "  [{mark}{tag}] {} (actual {})", e.description, e.actual)?;
    }
    writeln!(
        out,
        "exploit: {} (expected {})",
        if r.exploit_succeeded { "succeeded" } else { "failed" },
        if r.exploit_expected { "success" } else { "failure" }
    )?;
    writeln!(out, "state: {} -> {}", r.pre_state_hash, r.post_state_hash)?;
    writeln!(out, "result: {}", if r.passed() { "PASS" } else { "FAIL" })
}

/// Writes trace events as they happen.
struct StreamSink<'a> {
    out: &'a mut dyn Write,
    format: Format,
    error: Option<io::Error>,
}

impl TraceSink for StreamSink<'_> {
    fn record(&mut self, event: TraceEvent) {
        if self.error.is_some() {
            return;
        }
        let written = match self.format {
            Format::Structured => json_line(self.out, &event),
            Format::Human => human_event(self.out, &event),
        };
        self.error = written.err();
    }
}

fn human_event(out: &mut dyn Write, event: &TraceEvent) -> io::Result<()> {
    match event {
        TraceEvent::FrameEnter { depth, caller, callee, entry, value, gas } => {
            let entry = entry.as_ref().map_or("-".to_string(), |e| e.to_string());
            writeln!(
                out,
                "{}enter {callee}.{entry} from {caller} value={} gas={gas}",
                "  ".repeat(*depth),
                wei(value)
            )
        }
        TraceEvent::FrameExit { depth, status, gas_used } => {
            writeln!(out, "{}exit {status} gas_used={gas_used}", "  ".repeat(*depth))
        }
        TraceEvent::StatementExec { depth, kind, location } => {
            writeln!(out, "{}  {kind} @ {location}", "  ".repeat(*depth))
        }
        TraceEvent::BalanceChange { address, old, new } => {
            writeln!(out, "  balance {address}: {} -> {}", wei(old), wei(new))
        }
    }
}
