//! Batch front end behind the `bsdsynth` binary.
//!
//! Every subcommand writes a JSON report that embeds a [`RunManifest`]; rerunning
//! the manifest's `command` reproduces the report apart from `wall_clock_ms`.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or parse error,
//! 3 budget exhausted.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::blif::{emit_blif, parse_blif};
use crate::bsd::{Bsd, GuessPolicy};
use crate::builtins::{make_builtin, Builtin};
use crate::decomp::{search, KnowledgeBase, SearchConfig};
use crate::error::{Error, Result};
use crate::netlist::{Metrics, Netlist};
use crate::oracle::{BoolFunction, Oracle};
use crate::pla::parse_pla;
use crate::repair::{synthesize_module, ConvergenceReport, OrderPolicy, RepairConfig, Target};
use crate::verify::{verify_with, VerificationReport, VerifyMode};
use crate::verilog::emit_verilog_structural;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

/// Environment variable naming the default knowledge-base file for `decompose`.
pub const KB_ENV: &str = "BSDSYNTH_KB";
pub const REPORT_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(
    name = "bsdsynth",
    version,
    about = "Oracle-guided logic synthesis with binary speculation diagrams"
)]
pub struct Cli {
    /// Worker threads for parallel simulation and module synthesis (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Suppress human-readable summaries; reports are still written.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthesize one oracle with the verify/repair loop.
    Synth(SynthArgs),
    /// Search output-bit decompositions for the cheapest verified netlist.
    Decompose(DecomposeArgs),
    /// Check a diagram dump or BLIF netlist against an oracle.
    Verify(VerifyArgs),
    /// Synthesize every built-in up to a width and tabulate the results.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TargetArg {
    Exhaustive,
    Statistical,
    Accuracy,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum GuessArg {
    SampleMajority,
    Random,
    Zero,
    ExactCofactor,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Exhaustive,
    Statistical,
}

#[derive(Args, Debug, Clone)]
pub struct RepairArgs {
    /// Root seed; every random stream is derived from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "exhaustive")]
    pub target: TargetArg,
    #[arg(long, default_value_t = 0.99)]
    pub confidence: f64,
    #[arg(long, default_value_t = 0.001)]
    pub max_error: f64,
    /// Cache accuracy required by `--target accuracy`.
    #[arg(long, default_value_t = 1.0)]
    pub threshold: f64,
    #[arg(long, default_value_t = 256)]
    pub batch: usize,
    #[arg(long, default_value_t = 1000)]
    pub max_cycles: usize,
    /// Per-output node budget (default 4 * 2^width_in).
    #[arg(long)]
    pub max_nodes: Option<usize>,
    #[arg(long, value_enum, default_value = "sample-majority")]
    pub guess: GuessArg,
    /// `natural`, `support`, or a comma-separated permutation of input bits.
    #[arg(long)]
    pub order: Option<String>,
    /// Samples used to rank inputs for `--order support`.
    #[arg(long, default_value_t = 256)]
    pub order_samples: usize,
    #[arg(long)]
    pub expansion_cap: Option<usize>,
    #[arg(long, default_value_t = crate::oracle::DEFAULT_EXHAUSTIVE_THRESHOLD)]
    pub exhaustive_threshold: usize,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// `name:param[:param]` for a built-in, or a `.blif` / `.pla` file.
    #[arg(long)]
    pub oracle: String,
    #[command(flatten)]
    pub repair: RepairArgs,
    #[arg(long, default_value = "bsdsynth-out")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub oracle: String,
    #[command(flatten)]
    pub repair: RepairArgs,
    #[arg(long, default_value_t = 20)]
    pub iters: usize,
    #[arg(long, default_value_t = 10.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.5)]
    pub prune_factor: f64,
    #[arg(long, default_value_t = 4)]
    pub branching: usize,
    #[arg(long, default_value_t = std::f64::consts::SQRT_2)]
    pub exploration: f64,
    /// Samples for the per-output support estimate that drives proposals.
    #[arg(long, default_value_t = 4096)]
    pub support_samples: usize,
    /// Knowledge-base file; defaults to `$BSDSYNTH_KB`, otherwise in-memory only.
    #[arg(long)]
    pub kb: Option<PathBuf>,
    #[arg(long, default_value = "bsdsynth-out")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// A diagram dump (`.bsd`) or a BLIF netlist (`.blif`).
    #[arg(long)]
    pub design: PathBuf,
    #[arg(long)]
    pub oracle: String,
    #[arg(long, value_enum, default_value = "exhaustive")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 0.99)]
    pub confidence: f64,
    #[arg(long, default_value_t = 0.001)]
    pub max_error: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = crate::oracle::DEFAULT_EXHAUSTIVE_THRESHOLD)]
    pub exhaustive_threshold: usize,
    /// Report path; printed to stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Keep only built-ins whose name contains this string.
    #[arg(long)]
    pub filter: Option<String>,
    #[arg(long, default_value_t = 16)]
    pub max_width: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// Everything needed to replay a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Arguments after the program name.
    pub command: Vec<String>,
    /// Effective configuration with every default filled in.
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub artifacts: BTreeMap<String, String>,
    pub tool_version: String,
    pub wall_clock_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleInfo {
    pub selector: String,
    pub name: String,
    pub width_in: usize,
    pub width_out: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthOutput {
    pub kind: String,
    pub version: u32,
    pub manifest: RunManifest,
    pub oracle: OracleInfo,
    pub report: ConvergenceReport,
    pub netlist: Option<Metrics>,
    pub verification: Option<VerificationReport>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchRow {
    pub oracle: String,
    pub width_in: usize,
    pub width_out: usize,
    pub status: String,
    pub cycles: usize,
    pub samples_seen: usize,
    pub decisions: usize,
    pub gates: Option<usize>,
    pub depth: Option<usize>,
    pub mismatches: Option<u64>,
    pub wall_clock_ms: u64,
}

/// Parses `argv` (program name first), runs the command and returns its exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<String> = args
        .into_iter()
        .map(|a| a.into().to_string_lossy().into_owned())
        .collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let command: Vec<String> = argv.iter().skip(1).cloned().collect();
    let ctx = Ctx {
        command,
        quiet: cli.quiet,
    };
    let go = || match &cli.command {
        Command::Synth(a) => cmd_synth(a, &ctx),
        Command::Decompose(a) => cmd_decompose(a, &ctx),
        Command::Verify(a) => cmd_verify(a, &ctx),
        Command::Bench(a) => cmd_bench(a, &ctx),
    };
    let result = match cli.jobs {
        Some(0) => Err(Error::contract("--jobs must be at least 1")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(go),
            Err(e) => Err(Error::contract(format!("cannot start {n} workers: {e}"))),
        },
        None => go(),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

struct Ctx {
    command: Vec<String>,
    quiet: bool,
}

macro_rules! note {
    ($ctx:expr, $($arg:tt)*) => {
        if !$ctx.quiet {
            eprintln!($($arg)*);
        }
    };
}

macro_rules! say {
    ($ctx:expr, $($arg:tt)*) => {
        if !$ctx.quiet {
            println!($($arg)*);
        }
    };
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NodeBudget { .. } => EXIT_BUDGET,
        _ => EXIT_USAGE,
    }
}

/// Resolves `name:param[:param]` or a `.blif` / `.pla` path.
///
/// File oracles are named `<stem>@<hash>` after their contents so knowledge-base
/// entries never collide across different files with the same name.
pub fn resolve_oracle(selector: &str) -> Result<Oracle> {
    let path = Path::new(selector);
    let ext = path.extension().and_then(|e| e.to_str());
    if let Some(ext @ ("blif" | "pla")) = ext {
        let text = fs::read_to_string(path)?;
        let oracle = if ext == "blif" {
            parse_blif(&text)?
        } else {
            parse_pla(&text)?
        };
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(ext);
        return Ok(oracle.with_name(format!("{stem}@{}", short_hash(text.as_bytes()))));
    }
    let mut parts = selector.split(':');
    let name = parts.next().unwrap_or_default();
    let params = parts
        .map(|p| {
            p.parse::<u64>().map_err(|_| Error::InvalidParams {
                name: name.to_string(),
                reason: format!("parameter `{p}` is not an unsigned integer"),
            })
        })
        .collect::<Result<Vec<u64>>>()?;
    make_builtin(name, &params)
}

fn short_hash(bytes: &[u8]) -> String {
    Sha256::digest(bytes)[..8]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Parses a report and drops every `wall_clock_ms` field, for determinism checks.
pub fn without_wall_clock(report: &str) -> Result<serde_json::Value> {
    fn strip(v: &mut serde_json::Value) {
        match v {
            serde_json::Value::Object(m) => {
                m.remove("wall_clock_ms");
                m.values_mut().for_each(strip);
            }
            serde_json::Value::Array(a) => a.iter_mut().for_each(strip),
            _ => {}
        }
    }
    let mut v: serde_json::Value = serde_json::from_str(report)?;
    strip(&mut v);
    Ok(v)
}

impl RepairArgs {
    fn to_config(&self, default_order: OrderPolicy) -> Result<RepairConfig> {
        let target = match self.target {
            TargetArg::Exhaustive => Target::Exhaustive100,
            TargetArg::Statistical => Target::Statistical {
                confidence: self.confidence,
                max_error: self.max_error,
            },
            TargetArg::Accuracy => Target::SampleAccuracy {
                threshold: self.threshold,
            },
        };
        let guess_policy = match self.guess {
            GuessArg::SampleMajority => GuessPolicy::SampleMajority { tie_break: false },
            GuessArg::Random => GuessPolicy::RandomSeeded { seed: self.seed },
            GuessArg::Zero => GuessPolicy::ConstantZero,
            GuessArg::ExactCofactor => GuessPolicy::ExactCofactorMajority,
        };
        let order = match self.order.as_deref() {
            None => default_order,
            Some("natural") => OrderPolicy::Natural,
            Some("support") => OrderPolicy::SupportDriven {
                samples: self.order_samples,
            },
            Some(list) => OrderPolicy::Explicit {
                order: list
                    .split(',')
                    .map(|t| t.trim().parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| {
                        Error::contract(format!(
                            "--order `{list}` is not natural, support or a list of bits"
                        ))
                    })?,
            },
        };
        let defaults = RepairConfig::default();
        Ok(RepairConfig {
            seed: self.seed,
            batch_size: self.batch,
            max_cycles: self.max_cycles,
            max_nodes: self.max_nodes,
            target,
            guess_policy,
            init_policy: None,
            expansions_per_cycle_cap: self
                .expansion_cap
                .unwrap_or(defaults.expansions_per_cycle_cap),
            order,
            exhaustive_threshold: self.exhaustive_threshold,
            ..defaults
        })
    }
}

fn oracle_info(selector: &str, o: &Oracle) -> OracleInfo {
    OracleInfo {
        selector: selector.to_string(),
        name: o.name().to_string(),
        width_in: o.width_in(),
        width_out: o.width_out(),
    }
}

/// A Verilog/BLIF-safe model name derived from an oracle name.
pub fn identifier_for(name: &str) -> String {
    let mut s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    if !s.starts_with(|c: char| c.is_ascii_alphabetic()) {
        s.insert_str(0, "m_");
    }
    s
}

fn final_check_mode(cfg: &RepairConfig, width_in: usize) -> VerifyMode {
    if width_in <= cfg.exhaustive_threshold {
        return VerifyMode::Exhaustive;
    }
    let (confidence, max_error) = match cfg.target {
        Target::Statistical {
            confidence,
            max_error,
        } => (confidence, max_error),
        _ => (0.99, 0.001),
    };
    VerifyMode::Statistical {
        confidence,
        max_error,
        seed: cfg.seed,
    }
}

/// A synthesized design plus its lowered netlist and final equivalence check.
pub struct SynthResult {
    pub bsd: Bsd,
    pub report: ConvergenceReport,
    pub netlist: Option<Netlist>,
    pub verification: Option<VerificationReport>,
}

impl SynthResult {
    pub fn exit_code(&self) -> i32 {
        match &self.verification {
            _ if !self.report.converged() => EXIT_BUDGET,
            Some(v) if v.pass => EXIT_OK,
            _ => EXIT_VERIFY,
        }
    }
}

/// Synthesizes, lowers and verifies one oracle.
pub fn synth_and_check(oracle: &Oracle, cfg: &RepairConfig) -> Result<SynthResult> {
    let (bsd, report) = synthesize_module(oracle, cfg)?;
    let (netlist, verification) = if report.converged() {
        let net = bsd.to_netlist()?.simplify();
        let check = verify_with(
            &net,
            oracle,
            final_check_mode(cfg, oracle.width_in()),
            cfg.exhaustive_threshold,
        )?;
        (Some(net), Some(check))
    } else {
        (None, None)
    };
    Ok(SynthResult {
        bsd,
        report,
        netlist,
        verification,
    })
}

fn manifest(
    command: Vec<String>,
    config: &impl Serialize,
    seed: u64,
    artifacts: BTreeMap<String, String>,
    started: Instant,
) -> Result<RunManifest> {
    Ok(RunManifest {
        command,
        config: serde_json::to_value(config)?,
        seeds: BTreeMap::from([("root".to_string(), seed)]),
        artifacts,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_ms: started.elapsed().as_millis() as u64,
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn emit_netlist(
    dir: &Path,
    net: &Netlist,
    name: &str,
    artifacts: &mut BTreeMap<String, String>,
) -> Result<()> {
    let model = identifier_for(name);
    let blif = dir.join("design.blif");
    fs::write(&blif, emit_blif(net, &model))?;
    let v = dir.join("design.v");
    fs::write(&v, emit_verilog_structural(net, &model)?)?;
    artifacts.insert("blif".into(), blif.display().to_string());
    artifacts.insert("verilog".into(), v.display().to_string());
    Ok(())
}

fn cmd_synth(a: &SynthArgs, ctx: &Ctx) -> Result<i32> {
    let started = Instant::now();
    let oracle = resolve_oracle(&a.oracle)?;
    let cfg = a.repair.to_config(OrderPolicy::Natural)?;
    cfg.validate(oracle.width_in())?;
    let result = synth_and_check(&oracle, &cfg)?;

    fs::create_dir_all(&a.out)?;
    let mut artifacts = BTreeMap::new();
    let dump = a.out.join("design.bsd");
    fs::write(&dump, result.bsd.dump())?;
    artifacts.insert("diagram".into(), dump.display().to_string());
    if let Some(net) = &result.netlist {
        emit_netlist(&a.out, net, oracle.name(), &mut artifacts)?;
    }
    let report_path = a.out.join("report.json");
    artifacts.insert("report".into(), report_path.display().to_string());

    let out = SynthOutput {
        kind: "synth".into(),
        version: REPORT_VERSION,
        manifest: manifest(ctx.command.clone(), &cfg, cfg.seed, artifacts, started)?,
        oracle: oracle_info(&a.oracle, &oracle),
        netlist: result.netlist.as_ref().map(Netlist::metrics),
        verification: result.verification.clone(),
        report: result.report.clone(),
    };
    write_json(&report_path, &out)?;

    let r = &result.report;
    let status = match &r.status {
        crate::repair::Status::Converged => "converged".to_string(),
        crate::repair::Status::BudgetExhausted { reason } => format!("budget exhausted ({reason})"),
    };
    say!(
        ctx,
        "{}: {status} after {} cycles, {} decisions, accuracy {}",
        oracle.name(),
        r.cycles.len(),
        r.final_stats.decision_count,
        r.final_exact_accuracy
            .map_or("n/a".to_string(), |x| format!("{x}")),
    );
    if let (Some(n), Some(v)) = (&out.netlist, &out.verification) {
        say!(
            ctx,
            "  {} gates, depth {}, {} mismatches over {} inputs",
            n.gate_count,
            n.depth,
            v.mismatches,
            v.inputs_checked
        );
    }
    Ok(result.exit_code())
}

#[derive(Serialize)]
struct DecomposeOutput<'a> {
    kind: &'a str,
    version: u32,
    manifest: RunManifest,
    oracle: OracleInfo,
    best_scheme: &'a str,
    best_cost: Option<f64>,
    best_report: crate::decomp::PerfReport,
    verification: &'a Option<VerificationReport>,
    synthesis_calls: usize,
    kb_hits: usize,
    stopped_early: bool,
}

#[derive(Serialize)]
struct TraceOutput<'a> {
    kind: &'a str,
    version: u32,
    trace: &'a [crate::decomp::TraceEntry],
    nodes: &'a [crate::decomp::SearchNode],
}

fn cmd_decompose(a: &DecomposeArgs, ctx: &Ctx) -> Result<i32> {
    let started = Instant::now();
    let oracle = resolve_oracle(&a.oracle)?;
    let config = SearchConfig {
        repair: a.repair.to_config(SearchConfig::default().repair.order)?,
        iterations: a.iters,
        lambda: a.lambda,
        exploration: a.exploration,
        prune_factor: a.prune_factor,
        branching: a.branching,
        support_samples: a.support_samples,
        equivalence_confidence: a.repair.confidence,
        equivalence_max_error: a.repair.max_error,
    };
    let kb_path =
        a.kb.clone()
            .or_else(|| std::env::var_os(KB_ENV).map(PathBuf::from));
    let mut kb = match &kb_path {
        Some(p) => KnowledgeBase::load(p)?,
        None => KnowledgeBase::new(),
    };
    let outcome = search(&oracle, &config, &mut kb)?;
    if let Some(p) = &kb_path {
        kb.save(p)?;
    }
    note!(
        ctx,
        "synthesis calls: {} (kb hits: {})",
        outcome.synthesis_calls,
        outcome.kb_hits
    );

    fs::create_dir_all(&a.out)?;
    let mut artifacts = BTreeMap::new();
    if let Some(net) = outcome.best_netlist() {
        emit_netlist(&a.out, net, oracle.name(), &mut artifacts)?;
    }
    if let Some(p) = &kb_path {
        artifacts.insert("kb".into(), p.display().to_string());
    }
    let trace_path = a.out.join("trace.json");
    let report_path = a.out.join("report.json");
    artifacts.insert("trace".into(), trace_path.display().to_string());
    artifacts.insert("report".into(), report_path.display().to_string());
    write_json(
        &trace_path,
        &TraceOutput {
            kind: "decompose_trace",
            version: REPORT_VERSION,
            trace: &outcome.trace,
            nodes: &outcome.nodes,
        },
    )?;
    let mut best_report = outcome.best_report.clone();
    best_report.netlist = None;
    let out = DecomposeOutput {
        kind: "decompose",
        version: REPORT_VERSION,
        manifest: manifest(
            ctx.command.clone(),
            &config,
            config.repair.seed,
            artifacts,
            started,
        )?,
        oracle: oracle_info(&a.oracle, &oracle),
        best_scheme: &outcome.best_scheme,
        best_cost: outcome.best_cost,
        best_report,
        verification: &outcome.verification,
        synthesis_calls: outcome.synthesis_calls,
        kb_hits: outcome.kb_hits,
        stopped_early: outcome.stopped_early,
    };
    write_json(&report_path, &out)?;

    say!(
        ctx,
        "{}: best scheme {}",
        oracle.name(),
        outcome.best_scheme
    );
    for t in &outcome.trace {
        say!(
            ctx,
            "  iter {:>3}  cost {:>10}  best {:>10}  {}{}",
            t.iteration,
            t.cost.map_or("inf".into(), |c| format!("{c}")),
            t.best_cost.map_or("inf".into(), |c| format!("{c}")),
            t.scheme,
            if t.kb_hit { "  (kb)" } else { "" },
        );
    }
    Ok(if outcome.best_netlist().is_some() {
        EXIT_OK
    } else {
        EXIT_VERIFY
    })
}

/// A design loaded for verification: either a diagram or a netlist oracle.
enum Design {
    Diagram(Bsd),
    Blif(Oracle),
}

impl Design {
    fn load(path: &Path) -> Result<Design> {
        let text = fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("bsd") => Ok(Design::Diagram(Bsd::from_dump(&text)?)),
            Some("blif") => Ok(Design::Blif(parse_blif(&text)?)),
            _ => Err(Error::contract(format!(
                "{}: expected a .bsd or .blif design",
                path.display()
            ))),
        }
    }

    fn as_function(&self) -> &dyn BoolFunction {
        match self {
            Design::Diagram(b) => b,
            Design::Blif(o) => o,
        }
    }
}

#[derive(Serialize)]
struct VerifyOutput<'a> {
    kind: &'a str,
    version: u32,
    manifest: RunManifest,
    design: String,
    oracle: OracleInfo,
    verification: VerificationReport,
}

fn cmd_verify(a: &VerifyArgs, ctx: &Ctx) -> Result<i32> {
    let started = Instant::now();
    let oracle = resolve_oracle(&a.oracle)?;
    let design = Design::load(&a.design)?;
    let mode = match a.mode {
        ModeArg::Exhaustive => VerifyMode::Exhaustive,
        ModeArg::Statistical => VerifyMode::Statistical {
            confidence: a.confidence,
            max_error: a.max_error,
            seed: a.seed,
        },
    };
    let report = verify_with(design.as_function(), &oracle, mode, a.exhaustive_threshold)?;
    let mut artifacts = BTreeMap::new();
    if let Some(p) = &a.report {
        artifacts.insert("report".into(), p.display().to_string());
    }
    let config =
        serde_json::json!({ "mode": mode, "exhaustive_threshold": a.exhaustive_threshold });
    let out = VerifyOutput {
        kind: "verify",
        version: REPORT_VERSION,
        manifest: manifest(ctx.command.clone(), &config, a.seed, artifacts, started)?,
        design: a.design.display().to_string(),
        oracle: oracle_info(&a.oracle, &oracle),
        verification: report.clone(),
    };
    match &a.report {
        Some(p) => write_json(p, &out)?,
        None => println!("{}", serde_json::to_string_pretty(&out)?),
    }
    note!(
        ctx,
        "{}: {} mismatches over {} inputs ({})",
        a.design.display(),
        report.mismatches,
        report.inputs_checked,
        if report.pass { "pass" } else { "FAIL" }
    );
    Ok(if report.pass { EXIT_OK } else { EXIT_VERIFY })
}

#[derive(Serialize)]
struct BenchOutput<'a> {
    kind: &'a str,
    version: u32,
    manifest: RunManifest,
    rows: &'a [BenchRow],
}

fn cmd_bench(a: &BenchArgs, ctx: &Ctx) -> Result<i32> {
    let started = Instant::now();
    let suite: Vec<Builtin> = Builtin::catalog(a.max_width)
        .into_iter()
        .filter(|b| {
            a.filter
                .as_deref()
                .is_none_or(|f| b.to_string().contains(f))
        })
        .collect();
    if suite.is_empty() {
        return Err(Error::contract(format!(
            "no built-in with at most {} inputs matches filter {:?}",
            a.max_width,
            a.filter.as_deref().unwrap_or("")
        )));
    }
    let cfg = RepairConfig {
        seed: a.seed,
        ..RepairConfig::default()
    };
    let mut rows = Vec::new();
    let mut code = EXIT_OK;
    say!(
        ctx,
        "{:<18} {:>5} {:>5} {:<10} {:>6} {:>8} {:>9} {:>7} {:>6} {:>10} {:>9}",
        "oracle",
        "in",
        "out",
        "status",
        "cycles",
        "samples",
        "decisions",
        "gates",
        "depth",
        "mismatches",
        "ms"
    );
    for b in suite {
        let t = Instant::now();
        let oracle = b.build()?;
        let res = synth_and_check(&oracle, &cfg)?;
        code = code.max(res.exit_code());
        let row = BenchRow {
            oracle: oracle.name().to_string(),
            width_in: oracle.width_in(),
            width_out: oracle.width_out(),
            status: if res.report.converged() {
                "converged"
            } else {
                "budget"
            }
            .into(),
            cycles: res.report.cycles.len(),
            samples_seen: res.report.samples_seen,
            decisions: res.report.final_stats.decision_count,
            gates: res.netlist.as_ref().map(|n| n.metrics().gate_count),
            depth: res.netlist.as_ref().map(|n| n.metrics().depth),
            mismatches: res.verification.as_ref().map(|v| v.mismatches),
            wall_clock_ms: t.elapsed().as_millis() as u64,
        };
        let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
        say!(
            ctx,
            "{:<18} {:>5} {:>5} {:<10} {:>6} {:>8} {:>9} {:>7} {:>6} {:>10} {:>9}",
            row.oracle,
            row.width_in,
            row.width_out,
            row.status,
            row.cycles,
            row.samples_seen,
            row.decisions,
            opt(row.gates.map(|g| g.to_string())),
            opt(row.depth.map(|g| g.to_string())),
            opt(row.mismatches.map(|g| g.to_string())),
            row.wall_clock_ms
        );
        rows.push(row);
    }
    if let Some(p) = &a.report {
        let mut artifacts = BTreeMap::new();
        artifacts.insert("report".into(), p.display().to_string());
        let config =
            serde_json::json!({ "repair": cfg, "max_width": a.max_width, "filter": a.filter });
        let out = BenchOutput {
            kind: "bench",
            version: REPORT_VERSION,
            manifest: manifest(ctx.command.clone(), &config, a.seed, artifacts, started)?,
            rows: &rows,
        };
        write_json(p, &out)?;
    }
    Ok(code)
}
