//! Search over output-bit partitions of an oracle.
//!
//! Each [`DecompositionScheme`] splits the outputs into modules that are
//! synthesized independently and merged back into one netlist. A best-first
//! search with UCB1 selection explores finer partitions, prunes branches far
//! worse than the best verified netlist, and memoizes every evaluation in a
//! persistent [`KnowledgeBase`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::netlist::{Gate, Metrics, NetId, Netlist};
use crate::oracle::{estimate_supports, BoolFunction, Oracle};
use crate::repair::{synthesize_module, OrderPolicy, RepairConfig};
use crate::verify::{verify_with, VerificationReport, VerifyMode};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Module {
    pub output_bits: Vec<usize>,
    /// `None` means every input.
    pub input_bits: Option<Vec<usize>>,
}

impl Module {
    pub fn new(
        output_bits: impl IntoIterator<Item = usize>,
        input_bits: Option<Vec<usize>>,
    ) -> Self {
        let mut output_bits: Vec<usize> = output_bits.into_iter().collect();
        output_bits.sort_unstable();
        output_bits.dedup();
        let input_bits = input_bits.map(|mut v| {
            v.sort_unstable();
            v.dedup();
            v
        });
        Module {
            output_bits,
            input_bits,
        }
    }

    pub fn key(&self) -> String {
        let mut k = format!("o{}", join(&self.output_bits));
        if let Some(ins) = &self.input_bits {
            k.push_str("/i");
            k.push_str(&join(ins));
        }
        k
    }
}

fn join(v: &[usize]) -> String {
    v.iter()
        .map(|b| b.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// A partition of the output bits into independently synthesized modules.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompositionScheme {
    modules: Vec<Module>,
}

impl DecompositionScheme {
    /// Validates that the modules partition `0..width_out` and only name inputs below `width_in`.
    pub fn new(mut modules: Vec<Module>, width_in: usize, width_out: usize) -> Result<Self> {
        let mut owner = vec![false; width_out];
        for m in &modules {
            if m.output_bits.is_empty() {
                return Err(Error::contract("module owns no output bits"));
            }
            for &b in &m.output_bits {
                if b >= width_out {
                    return Err(Error::contract(format!("output bit {b} out of range")));
                }
                if std::mem::replace(&mut owner[b], true) {
                    return Err(Error::contract(format!(
                        "output bit {b} owned by two modules"
                    )));
                }
            }
            if let Some(ins) = &m.input_bits {
                if ins.is_empty() || ins.iter().any(|&i| i >= width_in) {
                    return Err(Error::contract(format!("bad input restriction {ins:?}")));
                }
            }
        }
        if let Some(b) = owner.iter().position(|o| !o) {
            return Err(Error::contract(format!(
                "output bit {b} not owned by any module"
            )));
        }
        modules.sort_by_key(|m| m.output_bits[0]);
        Ok(DecompositionScheme { modules })
    }

    pub fn modules(&self) -> &[Module] {
        &self.modules
    }

    /// Independent of module order, since modules are kept sorted by their first output bit.
    pub fn canonical_key(&self) -> String {
        self.modules
            .iter()
            .map(Module::key)
            .collect::<Vec<_>>()
            .join("|")
    }

    fn largest(&self) -> Option<usize> {
        (0..self.modules.len())
            .filter(|&i| self.modules[i].output_bits.len() >= 2)
            .max_by_key(|&i| (self.modules[i].output_bits.len(), std::cmp::Reverse(i)))
    }
}

impl fmt::Display for DecompositionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical_key())
    }
}

/// One module owning every output bit, unrestricted inputs.
pub fn root_scheme(oracle: &Oracle) -> DecompositionScheme {
    DecompositionScheme {
        modules: vec![Module::new(0..oracle.width_out(), None)],
    }
}

pub fn jaccard(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Groups bits in ascending order: a bit joins the first cluster whose
/// first member's support is at least `threshold`-similar to its own.
pub fn support_clusters(
    bits: &[usize],
    supports: &[BTreeSet<usize>],
    threshold: f64,
) -> Vec<Vec<usize>> {
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for &b in bits {
        match clusters
            .iter_mut()
            .find(|c| jaccard(&supports[c[0]], &supports[b]) >= threshold)
        {
            Some(c) => c.push(b),
            None => clusters.push(vec![b]),
        }
    }
    clusters
}

pub const JACCARD_THRESHOLD: f64 = 0.5;

/// Finer candidate schemes from three fixed generators applied to the module
/// with the most output bits: halving by index range, support clustering, and
/// a full per-bit split. New modules are restricted to the union of their
/// estimated supports when that is a proper, non-empty subset of the inputs.
/// Deduplicated by key, in generator order, at most `branching` long.
pub fn propose_children(
    scheme: &DecompositionScheme,
    supports: &[BTreeSet<usize>],
    width_in: usize,
    branching: usize,
) -> Vec<DecompositionScheme> {
    let Some(li) = scheme.largest() else {
        return Vec::new();
    };
    let bits = &scheme.modules[li].output_bits;
    let restricted = |group: &[usize]| -> Module {
        let union: BTreeSet<usize> = group
            .iter()
            .flat_map(|&b| supports[b].iter().copied())
            .collect();
        let ins =
            (!union.is_empty() && union.len() < width_in).then(|| union.into_iter().collect());
        Module::new(group.iter().copied(), ins)
    };
    let with_split = |groups: Vec<Vec<usize>>| -> Option<DecompositionScheme> {
        if groups.len() < 2 {
            return None;
        }
        let mut modules: Vec<Module> = scheme.modules.clone();
        modules.remove(li);
        modules.extend(groups.iter().map(|g| restricted(g)));
        modules.sort_by_key(|m| m.output_bits[0]);
        Some(DecompositionScheme { modules })
    };
    let half = bits.len() / 2;
    let candidates = [
        with_split(vec![bits[..half].to_vec(), bits[half..].to_vec()]),
        with_split(support_clusters(bits, supports, JACCARD_THRESHOLD)),
        with_split(bits.iter().map(|&b| vec![b]).collect()),
    ];
    let mut seen = BTreeSet::new();
    candidates
        .into_iter()
        .flatten()
        .filter(|s| seen.insert(s.canonical_key()))
        .take(branching)
        .collect()
}

/// Interconnect introduced by merging; it adds no logic gates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plumbing {
    /// Distinct primary inputs driven into at least one module.
    pub shared_inputs: usize,
    /// Module input ports connected to primary inputs.
    pub input_fanout: usize,
    /// Constant drivers after sharing them across modules.
    pub shared_constants: usize,
    pub extra_gates: usize,
}

/// Joins module netlists into one over the global inputs and outputs.
///
/// Module input `i` reads global input `input_bits[i]` (or `i` when
/// unrestricted); module output `k` drives global output `output_bits[k]`.
/// Logic gates are copied unchanged, so the merged gate count is the sum of
/// the module gate counts.
pub fn merge_netlists(
    parts: &[(Module, Netlist)],
    width_in: usize,
    width_out: usize,
) -> Result<(Netlist, Plumbing)> {
    let mut driver: Vec<Option<NetId>> = vec![None; width_out];
    let mut gates: Vec<Gate> = Vec::new();
    let mut inputs: HashMap<u32, NetId> = HashMap::new();
    let mut consts: HashMap<bool, NetId> = HashMap::new();
    let mut plumbing = Plumbing::default();
    for (module, net) in parts {
        let local_width = module.input_bits.as_ref().map_or(width_in, Vec::len);
        if net.width_in() != local_width || net.width_out() != module.output_bits.len() {
            return Err(Error::contract(format!(
                "netlist shape does not match module {}",
                module.key()
            )));
        }
        plumbing.input_fanout += local_width;
        let mut map: Vec<NetId> = Vec::with_capacity(net.gates().len());
        for g in net.gates() {
            let id = match *g {
                Gate::Input(b) => {
                    let global = module
                        .input_bits
                        .as_ref()
                        .map_or(b, |v| v[b as usize] as u32);
                    *inputs.entry(global).or_insert_with(|| {
                        gates.push(Gate::Input(global));
                        (gates.len() - 1) as NetId
                    })
                }
                Gate::Const(v) => *consts.entry(v).or_insert_with(|| {
                    gates.push(Gate::Const(v));
                    (gates.len() - 1) as NetId
                }),
                Gate::Not(a) => {
                    gates.push(Gate::Not(map[a as usize]));
                    (gates.len() - 1) as NetId
                }
                Gate::Mux2 { sel, d1, d0 } => {
                    gates.push(Gate::Mux2 {
                        sel: map[sel as usize],
                        d1: map[d1 as usize],
                        d0: map[d0 as usize],
                    });
                    (gates.len() - 1) as NetId
                }
            };
            map.push(id);
        }
        for (k, &bit) in module.output_bits.iter().enumerate() {
            let slot = driver
                .get_mut(bit)
                .ok_or_else(|| Error::contract(format!("output bit {bit} out of range")))?;
            if slot.replace(map[net.outputs()[k] as usize]).is_some() {
                return Err(Error::contract(format!(
                    "output bit {bit} driven by two modules"
                )));
            }
        }
    }
    let outputs = driver
        .into_iter()
        .enumerate()
        .map(|(b, d)| d.ok_or_else(|| Error::contract(format!("output bit {b} undriven"))))
        .collect::<Result<Vec<_>>>()?;
    plumbing.shared_inputs = inputs.len();
    plumbing.shared_constants = consts.len();
    Ok((Netlist::new(width_in, gates, outputs)?, plumbing))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulePerf {
    pub output_bits: Vec<usize>,
    pub input_bits: Option<Vec<usize>>,
    pub converged: bool,
    pub gate_count: usize,
    pub depth: usize,
    pub expansions: usize,
    pub cycles: usize,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    pub scheme: String,
    pub modules: Vec<ModulePerf>,
    pub plumbing: Plumbing,
    pub merged: Option<Metrics>,
    /// `gate_count + lambda * depth`; `None` stands for +infinity (unconverged or unverified).
    pub cost: Option<f64>,
    pub verified: bool,
    pub note: Option<String>,
    /// Module syntheses run to produce this report.
    pub synthesis_calls: usize,
    pub budget: String,
    pub netlist: Option<Netlist>,
}

impl PerfReport {
    pub fn cost_value(&self) -> f64 {
        self.cost.unwrap_or(f64::INFINITY)
    }

    fn failed(scheme: &DecompositionScheme, budget: &str, note: String) -> Self {
        PerfReport {
            scheme: scheme.canonical_key(),
            modules: Vec::new(),
            plumbing: Plumbing::default(),
            merged: None,
            cost: None,
            verified: false,
            note: Some(note),
            synthesis_calls: 0,
            budget: budget.to_string(),
            netlist: None,
        }
    }
}

/// Persistent memo of scheme evaluations, one JSON file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    pub version: u32,
    entries: BTreeMap<String, PerfReport>,
}

pub const KB_VERSION: u32 = 1;

impl KnowledgeBase {
    pub fn new() -> Self {
        KnowledgeBase {
            version: KB_VERSION,
            entries: BTreeMap::new(),
        }
    }

    /// A missing file is an empty knowledge base.
    pub fn load(path: &Path) -> Result<Self> {
        match std::fs::read_to_string(path) {
            Ok(text) => {
                let kb: KnowledgeBase = serde_json::from_str(&text)?;
                if kb.version != KB_VERSION {
                    return Err(Error::contract(format!(
                        "knowledge base version {} is not {KB_VERSION}",
                        kb.version
                    )));
                }
                Ok(kb)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::new()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_string_pretty(self)?)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    fn entry_key(oracle: &str, budget: &str, scheme: &str) -> String {
        format!("{oracle} {budget} {scheme}")
    }

    pub fn get(&self, oracle: &str, budget: &str, scheme: &str) -> Option<&PerfReport> {
        self.entries.get(&Self::entry_key(oracle, budget, scheme))
    }

    pub fn insert(&mut self, oracle: &str, report: PerfReport) {
        let key = Self::entry_key(oracle, &report.budget, &report.scheme);
        self.entries.insert(key, report);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub repair: RepairConfig,
    pub iterations: usize,
    pub lambda: f64,
    pub exploration: f64,
    pub prune_factor: f64,
    pub branching: usize,
    pub support_samples: usize,
    /// Used when the oracle is too wide to check exhaustively.
    pub equivalence_confidence: f64,
    pub equivalence_max_error: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            // each module gets its own order; under one shared order, splitting
            // outputs cannot shrink an ordered diagram
            repair: RepairConfig {
                order: OrderPolicy::SupportDriven { samples: 256 },
                ..RepairConfig::default()
            },
            iterations: 20,
            lambda: 10.0,
            exploration: std::f64::consts::SQRT_2,
            prune_factor: 1.5,
            branching: 4,
            support_samples: 4096,
            equivalence_confidence: 0.99,
            equivalence_max_error: 0.001,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::contract("search needs at least one iteration"));
        }
        if self.branching == 0 || self.support_samples == 0 {
            return Err(Error::contract(
                "branching and support_samples must be positive",
            ));
        }
        let in_range = self.prune_factor >= 1.0 && self.lambda >= 0.0 && self.exploration >= 0.0;
        if !in_range {
            return Err(Error::contract(
                "prune_factor >= 1, lambda >= 0 and exploration >= 0 required",
            ));
        }
        Ok(())
    }

    /// Fingerprint of everything that influences an evaluation's result.
    pub fn budget_fingerprint(&self) -> String {
        let relevant = serde_json::json!({
            "repair": self.repair,
            "lambda": self.lambda,
            "support_samples": self.support_samples,
            "equivalence": [self.equivalence_confidence, self.equivalence_max_error],
        });
        let digest = Sha256::digest(relevant.to_string().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    fn equivalence_mode(&self) -> VerifyMode {
        VerifyMode::Statistical {
            confidence: self.equivalence_confidence,
            max_error: self.equivalence_max_error,
            seed: self.repair.seed,
        }
    }
}

/// Evaluates schemes against one oracle, sharing module syntheses and a knowledge base.
pub struct Evaluator<'a> {
    oracle: &'a Oracle,
    config: SearchConfig,
    budget: String,
    supports: Vec<BTreeSet<usize>>,
    kb: &'a mut KnowledgeBase,
    modules: HashMap<Module, (ModulePerf, Option<Netlist>)>,
    synthesis_calls: usize,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub report: PerfReport,
    pub kb_hit: bool,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        oracle: &'a Oracle,
        config: SearchConfig,
        kb: &'a mut KnowledgeBase,
    ) -> Result<Self> {
        config.validate()?;
        let supports = estimate_supports(oracle, config.repair.seed, config.support_samples);
        Ok(Evaluator {
            oracle,
            budget: config.budget_fingerprint(),
            config,
            supports,
            kb,
            modules: HashMap::new(),
            synthesis_calls: 0,
        })
    }

    pub fn supports(&self) -> &[BTreeSet<usize>] {
        &self.supports
    }

    pub fn synthesis_calls(&self) -> usize {
        self.synthesis_calls
    }

    pub fn budget(&self) -> &str {
        &self.budget
    }

    pub fn kb(&self) -> &KnowledgeBase {
        self.kb
    }

    /// Synthesizes each module, merges, verifies and costs the result.
    /// A stored report for the same oracle, budget and scheme is returned as is.
    pub fn evaluate(&mut self, scheme: &DecompositionScheme) -> Result<Evaluation> {
        let key = scheme.canonical_key();
        if let Some(r) = self.kb.get(self.oracle.name(), &self.budget, &key) {
            return Ok(Evaluation {
                report: r.clone(),
                kb_hit: true,
            });
        }
        let report = self.evaluate_fresh(scheme)?;
        self.kb.insert(self.oracle.name(), report.clone());
        Ok(Evaluation {
            report,
            kb_hit: false,
        })
    }

    fn evaluate_fresh(&mut self, scheme: &DecompositionScheme) -> Result<PerfReport> {
        for m in scheme.modules() {
            if let Some(ins) = &m.input_bits {
                let missing: Vec<usize> = m
                    .output_bits
                    .iter()
                    .flat_map(|&b| self.supports[b].iter().copied())
                    .filter(|i| !ins.contains(i))
                    .collect();
                if !missing.is_empty() {
                    let note = format!("module {} omits support inputs {missing:?}", m.key());
                    return Ok(PerfReport::failed(scheme, &self.budget, note));
                }
            }
        }
        let todo: Vec<&Module> = scheme
            .modules()
            .iter()
            .filter(|m| !self.modules.contains_key(*m))
            .collect();
        let oracle = self.oracle;
        let repair = &self.config.repair;
        let fresh: Vec<(Module, (ModulePerf, Option<Netlist>))> = todo
            .par_iter()
            .map(|m| synthesize_part(oracle, m, repair).map(|r| ((*m).clone(), r)))
            .collect::<Result<_>>()?;
        let calls = fresh.len();
        self.synthesis_calls += calls;
        self.modules.extend(fresh);

        let parts: Vec<(ModulePerf, Option<Netlist>)> = scheme
            .modules()
            .iter()
            .map(|m| self.modules[m].clone())
            .collect();
        let mut report = PerfReport {
            scheme: scheme.canonical_key(),
            modules: parts.iter().map(|p| p.0.clone()).collect(),
            plumbing: Plumbing::default(),
            merged: None,
            cost: None,
            verified: false,
            note: None,
            synthesis_calls: calls,
            budget: self.budget.clone(),
            netlist: None,
        };
        if parts.iter().any(|p| p.1.is_none()) {
            report.note = Some("a module did not converge".into());
            return Ok(report);
        }
        let nets: Vec<(Module, Netlist)> = scheme
            .modules()
            .iter()
            .zip(parts)
            .map(|(m, p)| (m.clone(), p.1.expect("checked above")))
            .collect();
        let (merged, plumbing) = merge_netlists(&nets, oracle.width_in(), oracle.width_out())?;
        let check = self.equivalence(&merged)?;
        let metrics = merged.metrics();
        report.plumbing = plumbing;
        report.merged = Some(metrics);
        report.verified = check.pass;
        if check.pass {
            report.cost =
                Some(metrics.gate_count as f64 + self.config.lambda * metrics.depth as f64);
        } else {
            report.note = Some(format!(
                "merged netlist fails equivalence on {} inputs",
                check.mismatches
            ));
        }
        report.netlist = Some(merged);
        Ok(report)
    }

    pub fn equivalence(&self, netlist: &Netlist) -> Result<VerificationReport> {
        let threshold = self.config.repair.exhaustive_threshold;
        let mode = if self.oracle.width_in() <= threshold {
            VerifyMode::Exhaustive
        } else {
            self.config.equivalence_mode()
        };
        verify_with(netlist, self.oracle, mode, threshold)
    }
}

fn synthesize_part(
    oracle: &Oracle,
    m: &Module,
    repair: &RepairConfig,
) -> Result<(ModulePerf, Option<Netlist>)> {
    let projected = oracle.project(&m.output_bits, m.input_bits.as_deref())?;
    let (bsd, report) = synthesize_module(&projected, repair)?;
    let netlist = if report.converged() {
        Some(bsd.to_netlist()?.simplify())
    } else {
        None
    };
    let metrics = netlist.as_ref().map(Netlist::metrics).unwrap_or(Metrics {
        gate_count: 0,
        depth: 0,
    });
    let perf = ModulePerf {
        output_bits: m.output_bits.clone(),
        input_bits: m.input_bits.clone(),
        converged: report.converged(),
        gate_count: metrics.gate_count,
        depth: metrics.depth,
        expansions: report.total_expansions,
        cycles: report.cycles.len(),
        samples: report.samples_seen,
    };
    Ok((perf, netlist))
}

/// Evaluates one scheme without a persistent knowledge base.
pub fn evaluate_scheme(
    scheme: &DecompositionScheme,
    oracle: &Oracle,
    config: &SearchConfig,
) -> Result<PerfReport> {
    let mut kb = KnowledgeBase::new();
    Evaluator::new(oracle, config.clone(), &mut kb)?
        .evaluate(scheme)
        .map(|e| e.report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Unevaluated,
    Evaluated,
    Pruned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchNode {
    pub id: usize,
    pub scheme: String,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub status: NodeStatus,
    /// Set once evaluated; `None` inside means +infinity.
    pub cost: Option<Option<f64>>,
    /// Evaluations in this node's subtree, itself included.
    pub visits: usize,
    pub best_descendant_cost: Option<f64>,
    pub expanded: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub node: usize,
    pub scheme: String,
    pub cost: Option<f64>,
    pub best_cost: Option<f64>,
    pub kb_hit: bool,
    pub synthesis_calls: usize,
    pub pruned: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub oracle: String,
    pub best_scheme: String,
    pub best_cost: Option<f64>,
    pub best_report: PerfReport,
    /// Final equivalence check of the returned netlist.
    pub verification: Option<VerificationReport>,
    pub trace: Vec<TraceEntry>,
    pub nodes: Vec<SearchNode>,
    pub synthesis_calls: usize,
    pub kb_hits: usize,
    pub stopped_early: bool,
}

impl SearchOutcome {
    pub fn best_netlist(&self) -> Option<&Netlist> {
        match &self.verification {
            Some(v) if v.pass => self.best_report.netlist.as_ref(),
            _ => None,
        }
    }

    pub fn trace_non_increasing(&self) -> bool {
        let c: Vec<f64> = self
            .trace
            .iter()
            .map(|t| t.best_cost.unwrap_or(f64::INFINITY))
            .collect();
        c.windows(2).all(|w| w[1] <= w[0])
    }
}

struct Tree {
    nodes: Vec<SearchNode>,
    costs: Vec<f64>,
}

impl Tree {
    fn subtree(&self, root: usize) -> Vec<usize> {
        let mut out = vec![root];
        let mut i = 0;
        while i < out.len() {
            out.extend(self.nodes[out[i]].children.iter().copied());
            i += 1;
        }
        out
    }

    fn selectable(&self, id: usize) -> bool {
        let n = &self.nodes[id];
        n.status == NodeStatus::Evaluated
            && (!n.expanded
                || n.children
                    .iter()
                    .any(|&c| self.nodes[c].status == NodeStatus::Unevaluated))
    }

    fn ucb(&self, id: usize, best: f64, total: usize, c: f64) -> f64 {
        let n = &self.nodes[id];
        let evaluated: Vec<f64> = self
            .subtree(id)
            .into_iter()
            .filter(|&k| self.nodes[k].cost.is_some())
            .map(|k| self.costs[k])
            .collect();
        let reward: f64 = evaluated.iter().map(|&cost| reward(best, cost)).sum();
        let mean = reward / n.visits.max(1) as f64;
        mean + c * ((total as f64).ln() / n.visits.max(1) as f64).sqrt()
    }
}

/// `best / cost` in `[0, 1]`; unverified schemes earn nothing.
fn reward(best: f64, cost: f64) -> f64 {
    if cost == 0.0 {
        1.0
    } else if cost.is_finite() {
        best / cost
    } else {
        0.0
    }
}

/// Best-first search over decompositions with UCB1 selection and pruning.
///
/// Each iteration evaluates one scheme. Iteration 1 evaluates the root; later
/// iterations pick the evaluated node with the highest UCB1 score among those
/// with unexplored children, proposing its children on first selection, and
/// evaluate its next unevaluated child. Subtrees whose best cost exceeds
/// `prune_factor` times the best verified cost are pruned. The search stops
/// after `iterations` evaluations or when nothing is left to expand.
pub fn search(
    oracle: &Oracle,
    config: &SearchConfig,
    kb: &mut KnowledgeBase,
) -> Result<SearchOutcome> {
    let mut ev = Evaluator::new(oracle, config.clone(), kb)?;
    let root = root_scheme(oracle);
    let mut schemes = vec![root.clone()];
    let mut tree = Tree {
        nodes: Vec::new(),
        costs: Vec::new(),
    };
    let mut keys: BTreeSet<String> = BTreeSet::new();
    let new_node =
        |tree: &mut Tree, keys: &mut BTreeSet<String>, scheme: &DecompositionScheme, parent| {
            let id = tree.nodes.len();
            keys.insert(scheme.canonical_key());
            tree.nodes.push(SearchNode {
                id,
                scheme: scheme.canonical_key(),
                parent,
                children: Vec::new(),
                status: NodeStatus::Unevaluated,
                cost: None,
                visits: 0,
                best_descendant_cost: None,
                expanded: false,
            });
            tree.costs.push(f64::INFINITY);
            id
        };
    new_node(&mut tree, &mut keys, &root, None);

    let mut best: Option<(usize, PerfReport)> = None;
    let mut trace = Vec::new();
    let mut kb_hits = 0;
    let mut stopped_early = false;
    let mut target = Some(0usize);

    for iteration in 1..=config.iterations {
        if iteration > 1 {
            target = None;
            let best_cost = best.as_ref().map_or(f64::INFINITY, |b| b.1.cost_value());
            loop {
                let total: usize = tree.nodes[0].visits;
                let pick = (0..tree.nodes.len())
                    .filter(|&i| tree.selectable(i))
                    .map(|i| (i, tree.ucb(i, best_cost, total, config.exploration)))
                    .fold(None, |acc: Option<(usize, f64)>, (i, s)| match acc {
                        Some((_, bs)) if bs >= s => acc,
                        _ => Some((i, s)),
                    });
                let Some((sel, _)) = pick else { break };
                if !tree.nodes[sel].expanded {
                    tree.nodes[sel].expanded = true;
                    let kids = propose_children(
                        &schemes[sel],
                        ev.supports(),
                        oracle.width_in(),
                        config.branching,
                    );
                    for k in kids {
                        let key = k.canonical_key();
                        let known_bad = ev
                            .kb()
                            .get(oracle.name(), ev.budget(), &key)
                            .is_some_and(|r| r.modules.iter().any(|m| !m.converged));
                        if keys.contains(&key) || known_bad {
                            continue;
                        }
                        let id = new_node(&mut tree, &mut keys, &k, Some(sel));
                        tree.nodes[sel].children.push(id);
                        schemes.push(k);
                    }
                }
                if let Some(&c) = tree.nodes[sel]
                    .children
                    .iter()
                    .find(|&&c| tree.nodes[c].status == NodeStatus::Unevaluated)
                {
                    target = Some(c);
                    break;
                }
            }
        }
        let Some(id) = target else {
            stopped_early = true;
            break;
        };
        let Evaluation { report, kb_hit } = ev.evaluate(&schemes[id])?;
        kb_hits += kb_hit as usize;
        let cost = report.cost_value();
        tree.nodes[id].status = NodeStatus::Evaluated;
        tree.nodes[id].cost = Some(report.cost);
        tree.costs[id] = cost;
        let mut up = Some(id);
        while let Some(u) = up {
            let n = &mut tree.nodes[u];
            n.visits += 1;
            if cost.is_finite() && n.best_descendant_cost.is_none_or(|b| cost < b) {
                n.best_descendant_cost = Some(cost);
            }
            up = n.parent;
        }
        if best.as_ref().is_none_or(|b| cost < b.1.cost_value()) {
            best = Some((id, report.clone()));
        }
        let best_cost = best.as_ref().map_or(f64::INFINITY, |b| b.1.cost_value());
        let mut pruned = 0;
        if best_cost.is_finite() {
            let limit = best_cost * config.prune_factor;
            for i in 0..tree.nodes.len() {
                let n = &tree.nodes[i];
                if n.status != NodeStatus::Evaluated {
                    continue;
                }
                if n.best_descendant_cost.is_none_or(|b| b > limit) {
                    for k in tree.subtree(i) {
                        if tree.nodes[k].status != NodeStatus::Pruned {
                            tree.nodes[k].status = NodeStatus::Pruned;
                            pruned += 1;
                        }
                    }
                }
            }
        }
        trace.push(TraceEntry {
            iteration,
            node: id,
            scheme: tree.nodes[id].scheme.clone(),
            cost: report.cost,
            best_cost: best.as_ref().and_then(|b| b.1.cost),
            kb_hit,
            synthesis_calls: ev.synthesis_calls(),
            pruned,
        });
    }

    let (best_id, mut best_report) = best.expect("root is always evaluated");
    if best_report.netlist.is_none() && best_report.verified {
        return Err(Error::contract("stored report lacks its netlist"));
    }
    let verification = match &best_report.netlist {
        Some(net) => Some(ev.equivalence(net)?),
        None => None,
    };
    if verification.as_ref().is_some_and(|v| !v.pass) {
        best_report.cost = None;
        best_report.verified = false;
    }
    Ok(SearchOutcome {
        oracle: oracle.name().to_string(),
        best_scheme: tree.nodes[best_id].scheme.clone(),
        best_cost: best_report.cost,
        best_report,
        verification,
        trace,
        nodes: tree.nodes,
        synthesis_calls: ev.synthesis_calls(),
        kb_hits,
        stopped_early,
    })
}
