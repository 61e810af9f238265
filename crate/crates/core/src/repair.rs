//! The verify-repair loop: sample the oracle, simulate the diagram on every
//! cached sample, locate the speculative leaves responsible for mismatches
//! and Shannon-expand them, until the diagram meets its target.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bsd::{exact_accuracy, Bsd, BsdNode, BsdStats, GuessPolicy, LeafKind, NodeRef};
use crate::error::{Error, Result};
use crate::oracle::{
    check_enumerable, stream_rng, streams, support_driven_order, BoolFunction, InputSampler,
    IoSample, Oracle, DEFAULT_EXHAUSTIVE_THRESHOLD,
};
use crate::verify::{sampled_mismatches, statistical_sample_count};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    /// Every input agrees with the oracle, established by exhaustive scan.
    Exhaustive100,
    /// Aggregate bit accuracy over the sample cache reaches `threshold`.
    SampleAccuracy { threshold: f64 },
    /// A fresh statistical check with these parameters finds no mismatch.
    Statistical { confidence: f64, max_error: f64 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OrderPolicy {
    /// Input bit 0 first.
    #[default]
    Natural,
    /// Most output-sensitive inputs first, estimated from `samples` random points.
    SupportDriven {
        samples: usize,
    },
    Explicit {
        order: Vec<usize>,
    },
}

impl OrderPolicy {
    pub fn resolve<F: BoolFunction + ?Sized>(&self, f: &F, seed: u64) -> Vec<usize> {
        match self {
            OrderPolicy::Natural => (0..f.width_in()).collect(),
            OrderPolicy::SupportDriven { samples } => support_driven_order(f, seed, *samples),
            OrderPolicy::Explicit { order } => order.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RepairConfig {
    pub seed: u64,
    pub batch_size: usize,
    pub max_cycles: usize,
    /// Budget on the reachable nodes of each output's diagram; `None` means `4 * 2^width_in`.
    pub max_nodes: Option<usize>,
    pub target: Target,
    pub guess_policy: GuessPolicy,
    /// Guesses for the initial root leaves; `None` reuses `guess_policy`.
    pub init_policy: Option<GuessPolicy>,
    pub expansions_per_cycle_cap: usize,
    /// Counterexamples added per faulty leaf when a clean cache fails verification.
    pub counterexamples_per_leaf: usize,
    pub order: OrderPolicy,
    pub exhaustive_threshold: usize,
    /// Record exact accuracy each cycle when the input width is enumerable.
    pub track_exact: bool,
}

impl Default for RepairConfig {
    fn default() -> Self {
        RepairConfig {
            seed: 0,
            batch_size: 256,
            max_cycles: 1000,
            max_nodes: None,
            target: Target::Exhaustive100,
            guess_policy: GuessPolicy::default(),
            init_policy: None,
            expansions_per_cycle_cap: 1 << 20,
            counterexamples_per_leaf: 1,
            order: OrderPolicy::Natural,
            exhaustive_threshold: DEFAULT_EXHAUSTIVE_THRESHOLD,
            track_exact: true,
        }
    }
}

impl RepairConfig {
    pub fn validate(&self, width_in: usize) -> Result<()> {
        let bad = |m: String| Err(Error::contract(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.expansions_per_cycle_cap == 0 {
            return bad("expansions_per_cycle_cap must be at least 1".into());
        }
        if self.counterexamples_per_leaf == 0 {
            return bad("counterexamples_per_leaf must be at least 1".into());
        }
        match self.target {
            Target::Exhaustive100 => check_enumerable(width_in, self.exhaustive_threshold)?,
            Target::SampleAccuracy { threshold } if !(threshold > 0.0 && threshold <= 1.0) => {
                return bad(format!("accuracy threshold {threshold} outside (0,1]"))
            }
            Target::Statistical {
                confidence,
                max_error,
            } => {
                statistical_sample_count(confidence, max_error)?;
            }
            _ => {}
        }
        for p in [Some(self.guess_policy), self.init_policy]
            .into_iter()
            .flatten()
        {
            if p == GuessPolicy::ExactCofactorMajority {
                check_enumerable(width_in, self.exhaustive_threshold)?;
            }
        }
        if let OrderPolicy::Explicit { order } = &self.order {
            crate::bsd::validate_order(width_in, order)?;
        }
        Ok(())
    }

    pub fn node_budget(&self, width_in: usize) -> usize {
        self.max_nodes.unwrap_or_else(|| {
            if width_in >= 60 {
                usize::MAX
            } else {
                4usize.saturating_mul(1 << width_in)
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: usize,
    /// Cumulative cache size this cycle worked on.
    pub samples_seen: usize,
    /// Aggregate bit accuracy over the cache before and after this cycle's repairs.
    pub cache_accuracy_before: f64,
    pub cache_accuracy: f64,
    pub exact_accuracy: Option<f64>,
    /// Nodes allocated so far; expansion only appends, so this never shrinks.
    pub node_count: usize,
    /// Nodes reachable from the roots. Hash-consing of completed subtrees can shrink it.
    pub live_nodes: usize,
    /// Reachable nodes of the largest single-output diagram; the node budget applies to this.
    pub largest_output_nodes: usize,
    pub spec_leaf_count: usize,
    pub expansions: usize,
    pub hard_faults: usize,
    /// Samples added to the cache by the end-of-cycle verification.
    pub counterexamples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Status {
    Converged,
    BudgetExhausted { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub oracle: String,
    pub width_in: usize,
    pub width_out: usize,
    pub order: Vec<usize>,
    pub status: Status,
    pub cycles: Vec<CycleRecord>,
    pub total_expansions: usize,
    pub samples_seen: usize,
    pub final_stats: BsdStats,
    pub final_exact_accuracy: Option<f64>,
}

impl ConvergenceReport {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }

    /// Repairs never lower accuracy on the cache they were computed from.
    pub fn cache_accuracy_monotone(&self) -> bool {
        self.cycles
            .iter()
            .all(|c| c.cache_accuracy >= c.cache_accuracy_before)
    }

    pub fn node_count_monotone(&self) -> bool {
        self.cycles
            .windows(2)
            .all(|w| w[1].node_count >= w[0].node_count)
    }

    pub fn exact_accuracy_monotone(&self) -> bool {
        let exact: Vec<f64> = self
            .cycles
            .iter()
            .filter_map(|c| c.exact_accuracy)
            .collect();
        exact.windows(2).all(|w| w[1] >= w[0])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// A fault attributed to one mismatching output bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Fault {
    pub output: usize,
    pub leaf: NodeRef,
}

/// Speculative leaves responsible for each mismatching output bit of `sample`.
///
/// A mismatch ending at a constant leaf is a hard fault and reported as
/// [`Error::HardFault`]; a sample the diagram already agrees with violates the
/// precondition.
pub fn locate_fault(bsd: &Bsd, sample: &IoSample) -> Result<Vec<Fault>> {
    if sample.input.width() != bsd.width_in() || sample.output.width() != bsd.width_out() {
        return Err(Error::contract("sample widths do not match the diagram"));
    }
    let x = sample.input.as_u64();
    let diff = bsd.eval_bits(x) ^ sample.output.as_u64();
    if diff == 0 {
        return Err(Error::contract(
            "diagram agrees with the sample; nothing to locate",
        ));
    }
    let mut faults = Vec::new();
    for output in (0..bsd.width_out()).filter(|j| diff >> j & 1 == 1) {
        let leaf = bsd.leaf_of(output, x);
        match bsd.node(leaf) {
            BsdNode::Spec { .. } => faults.push(Fault { output, leaf }),
            _ => return Err(Error::HardFault { output, node: leaf }),
        }
    }
    Ok(faults)
}

#[derive(Clone, Copy, Default)]
struct Tally {
    output: u32,
    miss: u32,
    first_miss: u32,
    /// `n[split_bit][value]`: cached samples at the leaf by split-variable bit and oracle bit.
    n: [[u32; 2]; 2],
}

struct Scan {
    counterexamples: Vec<u64>,
    accuracy: f64,
}

struct Pass {
    hits: u64,
    leaves: HashMap<NodeRef, Tally>,
    hard: Vec<u32>,
}

/// One verify-repair loop over a single oracle with a cumulative sample cache.
pub struct RepairSession<'a> {
    oracle: &'a Oracle,
    config: RepairConfig,
    bsd: Bsd,
    inputs: Vec<u64>,
    outputs: Vec<u64>,
    /// `at[j][i]`: node where sample `i` stopped in output `j` at the last simulation.
    at: Vec<Vec<NodeRef>>,
    sampler: InputSampler,
    verify_sampler: InputSampler,
    guess_rng: Option<ChaCha8Rng>,
    records: Vec<CycleRecord>,
    max_nodes: usize,
    converged: bool,
}

impl<'a> RepairSession<'a> {
    pub fn new(oracle: &'a Oracle, config: RepairConfig) -> Result<Self> {
        let (wi, wo) = (oracle.width_in(), oracle.width_out());
        config.validate(wi)?;
        let order = config.order.resolve(oracle, config.seed);
        let init = config.init_policy.unwrap_or(config.guess_policy);
        let mut session = RepairSession {
            oracle,
            bsd: Bsd::from_guesses(wi, order.clone(), &vec![false; wo])?,
            inputs: Vec::new(),
            outputs: Vec::new(),
            at: vec![Vec::new(); wo],
            sampler: InputSampler::new(wi, config.seed),
            verify_sampler: InputSampler::with_stream(wi, config.seed, streams::VERIFY),
            guess_rng: match config.guess_policy {
                GuessPolicy::RandomSeeded { seed } => Some(stream_rng(seed, streams::GUESSES)),
                _ => None,
            },
            records: Vec::new(),
            max_nodes: config.node_budget(wi),
            converged: false,
            config,
        };
        let guesses: Vec<bool> = match init {
            GuessPolicy::SampleMajority { tie_break } => {
                session.draw_batch();
                (0..wo)
                    .map(|j| {
                        let ones = session.outputs.iter().filter(|&&y| y >> j & 1 == 1).count();
                        majority(ones, session.outputs.len() - ones, tie_break)
                    })
                    .collect()
            }
            GuessPolicy::ExactCofactorMajority => {
                let mut ones = vec![0usize; wo];
                for x in 0..1u64 << wi {
                    let y = oracle.eval_bits(x);
                    ones.iter_mut()
                        .enumerate()
                        .for_each(|(j, c)| *c += (y >> j & 1) as usize);
                }
                ones.iter()
                    .map(|&c| majority(c, (1 << wi) - c, false))
                    .collect()
            }
            p => (0..wo)
                .map(|j| Bsd::new(wi, wo, order.clone(), p).map(|b| b.eval_output(j, 0)))
                .collect::<Result<_>>()?,
        };
        session.bsd = Bsd::from_guesses(wi, order, &guesses)?;
        Ok(session)
    }

    /// Starts from an existing diagram instead of fresh speculative roots.
    pub fn with_diagram(oracle: &'a Oracle, config: RepairConfig, bsd: Bsd) -> Result<Self> {
        if bsd.width_in() != oracle.width_in() || bsd.width_out() != oracle.width_out() {
            return Err(Error::contract("diagram widths do not match the oracle"));
        }
        let mut s = Self::new(
            oracle,
            RepairConfig {
                init_policy: Some(GuessPolicy::ConstantZero),
                ..config
            },
        )?;
        s.bsd = bsd;
        s.reset_positions();
        Ok(s)
    }

    /// Adds every input of the truth table to the cache.
    pub fn seed_cache_exhaustive(&mut self) -> Result<()> {
        check_enumerable(self.oracle.width_in(), self.config.exhaustive_threshold)?;
        for x in 0..1u64 << self.oracle.width_in() {
            self.push_sample(x);
        }
        Ok(())
    }

    pub fn bsd(&self) -> &Bsd {
        &self.bsd
    }

    pub fn records(&self) -> &[CycleRecord] {
        &self.records
    }

    pub fn cache_len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_converged(&self) -> bool {
        self.converged
    }

    fn push_sample(&mut self, x: u64) {
        self.inputs.push(x);
        self.outputs.push(self.oracle.eval_bits(x));
        for (j, at) in self.at.iter_mut().enumerate() {
            at.push(self.bsd.roots()[j]);
        }
    }

    fn draw_batch(&mut self) {
        for _ in 0..self.config.batch_size {
            let x = self.sampler.next_input();
            self.push_sample(x);
        }
    }

    fn reset_positions(&mut self) {
        for (j, at) in self.at.iter_mut().enumerate() {
            at.iter_mut().for_each(|n| *n = self.bsd.roots()[j]);
        }
    }

    /// Advances every cached sample to its leaf and tallies per-leaf statistics.
    fn simulate(&mut self, tally: bool) -> Pass {
        let bsd = &self.bsd;
        let (inputs, outputs) = (&self.inputs, &self.outputs);
        let mut pass = Pass {
            hits: 0,
            leaves: HashMap::new(),
            hard: Vec::new(),
        };
        for (j, at) in self.at.iter_mut().enumerate() {
            for (i, node) in at.iter_mut().enumerate() {
                let x = inputs[i];
                let mut n = *node;
                while let BsdNode::Decision { var, hi, lo } = bsd.node(n) {
                    n = if x >> var & 1 == 1 { hi } else { lo };
                }
                *node = n;
                let want = outputs[i] >> j & 1 == 1;
                let (got, split) = match bsd.node(n) {
                    BsdNode::Const(v) => (v, None),
                    BsdNode::Spec { guess, .. } => (guess, bsd.split_var(n)),
                    BsdNode::Decision { .. } => unreachable!(),
                };
                pass.hits += (got == want) as u64;
                match split {
                    None if got != want => pass.hard.push(i as u32),
                    Some(v) if tally => {
                        let t = pass.leaves.entry(n).or_insert(Tally {
                            output: j as u32,
                            ..Tally::default()
                        });
                        if got != want {
                            if t.miss == 0 {
                                t.first_miss = i as u32;
                            }
                            t.miss += 1;
                        }
                        t.n[(x >> v & 1) as usize][want as usize] += 1;
                    }
                    _ => {}
                }
            }
        }
        pass
    }

    fn accuracy(&self, hits: u64) -> f64 {
        let total = self.inputs.len() as u64 * self.oracle.width_out() as u64;
        if total == 0 {
            1.0
        } else {
            hits as f64 / total as f64
        }
    }

    /// Guesses for the two children of `leaf` in output `j`.
    fn child_guesses(&mut self, j: usize, leaf: NodeRef, t: &Tally) -> (bool, bool) {
        match self.config.guess_policy {
            GuessPolicy::SampleMajority { tie_break } => (
                majority(t.n[1][1] as usize, t.n[1][0] as usize, tie_break),
                majority(t.n[0][1] as usize, t.n[0][0] as usize, tie_break),
            ),
            GuessPolicy::ConstantZero => (false, false),
            GuessPolicy::RandomSeeded { .. } => {
                let rng = self.guess_rng.as_mut().expect("rng for random guesses");
                (rng.gen(), rng.gen())
            }
            GuessPolicy::ExactCofactorMajority => {
                let x = self.inputs[t.first_miss as usize];
                let fixed = self.path_mask(j, x);
                let split = self.bsd.split_var(leaf).expect("speculative leaf");
                let free: Vec<usize> = (0..self.oracle.width_in())
                    .filter(|&v| fixed >> v & 1 == 0 && v != split)
                    .collect();
                let mut ones = [0usize; 2];
                for k in 0..1u64 << free.len() {
                    let base = crate::oracle::scatter(k, &free) | (x & fixed);
                    for (b, count) in ones.iter_mut().enumerate() {
                        *count +=
                            (self.oracle.eval_bits(base | (b as u64) << split) >> j & 1) as usize;
                    }
                }
                let half = 1usize << free.len();
                (
                    majority(ones[1], half - ones[1], false),
                    majority(ones[0], half - ones[0], false),
                )
            }
        }
    }

    /// Input bits tested on the way to the leaf `x` reaches in output `j`.
    fn path_mask(&self, j: usize, x: u64) -> u64 {
        self.bsd
            .path_of(j, x)
            .iter()
            .fold(0, |m, &n| match self.bsd.node(n) {
                BsdNode::Decision { var, .. } => m | 1 << var,
                _ => m,
            })
    }

    /// Majority of output `j` over cached samples that follow the same path as `x`.
    fn region_majority(&self, j: usize, x: u64) -> bool {
        let fixed = self.path_mask(j, x);
        let (mut ones, mut zeros) = (0, 0);
        for (i, &y) in self.inputs.iter().enumerate() {
            if (y ^ x) & fixed == 0 {
                if self.outputs[i] >> j & 1 == 1 {
                    ones += 1;
                } else {
                    zeros += 1;
                }
            }
        }
        majority(ones, zeros, false)
    }

    /// Draws a batch, repairs the faults the cache exposes, then verifies
    /// against the target and feeds any counterexamples back into the cache.
    ///
    /// Exceeding the node budget returns [`Error::NodeBudget`] carrying the
    /// partial diagram.
    pub fn cycle(&mut self) -> Result<CycleRecord> {
        if self.converged {
            return Err(Error::contract("session already converged"));
        }
        self.draw_batch();
        let wo = self.oracle.width_out();
        let n = self.inputs.len();
        let before = self.simulate(true);

        let mut hard_faults = 0;
        for &i in &before.hard {
            let (x, y) = (self.inputs[i as usize], self.outputs[i as usize]);
            let diff = self.bsd.eval_bits(x) ^ y;
            for j in (0..wo).filter(|j| diff >> j & 1 == 1) {
                if !matches!(self.bsd.node(self.bsd.leaf_of(j, x)), BsdNode::Const(_)) {
                    continue;
                }
                let replacement = if self.bsd.leaf_depth_on(j, x) == self.bsd.width_in() {
                    LeafKind::Const(y >> j & 1 == 1)
                } else {
                    LeafKind::Spec(self.region_majority(j, x))
                };
                self.bsd.replace_leaf_on_path(j, x, replacement);
                hard_faults += 1;
            }
        }

        let mut faulty: Vec<(NodeRef, Tally)> = before
            .leaves
            .iter()
            .filter(|(_, t)| t.miss > 0)
            .map(|(&l, &t)| (l, t))
            .collect();
        faulty.sort_by_key(|&(leaf, t)| (std::cmp::Reverse(t.miss), leaf));
        faulty.truncate(self.config.expansions_per_cycle_cap);
        let expansions = faulty.len();
        for (leaf, t) in faulty {
            let guesses = self.child_guesses(t.output as usize, leaf, &t);
            self.bsd.expand(leaf, guesses)?;
        }
        if hard_faults > 0 {
            self.reset_positions();
        }
        let after = self.simulate(false);
        let cache_accuracy = self.accuracy(after.hits);
        let stats = self.bsd.stats();
        let largest = self.bsd.output_sizes().into_iter().max().unwrap_or(0);

        let (cex, exact) = match self.config.target {
            Target::Exhaustive100 => {
                let scan = self.exhaustive_scan();
                (scan.counterexamples, Some(scan.accuracy))
            }
            Target::Statistical {
                confidence,
                max_error,
            } => {
                let k = statistical_sample_count(confidence, max_error)?;
                let cex = sampled_mismatches(&self.bsd, self.oracle, &mut self.verify_sampler, k);
                (cex, self.tracked_exact_accuracy()?)
            }
            Target::SampleAccuracy { .. } => (Vec::new(), self.tracked_exact_accuracy()?),
        };
        let record = CycleRecord {
            cycle: self.records.len(),
            samples_seen: n,
            cache_accuracy_before: self.accuracy(before.hits),
            cache_accuracy,
            exact_accuracy: exact,
            node_count: self.bsd.table_len(),
            live_nodes: stats.node_count,
            largest_output_nodes: largest,
            spec_leaf_count: stats.spec_leaf_count,
            expansions,
            hard_faults,
            counterexamples: cex.len(),
        };
        self.records.push(record.clone());
        if largest > self.max_nodes {
            return Err(Error::NodeBudget {
                nodes: largest,
                limit: self.max_nodes,
                partial: Box::new(self.bsd.clone()),
            });
        }
        let clean = after.hits == n as u64 * wo as u64;
        self.converged = match self.config.target {
            Target::SampleAccuracy { threshold } => cache_accuracy >= threshold,
            _ => clean && cex.is_empty(),
        };
        for x in cex {
            self.push_sample(x);
        }
        Ok(record)
    }

    fn tracked_exact_accuracy(&self) -> Result<Option<f64>> {
        if self.config.track_exact && self.oracle.width_in() <= self.config.exhaustive_threshold {
            Ok(Some(
                exact_accuracy(&self.bsd, self.oracle, self.config.exhaustive_threshold)?.aggregate,
            ))
        } else {
            Ok(None)
        }
    }

    /// Checks every input. Keeps up to `counterexamples_per_leaf` failing
    /// inputs per faulty speculative leaf and every input failing at a
    /// constant leaf, in ascending order.
    fn exhaustive_scan(&self) -> Scan {
        use rayon::prelude::*;
        let bsd = &self.bsd;
        let oracle = self.oracle;
        let wo = oracle.width_out();
        let w = oracle.width_in();
        let chunk_bits = 12.min(w);
        // per chunk: wrong output bits, then failing inputs with their speculative leaf
        type Found = (u64, Vec<(u64, Option<NodeRef>)>);
        let found: Vec<Found> = (0..1u64 << (w - chunk_bits))
            .into_par_iter()
            .map(|c| {
                let mut out = Vec::new();
                let mut wrong_bits = 0;
                for x in c << chunk_bits..(c + 1) << chunk_bits {
                    let y = oracle.eval_bits(x);
                    let mut hard = false;
                    let mut any = false;
                    for j in 0..wo {
                        let leaf = bsd.leaf_of(j, x);
                        let (v, spec) = match bsd.node(leaf) {
                            BsdNode::Const(v) => (v, false),
                            BsdNode::Spec { guess, .. } => (guess, true),
                            BsdNode::Decision { .. } => unreachable!(),
                        };
                        if v != (y >> j & 1 == 1) {
                            wrong_bits += 1;
                            any = true;
                            if spec {
                                out.push((x, Some(leaf)));
                            } else {
                                hard = true;
                            }
                        }
                    }
                    if hard || (any && out.last().map(|e| e.0) != Some(x)) {
                        out.push((x, None));
                    }
                }
                (wrong_bits, out)
            })
            .collect();
        let total = (1u64 << w) * wo as u64;
        let wrong: u64 = found.iter().map(|f| f.0).sum();
        let per_leaf = self.config.counterexamples_per_leaf;
        let mut taken: HashMap<NodeRef, usize> = HashMap::new();
        let mut counterexamples = Vec::new();
        for (x, leaf) in found.into_iter().flat_map(|f| f.1) {
            let keep = match leaf {
                None => true,
                Some(l) => {
                    let c = taken.entry(l).or_insert(0);
                    *c += 1;
                    *c <= per_leaf
                }
            };
            if keep && counterexamples.last() != Some(&x) {
                counterexamples.push(x);
            }
        }
        Scan {
            counterexamples,
            accuracy: (total - wrong) as f64 / total as f64,
        }
    }

    /// Commits speculation and reduces; the session keeps its raw diagram.
    pub fn finish(&self) -> Bsd {
        self.bsd.commit_speculation().reduce()
    }

    fn report(&self, status: Status, final_bsd: &Bsd) -> Result<ConvergenceReport> {
        let final_exact_accuracy = if self.oracle.width_in() <= self.config.exhaustive_threshold {
            Some(
                exact_accuracy(final_bsd, self.oracle, self.config.exhaustive_threshold)?.aggregate,
            )
        } else {
            None
        };
        Ok(ConvergenceReport {
            oracle: self.oracle.name().to_string(),
            width_in: self.oracle.width_in(),
            width_out: self.oracle.width_out(),
            order: self.bsd.order().to_vec(),
            status,
            total_expansions: self.records.iter().map(|r| r.expansions).sum(),
            samples_seen: self.inputs.len(),
            cycles: self.records.clone(),
            final_stats: final_bsd.stats(),
            final_exact_accuracy,
        })
    }
}

fn majority(ones: usize, zeros: usize, tie_break: bool) -> bool {
    match ones.cmp(&zeros) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => tie_break,
    }
}

/// Runs cycles until the target is met or a budget runs out.
///
/// On convergence the returned diagram has its speculation committed and is
/// reduced. On budget exhaustion it is the partial, unreduced diagram.
pub fn synthesize_module(
    oracle: &Oracle,
    config: &RepairConfig,
) -> Result<(Bsd, ConvergenceReport)> {
    let mut session = RepairSession::new(oracle, config.clone())?;
    run_session(&mut session)
}

pub fn run_session(session: &mut RepairSession<'_>) -> Result<(Bsd, ConvergenceReport)> {
    while !session.converged {
        if session.records.len() >= session.config.max_cycles {
            let reason = format!("max_cycles {} reached", session.config.max_cycles);
            let bsd = session.bsd.clone();
            let report = session.report(Status::BudgetExhausted { reason }, &bsd)?;
            return Ok((bsd, report));
        }
        match session.cycle() {
            Ok(_) => {}
            Err(Error::NodeBudget {
                nodes,
                limit,
                partial,
            }) => {
                let reason =
                    format!("an output diagram has {nodes} nodes, over the budget of {limit}");
                let report = session.report(Status::BudgetExhausted { reason }, &partial)?;
                return Ok((*partial, report));
            }
            Err(e) => return Err(e),
        }
    }
    let bsd = session.finish();
    let report = session.report(Status::Converged, &bsd)?;
    Ok((bsd, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitvec::BitVec;
    use crate::builtins::make_builtin;
    use crate::verify::{verify, VerifyMode};
    use proptest::prelude::*;

    fn sample(o: &Oracle, x: u64) -> IoSample {
        IoSample {
            input: BitVec::from_u64(o.width_in(), x).unwrap(),
            output: BitVec::from_u64(o.width_out(), o.eval_bits(x)).unwrap(),
        }
    }

    /// Expands every leaf of output `j` down to exact constants.
    fn expand_output_fully(bsd: &mut Bsd, o: &Oracle, j: usize) {
        loop {
            let mut changed = false;
            for x in 0..1u64 << o.width_in() {
                let leaf = bsd.leaf_of(j, x);
                if let Some(v) = bsd.split_var(leaf) {
                    let f = |y: u64| o.eval_bits(y) >> j & 1 == 1;
                    bsd.expand(leaf, (f(x | 1 << v), f(x & !(1 << v)))).unwrap();
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }

    fn exhaustive_cfg() -> RepairConfig {
        RepairConfig {
            seed: 7,
            ..RepairConfig::default()
        }
    }

    #[test]
    fn locate_fault_on_root_leaf() {
        let maj = make_builtin("majority", &[3]).unwrap();
        let bsd = Bsd::from_guesses(3, vec![0, 1, 2], &[false]).unwrap();
        let faults = locate_fault(&bsd, &sample(&maj, 0b111)).unwrap();
        assert_eq!(
            faults,
            vec![Fault {
                output: 0,
                leaf: bsd.roots()[0]
            }]
        );
    }

    #[test]
    fn locate_fault_requires_a_mismatch() {
        let maj = make_builtin("majority", &[3]).unwrap();
        let mut bsd = Bsd::from_guesses(3, vec![0, 1, 2], &[false]).unwrap();
        expand_output_fully(&mut bsd, &maj, 0);
        for x in 0..8 {
            assert!(matches!(
                locate_fault(&bsd, &sample(&maj, x)),
                Err(Error::Contract(_))
            ));
        }
    }

    #[test]
    fn locate_fault_isolates_the_carry_of_a_half_built_adder() {
        let add = make_builtin("adder", &[2]).unwrap();
        let mut bsd = Bsd::from_guesses(4, (0..4).collect(), &[false; 3]).unwrap();
        expand_output_fully(&mut bsd, &add, 0);
        expand_output_fully(&mut bsd, &add, 1);
        // a = 3, b = 3: sum 2, carry 1
        let s = sample(&add, 0b11_11);
        assert_eq!(s.output.as_u64(), 0b110);
        let faults = locate_fault(&bsd, &s).unwrap();
        assert_eq!(
            faults,
            vec![Fault {
                output: 2,
                leaf: bsd.roots()[2]
            }]
        );
    }

    #[test]
    fn wrong_constant_is_a_hard_fault() {
        let id = make_builtin("identity", &[1]).unwrap();
        let mut bsd = Bsd::from_guesses(1, vec![0], &[false]).unwrap();
        bsd.expand(bsd.roots()[0], (false, true)).unwrap();
        assert!(matches!(
            locate_fault(&bsd, &sample(&id, 1)),
            Err(Error::HardFault { output: 0, .. })
        ));
    }

    #[test]
    fn exact_diagram_needs_no_expansion() {
        let add = make_builtin("adder", &[3]).unwrap();
        let (exact, _) = synthesize_module(&add, &exhaustive_cfg()).unwrap();
        let mut s = RepairSession::with_diagram(&add, exhaustive_cfg(), exact).unwrap();
        let r = s.cycle().unwrap();
        assert_eq!(
            (r.expansions, r.cache_accuracy, r.exact_accuracy),
            (0, 1.0, Some(1.0))
        );
        assert!(s.is_converged());
    }

    #[test]
    fn constant_oracle_converges_without_expanding() {
        let zero = make_builtin("const", &[4, 0]).unwrap();
        let (bsd, r) = synthesize_module(&zero, &exhaustive_cfg()).unwrap();
        assert!(r.converged());
        assert_eq!(r.total_expansions, 0);
        assert_eq!(bsd.stats().decision_count, 0);
    }

    /// Subcubes along the order on which `f` is not constant.
    fn nonconstant_regions(f: &dyn Fn(u64) -> bool, order: &[usize]) -> usize {
        fn go(f: &dyn Fn(u64) -> bool, order: &[usize], depth: usize, fixed: u64) -> usize {
            let free = &order[depth..];
            let values: Vec<bool> = (0..1u64 << free.len())
                .map(|k| f(fixed | crate::oracle::scatter(k, free)))
                .collect();
            if values.iter().all(|&v| v == values[0]) {
                return 0;
            }
            let v = order[depth];
            1 + go(f, order, depth + 1, fixed) + go(f, order, depth + 1, fixed | 1 << v)
        }
        go(f, order, 0, 0)
    }

    #[test]
    fn majority3_from_zero_with_exhaustive_cache() {
        let maj = make_builtin("majority", &[3]).unwrap();
        let cfg = RepairConfig {
            init_policy: Some(GuessPolicy::ConstantZero),
            ..exhaustive_cfg()
        };
        let mut s = RepairSession::new(&maj, cfg).unwrap();
        s.seed_cache_exhaustive().unwrap();
        let (bsd, r) = run_session(&mut s).unwrap();
        let expected = nonconstant_regions(&|x| maj.eval_bits(x) == 1, &[0, 1, 2]);
        assert_eq!(expected, 5);
        assert_eq!(r.total_expansions, expected);
        assert!(r.total_expansions <= 7);
        assert_eq!(r.final_exact_accuracy, Some(1.0));
        assert_eq!(bsd.stats().decision_count, 4);
    }

    #[test]
    fn adder4_converges_exactly() {
        let add = make_builtin("adder", &[4]).unwrap();
        let (bsd, r) = synthesize_module(&add, &exhaustive_cfg()).unwrap();
        assert!(r.converged());
        assert_eq!(r.final_exact_accuracy, Some(1.0));
        assert_eq!(bsd.stats().spec_leaf_count, 0);
        for x in 0..256u64 {
            assert_eq!(bsd.eval_bits(x), (x & 15) + (x >> 4));
        }
        assert!(r.cache_accuracy_monotone() && r.node_count_monotone());
    }

    #[test]
    fn identity8_reduces_to_one_test_per_bit() {
        let id = make_builtin("identity", &[8]).unwrap();
        let (bsd, r) = synthesize_module(&id, &exhaustive_cfg()).unwrap();
        assert!(r.converged());
        assert_eq!(bsd.stats().decision_count, 8);
        for (j, &root) in bsd.roots().iter().enumerate() {
            assert_eq!(
                bsd.node(root),
                BsdNode::Decision {
                    var: j as u32,
                    hi: crate::bsd::TRUE,
                    lo: crate::bsd::FALSE
                }
            );
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let alu = make_builtin("alu", &[4]).unwrap();
        let (a, ra) = synthesize_module(&alu, &exhaustive_cfg()).unwrap();
        let (b, rb) = synthesize_module(&alu, &exhaustive_cfg()).unwrap();
        assert_eq!(ra.to_json(), rb.to_json());
        assert_eq!(a.dump(), b.dump());
    }

    #[test]
    fn exact_cofactor_guesses_improve_monotonically() {
        for (name, p) in [
            ("alu", vec![4]),
            ("multiplier", vec![3]),
            ("majority", vec![7]),
        ] {
            let o = make_builtin(name, &p).unwrap();
            let cfg = RepairConfig {
                guess_policy: GuessPolicy::ExactCofactorMajority,
                ..exhaustive_cfg()
            };
            let (_, r) = synthesize_module(&o, &cfg).unwrap();
            assert!(r.converged(), "{name}");
            assert!(r.exact_accuracy_monotone(), "{name}");
            assert!(r.cycles.iter().all(|c| c.hard_faults == 0));
        }
    }

    #[test]
    fn random_guesses_recover_from_hard_faults() {
        let add = make_builtin("adder", &[4]).unwrap();
        let cfg = RepairConfig {
            guess_policy: GuessPolicy::RandomSeeded { seed: 3 },
            ..exhaustive_cfg()
        };
        let (bsd, r) = synthesize_module(&add, &cfg).unwrap();
        assert!(r.converged());
        assert!(r.cycles.iter().map(|c| c.hard_faults).sum::<usize>() > 0);
        assert!(verify(&bsd, &add, VerifyMode::Exhaustive).unwrap().pass);
    }

    #[test]
    fn recovery_on_a_reduced_diagram() {
        let maj = make_builtin("majority", &[3]).unwrap();
        // x0 alone, reduced: wrong whenever x1 == x2 != x0
        let mut bsd = Bsd::from_guesses(3, vec![0, 1, 2], &[false]).unwrap();
        bsd.expand(bsd.roots()[0], (true, false)).unwrap();
        let bsd = bsd.commit_speculation().reduce();
        let mut s = RepairSession::with_diagram(&maj, exhaustive_cfg(), bsd).unwrap();
        let (fixed, r) = run_session(&mut s).unwrap();
        assert!(r.converged());
        assert!(r.cycles[0].hard_faults > 0);
        assert!(verify(&fixed, &maj, VerifyMode::Exhaustive).unwrap().pass);
    }

    #[test]
    fn node_budget_stops_with_partial_diagram() {
        let mul = make_builtin("multiplier", &[4]).unwrap();
        let cfg = RepairConfig {
            max_nodes: Some(40),
            ..exhaustive_cfg()
        };
        let (bsd, r) = synthesize_module(&mul, &cfg).unwrap();
        assert!(matches!(r.status, Status::BudgetExhausted { .. }));
        assert!(r.cycles.last().unwrap().largest_output_nodes > 40);
        assert!(bsd.stats().spec_leaf_count > 0);
        let short = RepairConfig {
            max_cycles: 1,
            ..exhaustive_cfg()
        };
        let (_, r) = synthesize_module(&mul, &short).unwrap();
        assert_eq!(r.cycles.len(), 1);
        assert!(!r.converged());
    }

    #[test]
    fn expansion_cap_bounds_each_cycle() {
        let add = make_builtin("adder", &[3]).unwrap();
        let cfg = RepairConfig {
            expansions_per_cycle_cap: 3,
            ..exhaustive_cfg()
        };
        let (_, r) = synthesize_module(&add, &cfg).unwrap();
        assert!(r.converged());
        assert!(r.cycles.iter().all(|c| c.expansions <= 3));
        assert!(r
            .cycles
            .windows(2)
            .all(|w| w[1].node_count - w[0].node_count <= 2 * 3));
    }

    #[test]
    fn statistical_and_sample_targets() {
        let add = make_builtin("adder", &[6]).unwrap();
        let cfg = RepairConfig {
            target: Target::Statistical {
                confidence: 0.99,
                max_error: 0.001,
            },
            ..exhaustive_cfg()
        };
        let (bsd, r) = synthesize_module(&add, &cfg).unwrap();
        assert!(r.converged());
        let mode = VerifyMode::Statistical {
            confidence: 0.99,
            max_error: 0.001,
            seed: 100,
        };
        assert!(verify(&bsd, &add, mode).unwrap().pass);

        let maj = make_builtin("majority", &[9]).unwrap();
        let cfg = RepairConfig {
            target: Target::SampleAccuracy { threshold: 0.9 },
            ..exhaustive_cfg()
        };
        let (_, r) = synthesize_module(&maj, &cfg).unwrap();
        assert!(r.converged());
        assert!(r.cycles.last().unwrap().cache_accuracy >= 0.9);
    }

    #[test]
    fn config_validation() {
        let maj = make_builtin("majority", &[3]).unwrap();
        let bad = [
            RepairConfig {
                batch_size: 0,
                ..RepairConfig::default()
            },
            RepairConfig {
                target: Target::SampleAccuracy { threshold: 1.5 },
                ..RepairConfig::default()
            },
            RepairConfig {
                target: Target::SampleAccuracy { threshold: 0.0 },
                ..RepairConfig::default()
            },
            RepairConfig {
                target: Target::Statistical {
                    confidence: 1.0,
                    max_error: 0.1,
                },
                ..RepairConfig::default()
            },
            RepairConfig {
                order: OrderPolicy::Explicit {
                    order: vec![0, 0, 1],
                },
                ..RepairConfig::default()
            },
        ];
        for cfg in bad {
            assert!(synthesize_module(&maj, &cfg).is_err(), "{cfg:?}");
        }
        let wide = Oracle::from_fn("wide", 30, 1, |x| x & 1).unwrap();
        assert!(matches!(
            synthesize_module(&wide, &RepairConfig::default()),
            Err(Error::EnumerationRefused { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn random_functions_converge_exactly(
            width in 1usize..7,
            outs in 1usize..4,
            table_seed in any::<u64>(),
            seed in any::<u64>(),
            policy in 0u8..3,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = ChaCha8Rng::seed_from_u64(table_seed);
            let table: Vec<u64> = (0..1u64 << width).map(|_| rng.gen::<u64>() & ((1 << outs) - 1)).collect();
            let o = Oracle::from_fn("random", width, outs, move |x| table[x as usize]).unwrap();
            let guess_policy = match policy {
                0 => GuessPolicy::default(),
                1 => GuessPolicy::RandomSeeded { seed },
                _ => GuessPolicy::ConstantZero,
            };
            let cfg = RepairConfig { seed, batch_size: 8, guess_policy, ..RepairConfig::default() };
            let (bsd, r) = synthesize_module(&o, &cfg).unwrap();
            prop_assert!(r.converged());
            if policy == 0 {
                prop_assert!(r.cache_accuracy_monotone());
            }
            prop_assert!(r.node_count_monotone());
            prop_assert_eq!(r.final_exact_accuracy, Some(1.0));
            bsd.check_invariants().unwrap();
            for x in 0..1u64 << width {
                prop_assert_eq!(bsd.eval_bits(x), o.eval_bits(x));
            }
        }
    }
}
