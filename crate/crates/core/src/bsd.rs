//! Binary speculation diagrams.
//!
//! A diagram holds one ordered decision DAG per output bit over a shared node
//! table. Leaves are either constants or *speculative* leaves carrying a guessed
//! value for the whole sub-region of the input space that reaches them.
//! Repairing a wrong guess means Shannon-expanding its leaf on the next
//! variable of the global order.
//!
//! Nodes split into two classes:
//!
//! * **determined** nodes have no speculative leaf below them. They are
//!   hash-consed through the unique table and freely shared.
//! * **undetermined** nodes contain at least one speculative leaf. Every
//!   speculative leaf is a distinct node, so an undetermined node has exactly
//!   one parent slot and can be rewritten in place.
//!
//! When an expansion makes a node determined it is interned; if an equal node
//! already exists, the parent edge is redirected and the check continues
//! upward. The node table only grows; [`Bsd::reduce`] rebuilds a compact copy.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bitvec::{mask, BitVec};
use crate::error::{Error, Result};
use crate::netlist::{NetId, Netlist, NetlistBuilder};
use crate::oracle::{check_enumerable, stream_rng, streams, BoolFunction, IoSample};

pub type NodeRef = u32;

pub const FALSE: NodeRef = 0;
pub const TRUE: NodeRef = 1;

pub(crate) fn const_ref(value: bool) -> NodeRef {
    if value {
        TRUE
    } else {
        FALSE
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BsdNode {
    Decision {
        var: u32,
        hi: NodeRef,
        lo: NodeRef,
    },
    Const(bool),
    /// `depth` is the position in the variable order this leaf would split on next.
    Spec {
        guess: bool,
        depth: u32,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Parent {
    None,
    Root(u32),
    Hi(NodeRef),
    Lo(NodeRef),
}

/// How fresh speculative leaves get their guessed constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GuessPolicy {
    RandomSeeded {
        seed: u64,
    },
    ConstantZero,
    /// Majority of cached samples falling in the leaf's region.
    SampleMajority {
        tie_break: bool,
    },
    /// Majority over the full cofactor of the oracle; test harness only.
    ExactCofactorMajority,
}

impl Default for GuessPolicy {
    fn default() -> Self {
        GuessPolicy::SampleMajority { tie_break: false }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BsdStats {
    pub node_count: usize,
    pub decision_count: usize,
    pub spec_leaf_count: usize,
}

#[derive(Clone, Debug)]
pub struct Bsd {
    width_in: usize,
    width_out: usize,
    order: Vec<usize>,
    position: Vec<u32>,
    nodes: Vec<BsdNode>,
    determined: Vec<bool>,
    parent: Vec<Parent>,
    unique: HashMap<(u32, NodeRef, NodeRef), NodeRef>,
    roots: Vec<NodeRef>,
}

pub fn validate_order(width_in: usize, order: &[usize]) -> Result<()> {
    let mut seen = vec![false; width_in];
    if order.len() != width_in {
        return Err(Error::contract(format!(
            "variable order has {} entries, expected {width_in}",
            order.len()
        )));
    }
    for &v in order {
        if v >= width_in || std::mem::replace(&mut seen[v], true) {
            return Err(Error::contract(format!(
                "variable order {order:?} is not a permutation"
            )));
        }
    }
    Ok(())
}

impl Bsd {
    /// Fresh diagram whose roots are single speculative leaves.
    ///
    /// `ExactCofactorMajority` needs an oracle; use [`Bsd::from_guesses`] with
    /// precomputed guesses instead.
    pub fn new(
        width_in: usize,
        width_out: usize,
        order: Vec<usize>,
        policy: GuessPolicy,
    ) -> Result<Self> {
        let guesses: Vec<bool> = match policy {
            GuessPolicy::RandomSeeded { seed } => {
                let mut rng = stream_rng(seed, streams::INIT);
                (0..width_out).map(|_| rng.gen()).collect()
            }
            GuessPolicy::ConstantZero => vec![false; width_out],
            GuessPolicy::SampleMajority { tie_break } => vec![tie_break; width_out],
            GuessPolicy::ExactCofactorMajority => {
                return Err(Error::contract("exact cofactor guesses need an oracle"))
            }
        };
        Self::from_guesses(width_in, order, &guesses)
    }

    pub fn from_guesses(width_in: usize, order: Vec<usize>, guesses: &[bool]) -> Result<Self> {
        if width_in == 0 || width_in > 63 {
            return Err(Error::contract(format!(
                "diagram input width {width_in} outside 1..=63"
            )));
        }
        if guesses.is_empty() || guesses.len() > 64 {
            return Err(Error::contract("diagram needs 1..=64 outputs"));
        }
        validate_order(width_in, &order)?;
        let mut bsd = Self::empty(width_in, guesses.len(), order);
        for (j, &g) in guesses.iter().enumerate() {
            let leaf = bsd.push(BsdNode::Spec { guess: g, depth: 0 });
            bsd.parent[leaf as usize] = Parent::Root(j as u32);
            bsd.roots.push(leaf);
        }
        Ok(bsd)
    }

    fn empty(width_in: usize, width_out: usize, order: Vec<usize>) -> Self {
        let mut position = vec![0; width_in];
        for (p, &v) in order.iter().enumerate() {
            position[v] = p as u32;
        }
        Bsd {
            width_in,
            width_out,
            order,
            position,
            nodes: vec![BsdNode::Const(false), BsdNode::Const(true)],
            determined: vec![true, true],
            parent: vec![Parent::None, Parent::None],
            unique: HashMap::new(),
            roots: Vec::with_capacity(width_out),
        }
    }

    pub fn width_in(&self) -> usize {
        self.width_in
    }

    pub fn width_out(&self) -> usize {
        self.width_out
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn roots(&self) -> &[NodeRef] {
        &self.roots
    }

    pub fn node(&self, r: NodeRef) -> BsdNode {
        self.nodes[r as usize]
    }

    /// Size of the node table, garbage included.
    pub fn table_len(&self) -> usize {
        self.nodes.len()
    }

    fn push(&mut self, node: BsdNode) -> NodeRef {
        let id = self.nodes.len() as NodeRef;
        self.determined.push(!matches!(node, BsdNode::Spec { .. }));
        self.nodes.push(node);
        self.parent.push(Parent::None);
        id
    }

    fn is_determined(&self, r: NodeRef) -> bool {
        self.determined[r as usize]
    }

    /// Interns or creates a decision node; undetermined children get their parent slot set.
    fn make(&mut self, var: u32, hi: NodeRef, lo: NodeRef) -> NodeRef {
        if self.is_determined(hi) && self.is_determined(lo) {
            if let Some(&r) = self.unique.get(&(var, hi, lo)) {
                return r;
            }
            let r = self.push(BsdNode::Decision { var, hi, lo });
            self.unique.insert((var, hi, lo), r);
            r
        } else {
            let r = self.push(BsdNode::Decision { var, hi, lo });
            self.determined[r as usize] = false;
            if !self.is_determined(hi) {
                self.parent[hi as usize] = Parent::Hi(r);
            }
            if !self.is_determined(lo) {
                self.parent[lo as usize] = Parent::Lo(r);
            }
            r
        }
    }

    fn set_child(&mut self, slot: Parent, child: NodeRef) {
        match slot {
            Parent::Root(j) => self.roots[j as usize] = child,
            Parent::Hi(p) => {
                if let BsdNode::Decision { hi, .. } = &mut self.nodes[p as usize] {
                    *hi = child;
                }
            }
            Parent::Lo(p) => {
                if let BsdNode::Decision { lo, .. } = &mut self.nodes[p as usize] {
                    *lo = child;
                }
            }
            Parent::None => unreachable!("undetermined node without parent"),
        }
        if !self.is_determined(child) {
            self.parent[child as usize] = slot;
        }
    }

    /// `n` just became determined: intern it and propagate upward. Returns the canonical id of `n`.
    fn settle(&mut self, n: NodeRef) -> NodeRef {
        let mut cur = n;
        let mut first = None;
        loop {
            self.determined[cur as usize] = true;
            let BsdNode::Decision { var, hi, lo } = self.nodes[cur as usize] else {
                unreachable!("only decisions settle")
            };
            let canon = *self.unique.entry((var, hi, lo)).or_insert(cur);
            first.get_or_insert(canon);
            let slot = std::mem::replace(&mut self.parent[cur as usize], Parent::None);
            self.set_child(slot, canon);
            let p = match slot {
                Parent::Hi(p) | Parent::Lo(p) => p,
                _ => break,
            };
            match self.nodes[p as usize] {
                BsdNode::Decision { hi, lo, .. }
                    if self.is_determined(hi) && self.is_determined(lo) =>
                {
                    cur = p
                }
                _ => break,
            }
        }
        first.unwrap_or(n)
    }

    pub fn eval_bits(&self, input: u64) -> u64 {
        (0..self.width_out).fold(0, |acc, j| acc | (self.eval_output(j, input) as u64) << j)
    }

    pub fn eval(&self, input: &BitVec) -> Result<BitVec> {
        if input.width() != self.width_in {
            return Err(Error::contract(format!(
                "diagram expects {} input bits, got {}",
                self.width_in,
                input.width()
            )));
        }
        Ok(BitVec::new_masked(
            self.width_out,
            self.eval_bits(input.as_u64()),
        ))
    }

    pub fn eval_output(&self, output: usize, input: u64) -> bool {
        match self.nodes[self.leaf_of(output, input) as usize] {
            BsdNode::Const(v) => v,
            BsdNode::Spec { guess, .. } => guess,
            BsdNode::Decision { .. } => unreachable!(),
        }
    }

    /// The leaf reached by `input` in output `output`'s diagram.
    pub fn leaf_of(&self, output: usize, input: u64) -> NodeRef {
        let mut n = self.roots[output];
        while let BsdNode::Decision { var, hi, lo } = self.nodes[n as usize] {
            n = if input >> var & 1 == 1 { hi } else { lo };
        }
        n
    }

    /// Decision nodes visited on the way to the leaf, then the leaf.
    pub fn path_of(&self, output: usize, input: u64) -> Vec<NodeRef> {
        let mut path = vec![self.roots[output]];
        let mut n = self.roots[output];
        while let BsdNode::Decision { var, hi, lo } = self.nodes[n as usize] {
            n = if input >> var & 1 == 1 { hi } else { lo };
            path.push(n);
        }
        path
    }

    /// Variable a speculative leaf would split on, or `None` for other nodes.
    pub fn split_var(&self, leaf: NodeRef) -> Option<usize> {
        match self.nodes.get(leaf as usize)? {
            BsdNode::Spec { depth, .. } => self.order.get(*depth as usize).copied(),
            _ => None,
        }
    }

    /// Shannon expansion of a speculative leaf on the next variable of the order.
    ///
    /// The leaf becomes a decision whose children carry `(hi_guess, lo_guess)`;
    /// children at full depth are constant leaves. Returns the id of the new
    /// decision (which may be a pre-existing equal node).
    pub fn expand(&mut self, leaf: NodeRef, (hi_guess, lo_guess): (bool, bool)) -> Result<NodeRef> {
        let depth = match self.nodes.get(leaf as usize) {
            Some(BsdNode::Spec { depth, .. }) => *depth as usize,
            Some(other) => {
                return Err(Error::contract(format!(
                    "node {leaf} is not a speculative leaf: {other:?}"
                )))
            }
            None => return Err(Error::contract(format!("node {leaf} does not exist"))),
        };
        if self.parent[leaf as usize] == Parent::None {
            return Err(Error::contract(format!(
                "speculative leaf {leaf} is not reachable"
            )));
        }
        let var = self.order[depth] as u32;
        let full = depth + 1 == self.width_in;
        let child = |bsd: &mut Self, guess: bool, slot: fn(NodeRef) -> Parent| {
            if full {
                const_ref(guess)
            } else {
                let c = bsd.push(BsdNode::Spec {
                    guess,
                    depth: depth as u32 + 1,
                });
                bsd.parent[c as usize] = slot(leaf);
                c
            }
        };
        let hi = child(self, hi_guess, Parent::Hi);
        let lo = child(self, lo_guess, Parent::Lo);
        self.nodes[leaf as usize] = BsdNode::Decision { var, hi, lo };
        if full {
            Ok(self.settle(leaf))
        } else {
            Ok(leaf)
        }
    }

    /// Replaces the leaf reached by `input` in output `output` by `replacement`,
    /// copying any shared determined nodes on the way so that no other path
    /// changes. Used to recover from constant leaves proven wrong by a sample.
    pub(crate) fn replace_leaf_on_path(
        &mut self,
        output: usize,
        input: u64,
        replacement: LeafKind,
    ) -> NodeRef {
        let path = self.path_of(output, input);
        let leaf_depth = self.leaf_depth(&path);
        let mut cur = match replacement {
            LeafKind::Const(v) => const_ref(v),
            LeafKind::Spec(g) => {
                debug_assert!(leaf_depth < self.width_in);
                self.push(BsdNode::Spec {
                    guess: g,
                    depth: leaf_depth as u32,
                })
            }
        };
        let new_leaf = cur;
        // nodes above the deepest undetermined one are undetermined too
        let first_det = path
            .iter()
            .position(|&n| self.is_determined(n))
            .unwrap_or(path.len());
        for i in (first_det..path.len() - 1).rev() {
            let BsdNode::Decision { var, hi, lo } = self.nodes[path[i] as usize] else {
                unreachable!()
            };
            cur = if input >> var & 1 == 1 {
                self.make(var, cur, lo)
            } else {
                self.make(var, hi, cur)
            };
        }
        let slot = if first_det == 0 {
            Parent::Root(output as u32)
        } else {
            let u = path[first_det - 1];
            let BsdNode::Decision { var, .. } = self.nodes[u as usize] else {
                unreachable!()
            };
            if input >> var & 1 == 1 {
                Parent::Hi(u)
            } else {
                Parent::Lo(u)
            }
        };
        self.set_child(slot, cur);
        if self.is_determined(cur) {
            if let Parent::Hi(u) | Parent::Lo(u) = slot {
                if let BsdNode::Decision { hi, lo, .. } = self.nodes[u as usize] {
                    if self.is_determined(hi) && self.is_determined(lo) {
                        self.settle(u);
                    }
                }
            }
        }
        new_leaf
    }

    /// Order position just below the last decision on `input`'s path in output `output`.
    pub(crate) fn leaf_depth_on(&self, output: usize, input: u64) -> usize {
        self.leaf_depth(&self.path_of(output, input))
    }

    /// Order position just below the last decision on `path` (which ends at a leaf).
    fn leaf_depth(&self, path: &[NodeRef]) -> usize {
        match path.len() {
            1 => 0,
            n => match self.nodes[path[n - 2] as usize] {
                BsdNode::Decision { var, .. } => self.position[var as usize] as usize + 1,
                _ => unreachable!(),
            },
        }
    }

    /// Flips the guess of a speculative leaf (fault injection).
    pub fn flip_guess(&mut self, leaf: NodeRef) -> Result<()> {
        match self.nodes.get_mut(leaf as usize) {
            Some(BsdNode::Spec { guess, .. }) => {
                *guess = !*guess;
                Ok(())
            }
            _ => Err(Error::contract(format!(
                "node {leaf} is not a speculative leaf"
            ))),
        }
    }

    fn for_each_reachable(&self, mut visit: impl FnMut(NodeRef, &BsdNode)) {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack: Vec<NodeRef> = self.roots.iter().rev().copied().collect();
        while let Some(n) = stack.pop() {
            if std::mem::replace(&mut seen[n as usize], true) {
                continue;
            }
            let node = &self.nodes[n as usize];
            visit(n, node);
            if let BsdNode::Decision { hi, lo, .. } = *node {
                stack.push(lo);
                stack.push(hi);
            }
        }
    }

    /// Nodes reachable from each output's root, constants included.
    pub fn output_sizes(&self) -> Vec<usize> {
        let mut stamp = vec![u32::MAX; self.nodes.len()];
        let mut stack = Vec::new();
        (0..self.width_out)
            .map(|j| {
                let mut count = 0;
                stack.push(self.roots[j]);
                while let Some(n) = stack.pop() {
                    if std::mem::replace(&mut stamp[n as usize], j as u32) == j as u32 {
                        continue;
                    }
                    count += 1;
                    if let BsdNode::Decision { hi, lo, .. } = self.nodes[n as usize] {
                        stack.push(lo);
                        stack.push(hi);
                    }
                }
                count
            })
            .collect()
    }

    pub fn stats(&self) -> BsdStats {
        let mut s = BsdStats::default();
        self.for_each_reachable(|_, node| {
            s.node_count += 1;
            match node {
                BsdNode::Decision { .. } => s.decision_count += 1,
                BsdNode::Spec { .. } => s.spec_leaf_count += 1,
                BsdNode::Const(_) => {}
            }
        });
        s
    }

    /// Reachable speculative leaves in ascending id order.
    pub fn spec_leaves(&self) -> Vec<NodeRef> {
        let mut out = Vec::new();
        self.for_each_reachable(|n, node| {
            if matches!(node, BsdNode::Spec { .. }) {
                out.push(n);
            }
        });
        out.sort_unstable();
        out
    }

    /// Checks the ordered-diagram property, speculative depths and
    /// hash-consing uniqueness over all reachable nodes.
    pub fn check_invariants(&self) -> Result<()> {
        let mut err = None;
        let mut keys: HashMap<(u32, NodeRef, NodeRef), NodeRef> = HashMap::new();
        let pos = |bsd: &Self, child: NodeRef| -> Option<usize> {
            match bsd.nodes[child as usize] {
                BsdNode::Decision { var, .. } => Some(bsd.position[var as usize] as usize),
                BsdNode::Spec { depth, .. } => Some(depth as usize),
                BsdNode::Const(_) => None,
            }
        };
        for &r in &self.roots {
            if let BsdNode::Spec { depth, .. } = self.nodes[r as usize] {
                if depth != 0 {
                    err.get_or_insert(format!("root leaf {r} has depth {depth}"));
                }
            }
        }
        self.for_each_reachable(|n, node| match *node {
            BsdNode::Decision { var, hi, lo } => {
                let p = self.position[var as usize] as usize;
                for c in [hi, lo] {
                    if let Some(cp) = pos(self, c) {
                        let ok = match self.nodes[c as usize] {
                            BsdNode::Spec { .. } => cp == p + 1,
                            _ => cp > p,
                        };
                        if !ok {
                            err.get_or_insert(format!(
                                "node {n} (var {var}) has out-of-order child {c}"
                            ));
                        }
                    }
                }
                if let Some(other) = keys.insert((var, hi, lo), n) {
                    err.get_or_insert(format!("nodes {other} and {n} are structurally equal"));
                }
            }
            BsdNode::Spec { depth, .. } => {
                if depth as usize >= self.width_in {
                    err.get_or_insert(format!("speculative leaf {n} at full depth"));
                }
            }
            BsdNode::Const(_) => {}
        });
        match err {
            Some(e) => Err(Error::contract(e)),
            None => Ok(()),
        }
    }

    fn rebuild(&self, eliminate_redundant: bool, commit_spec: bool) -> Bsd {
        let mut out = Bsd::empty(self.width_in, self.width_out, self.order.clone());
        let mut memo: HashMap<NodeRef, NodeRef> = HashMap::new();
        fn go(
            src: &Bsd,
            dst: &mut Bsd,
            memo: &mut HashMap<NodeRef, NodeRef>,
            n: NodeRef,
            er: bool,
            cs: bool,
        ) -> NodeRef {
            if let Some(&r) = memo.get(&n) {
                return r;
            }
            let r = match src.nodes[n as usize] {
                BsdNode::Const(v) => const_ref(v),
                BsdNode::Spec { guess, .. } if cs => const_ref(guess),
                BsdNode::Spec { guess, depth } => dst.push(BsdNode::Spec { guess, depth }),
                BsdNode::Decision { var, hi, lo } => {
                    let h = go(src, dst, memo, hi, er, cs);
                    let l = go(src, dst, memo, lo, er, cs);
                    if er && h == l {
                        h
                    } else {
                        dst.make(var, h, l)
                    }
                }
            };
            memo.insert(n, r);
            r
        }
        for (j, &root) in self.roots.iter().enumerate() {
            let r = go(
                self,
                &mut out,
                &mut memo,
                root,
                eliminate_redundant,
                commit_spec,
            );
            out.roots.push(r);
            if !out.is_determined(r) {
                out.parent[r as usize] = Parent::Root(j as u32);
            }
        }
        out
    }

    /// ROBDD reduction of the determined regions plus garbage collection.
    ///
    /// Redundant tests are removed and equal decisions merged; speculative
    /// leaves are never merged.
    pub fn reduce(&self) -> Bsd {
        self.rebuild(true, false)
    }

    /// Turns every speculative leaf into a constant leaf with its guess.
    pub fn commit_speculation(&self) -> Bsd {
        self.rebuild(false, true)
    }

    /// Lowers a fully determined diagram to MUX2 gates, one per decision node.
    pub fn to_netlist(&self) -> Result<Netlist> {
        let stats = self.stats();
        if stats.spec_leaf_count > 0 {
            return Err(Error::LoweringRefused {
                spec_leaves: stats.spec_leaf_count,
            });
        }
        let mut b = NetlistBuilder::new(self.width_in);
        let inputs: Vec<NetId> = (0..self.width_in).map(|i| b.input(i)).collect();
        let mut nets: HashMap<NodeRef, NetId> = HashMap::new();
        fn lower(
            bsd: &Bsd,
            b: &mut NetlistBuilder,
            inputs: &[NetId],
            nets: &mut HashMap<NodeRef, NetId>,
            n: NodeRef,
        ) -> NetId {
            if let Some(&id) = nets.get(&n) {
                return id;
            }
            let id = match bsd.nodes[n as usize] {
                BsdNode::Const(v) => b.constant(v),
                BsdNode::Decision { var, hi, lo } => {
                    let d1 = lower(bsd, b, inputs, nets, hi);
                    let d0 = lower(bsd, b, inputs, nets, lo);
                    b.mux(inputs[var as usize], d1, d0)
                }
                BsdNode::Spec { .. } => unreachable!("checked above"),
            };
            nets.insert(n, id);
            id
        }
        let outputs: Vec<NetId> = self
            .roots
            .iter()
            .map(|&r| lower(self, &mut b, &inputs, &mut nets, r))
            .collect();
        b.finish(outputs)
    }

    /// Line-oriented text form of the reachable diagram.
    ///
    /// ```text
    /// bsd 1
    /// inputs 3
    /// outputs 1
    /// order 0 1 2
    /// 0 C - - - 0 -
    /// 1 S - - - 1 2
    /// 2 D 1 1 0 - -
    /// roots 2
    /// ```
    ///
    /// Node lines are `id kind var hi lo guess depth` with `-` for absent
    /// fields; kinds are `D`ecision, `C`onstant and `S`peculative. Ids are
    /// assigned in post-order from the roots, so the text is canonical for a
    /// given diagram structure.
    pub fn dump(&self) -> String {
        let mut ids: HashMap<NodeRef, usize> = HashMap::new();
        let mut lines = Vec::new();
        fn visit(
            bsd: &Bsd,
            n: NodeRef,
            ids: &mut HashMap<NodeRef, usize>,
            lines: &mut Vec<String>,
        ) -> usize {
            if let Some(&id) = ids.get(&n) {
                return id;
            }
            let line = match bsd.nodes[n as usize] {
                BsdNode::Const(v) => format!("C - - - {} -", v as u8),
                BsdNode::Spec { guess, depth } => format!("S - - - {} {depth}", guess as u8),
                BsdNode::Decision { var, hi, lo } => {
                    let h = visit(bsd, hi, ids, lines);
                    let l = visit(bsd, lo, ids, lines);
                    format!("D {var} {h} {l} - -")
                }
            };
            let id = lines.len();
            lines.push(format!("{id} {line}"));
            ids.insert(n, id);
            id
        }
        let roots: Vec<usize> = self
            .roots
            .iter()
            .map(|&r| visit(self, r, &mut ids, &mut lines))
            .collect();
        let mut s = String::new();
        let _ = writeln!(s, "bsd 1");
        let _ = writeln!(s, "inputs {}", self.width_in);
        let _ = writeln!(s, "outputs {}", self.width_out);
        let _ = writeln!(s, "order {}", join(&self.order));
        for l in lines {
            s.push_str(&l);
            s.push('\n');
        }
        let _ = writeln!(s, "roots {}", join(&roots));
        s
    }

    pub fn from_dump(text: &str) -> Result<Bsd> {
        const FMT: &str = "bsd dump";
        let mut header: BTreeMap<&str, (usize, Vec<&str>)> = BTreeMap::new();
        let mut node_lines = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut toks = line.split_whitespace();
            let head = toks.next().unwrap();
            if head.chars().all(|c| c.is_ascii_digit()) {
                node_lines.push((i + 1, line));
            } else if ["bsd", "inputs", "outputs", "order", "roots"].contains(&head) {
                header.insert(head, (i + 1, toks.collect()));
            } else {
                return Err(Error::parse(
                    FMT,
                    i + 1,
                    1,
                    format!("unknown directive `{head}`"),
                ));
            }
        }
        let field = |key: &str| -> Result<&(usize, Vec<&str>)> {
            header.get(key).ok_or_else(|| {
                Error::parse(
                    FMT,
                    text.lines().count().max(1),
                    1,
                    format!("missing `{key}` line"),
                )
            })
        };
        let num = |line: usize, tok: &str| -> Result<usize> {
            tok.parse()
                .map_err(|_| Error::parse(FMT, line, 1, format!("`{tok}` is not a number")))
        };
        let (vl, version) = field("bsd")?;
        if version.as_slice() != ["1"] {
            return Err(Error::parse(FMT, *vl, 1, "unsupported dump version"));
        }
        let (il, w) = field("inputs")?;
        let width_in = num(*il, w.first().copied().unwrap_or(""))?;
        let (ol, w) = field("outputs")?;
        let width_out = num(*ol, w.first().copied().unwrap_or(""))?;
        let (rl, order_toks) = field("order")?;
        let order = order_toks
            .iter()
            .map(|t| num(*rl, t))
            .collect::<Result<Vec<_>>>()?;
        let mut bsd = Bsd::from_guesses(width_in, order, &vec![false; width_out])
            .map_err(|e| Error::parse(FMT, *rl, 1, e.to_string()))?;
        bsd.roots.clear();
        bsd.nodes.truncate(2);
        bsd.determined.truncate(2);
        bsd.parent.truncate(2);

        let mut map: Vec<NodeRef> = Vec::new();
        for (line, text) in node_lines {
            let t: Vec<&str> = text.split_whitespace().collect();
            if t.len() != 7 {
                return Err(Error::parse(FMT, line, 1, "node lines have 7 fields"));
            }
            if num(line, t[0])? != map.len() {
                return Err(Error::parse(
                    FMT,
                    line,
                    1,
                    "node ids must be consecutive from 0",
                ));
            }
            let child = |tok: &str| -> Result<NodeRef> {
                let c = num(line, tok)?;
                map.get(c).copied().ok_or_else(|| {
                    Error::parse(FMT, line, 1, format!("child {c} not defined before use"))
                })
            };
            let bit = |tok: &str| -> Result<bool> {
                match tok {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    _ => Err(Error::parse(FMT, line, 1, format!("`{tok}` is not a bit"))),
                }
            };
            let r = match t[1] {
                "C" => const_ref(bit(t[5])?),
                "S" => {
                    let depth = num(line, t[6])?;
                    if depth >= width_in {
                        return Err(Error::parse(FMT, line, 1, "speculative depth out of range"));
                    }
                    bsd.push(BsdNode::Spec {
                        guess: bit(t[5])?,
                        depth: depth as u32,
                    })
                }
                "D" => {
                    let var = num(line, t[2])?;
                    if var >= width_in {
                        return Err(Error::parse(
                            FMT,
                            line,
                            1,
                            format!("variable {var} out of range"),
                        ));
                    }
                    let (hi, lo) = (child(t[3])?, child(t[4])?);
                    if hi == lo && !bsd.is_determined(hi) {
                        return Err(Error::parse(
                            FMT,
                            line,
                            1,
                            "speculative subtree shared by two parents",
                        ));
                    }
                    for c in [hi, lo] {
                        if !bsd.is_determined(c) && bsd.parent[c as usize] != Parent::None {
                            return Err(Error::parse(
                                FMT,
                                line,
                                1,
                                "speculative subtree shared by two parents",
                            ));
                        }
                    }
                    bsd.make(var as u32, hi, lo)
                }
                k => {
                    return Err(Error::parse(
                        FMT,
                        line,
                        1,
                        format!("unknown node kind `{k}`"),
                    ))
                }
            };
            map.push(r);
        }
        let (rl, root_toks) = field("roots")?;
        if root_toks.len() != width_out {
            return Err(Error::parse(
                FMT,
                *rl,
                1,
                format!("expected {width_out} roots"),
            ));
        }
        for (j, tok) in root_toks.iter().enumerate() {
            let idx = num(*rl, tok)?;
            let r = *map
                .get(idx)
                .ok_or_else(|| Error::parse(FMT, *rl, 1, format!("root {idx} undefined")))?;
            if !bsd.is_determined(r) {
                if bsd.parent[r as usize] != Parent::None {
                    return Err(Error::parse(
                        FMT,
                        *rl,
                        1,
                        "speculative subtree shared by two parents",
                    ));
                }
                bsd.parent[r as usize] = Parent::Root(j as u32);
            }
            bsd.roots.push(r);
        }
        bsd.check_invariants()
            .map_err(|e| Error::parse(FMT, *rl, 1, e.to_string()))?;
        Ok(bsd)
    }
}

/// Leaf substituted during constant-leaf recovery.
#[derive(Clone, Copy, Debug)]
pub(crate) enum LeafKind {
    Const(bool),
    Spec(bool),
}

fn join(v: &[usize]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

impl BoolFunction for Bsd {
    fn width_in(&self) -> usize {
        self.width_in
    }
    fn width_out(&self) -> usize {
        self.width_out
    }
    fn eval_bits(&self, input: u64) -> u64 {
        Bsd::eval_bits(self, input & mask(self.width_in))
    }
}

/// Fraction of matching output bits, per bit and averaged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub per_bit: Vec<f64>,
    pub aggregate: f64,
    pub samples: usize,
}

pub fn accuracy_on<F: BoolFunction + ?Sized>(f: &F, samples: &[IoSample]) -> Result<Accuracy> {
    if samples.is_empty() {
        return Err(Error::contract("accuracy needs at least one sample"));
    }
    let mut hits = vec![0usize; f.width_out()];
    for s in samples {
        if s.input.width() != f.width_in() || s.output.width() != f.width_out() {
            return Err(Error::contract("sample widths do not match the design"));
        }
        let miss = f.eval_bits(s.input.as_u64()) ^ s.output.as_u64();
        for (j, h) in hits.iter_mut().enumerate() {
            *h += (miss >> j & 1 == 0) as usize;
        }
    }
    Ok(accuracy_from_hits(&hits, samples.len()))
}

pub(crate) fn accuracy_from_hits(hits: &[usize], n: usize) -> Accuracy {
    let per_bit: Vec<f64> = hits.iter().map(|&h| h as f64 / n as f64).collect();
    let total: usize = hits.iter().sum();
    Accuracy {
        aggregate: total as f64 / (n * hits.len()) as f64,
        per_bit,
        samples: n,
    }
}

/// Accuracy over the complete truth table.
pub fn exact_accuracy<F: BoolFunction + ?Sized, G: BoolFunction + ?Sized>(
    design: &F,
    oracle: &G,
    threshold: usize,
) -> Result<Accuracy> {
    check_enumerable(oracle.width_in(), threshold)?;
    if design.width_in() != oracle.width_in() || design.width_out() != oracle.width_out() {
        return Err(Error::contract("design and oracle widths differ"));
    }
    use rayon::prelude::*;
    let w = design.width_out();
    let hits = (0..1u64 << oracle.width_in())
        .into_par_iter()
        .fold(
            || vec![0usize; w],
            |mut acc, x| {
                let miss = design.eval_bits(x) ^ oracle.eval_bits(x);
                for (j, h) in acc.iter_mut().enumerate() {
                    *h += (miss >> j & 1 == 0) as usize;
                }
                acc
            },
        )
        .reduce(
            || vec![0usize; w],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    Ok(accuracy_from_hits(&hits, 1 << oracle.width_in()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::make_builtin;
    use crate::oracle::{enumerate_truth_table, Oracle, DEFAULT_EXHAUSTIVE_THRESHOLD};

    fn natural(n: usize) -> Vec<usize> {
        (0..n).collect()
    }

    /// Expands every speculative leaf down to full depth, using exact values at the bottom.
    fn expand_fully(bsd: &mut Bsd, oracle: &Oracle) {
        loop {
            let leaves = bsd.spec_leaves();
            if leaves.is_empty() {
                break;
            }
            for leaf in leaves {
                // find an input reaching the leaf and which output it belongs to
                let (j, x) = (0..bsd.width_out())
                    .flat_map(|j| (0..1u64 << bsd.width_in()).map(move |x| (j, x)))
                    .find(|&(j, x)| bsd.leaf_of(j, x) == leaf)
                    .unwrap();
                let var = bsd.split_var(leaf).unwrap();
                let hi = oracle.eval_bits(x | 1 << var) >> j & 1 == 1;
                let lo = oracle.eval_bits(x & !(1 << var)) >> j & 1 == 1;
                bsd.expand(leaf, (hi, lo)).unwrap();
                bsd.check_invariants().unwrap();
            }
        }
    }

    #[test]
    fn new_diagrams() {
        let d = Bsd::new(1, 1, natural(1), GuessPolicy::ConstantZero).unwrap();
        assert_eq!(d.eval_bits(0), 0);
        assert_eq!(d.eval_bits(1), 0);

        let a = Bsd::new(4, 2, natural(4), GuessPolicy::RandomSeeded { seed: 7 }).unwrap();
        let b = Bsd::new(4, 2, natural(4), GuessPolicy::RandomSeeded { seed: 7 }).unwrap();
        assert_eq!(a.dump(), b.dump());

        let c = Bsd::new(2, 1, natural(2), GuessPolicy::RandomSeeded { seed: 3 }).unwrap();
        let s = c.stats();
        assert_eq!((s.node_count, s.spec_leaf_count), (1, 1));

        assert!(Bsd::new(3, 1, vec![0, 0, 1], GuessPolicy::ConstantZero).is_err());
        assert!(Bsd::new(3, 1, vec![0, 1], GuessPolicy::ConstantZero).is_err());
        assert!(Bsd::new(3, 1, natural(3), GuessPolicy::ExactCofactorMajority).is_err());
    }

    #[test]
    fn eval_examples() {
        let d = Bsd::from_guesses(3, natural(3), &[true]).unwrap();
        assert!((0..8).all(|x| d.eval_bits(x) == 1));
        assert!(d.eval(&BitVec::zeros(2).unwrap()).is_err());

        let mut f = Bsd::from_guesses(1, natural(1), &[false]).unwrap();
        f.expand(f.roots()[0], (true, false)).unwrap();
        assert_eq!(f.eval_bits(1), 1);
        assert_eq!(f.eval_bits(0), 0);
        assert_eq!(f.stats().spec_leaf_count, 0);
    }

    #[test]
    fn expanded_majority_matches_brute_force() {
        let maj = make_builtin("majority", &[3]).unwrap();
        let mut d = Bsd::from_guesses(3, natural(3), &[false]).unwrap();
        expand_fully(&mut d, &maj);
        for x in 0..8u64 {
            assert_eq!(d.eval_bits(x), (x.count_ones() >= 2) as u64);
        }
    }

    #[test]
    fn expand_rejects_non_spec() {
        let mut d = Bsd::from_guesses(2, natural(2), &[false]).unwrap();
        let root = d.roots()[0];
        d.expand(root, (false, true)).unwrap();
        assert!(d.expand(root, (false, true)).is_err());
        assert!(d.expand(FALSE, (false, true)).is_err());
        assert!(d.expand(999, (false, true)).is_err());
    }

    #[test]
    fn expansion_is_local() {
        let mut d = Bsd::new(4, 3, natural(4), GuessPolicy::RandomSeeded { seed: 11 }).unwrap();
        let mut rng = stream_rng(5, 0);
        for _ in 0..20 {
            let leaves = d.spec_leaves();
            if leaves.is_empty() {
                break;
            }
            let leaf = leaves[rng.gen_range(0..leaves.len())];
            let before: Vec<u64> = (0..16).map(|x| d.eval_bits(x)).collect();
            let reaches: Vec<Vec<bool>> = (0..3)
                .map(|j| (0..16).map(|x| d.leaf_of(j, x) == leaf).collect())
                .collect();
            d.expand(leaf, (rng.gen(), rng.gen())).unwrap();
            d.check_invariants().unwrap();
            for x in 0..16u64 {
                for (j, r) in reaches.iter().enumerate() {
                    if !r[x as usize] {
                        assert_eq!(d.eval_bits(x) >> j & 1, before[x as usize] >> j & 1);
                    }
                }
            }
        }
    }

    #[test]
    fn breadth_first_expansion_reproduces_adder2() {
        let adder = make_builtin("adder", &[2]).unwrap();
        let mut d = Bsd::new(4, 3, natural(4), GuessPolicy::ConstantZero).unwrap();
        expand_fully(&mut d, &adder);
        assert_eq!(d.stats().spec_leaf_count, 0);
        for s in enumerate_truth_table(&adder).unwrap() {
            assert_eq!(d.eval(&s.input).unwrap(), s.output);
        }
    }

    #[test]
    fn reduce_examples() {
        // Decision(x0, 1, 1) collapses to the constant.
        let mut d = Bsd::from_guesses(1, natural(1), &[false]).unwrap();
        d.expand(d.roots()[0], (true, true)).unwrap();
        let r = d.reduce();
        assert_eq!(r.roots(), &[TRUE]);
        assert_eq!(r.stats().decision_count, 0);

        let maj = make_builtin("majority", &[3]).unwrap();
        let mut m = Bsd::from_guesses(3, natural(3), &[false]).unwrap();
        expand_fully(&mut m, &maj);
        let r = m.reduce();
        assert_eq!(r.stats().decision_count, 4);
        assert_eq!(r.reduce().dump(), r.dump());
        for x in 0..8 {
            assert_eq!(r.eval_bits(x), m.eval_bits(x));
        }
        r.check_invariants().unwrap();
    }

    #[test]
    fn reduce_keeps_speculative_leaves_apart() {
        let mut d = Bsd::from_guesses(3, natural(3), &[false, false]).unwrap();
        let roots = d.roots().to_vec();
        d.expand(roots[0], (true, true)).unwrap();
        let r = d.reduce();
        // two fresh children with equal guesses plus the untouched root leaf
        assert_eq!(r.stats().spec_leaf_count, 3);
        assert_eq!(r.stats().decision_count, 1);
    }

    #[test]
    fn hash_consing_after_full_expansion() {
        let id = make_builtin("identity", &[3]).unwrap();
        let mut d = Bsd::from_guesses(3, natural(3), &[false; 3]).unwrap();
        expand_fully(&mut d, &id);
        // quasi-reduced identity: output 2's bottom layer is shared
        d.check_invariants().unwrap();
        let r = d.reduce();
        assert_eq!(r.stats().decision_count, 3);
        r.check_invariants().unwrap();
    }

    #[test]
    fn accuracy_examples() {
        let maj = make_builtin("majority", &[3]).unwrap();
        let zero = Bsd::from_guesses(3, natural(3), &[false]).unwrap();
        let all: Vec<_> = enumerate_truth_table(&maj).unwrap().collect();
        assert_eq!(accuracy_on(&zero, &all).unwrap().aggregate, 0.5);
        assert_eq!(
            exact_accuracy(&zero, &maj, DEFAULT_EXHAUSTIVE_THRESHOLD)
                .unwrap()
                .aggregate,
            0.5
        );

        let c0 = make_builtin("const", &[3, 0]).unwrap();
        assert_eq!(exact_accuracy(&zero, &c0, 24).unwrap().aggregate, 1.0);

        let mut exact = zero.clone();
        expand_fully(&mut exact, &maj);
        let some = crate::oracle::sample_io(&maj, 4, 20).unwrap();
        assert_eq!(accuracy_on(&exact, &some).unwrap().aggregate, 1.0);
        assert!(accuracy_on(&exact, &[]).is_err());
        let wide = make_builtin("identity", &[25]).unwrap();
        let d = Bsd::from_guesses(25, natural(25), &[false; 25]).unwrap();
        assert!(matches!(
            exact_accuracy(&d, &wide, 24),
            Err(Error::EnumerationRefused { .. })
        ));
    }

    #[test]
    fn accuracy_per_bit() {
        let a = make_builtin("adder", &[1]).unwrap();
        let d = Bsd::from_guesses(2, natural(2), &[false, false]).unwrap();
        let acc = exact_accuracy(&d, &a, 24).unwrap();
        assert_eq!(acc.per_bit, vec![0.5, 0.75]);
        assert_eq!(acc.aggregate, 0.625);
    }

    #[test]
    fn lowering() {
        let mut f = Bsd::from_guesses(1, natural(1), &[false]).unwrap();
        f.expand(f.roots()[0], (true, false)).unwrap();
        let n = f.to_netlist().unwrap();
        assert_eq!(n.metrics().gate_count, 1);
        assert_eq!(n.simulate_bits(1), 1);

        let c = Bsd::from_guesses(4, natural(4), &[true, false])
            .unwrap()
            .commit_speculation();
        let n = c.to_netlist().unwrap();
        assert_eq!(n.metrics().gate_count, 0);
        assert_eq!(n.simulate_bits(5), 0b01);

        let spec = Bsd::from_guesses(2, natural(2), &[true]).unwrap();
        assert!(matches!(
            spec.to_netlist(),
            Err(Error::LoweringRefused { spec_leaves: 1 })
        ));

        let adder = make_builtin("adder", &[2]).unwrap();
        let mut d = Bsd::from_guesses(4, natural(4), &[false; 3]).unwrap();
        expand_fully(&mut d, &adder);
        let r = d.reduce();
        let n = r.to_netlist().unwrap();
        assert_eq!(n.metrics().gate_count, r.stats().decision_count);
        for x in 0..16 {
            assert_eq!(n.simulate_bits(x), adder.eval_bits(x));
        }
    }

    #[test]
    fn recovery_replaces_only_one_path() {
        let id = make_builtin("identity", &[3]).unwrap();
        let mut d = Bsd::from_guesses(3, natural(3), &[false; 3]).unwrap();
        expand_fully(&mut d, &id);
        let before: Vec<u64> = (0..8).map(|x| d.eval_bits(x)).collect();
        // flip output 2 on input 0b101 only
        d.replace_leaf_on_path(2, 0b101, LeafKind::Const(false));
        d.check_invariants().unwrap();
        for x in 0..8u64 {
            let expect = if x == 0b101 {
                before[x as usize] & !0b100
            } else {
                before[x as usize]
            };
            assert_eq!(d.eval_bits(x), expect);
        }
        // speculative replacement in the middle of a shared region
        let committed = d.reduce();
        let mut e = committed.clone();
        let leaf = e.replace_leaf_on_path(0, 0b011, LeafKind::Spec(false));
        assert!(matches!(e.node(leaf), BsdNode::Spec { depth: 1, .. }));
        e.check_invariants().unwrap();
        for x in 0..8u64 {
            let expect = committed.eval_bits(x) & if x & 1 == 1 { !1 } else { !0 };
            assert_eq!(e.eval_bits(x), expect);
        }
    }

    #[test]
    fn dump_round_trip() {
        let mut d = Bsd::new(
            4,
            3,
            vec![3, 1, 0, 2],
            GuessPolicy::RandomSeeded { seed: 2 },
        )
        .unwrap();
        let roots = d.roots().to_vec();
        d.expand(roots[1], (true, false)).unwrap();
        let s = d.spec_leaves()[1];
        d.expand(s, (true, true)).unwrap();
        let text = d.dump();
        let back = Bsd::from_dump(&text).unwrap();
        assert_eq!(back.dump(), text);
        for x in 0..16 {
            assert_eq!(back.eval_bits(x), d.eval_bits(x));
        }
    }

    #[test]
    fn dump_golden() {
        let mut d = Bsd::from_guesses(2, vec![0, 1], &[false]).unwrap();
        d.expand(d.roots()[0], (true, false)).unwrap();
        let expected = "bsd 1\ninputs 2\noutputs 1\norder 0 1\n0 S - - - 1 1\n1 S - - - 0 1\n2 D 0 0 1 - -\nroots 2\n";
        assert_eq!(d.dump(), expected);
    }

    #[test]
    fn dump_parse_errors() {
        assert!(Bsd::from_dump("bsd 2\n").is_err());
        let missing_child = "bsd 1\ninputs 1\noutputs 1\norder 0\n0 D 0 5 6 - -\nroots 0\n";
        match Bsd::from_dump(missing_child) {
            Err(Error::Parse { pos, .. }) => assert_eq!(pos.line, 5),
            other => panic!("{other:?}"),
        }
        let shared =
            "bsd 1\ninputs 2\noutputs 1\norder 0 1\n0 S - - - 1 1\n1 D 0 0 0 - -\nroots 1\n";
        assert!(Bsd::from_dump(shared).is_err());
        let bad_order = "bsd 1\ninputs 2\noutputs 1\norder 0 1\n0 C - - - 1 -\n1 C - - - 0 -\n2 D 1 0 1 - -\n3 D 0 2 2 - -\nroots 3\n";
        assert!(Bsd::from_dump(bad_order).is_ok());
        let wrong = "bsd 1\ninputs 2\noutputs 1\norder 0 1\n0 C - - - 1 -\n1 C - - - 0 -\n2 D 0 0 1 - -\n3 D 1 2 2 - -\nroots 3\n";
        assert!(Bsd::from_dump(wrong).is_err());
    }
}
