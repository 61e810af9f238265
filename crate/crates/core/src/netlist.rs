//! Gate-level netlist over the `{MUX2, NOT, CONST}` basis.

use std::collections::HashMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::bitvec::{mask, BitVec, MAX_WIDTH};
use crate::error::{Error, Result};
use crate::oracle::BoolFunction;

/// Index of the gate driving a net.
pub type NetId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    Input(u32),
    Const(bool),
    Not(NetId),
    /// `sel ? d1 : d0`
    Mux2 {
        sel: NetId,
        d1: NetId,
        d0: NetId,
    },
}

impl Gate {
    fn operands(&self) -> impl Iterator<Item = NetId> {
        let (a, b, c) = match *self {
            Gate::Input(_) | Gate::Const(_) => (None, None, None),
            Gate::Not(a) => (Some(a), None, None),
            Gate::Mux2 { sel, d1, d0 } => (Some(sel), Some(d1), Some(d0)),
        };
        a.into_iter().chain(b).chain(c)
    }

    fn is_logic(&self) -> bool {
        matches!(self, Gate::Not(_) | Gate::Mux2 { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    /// MUX2 and NOT gates; inputs and constants are free.
    pub gate_count: usize,
    /// Longest input-to-output path, counted in MUX2/NOT gates.
    pub depth: usize,
}

/// Topologically ordered, acyclic gate list. Net `i` is the output of gate `i`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "NetlistRepr", into = "NetlistRepr")]
pub struct Netlist {
    width_in: usize,
    gates: Vec<Gate>,
    outputs: Vec<NetId>,
    metrics: OnceLock<Metrics>,
}

#[derive(Serialize, Deserialize)]
struct NetlistRepr {
    width_in: usize,
    gates: Vec<Gate>,
    outputs: Vec<NetId>,
}

impl TryFrom<NetlistRepr> for Netlist {
    type Error = Error;
    fn try_from(r: NetlistRepr) -> Result<Self> {
        Netlist::new(r.width_in, r.gates, r.outputs)
    }
}

impl From<Netlist> for NetlistRepr {
    fn from(n: Netlist) -> Self {
        NetlistRepr {
            width_in: n.width_in,
            gates: n.gates,
            outputs: n.outputs,
        }
    }
}

impl PartialEq for Netlist {
    fn eq(&self, other: &Self) -> bool {
        self.width_in == other.width_in
            && self.gates == other.gates
            && self.outputs == other.outputs
    }
}

impl Netlist {
    /// Validates widths and that every operand refers to an earlier gate.
    pub fn new(width_in: usize, gates: Vec<Gate>, outputs: Vec<NetId>) -> Result<Self> {
        if width_in == 0 || width_in > MAX_WIDTH {
            return Err(Error::contract(format!(
                "netlist input width {width_in} outside 1..={MAX_WIDTH}"
            )));
        }
        if outputs.is_empty() || outputs.len() > MAX_WIDTH {
            return Err(Error::contract("netlist needs 1..=64 outputs"));
        }
        for (i, g) in gates.iter().enumerate() {
            if let Gate::Input(b) = g {
                if *b as usize >= width_in {
                    return Err(Error::contract(format!(
                        "gate {i} reads input {b} beyond width {width_in}"
                    )));
                }
            }
            if let Some(op) = g.operands().find(|&op| op as usize >= i) {
                return Err(Error::contract(format!(
                    "gate {i} uses net {op} before it is defined (cycle or bad order)"
                )));
            }
        }
        if let Some(o) = outputs.iter().find(|&&o| o as usize >= gates.len()) {
            return Err(Error::contract(format!("output net {o} is undriven")));
        }
        Ok(Netlist {
            width_in,
            gates,
            outputs,
            metrics: OnceLock::new(),
        })
    }

    pub fn width_in(&self) -> usize {
        self.width_in
    }

    pub fn width_out(&self) -> usize {
        self.outputs.len()
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn outputs(&self) -> &[NetId] {
        &self.outputs
    }

    pub fn simulate(&self, input: &BitVec) -> Result<BitVec> {
        if input.width() != self.width_in {
            return Err(Error::contract(format!(
                "netlist expects {} input bits, got {}",
                self.width_in,
                input.width()
            )));
        }
        Ok(BitVec::new_masked(
            self.width_out(),
            self.simulate_bits(input.as_u64()),
        ))
    }

    pub fn simulate_bits(&self, input: u64) -> u64 {
        let mut values = vec![false; self.gates.len()];
        for (i, g) in self.gates.iter().enumerate() {
            values[i] = match *g {
                Gate::Input(b) => input >> b & 1 == 1,
                Gate::Const(v) => v,
                Gate::Not(a) => !values[a as usize],
                Gate::Mux2 { sel, d1, d0 } => {
                    if values[sel as usize] {
                        values[d1 as usize]
                    } else {
                        values[d0 as usize]
                    }
                }
            };
        }
        self.outputs
            .iter()
            .enumerate()
            .fold(0, |acc, (j, &o)| acc | (values[o as usize] as u64) << j)
    }

    pub fn metrics(&self) -> Metrics {
        *self.metrics.get_or_init(|| {
            let mut level = vec![0usize; self.gates.len()];
            for (i, g) in self.gates.iter().enumerate() {
                if g.is_logic() {
                    level[i] = 1 + g.operands().map(|o| level[o as usize]).max().unwrap_or(0);
                }
            }
            Metrics {
                gate_count: self.gates.iter().filter(|g| g.is_logic()).count(),
                depth: self
                    .outputs
                    .iter()
                    .map(|&o| level[o as usize])
                    .max()
                    .unwrap_or(0),
            }
        })
    }

    /// Local peephole rewrites followed by dead-gate removal.
    ///
    /// `s ? 1 : 0` becomes `s`, `s ? 0 : 1` becomes `!s`, `s ? a : a` becomes
    /// `a`, muxes with a constant select are resolved, double negation
    /// cancels, and structurally equal gates are shared.
    pub fn simplify(&self) -> Netlist {
        let mut b = NetlistBuilder::simplifying(self.width_in);
        let mut map: Vec<NetId> = Vec::with_capacity(self.gates.len());
        for g in &self.gates {
            let id = match *g {
                Gate::Input(i) => b.input(i as usize),
                Gate::Const(v) => b.constant(v),
                Gate::Not(a) => b.not(map[a as usize]),
                Gate::Mux2 { sel, d1, d0 } => {
                    b.mux(map[sel as usize], map[d1 as usize], map[d0 as usize])
                }
            };
            map.push(id);
        }
        let outputs: Vec<NetId> = self.outputs.iter().map(|&o| map[o as usize]).collect();
        let rebuilt = b
            .finish(outputs)
            .expect("simplification preserves validity");
        rebuilt.without_dead_gates()
    }

    fn without_dead_gates(&self) -> Netlist {
        let mut live = vec![false; self.gates.len()];
        for &o in &self.outputs {
            live[o as usize] = true;
        }
        for i in (0..self.gates.len()).rev() {
            if live[i] {
                for op in self.gates[i].operands() {
                    live[op as usize] = true;
                }
            }
        }
        let mut remap = vec![u32::MAX; self.gates.len()];
        let mut gates = Vec::new();
        for (i, g) in self.gates.iter().enumerate() {
            if live[i] || matches!(g, Gate::Input(_)) {
                let r = |n: NetId| remap[n as usize];
                let ng = match *g {
                    Gate::Not(a) => Gate::Not(r(a)),
                    Gate::Mux2 { sel, d1, d0 } => Gate::Mux2 {
                        sel: r(sel),
                        d1: r(d1),
                        d0: r(d0),
                    },
                    other => other,
                };
                remap[i] = gates.len() as NetId;
                gates.push(ng);
            }
        }
        let outputs = self.outputs.iter().map(|&o| remap[o as usize]).collect();
        Netlist::new(self.width_in, gates, outputs).expect("dead-gate removal preserves validity")
    }
}

impl BoolFunction for Netlist {
    fn width_in(&self) -> usize {
        self.width_in
    }
    fn width_out(&self) -> usize {
        self.outputs.len()
    }
    fn eval_bits(&self, input: u64) -> u64 {
        self.simulate_bits(input & mask(self.width_in))
    }
}

/// Incremental netlist construction with structural sharing of identical gates.
#[derive(Debug)]
pub struct NetlistBuilder {
    width_in: usize,
    gates: Vec<Gate>,
    index: HashMap<Gate, NetId>,
    simplifying: bool,
}

impl NetlistBuilder {
    pub fn new(width_in: usize) -> Self {
        NetlistBuilder {
            width_in,
            gates: Vec::new(),
            index: HashMap::new(),
            simplifying: false,
        }
    }

    /// Builder that applies the [`Netlist::simplify`] rewrites as gates are added.
    pub fn simplifying(width_in: usize) -> Self {
        NetlistBuilder {
            simplifying: true,
            ..Self::new(width_in)
        }
    }

    fn add(&mut self, g: Gate) -> NetId {
        if let Some(&id) = self.index.get(&g) {
            return id;
        }
        let id = self.gates.len() as NetId;
        self.gates.push(g);
        self.index.insert(g, id);
        id
    }

    fn const_value(&self, n: NetId) -> Option<bool> {
        match self.gates[n as usize] {
            Gate::Const(v) => Some(v),
            _ => None,
        }
    }

    pub fn input(&mut self, bit: usize) -> NetId {
        self.add(Gate::Input(bit as u32))
    }

    pub fn constant(&mut self, value: bool) -> NetId {
        self.add(Gate::Const(value))
    }

    pub fn not(&mut self, a: NetId) -> NetId {
        if self.simplifying {
            if let Some(v) = self.const_value(a) {
                return self.constant(!v);
            }
            if let Gate::Not(inner) = self.gates[a as usize] {
                return inner;
            }
        }
        self.add(Gate::Not(a))
    }

    pub fn mux(&mut self, sel: NetId, d1: NetId, d0: NetId) -> NetId {
        if self.simplifying {
            if d1 == d0 {
                return d1;
            }
            match self.const_value(sel) {
                Some(true) => return d1,
                Some(false) => return d0,
                None => {}
            }
            match (self.const_value(d1), self.const_value(d0)) {
                (Some(true), Some(false)) => return sel,
                (Some(false), Some(true)) => return self.not(sel),
                _ => {}
            }
        }
        self.add(Gate::Mux2 { sel, d1, d0 })
    }

    pub fn finish(self, outputs: Vec<NetId>) -> Result<Netlist> {
        Netlist::new(self.width_in, self.gates, outputs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(n: usize) -> Netlist {
        let mut b = NetlistBuilder::new(n);
        let outs = (0..n).map(|i| b.input(i)).collect();
        b.finish(outs).unwrap()
    }

    #[test]
    fn identity_simulates_to_input() {
        let n = identity(4);
        for x in 0..16 {
            assert_eq!(
                n.simulate(&BitVec::from_u64(4, x).unwrap())
                    .unwrap()
                    .as_u64(),
                x
            );
        }
        assert!(n.simulate(&BitVec::zeros(3).unwrap()).is_err());
        assert_eq!(
            n.metrics(),
            Metrics {
                gate_count: 0,
                depth: 0
            }
        );
    }

    #[test]
    fn metrics_examples() {
        let mut b = NetlistBuilder::new(2);
        let c = b.constant(true);
        let n = b.finish(vec![c]).unwrap();
        assert_eq!(
            n.metrics(),
            Metrics {
                gate_count: 0,
                depth: 0
            }
        );

        let mut b = NetlistBuilder::new(2);
        let (s, a) = (b.input(0), b.input(1));
        let z = b.constant(false);
        let m = b.mux(s, a, z);
        let n = b.finish(vec![m]).unwrap();
        assert_eq!(
            n.metrics(),
            Metrics {
                gate_count: 1,
                depth: 1
            }
        );

        let mut b = NetlistBuilder::new(2);
        let (s, a) = (b.input(0), b.input(1));
        let na = b.not(a);
        let m = b.mux(s, na, a);
        let n2 = b.not(m);
        let n = b.finish(vec![n2, a]).unwrap();
        assert_eq!(
            n.metrics(),
            Metrics {
                gate_count: 3,
                depth: 3
            }
        );
    }

    #[test]
    fn rejects_cycles_and_undriven_outputs() {
        assert!(
            Netlist::new(1, vec![Gate::Input(0), Gate::Not(2), Gate::Not(1)], vec![2]).is_err()
        );
        assert!(Netlist::new(1, vec![Gate::Input(0)], vec![1]).is_err());
        assert!(Netlist::new(1, vec![Gate::Input(3)], vec![0]).is_err());
        assert!(Netlist::new(1, vec![Gate::Not(0)], vec![0]).is_err());
    }

    #[test]
    fn simplify_preserves_function() {
        let mut b = NetlistBuilder::new(3);
        let x: Vec<NetId> = (0..3).map(|i| b.input(i)).collect();
        let (one, zero) = (b.constant(true), b.constant(false));
        let wire = b.mux(x[0], one, zero);
        let inv = b.mux(x[1], zero, one);
        let same = b.mux(x[2], wire, wire);
        let dead = b.mux(x[2], inv, wire);
        let pick = b.mux(one, inv, dead);
        let nn = b.not(inv);
        let nnn = b.not(nn);
        let n = b.finish(vec![same, pick, nnn]).unwrap();
        let s = n.simplify();
        for v in 0..8 {
            assert_eq!(s.simulate_bits(v), n.simulate_bits(v));
        }
        assert!(s.metrics().gate_count < n.metrics().gate_count);
        assert_eq!(s.metrics().gate_count, 1);
    }
}
