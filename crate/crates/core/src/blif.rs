//! BLIF subset: `.model`, `.inputs`, `.outputs`, `.names` with single-output
//! covers, and `.end`. Comments start with `#`; a trailing `\` continues a line.
//!
//! A cover whose rows all end in `1` lists the on-set; rows ending in `0`
//! list the off-set; a `.names` without rows drives constant 0.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::netlist::{Gate, Netlist};
use crate::oracle::Oracle;

const FMT: &str = "BLIF";
const UNSUPPORTED: &[&str] = &[
    ".latch",
    ".subckt",
    ".gate",
    ".mlatch",
    ".clock",
    ".search",
    ".exdc",
    ".start_kiss",
    ".fsm",
    ".cname",
];

/// Emits one `.names` block per gate plus a buffer per output.
///
/// Inputs are `x<i>`, outputs `y<j>`, internal nets `n<gate index>`.
pub fn emit_blif(netlist: &Netlist, model: &str) -> String {
    let net = |id: u32| match netlist.gates()[id as usize] {
        Gate::Input(b) => format!("x{b}"),
        _ => format!("n{id}"),
    };
    let mut s = String::new();
    let _ = writeln!(s, ".model {model}");
    let inputs: Vec<String> = (0..netlist.width_in()).map(|i| format!("x{i}")).collect();
    let outputs: Vec<String> = (0..netlist.width_out()).map(|j| format!("y{j}")).collect();
    let _ = writeln!(s, ".inputs {}", inputs.join(" "));
    let _ = writeln!(s, ".outputs {}", outputs.join(" "));
    for (i, g) in netlist.gates().iter().enumerate() {
        match *g {
            Gate::Input(_) => {}
            Gate::Const(false) => {
                let _ = writeln!(s, ".names n{i}");
            }
            Gate::Const(true) => {
                let _ = writeln!(s, ".names n{i}\n1");
            }
            Gate::Not(a) => {
                let _ = writeln!(s, ".names {} n{i}\n0 1", net(a));
            }
            Gate::Mux2 { sel, d1, d0 } => {
                let _ = writeln!(
                    s,
                    ".names {} {} {} n{i}\n11- 1\n0-1 1",
                    net(sel),
                    net(d1),
                    net(d0)
                );
            }
        }
    }
    for (j, &o) in netlist.outputs().iter().enumerate() {
        let _ = writeln!(s, ".names {} y{j}\n1 1", net(o));
    }
    s.push_str(".end\n");
    s
}

#[derive(Debug)]
struct Names {
    fanin: Vec<String>,
    output: String,
    rows: Vec<(u64, u64)>,
    onset: bool,
    line: usize,
}

#[derive(Debug)]
struct Node {
    fanin: Vec<usize>,
    rows: Vec<(u64, u64)>,
    onset: bool,
}

/// Logical lines with comments stripped and continuations joined, tagged with
/// the physical line they start on.
fn logical_lines(text: &str) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    let mut pending: Option<(usize, String)> = None;
    for (i, raw) in text.lines().enumerate() {
        let body = raw.split('#').next().unwrap_or("");
        let (body, cont) = match body.trim_end().strip_suffix('\\') {
            Some(b) => (b.to_string(), true),
            None => (body.to_string(), false),
        };
        let entry = pending.get_or_insert_with(|| (i + 1, String::new()));
        entry.1.push(' ');
        entry.1.push_str(&body);
        if !cont {
            let (line, s) = pending.take().unwrap();
            if !s.trim().is_empty() {
                out.push((line, s.trim().to_string()));
            }
        }
    }
    if let Some((line, s)) = pending {
        if !s.trim().is_empty() {
            out.push((line, s.trim().to_string()));
        }
    }
    out
}

fn parse_row(line: usize, row: &str, k: usize) -> Result<(u64, u64, bool)> {
    let toks: Vec<&str> = row.split_whitespace().collect();
    let (pattern, out) = match (k, toks.as_slice()) {
        (0, [o]) => ("", *o),
        (_, [p, o]) if k > 0 => (*p, *o),
        _ => {
            return Err(Error::parse(
                FMT,
                line,
                1,
                format!("cover row `{row}` does not match {k} inputs"),
            ))
        }
    };
    if pattern.len() != k {
        return Err(Error::parse(
            FMT,
            line,
            1,
            format!("cover row has {} columns, expected {k}", pattern.len()),
        ));
    }
    let (mut care, mut val) = (0u64, 0u64);
    for (i, c) in pattern.chars().enumerate() {
        match c {
            '0' => care |= 1 << i,
            '1' => {
                care |= 1 << i;
                val |= 1 << i;
            }
            '-' => {}
            _ => {
                return Err(Error::parse(
                    FMT,
                    line,
                    i + 1,
                    format!("invalid cover character `{c}`"),
                ))
            }
        }
    }
    let onset = match out {
        "1" => true,
        "0" => false,
        _ => {
            return Err(Error::parse(
                FMT,
                line,
                pattern.len() + 2,
                format!("invalid output value `{out}`"),
            ))
        }
    };
    Ok((care, val, onset))
}

/// Parses a combinational BLIF model into an oracle following cover semantics.
pub fn parse_blif(text: &str) -> Result<Oracle> {
    let mut model = String::from("blif");
    let mut inputs: Vec<String> = Vec::new();
    let mut outputs: Vec<String> = Vec::new();
    let mut blocks: Vec<Names> = Vec::new();
    let mut ended = false;

    for (line, l) in logical_lines(text) {
        if ended {
            return Err(Error::parse(FMT, line, 1, "content after `.end`"));
        }
        let mut toks = l.split_whitespace();
        let head = toks.next().unwrap();
        if head.starts_with('.') {
            match head {
                ".model" => model = toks.next().unwrap_or("blif").to_string(),
                ".inputs" => inputs.extend(toks.map(str::to_string)),
                ".outputs" => outputs.extend(toks.map(str::to_string)),
                ".names" => {
                    let mut sig: Vec<String> = toks.map(str::to_string).collect();
                    let Some(output) = sig.pop() else {
                        return Err(Error::parse(
                            FMT,
                            line,
                            1,
                            "`.names` needs an output signal",
                        ));
                    };
                    if sig.len() > 64 {
                        return Err(Error::parse(
                            FMT,
                            line,
                            1,
                            "`.names` with more than 64 inputs",
                        ));
                    }
                    blocks.push(Names {
                        fanin: sig,
                        output,
                        rows: Vec::new(),
                        onset: true,
                        line,
                    });
                }
                ".end" => ended = true,
                d if UNSUPPORTED.contains(&d) => {
                    return Err(Error::Unsupported {
                        format: FMT,
                        construct: d.to_string(),
                        line,
                    })
                }
                d => {
                    return Err(Error::parse(
                        FMT,
                        line,
                        1,
                        format!("unknown directive `{d}`"),
                    ))
                }
            }
        } else {
            let Some(block) = blocks.last_mut() else {
                return Err(Error::parse(FMT, line, 1, "cover row outside `.names`"));
            };
            let (care, val, onset) = parse_row(line, &l, block.fanin.len())?;
            if !block.rows.is_empty() && onset != block.onset {
                return Err(Error::parse(
                    FMT,
                    line,
                    1,
                    "cover mixes on-set and off-set rows",
                ));
            }
            block.onset = onset;
            block.rows.push((care, val));
        }
    }

    if inputs.is_empty() || inputs.len() > 64 {
        return Err(Error::parse(
            FMT,
            1,
            1,
            format!("model needs 1..=64 inputs, found {}", inputs.len()),
        ));
    }
    if outputs.is_empty() || outputs.len() > 64 {
        return Err(Error::parse(
            FMT,
            1,
            1,
            format!("model needs 1..=64 outputs, found {}", outputs.len()),
        ));
    }

    // signal ids: inputs first, then one per .names block
    let mut ids: HashMap<String, usize> = HashMap::new();
    for (i, name) in inputs.iter().enumerate() {
        if ids.insert(name.clone(), i).is_some() {
            return Err(Error::parse(
                FMT,
                1,
                1,
                format!("input `{name}` declared twice"),
            ));
        }
    }
    for (b, block) in blocks.iter().enumerate() {
        if ids.insert(block.output.clone(), inputs.len() + b).is_some() {
            return Err(Error::parse(
                FMT,
                block.line,
                1,
                format!("signal `{}` driven twice", block.output),
            ));
        }
    }
    let mut nodes = Vec::with_capacity(blocks.len());
    for block in &blocks {
        let fanin = block
            .fanin
            .iter()
            .map(|s| {
                ids.get(s).copied().ok_or_else(|| {
                    Error::parse(FMT, block.line, 1, format!("signal `{s}` is never driven"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        nodes.push(Node {
            fanin,
            rows: block.rows.clone(),
            onset: block.onset || block.rows.is_empty(),
        });
    }
    let out_ids = outputs
        .iter()
        .map(|s| {
            ids.get(s)
                .copied()
                .ok_or_else(|| Error::parse(FMT, 1, 1, format!("output `{s}` is never driven")))
        })
        .collect::<Result<Vec<_>>>()?;

    // topological order over .names blocks, rejecting combinational loops
    let n_in = inputs.len();
    let mut order = Vec::with_capacity(nodes.len());
    let mut state = vec![0u8; nodes.len()];
    for start in 0..nodes.len() {
        if state[start] != 0 {
            continue;
        }
        let mut stack = vec![(start, 0usize)];
        state[start] = 1;
        while let Some(&mut (n, ref mut next)) = stack.last_mut() {
            if let Some(&f) = nodes[n].fanin.get(*next) {
                *next += 1;
                if f >= n_in {
                    let m = f - n_in;
                    match state[m] {
                        0 => {
                            state[m] = 1;
                            stack.push((m, 0));
                        }
                        1 => {
                            return Err(Error::parse(
                                FMT,
                                blocks[m].line,
                                1,
                                format!("combinational loop through `{}`", blocks[m].output),
                            ))
                        }
                        _ => {}
                    }
                }
            } else {
                state[n] = 2;
                order.push(n);
                stack.pop();
            }
        }
    }

    let nodes = Arc::new(nodes);
    let order = Arc::new(order);
    let out_ids = Arc::new(out_ids);
    Oracle::from_fn(model, n_in, outputs.len(), move |x| {
        let mut values = vec![false; n_in + nodes.len()];
        for (i, v) in values.iter_mut().enumerate().take(n_in) {
            *v = x >> i & 1 == 1;
        }
        for &n in order.iter() {
            let node = &nodes[n];
            let local = node
                .fanin
                .iter()
                .enumerate()
                .fold(0u64, |acc, (i, &f)| acc | (values[f] as u64) << i);
            let hit = node.rows.iter().any(|&(care, val)| local & care == val);
            values[n_in + n] = hit == node.onset;
        }
        out_ids
            .iter()
            .enumerate()
            .fold(0, |acc, (j, &o)| acc | (values[o] as u64) << j)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::NetlistBuilder;
    use crate::oracle::BoolFunction;

    #[test]
    fn constant_one_encoding() {
        let mut b = NetlistBuilder::new(1);
        let c = b.constant(true);
        let n = b.finish(vec![c]).unwrap();
        let text = emit_blif(&n, "one");
        assert!(text.contains(".names n0\n1\n"));
        let o = parse_blif(&text).unwrap();
        assert_eq!((o.eval_bits(0), o.eval_bits(1)), (1, 1));
    }

    #[test]
    fn and_cover() {
        let o =
            parse_blif(".model and\n.inputs a b\n.outputs y\n.names a b y\n11 1\n.end\n").unwrap();
        assert_eq!(
            (0..4).map(|x| o.eval_bits(x)).collect::<Vec<_>>(),
            vec![0, 0, 0, 1]
        );
    }

    #[test]
    fn offset_cover_and_continuations() {
        let text = "# nand as off-set\n.model nand\n.inputs a \\\n  b\n.outputs y\n.names a b y\n11 0\n.end\n";
        let o = parse_blif(text).unwrap();
        assert_eq!(
            (0..4).map(|x| o.eval_bits(x)).collect::<Vec<_>>(),
            vec![1, 1, 1, 0]
        );
    }

    #[test]
    fn blocks_in_any_order() {
        let text =
            ".model m\n.inputs a b\n.outputs y\n.names t y\n0 1\n.names a b t\n1- 1\n-1 1\n.end\n";
        let o = parse_blif(text).unwrap();
        assert_eq!(
            (0..4).map(|x| o.eval_bits(x)).collect::<Vec<_>>(),
            vec![1, 0, 0, 0]
        );
    }

    #[test]
    fn output_can_be_an_input() {
        let o = parse_blif(".model w\n.inputs a\n.outputs a\n.end\n").unwrap();
        assert_eq!(o.eval_bits(1), 1);
    }

    #[test]
    fn errors_are_positioned() {
        let bad_char = ".model m\n.inputs a b\n.outputs y\n.names a b y\n1x 1\n.end\n";
        match parse_blif(bad_char) {
            Err(Error::Parse { pos, .. }) => assert_eq!((pos.line, pos.col), (5, 2)),
            other => panic!("{other:?}"),
        }
        let width = ".model m\n.inputs a b\n.outputs y\n.names a b y\n111 1\n";
        assert!(matches!(parse_blif(width), Err(Error::Parse { .. })));
        let mixed = ".model m\n.inputs a b\n.outputs y\n.names a b y\n11 1\n00 0\n";
        assert!(matches!(parse_blif(mixed), Err(Error::Parse { .. })));
        let loop_ = ".model m\n.inputs a\n.outputs y\n.names y t\n1 1\n.names t y\n1 1\n";
        assert!(matches!(parse_blif(loop_), Err(Error::Parse { .. })));
        let undriven = ".model m\n.inputs a\n.outputs y\n.end\n";
        assert!(matches!(parse_blif(undriven), Err(Error::Parse { .. })));
        let unknown = ".model m\n.inputs a\n.outputs a\n.foo\n";
        assert!(matches!(parse_blif(unknown), Err(Error::Parse { .. })));
    }

    #[test]
    fn unsupported_constructs() {
        let latch = ".model m\n.inputs a\n.outputs y\n.latch a y re clk 0\n.end\n";
        match parse_blif(latch) {
            Err(Error::Unsupported {
                construct, line, ..
            }) => {
                assert_eq!(construct, ".latch");
                assert_eq!(line, 4);
            }
            other => panic!("{other:?}"),
        }
        let sub = ".model m\n.inputs a\n.outputs y\n.subckt foo x=a y=y\n.end\n";
        assert!(matches!(parse_blif(sub), Err(Error::Unsupported { .. })));
    }
}
