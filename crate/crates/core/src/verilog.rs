use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::netlist::{Gate, Netlist};

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$')
}

/// Structural Verilog: one continuous assignment per gate, nets named `n<index>`.
pub fn emit_verilog_structural(netlist: &Netlist, module_name: &str) -> Result<String> {
    if !is_identifier(module_name) {
        return Err(Error::contract(format!(
            "`{module_name}` is not a Verilog identifier"
        )));
    }
    let (wi, wo) = (netlist.width_in(), netlist.width_out());
    let mut s = String::new();
    let _ = writeln!(s, "module {module_name} (");
    let _ = writeln!(s, "    input  wire [{}:0] x,", wi - 1);
    let _ = writeln!(s, "    output wire [{}:0] y", wo - 1);
    let _ = writeln!(s, ");");
    for i in 0..netlist.gates().len() {
        let _ = writeln!(s, "    wire n{i};");
    }
    for (i, g) in netlist.gates().iter().enumerate() {
        let rhs = match *g {
            Gate::Input(b) => format!("x[{b}]"),
            Gate::Const(v) => format!("1'b{}", v as u8),
            Gate::Not(a) => format!("~n{a}"),
            Gate::Mux2 { sel, d1, d0 } => format!("n{sel} ? n{d1} : n{d0}"),
        };
        let _ = writeln!(s, "    assign n{i} = {rhs};");
    }
    for (j, &o) in netlist.outputs().iter().enumerate() {
        let _ = writeln!(s, "    assign y[{j}] = n{o};");
    }
    s.push_str("endmodule\n");
    Ok(s)
}
