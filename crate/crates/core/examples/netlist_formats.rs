//! Lowering to MUX2/NOT netlists and moving designs through BLIF, PLA, Verilog and dumps.
//!
//! cargo run --example netlist_formats

use bsd_synth::blif::{emit_blif, parse_blif};
use bsd_synth::builtins::make_builtin;
use bsd_synth::pla::parse_pla;
use bsd_synth::verilog::emit_verilog_structural;
use bsd_synth::{synthesize_module, BoolFunction, Bsd, RepairConfig};

const XOR3_PLA: &str = "\
.i 3
.o 1
100 1
010 1
001 1
111 1
.e
";

fn main() -> bsd_synth::Result<()> {
    let xor3 = parse_pla(XOR3_PLA)?;
    let (bsd, _) = synthesize_module(&xor3, &RepairConfig::default())?;
    let dump = bsd.dump();
    println!("{dump}");
    assert_eq!(Bsd::from_dump(&dump)?.dump(), dump);

    let net = bsd.to_netlist()?.simplify();
    println!("{}", emit_blif(&net, "xor3"));
    println!("{}", emit_verilog_structural(&net, "xor3")?);

    let mul = make_builtin("multiplier", &[3])?;
    let (bsd, _) = synthesize_module(&mul, &RepairConfig::default())?;
    let raw = bsd.to_netlist()?;
    let small = raw.simplify();
    println!("multiplier:3 lowers to {:?}, simplified {:?}", raw.metrics(), small.metrics());
    let back = parse_blif(&emit_blif(&small, "mul3"))?;
    let same = (0..64).all(|x| back.eval_bits(x) == mul.eval_bits(x));
    println!("BLIF round trip equals the oracle: {same}");
    Ok(())
}
