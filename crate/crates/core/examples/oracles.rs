//! Built-in oracles, projection onto sub-functions, and support estimation.
//!
//! cargo run --example oracles

use bsd_synth::builtins::{Builtin, NanoCpuState};
use bsd_synth::oracle::{estimate_supports, sample_io, support_driven_order};
use bsd_synth::BoolFunction;

fn main() -> bsd_synth::Result<()> {
    println!("built-ins with at most 12 inputs:");
    for b in Builtin::catalog(12) {
        println!("  {:<14} {:>2} -> {:>2} bits", b.to_string(), b.width_in(), b.width_out());
    }

    let adder = Builtin::Adder { width: 4 }.build()?;
    for s in sample_io(&adder, 1, 4)? {
        let x = s.input.as_u64();
        println!("{} + {} = {}", x & 15, x >> 4, s.output.as_u64());
    }

    // carry bit alone, reading only the top operand bits
    let carry = adder.project(&[4], Some(&[3, 7]))?;
    println!("carry(a3, b3) truth table: {:?}", (0..4).map(|x| carry.eval_bits(x)).collect::<Vec<_>>());

    let cpu = Builtin::NanoCpuStep.build()?;
    let state = NanoCpuState { r0: 3, r1: 5, pc: 0, instr: 0 };
    println!("nano-CPU {:?} -> {:?}", state, NanoCpuState::unpack(cpu.eval_bits(state.pack().as_u64())));

    let supports = estimate_supports(&cpu, 0, 4096);
    for (j, s) in supports.iter().enumerate() {
        println!("  output {j:>2} reads {} inputs: {:?}", s.len(), s);
    }
    println!("support-driven order: {:?}", support_driven_order(&cpu, 0, 4096));
    Ok(())
}
