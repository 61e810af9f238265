//! Synthesizes the 20-input nano-CPU step function and checks it on all 2^20 inputs.
//!
//! cargo run --release --example synth_nanocpu [support]
//!
//! Pass `support` to order variables by estimated sensitivity instead of input order.

use std::time::Instant;

use bsd_synth::builtins::make_builtin;
use bsd_synth::repair::OrderPolicy;
use bsd_synth::{synthesize_module, verify, RepairConfig, VerifyMode};

fn main() -> bsd_synth::Result<()> {
    let cpu = make_builtin("nanocpu_step", &[])?;
    let order = match std::env::args().nth(1).as_deref() {
        Some("support") => OrderPolicy::SupportDriven { samples: 4096 },
        _ => OrderPolicy::Natural,
    };
    let cfg = RepairConfig { order, ..RepairConfig::default() };
    let t = Instant::now();
    let (bsd, report) = synthesize_module(&cpu, &cfg)?;
    println!("{:?} in {:.1?}, {} cycles", report.status, t.elapsed(), report.cycles.len());
    println!("order {:?}", report.order);
    let net = bsd.to_netlist()?.simplify();
    let m = net.metrics();
    println!("{} decisions, {} gates, depth {}", report.final_stats.decision_count, m.gate_count, m.depth);
    let check = verify(&net, &cpu, VerifyMode::Exhaustive)?;
    println!("{} mismatches over {} inputs", check.mismatches, check.inputs_checked);
    Ok(())
}
