//! The verify/repair loop one cycle at a time.
//!
//! cargo run --example repair_loop

use bsd_synth::builtins::make_builtin;
use bsd_synth::repair::{locate_fault, run_session, RepairConfig, RepairSession};
use bsd_synth::{BitVec, Bsd, IoSample};

fn main() -> bsd_synth::Result<()> {
    // a single speculative leaf guessing 0 is wrong wherever two inputs are set
    let bsd = Bsd::from_guesses(3, vec![0, 1, 2], &[false])?;
    let sample = IoSample { input: BitVec::from_u64(3, 0b110)?, output: BitVec::from_u64(1, 1)? };
    println!("faults for input 110: {:?}", locate_fault(&bsd, &sample)?);

    let alu = make_builtin("alu", &[4])?;
    let cfg = RepairConfig { seed: 11, batch_size: 128, ..RepairConfig::default() };
    let mut session = RepairSession::new(&alu, cfg)?;
    println!("cycle  samples  before  after   exact   live  spec  expanded  cex");
    while !session.is_converged() {
        let r = session.cycle()?;
        println!(
            "{:>5} {:>8} {:>7.4} {:>6.4} {:>7.4} {:>6} {:>5} {:>9} {:>4}",
            r.cycle,
            r.samples_seen,
            r.cache_accuracy_before,
            r.cache_accuracy,
            r.exact_accuracy.unwrap_or(f64::NAN),
            r.live_nodes,
            r.spec_leaf_count,
            r.expansions,
            r.counterexamples
        );
    }
    let (done, report) = run_session(&mut session)?;
    println!("{} decisions after reduction, monotone: {}", done.stats().decision_count, report.cache_accuracy_monotone());
    println!("{}", done.dump().lines().take(8).collect::<Vec<_>>().join("\n"));
    Ok(())
}
