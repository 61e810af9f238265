//! Exhaustive and sampled equivalence checks on corrupted diagrams.
//!
//! cargo run --release --example statistical_verify

use bsd_synth::builtins::make_builtin;
use bsd_synth::repair::{RepairConfig, RepairSession};
use bsd_synth::verify::statistical_sample_count;
use bsd_synth::{verify, VerifyMode};

fn main() -> bsd_synth::Result<()> {
    println!("samples for 99% confidence of error < 0.1%: {}", statistical_sample_count(0.99, 0.001)?);

    let adder = make_builtin("adder", &[6])?;
    let mut session = RepairSession::new(&adder, RepairConfig::default())?;
    while !session.is_converged() {
        session.cycle()?;
    }
    let mut bsd = session.bsd().clone();
    for (k, leaf) in bsd.spec_leaves().into_iter().step_by(7).take(4).enumerate() {
        bsd.flip_guess(leaf)?;
        let exact = verify(&bsd, &adder, VerifyMode::Exhaustive)?;
        let mode = VerifyMode::Statistical { confidence: 0.99, max_error: 0.001, seed: k as u64 };
        let sampled = verify(&bsd, &adder, mode)?;
        let i = sampled.interval;
        println!(
            "{} flips: exact error {:.5}, sampled {:.5} with 95% interval [{:.5}, {:.5}] covers: {}",
            k + 1,
            exact.error_rate,
            sampled.error_rate,
            i.lower,
            i.upper,
            i.contains(exact.error_rate)
        );
    }
    Ok(())
}
