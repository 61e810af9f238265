//! Decomposition search on an 8-bit adder with a persistent knowledge base.
//!
//! cargo run --release --example decompose_adder

use bsd_synth::builtins::make_builtin;
use bsd_synth::decomp::{search, KnowledgeBase, SearchConfig};

fn main() -> bsd_synth::Result<()> {
    let adder = make_builtin("adder", &[8])?;
    let dir = tempfile::tempdir()?;
    let kb_path = dir.path().join("kb.json");
    let config = SearchConfig::default();

    for run in ["cold", "warm"] {
        let mut kb = KnowledgeBase::load(&kb_path)?;
        let out = search(&adder, &config, &mut kb)?;
        kb.save(&kb_path)?;
        println!("{run}: {} synthesis calls, {} kb hits", out.synthesis_calls, out.kb_hits);
        if run == "cold" {
            for t in &out.trace {
                println!("  {:>2} cost {:>6} best {:>6}  {}", t.iteration, fmt(t.cost), fmt(t.best_cost), t.scheme);
            }
        }
        let v = out.verification.as_ref().expect("verified");
        println!("  best {} at cost {}, {} mismatches", out.best_scheme, fmt(out.best_cost), v.mismatches);
    }
    Ok(())
}

fn fmt(c: Option<f64>) -> String {
    c.map_or("inf".into(), |c| c.to_string())
}
