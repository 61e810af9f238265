use std::path::PathBuf;

use bsd_synth::blif::{emit_blif, parse_blif};
use bsd_synth::builtins::make_builtin;
use bsd_synth::pla::parse_pla;
use bsd_synth::verilog::emit_verilog_structural;
use bsd_synth::{synthesize_module, BoolFunction, Bsd, RepairConfig};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn golden(name: &str, actual: &str) {
    let path = fixture(name);
    if std::env::var_os("BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let want = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, want, "{name} drifted; rerun with BLESS=1 if intended");
}

fn majority3_netlist() -> bsd_synth::Netlist {
    let maj = make_builtin("majority", &[3]).unwrap();
    let (bsd, report) = synthesize_module(&maj, &RepairConfig::default()).unwrap();
    assert!(report.converged());
    bsd.to_netlist().unwrap().simplify()
}

#[test]
fn majority3_emissions_match_golden() {
    let net = majority3_netlist();
    golden("majority3.blif", &emit_blif(&net, "majority3"));
    golden("majority3.v", &emit_verilog_structural(&net, "majority3").unwrap());
}

#[test]
fn golden_blif_is_majority3() {
    let text = std::fs::read_to_string(fixture("majority3.blif")).unwrap();
    let parsed = parse_blif(&text).unwrap();
    let pla = parse_pla(&std::fs::read_to_string(fixture("majority3.pla")).unwrap()).unwrap();
    for x in 0..8u64 {
        assert_eq!(parsed.eval_bits(x), (x.count_ones() >= 2) as u64);
        assert_eq!(pla.eval_bits(x), parsed.eval_bits(x));
    }
}

#[test]
fn synthesizing_from_a_pla_file() {
    let pla = parse_pla(&std::fs::read_to_string(fixture("majority3.pla")).unwrap()).unwrap();
    let (bsd, report) = synthesize_module(&pla, &RepairConfig::default()).unwrap();
    assert!(report.converged());
    let net = bsd.to_netlist().unwrap();
    let back = parse_blif(&emit_blif(&net, "m")).unwrap();
    assert!((0..8).all(|x| back.eval_bits(x) == pla.eval_bits(x)));
}

#[test]
fn dump_round_trip_on_builtins() {
    for (name, p) in [("adder", 3), ("multiplier", 3), ("alu", 2), ("majority", 7), ("identity", 6)] {
        let o = make_builtin(name, &[p]).unwrap();
        let (bsd, _) = synthesize_module(&o, &RepairConfig::default()).unwrap();
        let text = bsd.dump();
        let back = Bsd::from_dump(&text).unwrap();
        assert_eq!(back.dump(), text, "{name}");
        assert!((0..1u64 << o.width_in()).all(|x| back.eval_bits(x) == o.eval_bits(x)), "{name}");
    }
}

#[test]
fn verilog_declares_every_net_once() {
    let net = majority3_netlist();
    let v = emit_verilog_structural(&net, "maj").unwrap();
    assert!(v.starts_with("module maj ("));
    assert!(v.trim_end().ends_with("endmodule"));
    let wires = v.lines().filter(|l| l.trim_start().starts_with("wire n")).count();
    assert_eq!(wires, net.gates().len());
    assert!(emit_verilog_structural(&net, "3bad").is_err());
}
