//! Oracle-guided synthesis of combinational logic.
//!
//! A golden [`Oracle`] is learned into a binary speculation diagram
//! ([`Bsd`]) by a sample/verify/repair loop that Shannon-expands wrongly
//! speculated leaves until the diagram matches the oracle. An outer search
//! over output-bit partitions synthesizes each module
//! separately and keeps the cheapest verified netlist.
//!
//! ```
//! use bsd_synth::{builtins::make_builtin, repair::{synthesize_module, RepairConfig}};
//!
//! let adder = make_builtin("adder", &[3]).unwrap();
//! let (bsd, report) = synthesize_module(&adder, &RepairConfig::default()).unwrap();
//! assert!(report.converged());
//! let netlist = bsd.to_netlist().unwrap();
//! assert_eq!(netlist.simulate_bits(0b101_011), 0b1000);
//! ```

pub mod bitvec;
pub mod blif;
pub mod bsd;
pub mod builtins;
pub mod cli;
pub mod decomp;
pub mod error;
pub mod netlist;
pub mod oracle;
pub mod pla;
pub mod repair;
pub mod verify;
pub mod verilog;

pub use bitvec::BitVec;
pub use bsd::{Bsd, GuessPolicy, NodeRef};
pub use error::{Error, Result};
pub use netlist::{Gate, Netlist};
pub use oracle::{BoolFunction, IoSample, Oracle};
pub use repair::{synthesize_module, ConvergenceReport, RepairConfig, Target};
pub use verify::{verify, VerificationReport, VerifyMode};
