//! Built-in reference circuits.
//!
//! Packing is LSB-first in the field order documented on each constructor.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bitvec::{mask, BitVec};
use crate::error::{Error, Result};
use crate::oracle::Oracle;

/// Operation codes of [`Builtin::Alu`], selected by the top three input bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum AluOp {
    Add = 0,
    Sub = 1,
    And = 2,
    Or = 3,
    Xor = 4,
    Nand = 5,
    /// Unsigned less-than, zero-extended to the result width.
    Slt = 6,
    /// `a << 1`, truncated.
    Shl1 = 7,
}

/// Declarative description of a built-in oracle.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Builtin {
    /// `value` packed over `width_out` bits, ignoring the inputs.
    Const {
        width_in: usize,
        value: u64,
        width_out: usize,
    },
    Identity {
        width: usize,
    },
    /// Inputs `a` (bits `0..n`), `b` (`n..2n`); outputs sum (`0..n`) then carry (`n`).
    Adder {
        width: usize,
    },
    /// Inputs `a`, `b`; output the `2n`-bit product.
    Multiplier {
        width: usize,
    },
    /// Inputs `a`, `b`, then a 3-bit [`AluOp`]; `n`-bit result.
    Alu {
        width: usize,
    },
    /// 1 iff more than half of the `n` (odd) inputs are set.
    Majority {
        width: usize,
    },
    /// One step of the 4-bit nano-CPU; see [`NanoCpuState`].
    NanoCpuStep,
}

impl Builtin {
    pub fn from_name(name: &str, params: &[u64]) -> Result<Self> {
        let bad = |reason: &str| Error::InvalidParams {
            name: name.to_string(),
            reason: reason.to_string(),
        };
        let width = |lo: u64, hi: u64| -> Result<usize> {
            match params {
                [n] if (lo..=hi).contains(n) => Ok(*n as usize),
                [_] => Err(bad(&format!("width must be in {lo}..={hi}"))),
                _ => Err(bad("expected exactly one width parameter")),
            }
        };
        let b = match name {
            "const" => {
                let (width_in, value, width_out) = match params {
                    [w] => (*w, 0, 1),
                    [w, v] => (*w, *v, 1),
                    [w, v, o] => (*w, *v, *o),
                    _ => return Err(bad("expected const:WIDTH_IN[:VALUE[:WIDTH_OUT]]")),
                };
                if !(1..=64).contains(&width_in) || !(1..=64).contains(&width_out) {
                    return Err(bad("widths must be in 1..=64"));
                }
                if value & !mask(width_out as usize) != 0 {
                    return Err(bad("value does not fit the output width"));
                }
                Builtin::Const {
                    width_in: width_in as usize,
                    value,
                    width_out: width_out as usize,
                }
            }
            "identity" | "id" => Builtin::Identity {
                width: width(1, 64)?,
            },
            "adder" | "add" => Builtin::Adder {
                width: width(1, 32)?,
            },
            "multiplier" | "mul" => Builtin::Multiplier {
                width: width(1, 32)?,
            },
            "alu" => Builtin::Alu {
                width: width(1, 30)?,
            },
            "majority" | "maj" => {
                let n = width(1, 63)?;
                if n % 2 == 0 {
                    return Err(bad("majority width must be odd"));
                }
                Builtin::Majority { width: n }
            }
            "nanocpu_step" | "nanocpu" => {
                if !params.is_empty() {
                    return Err(bad("nanocpu_step takes no parameters"));
                }
                Builtin::NanoCpuStep
            }
            _ => return Err(Error::UnknownOracle(name.to_string())),
        };
        Ok(b)
    }

    pub fn width_in(&self) -> usize {
        match *self {
            Builtin::Const { width_in, .. } => width_in,
            Builtin::Identity { width } | Builtin::Majority { width } => width,
            Builtin::Adder { width } | Builtin::Multiplier { width } => 2 * width,
            Builtin::Alu { width } => 2 * width + 3,
            Builtin::NanoCpuStep => NanoCpuState::WIDTH,
        }
    }

    pub fn width_out(&self) -> usize {
        match *self {
            Builtin::Const { width_out, .. } => width_out,
            Builtin::Identity { width } | Builtin::Alu { width } => width,
            Builtin::Adder { width } => width + 1,
            Builtin::Multiplier { width } => 2 * width,
            Builtin::Majority { .. } => 1,
            Builtin::NanoCpuStep => 12,
        }
    }

    pub fn build(&self) -> Result<Oracle> {
        let name = self.to_string();
        let (wi, wo) = (self.width_in(), self.width_out());
        match *self {
            Builtin::Const { value, .. } => Oracle::from_fn(name, wi, wo, move |_| value),
            Builtin::Identity { .. } => Oracle::from_fn(name, wi, wo, |x| x),
            Builtin::Adder { width } => {
                let m = mask(width);
                Oracle::from_fn(name, wi, wo, move |x| (x & m) + (x >> width & m))
            }
            Builtin::Multiplier { width } => {
                let m = mask(width);
                Oracle::from_fn(name, wi, wo, move |x| {
                    ((x & m) as u128 * (x >> width & m) as u128) as u64
                })
            }
            Builtin::Alu { width } => Oracle::from_fn(name, wi, wo, move |x| alu(width, x)),
            Builtin::Majority { width } => Oracle::from_fn(name, wi, wo, move |x| {
                (x.count_ones() as usize > width / 2) as u64
            }),
            Builtin::NanoCpuStep => {
                Oracle::from_fn(name, wi, wo, |x| NanoCpuState::unpack(x).step().pack_next())
            }
        }
    }

    /// Every built-in with at most `max_width_in` inputs, in a fixed order.
    pub fn catalog(max_width_in: usize) -> Vec<Builtin> {
        let mut all = vec![
            Builtin::Const {
                width_in: 4,
                value: 0,
                width_out: 1,
            },
            Builtin::Const {
                width_in: 8,
                value: 0b1010,
                width_out: 4,
            },
            Builtin::Identity { width: 4 },
            Builtin::Identity { width: 8 },
            Builtin::Identity { width: 16 },
        ];
        all.extend((1..=8).map(|width| Builtin::Adder { width }));
        all.extend((1..=4).map(|width| Builtin::Multiplier { width }));
        all.push(Builtin::Alu { width: 4 });
        all.extend((1..=15).step_by(2).map(|width| Builtin::Majority { width }));
        all.push(Builtin::NanoCpuStep);
        all.retain(|b| b.width_in() <= max_width_in);
        all
    }
}

fn alu(width: usize, x: u64) -> u64 {
    let m = mask(width);
    let a = x & m;
    let b = x >> width & m;
    let op = x >> (2 * width) & 0b111;
    let r = match op {
        0 => a.wrapping_add(b),
        1 => a.wrapping_sub(b),
        2 => a & b,
        3 => a | b,
        4 => a ^ b,
        5 => !(a & b),
        6 => (a < b) as u64,
        _ => a << 1,
    };
    r & m
}

/// Selector grammar: `name[:param[:param...]]`.
impl FromStr for Builtin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(':');
        let name = parts.next().unwrap_or_default();
        let params = parts
            .map(|p| {
                let p = p.trim();
                let parsed = match p.strip_prefix("0b") {
                    Some(bin) => u64::from_str_radix(bin, 2),
                    None => match p.strip_prefix("0x") {
                        Some(hex) => u64::from_str_radix(hex, 16),
                        None => p.parse(),
                    },
                };
                parsed.map_err(|_| Error::InvalidParams {
                    name: name.to_string(),
                    reason: format!("`{p}` is not an integer"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Builtin::from_name(name, &params)
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Builtin::Const {
                width_in,
                value,
                width_out,
            } => write!(f, "const:{width_in}:{value}:{width_out}"),
            Builtin::Identity { width } => write!(f, "identity:{width}"),
            Builtin::Adder { width } => write!(f, "adder:{width}"),
            Builtin::Multiplier { width } => write!(f, "multiplier:{width}"),
            Builtin::Alu { width } => write!(f, "alu:{width}"),
            Builtin::Majority { width } => write!(f, "majority:{width}"),
            Builtin::NanoCpuStep => f.write_str("nanocpu_step"),
        }
    }
}

pub fn make_builtin(name: &str, params: &[u64]) -> Result<Oracle> {
    Builtin::from_name(name, params)?.build()
}

/// Architectural state of the nano-CPU.
///
/// Packed as 20 bits: `r0` (bits 0..4), `r1` (4..8), `pc` (8..12), `instr` (12..20).
/// The instruction word is `[op:3 | rd:1 | rs:1 | imm:3]` from MSB to LSB.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct NanoCpuState {
    pub r0: u8,
    pub r1: u8,
    pub pc: u8,
    pub instr: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum NanoOp {
    Add = 0,
    Nand = 1,
    Addi = 2,
    Li = 3,
    Bz = 4,
    Jmp = 5,
    Mov = 6,
    Nop = 7,
}

impl NanoOp {
    fn from_bits(bits: u8) -> Self {
        [
            NanoOp::Add,
            NanoOp::Nand,
            NanoOp::Addi,
            NanoOp::Li,
            NanoOp::Bz,
            NanoOp::Jmp,
            NanoOp::Mov,
            NanoOp::Nop,
        ][(bits & 7) as usize]
    }
}

/// Encodes an instruction word; `rd`/`rs` are register numbers 0 or 1.
pub fn encode_instr(op: NanoOp, rd: u8, rs: u8, imm: u8) -> u8 {
    (op as u8) << 5 | (rd & 1) << 4 | (rs & 1) << 3 | (imm & 7)
}

impl NanoCpuState {
    pub const WIDTH: usize = 20;

    pub fn pack(&self) -> BitVec {
        BitVec::new_masked(Self::WIDTH, self.pack_bits())
    }

    fn pack_bits(&self) -> u64 {
        (self.r0 as u64 & 0xf)
            | (self.r1 as u64 & 0xf) << 4
            | (self.pc as u64 & 0xf) << 8
            | (self.instr as u64) << 12
    }

    pub fn unpack(bits: u64) -> Self {
        NanoCpuState {
            r0: (bits & 0xf) as u8,
            r1: (bits >> 4 & 0xf) as u8,
            pc: (bits >> 8 & 0xf) as u8,
            instr: (bits >> 12 & 0xff) as u8,
        }
    }

    pub fn op(&self) -> NanoOp {
        NanoOp::from_bits(self.instr >> 5)
    }

    /// Next state; `instr` is carried over unchanged.
    pub fn step(&self) -> NanoCpuState {
        let rd = self.instr >> 4 & 1;
        let rs = self.instr >> 3 & 1;
        let imm = self.instr & 7;
        let reg = |r: u8| if r == 0 { self.r0 } else { self.r1 };
        let mut next = *self;
        let mut write = |value: u8| {
            if rd == 0 {
                next.r0 = value & 0xf;
            } else {
                next.r1 = value & 0xf;
            }
        };
        let mut pc = self.pc.wrapping_add(1);
        match self.op() {
            NanoOp::Add => write(reg(rd).wrapping_add(reg(rs))),
            NanoOp::Nand => write(!(reg(rd) & reg(rs))),
            NanoOp::Addi => write(reg(rd).wrapping_add(imm)),
            NanoOp::Li => write(imm),
            NanoOp::Bz => {
                if reg(rd) == 0 {
                    // sign-extend the 3-bit offset
                    let offset = ((imm << 5) as i8 >> 5) as u8;
                    pc = self.pc.wrapping_add(offset);
                }
            }
            NanoOp::Jmp => pc = rs << 3 | imm,
            NanoOp::Mov => write(reg(rs)),
            NanoOp::Nop => {}
        }
        next.pc = pc & 0xf;
        next
    }

    /// The 12 output bits `(r0', r1', pc')`.
    pub fn pack_next(&self) -> u64 {
        self.pack_bits() & 0xfff
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::BoolFunction;

    fn eval(o: &Oracle, width: usize, x: u64) -> u64 {
        o.eval(&BitVec::from_u64(width, x).unwrap())
            .unwrap()
            .as_u64()
    }

    #[test]
    fn adder_examples() {
        let a = make_builtin("adder", &[4]).unwrap();
        assert_eq!(eval(&a, 8, 0b0011 | 0b0101 << 4), 0b0_1000);
        assert_eq!(eval(&a, 8, 0b1111 | 0b0001 << 4), 0b1_0000);
    }

    #[test]
    fn adder_matches_integers_exhaustively() {
        for n in 1..=8usize {
            let o = make_builtin("adder", &[n as u64]).unwrap();
            for a in 0..1u64 << n {
                for b in 0..1u64 << n {
                    let out = o.eval_bits(a | b << n);
                    assert_eq!(out & mask(n), (a + b) % (1 << n));
                    assert_eq!(out >> n, (a + b >= 1 << n) as u64);
                }
            }
        }
    }

    #[test]
    fn multiplier_example() {
        let m = make_builtin("multiplier", &[3]).unwrap();
        assert_eq!(eval(&m, 6, 0b110 | 0b101 << 3), 0b011110);
    }

    #[test]
    fn alu_ops() {
        let a = make_builtin("alu", &[4]).unwrap();
        let run = |op: AluOp, x: u64, y: u64| a.eval_bits(x | y << 4 | (op as u64) << 8);
        assert_eq!(run(AluOp::Slt, 2, 9), 1);
        assert_eq!(run(AluOp::Slt, 9, 2), 0);
        assert_eq!(run(AluOp::Sub, 2, 3), 0xf);
        assert_eq!(run(AluOp::Add, 9, 9), 2);
        assert_eq!(run(AluOp::Nand, 0xf, 0x3), 0xc);
        assert_eq!(run(AluOp::Shl1, 0b1001, 0), 0b0010);
        assert_eq!(run(AluOp::Xor, 0b1100, 0b1010), 0b0110);
    }

    #[test]
    fn majority_counts() {
        let m = make_builtin("majority", &[3]).unwrap();
        let ones: Vec<u64> = (0..8).map(|x| m.eval_bits(x)).collect();
        assert_eq!(ones, [0, 0, 0, 1, 0, 1, 1, 1]);
        assert!(make_builtin("majority", &[4]).is_err());
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(
            make_builtin("divider", &[4]),
            Err(Error::UnknownOracle(_))
        ));
        assert!(matches!(
            make_builtin("adder", &[0]),
            Err(Error::InvalidParams { .. })
        ));
        assert!(matches!(
            make_builtin("adder", &[]),
            Err(Error::InvalidParams { .. })
        ));
        assert!(matches!(
            make_builtin("const", &[2, 2]),
            Err(Error::InvalidParams { .. })
        ));
        assert!("adder:x".parse::<Builtin>().is_err());
    }

    #[test]
    fn selector_round_trip() {
        for b in Builtin::catalog(20) {
            assert_eq!(b.to_string().parse::<Builtin>().unwrap(), b);
        }
        assert_eq!(
            "const:4:0".parse::<Builtin>().unwrap(),
            Builtin::Const {
                width_in: 4,
                value: 0,
                width_out: 1
            }
        );
    }

    #[test]
    fn nanocpu_examples() {
        let cpu = make_builtin("nanocpu_step", &[]).unwrap();
        let s = NanoCpuState {
            r0: 3,
            r1: 5,
            pc: 2,
            instr: encode_instr(NanoOp::Add, 0, 1, 0),
        };
        let next = NanoCpuState::unpack(cpu.eval(&s.pack()).unwrap().as_u64());
        assert_eq!((next.r0, next.r1, next.pc), (8, 5, 3));

        let s = NanoCpuState {
            r0: 0,
            r1: 9,
            pc: 7,
            instr: encode_instr(NanoOp::Bz, 0, 0, 2),
        };
        assert_eq!(NanoCpuState::unpack(cpu.eval_bits(s.pack().as_u64())).pc, 9);

        // backward branch wraps, not-taken branch falls through
        let s = NanoCpuState {
            r0: 0,
            r1: 0,
            pc: 1,
            instr: encode_instr(NanoOp::Bz, 1, 0, 0b100),
        };
        assert_eq!(s.step().pc, 13);
        let s = NanoCpuState {
            r0: 0,
            r1: 2,
            pc: 1,
            instr: encode_instr(NanoOp::Bz, 1, 0, 0b100),
        };
        assert_eq!(s.step().pc, 2);

        let s = NanoCpuState {
            r0: 0,
            r1: 0,
            pc: 4,
            instr: encode_instr(NanoOp::Jmp, 0, 1, 0b010),
        };
        assert_eq!(s.step().pc, 10);
        let s = NanoCpuState {
            r0: 0xc,
            r1: 0xa,
            pc: 0,
            instr: encode_instr(NanoOp::Nand, 1, 0, 0),
        };
        assert_eq!(s.step().r1, 0x7);
        let s = NanoCpuState {
            r0: 15,
            r1: 0,
            pc: 15,
            instr: encode_instr(NanoOp::Addi, 0, 0, 3),
        };
        assert_eq!((s.step().r0, s.step().pc), (2, 0));
        let s = NanoCpuState {
            r0: 1,
            r1: 6,
            pc: 0,
            instr: encode_instr(NanoOp::Mov, 0, 1, 0),
        };
        assert_eq!(s.step().r0, 6);
        let s = NanoCpuState {
            r0: 1,
            r1: 6,
            pc: 0,
            instr: encode_instr(NanoOp::Li, 1, 0, 5),
        };
        assert_eq!(s.step().r1, 5);
    }

    #[test]
    fn nanocpu_state_packing_is_lossless() {
        for x in (0..1u64 << 20).step_by(977) {
            assert_eq!(NanoCpuState::unpack(x).pack().as_u64(), x);
        }
    }

    #[test]
    fn nanocpu_pc_progression_exhaustive() {
        let cpu = make_builtin("nanocpu_step", &[]).unwrap();
        for x in 0..1u64 << 20 {
            let s = NanoCpuState::unpack(x);
            let taken = match s.op() {
                NanoOp::Jmp => true,
                NanoOp::Bz => (if s.instr >> 4 & 1 == 0 { s.r0 } else { s.r1 }) == 0,
                _ => false,
            };
            let pc_next = (cpu.eval_bits(x) >> 8 & 0xf) as u8;
            if !taken {
                assert_eq!(pc_next, (s.pc + 1) % 16, "state {x:#x}");
            }
        }
    }

    #[test]
    fn builtins_are_deterministic() {
        for b in Builtin::catalog(20) {
            let o = b.build().unwrap();
            let step = ((1u64 << o.width_in()) / 512).max(1);
            for x in (0..1u64 << o.width_in()).step_by(step as usize) {
                assert_eq!(o.eval_bits(x), o.eval_bits(x));
            }
        }
    }
}
