use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_WIDTH: usize = 64;

/// Fixed-width boolean vector, bit 0 least significant.
///
/// Widths are limited to 64 so a vector packs into one machine word; every
/// oracle, diagram and netlist in the crate works on that packed form.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitVec {
    width: u8,
    bits: u64,
}

pub(crate) fn mask(width: usize) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

impl BitVec {
    pub fn zeros(width: usize) -> Result<Self> {
        Self::from_u64(width, 0)
    }

    /// Builds a vector from the low `width` bits of `value`; higher bits must be clear.
    pub fn from_u64(width: usize, value: u64) -> Result<Self> {
        if width == 0 || width > MAX_WIDTH {
            return Err(Error::contract(format!(
                "bit width {width} outside 1..={MAX_WIDTH}"
            )));
        }
        if value & !mask(width) != 0 {
            return Err(Error::contract(format!(
                "value {value:#x} does not fit in {width} bits"
            )));
        }
        Ok(BitVec {
            width: width as u8,
            bits: value,
        })
    }

    /// Truncating constructor for internal hot paths where the width is already validated.
    pub(crate) fn new_masked(width: usize, value: u64) -> Self {
        debug_assert!((1..=MAX_WIDTH).contains(&width));
        BitVec {
            width: width as u8,
            bits: value & mask(width),
        }
    }

    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        let value = bits
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, &b)| acc | ((b as u64) << i));
        Self::from_u64(bits.len(), value)
    }

    pub fn width(&self) -> usize {
        self.width as usize
    }

    pub fn as_u64(&self) -> u64 {
        self.bits
    }

    pub fn get(&self, index: usize) -> Result<bool> {
        self.check(index)?;
        Ok(self.bits >> index & 1 == 1)
    }

    pub fn set(&mut self, index: usize, value: bool) -> Result<()> {
        self.check(index)?;
        if value {
            self.bits |= 1 << index;
        } else {
            self.bits &= !(1 << index);
        }
        Ok(())
    }

    pub fn flipped(&self, index: usize) -> Result<Self> {
        self.check(index)?;
        Ok(BitVec {
            width: self.width,
            bits: self.bits ^ (1 << index),
        })
    }

    /// Extracts `len` bits starting at `lo` as an integer.
    pub fn field(&self, lo: usize, len: usize) -> Result<u64> {
        if len == 0 || lo + len > self.width() {
            return Err(Error::contract(format!(
                "field [{lo}, {}) outside width {}",
                lo + len,
                self.width
            )));
        }
        Ok(self.bits >> lo & mask(len))
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.width()).map(move |i| self.bits >> i & 1 == 1)
    }

    pub fn count_ones(&self) -> u32 {
        self.bits.count_ones()
    }

    fn check(&self, index: usize) -> Result<()> {
        if index >= self.width() {
            return Err(Error::contract(format!(
                "bit {index} out of range for width {}",
                self.width
            )));
        }
        Ok(())
    }
}

impl fmt::Debug for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVec({}'b{})", self.width, self)
    }
}

/// MSB-first binary string, like a Verilog literal body.
impl fmt::Display for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in (0..self.width()).rev() {
            f.write_str(if self.bits >> i & 1 == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn width_bounds() {
        assert!(BitVec::zeros(0).is_err());
        assert!(BitVec::zeros(65).is_err());
        assert!(BitVec::from_u64(3, 0b1000).is_err());
        assert_eq!(BitVec::from_u64(64, u64::MAX).unwrap().count_ones(), 64);
    }

    #[test]
    fn bounds_checked_access() {
        let mut v = BitVec::from_u64(4, 0b0101).unwrap();
        assert!(v.get(0).unwrap());
        assert!(!v.get(1).unwrap());
        assert!(v.get(4).is_err());
        v.set(1, true).unwrap();
        assert_eq!(v.as_u64(), 0b0111);
        assert!(v.set(7, true).is_err());
        assert_eq!(v.field(1, 2).unwrap(), 0b11);
        assert!(v.field(3, 2).is_err());
    }

    #[test]
    fn equality_needs_equal_width() {
        let a = BitVec::from_u64(4, 3).unwrap();
        let b = BitVec::from_u64(5, 3).unwrap();
        assert_ne!(a, b);
        assert_eq!(a, BitVec::from_bits(&[true, true, false, false]).unwrap());
        assert_eq!(a.to_string(), "0011");
    }
}
