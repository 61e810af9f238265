//! Golden boolean specifications and the sampling machinery around them.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitvec::{mask, BitVec, MAX_WIDTH};
use crate::error::{Error, Result};

/// Inputs up to this width may be enumerated exhaustively unless a caller overrides it.
pub const DEFAULT_EXHAUSTIVE_THRESHOLD: usize = 24;

/// Anything that maps packed input words to packed output words.
///
/// Oracles, diagrams and netlists all implement this so verification and
/// equivalence checks can compare any pair of them.
pub trait BoolFunction: Sync {
    fn width_in(&self) -> usize;
    fn width_out(&self) -> usize;
    /// Evaluates on the low `width_in` bits of `input`.
    fn eval_bits(&self, input: u64) -> u64;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoSample {
    pub input: BitVec,
    pub output: BitVec,
}

type EvalFn = dyn Fn(u64) -> u64 + Send + Sync;

/// Deterministic total boolean function used as the functional specification.
#[derive(Clone)]
pub struct Oracle {
    name: String,
    width_in: usize,
    width_out: usize,
    func: Arc<EvalFn>,
}

impl fmt::Debug for Oracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Oracle")
            .field("name", &self.name)
            .field("width_in", &self.width_in)
            .field("width_out", &self.width_out)
            .finish()
    }
}

impl Oracle {
    /// Wraps a packed evaluation function. Output bits above `width_out` are masked off.
    pub fn from_fn(
        name: impl Into<String>,
        width_in: usize,
        width_out: usize,
        func: impl Fn(u64) -> u64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let name = name.into();
        for (what, w) in [("input", width_in), ("output", width_out)] {
            if w == 0 || w > MAX_WIDTH {
                return Err(Error::InvalidParams {
                    name,
                    reason: format!("{what} width {w} outside 1..={MAX_WIDTH}"),
                });
            }
        }
        let out_mask = mask(width_out);
        Ok(Oracle {
            name,
            width_in,
            width_out,
            func: Arc::new(move |x| func(x) & out_mask),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Oracle {
        self.name = name.into();
        self
    }

    pub fn eval(&self, input: &BitVec) -> Result<BitVec> {
        if input.width() != self.width_in {
            return Err(Error::contract(format!(
                "oracle `{}` expects {} input bits, got {}",
                self.name,
                self.width_in,
                input.width()
            )));
        }
        Ok(BitVec::new_masked(
            self.width_out,
            (self.func)(input.as_u64()),
        ))
    }

    /// Restricts the oracle to a subset of its outputs and, optionally, of its inputs.
    ///
    /// Local input `i` maps to `input_bits[i]`; inputs outside the restriction are
    /// tied to 0. Local output `j` is global output `output_bits[j]`.
    pub fn project(&self, output_bits: &[usize], input_bits: Option<&[usize]>) -> Result<Oracle> {
        if output_bits.is_empty() {
            return Err(Error::contract("projection needs at least one output bit"));
        }
        if let Some(&b) = output_bits.iter().find(|&&b| b >= self.width_out) {
            return Err(Error::contract(format!("output bit {b} out of range")));
        }
        let inputs: Vec<usize> = match input_bits {
            Some(bits) => {
                if let Some(&b) = bits.iter().find(|&&b| b >= self.width_in) {
                    return Err(Error::contract(format!("input bit {b} out of range")));
                }
                bits.to_vec()
            }
            None => (0..self.width_in).collect(),
        };
        let outputs = output_bits.to_vec();
        let func = Arc::clone(&self.func);
        let name = format!("{}[{}]", self.name, join(&outputs));
        let width_in = inputs.len();
        Oracle::from_fn(name, width_in, outputs.len(), move |x| {
            let global = scatter(x, &inputs);
            gather(func(global), &outputs)
        })
    }
}

impl BoolFunction for Oracle {
    fn width_in(&self) -> usize {
        self.width_in
    }
    fn width_out(&self) -> usize {
        self.width_out
    }
    fn eval_bits(&self, input: u64) -> u64 {
        (self.func)(input & mask(self.width_in))
    }
}

pub(crate) fn scatter(local: u64, positions: &[usize]) -> u64 {
    positions
        .iter()
        .enumerate()
        .fold(0, |acc, (i, &p)| acc | ((local >> i & 1) << p))
}

pub(crate) fn gather(global: u64, positions: &[usize]) -> u64 {
    positions
        .iter()
        .enumerate()
        .fold(0, |acc, (i, &p)| acc | ((global >> p & 1) << i))
}

fn join(bits: &[usize]) -> String {
    bits.iter()
        .map(|b| b.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

pub(crate) fn check_enumerable(width: usize, threshold: usize) -> Result<()> {
    if width > threshold || width >= 64 {
        return Err(Error::EnumerationRefused { width, threshold });
    }
    Ok(())
}

/// All `2^width_in` samples in ascending input order.
pub fn enumerate_truth_table(oracle: &Oracle) -> Result<TruthTable<'_>> {
    enumerate_truth_table_with(oracle, DEFAULT_EXHAUSTIVE_THRESHOLD)
}

pub fn enumerate_truth_table_with(oracle: &Oracle, threshold: usize) -> Result<TruthTable<'_>> {
    check_enumerable(oracle.width_in, threshold)?;
    Ok(TruthTable {
        oracle,
        next: 0,
        end: 1 << oracle.width_in,
    })
}

#[derive(Debug)]
pub struct TruthTable<'a> {
    oracle: &'a Oracle,
    next: u64,
    end: u64,
}

impl Iterator for TruthTable<'_> {
    type Item = IoSample;

    fn next(&mut self) -> Option<IoSample> {
        if self.next == self.end {
            return None;
        }
        let x = self.next;
        self.next += 1;
        Some(IoSample {
            input: BitVec::new_masked(self.oracle.width_in, x),
            output: BitVec::new_masked(self.oracle.width_out, self.oracle.eval_bits(x)),
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.end - self.next) as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for TruthTable<'_> {}

/// Packed outputs for every input, computed in parallel.
pub fn truth_table_outputs<F: BoolFunction + ?Sized>(f: &F, threshold: usize) -> Result<Vec<u64>> {
    check_enumerable(f.width_in(), threshold)?;
    Ok((0..1u64 << f.width_in())
        .into_par_iter()
        .map(|x| f.eval_bits(x))
        .collect())
}

/// Seeded generator of independent random streams.
///
/// Every consumer of randomness derives its own stream from a root seed and a
/// stream tag, so adding a consumer never perturbs the others.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) mod streams {
    pub const SAMPLES: u64 = 1;
    pub const GUESSES: u64 = 2;
    pub const VERIFY: u64 = 3;
    pub const SUPPORT: u64 = 4;
    pub const INIT: u64 = 5;
}

/// Uniform input sampler with replacement over `[0, 2^width)`.
#[derive(Clone, Debug)]
pub struct InputSampler {
    width: usize,
    rng: ChaCha8Rng,
}

impl InputSampler {
    pub fn new(width: usize, seed: u64) -> Self {
        Self::with_stream(width, seed, streams::SAMPLES)
    }

    pub(crate) fn with_stream(width: usize, seed: u64, stream: u64) -> Self {
        InputSampler {
            width,
            rng: stream_rng(seed, stream),
        }
    }

    pub fn next_input(&mut self) -> u64 {
        self.rng.next_u64() & mask(self.width)
    }
}

/// `k` uniformly drawn samples, identical for identical `(seed, k)`.
pub fn sample_io(oracle: &Oracle, seed: u64, k: usize) -> Result<Vec<IoSample>> {
    if k == 0 {
        return Err(Error::contract("sample count must be at least 1"));
    }
    let mut sampler = InputSampler::new(oracle.width_in, seed);
    Ok((0..k)
        .map(|_| {
            let x = sampler.next_input();
            IoSample {
                input: BitVec::new_masked(oracle.width_in, x),
                output: BitVec::new_masked(oracle.width_out, oracle.eval_bits(x)),
            }
        })
        .collect())
}

/// Sampled sensitivity analysis for every output bit at once.
///
/// Entry `j` holds each input bit `i` for which some sampled `x` has
/// `f(x)[j] != f(x ^ (1 << i))[j]`. Always a subset of the true support.
pub fn estimate_supports<F: BoolFunction + ?Sized>(
    f: &F,
    seed: u64,
    k: usize,
) -> Vec<BTreeSet<usize>> {
    let mut sampler = InputSampler::with_stream(f.width_in(), seed, streams::SUPPORT);
    let mut support = vec![0u64; f.width_out()];
    for _ in 0..k {
        let x = sampler.next_input();
        let y = f.eval_bits(x);
        for i in 0..f.width_in() {
            let diff = y ^ f.eval_bits(x ^ (1 << i));
            let mut d = diff;
            while d != 0 {
                let j = d.trailing_zeros() as usize;
                support[j] |= 1 << i;
                d &= d - 1;
            }
        }
    }
    support
        .into_iter()
        .map(|s| (0..f.width_in()).filter(|&i| s >> i & 1 == 1).collect())
        .collect()
}

pub fn estimate_support(
    oracle: &Oracle,
    output_bit: usize,
    seed: u64,
    k: usize,
) -> Result<BTreeSet<usize>> {
    if output_bit >= oracle.width_out {
        return Err(Error::contract(format!(
            "output bit {output_bit} out of range for width {}",
            oracle.width_out
        )));
    }
    Ok(estimate_supports(oracle, seed, k).swap_remove(output_bit))
}

/// Variable order with the most output-sensitive inputs first (ties by index).
pub fn support_driven_order<F: BoolFunction + ?Sized>(f: &F, seed: u64, k: usize) -> Vec<usize> {
    let mut sampler = InputSampler::with_stream(f.width_in(), seed, streams::SUPPORT);
    let mut hits = vec![0usize; f.width_in()];
    for _ in 0..k {
        let x = sampler.next_input();
        let y = f.eval_bits(x);
        for (i, h) in hits.iter_mut().enumerate() {
            *h += (y ^ f.eval_bits(x ^ (1 << i))).count_ones() as usize;
        }
    }
    let mut order: Vec<usize> = (0..f.width_in()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(hits[i]), i));
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::make_builtin;

    fn brute_support(o: &Oracle, bit: usize) -> BTreeSet<usize> {
        let mut s = BTreeSet::new();
        for x in 0..1u64 << o.width_in() {
            for i in 0..o.width_in() {
                if (o.eval_bits(x) ^ o.eval_bits(x ^ 1 << i)) >> bit & 1 == 1 {
                    s.insert(i);
                }
            }
        }
        s
    }

    #[test]
    fn eval_rejects_width_mismatch() {
        let o = make_builtin("adder", &[4]).unwrap();
        assert!(o.eval(&BitVec::zeros(7).unwrap()).is_err());
        assert!(o.eval(&BitVec::zeros(8).unwrap()).is_ok());
    }

    #[test]
    fn truth_table_counts() {
        let c = make_builtin("const", &[2, 0]).unwrap();
        let rows: Vec<_> = enumerate_truth_table(&c).unwrap().collect();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|s| s.output.as_u64() == 0));
        assert!(rows
            .windows(2)
            .all(|w| w[0].input.as_u64() < w[1].input.as_u64()));

        let a = make_builtin("adder", &[2]).unwrap();
        assert_eq!(enumerate_truth_table(&a).unwrap().len(), 16);
        let cpu = make_builtin("nanocpu_step", &[]).unwrap();
        assert_eq!(enumerate_truth_table(&cpu).unwrap().len(), 1 << 20);
    }

    #[test]
    fn enumeration_threshold() {
        let wide = make_builtin("identity", &[25]).unwrap();
        match enumerate_truth_table(&wide) {
            Err(Error::EnumerationRefused {
                width: 25,
                threshold: 24,
            }) => {}
            other => panic!("unexpected {:?}", other.map(|_| ())),
        }
        assert!(enumerate_truth_table_with(&wide, 25).is_ok());
    }

    #[test]
    fn sampling_is_deterministic_and_covers_tiny_spaces() {
        let a = make_builtin("adder", &[4]).unwrap();
        assert_eq!(sample_io(&a, 1, 5).unwrap(), sample_io(&a, 1, 5).unwrap());
        assert!(sample_io(&a, 1, 0).is_err());

        let id = make_builtin("identity", &[1]).unwrap();
        for seed in 0..8 {
            let s = sample_io(&id, seed, 1000).unwrap();
            assert!(s.iter().any(|s| s.input.as_u64() == 0));
            assert!(s.iter().any(|s| s.input.as_u64() == 1));
        }
    }

    #[test]
    fn sampling_bit_frequencies_are_balanced() {
        let a = make_builtin("adder", &[4]).unwrap();
        let s = sample_io(&a, 42, 10_000).unwrap();
        for bit in 0..8 {
            let ones = s.iter().filter(|s| s.input.get(bit).unwrap()).count();
            let freq = ones as f64 / 10_000.0;
            assert!((0.45..=0.55).contains(&freq), "bit {bit}: {freq}");
        }
    }

    #[test]
    fn support_estimates() {
        let a = make_builtin("adder", &[4]).unwrap();
        assert_eq!(brute_support(&a, 0), BTreeSet::from([0, 4]));
        let est = estimate_support(&a, 0, 3, 256).unwrap();
        assert_eq!(est, BTreeSet::from([0, 4]));
        assert!(!est.contains(&3) && !est.contains(&7));

        let id = make_builtin("identity", &[4]).unwrap();
        assert_eq!(
            estimate_support(&id, 2, 0, 64).unwrap(),
            BTreeSet::from([2])
        );

        let c = make_builtin("const", &[4, 1]).unwrap();
        assert!(estimate_support(&c, 0, 0, 64).unwrap().is_empty());
        assert!(estimate_support(&c, 1, 0, 64).is_err());
    }

    #[test]
    fn support_grows_with_k() {
        let m = make_builtin("multiplier", &[4]).unwrap();
        for bit in 0..8 {
            let mut prev = BTreeSet::new();
            for k in [1, 2, 4, 16, 64, 256] {
                let s = estimate_support(&m, bit, 9, k).unwrap();
                assert!(prev.is_subset(&s));
                assert!(s.is_subset(&brute_support(&m, bit)));
                prev = s;
            }
        }
    }

    #[test]
    fn projection_restricts_inputs_and_outputs() {
        let a = make_builtin("adder", &[2]).unwrap();
        // carry depends on every input; sum bit 0 only on a0 and b0.
        let p = a.project(&[0], Some(&[0, 2])).unwrap();
        assert_eq!((p.width_in(), p.width_out()), (2, 1));
        for x in 0..4u64 {
            let expect = (x & 1) ^ (x >> 1 & 1);
            assert_eq!(p.eval_bits(x), expect);
        }
        assert!(a.project(&[], None).is_err());
        assert!(a.project(&[3], None).is_err());
    }
}
