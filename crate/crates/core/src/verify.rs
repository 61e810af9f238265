//! Equivalence checking of a design against an oracle, exhaustive or sampled.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::oracle::{
    check_enumerable, streams, BoolFunction, InputSampler, DEFAULT_EXHAUSTIVE_THRESHOLD,
};

/// Confidence level of the reported error-rate interval.
pub const INTERVAL_CONFIDENCE: f64 = 0.95;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VerifyMode {
    Exhaustive,
    /// All-pass bound: if none of the drawn samples mismatch, the error rate is
    /// below `max_error` with probability `confidence`.
    Statistical {
        confidence: f64,
        max_error: f64,
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub confidence: f64,
}

impl Interval {
    pub fn contains(&self, p: f64) -> bool {
        self.lower <= p && p <= self.upper
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub mode: VerifyMode,
    pub inputs_checked: u64,
    /// Inputs on which at least one output bit differs.
    pub mismatches: u64,
    pub error_rate: f64,
    pub interval: Interval,
    pub first_counterexample: Option<u64>,
    pub pass: bool,
}

/// `ceil(ln(1/(1-confidence)) / max_error)`.
pub fn statistical_sample_count(confidence: f64, max_error: f64) -> Result<u64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::contract(format!(
            "confidence {confidence} outside (0,1)"
        )));
    }
    if !(max_error > 0.0 && max_error <= 1.0) {
        return Err(Error::contract(format!(
            "max_error {max_error} outside (0,1]"
        )));
    }
    Ok(((1.0 / (1.0 - confidence)).ln() / max_error).ceil() as u64)
}

/// Wilson score interval for `k` successes out of `n` trials.
pub fn wilson_interval(k: u64, n: u64, confidence: f64) -> Result<Interval> {
    if n == 0 || k > n {
        return Err(Error::contract(format!(
            "wilson interval needs 0 <= k <= n, n > 0 (k={k}, n={n})"
        )));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::contract(format!(
            "confidence {confidence} outside (0,1)"
        )));
    }
    let z = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(1.0 - (1.0 - confidence) / 2.0);
    let (n, p) = (n as f64, k as f64 / n as f64);
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    Ok(Interval {
        lower: (center - half).max(0.0),
        upper: (center + half).min(1.0),
        confidence,
    })
}

pub fn verify<F, G>(design: &F, oracle: &G, mode: VerifyMode) -> Result<VerificationReport>
where
    F: BoolFunction + ?Sized,
    G: BoolFunction + ?Sized,
{
    verify_with(design, oracle, mode, DEFAULT_EXHAUSTIVE_THRESHOLD)
}

pub fn verify_with<F, G>(
    design: &F,
    oracle: &G,
    mode: VerifyMode,
    threshold: usize,
) -> Result<VerificationReport>
where
    F: BoolFunction + ?Sized,
    G: BoolFunction + ?Sized,
{
    if design.width_in() != oracle.width_in() || design.width_out() != oracle.width_out() {
        return Err(Error::contract(format!(
            "design is {}->{} bits but oracle is {}->{}",
            design.width_in(),
            design.width_out(),
            oracle.width_in(),
            oracle.width_out()
        )));
    }
    match mode {
        VerifyMode::Exhaustive => {
            check_enumerable(oracle.width_in(), threshold)?;
            let n = 1u64 << oracle.width_in();
            let (mismatches, first) = (0..n)
                .into_par_iter()
                .filter(|&x| design.eval_bits(x) != oracle.eval_bits(x))
                .fold(|| (0u64, u64::MAX), |(c, f), x| (c + 1, f.min(x)))
                .reduce(|| (0, u64::MAX), |a, b| (a.0 + b.0, a.1.min(b.1)));
            let rate = mismatches as f64 / n as f64;
            Ok(VerificationReport {
                mode,
                inputs_checked: n,
                mismatches,
                error_rate: rate,
                interval: Interval {
                    lower: rate,
                    upper: rate,
                    confidence: 1.0,
                },
                first_counterexample: (mismatches > 0).then_some(first),
                pass: mismatches == 0,
            })
        }
        VerifyMode::Statistical {
            confidence,
            max_error,
            seed,
        } => {
            let n = statistical_sample_count(confidence, max_error)?;
            let mut sampler = InputSampler::with_stream(oracle.width_in(), seed, streams::VERIFY);
            let failing = sampled_mismatches(design, oracle, &mut sampler, n);
            let k = failing.len() as u64;
            Ok(VerificationReport {
                mode,
                inputs_checked: n,
                mismatches: k,
                error_rate: k as f64 / n as f64,
                interval: wilson_interval(k, n, INTERVAL_CONFIDENCE)?,
                first_counterexample: failing.first().copied(),
                pass: k == 0,
            })
        }
    }
}

/// Draws `n` inputs from `sampler` and returns those that mismatch, in draw order.
pub(crate) fn sampled_mismatches<F, G>(
    design: &F,
    oracle: &G,
    sampler: &mut InputSampler,
    n: u64,
) -> Vec<u64>
where
    F: BoolFunction + ?Sized,
    G: BoolFunction + ?Sized,
{
    let inputs: Vec<u64> = (0..n).map(|_| sampler.next_input()).collect();
    inputs
        .into_par_iter()
        .filter(|&x| design.eval_bits(x) != oracle.eval_bits(x))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsd::Bsd;
    use crate::builtins::make_builtin;
    use crate::oracle::Oracle;

    #[test]
    fn sample_count_formula() {
        assert_eq!(statistical_sample_count(0.99, 0.001).unwrap(), 4606);
        assert_eq!(statistical_sample_count(0.95, 0.01).unwrap(), 300);
        assert!(statistical_sample_count(1.0, 0.1).is_err());
        assert!(statistical_sample_count(0.9, 0.0).is_err());
    }

    #[test]
    fn wilson_matches_closed_form() {
        // k=10, n=100, z=1.959964: textbook values 0.05523, 0.17437
        let i = wilson_interval(10, 100, 0.95).unwrap();
        assert!((i.lower - 0.05523).abs() < 1e-4, "{i:?}");
        assert!((i.upper - 0.17437).abs() < 1e-4, "{i:?}");
        let zero = wilson_interval(0, 50, 0.95).unwrap();
        assert_eq!(zero.lower, 0.0);
        assert!(zero.upper > 0.0 && zero.upper < 0.1);
        assert!(wilson_interval(3, 2, 0.95).is_err());
    }

    #[test]
    fn exhaustive_reports() {
        let maj = make_builtin("majority", &[3]).unwrap();
        let guess0 = Bsd::from_guesses(3, vec![0, 1, 2], &[false]).unwrap();
        let r = verify(&guess0, &maj, VerifyMode::Exhaustive).unwrap();
        assert_eq!((r.inputs_checked, r.mismatches), (8, 4));
        assert_eq!(r.error_rate, 0.5);
        assert_eq!(r.first_counterexample, Some(3));
        assert!(!r.pass);
        let same = verify(&maj, &maj, VerifyMode::Exhaustive).unwrap();
        assert!(same.pass && same.first_counterexample.is_none());
    }

    #[test]
    fn statistical_uses_formula_count_and_is_seeded() {
        let maj = make_builtin("majority", &[5]).unwrap();
        let guess0 = Bsd::from_guesses(5, (0..5).collect(), &[false]).unwrap();
        let mode = VerifyMode::Statistical {
            confidence: 0.99,
            max_error: 0.001,
            seed: 9,
        };
        let a = verify(&guess0, &maj, mode).unwrap();
        let b = verify(&guess0, &maj, mode).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.inputs_checked, 4606);
        assert!(a.interval.contains(0.5), "{a:?}");
        let ok = verify(&maj, &maj, mode).unwrap();
        assert!(ok.pass && ok.mismatches == 0);
    }

    #[test]
    fn refuses_wide_exhaustive_and_width_mismatch() {
        let wide = Oracle::from_fn("w", 30, 1, |x| x & 1).unwrap();
        assert!(matches!(
            verify(&wide, &wide, VerifyMode::Exhaustive),
            Err(Error::EnumerationRefused { .. })
        ));
        let a = make_builtin("adder", &[2]).unwrap();
        let m = make_builtin("majority", &[3]).unwrap();
        assert!(verify(&a, &m, VerifyMode::Exhaustive).is_err());
    }
}
