//! Categorical distribution primitives: softmax, log-softmax, sampling,
//! entropy. All computed via max-shifted log-sum-exp so huge logits never
//! overflow.

use crate::error::{Error, Result};
use crate::rng::SeedStream;

/// Tolerance used when validating that a probability vector is normalized.
const DIST_TOL: f64 = 1e-6;

fn check_finite(logits: &[f64]) -> Result<()> {
    if logits.is_empty() {
        return Err(Error::Contract("empty logit vector".into()));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite logit".into()));
    }
    Ok(())
}

pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    check_finite(logits)?;
    let max = logits.iter().cloned().fold(f64::MIN, f64::max);
    let log_sum = logits
        .iter()
        .map(|&l| (l - max).exp())
        .sum::<f64>()
        .ln();
    Ok(logits.iter().map(|&l| l - max - log_sum).collect())
}

pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    Ok(log_softmax(logits)?.iter().map(|&l| l.exp()).collect())
}

/// Validates that `probs` is a distribution: nonnegative, sums to 1.
pub fn validate_distribution(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::Contract("empty probability vector".into()));
    }
    if probs.iter().any(|&p| !p.is_finite() || p < 0.0) {
        return Err(Error::Contract("negative or non-finite probability".into()));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > DIST_TOL {
        return Err(Error::Contract(format!(
            "probabilities sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// Draws an action index; deterministic given the stream state.
pub fn categorical_sample(probs: &[f64], rng: &mut SeedStream) -> Result<usize> {
    validate_distribution(probs)?;
    let u = rng.next_f64();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    // Rounding can leave acc slightly below 1; fall back to the last
    // action with nonzero mass.
    Ok(probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1))
}

/// Shannon entropy in nats, with `0 * ln 0 := 0`.
pub fn entropy(probs: &[f64]) -> Result<f64> {
    validate_distribution(probs)?;
    Ok(probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum())
}

/// Entropy of the softmax of `logits`, plus its gradient wrt the logits:
/// `dH/dz_i = -p_i (ln p_i + H)`.
pub fn entropy_with_grad(logits: &[f64]) -> Result<(f64, Vec<f64>)> {
    let log_p = log_softmax(logits)?;
    let p: Vec<f64> = log_p.iter().map(|&l| l.exp()).collect();
    let h: f64 = p.iter().zip(&log_p).map(|(&pi, &li)| -pi * li).sum();
    let grad = p
        .iter()
        .zip(&log_p)
        .map(|(&pi, &li)| -pi * (li + h))
        .collect();
    Ok((h, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_logits_give_uniform() {
        let p = softmax(&[0.0, 0.0, 0.0]).unwrap();
        for &pi in &p {
            assert!((pi - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn ln2_logit_doubles_mass() {
        let p = softmax(&[2.0f64.ln(), 0.0, 0.0]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15);
        assert!((p[1] - 0.25).abs() < 1e-15);
        assert!((p[2] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn huge_logits_do_not_overflow() {
        let p = softmax(&[1e4, 1e4]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12);
        assert!((p[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn nan_input_is_numeric_error() {
        assert!(matches!(
            softmax(&[f64::NAN, 0.0]),
            Err(crate::error::Error::Numeric(_))
        ));
    }

    #[test]
    fn exp_log_softmax_matches_softmax() {
        let logits = [1.3, -0.2, 4.5, 0.0];
        let p = softmax(&logits).unwrap();
        let lp = log_softmax(&logits).unwrap();
        for (a, b) in p.iter().zip(&lp) {
            assert!((a - b.exp()).abs() <= 1e-12);
        }
    }

    #[test]
    fn one_hot_always_sampled() {
        let mut rng = SeedStream::new(0);
        for _ in 0..100 {
            assert_eq!(categorical_sample(&[1.0, 0.0, 0.0], &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn unnormalized_probs_rejected() {
        let mut rng = SeedStream::new(0);
        assert!(matches!(
            categorical_sample(&[0.25, 0.25], &mut rng),
            Err(crate::error::Error::Contract(_))
        ));
        assert!(matches!(
            categorical_sample(&[-0.5, 1.5], &mut rng),
            Err(crate::error::Error::Contract(_))
        ));
    }

    #[test]
    fn uniform_sampling_frequencies() {
        // Statistical oracle: 1e5 draws from uniform-9, each frequency
        // within 1/9 +- 0.01 at this pinned seed.
        let probs = vec![1.0 / 9.0; 9];
        let mut rng = SeedStream::new(123);
        let n = 100_000;
        let mut counts = [0usize; 9];
        for _ in 0..n {
            counts[categorical_sample(&probs, &mut rng).unwrap()] += 1;
        }
        for &c in &counts {
            let freq = c as f64 / n as f64;
            assert!((freq - 1.0 / 9.0).abs() <= 0.01, "freq {freq}");
        }
    }

    #[test]
    fn entropy_reference_values() {
        assert!((entropy(&vec![1.0 / 9.0; 9]).unwrap() - 9.0f64.ln()).abs() < 1e-12);
        assert_eq!(entropy(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
        assert!((entropy(&[0.5, 0.5]).unwrap() - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn entropy_rejects_invalid_distribution() {
        assert!(entropy(&[0.7, 0.7]).is_err());
    }

    #[test]
    fn entropy_grad_matches_finite_differences() {
        let logits = vec![0.4, -1.0, 2.2, 0.0, 1.1];
        let (_, grad) = entropy_with_grad(&logits).unwrap();
        let h = 1e-6;
        for i in 0..logits.len() {
            let mut plus = logits.clone();
            plus[i] += h;
            let mut minus = logits.clone();
            minus[i] -= h;
            let num = (entropy_with_grad(&plus).unwrap().0
                - entropy_with_grad(&minus).unwrap().0)
                / (2.0 * h);
            assert!((grad[i] - num).abs() < 1e-8, "coord {i}");
        }
    }

    proptest! {
        #[test]
        fn softmax_normalizes(logits in proptest::collection::vec(-50.0f64..50.0, 1..12)) {
            let p = softmax(&logits).unwrap();
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn softmax_shift_invariance(
            logits in proptest::collection::vec(-20.0f64..20.0, 2..10),
            c in -1e4f64..1e4,
        ) {
            let p = softmax(&logits).unwrap();
            let shifted: Vec<f64> = logits.iter().map(|&l| l + c).collect();
            let q = softmax(&shifted).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn entropy_bounds(logits in proptest::collection::vec(-20.0f64..20.0, 1..12)) {
            let p = softmax(&logits).unwrap();
            let h = entropy(&p).unwrap();
            prop_assert!(h >= 0.0);
            prop_assert!(h <= (p.len() as f64).ln() + 1e-12);
        }
    }
}
