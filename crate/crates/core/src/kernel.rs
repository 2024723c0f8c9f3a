//! Exponential recency kernel over a context history.
//!
//! Item `i` of a history of length `t` (1-based, oldest first) receives the
//! weight `exp(-λ (t - i)) / Σ_j exp(-λ (t - j))`. The newest item always has
//! the largest unnormalized weight, so it is pinned to 1 and older items are
//! produced by repeated multiplication with `exp(-λ)`. That keeps every
//! consecutive ratio equal to `exp(λ)` up to a couple of rounding errors and
//! never overflows; entries underflow only once `λ (t - i)` exceeds ~708.

use std::ops::Index;

use crate::error::{Error, Result};
use crate::numeric::neumaier_sum;

/// Normalized recency weights, stored oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Weight of the 1-based item `i`.
    pub fn weight(&self, i: usize) -> Option<f64> {
        i.checked_sub(1).and_then(|k| self.0.get(k).copied())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Index<usize> for WeightVector {
    type Output = f64;

    fn index(&self, idx: usize) -> &f64 {
        &self.0[idx]
    }
}

impl AsRef<[f64]> for WeightVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Work performed by one weight computation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KernelOps {
    /// Calls into `exp`.
    pub exp_calls: usize,
    /// Unnormalized kernel values produced (one per item).
    pub kernel_evals: usize,
    /// Passes over the vector that rescale it to unit mass.
    pub normalization_passes: usize,
}

fn check_rate(lambda: f64) -> Result<()> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::invalid(format!(
            "forgetting rate must be finite and non-negative, got {lambda}"
        )));
    }
    Ok(())
}

/// Normalized exponential forgetting weights for a history of `t` items.
pub fn forgetting_weights(t: usize, lambda: f64) -> Result<WeightVector> {
    forgetting_weights_counted(t, lambda, &mut KernelOps::default())
}

/// Same as [`forgetting_weights`], recording the work done into `ops`.
pub fn forgetting_weights_counted(t: usize, lambda: f64, ops: &mut KernelOps) -> Result<WeightVector> {
    if t == 0 {
        return Err(Error::invalid("context history is empty (t = 0)"));
    }
    check_rate(lambda)?;

    let ratio = (-lambda).exp();
    ops.exp_calls += 1;

    let mut weights = vec![0.0; t];
    let mut current = 1.0;
    for w in weights.iter_mut().rev() {
        *w = current;
        current *= ratio;
        ops.kernel_evals += 1;
    }

    let total = neumaier_sum(weights.iter().copied());
    for w in weights.iter_mut() {
        *w /= total;
    }
    ops.normalization_passes += 1;

    Ok(WeightVector(weights))
}

/// Rate whose weights halve every `half_life` steps.
pub fn half_life_to_rate(half_life: f64) -> Result<f64> {
    if !half_life.is_finite() || half_life <= 0.0 {
        return Err(Error::invalid(format!(
            "half-life must be finite and positive, got {half_life}"
        )));
    }
    Ok(std::f64::consts::LN_2 / half_life)
}

pub fn rate_to_half_life(lambda: f64) -> Result<f64> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::invalid(format!(
            "rate must be finite and positive to have a half-life, got {lambda}"
        )));
    }
    Ok(std::f64::consts::LN_2 / lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn closed_form(t: usize, lambda: f64) -> Vec<f64> {
        let raw: Vec<f64> = (1..=t).map(|i| (-lambda * (t - i) as f64).exp()).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|r| r / s).collect()
    }

    #[test]
    fn ln2_three_items() {
        let w = forgetting_weights(3, std::f64::consts::LN_2).unwrap();
        let expect = [1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0];
        for (a, b) in w.as_slice().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_rate_is_uniform() {
        let w = forgetting_weights(4, 0.0).unwrap();
        assert_eq!(w.as_slice(), &[0.25; 4]);
    }

    #[test]
    fn single_item() {
        assert_eq!(forgetting_weights(1, 5.0).unwrap().as_slice(), &[1.0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(forgetting_weights(0, 1.0).is_err());
        assert!(forgetting_weights(3, -0.1).is_err());
        assert!(forgetting_weights(3, f64::NAN).is_err());
        assert!(forgetting_weights(3, f64::INFINITY).is_err());
    }

    #[test]
    fn matches_closed_form() {
        for &(t, lambda) in &[(10, 0.3), (257, 0.01), (50, 2.5), (1000, 0.7)] {
            let w = forgetting_weights(t, lambda).unwrap();
            for (a, b) in w.as_slice().iter().zip(closed_form(t, lambda)) {
                if b > 1e-290 {
                    assert!(((a - b) / b).abs() < 1e-12, "t={t} λ={lambda}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn no_underflow_up_to_700() {
        let t = 701;
        let w = forgetting_weights(t, 1.0).unwrap();
        assert!(w[0] > 0.0 && w[0].is_normal());
        let w = forgetting_weights(8, 100.0).unwrap();
        assert!(w.as_slice().iter().all(|x| *x > 0.0));
    }

    #[test]
    fn half_life_examples() {
        assert!((half_life_to_rate(1.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((half_life_to_rate(2.0).unwrap() - 0.346_573_590_279_972_65).abs() < 1e-15);
        assert!(half_life_to_rate(0.0).is_err());
        assert!(half_life_to_rate(-1.0).is_err());
        assert!(half_life_to_rate(f64::NAN).is_err());
    }

    #[test]
    fn half_life_one_doubles_each_step() {
        let lambda = half_life_to_rate(1.0).unwrap();
        let w = forgetting_weights(6, lambda).unwrap();
        for pair in w.as_slice().windows(2) {
            assert!((pair[1] / pair[0] - 2.0).abs() < 4.0 * f64::EPSILON * 2.0);
        }
    }

    #[test]
    fn counts_linear_work() {
        for t in [1usize, 10, 1000, 100_000] {
            let mut ops = KernelOps::default();
            forgetting_weights_counted(t, 0.5, &mut ops).unwrap();
            assert!(ops.exp_calls <= t);
            assert_eq!(ops.kernel_evals, t);
            assert_eq!(ops.normalization_passes, 1);
        }
    }
}
