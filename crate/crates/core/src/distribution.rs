//! Predictive distributions and observations shared by filters, calibration and bench.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest probability a logged categorical distribution may carry.
pub const PROB_FLOOR: f64 = 1e-12;

/// Tolerance on the total mass of an ingested categorical vector.
pub const MASS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normal {
    pub mean: f64,
    pub var: f64,
}

impl Normal {
    pub fn new(mean: f64, var: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(Error::invalid(format!("gaussian mean must be finite, got {mean}")));
        }
        if !(var.is_finite() && var > 0.0) {
            return Err(Error::invalid(format!(
                "gaussian variance must be finite and positive, got {var}"
            )));
        }
        Ok(Normal { mean, var })
    }
}

/// A one-step-ahead predictive distribution (or a ground-truth generative one).
#[derive(Debug, Clone, PartialEq)]
pub enum Predictive {
    Categorical(Vec<f64>),
    Gaussian(Normal),
}

impl Predictive {
    pub fn family(&self) -> Family {
        match self {
            Predictive::Categorical(_) => Family::Categorical,
            Predictive::Gaussian(_) => Family::Gaussian,
        }
    }

    pub fn as_categorical(&self) -> Option<&[f64]> {
        match self {
            Predictive::Categorical(p) => Some(p),
            Predictive::Gaussian(_) => None,
        }
    }

    pub fn as_gaussian(&self) -> Option<Normal> {
        match self {
            Predictive::Gaussian(n) => Some(*n),
            Predictive::Categorical(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Categorical,
    Gaussian,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Family::Categorical => f.write_str("categorical"),
            Family::Gaussian => f.write_str("gaussian"),
        }
    }
}

/// A single observation: a 0-based category or a real value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Observation {
    Category(usize),
    Real(f64),
}

impl Observation {
    /// Reinterpret the observation for `family`; integer-valued reals are accepted as
    /// categories and categories as reals.
    pub fn coerce(self, family: Family) -> Result<Observation> {
        match (self, family) {
            (Observation::Category(_), Family::Categorical) | (Observation::Real(_), Family::Gaussian) => Ok(self),
            (Observation::Category(c), Family::Gaussian) => Ok(Observation::Real(c as f64)),
            (Observation::Real(x), Family::Categorical) => {
                if x >= 0.0 && x.fract() == 0.0 && x < usize::MAX as f64 {
                    Ok(Observation::Category(x as usize))
                } else {
                    Err(Error::mismatch(format!("observation {x} is not a category index")))
                }
            }
        }
    }
}

/// Validate a logged categorical vector, raise every entry to at least
/// [`PROB_FLOOR`] and rescale the unfloored entries so the vector sums to one.
pub fn floor_and_renormalize(dist: &[f64]) -> Result<Vec<f64>> {
    if dist.len() < 2 {
        return Err(Error::invalid(format!(
            "categorical distribution needs at least 2 entries, got {}",
            dist.len()
        )));
    }
    if let Some(bad) = dist.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(Error::invalid(format!("probability {bad} is negative or non-finite")));
    }
    let total: f64 = crate::numeric::neumaier_sum(dist.iter().copied());
    if (total - 1.0).abs() > MASS_TOLERANCE {
        return Err(Error::invalid(format!("probabilities sum to {total}, expected 1")));
    }
    let mut out: Vec<f64> = dist.iter().map(|p| p / total).collect();
    let mut floored = vec![false; out.len()];
    // Each pass pins at least one more entry, so this terminates within K passes.
    loop {
        let mut changed = false;
        for (p, fixed) in out.iter_mut().zip(floored.iter_mut()) {
            if !*fixed && *p < PROB_FLOOR {
                *p = PROB_FLOOR;
                *fixed = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let pinned = floored.iter().filter(|f| **f).count() as f64 * PROB_FLOOR;
        let free: f64 = out
            .iter()
            .zip(&floored)
            .filter(|(_, f)| !**f)
            .map(|(p, _)| *p)
            .sum();
        let scale = (1.0 - pinned) / free;
        for (p, fixed) in out.iter_mut().zip(&floored) {
            if !*fixed {
                *p *= scale;
            }
        }
    }
    Ok(out)
}
