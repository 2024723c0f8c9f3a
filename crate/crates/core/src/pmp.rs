//! Probabilistic memory prompting: recency-weighted subsampling of a context
//! history, plus the deterministic truncation baseline.
//!
//! `k` items are drawn without replacement with the exponential-keys method:
//! each item gets `key = ln(u) / w` for `u ~ U(0, 1)` and the `k` largest keys
//! win. This realizes exactly the successive-sampling distribution (draw one
//! item proportional to the remaining weights, remove it, repeat) in a single
//! pass over the history.

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::forgetting_weights;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextItem {
    /// 1-based position in the history.
    pub index: usize,
    pub text: String,
}

/// An ordered context history, oldest first, with indices `1..=t`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ContextHistory {
    items: Vec<ContextItem>,
}

impl ContextHistory {
    /// Build a history from payloads, assigning indices `1..=t`.
    pub fn from_texts<I, S>(texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let items = texts
            .into_iter()
            .enumerate()
            .map(|(i, text)| ContextItem {
                index: i + 1,
                text: text.into(),
            })
            .collect();
        ContextHistory { items }
    }

    /// Accept items whose indices are exactly `1..=t` in order.
    pub fn from_items(items: Vec<ContextItem>) -> Result<Self> {
        for (pos, item) in items.iter().enumerate() {
            if item.index != pos + 1 {
                return Err(Error::invalid(format!(
                    "context item at position {} has index {}, expected {}",
                    pos + 1,
                    item.index,
                    pos + 1
                )));
            }
        }
        Ok(ContextHistory { items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[ContextItem] {
        &self.items
    }

    pub fn push(&mut self, text: impl Into<String>) {
        let index = self.items.len() + 1;
        self.items.push(ContextItem {
            index,
            text: text.into(),
        });
    }
}

/// A chronological subsequence of a [`ContextHistory`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapedContext {
    items: Vec<ContextItem>,
}

impl ShapedContext {
    pub fn items(&self) -> &[ContextItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.items.iter().map(|i| i.index).collect()
    }

    pub fn into_items(self) -> Vec<ContextItem> {
        self.items
    }
}

/// 0-based positions of `k` items out of `weights.len()`, drawn without
/// replacement proportional to `weights`, returned in increasing order.
///
/// Zero weights are allowed and are picked only once every positive-weight
/// item has been taken, newest first.
pub fn sample_indices<R: Rng + ?Sized>(weights: &[f64], k: usize, rng: &mut R) -> Vec<usize> {
    let t = weights.len();
    if k >= t {
        return (0..t).collect();
    }
    let mut keyed: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let u: f64 = rng.sample(Open01);
            (u.ln() / w, i)
        })
        .collect();
    // Larger key first; newer item wins exact ties (including -inf keys).
    let by_key = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1));
    if k > 0 {
        keyed.select_nth_unstable_by(k - 1, by_key);
    }
    let mut chosen: Vec<usize> = keyed[..k].iter().map(|(_, i)| *i).collect();
    chosen.sort_unstable();
    chosen
}

fn check_request(history: &ContextHistory, k: usize) -> Result<()> {
    if history.is_empty() {
        return Err(Error::invalid("context history is empty"));
    }
    if k == 0 {
        return Err(Error::invalid("target size k must be at least 1"));
    }
    Ok(())
}

/// Sample `min(k, t)` items under exponential recency weights with rate `lambda`.
pub fn pmp_sample<R: Rng + ?Sized>(history: &ContextHistory, lambda: f64, k: usize, rng: &mut R) -> Result<ShapedContext> {
    check_request(history, k)?;
    let weights = forgetting_weights(history.len(), lambda)?;
    let items = sample_indices(weights.as_slice(), k, rng)
        .into_iter()
        .map(|i| history.items[i].clone())
        .collect();
    Ok(ShapedContext { items })
}

/// Keep the last `min(k, t)` items.
pub fn truncate_window(history: &ContextHistory, k: usize) -> Result<ShapedContext> {
    if k == 0 {
        return Err(Error::invalid("target size k must be at least 1"));
    }
    let start = history.len().saturating_sub(k);
    Ok(ShapedContext {
        items: history.items[start..].to_vec(),
    })
}

/// Empirical frequency with which each position is picked by single-item
/// sampling, over `trials` repetitions.
pub fn first_pick_marginal<R: Rng + ?Sized>(history: &ContextHistory, lambda: f64, rng: &mut R, trials: usize) -> Result<Vec<f64>> {
    check_request(history, 1)?;
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let weights = forgetting_weights(history.len(), lambda)?;
    let mut counts = vec![0usize; history.len()];
    for _ in 0..trials {
        let pick = sample_indices(weights.as_slice(), 1, rng);
        counts[pick[0]] += 1;
    }
    Ok(counts.into_iter().map(|c| c as f64 / trials as f64).collect())
}

/// How a predictor's view of its history is shaped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ContextPolicy {
    Full,
    Window { k: usize },
    Pmp { lambda: f64, k: usize },
}

impl ContextPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            ContextPolicy::Full => "full",
            ContextPolicy::Window { .. } => "window",
            ContextPolicy::Pmp { .. } => "pmp",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ContextPolicy::Full => Ok(()),
            ContextPolicy::Window { k } if k >= 1 => Ok(()),
            ContextPolicy::Pmp { lambda, k } if k >= 1 && lambda.is_finite() && lambda >= 0.0 => Ok(()),
            other => Err(Error::invalid(format!("invalid context policy {other:?}"))),
        }
    }

    /// 0-based positions visible out of a history of length `t`, in order.
    pub fn select<R: Rng + ?Sized>(&self, t: usize, rng: &mut R) -> Result<Vec<usize>> {
        Ok(match *self {
            ContextPolicy::Full => (0..t).collect(),
            ContextPolicy::Window { k } => (t.saturating_sub(k)..t).collect(),
            ContextPolicy::Pmp { lambda, k } => {
                if t == 0 {
                    Vec::new()
                } else {
                    sample_indices(forgetting_weights(t, lambda)?.as_slice(), k, rng)
                }
            }
        })
    }
}

impl std::fmt::Display for ContextPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ContextPolicy::Full => write!(f, "full"),
            ContextPolicy::Window { k } => write!(f, "window(k={k})"),
            ContextPolicy::Pmp { lambda, k } => write!(f, "pmp(lambda={lambda}, k={k})"),
        }
    }
}
