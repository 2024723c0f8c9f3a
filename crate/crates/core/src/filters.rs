//! Discounted conjugate filtering.
//!
//! Each step raises the carried posterior to the power `γ`, renormalizes, and
//! multiplies in the likelihood of the new observation. For the two conjugate
//! families supported here the power stays in-family:
//!
//! * `Dir(α)^γ ∝ Dir(γ(α - 1) + 1)`
//! * `N(μ, τ²)^γ ∝ N(μ, τ² / γ)`
//!
//! so the whole update is closed form. `γ = 1` is exact Bayesian filtering.
//! A sliding-window baseline recomputes the exact posterior over the last `n`
//! observations instead of discounting.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::distribution::{Family, Normal, Observation, Predictive};
use crate::error::{Error, Result};

/// Smallest discount factor accepted anywhere in the crate.
pub const MIN_GAMMA: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DirichletState {
    alpha: Vec<f64>,
}

impl DirichletState {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::invalid(format!(
                "dirichlet needs at least 2 categories, got {}",
                alpha.len()
            )));
        }
        if let Some(a) = alpha.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::invalid(format!(
                "dirichlet concentration must be finite and positive, got {a}"
            )));
        }
        Ok(DirichletState { alpha })
    }

    /// Symmetric Dirichlet with all concentrations equal to `alpha`.
    pub fn symmetric(k: usize, alpha: f64) -> Result<Self> {
        Self::new(vec![alpha; k])
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn categories(&self) -> usize {
        self.alpha.len()
    }
}

impl TryFrom<Vec<f64>> for DirichletState {
    type Error = Error;

    fn try_from(alpha: Vec<f64>) -> Result<Self> {
        Self::new(alpha)
    }
}

impl From<DirichletState> for Vec<f64> {
    fn from(s: DirichletState) -> Self {
        s.alpha
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianState {
    mean: f64,
    variance: f64,
}

impl GaussianState {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(Error::invalid(format!("mean must be finite, got {mean}")));
        }
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::invalid(format!(
                "variance must be finite and positive, got {variance}"
            )));
        }
        Ok(GaussianState { mean, variance })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }
}

/// Discount factor `γ ∈ [MIN_GAMMA, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct DiscountFactor(f64);

impl DiscountFactor {
    pub const ONE: DiscountFactor = DiscountFactor(1.0);

    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && (MIN_GAMMA..=1.0).contains(&gamma)) {
            return Err(Error::invalid(format!(
                "discount factor must lie in [{MIN_GAMMA}, 1], got {gamma}"
            )));
        }
        Ok(DiscountFactor(gamma))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for DiscountFactor {
    type Error = Error;

    fn try_from(g: f64) -> Result<Self> {
        Self::new(g)
    }
}

impl From<DiscountFactor> for f64 {
    fn from(g: DiscountFactor) -> f64 {
        g.0
    }
}

/// Prior (and, for the gaussian family, the known observation variance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Prior {
    Categorical { alpha: DirichletState },
    Gaussian { prior: GaussianState, obs_variance: f64 },
}

impl Prior {
    pub fn categorical(alpha: Vec<f64>) -> Result<Self> {
        Ok(Prior::Categorical {
            alpha: DirichletState::new(alpha)?,
        })
    }

    pub fn gaussian(mean: f64, variance: f64, obs_variance: f64) -> Result<Self> {
        check_obs_variance(obs_variance)?;
        Ok(Prior::Gaussian {
            prior: GaussianState::new(mean, variance)?,
            obs_variance,
        })
    }

    pub fn family(&self) -> Family {
        match self {
            Prior::Categorical { .. } => Family::Categorical,
            Prior::Gaussian { .. } => Family::Gaussian,
        }
    }

    pub fn initial_state(&self) -> FilterState {
        match self {
            Prior::Categorical { alpha } => FilterState::Dirichlet(alpha.clone()),
            Prior::Gaussian { prior, .. } => FilterState::Gaussian(*prior),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Prior::Gaussian { obs_variance, .. } = self {
            check_obs_variance(*obs_variance)?;
        }
        Ok(())
    }
}

fn check_obs_variance(v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::invalid(format!(
            "observation variance must be finite and positive, got {v}"
        )));
    }
    Ok(())
}

/// Either exponential discounting or a hard sliding window, never both.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterMode {
    Discounted(DiscountFactor),
    Window(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub prior: Prior,
    pub mode: FilterMode,
}

impl FilterSpec {
    pub fn discounted(prior: Prior, gamma: DiscountFactor) -> Self {
        FilterSpec {
            prior,
            mode: FilterMode::Discounted(gamma),
        }
    }

    pub fn window(prior: Prior, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("window length must be at least 1"));
        }
        Ok(FilterSpec {
            prior,
            mode: FilterMode::Window(n),
        })
    }

    pub fn family(&self) -> Family {
        self.prior.family()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FilterState {
    Dirichlet(DirichletState),
    Gaussian(GaussianState),
}

impl FilterState {
    pub fn family(&self) -> Family {
        match self {
            FilterState::Dirichlet(_) => Family::Categorical,
            FilterState::Gaussian(_) => Family::Gaussian,
        }
    }
}

pub fn discount_dirichlet(state: &DirichletState, gamma: DiscountFactor) -> DirichletState {
    if gamma.0 == 1.0 {
        return state.clone();
    }
    let g = gamma.0;
    DirichletState {
        alpha: state.alpha.iter().map(|a| g.mul_add(a - 1.0, 1.0)).collect(),
    }
}

/// Add one count to the 0-based category `obs`.
pub fn update_dirichlet(state: &DirichletState, obs: usize) -> Result<DirichletState> {
    if obs >= state.alpha.len() {
        return Err(Error::invalid(format!(
            "category {obs} out of range for {} categories",
            state.alpha.len()
        )));
    }
    let mut alpha = state.alpha.clone();
    alpha[obs] += 1.0;
    Ok(DirichletState { alpha })
}

pub fn predictive_dirichlet(state: &DirichletState) -> Vec<f64> {
    let total = crate::numeric::neumaier_sum(state.alpha.iter().copied());
    state.alpha.iter().map(|a| a / total).collect()
}

pub fn discount_gaussian(state: &GaussianState, gamma: DiscountFactor) -> GaussianState {
    GaussianState {
        mean: state.mean,
        variance: state.variance / gamma.0,
    }
}

pub fn update_gaussian(state: &GaussianState, x: f64, obs_variance: f64) -> Result<GaussianState> {
    if !x.is_finite() {
        return Err(Error::invalid(format!("observation must be finite, got {x}")));
    }
    check_obs_variance(obs_variance)?;
    let precision = 1.0 / state.variance + 1.0 / obs_variance;
    let mean = (state.mean / state.variance + x / obs_variance) / precision;
    Ok(GaussianState {
        mean,
        variance: 1.0 / precision,
    })
}

pub fn predictive_gaussian(state: &GaussianState, obs_variance: f64) -> Normal {
    Normal {
        mean: state.mean,
        var: state.variance + obs_variance,
    }
}

/// Posterior predictive of `state` under `prior`'s family.
pub fn predictive(prior: &Prior, state: &FilterState) -> Result<Predictive> {
    match (prior, state) {
        (Prior::Categorical { .. }, FilterState::Dirichlet(s)) => Ok(Predictive::Categorical(predictive_dirichlet(s))),
        (Prior::Gaussian { obs_variance, .. }, FilterState::Gaussian(s)) => {
            Ok(Predictive::Gaussian(predictive_gaussian(s, *obs_variance)))
        }
        _ => Err(Error::mismatch(format!(
            "state family {} does not match prior family {}",
            state.family(),
            prior.family()
        ))),
    }
}

fn discount(state: &FilterState, gamma: DiscountFactor) -> FilterState {
    match state {
        FilterState::Dirichlet(s) => FilterState::Dirichlet(discount_dirichlet(s, gamma)),
        FilterState::Gaussian(s) => FilterState::Gaussian(discount_gaussian(s, gamma)),
    }
}

fn update(prior: &Prior, state: &FilterState, obs: Observation) -> Result<FilterState> {
    match (prior, state, obs.coerce(prior.family())?) {
        (Prior::Categorical { .. }, FilterState::Dirichlet(s), Observation::Category(j)) => {
            Ok(FilterState::Dirichlet(update_dirichlet(s, j)?))
        }
        (Prior::Gaussian { obs_variance, .. }, FilterState::Gaussian(s), Observation::Real(x)) => {
            Ok(FilterState::Gaussian(update_gaussian(s, x, *obs_variance)?))
        }
        _ => Err(Error::mismatch(format!(
            "state family {} does not match prior family {}",
            state.family(),
            prior.family()
        ))),
    }
}

/// One discounted step: emit the predictive of `state`, then discount and
/// absorb `obs`.
pub fn step(spec: &FilterSpec, state: &FilterState, obs: Observation) -> Result<(FilterState, Predictive)> {
    let gamma = match spec.mode {
        FilterMode::Discounted(g) => g,
        FilterMode::Window(_) => {
            return Err(Error::mismatch("step() requires a discounted filter spec; use sliding_window_step"));
        }
    };
    let pred = predictive(&spec.prior, state)?;
    let next = update(&spec.prior, &discount(state, gamma), obs)?;
    Ok((next, pred))
}

/// Exact posterior after absorbing `observations` into `prior` with no forgetting.
pub fn exact_posterior<'a>(prior: &Prior, observations: impl IntoIterator<Item = &'a Observation>) -> Result<FilterState> {
    let mut state = prior.initial_state();
    for obs in observations {
        state = update(prior, &state, *obs)?;
    }
    Ok(state)
}

/// Last-`n` observation buffer for the sliding-window baseline.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WindowBuffer {
    items: VecDeque<Observation>,
}

impl WindowBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Observation> {
        self.items.iter()
    }
}

/// One sliding-window step: emit the exact predictive over the buffered
/// observations, then push `obs` and evict beyond the window.
pub fn sliding_window_step(spec: &FilterSpec, buffer: &WindowBuffer, obs: Observation) -> Result<(WindowBuffer, Predictive)> {
    let n = match spec.mode {
        FilterMode::Window(n) if n >= 1 => n,
        FilterMode::Window(_) => return Err(Error::invalid("window length must be at least 1")),
        FilterMode::Discounted(_) => {
            return Err(Error::mismatch("sliding_window_step() requires a window filter spec"));
        }
    };
    let state = exact_posterior(&spec.prior, buffer.items.iter())?;
    let pred = predictive(&spec.prior, &state)?;
    let obs = obs.coerce(spec.family())?;
    let mut next = buffer.clone();
    next.items.push_back(obs);
    while next.items.len() > n {
        next.items.pop_front();
    }
    Ok((next, pred))
}

#[derive(Debug, Clone)]
enum Memory {
    State(FilterState),
    Window(WindowBuffer),
}

/// Streaming filter over either mode of a [`FilterSpec`].
#[derive(Debug, Clone)]
pub struct Filter {
    spec: FilterSpec,
    memory: Memory,
    seen: usize,
}

impl Filter {
    pub fn new(spec: FilterSpec) -> Result<Self> {
        spec.prior.validate()?;
        let memory = match spec.mode {
            FilterMode::Discounted(_) => Memory::State(spec.prior.initial_state()),
            FilterMode::Window(0) => return Err(Error::invalid("window length must be at least 1")),
            FilterMode::Window(_) => Memory::Window(WindowBuffer::new()),
        };
        Ok(Filter { spec, memory, seen: 0 })
    }

    pub fn spec(&self) -> &FilterSpec {
        &self.spec
    }

    pub fn seen(&self) -> usize {
        self.seen
    }

    /// Current state for a discounted filter, `None` for a window filter.
    pub fn state(&self) -> Option<&FilterState> {
        match &self.memory {
            Memory::State(s) => Some(s),
            Memory::Window(_) => None,
        }
    }

    /// Emit the one-step-ahead predictive, then absorb `obs`.
    pub fn step(&mut self, obs: Observation) -> Result<Predictive> {
        let pred = match &self.memory {
            Memory::State(s) => {
                let (next, pred) = step(&self.spec, s, obs)?;
                self.memory = Memory::State(next);
                pred
            }
            Memory::Window(b) => {
                let (next, pred) = sliding_window_step(&self.spec, b, obs)?;
                self.memory = Memory::Window(next);
                pred
            }
        };
        self.seen += 1;
        Ok(pred)
    }
}

/// One-step-ahead predictives of `spec` over a whole observation stream.
pub fn run_predictives(spec: &FilterSpec, observations: &[Observation]) -> Result<Vec<Predictive>> {
    let mut filter = Filter::new(spec.clone())?;
    observations.iter().map(|o| filter.step(*o)).collect()
}
