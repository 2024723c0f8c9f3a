//! Forgetting-rate calibration.
//!
//! Given a subject's logged one-step-ahead predictives and the observations
//! they were made on, find the discount factor whose discounted filter
//! predictives are closest to the subject's, measured as the mean over steps
//! of `KL(subject_t || filter_t)`.
//!
//! The objective is not guaranteed to be unimodal in `γ`, so the search first
//! evaluates a coarse 21-point grid and only then runs golden-section
//! refinement inside the grid cells adjacent to the grid minimum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::{floor_and_renormalize, Family, Normal, Observation, Predictive};
use crate::error::{Error, Result};
use crate::filters::{run_predictives, DiscountFactor, FilterSpec, Prior, MIN_GAMMA};
use crate::numeric::neumaier_sum;

/// Traces shorter than this are rejected by [`calibrate_gamma`].
pub const MIN_TRACE_LEN: usize = 10;

/// Logged per-step predictive distributions of some subject.
#[derive(Debug, Clone, PartialEq)]
pub enum SubjectTrace {
    Categorical(Vec<Vec<f64>>),
    Gaussian(Vec<Normal>),
}

impl SubjectTrace {
    /// Ingest categorical vectors, flooring each entry at
    /// [`PROB_FLOOR`](crate::distribution::PROB_FLOOR) and renormalizing.
    pub fn categorical(dists: Vec<Vec<f64>>) -> Result<Self> {
        if dists.is_empty() {
            return Err(Error::invalid("subject trace is empty"));
        }
        let k = dists[0].len();
        let mut out = Vec::with_capacity(dists.len());
        for (t, d) in dists.iter().enumerate() {
            if d.len() != k {
                return Err(Error::mismatch(format!(
                    "subject step {} has {} categories, expected {k}",
                    t + 1,
                    d.len()
                )));
            }
            out.push(floor_and_renormalize(d).map_err(|e| Error::invalid(format!("subject step {}: {e}", t + 1)))?);
        }
        Ok(SubjectTrace::Categorical(out))
    }

    pub fn gaussian(dists: Vec<(f64, f64)>) -> Result<Self> {
        if dists.is_empty() {
            return Err(Error::invalid("subject trace is empty"));
        }
        let out = dists
            .into_iter()
            .enumerate()
            .map(|(t, (m, v))| Normal::new(m, v).map_err(|e| Error::invalid(format!("subject step {}: {e}", t + 1))))
            .collect::<Result<Vec<_>>>()?;
        Ok(SubjectTrace::Gaussian(out))
    }

    /// Ingest a sequence of predictives (for example a filter's own output).
    pub fn from_predictives(preds: &[Predictive]) -> Result<Self> {
        match preds.first() {
            None => Err(Error::invalid("subject trace is empty")),
            Some(Predictive::Categorical(_)) => Self::categorical(
                preds
                    .iter()
                    .map(|p| {
                        p.as_categorical()
                            .map(<[f64]>::to_vec)
                            .ok_or_else(|| Error::mismatch("mixed families in subject trace"))
                    })
                    .collect::<Result<_>>()?,
            ),
            Some(Predictive::Gaussian(_)) => Self::gaussian(
                preds
                    .iter()
                    .map(|p| {
                        p.as_gaussian()
                            .map(|n| (n.mean, n.var))
                            .ok_or_else(|| Error::mismatch("mixed families in subject trace"))
                    })
                    .collect::<Result<_>>()?,
            ),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SubjectTrace::Categorical(d) => d.len(),
            SubjectTrace::Gaussian(d) => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn family(&self) -> Family {
        match self {
            SubjectTrace::Categorical(_) => Family::Categorical,
            SubjectTrace::Gaussian(_) => Family::Gaussian,
        }
    }

    pub fn get(&self, t: usize) -> Option<Predictive> {
        match self {
            SubjectTrace::Categorical(d) => d.get(t).cloned().map(Predictive::Categorical),
            SubjectTrace::Gaussian(d) => d.get(t).copied().map(Predictive::Gaussian),
        }
    }
}

/// `KL(p || q)` in nats for categorical vectors; `0 ln 0` is taken as 0.
pub fn kl_categorical(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::mismatch(format!(
            "categorical dimensions differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    let kl = neumaier_sum(
        p.iter()
            .zip(q)
            .filter(|(pi, _)| **pi > 0.0)
            .map(|(pi, qi)| pi * (pi / qi).ln()),
    );
    Ok(kl.max(0.0))
}

/// `KL(p || q)` in nats between two univariate normals.
pub fn kl_gaussian(p: Normal, q: Normal) -> Result<f64> {
    if !(p.var > 0.0 && q.var > 0.0) {
        return Err(Error::invalid(format!(
            "gaussian KL needs positive variances, got {} and {}",
            p.var, q.var
        )));
    }
    let d = p.mean - q.mean;
    let kl = 0.5 * (q.var / p.var).ln() + (p.var + d * d) / (2.0 * q.var) - 0.5;
    Ok(kl.max(0.0))
}

/// `KL(p || q)` for two predictives of the same family.
pub fn kl(p: &Predictive, q: &Predictive) -> Result<f64> {
    match (p, q) {
        (Predictive::Categorical(a), Predictive::Categorical(b)) => kl_categorical(a, b),
        (Predictive::Gaussian(a), Predictive::Gaussian(b)) => kl_gaussian(*a, *b),
        _ => Err(Error::mismatch("KL between different families")),
    }
}

/// Mean over steps of `KL(subject_t || filter_t(γ))`, with the filter's
/// predictive emitted before it sees observation `t`.
pub fn mean_update_divergence(
    subject: &SubjectTrace,
    observations: &[Observation],
    prior: &Prior,
    gamma: DiscountFactor,
) -> Result<f64> {
    if subject.len() != observations.len() {
        return Err(Error::mismatch(format!(
            "subject has {} steps but there are {} observations",
            subject.len(),
            observations.len()
        )));
    }
    if subject.family() != prior.family() {
        return Err(Error::mismatch(format!(
            "subject family {} does not match filter family {}",
            subject.family(),
            prior.family()
        )));
    }
    if subject.is_empty() {
        return Err(Error::invalid("subject trace is empty"));
    }
    let preds = run_predictives(&FilterSpec::discounted(prior.clone(), gamma), observations)?;
    let terms = match subject {
        SubjectTrace::Categorical(s) => s
            .iter()
            .zip(&preds)
            .map(|(p, q)| kl_categorical(p, q.as_categorical().expect("family checked")))
            .collect::<Result<Vec<_>>>()?,
        SubjectTrace::Gaussian(s) => s
            .iter()
            .zip(&preds)
            .map(|(p, q)| kl_gaussian(*p, q.as_gaussian().expect("family checked")))
            .collect::<Result<Vec<_>>>()?,
    };
    Ok(neumaier_sum(terms.iter().copied()) / terms.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationOptions {
    /// Golden-section refinement stops once the bracket is narrower than this.
    pub tol: f64,
    /// Smallest γ searched; must lie in `[1e-6, 0.05)`.
    pub gamma_floor: f64,
    /// Evaluate the coarse grid on the rayon pool.
    pub parallel: bool,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            tol: 1e-4,
            gamma_floor: 1e-3,
            parallel: true,
        }
    }
}

impl CalibrationOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::invalid(format!("tolerance must be positive, got {}", self.tol)));
        }
        if !(self.gamma_floor >= MIN_GAMMA && self.gamma_floor < 0.05) {
            return Err(Error::invalid(format!(
                "gamma floor must lie in [{MIN_GAMMA}, 0.05), got {}",
                self.gamma_floor
            )));
        }
        Ok(())
    }

    /// The 21 coarse grid points: the floor, then 0.05, 0.10, ..., 1.0.
    pub fn grid(&self) -> Vec<f64> {
        std::iter::once(self.gamma_floor)
            .chain((1..=20).map(|i| i as f64 / 20.0))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationStatus {
    Converged,
    /// Every grid point gave the same objective; `γ*` is reported as 1.
    FlatObjective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub gamma_star: DiscountFactor,
    pub objective_value: f64,
    pub evaluations: usize,
    pub status: CalibrationStatus,
    /// Every `(γ, objective)` evaluated, grid first, in evaluation order.
    pub search_log: Vec<(f64, f64)>,
    /// Successive refinement brackets, starting with the one around the grid minimum.
    pub brackets: Vec<(f64, f64)>,
}

impl CalibrationResult {
    pub fn final_bracket(&self) -> Option<(f64, f64)> {
        self.brackets.last().copied()
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

fn is_flat(values: &[f64]) -> bool {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo <= 1e-12 * lo.abs().max(1.0)
}

/// Minimize `objective` over `γ ∈ [opts.gamma_floor, 1]` with a coarse grid
/// followed by golden-section refinement.
pub fn minimize_discount<F>(objective: F, opts: &CalibrationOptions) -> Result<CalibrationResult>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    opts.validate()?;
    let grid = opts.grid();
    let values: Vec<f64> = if opts.parallel {
        grid.par_iter().map(|g| objective(*g)).collect::<Result<_>>()?
    } else {
        grid.iter().map(|g| objective(*g)).collect::<Result<_>>()?
    };
    if let Some((g, v)) = grid.iter().zip(&values).find(|(_, v)| !v.is_finite()) {
        return Err(Error::invalid(format!("objective is not finite at γ = {g}: {v}")));
    }
    let mut log: Vec<(f64, f64)> = grid.iter().copied().zip(values.iter().copied()).collect();

    if is_flat(&values) {
        let last = *log.last().expect("grid is non-empty");
        return Ok(CalibrationResult {
            gamma_star: DiscountFactor::ONE,
            objective_value: last.1,
            evaluations: log.len(),
            status: CalibrationStatus::FlatObjective,
            search_log: log,
            brackets: Vec::new(),
        });
    }

    // First strict minimum, so ties resolve toward smaller γ deterministically.
    let m = values
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v < values[best] { i } else { best });
    let mut best = (grid[m], values[m]);
    let mut a = grid[m.saturating_sub(1)];
    let mut b = grid[(m + 1).min(grid.len() - 1)];
    let mut brackets = vec![(a, b)];

    let eval = |x: f64, log: &mut Vec<(f64, f64)>, best: &mut (f64, f64)| -> Result<f64> {
        let v = objective(x)?;
        log.push((x, v));
        if v < best.1 {
            *best = (x, v);
        }
        Ok(v)
    };

    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c, &mut log, &mut best)?;
    let mut fd = eval(d, &mut log, &mut best)?;
    while b - a >= opts.tol {
        // Keep whichever half still holds the incumbent best point.
        let keep_left = if best.0 < c {
            true
        } else if best.0 > d {
            false
        } else {
            fc <= fd
        };
        if keep_left {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c, &mut log, &mut best)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d, &mut log, &mut best)?;
        }
        brackets.push((a, b));
    }

    Ok(CalibrationResult {
        gamma_star: DiscountFactor::new(best.0)?,
        objective_value: best.1,
        evaluations: log.len(),
        status: CalibrationStatus::Converged,
        search_log: log,
        brackets,
    })
}

/// Find the discount factor minimizing [`mean_update_divergence`].
pub fn calibrate_gamma(
    subject: &SubjectTrace,
    observations: &[Observation],
    prior: &Prior,
    opts: &CalibrationOptions,
) -> Result<CalibrationResult> {
    if subject.len() != observations.len() {
        return Err(Error::mismatch(format!(
            "subject has {} steps but there are {} observations",
            subject.len(),
            observations.len()
        )));
    }
    if subject.len() < MIN_TRACE_LEN {
        return Err(Error::invalid(format!(
            "calibration needs at least {MIN_TRACE_LEN} steps, got {}",
            subject.len()
        )));
    }
    if subject.family() != prior.family() {
        return Err(Error::mismatch(format!(
            "subject family {} does not match filter family {}",
            subject.family(),
            prior.family()
        )));
    }
    minimize_discount(
        |g| mean_update_divergence(subject, observations, prior, DiscountFactor::new(g)?),
        opts,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_categorical_examples() {
        assert_eq!(kl_categorical(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        let v = kl_categorical(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        let v = kl_categorical(&[0.75, 0.25], &[0.5, 0.5]).unwrap();
        assert!((v - (0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln())).abs() < 1e-15);
        assert!((v - 0.130_812).abs() < 1e-6);
        assert!(kl_categorical(&[0.5, 0.5], &[1.0 / 3.0; 3]).is_err());
    }

    #[test]
    fn kl_gaussian_examples() {
        let n = |m, v| Normal::new(m, v).unwrap();
        assert_eq!(kl_gaussian(n(1.5, 2.0), n(1.5, 2.0)).unwrap(), 0.0);
        assert!((kl_gaussian(n(0.0, 1.0), n(1.0, 1.0)).unwrap() - 0.5).abs() < 1e-15);
        let v = kl_gaussian(n(0.0, 1.0), n(0.0, 4.0)).unwrap();
        assert!((v - (std::f64::consts::LN_2 + 0.125 - 0.5)).abs() < 1e-15);
        assert!((v - 0.318_147).abs() < 1e-6);
        assert!(kl_gaussian(Normal { mean: 0.0, var: 0.0 }, n(0.0, 1.0)).is_err());
    }

    #[test]
    fn single_step_divergence() {
        let subject = SubjectTrace::categorical(vec![vec![0.75, 0.25]]).unwrap();
        let prior = Prior::categorical(vec![1.0, 1.0]).unwrap();
        let v = mean_update_divergence(&subject, &[Observation::Category(0)], &prior, DiscountFactor::ONE).unwrap();
        assert!((v - 0.130_812).abs() < 1e-6);
    }

    #[test]
    fn divergence_checks_alignment_and_family() {
        let subject = SubjectTrace::categorical(vec![vec![0.5, 0.5]; 3]).unwrap();
        let prior = Prior::categorical(vec![1.0, 1.0]).unwrap();
        let obs = vec![Observation::Category(0); 2];
        assert!(matches!(
            mean_update_divergence(&subject, &obs, &prior, DiscountFactor::ONE),
            Err(Error::Mismatch(_))
        ));
        let gprior = Prior::gaussian(0.0, 1.0, 1.0).unwrap();
        let obs = vec![Observation::Category(0); 3];
        assert!(matches!(
            mean_update_divergence(&subject, &obs, &gprior, DiscountFactor::ONE),
            Err(Error::Mismatch(_))
        ));
    }

    #[test]
    fn short_trace_rejected() {
        let subject = SubjectTrace::categorical(vec![vec![0.5, 0.5]; 9]).unwrap();
        let prior = Prior::categorical(vec![1.0, 1.0]).unwrap();
        let obs = vec![Observation::Category(1); 9];
        let err = calibrate_gamma(&subject, &obs, &prior, &CalibrationOptions::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn grid_has_21_points() {
        let g = CalibrationOptions::default().grid();
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], 1e-3);
        assert_eq!(g[1], 0.05);
        assert_eq!(g[20], 1.0);
    }

    #[test]
    fn flat_objective_reports_gamma_one() {
        let r = minimize_discount(|_| Ok(0.25), &CalibrationOptions::default()).unwrap();
        assert_eq!(r.status, CalibrationStatus::FlatObjective);
        assert_eq!(r.gamma_star, DiscountFactor::ONE);
        assert_eq!(r.evaluations, 21);
    }

    #[test]
    fn golden_section_finds_smooth_minimum() {
        let opts = CalibrationOptions {
            tol: 1e-8,
            ..Default::default()
        };
        let r = minimize_discount(|g| Ok((g - 0.4321).powi(2)), &opts).unwrap();
        assert_eq!(r.status, CalibrationStatus::Converged);
        assert!((r.gamma_star.get() - 0.4321).abs() < 1e-7);
        let (a, b) = r.final_bracket().unwrap();
        assert!(b - a < 1e-8);
    }

    #[test]
    fn minimum_at_upper_edge() {
        let r = minimize_discount(|g| Ok(1.0 - g), &CalibrationOptions::default()).unwrap();
        assert!(r.gamma_star.get() >= 1.0 - 1e-4);
    }

    #[test]
    fn options_validation() {
        let bad = CalibrationOptions {
            gamma_floor: 1e-7,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = CalibrationOptions {
            tol: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
