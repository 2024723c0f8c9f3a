//! Synthetic non-stationary probes with per-step ground truth.
//!
//! * biased die: piecewise-stationary categorical draws
//! * shifting gaussian: piecewise-constant or random-walk mean, known noise
//! * recall: key/value presentations interleaved with probes at varying delay

use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Geometric, Normal as NormalDist};
use serde::{Deserialize, Serialize};

use crate::distribution::{Family, Normal, Observation, Predictive};
use crate::error::{Error, Result};

/// Seed of trial `trial` under master seed `master`.
pub fn derive_seed(master: u64, trial: u64) -> u64 {
    master ^ trial
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    pub duration: usize,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSegment {
    pub duration: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeanProcess {
    Piecewise { segments: Vec<GaussianSegment> },
    RandomWalk { step_variance: f64, initial_mean: f64, len: usize },
}

/// Generator configuration for an [`EnvTrace`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvConfig {
    BiasedDie {
        segments: Vec<SegmentSpec>,
    },
    ShiftingGaussian {
        process: MeanProcess,
        obs_variance: f64,
    },
}

impl EnvConfig {
    /// Six-faced die, three 500-step segments each favouring a different face.
    pub fn default_biased_die() -> Self {
        let favour = |face: usize| {
            let mut p = vec![0.1; 6];
            p[face] = 0.5;
            p
        };
        EnvConfig::BiasedDie {
            segments: [0, 2, 5]
                .iter()
                .map(|f| SegmentSpec {
                    duration: 500,
                    probs: favour(*f),
                })
                .collect(),
        }
    }

    /// Two 500-step segments of a two-faced die, 0.9/0.1 then 0.1/0.9.
    pub fn two_segment_drift() -> Self {
        EnvConfig::BiasedDie {
            segments: vec![
                SegmentSpec {
                    duration: 500,
                    probs: vec![0.9, 0.1],
                },
                SegmentSpec {
                    duration: 500,
                    probs: vec![0.1, 0.9],
                },
            ],
        }
    }

    pub fn stationary_die(probs: Vec<f64>, duration: usize) -> Self {
        EnvConfig::BiasedDie {
            segments: vec![SegmentSpec { duration, probs }],
        }
    }

    /// Random-walk mean with step variance 0.01 over 1500 steps, unit noise.
    pub fn default_shifting_gaussian() -> Self {
        EnvConfig::ShiftingGaussian {
            process: MeanProcess::RandomWalk {
                step_variance: 0.01,
                initial_mean: 0.0,
                len: 1500,
            },
            obs_variance: 1.0,
        }
    }

    pub fn family(&self) -> Family {
        match self {
            EnvConfig::BiasedDie { .. } => Family::Categorical,
            EnvConfig::ShiftingGaussian { .. } => Family::Gaussian,
        }
    }

    /// Number of categories for a die, `None` for a gaussian.
    pub fn categories(&self) -> Option<usize> {
        match self {
            EnvConfig::BiasedDie { segments } => segments.first().map(|s| s.probs.len()),
            EnvConfig::ShiftingGaussian { .. } => None,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            EnvConfig::BiasedDie { segments } => segments.iter().map(|s| s.duration).sum(),
            EnvConfig::ShiftingGaussian { process, .. } => match process {
                MeanProcess::Piecewise { segments } => segments.iter().map(|s| s.duration).sum(),
                MeanProcess::RandomWalk { len, .. } => *len,
            },
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EnvConfig::BiasedDie { segments } => validate_die(segments),
            EnvConfig::ShiftingGaussian { process, obs_variance } => {
                if !(obs_variance.is_finite() && *obs_variance > 0.0) {
                    return Err(Error::config(format!(
                        "obs_variance must be finite and positive, got {obs_variance}"
                    )));
                }
                match process {
                    MeanProcess::Piecewise { segments } => {
                        if segments.is_empty() {
                            return Err(Error::config("at least one gaussian segment is required"));
                        }
                        for (i, s) in segments.iter().enumerate() {
                            if s.duration == 0 {
                                return Err(Error::config(format!("segment {}: duration must be positive", i + 1)));
                            }
                            if !s.mean.is_finite() {
                                return Err(Error::config(format!("segment {}: mean must be finite", i + 1)));
                            }
                        }
                    }
                    MeanProcess::RandomWalk {
                        step_variance,
                        initial_mean,
                        len,
                    } => {
                        if !(step_variance.is_finite() && *step_variance >= 0.0) {
                            return Err(Error::config(format!(
                                "step_variance must be finite and non-negative, got {step_variance}"
                            )));
                        }
                        if !initial_mean.is_finite() {
                            return Err(Error::config("initial_mean must be finite"));
                        }
                        if *len == 0 {
                            return Err(Error::config("len must be positive"));
                        }
                    }
                }
                Ok(())
            }
        }
    }
}

fn validate_die(segments: &[SegmentSpec]) -> Result<()> {
    let Some(first) = segments.first() else {
        return Err(Error::config("at least one die segment is required"));
    };
    let k = first.probs.len();
    if k < 2 {
        return Err(Error::config(format!("segment 1: die needs at least 2 faces, got {k}")));
    }
    for (i, s) in segments.iter().enumerate() {
        let n = i + 1;
        if s.probs.len() != k {
            return Err(Error::config(format!(
                "segment {n}: has {} faces but segment 1 has {k}",
                s.probs.len()
            )));
        }
        if s.duration == 0 {
            return Err(Error::config(format!("segment {n}: duration must be positive")));
        }
        if let Some(p) = s.probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::config(format!("segment {n}: probability {p} is negative or non-finite")));
        }
        let total: f64 = s.probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("segment {n}: probabilities sum to {total}, expected 1")));
        }
    }
    Ok(())
}

/// Observations with the distribution each was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvTrace {
    pub config: EnvConfig,
    pub seed: u64,
    pub observations: Vec<Observation>,
    pub truths: Vec<Predictive>,
}

impl EnvTrace {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn family(&self) -> Family {
        self.config.family()
    }

    /// Check the equal-length and support invariants.
    pub fn validate(&self) -> Result<()> {
        if self.observations.len() != self.truths.len() {
            return Err(Error::mismatch(format!(
                "{} observations but {} truths",
                self.observations.len(),
                self.truths.len()
            )));
        }
        for (t, (obs, truth)) in self.observations.iter().zip(&self.truths).enumerate() {
            let ok = match (obs, truth) {
                (Observation::Category(c), Predictive::Categorical(p)) => p.get(*c).is_some_and(|x| *x > 0.0),
                (Observation::Real(x), Predictive::Gaussian(_)) => x.is_finite(),
                _ => false,
            };
            if !ok {
                return Err(Error::mismatch(format!("step {}: observation outside its truth's support", t + 1)));
            }
        }
        Ok(())
    }
}

/// Generate a trace for any [`EnvConfig`].
pub fn generate(config: &EnvConfig, seed: u64) -> Result<EnvTrace> {
    match config {
        EnvConfig::BiasedDie { segments } => gen_biased_die(segments, seed),
        EnvConfig::ShiftingGaussian { process, obs_variance } => gen_shifting_gaussian(process, *obs_variance, seed),
    }
}

pub fn gen_biased_die(segments: &[SegmentSpec], seed: u64) -> Result<EnvTrace> {
    validate_die(segments).map_err(|e| match e {
        Error::Config(m) => Error::invalid(m),
        other => other,
    })?;
    let mut rng = rng_from_seed(seed);
    let total: usize = segments.iter().map(|s| s.duration).sum();
    let mut observations = Vec::with_capacity(total);
    let mut truths = Vec::with_capacity(total);
    for seg in segments {
        let dist = WeightedIndex::new(&seg.probs).map_err(|e| Error::invalid(format!("bad segment weights: {e}")))?;
        for _ in 0..seg.duration {
            observations.push(Observation::Category(dist.sample(&mut rng)));
            truths.push(Predictive::Categorical(seg.probs.clone()));
        }
    }
    Ok(EnvTrace {
        config: EnvConfig::BiasedDie {
            segments: segments.to_vec(),
        },
        seed,
        observations,
        truths,
    })
}

pub fn gen_shifting_gaussian(process: &MeanProcess, obs_variance: f64, seed: u64) -> Result<EnvTrace> {
    let config = EnvConfig::ShiftingGaussian {
        process: process.clone(),
        obs_variance,
    };
    config.validate().map_err(|e| match e {
        Error::Config(m) => Error::invalid(m),
        other => other,
    })?;
    let mut rng = rng_from_seed(seed);
    let means: Vec<f64> = match process {
        MeanProcess::Piecewise { segments } => segments
            .iter()
            .flat_map(|s| std::iter::repeat_n(s.mean, s.duration))
            .collect(),
        MeanProcess::RandomWalk {
            step_variance,
            initial_mean,
            len,
        } => {
            let step = NormalDist::new(0.0, step_variance.sqrt()).map_err(|e| Error::invalid(e.to_string()))?;
            let mut mu = *initial_mean;
            let mut out = Vec::with_capacity(*len);
            for i in 0..*len {
                if i > 0 {
                    mu += step.sample(&mut rng);
                }
                out.push(mu);
            }
            out
        }
    };
    let noise = NormalDist::new(0.0, obs_variance.sqrt()).map_err(|e| Error::invalid(e.to_string()))?;
    let mut observations = Vec::with_capacity(means.len());
    let mut truths = Vec::with_capacity(means.len());
    for mu in means {
        observations.push(Observation::Real(mu + noise.sample(&mut rng)));
        truths.push(Predictive::Gaussian(Normal { mean: mu, var: obs_variance }));
    }
    Ok(EnvTrace {
        config,
        seed,
        observations,
        truths,
    })
}

/// How a probe picks which key to ask about.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DelayDistribution {
    /// Uniformly among keys presented so far.
    UniformKey,
    /// Look back a geometric number of steps with the given mean and probe the
    /// key presented most recently at or before that point.
    Geometric { mean: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecallConfig {
    pub vocab_size: u32,
    pub len: usize,
    pub probe_fraction: f64,
    pub delay: DelayDistribution,
}

impl Default for RecallConfig {
    fn default() -> Self {
        RecallConfig {
            vocab_size: 20,
            len: 2000,
            probe_fraction: 0.2,
            delay: DelayDistribution::UniformKey,
        }
    }
}

impl RecallConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::config(format!("vocab_size must be at least 2, got {}", self.vocab_size)));
        }
        if self.len == 0 {
            return Err(Error::config("len must be positive"));
        }
        if !(0.0..1.0).contains(&self.probe_fraction) {
            return Err(Error::config(format!(
                "probe_fraction must lie in [0, 1), got {}",
                self.probe_fraction
            )));
        }
        if let DelayDistribution::Geometric { mean } = self.delay {
            if !(mean.is_finite() && mean >= 1.0) {
                return Err(Error::config(format!("geometric delay mean must be at least 1, got {mean}")));
            }
        }
        Ok(())
    }
}

/// One step of an associative recall task. `t` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RecallEvent {
    Present { t: usize, key: u32, value: u32 },
    /// `answer` is the value most recently bound to `key`; `delay` counts steps
    /// since that binding.
    Probe { t: usize, key: u32, delay: usize, answer: u32 },
}

impl RecallEvent {
    pub fn t(&self) -> usize {
        match self {
            RecallEvent::Present { t, .. } | RecallEvent::Probe { t, .. } => *t,
        }
    }
}

pub fn gen_recall_task(config: &RecallConfig, seed: u64) -> Result<Vec<RecallEvent>> {
    config.validate().map_err(|e| match e {
        Error::Config(m) => Error::invalid(m),
        other => other,
    })?;
    let mut rng = rng_from_seed(seed);
    let geometric = match config.delay {
        DelayDistribution::Geometric { mean } => {
            Some(Geometric::new(1.0 / mean).map_err(|e| Error::invalid(e.to_string()))?)
        }
        DelayDistribution::UniformKey => None,
    };
    // key -> (step of latest presentation, value)
    let mut bindings: HashMap<u32, (usize, u32)> = HashMap::new();
    // keys in first-presentation order, for deterministic uniform choice
    let mut presented: Vec<u32> = Vec::new();
    // step of each presentation, with its key
    let mut presentations: Vec<(usize, u32)> = Vec::new();
    let mut events = Vec::with_capacity(config.len);

    for t in 1..=config.len {
        let probe = t > 1 && !presented.is_empty() && rng.random::<f64>() < config.probe_fraction;
        if probe {
            let key = match geometric {
                None => presented[rng.random_range(0..presented.len())],
                Some(g) => {
                    let back = (g.sample(&mut rng) + 1) as usize;
                    let target = t.saturating_sub(back).max(1);
                    let pos = presentations.partition_point(|(s, _)| *s <= target);
                    presentations[pos.saturating_sub(1)].1
                }
            };
            let (at, answer) = bindings[&key];
            events.push(RecallEvent::Probe {
                t,
                key,
                delay: t - at,
                answer,
            });
        } else {
            let key = rng.random_range(0..config.vocab_size);
            let value = rng.random_range(0..config.vocab_size);
            if bindings.insert(key, (t, value)).is_none() {
                presented.push(key);
            }
            presentations.push((t, key));
            events.push(RecallEvent::Present { t, key, value });
        }
    }
    Ok(events)
}
