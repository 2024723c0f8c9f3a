//! Benchmark harness: scores predictors against environment ground truth.
//!
//! Two KL directions appear here and they are deliberately different:
//!
//! * scoring ([`run_filter_on_trace`], [`score_predictives`]) uses
//!   `KL(truth || prediction)`, which punishes confident wrong predictions;
//! * calibration (and hence `e_update` in [`decompose_error`]) uses
//!   `KL(subject || filter)`.
//!
//! The "subject" in a method comparison is the exact conjugate predictor run
//! over the context a policy lets it see, so the comparison isolates the
//! context policy.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate_gamma, kl, CalibrationOptions, CalibrationStatus, SubjectTrace};
use crate::distribution::{floor_and_renormalize, Observation, Predictive};
use crate::environments::{derive_seed, gen_recall_task, generate, rng_from_seed, EnvConfig, EnvTrace, RecallConfig, RecallEvent};
use crate::error::{Error, Result};
use crate::filters::{predictive, run_predictives, update_gaussian, DiscountFactor, FilterSpec, FilterState, Prior};
use crate::numeric::{linear_fit, mean, neumaier_sum, sample_sd};
use crate::pmp::ContextPolicy;

/// Per-step KL values in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KLSeries {
    pub values: Vec<f64>,
    pub mean: f64,
    pub label: String,
}

impl KLSeries {
    fn new(values: Vec<f64>, label: String) -> Self {
        let mean = mean(&values);
        KLSeries { values, mean, label }
    }
}

fn truth_as_reference(truth: &Predictive) -> Result<Predictive> {
    Ok(match truth {
        Predictive::Categorical(p) => Predictive::Categorical(floor_and_renormalize(p)?),
        Predictive::Gaussian(_) => truth.clone(),
    })
}

/// `KL(truth_t || prediction_t)` for every step.
pub fn score_predictives(trace: &EnvTrace, preds: &[Predictive], label: impl Into<String>) -> Result<KLSeries> {
    if preds.len() != trace.len() {
        return Err(Error::mismatch(format!(
            "{} predictives for a trace of length {}",
            preds.len(),
            trace.len()
        )));
    }
    let values = trace
        .truths
        .iter()
        .zip(preds)
        .map(|(truth, pred)| kl(truth, pred))
        .collect::<Result<Vec<_>>>()?;
    Ok(KLSeries::new(values, label.into()))
}

pub fn run_filter_on_trace(spec: &FilterSpec, trace: &EnvTrace) -> Result<KLSeries> {
    if spec.family() != trace.family() {
        return Err(Error::mismatch(format!(
            "filter family {} does not match trace family {}",
            spec.family(),
            trace.family()
        )));
    }
    let preds = run_predictives(spec, &trace.observations)?;
    let label = match spec.mode {
        crate::filters::FilterMode::Discounted(g) => format!("discounted(gamma={})", g.get()),
        crate::filters::FilterMode::Window(n) => format!("window(n={n})"),
    };
    score_predictives(trace, &preds, label)
}

/// Task accuracy of each prediction: the most likely face matches the truth's
/// most likely face, or the predicted mean lies within half a noise standard
/// deviation of the true mean.
pub fn task_accuracy(trace: &EnvTrace, preds: &[Predictive]) -> f64 {
    fn argmax(p: &[f64]) -> usize {
        p.iter()
            .enumerate()
            .fold(0, |best, (i, v)| if *v > p[best] { i } else { best })
    }
    let hits = trace
        .truths
        .iter()
        .zip(preds)
        .filter(|(truth, pred)| match (truth, pred) {
            (Predictive::Categorical(t), Predictive::Categorical(p)) => argmax(t) == argmax(p),
            (Predictive::Gaussian(t), Predictive::Gaussian(p)) => (t.mean - p.mean).abs() <= 0.5 * t.var.sqrt(),
            _ => false,
        })
        .count();
    hits as f64 / preds.len().max(1) as f64
}

fn posterior_over(prior: &Prior, observations: &[Observation], visible: &[usize]) -> Result<FilterState> {
    match prior {
        Prior::Categorical { alpha } => {
            let mut a = alpha.alpha().to_vec();
            for &i in visible {
                match observations[i] {
                    Observation::Category(c) if c < a.len() => a[c] += 1.0,
                    other => return Err(Error::mismatch(format!("observation {other:?} is not a valid category"))),
                }
            }
            Ok(FilterState::Dirichlet(crate::filters::DirichletState::new(a)?))
        }
        Prior::Gaussian { prior, obs_variance } => {
            let mut s = *prior;
            for &i in visible {
                match observations[i] {
                    Observation::Real(x) => s = update_gaussian(&s, x, *obs_variance)?,
                    other => return Err(Error::mismatch(format!("observation {other:?} is not real-valued"))),
                }
            }
            Ok(FilterState::Gaussian(s))
        }
    }
}

/// One-step-ahead predictives of the exact conjugate predictor when, before
/// step `t`, it only sees the past observations `policy` selects.
pub fn policy_predictives<R: Rng + ?Sized>(policy: &ContextPolicy, prior: &Prior, observations: &[Observation], rng: &mut R) -> Result<Vec<Predictive>> {
    policy.validate()?;
    let observations: Vec<Observation> = observations
        .iter()
        .map(|o| o.coerce(prior.family()))
        .collect::<Result<_>>()?;
    (0..observations.len())
        .map(|t| {
            let visible = policy.select(t, rng)?;
            let state = posterior_over(prior, &observations, &visible)?;
            predictive(prior, &state)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDecomposition {
    pub e_total: f64,
    /// Reported update divergence, `min(raw, e_total)`.
    pub e_update: f64,
    /// Calibration objective at `γ*` before clamping.
    pub e_update_raw: f64,
    pub e_spec: f64,
    pub gamma_star: DiscountFactor,
    /// True when the raw update divergence exceeded `e_total` and was clamped.
    pub clamped: bool,
    pub calibration_status: CalibrationStatus,
}

/// Split a subject's error against the truth into the part explained by the
/// best-fitting discounted filter and a non-negative residual.
pub fn decompose_error(subject: &SubjectTrace, trace: &EnvTrace, prior: &Prior, opts: &CalibrationOptions) -> Result<ErrorDecomposition> {
    if subject.len() != trace.len() {
        return Err(Error::mismatch(format!(
            "subject has {} steps but the trace has {}",
            subject.len(),
            trace.len()
        )));
    }
    let terms = trace
        .truths
        .iter()
        .enumerate()
        .map(|(t, truth)| kl(&subject.get(t).expect("length checked"), &truth_as_reference(truth)?))
        .collect::<Result<Vec<_>>>()?;
    let e_total = neumaier_sum(terms.iter().copied()) / terms.len() as f64;
    let cal = calibrate_gamma(subject, &trace.observations, prior, opts)?;
    let raw = cal.objective_value;
    let e_update = raw.min(e_total);
    Ok(ErrorDecomposition {
        e_total,
        e_update,
        e_update_raw: raw,
        e_spec: e_total - e_update,
        gamma_star: cal.gamma_star,
        clamped: raw > e_total,
        calibration_status: cal.status,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum CurveModel {
    /// `R(d) = a exp(-d / s)`
    Exponential { a: f64, s: f64 },
    /// `R(d) = a (1 + d)^(-b)`
    Power { a: f64, b: f64 },
}

impl CurveModel {
    pub fn eval(&self, d: f64) -> f64 {
        match *self {
            CurveModel::Exponential { a, s } => a * (-d / s).exp(),
            CurveModel::Power { a, b } => a * (1.0 + d).powf(-b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveFit {
    pub model: CurveModel,
    /// Root-mean-square error over all input points, in accuracy units.
    pub rmse: f64,
    /// Points used by the log-space fit.
    pub n_points: usize,
    /// Zero-accuracy points left out of the log-space fit.
    pub excluded_zero: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForgettingFits {
    pub exponential: CurveFit,
    pub power: CurveFit,
}

/// Largest time constant reported by the exponential fit.
pub const MAX_TIME_CONSTANT: f64 = 1e6;
const MAX_AMPLITUDE: f64 = 1.5;

/// Fit exponential and power-law forgetting curves to `(delay, accuracy)` points
/// by least squares in log space.
pub fn fit_forgetting_curve(points: &[(f64, f64)]) -> Result<ForgettingFits> {
    for &(d, acc) in points {
        if !(d.is_finite() && d >= 0.0) {
            return Err(Error::invalid(format!("delay must be finite and non-negative, got {d}")));
        }
        if !(0.0..=1.0).contains(&acc) {
            return Err(Error::invalid(format!("accuracy must lie in [0, 1], got {acc}")));
        }
    }
    let mut delays: Vec<f64> = points.iter().map(|p| p.0).collect();
    delays.sort_by(f64::total_cmp);
    delays.dedup();
    if delays.len() < 3 {
        return Err(Error::invalid(format!("need at least 3 distinct delays, got {}", delays.len())));
    }
    let positive: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.1 > 0.0).collect();
    if positive.len() < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 points with positive accuracy, got {}",
            positive.len()
        )));
    }
    let excluded_zero = points.len() - positive.len();
    let log_acc: Vec<f64> = positive.iter().map(|p| p.1.ln()).collect();

    let rmse = |m: &CurveModel| {
        let sq: Vec<f64> = points.iter().map(|(d, acc)| (m.eval(*d) - acc).powi(2)).collect();
        mean(&sq).sqrt()
    };

    let xs: Vec<f64> = positive.iter().map(|p| p.0).collect();
    let (icpt, slope) = linear_fit(&xs, &log_acc);
    let s = if slope < 0.0 {
        (-1.0 / slope).min(MAX_TIME_CONSTANT)
    } else {
        MAX_TIME_CONSTANT
    };
    let exponential = CurveModel::Exponential {
        a: icpt.exp().min(MAX_AMPLITUDE),
        s,
    };

    let xs: Vec<f64> = positive.iter().map(|p| (1.0 + p.0).ln()).collect();
    let (icpt, slope) = linear_fit(&xs, &log_acc);
    let power = CurveModel::Power {
        a: icpt.exp().min(MAX_AMPLITUDE),
        b: (-slope).max(1.0 / MAX_TIME_CONSTANT),
    };

    Ok(ForgettingFits {
        exponential: CurveFit {
            model: exponential,
            rmse: rmse(&exponential),
            n_points: positive.len(),
            excluded_zero,
        },
        power: CurveFit {
            model: power,
            rmse: rmse(&power),
            n_points: positive.len(),
            excluded_zero,
        },
    })
}

/// Probes whose delay falls in `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayBin {
    pub lo: usize,
    pub hi: usize,
    pub probes: usize,
    pub correct: usize,
    pub delay_sum: usize,
}

impl DelayBin {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.probes.max(1) as f64
    }

    pub fn mean_delay(&self) -> f64 {
        self.delay_sum as f64 / self.probes.max(1) as f64
    }
}

fn bin_index(delay: usize) -> usize {
    (usize::BITS - 1 - delay.max(1).leading_zeros()) as usize
}

fn empty_bin(b: usize) -> DelayBin {
    DelayBin {
        lo: 1 << b,
        hi: (1 << (b + 1)) - 1,
        probes: 0,
        correct: 0,
        delay_sum: 0,
    }
}

/// Merge per-run bins (same edges) by summing counts.
pub fn merge_bins(runs: &[Vec<DelayBin>]) -> Vec<DelayBin> {
    let mut out: Vec<DelayBin> = Vec::new();
    for run in runs {
        for bin in run {
            let b = bin_index(bin.lo);
            while out.len() <= b {
                out.push(empty_bin(out.len()));
            }
            out[b].probes += bin.probes;
            out[b].correct += bin.correct;
            out[b].delay_sum += bin.delay_sum;
        }
    }
    out.retain(|b| b.probes > 0);
    out
}

/// Answer every probe from the context `policy` exposes and tally accuracy
/// in power-of-two delay bins `[1,1], [2,3], [4,7], ...`. Empty bins are omitted.
pub fn recall_accuracy_by_delay<R: Rng + ?Sized>(events: &[RecallEvent], policy: &ContextPolicy, rng: &mut R) -> Result<Vec<DelayBin>> {
    policy.validate()?;
    let mut bins: Vec<DelayBin> = Vec::new();
    for (pos, event) in events.iter().enumerate() {
        let RecallEvent::Probe { key, delay, answer, .. } = *event else {
            continue;
        };
        let visible = policy.select(pos, rng)?;
        let recalled = visible.iter().rev().find_map(|&i| match events[i] {
            RecallEvent::Present { key: k, value, .. } if k == key => Some(value),
            _ => None,
        });
        let b = bin_index(delay);
        while bins.len() <= b {
            bins.push(empty_bin(bins.len()));
        }
        bins[b].probes += 1;
        bins[b].delay_sum += delay;
        if recalled == Some(answer) {
            bins[b].correct += 1;
        }
    }
    bins.retain(|b| b.probes > 0);
    Ok(bins)
}

fn bin_points(bins: &[DelayBin]) -> Vec<(f64, f64)> {
    bins.iter().map(|b| (b.mean_delay(), b.accuracy())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvironmentSpec {
    /// A categorical or gaussian stream scored by predictive KL.
    Stream { config: EnvConfig, prior: Prior },
    /// An associative recall task scored by accuracy per delay.
    Recall { config: RecallConfig },
}

// Unknown keys are rejected by the flattened, tagged `spec`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEnvironment {
    pub name: String,
    #[serde(flatten)]
    pub spec: EnvironmentSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub environments: Vec<BenchEnvironment>,
    pub policies: Vec<ContextPolicy>,
    pub master_seed: u64,
    pub trials: usize,
    pub calibration: CalibrationOptions,
    /// Run trials on the rayon pool. Results do not depend on this.
    pub parallel: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            environments: vec![
                BenchEnvironment {
                    name: "biased-die".into(),
                    spec: EnvironmentSpec::Stream {
                        config: EnvConfig::default_biased_die(),
                        prior: Prior::categorical(vec![1.0; 6]).expect("valid prior"),
                    },
                },
                BenchEnvironment {
                    name: "shifting-gaussian".into(),
                    spec: EnvironmentSpec::Stream {
                        config: EnvConfig::default_shifting_gaussian(),
                        prior: Prior::gaussian(0.0, 100.0, 1.0).expect("valid prior"),
                    },
                },
                BenchEnvironment {
                    name: "recall".into(),
                    spec: EnvironmentSpec::Recall {
                        config: RecallConfig::default(),
                    },
                },
            ],
            policies: default_policies(),
            master_seed: 0,
            trials: 20,
            calibration: CalibrationOptions::default(),
            parallel: true,
        }
    }
}

pub const DEFAULT_WINDOW_K: usize = 50;
pub const DEFAULT_PMP_LAMBDA: f64 = 0.05;
pub const DEFAULT_PMP_K: usize = 50;

pub fn default_policies() -> Vec<ContextPolicy> {
    vec![
        ContextPolicy::Full,
        ContextPolicy::Window { k: DEFAULT_WINDOW_K },
        ContextPolicy::Pmp {
            lambda: DEFAULT_PMP_LAMBDA,
            k: DEFAULT_PMP_K,
        },
    ]
}

impl BenchConfig {
    /// Parse JSON, reporting the path of the offending key on failure.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: BenchConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(format!("{path}: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.environments.is_empty() {
            return Err(Error::config("environments: at least one environment is required"));
        }
        if self.policies.is_empty() {
            return Err(Error::config("policies: at least one policy is required"));
        }
        if self.trials == 0 {
            return Err(Error::config("trials: at least one trial is required"));
        }
        for (i, env) in self.environments.iter().enumerate() {
            let at = |e: Error| Error::config(format!("environments[{i}] ({}): {}", env.name, strip(e)));
            match &env.spec {
                EnvironmentSpec::Stream { config, prior } => {
                    config.validate().map_err(at)?;
                    prior.validate().map_err(at)?;
                    if config.family() != prior.family() {
                        return Err(at(Error::mismatch("prior family does not match environment family")));
                    }
                    if let (Some(k), Prior::Categorical { alpha }) = (config.categories(), prior) {
                        if alpha.categories() != k {
                            return Err(at(Error::mismatch(format!(
                                "prior has {} categories but the die has {k}",
                                alpha.categories()
                            ))));
                        }
                    }
                }
                EnvironmentSpec::Recall { config } => config.validate().map_err(at)?,
            }
        }
        for (i, p) in self.policies.iter().enumerate() {
            p.validate().map_err(|e| Error::config(format!("policies[{i}]: {}", strip(e))))?;
        }
        self.calibration
            .validate()
            .map_err(|e| Error::config(format!("calibration: {}", strip(e))))?;
        Ok(())
    }

    /// Per-trial seeds: `master_seed XOR trial_index`.
    pub fn seeds(&self) -> Vec<u64> {
        trial_seeds(self.master_seed, self.trials)
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(m) | Error::InvalidArgument(m) | Error::Mismatch(m) => m,
        other => other.to_string(),
    }
}

pub fn trial_seeds(master: u64, trials: usize) -> Vec<u64> {
    (0..trials as u64).map(|i| derive_seed(master, i)).collect()
}

/// RNG for sampling context under policy number `policy_index` in a trial.
/// Stream 0 of the trial seed is reserved for environment generation.
pub fn policy_rng(seed: u64, policy_index: usize) -> ChaCha8Rng {
    let mut rng = rng_from_seed(seed);
    rng.set_stream(policy_index as u64 + 1);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    fn of(values: &[f64]) -> Option<Self> {
        (!values.is_empty()).then(|| MeanSd {
            mean: mean(values),
            sd: sample_sd(values),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub mean_kl: Option<f64>,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub environment: String,
    pub method: String,
    pub policy: ContextPolicy,
    pub mean_kl: Option<MeanSd>,
    pub accuracy: MeanSd,
    pub trials: Vec<TrialResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRow {
    pub environment: String,
    pub method: String,
    pub seed: u64,
    #[serde(flatten)]
    pub decomposition: ErrorDecomposition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveFitRow {
    pub environment: String,
    pub method: String,
    pub bins: Vec<DelayBin>,
    pub fits: Option<ForgettingFits>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub crate_version: String,
    pub seed_derivation: String,
    pub scoring_kl: String,
    pub calibration_kl: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub seeds: Vec<u64>,
    pub methods: Vec<MethodResult>,
    pub decomposition: Vec<DecompositionRow>,
    pub curve_fits: Vec<CurveFitRow>,
    pub meta: ReportMeta,
}

/// One row of the flat CSV export; columns in this order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub environment: String,
    pub method: String,
    pub seed: u64,
    pub mean_kl: Option<f64>,
    pub accuracy: f64,
    pub gamma_star: Option<f64>,
    pub e_total: Option<f64>,
    pub e_update: Option<f64>,
    pub e_spec: Option<f64>,
}

pub const CSV_COLUMNS: [&str; 9] = [
    "environment",
    "method",
    "seed",
    "mean_kl",
    "accuracy",
    "gamma_star",
    "e_total",
    "e_update",
    "e_spec",
];

// Output of one (environment, seed) trial across all policies.
enum TrialOutput {
    Stream(Vec<(f64, f64, ErrorDecomposition)>),
    Recall(Vec<(f64, Vec<DelayBin>)>),
}

fn run_trial(env: &BenchEnvironment, policies: &[ContextPolicy], seed: u64, opts: &CalibrationOptions) -> Result<TrialOutput> {
    match &env.spec {
        EnvironmentSpec::Stream { config, prior } => {
            let trace = generate(config, seed)?;
            policies
                .iter()
                .enumerate()
                .map(|(pi, policy)| {
                    let preds = policy_predictives(policy, prior, &trace.observations, &mut policy_rng(seed, pi))?;
                    let kl = score_predictives(&trace, &preds, policy.to_string())?.mean;
                    let acc = task_accuracy(&trace, &preds);
                    let subject = SubjectTrace::from_predictives(&preds)?;
                    let dec = decompose_error(&subject, &trace, prior, opts)?;
                    Ok((kl, acc, dec))
                })
                .collect::<Result<Vec<_>>>()
                .map(TrialOutput::Stream)
        }
        EnvironmentSpec::Recall { config } => {
            let events = gen_recall_task(config, seed)?;
            policies
                .iter()
                .enumerate()
                .map(|(pi, policy)| {
                    let bins = recall_accuracy_by_delay(&events, policy, &mut policy_rng(seed, pi))?;
                    let probes: usize = bins.iter().map(|b| b.probes).sum();
                    let correct: usize = bins.iter().map(|b| b.correct).sum();
                    Ok((correct as f64 / probes.max(1) as f64, bins))
                })
                .collect::<Result<Vec<_>>>()
                .map(TrialOutput::Recall)
        }
    }
}

/// Run every policy on every environment for each seed and aggregate.
pub fn compare_methods(config: &BenchConfig, seeds: &[u64]) -> Result<BenchReport> {
    config.validate()?;
    if seeds.is_empty() {
        return Err(Error::config("at least one seed is required"));
    }
    // Calibration inside a trial stays sequential; parallelism is across trials.
    let opts = CalibrationOptions {
        parallel: false,
        ..config.calibration
    };
    let jobs: Vec<(usize, u64)> = (0..config.environments.len())
        .flat_map(|e| seeds.iter().map(move |s| (e, *s)))
        .collect();
    let run = |&(e, s): &(usize, u64)| run_trial(&config.environments[e], &config.policies, s, &opts);
    let outputs: Vec<TrialOutput> = if config.parallel {
        jobs.par_iter().map(run).collect::<Result<_>>()?
    } else {
        jobs.iter().map(run).collect::<Result<_>>()?
    };

    let mut methods = Vec::new();
    let mut decomposition = Vec::new();
    let mut curve_fits = Vec::new();
    for (e, env) in config.environments.iter().enumerate() {
        let trials = &outputs[e * seeds.len()..(e + 1) * seeds.len()];
        for (pi, policy) in config.policies.iter().enumerate() {
            let method = policy.name().to_string();
            let mut per_trial = Vec::with_capacity(seeds.len());
            let mut bins_runs = Vec::new();
            for (out, seed) in trials.iter().zip(seeds) {
                match out {
                    TrialOutput::Stream(rows) => {
                        let (kl, acc, dec) = &rows[pi];
                        per_trial.push(TrialResult {
                            seed: *seed,
                            mean_kl: Some(*kl),
                            accuracy: *acc,
                        });
                        decomposition.push(DecompositionRow {
                            environment: env.name.clone(),
                            method: method.clone(),
                            seed: *seed,
                            decomposition: dec.clone(),
                        });
                    }
                    TrialOutput::Recall(rows) => {
                        let (acc, bins) = &rows[pi];
                        per_trial.push(TrialResult {
                            seed: *seed,
                            mean_kl: None,
                            accuracy: *acc,
                        });
                        bins_runs.push(bins.clone());
                    }
                }
            }
            let kls: Vec<f64> = per_trial.iter().filter_map(|t| t.mean_kl).collect();
            let accs: Vec<f64> = per_trial.iter().map(|t| t.accuracy).collect();
            methods.push(MethodResult {
                environment: env.name.clone(),
                method: method.clone(),
                policy: *policy,
                mean_kl: MeanSd::of(&kls),
                accuracy: MeanSd::of(&accs).expect("at least one trial"),
                trials: per_trial,
            });
            if !bins_runs.is_empty() {
                let bins = merge_bins(&bins_runs);
                let (fits, error) = match fit_forgetting_curve(&bin_points(&bins)) {
                    Ok(f) => (Some(f), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                curve_fits.push(CurveFitRow {
                    environment: env.name.clone(),
                    method,
                    bins,
                    fits,
                    error,
                });
            }
        }
    }

    Ok(BenchReport {
        config: config.clone(),
        seeds: seeds.to_vec(),
        methods,
        decomposition,
        curve_fits,
        meta: ReportMeta {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            seed_derivation: "trial_seed = master_seed XOR trial_index; policy sampling uses ChaCha8 stream policy_index + 1".into(),
            scoring_kl: "KL(truth || prediction)".into(),
            calibration_kl: "KL(subject || discounted filter)".into(),
        },
    })
}

impl BenchReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::invalid(format!("report serialization failed: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn csv_rows(&self) -> Vec<CsvRow> {
        let mut rows = Vec::new();
        for m in &self.methods {
            for t in &m.trials {
                let dec = self
                    .decomposition
                    .iter()
                    .find(|d| d.environment == m.environment && d.method == m.method && d.seed == t.seed)
                    .map(|d| &d.decomposition);
                rows.push(CsvRow {
                    environment: m.environment.clone(),
                    method: m.method.clone(),
                    seed: t.seed,
                    mean_kl: t.mean_kl,
                    accuracy: t.accuracy,
                    gamma_star: dec.map(|d| d.gamma_star.get()),
                    e_total: dec.map(|d| d.e_total),
                    e_update: dec.map(|d| d.e_update),
                    e_spec: dec.map(|d| d.e_spec),
                });
            }
        }
        rows
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in self.csv_rows() {
            w.serialize(row).map_err(|e| Error::invalid(format!("csv serialization failed: {e}")))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::invalid(format!("csv serialization failed: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
    }

    /// One human-readable line per (environment, method).
    pub fn summary_lines(&self) -> Vec<String> {
        self.methods
            .iter()
            .map(|m| {
                let kl = m
                    .mean_kl
                    .map(|k| format!("mean KL {:.5} ± {:.5}", k.mean, k.sd))
                    .unwrap_or_else(|| "mean KL n/a".into());
                format!(
                    "{:<18} {:<7} {:<28} {}  accuracy {:.4} ± {:.4}",
                    m.environment,
                    m.method,
                    m.policy.to_string(),
                    kl,
                    m.accuracy.mean,
                    m.accuracy.sd
                )
            })
            .collect()
    }
}

/// Run a discounted filter with each `γ` on `trace` and return the mean KLs.
pub fn gamma_sweep(prior: &Prior, trace: &EnvTrace, gammas: &[f64]) -> Result<Vec<f64>> {
    gammas
        .iter()
        .map(|g| Ok(run_filter_on_trace(&FilterSpec::discounted(prior.clone(), DiscountFactor::new(*g)?), trace)?.mean))
        .collect()
}

/// Mean truth-first KL of `policy` on `trace`, with a fresh policy RNG.
pub fn policy_mean_kl(policy: &ContextPolicy, prior: &Prior, trace: &EnvTrace, seed: u64) -> Result<f64> {
    let preds = policy_predictives(policy, prior, &trace.observations, &mut policy_rng(seed, 0))?;
    Ok(score_predictives(trace, &preds, policy.to_string())?.mean)
}
