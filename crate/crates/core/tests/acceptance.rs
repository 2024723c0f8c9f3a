//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.
//!
//! Reference values are computed here from first principles (sufficient
//! statistics, closed-form weights, exhaustive enumeration) rather than by
//! calling back into the code under test.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use forgetting::bench::{
    compare_methods, default_policies, fit_forgetting_curve, gamma_sweep, policy_mean_kl, trial_seeds, BenchConfig,
    CurveModel,
};
use forgetting::calibration::{calibrate_gamma, kl_categorical, kl_gaussian, CalibrationOptions, SubjectTrace};
use forgetting::environments::{generate, EnvConfig, SegmentSpec};
use forgetting::filters::{
    discount_dirichlet, discount_gaussian, run_predictives, DirichletState, DiscountFactor, FilterSpec, GaussianState,
    Prior,
};
use forgetting::numeric::ulp_distance;
use forgetting::pmp::{pmp_sample, sample_indices, ContextHistory, ContextPolicy};
use forgetting::{bench, Normal, Observation, Predictive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit: Option<Duration>) -> bool {
    limit.is_none_or(|l| elapsed <= l)
}

// --- 1 -----------------------------------------------------------------------

fn exact_bayes_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xB0B);
    let t_len = 1000;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        // categorical: predictive from the prior plus raw counts
        let k = rng.random_range(2..=8);
        let alpha0: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..5.0)).collect();
        let mut probs: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.05).collect();
        let z: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= z);
        let obs: Vec<Observation> = (0..t_len)
            .map(|_| {
                let mut u = rng.random::<f64>();
                let mut c = k - 1;
                for (i, p) in probs.iter().enumerate() {
                    if u < *p {
                        c = i;
                        break;
                    }
                    u -= p;
                }
                Observation::Category(c)
            })
            .collect();
        let spec = FilterSpec::discounted(Prior::categorical(alpha0.clone()).unwrap(), DiscountFactor::ONE);
        let preds = run_predictives(&spec, &obs).unwrap();
        let mut counts = vec![0.0; k];
        let a0: f64 = alpha0.iter().sum();
        for (n, (o, p)) in obs.iter().zip(&preds).enumerate() {
            let oracle: Vec<f64> = alpha0
                .iter()
                .zip(&counts)
                .map(|(a, c)| (a + c) / (a0 + n as f64))
                .collect();
            worst = worst.max(kl_categorical(p.as_categorical().unwrap(), &oracle).unwrap());
            if let Observation::Category(c) = o {
                counts[*c] += 1.0;
            }
        }

        // gaussian: predictive from precision-weighted sufficient statistics
        let mu0 = rng.random_range(-5.0..5.0);
        let tau2: f64 = rng.random_range(0.1..100.0);
        let sigma2: f64 = rng.random_range(0.1..4.0);
        let truth_mean = rng.random_range(-3.0..3.0);
        let xs: Vec<f64> = (0..t_len)
            .map(|_| truth_mean + sigma2.sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let obs: Vec<Observation> = xs.iter().map(|x| Observation::Real(*x)).collect();
        let spec = FilterSpec::discounted(Prior::gaussian(mu0, tau2, sigma2).unwrap(), DiscountFactor::ONE);
        let preds = run_predictives(&spec, &obs).unwrap();
        let mut sum = 0.0;
        for (n, (x, p)) in xs.iter().zip(&preds).enumerate() {
            let precision = 1.0 / tau2 + n as f64 / sigma2;
            let mean = (mu0 / tau2 + sum / sigma2) / precision;
            let oracle = Normal {
                mean,
                var: 1.0 / precision + sigma2,
            };
            worst = worst.max(kl_gaussian(p.as_gaussian().unwrap(), oracle).unwrap());
            sum += x;
        }
    }
    outcome(worst < 1e-12, format!("max per-step KL {worst:.3e} over 100 streams x 2 families"))
}

// --- 2 -----------------------------------------------------------------------

fn power_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9A);
    let mut worst = 0u64;
    for _ in 0..10_000 {
        let g1 = rng.random_range(0.001..=1.0);
        let g2 = rng.random_range(0.001..=1.0);
        let (d1, d2, d12) = (
            DiscountFactor::new(g1).unwrap(),
            DiscountFactor::new(g2).unwrap(),
            DiscountFactor::new(g1 * g2).unwrap(),
        );
        let k = rng.random_range(2..=10);
        let alpha: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..1000.0)).collect();
        let s = DirichletState::new(alpha).unwrap();
        let twice = discount_dirichlet(&discount_dirichlet(&s, d1), d2);
        let once = discount_dirichlet(&s, d12);
        for (a, b) in twice.alpha().iter().zip(once.alpha()) {
            worst = worst.max(ulp_distance(*a, *b));
        }
        let g = GaussianState::new(rng.random_range(-10.0..10.0), rng.random_range(1e-3..1e3)).unwrap();
        let twice = discount_gaussian(&discount_gaussian(&g, d1), d2);
        let once = discount_gaussian(&g, d12);
        worst = worst.max(ulp_distance(twice.variance(), once.variance()));
        worst = worst.max(ulp_distance(twice.mean(), once.mean()));
    }
    outcome(worst <= 4, format!("max parameter distance {worst} ulp over 10^4 cases"))
}

// --- 3 -----------------------------------------------------------------------

fn four_segment_die() -> EnvConfig {
    EnvConfig::BiasedDie {
        segments: [0usize, 2, 5, 1]
            .iter()
            .map(|f| {
                let mut probs = vec![0.1; 6];
                probs[*f] = 0.5;
                SegmentSpec { duration: 500, probs }
            })
            .collect(),
    }
}

fn calibration_recovery() -> Outcome {
    let cfg = four_segment_die();
    let prior = Prior::categorical(vec![1.0; 6]).unwrap();
    let opts = CalibrationOptions::default();
    let mut lines = Vec::new();
    let mut pass = true;
    for gamma_true in [0.5, 0.8, 0.95] {
        let spec = FilterSpec::discounted(prior.clone(), DiscountFactor::new(gamma_true).unwrap());
        let mut hits = 0;
        let mut worst: f64 = 0.0;
        for seed in 0..40u64 {
            let trace = generate(&cfg, seed).unwrap();
            let subject = SubjectTrace::from_predictives(&run_predictives(&spec, &trace.observations).unwrap()).unwrap();
            let got = calibrate_gamma(&subject, &trace.observations, &prior, &opts).unwrap();
            let err = (got.gamma_star.get() - gamma_true).abs();
            worst = worst.max(err);
            if err <= 0.05 {
                hits += 1;
            }
        }
        pass &= hits * 100 >= 95 * 40;
        lines.push(format!("γ={gamma_true}: {hits}/40 (max err {worst:.2e})"));
    }
    outcome(pass, lines.join(", "))
}

// --- 4 -----------------------------------------------------------------------

fn single_pick_marginals() -> Outcome {
    let trials = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for t in [3usize, 10] {
        let history = ContextHistory::from_texts((1..=t).map(|i| format!("m{i}")));
        for lambda in [0.0, std::f64::consts::LN_2, 3.0] {
            let mut counts = vec![0usize; t];
            for _ in 0..trials {
                let picked = pmp_sample(&history, lambda, 1, &mut rng).unwrap();
                counts[picked.indices()[0] - 1] += 1;
            }
            let raw: Vec<f64> = (1..=t).map(|i| (-lambda * (t - i) as f64).exp()).collect();
            let z: f64 = raw.iter().sum();
            for (c, w) in counts.iter().zip(&raw) {
                worst = worst.max((*c as f64 / trials as f64 - w / z).abs());
            }
        }
    }
    outcome(worst <= 0.01, format!("max |empirical - closed form| {worst:.4}"))
}

// --- 5 -----------------------------------------------------------------------

fn pair_probabilities() -> Outcome {
    let trials = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for t in 2..=5usize {
        for weights in [
            (0..t).map(|i| 0.5f64.powi((t - 1 - i) as i32)).collect::<Vec<_>>(),
            (0..t).map(|i| (i + 1) as f64).collect(),
            vec![1.0; t],
        ] {
            // exhaustive sequential draws without replacement
            let total: f64 = weights.iter().sum();
            let mut exact = vec![vec![0.0; t]; t];
            for i in 0..t {
                for j in 0..t {
                    if i != j {
                        let p = weights[i] / total * weights[j] / (total - weights[i]);
                        exact[i.min(j)][i.max(j)] += p;
                    }
                }
            }
            let mut counts = vec![vec![0usize; t]; t];
            for _ in 0..trials {
                let pick = sample_indices(&weights, 2, &mut rng);
                counts[pick[0]][pick[1]] += 1;
            }
            for i in 0..t {
                for j in i + 1..t {
                    worst = worst.max((counts[i][j] as f64 / trials as f64 - exact[i][j]).abs());
                }
            }
        }
    }
    outcome(worst <= 0.01, format!("max |empirical - enumerated| pair probability {worst:.4}"))
}

// --- 6 -----------------------------------------------------------------------

const GAMMA_GRID: [f64; 7] = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99];
const LAMBDA_GRID: [f64; 6] = [0.005, 0.01, 0.02, 0.05, 0.1, 0.2];
const TUNING_SEEDS: std::ops::Range<u64> = 10_000..10_005;

fn argmin(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap()
}

fn drift_robustness() -> Outcome {
    let cfg = EnvConfig::two_segment_drift();
    let prior = Prior::categorical(vec![1.0; 2]).unwrap();

    let tuning: Vec<_> = TUNING_SEEDS.map(|s| generate(&cfg, s).unwrap()).collect();
    let mut gamma_scores = vec![0.0; GAMMA_GRID.len()];
    let mut lambda_scores = vec![0.0; LAMBDA_GRID.len()];
    for trace in &tuning {
        for (acc, v) in gamma_scores.iter_mut().zip(gamma_sweep(&prior, trace, &GAMMA_GRID).unwrap()) {
            *acc += v;
        }
        for (acc, lambda) in lambda_scores.iter_mut().zip(LAMBDA_GRID) {
            *acc += policy_mean_kl(&ContextPolicy::Pmp { lambda, k: 50 }, &prior, trace, trace.seed).unwrap();
        }
    }
    let gamma = GAMMA_GRID[argmin(&gamma_scores)];
    let lambda = LAMBDA_GRID[argmin(&lambda_scores)];

    let (mut filter_wins, mut pmp_wins) = (0, 0);
    for seed in 0..20u64 {
        let trace = generate(&cfg, seed).unwrap();
        let kl = gamma_sweep(&prior, &trace, &[gamma, 1.0]).unwrap();
        if kl[0] < kl[1] {
            filter_wins += 1;
        }
        let pmp = policy_mean_kl(&ContextPolicy::Pmp { lambda, k: 50 }, &prior, &trace, seed).unwrap();
        let full = policy_mean_kl(&ContextPolicy::Full, &prior, &trace, seed).unwrap();
        if pmp < full {
            pmp_wins += 1;
        }
    }
    outcome(
        filter_wins >= 18 && pmp_wins >= 18,
        format!("γ={gamma} beats γ=1 in {filter_wins}/20, pmp(λ={lambda}, k=50) beats full in {pmp_wins}/20"),
    )
}

// --- 7 -----------------------------------------------------------------------

fn stationarity_control() -> Outcome {
    let cfg = EnvConfig::stationary_die(vec![0.5, 0.1, 0.1, 0.1, 0.1, 0.1], 1000);
    let prior = Prior::categorical(vec![1.0; 6]).unwrap();
    let policies = default_policies();
    let mut full_best = 0;
    for seed in 0..20u64 {
        let trace = generate(&cfg, seed).unwrap();
        let kls: Vec<f64> = policies
            .iter()
            .enumerate()
            .map(|(pi, p)| {
                let preds = bench::policy_predictives(p, &prior, &trace.observations, &mut bench::policy_rng(seed, pi)).unwrap();
                bench::score_predictives(&trace, &preds, p.to_string()).unwrap().mean
            })
            .collect();
        if matches!(policies[argmin(&kls)], ContextPolicy::Full) {
            full_best += 1;
        }
    }
    outcome(full_best >= 18, format!("full context lowest in {full_best}/20 stationary seeds"))
}

// --- 8 -----------------------------------------------------------------------

fn curve_inverse_problems() -> Outcome {
    let delays: Vec<f64> = (1..=40).map(f64::from).collect();
    let exp_pts: Vec<(f64, f64)> = delays.iter().map(|d| (*d, (-d / 5.0).exp())).collect();
    let pow_pts: Vec<(f64, f64)> = delays.iter().map(|d| (*d, (1.0 + d).powf(-0.5))).collect();
    let on_exp = fit_forgetting_curve(&exp_pts).unwrap();
    let on_pow = fit_forgetting_curve(&pow_pts).unwrap();
    let s_hat = match on_exp.exponential.model {
        CurveModel::Exponential { s, .. } => s,
        _ => f64::NAN,
    };
    let b_hat = match on_pow.power.model {
        CurveModel::Power { b, .. } => b,
        _ => f64::NAN,
    };
    let ordering = on_exp.exponential.rmse < on_exp.power.rmse && on_pow.power.rmse < on_pow.exponential.rmse;
    outcome(
        (s_hat - 5.0).abs() < 1e-6 && (b_hat - 0.5).abs() < 1e-6 && ordering,
        format!(
            "ŝ={s_hat:.9}, b̂={b_hat:.9}, rmse exp-data {:.1e}<{:.1e}, power-data {:.1e}<{:.1e}",
            on_exp.exponential.rmse, on_exp.power.rmse, on_pow.power.rmse, on_pow.exponential.rmse
        ),
    )
}

// --- 9 -----------------------------------------------------------------------

fn decomposition_contract() -> Outcome {
    let config = BenchConfig::default();
    let report = compare_methods(&config, &trial_seeds(config.master_seed, 5)).unwrap();
    let mut worst_gap: f64 = 0.0;
    let mut negative = 0;
    for row in &report.decomposition {
        let d = &row.decomposition;
        if d.e_update < 0.0 || d.e_spec < 0.0 || d.e_total < 0.0 {
            negative += 1;
        }
        worst_gap = worst_gap.max((d.e_update + d.e_spec - d.e_total).abs());
    }

    let mut replay_max: f64 = 0.0;
    for (cfg, prior) in [
        (EnvConfig::default_biased_die(), Prior::categorical(vec![1.0; 6]).unwrap()),
        (EnvConfig::default_shifting_gaussian(), Prior::gaussian(0.0, 100.0, 1.0).unwrap()),
    ] {
        let trace = generate(&cfg, 3).unwrap();
        let truth: Vec<Predictive> = trace.truths.clone();
        let subject = SubjectTrace::from_predictives(&truth).unwrap();
        let d = bench::decompose_error(&subject, &trace, &prior, &CalibrationOptions::default()).unwrap();
        replay_max = replay_max.max(d.e_total.abs()).max(d.e_update.abs()).max(d.e_spec.abs());
    }
    outcome(
        negative == 0 && worst_gap <= 1e-9 && replay_max == 0.0,
        format!(
            "{} bench rows, {negative} negative, max |sum - total| {worst_gap:.1e}; truth replay max component {replay_max:.1e}",
            report.decomposition.len()
        ),
    )
}

// --- 10 ----------------------------------------------------------------------

fn bench_csv(extra: &[&str]) -> Vec<u8> {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = vec!["forgetting", "bench", "--seed", "17", "--out", out];
    args.extend_from_slice(extra);
    let (mut so, mut se) = (Vec::new(), Vec::new());
    let code = forgetting::cli::run(args, &mut so, &mut se);
    assert_eq!(code, 0, "bench failed: {}", String::from_utf8_lossy(&se));
    std::fs::read(dir.path().join("report.csv")).unwrap()
}

fn determinism() -> Outcome {
    let a = bench_csv(&[]);
    let b = bench_csv(&[]);
    let serial = bench_csv(&["--serial"]);
    let rows = a.iter().filter(|c| **c == b'\n').count();
    outcome(
        a == b && a == serial && rows > 1,
        format!(
            "{rows} csv lines; parallel runs identical: {}, serial matches parallel: {}",
            a == b,
            a == serial
        ),
    )
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);
    let criteria: [Criterion; 10] = [
        ("exact-bayes recovery at γ=1", exact_bayes_recovery, Some(Duration::from_secs(10))),
        ("discount power identities", power_identities, None),
        ("calibration recovers replayed γ", calibration_recovery, Some(Duration::from_secs(120))),
        ("single-pick sampling marginals", single_pick_marginals, Some(Duration::from_secs(30))),
        ("exponential-keys pair probabilities", pair_probabilities, None),
        ("forgetting wins under drift", drift_robustness, Some(Duration::from_secs(300))),
        ("full context wins when stationary", stationarity_control, None),
        ("forgetting-curve inverse problems", curve_inverse_problems, None),
        ("error decomposition contract", decomposition_contract, None),
        ("bench CSV determinism", determinism, None),
    ];
    let mut failures = 0;
    for (i, (name, check, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let in_time = within(elapsed, *limit);
        let pass = result.pass && in_time;
        if !pass {
            failures += 1;
        }
        let budget = limit.map(|l| format!(" / limit {:.0}s", l.as_secs_f64())).unwrap_or_default();
        println!(
            "{} {:>2}. {name}: {}{} ({:.2}s{budget})",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            result.detail,
            if in_time { "" } else { " [over time limit]" },
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
