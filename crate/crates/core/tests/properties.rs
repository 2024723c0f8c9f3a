use forgetting::calibration::{kl_categorical, kl_gaussian, mean_update_divergence, SubjectTrace};
use forgetting::distribution::{floor_and_renormalize, PROB_FLOOR};
use forgetting::environments::{generate, EnvConfig};
use forgetting::filters::{discount_dirichlet, discount_gaussian, DirichletState, DiscountFactor, GaussianState, Prior};
use forgetting::kernel::forgetting_weights;
use forgetting::numeric::{neumaier_sum, ulp_distance};
use forgetting::pmp::sample_indices;
use forgetting::Normal;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn distribution(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, k).prop_filter_map("all-zero vector", |v| {
        let z: f64 = v.iter().sum();
        (z > 1e-3).then(|| v.iter().map(|x| x / z).collect())
    })
}

fn distribution_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..12).prop_flat_map(|k| (distribution(k), distribution(k)))
}

proptest! {
    #[test]
    fn weights_sum_to_one(t in 1usize..20_000, lambda in 0.0f64..20.0) {
        let w = forgetting_weights(t, lambda).unwrap();
        prop_assert_eq!(w.len(), t);
        prop_assert!((neumaier_sum(w.as_slice().iter().copied()) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn weight_ratio_is_exp_lambda(t in 2usize..2_000, lambda in 0.0f64..5.0) {
        let w = forgetting_weights(t, lambda).unwrap();
        let expected = lambda.exp();
        for pair in w.as_slice().windows(2) {
            if pair[0] < f64::MIN_POSITIVE {
                continue;
            }
            prop_assert!(ulp_distance(pair[1] / pair[0], expected) <= 4, "{} vs {}", pair[1] / pair[0], expected);
        }
    }

    #[test]
    fn weights_are_non_decreasing(t in 1usize..500, lambda in 0.0f64..100.0) {
        let w = forgetting_weights(t, lambda).unwrap();
        prop_assert!(w.as_slice().windows(2).all(|p| p[0] <= p[1]));
    }

    #[test]
    fn zero_rate_is_exactly_uniform(t in 1usize..50_000) {
        let w = forgetting_weights(t, 0.0).unwrap();
        prop_assert!(w.as_slice().iter().all(|x| *x == 1.0 / t as f64));
    }

    #[test]
    fn large_rate_concentrates_on_newest(t in 2usize..5_000, lambda in 50.0f64..1e4) {
        let w = forgetting_weights(t, lambda).unwrap();
        prop_assert!(w[t - 1] >= 1.0 - 1e-20);
    }

    #[test]
    fn categorical_kl_non_negative((p, q) in distribution_pair()) {
        let q = floor_and_renormalize(&q).unwrap();
        prop_assert!(kl_categorical(&p, &q).unwrap() >= 0.0);
    }

    #[test]
    fn categorical_kl_zero_on_self(p in (2usize..12).prop_flat_map(distribution)) {
        let p = floor_and_renormalize(&p).unwrap();
        prop_assert_eq!(kl_categorical(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_kl_non_negative(m1 in -1e3f64..1e3, v1 in 1e-4f64..1e4, m2 in -1e3f64..1e3, v2 in 1e-4f64..1e4) {
        let (p, q) = (Normal::new(m1, v1).unwrap(), Normal::new(m2, v2).unwrap());
        prop_assert!(kl_gaussian(p, q).unwrap() >= 0.0);
        prop_assert_eq!(kl_gaussian(p, p).unwrap(), 0.0);
    }

    #[test]
    fn floored_vectors_are_distributions(p in (2usize..20).prop_flat_map(distribution)) {
        let q = floor_and_renormalize(&p).unwrap();
        prop_assert!(q.iter().all(|x| *x >= PROB_FLOOR * (1.0 - 1e-9)));
        prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dirichlet_discounts_compose(
        alpha in prop::collection::vec(0.5f64..1000.0, 2..10),
        g1 in 0.001f64..=1.0,
        g2 in 0.001f64..=1.0,
    ) {
        let s = DirichletState::new(alpha).unwrap();
        let (d1, d2) = (DiscountFactor::new(g1).unwrap(), DiscountFactor::new(g2).unwrap());
        let twice = discount_dirichlet(&discount_dirichlet(&s, d1), d2);
        let once = discount_dirichlet(&s, DiscountFactor::new(g1 * g2).unwrap());
        for (a, b) in twice.alpha().iter().zip(once.alpha()) {
            prop_assert!(ulp_distance(*a, *b) <= 4, "{a} vs {b}");
        }
    }

    #[test]
    fn gaussian_discounts_compose(mean in -100.0f64..100.0, var in 1e-6f64..1e6, g1 in 0.001f64..=1.0, g2 in 0.001f64..=1.0) {
        let s = GaussianState::new(mean, var).unwrap();
        let (d1, d2) = (DiscountFactor::new(g1).unwrap(), DiscountFactor::new(g2).unwrap());
        let twice = discount_gaussian(&discount_gaussian(&s, d1), d2);
        let once = discount_gaussian(&s, DiscountFactor::new(g1 * g2).unwrap());
        prop_assert!(ulp_distance(twice.variance(), once.variance()) <= 4);
        prop_assert_eq!(twice.mean(), once.mean());
    }

    #[test]
    fn sampled_indices_are_ordered_and_distinct(
        weights in prop::collection::vec(0.0f64..10.0, 1..200),
        k in 1usize..60,
        seed in any::<u64>(),
    ) {
        let picked = sample_indices(&weights, k, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(picked.len(), k.min(weights.len()));
        prop_assert!(picked.windows(2).all(|p| p[0] < p[1]));
        prop_assert!(picked.iter().all(|i| *i < weights.len()));
        let again = sample_indices(&weights, k, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(picked, again);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn objective_is_bit_reproducible(seed in any::<u64>(), gamma in 0.01f64..=1.0) {
        let trace = generate(&EnvConfig::default_biased_die(), seed).unwrap();
        let subject = SubjectTrace::from_predictives(&trace.truths).unwrap();
        let prior = Prior::categorical(vec![1.0; 6]).unwrap();
        let g = DiscountFactor::new(gamma).unwrap();
        let a = mean_update_divergence(&subject, &trace.observations, &prior, g).unwrap();
        let b = mean_update_divergence(&subject, &trace.observations, &prior, g).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn traces_are_reproducible(seed in any::<u64>()) {
        for cfg in [EnvConfig::default_biased_die(), EnvConfig::default_shifting_gaussian()] {
            prop_assert_eq!(generate(&cfg, seed).unwrap(), generate(&cfg, seed).unwrap());
        }
    }
}

#[test]
fn zero_rate_uniform_at_two_to_the_twenty() {
    let t = 1 << 20;
    let w = forgetting_weights(t, 0.0).unwrap();
    assert!(w.as_slice().iter().all(|x| *x == 1.0 / t as f64));
}
