use nnfuzz_core::sampling::{
    p1, p2, selection_probability, weighted_without_replacement, Sampler, SamplerParams,
    SamplingStrategy, Seed, SeedOrigin,
};
use nnfuzz_core::{Shape, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn corpus(n: usize) -> Vec<Seed> {
    (0..n)
        .map(|i| {
            let img = Tensor::filled(Shape::new([8, 8, 1]), (i * 7 % 256) as f32);
            Seed::new(i, img, 0, SeedOrigin::Initial)
        })
        .collect()
}

fn reference_p1(x: u32, a: f64, b: f64) -> f64 {
    1.0 / (1.0 + (a * x as f64 + b).exp())
}

#[test]
fn p1_decreases_strictly_on_a_grid() {
    for a in [0.05, 0.1, 0.3, 0.5, 1.0] {
        for b in [-3.0, -1.0, 0.0, 1.0] {
            for x in 0..100 {
                assert!(p1(x + 1, a, b) < p1(x, a, b), "a {a} b {b} x {x}");
                assert!((p1(x, a, b) - reference_p1(x, a, b)).abs() < 1e-15);
            }
        }
    }
}

#[test]
fn blend_endpoints_are_exact() {
    let mut s = corpus(1).remove(0);
    s.fuzz_count = 4;
    s.last_gain = 0.03;
    let mut params = SamplerParams::new(SamplingStrategy::Frequency, 16);
    assert_eq!(selection_probability(&s, &params), p1(4, 0.3, -1.0));
    params.circle = 16;
    assert_eq!(selection_probability(&s, &params), p2(0.03, 16, 16));
    assert!(p2(0.03, 16, 16) <= 1.0);
    params.circle = 4;
    let w = 4.0 / 16.0;
    let want = (1.0 - w) * p1(4, 0.3, -1.0) + w * p2(0.03, 4, 16);
    assert!((selection_probability(&s, &params) - want).abs() < 1e-15);
}

#[test]
fn zero_gain_never_produces_nan_or_inf() {
    for circle in 0..=20 {
        for gain in [0.0, -0.0, 1e-300, 1e-7, 0.5, 1.0] {
            let v = p2(gain, circle, 20);
            assert!(
                v.is_finite() && v > 0.0 && v <= 1.0,
                "gain {gain} circle {circle}"
            );
            let mut s = corpus(1).remove(0);
            s.last_gain = gain;
            let mut params = SamplerParams::new(SamplingStrategy::Frequency, 20);
            params.circle = circle;
            assert!(selection_probability(&s, &params).is_finite());
        }
    }
}

/// Pearson's chi-squared statistic against expected shares `probs`.
fn chi_squared(counts: &[u64], probs: &[f64]) -> f64 {
    let total: u64 = counts.iter().sum();
    counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = total as f64 * p;
            (c as f64 - e).powi(2) / e
        })
        .sum()
}

#[test]
fn random_strategy_draws_uniformly() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut seeds = corpus(20);
    let mut sampler = Sampler::new(SamplingStrategy::Random, &seeds, 10, &mut rng);
    let params = SamplerParams::new(SamplingStrategy::Random, 1);
    let mut counts = vec![0u64; 20];
    for _ in 0..5000 {
        let picked = sampler.select_next(&mut seeds, 5, &params, &mut rng);
        let mut sorted = picked.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 5, "draws are without replacement");
        for i in picked {
            counts[i] += 1;
        }
    }
    // 19 degrees of freedom; 43.82 is the 0.001 upper tail.
    let stat = chi_squared(&counts, &[0.05; 20]);
    assert!(stat < 43.82, "chi-squared {stat}");
    let bumped: u32 = seeds.iter().map(|s| s.fuzz_count).sum();
    assert_eq!(bumped, 5000 * 5);
}

#[test]
fn weighted_draws_follow_the_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let weights = [1.0, 2.0, 3.0, 4.0];
    let mut counts = vec![0u64; 4];
    for _ in 0..20000 {
        counts[weighted_without_replacement(&weights, 1, &mut rng)[0]] += 1;
    }
    // 3 degrees of freedom; 16.27 is the 0.001 upper tail.
    let stat = chi_squared(&counts, &[0.1, 0.2, 0.3, 0.4]);
    assert!(stat < 16.27, "chi-squared {stat}, counts {counts:?}");
}

#[test]
fn frequency_strategy_prefers_fresh_seeds() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut fresh, mut total) = (0u64, 0u64);
    for _ in 0..500 {
        let mut seeds = corpus(40);
        for s in seeds.iter_mut().skip(20) {
            s.fuzz_count = 30;
        }
        let mut sampler = Sampler::new(SamplingStrategy::Frequency, &seeds, 10, &mut rng);
        let params = SamplerParams::new(SamplingStrategy::Frequency, 16);
        for i in sampler.select_next(&mut seeds, 10, &params, &mut rng) {
            fresh += u64::from(i < 20);
            total += 1;
        }
    }
    let share = fresh as f64 / total as f64;
    assert!(share > 0.99, "fresh share {share}");
}

#[test]
fn clustered_strategy_returns_distinct_seeds() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut seeds = corpus(30);
    let mut sampler = Sampler::new(SamplingStrategy::Clustered, &seeds, 4, &mut rng);
    let params = SamplerParams::new(SamplingStrategy::Clustered, 1);
    for _ in 0..20 {
        let mut picked = sampler.select_next(&mut seeds, 12, &params, &mut rng);
        assert_eq!(picked.len(), 12);
        picked.sort_unstable();
        picked.dedup();
        assert_eq!(picked.len(), 12);
    }
}

proptest! {
    #[test]
    fn selection_probability_is_a_probability(
        x in 0u32..1000,
        gain in 0.0f64..=1.0,
        total in 1u32..100,
        frac in 0.0f64..=1.0,
    ) {
        let mut s = corpus(1).remove(0);
        s.fuzz_count = x;
        s.last_gain = gain;
        let mut params = SamplerParams::new(SamplingStrategy::Frequency, total);
        params.circle = (frac * total as f64).floor() as u32;
        let p = selection_probability(&s, &params);
        prop_assert!(p.is_finite() && (0.0..=1.0).contains(&p));
    }

    #[test]
    fn weighted_draws_are_distinct(seed in any::<u64>(), n in 0usize..30, weights in prop::collection::vec(0.0f64..5.0, 1..30)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut got = weighted_without_replacement(&weights, n, &mut rng);
        prop_assert_eq!(got.len(), n.min(weights.len()));
        got.sort_unstable();
        got.dedup();
        prop_assert_eq!(got.len(), n.min(weights.len()));
    }
}
