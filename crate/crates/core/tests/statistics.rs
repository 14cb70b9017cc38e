mod common;

use statrs::distribution::{ChiSquared, ContinuousCDF};

use common::within_3_sigma;
use v2vrl::env::{EnvConfig, Environment};
use v2vrl::policies::random_action;
use v2vrl::qnet::QNetwork;
use v2vrl::replay::{ReplayMemory, Transition};
use v2vrl::rng::rng_stream;
use v2vrl::trainer::{epsilon, run_episode, select_action, Policy, TrainerConfig};

fn memory(size: usize) -> ReplayMemory {
    let mut mem = ReplayMemory::new(size, 2, 4).unwrap();
    for i in 0..size {
        mem.push(Transition {
            s: vec![i as f64, 0.0],
            a: i % 4,
            r: i as f64,
            s_next: vec![0.0, 0.0],
            terminal: false,
        })
        .unwrap();
    }
    mem
}

#[test]
fn single_draws_are_uniform() {
    let mem = memory(4);
    let mut rng = rng_stream(11, "replay");
    let mut counts = [0usize; 4];
    let draws = 100_000;
    for _ in 0..draws {
        counts[mem.sample_indices(1, &mut rng).unwrap()[0]] += 1;
    }
    for c in counts {
        assert!(within_3_sigma(c, draws, 0.25), "{counts:?}");
    }
}

#[test]
fn batches_have_distinct_items() {
    let mem = memory(100);
    let mut rng = rng_stream(12, "replay");
    for _ in 0..1000 {
        let mut idx = mem.sample_indices(64, &mut rng).unwrap();
        idx.sort_unstable();
        idx.dedup();
        assert_eq!(idx.len(), 64);
    }
}

/// Probability that two distinct uniform indices in `0..size` are `d` apart.
fn gap_probability(size: usize, d: usize) -> f64 {
    2.0 * (size - d) as f64 / (size * (size - 1)) as f64
}

#[test]
fn age_gaps_match_uniform_sampling() {
    let size = 500;
    let batch = 32;
    let batches = 10_000;
    let mem = memory(size);
    let mut rng = rng_stream(13, "replay");
    // bins of equal width over gaps 1..size
    let n_bins = 25;
    let width = (size - 1).div_ceil(n_bins);
    let mut observed = vec![0usize; n_bins];
    for _ in 0..batches {
        let picks = mem.sample(batch, &mut rng).unwrap();
        for pair in picks.windows(2) {
            let gap = (pair[0].s[0] - pair[1].s[0]).abs() as usize;
            observed[(gap - 1) / width] += 1;
        }
    }
    let total = (batches * (batch - 1)) as f64;
    let mut expected = vec![0.0; n_bins];
    for d in 1..size {
        expected[(d - 1) / width] += total * gap_probability(size, d);
    }
    let stat: f64 = observed
        .iter()
        .zip(&expected)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum();
    let p = 1.0 - ChiSquared::new((n_bins - 1) as f64).unwrap().cdf(stat);
    assert!(p > 0.01, "chi-square {stat:.2}, p = {p:.4}");
}

#[test]
fn full_exploration_is_uniform_over_actions() {
    let net = QNetwork::new(&[18, 16, 12], &mut rng_stream(1, "init")).unwrap();
    let x = vec![0.3; 18];
    let mut rng = rng_stream(14, "explore");
    let mut counts = [0usize; 12];
    let draws = 100_000;
    for _ in 0..draws {
        counts[select_action(&net, &x, 1.0, 3, &mut rng).unwrap().flat(3)] += 1;
    }
    for c in counts {
        assert!(within_3_sigma(c, draws, 1.0 / 12.0), "{counts:?}");
    }
}

#[test]
fn random_baseline_bands_are_uniform_at_max_power() {
    let mut rng = rng_stream(15, "explore");
    let mut counts = [0usize; 4];
    let draws = 100_000;
    for _ in 0..draws {
        let a = random_action(4, 2, &mut rng);
        assert_eq!(a.power_level, 2);
        counts[a.subband] += 1;
    }
    for c in counts {
        assert!(within_3_sigma(c, draws, 0.25), "{counts:?}");
    }
}

#[test]
fn random_baseline_ignores_observations() {
    // Two different channel draws, same policy stream: identical first-slot
    // actions, and the same band histogram over whole episodes.
    let template = Environment::new(EnvConfig {
        n_vehicles: 20,
        ..EnvConfig::default()
    })
    .unwrap();
    let play = |channel_seed: u64| {
        let mut env = template.clone();
        let rec = run_episode(
            &mut env,
            &Policy::Random,
            0.95,
            true,
            &mut rng_stream(channel_seed, "channel"),
            &mut rng_stream(5, "policy"),
        )
        .unwrap();
        rec.actions.unwrap()
    };
    let a = play(1);
    let b = play(2);
    assert_ne!(
        template.clone().reset(&mut rng_stream(1, "channel")).unwrap()[0].g,
        template.clone().reset(&mut rng_stream(2, "channel")).unwrap()[0].g
    );
    assert_eq!(a[0], b[0]);
}

#[test]
fn epsilon_schedule_endpoints_and_monotonicity() {
    let cfg = TrainerConfig::default();
    assert_eq!(epsilon(&cfg, 0), 1.0);
    let end = (cfg.eps_anneal_frac * cfg.episodes as f64) as usize;
    assert_eq!(epsilon(&cfg, end), 0.02);
    assert_eq!(epsilon(&cfg, cfg.episodes - 1), 0.02);
    assert!((epsilon(&cfg, end / 2) - 0.51).abs() < 1e-12);
    for ep in 1..cfg.episodes {
        assert!(epsilon(&cfg, ep) <= epsilon(&cfg, ep - 1));
    }
}
