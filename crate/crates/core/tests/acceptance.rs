//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run a subset by passing criterion numbers:
//! `cargo test --release --test acceptance -- 3 5 6`.

mod common;

use std::process::{Command, ExitCode};
use std::time::Instant;

use statrs::distribution::{ChiSquared, ContinuousCDF};

use common::{replay_trace_successes, within_3_sigma};
use v2vrl::channel::ChannelState;
use v2vrl::config::SimConfig;
use v2vrl::env::{capacity, sinr_v2i, sinr_v2v, Action, EnvConfig, Environment, Tx};
use v2vrl::exec::Execution;
use v2vrl::gradcheck::run_gradcheck;
use v2vrl::policies::{micro_instance, oracle_best_return, PolicyKind};
use v2vrl::qnet::QNetwork;
use v2vrl::replay::{ReplayMemory, Transition};
use v2vrl::rng::rng_stream;
use v2vrl::sweep::{run_sweep, SweepResult};
use v2vrl::trainer::{epsilon, evaluate, run_episode, select_action, train, EvalOptions, Policy, TrainerConfig};
use v2vrl::Error;

const COUNTS: [usize; 5] = [20, 40, 60, 80, 100];
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const EVAL_EPISODES: usize = 200;
const MIN_WINS: usize = 4;
const MIN_MEAN_GAIN: f64 = 0.05;
const MONOTONE_ALLOWANCE: f64 = 0.02;
const GRADCHECK_TRIALS: usize = 100;
const GRADCHECK_TOL: f64 = 1e-5;
const ORACLE_EPISODES: usize = 2000;
const ORACLE_HORIZON: usize = 3;
const ORACLE_GAP: f64 = 0.01;
const RANDOM_STEPS: usize = 10_000;
const FREQ_DRAWS: usize = 100_000;
const GAP_BATCHES: usize = 10_000;
const CHI2_P_MIN: f64 = 0.01;

type Check = (u32, &'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn mean_by_count(result: &SweepResult, policy: PolicyKind) -> Vec<f64> {
    COUNTS
        .iter()
        .map(|&n| {
            let rows: Vec<f64> = result
                .policy_rows(policy)
                .filter(|r| r.n_vehicles == n)
                .map(|r| r.success_probability)
                .collect();
            assert_eq!(rows.len(), SEEDS.len());
            rows.iter().sum::<f64>() / rows.len() as f64
        })
        .collect()
}

fn desk_config() -> SimConfig {
    let cfg = SimConfig::default();
    assert_eq!(cfg.subbands, 4);
    assert_eq!(cfg.power_levels_dbm.len(), 3);
    assert_eq!(cfg.budget_slots, 100);
    SimConfig {
        eval_episodes: EVAL_EPISODES,
        ..cfg
    }
}

fn dqn_beats_random() -> Verdict {
    let policies = [PolicyKind::RandomBaseline, PolicyKind::GreedyQnet];
    let result = match run_sweep(&desk_config(), &COUNTS, &policies, &SEEDS, Execution::default()) {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("sweep failed: {e}")),
    };
    let paired = result.policy_rows(PolicyKind::GreedyQnet).all(|d| {
        result
            .policy_rows(PolicyKind::RandomBaseline)
            .any(|r| r.n_vehicles == d.n_vehicles && r.seed == d.seed && r.channel_checksums == d.channel_checksums)
    });
    let dqn = mean_by_count(&result, PolicyKind::GreedyQnet);
    let random = mean_by_count(&result, PolicyKind::RandomBaseline);
    let mut wins = 0;
    let mut table = Vec::new();
    for (i, n) in COUNTS.iter().enumerate() {
        if dqn[i] > random[i] {
            wins += 1;
        }
        table.push(format!("n={n}: dqn {:.4} random {:.4}", dqn[i], random[i]));
    }
    let gain = dqn.iter().zip(&random).map(|(d, r)| d - r).sum::<f64>() / COUNTS.len() as f64;
    verdict(
        paired && wins >= MIN_WINS && gain >= MIN_MEAN_GAIN,
        format!(
            "wins {wins}/5 (need {MIN_WINS}), mean gain {:.2} pp (need {:.0}), paired channels {paired}; {}",
            gain * 100.0,
            MIN_MEAN_GAIN * 100.0,
            table.join("; ")
        ),
    )
}

fn random_baseline_congestion() -> Verdict {
    let result = match run_sweep(
        &desk_config(),
        &COUNTS,
        &[PolicyKind::RandomBaseline],
        &SEEDS,
        Execution::default(),
    ) {
        Ok(r) => r,
        Err(e) => return verdict(false, format!("sweep failed: {e}")),
    };
    let p = mean_by_count(&result, PolicyKind::RandomBaseline);
    let mut worst_rise = f64::NEG_INFINITY;
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            worst_rise = worst_rise.max(p[j] - p[i]);
        }
    }
    let curve: Vec<String> = COUNTS.iter().zip(&p).map(|(n, v)| format!("{n}:{v:.4}")).collect();
    verdict(
        worst_rise <= MONOTONE_ALLOWANCE,
        format!(
            "largest rise with more vehicles {:.2} pp (allowance {:.0}); random success {}",
            worst_rise * 100.0,
            MONOTONE_ALLOWANCE * 100.0,
            curve.join(" ")
        ),
    )
}

fn gradient_check() -> Verdict {
    let dims = TrainerConfig::default().layer_dims(&EnvConfig::default());
    match run_gradcheck(&dims, GRADCHECK_TRIALS, 1) {
        Ok(r) => verdict(
            r.trials == GRADCHECK_TRIALS && r.max_rel_error < GRADCHECK_TOL,
            format!(
                "{} triples, {} entries, max relative error {:.3e} (< {GRADCHECK_TOL:e})",
                r.trials, r.params_checked, r.max_rel_error
            ),
        ),
        Err(e) => verdict(false, format!("gradcheck failed: {e}")),
    }
}

fn oracle_equivalence() -> Verdict {
    let run = || -> v2vrl::Result<(bool, String)> {
        let template = micro_instance(ORACLE_HORIZON)?;
        let mut env = template.clone();
        env.reset(&mut rng_stream(0, "oracle"))?;
        let best = oracle_best_return(&env, 0.95)?;

        let mut trace_ok = true;
        let mut gaps = Vec::new();
        for seed in 1..=3 {
            let cfg = TrainerConfig {
                episodes: ORACLE_EPISODES,
                ..TrainerConfig::default()
            };
            let net = train(&mut env, &cfg, seed)?.net;
            let opts = EvalOptions {
                episodes: 30,
                seed,
                gamma: cfg.gamma,
                record_actions: true,
                exec: Execution::Sequential,
            };
            for policy in [
                Policy::Random,
                Policy::Greedy(&net),
                Policy::Sequence(&best.best_sequence),
            ] {
                let report = evaluate(&template, &policy, &opts)?;
                let by_hand: usize = report
                    .episodes
                    .iter()
                    .map(|e| replay_trace_successes(&env, e.actions.as_ref().expect("recorded")))
                    .sum();
                let agents: usize = report.episodes.iter().map(|e| e.agents).sum();
                trace_ok &= report.success_probability == by_hand as f64 / agents as f64;
            }
            let greedy = run_episode(
                &mut env,
                &Policy::Greedy(&net),
                cfg.gamma,
                false,
                &mut rng_stream(seed, "eval/0"),
                &mut rng_stream(seed, "eval-policy/0"),
            )?;
            gaps.push((greedy.discounted_return - best.best_return).abs() / best.best_return.abs());
        }
        let worst = gaps.iter().cloned().fold(0.0, f64::max);
        Ok((
            trace_ok && worst <= ORACLE_GAP,
            format!(
                "(a) evaluate equals trace replay: {trace_ok}; (b) oracle return {:.6}, greedy gaps {} (<= {:.0}%)",
                best.best_return,
                gaps.iter().map(|g| format!("{:.2e}", g)).collect::<Vec<_>>().join(", "),
                ORACLE_GAP * 100.0
            ),
        ))
    };
    match run() {
        Ok((pass, detail)) => verdict(pass, detail),
        Err(e) => verdict(false, format!("oracle check failed: {e}")),
    }
}

fn environment_contracts() -> Verdict {
    let mut notes = Vec::new();
    let cap_ok = capacity(1.0, 1e6) == 1e6;
    notes.push(format!("capacity(1, 1 MHz) = {}", capacity(1.0, 1e6)));

    let (p, g, noise) = (0.2, 3.7e-9, 3.98e-15);
    let ch = ChannelState::from_tables(1, 1, vec![g], vec![1e-12], vec![2e-11], vec![0.0]).expect("shapes");
    let txs = [Some(Tx { subband: 0, power_w: p })];
    let v2v = sinr_v2v(0, &txs, 0.2, noise, &ch).expect("active");
    let solo_v2i = sinr_v2i(0, &[None], 0.2, noise, &ch);
    let sinr_ok = v2v == p * g / noise && solo_v2i == 0.2 * 2e-11 / noise;
    notes.push(format!("interference-free SINR exact: {sinr_ok}"));

    let mut env = Environment::new(EnvConfig::default()).expect("default config");
    let n_power = env.config().n_power_levels();
    let slot = env.config().slot_s;
    let mut rng = rng_stream(7, "channel");
    let mut pick = rng_stream(7, "explore");
    let mut steps = 0;
    let mut violations = 0;
    while steps < RANDOM_STEPS {
        env.reset(&mut rng).expect("reset");
        while !env.all_done() && steps < RANDOM_STEPS {
            let n = env.n_agents();
            let (load, left) = (env.load().to_vec(), env.slots_left().to_vec());
            let joint: Vec<Action> = (0..n)
                .map(|_| {
                    Action::new(
                        rand::Rng::random_range(&mut pick, 0..4),
                        rand::Rng::random_range(&mut pick, 0..n_power),
                    )
                })
                .collect();
            let out = env.step(&joint, &mut rng).expect("step");
            for k in 0..n {
                let (l1, u1) = (env.load()[k], env.slots_left()[k]);
                let ok = if out.acted[k] {
                    let bits = load[k].min(out.v2v_capacities[k] * slot);
                    out.delivered[k] == bits
                        && l1 == load[k] - bits
                        && l1 >= 0.0
                        && u1 == left[k] - 1
                        && out.done[k] == (l1 == 0.0 || u1 == 0)
                } else {
                    l1 == load[k] && u1 == left[k] && out.delivered[k] == 0.0
                };
                violations += usize::from(!ok);
            }
            steps += 1;
        }
    }
    notes.push(format!("{steps} random steps, {violations} load/budget violations"));
    verdict(cap_ok && sinr_ok && violations == 0, notes.join("; "))
}

fn filled_memory(size: usize) -> ReplayMemory {
    let mut mem = ReplayMemory::new(size, 1, 1).expect("capacity");
    for i in 0..size {
        mem.push(Transition {
            s: vec![i as f64],
            a: 0,
            r: 0.0,
            s_next: vec![0.0],
            terminal: false,
        })
        .expect("well formed");
    }
    mem
}

fn replay_and_exploration() -> Verdict {
    let mut notes = Vec::new();
    let mut rng = rng_stream(21, "replay");

    let mem = filled_memory(4);
    let mut counts = [0usize; 4];
    for _ in 0..FREQ_DRAWS {
        counts[mem.sample_indices(1, &mut rng).expect("non-empty")[0]] += 1;
    }
    let freq_ok = counts.iter().all(|&c| within_3_sigma(c, FREQ_DRAWS, 0.25));
    notes.push(format!("replay frequencies {counts:?}"));

    let mut all = mem.sample_indices(4, &mut rng).expect("full batch");
    all.sort_unstable();
    let full_ok = all == [0, 1, 2, 3];
    let small_ok = matches!(
        filled_memory(3).sample_indices(5, &mut rng),
        Err(Error::NotEnoughData { have: 3, need: 5 })
    );

    let size = 400;
    let mem = filled_memory(size);
    let n_bins = 20;
    let width = (size - 1).div_ceil(n_bins);
    let mut observed = vec![0usize; n_bins];
    let batch = 32;
    for _ in 0..GAP_BATCHES {
        let picks = mem.sample(batch, &mut rng).expect("enough data");
        for w in picks.windows(2) {
            let gap = (w[0].s[0] - w[1].s[0]).abs() as usize;
            observed[(gap - 1) / width] += 1;
        }
    }
    let total = (GAP_BATCHES * (batch - 1)) as f64;
    let mut expected = vec![0.0; n_bins];
    for d in 1..size {
        expected[(d - 1) / width] += total * 2.0 * (size - d) as f64 / (size * (size - 1)) as f64;
    }
    let stat: f64 = observed
        .iter()
        .zip(&expected)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum();
    let p_gap = 1.0 - ChiSquared::new((n_bins - 1) as f64).expect("dof").cdf(stat);
    notes.push(format!("age-gap chi-square p = {p_gap:.3}"));

    let net = QNetwork::new(&[18, 16, 12], &mut rng_stream(21, "init")).expect("dims");
    let x = vec![0.5; 18];
    let mut explore = rng_stream(21, "explore");
    let mut acts = [0usize; 12];
    for _ in 0..FREQ_DRAWS {
        acts[select_action(&net, &x, 1.0, 3, &mut explore).expect("forward").flat(3)] += 1;
    }
    let eps1_ok = acts.iter().all(|&c| within_3_sigma(c, FREQ_DRAWS, 1.0 / 12.0));

    let cfg = TrainerConfig::default();
    let end = (cfg.eps_anneal_frac * cfg.episodes as f64) as usize;
    let sched_ok = epsilon(&cfg, 0) == cfg.eps_start
        && epsilon(&cfg, end) == cfg.eps_end
        && epsilon(&cfg, cfg.episodes - 1) == cfg.eps_end
        && (epsilon(&cfg, end / 2) - 0.51).abs() < 1e-12
        && (1..cfg.episodes).all(|e| epsilon(&cfg, e) <= epsilon(&cfg, e - 1));
    notes.push(format!(
        "full batch {full_ok}, short memory refused {small_ok}, eps=1 uniform {eps1_ok}, schedule {sched_ok}"
    ));
    verdict(
        freq_ok && full_ok && small_ok && p_gap > CHI2_P_MIN && eps1_ok && sched_ok,
        notes.join("; "),
    )
}

fn determinism() -> Verdict {
    let run = || -> Result<(bool, String), String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let cfg = dir.path().join("sweep.toml");
        std::fs::write(&cfg, "episodes = 40\neval_episodes = 20\n").map_err(|e| e.to_string())?;
        let mut csvs = Vec::new();
        for i in 0..2 {
            let out = dir.path().join(format!("run{i}.csv"));
            let status = Command::new(env!("CARGO_BIN_EXE_v2vrl"))
                .args(["sweep", "--config"])
                .arg(&cfg)
                .args(["--vehicles", "20,40", "--seeds", "1..2", "--out"])
                .arg(&out)
                .status()
                .map_err(|e| e.to_string())?;
            if !status.success() {
                return Err(format!("sweep exited with {status}"));
            }
            csvs.push(std::fs::read(&out).map_err(|e| e.to_string())?);
        }
        let csv_ok = csvs[0] == csvs[1] && !csvs[0].is_empty();

        let mut env = Environment::new(EnvConfig::default()).map_err(|e| e.to_string())?;
        let net = train(
            &mut env,
            &TrainerConfig {
                episodes: 5,
                ..TrainerConfig::default()
            },
            3,
        )
        .map_err(|e| e.to_string())?
        .net;
        let path = dir.path().join("net.ckpt");
        net.save(&path).map_err(|e| e.to_string())?;
        let back = QNetwork::load(&path).map_err(|e| e.to_string())?;
        let mut rng = rng_stream(3, "inputs");
        let mut mismatches = 0;
        for _ in 0..1000 {
            let x: Vec<f64> = (0..net.input_dim())
                .map(|_| rand::Rng::random_range(&mut rng, -2.0..2.0))
                .collect();
            let (a, b) = (
                net.forward(&x).map_err(|e| e.to_string())?,
                back.forward(&x).map_err(|e| e.to_string())?,
            );
            mismatches += a
                .iter()
                .zip(&b)
                .filter(|(u, v)| format!("{u:.16e}") != format!("{v:.16e}"))
                .count();
        }
        Ok((
            csv_ok && mismatches == 0,
            format!(
                "sweep CSV byte-identical: {csv_ok} ({} bytes); checkpoint Q-values differing at 17 significant digits: {mismatches}",
                csvs[0].len()
            ),
        ))
    };
    match run() {
        Ok((pass, detail)) => verdict(pass, detail),
        Err(e) => verdict(false, e),
    }
}

fn main() -> ExitCode {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [Check; 7] = [
        (1, "DQN beats random allocation", dqn_beats_random),
        (2, "random baseline congestion monotonicity", random_baseline_congestion),
        (3, "gradient correctness", gradient_check),
        (4, "oracle equivalence", oracle_equivalence),
        (5, "environment unit contracts", environment_contracts),
        (6, "replay and exploration statistics", replay_and_exploration),
        (7, "determinism", determinism),
    ];
    // cheap criteria first, the training sweep last
    let order = [2, 3, 4, 5, 6, 7, 1];
    let mut results = Vec::new();
    for id in order {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let (_, name, check) = criteria[id as usize - 1];
        let start = Instant::now();
        let v = check();
        let secs = start.elapsed().as_secs_f64();
        println!(
            "{} criterion {id} ({name}): {} [{secs:.1} s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        results.push((id, name, v.pass));
    }
    results.sort_by_key(|r| r.0);
    println!("summary:");
    for (id, name, pass) in &results {
        println!("  {} {id} {name}", if *pass { "PASS" } else { "FAIL" });
    }
    if results.iter().all(|r| r.2) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
