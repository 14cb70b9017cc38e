#![allow(dead_code)]

use v2vrl::env::{Action, Environment};

/// `count` successes out of `n` draws lie within 3 sigma of `n * p`.
pub fn within_3_sigma(count: usize, n: usize, p: f64) -> bool {
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    (count as f64 - n as f64 * p).abs() <= 3.0 * sigma
}

fn pl_v2v(d: f64) -> f64 {
    44.0 + 20.0 * d.max(3.0).log10()
}

fn lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Replays a recorded action trace on a frozen, unshadowed instance from
/// positions alone and returns how many agents delivered their payload.
///
/// Built only from the V2V path-loss formula and the Shannon rate, so it does not
/// share code with the simulator's channel or step logic.
pub fn replay_trace_successes(env: &Environment, actions: &[Vec<Action>]) -> usize {
    let cfg = env.config();
    let pos = |id: usize| env.vehicles().iter().find(|v| v.id == id).unwrap().position;
    let links = env.links();
    let n = links.len();
    let noise = watts(cfg.noise_dbm);
    let p_v2i = watts(cfg.v2i_power_dbm);
    let mut load = vec![cfg.payload_bits; n];
    let mut left = vec![cfg.budget_slots; n];
    let mut done = vec![false; n];
    let mut success = vec![false; n];
    for joint in actions {
        let active: Vec<bool> = done.iter().map(|d| !d).collect();
        let mut rate = vec![0.0; n];
        for k in (0..n).filter(|&k| active[k]) {
            let band = joint[k].subband;
            let rx = pos(links[k].rx);
            let signal =
                watts(cfg.power_levels_dbm[joint[k].power_level]) * lin(-pl_v2v(pos(links[k].tx).distance(rx)));
            let mut interference = noise + p_v2i * lin(-pl_v2v(env.v2i_users()[band].distance(rx)));
            for j in (0..n).filter(|&j| j != k && active[j] && joint[j].subband == band) {
                interference +=
                    watts(cfg.power_levels_dbm[joint[j].power_level]) * lin(-pl_v2v(pos(links[j].tx).distance(rx)));
            }
            rate[k] = cfg.bandwidth_hz * (1.0 + signal / interference).log2();
        }
        for k in (0..n).filter(|&k| active[k]) {
            load[k] -= load[k].min(rate[k] * cfg.slot_s);
            left[k] -= 1;
            if load[k] <= 0.0 {
                done[k] = true;
                success[k] = true;
            } else if left[k] == 0 {
                done[k] = true;
            }
        }
    }
    assert!(done.iter().all(|&d| d), "trace ended with agents still active");
    success.iter().filter(|&&s| s).count()
}
