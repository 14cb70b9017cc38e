//! Success-probability-vs-vehicle-count sweeps.
//!
//! Each `(n_vehicles, seed)` cell is independent: it optionally trains a
//! network, then evaluates every requested policy on the same evaluation
//! episodes (identical channel realizations per policy). Cells run through
//! [`map_indexed`], so they spread over the thread pool when parallel
//! execution is enabled; rows are sorted before writing either way.

use std::path::Path;

use serde::Serialize;

use crate::config::SimConfig;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::policies::{oracle_best_return, PolicyKind};
use crate::trainer::{evaluate, train, EvalOptions, Policy};

pub const CSV_HEADER: &str = "n_vehicles,policy,seed,success_probability,mean_v2i_capacity_bps";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n_vehicles: usize,
    pub policy: PolicyKind,
    pub seed: u64,
    pub success_probability: f64,
    pub mean_v2i_capacity_bps: f64,
    /// First-slot channel checksum of every evaluation episode.
    pub channel_checksums: Vec<u64>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    n_vehicles: usize,
    policy: &'a str,
    seed: u64,
    success_probability: f64,
    mean_v2i_capacity_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(CsvRow {
                n_vehicles: r.n_vehicles,
                policy: r.policy.as_str(),
                seed: r.seed,
                success_probability: r.success_probability,
                mean_v2i_capacity_bps: r.mean_v2i_capacity_bps,
            })
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }

    /// Rows for one policy, in sweep order.
    pub fn policy_rows(&self, policy: PolicyKind) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.policy == policy)
    }
}

fn cell(
    cfg: &SimConfig,
    n_vehicles: usize,
    seed: u64,
    policies: &[PolicyKind],
    exec: Execution,
) -> Result<Vec<SweepRow>> {
    let wrap = |policy: PolicyKind| {
        move |e: Error| Error::Sweep {
            n_vehicles,
            policy: policy.to_string(),
            seed,
            source: Box::new(e),
        }
    };
    let mut env_cfg = cfg.env_config().map_err(wrap(policies[0]))?;
    env_cfg.n_vehicles = n_vehicles;
    let tr_cfg = cfg.trainer_config();
    let template = Environment::new(env_cfg).map_err(wrap(policies[0]))?;
    let opts = EvalOptions {
        episodes: cfg.eval_episodes,
        seed,
        gamma: tr_cfg.gamma,
        record_actions: false,
        exec,
    };

    let mut rows = Vec::with_capacity(policies.len());
    for &policy in policies {
        let report = match policy {
            PolicyKind::RandomBaseline => evaluate(&template, &Policy::Random, &opts),
            PolicyKind::GreedyQnet => {
                let mut env = template.clone();
                train(&mut env, &tr_cfg, seed).and_then(|t| evaluate(&template, &Policy::Greedy(&t.net), &opts))
            }
            PolicyKind::Oracle => {
                let mut env = template.clone();
                env.reset(&mut crate::rng::rng_stream(seed, "eval/0"))
                    .and_then(|_| oracle_best_return(&env, tr_cfg.gamma))
                    .and_then(|o| evaluate(&template, &Policy::Sequence(&o.best_sequence), &opts))
            }
        }
        .map_err(wrap(policy))?;
        rows.push(SweepRow {
            n_vehicles,
            policy,
            seed,
            success_probability: report.success_probability,
            mean_v2i_capacity_bps: report.mean_v2i_capacity_bps,
            channel_checksums: report.episodes.iter().map(|e| e.channel_checksum).collect(),
        });
    }
    Ok(rows)
}

/// Runs every `(count, seed)` cell and every policy; rows sorted by
/// `(n_vehicles, policy, seed)`.
pub fn run_sweep(
    cfg: &SimConfig,
    vehicle_counts: &[usize],
    policies: &[PolicyKind],
    seeds: &[u64],
    exec: Execution,
) -> Result<SweepResult> {
    if vehicle_counts.is_empty() {
        return Err(Error::config("vehicles", "need at least one vehicle count"));
    }
    if policies.is_empty() {
        return Err(Error::config("policy", "need at least one policy"));
    }
    if seeds.is_empty() {
        return Err(Error::config("seeds", "need at least one seed"));
    }
    let mut policies = policies.to_vec();
    policies.sort();
    policies.dedup();
    let cells: Vec<(usize, u64)> = vehicle_counts
        .iter()
        .flat_map(|&n| seeds.iter().map(move |&s| (n, s)))
        .collect();
    let results = map_indexed(cells.len(), exec, |i| {
        let (n, seed) = cells[i];
        cell(cfg, n, seed, &policies, exec)
    });
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    rows.sort_by(|a, b| (a.n_vehicles, a.policy.as_str(), a.seed).cmp(&(b.n_vehicles, b.policy.as_str(), b.seed)));
    Ok(SweepResult { rows })
}

/// Parses `"20,40,60"` into a list.
pub fn parse_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Error::config("vehicles", format!("not a count: {t:?}")))
        })
        .collect()
}

/// Parses `"1..5"` (inclusive) or `"1,2,7"` into a list of seeds.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = |t: &str| Error::config("seeds", format!("not a seed list: {t:?}"));
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad(text))?;
        let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad(text))?;
        if b < a {
            return Err(bad(text));
        }
        return Ok((a..=b).collect());
    }
    text.split(',').map(|t| t.trim().parse().map_err(|_| bad(t))).collect()
}
