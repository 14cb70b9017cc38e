//! Non-learning allocators: the random baseline and an exhaustive-search
//! oracle for tiny frozen instances.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::channel::{Fading, ShadowingSigmas};
use crate::env::{Action, EnvConfig, Environment};
use crate::error::{Error, Result};
use crate::geometry::{Layout, Point, Vehicle};

/// Largest number of joint action sequences the oracle will enumerate.
pub const ORACLE_LIMIT: f64 = 1e7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PolicyKind {
    GreedyQnet,
    Oracle,
    RandomBaseline,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::RandomBaseline => "random",
            PolicyKind::GreedyQnet => "dqn",
            PolicyKind::Oracle => "oracle",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" | "random_baseline" => Ok(PolicyKind::RandomBaseline),
            "dqn" | "greedy_qnet" => Ok(PolicyKind::GreedyQnet),
            "oracle" => Ok(PolicyKind::Oracle),
            other => Err(Error::config("policy", format!("unknown policy {other:?}"))),
        }
    }
}

/// Uniform sub-band at the maximum transmit power. Ignores the observation.
pub fn random_action<R: Rng + ?Sized>(subbands: usize, max_power_level: usize, rng: &mut R) -> Action {
    Action::new(rng.random_range(0..subbands), max_power_level)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Discounted return summed over agents.
    pub best_return: f64,
    /// Joint action per slot; entries of agents that are already done are
    /// placeholders and have no effect.
    pub best_sequence: Vec<Vec<Action>>,
    pub sequences_evaluated: usize,
}

/// Exhaustive search over joint action sequences of a frozen instance.
///
/// `env` must be freshly reset. Returns the maximum of
/// `sum_t gamma^t sum_k r_{k,t}` and the lexicographically smallest joint
/// action sequence attaining it.
pub fn oracle_best_return(env: &Environment, gamma: f64) -> Result<OracleResult> {
    let cfg = env.config();
    if cfg.fading != Fading::Frozen || cfg.shadowing.v2v_db != 0.0 || cfg.shadowing.v2i_db != 0.0 {
        return Err(Error::Contract("oracle needs frozen fading and zero shadowing".into()));
    }
    let n = env.n_agents();
    if n == 0 {
        return Err(Error::Contract("reset the environment before searching".into()));
    }
    let a = cfg.n_actions() as f64;
    let size = a.powf((n * cfg.budget_slots) as f64);
    if size > ORACLE_LIMIT {
        return Err(Error::OracleTooLarge {
            size,
            limit: ORACLE_LIMIT,
        });
    }
    let mut search = Search {
        gamma,
        n_actions: cfg.n_actions(),
        n_power: cfg.n_power_levels(),
        best: None,
        prefix: Vec::new(),
        evaluated: 0,
    };
    search.descend(env, 0, 0.0)?;
    let (best_return, best_sequence) = search.best.expect("at least one sequence");
    Ok(OracleResult {
        best_return,
        best_sequence,
        sequences_evaluated: search.evaluated,
    })
}

struct Search {
    gamma: f64,
    n_actions: usize,
    n_power: usize,
    best: Option<(f64, Vec<Vec<Action>>)>,
    prefix: Vec<Vec<Action>>,
    evaluated: usize,
}

impl Search {
    fn descend(&mut self, env: &Environment, t: usize, acc: f64) -> Result<()> {
        if env.all_done() {
            self.evaluated += 1;
            if self.best.as_ref().is_none_or(|(b, _)| acc > *b) {
                self.best = Some((acc, self.prefix.clone()));
            }
            return Ok(());
        }
        let active: Vec<usize> = (0..env.n_agents())
            .filter(|&k| env.status()[k] == crate::env::AgentStatus::Active)
            .collect();
        let combos = self.n_actions.pow(active.len() as u32);
        let discount = self.gamma.powi(t as i32);
        // Frozen channel: the step rng is never drawn from.
        let mut unused = crate::rng::rng_stream(0, "oracle");
        for c in 0..combos {
            let mut joint = vec![Action::new(0, 0); env.n_agents()];
            let mut rest = c;
            // agent with the lowest index is the most significant digit
            for &k in active.iter().rev() {
                joint[k] = Action::from_flat(rest % self.n_actions, self.n_power);
                rest /= self.n_actions;
            }
            let mut next = env.clone();
            let out = next.step(&joint, &mut unused)?;
            let r: f64 = out.rewards.iter().sum();
            self.prefix.push(joint);
            self.descend(&next, t + 1, acc + discount * r)?;
            self.prefix.pop();
        }
        Ok(())
    }
}

/// Frozen two-vehicle instance small enough for the oracle: one mutual
/// V2V pair 50 m apart near the base station, two sub-bands, one power
/// level, and a payload that needs two clean slots.
pub fn micro_instance(budget_slots: usize) -> Result<Environment> {
    let cfg = EnvConfig {
        layout: Layout::Highway { len_m: 1000.0 },
        n_vehicles: 2,
        subbands: 2,
        power_levels_dbm: vec![23.0],
        budget_slots,
        payload_bits: 10_000.0,
        shadowing: ShadowingSigmas {
            v2v_db: 0.0,
            v2i_db: 0.0,
        },
        fading: Fading::Frozen,
        ..EnvConfig::default()
    };
    let vehicle = |id, x| Vehicle {
        id,
        position: Point::new(x, 0.0),
        speed: 10.0,
        heading: Point::new(1.0, 0.0),
    };
    Environment::with_fixed_positions(
        cfg,
        vec![vehicle(0, 440.0), vehicle(1, 490.0)],
        vec![Point::new(0.0, 0.0), Point::new(10.0, 0.0)],
    )
}
