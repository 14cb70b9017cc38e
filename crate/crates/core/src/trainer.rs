//! Deep Q-learning with experience replay for the shared-parameter V2V agents,
//! plus greedy evaluation.
//!
//! All agents act with one network and feed one replay memory. After every
//! environment slot a single mini-batch SGD step is taken on the squared TD
//! error, with targets from a hard-synchronized copy of the network.

use rand::Rng;

use crate::env::{Action, AgentStatus, EnvConfig, Environment, Observation};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::policies::random_action;
use crate::qnet::{Activations, Gradient, QNetwork};
use crate::replay::{ReplayMemory, Transition};
use crate::rng::{rng_stream, SimRng, EXPLORE, INIT, REPLAY};

/// Training aborts when the mean |Q| of a mini-batch exceeds this.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub episodes: usize,
    pub gamma: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_anneal_frac: f64,
    pub target_sync_steps: usize,
    pub lr: f64,
    pub batch: usize,
    pub replay_capacity: usize,
    pub hidden_layers: Vec<usize>,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            episodes: 3000,
            gamma: 0.95,
            eps_start: 1.0,
            eps_end: 0.02,
            eps_anneal_frac: 0.8,
            target_sync_steps: 500,
            lr: 1e-3,
            batch: 64,
            replay_capacity: 100_000,
            hidden_layers: vec![64, 32],
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config("gamma", "must be in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.eps_start) {
            return Err(Error::config("eps_start", "must be in [0, 1]"));
        }
        if !(0.0..=self.eps_start).contains(&self.eps_end) {
            return Err(Error::config("eps_end", "must be in [0, eps_start]"));
        }
        if !(0.0..=1.0).contains(&self.eps_anneal_frac) {
            return Err(Error::config("eps_anneal_frac", "must be in [0, 1]"));
        }
        if self.target_sync_steps == 0 {
            return Err(Error::config("target_sync_steps", "must be >= 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr", "must be positive"));
        }
        if self.batch == 0 {
            return Err(Error::config("batch", "must be >= 1"));
        }
        if self.replay_capacity < self.batch {
            return Err(Error::config("replay_capacity", "must be >= batch"));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::config("hidden_layers", "layer sizes must be >= 1"));
        }
        Ok(())
    }

    pub fn layer_dims(&self, env: &EnvConfig) -> Vec<usize> {
        let mut dims = vec![env.obs_dim()];
        dims.extend(&self.hidden_layers);
        dims.push(env.n_actions());
        dims
    }
}

/// Linear anneal from `eps_start` to `eps_end` over the first
/// `eps_anneal_frac * episodes` episodes, then constant.
pub fn epsilon(cfg: &TrainerConfig, episode: usize) -> f64 {
    let window = cfg.eps_anneal_frac * cfg.episodes as f64;
    if window <= 0.0 || episode as f64 >= window {
        return cfg.eps_end;
    }
    let frac = episode as f64 / window;
    cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac
}

/// Index of the largest value; the lowest index wins ties.
pub fn greedy_index(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy choice over all `M * P` actions.
pub fn select_action<R: Rng + ?Sized>(
    net: &QNetwork,
    features: &[f64],
    eps: f64,
    n_power_levels: usize,
    rng: &mut R,
) -> Result<Action> {
    let n_actions = net.output_dim();
    if eps > 0.0 && rng.random::<f64>() < eps {
        return Ok(Action::from_flat(rng.random_range(0..n_actions), n_power_levels));
    }
    let q = net.forward(features)?;
    Ok(Action::from_flat(greedy_index(&q), n_power_levels))
}

/// `r` for terminal transitions, otherwise `r + gamma * max_a Q_target(s', a)`.
pub fn td_target(r: f64, s_next: &[f64], terminal: bool, target: &QNetwork, gamma: f64) -> Result<f64> {
    if terminal {
        return Ok(r);
    }
    let q = target.forward(s_next)?;
    Ok(r + gamma * q.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    pub epsilon: f64,
    /// Episode return averaged over agents.
    pub mean_reward: f64,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeLog>,
    pub updates: usize,
    pub target_syncs: usize,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("episode,epsilon,mean_reward,success_rate\n");
        for e in &self.episodes {
            s.push_str(&format!(
                "{},{},{},{}\n",
                e.episode, e.epsilon, e.mean_reward, e.success_rate
            ));
        }
        s
    }
}

struct Learner<'a> {
    cfg: &'a TrainerConfig,
    online: QNetwork,
    target: QNetwork,
    memory: ReplayMemory,
    replay_rng: SimRng,
    grad: Gradient,
    cache: Activations,
    updates: usize,
    syncs: usize,
}

impl Learner<'_> {
    /// One mini-batch step; a no-op until the memory holds a full batch.
    fn update(&mut self, episode: usize) -> Result<()> {
        let batch = self.cfg.batch;
        let idx = match self.memory.sample_indices(batch, &mut self.replay_rng) {
            Ok(idx) => idx,
            Err(Error::NotEnoughData { .. }) => return Ok(()),
            Err(e) => return Err(e),
        };
        self.grad.clear();
        let mut abs_q = 0.0;
        for t in idx.iter().map(|&i| self.memory.get(i)) {
            let y = td_target(t.r, &t.s_next, t.terminal, &self.target, self.cfg.gamma)?;
            self.online.forward_cached(&t.s, &mut self.cache)?;
            let q = self.cache.output()[t.a];
            abs_q += q.abs();
            self.online
                .backward_accumulate(&mut self.cache, t.a, q - y, &mut self.grad)?;
        }
        let mean_abs_q = abs_q / batch as f64;
        if mean_abs_q.is_nan() || mean_abs_q > DIVERGENCE_LIMIT {
            return Err(Error::Divergence { episode, mean_abs_q });
        }
        self.grad.scale(1.0 / batch as f64);
        self.online.sgd_update(&self.grad, self.cfg.lr)?;
        self.updates += 1;
        if self.updates.is_multiple_of(self.cfg.target_sync_steps) {
            self.target = self.online.clone();
            self.syncs += 1;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: QNetwork,
    pub log: TrainingLog,
}

/// Trains a fresh network on `env`. Every episode resets `env` from its own
/// stream, so a run is a pure function of `(env, cfg, seed)`.
pub fn train(env: &mut Environment, cfg: &TrainerConfig, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    let env_cfg = env.config().clone();
    let dims = cfg.layer_dims(&env_cfg);
    let online = QNetwork::new(&dims, &mut rng_stream(seed, INIT))?;
    let mut learner = Learner {
        cfg,
        target: online.clone(),
        grad: Gradient::zeros_like(&online),
        online,
        memory: ReplayMemory::new(cfg.replay_capacity, env_cfg.obs_dim(), env_cfg.n_actions())?,
        replay_rng: rng_stream(seed, REPLAY),
        cache: Activations::default(),
        updates: 0,
        syncs: 0,
    };
    let mut explore = rng_stream(seed, EXPLORE);
    let n_power = env_cfg.n_power_levels();
    let mut log = TrainingLog::default();

    for episode in 0..cfg.episodes {
        let eps = epsilon(cfg, episode);
        let mut ep_rng = rng_stream(seed, &format!("train/{episode}"));
        let obs = env.reset(&mut ep_rng)?;
        let n = obs.len();
        let mut feats: Vec<Vec<f64>> = obs.iter().map(|o| o.features(env_cfg.neighbors)).collect();
        let mut total_reward = 0.0;
        while !env.all_done() {
            let mut joint = vec![Action::new(0, 0); n];
            for k in 0..n {
                if env.status()[k] == AgentStatus::Active {
                    joint[k] = select_action(&learner.online, &feats[k], eps, n_power, &mut explore)?;
                }
            }
            let out = env.step(&joint, &mut ep_rng)?;
            let next: Vec<Vec<f64>> = out.next_obs.iter().map(|o| o.features(env_cfg.neighbors)).collect();
            for k in (0..n).filter(|&k| out.acted[k]) {
                total_reward += out.rewards[k];
                learner.memory.push(Transition {
                    s: std::mem::take(&mut feats[k]),
                    a: joint[k].flat(n_power),
                    r: out.rewards[k],
                    s_next: next[k].clone(),
                    terminal: out.done[k],
                })?;
            }
            learner.update(episode)?;
            feats = next;
        }
        let successes = env.status().iter().filter(|s| **s == AgentStatus::Succeeded).count();
        log.episodes.push(EpisodeLog {
            episode,
            epsilon: eps,
            mean_reward: total_reward / n as f64,
            success_rate: successes as f64 / n as f64,
        });
    }
    log.updates = learner.updates;
    log.target_syncs = learner.syncs;
    Ok(TrainOutcome {
        net: learner.online,
        log,
    })
}

/// Policy used during evaluation.
#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    /// Uniform sub-band, maximum power.
    Random,
    /// Argmax of the Q-network (epsilon = 0).
    Greedy(&'a QNetwork),
    /// Fixed joint action per slot, e.g. an oracle solution.
    Sequence(&'a [Vec<Action>]),
}

impl Policy<'_> {
    fn joint_action<R: Rng + ?Sized>(
        &self,
        env: &Environment,
        obs: &[Observation],
        slot: usize,
        rng: &mut R,
    ) -> Result<Vec<Action>> {
        let cfg = env.config();
        let n = env.n_agents();
        let mut joint = vec![Action::new(0, 0); n];
        for k in 0..n {
            if env.status()[k] != AgentStatus::Active {
                continue;
            }
            joint[k] = match self {
                Policy::Random => random_action(cfg.subbands, cfg.max_power_level(), rng),
                Policy::Greedy(net) => {
                    let q = net.forward(&obs[k].features(cfg.neighbors))?;
                    Action::from_flat(greedy_index(&q), cfg.n_power_levels())
                }
                Policy::Sequence(seq) => seq
                    .get(slot)
                    .and_then(|j| j.get(k))
                    .copied()
                    .ok_or_else(|| Error::Contract(format!("sequence has no action for slot {slot}, agent {k}")))?,
            };
        }
        Ok(joint)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    /// Checksum of the episode's first-slot channel state.
    pub channel_checksum: u64,
    pub agents: usize,
    pub successes: usize,
    pub slots: usize,
    /// Sum over slots of the mean V2I capacity across sub-bands.
    pub v2i_capacity_sum: f64,
    /// Discounted return summed over agents (with the `gamma` passed in).
    pub discounted_return: f64,
    /// Joint actions per slot, when requested.
    pub actions: Option<Vec<Vec<Action>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub success_probability: f64,
    pub mean_v2i_capacity_bps: f64,
    pub episodes: Vec<EpisodeRecord>,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub episodes: usize,
    pub seed: u64,
    pub gamma: f64,
    pub record_actions: bool,
    pub exec: Execution,
}

/// Plays one episode of `policy` on `env`.
pub fn run_episode<R: Rng + ?Sized, P: Rng + ?Sized>(
    env: &mut Environment,
    policy: &Policy<'_>,
    gamma: f64,
    record_actions: bool,
    env_rng: &mut R,
    policy_rng: &mut P,
) -> Result<EpisodeRecord> {
    let mut obs = env.reset(env_rng)?;
    let channel_checksum = env.channel().expect("reset builds a channel").checksum();
    let mut record = EpisodeRecord {
        channel_checksum,
        agents: obs.len(),
        successes: 0,
        slots: 0,
        v2i_capacity_sum: 0.0,
        discounted_return: 0.0,
        actions: record_actions.then(Vec::new),
    };
    while !env.all_done() {
        let joint = policy.joint_action(env, &obs, record.slots, policy_rng)?;
        let out = env.step(&joint, env_rng)?;
        let m = out.v2i_capacities.len() as f64;
        record.v2i_capacity_sum += out.v2i_capacities.iter().sum::<f64>() / m;
        record.discounted_return += gamma.powi(record.slots as i32) * out.rewards.iter().sum::<f64>();
        if let Some(actions) = record.actions.as_mut() {
            actions.push(joint);
        }
        record.slots += 1;
        obs = out.next_obs;
    }
    record.successes = env.status().iter().filter(|s| **s == AgentStatus::Succeeded).count();
    Ok(record)
}

/// Evaluates `policy` on `opts.episodes` episodes of `template`.
///
/// Episode `e` draws its channel from stream `eval/{e}` of `opts.seed`, so
/// different policies evaluated with the same seed see identical channels.
pub fn evaluate(template: &Environment, policy: &Policy<'_>, opts: &EvalOptions) -> Result<EvalReport> {
    if opts.episodes == 0 {
        return Err(Error::config("eval_episodes", "must be >= 1"));
    }
    let records: Vec<Result<EpisodeRecord>> = map_indexed(opts.episodes, opts.exec, |e| {
        let mut env = template.clone();
        let mut env_rng = rng_stream(opts.seed, &format!("eval/{e}"));
        let mut policy_rng = rng_stream(opts.seed, &format!("eval-policy/{e}"));
        run_episode(
            &mut env,
            policy,
            opts.gamma,
            opts.record_actions,
            &mut env_rng,
            &mut policy_rng,
        )
    });
    let episodes: Vec<EpisodeRecord> = records.into_iter().collect::<Result<_>>()?;
    let agent_episodes: usize = episodes.iter().map(|r| r.agents).sum();
    let successes: usize = episodes.iter().map(|r| r.successes).sum();
    let slots: usize = episodes.iter().map(|r| r.slots).sum();
    let cap: f64 = episodes.iter().map(|r| r.v2i_capacity_sum).sum();
    Ok(EvalReport {
        success_probability: successes as f64 / agent_episodes as f64,
        mean_v2i_capacity_bps: if slots == 0 { 0.0 } else { cap / slots as f64 },
        episodes,
    })
}
