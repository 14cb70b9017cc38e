//! Multi-agent V2V spectrum-sharing environment.
//!
//! Each V2V link is an agent. V2I uplinks own the `M` sub-bands
//! orthogonally (one uplink user per sub-band); V2V links reuse them. In each
//! slot every still-active agent picks a sub-band and a power level from its
//! own observation, all agents act simultaneously, and the slot's SINRs decide
//! how many payload bits each link delivers.
//!
//! Inactive agents (payload delivered or deadline expired) stay silent and
//! cause no interference.

use rand::Rng;

use crate::channel::{
    build_channel_state, dbm_to_watts, linear_to_db, watts_to_dbm, ChannelState, Fading, LargeScale, ShadowingSigmas,
};
use crate::error::{Error, Result};
use crate::geometry::{form_links, neighbor_sets, spawn_vehicles, Layout, Point, V2VLink, Vehicle};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardWeights {
    pub w_i: f64,
    pub w_v: f64,
    pub w_t: f64,
    pub r_success: f64,
    pub r_fail: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            w_i: 1.0,
            w_v: 1.0,
            w_t: 1.0,
            r_success: 1.0,
            r_fail: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub layout: Layout,
    pub n_vehicles: usize,
    pub subbands: usize,
    pub power_levels_dbm: Vec<f64>,
    pub v2i_power_dbm: f64,
    pub noise_dbm: f64,
    pub bandwidth_hz: f64,
    pub slot_s: f64,
    pub budget_slots: usize,
    pub payload_bits: f64,
    pub c_ref_bps: f64,
    pub weights: RewardWeights,
    pub neighbors: usize,
    pub shadowing: ShadowingSigmas,
    pub fading: Fading,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            layout: Layout::default(),
            n_vehicles: 20,
            subbands: 4,
            power_levels_dbm: vec![23.0, 10.0, 5.0],
            v2i_power_dbm: 23.0,
            noise_dbm: -114.0,
            bandwidth_hz: 1e6,
            slot_s: 1e-3,
            budget_slots: 100,
            payload_bits: DEFAULT_PAYLOAD_BITS,
            c_ref_bps: 10e6,
            weights: RewardWeights::default(),
            neighbors: 3,
            shadowing: ShadowingSigmas {
                v2v_db: 3.0,
                v2i_db: 8.0,
            },
            fading: Fading::Rayleigh,
        }
    }
}

pub const DEFAULT_PAYLOAD_BITS: f64 = 400_000.0;

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be positive and finite, got {v}")))
            }
        };
        if self.n_vehicles < 2 {
            return Err(Error::config("n_vehicles", "need at least one V2V pair"));
        }
        if self.subbands == 0 {
            return Err(Error::config("subbands", "must be >= 1"));
        }
        if self.power_levels_dbm.is_empty() {
            return Err(Error::config("power_levels_dbm", "need at least one power level"));
        }
        if self.power_levels_dbm.iter().any(|p| !p.is_finite()) {
            return Err(Error::config("power_levels_dbm", "levels must be finite"));
        }
        if self.budget_slots == 0 {
            return Err(Error::config("budget_slots", "must be >= 1"));
        }
        if self.neighbors == 0 {
            return Err(Error::config("neighbors", "must be >= 1"));
        }
        positive("bandwidth_hz_per_subband", self.bandwidth_hz)?;
        positive("slot_ms", self.slot_s)?;
        positive("payload_bits", self.payload_bits)?;
        positive("c_ref_bps", self.c_ref_bps)?;
        if !self.v2i_power_dbm.is_finite() {
            return Err(Error::config("v2i_power_dbm", "must be finite"));
        }
        if !self.noise_dbm.is_finite() {
            return Err(Error::config("noise_dbm", "must be finite"));
        }
        if !(self.shadowing.v2v_db >= 0.0 && self.shadowing.v2v_db.is_finite()) {
            return Err(Error::config("shadow_sigma_v2v_db", "must be >= 0"));
        }
        if !(self.shadowing.v2i_db >= 0.0 && self.shadowing.v2i_db.is_finite()) {
            return Err(Error::config("shadow_sigma_v2i_db", "must be >= 0"));
        }
        let w = &self.weights;
        for (key, v) in [
            ("w_i", w.w_i),
            ("w_v", w.w_v),
            ("w_t", w.w_t),
            ("r_success", w.r_success),
            ("r_fail", w.r_fail),
        ] {
            if !v.is_finite() {
                return Err(Error::config(key, "must be finite"));
            }
        }
        Ok(())
    }

    pub fn n_power_levels(&self) -> usize {
        self.power_levels_dbm.len()
    }

    /// `|A| = M * P`.
    pub fn n_actions(&self) -> usize {
        self.subbands * self.n_power_levels()
    }

    /// Length of the observation vector, `4M + 2`.
    pub fn obs_dim(&self) -> usize {
        4 * self.subbands + 2
    }

    /// Index of the highest configured transmit power (first on ties).
    pub fn max_power_level(&self) -> usize {
        self.power_levels_dbm.iter().enumerate().fold(
            0,
            |best, (i, &p)| if p > self.power_levels_dbm[best] { i } else { best },
        )
    }
}

/// Sub-band and power-level choice of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Action {
    pub subband: usize,
    pub power_level: usize,
}

impl Action {
    pub fn new(subband: usize, power_level: usize) -> Self {
        Action { subband, power_level }
    }

    /// `subband * P + power_level`.
    pub fn flat(self, n_power_levels: usize) -> usize {
        self.subband * n_power_levels + self.power_level
    }

    pub fn from_flat(index: usize, n_power_levels: usize) -> Self {
        Action {
            subband: index / n_power_levels,
            power_level: index % n_power_levels,
        }
    }
}

/// One agent's local view in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Own V2V link gain per sub-band, dB.
    pub g: Vec<f64>,
    /// Interference plus noise measured at the own receiver last slot, dBm.
    pub i_prev: Vec<f64>,
    /// Own transmitter to base-station gain per sub-band, dB.
    pub h: Vec<f64>,
    /// Neighbor transmitters that used each sub-band last slot.
    pub b_prev: Vec<f64>,
    pub load_frac: f64,
    pub time_frac: f64,
}

impl Observation {
    /// Network input: fixed affine normalization of each component.
    pub fn features(&self, neighbors: usize) -> Vec<f64> {
        let mut v = Vec::with_capacity(4 * self.g.len() + 2);
        v.extend(self.g.iter().map(|x| (x + 120.0) / 60.0));
        v.extend(self.i_prev.iter().map(|x| (x + 114.0) / 60.0));
        v.extend(self.h.iter().map(|x| (x + 120.0) / 60.0));
        v.extend(self.b_prev.iter().map(|x| x / neighbors as f64));
        v.push(self.load_frac);
        v.push(self.time_frac);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentStatus {
    Active,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terminal {
    None,
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub rewards: Vec<f64>,
    pub next_obs: Vec<Observation>,
    /// Per sub-band, bits/s.
    pub v2i_capacities: Vec<f64>,
    /// Per link, bits/s; zero for agents that were not active this slot.
    pub v2v_capacities: Vec<f64>,
    /// Bits delivered by each link this slot.
    pub delivered: Vec<f64>,
    pub done: Vec<bool>,
    /// Agents that acted in this slot (were active before it).
    pub acted: Vec<bool>,
}

/// A transmitting V2V link: sub-band and transmit power in watts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tx {
    pub subband: usize,
    pub power_w: f64,
}

/// V2I SINR on sub-band `m` given the active V2V transmissions (linear).
pub fn sinr_v2i(m: usize, txs: &[Option<Tx>], v2i_power_w: f64, noise_w: f64, ch: &ChannelState) -> f64 {
    let interference: f64 = txs
        .iter()
        .enumerate()
        .filter_map(|(k, t)| t.filter(|t| t.subband == m).map(|t| t.power_w * ch.g_vb(k, m)))
        .sum();
    v2i_power_w * ch.g_ib(m) / (noise_w + interference)
}

/// Interference plus noise (watts) at the receiver of link `k` on sub-band `m`,
/// excluding link `k`'s own signal.
pub fn interference_at(
    k: usize,
    m: usize,
    txs: &[Option<Tx>],
    v2i_power_w: f64,
    noise_w: f64,
    ch: &ChannelState,
) -> f64 {
    let v2v: f64 = txs
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != k)
        .filter_map(|(j, t)| t.filter(|t| t.subband == m).map(|t| t.power_w * ch.g_cross(j, k, m)))
        .sum();
    noise_w + v2i_power_w * ch.g_iv(k, m) + v2v
}

/// SINR of V2V link `k` on its chosen sub-band (linear).
pub fn sinr_v2v(k: usize, txs: &[Option<Tx>], v2i_power_w: f64, noise_w: f64, ch: &ChannelState) -> Result<f64> {
    let own = txs
        .get(k)
        .copied()
        .flatten()
        .ok_or_else(|| Error::Contract(format!("agent {k} is not active")))?;
    let denom = interference_at(k, own.subband, txs, v2i_power_w, noise_w, ch);
    Ok(own.power_w * ch.g_vv(k, own.subband) / denom)
}

/// Shannon capacity, bits/s.
pub fn capacity(sinr: f64, bandwidth_hz: f64) -> f64 {
    bandwidth_hz * (1.0 + sinr).log2()
}

/// Per-agent reward for one slot.
///
/// `w_i * sum(C_v2i) / (M * C_ref) + w_v * C_v2v / C_ref - w_t * (1 - time_frac)`,
/// plus `r_success` on delivery or minus `r_fail` on deadline expiry.
pub fn reward(
    weights: &RewardWeights,
    c_ref_bps: f64,
    v2i_capacities: &[f64],
    v2v_capacity: f64,
    time_frac: f64,
    terminal: Terminal,
) -> f64 {
    let m = v2i_capacities.len() as f64;
    let v2i_sum: f64 = v2i_capacities.iter().sum();
    let base = weights.w_i * v2i_sum / (m * c_ref_bps) + weights.w_v * v2v_capacity / c_ref_bps
        - weights.w_t * (1.0 - time_frac);
    match terminal {
        Terminal::None => base,
        Terminal::Success => base + weights.r_success,
        Terminal::Failure => base - weights.r_fail,
    }
}

#[derive(Debug, Clone)]
enum Scenario {
    Random,
    Fixed {
        vehicles: Vec<Vehicle>,
        v2i_users: Vec<Point>,
    },
}

#[derive(Debug, Clone)]
pub struct Environment {
    cfg: EnvConfig,
    scenario: Scenario,
    bs: Point,
    vehicles: Vec<Vehicle>,
    links: Vec<V2VLink>,
    v2i_users: Vec<Point>,
    neighbors: Vec<Vec<usize>>,
    large: Option<LargeScale>,
    channel: Option<ChannelState>,
    load: Vec<f64>,
    slots_left: Vec<usize>,
    status: Vec<AgentStatus>,
    /// Interference plus noise per (agent, sub-band) last slot, watts.
    i_prev: Vec<Vec<f64>>,
    b_prev: Vec<Vec<f64>>,
    power_w: Vec<f64>,
    v2i_power_w: f64,
    noise_w: f64,
}

impl Environment {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        let bs = cfg.layout.center();
        let power_w = cfg.power_levels_dbm.iter().map(|&p| dbm_to_watts(p)).collect();
        let v2i_power_w = dbm_to_watts(cfg.v2i_power_dbm);
        let noise_w = dbm_to_watts(cfg.noise_dbm);
        Ok(Environment {
            cfg,
            scenario: Scenario::Random,
            bs,
            vehicles: Vec::new(),
            links: Vec::new(),
            v2i_users: Vec::new(),
            neighbors: Vec::new(),
            large: None,
            channel: None,
            load: Vec::new(),
            slots_left: Vec::new(),
            status: Vec::new(),
            i_prev: Vec::new(),
            b_prev: Vec::new(),
            power_w,
            v2i_power_w,
            noise_w,
        })
    }

    /// An environment that re-uses the given vehicle and V2I user positions
    /// on every reset instead of dropping new ones.
    pub fn with_fixed_positions(cfg: EnvConfig, vehicles: Vec<Vehicle>, v2i_users: Vec<Point>) -> Result<Self> {
        if vehicles.len() != cfg.n_vehicles {
            return Err(Error::config(
                "n_vehicles",
                format!(
                    "{} fixed vehicles given for n_vehicles = {}",
                    vehicles.len(),
                    cfg.n_vehicles
                ),
            ));
        }
        if v2i_users.len() != cfg.subbands {
            return Err(Error::config(
                "subbands",
                format!(
                    "{} fixed V2I users given for {} sub-bands",
                    v2i_users.len(),
                    cfg.subbands
                ),
            ));
        }
        let mut env = Environment::new(cfg)?;
        env.scenario = Scenario::Fixed { vehicles, v2i_users };
        Ok(env)
    }

    /// Starts a new episode and returns every agent's initial observation.
    ///
    /// Draws (in order) vehicle and V2I user positions, shadowing, and the
    /// first slot's fading from `rng`.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Vec<Observation>> {
        let (vehicles, users) = match &self.scenario {
            Scenario::Random => {
                let v = spawn_vehicles(self.cfg.n_vehicles, &self.cfg.layout, rng)?;
                let u = self.cfg.layout.drop_v2i_users(self.cfg.subbands, rng);
                (v, u)
            }
            Scenario::Fixed { vehicles, v2i_users } => (vehicles.clone(), v2i_users.clone()),
        };
        self.links = form_links(&vehicles)?;
        self.neighbors = neighbor_sets(&vehicles, &self.links, self.cfg.neighbors);
        let large = LargeScale::sample(&vehicles, &self.links, &users, self.bs, self.cfg.shadowing, rng);
        let (n, m) = (self.links.len(), self.cfg.subbands);
        self.channel = Some(build_channel_state(&large, n, m, self.cfg.fading, rng)?);
        self.large = Some(large);
        self.vehicles = vehicles;
        self.v2i_users = users;
        self.load = vec![self.cfg.payload_bits; n];
        self.slots_left = vec![self.cfg.budget_slots; n];
        self.status = vec![AgentStatus::Active; n];
        self.i_prev = vec![vec![self.noise_w; m]; n];
        self.b_prev = vec![vec![0.0; m]; n];
        Ok((0..n).map(|k| self.observe(k)).collect())
    }

    fn observe(&self, k: usize) -> Observation {
        let ch = self.channel.as_ref().expect("reset before observe");
        let m = self.cfg.subbands;
        Observation {
            g: (0..m).map(|b| linear_to_db(ch.g_vv(k, b))).collect(),
            i_prev: self.i_prev[k].iter().map(|&w| watts_to_dbm(w)).collect(),
            h: (0..m).map(|b| linear_to_db(ch.g_vb(k, b))).collect(),
            b_prev: self.b_prev[k].clone(),
            load_frac: self.load[k] / self.cfg.payload_bits,
            time_frac: self.slots_left[k] as f64 / self.cfg.budget_slots as f64,
        }
    }

    /// Applies one joint action and advances one slot.
    ///
    /// Capacities use the channel the agents observed; the next slot's
    /// fading is drawn afterwards and reported in `next_obs`. Actions of
    /// agents that are already done are ignored.
    pub fn step<R: Rng + ?Sized>(&mut self, joint_action: &[Action], rng: &mut R) -> Result<StepOutcome> {
        let n = self.links.len();
        let m_bands = self.cfg.subbands;
        if n == 0 {
            return Err(Error::Contract("step called before reset".into()));
        }
        if joint_action.len() != n {
            return Err(Error::Contract(format!(
                "{} actions given for {n} agents",
                joint_action.len()
            )));
        }
        if self.all_done() {
            return Err(Error::Contract("episode already finished".into()));
        }
        let mut txs: Vec<Option<Tx>> = Vec::with_capacity(n);
        for (k, a) in joint_action.iter().enumerate() {
            if self.status[k] != AgentStatus::Active {
                txs.push(None);
                continue;
            }
            if a.subband >= m_bands || a.power_level >= self.power_w.len() {
                return Err(Error::Contract(format!(
                    "agent {k}: action {a:?} outside the action space"
                )));
            }
            txs.push(Some(Tx {
                subband: a.subband,
                power_w: self.power_w[a.power_level],
            }));
        }
        let ch = self.channel.as_ref().expect("reset before step");
        let bw = self.cfg.bandwidth_hz;

        let v2i_capacities: Vec<f64> = (0..m_bands)
            .map(|m| capacity(sinr_v2i(m, &txs, self.v2i_power_w, self.noise_w, ch), bw))
            .collect();
        let mut v2v_capacities = vec![0.0; n];
        for k in 0..n {
            if txs[k].is_some() {
                v2v_capacities[k] = capacity(sinr_v2v(k, &txs, self.v2i_power_w, self.noise_w, ch)?, bw);
            }
        }

        let mut delivered = vec![0.0; n];
        let mut rewards = vec![0.0; n];
        let acted: Vec<bool> = txs.iter().map(Option::is_some).collect();
        for k in (0..n).filter(|&k| acted[k]) {
            let bits = self.load[k].min(v2v_capacities[k] * self.cfg.slot_s);
            delivered[k] = bits;
            self.load[k] -= bits;
            self.slots_left[k] -= 1;
            let terminal = if self.load[k] <= 0.0 {
                self.load[k] = 0.0;
                self.status[k] = AgentStatus::Succeeded;
                Terminal::Success
            } else if self.slots_left[k] == 0 {
                self.status[k] = AgentStatus::Failed;
                Terminal::Failure
            } else {
                Terminal::None
            };
            let time_frac = self.slots_left[k] as f64 / self.cfg.budget_slots as f64;
            rewards[k] = reward(
                &self.cfg.weights,
                self.cfg.c_ref_bps,
                &v2i_capacities,
                v2v_capacities[k],
                time_frac,
                terminal,
            );
        }

        // What each receiver measured during this slot becomes next slot's history.
        for k in 0..n {
            for m in 0..m_bands {
                self.i_prev[k][m] = interference_at(k, m, &txs, self.v2i_power_w, self.noise_w, ch);
                self.b_prev[k][m] = self.neighbors[k]
                    .iter()
                    .filter(|&&j| txs[j].is_some_and(|t| t.subband == m))
                    .count() as f64;
            }
        }

        if !self.all_done() {
            let large = self.large.as_ref().expect("reset before step");
            self.channel = Some(build_channel_state(large, n, m_bands, self.cfg.fading, rng)?);
        }
        let next_obs = (0..n).map(|k| self.observe(k)).collect();
        let done = self.status.iter().map(|s| *s != AgentStatus::Active).collect();
        Ok(StepOutcome {
            rewards,
            next_obs,
            v2i_capacities,
            v2v_capacities,
            delivered,
            done,
            acted,
        })
    }

    pub fn all_done(&self) -> bool {
        self.status.iter().all(|s| *s != AgentStatus::Active)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn n_agents(&self) -> usize {
        self.links.len()
    }

    pub fn status(&self) -> &[AgentStatus] {
        &self.status
    }

    pub fn load(&self) -> &[f64] {
        &self.load
    }

    pub fn slots_left(&self) -> &[usize] {
        &self.slots_left
    }

    pub fn channel(&self) -> Option<&ChannelState> {
        self.channel.as_ref()
    }

    pub fn links(&self) -> &[V2VLink] {
        &self.links
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn v2i_users(&self) -> &[Point] {
        &self.v2i_users
    }

    pub fn neighbors(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    pub fn base_station(&self) -> Point {
        self.bs
    }

    pub fn noise_w(&self) -> f64 {
        self.noise_w
    }

    pub fn v2i_power_w(&self) -> f64 {
        self.v2i_power_w
    }

    pub fn power_w(&self) -> &[f64] {
        &self.power_w
    }
}
