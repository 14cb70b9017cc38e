//! Flat `key = value` configuration files.
//!
//! One setting per line, `#` starts a comment, lists use `[a, b, c]`. Every
//! key has a default; unknown keys are rejected. Errors name the offending key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{Fading, ShadowingSigmas};
use crate::env::{EnvConfig, RewardWeights, DEFAULT_PAYLOAD_BITS};
use crate::error::{Error, Result};
use crate::geometry::Layout;
use crate::trainer::TrainerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub n_vehicles: usize,
    pub output_path: PathBuf,

    pub layout: String,
    pub blocks_x: usize,
    pub blocks_y: usize,
    pub block_w_m: f64,
    pub block_h_m: f64,
    pub highway_len_m: f64,

    pub shadow_sigma_v2v_db: f64,
    pub shadow_sigma_v2i_db: f64,
    pub noise_dbm: f64,
    pub bandwidth_hz_per_subband: f64,
    pub fading: Fading,

    pub subbands: usize,
    pub power_levels_dbm: Vec<f64>,
    pub v2i_power_dbm: f64,
    pub slot_ms: f64,
    pub budget_slots: usize,
    pub payload_bits: f64,
    pub c_ref_bps: f64,
    pub w_i: f64,
    pub w_v: f64,
    pub w_t: f64,
    pub r_success: f64,
    pub r_fail: f64,
    pub neighbors: usize,

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

    pub eval_episodes: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        let env = EnvConfig::default();
        let tr = TrainerConfig::default();
        let Layout::Manhattan {
            blocks_x,
            blocks_y,
            block_w_m,
            block_h_m,
        } = Layout::default()
        else {
            unreachable!("default layout is a grid")
        };
        SimConfig {
            seed: 1,
            n_vehicles: env.n_vehicles,
            output_path: PathBuf::from("results.csv"),
            layout: "manhattan".into(),
            blocks_x,
            blocks_y,
            block_w_m,
            block_h_m,
            highway_len_m: 1000.0,
            shadow_sigma_v2v_db: env.shadowing.v2v_db,
            shadow_sigma_v2i_db: env.shadowing.v2i_db,
            noise_dbm: env.noise_dbm,
            bandwidth_hz_per_subband: env.bandwidth_hz,
            fading: env.fading,
            subbands: env.subbands,
            power_levels_dbm: env.power_levels_dbm.clone(),
            v2i_power_dbm: env.v2i_power_dbm,
            slot_ms: env.slot_s * 1e3,
            budget_slots: env.budget_slots,
            payload_bits: DEFAULT_PAYLOAD_BITS,
            c_ref_bps: env.c_ref_bps,
            w_i: env.weights.w_i,
            w_v: env.weights.w_v,
            w_t: env.weights.w_t,
            r_success: env.weights.r_success,
            r_fail: env.weights.r_fail,
            neighbors: env.neighbors,
            episodes: tr.episodes,
            gamma: tr.gamma,
            eps_start: tr.eps_start,
            eps_end: tr.eps_end,
            eps_anneal_frac: tr.eps_anneal_frac,
            target_sync_steps: tr.target_sync_steps,
            lr: tr.lr,
            batch: tr.batch,
            replay_capacity: tr.replay_capacity,
            hidden_layers: tr.hidden_layers,
            eval_episodes: 200,
        }
    }
}

/// Best-effort key name for a parse error at byte offset `pos` in `text`.
fn key_at(text: &str, pos: usize) -> String {
    let start = text[..pos.min(text.len())].rfind('\n').map_or(0, |i| i + 1);
    let line = text[start..].lines().next().unwrap_or("");
    line.split('=').next().unwrap_or("").trim().to_string()
}

impl SimConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            // unknown-field errors already quote the key
            let key = if let Some(rest) = msg.strip_prefix("unknown field `") {
                rest.split('`').next().unwrap_or("").to_string()
            } else {
                e.span().map(|s| key_at(text, s.start)).unwrap_or_default()
            };
            Error::Config { key, msg }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> Result<String> {
        // TOML integers are signed 64-bit, which bounds `seed`.
        toml::to_string(self).map_err(|e| Error::config("seed", e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.slot_ms > 0.0 && self.slot_ms.is_finite()) {
            return Err(Error::config("slot_ms", "must be positive"));
        }
        if self.eval_episodes == 0 {
            return Err(Error::config("eval_episodes", "must be >= 1"));
        }
        self.env_config()?.validate()?;
        self.trainer_config().validate()
    }

    pub fn layout(&self) -> Result<Layout> {
        match self.layout.as_str() {
            "manhattan" => Ok(Layout::Manhattan {
                blocks_x: self.blocks_x,
                blocks_y: self.blocks_y,
                block_w_m: self.block_w_m,
                block_h_m: self.block_h_m,
            }),
            "highway" => Ok(Layout::Highway {
                len_m: self.highway_len_m,
            }),
            other => Err(Error::config(
                "layout",
                format!("expected \"manhattan\" or \"highway\", got {other:?}"),
            )),
        }
    }

    pub fn env_config(&self) -> Result<EnvConfig> {
        Ok(EnvConfig {
            layout: self.layout()?,
            n_vehicles: self.n_vehicles,
            subbands: self.subbands,
            power_levels_dbm: self.power_levels_dbm.clone(),
            v2i_power_dbm: self.v2i_power_dbm,
            noise_dbm: self.noise_dbm,
            bandwidth_hz: self.bandwidth_hz_per_subband,
            slot_s: self.slot_ms * 1e-3,
            budget_slots: self.budget_slots,
            payload_bits: self.payload_bits,
            c_ref_bps: self.c_ref_bps,
            weights: RewardWeights {
                w_i: self.w_i,
                w_v: self.w_v,
                w_t: self.w_t,
                r_success: self.r_success,
                r_fail: self.r_fail,
            },
            neighbors: self.neighbors,
            shadowing: ShadowingSigmas {
                v2v_db: self.shadow_sigma_v2v_db,
                v2i_db: self.shadow_sigma_v2i_db,
            },
            fading: self.fading,
        })
    }

    pub fn trainer_config(&self) -> TrainerConfig {
        TrainerConfig {
            episodes: self.episodes,
            gamma: self.gamma,
            eps_start: self.eps_start,
            eps_end: self.eps_end,
            eps_anneal_frac: self.eps_anneal_frac,
            target_sync_steps: self.target_sync_steps,
            lr: self.lr,
            batch: self.batch,
            replay_capacity: self.replay_capacity,
            hidden_layers: self.hidden_layers.clone(),
        }
    }
}
