//! Large-scale (path loss, log-normal shadowing) and small-scale (Rayleigh)
//! channel gains for every link class the environment needs.
//!
//! Gain convention: large-scale gain in dB is `-PL + shadow`; the per-slot
//! linear gain is `10^(gain_db / 10) * fading` with unit-mean exponential
//! fading drawn independently per (link, sub-band, slot).

use std::hash::{DefaultHasher, Hasher};

use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, V2VLink, Vehicle};

pub const V2V_CLAMP_M: f64 = 3.0;
pub const V2I_CLAMP_M: f64 = 10.0;

/// V2V path loss in dB, distance clamped below at 3 m.
pub fn path_loss_v2v(d: f64) -> f64 {
    44.0 + 20.0 * d.max(V2V_CLAMP_M).log10()
}

/// Vehicle-to-base-station path loss in dB, distance clamped below at 10 m.
pub fn path_loss_v2i(d: f64) -> f64 {
    128.1 + 37.6 * (d.max(V2I_CLAMP_M) / 1000.0).log10()
}

pub fn sample_shadowing<R: Rng + ?Sized>(sigma_db: f64, rng: &mut R) -> f64 {
    if sigma_db == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma_db)
        .expect("sigma is finite and non-negative")
        .sample(rng)
}

/// `|h|^2` for unit-variance complex Gaussian `h`: exponential with mean 1.
pub fn sample_fast_fading<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[inline]
pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

#[inline]
pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

#[inline]
pub fn watts_to_dbm(w: f64) -> f64 {
    linear_to_db(w) + 30.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadowingSigmas {
    pub v2v_db: f64,
    pub v2i_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fading {
    Rayleigh,
    /// Every fading factor fixed to 1.
    Frozen,
}

/// Per-episode large-scale gains in dB. Same value on every sub-band.
#[derive(Debug, Clone, PartialEq)]
pub struct LargeScale {
    n_links: usize,
    n_bands: usize,
    /// `[j * n + k]`: transmitter of link j to receiver of link k.
    vv_db: Vec<f64>,
    /// `[k]`: transmitter of link k to the base station.
    vb_db: Vec<f64>,
    /// `[m]`: V2I user of sub-band m to the base station.
    ib_db: Vec<f64>,
    /// `[k * bands + m]`: V2I user of sub-band m to the receiver of link k.
    iv_db: Vec<f64>,
}

impl LargeScale {
    /// Samples path loss plus shadowing for every link class.
    ///
    /// `v2i_users[m]` is the uplink user occupying sub-band m. Shadowing is
    /// drawn per link, independently, in a fixed order.
    pub fn sample<R: Rng + ?Sized>(
        vehicles: &[Vehicle],
        links: &[V2VLink],
        v2i_users: &[Point],
        bs: Point,
        sigmas: ShadowingSigmas,
        rng: &mut R,
    ) -> Self {
        let pos = |id: usize| {
            vehicles
                .iter()
                .find(|v| v.id == id)
                .map(|v| v.position)
                .expect("link references a known vehicle")
        };
        let tx: Vec<Point> = links.iter().map(|l| pos(l.tx)).collect();
        let rx: Vec<Point> = links.iter().map(|l| pos(l.rx)).collect();
        let (n, m) = (links.len(), v2i_users.len());

        let mut vv_db = Vec::with_capacity(n * n);
        for t in &tx {
            for r in &rx {
                vv_db.push(-path_loss_v2v(t.distance(*r)) + sample_shadowing(sigmas.v2v_db, rng));
            }
        }
        let vb_db = tx
            .iter()
            .map(|t| -path_loss_v2i(t.distance(bs)) + sample_shadowing(sigmas.v2i_db, rng))
            .collect();
        let ib_db = v2i_users
            .iter()
            .map(|u| -path_loss_v2i(u.distance(bs)) + sample_shadowing(sigmas.v2i_db, rng))
            .collect();
        let mut iv_db = Vec::with_capacity(n * m);
        for r in &rx {
            for u in v2i_users {
                iv_db.push(-path_loss_v2v(u.distance(*r)) + sample_shadowing(sigmas.v2v_db, rng));
            }
        }
        LargeScale {
            n_links: n,
            n_bands: m,
            vv_db,
            vb_db,
            ib_db,
            iv_db,
        }
    }

    pub fn n_links(&self) -> usize {
        self.n_links
    }

    pub fn n_bands(&self) -> usize {
        self.n_bands
    }

    pub fn vv_db(&self, j: usize, k: usize) -> f64 {
        self.vv_db[j * self.n_links + k]
    }

    pub fn vb_db(&self, k: usize) -> f64 {
        self.vb_db[k]
    }

    pub fn ib_db(&self, m: usize) -> f64 {
        self.ib_db[m]
    }

    pub fn iv_db(&self, k: usize, m: usize) -> f64 {
        self.iv_db[k * self.n_bands + m]
    }
}

/// Linear power gains for one time slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    n_links: usize,
    n_bands: usize,
    vv: Vec<f64>,
    vb: Vec<f64>,
    ib: Vec<f64>,
    iv: Vec<f64>,
}

impl ChannelState {
    /// Builds a state directly from linear tables; used for hand-built instances.
    ///
    /// `vv[(j * n + k) * bands + m]`, `vb[k * bands + m]`, `ib[m]`, `iv[k * bands + m]`.
    pub fn from_tables(
        n_links: usize,
        n_bands: usize,
        vv: Vec<f64>,
        vb: Vec<f64>,
        ib: Vec<f64>,
        iv: Vec<f64>,
    ) -> Result<Self> {
        let (n, m) = (n_links, n_bands);
        if vv.len() != n * n * m || vb.len() != n * m || ib.len() != m || iv.len() != n * m {
            return Err(Error::Contract(format!(
                "channel table shapes do not match {n} links x {m} sub-bands"
            )));
        }
        Ok(ChannelState {
            n_links,
            n_bands,
            vv,
            vb,
            ib,
            iv,
        })
    }

    pub fn n_links(&self) -> usize {
        self.n_links
    }

    pub fn n_bands(&self) -> usize {
        self.n_bands
    }

    /// Desired-link gain of link k on sub-band m.
    #[inline]
    pub fn g_vv(&self, k: usize, m: usize) -> f64 {
        self.g_cross(k, k, m)
    }

    /// Gain from the transmitter of link j to the receiver of link k on sub-band m.
    #[inline]
    pub fn g_cross(&self, j: usize, k: usize, m: usize) -> f64 {
        self.vv[(j * self.n_links + k) * self.n_bands + m]
    }

    /// Gain from the transmitter of link k to the base station on sub-band m.
    #[inline]
    pub fn g_vb(&self, k: usize, m: usize) -> f64 {
        self.vb[k * self.n_bands + m]
    }

    /// Gain of the V2I uplink on its own sub-band m.
    #[inline]
    pub fn g_ib(&self, m: usize) -> f64 {
        self.ib[m]
    }

    /// Gain from the V2I user on sub-band m to the receiver of link k.
    #[inline]
    pub fn g_iv(&self, k: usize, m: usize) -> f64 {
        self.iv[k * self.n_bands + m]
    }

    pub fn all_positive(&self) -> bool {
        [&self.vv, &self.vb, &self.ib, &self.iv]
            .iter()
            .all(|t| t.iter().all(|&g| g > 0.0 && g.is_finite()))
    }

    /// Hash over every table entry's bit pattern; identical states hash equal.
    pub fn checksum(&self) -> u64 {
        let mut h = DefaultHasher::new();
        h.write_usize(self.n_links);
        h.write_usize(self.n_bands);
        for t in [&self.vv, &self.vb, &self.ib, &self.iv] {
            for g in t.iter() {
                h.write_u64(g.to_bits());
            }
        }
        h.finish()
    }
}

/// Combines the episode's large-scale gains with fresh per-slot fading.
///
/// Fading is drawn in table order (vv, vb, ib, iv), sub-band innermost.
pub fn build_channel_state<R: Rng + ?Sized>(
    large: &LargeScale,
    n_links: usize,
    n_bands: usize,
    fading: Fading,
    rng: &mut R,
) -> Result<ChannelState> {
    if large.n_links != n_links || large.n_bands != n_bands {
        return Err(Error::Contract(format!(
            "large-scale cache covers {} links x {} sub-bands, expected {n_links} x {n_bands}",
            large.n_links, large.n_bands
        )));
    }
    let mut draw = |db: f64| -> f64 {
        let lin = db_to_linear(db);
        match fading {
            Fading::Rayleigh => lin * sample_fast_fading(rng),
            Fading::Frozen => lin,
        }
    };
    let mut vv = Vec::with_capacity(n_links * n_links * n_bands);
    for &db in &large.vv_db {
        for _ in 0..n_bands {
            vv.push(draw(db));
        }
    }
    let mut vb = Vec::with_capacity(n_links * n_bands);
    for &db in &large.vb_db {
        for _ in 0..n_bands {
            vb.push(draw(db));
        }
    }
    let ib: Vec<f64> = large.ib_db.iter().map(|&db| draw(db)).collect();
    let iv: Vec<f64> = large.iv_db.iter().map(|&db| draw(db)).collect();
    ChannelState::from_tables(n_links, n_bands, vv, vb, ib, iv)
}
