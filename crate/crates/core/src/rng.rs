//! Seeded random streams.
//!
//! Every stochastic concern (mobility, channel, exploration, replay sampling)
//! draws from its own stream so that, for example, channel realizations stay
//! identical across policies while exploration draws differ.
//!
//! Algorithm: ChaCha8 keyed by `seed` (expanded with `SeedableRng::seed_from_u64`),
//! with the 64-bit stream id set to the FNV-1a hash of the label. Streams with
//! different labels are disjoint ChaCha keystreams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub const MOBILITY: &str = "mobility";
pub const CHANNEL: &str = "channel";
pub const EXPLORE: &str = "explore";
pub const REPLAY: &str = "replay";
pub const INIT: &str = "init";

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic stream derived from `(seed, label)`.
pub fn rng_stream(seed: u64, label: &str) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(label));
    rng
}
