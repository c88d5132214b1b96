//! Seeded random streams.
//!
//! Every stochastic component owns a [`Stream`] derived from the master
//! seed plus a fixed role tag, so results are byte-reproducible for a
//! given `(config, seed)` regardless of thread count or evaluation order.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Role tags for derived streams. The numeric values are part of the
/// reproducibility contract; do not reorder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Reset = 1,
    DomainRandomization = 2,
    NetworkInit = 3,
    Exploration = 4,
    MinibatchShuffle = 5,
    Collection = 6,
}

/// SplitMix64 finalizer; used only to mix (seed, role, index) into a
/// ChaCha seed.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derive a child seed for (master, role, index). `index` is typically an
/// environment id, episode counter, or training iteration.
pub fn derive_seed(master: u64, role: Role, index: u64) -> u64 {
    let a = splitmix64(master ^ 0xd6e8_feb8_6659_fd93);
    let b = splitmix64(a ^ (role as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    splitmix64(b ^ index)
}

/// A deterministic random stream with the scalar helpers the pipeline
/// needs. Wraps ChaCha8; the float conversions are done by hand so the
/// exact bit stream is owned by this crate.
#[derive(Debug, Clone)]
pub struct Stream {
    rng: ChaCha8Rng,
    /// Cached second Box-Muller variate.
    spare_normal: Option<f64>,
}

impl Stream {
    pub fn seeded(seed: u64) -> Self {
        Stream {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    pub fn derived(master: u64, role: Role, index: u64) -> Self {
        Self::seeded(derive_seed(master, role, index))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in [0, 1): 53 mantissa bits of one u64.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform in [-range, range).
    pub fn symmetric(&mut self, range: f64) -> f64 {
        self.uniform_in(-range, range)
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // u1 in (0, 1] so the log is finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }
}
