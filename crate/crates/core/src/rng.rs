//! Counter-based random streams.
//!
//! Every draw is a pure function of a [`StreamKey`] and a counter. Keys are
//! derived hierarchically (`master seed -> trial -> arm -> step`), so a
//! trajectory reproduces exactly no matter which worker runs it or in which
//! order trials are scheduled.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Identifies one independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn root(master_seed: u64) -> Self {
        Self(mix64(master_seed ^ 0x6a09_e667_f3bc_c908))
    }

    /// Derives the sub-stream with the given index.
    #[inline]
    pub fn child(self, index: u64) -> Self {
        Self(mix64(self.0 ^ mix64(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA))))
    }

    pub fn value(self) -> u64 {
        self.0
    }

    #[inline]
    pub fn rng(self) -> CounterRng {
        CounterRng {
            key: self.0,
            counter: 0,
        }
    }
}

/// Generator whose `i`-th output is `mix(key ^ mix((i + 1) * gamma))`.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Fills `out` with independent standard normal draws.
    #[inline]
    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = StandardNormal.sample(self);
        }
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for CounterRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key ^ mix64(self.counter.wrapping_mul(GOLDEN_GAMMA)))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
