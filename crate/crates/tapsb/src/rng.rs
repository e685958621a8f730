//! Seeded, portable randomness.
//!
//! Everything reproducible in this crate draws from Xoshiro256** seeded
//! through SplitMix64 (the `rand` crate's `seed_from_u64` path), so a seed
//! pins corpora, matrices, task ids, and failure sets bit-for-bit across
//! runs and platforms. Uniform floats use the standard 53-bit mantissa
//! construction `(x >> 11) * 2^-53`.

use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

pub struct SeededRng {
    inner: Xoshiro256StarStar,
}

impl SeededRng {
    pub fn new(seed: u64) -> SeededRng {
        SeededRng {
            inner: Xoshiro256StarStar::seed_from_u64(seed),
        }
    }

    /// Independent stream for a named purpose, so adding a consumer never
    /// shifts another consumer's draws.
    pub fn derive(seed: u64, stream: &str) -> SeededRng {
        let mut mix = seed;
        for byte in stream.bytes() {
            // FNV-style fold; cheap and stable.
            mix = (mix ^ u64::from(byte)).wrapping_mul(0x100_0000_01b3);
        }
        SeededRng::new(mix)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn next_u128(&mut self) -> u128 {
        (u128::from(self.inner.next_u64()) << 64) | u128::from(self.inner.next_u64())
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform_f64(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[0, bound)`. Uses rejection sampling, so the draw count
    /// is data-dependent; fine for corpus generation, not for lockstep
    /// streams.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let x = self.inner.next_u64();
            if x < zone {
                return x % bound;
            }
        }
    }

    pub fn fill_bytes(&mut self, out: &mut [u8]) {
        self.inner.fill_bytes(out);
    }

    pub fn bytes(&mut self, len: usize) -> Vec<u8> {
        let mut out = vec![0u8; len];
        self.fill_bytes(&mut out);
        out
    }
}

/// One-shot mix of a seed and an ordinal into a uniform u64; drives
/// per-task decisions that must not depend on draw order (SplitMix64).
pub fn mix64(seed: u64, ordinal: u64) -> u64 {
    let mut z = seed ^ ordinal.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
