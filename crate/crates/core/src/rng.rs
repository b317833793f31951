//! Deterministic random streams.
//!
//! Every stochastic step in the toolkit draws from a [`SeededRng`], a thin
//! wrapper around the ChaCha8 stream cipher keyed by a 64-bit seed. The
//! generator, the u64→f64 mapping and the normal transform are all pinned
//! here so identical seeds reproduce identical draws across runs and
//! platforms. Parallel consumers never share a stream; they derive child
//! seeds with [`split_seed`].

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Derive an independent child seed for stream `stream` of `seed`.
///
/// SplitMix64 finalizer applied to `seed + stream * golden_gamma`; the usual
/// construction for spawning decorrelated streams from one master seed.
pub fn split_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic random stream (ChaCha8 keyed by a u64 seed).
pub struct SeededRng {
    inner: ChaCha8Rng,
    /// Second Box-Muller deviate, kept for the next `normal()` call.
    spare_normal: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    /// Child stream `stream` of this seed (see [`split_seed`]).
    pub fn derive(seed: u64, stream: u64) -> Self {
        SeededRng::new(split_seed(seed, stream))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in [0, 1) with 53 random mantissa bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in [0, n). Rejection-free modulo is fine here: n is
    /// tiny (shuffles, category picks) relative to 2^64, so the bias is
    /// far below anything observable.
    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n
    }

    /// Standard normal deviate via Box-Muller (pair cached).
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

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            xs.swap(i, j);
        }
    }
}
