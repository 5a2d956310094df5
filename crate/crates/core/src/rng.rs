//! Keyed Gaussian streams.
//!
//! The normal for `(seed, path, step, channel)` is a pure function of the
//! key: ChaCha8 seeded by `seed`, stream number `path`, word position fixed
//! by `(step, channel)`. Sequential reads skip the seek.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Channel of the Wiener increment `dW`.
pub const CHANNEL_W: u64 = 0;
/// Channel of the Wiener increment `dB`.
pub const CHANNEL_B: u64 = 1;

const CHANNELS: u64 = 2;
/// Each normal consumes two `u64`, i.e. four 32-bit words.
const WORDS_PER_NORMAL: u128 = 4;

#[derive(Debug, Clone)]
pub struct PathStream {
    rng: ChaCha8Rng,
    /// Slot that a plain sequential read would produce next.
    next_slot: u64,
    antithetic: bool,
}

impl PathStream {
    pub fn new(seed: u64, path: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path);
        Self { rng, next_slot: 0, antithetic: false }
    }

    /// Stream whose draws are the negation of [`PathStream::new`]'s.
    pub fn antithetic(seed: u64, path: u64) -> Self {
        Self { antithetic: true, ..Self::new(seed, path) }
    }

    /// Standard normal for `(step, channel)`.
    pub fn standard_normal(&mut self, step: u64, channel: u64) -> f64 {
        let slot = step * CHANNELS + channel;
        if slot != self.next_slot {
            self.rng.set_word_pos(slot as u128 * WORDS_PER_NORMAL);
        }
        self.next_slot = slot + 1;
        let u1 = ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        if self.antithetic {
            -z
        } else {
            z
        }
    }

    /// `(dW, dB)` for `step`, each with variance `dt`.
    pub fn increments(&mut self, step: u64, dt: f64) -> (f64, f64) {
        let s = dt.sqrt();
        (s * self.standard_normal(step, CHANNEL_W), s * self.standard_normal(step, CHANNEL_B))
    }
}

/// One keyed standard normal.
pub fn keyed_normal(seed: u64, path: u64, step: u64, channel: u64) -> f64 {
    PathStream::new(seed, path).standard_normal(step, channel)
}
