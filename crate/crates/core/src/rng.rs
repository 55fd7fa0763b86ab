//! Counter-based standard-normal noise keyed by `(seed, path_index, step_index)`.
//!
//! Each path owns a ChaCha8 stream selected by its index; step `k` always
//! reads words `4k..4k+4` of that stream, so a draw depends only on the key
//! and never on scheduling order.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const WORDS_PER_STEP: u128 = 4;
const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    /// Stream for `path_index`, positioned at step 0.
    pub fn new(seed: u64, path_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_index);
        Self { rng }
    }

    /// Stream positioned at `step`.
    pub fn at_step(seed: u64, path_index: u64, step: u64) -> Self {
        let mut s = Self::new(seed, path_index);
        s.rng.set_word_pos(step as u128 * WORDS_PER_STEP);
        s
    }

    /// Standard normal for the current step, then advances one step.
    pub fn next_normal(&mut self) -> f64 {
        // Box–Muller with u1 in (0, 1].
        let u1 = ((self.rng.next_u64() >> 11) + 1) as f64 * TWO_POW_M53;
        let u2 = (self.rng.next_u64() >> 11) as f64 * TWO_POW_M53;
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Random-access draw for a single key.
pub fn normal(seed: u64, path_index: u64, step: u64) -> f64 {
    NoiseStream::at_step(seed, path_index, step).next_normal()
}
