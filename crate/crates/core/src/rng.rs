//! Seeded random streams. Every consumer draws from its own ChaCha stream
//! so that enabling one feature never shifts the draws of another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SeededRng = ChaCha8Rng;

/// Stream numbers used by the trainers and generators.
pub mod streams {
    pub const MODEL_INIT: u64 = 1;
    pub const BATCHING: u64 = 2;
    pub const ADVERSARY: u64 = 3;
    pub const DATA: u64 = 4;
}

pub fn stream(seed: u64, stream: u64) -> SeededRng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

#[inline]
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

#[inline]
pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}
