//! Reproducible random streams.
//!
//! Every stochastic routine takes a `u64` seed and draws from
//! [`ChaCha20Rng`] seeded with `seed_from_u64(seed)`. Independent
//! sub-streams (bootstrap replicates, parallel chunks) select the ChaCha
//! stream number, so replicate `b` of seed `s` always reads
//! `ChaCha20Rng::seed_from_u64(s)` on stream `b`. ChaCha output is defined
//! bit-for-bit by its reference algorithm, so draws agree across platforms.

use rand::SeedableRng;
pub use rand_chacha::ChaCha20Rng as SparRng;

/// Generator for `seed` on the default stream 0.
pub fn seeded(seed: u64) -> SparRng {
    SparRng::seed_from_u64(seed)
}

/// Generator for `seed` on sub-stream `stream`.
pub fn stream(seed: u64, stream: u64) -> SparRng {
    let mut rng = SparRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A uniform draw on the open interval (0, 1).
pub fn open_unit<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}
