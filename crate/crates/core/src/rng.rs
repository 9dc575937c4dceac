//! Seeded random streams.
//!
//! Every random quantity in the crate is drawn from ChaCha8 seeded with
//! `seed_from_u64(seed)` and switched to a numbered stream, so that instance
//! `i` of an experiment never depends on how many values instance `i - 1`
//! consumed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draw from `[-scale, scale)`.
pub fn symmetric(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    (rng.gen::<f64>() * 2.0 - 1.0) * scale
}

/// Samples an index from a log-distribution sharpened by `1 / temperature`.
pub fn sample_log_dist(rng: &mut ChaCha8Rng, log_dist: &[f64], temperature: f64) -> usize {
    let scaled: Vec<f64> = log_dist.iter().map(|l| l / temperature).collect();
    let probs = crate::logmath::softmax(&scaled);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
