//! Seeded random streams.
//!
//! Every stochastic operation takes an explicit `u64` seed. Independent
//! sub-tasks (sample pairs, perturbation plans) draw from their own ChaCha
//! stream `(seed, index)`, so serial and parallel runs produce identical
//! results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

pub fn stream(seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform unit vector in `dim` dimensions.
pub fn unit_vector(rng: &mut Stream, dim: usize) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = crate::linalg::norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|c| c / n).collect();
        }
    }
}
