//! Reproducible random streams and order-insensitive reductions.
//!
//! Every Monte Carlo sample draws from its own ChaCha stream, selected by the
//! sample index under a single master seed. Results therefore do not depend on
//! how samples are scheduled across worker threads.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Generator for sample `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Sum with pairwise (cascade) reduction over fixed-size blocks.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Uniform point in the closed ball of the given radius.
pub fn sample_ball<R: Rng + ?Sized>(rng: &mut R, dim: usize, radius: f64) -> DVector<f64> {
    let dir = sample_sphere(rng, dim);
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    dir * r
}

/// Uniform point on the unit sphere.
pub fn sample_sphere<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| standard_normal(rng));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}
