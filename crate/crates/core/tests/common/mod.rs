//! Independent reference values used by the integration tests.
#![allow(dead_code)]

use statrs::distribution::{ContinuousCDF, Normal};

/// Shift of a continuous barrier that matches monitoring a unit-variance Brownian path
/// only at grid nodes spaced `dt` apart: `zeta(1/2) / sqrt(2 pi)`.
pub const DISCRETE_MONITORING_SHIFT: f64 = 0.5826;

fn std_normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

/// `P(sup_{t<=1} |W(t)| < a)` by the reflection principle:
/// `sum_k (-1)^k [Phi((2k+1) a) - Phi((2k-1) a)]`.
pub fn brownian_sup_below(a: f64) -> f64 {
    (-40i32..=40)
        .map(|k| {
            let k = k as f64;
            let sign = if k as i64 % 2 == 0 { 1.0 } else { -1.0 };
            sign * (std_normal_cdf((2.0 * k + 1.0) * a) - std_normal_cdf((2.0 * k - 1.0) * a))
        })
        .sum()
}

/// The same probability from the theta-function series
/// `(4 / pi) sum_k (-1)^k / (2k+1) exp(-(2k+1)^2 pi^2 / (8 a^2))`, truncated to `terms`.
pub fn brownian_sup_below_series(a: f64, terms: usize) -> f64 {
    let pi = std::f64::consts::PI;
    (0..terms)
        .map(|k| {
            let odd = (2 * k + 1) as f64;
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign / odd * (-odd * odd * pi * pi / (8.0 * a * a)).exp()
        })
        .sum::<f64>()
        * 4.0
        / pi
}

/// Discrete-grid version of [`brownian_sup_below`] for monitoring at spacing `dt`.
pub fn brownian_sup_below_discrete(a: f64, dt: f64) -> f64 {
    brownian_sup_below(a + DISCRETE_MONITORING_SHIFT * dt.sqrt())
}

/// `P(sup_{t<=1} |W(t) - mu t| < a)`: the killed density of `W(1)` on `(-a, a)` by the method
/// of images, weighted by the Cameron-Martin density `exp(mu y - mu^2 / 2)`.
pub fn drifted_tube_probability(a: f64, mu: f64) -> f64 {
    let n = 40_000;
    let h = 2.0 * a / n as f64;
    let density = |y: f64| -> f64 {
        let killed: f64 = (-30i32..=30)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                let z = y - 2.0 * k as f64 * a;
                sign * (-0.5 * z * z).exp()
            })
            .sum::<f64>()
            / (2.0 * std::f64::consts::PI).sqrt();
        killed.max(0.0) * (mu * y - 0.5 * mu * mu).exp()
    };
    // Composite Simpson.
    let mut sum = density(-a) + density(a);
    for i in 1..n {
        let y = -a + i as f64 * h;
        sum += if i % 2 == 1 { 4.0 } else { 2.0 } * density(y);
    }
    sum * h / 3.0
}

/// [`drifted_tube_probability`] for monitoring at spacing `dt`.
pub fn drifted_tube_probability_discrete(a: f64, mu: f64, dt: f64) -> f64 {
    drifted_tube_probability(a + DISCRETE_MONITORING_SHIFT * dt.sqrt(), mu)
}

/// Minimal `sum (z_{j+1} - z_j)^2 / (2 dt)` over lattice paths with `z_0 = x` and
/// `|z_j - u_j| <= delta`, by dynamic programming on a lattice of spacing `h` plus the tube edges.
pub fn lattice_tube_rate(x: f64, u: &[f64], delta: f64, h: f64) -> f64 {
    let n = u.len() - 1;
    let dt = 1.0 / n as f64;
    let lo = u.iter().cloned().fold(x, f64::min) - delta;
    let hi = u.iter().cloned().fold(x, f64::max) + delta;
    // Anchored at `x` so the start is a lattice point.
    let first = ((lo - x) / h).floor() as i64;
    let last = ((hi - x) / h).ceil() as i64;
    let states: Vec<f64> = (first..=last).map(|i| x + i as f64 * h).collect();
    let mut from = vec![x];
    let mut from_cost = vec![0.0];
    for uj in &u[1..] {
        // The tube boundary joins the lattice: an optimal path bends only where it touches it.
        let allowed: Vec<f64> = states
            .iter()
            .copied()
            .filter(|s| (s - uj).abs() <= delta)
            .chain([uj - delta, uj + delta])
            .collect();
        let next: Vec<f64> = allowed
            .iter()
            .map(|s| {
                from.iter()
                    .zip(&from_cost)
                    .map(|(p, c)| c + (s - p) * (s - p) / (2.0 * dt))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        from = allowed;
        from_cost = next;
    }
    from_cost.into_iter().fold(f64::INFINITY, f64::min)
}

use ldp_core::rng::{sample_ball, stream_rng};
use ldp_core::{DiffusionForm, DriftForm, Equation, ModelSpec, NoiseSpace, ScalarMap, SpectralBasis, TimeWeight};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    stream_rng(seed, 0)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * rng.random_range(-1.0..1.0))
}

/// Affine drift with offset norm and operator norm at most 0.9.
pub fn random_drift(rng: &mut ChaCha8Rng, d: usize) -> DriftForm {
    let offset = sample_ball(rng, d, 0.9);
    let m = random_matrix(rng, d, d, 1.0);
    let norm = m.singular_values().max();
    DriftForm::Affine {
        offset,
        matrix: m * (0.9 / norm),
    }
}

/// One of the bounded or unbounded diffusion families, chosen by `kind % 3`.
pub fn random_diffusion(rng: &mut ChaCha8Rng, d: usize, m: usize, kind: usize) -> DiffusionForm {
    match kind % 3 {
        0 => DiffusionForm::Constant(random_matrix(rng, d, m, 1.0)),
        1 if m <= d => DiffusionForm::Diagonal {
            sigma: (0..m).map(|_| rng.random_range(0.2..1.5)).collect(),
            map: [ScalarMap::Tanh, ScalarMap::Sin, ScalarMap::Clamp][rng.random_range(0..3)],
        },
        _ => DiffusionForm::AffineColumns {
            offset: random_matrix(rng, d, m, 1.0),
            slopes: (0..m).map(|_| random_matrix(rng, d, d, 0.3)).collect(),
        },
    }
}

/// Random equation with `d, m <= 4`, eigenvalues in `[-5, 0.5]` and harmonic noise weights.
pub fn random_equation(rng: &mut ChaCha8Rng, kind: usize) -> Equation {
    let d = rng.random_range(1..=4);
    let m = rng.random_range(1..=4);
    let basis = SpectralBasis::new((0..d).map(|_| rng.random_range(-5.0..0.5)).collect()).unwrap();
    let nu = TimeWeight::piecewise((0..7).map(|_| rng.random_range(0.0..2.0)).collect()).unwrap();
    let model = ModelSpec::new(d, m, random_drift(rng, d), nu, random_diffusion(rng, d, m, kind)).unwrap();
    Equation::new(basis, NoiseSpace::harmonic(m).unwrap(), model).unwrap()
}

/// The scalar model `dX = sqrt(eps) dW` with `A = 0`.
pub fn scalar_brownian() -> Equation {
    Equation::new(
        SpectralBasis::new(vec![0.0]).unwrap(),
        NoiseSpace::new(vec![1.0]).unwrap(),
        ModelSpec::additive(DMatrix::from_element(1, 1, 1.0)).unwrap(),
    )
    .unwrap()
}

pub fn random_point(rng: &mut ChaCha8Rng, d: usize, radius: f64) -> DVector<f64> {
    sample_ball(rng, d, radius)
}
