//! Empirical checks of the two structural assumptions: the noise tail
//! `||G(h)(I - Pi_n)||_HS -> 0` uniformly on balls, and equicontinuity of
//! `S(eps t)` away from `t = 0`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{LdpError, Result};
use crate::models::ModelSpec;
use crate::rng::{sample_ball, stream_rng};
use crate::spectral::{hs_norm, HVec, SpectralBasis};

/// Sup over sampled `h` in `B(0, r)` of `||G(h)(I - Pi_n)||_HS`.
///
/// Sample points are `+-r e_k`, the origin, and `n_samples` seeded interior points.
pub fn check_a1_tail(model: &ModelSpec, r: f64, n: usize, n_samples: usize, seed: u64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(LdpError::invalid("r", format!("radius must be positive, got {r}")));
    }
    if n > model.dim_u() {
        return Err(LdpError::invalid("n", format!("projection rank {n} exceeds {}", model.dim_u())));
    }
    let d = model.dim_h();
    let mut points = vec![HVec::zeros(d)];
    for k in 0..d {
        for sign in [1.0, -1.0] {
            let mut p = HVec::zeros(d);
            p[k] = sign * r;
            points.push(p);
        }
    }
    let mut rng = stream_rng(seed, 0);
    points.extend((0..n_samples).map(|_| sample_ball(&mut rng, d, r)));

    let tail = |g: &DMatrix<f64>| hs_norm(&g.columns(n, g.ncols() - n).into_owned());
    Ok(points
        .iter()
        .map(|p| tail(&model.diffusion_matrix(p.as_slice())))
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModulusReport {
    /// Sup of `||S(eps t) - S(eps r)||` over the sampled `eps`, `t`, `r`.
    pub modulus: f64,
    /// `c` in the analytic-semigroup bound `||S(eps t) - S(eps r)|| <= c ln(t / r)`.
    pub log_constant: f64,
    /// Largest observed ratio of the distance to `c ln(t / r)`; at most 1.
    pub max_ratio: f64,
}

const EPS_LEVELS: i32 = 21;
const T_NODES: usize = 65;

/// Uniform modulus of `t -> S(eps t)` on `[a, 1]`, over `eps = 2^-i`, `i = 0..=20`.
pub fn check_a2_modulus(basis: &SpectralBasis, a: f64, mesh: f64) -> Result<ModulusReport> {
    if !(a > 0.0 && a <= 1.0) {
        return Err(LdpError::invalid("a", format!("must lie in (0, 1], got {a}")));
    }
    if !(mesh >= 0.0) {
        return Err(LdpError::invalid("mesh", format!("must be nonnegative, got {mesh}")));
    }
    let log_constant = basis
        .eigenvalues()
        .iter()
        .map(|&ak| analytic_constant(ak))
        .fold(0.0, f64::max);

    let nodes: Vec<f64> = (0..T_NODES)
        .map(|i| a + (1.0 - a) * i as f64 / (T_NODES - 1) as f64)
        .collect();
    let mut modulus = 0.0f64;
    let mut max_ratio = 0.0f64;
    for i in 0..EPS_LEVELS {
        let eps = 0.5f64.powi(i);
        for &r in &nodes {
            let partners = nodes
                .iter()
                .copied()
                .filter(|t| *t > r && t - r <= mesh)
                .chain(std::iter::once((r + mesh).min(1.0)));
            for t in partners {
                if t <= r {
                    continue;
                }
                let dist = basis
                    .eigenvalues()
                    .iter()
                    .map(|&ak| ((ak * eps * t).exp() - (ak * eps * r).exp()).abs())
                    .fold(0.0, f64::max);
                modulus = modulus.max(dist);
                if dist > 0.0 {
                    max_ratio = max_ratio.max(dist / (log_constant * (t / r).ln()));
                }
            }
        }
    }
    Ok(ModulusReport {
        modulus,
        log_constant,
        max_ratio,
    })
}

/// `sup_{s in (0, 1]} |a| s exp(a s)`.
fn analytic_constant(a: f64) -> f64 {
    if a > 0.0 {
        a * a.exp()
    } else if a <= -1.0 {
        (-1.0f64).exp()
    } else {
        -a * a.exp()
    }
}
