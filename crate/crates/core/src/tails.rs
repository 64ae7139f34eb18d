//! Exponential tail bounds for stochastic integrals and convolutions, with
//! Monte Carlo checks, and the small-noise behaviour of Brownian motion in `U1`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{LdpError, Result};
use crate::quad::integrate;
use crate::rng::stream_rng;
use crate::sim::{check_epsilon, fill_normals};
use crate::skeleton::wiener_rate;
use crate::spectral::{hs_norm, NoiseSpace, SpectralBasis, TimeGrid, U1Vec, UVec};
use crate::verify::{row_seed, McEstimate};

/// One row of a tail check: empirical `P(sup >= delta)` against a bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailRow {
    pub check: String,
    pub delta: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub bound: f64,
    /// `estimate <= bound + 4 stderr`.
    pub pass: bool,
}

/// `3 exp(-delta^2 / (4 eta1))`.
pub fn chow_menaldi_bound(delta: f64, eta1: f64) -> f64 {
    3.0 * (-delta * delta / (4.0 * eta1)).exp()
}

fn check_deltas(deltas: &[f64], n: usize) -> Result<()> {
    if deltas.is_empty() || deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(LdpError::invalid("delta", "need a nonempty grid of positive values"));
    }
    if n == 0 {
        return Err(LdpError::invalid("n_samples", "must be positive"));
    }
    Ok(())
}

fn tail_rows(check: &str, sups: &[f64], deltas: &[f64], seed: u64, bound: impl Fn(f64) -> f64) -> Vec<TailRow> {
    deltas
        .iter()
        .map(|&delta| {
            let hits: Vec<f64> = sups.iter().map(|s| if *s >= delta { 1.0 } else { 0.0 }).collect();
            let est = McEstimate::from_samples(&hits, seed);
            let b = bound(delta);
            TailRow {
                check: check.to_string(),
                delta,
                estimate: est.mean,
                stderr: est.stderr,
                bound: b,
                pass: est.mean <= b + 4.0 * est.stderr,
            }
        })
        .collect()
}

/// Empirical tails of `sup_j |sum_{i<j} xi_i dW_i|` for deterministic per-step integrands
/// with `sum ||xi_i||_HS^2 dt <= eta1`, against `3 exp(-delta^2 / (4 eta1))`.
pub fn chow_menaldi_check(
    xi: &[DMatrix<f64>],
    eta1: f64,
    deltas: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<TailRow>> {
    check_deltas(deltas, n)?;
    if xi.is_empty() {
        return Err(LdpError::invalid("xi", "need at least one step"));
    }
    let grid = TimeGrid::new(xi.len())?;
    let (d, m) = xi[0].shape();
    if xi.iter().any(|x| x.shape() != (d, m)) {
        return Err(LdpError::invalid("xi", "all steps must share one shape"));
    }
    let energy: f64 = xi.iter().map(|x| hs_norm(x).powi(2) * grid.dt()).sum();
    if !(eta1 > 0.0) {
        return Err(LdpError::invalid("eta1", format!("must be positive, got {eta1}")));
    }
    if energy > eta1 * (1.0 + 1e-12) {
        return Err(LdpError::invalid(
            "eta1",
            format!("integrated squared HS norm {energy} exceeds eta1 = {eta1}"),
        ));
    }
    let sups: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            let mut dw = vec![0.0; m];
            let mut acc = vec![0.0; d];
            let mut sup = 0.0f64;
            for x in xi {
                fill_normals(&mut rng, grid.dt().sqrt(), &mut dw);
                for (r, a) in acc.iter_mut().enumerate() {
                    *a += (0..m).map(|k| x[(r, k)] * dw[k]).sum::<f64>();
                }
                sup = sup.max(acc.iter().map(|a| a * a).sum::<f64>().sqrt());
            }
            sup
        })
        .collect();
    Ok(tail_rows("chow_menaldi", &sups, deltas, seed, |delta| chow_menaldi_bound(delta, eta1)))
}

/// `(n0, C)` with `n0 = p0 / (2 p0 - 2) + 1` and `C = 4 + exp(4 n0!)^{1/n0}`,
/// the factorial taken as `Gamma(n0 + 1)`.
pub fn peszat_constant(p0: f64) -> Result<(f64, f64)> {
    if !(p0 > 1.0) || !p0.is_finite() {
        return Err(LdpError::invalid("p0", format!("must exceed 1, got {p0}")));
    }
    let n0 = p0 / (2.0 * p0 - 2.0) + 1.0;
    Ok((n0, 4.0 + (4.0 * gamma(n0 + 1.0) / n0).exp()))
}

/// `int_0^1 t^beta g(t) dt` for smooth `g` and `beta > -1`, via `t = s^{1/(beta+1)}`.
fn weighted_integral(beta: f64, g: impl Fn(f64) -> f64) -> Result<f64> {
    if !(beta > -1.0) {
        return Err(LdpError::DivergentIntegral(format!(
            "t^{beta} is not integrable at 0 (exponent must exceed -1)"
        )));
    }
    let k = beta + 1.0;
    Ok(integrate(|s| g(s.powf(1.0 / k)), 0.0, 1.0, 1e-13) / k)
}

/// Parameters of the stochastic-convolution tail bound `C exp(-delta^2 / (kappa^2 eta2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailBoundParams {
    pub alpha0: f64,
    pub p0: f64,
    /// `(int_0^1 t^{(alpha0 - 1) p0} ||T(t)||^{p0} dt)^{1/p0}`.
    pub kappa: f64,
    pub eta: f64,
    pub n0: f64,
    pub c_const: f64,
}

impl TailBoundParams {
    /// For the semigroup `T(t) = S(scale t)`.
    pub fn new(alpha0: f64, p0: f64, basis: &SpectralBasis, scale: f64, eta: f64) -> Result<Self> {
        if !(alpha0 > 0.0 && alpha0 < 0.5) {
            return Err(LdpError::invalid("alpha0", format!("must lie in (0, 1/2), got {alpha0}")));
        }
        if !(eta > 0.0) {
            return Err(LdpError::invalid("eta", format!("must be positive, got {eta}")));
        }
        let (n0, c_const) = peszat_constant(p0)?;
        let kappa = kappa(alpha0, p0, basis, scale)?;
        Ok(Self {
            alpha0,
            p0,
            kappa,
            eta,
            n0,
            c_const,
        })
    }
}

/// `(int_0^1 t^{(alpha0 - 1) p0} ||S(scale t)||^{p0} dt)^{1/p0}`, using the exact diagonal norm.
pub fn kappa(alpha0: f64, p0: f64, basis: &SpectralBasis, scale: f64) -> Result<f64> {
    let beta = (alpha0 - 1.0) * p0;
    let integral = weighted_integral(beta, |t| basis.semigroup_norm(scale * t).powf(p0))?;
    Ok(integral.powf(1.0 / p0))
}

/// `C exp(-delta^2 / (kappa^2 eta))`.
pub fn peszat_bound_eval(params: &TailBoundParams, delta: f64) -> f64 {
    params.c_const * (-delta * delta / (params.kappa * params.kappa * params.eta)).exp()
}

/// `sup_t int_0^t (t - s)^{-2 alpha0} ||S(scale (t - s)) xi||_HS^2 ds` for a constant `xi`;
/// the integrand is nonnegative, so the sup is attained at `t = 1`.
pub fn convolution_eta2(basis: &SpectralBasis, scale: f64, xi: &DMatrix<f64>, alpha0: f64) -> Result<f64> {
    if xi.nrows() != basis.dim() {
        return Err(LdpError::DimensionMismatch {
            what: "xi rows",
            expected: basis.dim(),
            got: xi.nrows(),
        });
    }
    let mut total = 0.0;
    for (k, &a) in basis.eigenvalues().iter().enumerate() {
        let row = xi.row(k).norm_squared();
        if row > 0.0 {
            total += row * weighted_integral(-2.0 * alpha0, |u| (2.0 * a * scale * u).exp())?;
        }
    }
    Ok(total)
}

/// Empirical tails of `sup_j |int_0^{t_j} S(scale (t_j - s)) xi dW(s)|` for a constant `xi`,
/// against the stochastic-convolution bound.
#[allow(clippy::too_many_arguments)]
pub fn peszat_convolution_check(
    basis: &SpectralBasis,
    scale: f64,
    xi: &DMatrix<f64>,
    params: &TailBoundParams,
    deltas: &[f64],
    steps: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<TailRow>> {
    check_deltas(deltas, n)?;
    let grid = TimeGrid::new(steps)?;
    let (d, m) = xi.shape();
    if d != basis.dim() {
        return Err(LdpError::DimensionMismatch {
            what: "xi rows",
            expected: basis.dim(),
            got: d,
        });
    }
    let factors = basis.factors(scale * grid.dt());
    let sups: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            let mut dw = vec![0.0; m];
            let mut y = vec![0.0; d];
            let mut sup = 0.0f64;
            for _ in 0..steps {
                fill_normals(&mut rng, grid.dt().sqrt(), &mut dw);
                for (r, v) in y.iter_mut().enumerate() {
                    *v = factors[r] * (*v + (0..m).map(|k| xi[(r, k)] * dw[k]).sum::<f64>());
                }
                sup = sup.max(y.iter().map(|v| v * v).sum::<f64>().sqrt());
            }
            sup
        })
        .collect();
    Ok(tail_rows("peszat", &sups, deltas, seed, |delta| peszat_bound_eval(params, delta)))
}

/// Small-noise behaviour of `sqrt(eps) W` in `U1` at radius `b`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WienerLdpRow {
    pub epsilon: f64,
    pub b: f64,
    /// `P(sqrt(eps) sup_j |W(t_j)|_{U1} <= b)`.
    pub p_in: f64,
    pub stderr: f64,
    pub eps_log_p_in: f64,
    pub q_out: f64,
    pub eps_log_q_out: f64,
    /// `inf I_W` over paths leaving the ball, `b^2 / (2 lambda_1^2)`, via the extremal path.
    pub rate: f64,
}

/// Rows for every `(eps, b)`; samples are shared across `b` for a given `eps`.
pub fn wiener_ldp_check(
    noise: &NoiseSpace,
    eps_list: &[f64],
    radii: &[f64],
    steps: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<WienerLdpRow>> {
    check_deltas(radii, n)?;
    if eps_list.is_empty() {
        return Err(LdpError::invalid("epsilon", "list must be nonempty"));
    }
    let grid = TimeGrid::new(steps)?;
    let m = noise.dim();
    let mut rows = Vec::new();
    for (idx, &eps) in eps_list.iter().enumerate() {
        check_epsilon(eps)?;
        let s = row_seed(seed, idx);
        let sups: Vec<f64> = (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(s, i);
                let mut dw = vec![0.0; m];
                let mut w = UVec::zeros(m);
                let mut sup = 0.0f64;
                for _ in 0..steps {
                    fill_normals(&mut rng, grid.dt().sqrt(), &mut dw);
                    for (a, b) in w.iter_mut().zip(&dw) {
                        *a += b;
                    }
                    sup = sup.max(noise.u1_norm(&w));
                }
                eps.sqrt() * sup
            })
            .collect();
        for &b in radii {
            let inside: Vec<f64> = sups.iter().map(|v| if *v <= b { 1.0 } else { 0.0 }).collect();
            let est = McEstimate::from_samples(&inside, s);
            let log = |p: f64| if p > 0.0 { eps * p.ln() } else { f64::NEG_INFINITY };
            // Cheapest exit: constant control along the heaviest mode, reaching |f(1)|_{U1} = b.
            let speed = b / noise.weights()[0];
            let extremal: Vec<U1Vec> = (0..=steps)
                .map(|j| {
                    let mut c = UVec::zeros(m);
                    c[0] = speed * grid.node(j);
                    noise.embed(&c)
                })
                .collect();
            rows.push(WienerLdpRow {
                epsilon: eps,
                b,
                p_in: est.mean,
                stderr: est.stderr,
                eps_log_p_in: log(est.mean),
                q_out: 1.0 - est.mean,
                eps_log_q_out: log(1.0 - est.mean),
                rate: wiener_rate(&extremal, grid, noise)?.as_f64(),
            });
        }
    }
    Ok(rows)
}
