//! Monte Carlo estimates of tube probabilities and the empirical
//! large-deviation lower and upper bounds built from them.

use rayon::prelude::*;
use serde::Serialize;

use crate::equation::Equation;
use crate::error::{LdpError, Result};
use crate::models::truncation_radius;
use crate::rng::{pairwise_sum, stream_rng};
use crate::sim::{check_epsilon, fill_normals, Stepper, Trajectory, WienerPath};
use crate::skeleton::{skeleton_flat, solve_skeleton, ControlPath, RateOptions};
use crate::spectral::{HVec, TimeGrid};
use crate::tube::tube_rate_exceeds;

/// Level of the one-sided upper confidence bound reported for zero-hit rows.
pub const ZERO_HIT_ALPHA: f64 = 0.05;

/// `log dP/dP^eps` along a path: `-eps^{-1/2} sum <phi_j, dW_j> - (2 eps)^{-1} sum |phi_j|^2 dt`.
pub fn girsanov_log_weight(phi: &ControlPath, eps: f64, w: &WienerPath) -> Result<f64> {
    check_epsilon(eps)?;
    phi.check_against(w.grid(), w.dim())?;
    Ok(log_weight_flat(&phi.flat(), eps, w.grid().dt(), w.as_slice()))
}

fn log_weight_flat(phi: &[f64], eps: f64, dt: f64, dw: &[f64]) -> f64 {
    let cross: Vec<f64> = phi.iter().zip(dw).map(|(p, w)| p * w).collect();
    let sq: Vec<f64> = phi.iter().map(|p| p * p * dt).collect();
    -pairwise_sum(&cross) / eps.sqrt() - pairwise_sum(&sq) / (2.0 * eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`.
    pub stderr: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl McEstimate {
    /// Mean and standard error of `samples`, reduced pairwise in index order.
    pub fn from_samples(samples: &[f64], seed: u64) -> Self {
        let n = samples.len();
        let mean = pairwise_sum(samples) / n as f64;
        let dev: Vec<f64> = samples.iter().map(|v| (v - mean) * (v - mean)).collect();
        let var = if n > 1 { pairwise_sum(&dev) / (n - 1) as f64 } else { 0.0 };
        Self {
            mean,
            stderr: (var / n as f64).sqrt(),
            n_samples: n,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TubeMethod {
    /// Fraction of untilted paths inside the tube.
    Direct,
    /// Paths tilted by `G(X) phi`, reweighted by the likelihood ratio.
    Importance,
}

fn check_mc_args(delta: f64, n: usize) -> Result<()> {
    if !(delta > 0.0) {
        return Err(LdpError::invalid("delta", format!("must be positive, got {delta}")));
    }
    if n == 0 {
        return Err(LdpError::invalid("n_samples", "must be positive"));
    }
    Ok(())
}

/// Estimates `P(sup_j |X^eps(t_j) - z^phi_x(t_j)| < delta)`.
///
/// Sample `i` draws its increments from stream `i` of `seed`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_tube_probability(
    x: &HVec,
    phi: &ControlPath,
    delta: f64,
    eps: f64,
    eq: &Equation,
    n: usize,
    seed: u64,
    method: TubeMethod,
) -> Result<McEstimate> {
    check_mc_args(delta, n)?;
    check_epsilon(eps)?;
    if eq.model.gamma_bound().is_none() {
        return Err(LdpError::UnboundedDiffusion);
    }
    eq.model.check_state(x)?;
    phi.check_against(phi.grid(), eq.dim_u())?;
    let grid = phi.grid();
    let d = eq.dim_h();
    let mut center = vec![0.0; (grid.steps() + 1) * d];
    skeleton_flat(&eq.model, x.as_slice(), &phi.flat(), grid, &mut center);
    let control = phi.flat();
    let dt = grid.dt();

    let samples: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            let mut dw = vec![0.0; grid.steps() * eq.dim_u()];
            fill_normals(&mut rng, dt.sqrt(), &mut dw);
            let mut stepper = Stepper::new(eq, eps, grid, eps.sqrt());
            let tilt = (method == TubeMethod::Importance).then_some(control.as_slice());
            let mut inside = true;
            stepper.run(x.as_slice(), &dw, tilt, |j, s| {
                let c = &center[j * d..(j + 1) * d];
                let dist = s.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                inside = dist < delta;
                inside
            });
            match (inside, method) {
                (false, _) => 0.0,
                (true, TubeMethod::Direct) => 1.0,
                (true, TubeMethod::Importance) => log_weight_flat(&control, eps, dt, &dw).exp(),
            }
        })
        .collect();
    Ok(McEstimate::from_samples(&samples, seed))
}

/// Mean of `exp(log_weight)` over `n` untilted Brownian paths; 1 in expectation.
pub fn mean_importance_weight(phi: &ControlPath, eps: f64, n: usize, seed: u64) -> Result<McEstimate> {
    check_epsilon(eps)?;
    check_mc_args(1.0, n)?;
    let grid = phi.grid();
    let control = phi.flat();
    let samples: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            let mut dw = vec![0.0; control.len()];
            fill_normals(&mut rng, grid.dt().sqrt(), &mut dw);
            log_weight_flat(&control, eps, grid.dt(), &dw).exp()
        })
        .collect();
    Ok(McEstimate::from_samples(&samples, seed))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LdpRow {
    pub epsilon: f64,
    pub estimate: f64,
    pub stderr: f64,
    /// `eps ln(estimate)`; `-inf` when the estimate is 0.
    pub eps_log_estimate: f64,
    pub threshold: f64,
    pub pass: bool,
    pub zero_hit: bool,
    /// `1 - alpha^{1/n}`: upper confidence bound on the probability when no sample hit.
    pub upper_confidence: Option<f64>,
    pub n_samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LdpReport {
    /// Sorted by decreasing `epsilon`.
    pub rows: Vec<LdpRow>,
}

impl LdpReport {
    fn new(mut rows: Vec<LdpRow>) -> Self {
        rows.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
        Self { rows }
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    /// Smallest `epsilon` whose row passes.
    pub fn smallest_passing_eps(&self) -> Option<f64> {
        self.rows.iter().rev().find(|r| r.pass).map(|r| r.epsilon)
    }

    /// Largest `epsilon` such that this row and every row with smaller `epsilon` pass.
    pub fn passes_persist_from(&self) -> Option<f64> {
        let passing_tail = self.rows.iter().rev().take_while(|r| r.pass).count();
        (passing_tail > 0).then(|| self.rows[self.rows.len() - passing_tail].epsilon)
    }
}

/// Seed used for the `index`-th entry of an epsilon list.
pub fn row_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn check_eps_list(eps_list: &[f64]) -> Result<()> {
    if eps_list.is_empty() {
        return Err(LdpError::invalid("epsilon", "list must be nonempty"));
    }
    for &e in eps_list {
        check_epsilon(e)?;
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(LdpError::invalid("epsilon", "list must be strictly decreasing"));
    }
    Ok(())
}

fn eps_log(eps: f64, p: f64) -> f64 {
    if p > 0.0 {
        eps * p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Equation with bounded diffusion: unchanged if already bounded, else truncated at `radius`.
fn bounded(eq: &Equation, radius: impl FnOnce() -> Result<f64>) -> Result<Equation> {
    if eq.model.gamma_bound().is_some() {
        Ok(eq.clone())
    } else {
        eq.truncated(radius()?)
    }
}

/// Lower-bound rows: `eps ln p(eps) >= -energy(phi) - gamma`, where `p` is the tube probability.
///
/// Unbounded diffusions are truncated outside `sup |z^phi_x| + delta`, which leaves the
/// tube event unchanged.
#[allow(clippy::too_many_arguments)]
pub fn verify_lower_bound(
    x: &HVec,
    phi: &ControlPath,
    delta: f64,
    gamma: f64,
    eps_list: &[f64],
    eq: &Equation,
    n: usize,
    seed: u64,
    method: TubeMethod,
) -> Result<LdpReport> {
    check_eps_list(eps_list)?;
    check_mc_args(delta, n)?;
    if !(gamma >= 0.0) {
        return Err(LdpError::invalid("gamma", format!("must be nonnegative, got {gamma}")));
    }
    let eq = bounded(eq, || Ok(solve_skeleton(x, phi, &eq.model)?.sup_norm() + delta))?;
    let threshold = -phi.energy() - gamma;
    let mut rows = Vec::with_capacity(eps_list.len());
    for (i, &eps) in eps_list.iter().enumerate() {
        let s = row_seed(seed, i);
        let est = estimate_tube_probability(x, phi, delta, eps, &eq, n, s, method)?;
        let eps_log_estimate = eps_log(eps, est.mean);
        rows.push(LdpRow {
            epsilon: eps,
            estimate: est.mean,
            stderr: est.stderr,
            eps_log_estimate,
            threshold,
            pass: eps_log_estimate >= threshold,
            zero_hit: est.mean == 0.0,
            upper_confidence: (est.mean == 0.0).then(|| zero_hit_bound(n)),
            n_samples: n,
            seed: s,
        });
    }
    Ok(LdpReport::new(rows))
}

/// `1 - alpha^{1/n}` with `alpha = 0.05`.
pub fn zero_hit_bound(n: usize) -> f64 {
    1.0 - ZERO_HIT_ALPHA.powf(1.0 / n as f64)
}

/// Upper-bound rows: `eps ln q(eps) <= -r + gamma`, where `q` is the probability that the
/// path leaves the `delta`-enlargement of `{I_x <= r}`, decided by the tube energy.
///
/// Unbounded diffusions are truncated at the localization radius for `rho = |x| + delta`.
#[allow(clippy::too_many_arguments)]
pub fn verify_upper_bound(
    x: &HVec,
    r: f64,
    delta: f64,
    gamma: f64,
    eps_list: &[f64],
    eq: &Equation,
    n: usize,
    seed: u64,
    steps: usize,
    opts: &RateOptions,
) -> Result<LdpReport> {
    check_eps_list(eps_list)?;
    check_mc_args(delta, n)?;
    if !(r > 0.0) {
        return Err(LdpError::invalid("r", format!("must be positive, got {r}")));
    }
    if !(gamma >= 0.0) {
        return Err(LdpError::invalid("gamma", format!("must be nonnegative, got {gamma}")));
    }
    eq.model.check_state(x)?;
    let eq = bounded(eq, || truncation_radius(x.norm() + delta, r, delta, eq.model.lambda_lip()))?;
    let grid = TimeGrid::new(steps)?;
    let threshold = -r + gamma;
    let mut rows = Vec::with_capacity(eps_list.len());
    for (i, &eps) in eps_list.iter().enumerate() {
        let s = row_seed(seed, i);
        let hits: Vec<Result<f64>> = (0..n as u64)
            .into_par_iter()
            .map(|k| {
                let mut rng = stream_rng(s, k);
                let mut dw = vec![0.0; steps * eq.dim_u()];
                fill_normals(&mut rng, grid.dt().sqrt(), &mut dw);
                let path = Stepper::new(&eq, eps, grid, eps.sqrt()).trajectory(x.as_slice(), &dw, None);
                Ok(if tube_rate_exceeds(x, &path, delta, r, &eq.model, opts)? {
                    1.0
                } else {
                    0.0
                })
            })
            .collect();
        let hits: Vec<f64> = hits.into_iter().collect::<Result<_>>()?;
        let est = McEstimate::from_samples(&hits, s);
        let zero_hit = est.mean == 0.0;
        let eps_log_estimate = eps_log(eps, est.mean);
        rows.push(LdpRow {
            epsilon: eps,
            estimate: est.mean,
            stderr: est.stderr,
            eps_log_estimate,
            threshold,
            pass: eps_log_estimate <= threshold,
            zero_hit,
            upper_confidence: zero_hit.then(|| zero_hit_bound(n)),
            n_samples: n,
            seed: s,
        });
    }
    Ok(LdpReport::new(rows))
}

/// Simulated paths of the rescaled equation, one per stream of `seed`.
pub fn sample_paths(x: &HVec, eq: &Equation, eps: f64, steps: usize, n: usize, seed: u64) -> Result<Vec<Trajectory>> {
    check_epsilon(eps)?;
    eq.model.check_state(x)?;
    let grid = TimeGrid::new(steps)?;
    Ok((0..n as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k);
            let mut dw = vec![0.0; steps * eq.dim_u()];
            fill_normals(&mut rng, grid.dt().sqrt(), &mut dw);
            Stepper::new(eq, eps, grid, eps.sqrt()).trajectory(x.as_slice(), &dw, None)
        })
        .collect())
}
