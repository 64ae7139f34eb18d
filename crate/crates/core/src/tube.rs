//! Minimal control energy over skeletons that stay in a closed `delta`-tube
//! around an observed path:
//!
//! `inf { 1/2 sum |psi_j|^2 dt : z^psi_0 = x, sup_j |z^psi(t_j) - u(t_j)| <= delta }`.
//!
//! For a scalar state with constant diffusion the minimizer is a taut string and
//! is computed exactly. Otherwise a hinge-penalized problem is solved by L-BFGS
//! and the result is accepted only if its skeleton lies in the tube.

use crate::error::{LdpError, Result};
use crate::models::ModelSpec;
use crate::optim::{minimize, LbfgsOptions};
use crate::sim::Trajectory;
use crate::skeleton::{penalized_objective, skeleton_flat, ControlPath, RateOptions, RateValue};
use crate::spectral::HVec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TubeSolver {
    TautString,
    Penalized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TubeRate {
    pub value: RateValue,
    pub control: Option<ControlPath>,
    /// `sup_j |z(t_j) - u(t_j)|` of the returned control's skeleton.
    pub residual: f64,
    pub solver: TubeSolver,
}

fn check_inputs(x: &HVec, u: &Trajectory, delta: f64, model: &ModelSpec) -> Result<()> {
    model.check_state(x)?;
    if u.dim() != model.dim_h() {
        return Err(LdpError::DimensionMismatch {
            what: "observed path",
            expected: model.dim_h(),
            got: u.dim(),
        });
    }
    if !(delta > 0.0) {
        return Err(LdpError::invalid("delta", format!("must be positive, got {delta}")));
    }
    Ok(())
}

/// Minimal tube energy; see the module documentation.
pub fn tube_rate(x: &HVec, u: &Trajectory, delta: f64, model: &ModelSpec, opts: &RateOptions) -> Result<TubeRate> {
    check_inputs(x, u, delta, model)?;
    if let Some(row) = scalar_constant_row(model) {
        return Ok(taut_string_rate(x[0], u, delta, &row));
    }
    Ok(penalized_tube_rate(x, u, delta, model, opts))
}

/// Whether the tube energy of `u` exceeds `r`, using cheap certificates where they settle it.
pub fn tube_rate_exceeds(
    x: &HVec,
    u: &Trajectory,
    delta: f64,
    r: f64,
    model: &ModelSpec,
    opts: &RateOptions,
) -> Result<bool> {
    check_inputs(x, u, delta, model)?;
    let grid = u.grid();
    let gaps: Vec<f64> = u.values().iter().map(|v| (v - x).norm()).collect();
    if gaps[0] > delta {
        return Ok(true);
    }
    if gaps.iter().all(|g| *g <= delta) {
        return Ok(false);
    }
    // |z_j - x| <= Gamma sqrt(t_j) sqrt(2 energy), so reaching the tube at t_j costs at least
    // (|u_j - x| - delta)^2 / (2 Gamma^2 t_j).
    if let Some(gamma) = model.gamma_bound() {
        let lower = gaps
            .iter()
            .enumerate()
            .skip(1)
            .map(|(j, g)| {
                let reach = (g - delta).max(0.0);
                if reach == 0.0 {
                    0.0
                } else if gamma == 0.0 {
                    f64::INFINITY
                } else {
                    reach * reach / (2.0 * gamma * gamma * grid.node(j))
                }
            })
            .fold(0.0, f64::max);
        if lower > r {
            return Ok(true);
        }
    }
    Ok(tube_rate(x, u, delta, model, opts)?.value.as_f64() > r)
}

/// The `1 x m` row of a constant diffusion on a scalar state, if that is the model's form.
fn scalar_constant_row(model: &ModelSpec) -> Option<Vec<f64>> {
    let c = model.constant_diffusion()?;
    (c.nrows() == 1 && c.iter().any(|v| *v != 0.0)).then(|| c.iter().copied().collect())
}

fn taut_string_rate(x: f64, u: &Trajectory, delta: f64, row: &[f64]) -> TubeRate {
    let grid = u.grid();
    let target: Vec<f64> = u.values().iter().map(|v| v[0]).collect();
    if (target[0] - x).abs() > delta {
        return TubeRate {
            value: RateValue::Infinite,
            control: None,
            residual: (target[0] - x).abs(),
            solver: TubeSolver::TautString,
        };
    }
    let z = taut_string_free_end(x, &target, delta);
    let dt = grid.dt();
    let c2: f64 = row.iter().map(|c| c * c).sum();
    let increments: Vec<f64> = z.windows(2).map(|w| w[1] - w[0]).collect();
    let energy = crate::rng::pairwise_sum(&increments.iter().map(|s| s * s / (2.0 * c2 * dt)).collect::<Vec<_>>());
    let control = ControlPath::from_flat(
        &increments
            .iter()
            .flat_map(|s| row.iter().map(move |c| c * s / (c2 * dt)))
            .collect::<Vec<_>>(),
        row.len(),
        grid,
    );
    let residual = z.iter().zip(&target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    TubeRate {
        value: RateValue::Finite(energy),
        control: Some(control),
        residual,
        solver: TubeSolver::TautString,
    }
}

/// Minimizes `sum (z_{j+1} - z_j)^2` over `z_0 = x`, `|z_j - u_j| <= delta` for `j >= 1`,
/// with free right end.
///
/// The free end is handled by reflecting the corridor about `j = N` and pinning both ends
/// at `x`; the symmetric taut string through the doubled corridor restricts to the answer.
pub(crate) fn taut_string_free_end(x: f64, u: &[f64], delta: f64) -> Vec<f64> {
    let n = u.len() - 1;
    let len = 2 * n;
    let bounds = |k: usize| -> (f64, f64) {
        if k == 0 || k == len {
            return (x, x);
        }
        let j = if k <= n { k } else { len - k };
        (u[j] - delta, u[j] + delta)
    };
    let mut z = vec![x; len + 1];
    let mut anchor = 0usize;
    let mut value = x;
    'outer: while anchor < len {
        let mut lo_slope = f64::NEG_INFINITY;
        let mut hi_slope = f64::INFINITY;
        let mut lo_idx = anchor;
        let mut hi_idx = anchor;
        for k in anchor + 1..=len {
            let (lo, hi) = bounds(k);
            let span = (k - anchor) as f64;
            let s_lo = (lo - value) / span;
            let s_hi = (hi - value) / span;
            if s_lo > hi_slope {
                // Bend on the upper side at the tightest upper constraint.
                for i in anchor + 1..=hi_idx {
                    z[i] = value + hi_slope * (i - anchor) as f64;
                }
                z[hi_idx] = bounds(hi_idx).1;
                value = z[hi_idx];
                anchor = hi_idx;
                continue 'outer;
            }
            if s_hi < lo_slope {
                for i in anchor + 1..=lo_idx {
                    z[i] = value + lo_slope * (i - anchor) as f64;
                }
                z[lo_idx] = bounds(lo_idx).0;
                value = z[lo_idx];
                anchor = lo_idx;
                continue 'outer;
            }
            if s_lo >= lo_slope {
                lo_slope = s_lo;
                lo_idx = k;
            }
            if s_hi <= hi_slope {
                hi_slope = s_hi;
                hi_idx = k;
            }
        }
        // The pinned end makes the cone collapse to a single slope.
        let slope = (x - value) / (len - anchor) as f64;
        for i in anchor + 1..=len {
            z[i] = value + slope * (i - anchor) as f64;
        }
        break;
    }
    z.truncate(n + 1);
    z
}

fn penalized_tube_rate(x: &HVec, u: &Trajectory, delta: f64, model: &ModelSpec, opts: &RateOptions) -> TubeRate {
    let grid = u.grid();
    let d = x.len();
    let m = model.dim_u();
    let target = u.flat();
    let start_gap = (u.initial() - x).norm();
    if start_gap > delta {
        return TubeRate {
            value: RateValue::Infinite,
            control: None,
            residual: start_gap,
            solver: TubeSolver::Penalized,
        };
    }
    let inner = delta * (1.0 - 1e-3);
    let mut psi = initial_guess(u, model);
    let mut z = vec![0.0; target.len()];
    let mut last_residual = f64::INFINITY;
    for &kappa in &opts.penalties {
        let lbfgs = LbfgsOptions {
            max_iter: opts.max_iter,
            ..LbfgsOptions::default()
        };
        let (next, _) = minimize(psi, lbfgs, |p, g| {
            penalized_objective(model, x.as_slice(), grid, p, g, &mut z, &mut |j, zj, pg| {
                hinge(zj, &target[j * d..(j + 1) * d], inner, kappa, pg)
            })
        });
        psi = next;
        skeleton_flat(model, x.as_slice(), &psi, grid, &mut z);
        last_residual = sup_gap(&z, &target, d);
        if last_residual <= delta {
            let energy = 0.5 * grid.dt() * psi.iter().map(|v| v * v).sum::<f64>();
            return TubeRate {
                value: RateValue::Finite(energy),
                control: Some(ControlPath::from_flat(&psi, m, grid)),
                residual: last_residual,
                solver: TubeSolver::Penalized,
            };
        }
    }
    TubeRate {
        value: RateValue::Infinite,
        control: Some(ControlPath::from_flat(&psi, m, grid)),
        residual: last_residual,
        solver: TubeSolver::Penalized,
    }
}

/// `kappa (|z - u| - inner)_+^2` and its gradient.
fn hinge(z: &[f64], u: &[f64], inner: f64, kappa: f64, grad: &mut [f64]) -> f64 {
    let dist = z.iter().zip(u).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let excess = dist - inner;
    if excess <= 0.0 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        return 0.0;
    }
    for ((g, a), b) in grad.iter_mut().zip(z).zip(u) {
        *g = 2.0 * kappa * excess * (a - b) / dist;
    }
    kappa * excess * excess
}

fn sup_gap(z: &[f64], target: &[f64], d: usize) -> f64 {
    z.chunks(d)
        .zip(target.chunks(d))
        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Per-cell minimum-norm controls that follow `u`.
fn initial_guess(u: &Trajectory, model: &ModelSpec) -> Vec<f64> {
    let dt = u.grid().dt();
    let mut psi = Vec::with_capacity(u.grid().steps() * model.dim_u());
    for j in 0..u.grid().steps() {
        let g = model.diffusion_matrix(u.values()[j].as_slice());
        let rate = (&u.values()[j + 1] - &u.values()[j]) / dt;
        let tol = 1e-12 * g.amax().max(f64::MIN_POSITIVE);
        match g.pseudo_inverse(tol) {
            Ok(pinv) => psi.extend((pinv * rate).iter()),
            Err(_) => psi.extend(std::iter::repeat_n(0.0, model.dim_u())),
        }
    }
    psi
}
