//! Controlled skeleton `dz/dt = G(z) phi(t)`, the rate functional as minimal
//! control energy, and the Gronwall estimates for skeletons.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{LdpError, Result};
use crate::models::ModelSpec;
use crate::optim::{minimize, LbfgsOptions};
use crate::rng::pairwise_sum;
use crate::sim::Trajectory;
use crate::spectral::{HVec, NoiseSpace, TimeGrid, U1Vec, UVec};

/// Piecewise-constant `U`-valued control: `values[j]` acts on `(t_j, t_{j+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPath {
    values: Vec<UVec>,
    grid: TimeGrid,
}

impl ControlPath {
    pub fn new(values: Vec<UVec>, grid: TimeGrid) -> Result<Self> {
        grid.expect_steps(values.len())?;
        let m = values[0].len();
        if m == 0 {
            return Err(LdpError::invalid("phi", "control must have at least one mode"));
        }
        if let Some(bad) = values.iter().find(|v| v.len() != m) {
            return Err(LdpError::DimensionMismatch {
                what: "control cell",
                expected: m,
                got: bad.len(),
            });
        }
        if values.iter().any(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(LdpError::invalid("phi", "control values must be finite"));
        }
        Ok(Self { values, grid })
    }

    pub fn constant(value: UVec, grid: TimeGrid) -> Result<Self> {
        Self::new(vec![value; grid.steps()], grid)
    }

    pub fn zero(dim: usize, grid: TimeGrid) -> Self {
        Self {
            values: vec![UVec::zeros(dim); grid.steps()],
            grid,
        }
    }

    /// Cell values `f(t_j)` at left endpoints.
    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> UVec) -> Result<Self> {
        Self::new((0..grid.steps()).map(|j| f(grid.node(j))).collect(), grid)
    }

    pub(crate) fn from_flat(flat: &[f64], dim: usize, grid: TimeGrid) -> Self {
        Self {
            values: flat.chunks(dim).map(UVec::from_column_slice).collect(),
            grid,
        }
    }

    pub(crate) fn flat(&self) -> Vec<f64> {
        self.values.iter().flat_map(|v| v.iter().copied()).collect()
    }

    pub fn values(&self) -> &[UVec] {
        &self.values
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    /// `1/2 sum_j |psi_j|^2 dt`.
    pub fn energy(&self) -> f64 {
        0.5 * self.l2_norm_sq()
    }

    /// `(sum_j |psi_j|^2 dt)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    fn l2_norm_sq(&self) -> f64 {
        let terms: Vec<f64> = self.values.iter().map(|v| v.norm_squared() * self.grid.dt()).collect();
        pairwise_sum(&terms)
    }

    pub(crate) fn check_against(&self, grid: TimeGrid, dim: usize) -> Result<()> {
        grid.expect_steps(self.grid.steps())?;
        if self.dim() != dim {
            return Err(LdpError::DimensionMismatch {
                what: "control modes",
                expected: dim,
                got: self.dim(),
            });
        }
        Ok(())
    }
}

/// Euler skeleton on flat buffers: `z` has `(N + 1) d` entries.
pub(crate) fn skeleton_flat(model: &ModelSpec, x: &[f64], psi: &[f64], grid: TimeGrid, z: &mut [f64]) {
    let d = x.len();
    let m = model.dim_u();
    let dt = grid.dt();
    let mut gv = vec![0.0; d];
    z[..d].copy_from_slice(x);
    for j in 0..grid.steps() {
        let (head, tail) = z.split_at_mut((j + 1) * d);
        let cur = &head[j * d..];
        model.diffusion_apply(cur, &psi[j * m..(j + 1) * m], &mut gv);
        for i in 0..d {
            tail[i] = cur[i] + dt * gv[i];
        }
    }
}

fn check_skeleton_inputs(x: &HVec, phi: &ControlPath, model: &ModelSpec) -> Result<()> {
    model.check_state(x)?;
    if phi.dim() != model.dim_u() {
        return Err(LdpError::DimensionMismatch {
            what: "control modes",
            expected: model.dim_u(),
            got: phi.dim(),
        });
    }
    Ok(())
}

/// Explicit Euler: `z_{j+1} = z_j + G(z_j) phi_j dt`, `z_0 = x`.
pub fn solve_skeleton(x: &HVec, phi: &ControlPath, model: &ModelSpec) -> Result<Trajectory> {
    check_skeleton_inputs(x, phi, model)?;
    let d = x.len();
    let mut z = vec![0.0; (phi.grid().steps() + 1) * d];
    skeleton_flat(model, x.as_slice(), &phi.flat(), phi.grid(), &mut z);
    Ok(Trajectory::from_flat(&z, d, phi.grid()))
}

/// Fixed-point iteration `z <- x + sum_{j<r} G(z_j) phi_j dt` of the discrete integral equation.
///
/// The fixed point is the Euler skeleton; this backend exists to cross-check it.
pub fn solve_skeleton_picard(x: &HVec, phi: &ControlPath, model: &ModelSpec, max_iter: usize) -> Result<Trajectory> {
    check_skeleton_inputs(x, phi, model)?;
    let grid = phi.grid();
    let d = x.len();
    let dt = grid.dt();
    let mut z = vec![x.clone(); grid.steps() + 1];
    let mut gv = vec![0.0; d];
    for _ in 0..max_iter {
        let mut next = Vec::with_capacity(z.len());
        let mut acc = x.clone();
        next.push(acc.clone());
        for (zj, pj) in z.iter().zip(phi.values()) {
            model.diffusion_apply(zj.as_slice(), pj.as_slice(), &mut gv);
            for i in 0..d {
                acc[i] += dt * gv[i];
            }
            next.push(acc.clone());
        }
        let change = z.iter().zip(&next).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
        z = next;
        if change == 0.0 {
            break;
        }
    }
    Trajectory::new(z, grid)
}

/// A rate value: a certified upper bound on the infimum, or `+inf` when no control was found.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum RateValue {
    Finite(f64),
    Infinite,
}

impl RateValue {
    pub fn is_finite(&self) -> bool {
        matches!(self, RateValue::Finite(_))
    }

    pub fn as_f64(&self) -> f64 {
        match self {
            RateValue::Finite(v) => *v,
            RateValue::Infinite => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RateStage {
    /// The target's initial point is not within tolerance of `x`.
    Initial,
    /// Per-cell minimum-norm least squares reproduced the target.
    Direct,
    /// Penalized minimization.
    Penalized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateResult {
    pub value: RateValue,
    pub control: Option<ControlPath>,
    /// `sup_j |z^psi(t_j) - u(t_j)|` for the returned control (or the best one tried).
    pub residual: f64,
    pub stage: RateStage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateOptions {
    pub tol: f64,
    /// Penalty weights tried in order.
    pub penalties: Vec<f64>,
    pub max_iter: usize,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            penalties: (0..=6).map(|k| 10f64.powi(k)).collect(),
            max_iter: 500,
        }
    }
}

/// Gradient of `1/2 sum |psi_j|^2 dt + sum_{j >= 1} p_j(z_j)` with respect to the flat control,
/// by the discrete adjoint of the Euler skeleton.
///
/// `penalty(j, z_j, grad)` returns `p_j(z_j)` and writes its gradient.
pub(crate) fn penalized_objective(
    model: &ModelSpec,
    x: &[f64],
    grid: TimeGrid,
    psi: &[f64],
    grad: &mut [f64],
    z: &mut [f64],
    penalty: &mut impl FnMut(usize, &[f64], &mut [f64]) -> f64,
) -> f64 {
    let d = x.len();
    let m = model.dim_u();
    let n = grid.steps();
    let dt = grid.dt();
    skeleton_flat(model, x, psi, grid, z);

    let mut value = 0.5 * dt * psi.iter().map(|v| v * v).sum::<f64>();
    let mut lambda = vec![0.0; d];
    let mut pg = vec![0.0; d];
    value += penalty(n, &z[n * d..], &mut lambda);
    let constant = model.constant_diffusion().is_some();
    let mut gt = vec![0.0; m];
    let mut plus = vec![0.0; d];
    let mut minus = vec![0.0; d];
    let mut zp = vec![0.0; d];
    for j in (0..n).rev() {
        let zj = &z[j * d..(j + 1) * d];
        let pj = &psi[j * m..(j + 1) * m];
        // d/dpsi_j: dt psi_j + dt G(z_j)^T lambda_{j+1}.
        let g = model.diffusion_matrix(zj);
        gt.iter_mut().enumerate().for_each(|(k, v)| {
            *v = (0..d).map(|i| g[(i, k)] * lambda[i]).sum();
        });
        for k in 0..m {
            grad[j * m + k] = dt * (pj[k] + gt[k]);
        }
        if j == 0 {
            break;
        }
        // lambda_j = grad p_j(z_j) + (I + dt J_j)^T lambda_{j+1}, J_j = D_z[G(z) psi_j].
        let mut next = lambda.clone();
        if !constant {
            for l in 0..d {
                let h = 1e-6 * zj[l].abs().max(1.0);
                zp.copy_from_slice(zj);
                zp[l] = zj[l] + h;
                model.diffusion_apply(&zp, pj, &mut plus);
                zp[l] = zj[l] - h;
                model.diffusion_apply(&zp, pj, &mut minus);
                let jt: f64 = (0..d).map(|i| (plus[i] - minus[i]) / (2.0 * h) * lambda[i]).sum();
                next[l] += dt * jt;
            }
        }
        value += penalty(j, zj, &mut pg);
        for l in 0..d {
            next[l] += pg[l];
        }
        lambda = next;
    }
    value
}

fn check_target(x: &HVec, u: &Trajectory, model: &ModelSpec) -> Result<()> {
    model.check_state(x)?;
    if u.dim() != model.dim_h() {
        return Err(LdpError::DimensionMismatch {
            what: "target path",
            expected: model.dim_h(),
            got: u.dim(),
        });
    }
    Ok(())
}

fn direct_recovery(u: &Trajectory, model: &ModelSpec) -> (Vec<f64>, f64) {
    let grid = u.grid();
    let dt = grid.dt();
    let mut psi = Vec::with_capacity(grid.steps() * model.dim_u());
    let mut cell_residual = 0.0f64;
    for j in 0..grid.steps() {
        let g = model.diffusion_matrix(u.values()[j].as_slice());
        let rate = (&u.values()[j + 1] - &u.values()[j]) / dt;
        let tol = 1e-12 * g.amax().max(f64::MIN_POSITIVE);
        let pinv = g.clone().pseudo_inverse(tol).unwrap_or_else(|_| DMatrix::zeros(g.ncols(), g.nrows()));
        let cell = pinv * &rate;
        cell_residual = cell_residual.max(((&g * &cell) - rate).norm() * dt);
        psi.extend(cell.iter());
    }
    (psi, cell_residual)
}

fn reproduction_residual(model: &ModelSpec, x: &HVec, psi: &[f64], u: &Trajectory, z: &mut [f64]) -> f64 {
    skeleton_flat(model, x.as_slice(), psi, u.grid(), z);
    let target = u.flat();
    let d = x.len();
    z.chunks(d)
        .zip(target.chunks(d))
        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// One stage-(ii) round per penalty weight: (kappa, energy, residual).
pub type PenaltyTrace = Vec<(f64, f64, f64)>;

fn penalized_rounds(
    x: &HVec,
    u: &Trajectory,
    model: &ModelSpec,
    opts: &RateOptions,
    start: Vec<f64>,
    mut after_round: impl FnMut(f64, &[f64], f64) -> bool,
) -> Vec<f64> {
    let grid = u.grid();
    let d = x.len();
    let target = u.flat();
    let mut z = vec![0.0; target.len()];
    let mut psi = start;
    for &kappa in &opts.penalties {
        let lbfgs = LbfgsOptions {
            max_iter: opts.max_iter,
            ..LbfgsOptions::default()
        };
        let mut zbuf = vec![0.0; target.len()];
        let (next, _) = minimize(psi, lbfgs, |p, g| {
            penalized_objective(model, x.as_slice(), grid, p, g, &mut zbuf, &mut |j, zj, pg| {
                let uj = &target[j * d..(j + 1) * d];
                let mut v = 0.0;
                for i in 0..d {
                    let e = zj[i] - uj[i];
                    v += e * e;
                    pg[i] = 2.0 * kappa * e;
                }
                kappa * v
            })
        });
        psi = next;
        let residual = reproduction_residual(model, x, &psi, u, &mut z);
        if !after_round(kappa, &psi, residual) {
            break;
        }
    }
    psi
}

fn flat_energy(psi: &[f64], dt: f64) -> f64 {
    let terms: Vec<f64> = psi.iter().map(|v| v * v * dt).collect();
    0.5 * pairwise_sum(&terms)
}

/// Upper bound on the rate of the target path `u` started at `x`, with a residual certificate.
pub fn rate_of_target(x: &HVec, u: &Trajectory, model: &ModelSpec, opts: &RateOptions) -> Result<RateResult> {
    check_target(x, u, model)?;
    if !(opts.tol > 0.0) {
        return Err(LdpError::invalid("tol", "must be positive"));
    }
    let grid = u.grid();
    let m = model.dim_u();
    let start_gap = (u.initial() - x).norm();
    if start_gap > opts.tol {
        return Ok(RateResult {
            value: RateValue::Infinite,
            control: None,
            residual: start_gap,
            stage: RateStage::Initial,
        });
    }

    let (psi, cell_residual) = direct_recovery(u, model);
    let mut z = vec![0.0; (grid.steps() + 1) * x.len()];
    let residual = reproduction_residual(model, x, &psi, u, &mut z);
    if cell_residual <= opts.tol && residual <= opts.tol {
        return Ok(RateResult {
            value: RateValue::Finite(flat_energy(&psi, grid.dt())),
            control: Some(ControlPath::from_flat(&psi, m, grid)),
            residual,
            stage: RateStage::Direct,
        });
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut last_residual = residual;
    let psi = penalized_rounds(x, u, model, opts, psi, |_, p, res| {
        last_residual = res;
        if res <= opts.tol {
            best = Some((res, p.to_vec()));
            false
        } else {
            true
        }
    });
    Ok(match best {
        Some((res, p)) => RateResult {
            value: RateValue::Finite(flat_energy(&p, grid.dt())),
            control: Some(ControlPath::from_flat(&p, m, grid)),
            residual: res,
            stage: RateStage::Penalized,
        },
        None => RateResult {
            value: RateValue::Infinite,
            control: Some(ControlPath::from_flat(&psi, m, grid)),
            residual: last_residual,
            stage: RateStage::Penalized,
        },
    })
}

/// Runs every penalized round from the direct-recovery control and records
/// `(kappa, energy, residual)` after each.
pub fn penalty_trace(x: &HVec, u: &Trajectory, model: &ModelSpec, opts: &RateOptions) -> Result<PenaltyTrace> {
    check_target(x, u, model)?;
    let (psi, _) = direct_recovery(u, model);
    let dt = u.grid().dt();
    let mut trace = Vec::new();
    penalized_rounds(x, u, model, opts, psi, |kappa, p, res| {
        trace.push((kappa, flat_energy(p, dt), res));
        true
    });
    Ok(trace)
}

/// `(sup_j |z1_j - z2_j|, (|x1 - x2| + sup_r |sum_{j<r} G(z1_j)(phi1_j - phi2_j) dt|) exp(Lambda q))`
/// with `q` the larger `L^2` norm of the two controls.
pub fn skeleton_continuity_bound(
    x1: &HVec,
    x2: &HVec,
    phi1: &ControlPath,
    phi2: &ControlPath,
    model: &ModelSpec,
) -> Result<(f64, f64)> {
    let z1 = solve_skeleton(x1, phi1, model)?;
    let z2 = solve_skeleton(x2, phi2, model)?;
    let lhs = z1.sup_distance(&z2)?;
    let dt = phi1.grid().dt();
    let d = x1.len();
    let mut acc = HVec::zeros(d);
    let mut sup_acc = 0.0f64;
    let mut gv = vec![0.0; d];
    for j in 0..phi1.grid().steps() {
        let diff = &phi1.values()[j] - &phi2.values()[j];
        model.diffusion_apply(z1.values()[j].as_slice(), diff.as_slice(), &mut gv);
        for i in 0..d {
            acc[i] += dt * gv[i];
        }
        sup_acc = sup_acc.max(acc.norm());
    }
    let q = phi1.l2_norm().max(phi2.l2_norm());
    let rhs = ((x1 - x2).norm() + sup_acc) * (model.lambda_lip() * q).exp();
    Ok((lhs, rhs))
}

/// `(sup_j |z_j|, (|x| + Lambda sqrt(2r)) exp(Lambda sqrt(2r)))` with `r = energy(phi)`.
pub fn skeleton_apriori_bound(x: &HVec, phi: &ControlPath, model: &ModelSpec) -> Result<(f64, f64)> {
    let z = solve_skeleton(x, phi, model)?;
    let bound = crate::models::skeleton_level_bound(x.norm(), phi.energy(), model.lambda_lip());
    Ok((z.sup_norm(), bound))
}

/// `1/2 ||f||^2` in the reproducing kernel space of `W` in `U1`, for a grid-sampled path
/// in orthonormal `U1` coordinates; `+inf` unless `f(0) = 0`.
pub fn wiener_rate(f: &[U1Vec], grid: TimeGrid, noise: &NoiseSpace) -> Result<RateValue> {
    if f.len() != grid.steps() + 1 {
        return Err(LdpError::GridMismatch {
            expected: grid.steps() + 1,
            got: f.len(),
        });
    }
    if let Some(bad) = f.iter().find(|v| v.len() != noise.dim()) {
        return Err(LdpError::DimensionMismatch {
            what: "U1 path",
            expected: noise.dim(),
            got: bad.len(),
        });
    }
    if f[0].iter().any(|v| *v != 0.0) {
        return Ok(RateValue::Infinite);
    }
    let dt = grid.dt();
    let terms: Vec<f64> = f
        .windows(2)
        .map(|w| noise.pull_back(&((&w[1] - &w[0]) / dt)).norm_squared() * dt)
        .collect();
    Ok(RateValue::Finite(0.5 * pairwise_sum(&terms)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{DiffusionForm, DriftForm, TimeWeight};
    use approx::assert_relative_eq;

    fn scalar_constant(sigma: f64) -> ModelSpec {
        ModelSpec::additive(DMatrix::from_element(1, 1, sigma)).unwrap()
    }

    #[test]
    fn zero_control_is_constant_path() {
        let grid = TimeGrid::new(10).unwrap();
        let x = HVec::from_vec(vec![1.0, -2.0]);
        let model = ModelSpec::additive(DMatrix::from_element(2, 2, 1.0)).unwrap();
        let z = solve_skeleton(&x, &ControlPath::zero(2, grid), &model).unwrap();
        assert!(z.values().iter().all(|v| *v == x));
    }

    #[test]
    fn constant_integrand_is_linear() {
        let grid = TimeGrid::new(8).unwrap();
        let phi = ControlPath::constant(UVec::from_vec(vec![0.5]), grid).unwrap();
        let z = solve_skeleton(&HVec::from_vec(vec![1.0]), &phi, &scalar_constant(2.0)).unwrap();
        for (j, v) in z.values().iter().enumerate() {
            assert_relative_eq!(v[0], 1.0 + grid.node(j), epsilon = 1e-15);
        }
    }

    #[test]
    fn picard_matches_euler() {
        let grid = TimeGrid::new(64).unwrap();
        let model = ModelSpec::new(
            1,
            1,
            DriftForm::Zero,
            TimeWeight::Constant(0.0),
            DiffusionForm::AffineColumns {
                offset: DMatrix::from_element(1, 1, 0.3),
                slopes: vec![DMatrix::from_element(1, 1, 0.8)],
            },
        )
        .unwrap();
        let phi = ControlPath::from_fn(grid, |t| UVec::from_vec(vec![(3.0 * t).sin()])).unwrap();
        let x = HVec::from_vec(vec![0.4]);
        let euler = solve_skeleton(&x, &phi, &model).unwrap();
        let picard = solve_skeleton_picard(&x, &phi, &model, 200).unwrap();
        assert!(euler.sup_distance(&picard).unwrap() < 1e-13);
    }

    #[test]
    fn affine_target_rate() {
        let grid = TimeGrid::new(20).unwrap();
        let x = HVec::from_vec(vec![0.3]);
        let u = Trajectory::new(
            (0..=20).map(|j| HVec::from_vec(vec![0.3 + 1.5 * grid.node(j)])).collect(),
            grid,
        )
        .unwrap();
        let res = rate_of_target(&x, &u, &scalar_constant(1.0), &RateOptions::default()).unwrap();
        assert_relative_eq!(res.value.as_f64(), 1.125, epsilon = 1e-12);
        assert_eq!(res.stage, RateStage::Direct);
        for c in res.control.unwrap().values() {
            assert_relative_eq!(c[0], 1.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn unreachable_targets_are_infinite() {
        let grid = TimeGrid::new(10).unwrap();
        let x = HVec::from_vec(vec![0.0]);
        let u = Trajectory::new((0..=10).map(|j| HVec::from_vec(vec![grid.node(j)])).collect(), grid).unwrap();
        let res = rate_of_target(&x, &u, &ModelSpec::zero(1, 1).unwrap(), &RateOptions::default()).unwrap();
        assert_eq!(res.value, RateValue::Infinite);
        assert!(res.residual > 0.9);

        let far = rate_of_target(&HVec::from_vec(vec![1.0]), &u, &scalar_constant(1.0), &RateOptions::default()).unwrap();
        assert_eq!(far.value, RateValue::Infinite);
        assert_eq!(far.stage, RateStage::Initial);
    }

    #[test]
    fn penalized_stage_recovers_nearly_reachable_target() {
        // G = (1, 0)^T moves only the first coordinate. A sub-tolerance wiggle in the
        // second coordinate defeats per-cell recovery but not the penalized stage.
        let grid = TimeGrid::new(16).unwrap();
        let model = ModelSpec::additive(DMatrix::from_row_slice(2, 1, &[1.0, 0.0])).unwrap();
        let x = HVec::from_vec(vec![0.0, 0.0]);
        let wiggle = |j: usize| match j {
            0 => 0.0,
            j if j % 2 == 1 => 6e-7,
            _ => -6e-7,
        };
        let u = Trajectory::new(
            (0..=16).map(|j| HVec::from_vec(vec![-grid.node(j), wiggle(j)])).collect(),
            grid,
        )
        .unwrap();
        let res = rate_of_target(&x, &u, &model, &RateOptions::default()).unwrap();
        assert_eq!(res.stage, RateStage::Penalized);
        assert!(res.residual <= 1e-6);
        assert_relative_eq!(res.value.as_f64(), 0.5, epsilon = 1e-5);
    }

    #[test]
    fn adjoint_gradient_matches_finite_differences() {
        let grid = TimeGrid::new(6).unwrap();
        let model = ModelSpec::new(
            2,
            2,
            DriftForm::Zero,
            TimeWeight::Constant(0.0),
            DiffusionForm::AffineColumns {
                offset: DMatrix::from_row_slice(2, 2, &[1.0, 0.2, -0.3, 0.8]),
                slopes: vec![
                    DMatrix::from_row_slice(2, 2, &[0.1, 0.4, 0.0, -0.2]),
                    DMatrix::from_row_slice(2, 2, &[-0.3, 0.0, 0.5, 0.1]),
                ],
            },
        )
        .unwrap();
        let x = [0.2, -0.1];
        let psi: Vec<f64> = (0..12).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.3).collect();
        let mut penalty = |j: usize, z: &[f64], g: &mut [f64]| {
            let target = [j as f64 * 0.1, -0.05 * j as f64];
            let mut v = 0.0;
            for i in 0..2 {
                let e = z[i] - target[i];
                g[i] = 6.0 * e;
                v += 3.0 * e * e;
            }
            v
        };
        let mut z = vec![0.0; 14];
        let mut grad = vec![0.0; 12];
        penalized_objective(&model, &x, grid, &psi, &mut grad, &mut z, &mut penalty);
        let mut scratch = vec![0.0; 12];
        for k in 0..12 {
            let h = 1e-6;
            let mut p = psi.clone();
            p[k] += h;
            let fp = penalized_objective(&model, &x, grid, &p, &mut scratch, &mut z, &mut penalty);
            p[k] -= 2.0 * h;
            let fm = penalized_objective(&model, &x, grid, &p, &mut scratch, &mut z, &mut penalty);
            assert_relative_eq!(grad[k], (fp - fm) / (2.0 * h), epsilon = 1e-7);
        }
    }

    #[test]
    fn continuity_examples() {
        let grid = TimeGrid::new(10).unwrap();
        let model = scalar_constant(1.0);
        let phi = ControlPath::zero(1, grid);
        let x = HVec::from_vec(vec![0.2]);
        assert_eq!(skeleton_continuity_bound(&x, &x, &phi, &phi, &model).unwrap(), (0.0, 0.0));
        let (lhs, rhs) = skeleton_continuity_bound(&x, &HVec::from_vec(vec![0.5]), &phi, &phi, &model).unwrap();
        assert_relative_eq!(lhs, 0.3, epsilon = 1e-15);
        assert_relative_eq!(rhs, 0.3, epsilon = 1e-15);
    }

    #[test]
    fn apriori_examples() {
        let grid = TimeGrid::new(100).unwrap();
        let x = HVec::from_vec(vec![0.7]);
        let (sup, bound) = skeleton_apriori_bound(&x, &ControlPath::zero(1, grid), &scalar_constant(1.0)).unwrap();
        assert_relative_eq!(sup, 0.7);
        assert_relative_eq!(bound, 0.7);

        let phi = ControlPath::constant(UVec::from_vec(vec![1.0]), grid).unwrap();
        let (sup, bound) = skeleton_apriori_bound(&HVec::zeros(1), &phi, &scalar_constant(1.0)).unwrap();
        assert_relative_eq!(sup, 1.0, epsilon = 1e-12);
        // energy 1/2, so sqrt(2r) = 1 and the bound is e.
        assert_relative_eq!(bound, std::f64::consts::E, epsilon = 1e-12);
    }

    #[test]
    fn wiener_rate_examples() {
        let grid = TimeGrid::new(16).unwrap();
        let noise = NoiseSpace::new(vec![1.0, 0.5]).unwrap();
        let zero = vec![U1Vec::zeros(2); 17];
        assert_eq!(wiener_rate(&zero, grid, &noise).unwrap(), RateValue::Finite(0.0));

        let c = UVec::from_vec(vec![0.6, -1.2]);
        let f: Vec<U1Vec> = (0..=16).map(|j| noise.embed(&(&c * grid.node(j)))).collect();
        assert_relative_eq!(wiener_rate(&f, grid, &noise).unwrap().as_f64(), 0.5 * c.norm_squared(), epsilon = 1e-13);

        let mut shifted = f.clone();
        shifted[0][0] = 0.1;
        assert_eq!(wiener_rate(&shifted, grid, &noise).unwrap(), RateValue::Infinite);
    }
}
