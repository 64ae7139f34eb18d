//! Exponential Euler simulation of the time-rescaled equation
//!
//! `dX = eps A X dt + eps F(eps t, X) dt + sqrt(eps) G(X) dW`
//!
//! and of its tilted variant with the extra drift `G(X) phi(t)`.

use std::io::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;

use crate::equation::Equation;
use crate::error::{LdpError, Result};
use crate::rng::{standard_normal, stream_rng};
use crate::skeleton::ControlPath;
use crate::spectral::{HVec, NoiseSpace, SpectralBasis, TimeGrid, UVec};

/// Brownian increments of `m` independent modes over a uniform grid on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    /// Row-major `N x m`: entry `(j, k)` is `beta_k(t_{j+1}) - beta_k(t_j)`.
    increments: Vec<f64>,
    dim: usize,
    grid: TimeGrid,
    seed: u64,
    stream: u64,
}

impl WienerPath {
    pub fn from_increments(grid: TimeGrid, dim: usize, increments: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(LdpError::invalid("dim", "need at least one noise mode"));
        }
        if increments.len() != grid.steps() * dim {
            return Err(LdpError::DimensionMismatch {
                what: "increment matrix",
                expected: grid.steps() * dim,
                got: increments.len(),
            });
        }
        Ok(Self {
            increments,
            dim,
            grid,
            seed: 0,
            stream: 0,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Increment over cell `j`.
    pub fn increment(&self, j: usize) -> &[f64] {
        &self.increments[j * self.dim..(j + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.increments
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.grid.steps(), self.dim, &self.increments)
    }

    /// `W(t_j)` for `j = 0..=N`, by cumulative summation.
    pub fn cumulative(&self) -> Vec<UVec> {
        let mut acc = UVec::zeros(self.dim);
        let mut out = Vec::with_capacity(self.grid.steps() + 1);
        out.push(acc.clone());
        for j in 0..self.grid.steps() {
            for (a, dw) in acc.iter_mut().zip(self.increment(j)) {
                *a += dw;
            }
            out.push(acc.clone());
        }
        out
    }

    /// The same path on the grid with every cell halved.
    ///
    /// Each parent increment `dW` over a cell of length `h` is split as
    /// `(dW / 2 + sqrt(h / 4) Z, dW / 2 - sqrt(h / 4) Z)`, which is the exact
    /// conditional law of the two halves given their sum.
    pub fn refined(&self, seed: u64) -> WienerPath {
        let mut rng = stream_rng(seed, self.stream);
        let half_sd = (self.grid.dt() / 4.0).sqrt();
        let mut out = Vec::with_capacity(2 * self.increments.len());
        for j in 0..self.grid.steps() {
            let parent = self.increment(j);
            let mut second = Vec::with_capacity(self.dim);
            for &dw in parent {
                let first = dw / 2.0 + half_sd * standard_normal(&mut rng);
                out.push(first);
                second.push(dw - first);
            }
            out.extend(second);
        }
        WienerPath {
            increments: out,
            dim: self.dim,
            grid: self.grid.refined(),
            seed,
            stream: self.stream,
        }
    }

    /// Every increment multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> WienerPath {
        WienerPath {
            increments: self.increments.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}

pub(crate) fn fill_normals<R: Rng + ?Sized>(rng: &mut R, sd: f64, buf: &mut [f64]) {
    for v in buf.iter_mut() {
        *v = sd * standard_normal(rng);
    }
}

/// Brownian increments with variance `1/N` per mode, drawn from stream 0 of `seed`.
pub fn sample_wiener(grid: TimeGrid, noise: &NoiseSpace, seed: u64) -> WienerPath {
    sample_wiener_stream(grid, noise.dim(), seed, 0)
}

pub fn sample_wiener_stream(grid: TimeGrid, dim: usize, seed: u64, stream: u64) -> WienerPath {
    let mut rng = stream_rng(seed, stream);
    let mut increments = vec![0.0; grid.steps() * dim];
    fill_normals(&mut rng, grid.dt().sqrt(), &mut increments);
    WienerPath {
        increments,
        dim,
        grid,
        seed,
        stream,
    }
}

/// Grid-sampled `H`-valued path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    values: Vec<HVec>,
    grid: TimeGrid,
}

impl Trajectory {
    pub fn new(values: Vec<HVec>, grid: TimeGrid) -> Result<Self> {
        if values.len() != grid.steps() + 1 {
            return Err(LdpError::GridMismatch {
                expected: grid.steps() + 1,
                got: values.len(),
            });
        }
        let d = values[0].len();
        if let Some(bad) = values.iter().find(|v| v.len() != d) {
            return Err(LdpError::DimensionMismatch {
                what: "trajectory node",
                expected: d,
                got: bad.len(),
            });
        }
        Ok(Self { values, grid })
    }

    pub(crate) fn from_flat(flat: &[f64], dim: usize, grid: TimeGrid) -> Self {
        Self {
            values: flat.chunks(dim).map(HVec::from_column_slice).collect(),
            grid,
        }
    }

    pub(crate) fn flat(&self) -> Vec<f64> {
        self.values.iter().flat_map(|v| v.iter().copied()).collect()
    }

    pub fn values(&self) -> &[HVec] {
        &self.values
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn initial(&self) -> &HVec {
        &self.values[0]
    }

    pub fn terminal(&self) -> &HVec {
        &self.values[self.values.len() - 1]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn sup_distance(&self, other: &Trajectory) -> Result<f64> {
        self.grid.expect_steps(other.grid.steps())?;
        if self.dim() != other.dim() {
            return Err(LdpError::DimensionMismatch {
                what: "trajectory",
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// First node index with `|X(t_j)| >= radius`.
    pub fn first_exit_index(&self, radius: f64) -> Option<usize> {
        self.values.iter().position(|v| v.norm() >= radius)
    }

    /// Writes `t,x_1,...,x_d` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=self.dim()).map(|k| format!("x_{k}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (j, v) in self.values.iter().enumerate() {
            let row: Vec<String> = std::iter::once(self.grid.node(j))
                .chain(v.iter().copied())
                .map(|x| format!("{x}"))
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a file written by [`Trajectory::write_csv`]; times must form a uniform grid on `[0, 1]`.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        if headers.get(0) != Some("t") || headers.len() < 2 {
            return Err(LdpError::Io(format!(
                "{}: expected header t,x_1,...,x_d",
                path.display()
            )));
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for record in reader.records() {
            let record = record?;
            let nums: std::result::Result<Vec<f64>, _> = record.iter().map(|s| s.trim().parse::<f64>()).collect();
            let nums = nums.map_err(|e| LdpError::Io(format!("{}: {e}", path.display())))?;
            if nums.len() != headers.len() {
                return Err(LdpError::Io(format!("{}: ragged row", path.display())));
            }
            times.push(nums[0]);
            values.push(HVec::from_column_slice(&nums[1..]));
        }
        if times.len() < 2 {
            return Err(LdpError::Io(format!("{}: need at least two rows", path.display())));
        }
        let grid = TimeGrid::new(times.len() - 1)?;
        for (j, t) in times.iter().enumerate() {
            if (t - grid.node(j)).abs() > 1e-9 {
                return Err(LdpError::Io(format!(
                    "{}: row {j} has t={t}, expected uniform node {}",
                    path.display(),
                    grid.node(j)
                )));
            }
        }
        Trajectory::new(values, grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    epsilon: f64,
    steps: usize,
    seed: u64,
}

impl SolverConfig {
    pub fn new(epsilon: f64, steps: usize, seed: u64) -> Result<Self> {
        check_epsilon(epsilon)?;
        TimeGrid::new(steps)?;
        Ok(Self { epsilon, steps, seed })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid::new(self.steps).expect("validated at construction")
    }
}

pub(crate) fn check_epsilon(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(LdpError::invalid("epsilon", format!("must lie in (0, 1], got {eps}")));
    }
    Ok(())
}

/// Reusable exponential Euler integrator for one equation, `eps` and grid.
///
/// One step is `X <- S(eps dt) [X + eps dt F(eps t_j, X) + dt G(X) phi_j + s G(X) dW_j]`,
/// where `s` is the noise scale (`sqrt(eps)` for the rescaled equation).
pub(crate) struct Stepper<'a> {
    eq: &'a Equation,
    factors: Vec<f64>,
    eps: f64,
    dt: f64,
    steps: usize,
    noise_scale: f64,
    y: Vec<f64>,
    drift: Vec<f64>,
    gv: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub(crate) fn new(eq: &'a Equation, eps: f64, grid: TimeGrid, noise_scale: f64) -> Self {
        let dt = grid.dt();
        let d = eq.dim_h();
        Self {
            eq,
            factors: eq.basis.factors(eps * dt),
            eps,
            dt,
            steps: grid.steps(),
            noise_scale,
            y: vec![0.0; d],
            drift: vec![0.0; d],
            gv: vec![0.0; d],
        }
    }

    /// Integrates from `x`, calling `visit(j, X_j)` at every node; stops early when
    /// `visit` returns false. Returns the index of the last visited node.
    pub(crate) fn run(
        &mut self,
        x: &[f64],
        increments: &[f64],
        control: Option<&[f64]>,
        mut visit: impl FnMut(usize, &[f64]) -> bool,
    ) -> usize {
        let d = self.eq.dim_h();
        let m = self.eq.dim_u();
        let mut state = x.to_vec();
        if !visit(0, &state) {
            return 0;
        }
        let model = &self.eq.model;
        for j in 0..self.steps {
            let t = self.eps * (j as f64 * self.dt);
            model.drift_into(t, &state, &mut self.drift);
            for i in 0..d {
                self.y[i] = state[i] + self.eps * self.dt * self.drift[i];
            }
            if let Some(phi) = control {
                model.diffusion_apply(&state, &phi[j * m..(j + 1) * m], &mut self.gv);
                for i in 0..d {
                    self.y[i] += self.dt * self.gv[i];
                }
            }
            model.diffusion_apply(&state, &increments[j * m..(j + 1) * m], &mut self.gv);
            for i in 0..d {
                self.y[i] += self.noise_scale * self.gv[i];
                state[i] = self.factors[i] * self.y[i];
            }
            if !visit(j + 1, &state) {
                return j + 1;
            }
        }
        self.steps
    }

    pub(crate) fn trajectory(&mut self, x: &[f64], increments: &[f64], control: Option<&[f64]>) -> Trajectory {
        let d = self.eq.dim_h();
        let mut flat = Vec::with_capacity((self.steps + 1) * d);
        self.run(x, increments, control, |_, s| {
            flat.extend_from_slice(s);
            true
        });
        Trajectory::from_flat(&flat, d, TimeGrid::new(self.steps).expect("positive steps"))
    }
}

fn check_inputs(x: &HVec, eq: &Equation, cfg: &SolverConfig, w: &WienerPath) -> Result<()> {
    eq.model.check_state(x)?;
    cfg.grid().expect_steps(w.grid().steps())?;
    if w.dim() != eq.dim_u() {
        return Err(LdpError::DimensionMismatch {
            what: "Wiener path modes",
            expected: eq.dim_u(),
            got: w.dim(),
        });
    }
    Ok(())
}

/// Exponential Euler approximation of the rescaled mild solution, `X_0 = x`.
pub fn solve_rescaled(x: &HVec, eq: &Equation, cfg: &SolverConfig, w: &WienerPath) -> Result<Trajectory> {
    check_inputs(x, eq, cfg, w)?;
    let mut stepper = Stepper::new(eq, cfg.epsilon, cfg.grid(), cfg.epsilon.sqrt());
    Ok(stepper.trajectory(x.as_slice(), w.as_slice(), None))
}

/// As [`solve_rescaled`], with the drift `eps F(eps t, .)` replaced by `eps F(eps t, .) + G(.) phi(t)`.
pub fn solve_tilted(
    x: &HVec,
    eq: &Equation,
    phi: &ControlPath,
    cfg: &SolverConfig,
    w: &WienerPath,
) -> Result<Trajectory> {
    check_inputs(x, eq, cfg, w)?;
    phi.check_against(cfg.grid(), eq.dim_u())?;
    let mut stepper = Stepper::new(eq, cfg.epsilon, cfg.grid(), cfg.epsilon.sqrt());
    Ok(stepper.trajectory(x.as_slice(), w.as_slice(), Some(&phi.flat())))
}

/// The original equation on `[0, eps]` and the rescaled one on `[0, 1]`, driven by the same noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    /// `Y(eps t_j)`: the original solution on the grid `eps t_j`.
    pub original: Trajectory,
    pub rescaled: Trajectory,
    pub sup_distance: f64,
}

/// Simulates the original equation with `N` steps of size `eps / N` driven by `dW`, and
/// the rescaled equation driven by `dV = eps^{-1/2} dW`.
pub fn solve_original_rescaled_coupling(
    x: &HVec,
    eq: &Equation,
    eps: f64,
    steps: usize,
    seed: u64,
) -> Result<Coupling> {
    check_epsilon(eps)?;
    eq.model.check_state(x)?;
    let grid = TimeGrid::new(steps)?;
    let mut rng = stream_rng(seed, 0);
    let mut dw = vec![0.0; steps * eq.dim_u()];
    fill_normals(&mut rng, (eps * grid.dt()).sqrt(), &mut dw);
    let dv: Vec<f64> = dw.iter().map(|v| v / eps.sqrt()).collect();

    let original = Stepper::new(eq, eps, grid, 1.0).trajectory(x.as_slice(), &dw, None);
    let rescaled = Stepper::new(eq, eps, grid, eps.sqrt()).trajectory(x.as_slice(), &dv, None);
    let sup_distance = original.sup_distance(&rescaled)?;
    Ok(Coupling {
        original,
        rescaled,
        sup_distance,
    })
}

/// `sup_j |X(t_j) - S(eps (t_j - pi_n(t_j))) X(pi_n(t_j))|`, where `pi_n(t)` is the
/// left endpoint of the level-`n` dyadic cell `(k 2^-n, (k+1) 2^-n]` containing `t`.
pub fn dyadic_freeze_error(traj: &Trajectory, basis: &SpectralBasis, eps: f64, n: u32) -> Result<f64> {
    let steps = traj.grid().steps();
    let cells = 1usize
        .checked_shl(n)
        .filter(|c| *c <= steps && steps.is_multiple_of(*c))
        .ok_or_else(|| LdpError::invalid("n", format!("2^{n} does not divide the grid size {steps}")))?;
    let block = steps / cells;
    let dt = traj.grid().dt();
    let mut sup = 0.0f64;
    for j in 1..=steps {
        let anchor = ((j - 1) / block) * block;
        let frozen = basis.semigroup_apply(eps * (j - anchor) as f64 * dt, &traj.values()[anchor])?;
        sup = sup.max((&traj.values()[j] - frozen).norm());
    }
    Ok(sup)
}

/// Discrete check of the shift identity for stochastic integrals under the tilted noise
/// `dW^eps = dW - eps^{-1/2} phi dt`.
///
/// Returns `sup_r |sum_{j<r} Phi_j dW^eps_j - (sum_{j<r} Phi_j dW_j - eps^{-1/2} sum_{j<r} Phi_j phi_j dt)|`.
pub fn ito_shift_identity_check(
    integrand: &[DMatrix<f64>],
    phi: &ControlPath,
    eps: f64,
    w: &WienerPath,
) -> Result<f64> {
    check_epsilon(eps)?;
    let grid = w.grid();
    phi.check_against(grid, w.dim())?;
    grid.expect_steps(integrand.len())?;
    let dt = grid.dt();
    let c = eps.sqrt().recip();
    let d = integrand[0].nrows();
    let mut lhs = HVec::zeros(d);
    let mut ito = HVec::zeros(d);
    let mut shift = HVec::zeros(d);
    let mut sup = 0.0f64;
    for (j, mat) in integrand.iter().enumerate() {
        if mat.ncols() != w.dim() || mat.nrows() != d {
            return Err(LdpError::DimensionMismatch {
                what: "integrand columns",
                expected: w.dim(),
                got: mat.ncols(),
            });
        }
        let dw = UVec::from_column_slice(w.increment(j));
        let tilted = &dw - &phi.values()[j] * (c * dt);
        lhs += mat * tilted;
        ito += mat * dw;
        shift += mat * &phi.values()[j] * dt;
        sup = sup.max((&lhs - (&ito - &shift * c)).norm());
    }
    Ok(sup)
}

/// `|sum_{c <= j < d} Phi dW_j - Phi (W(t_d) - W(t_c))|` for a constant integrand.
pub fn constant_integrand_identity(integrand: &DMatrix<f64>, w: &WienerPath, from: usize, to: usize) -> Result<f64> {
    if from > to || to > w.grid().steps() {
        return Err(LdpError::invalid("to", format!("need from <= to <= N, got {from}..{to}")));
    }
    if integrand.ncols() != w.dim() {
        return Err(LdpError::DimensionMismatch {
            what: "integrand columns",
            expected: w.dim(),
            got: integrand.ncols(),
        });
    }
    let mut sum = HVec::zeros(integrand.nrows());
    for j in from..to {
        sum += integrand * UVec::from_column_slice(w.increment(j));
    }
    let cum = w.cumulative();
    Ok((sum - integrand * (&cum[to] - &cum[from])).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelSpec;

    fn scalar_eq(a: f64, sigma: f64) -> Equation {
        Equation::new(
            SpectralBasis::new(vec![a]).unwrap(),
            NoiseSpace::new(vec![1.0]).unwrap(),
            ModelSpec::additive(DMatrix::from_element(1, 1, sigma)).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn same_seed_same_path() {
        let grid = TimeGrid::new(64).unwrap();
        let noise = NoiseSpace::harmonic(3).unwrap();
        assert_eq!(sample_wiener(grid, &noise, 9), sample_wiener(grid, &noise, 9));
        assert_ne!(sample_wiener(grid, &noise, 9), sample_wiener(grid, &noise, 10));
    }

    #[test]
    fn cumulative_reconstructs_increments() {
        let grid = TimeGrid::new(16).unwrap();
        let w = sample_wiener_stream(grid, 2, 3, 1);
        let cum = w.cumulative();
        assert_eq!(cum[0], UVec::zeros(2));
        for j in 0..16 {
            let diff = &cum[j + 1] - &cum[j];
            for k in 0..2 {
                assert!((diff[k] - w.increment(j)[k]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn refinement_preserves_parent_sums() {
        let w = sample_wiener_stream(TimeGrid::new(8).unwrap(), 2, 1, 0);
        let fine = w.refined(2);
        assert_eq!(fine.grid().steps(), 16);
        for j in 0..8 {
            for k in 0..2 {
                let s = fine.increment(2 * j)[k] + fine.increment(2 * j + 1)[k];
                assert!((s - w.increment(j)[k]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn deterministic_flow_is_semigroup() {
        let eq = Equation::new(
            SpectralBasis::new(vec![-1.0, -4.0]).unwrap(),
            NoiseSpace::harmonic(1).unwrap(),
            ModelSpec::zero(2, 1).unwrap(),
        )
        .unwrap();
        let cfg = SolverConfig::new(0.5, 32, 1).unwrap();
        let w = sample_wiener(cfg.grid(), &eq.noise, 1);
        let x = HVec::from_vec(vec![1.0, 2.0]);
        let traj = solve_rescaled(&x, &eq, &cfg, &w).unwrap();
        for (j, v) in traj.values().iter().enumerate() {
            let exact = eq.basis.semigroup_apply(0.5 * cfg.grid().node(j), &x).unwrap();
            assert!((v - exact).norm() <= 1e-14);
        }
    }

    #[test]
    fn additive_scalar_closed_form() {
        let eq = scalar_eq(0.0, 0.7);
        let cfg = SolverConfig::new(0.3, 50, 4).unwrap();
        let w = sample_wiener(cfg.grid(), &eq.noise, 4);
        let x = HVec::from_vec(vec![0.25]);
        let traj = solve_rescaled(&x, &eq, &cfg, &w).unwrap();
        for (v, wt) in traj.values().iter().zip(w.cumulative()) {
            assert!((v[0] - (0.25 + 0.3f64.sqrt() * 0.7 * wt[0])).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_control_tilt_is_bitwise_identity() {
        let eq = scalar_eq(-2.0, 1.3);
        let cfg = SolverConfig::new(0.1, 40, 2).unwrap();
        let w = sample_wiener(cfg.grid(), &eq.noise, 2);
        let x = HVec::from_vec(vec![0.5]);
        let phi = ControlPath::zero(1, cfg.grid());
        assert_eq!(
            solve_tilted(&x, &eq, &phi, &cfg, &w).unwrap(),
            solve_rescaled(&x, &eq, &cfg, &w).unwrap()
        );
    }

    #[test]
    fn grid_mismatch_rejected() {
        let eq = scalar_eq(0.0, 1.0);
        let cfg = SolverConfig::new(0.1, 40, 2).unwrap();
        let w = sample_wiener(TimeGrid::new(20).unwrap(), &eq.noise, 2);
        assert!(solve_rescaled(&HVec::zeros(1), &eq, &cfg, &w).is_err());
        assert!(SolverConfig::new(0.0, 10, 1).is_err());
        assert!(SolverConfig::new(1.5, 10, 1).is_err());
    }

    #[test]
    fn freeze_error_examples() {
        let grid = TimeGrid::new(8).unwrap();
        let basis = SpectralBasis::new(vec![0.0]).unwrap();
        let flat = Trajectory::new(vec![HVec::from_vec(vec![2.0]); 9], grid).unwrap();
        assert_eq!(dyadic_freeze_error(&flat, &basis, 0.5, 2).unwrap(), 0.0);
        assert!(dyadic_freeze_error(&flat, &basis, 0.5, 4).is_err());

        // With 2^n = N the anchor of t_j is t_{j-1}: a one-step freeze error.
        let ramp: Vec<HVec> = (0..=8).map(|j| HVec::from_vec(vec![j as f64 * 0.1])).collect();
        let ramp = Trajectory::new(ramp, grid).unwrap();
        assert!((dyadic_freeze_error(&ramp, &basis, 0.5, 3).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        let grid = TimeGrid::new(4).unwrap();
        let values: Vec<HVec> = (0..=4).map(|j| HVec::from_vec(vec![j as f64 / 3.0, -1e-20])).collect();
        let traj = Trajectory::new(values, grid).unwrap();
        traj.write_csv(&path).unwrap();
        assert_eq!(Trajectory::read_csv(&path).unwrap(), traj);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,x_1,x_2\n0,0,"));
    }
}
