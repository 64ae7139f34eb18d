//! Finite spectral representation of the state space `H`, the noise space `U`
//! and its Hilbert-Schmidt enlargement `U1`.
//!
//! The linear drift is diagonal in the chosen basis, so the semigroup
//! `S(t) = exp(tA)` acts coordinate-wise as `exp(a_k t)` and is exact.

use nalgebra::{DMatrix, DVector};

use crate::error::{LdpError, Result};

/// Coordinates of a state vector in the eigenbasis of `A`.
pub type HVec = DVector<f64>;
/// Coordinates of a noise-space vector in the orthonormal basis `(g_k)` of `U`.
pub type UVec = DVector<f64>;
/// Coordinates of a `U1` vector in the orthonormal basis `(g_k / lambda_k)` of `U1`.
pub type U1Vec = DVector<f64>;

/// Diagonal generator `A = diag(a_1, ..., a_d)` together with `M = sup_{t in [0,1]} ||S(t)||`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    eigenvalues: Vec<f64>,
    semigroup_bound: f64,
}

impl SpectralBasis {
    pub fn new(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(LdpError::invalid("eigenvalues", "need at least one mode"));
        }
        if eigenvalues.iter().any(|a| !a.is_finite()) {
            return Err(LdpError::invalid("eigenvalues", "must be finite"));
        }
        let semigroup_bound = eigenvalues
            .iter()
            .map(|&a| a.exp().max(1.0))
            .fold(1.0, f64::max);
        Ok(Self {
            eigenvalues,
            semigroup_bound,
        })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `M`; exact for a diagonal generator.
    pub fn semigroup_bound(&self) -> f64 {
        self.semigroup_bound
    }

    /// True when every eigenvalue is nonpositive, i.e. `S` is a contraction semigroup.
    pub fn is_contraction(&self) -> bool {
        self.eigenvalues.iter().all(|&a| a <= 0.0)
    }

    /// Operator norm `||S(t)|| = max_k exp(a_k t)`.
    pub fn semigroup_norm(&self, t: f64) -> f64 {
        self.eigenvalues
            .iter()
            .map(|&a| (a * t).exp())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Diagonal entries of `S(t)`, without validating `t`.
    pub(crate) fn factors(&self, t: f64) -> Vec<f64> {
        self.eigenvalues.iter().map(|&a| (a * t).exp()).collect()
    }

    pub fn semigroup_apply(&self, t: f64, v: &HVec) -> Result<HVec> {
        if !(t >= 0.0) {
            return Err(LdpError::invalid("t", format!("semigroup time must be >= 0, got {t}")));
        }
        if v.len() != self.dim() {
            return Err(LdpError::DimensionMismatch {
                what: "state vector",
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(HVec::from_iterator(
            v.len(),
            v.iter().zip(&self.eigenvalues).map(|(x, a)| (a * t).exp() * x),
        ))
    }
}

/// Truncated noise space: `m` modes and the decreasing weights `lambda_k` defining `U1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpace {
    weights: Vec<f64>,
}

impl NoiseSpace {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(LdpError::invalid("u1_weights", "need at least one mode"));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(LdpError::invalid("u1_weights", "weights must be positive and finite"));
        }
        if weights.windows(2).any(|p| p[1] >= p[0]) {
            return Err(LdpError::invalid("u1_weights", "weights must be strictly decreasing"));
        }
        Ok(Self { weights })
    }

    /// Weights `lambda_k = 1 / k` for `k = 1..=m`.
    pub fn harmonic(dim: usize) -> Result<Self> {
        Self::new((1..=dim).map(|k| 1.0 / k as f64).collect())
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `|u|_{U1} = sqrt(sum lambda_k^2 u_k^2)` for `u` given in `U` coordinates.
    pub fn u1_norm(&self, u: &UVec) -> f64 {
        u.iter()
            .zip(&self.weights)
            .map(|(x, l)| (l * x) * (l * x))
            .sum::<f64>()
            .sqrt()
    }

    /// The Hilbert-Schmidt embedding `J: U -> U1`, in orthonormal `U1` coordinates.
    pub fn embed(&self, u: &UVec) -> U1Vec {
        U1Vec::from_iterator(u.len(), u.iter().zip(&self.weights).map(|(x, l)| l * x))
    }

    /// Inverse of [`NoiseSpace::embed`] on the range of `J`.
    pub fn pull_back(&self, f: &U1Vec) -> UVec {
        UVec::from_iterator(f.len(), f.iter().zip(&self.weights).map(|(y, l)| y / l))
    }

    /// `Pi_n^1 f = sum_{k <= n} lambda_k^{-2} <f, J g_k>_{U1} g_k`, a map `U1 -> U`.
    pub fn project_u1(&self, n: usize, f: &U1Vec) -> Result<UVec> {
        if n > self.dim() {
            return Err(LdpError::invalid("n", format!("projection rank {n} exceeds {}", self.dim())));
        }
        // <f, J g_k>_{U1} = f_k * lambda_k in orthonormal U1 coordinates.
        Ok(UVec::from_iterator(
            f.len(),
            f.iter().zip(&self.weights).enumerate().map(|(k, (y, l))| {
                if k < n {
                    (y * l) / (l * l)
                } else {
                    0.0
                }
            }),
        ))
    }
}

/// Uniform grid `0 = t_0 < ... < t_N = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeGrid {
    steps: usize,
}

impl TimeGrid {
    pub fn new(steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(LdpError::invalid("steps", "grid needs at least one step"));
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.steps as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 / self.steps as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps).map(|j| self.node(j)).collect()
    }

    /// Grid with every cell split in two.
    pub fn refined(&self) -> Self {
        Self {
            steps: 2 * self.steps,
        }
    }

    pub(crate) fn expect_steps(&self, other: usize) -> Result<()> {
        if self.steps != other {
            return Err(LdpError::GridMismatch {
                expected: self.steps,
                got: other,
            });
        }
        Ok(())
    }
}

/// Orthogonal projection `Pi_n` onto the span of the first `n` noise modes.
pub fn project_u(n: usize, u: &UVec) -> Result<UVec> {
    if n > u.len() {
        return Err(LdpError::invalid("n", format!("projection rank {n} exceeds {}", u.len())));
    }
    let mut out = u.clone();
    out.rows_mut(n, u.len() - n).fill(0.0);
    Ok(out)
}

/// Hilbert-Schmidt norm of an operator `U -> H` given as a `d x m` matrix.
pub fn hs_norm(op: &DMatrix<f64>) -> f64 {
    op.iter().map(|x| x * x).sum::<f64>().sqrt()
}
