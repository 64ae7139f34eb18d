//! Drift and diffusion coefficients with exact Lipschitz data.
//!
//! Coefficients come from a closed set of forms. Each form knows its own
//! Lipschitz/growth constant `Lambda` and, when the diffusion is bounded,
//! `Gamma = sup_x ||G(x)||_HS`. The radial truncation `G_R` used for
//! localization is itself a diffusion form, so truncated models run through
//! the same solvers as the originals.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{LdpError, Result};
use crate::rng::{sample_ball, stream_rng};
use crate::spectral::{hs_norm, HVec};

/// Square-integrable time weight `nu` on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TimeWeight {
    Constant(f64),
    /// Piecewise constant on a uniform partition of `[0, 1]` into `values.len()` cells.
    Piecewise(Vec<f64>),
}

impl TimeWeight {
    pub fn constant(value: f64) -> Result<Self> {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(LdpError::invalid("nu", "weight must be finite and nonnegative"));
        }
        Ok(TimeWeight::Constant(value))
    }

    pub fn piecewise(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(LdpError::invalid("nu", "need at least one cell"));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(LdpError::invalid("nu", "cell values must be finite and nonnegative"));
        }
        Ok(TimeWeight::Piecewise(values))
    }

    /// Tabulates `f` at the midpoints of `cells` uniform cells, so a singularity at
    /// `t = 0` is never evaluated.
    pub fn tabulate(f: impl Fn(f64) -> f64, cells: usize) -> Result<Self> {
        let h = 1.0 / cells.max(1) as f64;
        Self::piecewise((0..cells).map(|j| f((j as f64 + 0.5) * h)).collect())
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeWeight::Constant(v) => *v,
            TimeWeight::Piecewise(values) => {
                let n = values.len();
                let idx = ((t * n as f64).floor().max(0.0) as usize).min(n - 1);
                values[idx]
            }
        }
    }

    /// `int_0^1 nu(t)^2 dt`.
    pub fn l2_norm_sq(&self) -> f64 {
        match self {
            TimeWeight::Constant(v) => v * v,
            TimeWeight::Piecewise(values) => {
                values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64
            }
        }
    }
}

/// `F(t, x) = nu(t) * f(t, x)` where `f` is one of these forms.
#[derive(Debug, Clone, PartialEq)]
pub enum DriftForm {
    Zero,
    /// `f(x) = b + B x` with `|b| <= 1` and `||B||_op <= 1`.
    Affine { offset: HVec, matrix: DMatrix<f64> },
    /// State-independent table on a uniform partition of `[0, 1]`, each `|v| <= 1`.
    Tabulated { values: Vec<HVec> },
}

/// A 1-Lipschitz scalar map with `g(0) = 0` and `|g(s)| <= |s|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalarMap {
    Identity,
    /// Clamp to `[-1, 1]`.
    Clamp,
    Tanh,
    Sin,
}

impl ScalarMap {
    pub fn eval(self, s: f64) -> f64 {
        match self {
            ScalarMap::Identity => s,
            ScalarMap::Clamp => s.clamp(-1.0, 1.0),
            ScalarMap::Tanh => s.tanh(),
            ScalarMap::Sin => s.sin(),
        }
    }

    pub fn is_bounded(self) -> bool {
        !matches!(self, ScalarMap::Identity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DiffusionForm {
    /// `G(x) = C` for a fixed `d x m` matrix.
    Constant(DMatrix<f64>),
    /// Column `k` of `G(x)` is `sigma_k g(x_k) e_k`; requires `m <= d`.
    Diagonal { sigma: Vec<f64>, map: ScalarMap },
    /// Column `k` of `G(x)` is `c_k + B_k x`.
    AffineColumns {
        offset: DMatrix<f64>,
        slopes: Vec<DMatrix<f64>>,
    },
    /// `G_R(x) = G(x)` inside the closed ball of radius `R`, `G(R x / |x|)` outside.
    Radial {
        base: Box<DiffusionForm>,
        radius: f64,
    },
}

impl DiffusionForm {
    /// `out = G(x) v`.
    pub(crate) fn apply(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        match self {
            DiffusionForm::Constant(c) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..v.len()).map(|k| c[(i, k)] * v[k]).sum();
                }
            }
            DiffusionForm::Diagonal { sigma, map } => {
                out.iter_mut().for_each(|o| *o = 0.0);
                for (k, s) in sigma.iter().enumerate() {
                    out[k] = s * map.eval(x[k]) * v[k];
                }
            }
            DiffusionForm::AffineColumns { offset, slopes } => {
                for (i, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (k, b) in slopes.iter().enumerate() {
                        let col = offset[(i, k)] + (0..x.len()).map(|l| b[(i, l)] * x[l]).sum::<f64>();
                        acc += col * v[k];
                    }
                    *o = acc;
                }
            }
            DiffusionForm::Radial { base, radius } => {
                let norm = x.iter().map(|s| s * s).sum::<f64>().sqrt();
                if norm <= *radius {
                    base.apply(x, v, out);
                } else {
                    let scaled: Vec<f64> = x.iter().map(|s| radius / norm * s).collect();
                    base.apply(&scaled, v, out);
                }
            }
        }
    }

    /// `G(x)` as a `d x m` matrix.
    pub(crate) fn matrix(&self, x: &[f64], dim_u: usize) -> DMatrix<f64> {
        let d = x.len();
        let mut g = DMatrix::zeros(d, dim_u);
        let mut e = vec![0.0; dim_u];
        let mut col = vec![0.0; d];
        for k in 0..dim_u {
            e[k] = 1.0;
            self.apply(x, &e, &mut col);
            g.column_mut(k).copy_from_slice(&col);
            e[k] = 0.0;
        }
        g
    }

    /// (Lipschitz constant, growth constant, sup norm if bounded).
    fn constants(&self) -> (f64, f64, Option<f64>) {
        match self {
            DiffusionForm::Constant(c) => (0.0, hs_norm(c), Some(hs_norm(c))),
            DiffusionForm::Diagonal { sigma, map } => {
                let lip = sigma.iter().fold(0.0f64, |m, s| m.max(s.abs()));
                let sup = map
                    .is_bounded()
                    .then(|| sigma.iter().map(|s| s * s).sum::<f64>().sqrt());
                (lip, lip, sup)
            }
            DiffusionForm::AffineColumns { offset, slopes } => {
                let lip_sq: f64 = slopes
                    .iter()
                    .map(|b| {
                        let s = b.singular_values().max();
                        s * s
                    })
                    .sum();
                // Round up so the declared constant is never below the computed ratios.
                let lip = lip_sq.sqrt() * (1.0 + 1e-12);
                let growth = lip.max(hs_norm(offset));
                let sup = (lip_sq == 0.0).then(|| hs_norm(offset));
                (lip, growth, sup)
            }
            DiffusionForm::Radial { base, radius } => {
                let (lip, growth, sup) = base.constants();
                let ball_sup = growth * (1.0 + radius);
                (lip, growth, Some(sup.map_or(ball_sup, |s| s.min(ball_sup))))
            }
        }
    }

    fn validate(&self, dim_h: usize, dim_u: usize) -> Result<()> {
        match self {
            DiffusionForm::Constant(c) => {
                if c.nrows() != dim_h || c.ncols() != dim_u {
                    return Err(LdpError::invalid(
                        "diffusion",
                        format!("constant matrix must be {dim_h}x{dim_u}, got {}x{}", c.nrows(), c.ncols()),
                    ));
                }
            }
            DiffusionForm::Diagonal { sigma, .. } => {
                if sigma.len() != dim_u || dim_u > dim_h {
                    return Err(LdpError::invalid(
                        "diffusion",
                        format!("diagonal form needs m = sigma.len() <= d; got m={dim_u}, sigma={}, d={dim_h}", sigma.len()),
                    ));
                }
                if sigma.iter().any(|s| !s.is_finite()) {
                    return Err(LdpError::invalid("diffusion", "sigma must be finite"));
                }
            }
            DiffusionForm::AffineColumns { offset, slopes } => {
                if offset.nrows() != dim_h || offset.ncols() != dim_u || slopes.len() != dim_u {
                    return Err(LdpError::invalid("diffusion", "affine columns need a d x m offset and m slopes"));
                }
                if slopes.iter().any(|b| b.nrows() != dim_h || b.ncols() != dim_h) {
                    return Err(LdpError::invalid("diffusion", "each column slope must be d x d"));
                }
            }
            DiffusionForm::Radial { base, radius } => {
                if !(*radius > 0.0) {
                    return Err(LdpError::invalid("R", "truncation radius must be positive"));
                }
                base.validate(dim_h, dim_u)?;
            }
        }
        Ok(())
    }
}

/// Drift/diffusion pair with its Lipschitz data.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    dim_h: usize,
    dim_u: usize,
    drift: DriftForm,
    nu: TimeWeight,
    diffusion: DiffusionForm,
    lambda_lip: f64,
    gamma_bound: Option<f64>,
}

impl ModelSpec {
    pub fn new(
        dim_h: usize,
        dim_u: usize,
        drift: DriftForm,
        nu: TimeWeight,
        diffusion: DiffusionForm,
    ) -> Result<Self> {
        if dim_h == 0 || dim_u == 0 {
            return Err(LdpError::invalid("dim", "dimensions must be positive"));
        }
        match &drift {
            DriftForm::Zero => {}
            DriftForm::Affine { offset, matrix } => {
                if offset.len() != dim_h || matrix.nrows() != dim_h || matrix.ncols() != dim_h {
                    return Err(LdpError::invalid("drift", "affine drift needs a d-vector and a d x d matrix"));
                }
                if offset.norm() > 1.0 + 1e-12 {
                    return Err(LdpError::invalid("drift", "affine offset must have norm <= 1"));
                }
                if matrix.singular_values().max() > 1.0 + 1e-12 {
                    return Err(LdpError::invalid("drift", "affine matrix must have operator norm <= 1"));
                }
            }
            DriftForm::Tabulated { values } => {
                if values.is_empty() || values.iter().any(|v| v.len() != dim_h) {
                    return Err(LdpError::invalid("drift", "tabulated drift needs nonempty d-vectors"));
                }
                if values.iter().any(|v| v.norm() > 1.0 + 1e-12) {
                    return Err(LdpError::invalid("drift", "tabulated drift values must have norm <= 1"));
                }
            }
        }
        diffusion.validate(dim_h, dim_u)?;
        let (lip, growth, sup) = diffusion.constants();
        Ok(Self {
            dim_h,
            dim_u,
            drift,
            nu,
            diffusion,
            lambda_lip: lip.max(growth),
            gamma_bound: sup,
        })
    }

    /// `F = 0`, `G = C`.
    pub fn additive(matrix: DMatrix<f64>) -> Result<Self> {
        Self::new(
            matrix.nrows(),
            matrix.ncols(),
            DriftForm::Zero,
            TimeWeight::Constant(0.0),
            DiffusionForm::Constant(matrix),
        )
    }

    /// `F = 0`, `G = 0`.
    pub fn zero(dim_h: usize, dim_u: usize) -> Result<Self> {
        Self::additive(DMatrix::zeros(dim_h, dim_u))
    }

    pub fn dim_h(&self) -> usize {
        self.dim_h
    }

    pub fn dim_u(&self) -> usize {
        self.dim_u
    }

    pub fn drift(&self) -> &DriftForm {
        &self.drift
    }

    pub fn diffusion(&self) -> &DiffusionForm {
        &self.diffusion
    }

    pub fn nu(&self) -> &TimeWeight {
        &self.nu
    }

    /// `Lambda`: bounds both `||G(x) - G(y)|| / |x - y|` and `||G(x)|| / (1 + |x|)`.
    pub fn lambda_lip(&self) -> f64 {
        self.lambda_lip
    }

    /// `Gamma = sup_x ||G(x)||_HS` when the diffusion form is bounded.
    pub fn gamma_bound(&self) -> Option<f64> {
        self.gamma_bound
    }

    pub fn has_zero_diffusion(&self) -> bool {
        matches!(&self.diffusion, DiffusionForm::Constant(c) if c.iter().all(|v| *v == 0.0))
    }

    /// Constant diffusion coefficient, if the form is constant.
    pub fn constant_diffusion(&self) -> Option<&DMatrix<f64>> {
        match &self.diffusion {
            DiffusionForm::Constant(c) => Some(c),
            _ => None,
        }
    }

    pub fn eval_drift(&self, t: f64, x: &HVec) -> Result<HVec> {
        if !(0.0..=1.0).contains(&t) {
            return Err(LdpError::invalid("t", format!("drift time must lie in [0, 1], got {t}")));
        }
        self.check_state(x)?;
        let mut out = HVec::zeros(self.dim_h);
        self.drift_into(t, x.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    pub fn eval_diffusion(&self, x: &HVec) -> Result<DMatrix<f64>> {
        self.check_state(x)?;
        Ok(self.diffusion.matrix(x.as_slice(), self.dim_u))
    }

    /// `out = F(t, x)`.
    pub(crate) fn drift_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        match &self.drift {
            DriftForm::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            DriftForm::Affine { offset, matrix } => {
                let w = self.nu.eval(t);
                for (i, o) in out.iter_mut().enumerate() {
                    let bx: f64 = (0..x.len()).map(|l| matrix[(i, l)] * x[l]).sum();
                    *o = w * (offset[i] + bx);
                }
            }
            DriftForm::Tabulated { values } => {
                let w = self.nu.eval(t);
                let n = values.len();
                let idx = ((t * n as f64).floor().max(0.0) as usize).min(n - 1);
                for (o, v) in out.iter_mut().zip(values[idx].iter()) {
                    *o = w * v;
                }
            }
        }
    }

    /// `out = G(x) v`.
    pub(crate) fn diffusion_apply(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        self.diffusion.apply(x, v, out);
    }

    pub(crate) fn diffusion_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        self.diffusion.matrix(x, self.dim_u)
    }

    pub(crate) fn check_state(&self, x: &HVec) -> Result<()> {
        if x.len() != self.dim_h {
            return Err(LdpError::DimensionMismatch {
                what: "state vector",
                expected: self.dim_h,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Same drift, diffusion replaced by its radial truncation at `radius`.
    pub fn with_truncated_diffusion(&self, radius: f64) -> Result<Self> {
        Self::new(
            self.dim_h,
            self.dim_u,
            self.drift.clone(),
            self.nu.clone(),
            DiffusionForm::Radial {
                base: Box::new(self.diffusion.clone()),
                radius,
            },
        )
    }
}

/// `G_R`: the diffusion of `base`, radially frozen outside `B(0, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedDiffusion {
    base: ModelSpec,
    radius: f64,
    truncated: ModelSpec,
}

impl TruncatedDiffusion {
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn base(&self) -> &ModelSpec {
        &self.base
    }

    /// The model with `G` replaced by `G_R`.
    pub fn model(&self) -> &ModelSpec {
        &self.truncated
    }

    pub fn eval(&self, x: &HVec) -> Result<DMatrix<f64>> {
        self.truncated.eval_diffusion(x)
    }
}

pub fn truncate_diffusion(model: &ModelSpec, radius: f64) -> Result<TruncatedDiffusion> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(LdpError::invalid("R", format!("truncation radius must be positive, got {radius}")));
    }
    Ok(TruncatedDiffusion {
        base: model.clone(),
        radius,
        truncated: model.with_truncated_diffusion(radius)?,
    })
}

/// A-priori bound `(rho + Lambda sqrt(2r)) exp(Lambda sqrt(2r))` on `sup |z|` over
/// skeletons of energy at most `r` started in `B(0, rho)`.
pub fn skeleton_level_bound(rho: f64, r: f64, lambda_lip: f64) -> f64 {
    let s = lambda_lip * (2.0 * r).sqrt();
    (rho + s) * s.exp()
}

/// Localization radius `R = (rho + Lambda sqrt(2r)) exp(Lambda sqrt(2r)) + delta`.
pub fn truncation_radius(rho: f64, r: f64, delta: f64, lambda_lip: f64) -> Result<f64> {
    for (name, v) in [("rho", rho), ("r", r), ("delta", delta)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(LdpError::invalid(name, format!("must be positive, got {v}")));
        }
    }
    if !(lambda_lip >= 0.0) || !lambda_lip.is_finite() {
        return Err(LdpError::invalid("lambda_lip", format!("must be nonnegative, got {lambda_lip}")));
    }
    Ok(skeleton_level_bound(rho, r, lambda_lip) + delta)
}

/// Largest sampled ratios of the Lipschitz and growth inequalities to their
/// declared right-hand sides. Every entry is at most 1 for a consistent model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipschitzCertificate {
    pub diffusion_lipschitz: f64,
    pub diffusion_growth: f64,
    pub drift_lipschitz: f64,
    pub drift_growth: f64,
}

pub fn lipschitz_certificate(model: &ModelSpec, pairs: usize, radius: f64, seed: u64) -> LipschitzCertificate {
    let mut rng = stream_rng(seed, 0);
    let d = model.dim_h;
    let lambda = model.lambda_lip;
    let mut cert = LipschitzCertificate {
        diffusion_lipschitz: 0.0,
        diffusion_growth: 0.0,
        drift_lipschitz: 0.0,
        drift_growth: 0.0,
    };
    let ratio = |num: f64, den: f64| if num == 0.0 { 0.0 } else { num / den };
    let mut fx = vec![0.0; d];
    let mut fy = vec![0.0; d];
    for i in 0..pairs {
        let x = sample_ball(&mut rng, d, radius);
        let y = sample_ball(&mut rng, d, radius);
        let t = (i as f64 + 0.5) / pairs as f64;
        let dist = (&x - &y).norm();
        if dist == 0.0 {
            continue;
        }
        let gx = model.diffusion_matrix(x.as_slice());
        let gy = model.diffusion_matrix(y.as_slice());
        cert.diffusion_lipschitz = cert.diffusion_lipschitz.max(ratio(hs_norm(&(&gx - &gy)), lambda * dist));
        cert.diffusion_growth = cert.diffusion_growth.max(ratio(hs_norm(&gx), lambda * (1.0 + x.norm())));

        let w = model.nu.eval(t);
        model.drift_into(t, x.as_slice(), &mut fx);
        model.drift_into(t, y.as_slice(), &mut fy);
        let df = fx.iter().zip(&fy).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let nf = fx.iter().map(|a| a * a).sum::<f64>().sqrt();
        cert.drift_lipschitz = cert.drift_lipschitz.max(ratio(df, w * dist));
        cert.drift_growth = cert.drift_growth.max(ratio(nf, w * (1.0 + x.norm())));
    }
    cert
}

/// Largest sampled `||G(x)||_HS` over `B(0, radius)`, including points on the sphere.
pub fn sampled_diffusion_sup(model: &ModelSpec, radius: f64, samples: usize, seed: u64) -> f64 {
    let mut rng = stream_rng(seed, 1);
    (0..samples)
        .map(|i| {
            let x: DVector<f64> = if i % 2 == 0 {
                crate::rng::sample_sphere(&mut rng, model.dim_h) * radius
            } else {
                sample_ball(&mut rng, model.dim_h, radius)
            };
            hs_norm(&model.diffusion_matrix(x.as_slice()))
        })
        .fold(0.0, f64::max)
}
