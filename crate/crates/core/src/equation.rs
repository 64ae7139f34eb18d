use crate::error::{LdpError, Result};
use crate::models::ModelSpec;
use crate::spectral::{NoiseSpace, SpectralBasis};

/// A complete equation: linear part, noise space and coefficients, with matching dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Equation {
    pub basis: SpectralBasis,
    pub noise: NoiseSpace,
    pub model: ModelSpec,
}

impl Equation {
    pub fn new(basis: SpectralBasis, noise: NoiseSpace, model: ModelSpec) -> Result<Self> {
        if basis.dim() != model.dim_h() {
            return Err(LdpError::DimensionMismatch {
                what: "state space (basis vs model)",
                expected: basis.dim(),
                got: model.dim_h(),
            });
        }
        if noise.dim() != model.dim_u() {
            return Err(LdpError::DimensionMismatch {
                what: "noise space (noise vs model)",
                expected: noise.dim(),
                got: model.dim_u(),
            });
        }
        Ok(Self { basis, noise, model })
    }

    pub fn dim_h(&self) -> usize {
        self.basis.dim()
    }

    pub fn dim_u(&self) -> usize {
        self.noise.dim()
    }

    /// Same equation with the diffusion radially truncated at `radius`.
    pub fn truncated(&self, radius: f64) -> Result<Self> {
        Ok(Self {
            basis: self.basis.clone(),
            noise: self.noise.clone(),
            model: self.model.with_truncated_diffusion(radius)?,
        })
    }
}
