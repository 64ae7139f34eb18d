//! Spectral simulation of small-noise stochastic evolution equations and
//! Monte Carlo diagnostics for their large-deviation asymptotics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assumptions;
pub mod equation;
pub mod error;
pub mod models;
mod optim;
pub mod quad;
pub mod report;
pub mod rng;
pub mod sim;
pub mod skeleton;
pub mod spectral;
pub mod tails;
pub mod tube;
pub mod verify;

pub use equation::Equation;
pub use error::{LdpError, Result};
pub use models::{DiffusionForm, DriftForm, ModelSpec, ScalarMap, TimeWeight, TruncatedDiffusion};
pub use spectral::{hs_norm, project_u, HVec, NoiseSpace, SpectralBasis, TimeGrid, U1Vec, UVec};
