//! Run configuration: a TOML file with dotted keys, `--set key=value` overrides and
//! the `LDP_SEED` environment override.

use std::path::{Path, PathBuf};

use ldp_core::skeleton::ControlPath;
use ldp_core::{
    DiffusionForm, DriftForm, Equation, HVec, ModelSpec, NoiseSpace, ScalarMap, SpectralBasis, TimeGrid, TimeWeight,
    UVec,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::Failure;

pub const SEED_ENV: &str = "LDP_SEED";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub basis: BasisConfig,
    pub noise: NoiseConfig,
    pub model: ModelConfig,
    pub run: RunSection,
    #[serde(default)]
    pub control: ControlConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub rate: RateConfig,
    #[serde(default)]
    pub tails: TailsConfig,
    #[serde(default)]
    pub assumptions: AssumptionsConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub drift: DriftConfig,
    #[serde(default)]
    pub nu: NuConfig,
    pub diffusion: DiffusionConfig,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftConfig {
    #[default]
    Zero,
    Affine {
        offset: Vec<f64>,
        matrix: Vec<Vec<f64>>,
    },
    Tabulated {
        values: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NuConfig {
    Constant(f64),
    Piecewise(Vec<f64>),
}

impl Default for NuConfig {
    fn default() -> Self {
        NuConfig::Constant(1.0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiffusionConfig {
    Constant {
        matrix: Vec<Vec<f64>>,
    },
    Diagonal {
        sigma: Vec<f64>,
        #[serde(default = "default_map")]
        map: String,
    },
    AffineColumns {
        offset: Vec<Vec<f64>>,
        slopes: Vec<Vec<Vec<f64>>>,
    },
}

fn default_map() -> String {
    "identity".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_eps")]
    pub epsilon: Vec<f64>,
    pub x: Vec<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// `importance` or `direct`.
    #[serde(default = "default_method")]
    pub method: String,
}

fn default_steps() -> usize {
    256
}
fn default_eps() -> Vec<f64> {
    vec![0.2, 0.1, 0.05, 0.02]
}
fn default_delta() -> f64 {
    0.3
}
fn default_gamma() -> f64 {
    0.1
}
fn default_r() -> f64 {
    0.5
}
fn default_samples() -> usize {
    10_000
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_method() -> String {
    "importance".into()
}

/// `value` for a constant control, `values` for one row per grid cell; zero if neither.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub value: Option<Vec<f64>>,
    pub values: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default = "default_paths")]
    pub paths: usize,
    /// Defaults to the first entry of `run.epsilon`.
    pub epsilon: Option<f64>,
}

fn default_paths() -> usize {
    1
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            paths: default_paths(),
            epsilon: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateConfig {
    /// Trajectory CSV, relative to the config file.
    pub target: Option<PathBuf>,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_tol() -> f64 {
    1e-6
}

impl Default for RateConfig {
    fn default() -> Self {
        Self {
            target: None,
            tol: default_tol(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailsConfig {
    /// Constant integrand; defaults to `G(x)` at the initial point.
    pub xi: Option<Vec<Vec<f64>>>,
    /// Defaults to `||xi||_HS^2`.
    pub eta1: Option<f64>,
    #[serde(default = "default_tail_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default = "default_alpha0")]
    pub alpha0: f64,
    #[serde(default = "default_p0")]
    pub p0: f64,
    /// The convolution uses `S(scale t)`.
    #[serde(default = "default_scale")]
    pub scale: f64,
}

fn default_tail_deltas() -> Vec<f64> {
    vec![1.0, 2.0, 3.0, 4.0]
}
fn default_alpha0() -> f64 {
    0.4
}
fn default_p0() -> f64 {
    1.5
}
fn default_scale() -> f64 {
    1.0
}

impl Default for TailsConfig {
    fn default() -> Self {
        Self {
            xi: None,
            eta1: None,
            deltas: default_tail_deltas(),
            alpha0: default_alpha0(),
            p0: default_p0(),
            scale: default_scale(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssumptionsConfig {
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_points")]
    pub samples: usize,
    /// Left end of the interval on which the semigroup modulus is measured.
    #[serde(default = "default_a")]
    pub a: f64,
    #[serde(default = "default_meshes")]
    pub meshes: Vec<f64>,
}

fn default_radius() -> f64 {
    1.0
}
fn default_points() -> usize {
    200
}
fn default_a() -> f64 {
    0.1
}
fn default_meshes() -> Vec<f64> {
    (1..=8).map(|k| 0.5f64.powi(k)).collect()
}

impl Default for AssumptionsConfig {
    fn default() -> Self {
        Self {
            radius: default_radius(),
            samples: default_points(),
            a: default_a(),
            meshes: default_meshes(),
        }
    }
}

/// A loaded configuration: the effective key table (echoed into summaries) and its typed view.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub table: Table,
    pub config: RunConfig,
    pub base_dir: PathBuf,
}

fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn set_dotted(table: &mut Table, key: &str, value: Value) -> Result<(), Failure> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Failure::Parse(format!("malformed override key '{key}'")));
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| Failure::Parse(format!("override '{key}': '{part}' is not a section")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Reads `path`, then applies `LDP_SEED` and the `key=value` overrides in order.
pub fn load(path: &Path, overrides: &[String], env_seed: Option<String>) -> Result<Loaded, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Parse(format!("cannot read config {}: {e}", path.display())))?;
    let mut table: Table =
        toml::from_str(&text).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))?;
    if let Some(seed) = env_seed {
        let seed: u64 = seed
            .trim()
            .parse()
            .map_err(|_| Failure::Parse(format!("{SEED_ENV}='{seed}' is not an unsigned integer")))?;
        let seed = i64::try_from(seed).map_err(|_| Failure::Parse(format!("{SEED_ENV} exceeds {}", i64::MAX)))?;
        set_dotted(&mut table, "run.seed", Value::Integer(seed))?;
    }
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Failure::Parse(format!("override '{item}' is not key=value")))?;
        set_dotted(&mut table, key.trim(), parse_value(raw.trim()))?;
    }
    let config: RunConfig = Value::Table(table.clone())
        .try_into()
        .map_err(|e: toml::de::Error| Failure::Parse(format!("{}: {e}", path.display())))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded {
        table,
        config,
        base_dir,
    })
}

fn invalid(field: &str, reason: impl std::fmt::Display) -> Failure {
    Failure::Invalid(format!("invalid {field}: {reason}"))
}

fn matrix(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, Failure> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(invalid(field, "expected a nonempty rectangular array of rows"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn scalar_map(name: &str) -> Result<ScalarMap, Failure> {
    match name {
        "identity" => Ok(ScalarMap::Identity),
        "clamp" => Ok(ScalarMap::Clamp),
        "tanh" => Ok(ScalarMap::Tanh),
        "sin" => Ok(ScalarMap::Sin),
        other => Err(invalid(
            "model.diffusion.map",
            format!("unknown map '{other}' (identity, clamp, tanh, sin)"),
        )),
    }
}

fn core_error(section: &str, err: ldp_core::LdpError) -> Failure {
    match err {
        ldp_core::LdpError::InvalidArgument { name, reason } => invalid(&format!("{section}.{name}"), reason),
        other => invalid(section, other),
    }
}

impl RunConfig {
    /// Checks the `run` section against the preconditions shared by every subcommand.
    pub fn validate(&self) -> Result<(), Failure> {
        let run = &self.run;
        if run.steps == 0 {
            return Err(invalid("run.steps", "must be positive"));
        }
        if !(run.delta > 0.0) {
            return Err(invalid("run.delta", format!("must be positive, got {}", run.delta)));
        }
        if !(run.gamma >= 0.0) {
            return Err(invalid("run.gamma", format!("must be nonnegative, got {}", run.gamma)));
        }
        if !(run.r > 0.0) {
            return Err(invalid("run.r", format!("must be positive, got {}", run.r)));
        }
        if run.n_samples == 0 {
            return Err(invalid("run.n_samples", "must be positive"));
        }
        if run.epsilon.is_empty() || run.epsilon.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
            return Err(invalid("run.epsilon", "need a nonempty list of values in (0, 1]"));
        }
        if run.epsilon.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid("run.epsilon", "values must be strictly decreasing"));
        }
        if !matches!(run.method.as_str(), "importance" | "direct") {
            return Err(invalid("run.method", format!("expected importance or direct, got '{}'", run.method)));
        }
        if run.x.len() != self.basis.eigenvalues.len() {
            return Err(invalid(
                "run.x",
                format!("length {} does not match basis.eigenvalues ({})", run.x.len(), self.basis.eigenvalues.len()),
            ));
        }
        Ok(())
    }

    pub fn equation(&self) -> Result<Equation, Failure> {
        let basis = SpectralBasis::new(self.basis.eigenvalues.clone()).map_err(|e| core_error("basis", e))?;
        let noise = NoiseSpace::new(self.noise.weights.clone()).map_err(|e| core_error("noise", e))?;
        let (d, m) = (basis.dim(), noise.dim());
        let drift = match &self.model.drift {
            DriftConfig::Zero => DriftForm::Zero,
            DriftConfig::Affine { offset, matrix: rows } => DriftForm::Affine {
                offset: DVector::from_vec(offset.clone()),
                matrix: matrix("model.drift.matrix", rows)?,
            },
            DriftConfig::Tabulated { values } => DriftForm::Tabulated {
                values: values.iter().map(|v| DVector::from_vec(v.clone())).collect(),
            },
        };
        let nu = match &self.model.nu {
            NuConfig::Constant(v) => TimeWeight::constant(*v),
            NuConfig::Piecewise(v) => TimeWeight::piecewise(v.clone()),
        }
        .map_err(|e| core_error("model", e))?;
        let diffusion = match &self.model.diffusion {
            DiffusionConfig::Constant { matrix: rows } => DiffusionForm::Constant(matrix("model.diffusion.matrix", rows)?),
            DiffusionConfig::Diagonal { sigma, map } => DiffusionForm::Diagonal {
                sigma: sigma.clone(),
                map: scalar_map(map)?,
            },
            DiffusionConfig::AffineColumns { offset, slopes } => DiffusionForm::AffineColumns {
                offset: matrix("model.diffusion.offset", offset)?,
                slopes: slopes
                    .iter()
                    .map(|s| matrix("model.diffusion.slopes", s))
                    .collect::<Result<_, _>>()?,
            },
        };
        let model = ModelSpec::new(d, m, drift, nu, diffusion).map_err(|e| core_error("model", e))?;
        Equation::new(basis, noise, model).map_err(|e| core_error("model", e))
    }

    pub fn initial_point(&self) -> HVec {
        HVec::from_vec(self.run.x.clone())
    }

    pub fn control(&self, dim_u: usize) -> Result<ControlPath, Failure> {
        let grid = TimeGrid::new(self.run.steps).map_err(|e| core_error("run", e))?;
        let field = |name: &str, len: usize| {
            if len == dim_u {
                Ok(())
            } else {
                Err(invalid(name, format!("control has {len} modes, noise has {dim_u}")))
            }
        };
        match (&self.control.value, &self.control.values) {
            (Some(_), Some(_)) => Err(invalid("control", "set either value or values, not both")),
            (Some(v), None) => {
                field("control.value", v.len())?;
                ControlPath::constant(UVec::from_vec(v.clone()), grid).map_err(|e| core_error("control", e))
            }
            (None, Some(rows)) => {
                if rows.len() != self.run.steps {
                    return Err(invalid(
                        "control.values",
                        format!("need one row per grid cell ({}), got {}", self.run.steps, rows.len()),
                    ));
                }
                for r in rows {
                    field("control.values", r.len())?;
                }
                ControlPath::new(rows.iter().map(|r| UVec::from_vec(r.clone())).collect(), grid)
                    .map_err(|e| core_error("control", e))
            }
            (None, None) => Ok(ControlPath::zero(dim_u, grid)),
        }
    }

    pub fn output_dir(&self, base_dir: &Path) -> PathBuf {
        if self.run.output.is_absolute() {
            self.run.output.clone()
        } else {
            base_dir.join(&self.run.output)
        }
    }
}

pub fn tails_xi(cfg: &RunConfig, eq: &Equation) -> Result<DMatrix<f64>, Failure> {
    match &cfg.tails.xi {
        Some(rows) => matrix("tails.xi", rows),
        None => eq
            .model
            .eval_diffusion(&cfg.initial_point())
            .map_err(|e| core_error("tails", e)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_overrides_create_sections() {
        let mut t = Table::new();
        set_dotted(&mut t, "model.diffusion.form", parse_value("\"constant\"")).unwrap();
        set_dotted(&mut t, "run.delta", parse_value("0.25")).unwrap();
        set_dotted(&mut t, "run.epsilon", parse_value("[0.5, 0.1]")).unwrap();
        set_dotted(&mut t, "run.method", parse_value("direct")).unwrap();
        assert_eq!(t["model"]["diffusion"]["form"].as_str(), Some("constant"));
        assert_eq!(t["run"]["delta"].as_float(), Some(0.25));
        assert_eq!(t["run"]["epsilon"].as_array().unwrap().len(), 2);
        assert_eq!(t["run"]["method"].as_str(), Some("direct"));
        assert!(set_dotted(&mut t, "run.delta.x", Value::Integer(1)).is_err());
        assert!(set_dotted(&mut t, "run..x", Value::Integer(1)).is_err());
    }
}
