//! Run-configuration schema: one JSON file per invocation, with CLI flags
//! overriding file values. Field-by-field documentation lives in the README.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sumcov::{ModelSpec, SolverConfig};

use crate::CliError;

/// A model given inline or as a path to a model JSON file.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    Path(PathBuf),
    Inline(ModelSpec),
}

impl ModelRef {
    pub fn load(&self) -> Result<ModelSpec, CliError> {
        match self {
            ModelRef::Inline(spec) => Ok(spec.clone()),
            ModelRef::Path(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::Config(format!("{}: {e}", path.display()))
                })?;
                parse_json(&text, path)
            }
        }
    }
}

pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str, path: &Path) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| {
        CliError::Config(format!(
            "{}:{}:{}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZGridSpec {
    #[serde(default)]
    pub points: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub linspace: Option<LinSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinSpec {
    pub start: f64,
    pub end: f64,
    pub count: usize,
    /// Fixed imaginary part for z grids; ignored for x grids.
    #[serde(default)]
    pub im: Option<f64>,
}

impl ZGridSpec {
    pub fn realize(&self) -> Result<Vec<(f64, f64)>, CliError> {
        match (&self.points, &self.linspace) {
            (Some(points), None) => {
                if points.is_empty() {
                    return Err(CliError::Config("z_grid.points is empty".into()));
                }
                Ok(points.iter().map(|p| (p[0], p[1])).collect())
            }
            (None, Some(lin)) => {
                let im = lin.im.ok_or_else(|| {
                    CliError::Config("z_grid.linspace requires an \"im\" offset".into())
                })?;
                if lin.count == 0 {
                    return Err(CliError::Config("z_grid.linspace.count must be >= 1".into()));
                }
                Ok(linspace(lin.start, lin.end, lin.count)
                    .map(|re| (re, im))
                    .collect())
            }
            _ => Err(CliError::Config(
                "z_grid needs exactly one of \"points\" or \"linspace\"".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XGridSpec {
    #[serde(default)]
    pub points: Option<Vec<f64>>,
    #[serde(default)]
    pub linspace: Option<LinSpec>,
    /// Model-derived grid with this many points.
    #[serde(default)]
    pub auto: Option<usize>,
}

impl XGridSpec {
    pub fn realize(&self, spec: &ModelSpec) -> Result<Vec<f64>, CliError> {
        match (&self.points, &self.linspace, &self.auto) {
            (Some(points), None, None) => {
                if points.is_empty() {
                    return Err(CliError::Config("x_grid.points is empty".into()));
                }
                Ok(points.clone())
            }
            (None, Some(lin), None) => {
                if lin.count == 0 {
                    return Err(CliError::Config("x_grid.linspace.count must be >= 1".into()));
                }
                Ok(linspace(lin.start, lin.end, lin.count).collect())
            }
            (None, None, Some(n)) => Ok(sumcov::lsd::default_grid(spec, *n)),
            _ => Err(CliError::Config(
                "x_grid needs exactly one of \"points\", \"linspace\" or \"auto\"".into(),
            )),
        }
    }
}

pub fn linspace(start: f64, end: f64, count: usize) -> impl Iterator<Item = f64> {
    let step = if count > 1 { (end - start) / (count - 1) as f64 } else { 0.0 };
    (0..count).map(move |i| start + step * i as f64)
}

/// Partial solver overrides; unset fields fall back to crate defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    pub tol: Option<f64>,
    pub max_iters: Option<u32>,
    pub damping: Option<f64>,
    pub homotopy: Option<bool>,
}

impl SolverOverrides {
    pub fn apply(&self, mut base: SolverConfig) -> SolverConfig {
        if let Some(tol) = self.tol {
            base.tol = tol;
        }
        if let Some(max_iters) = self.max_iters {
            base.max_iters = max_iters;
        }
        if let Some(damping) = self.damping {
            base.damping = damping;
        }
        if let Some(homotopy) = self.homotopy {
            base.homotopy = homotopy;
        }
        base
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub model: ModelRef,
    pub z_grid: ZGridSpec,
    #[serde(default)]
    pub solver: SolverOverrides,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub strict: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    pub model: ModelRef,
    pub x_grid: XGridSpec,
    #[serde(default)]
    pub eps_schedule: Option<Vec<f64>>,
    #[serde(default)]
    pub solver: SolverOverrides,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub strict: bool,
}

#[derive(Debug, Clone, Copy, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    pub k: usize,
    pub c: f64,
    #[serde(default = "default_p")]
    pub p: usize,
    pub seed: u64,
}

fn default_p() -> usize {
    500
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub study: StudySpec,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Optional path for the empirical model (JESDs of the same draw).
    #[serde(default)]
    pub model_output: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub study: StudySpec,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default)]
    pub solver: SolverOverrides,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_grid_points() -> usize {
    400
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosedFormConfig {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub c: f64,
    #[serde(default)]
    pub z_grid: Option<ZGridSpec>,
    #[serde(default)]
    pub x_grid: Option<ZGridSpecForX>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

/// x grids for the closed form reuse the linspace/points shape but are 1-D.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZGridSpecForX {
    #[serde(default)]
    pub points: Option<Vec<f64>>,
    #[serde(default)]
    pub linspace: Option<LinSpec>,
}

impl ZGridSpecForX {
    pub fn realize(&self) -> Result<Vec<f64>, CliError> {
        match (&self.points, &self.linspace) {
            (Some(points), None) => {
                if points.is_empty() {
                    return Err(CliError::Config("x_grid.points is empty".into()));
                }
                Ok(points.clone())
            }
            (None, Some(lin)) => {
                if lin.count == 0 {
                    return Err(CliError::Config("x_grid.linspace.count must be >= 1".into()));
                }
                Ok(linspace(lin.start, lin.end, lin.count).collect())
            }
            _ => Err(CliError::Config(
                "x_grid needs exactly one of \"points\" or \"linspace\"".into(),
            )),
        }
    }
}

pub fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_json(&text, path)
}
