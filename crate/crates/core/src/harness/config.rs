//! Experiment configuration files.
//!
//! A config is a TOML document with a fixed schema; unknown keys are rejected and
//! errors carry the path of the offending field. See `configs/README.md` for the
//! full key reference.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, SegaError};

fn one() -> usize {
    1
}

/// Full description of an experiment: one problem, one method, several seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub iterations: usize,
    pub seeds: Vec<u64>,
    #[serde(default = "one")]
    pub record_every: usize,
    #[serde(default)]
    pub precision: Precision,
    pub problem: ProblemConfig,
    pub method: MethodConfig,
    #[serde(default)]
    pub cost: CostConfig,
    #[serde(default)]
    pub stop: Option<StopConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

/// Problem family. Problems without an explicit `seed` are regenerated from each run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    /// Rotated quadratic with spectrum type 1..=4.
    Synthetic {
        spectrum: u8,
        n: usize,
        #[serde(default)]
        top: Option<f64>,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// f(x) = ½xᵀMx − bᵀx with explicit data.
    Quadratic { m: Vec<Vec<f64>>, b: Vec<f64> },
    /// ‖Ax − b‖² with A of orthonormal rows.
    LeastSquaresSubspace {
        n: usize,
        d: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// ℓ2-regularized logistic regression on a LibSVM file.
    Logistic {
        path: PathBuf,
        mu: f64,
        #[serde(default)]
        max_rows: Option<usize>,
        #[serde(default)]
        subsample_seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Sega,
    BiasSega,
    SubspaceSega,
    SegaForcedZero,
    Asega,
    Pgd,
    Cd,
    Rds,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Sega => "sega",
            Solver::BiasSega => "bias_sega",
            Solver::SubspaceSega => "subspace_sega",
            Solver::SegaForcedZero => "sega_forced_zero",
            Solver::Asega => "asega",
            Solver::Pgd => "pgd",
            Solver::Cd => "cd",
            Solver::Rds => "rds",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub solver: Solver,
    #[serde(default)]
    pub sketch: SketchConfig,
    #[serde(default)]
    pub stepsize: StepsizeConfig,
    #[serde(default)]
    pub regularizer: RegularizerConfig,
    #[serde(default)]
    pub metric: MetricConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    /// Starting point; Gaussian from the run seed when absent.
    #[serde(default)]
    pub start: Option<Vec<f64>>,
    #[serde(default)]
    pub h0: H0Config,
    /// Diagonal preconditioner G for the x-step.
    #[serde(default)]
    pub precond: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SketchConfig {
    #[default]
    UniformCoordinate,
    Coordinate { p: Vec<f64> },
    /// p_i ∝ M_ii^power.
    Importance { power: f64 },
    TauNice { tau: usize },
    Block { support: Vec<Vec<usize>>, probs: Vec<f64> },
    Gaussian {
        #[serde(default = "one")]
        b: usize,
    },
    /// Coordinate sampling and metric chosen from A (least squares only).
    OptimalSubspace,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepsizeConfig {
    /// SEGA: general rule. PGD: 1/L. CD: min_i p_i/M_ii. RDS: 1/(Ln). ASEGA: theory parameters.
    #[default]
    Default,
    General {
        #[serde(default)]
        sigma: Option<f64>,
    },
    SimpleUniform,
    CoordinateNonacc { alpha: f64, sigma: f64 },
    ImportanceTrace,
    MetricG {
        #[serde(default)]
        sigma: Option<f64>,
    },
    Manual {
        alpha: f64,
        #[serde(default)]
        sigma: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegularizerConfig {
    #[default]
    Zero,
    L1 { lambda: f64 },
    Ball {
        #[serde(default = "unit")]
        radius: f64,
    },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricConfig {
    #[default]
    Identity,
    Diagonal { diag: Vec<f64> },
    Dense { b: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleConfig {
    #[default]
    Exact,
    FiniteDifference {
        #[serde(default)]
        epsilon: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum H0Config {
    #[default]
    Zero,
    /// h⁰ = ∇f(x⁰).
    Gradient,
}

/// Cost accounting. PGD is charged X·n extra units per iteration for its linear solve.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    #[serde(default)]
    pub linear_solve_factor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopMetricConfig {
    FGap,
    DistSq,
    RelativeLyapunov,
    RelativeDistSq,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopConfig {
    pub metric: StopMetricConfig,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory for per-seed CSV files; nothing is written when absent.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
}

fn config_err(msg: impl Into<String>) -> SegaError {
    SegaError::Config(msg.into())
}

/// Sets `key` (dotted path) to `value` parsed as a TOML value, falling back to a string.
pub fn apply_override(table: &mut toml::Table, key: &str, value: &str) -> Result<()> {
    let parsed: toml::Value = match format!("v = {value}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key just parsed"),
        Err(_) => toml::Value::String(value.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(config_err(format!("invalid override key '{key}'")));
    }
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| config_err(format!("override '{key}': '{p}' is not a section")))?;
    }
    cur.insert(last.to_string(), parsed);
    Ok(())
}

/// Parses `key=value`.
pub fn split_override(s: &str) -> Result<(&str, &str)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| config_err(format!("override '{s}' is not key=value")))
}

impl RunConfig {
    /// Parses config text, applies overrides and validates.
    pub fn parse_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| config_err(e.message().to_string()))?;
        for (k, v) in overrides {
            apply_override(&mut table, k, v)?;
        }
        Self::from_table(table)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_overrides(text, &[])
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse_with_overrides(&text, overrides)?;
        if let ProblemConfig::Logistic { path: data, .. } = &mut cfg.problem {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        Ok(cfg)
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: RunConfig = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            config_err(format!("{path}: {}", e.into_inner().message()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Structural checks that serde cannot express.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(config_err("seeds: at least one seed is required"));
        }
        if self.record_every == 0 {
            return Err(config_err("record_every: must be positive"));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(config_err("name: must be a nonempty file-name-safe string"));
        }
        if !(self.cost.linear_solve_factor >= 0.0) {
            return Err(config_err("cost.linear_solve_factor: must be nonnegative"));
        }
        if let Some(s) = &self.stop {
            if !(s.threshold > 0.0) {
                return Err(config_err("stop.threshold: must be positive"));
            }
        }
        let m = &self.method;
        let coordinate_only = matches!(self.method.solver, Solver::Asega | Solver::Cd);
        if coordinate_only
            && !matches!(m.sketch, SketchConfig::UniformCoordinate | SketchConfig::Coordinate { .. } | SketchConfig::Importance { .. })
        {
            return Err(config_err(format!("method.sketch: {} needs serial coordinate sampling", m.solver.name())));
        }
        if matches!(m.sketch, SketchConfig::OptimalSubspace) != matches!(m.solver, Solver::SubspaceSega) {
            return Err(config_err("method.sketch: optimal_subspace goes together with solver = subspace_sega"));
        }
        if matches!(m.solver, Solver::SubspaceSega) && !matches!(self.problem, ProblemConfig::LeastSquaresSubspace { .. }) {
            return Err(config_err("problem.kind: subspace_sega needs a least_squares_subspace problem"));
        }
        if matches!(m.solver, Solver::Rds | Solver::Asega) && !matches!(m.regularizer, RegularizerConfig::Zero) {
            return Err(config_err(format!("method.regularizer: {} supports only kind = zero", m.solver.name())));
        }
        Ok(())
    }

    /// Canonical TOML text of the validated config.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of [`RunConfig::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
