//! Solver contract, the built-in simplex/branch-and-bound backend and an
//! adapter that shells out to an external solver through LP files.

mod bnb;
pub mod simplex;

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::lp_format::write_lp_file;
use crate::model::{MilpModel, ModelError, VariableRef};

pub use bnb::BoundSample;
use simplex::{solve_relaxation, LpStatus, LpTolerances};

/// Environment variable naming the default backend (`builtin` or
/// `external`).
pub const BACKEND_ENV: &str = "LOTSIZE_BACKEND";
/// Environment variable holding the external solver command template.
pub const EXTERNAL_CMD_ENV: &str = "LOTSIZE_EXTERNAL_CMD";

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("quadratic unsupported")]
    QuadraticUnsupported,
    #[error("invalid solver config: {0}")]
    Config(String),
    #[error("integer column `{0}` needs finite bounds")]
    UnboundedInteger(String),
    #[error("unknown variable `{name}` in solution file line {line}")]
    UnknownVariable { name: String, line: usize },
    #[error("malformed solution line {line}: {text}")]
    MalformedLine { line: usize, text: String },
    #[error("external solver failed: {0}")]
    External(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    FeasibleLimit,
    Infeasible,
    Unbounded,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Seconds.
    pub time_limit: f64,
    /// Relative gap, measured against `max(1, |incumbent|)`.
    pub mip_gap: f64,
    pub integrality_tol: f64,
    pub lp_feasibility_tol: f64,
    pub lp_optimality_tol: f64,
    pub node_limit: usize,
    /// Recorded for reproducibility; the built-in search is deterministic.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            time_limit: 10_800.0,
            mip_gap: 1e-6,
            integrality_tol: 1e-6,
            lp_feasibility_tol: 1e-9,
            lp_optimality_tol: 1e-9,
            node_limit: usize::MAX,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn check(&self) -> Result<(), SolverError> {
        let positive = [
            ("time_limit", self.time_limit),
            ("mip_gap", self.mip_gap),
            ("integrality_tol", self.integrality_tol),
            ("lp_feasibility_tol", self.lp_feasibility_tol),
            ("lp_optimality_tol", self.lp_optimality_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(SolverError::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub objective: Option<f64>,
    pub bound: f64,
    pub gap: f64,
    /// Column values, indexed like the model's variables.
    pub values: Vec<f64>,
    /// Seconds.
    pub wall_time: f64,
    pub nodes: usize,
    pub message: Option<String>,
}

impl SolveResult {
    fn without_solution(status: SolveStatus, nodes: usize, wall_time: f64, message: Option<String>) -> Self {
        let bound = match status {
            SolveStatus::Infeasible => f64::INFINITY,
            _ => f64::NEG_INFINITY,
        };
        Self {
            status,
            objective: None,
            bound,
            gap: f64::INFINITY,
            values: Vec::new(),
            wall_time,
            nodes,
            message,
        }
    }

    pub fn has_solution(&self) -> bool {
        self.objective.is_some() && !self.values.is_empty()
    }

    pub fn value(&self, model: &MilpModel, tag: &VariableRef) -> Option<f64> {
        model.col(tag).and_then(|c| self.values.get(c).copied())
    }

    pub fn values_by_ref(&self, model: &MilpModel) -> HashMap<VariableRef, f64> {
        model
            .tags()
            .filter_map(|(c, t)| self.values.get(c).map(|&v| (*t, v)))
            .collect()
    }
}

pub trait Backend: Send + Sync {
    fn name(&self) -> &str;
    fn supports_quadratic(&self) -> bool;
    fn solve(&self, model: &MilpModel, config: &SolverConfig) -> Result<SolveResult, SolverError>;
}

/// Exact reference solver: bounded primal simplex inside best-bound branch
/// and bound. Linear objectives only.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinBackend;

impl Backend for BuiltinBackend {
    fn name(&self) -> &str {
        "builtin"
    }

    fn supports_quadratic(&self) -> bool {
        false
    }

    fn solve(&self, model: &MilpModel, config: &SolverConfig) -> Result<SolveResult, SolverError> {
        solve(model, config)
    }
}

fn precheck(model: &MilpModel, config: &SolverConfig) -> Result<(), SolverError> {
    config.check()?;
    if model.has_quadratic() {
        return Err(SolverError::QuadraticUnsupported);
    }
    Ok(())
}

/// Solves `model` with the built-in backend.
pub fn solve(model: &MilpModel, config: &SolverConfig) -> Result<SolveResult, SolverError> {
    solve_traced(model, config, None)
}

/// As [`solve`], also recording the bound/incumbent after every node.
pub fn solve_traced(
    model: &MilpModel,
    config: &SolverConfig,
    trace: Option<&mut Vec<BoundSample>>,
) -> Result<SolveResult, SolverError> {
    precheck(model, config)?;
    if let Some(v) = model
        .variables
        .iter()
        .find(|v| v.integer && !(v.lower.is_finite() && v.upper.is_finite()))
    {
        return Err(SolverError::UnboundedInteger(v.name.clone()));
    }
    Ok(bnb::branch_and_bound(model, config, Instant::now(), trace))
}

/// Solves the continuous relaxation of `model`.
pub fn solve_lp(model: &MilpModel, config: &SolverConfig) -> Result<SolveResult, SolverError> {
    precheck(model, config)?;
    let start = Instant::now();
    let deadline = start + std::time::Duration::from_secs_f64(config.time_limit);
    let lower: Vec<f64> = model.variables.iter().map(|v| v.lower).collect();
    let upper: Vec<f64> = model.variables.iter().map(|v| v.upper).collect();
    let tol = LpTolerances {
        feasibility: config.lp_feasibility_tol,
        optimality: config.lp_optimality_tol,
        pivot: 1e-9,
    };
    let out = solve_relaxation(model, &lower, &upper, tol, Some(deadline));
    let wall_time = start.elapsed().as_secs_f64();
    Ok(match out.status {
        LpStatus::Optimal => SolveResult {
            status: SolveStatus::Optimal,
            objective: Some(out.objective),
            bound: out.objective,
            gap: 0.0,
            values: out.x,
            wall_time,
            nodes: 1,
            message: None,
        },
        LpStatus::Infeasible => SolveResult::without_solution(SolveStatus::Infeasible, 1, wall_time, None),
        LpStatus::Unbounded => SolveResult::without_solution(SolveStatus::Unbounded, 1, wall_time, None),
        LpStatus::IterationLimit | LpStatus::TimeLimit => SolveResult::without_solution(
            SolveStatus::Error,
            1,
            wall_time,
            Some(format!("simplex stopped: {:?}", out.status)),
        ),
    })
}

/// Writes `model` in LP format.
pub fn export_lp_file(model: &MilpModel, path: impl AsRef<Path>) -> Result<(), SolverError> {
    Ok(write_lp_file(model, path)?)
}

/// Reads a `name value` solution file for `model`. Lines starting with `#`
/// are comments; columns missing from the file are taken as zero.
pub fn import_solution(model: &MilpModel, path: impl AsRef<Path>) -> Result<SolveResult, SolverError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| SolverError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_solution(model, &text)
}

pub fn parse_solution(model: &MilpModel, text: &str) -> Result<SolveResult, SolverError> {
    let by_name: HashMap<&str, usize> = model
        .variables
        .iter()
        .enumerate()
        .map(|(c, v)| (v.name.as_str(), c))
        .collect();
    let mut values = vec![0.0; model.num_vars()];
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = || SolverError::MalformedLine {
            line: n + 1,
            text: raw.to_string(),
        };
        let mut parts = line.split(|c: char| c.is_whitespace() || c == '=').filter(|s| !s.is_empty());
        let (Some(name), Some(value), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(malformed());
        };
        let value: f64 = value.parse().map_err(|_| malformed())?;
        let col = by_name.get(name).ok_or_else(|| SolverError::UnknownVariable {
            name: name.to_string(),
            line: n + 1,
        })?;
        values[*col] = value;
    }
    let objective = model.objective_value(&values);
    let violation = model.max_violation(&values);
    let feasible = violation <= 1e-6;
    Ok(SolveResult {
        status: if feasible { SolveStatus::Optimal } else { SolveStatus::Error },
        objective: Some(objective),
        bound: if feasible { objective } else { f64::NEG_INFINITY },
        gap: if feasible { 0.0 } else { f64::INFINITY },
        values,
        wall_time: 0.0,
        nodes: 0,
        message: (!feasible).then(|| format!("imported solution violates the model by {violation:.3e}")),
    })
}

/// Runs an external command on an exported LP file. The template's `{lp}`
/// and `{sol}` placeholders are replaced by the file paths; the command
/// must write a `name value` solution file.
#[derive(Debug, Clone)]
pub struct ExternalBackend {
    pub command: String,
    pub quadratic: bool,
}

impl ExternalBackend {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            quadratic: false,
        }
    }

    pub fn from_env() -> Result<Self, SolverError> {
        std::env::var(EXTERNAL_CMD_ENV)
            .map(Self::new)
            .map_err(|_| SolverError::External(format!("set {EXTERNAL_CMD_ENV} to a command using {{lp}} and {{sol}}")))
    }
}

impl Backend for ExternalBackend {
    fn name(&self) -> &str {
        "external"
    }

    fn supports_quadratic(&self) -> bool {
        self.quadratic
    }

    fn solve(&self, model: &MilpModel, config: &SolverConfig) -> Result<SolveResult, SolverError> {
        config.check()?;
        if model.has_quadratic() && !self.quadratic {
            return Err(SolverError::QuadraticUnsupported);
        }
        let start = Instant::now();
        let dir = tempfile::tempdir().map_err(|source| SolverError::Io {
            path: "temporary directory".into(),
            source,
        })?;
        let lp = dir.path().join("model.lp");
        let sol = dir.path().join("model.sol");
        export_lp_file(model, &lp)?;
        let command = self
            .command
            .replace("{lp}", &lp.display().to_string())
            .replace("{sol}", &sol.display().to_string());
        let output = Command::new("sh")
            .arg("-c")
            .arg(&command)
            .output()
            .map_err(|e| SolverError::External(format!("could not start `{command}`: {e}")))?;
        if !output.status.success() {
            return Err(SolverError::External(format!(
                "`{command}` exited with {}: {}",
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        let mut result = import_solution(model, &sol)?;
        result.wall_time = start.elapsed().as_secs_f64();
        Ok(result)
    }
}

/// Backend chosen by name, `None` meaning the environment default.
pub fn backend_from_name(name: Option<&str>) -> Result<Box<dyn Backend>, SolverError> {
    let chosen = match name {
        Some(n) => n.to_string(),
        None => std::env::var(BACKEND_ENV).unwrap_or_else(|_| "builtin".into()),
    };
    match chosen.as_str() {
        "builtin" => Ok(Box::new(BuiltinBackend)),
        "external" => Ok(Box::new(ExternalBackend::from_env()?)),
        other => Err(SolverError::Config(format!("unknown backend `{other}`; use builtin or external"))),
    }
}
