//! Scoring fixed setup plans on the full tree and aggregating run records
//! into grouped tables.
//!
//! CSV columns of an aggregated report, in order: `utilization`,
//! `demand_type`, `lambda` (empty when not applicable), `runs`,
//! `mean_runtime` (seconds), `mean_delta` (percent), `converged_pct`.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::Instance;
use crate::instance_gen::DemandType;
use crate::model::{build_implicit_with, fix_setup_plan, ModelError, ModelOptions, SetupPlan};
use crate::parallel::Execution;
use crate::scenario::ScenarioTree;
use crate::solver::{Backend, SolveStatus, SolverConfig, SolverError};

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("plan is {plan_items}x{plan_periods}, instance is {items}x{periods}")]
    PlanShape {
        plan_items: usize,
        plan_periods: usize,
        items: usize,
        periods: usize,
    },
    #[error("plan is not binary")]
    NotBinary,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("plan has no feasible recourse ({0:?})")]
    NoSolution(SolveStatus),
    #[error("no records to aggregate")]
    Empty,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Expected cost over the full tree.
    pub cost: f64,
    /// False when the solver stopped at a limit with an incumbent.
    pub optimal: bool,
    pub status: SolveStatus,
    pub bound: f64,
}

/// Expected cost of `plan` on the full tree: Y is fixed, carry-overs,
/// lots, inventory and backlog are re-optimized per node.
pub fn evaluate_plan(
    instance: &Instance,
    tree: &ScenarioTree,
    plan: &SetupPlan,
    options: ModelOptions,
    config: &SolverConfig,
    backend: &dyn Backend,
) -> Result<Evaluation, EvaluationError> {
    if plan.items() != instance.num_items() || plan.periods() != instance.horizon {
        return Err(EvaluationError::PlanShape {
            plan_items: plan.items(),
            plan_periods: plan.periods(),
            items: instance.num_items(),
            periods: instance.horizon,
        });
    }
    if !plan.is_binary() {
        return Err(EvaluationError::NotBinary);
    }
    let model = build_implicit_with(instance, tree, options)?;
    let fixed = fix_setup_plan(&model, plan)?;
    let result = backend.solve(&fixed, config)?;
    match (result.status, result.objective) {
        (SolveStatus::Optimal | SolveStatus::FeasibleLimit, Some(cost)) => Ok(Evaluation {
            cost,
            optimal: result.status == SolveStatus::Optimal,
            status: result.status,
            bound: result.bound,
        }),
        (status, _) => Err(EvaluationError::NoSolution(status)),
    }
}

/// Evaluates several plans on the same tree, concurrently when `execution`
/// allows it. Results keep the order of `plans`.
pub fn evaluate_plans(
    instance: &Instance,
    tree: &ScenarioTree,
    plans: &[SetupPlan],
    options: ModelOptions,
    config: &SolverConfig,
    backend: &dyn Backend,
    execution: &Execution,
) -> Vec<Result<Evaluation, EvaluationError>> {
    execution.map(plans, |plan| evaluate_plan(instance, tree, plan, options, config, backend))
}

/// Percent by which `candidate` exceeds `reference`.
pub fn cost_delta(candidate: f64, reference: f64) -> f64 {
    100.0 * (candidate - reference) / reference
}

/// One solved instance with its reference cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance: String,
    pub utilization: f64,
    pub demand_type: DemandType,
    #[serde(default)]
    pub lambda: Option<f64>,
    pub method: String,
    /// Seconds.
    pub runtime: f64,
    pub cost: f64,
    pub reference_cost: f64,
    pub delta: f64,
    pub converged: bool,
    #[serde(default)]
    pub iterations: usize,
}

impl RunRecord {
    /// Fills `delta` from the two raw costs.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        instance: impl Into<String>,
        utilization: f64,
        demand_type: DemandType,
        lambda: Option<f64>,
        method: impl Into<String>,
        runtime: f64,
        cost: f64,
        reference_cost: f64,
        converged: bool,
        iterations: usize,
    ) -> Self {
        Self {
            instance: instance.into(),
            utilization,
            demand_type,
            lambda,
            method: method.into(),
            runtime,
            cost,
            reference_cost,
            delta: cost_delta(cost, reference_cost),
            converged,
            iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub utilization: f64,
    pub demand_type: DemandType,
    pub lambda: Option<f64>,
    pub runs: usize,
    pub mean_runtime: f64,
    pub mean_delta: f64,
    pub converged_pct: f64,
}

/// Group key with a total order on the float parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct GroupKey {
    utilization: OrdF64,
    demand_type: DemandType,
    lambda: Option<OrdF64>,
}

#[derive(Debug, Clone, Copy)]
struct OrdF64(f64);

impl PartialEq for OrdF64 {
    fn eq(&self, other: &Self) -> bool {
        self.0.total_cmp(&other.0).is_eq()
    }
}

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Sum in a canonical order so the result does not depend on input order.
fn canonical_mean(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    values.into_iter().sum::<f64>() / n
}

/// Means per (utilization, demand type, λ), sorted by that key.
pub fn aggregate_report(records: &[RunRecord]) -> Vec<ReportRow> {
    let mut groups: BTreeMap<GroupKey, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        let key = GroupKey {
            utilization: OrdF64(r.utilization),
            demand_type: r.demand_type,
            lambda: r.lambda.map(OrdF64),
        };
        groups.entry(key).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(key, members)| {
            let runs = members.len();
            let converged = members.iter().filter(|r| r.converged).count();
            ReportRow {
                utilization: key.utilization.0,
                demand_type: key.demand_type,
                lambda: key.lambda.map(|l| l.0),
                runs,
                mean_runtime: canonical_mean(members.iter().map(|r| r.runtime).collect()),
                mean_delta: canonical_mean(members.iter().map(|r| r.delta).collect()),
                converged_pct: 100.0 * converged as f64 / runs as f64,
            }
        })
        .collect()
}

pub fn report_csv(rows: &[ReportRow]) -> Result<String, EvaluationError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row)?;
    }
    let bytes = writer.into_inner().map_err(|e| EvaluationError::Io {
        path: PathBuf::from("<memory>"),
        source: e.into_error(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn report_json(rows: &[ReportRow]) -> Result<String, EvaluationError> {
    Ok(serde_json::to_string_pretty(rows)?)
}

pub fn write_records_csv(records: &[RunRecord], path: impl AsRef<Path>) -> Result<(), EvaluationError> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path)?;
    for r in records {
        writer.serialize(r)?;
    }
    writer.flush().map_err(|source| EvaluationError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_records_json(path: impl AsRef<Path>) -> Result<Vec<RunRecord>, EvaluationError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| EvaluationError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    // Either a single record or a list.
    match serde_json::from_str::<Vec<RunRecord>>(&text) {
        Ok(list) => Ok(list),
        Err(_) => Ok(vec![serde_json::from_str::<RunRecord>(&text)?]),
    }
}
