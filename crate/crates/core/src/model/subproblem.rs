use serde::{Deserialize, Serialize};

use crate::instance::Instance;
use crate::scenario::ScenarioTree;

use super::build::{Builder, Keying};
use super::{
    Decision, DecisionLayout, MilpModel, ModelError, ModelOptions, ModelSource, Scope, Sense, VarKind, Variable,
    VariableRef,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyMode {
    /// Diagonal quadratic terms, for QP-capable backends.
    Quadratic,
    /// Exact linear form for binaries, absolute deviation for continuous.
    #[default]
    Linearized,
}

/// Consensus, multipliers and penalty weights of one path, each indexed by
/// [`DecisionLayout`].
#[derive(Debug, Clone, Copy)]
pub struct PenaltyInputs<'a> {
    pub consensus: &'a [f64],
    pub multipliers: &'a [f64],
    pub rho: &'a [f64],
}

#[derive(Debug, Clone, Copy)]
pub struct SubproblemSpec<'a> {
    pub path: usize,
    /// Setup cost per item and period.
    pub setup_costs: &'a [Vec<f64>],
    /// `None` gives the plain scenario problem.
    pub penalty: Option<PenaltyInputs<'a>>,
    pub mode: PenaltyMode,
    pub options: ModelOptions,
}

/// Deterministic single-path model with setup costs from `spec` and the
/// augmented-Lagrangian penalty toward the consensus.
pub fn build_subproblem(
    instance: &Instance,
    tree: &ScenarioTree,
    spec: &SubproblemSpec<'_>,
) -> Result<MilpModel, ModelError> {
    let base = scenario_base(instance, tree, spec.path, spec.options)?;
    price_subproblem(&base, spec)
}

/// Single-path model without setup costs or penalties.
pub(crate) fn scenario_base(
    instance: &Instance,
    tree: &ScenarioTree,
    path: usize,
    options: ModelOptions,
) -> Result<MilpModel, ModelError> {
    if path >= tree.num_paths() {
        return Err(ModelError::Dimension(format!("path {path} not in tree")));
    }
    let mut b = Builder::new(instance, tree, Keying::Subproblem, ModelSource::Subproblem { path }, options)?;
    b.add_path(path, 1.0);
    Ok(b.model)
}

/// Clones `base` and adds setup costs and the penalty of `spec`.
pub(crate) fn price_subproblem(base: &MilpModel, spec: &SubproblemSpec<'_>) -> Result<MilpModel, ModelError> {
    let mut model = base.clone();
    let items = spec.setup_costs.len();
    let periods = spec.setup_costs.first().map_or(0, Vec::len);
    let layout = DecisionLayout::new(items, periods);
    for (i, row) in spec.setup_costs.iter().enumerate() {
        for (t, &s) in row.iter().enumerate() {
            let tag = VariableRef::decision(Decision::Y, i, t, Scope::Path(spec.path));
            let col = model
                .col(&tag)
                .ok_or_else(|| ModelError::Dimension(format!("setup table entry {i},{t} has no column")))?;
            model.variables[col].cost += s;
        }
    }
    let Some(pen) = spec.penalty else {
        return Ok(model);
    };
    for v in [pen.consensus, pen.multipliers, pen.rho] {
        if v.len() != layout.len() {
            return Err(ModelError::Dimension(format!(
                "penalty vector has {} entries, expected {}",
                v.len(),
                layout.len()
            )));
        }
    }
    for (k, d, i, t) in layout.iter() {
        let tag = VariableRef::decision(d, i, t, Scope::Path(spec.path));
        let col = model
            .col(&tag)
            .ok_or_else(|| ModelError::Dimension(format!("no column for {tag}")))?;
        let var = &model.variables[col];
        if var.lower == var.upper {
            continue;
        }
        let (target, lambda, rho) = (pen.consensus[k], pen.multipliers[k], pen.rho[k]);
        // Lagrangian term lambda * (x - target).
        model.variables[col].cost += lambda;
        model.constant -= lambda * target;
        let half = 0.5 * rho;
        if half == 0.0 {
            continue;
        }
        match (spec.mode, d.is_binary()) {
            (PenaltyMode::Quadratic, _) => {
                model.quadratic.push((col, half));
                model.variables[col].cost -= rho * target;
                model.constant += half * target * target;
            }
            (PenaltyMode::Linearized, true) => {
                // x^2 = x on binaries.
                model.variables[col].cost += half * (1.0 - 2.0 * target);
                model.constant += half * target * target;
            }
            (PenaltyMode::Linearized, false) => {
                let dev = model.add_var(Variable {
                    name: String::new(),
                    lower: 0.0,
                    upper: f64::INFINITY,
                    integer: false,
                    cost: half,
                    tag: Some(VariableRef {
                        kind: VarKind::Deviation(d),
                        item: i,
                        period: t,
                        scope: Scope::Path(spec.path),
                    }),
                });
                let name = model.variables[dev].tag.map(|r| r.name()).unwrap_or_default();
                model.variables[dev].name = name.clone();
                model.add_constraint(format!("{name}_up"), vec![(dev, 1.0), (col, -1.0)], Sense::Ge, -target);
                model.add_constraint(format!("{name}_dn"), vec![(dev, 1.0), (col, 1.0)], Sense::Ge, target);
            }
        }
    }
    Ok(model)
}

/// The decision vector of `path` read from a solution of a model that keys
/// its columns by path.
pub fn path_decisions(
    model: &MilpModel,
    layout: DecisionLayout,
    path: usize,
    values: &[f64],
) -> Result<Vec<f64>, ModelError> {
    layout
        .iter()
        .map(|(_, d, i, t)| {
            let tag = VariableRef::decision(d, i, t, Scope::Path(path));
            model
                .value(values, &tag)
                .ok_or_else(|| ModelError::Dimension(format!("no column for {tag}")))
        })
        .collect()
}
