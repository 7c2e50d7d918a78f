//! Solver-agnostic MILP representation and the lot-sizing model builders.
//!
//! Every decision column carries a [`VariableRef`] so callers address
//! solutions symbolically. Columns created from an LP file without a
//! recognizable name carry no tag.

mod build;
pub mod lp_format;
mod subproblem;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use build::{build_compact, build_compact_with, build_implicit, build_implicit_with, build_partial_implicit};
pub(crate) use subproblem::{price_subproblem, scenario_base};
pub use subproblem::{build_subproblem, path_decisions, PenaltyInputs, PenaltyMode, SubproblemSpec};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Instance(#[from] crate::instance::InstanceError),
    #[error("invalid instance: {0}")]
    Invalid(crate::instance::ValidationReport),
    #[error("LP format error at line {line}: {message}")]
    LpFormat { line: usize, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Form of the one-carry-over-per-resource row.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CarryOver {
    /// Exactly one carry-over per resource from the second period on; the
    /// first-period carry-over state is free.
    #[default]
    Exact,
    /// At most one carry-over per resource and no initial setup state.
    AtMostOne,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelOptions {
    pub carry_over: CarryOver,
}

/// The five decision families of the lot-sizing model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Decision {
    /// Setup.
    Y,
    /// Setup carry-over from the previous period.
    Z,
    /// Production quantity.
    Q,
    /// Inventory.
    I,
    /// Backlog.
    B,
}

impl Decision {
    pub const ALL: [Decision; 5] = [Decision::Y, Decision::Z, Decision::Q, Decision::I, Decision::B];

    pub fn is_binary(self) -> bool {
        matches!(self, Decision::Y | Decision::Z)
    }

    fn letter(self) -> char {
        match self {
            Decision::Y => 'Y',
            Decision::Z => 'Z',
            Decision::Q => 'Q',
            Decision::I => 'I',
            Decision::B => 'B',
        }
    }

    fn from_letter(c: char) -> Option<Self> {
        Some(match c {
            'Y' => Decision::Y,
            'Z' => Decision::Z,
            'Q' => Decision::Q,
            'I' => Decision::I,
            'B' => Decision::B,
            _ => return None,
        })
    }

    /// Depth of the tree node whose information set the decision of
    /// `period` (0-based) depends on. Setups are decided at the root.
    pub fn information_depth(self, period: usize) -> usize {
        match self {
            Decision::Y => 0,
            Decision::Z | Decision::Q => period,
            Decision::I | Decision::B => period + 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VarKind {
    Decision(Decision),
    /// Auxiliary absolute-deviation column of the linearized penalty.
    Deviation(Decision),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scope {
    Global,
    Node(usize),
    Path(usize),
}

/// Symbolic column address. `period` is 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VariableRef {
    pub kind: VarKind,
    pub item: usize,
    pub period: usize,
    pub scope: Scope,
}

impl VariableRef {
    pub fn decision(decision: Decision, item: usize, period: usize, scope: Scope) -> Self {
        Self {
            kind: VarKind::Decision(decision),
            item,
            period,
            scope,
        }
    }

    /// LP-file name: `Y_1_2`, `Z_0_3_n5`, `Q_2_0_p7`, `PQ_2_0_p7`.
    pub fn name(&self) -> String {
        let head = match self.kind {
            VarKind::Decision(d) => d.letter().to_string(),
            VarKind::Deviation(d) => format!("P{}", d.letter()),
        };
        match self.scope {
            Scope::Global => format!("{head}_{}_{}", self.item, self.period),
            Scope::Node(n) => format!("{head}_{}_{}_n{n}", self.item, self.period),
            Scope::Path(p) => format!("{head}_{}_{}_p{p}", self.item, self.period),
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        let mut parts = name.split('_');
        let head = parts.next()?;
        let mut chars = head.chars();
        let kind = match (chars.next()?, chars.next(), chars.next()) {
            ('P', Some(c), None) => VarKind::Deviation(Decision::from_letter(c)?),
            (c, None, None) => VarKind::Decision(Decision::from_letter(c)?),
            _ => return None,
        };
        let item = parts.next()?.parse().ok()?;
        let period = parts.next()?.parse().ok()?;
        let scope = match parts.next() {
            None => Scope::Global,
            Some(s) if s.starts_with('n') => Scope::Node(s[1..].parse().ok()?),
            Some(s) if s.starts_with('p') => Scope::Path(s[1..].parse().ok()?),
            Some(_) => return None,
        };
        if parts.next().is_some() {
            return None;
        }
        Some(Self {
            kind,
            item,
            period,
            scope,
        })
    }
}

impl fmt::Display for VariableRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub integer: bool,
    /// Linear objective coefficient.
    pub cost: f64,
    pub tag: Option<VariableRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelSource {
    Compact,
    Implicit,
    PartialImplicit,
    Subproblem { path: usize },
    External,
}

/// Minimize `constant + sum cost_j x_j + sum q_j x_j^2` over linear rows,
/// column bounds and integrality.
#[derive(Debug, Clone, PartialEq)]
pub struct MilpModel {
    pub name: String,
    pub source: ModelSource,
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    /// Diagonal quadratic objective terms `(column, q)` with `q >= 0`.
    pub quadratic: Vec<(usize, f64)>,
    pub constant: f64,
    index: HashMap<VariableRef, usize>,
}

impl MilpModel {
    pub fn new(name: impl Into<String>, source: ModelSource) -> Self {
        Self {
            name: name.into(),
            source,
            variables: Vec::new(),
            constraints: Vec::new(),
            quadratic: Vec::new(),
            constant: 0.0,
            index: HashMap::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn num_integer(&self) -> usize {
        self.variables.iter().filter(|v| v.integer).count()
    }

    pub fn add_var(&mut self, var: Variable) -> usize {
        let col = self.variables.len();
        if let Some(tag) = var.tag {
            self.index.insert(tag, col);
        }
        self.variables.push(var);
        col
    }

    /// Column for `tag`, created with the given bounds when missing.
    pub fn tagged_var(&mut self, tag: VariableRef, lower: f64, upper: f64, integer: bool) -> usize {
        if let Some(&col) = self.index.get(&tag) {
            return col;
        }
        self.add_var(Variable {
            name: tag.name(),
            lower,
            upper,
            integer,
            cost: 0.0,
            tag: Some(tag),
        })
    }

    pub fn add_constraint(&mut self, name: impl Into<String>, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.constraints.push(Constraint {
            name: name.into(),
            terms,
            sense,
            rhs,
        });
    }

    pub fn col(&self, tag: &VariableRef) -> Option<usize> {
        self.index.get(tag).copied()
    }

    pub fn value(&self, values: &[f64], tag: &VariableRef) -> Option<f64> {
        self.col(tag).map(|c| values[c])
    }

    pub fn has_quadratic(&self) -> bool {
        self.quadratic.iter().any(|&(_, q)| q != 0.0)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        let linear: f64 = self.variables.iter().zip(x).map(|(v, xi)| v.cost * xi).sum();
        let quad: f64 = self.quadratic.iter().map(|&(c, q)| q * x[c] * x[c]).sum();
        self.constant + linear + quad
    }

    /// Largest violation of rows, bounds and integrality at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, &xi) in self.variables.iter().zip(x) {
            worst = worst.max(v.lower - xi).max(xi - v.upper);
            if v.integer {
                worst = worst.max((xi - xi.round()).abs());
            }
        }
        for c in &self.constraints {
            let lhs: f64 = c.terms.iter().map(|&(j, a)| a * x[j]).sum();
            let viol = match c.sense {
                Sense::Le => lhs - c.rhs,
                Sense::Ge => c.rhs - lhs,
                Sense::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    /// Rebuilds the tag index, e.g. after editing `variables` directly.
    pub fn reindex(&mut self) {
        self.index = self
            .variables
            .iter()
            .enumerate()
            .filter_map(|(c, v)| v.tag.map(|t| (t, c)))
            .collect();
    }

    pub fn tags(&self) -> impl Iterator<Item = (usize, &VariableRef)> {
        self.variables
            .iter()
            .enumerate()
            .filter_map(|(c, v)| v.tag.as_ref().map(|t| (c, t)))
    }
}

/// Binary setup decisions, items x periods.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetupPlan {
    pub setups: Vec<Vec<u8>>,
}

impl SetupPlan {
    pub fn zeros(items: usize, periods: usize) -> Self {
        Self {
            setups: vec![vec![0; periods]; items],
        }
    }

    /// Rounds values at 0.5 (values in [0, 0.5] map to 0).
    pub fn from_rounded(values: &[Vec<f64>]) -> Self {
        Self {
            setups: values
                .iter()
                .map(|row| row.iter().map(|&v| u8::from(v > 0.5)).collect())
                .collect(),
        }
    }

    /// Reads the global setup columns of a solved stochastic model.
    pub fn from_solution(model: &MilpModel, values: &[f64], items: usize, periods: usize) -> Self {
        let mut plan = Self::zeros(items, periods);
        for (c, tag) in model.tags() {
            if let (VarKind::Decision(Decision::Y), Scope::Global) = (tag.kind, tag.scope) {
                plan.setups[tag.item][tag.period] = u8::from(values[c] > 0.5);
            }
        }
        plan
    }

    pub fn items(&self) -> usize {
        self.setups.len()
    }

    pub fn periods(&self) -> usize {
        self.setups.first().map_or(0, Vec::len)
    }

    pub fn is_binary(&self) -> bool {
        self.setups.iter().flatten().all(|&v| v <= 1)
    }

    pub fn count(&self) -> usize {
        self.setups.iter().flatten().filter(|&&v| v == 1).count()
    }
}

/// Copy of `model` with every setup column fixed to `plan`; all recourse
/// columns stay free.
pub fn fix_setup_plan(model: &MilpModel, plan: &SetupPlan) -> Result<MilpModel, ModelError> {
    if !plan.is_binary() {
        return Err(ModelError::Dimension("setup plan must be binary".into()));
    }
    let mut fixed = model.clone();
    for var in &mut fixed.variables {
        if let Some(VariableRef {
            kind: VarKind::Decision(Decision::Y),
            item,
            period,
            ..
        }) = var.tag
        {
            let value = plan
                .setups
                .get(item)
                .and_then(|row| row.get(period))
                .ok_or_else(|| ModelError::Dimension(format!("plan has no entry for item {item} period {period}")))?;
            var.lower = f64::from(*value);
            var.upper = f64::from(*value);
        }
    }
    Ok(fixed)
}

/// Dense indexing of the decision vector over items and periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecisionLayout {
    pub items: usize,
    pub periods: usize,
}

impl DecisionLayout {
    pub fn new(items: usize, periods: usize) -> Self {
        Self { items, periods }
    }

    pub fn len(&self) -> usize {
        Decision::ALL.len() * self.items * self.periods
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, decision: Decision, item: usize, period: usize) -> usize {
        (decision as usize * self.items + item) * self.periods + period
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Decision, usize, usize)> + '_ {
        Decision::ALL.into_iter().flat_map(move |d| {
            (0..self.items).flat_map(move |i| (0..self.periods).map(move |t| (self.index(d, i, t), d, i, t)))
        })
    }
}
