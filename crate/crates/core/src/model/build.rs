use std::collections::HashSet;

use crate::instance::Instance;
use crate::scenario::{PartialTree, ScenarioTree};

use super::{
    CarryOver, Decision, MilpModel, ModelError, ModelOptions, ModelSource, Scope, Sense, VariableRef,
};

/// How per-path decisions map to columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Keying {
    /// One column per scenario-tree node, setups global.
    Implicit,
    /// One column per path, setups global, explicit equalities added later.
    Compact,
    /// Single path, setups carry the path scope as well.
    Subproblem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Row {
    Balance,
    Forcing,
    OneCarry,
    CarryNeedsState,
    CarryChain(usize),
    Capacity,
}

/// Incremental builder shared by every model variant. Paths are added one at
/// a time; node-keyed columns and rows are created on first use so that
/// paths sharing a history share them.
pub(crate) struct Builder<'a> {
    pub inst: &'a Instance,
    pub tree: &'a ScenarioTree,
    pub model: MilpModel,
    keying: Keying,
    options: ModelOptions,
    big_m: Vec<Vec<f64>>,
    seen: HashSet<(Row, usize, usize, Scope)>,
}

impl<'a> Builder<'a> {
    pub fn new(
        inst: &'a Instance,
        tree: &'a ScenarioTree,
        keying: Keying,
        source: ModelSource,
        options: ModelOptions,
    ) -> Result<Self, ModelError> {
        let report = inst.validate();
        if !report.is_empty() {
            return Err(ModelError::Invalid(report));
        }
        if tree.num_items != inst.num_items() || tree.horizon != inst.horizon {
            return Err(ModelError::Dimension(format!(
                "instance has {} items over {} periods, tree has {} items over {} periods",
                inst.num_items(),
                inst.horizon,
                tree.num_items,
                tree.horizon
            )));
        }
        let big_m = inst.big_m_table(Some(&tree.demand_cap()))?;
        Ok(Self {
            inst,
            tree,
            model: MilpModel::new(inst.name.clone(), source),
            keying,
            options,
            big_m,
            seen: HashSet::new(),
        })
    }

    pub fn scope(&self, decision: Decision, period: usize, path: usize) -> Scope {
        match (self.keying, decision) {
            (Keying::Subproblem, _) => Scope::Path(path),
            (_, Decision::Y) => Scope::Global,
            (Keying::Compact, _) => Scope::Path(path),
            (Keying::Implicit, d) => Scope::Node(self.tree.path_node(path, d.information_depth(period))),
        }
    }

    fn row_scope(&self, depth: usize, path: usize) -> Scope {
        match self.keying {
            Keying::Implicit => Scope::Node(self.tree.path_node(path, depth)),
            _ => Scope::Path(path),
        }
    }

    /// Cumulative demand of `item` through `period` along `path`.
    fn cum_demand(&self, item: usize, period: usize, path: usize) -> f64 {
        self.tree.cumulative_demand(self.tree.path_node(path, period + 1), item)
    }

    pub fn var(&mut self, decision: Decision, item: usize, period: usize, path: usize) -> usize {
        let tag = VariableRef::decision(decision, item, period, self.scope(decision, period, path));
        if let Some(col) = self.model.col(&tag) {
            return col;
        }
        let (lower, upper) = match decision {
            Decision::Y => (0.0, 1.0),
            Decision::Z if period == 0 && self.options.carry_over == CarryOver::AtMostOne => (0.0, 0.0),
            Decision::Z => (0.0, 1.0),
            Decision::Q => (0.0, self.big_m[item][period]),
            Decision::I => {
                let produced: f64 = self.big_m[item][..=period].iter().sum();
                (0.0, self.inst.items[item].initial_inventory + produced)
            }
            Decision::B => (0.0, self.cum_demand(item, period, path)),
        };
        self.model.tagged_var(tag, lower, upper, decision.is_binary())
    }

    fn once(&mut self, row: Row, a: usize, period: usize, scope: Scope) -> bool {
        self.seen.insert((row, a, period, scope))
    }

    /// Adds setup costs for the setup columns visible from `path`.
    pub fn add_setup_costs(&mut self, costs: &[Vec<f64>], path: usize) {
        for (i, row) in costs.iter().enumerate() {
            for (t, &s) in row.iter().enumerate() {
                let col = self.var(Decision::Y, i, t, path);
                self.model.variables[col].cost += s;
            }
        }
    }

    /// Adds the rows of one path and its recourse costs weighted by `weight`.
    pub fn add_path(&mut self, path: usize, weight: f64) {
        let inst = self.inst;
        let horizon = inst.horizon;
        for t in 0..horizon {
            for (i, item) in inst.items.iter().enumerate() {
                let q = self.var(Decision::Q, i, t, path);
                let inv = self.var(Decision::I, i, t, path);
                let back = self.var(Decision::B, i, t, path);
                let cost = &mut self.model.variables;
                cost[q].cost += weight * item.production_cost;
                cost[inv].cost += weight * item.holding_cost;
                cost[back].cost += weight
                    * if t + 1 < horizon {
                        item.backlog_cost
                    } else {
                        item.lost_sale_cost
                    };

                let scope = self.row_scope(t + 1, path);
                if self.once(Row::Balance, i, t, scope) {
                    self.add_balance(i, t, path);
                }
                let scope = self.row_scope(t, path);
                if self.once(Row::Forcing, i, t, scope) {
                    let y = self.var(Decision::Y, i, t, path);
                    let z = self.var(Decision::Z, i, t, path);
                    let m = self.big_m[i][t];
                    self.model
                        .add_constraint(format!("force_{i}_{t}_{}", scope_suffix(scope)), vec![(q, 1.0), (y, -m), (z, -m)], Sense::Le, 0.0);
                }
                if t >= 1 && self.once(Row::CarryNeedsState, i, t, scope) {
                    let z = self.var(Decision::Z, i, t, path);
                    let y_prev = self.var(Decision::Y, i, t - 1, path);
                    let z_prev = self.var(Decision::Z, i, t - 1, path);
                    self.model.add_constraint(
                        format!("carry_{i}_{t}_{}", scope_suffix(scope)),
                        vec![(z, 1.0), (y_prev, -1.0), (z_prev, -1.0)],
                        Sense::Le,
                        0.0,
                    );
                }
                if t >= 1 {
                    for j in inst.items_on(item.resource) {
                        if j != i && self.once(Row::CarryChain(j), i, t, scope) {
                            let z = self.var(Decision::Z, i, t, path);
                            let z_prev = self.var(Decision::Z, i, t - 1, path);
                            let y_prev = self.var(Decision::Y, i, t - 1, path);
                            let yj_prev = self.var(Decision::Y, j, t - 1, path);
                            self.model.add_constraint(
                                format!("chain_{i}_{j}_{t}_{}", scope_suffix(scope)),
                                vec![(z, 1.0), (z_prev, 1.0), (y_prev, -1.0), (yj_prev, 1.0)],
                                Sense::Le,
                                2.0,
                            );
                        }
                    }
                }
            }
            for k in 0..inst.num_resources() {
                let scope = self.row_scope(t, path);
                let members = inst.items_on(k);
                if members.is_empty() {
                    continue;
                }
                if self.once(Row::Capacity, k, t, scope) {
                    let mut terms = Vec::with_capacity(2 * members.len());
                    for &i in &members {
                        let it = &inst.items[i];
                        if it.setup_time != 0.0 {
                            terms.push((self.var(Decision::Y, i, t, path), it.setup_time));
                        }
                        if it.production_time != 0.0 {
                            terms.push((self.var(Decision::Q, i, t, path), it.production_time));
                        }
                    }
                    if !terms.is_empty() {
                        self.model
                            .add_constraint(format!("cap_{k}_{t}_{}", scope_suffix(scope)), terms, Sense::Le, inst.capacity(k, t));
                    }
                }
                if t >= 1 && self.once(Row::OneCarry, k, t, scope) {
                    let terms = members
                        .iter()
                        .map(|&i| (self.var(Decision::Z, i, t, path), 1.0))
                        .collect();
                    let sense = match self.options.carry_over {
                        CarryOver::Exact => Sense::Eq,
                        CarryOver::AtMostOne => Sense::Le,
                    };
                    self.model
                        .add_constraint(format!("onecarry_{k}_{t}_{}", scope_suffix(scope)), terms, sense, 1.0);
                }
            }
        }
    }

    /// Inventory balance: arrivals minus internal use minus demand.
    fn add_balance(&mut self, i: usize, t: usize, path: usize) {
        let inst = self.inst;
        let item = &inst.items[i];
        let lead = item.lead_time as usize;
        let mut terms = Vec::new();
        if t >= lead {
            for tau in 0..=t - lead {
                terms.push((self.var(Decision::Q, i, tau, path), 1.0));
            }
        }
        let parents: Vec<(usize, f64)> = inst.bom.parents_of(i).collect();
        for (j, r) in parents {
            for tau in 0..=t {
                terms.push((self.var(Decision::Q, j, tau, path), -r));
            }
        }
        terms.push((self.var(Decision::I, i, t, path), -1.0));
        terms.push((self.var(Decision::B, i, t, path), 1.0));
        let rhs = self.cum_demand(i, t, path) - item.initial_inventory;
        let scope = self.row_scope(t + 1, path);
        self.model
            .add_constraint(format!("bal_{i}_{t}_{}", scope_suffix(scope)), merge_terms(terms), Sense::Eq, rhs);
    }
}

fn scope_suffix(scope: Scope) -> String {
    match scope {
        Scope::Global => "g".into(),
        Scope::Node(n) => format!("n{n}"),
        Scope::Path(p) => format!("p{p}"),
    }
}

/// Sums duplicate columns and drops zeros.
pub(crate) fn merge_terms(mut terms: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    terms.sort_by_key(|&(c, _)| c);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
    for (c, a) in terms {
        match out.last_mut() {
            Some((last, acc)) if *last == c => *acc += a,
            _ => out.push((c, a)),
        }
    }
    out.retain(|&(_, a)| a != 0.0);
    out
}

fn setup_table(inst: &Instance) -> Vec<Vec<f64>> {
    inst.items
        .iter()
        .map(|it| vec![it.setup_cost; inst.horizon])
        .collect()
}

/// Extensive form with per-path recourse columns and explicit
/// non-anticipativity equalities.
pub fn build_compact(instance: &Instance, tree: &ScenarioTree) -> Result<MilpModel, ModelError> {
    build_compact_with(instance, tree, ModelOptions::default())
}

pub fn build_compact_with(
    instance: &Instance,
    tree: &ScenarioTree,
    options: ModelOptions,
) -> Result<MilpModel, ModelError> {
    let mut b = Builder::new(instance, tree, Keying::Compact, ModelSource::Compact, options)?;
    b.add_setup_costs(&setup_table(instance), 0);
    for path in 0..tree.num_paths() {
        b.add_path(path, tree.path_probability(path));
    }
    // Paths that agree on the history up to a node must agree on every
    // decision taken with that information.
    let n_items = instance.num_items();
    for node in 0..tree.num_nodes() {
        let depth = tree.nodes[node].depth;
        let paths = tree.paths_through(node);
        if paths.len() < 2 {
            continue;
        }
        let mut families = Vec::new();
        if depth < tree.horizon {
            families.extend([(Decision::Z, depth), (Decision::Q, depth)]);
        }
        if depth >= 1 {
            families.extend([(Decision::I, depth - 1), (Decision::B, depth - 1)]);
        }
        let first = paths.start;
        for &(d, t) in &families {
            for i in 0..n_items {
                let anchor = b.var(d, i, t, first);
                for other in paths.clone().skip(1) {
                    let col = b.var(d, i, t, other);
                    b.model.add_constraint(
                        format!("na_{}_{i}_{t}_n{node}_p{other}", d_letter(d)),
                        vec![(col, 1.0), (anchor, -1.0)],
                        Sense::Eq,
                        0.0,
                    );
                }
            }
        }
    }
    Ok(b.model)
}

fn d_letter(d: Decision) -> char {
    match d {
        Decision::Y => 'Y',
        Decision::Z => 'Z',
        Decision::Q => 'Q',
        Decision::I => 'I',
        Decision::B => 'B',
    }
}

/// Node-keyed form: one column per information set, no equality rows.
pub fn build_implicit(instance: &Instance, tree: &ScenarioTree) -> Result<MilpModel, ModelError> {
    build_implicit_with(instance, tree, ModelOptions::default())
}

pub fn build_implicit_with(
    instance: &Instance,
    tree: &ScenarioTree,
    options: ModelOptions,
) -> Result<MilpModel, ModelError> {
    build_partial_with(instance, tree, &PartialTree::full(tree), ModelSource::Implicit, options)
}

/// Implicit form restricted to the paths of `partial`, weighted by its
/// renormalized probabilities.
pub fn build_partial_implicit(
    instance: &Instance,
    tree: &ScenarioTree,
    partial: &PartialTree,
) -> Result<MilpModel, ModelError> {
    build_partial_with(instance, tree, partial, ModelSource::PartialImplicit, ModelOptions::default())
}

fn build_partial_with(
    instance: &Instance,
    tree: &ScenarioTree,
    partial: &PartialTree,
    source: ModelSource,
    options: ModelOptions,
) -> Result<MilpModel, ModelError> {
    if partial.paths.len() != partial.probabilities.len() || partial.is_empty() {
        return Err(ModelError::Dimension("partial tree needs one probability per path".into()));
    }
    if let Some(&bad) = partial.paths.iter().find(|&&p| p >= tree.num_paths()) {
        return Err(ModelError::Dimension(format!("path {bad} not in tree")));
    }
    let mut b = Builder::new(instance, tree, Keying::Implicit, source, options)?;
    b.add_setup_costs(&setup_table(instance), partial.paths[0]);
    for (&path, &weight) in partial.paths.iter().zip(&partial.probabilities) {
        b.add_path(path, weight);
    }
    Ok(b.model)
}
