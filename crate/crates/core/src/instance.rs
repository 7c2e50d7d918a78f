//! Deterministic problem data: items, bill of materials, resources.
//!
//! An [`Instance`] is immutable once built and can be shared between threads.
//! Files are JSON documents carrying a `format_version` field; see
//! [`FORMAT_VERSION`] and the README for the field list.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Current version of the instance file schema.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error("unsupported format_version {found} in {path} (expected {expected})")]
    Version {
        path: String,
        found: u32,
        expected: u32,
    },
    #[error("invalid instance: {0}")]
    Invalid(ValidationReport),
    #[error("big-M for item {item} period {period} is unbounded: production time is zero and no demand cap was supplied")]
    UnboundedBigM { item: usize, period: usize },
    #[error("index out of range: {0}")]
    OutOfRange(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    EndItem,
    Component,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub name: String,
    pub kind: ItemKind,
    pub setup_cost: f64,
    pub setup_time: f64,
    pub production_time: f64,
    pub production_cost: f64,
    pub holding_cost: f64,
    pub backlog_cost: f64,
    pub lost_sale_cost: f64,
    pub lead_time: u32,
    #[serde(default)]
    pub initial_inventory: f64,
    pub resource: usize,
}

/// One nonzero of the BOM matrix: `quantity` units of `component` go into
/// one unit of `parent`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BomEntry {
    pub component: usize,
    pub parent: usize,
    pub quantity: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Bom {
    pub entries: Vec<BomEntry>,
}

impl Bom {
    /// Direct parents of `component` with the per-unit requirement.
    pub fn parents_of(&self, component: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries
            .iter()
            .filter(move |e| e.component == component)
            .map(|e| (e.parent, e.quantity))
    }

    /// Direct components of `parent` with the per-unit requirement.
    pub fn components_of(&self, parent: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries
            .iter()
            .filter(move |e| e.parent == parent)
            .map(|e| (e.component, e.quantity))
    }

    /// Requirement `R_ij`, zero when absent.
    pub fn requirement(&self, component: usize, parent: usize) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.component == component && e.parent == parent)
            .map(|e| e.quantity)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resource {
    pub name: String,
    /// Capacity per period, length equals the horizon.
    pub capacity: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub format_version: u32,
    pub name: String,
    pub horizon: usize,
    pub items: Vec<Item>,
    pub bom: Bom,
    pub resources: Vec<Resource>,
    /// Mean external demand `F_it` (items x periods) used by demand samplers.
    /// Empty when the instance carries no demand model.
    #[serde(default)]
    pub mean_demand: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn mentions(&self, needle: &str) -> bool {
        self.violations
            .iter()
            .any(|v| v.rule.contains(needle) || v.field.contains(needle))
    }

    fn push(&mut self, field: impl Into<String>, rule: impl Into<String>) {
        self.violations.push(Violation {
            field: field.into(),
            rule: rule.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// Per-item, per-period upper bound on external demand of any scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandCap {
    pub max_demand: Vec<Vec<f64>>,
}

impl DemandCap {
    pub fn uniform(items: usize, periods: usize, value: f64) -> Self {
        Self {
            max_demand: vec![vec![value; periods]; items],
        }
    }
}

impl Instance {
    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn num_resources(&self) -> usize {
        self.resources.len()
    }

    /// Items assigned to resource `k` (the set `I_k`).
    pub fn items_on(&self, resource: usize) -> Vec<usize> {
        self.items
            .iter()
            .enumerate()
            .filter(|(_, it)| it.resource == resource)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_component(&self, item: usize) -> bool {
        self.items[item].kind == ItemKind::Component
    }

    pub fn capacity(&self, resource: usize, period: usize) -> f64 {
        self.resources[resource].capacity[period]
    }

    /// Items ordered so that every parent precedes its components, or `None`
    /// when the BOM has a cycle.
    pub fn parents_first_order(&self) -> Option<Vec<usize>> {
        let n = self.items.len();
        // Kahn's algorithm on parent -> component arcs.
        let mut indegree = vec![0usize; n];
        for e in &self.bom.entries {
            if e.component < n && e.parent < n {
                indegree[e.component] += 1;
            }
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(&next) = ready.iter().next() {
            ready.remove(&next);
            order.push(next);
            for e in self.bom.entries.iter().filter(|e| e.parent == next) {
                if e.component < n {
                    indegree[e.component] -= 1;
                    if indegree[e.component] == 0 {
                        ready.insert(e.component);
                    }
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Echelon level of each item: end items without parents are level 0,
    /// a component sits one level below its deepest parent.
    pub fn echelon_levels(&self) -> Option<Vec<usize>> {
        let order = self.parents_first_order()?;
        let mut level = vec![0usize; self.items.len()];
        for &j in &order {
            for (i, _) in self.bom.components_of(j) {
                level[i] = level[i].max(level[j] + 1);
            }
        }
        Some(level)
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        if self.horizon < 1 {
            report.push("horizon", "horizon must be at least 1");
        }
        if self.items.is_empty() {
            report.push("items", "instance needs at least one item");
        }
        for (i, item) in self.items.iter().enumerate() {
            let field = |name: &str| format!("items[{i}].{name}");
            let nonneg = [
                ("setup_cost", item.setup_cost),
                ("setup_time", item.setup_time),
                ("production_time", item.production_time),
                ("production_cost", item.production_cost),
                ("holding_cost", item.holding_cost),
                ("backlog_cost", item.backlog_cost),
                ("lost_sale_cost", item.lost_sale_cost),
                ("initial_inventory", item.initial_inventory),
            ];
            for (name, value) in nonneg {
                if !(value.is_finite() && value >= 0.0) {
                    report.push(field(name), "must be finite and nonnegative");
                }
            }
            if item.lead_time > 1 {
                report.push(field("lead_time"), "lead time must be smaller than or equal to 1");
            }
            if item.lost_sale_cost < item.backlog_cost {
                report.push(field("lost_sale_cost"), "lost sale cost must be at least the backlog cost");
            }
            if item.resource >= self.resources.len() {
                report.push(field("resource"), "item must be assigned to an existing resource");
            }
        }
        let n = self.items.len();
        for (e_idx, e) in self.bom.entries.iter().enumerate() {
            let field = format!("bom.entries[{e_idx}]");
            if e.component >= n || e.parent >= n {
                report.push(field, "BOM entry references an unknown item");
                continue;
            }
            if !(e.quantity.is_finite() && e.quantity > 0.0) {
                report.push(field.clone(), "BOM quantity must be positive");
            }
            if e.component == e.parent {
                report.push(field.clone(), "BOM acyclic: item cannot require itself");
            }
            if self.items[e.component].kind != ItemKind::Component {
                report.push(field, "BOM requirement only allowed for components");
            }
        }
        if self.parents_first_order().is_none() {
            report.push("bom", "BOM acyclic: requirement graph contains a cycle");
        }
        for (k, res) in self.resources.iter().enumerate() {
            if res.capacity.len() != self.horizon {
                report.push(
                    format!("resources[{k}].capacity"),
                    format!("capacity row must have {} periods", self.horizon),
                );
            }
            if res.capacity.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
                report.push(format!("resources[{k}].capacity"), "capacity must be finite and nonnegative");
            }
        }
        if !self.mean_demand.is_empty() {
            if self.mean_demand.len() != n || self.mean_demand.iter().any(|r| r.len() != self.horizon) {
                report.push("mean_demand", "mean demand must be items x periods");
            } else if self.mean_demand.iter().flatten().any(|f| !(f.is_finite() && *f >= 0.0)) {
                report.push("mean_demand", "mean demand must be nonnegative");
            }
        }
        report
    }

    /// Upper bound on the total quantity of each item that production could
    /// ever need to cover: external demand over the whole horizon plus the
    /// requirement of every parent, propagated parents-first.
    pub fn requirement_bound(&self, cap: &DemandCap) -> Vec<f64> {
        let order = self
            .parents_first_order()
            .expect("requirement_bound needs an acyclic BOM");
        let mut bound = vec![0.0; self.items.len()];
        for &i in &order {
            let external: f64 = cap.max_demand[i].iter().sum();
            let internal: f64 = self
                .bom
                .parents_of(i)
                .map(|(j, r)| r * bound[j])
                .sum();
            bound[i] = external + internal;
        }
        bound
    }

    /// Big-M for the setup forcing constraint of `item` in `period`
    /// (0-based). Without a cap only the capacity bound is available.
    pub fn big_m(&self, item: usize, period: usize, cap: Option<&DemandCap>) -> Result<f64, InstanceError> {
        if item >= self.items.len() || period >= self.horizon {
            return Err(InstanceError::OutOfRange(format!("item {item}, period {period}")));
        }
        let requirement = cap.map(|c| self.requirement_bound(c)[item]);
        self.big_m_from(item, period, requirement)
    }

    /// All big-M values, items x periods.
    pub fn big_m_table(&self, cap: Option<&DemandCap>) -> Result<Vec<Vec<f64>>, InstanceError> {
        let requirement = cap.map(|c| self.requirement_bound(c));
        (0..self.items.len())
            .map(|i| {
                (0..self.horizon)
                    .map(|t| self.big_m_from(i, t, requirement.as_ref().map(|r| r[i])))
                    .collect()
            })
            .collect()
    }

    fn big_m_from(&self, item: usize, period: usize, requirement: Option<f64>) -> Result<f64, InstanceError> {
        let it = &self.items[item];
        // No setup time is subtracted: a carried-over setup lets production
        // use the whole period.
        let capacity_bound = (it.production_time > 0.0).then(|| self.capacity(it.resource, period) / it.production_time);
        match (capacity_bound, requirement) {
            (Some(c), Some(d)) => Ok(c.min(d)),
            (Some(c), None) => Ok(c),
            (None, Some(d)) => Ok(d),
            (None, None) => Err(InstanceError::UnboundedBigM { item, period }),
        }
    }
}

pub fn save_instance(instance: &Instance, path: impl AsRef<Path>) -> Result<(), InstanceError> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(instance).map_err(|e| InstanceError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    fs::write(path, text + "\n").map_err(|source| InstanceError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads and validates an instance file.
pub fn load_instance(path: impl AsRef<Path>) -> Result<Instance, InstanceError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| InstanceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_instance(&text, &path.display().to_string())
}

pub fn parse_instance(text: &str, origin: &str) -> Result<Instance, InstanceError> {
    let parse_err = |e: serde_json::Error| InstanceError::Parse {
        path: origin.to_string(),
        message: e.to_string(),
    };
    let raw: serde_json::Value = serde_json::from_str(text).map_err(parse_err)?;
    let found = raw
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| InstanceError::Parse {
            path: origin.to_string(),
            message: "missing field `format_version`".to_string(),
        })?;
    if found != u64::from(FORMAT_VERSION) {
        return Err(InstanceError::Version {
            path: origin.to_string(),
            found: found as u32,
            expected: FORMAT_VERSION,
        });
    }
    // Re-parse from text so serde reports line/column of the failing field.
    let instance: Instance = serde_json::from_str(text).map_err(parse_err)?;
    let report = instance.validate();
    if report.is_empty() {
        Ok(instance)
    } else {
        Err(InstanceError::Invalid(report))
    }
}
