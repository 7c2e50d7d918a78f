//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use lotsizing::instance::{Bom, BomEntry, Item, ItemKind, Resource, FORMAT_VERSION};
use lotsizing::model::{MilpModel, ModelSource, Sense, Variable};
use lotsizing::scenario::{build_tree, build_tree_with, LumpySampler};
use lotsizing::{Instance, ScenarioTree, SolverConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Tight gap so optima are comparable at 1e-6.
pub fn exact() -> SolverConfig {
    SolverConfig {
        mip_gap: 1e-10,
        ..SolverConfig::default()
    }
}

/// A random instance with at most `max_items` items and `max_periods`
/// periods.
pub fn random_instance(seed: u64, max_items: usize, max_periods: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_items);
    let horizon = rng.random_range(1..=max_periods);
    sized_instance(seed, n, horizon)
}

/// A random instance with exactly `n` items and `horizon` periods.
pub fn sized_instance(seed: u64, n: usize, horizon: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut entries = Vec::new();
    for parent in 1..n {
        if rng.random_bool(0.6) {
            let component = rng.random_range(0..parent);
            entries.push(BomEntry {
                component,
                parent,
                quantity: f64::from(rng.random_range(1..=2)),
            });
        }
    }
    let num_resources = if n > 1 { rng.random_range(1..=2) } else { 1 };
    let bom = Bom { entries };
    let mut items = Vec::with_capacity(n);
    for i in 0..n {
        let kind = if bom.entries.iter().any(|e| e.component == i) {
            ItemKind::Component
        } else {
            ItemKind::EndItem
        };
        let h = f64::from(rng.random_range(1..=3));
        let b = h * f64::from(rng.random_range(2..=4));
        items.push(Item {
            name: format!("i{i}"),
            kind,
            setup_cost: f64::from(rng.random_range(20..=120)),
            setup_time: f64::from(rng.random_range(0..=3)),
            production_time: 1.0,
            production_cost: f64::from(rng.random_range(0..=2)),
            holding_cost: h,
            backlog_cost: b,
            lost_sale_cost: 5.0 * b,
            lead_time: rng.random_range(0..=1),
            initial_inventory: f64::from(rng.random_range(0..=4)),
            resource: rng.random_range(0..num_resources),
        });
    }
    let mean_demand = items
        .iter()
        .map(|it| {
            (0..horizon)
                .map(|_| match it.kind {
                    ItemKind::EndItem => f64::from(rng.random_range(2..=6)),
                    ItemKind::Component => f64::from(rng.random_range(0..=1)),
                })
                .collect()
        })
        .collect();
    let resources = (0..num_resources)
        .map(|k| Resource {
            name: format!("r{k}"),
            capacity: (0..horizon).map(|_| f64::from(rng.random_range(15..=40))).collect(),
        })
        .collect();
    let inst = Instance {
        format_version: FORMAT_VERSION,
        name: format!("rand{seed}"),
        horizon,
        items,
        bom,
        resources,
        mean_demand,
    };
    assert!(inst.validate().is_empty(), "{:?}", inst.validate());
    inst
}

pub fn lumpy_tree(instance: &Instance, branching: usize, seed: u64) -> ScenarioTree {
    build_tree(instance, branching, &LumpySampler::from_instance(instance), seed).unwrap()
}

/// Same demand on every branch: the instance's rounded mean.
pub fn identical_tree(instance: &Instance, branching: usize) -> ScenarioTree {
    let means = instance.mean_demand.clone();
    let sampler = move |i: usize, t: usize, _: &mut ChaCha8Rng| means[i][t].round() as u32;
    build_tree_with(instance.num_items(), instance.horizon, branching, &sampler, 0).unwrap()
}

/// A random pure or mixed binary program with `binaries` binaries and up
/// to `max_continuous` bounded continuous columns. Always feasible: the zero point
/// satisfies every `<=` row with non-negative rhs, and `>=` rows are only
/// generated with a non-positive rhs.
pub fn random_milp(seed: u64, binaries: usize, max_continuous: usize) -> MilpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = MilpModel::new(format!("milp{seed}"), ModelSource::External);
    for j in 0..binaries {
        let cost = f64::from(rng.random_range(-10..=6));
        m.add_var(column(format!("x{j}"), 1.0, true, cost));
    }
    let continuous = rng.random_range(0..=max_continuous);
    for j in 0..continuous {
        let upper = f64::from(rng.random_range(1..=5));
        m.add_var(column(format!("c{j}"), upper, false, rng.random_range(-3.0..2.0)));
    }
    let nv = binaries + continuous;
    let rows = rng.random_range(1..=binaries.max(2));
    for r in 0..rows {
        let mut terms = Vec::new();
        for j in 0..nv {
            if rng.random_bool(0.5) {
                terms.push((j, f64::from(rng.random_range(-3..=6))));
            }
        }
        if terms.is_empty() {
            continue;
        }
        if rng.random_bool(0.8) {
            m.add_constraint(format!("le{r}"), terms, Sense::Le, f64::from(rng.random_range(0..=8)));
        } else {
            m.add_constraint(format!("ge{r}"), terms, Sense::Ge, -f64::from(rng.random_range(0..=4)));
        }
    }
    m
}

fn column(name: String, upper: f64, integer: bool, cost: f64) -> Variable {
    Variable {
        name,
        lower: 0.0,
        upper,
        integer,
        cost,
        tag: None,
    }
}
