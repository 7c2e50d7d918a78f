//! Benchmark grid generator: two production structures, two demand
//! patterns, two utilizations, three setup-time profiles, two backlog ratios
//! and two holding-cost profiles.
//!
//! The base demands, cost ranges, setup-time base and the two production
//! structures are stand-ins chosen for this crate; they reproduce the shape
//! of the classic test bed, not its numbers.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::instance::{Bom, BomEntry, Instance, Item, ItemKind, Resource, FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BomKind {
    /// Every component feeds exactly one parent.
    Assembly,
    /// Some components feed several parents.
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemandType {
    /// External demand at end items only.
    EndItem,
    /// End items and components face external demand.
    Component,
}

impl fmt::Display for DemandType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DemandType::EndItem => "end_item",
            DemandType::Component => "component",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetupTimes {
    None,
    Short,
    Long,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoldingProfile {
    /// Same holding cost on every level.
    Constant,
    /// Holding cost doubles per level toward the end items.
    HighLate,
}

/// Coordinates of one instance in the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub bom: BomKind,
    pub demand: DemandType,
    pub utilization: f64,
    pub setup_times: SetupTimes,
    pub backlog_ratio: f64,
    pub holding: HoldingProfile,
}

impl GridPoint {
    pub fn label(&self) -> String {
        let bom = match self.bom {
            BomKind::Assembly => "asm",
            BomKind::General => "gen",
        };
        let demand = match self.demand {
            DemandType::EndItem => "end",
            DemandType::Component => "comp",
        };
        let st = match self.setup_times {
            SetupTimes::None => "st0",
            SetupTimes::Short => "st1",
            SetupTimes::Long => "st3",
        };
        let hold = match self.holding {
            HoldingProfile::Constant => "hconst",
            HoldingProfile::HighLate => "hlate",
        };
        format!(
            "{bom}_{demand}_u{}_{st}_b{}_{hold}",
            (self.utilization * 100.0).round() as i64,
            self.backlog_ratio
        )
    }
}

/// The full cross product, in a fixed order.
pub fn grid() -> Vec<GridPoint> {
    let mut points = Vec::with_capacity(96);
    for bom in [BomKind::Assembly, BomKind::General] {
        for demand in [DemandType::EndItem, DemandType::Component] {
            for utilization in [0.5, 0.9] {
                for setup_times in [SetupTimes::None, SetupTimes::Short, SetupTimes::Long] {
                    for backlog_ratio in [2.0, 4.0] {
                        for holding in [HoldingProfile::Constant, HoldingProfile::HighLate] {
                            points.push(GridPoint {
                                bom,
                                demand,
                                utilization,
                                setup_times,
                                backlog_ratio,
                                holding,
                            });
                        }
                    }
                }
            }
        }
    }
    points
}

/// A production structure: arcs `(component, parent, quantity)` and the
/// items of each resource.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BomSpec {
    pub kind: BomKind,
    pub num_items: usize,
    pub arcs: Vec<(usize, usize, f64)>,
    pub resources: Vec<Vec<usize>>,
}

impl BomSpec {
    pub fn is_component(&self, item: usize) -> bool {
        self.arcs.iter().any(|&(c, _, _)| c == item)
    }

    pub fn parents_of(&self, item: usize) -> usize {
        self.arcs.iter().filter(|&&(c, _, _)| c == item).count()
    }
}

/// Ten-item, three-level assembly and general structures on three resources.
pub fn builtin_boms() -> (BomSpec, BomSpec) {
    let assembly = BomSpec {
        kind: BomKind::Assembly,
        num_items: 10,
        arcs: vec![
            (0, 4, 1.0),
            (1, 5, 1.0),
            (2, 6, 1.0),
            (3, 7, 1.0),
            (4, 8, 1.0),
            (5, 8, 1.0),
            (6, 9, 1.0),
            (7, 9, 1.0),
        ],
        resources: vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7], vec![8, 9]],
    };
    let general = BomSpec {
        kind: BomKind::General,
        num_items: 10,
        arcs: vec![
            (0, 4, 1.0),
            (1, 4, 1.0),
            (1, 5, 1.0),
            (2, 5, 1.0),
            (2, 6, 1.0),
            (3, 6, 1.0),
            (3, 7, 1.0),
            (0, 7, 1.0),
            (4, 8, 1.0),
            (5, 8, 1.0),
            (6, 8, 1.0),
            (5, 9, 1.0),
            (6, 9, 1.0),
            (7, 9, 1.0),
        ],
        resources: vec![vec![0, 2, 5, 8], vec![1, 3, 6], vec![4, 7, 9]],
    };
    (assembly, general)
}

/// Four-item, two-level structures on two resources for quick runs.
pub fn tiny_boms() -> (BomSpec, BomSpec) {
    let assembly = BomSpec {
        kind: BomKind::Assembly,
        num_items: 4,
        arcs: vec![(0, 2, 1.0), (1, 3, 1.0)],
        resources: vec![vec![0, 1], vec![2, 3]],
    };
    let general = BomSpec {
        kind: BomKind::General,
        num_items: 4,
        arcs: vec![(0, 2, 1.0), (1, 2, 1.0), (1, 3, 1.0)],
        resources: vec![vec![0, 1], vec![2, 3]],
    };
    (assembly, general)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub periods: usize,
    /// Use the four-item structures instead of the ten-item ones.
    pub tiny: bool,
    /// Inclusive range of base mean demands of externally demanded items.
    pub demand_range: (u32, u32),
    /// Component external demand relative to the end-item range.
    pub component_demand_scale: f64,
    pub setup_cost_range: (f64, f64),
    pub holding_base: f64,
    /// Setup time of the short profile; the long profile triples it.
    pub setup_time_base: f64,
    pub production_time: f64,
    pub production_cost: f64,
    /// Lost-sale cost as a multiple of the backlog cost.
    pub lost_sale_factor: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            periods: 7,
            tiny: false,
            demand_range: (40, 60),
            component_demand_scale: 0.25,
            setup_cost_range: (200.0, 600.0),
            holding_base: 1.0,
            setup_time_base: 10.0,
            production_time: 1.0,
            production_cost: 0.0,
            lost_sale_factor: 5.0,
        }
    }
}

impl GenConfig {
    pub fn tiny(periods: usize) -> Self {
        Self {
            periods,
            tiny: true,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedInstance {
    pub index: usize,
    pub point: GridPoint,
    pub instance: Instance,
}

/// Constant per-period capacity of each resource: expected production time
/// at mean demand, propagated through the structure, plus one setup per
/// item and period, divided by the target utilization.
pub fn calibrate_capacity(instance: &Instance, mean_demand: &[Vec<f64>], target_util: f64) -> Vec<f64> {
    let n = instance.num_items();
    let order = instance
        .parents_first_order()
        .expect("calibration needs an acyclic structure");
    let periods = instance.horizon.max(1) as f64;
    let mut load = vec![0.0; n];
    for &i in &order {
        let external: f64 = mean_demand.get(i).map_or(0.0, |row| row.iter().sum::<f64>() / periods);
        let internal: f64 = instance.bom.parents_of(i).map(|(j, r)| r * load[j]).sum();
        load[i] = external + internal;
    }
    (0..instance.num_resources())
        .map(|k| {
            let need: f64 = instance
                .items_on(k)
                .iter()
                .map(|&i| instance.items[i].production_time * load[i] + instance.items[i].setup_time)
                .sum();
            need / target_util
        })
        .collect()
}

fn draw_setup_cost(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi).round()
    } else {
        lo
    }
}

/// One instance of the grid. Random draws depend only on `seed` and
/// `index`.
pub fn generate_instance(point: GridPoint, config: &GenConfig, seed: u64, index: usize) -> Instance {
    let (assembly, general) = if config.tiny { tiny_boms() } else { builtin_boms() };
    let spec = match point.bom {
        BomKind::Assembly => assembly,
        BomKind::General => general,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);

    let n = spec.num_items;
    let mut resource_of = vec![0; n];
    for (k, members) in spec.resources.iter().enumerate() {
        for &i in members {
            resource_of[i] = k;
        }
    }
    let bom = Bom {
        entries: spec
            .arcs
            .iter()
            .map(|&(component, parent, quantity)| BomEntry {
                component,
                parent,
                quantity,
            })
            .collect(),
    };
    let setup_time = match point.setup_times {
        SetupTimes::None => 0.0,
        SetupTimes::Short => config.setup_time_base,
        SetupTimes::Long => 3.0 * config.setup_time_base,
    };
    let mut instance = Instance {
        format_version: FORMAT_VERSION,
        name: format!("{:02}_{}", index, point.label()),
        horizon: config.periods,
        items: Vec::with_capacity(n),
        bom,
        resources: spec
            .resources
            .iter()
            .enumerate()
            .map(|(k, _)| Resource {
                name: format!("r{k}"),
                capacity: vec![0.0; config.periods],
            })
            .collect(),
        mean_demand: Vec::new(),
    };
    for i in 0..n {
        let kind = if spec.is_component(i) { ItemKind::Component } else { ItemKind::EndItem };
        instance.items.push(Item {
            name: format!("item{i}"),
            kind,
            setup_cost: draw_setup_cost(&mut rng, config.setup_cost_range),
            setup_time,
            production_time: config.production_time,
            production_cost: config.production_cost,
            holding_cost: 0.0,
            backlog_cost: 0.0,
            lost_sale_cost: 0.0,
            lead_time: 0,
            initial_inventory: 0.0,
            resource: resource_of[i],
        });
    }
    let levels = instance.echelon_levels().expect("built-in structures are acyclic");
    let deepest = levels.iter().copied().max().unwrap_or(0);
    for (item, &level) in instance.items.iter_mut().zip(&levels) {
        let h = match point.holding {
            HoldingProfile::Constant => config.holding_base,
            HoldingProfile::HighLate => config.holding_base * 2f64.powi((deepest - level) as i32),
        };
        item.holding_cost = h;
        item.backlog_cost = point.backlog_ratio * h;
        item.lost_sale_cost = config.lost_sale_factor * item.backlog_cost;
    }
    let (lo, hi) = config.demand_range;
    let mean_demand: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..config.periods)
                .map(|_| {
                    let base = f64::from(rng.random_range(lo..=hi));
                    match (instance.items[i].kind, point.demand) {
                        (ItemKind::EndItem, _) => base,
                        (ItemKind::Component, DemandType::Component) => (base * config.component_demand_scale).round(),
                        (ItemKind::Component, DemandType::EndItem) => 0.0,
                    }
                })
                .collect()
        })
        .collect();
    let capacity = calibrate_capacity(&instance, &mean_demand, point.utilization);
    for (res, c) in instance.resources.iter_mut().zip(capacity) {
        res.capacity = vec![c; config.periods];
    }
    instance.mean_demand = mean_demand;
    instance
}

/// Every grid point, in grid order.
pub fn generate_suite(config: &GenConfig, seed: u64) -> Vec<GeneratedInstance> {
    grid()
        .into_iter()
        .enumerate()
        .map(|(index, point)| GeneratedInstance {
            index,
            point,
            instance: generate_instance(point, config, seed, index),
        })
        .collect()
}

/// Twelve grid points spanning utilization, demand type and setup-time
/// profile, alternating the production structure.
pub fn mini_suite(config: &GenConfig, seed: u64) -> Vec<GeneratedInstance> {
    let all = generate_suite(config, seed);
    let mut picked = Vec::with_capacity(12);
    let mut k = 0usize;
    for demand in [DemandType::EndItem, DemandType::Component] {
        for utilization in [0.5, 0.9] {
            for setup_times in [SetupTimes::None, SetupTimes::Short, SetupTimes::Long] {
                let bom = if k % 2 == 0 { BomKind::Assembly } else { BomKind::General };
                let holding = if k % 4 < 2 { HoldingProfile::Constant } else { HoldingProfile::HighLate };
                let ratio = if k % 3 == 0 { 4.0 } else { 2.0 };
                let found = all.iter().find(|g| {
                    g.point.bom == bom
                        && g.point.demand == demand
                        && g.point.utilization == utilization
                        && g.point.setup_times == setup_times
                        && g.point.holding == holding
                        && g.point.backlog_ratio == ratio
                });
                picked.push(found.expect("grid covers every combination").clone());
                k += 1;
            }
        }
    }
    picked
}
