mod common;

use lotsizing::instance::{ItemKind, FORMAT_VERSION};
use lotsizing::model::lp_format::{export_lp, parse_lp};
use lotsizing::model::{
    build_compact, build_compact_with, build_implicit, build_implicit_with, build_partial_implicit, build_subproblem,
    fix_setup_plan, CarryOver, Decision, ModelOptions, PenaltyInputs, PenaltyMode, Scope, SetupPlan, SubproblemSpec,
    VarKind,
};
use lotsizing::scenario::{build_tree_with, sample_path_subset, PartialTree};
use lotsizing::solver::{solve, SolverConfig};
use lotsizing::{Instance, SolveStatus};
use proptest::prelude::*;
use rand_chacha::ChaCha8Rng;

use common::{exact, lumpy_tree, random_instance, sized_instance};

const AT_MOST_ONE: ModelOptions = ModelOptions {
    carry_over: CarryOver::AtMostOne,
};

fn single_item(demand: u32, setup: f64, unit: f64) -> (Instance, lotsizing::ScenarioTree) {
    let mut inst = sized_instance(1, 1, 1);
    inst.format_version = FORMAT_VERSION;
    inst.bom.entries.clear();
    let item = &mut inst.items[0];
    item.kind = ItemKind::EndItem;
    item.setup_cost = setup;
    item.production_cost = unit;
    item.setup_time = 0.0;
    item.lead_time = 0;
    item.initial_inventory = 0.0;
    item.resource = 0;
    inst.resources.truncate(1);
    inst.resources[0].capacity = vec![100.0];
    let tree = build_tree_with(1, 1, 1, &move |_: usize, _: usize, _: &mut ChaCha8Rng| demand, 0).unwrap();
    (inst, tree)
}

fn objective(model: &lotsizing::MilpModel) -> f64 {
    let r = solve(model, &exact()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal, "{}", model.name);
    r.objective.unwrap()
}

#[test]
fn single_setup_covers_single_demand() {
    let (inst, tree) = single_item(5, 50.0, 2.0);
    let model = build_compact_with(&inst, &tree, AT_MOST_ONE).unwrap();
    assert!((objective(&model) - (50.0 + 5.0 * 2.0)).abs() < 1e-6);
}

#[test]
fn free_initial_setup_state_under_exact_carry_over() {
    // With the equality the period-0 setup state is a free choice, so the
    // first period can produce without paying for a setup.
    let (inst, tree) = single_item(5, 50.0, 2.0);
    let model = build_compact(&inst, &tree).unwrap();
    assert!((objective(&model) - 5.0 * 2.0).abs() < 1e-6);
}

#[test]
fn zero_demand_costs_nothing() {
    for seed in 0..6 {
        let mut inst = random_instance(seed, 3, 3);
        for row in &mut inst.mean_demand {
            row.iter_mut().for_each(|d| *d = 0.0);
        }
        inst.items.iter_mut().for_each(|it| it.initial_inventory = 0.0);
        let tree = build_tree_with(inst.num_items(), inst.horizon, 2, &|_: usize, _: usize, _: &mut ChaCha8Rng| 0, 0)
            .unwrap();
        for options in [ModelOptions::default(), AT_MOST_ONE] {
            let model = build_compact_with(&inst, &tree, options).unwrap();
            let r = solve(&model, &exact()).unwrap();
            assert!(r.objective.unwrap().abs() < 1e-9);
            for (col, tag) in model.tags() {
                if tag.kind == VarKind::Decision(Decision::Y) || tag.kind == VarKind::Decision(Decision::Q) {
                    assert!(r.values[col].abs() < 1e-9, "{}", tag.name());
                }
            }
        }
    }
}

#[test]
fn compact_equals_implicit_on_two_items() {
    for seed in 0..4 {
        let inst = sized_instance(40 + seed, 2, 3);
        let tree = lumpy_tree(&inst, 2, seed);
        let a = objective(&build_compact(&inst, &tree).unwrap());
        let b = objective(&build_implicit(&inst, &tree).unwrap());
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        let a = objective(&build_compact_with(&inst, &tree, AT_MOST_ONE).unwrap());
        let b = objective(&build_implicit_with(&inst, &tree, AT_MOST_ONE).unwrap());
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn implicit_is_smaller_than_compact() {
    for (branching, horizon) in [(2, 2), (2, 3), (3, 2)] {
        let inst = sized_instance(3, 2, horizon);
        let tree = lumpy_tree(&inst, branching, 1);
        let c = build_compact(&inst, &tree).unwrap();
        let i = build_implicit(&inst, &tree).unwrap();
        assert!(i.num_vars() < c.num_vars());
    }
}

#[test]
fn single_path_implicit_has_no_path_scope() {
    let inst = sized_instance(5, 2, 3);
    let tree = lumpy_tree(&inst, 1, 5);
    let model = build_implicit(&inst, &tree).unwrap();
    assert!(model.tags().all(|(_, t)| !matches!(t.scope, Scope::Path(_))));
}

#[test]
fn full_partial_model_is_the_implicit_model() {
    let inst = sized_instance(8, 2, 2);
    let tree = lumpy_tree(&inst, 2, 8);
    let implicit = build_implicit(&inst, &tree).unwrap();
    let partial = build_partial_implicit(&inst, &tree, &PartialTree::full(&tree)).unwrap();
    assert_eq!(implicit.variables, partial.variables);
    assert_eq!(implicit.constraints, partial.constraints);
}

#[test]
fn partial_plan_is_no_better_on_the_full_tree() {
    for seed in 0..4 {
        let inst = sized_instance(60 + seed, 2, 3);
        let tree = lumpy_tree(&inst, 2, seed);
        let full = objective(&build_implicit(&inst, &tree).unwrap());
        let subset = sample_path_subset(&tree, 3, seed).unwrap();
        let model = build_partial_implicit(&inst, &tree, &subset).unwrap();
        let r = solve(&model, &exact()).unwrap();
        let plan = SetupPlan::from_solution(&model, &r.values, inst.num_items(), inst.horizon);
        let fixed = fix_setup_plan(&build_implicit(&inst, &tree).unwrap(), &plan).unwrap();
        assert!(objective(&fixed) >= full - 1e-6);
    }
}

#[test]
fn fixing_the_optimal_plan_reproduces_the_optimum() {
    for seed in 0..5 {
        let inst = random_instance(70 + seed, 3, 3);
        let tree = lumpy_tree(&inst, 2, seed);
        let compact = build_compact(&inst, &tree).unwrap();
        let r = solve(&compact, &exact()).unwrap();
        let plan = SetupPlan::from_solution(&compact, &r.values, inst.num_items(), inst.horizon);
        let fixed = fix_setup_plan(&compact, &plan).unwrap();
        assert!((objective(&fixed) - r.objective.unwrap()).abs() < 1e-6);
    }
}

#[test]
fn zero_plan_pays_backlog_and_lost_sales() {
    for seed in 0..5 {
        let inst = random_instance(80 + seed, 3, 3);
        let tree = lumpy_tree(&inst, 2, seed);
        let model = build_implicit_with(&inst, &tree, AT_MOST_ONE).unwrap();
        let plan = SetupPlan::zeros(inst.num_items(), inst.horizon);
        let got = objective(&fix_setup_plan(&model, &plan).unwrap());
        // Nothing can be produced: inventory runs down from the initial
        // stock and the rest of cumulative demand is backlogged.
        let mut expected = 0.0;
        for path in 0..tree.num_paths() {
            let demand = tree.path_demand(path);
            let mut cost = 0.0;
            for (i, item) in inst.items.iter().enumerate() {
                let mut cum = 0.0;
                for t in 0..inst.horizon {
                    cum += demand[i][t];
                    let net = item.initial_inventory - cum;
                    let (stock, short) = (net.max(0.0), (-net).max(0.0));
                    cost += item.holding_cost * stock;
                    cost += short * if t + 1 == inst.horizon { item.lost_sale_cost } else { item.backlog_cost };
                }
            }
            expected += tree.path_probability(path) * cost;
        }
        assert!((got - expected).abs() < 1e-6, "seed {seed}: {got} vs {expected}");
    }
}

#[test]
fn any_plan_has_recourse() {
    for seed in 0..5 {
        let inst = random_instance(90 + seed, 3, 3);
        let tree = lumpy_tree(&inst, 2, seed);
        let model = build_implicit(&inst, &tree).unwrap();
        let mut plan = SetupPlan::zeros(inst.num_items(), inst.horizon);
        for (k, row) in plan.setups.iter_mut().enumerate() {
            for (t, y) in row.iter_mut().enumerate() {
                *y = ((k + t + seed as usize) % 2) as u8;
            }
        }
        let r = solve(&fix_setup_plan(&model, &plan).unwrap(), &exact()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
    }
}

#[test]
fn optimal_solutions_respect_carry_over_and_backlog_limits() {
    for seed in 0..6 {
        let inst = random_instance(110 + seed, 3, 3);
        let tree = lumpy_tree(&inst, 2, seed);
        let model = build_compact(&inst, &tree).unwrap();
        let r = solve(&model, &exact()).unwrap();
        let values = r.values_by_ref(&model);
        for path in 0..tree.num_paths() {
            for t in 1..inst.horizon {
                for k in 0..inst.num_resources() {
                    let tokens: f64 = inst
                        .items_on(k)
                        .iter()
                        .map(|&i| {
                            values
                                .iter()
                                .find(|(tag, _)| {
                                    tag.kind == VarKind::Decision(Decision::Z)
                                        && tag.item == i
                                        && tag.period == t
                                        && tag.scope == Scope::Path(path)
                                })
                                .map_or(0.0, |(_, v)| *v)
                        })
                        .sum();
                    assert!((tokens - 1.0).abs() < 1e-6, "resource {k} period {t}: {tokens}");
                }
            }
            for i in (0..inst.num_items()).filter(|&i| inst.is_component(i)) {
                let demand = tree.path_demand(path);
                let mut cum = 0.0;
                for t in 0..inst.horizon {
                    cum += demand[i][t];
                    let b = values
                        .iter()
                        .find(|(tag, _)| {
                            tag.kind == VarKind::Decision(Decision::B)
                                && tag.item == i
                                && tag.period == t
                                && tag.scope == Scope::Path(path)
                        })
                        .map_or(0.0, |(_, v)| *v);
                    assert!(b <= cum + 1e-6);
                }
            }
        }
    }
}

#[test]
fn demand_based_big_m_keeps_the_optimum() {
    for seed in 0..4 {
        let inst = random_instance(130 + seed, 2, 3);
        let tree = lumpy_tree(&inst, 2, seed);
        let tight = build_implicit(&inst, &tree).unwrap();
        let mut loose = tight.clone();
        // Widen every forcing row and production bound to 1e6.
        let m = inst.big_m_table(Some(&tree.demand_cap())).unwrap();
        for c in &mut loose.constraints {
            if c.name.starts_with("force") {
                for term in c.terms.iter_mut().skip(1) {
                    term.1 = -1e6;
                }
            }
        }
        for v in &mut loose.variables {
            if v.tag.is_some_and(|t| t.kind == VarKind::Decision(Decision::Q)) {
                v.upper = 1e6;
            }
        }
        // A setup at integrality tolerance times 1e6 would buy real output.
        let config = SolverConfig {
            integrality_tol: 1e-10,
            ..exact()
        };
        let a = solve(&tight, &config).unwrap().objective.unwrap();
        let wide = solve(&loose, &config).unwrap();
        let b = wide.objective.unwrap();
        for (j, tag) in loose.tags() {
            if tag.kind == VarKind::Decision(Decision::Q) {
                assert!(wide.values[j] <= m[tag.item][tag.period] + 1e-6, "{} exceeds its big-M", loose.variables[j].name);
            }
        }
        assert!((a - b).abs() < 1e-5 * a.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn lp_round_trip_of_built_models() {
    let inst = random_instance(150, 3, 2);
    let tree = lumpy_tree(&inst, 2, 1);
    for model in [build_compact(&inst, &tree).unwrap(), build_implicit(&inst, &tree).unwrap()] {
        let back = parse_lp(&export_lp(&model)).unwrap();
        assert_eq!(back.num_vars(), model.num_vars());
        assert_eq!(back.num_constraints(), model.num_constraints());
        for (a, b) in model.constraints.iter().zip(&back.constraints) {
            assert_eq!(a.terms, b.terms);
            assert_eq!(a.rhs, b.rhs);
        }
        let r = solve(&model, &exact()).unwrap();
        assert_eq!(model.objective_value(&r.values), back.objective_value(&r.values));
    }
}

#[test]
fn zero_penalty_subproblem_is_the_path_model() {
    let inst = sized_instance(160, 2, 3);
    let tree = lumpy_tree(&inst, 2, 4);
    let costs: Vec<Vec<f64>> = inst.items.iter().map(|it| vec![it.setup_cost; inst.horizon]).collect();
    let layout = lotsizing::model::DecisionLayout::new(inst.num_items(), inst.horizon);
    let zeros = vec![0.0; layout.len()];
    for path in [0, 5] {
        let plain = build_subproblem(
            &inst,
            &tree,
            &SubproblemSpec {
                path,
                setup_costs: &costs,
                penalty: None,
                mode: PenaltyMode::Linearized,
                options: ModelOptions::default(),
            },
        )
        .unwrap();
        let zero = build_subproblem(
            &inst,
            &tree,
            &SubproblemSpec {
                path,
                setup_costs: &costs,
                penalty: Some(PenaltyInputs {
                    consensus: &zeros,
                    multipliers: &zeros,
                    rho: &zeros,
                }),
                mode: PenaltyMode::Linearized,
                options: ModelOptions::default(),
            },
        )
        .unwrap();
        // A one-path tree with that path's demand is the deterministic model.
        let demand = tree.path_demand(path);
        let one = build_tree_with(
            inst.num_items(),
            inst.horizon,
            1,
            &move |i: usize, t: usize, _: &mut ChaCha8Rng| demand[i][t] as u32,
            0,
        )
        .unwrap();
        let det = objective(&build_implicit(&inst, &one).unwrap());
        assert!((objective(&plain) - det).abs() < 1e-6);
        assert!((objective(&zero) - det).abs() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn binary_penalties_agree_across_modes(xt in 0u8..=1, x in 0u8..=1, rho in 0.0f64..50.0, lam in -5.0f64..5.0) {
        // Closed forms of the two penalty encodings at a binary point.
        let (x, xt) = (f64::from(x), f64::from(xt));
        let quadratic = lam * (x - xt) + rho / 2.0 * (x - xt).powi(2);
        let linearized = lam * (x - xt) + rho / 2.0 * ((1.0 - 2.0 * xt) * x + xt * xt);
        prop_assert!((quadratic - linearized).abs() < 1e-9);
    }

    #[test]
    fn compact_and_implicit_agree(seed in 1000u64..2000) {
        let inst = random_instance(seed, 2, 2);
        let tree = lumpy_tree(&inst, 2, seed);
        let a = objective(&build_compact(&inst, &tree).unwrap());
        let b = objective(&build_implicit(&inst, &tree).unwrap());
        prop_assert!((a - b).abs() < 1e-6);
    }
}
