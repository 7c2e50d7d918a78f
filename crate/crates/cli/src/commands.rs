use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use lotsizing::evaluation::{evaluate_plan, read_records_json, report_csv, report_json, RunRecord, aggregate_report};
use lotsizing::instance::{load_instance, save_instance};
use lotsizing::instance_gen::{generate_suite, DemandType, GenConfig, GridPoint};
use lotsizing::model::lp_format::read_lp_file;
use lotsizing::model::{
    build_compact_with, build_implicit_with, build_partial_implicit, CarryOver, ModelOptions, SetupPlan,
};
use lotsizing::progressive_hedging::{run_ph, ConsensusMode, PhConfig};
use lotsizing::scenario::{build_tree, load_tree, sample_path_subset, save_tree, LumpySampler, PartialTree};
use lotsizing::solver::{backend_from_name, export_lp_file, SolverConfig};
use lotsizing::{Execution, Instance, MilpModel, ScenarioTree};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::output::{to_value, write_json, write_text};
use crate::{
    CarryOverArg, Command, ConsensusArg, EvaluateArgs, GenAction, GenSuiteArgs, Mode, PhAction, PhRunArgs, ReportArgs,
    SolveArgs, Switch, TreeAction, TreeBuildArgs,
};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen {
            action: GenAction::Suite(args),
        } => cmd_gen(&args),
        Command::Tree {
            action: TreeAction::Build(args),
        } => cmd_tree(&args),
        Command::Solve(args) => cmd_solve(&args),
        Command::Ph {
            action: PhAction::Run(args),
        } => cmd_ph(&args),
        Command::Evaluate(args) => cmd_evaluate(&args),
        Command::Report(args) => cmd_report(&args),
    }
}

fn model_options(arg: CarryOverArg) -> ModelOptions {
    ModelOptions {
        carry_over: match arg {
            CarryOverArg::Exact => CarryOver::Exact,
            CarryOverArg::AtMostOne => CarryOver::AtMostOne,
        },
    }
}

fn load_pair(instance: &Path, tree: &Path) -> Result<(Instance, ScenarioTree)> {
    let inst = load_instance(instance)?;
    let tree = load_tree(tree)?;
    if tree.num_items != inst.num_items() || tree.horizon != inst.horizon {
        bail!(
            "tree is {} items x {} periods but the instance is {} x {}; rebuild the tree from this instance",
            tree.num_items,
            tree.horizon,
            inst.num_items(),
            inst.horizon
        );
    }
    Ok((inst, tree))
}

/// One manifest line per generated file.
#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    file: String,
    index: usize,
    instance: String,
    point: GridPoint,
}

fn cmd_gen(args: &GenSuiteArgs) -> Result<()> {
    let start = Instant::now();
    let mut config = if args.tiny { GenConfig::tiny(3) } else { GenConfig::default() };
    if let Some(periods) = args.periods {
        if periods == 0 {
            bail!("--periods must be at least 1");
        }
        config.periods = periods;
    }
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let suite = generate_suite(&config, args.seed);
    let mut entries = Vec::with_capacity(suite.len());
    for g in &suite {
        let file = format!("{}.json", g.instance.name);
        save_instance(&g.instance, args.out.join(&file))?;
        entries.push(ManifestEntry {
            file,
            index: g.index,
            instance: g.instance.name.clone(),
            point: g.point,
        });
    }
    write_json(
        &args.out.join("manifest.json"),
        json!({ "seed": args.seed, "config": config, "instances": entries }),
        json!({ "wall_time": start.elapsed().as_secs_f64() }),
    )?;
    println!("{}", json!({ "instances": suite.len(), "out": args.out }));
    Ok(())
}

fn cmd_tree(args: &TreeBuildArgs) -> Result<()> {
    let inst = load_instance(&args.instance)?;
    if let Some(periods) = args.periods {
        if periods != inst.horizon {
            bail!(
                "--periods {periods} does not match the instance horizon {}; drop the flag or regenerate with --periods {periods}",
                inst.horizon
            );
        }
    }
    let tree = build_tree(&inst, args.branching, &LumpySampler::from_instance(&inst), args.seed)?;
    save_tree(&tree, &args.out)?;
    println!(
        "{}",
        json!({ "paths": tree.num_paths(), "nodes": tree.num_nodes(), "out": args.out })
    );
    Ok(())
}

fn solver_config(time_limit: Option<f64>, mip_gap: Option<f64>) -> SolverConfig {
    let mut config = SolverConfig::default();
    if let Some(t) = time_limit {
        config.time_limit = t;
    }
    if let Some(g) = mip_gap {
        config.mip_gap = g;
    }
    config
}

fn build_model(args: &SolveArgs) -> Result<(MilpModel, Option<(usize, usize)>, Value)> {
    if let Some(path) = &args.model {
        return Ok((read_lp_file(path)?, None, json!({ "model": path })));
    }
    let (instance, tree) = match (&args.instance, &args.tree) {
        (Some(i), Some(t)) => (i, t),
        _ => bail!("pass --instance and --tree, or --model"),
    };
    let (inst, tree) = load_pair(instance, tree)?;
    let options = model_options(args.carry_over);
    let (model, paths) = match args.mode {
        Mode::Compact => (build_compact_with(&inst, &tree, options)?, tree.num_paths()),
        Mode::Implicit => (build_implicit_with(&inst, &tree, options)?, tree.num_paths()),
        Mode::Partial => {
            let n = args.paths.ok_or_else(|| anyhow!("--mode partial needs --paths"))?;
            let subset = sample_path_subset(&tree, n, args.seed)?;
            (build_partial_implicit(&inst, &tree, &subset)?, n)
        }
    };
    let info = json!({
        "instance": inst.name,
        "mode": format!("{:?}", args.mode).to_lowercase(),
        "paths": paths,
    });
    Ok((model, Some((inst.num_items(), inst.horizon)), info))
}

fn cmd_solve(args: &SolveArgs) -> Result<()> {
    let (model, dims, info) = build_model(args)?;
    if let Some(path) = &args.export_lp {
        export_lp_file(&model, path)?;
    }
    let backend = backend_from_name(args.backend.as_deref())?;
    let config = solver_config(args.time_limit, args.mip_gap);
    config.check()?;
    let result = backend.solve(&model, &config)?;
    if let Some(path) = &args.solution_out {
        let mut text = String::new();
        for (v, x) in model.variables.iter().zip(&result.values) {
            writeln!(text, "{} {x:.12}", v.name)?;
        }
        write_text(path, &text)?;
    }
    let plan = match dims {
        Some((items, periods)) if result.has_solution() => {
            Some(SetupPlan::from_solution(&model, &result.values, items, periods))
        }
        _ => None,
    };
    let mut body = info;
    let fields = body.as_object_mut().expect("object");
    fields.insert("backend".into(), json!(backend.name()));
    fields.insert("status".into(), to_value(&result.status)?);
    fields.insert("objective".into(), json!(result.objective));
    fields.insert("bound".into(), json!(finite(result.bound)));
    fields.insert("gap".into(), json!(finite(result.gap)));
    fields.insert("nodes".into(), json!(result.nodes));
    fields.insert("variables".into(), json!(model.num_vars()));
    fields.insert("constraints".into(), json!(model.num_constraints()));
    fields.insert("plan".into(), to_value(&plan)?);
    if let Some(m) = &result.message {
        fields.insert("message".into(), json!(m));
    }
    let timing = json!({ "wall_time": result.wall_time });
    println!(
        "{}",
        json!({ "status": result.status, "objective": result.objective, "nodes": result.nodes })
    );
    match &args.out {
        Some(path) => write_json(path, body, timing),
        None => Ok(()),
    }
}

/// JSON has no infinities.
fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn cmd_ph(args: &PhRunArgs) -> Result<()> {
    let (inst, tree) = load_pair(&args.instance, &args.tree)?;
    let partial = match args.paths {
        Some(n) => sample_path_subset(&tree, n, args.seed)?,
        None => PartialTree::full(&tree),
    };
    let defaults = PhConfig::default();
    let config = PhConfig {
        lambda: args.lambda,
        consensus: match args.consensus {
            ConsensusArg::Average => ConsensusMode::Average,
            ConsensusArg::Majority => ConsensusMode::Majority,
        },
        adjustments: args.adjustments == Switch::On,
        max_iterations: args.max_iterations.unwrap_or(defaults.max_iterations),
        time_limit: args.time_limit.unwrap_or(defaults.time_limit),
        model: model_options(args.carry_over),
        execution: Execution::with_workers(args.workers),
        ..defaults
    };
    let backend = backend_from_name(args.backend.as_deref())?;
    let report = run_ph(&inst, &tree, &partial, &config, backend.as_ref())?;
    let mut body = to_value(&report)?;
    let fields = body.as_object_mut().expect("object");
    let wall_time = fields.remove("wall_time").unwrap_or(Value::Null);
    fields.insert("instance".into(), json!(inst.name));
    fields.insert("lambda".into(), json!(args.lambda));
    fields.insert("paths".into(), json!(partial.paths));
    fields.insert("config".into(), to_value(&config)?);
    println!(
        "{}",
        json!({
            "converged": report.converged,
            "iterations": report.iterations,
            "setups": report.plan.count(),
        })
    );
    write_json(&args.out, body, json!({ "wall_time": wall_time }))
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// A bare plan, or the `plan` field of a command output.
fn read_plan(path: &Path) -> Result<(SetupPlan, Value)> {
    let doc = read_json(path)?;
    let plan_value = doc.get("plan").cloned().unwrap_or_else(|| doc.clone());
    let plan: SetupPlan = serde_json::from_value(plan_value)
        .with_context(|| format!("{} holds no setup plan", path.display()))?;
    Ok((plan, doc))
}

fn grid_point(manifest: &Path, instance: &str) -> Result<GridPoint> {
    let doc = read_json(manifest)?;
    let entries: Vec<ManifestEntry> = serde_json::from_value(doc.get("instances").cloned().unwrap_or(Value::Null))
        .with_context(|| format!("{} is not a suite manifest", manifest.display()))?;
    entries
        .into_iter()
        .find(|e| e.instance == instance)
        .map(|e| e.point)
        .ok_or_else(|| anyhow!("instance `{instance}` is not listed in {}", manifest.display()))
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let start = Instant::now();
    let (inst, tree) = load_pair(&args.instance, &args.tree)?;
    let (plan, source) = read_plan(&args.plan)?;
    let backend = backend_from_name(args.backend.as_deref())?;
    let ev = evaluate_plan(
        &inst,
        &tree,
        &plan,
        model_options(args.carry_over),
        &SolverConfig::default(),
        backend.as_ref(),
    )?;
    let reference = match &args.reference {
        Some(path) => {
            let doc = read_json(path)?;
            Some(
                doc.get("objective")
                    .and_then(Value::as_f64)
                    .ok_or_else(|| anyhow!("{} has no objective; pass a `solve --out` file", path.display()))?,
            )
        }
        None => None,
    };
    let delta = reference.map(|r| lotsizing::evaluation::cost_delta(ev.cost, r));
    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record(["instance", "cost", "optimal", "status", "bound", "reference_cost", "delta"])?;
    csv.write_record([
        inst.name.clone(),
        ev.cost.to_string(),
        ev.optimal.to_string(),
        format!("{:?}", ev.status).to_lowercase(),
        ev.bound.to_string(),
        reference.map(|r| r.to_string()).unwrap_or_default(),
        delta.map(|d| d.to_string()).unwrap_or_default(),
    ])?;
    let bytes = csv.into_inner().map_err(|e| anyhow!("csv: {}", e.error()))?;
    write_text(&args.out, &String::from_utf8(bytes)?)?;

    if let (Some(path), Some(reference)) = (&args.record_out, reference) {
        let (utilization, demand_type) = match &args.manifest {
            Some(m) => {
                let p = grid_point(m, &inst.name)?;
                (p.utilization, p.demand)
            }
            None => bail!("--record-out needs --manifest to classify the instance"),
        };
        let runtime = source
            .pointer("/timing/wall_time")
            .and_then(Value::as_f64)
            .unwrap_or(0.0);
        let lambda = source.get("lambda").and_then(Value::as_f64);
        let method = if lambda.is_some() { "ph" } else { source.get("mode").and_then(Value::as_str).unwrap_or("plan") };
        let converged = source.get("converged").and_then(Value::as_bool).unwrap_or(true);
        let iterations = source.get("iterations").and_then(Value::as_u64).unwrap_or(0) as usize;
        let record = RunRecord::new(
            inst.name.clone(),
            utilization,
            demand_type,
            lambda,
            method,
            runtime,
            ev.cost,
            reference,
            converged,
            iterations,
        );
        write_text(path, &(serde_json::to_string_pretty(&record)? + "\n"))?;
    }
    println!(
        "{}",
        json!({
            "cost": ev.cost,
            "optimal": ev.optimal,
            "delta": delta,
            "wall_time": start.elapsed().as_secs_f64(),
        })
    );
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let mut records = Vec::new();
    for path in &args.records {
        records.extend(read_records_json(path).with_context(|| format!("{} is not a run record", path.display()))?);
    }
    let rows = aggregate_report(&records);
    write_text(&args.out, &report_csv(&rows)?)?;
    if let Some(path) = &args.json {
        write_text(path, &(report_json(&rows)? + "\n"))?;
    }
    let groups: Vec<(f64, DemandType, Option<f64>)> =
        rows.iter().map(|r| (r.utilization, r.demand_type, r.lambda)).collect();
    println!("{}", json!({ "records": records.len(), "rows": rows.len(), "groups": groups }));
    Ok(())
}
