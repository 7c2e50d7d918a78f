use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::instance::Instance;
use crate::model::{path_decisions, price_subproblem, scenario_base, DecisionLayout, MilpModel, PenaltyInputs, SetupPlan, SubproblemSpec};
use crate::scenario::{PartialTree, ScenarioTree};
use crate::solver::{Backend, SolveStatus};

use super::{
    apply_global_adjustment, apply_local_adjustment, compute_consensus, max_setup_deviation, setup_means,
    update_multipliers, ConsensusMode, PhConfig, PhError, PhState,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration: usize,
    pub max_setup_deviation: f64,
    /// Largest deviation over all decisions (not gating).
    pub max_other_deviation: f64,
    pub subproblem_objectives: Vec<f64>,
    pub escalated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhReport {
    pub converged: bool,
    pub forced: bool,
    pub escalations: usize,
    pub iterations: usize,
    /// Seconds.
    pub wall_time: f64,
    pub plan: SetupPlan,
    /// Probability-weighted sum of the unpenalized first-iteration
    /// subproblem optima.
    pub wait_and_see_bound: f64,
    pub trace: Vec<IterationTrace>,
}

struct PathSolution {
    decisions: Vec<f64>,
    objective: f64,
}

fn solve_all(
    bases: &[MilpModel],
    state: &PhState,
    layout: DecisionLayout,
    config: &PhConfig,
    backend: &dyn Backend,
    penalized: bool,
) -> Result<Vec<PathSolution>, PhError> {
    let jobs: Vec<usize> = (0..bases.len()).collect();
    let results = config.execution.map(&jobs, |&p| -> Result<PathSolution, PhError> {
        let path = state.paths[p];
        let spec = SubproblemSpec {
            path,
            setup_costs: &state.setup_costs,
            penalty: penalized.then(|| PenaltyInputs {
                consensus: &state.consensus[p],
                multipliers: &state.multipliers[p],
                rho: &state.rho[p],
            }),
            mode: config.penalty_mode,
            options: config.model,
        };
        let model = price_subproblem(&bases[p], &spec)?;
        let result = backend.solve(&model, &config.solver)?;
        match (result.status, result.objective) {
            (SolveStatus::Optimal | SolveStatus::FeasibleLimit, Some(objective)) => Ok(PathSolution {
                decisions: path_decisions(&model, layout, path, &result.values)?,
                objective,
            }),
            (status, _) => Err(PhError::Subproblem { path, status }),
        }
    });
    results.into_iter().collect()
}

/// Solves every subproblem of the current iteration and recomputes the
/// consensus. Returns the subproblem objectives.
fn solve_and_agree(
    state: &mut PhState,
    bases: &[MilpModel],
    tree: &ScenarioTree,
    layout: DecisionLayout,
    config: &PhConfig,
    backend: &dyn Backend,
) -> Result<Vec<f64>, PhError> {
    let solved = solve_all(bases, state, layout, config, backend, state.iteration > 1)?;
    let objectives = solved.iter().map(|s| s.objective).collect();
    state.solutions = solved.into_iter().map(|s| s.decisions).collect();
    let averaged = compute_consensus(
        tree,
        layout,
        &state.paths,
        &state.weights,
        &state.solutions,
        ConsensusMode::Average,
    )?;
    state.mean_setups = setup_means(layout, &averaged);
    state.consensus = match config.consensus {
        ConsensusMode::Average => averaged,
        ConsensusMode::Majority => compute_consensus(
            tree,
            layout,
            &state.paths,
            &state.weights,
            &state.solutions,
            ConsensusMode::Majority,
        )?,
    };
    Ok(objectives)
}

/// Adjustments, multiplier update and cycle check between two iterations.
/// Returns whether the penalty weights were escalated.
fn prepare_next(state: &mut PhState, layout: DecisionLayout, config: &PhConfig) -> bool {
    if config.adjustments {
        apply_global_adjustment(
            &mut state.setup_costs,
            &state.mean_setups,
            config.theta_low,
            config.theta_high,
            config.lambda_global,
        );
        apply_local_adjustment(
            &mut state.rho,
            &state.solutions,
            &state.consensus,
            layout,
            config.gamma_f,
            config.lambda_local,
        );
    }
    update_multipliers(&mut state.multipliers, &state.rho, &state.solutions, &state.consensus);
    state.detect_cycle_and_escalate(config.cycle_factor)
}

fn setup(
    instance: &Instance,
    tree: &ScenarioTree,
    partial: &PartialTree,
    config: &PhConfig,
) -> Result<(Vec<MilpModel>, PhState), PhError> {
    config.check()?;
    if partial.is_empty() || partial.paths.len() != partial.probabilities.len() {
        return Err(PhError::Config("path subset needs one probability per path".into()));
    }
    let bases = config
        .execution
        .map(&partial.paths, |&path| scenario_base(instance, tree, path, config.model))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let state = PhState::new(instance, partial.paths.clone(), partial.probabilities.clone(), config);
    Ok((bases, state))
}

/// Runs progressive hedging on the paths of `partial`.
pub fn run_ph(
    instance: &Instance,
    tree: &ScenarioTree,
    partial: &PartialTree,
    config: &PhConfig,
    backend: &dyn Backend,
) -> Result<PhReport, PhError> {
    let start = Instant::now();
    let layout = DecisionLayout::new(instance.num_items(), instance.horizon);
    let (bases, mut state) = setup(instance, tree, partial, config)?;
    let mut trace = Vec::new();
    let mut wait_and_see = 0.0;
    let converged = loop {
        state.iteration += 1;
        let objectives = solve_and_agree(&mut state, &bases, tree, layout, config, backend)?;
        if state.iteration == 1 {
            wait_and_see = objectives.iter().zip(&state.weights).map(|(o, w)| o * w).sum();
        }
        let setup_dev = max_setup_deviation(&state.solutions, &state.consensus, layout);
        let other_dev = state
            .solutions
            .iter()
            .zip(&state.consensus)
            .flat_map(|(x, c)| x.iter().zip(c).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        let mut entry = IterationTrace {
            iteration: state.iteration,
            max_setup_deviation: setup_dev,
            max_other_deviation: other_dev,
            subproblem_objectives: objectives,
            escalated: false,
        };
        let converged = setup_dev <= config.epsilon;
        let out_of_budget =
            state.iteration >= config.max_iterations || start.elapsed().as_secs_f64() >= config.time_limit;
        if !converged && !out_of_budget {
            entry.escalated = prepare_next(&mut state, layout, config);
        }
        trace.push(entry);
        if converged || out_of_budget {
            break converged;
        }
    };

    Ok(PhReport {
        converged,
        forced: state.forced,
        escalations: state.escalations,
        iterations: state.iteration,
        wall_time: start.elapsed().as_secs_f64(),
        plan: SetupPlan::from_rounded(&state.mean_setups),
        wait_and_see_bound: wait_and_see,
        trace,
    })
}

/// Runs exactly `iterations` iterations without a convergence stop and
/// returns the state after each one (after its multiplier update).
pub fn run_ph_states(
    instance: &Instance,
    tree: &ScenarioTree,
    partial: &PartialTree,
    config: &PhConfig,
    backend: &dyn Backend,
    iterations: usize,
) -> Result<Vec<PhState>, PhError> {
    let layout = DecisionLayout::new(instance.num_items(), instance.horizon);
    let (bases, mut state) = setup(instance, tree, partial, config)?;
    let mut states = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        state.iteration += 1;
        solve_and_agree(&mut state, &bases, tree, layout, config, backend)?;
        prepare_next(&mut state, layout, config);
        states.push(state.clone());
    }
    Ok(states)
}

/// Runs progressive hedging on every path of `tree`.
pub fn run_ph_full(
    instance: &Instance,
    tree: &ScenarioTree,
    config: &PhConfig,
    backend: &dyn Backend,
) -> Result<PhReport, PhError> {
    run_ph(instance, tree, &PartialTree::full(tree), config, backend)
}

