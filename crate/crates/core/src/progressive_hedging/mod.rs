//! Progressive hedging over scenario paths with cost-proportional penalty
//! weights, setup-cost and penalty adjustments, averaging or majority
//! consensus, and cycle escalation.

mod run;

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::Instance;
use crate::model::{Decision, DecisionLayout, ModelError, ModelOptions, PenaltyMode};
use crate::parallel::Execution;
use crate::scenario::ScenarioTree;
use crate::solver::{SolveStatus, SolverConfig, SolverError};

pub use run::{run_ph, run_ph_full, run_ph_states, IterationTrace, PhReport};

#[derive(Debug, Error)]
pub enum PhError {
    #[error("invalid PH config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("subproblem of path {path} ended with status {status:?}")]
    Subproblem { path: usize, status: SolveStatus },
    #[error("missing solution for path {0}")]
    MissingPath(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusMode {
    /// Probability-weighted mean over the paths sharing a node.
    #[default]
    Average,
    /// Mean, then setups and carry-overs rounded (at most 0.5 goes to 0).
    Majority,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhConfig {
    pub lambda: f64,
    pub consensus: ConsensusMode,
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Seconds.
    pub time_limit: f64,
    pub adjustments: bool,
    pub theta_low: f64,
    pub theta_high: f64,
    pub gamma_f: f64,
    pub lambda_global: f64,
    pub lambda_local: f64,
    pub cycle_window: usize,
    pub cycle_factor: f64,
    pub penalty_mode: PenaltyMode,
    /// Penalty base for zero-cost columns other than carry-overs, which use
    /// the item's setup cost.
    pub rho_floor: f64,
    pub model: ModelOptions,
    pub solver: SolverConfig,
    pub execution: Execution,
}

impl Default for PhConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            consensus: ConsensusMode::Average,
            epsilon: 1e-4,
            max_iterations: 500,
            time_limit: 10_800.0,
            adjustments: true,
            theta_low: 0.4,
            theta_high: 0.6,
            gamma_f: 0.8,
            lambda_global: 1.1,
            lambda_local: 1.5,
            cycle_window: 10,
            cycle_factor: 10.0,
            penalty_mode: PenaltyMode::Linearized,
            rho_floor: 1.0,
            model: ModelOptions::default(),
            solver: SolverConfig::default(),
            execution: Execution::default(),
        }
    }
}

impl PhConfig {
    pub fn check(&self) -> Result<(), PhError> {
        let fail = |m: &str| Err(PhError::Config(m.into()));
        if !(self.lambda > 0.0) {
            return fail("lambda must be positive");
        }
        if !(self.epsilon > 0.0) {
            return fail("epsilon must be positive");
        }
        if !(0.0 < self.theta_low && self.theta_low < 0.5 && 0.5 < self.theta_high && self.theta_high < 1.0) {
            return fail("thresholds need 0 < theta_low < 0.5 < theta_high < 1");
        }
        if !(0.5 < self.gamma_f && self.gamma_f < 1.0) {
            return fail("gamma_f must lie in (0.5, 1)");
        }
        if !(self.lambda_global > 1.0 && self.lambda_local > 1.0) {
            return fail("adjustment factors must exceed 1");
        }
        if !(self.cycle_factor > 1.0) || self.cycle_window == 0 {
            return fail("cycle escalation needs a window and a factor above 1");
        }
        if !(self.rho_floor > 0.0) {
            return fail("rho_floor must be positive");
        }
        if self.max_iterations == 0 || !(self.time_limit > 0.0) {
            return fail("iteration and time limits must be positive");
        }
        Ok(())
    }
}

/// Penalty weights `lambda * objective coefficient` over the decision
/// layout. Columns without a cost use `rho_floor`, carry-overs the item's
/// setup cost.
pub fn init_rho_cost_proportional(instance: &Instance, lambda: f64, rho_floor: f64) -> Vec<f64> {
    let layout = DecisionLayout::new(instance.num_items(), instance.horizon);
    let last = instance.horizon.saturating_sub(1);
    let mut rho = vec![0.0; layout.len()];
    for (k, d, i, t) in layout.iter() {
        let it = &instance.items[i];
        let coef = match d {
            Decision::Y => it.setup_cost,
            Decision::Z => it.setup_cost,
            Decision::Q => it.production_cost,
            Decision::I => it.holding_cost,
            Decision::B if t < last => it.backlog_cost,
            Decision::B => it.lost_sale_cost,
        };
        let coef = if coef > 0.0 { coef } else { rho_floor };
        rho[k] = lambda * coef;
    }
    rho
}

/// Consensus of each included path, `consensus[p][k]`, where `p` indexes
/// `paths`. Decisions are averaged with weights `weights` over the paths
/// sharing the node of their information set.
pub fn compute_consensus(
    tree: &ScenarioTree,
    layout: DecisionLayout,
    paths: &[usize],
    weights: &[f64],
    solutions: &[Vec<f64>],
    mode: ConsensusMode,
) -> Result<Vec<Vec<f64>>, PhError> {
    if solutions.len() != paths.len() || weights.len() != paths.len() {
        return Err(PhError::MissingPath(paths.get(solutions.len()).copied().unwrap_or(0)));
    }
    let mut out = vec![vec![0.0; layout.len()]; paths.len()];
    let mut groups: HashMap<usize, (f64, f64)> = HashMap::new();
    let mut node_of = vec![0usize; paths.len()];
    for (k, d, _, t) in layout.iter() {
        let depth = d.information_depth(t).min(tree.horizon);
        groups.clear();
        for (p, &path) in paths.iter().enumerate() {
            let node = tree.path_node(path, depth);
            node_of[p] = node;
            let e = groups.entry(node).or_insert((0.0, 0.0));
            e.0 += weights[p];
            e.1 += weights[p] * solutions[p][k];
        }
        for p in 0..paths.len() {
            let (w, s) = groups[&node_of[p]];
            let mean = if w > 0.0 { s / w } else { solutions[p][k] };
            out[p][k] = match mode {
                ConsensusMode::Majority if d.is_binary() => round_vote(mean),
                _ => mean,
            };
        }
    }
    Ok(out)
}

/// Majority vote on a mean in `[0, 1]`: `[0, 0.5]` maps to 0.
pub fn round_vote(mean: f64) -> f64 {
    if mean > 0.5 {
        1.0
    } else {
        0.0
    }
}

/// `multipliers += rho * (x - consensus)`, per path and column.
pub fn update_multipliers(multipliers: &mut [Vec<f64>], rho: &[Vec<f64>], solutions: &[Vec<f64>], consensus: &[Vec<f64>]) {
    for (((lam, r), x), c) in multipliers.iter_mut().zip(rho).zip(solutions).zip(consensus) {
        for k in 0..lam.len() {
            lam[k] += r[k] * (x[k] - c[k]);
        }
    }
}

/// Raises setup costs where few paths set up and lowers them where most do.
/// Only strictly fractional means are adjusted.
pub fn apply_global_adjustment(
    setup_costs: &mut [Vec<f64>],
    mean_setups: &[Vec<f64>],
    theta_low: f64,
    theta_high: f64,
    factor: f64,
) {
    for (costs, means) in setup_costs.iter_mut().zip(mean_setups) {
        for (s, &y) in costs.iter_mut().zip(means) {
            if y <= 0.0 || y >= 1.0 {
                continue;
            }
            if y < theta_low {
                *s *= factor;
            } else if y > theta_high {
                *s /= factor;
            }
        }
    }
}

/// Multiplies the setup penalty of a path by `factor` where its setup
/// deviates from the consensus by at least `gamma_f`.
pub fn apply_local_adjustment(
    rho: &mut [Vec<f64>],
    solutions: &[Vec<f64>],
    consensus: &[Vec<f64>],
    layout: DecisionLayout,
    gamma_f: f64,
    factor: f64,
) {
    for ((r, x), c) in rho.iter_mut().zip(solutions).zip(consensus) {
        for i in 0..layout.items {
            for t in 0..layout.periods {
                let k = layout.index(Decision::Y, i, t);
                if (x[k] - c[k]).abs() >= gamma_f {
                    r[k] *= factor;
                }
            }
        }
    }
}

/// Largest setup deviation from the consensus over all paths.
pub fn max_setup_deviation(solutions: &[Vec<f64>], consensus: &[Vec<f64>], layout: DecisionLayout) -> f64 {
    let mut worst: f64 = 0.0;
    for (x, c) in solutions.iter().zip(consensus) {
        for i in 0..layout.items {
            for t in 0..layout.periods {
                let k = layout.index(Decision::Y, i, t);
                worst = worst.max((x[k] - c[k]).abs());
            }
        }
    }
    worst
}

pub fn check_convergence(solutions: &[Vec<f64>], consensus: &[Vec<f64>], layout: DecisionLayout, epsilon: f64) -> bool {
    max_setup_deviation(solutions, consensus, layout) <= epsilon
}

/// Consensus setups rounded to three decimals.
pub type Fingerprint = Vec<i64>;

pub fn fingerprint(mean_setups: &[Vec<f64>]) -> Fingerprint {
    mean_setups
        .iter()
        .flatten()
        .map(|&y| (y * 1000.0).round() as i64)
        .collect()
}

/// Detects a return of the consensus to a state seen within the last
/// `window` iterations. A consensus that stays put without converging
/// counts as a repeat.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleDetector {
    pub window: usize,
    history: VecDeque<Fingerprint>,
}

impl CycleDetector {
    pub fn new(window: usize) -> Self {
        Self {
            window,
            history: VecDeque::new(),
        }
    }

    /// Records `fp`; true when it closes a cycle.
    pub fn observe(&mut self, fp: Fingerprint) -> bool {
        let cycle = self.history.iter().any(|h| *h == fp);
        self.history.push_back(fp);
        while self.history.len() > self.window {
            self.history.pop_front();
        }
        cycle
    }

    pub fn clear(&mut self) {
        self.history.clear();
    }
}

/// Multiplies every penalty weight by `factor`.
pub fn escalate(rho: &mut [Vec<f64>], factor: f64) {
    for r in rho.iter_mut().flatten() {
        *r *= factor;
    }
}

/// Coordinator state between iterations. Per-path vectors are indexed by
/// position in `paths`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhState {
    pub iteration: usize,
    pub paths: Vec<usize>,
    pub weights: Vec<f64>,
    pub solutions: Vec<Vec<f64>>,
    pub consensus: Vec<Vec<f64>>,
    /// Probability-weighted setup means before any rounding, items x periods.
    pub mean_setups: Vec<Vec<f64>>,
    pub multipliers: Vec<Vec<f64>>,
    pub rho: Vec<Vec<f64>>,
    pub setup_costs: Vec<Vec<f64>>,
    pub cycles: CycleDetector,
    pub forced: bool,
    pub escalations: usize,
}

impl PhState {
    pub fn new(instance: &Instance, paths: Vec<usize>, weights: Vec<f64>, config: &PhConfig) -> Self {
        let layout = DecisionLayout::new(instance.num_items(), instance.horizon);
        let rho0 = init_rho_cost_proportional(instance, config.lambda, config.rho_floor);
        let n = paths.len();
        Self {
            iteration: 0,
            paths,
            weights,
            solutions: Vec::new(),
            consensus: Vec::new(),
            mean_setups: vec![vec![0.0; instance.horizon]; instance.num_items()],
            multipliers: vec![vec![0.0; layout.len()]; n],
            rho: vec![rho0; n],
            setup_costs: instance
                .items
                .iter()
                .map(|it| vec![it.setup_cost; instance.horizon])
                .collect(),
            cycles: CycleDetector::new(config.cycle_window),
            forced: false,
            escalations: 0,
        }
    }

    /// Fingerprint check; escalates the penalty weights on a cycle.
    pub fn detect_cycle_and_escalate(&mut self, factor: f64) -> bool {
        if self.cycles.observe(fingerprint(&self.mean_setups)) {
            escalate(&mut self.rho, factor);
            self.forced = true;
            self.escalations += 1;
            self.cycles.clear();
            true
        } else {
            false
        }
    }
}

/// Setup means (items x periods) read from the averaged consensus of any
/// path; setups are global so every path holds the same value.
pub(crate) fn setup_means(layout: DecisionLayout, averaged: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let first = &averaged[0];
    (0..layout.items)
        .map(|i| (0..layout.periods).map(|t| first[layout.index(Decision::Y, i, t)]).collect())
        .collect()
}
