//! LP-based branch and bound over the integer columns.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use crate::model::MilpModel;

use super::simplex::{solve_relaxation, LpOutcome, LpStatus, LpTolerances};
use super::{SolveResult, SolveStatus, SolverConfig};

/// One progress sample: global lower bound and incumbent after `nodes`
/// processed nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSample {
    pub nodes: usize,
    pub bound: f64,
    pub incumbent: f64,
}

struct Node {
    lower: Vec<f64>,
    upper: Vec<f64>,
    bound: f64,
    seq: usize,
}

/// Min-heap order on (bound, creation order).
struct ByBound(Node);

impl PartialEq for ByBound {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for ByBound {}
impl PartialOrd for ByBound {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for ByBound {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .bound
            .total_cmp(&self.0.bound)
            .then_with(|| other.0.seq.cmp(&self.0.seq))
    }
}

enum Pool {
    Dive(Vec<Node>),
    Best(BinaryHeap<ByBound>),
}

impl Pool {
    fn pop(&mut self) -> Option<Node> {
        match self {
            Pool::Dive(s) => s.pop(),
            Pool::Best(h) => h.pop().map(|b| b.0),
        }
    }

    fn push(&mut self, node: Node) {
        match self {
            Pool::Dive(s) => s.push(node),
            Pool::Best(h) => h.push(ByBound(node)),
        }
    }

    fn min_bound(&self) -> f64 {
        match self {
            Pool::Dive(s) => s.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min),
            Pool::Best(h) => h.peek().map_or(f64::INFINITY, |b| b.0.bound),
        }
    }

    fn len(&self) -> usize {
        match self {
            Pool::Dive(s) => s.len(),
            Pool::Best(h) => h.len(),
        }
    }

    fn into_best(self) -> Self {
        match self {
            Pool::Dive(s) => Pool::Best(s.into_iter().map(ByBound).collect()),
            best => best,
        }
    }
}

fn tolerances(config: &SolverConfig) -> LpTolerances {
    LpTolerances {
        feasibility: config.lp_feasibility_tol,
        optimality: config.lp_optimality_tol,
        pivot: 1e-9,
    }
}

/// Most fractional integer column, lowest index on ties.
fn branching_candidate(model: &MilpModel, x: &[f64], tol: f64) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64, f64)> = None;
    for (j, var) in model.variables.iter().enumerate() {
        if !var.integer {
            continue;
        }
        let frac = x[j] - x[j].floor();
        let dist = frac.min(1.0 - frac);
        if dist > tol && best.is_none_or(|(_, _, d)| dist > d + 1e-12) {
            best = Some((j, x[j], dist));
        }
    }
    best.map(|(j, v, _)| (j, v))
}

pub(crate) fn branch_and_bound(
    model: &MilpModel,
    config: &SolverConfig,
    start: Instant,
    mut trace: Option<&mut Vec<BoundSample>>,
) -> SolveResult {
    let deadline = start + std::time::Duration::from_secs_f64(config.time_limit);
    let tol = tolerances(config);
    let int_tol = config.integrality_tol;
    let mut nodes = 0usize;
    let mut seq = 0usize;
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut limit_hit = false;
    let mut pool = Pool::Dive(vec![Node {
        lower: model.variables.iter().map(|v| v.lower).collect(),
        upper: model.variables.iter().map(|v| v.upper).collect(),
        bound: f64::NEG_INFINITY,
        seq,
    }]);
    let mut last_bound = f64::NEG_INFINITY;
    let mut root_unbounded = false;

    let gap_tol = |inc: f64| config.mip_gap * inc.abs().max(1.0);

    while let Some(node) = pool.pop() {
        if Instant::now() >= deadline || nodes >= config.node_limit {
            pool.push(node);
            limit_hit = true;
            break;
        }
        if let Some((inc, _)) = &incumbent {
            if node.bound >= inc - gap_tol(*inc) {
                continue;
            }
        }
        nodes += 1;
        let LpOutcome { status, x, objective, .. } = solve_relaxation(model, &node.lower, &node.upper, tol, Some(deadline));
        match status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                if nodes == 1 {
                    root_unbounded = true;
                    break;
                }
                continue;
            }
            LpStatus::TimeLimit | LpStatus::IterationLimit => {
                pool.push(node);
                limit_hit = true;
                break;
            }
        }
        let bound = objective.max(node.bound);
        let pruned = incumbent.as_ref().is_some_and(|(inc, _)| bound >= inc - gap_tol(*inc));
        if !pruned {
            match branching_candidate(model, &x, int_tol) {
                None => {
                    let mut xr = x;
                    for (j, var) in model.variables.iter().enumerate() {
                        if var.integer {
                            xr[j] = xr[j].round();
                        }
                    }
                    let value = model.objective_value(&xr);
                    if incumbent.as_ref().is_none_or(|(inc, _)| value < *inc) {
                        let first = incumbent.is_none();
                        incumbent = Some((value, xr));
                        if first {
                            pool = pool.into_best();
                        }
                    }
                }
                Some((j, v)) => {
                    let mut down = Node {
                        lower: node.lower.clone(),
                        upper: node.upper.clone(),
                        bound,
                        seq: 0,
                    };
                    down.upper[j] = v.floor();
                    let mut up = Node {
                        lower: node.lower,
                        upper: node.upper,
                        bound,
                        seq: 0,
                    };
                    up.lower[j] = v.ceil();
                    // The dive explores the child on the nearer side first.
                    let children = if v - v.floor() >= 0.5 { [down, up] } else { [up, down] };
                    for mut child in children {
                        seq += 1;
                        child.seq = seq;
                        pool.push(child);
                    }
                }
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            let inc = incumbent.as_ref().map_or(f64::INFINITY, |(v, _)| *v);
            let global = pool.min_bound().min(inc);
            let global = global.max(last_bound);
            last_bound = global;
            t.push(BoundSample {
                nodes,
                bound: global,
                incumbent: inc,
            });
        }
    }

    let wall_time = start.elapsed().as_secs_f64();
    if root_unbounded {
        return SolveResult::without_solution(SolveStatus::Unbounded, nodes, wall_time, None);
    }
    let open_bound = pool.min_bound();
    match incumbent {
        Some((obj, values)) => {
            let bound = if pool.len() == 0 || !limit_hit { obj } else { open_bound.min(obj) };
            let gap = (obj - bound).max(0.0) / obj.abs().max(1.0);
            let status = if limit_hit && gap > config.mip_gap {
                SolveStatus::FeasibleLimit
            } else {
                SolveStatus::Optimal
            };
            SolveResult {
                status,
                objective: Some(obj),
                bound,
                gap,
                values,
                wall_time,
                nodes,
                message: None,
            }
        }
        None if limit_hit => SolveResult::without_solution(
            SolveStatus::Error,
            nodes,
            wall_time,
            Some("limit reached without a feasible solution".into()),
        ),
        None => SolveResult::without_solution(SolveStatus::Infeasible, nodes, wall_time, None),
    }
}
