//! Dense-tableau bounded-variable primal simplex.
//!
//! The LP `min c'x, rows, l <= x <= u` is brought to `A x = b, b >= 0,
//! 0 <= x <= u` by shifting, flipping and splitting columns and adding one
//! slack per inequality. Rows whose slack cannot start basic get an
//! artificial column; phase one drives those to zero.

use std::time::Instant;

use crate::model::{MilpModel, Sense};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    TimeLimit,
}

#[derive(Debug, Clone)]
pub struct LpOutcome {
    pub status: LpStatus,
    /// Column values in the model's space; meaningful when optimal.
    pub x: Vec<f64>,
    /// Linear objective including the model constant.
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct LpTolerances {
    pub feasibility: f64,
    pub optimality: f64,
    pub pivot: f64,
}

impl Default for LpTolerances {
    fn default() -> Self {
        Self {
            feasibility: 1e-9,
            optimality: 1e-9,
            pivot: 1e-9,
        }
    }
}

/// How a model column is recovered from internal columns.
#[derive(Debug, Clone, Copy)]
enum ColMap {
    /// x = value.
    Fixed(f64),
    /// x = shift + y.
    Shifted { col: usize, shift: f64 },
    /// x = top - y.
    Flipped { col: usize, top: f64 },
    /// x = y+ - y-.
    Split { plus: usize, minus: usize },
}

/// Pricing rules. Dantzig picks the largest reduced cost; Bland picks the
/// lowest eligible index and cannot cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pricing {
    Dantzig,
    Bland,
}

const DEGENERATE_STREAK: usize = 50;
const REFRESH_EVERY: usize = 100;

struct Tableau {
    m: usize,
    n: usize,
    /// Row-major `m x n`, equals `B^-1 A`.
    t: Vec<f64>,
    /// Right-hand side of the transformed system.
    b: Vec<f64>,
    /// Transformed columns of the original system, kept for refreshes.
    a: Vec<f64>,
    upper: Vec<f64>,
    basis: Vec<usize>,
    /// Nonbasic columns sitting at their upper bound.
    at_upper: Vec<bool>,
    is_basic: Vec<bool>,
    /// Values of the basic columns.
    xb: Vec<f64>,
    /// Column that started basic in each row; `B^-1` is read off there.
    unit_col: Vec<usize>,
    tol: LpTolerances,
    iterations: usize,
}

impl Tableau {
    fn entry(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.n + j]
    }

    fn value(&self, j: usize) -> f64 {
        if self.is_basic[j] {
            let r = self.basis.iter().position(|&c| c == j).expect("basic column in basis");
            self.xb[r]
        } else if self.at_upper[j] {
            self.upper[j]
        } else {
            0.0
        }
    }

    /// Recomputes basic values as `B^-1 (b - sum_{j at upper} A_j u_j)`.
    fn refresh(&mut self) {
        let (m, n) = (self.m, self.n);
        let mut rhs = self.b.clone();
        for j in (0..n).filter(|&j| !self.is_basic[j] && self.at_upper[j]) {
            let u = self.upper[j];
            for (i, r) in rhs.iter_mut().enumerate() {
                *r -= self.a[i * n + j] * u;
            }
        }
        for i in 0..m {
            self.xb[i] = (0..m).map(|k| self.t[i * n + self.unit_col[k]] * rhs[k]).sum();
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let n = self.n;
        let p = self.t[r * n + q];
        let row: Vec<f64> = self.t[r * n..(r + 1) * n].iter().map(|v| v / p).collect();
        self.t[r * n..(r + 1) * n].copy_from_slice(&row);
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * n + q];
            if f == 0.0 {
                continue;
            }
            let dst = &mut self.t[i * n..(i + 1) * n];
            for (d, &s) in dst.iter_mut().zip(&row) {
                if s != 0.0 {
                    *d -= f * s;
                }
            }
            dst[q] = 0.0;
        }
        let leaving = self.basis[r];
        self.is_basic[leaving] = false;
        self.is_basic[q] = true;
        self.basis[r] = q;
    }

    /// Reduced costs `c - c_B' B^-1 A` for cost vector `c`.
    fn reduced_costs(&self, c: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut d = c.to_vec();
        for (i, &bc) in self.basis.iter().enumerate() {
            let cb = c[bc];
            if cb == 0.0 {
                continue;
            }
            for (dj, &tij) in d.iter_mut().zip(&self.t[i * n..(i + 1) * n]) {
                *dj -= cb * tij;
            }
        }
        for &bc in &self.basis {
            d[bc] = 0.0;
        }
        d
    }

    /// Runs simplex iterations for cost `c`. Returns the terminal status.
    fn optimize(&mut self, c: &[f64], deadline: Option<Instant>, max_iter: usize) -> LpStatus {
        let n = self.n;
        let mut d = self.reduced_costs(c);
        let mut pricing = Pricing::Dantzig;
        let mut degenerate = 0usize;
        let mut since_refresh = 0usize;
        loop {
            if self.iterations >= max_iter {
                return LpStatus::IterationLimit;
            }
            if self.iterations % 64 == 0 {
                if let Some(dl) = deadline {
                    if Instant::now() >= dl {
                        return LpStatus::TimeLimit;
                    }
                }
            }
            let tol = self.tol.optimality;
            let eligible = |j: usize| -> Option<f64> {
                if self.is_basic[j] || self.upper[j] <= 0.0 {
                    return None;
                }
                let dj = d[j];
                if !self.at_upper[j] && dj < -tol {
                    Some(-dj)
                } else if self.at_upper[j] && dj > tol {
                    Some(dj)
                } else {
                    None
                }
            };
            let entering = match pricing {
                Pricing::Bland => (0..n).find(|&j| eligible(j).is_some()),
                Pricing::Dantzig => {
                    let mut best: Option<(usize, f64)> = None;
                    for j in 0..n {
                        if let Some(s) = eligible(j) {
                            if best.is_none_or(|(_, b)| s > b) {
                                best = Some((j, s));
                            }
                        }
                    }
                    best.map(|(j, _)| j)
                }
            };
            let Some(q) = entering else {
                return LpStatus::Optimal;
            };
            // +1 when the entering column increases from its lower bound.
            let dir = if self.at_upper[q] { -1.0 } else { 1.0 };
            let mut theta = self.upper[q];
            let mut leave: Option<(usize, bool)> = None;
            let mut best_alpha = 0.0;
            for i in 0..self.m {
                let alpha = dir * self.entry(i, q);
                let (limit, to_upper) = if alpha > self.tol.pivot {
                    (self.xb[i].max(0.0) / alpha, false)
                } else if alpha < -self.tol.pivot {
                    let ub = self.upper[self.basis[i]];
                    if ub.is_infinite() {
                        continue;
                    }
                    ((ub - self.xb[i]).max(0.0) / -alpha, true)
                } else {
                    continue;
                };
                let better = match leave {
                    None => limit < theta,
                    Some((r, _)) => {
                        if limit < theta - 1e-12 {
                            true
                        } else if limit <= theta + 1e-12 {
                            match pricing {
                                Pricing::Bland => self.basis[i] < self.basis[r],
                                Pricing::Dantzig => alpha.abs() > best_alpha,
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    theta = limit;
                    leave = Some((i, to_upper));
                    best_alpha = alpha.abs();
                }
            }
            if theta.is_infinite() {
                return LpStatus::Unbounded;
            }
            self.iterations += 1;
            for i in 0..self.m {
                let a = self.entry(i, q);
                if a != 0.0 {
                    self.xb[i] -= dir * a * theta;
                }
            }
            match leave {
                None => {
                    // Bound flip, basis unchanged.
                    self.at_upper[q] = !self.at_upper[q];
                }
                Some((r, to_upper)) => {
                    let entering_value = if self.at_upper[q] { self.upper[q] - theta } else { theta };
                    let leaving = self.basis[r];
                    self.pivot(r, q);
                    self.at_upper[leaving] = to_upper;
                    self.at_upper[q] = false;
                    self.xb[r] = entering_value;
                    let dq = d[q];
                    if dq != 0.0 {
                        for (dj, &tj) in d.iter_mut().zip(&self.t[r * n..(r + 1) * n]) {
                            *dj -= dq * tj;
                        }
                    }
                    d[q] = 0.0;
                }
            }
            if theta <= self.tol.feasibility {
                degenerate += 1;
                if degenerate >= DEGENERATE_STREAK {
                    pricing = Pricing::Bland;
                }
            } else {
                degenerate = 0;
                pricing = Pricing::Dantzig;
            }
            since_refresh += 1;
            if since_refresh >= REFRESH_EVERY {
                since_refresh = 0;
                self.refresh();
                d = self.reduced_costs(c);
            }
        }
    }
}

/// Solves the LP relaxation of `model` with the column bounds replaced by
/// `lower`/`upper`. The quadratic part of the objective is ignored; callers
/// reject quadratic models beforehand.
pub fn solve_relaxation(
    model: &MilpModel,
    lower: &[f64],
    upper: &[f64],
    tol: LpTolerances,
    deadline: Option<Instant>,
) -> LpOutcome {
    let nv = model.num_vars();
    let infeasible = |iterations| LpOutcome {
        status: LpStatus::Infeasible,
        x: vec![0.0; nv],
        objective: f64::INFINITY,
        iterations,
    };
    // Column transformation.
    let mut maps = Vec::with_capacity(nv);
    let mut ucol: Vec<f64> = Vec::new();
    let mut cost: Vec<f64> = Vec::new();
    for j in 0..nv {
        let (l, u) = (lower[j], upper[j]);
        if l > u + tol.feasibility {
            return infeasible(0);
        }
        let c = model.variables[j].cost;
        let map = if l.is_finite() && u.is_finite() && u - l <= 0.0 {
            ColMap::Fixed(l)
        } else if l.is_finite() {
            ucol.push(u - l);
            cost.push(c);
            ColMap::Shifted { col: ucol.len() - 1, shift: l }
        } else if u.is_finite() {
            ucol.push(f64::INFINITY);
            cost.push(-c);
            ColMap::Flipped { col: ucol.len() - 1, top: u }
        } else {
            ucol.extend([f64::INFINITY, f64::INFINITY]);
            cost.extend([c, -c]);
            ColMap::Split {
                plus: ucol.len() - 2,
                minus: ucol.len() - 1,
            }
        };
        maps.push(map);
    }
    let structural = ucol.len();
    let m = model.num_constraints();

    // Row transformation: substitute, count slacks.
    let mut rows: Vec<(Vec<(usize, f64)>, f64, Option<f64>)> = Vec::with_capacity(m);
    for con in &model.constraints {
        let mut terms = Vec::with_capacity(con.terms.len() + 1);
        let mut rhs = con.rhs;
        for &(j, a) in &con.terms {
            match maps[j] {
                ColMap::Fixed(v) => rhs -= a * v,
                ColMap::Shifted { col, shift } => {
                    rhs -= a * shift;
                    terms.push((col, a));
                }
                ColMap::Flipped { col, top } => {
                    rhs -= a * top;
                    terms.push((col, -a));
                }
                ColMap::Split { plus, minus } => terms.extend([(plus, a), (minus, -a)]),
            }
        }
        let slack = match con.sense {
            Sense::Le => Some(1.0),
            Sense::Ge => Some(-1.0),
            Sense::Eq => None,
        };
        rows.push((terms, rhs, slack));
    }
    let n_slack = rows.iter().filter(|r| r.2.is_some()).count();
    let mut n = structural + n_slack;
    let mut a = vec![0.0; 0];
    let mut b = vec![0.0; m];
    let mut basis = vec![0; m];
    let mut artificial_rows = Vec::new();
    // First pass to assign slack columns and find rows needing artificials.
    let mut slack_of = vec![None; m];
    let mut next_slack = structural;
    for (i, row) in rows.iter_mut().enumerate() {
        let sign = if row.1 < 0.0 { -1.0 } else { 1.0 };
        if let Some(s) = row.2 {
            slack_of[i] = Some((next_slack, s * sign));
            next_slack += 1;
        }
        row.1 *= sign;
        for t in row.0.iter_mut() {
            t.1 *= sign;
        }
        b[i] = row.1;
        match slack_of[i] {
            Some((col, coef)) if coef > 0.0 => basis[i] = col,
            _ => artificial_rows.push(i),
        }
    }
    let first_art = n;
    n += artificial_rows.len();
    a.resize(m * n, 0.0);
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in &row.0 {
            a[i * n + j] += v;
        }
        if let Some((col, coef)) = slack_of[i] {
            a[i * n + col] = coef;
        }
    }
    for (k, &i) in artificial_rows.iter().enumerate() {
        a[i * n + first_art + k] = 1.0;
        basis[i] = first_art + k;
    }
    let mut col_upper = ucol;
    col_upper.resize(n, f64::INFINITY);
    cost.resize(n, 0.0);

    let mut is_basic = vec![false; n];
    for &c in &basis {
        is_basic[c] = true;
    }
    let mut tab = Tableau {
        m,
        n,
        t: a.clone(),
        b: b.clone(),
        a,
        upper: col_upper,
        unit_col: basis.clone(),
        basis,
        at_upper: vec![false; n],
        is_basic,
        xb: b,
        tol,
        iterations: 0,
    };
    let max_iter = 50_000 + 50 * (m + n);

    if !artificial_rows.is_empty() {
        let mut phase1 = vec![0.0; n];
        for c in phase1.iter_mut().skip(first_art) {
            *c = 1.0;
        }
        match tab.optimize(&phase1, deadline, max_iter) {
            LpStatus::Optimal => {}
            LpStatus::Unbounded => unreachable!("phase one objective is bounded below"),
            other => {
                return LpOutcome {
                    status: other,
                    x: vec![0.0; nv],
                    objective: f64::NAN,
                    iterations: tab.iterations,
                }
            }
        }
        tab.refresh();
        let infeas: f64 = (first_art..n).map(|j| tab.value(j)).sum();
        let scale = 1.0 + tab.b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if infeas > tol.feasibility.max(1e-9) * scale * 10.0 {
            return infeasible(tab.iterations);
        }
        for j in first_art..n {
            tab.upper[j] = 0.0;
            tab.at_upper[j] = false;
        }
        tab.refresh();
    }

    let status = tab.optimize(&cost, deadline, max_iter);
    tab.refresh();
    let iterations = tab.iterations;
    if status != LpStatus::Optimal {
        return LpOutcome {
            status,
            x: vec![0.0; nv],
            objective: if status == LpStatus::Unbounded { f64::NEG_INFINITY } else { f64::NAN },
            iterations,
        };
    }
    let mut internal = vec![0.0; n];
    for j in 0..n {
        if !tab.is_basic[j] && tab.at_upper[j] {
            internal[j] = tab.upper[j];
        }
    }
    for (r, &j) in tab.basis.iter().enumerate() {
        internal[j] = tab.xb[r].clamp(0.0, tab.upper[j]);
    }
    let x: Vec<f64> = maps
        .iter()
        .enumerate()
        .map(|(j, &map)| {
            let v = match map {
                ColMap::Fixed(v) => v,
                ColMap::Shifted { col, shift } => shift + internal[col],
                ColMap::Flipped { col, top } => top - internal[col],
                ColMap::Split { plus, minus } => internal[plus] - internal[minus],
            };
            v.clamp(lower[j], upper[j])
        })
        .collect();
    let objective = model.constant + model.variables.iter().zip(&x).map(|(v, xi)| v.cost * xi).sum::<f64>();
    LpOutcome {
        status: LpStatus::Optimal,
        x,
        objective,
        iterations,
    }
}
