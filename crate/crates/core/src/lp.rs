//! Small dense linear programs: minimize `c.x` subject to linear rows and `x >= 0`.
//!
//! Two-phase tableau simplex. Dantzig pricing, switching to Bland's rule after
//! a run of degenerate pivots so that cycling cannot occur. The final point is
//! checked against the original rows; a solution outside tolerance is an
//! error, never a silently repaired answer.

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-9;
const COST_EPS: f64 = 1e-11;
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
struct Row {
    coeffs: Vec<(usize, f64)>,
    rel: Relation,
    rhs: f64,
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    n_vars: usize,
    objective: Vec<f64>,
    rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        Self {
            n_vars: objective.len(),
            objective,
            rows: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    /// Adds `sum coeffs[k].1 * x[coeffs[k].0]  rel  rhs`.
    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, rel: Relation, rhs: f64) {
        debug_assert!(coeffs.iter().all(|&(k, _)| k < self.n_vars));
        self.rows.push(Row { coeffs, rel, rhs });
    }

    pub fn solve(&self, tol: f64) -> Result<LpSolution> {
        let mut t = Tableau::build(self);
        let mut iterations = 0;

        if t.n_art > 0 {
            t.set_phase_one_costs();
            iterations += t.run(false)?;
            let infeas = -t.obj_value();
            if infeas > tol {
                return Err(Error::LinearProgram(format!(
                    "constraints are infeasible (phase-one residual {infeas:.3e})"
                )));
            }
            t.evict_artificials();
        }
        t.set_phase_two_costs(&self.objective);
        iterations += t.run(true)?;

        let x = t.primal(self.n_vars);
        let sol = self.check(x, tol)?;
        Ok(LpSolution {
            iterations,
            ..sol
        })
    }

    fn check(&self, mut x: Vec<f64>, tol: f64) -> Result<LpSolution> {
        for (k, v) in x.iter_mut().enumerate() {
            if *v < -tol || !v.is_finite() {
                return Err(Error::LinearProgram(format!(
                    "variable {k} = {v:.3e} violates nonnegativity"
                )));
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            let lhs: f64 = row.coeffs.iter().map(|&(k, a)| a * x[k]).sum();
            let gap = lhs - row.rhs;
            let bad = match row.rel {
                Relation::Le => gap > tol,
                Relation::Ge => gap < -tol,
                Relation::Eq => gap.abs() > tol,
            };
            if bad {
                return Err(Error::LinearProgram(format!(
                    "row {r} misses its right-hand side by {gap:.3e}"
                )));
            }
        }
        let objective = self.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpSolution {
            x,
            objective,
            iterations: 0,
        })
    }
}

struct Tableau {
    /// rows `0..m` are constraints, row `m` is the reduced-cost row
    a: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n_cols: usize,
    /// artificial columns occupy `art_start..n_cols`
    art_start: usize,
    n_art: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let m = lp.rows.len();
        let n = lp.n_vars;
        let n_slack = lp.rows.iter().filter(|r| r.rel != Relation::Eq).count();
        // scale rows to a nonnegative rhs; the row then needs an artificial
        // unless its slack enters with coefficient +1
        let sign = |r: &Row| match r.rel {
            Relation::Ge if r.rhs <= 0.0 => -1.0,
            _ if r.rhs < 0.0 => -1.0,
            _ => 1.0,
        };
        let slack_coef = |r: &Row| match r.rel {
            Relation::Eq => None,
            Relation::Le => Some(sign(r)),
            Relation::Ge => Some(-sign(r)),
        };
        let needs_art: Vec<bool> = lp.rows.iter().map(|r| slack_coef(r) != Some(1.0)).collect();
        let n_art = needs_art.iter().filter(|&&b| b).count();
        let art_start = n + n_slack;
        let n_cols = art_start + n_art;

        let mut a = vec![vec![0.0; n_cols + 1]; m + 1];
        let mut basis = vec![0; m];
        let mut slack = n;
        let mut art = art_start;
        for (r, row) in lp.rows.iter().enumerate() {
            let sg = sign(row);
            for &(k, v) in &row.coeffs {
                a[r][k] += sg * v;
            }
            a[r][n_cols] = sg * row.rhs;
            if let Some(s) = slack_coef(row) {
                a[r][slack] = s;
                if !needs_art[r] {
                    basis[r] = slack;
                }
                slack += 1;
            }
            if needs_art[r] {
                a[r][art] = 1.0;
                basis[r] = art;
                art += 1;
            }
        }
        Self {
            a,
            basis,
            n_cols,
            art_start,
            n_art,
        }
    }

    fn m(&self) -> usize {
        self.basis.len()
    }

    fn obj_value(&self) -> f64 {
        self.a[self.m()][self.n_cols]
    }

    fn set_phase_one_costs(&mut self) {
        let costs: Vec<f64> = (0..self.n_cols)
            .map(|j| if j >= self.art_start { 1.0 } else { 0.0 })
            .collect();
        self.load_costs(&costs);
    }

    fn set_phase_two_costs(&mut self, objective: &[f64]) {
        let mut costs = vec![0.0; self.n_cols];
        costs[..objective.len()].copy_from_slice(objective);
        self.load_costs(&costs);
    }

    /// Writes reduced costs `c - c_B B^-1 A` and `-c_B b` into the cost row.
    fn load_costs(&mut self, costs: &[f64]) {
        let m = self.m();
        let w = self.n_cols + 1;
        let mut z = vec![0.0; w];
        z[..self.n_cols].copy_from_slice(costs);
        for r in 0..m {
            let cb = costs[self.basis[r]];
            if cb != 0.0 {
                for (zj, aj) in z.iter_mut().zip(&self.a[r]) {
                    *zj -= cb * aj;
                }
            }
        }
        self.a[m] = z;
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.n_cols + 1;
        let p = self.a[r][c];
        for v in self.a[r].iter_mut() {
            *v /= p;
        }
        self.a[r][c] = 1.0;
        let pivot_row = self.a[r].clone();
        for (k, row) in self.a.iter_mut().enumerate() {
            if k == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for j in 0..w {
                    row[j] -= f * pivot_row[j];
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Runs simplex iterations on the current cost row. Artificial columns
    /// may not enter in phase two.
    fn run(&mut self, phase_two: bool) -> Result<usize> {
        let m = self.m();
        let limit = 100 * (m + self.n_cols) + 1000;
        let enter_limit = if phase_two { self.art_start } else { self.n_cols };
        let mut degenerate = 0;
        for it in 0..limit {
            let bland = degenerate >= DEGENERATE_RUN;
            let cost = &self.a[m];
            let enter = if bland {
                (0..enter_limit).find(|&j| cost[j] < -COST_EPS)
            } else {
                let mut best = None;
                let mut best_v = -COST_EPS;
                for (j, &v) in cost.iter().enumerate().take(enter_limit) {
                    if v < best_v {
                        best_v = v;
                        best = Some(j);
                    }
                }
                best
            };
            let Some(c) = enter else { return Ok(it) };

            let rhs = self.n_cols;
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..m {
                let arc = self.a[r][c];
                if arc > PIVOT_EPS {
                    let ratio = self.a[r][rhs].max(0.0) / arc;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - 1e-12
                                || (ratio <= lratio + 1e-12 && self.basis[r] < self.basis[lr])
                            {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            let Some((r, ratio)) = leave else {
                return Err(Error::LinearProgram(format!(
                    "objective is unbounded along column {c}"
                )));
            };
            if ratio <= 1e-14 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, c);
        }
        Err(Error::LinearProgram(format!(
            "simplex did not terminate within {limit} pivots"
        )))
    }

    /// Pivots zero-level artificials out of the basis; rows where that is
    /// impossible are redundant and removed.
    fn evict_artificials(&mut self) {
        let mut r = 0;
        while r < self.m() {
            if self.basis[r] >= self.art_start {
                let col = (0..self.art_start)
                    .filter(|&j| self.a[r][j].abs() > PIVOT_EPS)
                    .max_by(|&x, &y| self.a[r][x].abs().total_cmp(&self.a[r][y].abs()));
                match col {
                    Some(c) => self.pivot(r, c),
                    None => {
                        self.a.remove(r);
                        self.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
    }

    fn primal(&self, n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        for (r, &b) in self.basis.iter().enumerate() {
            if b < n {
                x[b] = self.a[r][self.n_cols];
            }
        }
        x
    }
}
