//! Admissible Markov couplings between the discrete marginals of two horizons.
//!
//! Two constructors are provided: the quantile (north-west corner) coupling,
//! which is the most positively dependent joint law, and the maximum-entropy
//! coupling on a support mask, computed by iterative proportional fitting.
//! [`PathLaw`] chains consecutive couplings into a Markov law on factor paths.

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::error::{Error, Result};
use crate::model::{SupportMask, TransitionMatrix, Violation, INPUT_TOL, MARGINAL_TOL};

/// Default iteration cap for [`max_entropy_coupling`].
pub const IPF_MAX_ITER: usize = 10_000;

/// Flow below this is treated as zero when reducing the support.
const FLOW_EPS: f64 = 1e-13;

fn check_marginal(p: &[f64], what: &str) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::InvalidInput(format!("{what} marginal is empty")));
    }
    if let Some(i) = p.iter().position(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "{what} marginal has invalid probability {} at state {i}",
            p[i]
        )));
    }
    Ok(p.iter().sum())
}

fn check_marginals(p: &[f64], r: &[f64]) -> Result<()> {
    let sp = check_marginal(p, "source")?;
    let sr = check_marginal(r, "target")?;
    if (sp - sr).abs() > INPUT_TOL.max(MARGINAL_TOL * sp.max(sr)) {
        return Err(Error::InvalidInput(format!(
            "marginal masses differ: source {sp}, target {sr}"
        )));
    }
    Ok(())
}

/// North-west corner coupling: cumulative mass is matched in state order.
///
/// The result is recorded with a monotone mask when its staircase stays on
/// or above the diagonal.
pub fn comonotonic_coupling(
    p: &[f64],
    r: &[f64],
    from: usize,
    to: usize,
) -> Result<TransitionMatrix> {
    check_marginals(p, r)?;
    let (n, m) = (p.len(), r.len());
    let mut data = vec![0.0; n * m];
    let mut prow = p.to_vec();
    let mut rcol = r.to_vec();
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        if prow[i] <= 0.0 {
            i += 1;
            continue;
        }
        if rcol[j] <= 0.0 {
            j += 1;
            continue;
        }
        let last_row = (i + 1..n).all(|k| p[k] == 0.0);
        let last_col = (j + 1..m).all(|k| r[k] == 0.0);
        // The final cell of a row (or column) absorbs its exact remainder so
        // that the marginal it closes is reproduced without drift.
        let mass = if last_row {
            rcol[j]
        } else if last_col {
            prow[i]
        } else {
            prow[i].min(rcol[j])
        };
        data[i * m + j] += mass;
        let row_left = prow[i] - mass;
        let col_left = rcol[j] - mass;
        if (row_left - col_left).abs() <= 1e-15 {
            prow[i] = 0.0;
            rcol[j] = 0.0;
            i += 1;
            j += 1;
        } else if row_left < col_left {
            prow[i] = 0.0;
            rcol[j] = col_left;
            i += 1;
        } else {
            prow[i] = row_left;
            rcol[j] = 0.0;
            j += 1;
        }
    }
    let upper = (0..n).all(|i| (0..m).all(|j| j >= i || data[i * m + j] == 0.0));
    let mask = if upper {
        SupportMask::Monotone
    } else {
        SupportMask::Full
    };
    TransitionMatrix::new(from, to, n, m, data, mask)
}

/// Maximum-entropy coupling of `p` and `r` on `mask`.
///
/// Entries that vanish in every feasible coupling are removed first (found
/// from a max-flow solution and the strongly connected components of its
/// residual graph); IPF then runs from the uniform matrix on the remaining
/// support and stops when the L-infinity marginal residual is below `tol`.
/// Once the residual is small, Newton steps on the log scalings finish the
/// fit.
pub fn max_entropy_coupling(
    p: &[f64],
    r: &[f64],
    mask: &SupportMask,
    tol: f64,
    max_iter: usize,
    from: usize,
    to: usize,
) -> Result<TransitionMatrix> {
    check_marginals(p, r)?;
    let (n, m) = (p.len(), r.len());
    mask.check_shape(n, m)?;
    let support = feasible_support(p, r, mask)?;

    let rows: Vec<usize> = (0..n).filter(|&i| p[i] > 0.0).collect();
    let cols: Vec<usize> = (0..m).filter(|&j| r[j] > 0.0).collect();
    // q_ij = a_i b_j on the support
    let mut a = vec![0.0; n];
    let mut b: Vec<f64> = (0..m).map(|j| if r[j] > 0.0 { 1.0 } else { 0.0 }).collect();
    let mut last = (f64::INFINITY, "source", 0);
    for _ in 0..max_iter {
        for &i in &rows {
            let s: f64 = cols.iter().filter(|&&j| support[i * m + j]).map(|&j| b[j]).sum();
            a[i] = p[i] / s;
        }
        for &j in &cols {
            let s: f64 = rows.iter().filter(|&&i| support[i * m + j]).map(|&i| a[i]).sum();
            b[j] = r[j] / s;
        }
        let q = scaled(&support, &a, &b, n, m);
        last = residual(&q, p, r, n, m);
        if last.0 < tol {
            return TransitionMatrix::new(from, to, n, m, q, mask.clone());
        }
        if last.0 < NEWTON_SWITCH {
            break;
        }
    }
    // Weakly coupled blocks make IPF crawl; finish with Newton steps on the
    // dual potentials, which share the same fixed point.
    if let Some(q) = newton_polish(p, r, &support, &rows, &cols, &a, &b, tol) {
        return TransitionMatrix::new(from, to, n, m, q, mask.clone());
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        marginal: last.1,
        index: last.2,
        residual: last.0,
    })
}

/// Residual below which IPF hands over to Newton iterations.
const NEWTON_SWITCH: f64 = 1e-6;
const NEWTON_MAX_ITER: usize = 100;
const NEWTON_FLOOR: f64 = 1e-16;

fn scaled(support: &[bool], a: &[f64], b: &[f64], n: usize, m: usize) -> Vec<f64> {
    let mut q = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            if support[i * m + j] {
                q[i * m + j] = a[i] * b[j];
            }
        }
    }
    q
}

#[allow(clippy::too_many_arguments)]
fn newton_polish(
    p: &[f64],
    r: &[f64],
    support: &[bool],
    rows: &[usize],
    cols: &[usize],
    a: &[f64],
    b: &[f64],
    tol: f64,
) -> Option<Vec<f64>> {
    let (n, m) = (p.len(), r.len());
    let (nr, nc) = (rows.len(), cols.len());
    let dim = nr + nc;
    let mut x: Vec<f64> = rows
        .iter()
        .map(|&i| a[i].ln())
        .chain(cols.iter().map(|&j| b[j].ln()))
        .collect();
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let cells: Vec<(usize, usize)> = (0..nr)
        .flat_map(|ri| (0..nc).map(move |ci| (ri, ci)))
        .filter(|&(ri, ci)| support[rows[ri] * m + cols[ci]])
        .collect();
    let target: Vec<f64> = rows.iter().map(|&i| p[i]).chain(cols.iter().map(|&j| r[j])).collect();
    let objective = |x: &[f64]| -> f64 {
        let mass: f64 = cells.iter().map(|&(ri, ci)| (x[ri] + x[nr + ci]).exp()).sum();
        mass - x.iter().zip(&target).map(|(v, t)| v * t).sum::<f64>()
    };
    let grad_norm = |q: &[f64]| -> f64 {
        let rows_sq: f64 = (0..n)
            .map(|i| (q[i * m..(i + 1) * m].iter().sum::<f64>() - p[i]).powi(2))
            .sum();
        let cols_sq: f64 = (0..m)
            .map(|j| ((0..n).map(|i| q[i * m + j]).sum::<f64>() - r[j]).powi(2))
            .sum();
        (rows_sq + cols_sq).sqrt()
    };
    let build = |x: &[f64]| -> Vec<f64> {
        let mut q = vec![0.0; n * m];
        for &(ri, ci) in &cells {
            q[rows[ri] * m + cols[ci]] = (x[ri] + x[nr + ci]).exp();
        }
        q
    };
    // run past `tol` until the residual stops shrinking
    let mut best = (f64::INFINITY, x.clone());
    let mut stalled = 0;
    for _ in 0..NEWTON_MAX_ITER {
        let q = build(&x);
        let res = residual(&q, p, r, n, m).0;
        if res < best.0 {
            best = (res, x.clone());
            stalled = 0;
        } else {
            stalled += 1;
        }
        if res < NEWTON_FLOOR || stalled >= 3 {
            break;
        }
        let mut grad: Vec<f64> = target.iter().map(|t| -t).collect();
        let mut h = vec![0.0; dim * dim];
        for &(ri, ci) in &cells {
            let v = q[rows[ri] * m + cols[ci]];
            let c = nr + ci;
            grad[ri] += v;
            grad[c] += v;
            h[ri * dim + ri] += v;
            h[c * dim + c] += v;
            h[ri * dim + c] += v;
            h[c * dim + ri] += v;
        }
        // each connected block of the support leaves one gauge direction free
        let ridge = 1e-12 * (0..dim).map(|k| h[k * dim + k]).fold(0.0, f64::max);
        for k in 0..dim {
            h[k * dim + k] += ridge;
        }
        let Some(step) = solve_dense(h, grad.iter().map(|g| -g).collect(), dim) else {
            break;
        };
        let f0 = objective(&x);
        let slope: f64 = grad.iter().zip(&step).map(|(g, s)| g * s).sum();
        let mut t = 1.0;
        let mut moved = false;
        while t >= 1e-12 {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(v, s)| v + t * s).collect();
            let f1 = objective(&trial);
            // near the optimum f is flat to rounding; judge by the gradient
            let shrinks = || grad_norm(&build(&trial)) < grad_norm(&q);
            if f1.is_finite() && (f1 <= f0 + 1e-4 * t * slope || shrinks()) {
                x = trial;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    // a last column fit leaves the target marginal exact, as after IPF
    let mut q = build(&best.1);
    for &j in cols {
        let s: f64 = (0..n).map(|i| q[i * m + j]).sum();
        if s > 0.0 {
            for i in 0..n {
                q[i * m + j] *= r[j] / s;
            }
        }
    }
    (residual(&q, p, r, n, m).0 < tol).then_some(q)
}

/// Gaussian elimination with partial pivoting on a dense `dim x dim` system.
fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>, dim: usize) -> Option<Vec<f64>> {
    for col in 0..dim {
        let piv = (col..dim).max_by(|&x, &y| a[x * dim + col].abs().total_cmp(&a[y * dim + col].abs()))?;
        if a[piv * dim + col] == 0.0 {
            return None;
        }
        if piv != col {
            for k in 0..dim {
                a.swap(piv * dim + k, col * dim + k);
            }
            b.swap(piv, col);
        }
        let d = a[col * dim + col];
        for row in col + 1..dim {
            let f = a[row * dim + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..dim {
                a[row * dim + k] -= f * a[col * dim + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; dim];
    for row in (0..dim).rev() {
        let s: f64 = (row + 1..dim).map(|k| a[row * dim + k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row * dim + row];
    }
    Some(x)
}

fn residual(q: &[f64], p: &[f64], r: &[f64], n: usize, m: usize) -> (f64, &'static str, usize) {
    let mut worst = (0.0, "source", 0);
    for i in 0..n {
        let s: f64 = q[i * m..(i + 1) * m].iter().sum();
        let d = (s - p[i]).abs();
        if d > worst.0 {
            worst = (d, "source", i);
        }
    }
    for j in 0..m {
        let s: f64 = (0..n).map(|i| q[i * m + j]).sum();
        let d = (s - r[j]).abs();
        if d > worst.0 {
            worst = (d, "target", j);
        }
    }
    worst
}

/// Entries of `mask` that carry mass in at least one coupling of `p` and `r`.
///
/// Fails with [`Error::Infeasible`] when no coupling exists on the mask.
pub fn feasible_support(p: &[f64], r: &[f64], mask: &SupportMask) -> Result<Vec<bool>> {
    let (n, m) = (p.len(), r.len());
    let allowed = |i: usize, j: usize| p[i] > 0.0 && r[j] > 0.0 && mask.allows(i, j);
    let flow = transport_max_flow(p, r, &allowed);

    let total: f64 = p.iter().sum();
    let shipped: f64 = flow.iter().sum();
    if total - shipped > MARGINAL_TOL {
        // name the first source state whose mass could not be placed
        for i in 0..n {
            let out: f64 = flow[i * m..(i + 1) * m].iter().sum();
            if p[i] - out > MARGINAL_TOL {
                return Err(Error::Infeasible {
                    marginal: "source",
                    index: i,
                    deficit: p[i] - out,
                });
            }
        }
        for j in 0..m {
            let inflow: f64 = (0..n).map(|i| flow[i * m + j]).sum();
            if r[j] - inflow > MARGINAL_TOL {
                return Err(Error::Infeasible {
                    marginal: "target",
                    index: j,
                    deficit: r[j] - inflow,
                });
            }
        }
    }

    // Residual graph: row -> col on every allowed edge, col -> row where
    // flow can be pushed back. An unused edge can carry mass iff both ends
    // sit in one strongly connected component.
    let mut g = DiGraph::<(), ()>::new();
    let nodes: Vec<_> = (0..n + m).map(|_| g.add_node(())).collect();
    for i in 0..n {
        for j in 0..m {
            if allowed(i, j) {
                g.add_edge(nodes[i], nodes[n + j], ());
                if flow[i * m + j] > FLOW_EPS {
                    g.add_edge(nodes[n + j], nodes[i], ());
                }
            }
        }
    }
    let mut component = vec![usize::MAX; n + m];
    for (c, scc) in tarjan_scc(&g).into_iter().enumerate() {
        for node in scc {
            component[node.index()] = c;
        }
    }
    let mut support = vec![false; n * m];
    for i in 0..n {
        for j in 0..m {
            support[i * m + j] = allowed(i, j)
                && (flow[i * m + j] > FLOW_EPS || component[i] == component[n + j]);
        }
    }
    Ok(support)
}

/// Edmonds-Karp on the bipartite transport network with source capacities
/// `p`, sink capacities `r`, and unbounded allowed edges. Returns the flow on
/// each `(i, j)` edge.
fn transport_max_flow(p: &[f64], r: &[f64], allowed: &dyn Fn(usize, usize) -> bool) -> Vec<f64> {
    let (n, m) = (p.len(), r.len());
    let mut flow = vec![0.0; n * m];
    let mut out = vec![0.0; n];
    let mut inflow = vec![0.0; m];
    // nodes: rows 0..n, cols n..n+m
    loop {
        // BFS from every row with spare source capacity
        let mut prev: Vec<Option<usize>> = vec![None; n + m];
        let mut queue = std::collections::VecDeque::new();
        let mut seen = vec![false; n + m];
        for i in 0..n {
            if p[i] - out[i] > FLOW_EPS {
                seen[i] = true;
                queue.push_back(i);
            }
        }
        let mut sink_col = None;
        while let Some(u) = queue.pop_front() {
            if u < n {
                for j in 0..m {
                    let v = n + j;
                    if !seen[v] && allowed(u, j) {
                        seen[v] = true;
                        prev[v] = Some(u);
                        if r[j] - inflow[j] > FLOW_EPS {
                            sink_col = Some(j);
                            break;
                        }
                        queue.push_back(v);
                    }
                }
                if sink_col.is_some() {
                    break;
                }
            } else {
                let j = u - n;
                for i in 0..n {
                    if !seen[i] && flow[i * m + j] > FLOW_EPS {
                        seen[i] = true;
                        prev[i] = Some(u);
                        queue.push_back(i);
                    }
                }
            }
        }
        let Some(j_end) = sink_col else { break };

        // walk back to find the bottleneck
        let mut path = Vec::new();
        let mut v = n + j_end;
        while let Some(u) = prev[v] {
            path.push((u, v));
            v = u;
        }
        let start = v;
        let mut amount = (p[start] - out[start]).min(r[j_end] - inflow[j_end]);
        for &(u, v) in &path {
            if u >= n {
                // backward edge col -> row cancels flow on (row, col)
                amount = amount.min(flow[v * m + (u - n)]);
            }
        }
        if amount <= FLOW_EPS {
            break;
        }
        for &(u, v) in &path {
            if u < n {
                flow[u * m + (v - n)] += amount;
            } else {
                flow[v * m + (u - n)] -= amount;
            }
        }
        out[start] += amount;
        inflow[j_end] += amount;
    }
    flow
}

/// Marginal, sign, and support checks for a coupling.
pub fn validate_coupling(
    q: &TransitionMatrix,
    p: &[f64],
    r: &[f64],
    mask: &SupportMask,
    tol: f64,
) -> Vec<Violation> {
    let mut out = Vec::new();
    if q.rows() != p.len() || q.cols() != r.len() {
        out.push(Violation::Shape(format!(
            "coupling is {}x{}, marginals have {} and {} states",
            q.rows(),
            q.cols(),
            p.len(),
            r.len()
        )));
        return out;
    }
    for i in 0..q.rows() {
        for j in 0..q.cols() {
            let v = q.get(i, j);
            if v < 0.0 || !v.is_finite() {
                out.push(Violation::ChainNegative {
                    chain: 0,
                    row: i,
                    col: j,
                    value: v,
                });
            } else if v != 0.0 && !mask.allows(i, j) {
                out.push(Violation::ChainSupport {
                    chain: 0,
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
    }
    for (i, (a, e)) in q.row_sums().into_iter().zip(p).enumerate() {
        if (a - e).abs() > tol {
            out.push(Violation::ChainMarginal {
                chain: 0,
                side: "source",
                state: i,
                expected: *e,
                actual: a,
            });
        }
    }
    for (j, (a, e)) in q.col_sums().into_iter().zip(r).enumerate() {
        if (a - e).abs() > tol {
            out.push(Violation::ChainMarginal {
                chain: 0,
                side: "target",
                state: j,
                expected: *e,
                actual: a,
            });
        }
    }
    out
}

/// Shannon entropy `-sum q log q` of the joint law.
pub fn entropy(q: &TransitionMatrix) -> f64 {
    -q.data()
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>()
}

/// Markov law on factor paths built from consecutive couplings.
#[derive(Debug, Clone, PartialEq)]
pub struct PathLaw {
    first: usize,
    initial: Vec<f64>,
    /// One row-stochastic matrix per step, `[step][i][j]`.
    steps: Vec<Vec<Vec<f64>>>,
    marginals: Vec<Vec<f64>>,
}

impl PathLaw {
    /// Degenerate law over a single horizon.
    pub fn single(horizon: usize, marginal: Vec<f64>) -> Self {
        Self {
            first: horizon,
            initial: marginal.clone(),
            steps: Vec::new(),
            marginals: vec![marginal],
        }
    }

    pub fn first_horizon(&self) -> usize {
        self.first
    }

    pub fn last_horizon(&self) -> usize {
        self.first + self.steps.len()
    }

    pub fn covers(&self, h: usize) -> bool {
        h >= self.first && h <= self.last_horizon()
    }

    pub fn marginal(&self, h: usize) -> &[f64] {
        &self.marginals[h - self.first]
    }

    /// `P(X_{h+1} = j | X_h = i)`.
    pub fn step(&self, h: usize) -> &[Vec<f64>] {
        &self.steps[h - self.first]
    }

    /// Conditional law of the state at `to` given the state at `from`.
    pub fn transition(&self, from: usize, to: usize) -> Result<Vec<Vec<f64>>> {
        if !self.covers(from) || !self.covers(to) || to < from {
            return Err(Error::DimensionMismatch(format!(
                "path law covers horizons {}..={}, requested {from} -> {to}",
                self.first,
                self.last_horizon()
            )));
        }
        let n = self.marginal(from).len();
        let mut acc: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        for h in from..to {
            let step = self.step(h);
            let m = step.first().map_or(0, |r| r.len());
            acc = acc
                .iter()
                .map(|row| {
                    let mut out = vec![0.0; m];
                    for (k, &a) in row.iter().enumerate() {
                        if a != 0.0 {
                            for (o, &s) in out.iter_mut().zip(&step[k]) {
                                *o += a * s;
                            }
                        }
                    }
                    out
                })
                .collect();
        }
        Ok(acc)
    }

    /// Joint law of `(X_from, X_to)` as a coupling.
    pub fn joint(&self, from: usize, to: usize) -> Result<TransitionMatrix> {
        let cond = self.transition(from, to)?;
        let p = self.marginal(from);
        let rows: Vec<Vec<f64>> = cond
            .iter()
            .zip(p)
            .map(|(row, &pi)| row.iter().map(|c| pi * c).collect())
            .collect();
        TransitionMatrix::from_rows(from, to, &rows, SupportMask::Full)
    }

    /// Every path with positive probability, in lexicographic state order.
    pub fn enumerate(&self) -> Vec<(Vec<usize>, f64)> {
        let mut out: Vec<(Vec<usize>, f64)> = self
            .initial
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, &p)| (vec![i], p))
            .collect();
        for step in &self.steps {
            out = out
                .into_iter()
                .flat_map(|(path, p)| {
                    let last = *path.last().unwrap();
                    step[last]
                        .iter()
                        .enumerate()
                        .filter(|(_, &c)| c > 0.0)
                        .map(move |(j, &c)| {
                            let mut next = path.clone();
                            next.push(j);
                            (next, p * c)
                        })
                        .collect::<Vec<_>>()
                })
                .collect();
        }
        out
    }

    /// Samples a path from one uniform per horizon by inverse transform.
    pub fn sample(&self, uniforms: &[f64]) -> Vec<usize> {
        debug_assert_eq!(uniforms.len(), self.steps.len() + 1);
        let mut path = Vec::with_capacity(uniforms.len());
        let mut x = inverse_cdf(&self.initial, uniforms[0]);
        path.push(x);
        for (step, &u) in self.steps.iter().zip(&uniforms[1..]) {
            x = inverse_cdf(&step[x], u);
            path.push(x);
        }
        path
    }
}

/// Smallest index whose cumulative mass reaches `u * total`, restricted to
/// states with positive mass.
pub(crate) fn inverse_cdf(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = k;
            if acc >= target {
                return k;
            }
        }
    }
    last_positive
}

/// Composes consecutive couplings into a path law.
pub fn compose_chain(chains: &[TransitionMatrix]) -> Result<PathLaw> {
    let first = chains
        .first()
        .ok_or_else(|| Error::InvalidInput("no chains to compose".into()))?;
    let mut marginals = vec![first.row_sums()];
    let mut steps = Vec::with_capacity(chains.len());
    for (k, c) in chains.iter().enumerate() {
        if c.to != c.from + 1 {
            return Err(Error::DimensionMismatch(format!(
                "chain {k} links horizons {} -> {}, not consecutive",
                c.from, c.to
            )));
        }
        if k > 0 {
            let prev = &chains[k - 1];
            if prev.to != c.from || prev.cols() != c.rows() {
                return Err(Error::DimensionMismatch(format!(
                    "chain {k} does not continue chain {}: horizons {}->{} then {}->{}, {} vs {} states",
                    k - 1,
                    prev.from,
                    prev.to,
                    c.from,
                    c.to,
                    prev.cols(),
                    c.rows()
                )));
            }
            let cols = prev.col_sums();
            let rows = c.row_sums();
            if let Some(s) = (0..rows.len()).find(|&s| (cols[s] - rows[s]).abs() > MARGINAL_TOL) {
                return Err(Error::DimensionMismatch(format!(
                    "chains {} and {k} disagree on the marginal of horizon {} at state {s}",
                    k - 1,
                    c.from
                )));
            }
        }
        steps.push((0..c.rows()).map(|i| c.conditional_row(i)).collect());
        marginals.push(c.col_sums());
    }
    Ok(PathLaw {
        first: first.from,
        initial: marginals[0].clone(),
        steps,
        marginals,
    })
}
