//! Monte Carlo simulation of the default-time copula and bound estimators
//! for options with generic triggers.
//!
//! Each path draws a factor path from the Markov chain, one uniform per
//! name, and one uniform for an external trigger credit. A name defaults at
//! the first horizon whose conditional default probability reaches its
//! uniform.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::coupling::PathLaw;
use crate::error::{Error, Result};
use crate::loss::LossGrid;
use crate::model::{
    tranche_loss, BoundsResult, Conditioning, DiscountCurve, ExerciseStyle, FactorLattice,
    OptionKind, Portfolio, TrancheLossOptionSpec, TriggerSpec, INPUT_TOL,
};
use crate::rng::PathStream;

/// Marker for a name that survives every simulated horizon.
pub const NEVER: u16 = u16::MAX;

/// Default split between the estimation and evaluation halves.
pub const DEFAULT_SPLIT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    n_paths: usize,
    first: usize,
    n_steps: usize,
    n_names: usize,
    factor: Vec<u16>,
    default_at: Vec<u16>,
    loss: Vec<u32>,
    trigger_u: Vec<f64>,
    unit: f64,
    seed: u64,
}

impl PathSet {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn first_horizon(&self) -> usize {
        self.first
    }

    pub fn last_horizon(&self) -> usize {
        self.first + self.n_steps - 1
    }

    fn slot(&self, h: usize) -> usize {
        debug_assert!(h >= self.first && h <= self.last_horizon());
        h - self.first
    }

    pub fn factor(&self, path: usize, h: usize) -> usize {
        self.factor[path * self.n_steps + self.slot(h)] as usize
    }

    /// Horizon at which a name defaults, or [`NEVER`].
    pub fn default_horizon(&self, path: usize, name: usize) -> u16 {
        self.default_at[path * self.n_names + name]
    }

    pub fn loss_units(&self, path: usize, h: usize) -> u32 {
        self.loss[path * self.n_steps + self.slot(h)]
    }

    /// Portfolio loss fraction at horizon `h`.
    pub fn loss(&self, path: usize, h: usize) -> f64 {
        self.loss_units(path, h) as f64 * self.unit
    }

    pub fn trigger_uniform(&self, path: usize) -> f64 {
        self.trigger_u[path]
    }

    fn covers(&self, h: usize) -> bool {
        h >= self.first && h <= self.last_horizon()
    }
}

struct PathDraw {
    factor: Vec<u16>,
    default_at: Vec<u16>,
    loss: Vec<u32>,
    trigger_u: f64,
}

/// Simulates `n_paths` paths over the horizons covered by `law`.
///
/// Path `k` uses stream `k` of the generator seeded with `seed`; its uniforms
/// are consumed in the order factor steps, names, trigger credit.
pub fn simulate_paths(
    portfolio: &Portfolio,
    lattice: &FactorLattice,
    law: &PathLaw,
    n_paths: usize,
    seed: u64,
) -> Result<PathSet> {
    if n_paths == 0 {
        return Err(Error::InvalidInput("at least one path is required".into()));
    }
    if lattice.n_names() != portfolio.len() {
        return Err(Error::DimensionMismatch(format!(
            "portfolio has {} names, lattice has curves for {}",
            portfolio.len(),
            lattice.n_names()
        )));
    }
    if law.last_horizon() >= lattice.n_horizons() || law.last_horizon() >= NEVER as usize {
        return Err(Error::DimensionMismatch(
            "path law extends beyond the lattice".into(),
        ));
    }
    let first = law.first_horizon();
    let n_steps = law.last_horizon() - first + 1;
    let n_names = portfolio.len();
    let grid = LossGrid::for_portfolio(portfolio);
    let units = grid.units();

    let draws: Vec<PathDraw> = (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let mut stream = PathStream::new(seed, k as u64);
            let mut u = vec![0.0; n_steps];
            stream.fill(&mut u);
            let path = law.sample(&u);
            let mut default_at = vec![NEVER; n_names];
            let mut loss = vec![0u32; n_steps];
            for (name, d) in default_at.iter_mut().enumerate() {
                let v = stream.uniform();
                let curve = lattice.curve(name);
                if let Some(s) = (0..n_steps).find(|&s| v <= curve[first + s][path[s]]) {
                    *d = (first + s) as u16;
                    for l in &mut loss[s..] {
                        *l += units[name];
                    }
                }
            }
            PathDraw {
                factor: path.iter().map(|&x| x as u16).collect(),
                default_at,
                loss,
                trigger_u: stream.uniform(),
            }
        })
        .collect();

    let mut set = PathSet {
        n_paths,
        first,
        n_steps,
        n_names,
        factor: Vec::with_capacity(n_paths * n_steps),
        default_at: Vec::with_capacity(n_paths * n_names),
        loss: Vec::with_capacity(n_paths * n_steps),
        trigger_u: Vec::with_capacity(n_paths),
        unit: grid.unit(),
        seed,
    };
    for d in draws {
        set.factor.extend(d.factor);
        set.default_at.extend(d.default_at);
        set.loss.extend(d.loss);
        set.trigger_u.push(d.trigger_u);
    }
    Ok(set)
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
}

impl Estimate {
    fn from_samples(x: &[f64]) -> Self {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = if x.len() > 1 {
            x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            std_err: (var / n).sqrt(),
        }
    }
}

/// Payoff and trigger data resolved from a spec against a lattice and curve.
#[derive(Debug, Clone)]
pub struct McOption {
    spec: TrancheLossOptionSpec,
    k_eff: f64,
    d0t: f64,
    trigger_curve: Option<Vec<Vec<f64>>>,
}

impl McOption {
    pub fn from_spec(
        spec: &TrancheLossOptionSpec,
        lattice: &FactorLattice,
        curve: &DiscountCurve,
    ) -> Result<Self> {
        spec.check_horizons(lattice)?;
        let trigger_curve = match &spec.trigger {
            TriggerSpec::SingleNameDefault { style: ExerciseStyle::AtTrigger, .. } => {
                return Err(Error::Unsupported(
                    "exercise at trigger is priced semi-analytically only".into(),
                ))
            }
            TriggerSpec::SingleNameDefault { curve, .. } => Some(curve.rows().to_vec()),
            _ => None,
        };
        let t = lattice.time(spec.exercise);
        let big_t = lattice.time(spec.tranche.maturity);
        Ok(Self {
            spec: spec.clone(),
            k_eff: spec.strike / curve.forward_df(t, big_t),
            d0t: curve.df(big_t),
            trigger_curve,
        })
    }

    pub fn effective_strike(&self) -> f64 {
        self.k_eff
    }

    fn check_paths(&self, paths: &PathSet) -> Result<()> {
        if !paths.covers(self.spec.exercise) || !paths.covers(self.spec.tranche.maturity) {
            return Err(Error::DimensionMismatch(format!(
                "paths cover horizons {}..={}, option needs {} and {}",
                paths.first_horizon(),
                paths.last_horizon(),
                self.spec.exercise,
                self.spec.tranche.maturity
            )));
        }
        Ok(())
    }

    fn triggered(&self, paths: &PathSet, k: usize) -> bool {
        let t = self.spec.exercise;
        match &self.spec.trigger {
            TriggerSpec::AtTime => true,
            TriggerSpec::LossThreshold { alpha } => paths.loss(k, t) >= alpha - INPUT_TOL,
            TriggerSpec::SingleNameDefault { .. } => {
                let curve = self.trigger_curve.as_ref().expect("trigger curve");
                let u = paths.trigger_uniform(k);
                (paths.first_horizon()..=t).any(|h| u <= curve[h][paths.factor(k, h)])
            }
        }
    }

    fn terminal_tranche_loss(&self, paths: &PathSet, k: usize) -> f64 {
        let tr = &self.spec.tranche;
        tranche_loss(paths.loss(k, tr.maturity), tr.attach, tr.detach)
    }

    fn payoff(&self, x: f64) -> f64 {
        match self.spec.kind {
            OptionKind::Call => (x - self.k_eff).max(0.0),
            OptionKind::Put => (self.k_eff - x).max(0.0),
        }
    }
}

/// Pathwise perfect-foresight payoff `d(0,T) 1_trigger max(TL_T - K~, 0)`.
pub fn mc_upper_bound(option: &McOption, paths: &PathSet) -> Result<Estimate> {
    option.check_paths(paths)?;
    let x: Vec<f64> = (0..paths.n_paths())
        .map(|k| {
            if option.triggered(paths, k) {
                option.d0t * option.payoff(option.terminal_tranche_loss(paths, k))
            } else {
                0.0
            }
        })
        .collect();
    Ok(Estimate::from_samples(&x))
}

#[derive(Debug, Clone, Copy, Default)]
struct Cell {
    n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Cell {
    fn add(&mut self, other: &Cell) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let m = self.mean();
        ((self.sum_sq - self.n as f64 * m * m) / (self.n as f64 - 1.0)).max(0.0)
    }
}

/// Conditional-mean table built from the estimation half.
struct CellTable {
    /// keyed by factor state, then by loss units (0 when loss is not used)
    cells: BTreeMap<usize, BTreeMap<u32, Cell>>,
}

impl CellTable {
    const MIN_PATHS: usize = 2;

    /// Merges sparse loss cells into their nearest neighbour within the
    /// same factor state; a sparse factor state joins its nearest state.
    fn merge_sparse(&mut self) {
        for row in self.cells.values_mut() {
            while row.len() > 1 {
                let Some((&key, _)) = row.iter().find(|(_, c)| c.n < Self::MIN_PATHS) else {
                    break;
                };
                let cell = row.remove(&key).unwrap();
                let target = nearest_key(row, key).unwrap();
                row.get_mut(&target).unwrap().add(&cell);
            }
        }
        loop {
            if self.cells.len() <= 1 {
                break;
            }
            let sparse = self
                .cells
                .iter()
                .find(|(_, row)| row.values().map(|c| c.n).sum::<usize>() < Self::MIN_PATHS)
                .map(|(&x, _)| x);
            let Some(x) = sparse else { break };
            let row = self.cells.remove(&x).unwrap();
            let target = nearest_key(&self.cells, x).unwrap();
            let dest = self.cells.get_mut(&target).unwrap();
            for (l, c) in row {
                let l_target = nearest_key(dest, l).unwrap();
                dest.get_mut(&l_target).unwrap().add(&c);
            }
        }
    }
}

trait GridKey: Copy + Ord {
    fn pos(self) -> i64;
}

impl GridKey for usize {
    fn pos(self) -> i64 {
        self as i64
    }
}

impl GridKey for u32 {
    fn pos(self) -> i64 {
        self as i64
    }
}

/// Key nearest to `k`, preferring the lower one on ties.
fn nearest_key<K: GridKey, V>(map: &BTreeMap<K, V>, k: K) -> Option<K> {
    let below = map.range(..=k).next_back().map(|(&a, _)| a);
    let above = map.range(k..).next().map(|(&a, _)| a);
    match (below, above) {
        (Some(b), Some(a)) => {
            let kb = k.pos() - b.pos();
            let ka = a.pos() - k.pos();
            Some(if kb <= ka { b } else { a })
        }
        (b, a) => b.or(a),
    }
}

/// Out-of-sample conditioning estimator of the lower bound.
///
/// Paths `0..split * n` estimate `E[TL_T | cell]` over triggered paths; the
/// remaining paths average `d(0,T) 1_trigger max(E^[TL_T | cell] - K~, 0)`.
/// The standard error adds the delta-method contribution of the
/// estimation-half noise in each cell mean.
pub fn mc_lower_bound_grid(
    option: &McOption,
    paths: &PathSet,
    conditioning: Conditioning,
    split: f64,
) -> Result<Estimate> {
    option.check_paths(paths)?;
    if !(split > 0.0 && split < 1.0) {
        return Err(Error::InvalidInput(format!(
            "split must lie strictly between 0 and 1, got {split}"
        )));
    }
    let n = paths.n_paths();
    let n_est = ((n as f64) * split).floor() as usize;
    if n_est == 0 || n_est >= n {
        return Err(Error::InvalidInput(format!(
            "{n} paths cannot be split into non-empty estimation and evaluation halves"
        )));
    }
    let t = option.spec.exercise;
    let key = |k: usize| -> (usize, u32) {
        let l = match conditioning {
            Conditioning::Factor => 0,
            Conditioning::FactorAndLoss => paths.loss_units(k, t),
        };
        (paths.factor(k, t), l)
    };

    let mut table = CellTable {
        cells: BTreeMap::new(),
    };
    for k in 0..n_est {
        if !option.triggered(paths, k) {
            continue;
        }
        let (x, l) = key(k);
        let tl = option.terminal_tranche_loss(paths, k);
        let c = table.cells.entry(x).or_default().entry(l).or_default();
        c.n += 1;
        c.sum += tl;
        c.sum_sq += tl * tl;
    }

    let n_eval = n - n_est;
    let mut samples = Vec::with_capacity(n_eval);
    // evaluation-path count per cell, by the address of the cell used
    let mut usage: BTreeMap<(usize, u32), (usize, f64, f64)> = BTreeMap::new();
    if table.cells.is_empty() {
        // no triggered estimation path: the trigger is treated as unreachable
        samples.resize(n_eval, 0.0);
    } else {
        table.merge_sparse();
        for k in n_est..n {
            if !option.triggered(paths, k) {
                samples.push(0.0);
                continue;
            }
            let (x, l) = key(k);
            let xk = nearest_key(&table.cells, x).unwrap();
            let lk = nearest_key(&table.cells[&xk], l).unwrap();
            let cell = &table.cells[&xk][&lk];
            let m = cell.mean();
            samples.push(option.d0t * option.payoff(m));
            let slope = match option.spec.kind {
                OptionKind::Call => (m > option.k_eff) as u8 as f64,
                OptionKind::Put => (m < option.k_eff) as u8 as f64,
            };
            let e = usage
                .entry((xk, lk))
                .or_insert((0, slope, cell.variance() / cell.n as f64));
            e.0 += 1;
        }
    }

    let base = Estimate::from_samples(&samples);
    let est_var: f64 = usage
        .values()
        .map(|&(count, slope, var_mean)| {
            let w = count as f64 / n_eval as f64 * option.d0t * slope;
            w * w * var_mean
        })
        .sum();
    Ok(Estimate {
        mean: base.mean,
        std_err: (base.std_err * base.std_err + est_var).sqrt(),
    })
}

/// Upper bound from pathwise foresight and lower bound from grid
/// conditioning, both restricted to triggered paths.
pub fn mc_generic_trigger_bounds(
    option: &McOption,
    paths: &PathSet,
    conditioning: Conditioning,
    split: f64,
) -> Result<BoundsResult> {
    let up = mc_upper_bound(option, paths)?;
    let lo = mc_lower_bound_grid(option, paths, conditioning, split)?;
    let method = match conditioning {
        Conditioning::Factor => "mc (X_t)",
        Conditioning::FactorAndLoss => "mc (X_t, L_t)",
    };
    Ok(BoundsResult {
        lower: lo.mean,
        upper: up.mean,
        method: method.into(),
        std_err_lower: Some(lo.std_err),
        std_err_upper: Some(up.std_err),
        approximate: false,
    })
}
