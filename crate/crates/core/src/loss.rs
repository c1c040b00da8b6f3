//! Conditional-independence loss machinery.
//!
//! Given the factor state, names default independently, so the conditional
//! portfolio loss is an exact convolution of Bernoulli losses on a discrete
//! grid. Losses are measured in integer multiples of a grid unit: the common
//! divisor of the LGDs when they are commensurate, otherwise a uniform bucket.

use crate::error::{Error, Result};
use crate::model::{FactorLattice, Portfolio, Tranche, INPUT_TOL};

/// Default bucket width (fraction of total notional) for incommensurate LGDs.
pub const DEFAULT_BUCKET_WIDTH: f64 = 0.0025;
/// Largest exact grid accepted before falling back to bucketing.
pub const MAX_GRID_POINTS: usize = 1 << 20;

/// Integer loss units per name on a uniform loss grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrid {
    unit: f64,
    units: Vec<u32>,
    max_units: u32,
    exact: bool,
}

impl LossGrid {
    pub fn for_portfolio(portfolio: &Portfolio) -> Self {
        Self::with_bucket_width(portfolio, DEFAULT_BUCKET_WIDTH)
    }

    /// Uses the exact common LGD unit when one exists and the grid stays
    /// within [`MAX_GRID_POINTS`]; otherwise rounds every LGD to `width`.
    pub fn with_bucket_width(portfolio: &Portfolio, width: f64) -> Self {
        let fractions = portfolio.lgd_fractions();
        if let Some(grid) = Self::exact(&fractions) {
            return grid;
        }
        Self::bucketed(&fractions, width)
    }

    fn exact(fractions: &[f64]) -> Option<Self> {
        let largest = fractions.iter().cloned().fold(0.0, f64::max);
        if largest <= 0.0 {
            return Some(Self {
                unit: 1.0,
                units: vec![0; fractions.len()],
                max_units: 0,
                exact: true,
            });
        }
        let eps = 1e-9 * largest;
        let unit = fractions
            .iter()
            .filter(|&&f| f > eps)
            .fold(0.0, |g, &f| float_gcd(g, f, eps));
        if unit <= eps {
            return None;
        }
        let mut units = Vec::with_capacity(fractions.len());
        let mut total = 0u64;
        for &f in fractions {
            let n = (f / unit).round();
            if (f / unit - n).abs() > 1e-6 {
                return None;
            }
            total += n as u64;
            if total as usize >= MAX_GRID_POINTS {
                return None;
            }
            units.push(n as u32);
        }
        Some(Self {
            unit,
            units,
            max_units: total as u32,
            exact: true,
        })
    }

    fn bucketed(fractions: &[f64], width: f64) -> Self {
        let units: Vec<u32> = fractions.iter().map(|f| (f / width).round() as u32).collect();
        let max_units = units.iter().sum();
        Self {
            unit: width,
            units,
            max_units,
            exact: false,
        }
    }

    pub fn unit(&self) -> f64 {
        self.unit
    }

    pub fn units(&self) -> &[u32] {
        &self.units
    }

    pub fn max_units(&self) -> u32 {
        self.max_units
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn n_points(&self) -> usize {
        self.max_units as usize + 1
    }

    pub fn level(&self, k: usize) -> f64 {
        k as f64 * self.unit
    }

    pub fn levels(&self) -> Vec<f64> {
        (0..self.n_points()).map(|k| self.level(k)).collect()
    }
}

fn float_gcd(mut a: f64, mut b: f64, eps: f64) -> f64 {
    if a < b {
        std::mem::swap(&mut a, &mut b);
    }
    while b > eps {
        let r = a % b;
        a = b;
        b = if r > b - eps { 0.0 } else { r };
    }
    a
}

/// Discrete loss law on an increasing grid of loss fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct LossDistribution {
    grid: Vec<f64>,
    probs: Vec<f64>,
}

impl LossDistribution {
    pub fn new(grid: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if grid.len() != probs.len() || grid.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "loss distribution has {} levels and {} probabilities",
                grid.len(),
                probs.len()
            )));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("loss grid must be strictly increasing".into()));
        }
        if grid[0] < 0.0 || grid[grid.len() - 1] > 1.0 + INPUT_TOL {
            return Err(Error::InvalidInput("loss levels must lie in [0, 1]".into()));
        }
        if probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::InvalidInput("negative loss probability".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > INPUT_TOL {
            return Err(Error::InvalidInput(format!(
                "loss probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(Self { grid, probs })
    }

    pub fn point_mass(level: f64) -> Self {
        Self {
            grid: vec![level],
            probs: vec![1.0],
        }
    }

    /// Dense probabilities on `grid.levels()`.
    pub fn on_grid(grid: &LossGrid, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), grid.n_points());
        Self {
            grid: grid.levels(),
            probs,
        }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.grid.iter().cloned().zip(self.probs.iter().cloned())
    }

    /// Probability attached to the level closest to `level` within `tol`.
    pub fn prob_at(&self, level: f64, tol: f64) -> f64 {
        self.iter()
            .filter(|(l, _)| (l - level).abs() <= tol)
            .map(|(_, p)| p)
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(l, p)| l * p).sum()
    }

    /// Drops zero-probability levels.
    pub fn compact(&self) -> Self {
        let (grid, probs) = self.iter().filter(|(_, p)| *p > 0.0).unzip();
        Self { grid, probs }
    }

    /// Maps every level onto a uniform grid of `n_buckets + 1` points spanning
    /// `[0, max level]`, splitting mass between the two neighbouring points so
    /// that the mean is preserved.
    pub fn rebucket(&self, n_buckets: usize) -> Self {
        let top = *self.grid.last().unwrap();
        if n_buckets == 0 || top <= 0.0 || self.grid.len() <= n_buckets + 1 {
            return self.clone();
        }
        let step = top / n_buckets as f64;
        let mut probs = vec![0.0; n_buckets + 1];
        for (l, p) in self.iter() {
            let x = l / step;
            let k = (x.floor() as usize).min(n_buckets);
            let w = x - k as f64;
            if k == n_buckets || w <= 0.0 {
                probs[k] += p;
            } else {
                probs[k] += p * (1.0 - w);
                probs[k + 1] += p * w;
            }
        }
        let grid = (0..=n_buckets).map(|k| k as f64 * step).collect();
        Self { grid, probs }
    }
}

/// Conditional loss laws at one horizon, one per factor state.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalLossSet {
    pub horizon: usize,
    pub dists: Vec<LossDistribution>,
}

/// Exact conditional-independence convolution for one portfolio and lattice.
#[derive(Debug, Clone)]
pub struct LossEngine<'a> {
    portfolio: &'a Portfolio,
    lattice: &'a FactorLattice,
    grid: LossGrid,
}

impl<'a> LossEngine<'a> {
    pub fn new(portfolio: &'a Portfolio, lattice: &'a FactorLattice) -> Result<Self> {
        Self::with_grid(portfolio, lattice, LossGrid::for_portfolio(portfolio))
    }

    pub fn with_grid(
        portfolio: &'a Portfolio,
        lattice: &'a FactorLattice,
        grid: LossGrid,
    ) -> Result<Self> {
        if lattice.n_names() != portfolio.len() {
            return Err(Error::DimensionMismatch(format!(
                "portfolio has {} names, lattice has curves for {}",
                portfolio.len(),
                lattice.n_names()
            )));
        }
        Ok(Self {
            portfolio,
            lattice,
            grid,
        })
    }

    pub fn grid(&self) -> &LossGrid {
        &self.grid
    }

    pub fn portfolio(&self) -> &Portfolio {
        self.portfolio
    }

    pub fn lattice(&self) -> &FactorLattice {
        self.lattice
    }

    fn check_state(&self, h: usize, x: usize) -> Result<()> {
        if h >= self.lattice.n_horizons() || x >= self.lattice.n_states(h) {
            return Err(Error::DimensionMismatch(format!(
                "state ({h}, {x}) does not exist in the lattice"
            )));
        }
        Ok(())
    }

    /// Dense conditional loss probabilities in grid units.
    pub fn conditional_units(&self, h: usize, x: usize) -> Result<Vec<f64>> {
        self.check_state(h, x)?;
        let probs = self.lattice.q_at(h, x);
        Ok(convolve(&self.grid, &probs))
    }

    pub fn conditional(&self, h: usize, x: usize) -> Result<LossDistribution> {
        Ok(LossDistribution::on_grid(&self.grid, self.conditional_units(h, x)?))
    }

    pub fn conditional_set(&self, h: usize) -> Result<ConditionalLossSet> {
        if h >= self.lattice.n_horizons() {
            return Err(Error::DimensionMismatch(format!("no horizon {h}")));
        }
        let dists = (0..self.lattice.n_states(h))
            .map(|x| self.conditional(h, x))
            .collect::<Result<Vec<_>>>()?;
        Ok(ConditionalLossSet { horizon: h, dists })
    }

    /// Unconditional loss law at horizon `h`.
    pub fn unconditional(&self, h: usize) -> Result<LossDistribution> {
        let set = self.conditional_set(h)?;
        mixture_loss_distribution(&set, self.lattice.marginal(h))
    }

    /// Loss at `to.0` given factor state `from.1` at `from.0`, factor state
    /// `to.1` at `to.0`, and the set of names already defaulted at `from.0`.
    ///
    /// Under the shared-uniform threshold construction a survivor at the
    /// earlier horizon defaults by the later one with probability
    /// `(q_T - q_t) / (1 - q_t)`.
    pub fn bridge(
        &self,
        from: (usize, usize),
        to: (usize, usize),
        defaulted: &[usize],
    ) -> Result<LossDistribution> {
        self.check_state(from.0, from.1)?;
        self.check_state(to.0, to.1)?;
        if to.0 < from.0 {
            return Err(Error::InvalidInput(
                "bridge target horizon precedes the source horizon".into(),
            ));
        }
        let n = self.portfolio.len();
        let mut is_defaulted = vec![false; n];
        for &k in defaulted {
            if k >= n {
                return Err(Error::InvalidInput(format!("defaulted name {k} not in portfolio")));
            }
            is_defaulted[k] = true;
        }
        let mut base = 0u32;
        let mut probs = vec![0.0; n];
        for k in 0..n {
            if is_defaulted[k] {
                base += self.grid.units[k];
                continue;
            }
            let qt = self.lattice.q(k, from.0, from.1);
            let qt_end = self.lattice.q(k, to.0, to.1);
            if qt_end < qt - INPUT_TOL {
                return Err(Error::Inadmissible(format!(
                    "name {k}: default probability falls from {qt} to {qt_end} between ({}, {}) and ({}, {})",
                    from.0, from.1, to.0, to.1
                )));
            }
            probs[k] = if qt >= 1.0 {
                1.0
            } else {
                ((qt_end - qt) / (1.0 - qt)).clamp(0.0, 1.0)
            };
        }
        let mut units = vec![0.0; self.grid.n_points()];
        let survivors: Vec<f64> = (0..n)
            .map(|k| if is_defaulted[k] { 0.0 } else { probs[k] })
            .collect();
        let conv = convolve_masked(&self.grid, &survivors, &is_defaulted);
        for (k, p) in conv.into_iter().enumerate() {
            if p != 0.0 {
                units[k + base as usize] += p;
            }
        }
        Ok(LossDistribution::on_grid(&self.grid, units))
    }

    /// Joint law of the loss at `(t, i)` and at `(big_t, j)`, as a dense
    /// `n_points x n_points` table indexed `[loss_t][loss_T]` in grid units.
    pub fn joint(&self, t: (usize, usize), big_t: (usize, usize)) -> Result<JointLossDistribution> {
        self.check_state(t.0, t.1)?;
        self.check_state(big_t.0, big_t.1)?;
        let n = self.grid.n_points();
        let mut table = vec![0.0; n * n];
        table[0] = 1.0;
        let mut reach = 0usize;
        for k in 0..self.portfolio.len() {
            let u = self.grid.units[k] as usize;
            let q_early = self.lattice.q(k, t.0, t.1);
            let q_late = self.lattice.q(k, big_t.0, big_t.1);
            if q_late < q_early - INPUT_TOL {
                return Err(Error::Inadmissible(format!(
                    "name {k}: default probability falls from {q_early} to {q_late}"
                )));
            }
            let p_early = q_early;
            let p_between = (q_late - q_early).max(0.0);
            let p_none = 1.0 - p_early - p_between;
            if u == 0 {
                continue;
            }
            reach += u;
            for a in (0..=reach.min(n - 1)).rev() {
                for b in (a..=reach.min(n - 1)).rev() {
                    let mut v = p_none * table[a * n + b];
                    if b >= u {
                        v += p_between * table[a * n + b - u];
                        if a >= u {
                            v += p_early * table[(a - u) * n + b - u];
                        }
                    }
                    table[a * n + b] = v;
                }
            }
        }
        Ok(JointLossDistribution {
            unit: self.grid.unit,
            n,
            table,
        })
    }
}

/// Dense joint law of two nested portfolio losses.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLossDistribution {
    unit: f64,
    n: usize,
    table: Vec<f64>,
}

impl JointLossDistribution {
    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn level(&self, k: usize) -> f64 {
        k as f64 * self.unit
    }

    pub fn prob(&self, early: usize, late: usize) -> f64 {
        self.table[early * self.n + late]
    }
}

fn convolve(grid: &LossGrid, probs: &[f64]) -> Vec<f64> {
    convolve_masked(grid, probs, &vec![false; probs.len()])
}

/// In-place Bernoulli convolution in a fixed name order, skipping masked names.
fn convolve_masked(grid: &LossGrid, probs: &[f64], skip: &[bool]) -> Vec<f64> {
    let mut dist = vec![0.0; grid.n_points()];
    dist[0] = 1.0;
    let mut reach = 0usize;
    for (k, &p) in probs.iter().enumerate() {
        let u = grid.units[k] as usize;
        if skip[k] || p == 0.0 || u == 0 {
            continue;
        }
        reach += u;
        let keep = 1.0 - p;
        for l in (0..=reach).rev() {
            let moved = if l >= u { dist[l - u] * p } else { 0.0 };
            dist[l] = dist[l] * keep + moved;
        }
    }
    dist
}

pub fn conditional_loss_distribution(
    portfolio: &Portfolio,
    lattice: &FactorLattice,
    h: usize,
    x: usize,
) -> Result<LossDistribution> {
    LossEngine::new(portfolio, lattice)?.conditional(h, x)
}

/// Law of total probability over the factor states.
pub fn mixture_loss_distribution(
    set: &ConditionalLossSet,
    weights: &[f64],
) -> Result<LossDistribution> {
    if set.dists.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} conditional distributions but {} weights",
            set.dists.len(),
            weights.len()
        )));
    }
    let first = &set.dists[0];
    if set.dists.iter().all(|d| d.grid == first.grid) {
        let mut probs = vec![0.0; first.grid.len()];
        for (d, &w) in set.dists.iter().zip(weights) {
            for (acc, p) in probs.iter_mut().zip(&d.probs) {
                *acc += w * p;
            }
        }
        return Ok(LossDistribution {
            grid: first.grid.clone(),
            probs,
        });
    }
    let mut points: Vec<(f64, f64)> = set
        .dists
        .iter()
        .zip(weights)
        .flat_map(|(d, &w)| d.iter().map(move |(l, p)| (l, w * p)))
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut grid: Vec<f64> = Vec::new();
    let mut probs: Vec<f64> = Vec::new();
    for (l, p) in points {
        match grid.last() {
            Some(&last) if last == l => *probs.last_mut().unwrap() += p,
            _ => {
                grid.push(l);
                probs.push(p);
            }
        }
    }
    Ok(LossDistribution { grid, probs })
}

/// `E[tranche_loss(L)]`, normalized to tranche notional.
pub fn expected_tranche_loss(dist: &LossDistribution, tranche: &Tranche) -> f64 {
    expected_tranche_loss_ad(dist, tranche.attach, tranche.detach)
}

pub fn expected_tranche_loss_ad(dist: &LossDistribution, attach: f64, detach: f64) -> f64 {
    dist.iter()
        .map(|(l, p)| p * crate::model::tranche_loss(l, attach, detach))
        .sum()
}

pub fn bridge_conditional_distribution(
    portfolio: &Portfolio,
    lattice: &FactorLattice,
    from: (usize, usize),
    to: (usize, usize),
    defaulted: &[usize],
) -> Result<LossDistribution> {
    LossEngine::new(portfolio, lattice)?.bridge(from, to, defaulted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NameCredit;

    fn lattice_for(n: usize, q: f64) -> FactorLattice {
        FactorLattice::new(vec![1.0], vec![vec![1.0]], vec![vec![vec![q]]; n]).unwrap()
    }

    #[test]
    fn no_default_risk_is_point_mass_at_zero() {
        let p = Portfolio::homogeneous(1, 1.0, 0.4).unwrap();
        let d = conditional_loss_distribution(&p, &lattice_for(1, 0.0), 0, 0).unwrap();
        assert_eq!(d.prob_at(0.0, 1e-12), 1.0);
        assert_eq!(d.compact().grid(), &[0.0]);
    }

    #[test]
    fn single_bernoulli_name() {
        let p = Portfolio::homogeneous(1, 1.0, 0.4).unwrap();
        let d = conditional_loss_distribution(&p, &lattice_for(1, 0.3), 0, 0).unwrap();
        assert!((d.prob_at(0.0, 1e-12) - 0.7).abs() < 1e-15);
        assert!((d.prob_at(0.6, 1e-12) - 0.3).abs() < 1e-15);
        assert_eq!(d.grid().len(), 2);
    }

    #[test]
    fn three_name_binomial() {
        let p = Portfolio::homogeneous(3, 1.0, 0.0).unwrap();
        let d = conditional_loss_distribution(&p, &lattice_for(3, 0.5), 0, 0).unwrap();
        // enumeration of the 8 default patterns
        let expected = [(0.0, 0.125), (1.0 / 3.0, 0.375), (2.0 / 3.0, 0.375), (1.0, 0.125)];
        assert_eq!(d.grid().len(), 4);
        for (l, p) in expected {
            assert!((d.prob_at(l, 1e-12) - p).abs() < 1e-15, "level {l}");
        }
    }

    #[test]
    fn heterogeneous_lgds_use_common_unit() {
        let names = vec![
            NameCredit::new("a", 1.0, 0.5).unwrap(),
            NameCredit::new("b", 2.0, 0.25).unwrap(),
            NameCredit::new("c", 1.0, 0.0).unwrap(),
        ];
        let p = Portfolio::new(names).unwrap();
        let g = LossGrid::for_portfolio(&p);
        assert!(g.is_exact());
        // lgd fractions 0.125, 0.375, 0.25 -> unit 0.125
        assert!((g.unit() - 0.125).abs() < 1e-15);
        assert_eq!(g.units(), &[1, 3, 2]);
    }

    #[test]
    fn incommensurate_lgds_are_bucketed() {
        let names = vec![
            NameCredit::new("a", 1.0, 0.0).unwrap(),
            NameCredit::new("b", std::f64::consts::PI, 0.0).unwrap(),
        ];
        let p = Portfolio::new(names).unwrap();
        let g = LossGrid::with_bucket_width(&p, 0.01);
        // pi / (1 + pi) is irrational relative to 1 / (1 + pi) up to the 1e-6 check
        assert!(!g.is_exact() || g.n_points() < MAX_GRID_POINTS);
        assert!(g.n_points() <= 102);
    }

    #[test]
    fn mixture_examples() {
        let a = LossDistribution::new(vec![0.0, 0.5], vec![1.0, 0.0]).unwrap();
        let b = LossDistribution::new(vec![0.0, 0.5], vec![0.0, 1.0]).unwrap();
        let set = ConditionalLossSet {
            horizon: 0,
            dists: vec![a.clone(), b],
        };
        let m = mixture_loss_distribution(&set, &[0.5, 0.5]).unwrap();
        assert_eq!(m.probs(), &[0.5, 0.5]);

        let one = ConditionalLossSet {
            horizon: 0,
            dists: vec![a.clone()],
        };
        assert_eq!(mixture_loss_distribution(&one, &[1.0]).unwrap(), a);

        let same = ConditionalLossSet {
            horizon: 0,
            dists: vec![a.clone(), a.clone()],
        };
        assert_eq!(mixture_loss_distribution(&same, &[0.3, 0.7]).unwrap(), a);
        assert!(mixture_loss_distribution(&same, &[1.0]).is_err());
    }

    #[test]
    fn mixture_on_distinct_grids_merges_levels() {
        let a = LossDistribution::point_mass(0.0);
        let b = LossDistribution::point_mass(0.5);
        let set = ConditionalLossSet {
            horizon: 0,
            dists: vec![a, b],
        };
        let m = mixture_loss_distribution(&set, &[0.5, 0.5]).unwrap();
        assert_eq!(m.grid(), &[0.0, 0.5]);
        assert_eq!(m.probs(), &[0.5, 0.5]);
    }

    #[test]
    fn etl_examples() {
        let tr = Tranche::new(0.03, 0.07, 1).unwrap();
        assert_eq!(expected_tranche_loss(&LossDistribution::point_mass(0.0), &tr), 0.0);
        assert_eq!(expected_tranche_loss(&LossDistribution::point_mass(1.0), &tr), 1.0);
        let d = LossDistribution::new(vec![0.0, 0.05, 0.10], vec![0.5, 0.3, 0.2]).unwrap();
        assert!((expected_tranche_loss(&d, &tr) - 0.35).abs() < 1e-15);
    }

    fn two_horizon(q_t: f64, q_big_t: f64) -> FactorLattice {
        FactorLattice::new(
            vec![1.0, 2.0],
            vec![vec![1.0], vec![1.0]],
            vec![vec![vec![q_t], vec![q_big_t]]],
        )
        .unwrap()
    }

    #[test]
    fn bridge_probability_single_survivor() {
        let p = Portfolio::homogeneous(1, 1.0, 0.0).unwrap();
        let lat = two_horizon(0.2, 0.6);
        let d = bridge_conditional_distribution(&p, &lat, (0, 0), (1, 0), &[]).unwrap();
        assert!((d.prob_at(1.0, 1e-12) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bridge_edge_cases() {
        let p = Portfolio::homogeneous(2, 1.0, 0.0).unwrap();
        let lat = FactorLattice::new(
            vec![1.0, 2.0],
            vec![vec![1.0], vec![1.0]],
            vec![vec![vec![0.3], vec![0.3]]; 2],
        )
        .unwrap();
        let d = bridge_conditional_distribution(&p, &lat, (0, 0), (1, 0), &[]).unwrap();
        assert_eq!(d.prob_at(0.0, 1e-12), 1.0);
        let all = bridge_conditional_distribution(&p, &lat, (0, 0), (1, 0), &[0, 1]).unwrap();
        assert_eq!(all.prob_at(1.0, 1e-12), 1.0);

        let bad = two_horizon(0.5, 0.2);
        let p1 = Portfolio::homogeneous(1, 1.0, 0.0).unwrap();
        assert!(matches!(
            bridge_conditional_distribution(&p1, &bad, (0, 0), (1, 0), &[]),
            Err(Error::Inadmissible(_))
        ));
    }

    #[test]
    fn joint_marginals_match_single_horizon_laws() {
        let p = Portfolio::homogeneous(4, 1.0, 0.0).unwrap();
        let lat = FactorLattice::new(
            vec![1.0, 2.0],
            vec![vec![1.0], vec![1.0]],
            vec![vec![vec![0.1], vec![0.35]]; 4],
        )
        .unwrap();
        let eng = LossEngine::new(&p, &lat).unwrap();
        let j = eng.joint((0, 0), (1, 0)).unwrap();
        let early = eng.conditional_units(0, 0).unwrap();
        let late = eng.conditional_units(1, 0).unwrap();
        let n = j.n_points();
        for a in 0..n {
            let row: f64 = (0..n).map(|b| j.prob(a, b)).sum();
            assert!((row - early[a]).abs() < 1e-15);
            let col: f64 = (0..n).map(|b| j.prob(b, a)).sum();
            assert!((col - late[a]).abs() < 1e-15);
            for b in 0..a {
                assert_eq!(j.prob(a, b), 0.0);
            }
        }
    }

    #[test]
    fn rebucket_preserves_mass_and_mean() {
        let p = Portfolio::homogeneous(50, 1.0, 0.4).unwrap();
        let lat = lattice_for(50, 0.1);
        let d = conditional_loss_distribution(&p, &lat, 0, 0).unwrap();
        let r = d.rebucket(10);
        assert_eq!(r.grid().len(), 11);
        assert!((r.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((r.mean() - d.mean()).abs() < 1e-12);
    }
}
