//! Brute-force enumeration of every (factor path, default pattern, trigger)
//! outcome, plus instance generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::hash::Hash;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use tranche_bounds::bounds::PricingContext;
use tranche_bounds::coupling::{comonotonic_coupling, compose_chain, max_entropy_coupling, PathLaw};
use tranche_bounds::model::{
    DiscountCurve, FactorLattice, NameCredit, Portfolio, SupportMask, TransitionMatrix,
    Tranche, TriggerCurve, MARGINAL_TOL,
};
use tranche_bounds::pv::Settlement;

pub const NEVER: usize = usize::MAX;

/// One joint outcome and its probability.
pub struct Outcome<'a> {
    pub first: usize,
    /// factor state per horizon from `first`
    pub path: &'a [usize],
    /// default horizon per name, or [`NEVER`]
    pub defaults: &'a [usize],
    pub trigger: usize,
    pub prob: f64,
    lgd: &'a [f64],
}

impl Outcome<'_> {
    pub fn x(&self, h: usize) -> usize {
        self.path[h - self.first]
    }

    pub fn loss(&self, h: usize) -> f64 {
        self.defaults
            .iter()
            .zip(self.lgd)
            .filter(|(&d, _)| d <= h)
            .map(|(_, l)| l)
            .sum()
    }

    /// Bitmask of names defaulted by `h`.
    pub fn defaulted_by(&self, h: usize) -> u64 {
        self.defaults
            .iter()
            .enumerate()
            .filter(|(_, &d)| d <= h)
            .fold(0, |m, (k, _)| m | (1 << k))
    }
}

pub struct World<'a> {
    pub lattice: &'a FactorLattice,
    pub chains: Vec<TransitionMatrix>,
    pub trigger: Option<TriggerCurve>,
    lgd: Vec<f64>,
}

impl<'a> World<'a> {
    pub fn new(portfolio: &Portfolio, lattice: &'a FactorLattice, chains: Vec<TransitionMatrix>) -> Self {
        let total: f64 = portfolio.names().iter().map(|n| n.notional).sum();
        let lgd = portfolio
            .names()
            .iter()
            .map(|n| n.notional * (1.0 - n.recovery) / total)
            .collect();
        Self {
            lattice,
            chains,
            trigger: None,
            lgd,
        }
    }

    pub fn with_trigger(mut self, curve: TriggerCurve) -> Self {
        self.trigger = Some(curve);
        self
    }

    fn first(&self) -> usize {
        self.chains.first().map_or(0, |c| c.from)
    }

    /// Factor paths with probabilities, from the chain conditionals.
    pub fn paths(&self) -> Vec<(Vec<usize>, f64)> {
        let first = self.first();
        // the chain's own row sums, so the oracle shares its measure exactly
        let p0 = match self.chains.first() {
            Some(c) => c.row_sums(),
            None => self.lattice.marginal(first).to_vec(),
        };
        let mut out: Vec<(Vec<usize>, f64)> = p0
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(i, &p)| (vec![i], p))
            .collect();
        for c in &self.chains {
            let mut next = Vec::new();
            for (path, p) in out {
                let i = *path.last().unwrap();
                let row: f64 = (0..c.cols()).map(|j| c.get(i, j)).sum();
                for j in 0..c.cols() {
                    let q = c.get(i, j);
                    if q > 0.0 {
                        let mut np = path.clone();
                        np.push(j);
                        next.push((np, p * q / row));
                    }
                }
            }
            out = next;
        }
        out
    }

    /// Probability of first default at each horizon of the path, then of survival.
    fn default_law(curve: &[Vec<f64>], first: usize, path: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(path.len() + 1);
        let mut prev = 0.0;
        for (s, &x) in path.iter().enumerate() {
            let q = curve[first + s][x];
            let d = q - prev;
            assert!(d > -1e-12, "inadmissible path: cumulative default falls");
            out.push(d.max(0.0));
            prev = q;
        }
        out.push(1.0 - prev);
        out
    }

    pub fn for_each(&self, mut f: impl FnMut(&Outcome)) {
        let first = self.first();
        let n = self.lgd.len();
        for (path, pp) in self.paths() {
            let laws: Vec<Vec<f64>> = (0..n)
                .map(|k| Self::default_law(self.lattice.curve(k), first, &path))
                .collect();
            let trig_law = match &self.trigger {
                Some(c) => Self::default_law(c.rows(), first, &path),
                None => vec![0.0; path.len()].into_iter().chain([1.0]).collect(),
            };
            let mut defaults = vec![NEVER; n];
            self.recurse(0, pp, &path, &laws, &trig_law, &mut defaults, first, &mut f);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse(
        &self,
        k: usize,
        prob: f64,
        path: &[usize],
        laws: &[Vec<f64>],
        trig_law: &[f64],
        defaults: &mut Vec<usize>,
        first: usize,
        f: &mut impl FnMut(&Outcome),
    ) {
        if prob == 0.0 {
            return;
        }
        if k == defaults.len() {
            for (s, &pt) in trig_law.iter().enumerate() {
                if pt == 0.0 {
                    continue;
                }
                let trigger = if s == path.len() { NEVER } else { first + s };
                f(&Outcome {
                    first,
                    path,
                    defaults,
                    trigger,
                    prob: prob * pt,
                    lgd: &self.lgd,
                });
            }
            return;
        }
        for (s, &pd) in laws[k].iter().enumerate() {
            defaults[k] = if s == path.len() { NEVER } else { first + s };
            self.recurse(k + 1, prob * pd, path, laws, trig_law, defaults, first, f);
        }
        defaults[k] = NEVER;
    }

    pub fn expect(&self, f: impl Fn(&Outcome) -> f64) -> f64 {
        let mut acc = 0.0;
        self.for_each(|o| acc += o.prob * f(o));
        acc
    }

    /// Groups outcomes by `key` (skipping `None`) and accumulates
    /// `(probability, probability * value)` per group.
    pub fn grouped<K: Hash + Eq>(
        &self,
        key: impl Fn(&Outcome) -> Option<K>,
        value: impl Fn(&Outcome) -> f64,
    ) -> HashMap<K, (f64, f64)> {
        let mut out: HashMap<K, (f64, f64)> = HashMap::new();
        self.for_each(|o| {
            if let Some(k) = key(o) {
                let e = out.entry(k).or_default();
                e.0 += o.prob;
                e.1 += o.prob * value(o);
            }
        });
        out
    }

    /// `sum_g max(E[value; g] - k P(g), 0)` over the groups of `key`.
    pub fn conditioned_call(
        &self,
        key: impl Fn(&Outcome) -> Option<Vec<u64>>,
        value: impl Fn(&Outcome) -> f64,
        k: f64,
    ) -> f64 {
        let mut groups: Vec<(Vec<u64>, (f64, f64))> = self.grouped(key, value).into_iter().collect();
        groups.sort_by(|a, b| a.0.cmp(&b.0));
        groups.iter().map(|(_, (p, s))| (s - k * p).max(0.0)).sum()
    }
}

pub fn tl(loss: f64, a: f64, d: f64) -> f64 {
    (loss - a).clamp(0.0, d - a) / (d - a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainKind {
    Comonotonic,
    MaxEntropy,
}

impl ChainKind {
    pub const ALL: [ChainKind; 2] = [ChainKind::Comonotonic, ChainKind::MaxEntropy];
}

pub fn build_chains(lattice: &FactorLattice, kind: ChainKind) -> Vec<TransitionMatrix> {
    (0..lattice.n_horizons() - 1)
        .map(|h| {
            let (p, r) = (lattice.marginal(h), lattice.marginal(h + 1));
            match kind {
                ChainKind::Comonotonic => comonotonic_coupling(p, r, h, h + 1).unwrap(),
                ChainKind::MaxEntropy => max_entropy_coupling(
                    p,
                    r,
                    &SupportMask::Monotone,
                    MARGINAL_TOL,
                    10_000,
                    h,
                    h + 1,
                )
                .unwrap(),
            }
        })
        .collect()
}

pub fn law(chains: &[TransitionMatrix]) -> PathLaw {
    compose_chain(chains).unwrap()
}

pub struct Instance {
    pub portfolio: Portfolio,
    pub lattice: FactorLattice,
    pub curve: DiscountCurve,
}

fn random_marginal(rng: &mut StdRng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

/// Pushes mass towards higher states with an upper-triangular stochastic
/// matrix, so the factor can only move up.
fn drift_up(rng: &mut StdRng, p: &[f64]) -> Vec<f64> {
    let n = p.len();
    let mut r = vec![0.0; n];
    for i in 0..n {
        let stay = rng.random_range(0.3..1.0);
        r[i] += p[i] * stay;
        let rest = p[i] * (1.0 - stay);
        if i + 1 == n {
            r[i] += rest;
        } else {
            let w: Vec<f64> = (i + 1..n).map(|_| rng.random_range(0.1..1.0)).collect();
            let s: f64 = w.iter().sum();
            for (j, wj) in (i + 1..n).zip(&w) {
                r[j] += rest * wj / s;
            }
        }
    }
    let s: f64 = r.iter().sum();
    r.iter().map(|x| x / s).collect()
}

/// Random portfolio and lattice whose curves are admissible under any
/// coupling on the monotone support.
pub fn random_instance(seed: u64, names: (usize, usize), states: (usize, usize), horizons: usize) -> Instance {
    let mut rng = StdRng::seed_from_u64(seed);
    let n_names = rng.random_range(names.0..=names.1);
    let n_states = rng.random_range(states.0..=states.1);
    let notionals = [1.0, 2.0, 0.5];
    let recoveries = [0.4, 0.0, 0.25, 0.5];
    let portfolio = Portfolio::new(
        (0..n_names)
            .map(|k| {
                NameCredit::new(
                    format!("C{k}"),
                    notionals[rng.random_range(0..notionals.len())],
                    recoveries[rng.random_range(0..recoveries.len())],
                )
                .unwrap()
            })
            .collect(),
    )
    .unwrap();

    let mut marginals = vec![random_marginal(&mut rng, n_states)];
    for _ in 1..horizons {
        let next = drift_up(&mut rng, marginals.last().unwrap());
        marginals.push(next);
    }
    let times: Vec<f64> = (1..=horizons).map(|h| h as f64 * rng.random_range(0.8..1.5)).collect();
    let mut times_sorted = times.clone();
    times_sorted.sort_by(f64::total_cmp);
    for k in 1..times_sorted.len() {
        if times_sorted[k] <= times_sorted[k - 1] {
            times_sorted[k] = times_sorted[k - 1] + 0.5;
        }
    }

    let state_mult: Vec<f64> = {
        let mut m: Vec<f64> = (0..n_states).map(|_| rng.random_range(0.2..2.5)).collect();
        m.sort_by(f64::total_cmp);
        m
    };
    let curves = (0..n_names)
        .map(|_| {
            let base = rng.random_range(0.01..0.25);
            let mut growth = 1.0;
            (0..horizons)
                .map(|h| {
                    if h > 0 {
                        growth *= rng.random_range(1.0..2.0);
                    }
                    state_mult
                        .iter()
                        .map(|m| (base * m * growth).min(1.0))
                        .collect()
                })
                .collect()
        })
        .collect();
    let lattice = FactorLattice::new(times_sorted.clone(), marginals, curves).unwrap();
    let rate = rng.random_range(0.0..0.06);
    let curve = DiscountCurve::flat_rate(rate, &times_sorted).unwrap();
    Instance {
        portfolio,
        lattice,
        curve,
    }
}

/// A mid-sized instance: 24 names, 4 factor states, horizons at 1, 3, 5 years.
pub fn desk_instance() -> Instance {
    let names = (0..24)
        .map(|k| {
            let notional = if k % 3 == 0 { 2.0 } else { 1.0 };
            NameCredit::new(format!("D{k:02}"), notional, 0.4).unwrap()
        })
        .collect();
    let portfolio = Portfolio::new(names).unwrap();
    let marginals = vec![
        vec![0.4, 0.3, 0.2, 0.1],
        vec![0.25, 0.3, 0.25, 0.2],
        vec![0.15, 0.25, 0.3, 0.3],
    ];
    let state_q = [
        [0.004, 0.012, 0.03, 0.08],
        [0.015, 0.04, 0.09, 0.2],
        [0.03, 0.07, 0.15, 0.32],
    ];
    let curves = (0..24)
        .map(|k| {
            let tilt = 0.7 + 0.6 * (k as f64) / 23.0;
            state_q
                .iter()
                .map(|row| row.iter().map(|q| (q * tilt).min(1.0)).collect())
                .collect()
        })
        .collect();
    let times = vec![1.0, 3.0, 5.0];
    let lattice = FactorLattice::new(times.clone(), marginals, curves).unwrap();
    let curve = DiscountCurve::flat_rate(0.03, &times).unwrap();
    Instance {
        portfolio,
        lattice,
        curve,
    }
}

/// A small instance the enumerator handles quickly: 5 names, 2 states, 3 horizons.
pub fn small_desk_instance() -> Instance {
    let names = (0..5)
        .map(|k| NameCredit::new(format!("S{k}"), 1.0 + (k % 2) as f64, 0.4).unwrap())
        .collect();
    let portfolio = Portfolio::new(names).unwrap();
    let marginals = vec![vec![0.6, 0.4], vec![0.45, 0.55], vec![0.3, 0.7]];
    let state_q = [[0.03, 0.1], [0.08, 0.25], [0.14, 0.4]];
    let curves = (0..5)
        .map(|k| {
            let tilt = 0.8 + 0.1 * k as f64;
            state_q
                .iter()
                .map(|row| row.iter().map(|q| q * tilt).collect())
                .collect()
        })
        .collect();
    let times = vec![1.0, 3.0, 5.0];
    let lattice = FactorLattice::new(times.clone(), marginals, curves).unwrap();
    let curve = DiscountCurve::flat_rate(0.03, &times).unwrap();
    Instance {
        portfolio,
        lattice,
        curve,
    }
}

/// Couplings of `p` and `r` on the monotone support drawn by perturbing
/// the max-entropy starting point with random positive weights and refitting.
pub fn random_couplings(p: &[f64], r: &[f64], count: usize, seed: u64) -> Vec<TransitionMatrix> {
    let mut rng = StdRng::seed_from_u64(seed);
    let (n, m) = (p.len(), r.len());
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let sharp = rng.random_range(0.5..6.0);
        let mut q: Vec<f64> = (0..n * m)
            .map(|k| {
                let (i, j) = (k / m, k % m);
                if j >= i {
                    rng.random_range(0.0f64..1.0).powf(sharp)
                } else {
                    0.0
                }
            })
            .collect();
        // Sinkhorn refit onto the marginals; rejected when it does not settle.
        let mut ok = false;
        for _ in 0..5000 {
            for i in 0..n {
                let s: f64 = q[i * m..(i + 1) * m].iter().sum();
                if s > 0.0 {
                    for v in &mut q[i * m..(i + 1) * m] {
                        *v *= p[i] / s;
                    }
                }
            }
            for j in 0..m {
                let s: f64 = (0..n).map(|i| q[i * m + j]).sum();
                if s > 0.0 {
                    for i in 0..n {
                        q[i * m + j] *= r[j] / s;
                    }
                }
            }
            let worst = (0..n)
                .map(|i| (q[i * m..(i + 1) * m].iter().sum::<f64>() - p[i]).abs())
                .fold(0.0, f64::max);
            if worst < 1e-12 {
                ok = true;
                break;
            }
        }
        if ok {
            out.push(TransitionMatrix::new(0, 1, n, m, q, SupportMask::Monotone).unwrap());
        }
    }
    out
}

pub fn context<'a>(inst: &'a Instance, chains: &[TransitionMatrix]) -> tranche_bounds::bounds::PricingContext<'a> {
    tranche_bounds::bounds::PricingContext::new(&inst.portfolio, &inst.lattice, law(chains), inst.curve.clone())
        .unwrap()
}

pub fn tranches(maturity: usize) -> Vec<tranche_bounds::model::Tranche> {
    [(0.0, 0.1), (0.03, 0.07), (0.1, 0.3), (0.3, 1.0)]
        .iter()
        .map(|&(a, d)| tranche_bounds::model::Tranche::new(a, d, maturity).unwrap())
        .collect()
}

/// Joint law of the loss units at horizons 0, 1, 2 given each factor path,
/// built name by name from the default-time categories.
pub fn loss_paths(inst: &Instance, ctx: &PricingContext) -> Vec<(usize, [u32; 3], f64)> {
    let lgd: Vec<f64> = inst.portfolio.names().iter().map(|n| n.lgd()).collect();
    let unit = lgd.iter().cloned().fold(f64::INFINITY, f64::min);
    let units: Vec<u32> = lgd.iter().map(|l| (l / unit).round() as u32).collect();
    for (u, l) in units.iter().zip(&lgd) {
        assert!((*u as f64 * unit - l).abs() < 1e-12);
    }
    let mut out = Vec::new();
    for (path, pr) in ctx.law().enumerate() {
        if pr == 0.0 {
            continue;
        }
        let mut dist: HashMap<[u32; 3], f64> = HashMap::from([([0, 0, 0], 1.0)]);
        for (k, &u) in units.iter().enumerate() {
            let q: Vec<f64> = (0..3).map(|h| inst.lattice.q(k, h, path[h])).collect();
            let cats = [(0, q[0]), (1, q[1] - q[0]), (2, q[2] - q[1]), (3, 1.0 - q[2])];
            let mut next = HashMap::new();
            for (l, p) in &dist {
                for &(first, w) in &cats {
                    if w <= 0.0 {
                        continue;
                    }
                    let mut l2 = *l;
                    for (h, v) in l2.iter_mut().enumerate() {
                        if h >= first {
                            *v += u;
                        }
                    }
                    *next.entry(l2).or_insert(0.0) += p * w;
                }
            }
            dist = next;
        }
        for (l, p) in dist {
            out.push((path[0], l, pr * p));
        }
    }
    out
}

/// Perfect-foresight upper and factor-conditioned lower bound on the option to
/// enter the coupon-bearing tranche at horizon 0, from realized cashflows.
pub fn pv_oracle(inst: &Instance, tr: &Tranche, s: f64, k: f64, settlement: Settlement, paths: &[(usize, [u32; 3], f64)]) -> (f64, f64) {
    let total = inst.portfolio.total_notional();
    let unit = inst.portfolio.names().iter().map(|n| n.lgd()).fold(f64::INFINITY, f64::min);
    let t = inst.lattice.time(0);
    let d: Vec<f64> = (0..3).map(|h| inst.curve.forward_df(t, inst.lattice.time(h))).collect();
    let acc = [0.0, inst.lattice.time(1) - t, inst.lattice.time(2) - inst.lattice.time(1)];
    let value = |l: &[u32; 3]| {
        let x: Vec<f64> = l.iter().map(|&u| tl(u as f64 * unit / total, tr.attach, tr.detach)).collect();
        let prot = match settlement {
            Settlement::AtMaturity => d[2] * x[2],
            Settlement::AtHorizon => x[0] + d[1] * (x[1] - x[0]) + d[2] * (x[2] - x[1]),
        };
        let coupons: f64 = (1..3).map(|h| d[h] * acc[h] * (1.0 - x[h])).sum();
        prot - s * coupons
    };
    let d0 = inst.curve.df(t);
    let upper: f64 = paths.iter().map(|(_, l, p)| p * (value(l) - k).max(0.0)).sum();
    let mut by_x: HashMap<usize, (f64, f64)> = HashMap::new();
    for (x, l, p) in paths {
        let e = by_x.entry(*x).or_default();
        e.0 += p;
        e.1 += p * value(l);
    }
    let lower: f64 = by_x.values().map(|(p, v)| (v - k * p).max(0.0)).sum();
    (d0 * lower, d0 * upper)
}
