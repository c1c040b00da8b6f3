//! Upper and lower price bounds for European tranche loss options.
//!
//! All bound functions take an effective strike `K / d(t,T)` in tranche
//! notional units and return undiscounted values; [`PricingContext`] applies
//! the `d(0,T)` prefactor and put-call parity.

use crate::coupling::{feasible_support, validate_coupling, PathLaw};
use crate::error::{Error, Result};
use crate::loss::{expected_tranche_loss_ad, ConditionalLossSet, LossDistribution, LossEngine};
use crate::lp::{LinearProgram, Relation};
use crate::model::{
    tranche_loss, BoundsResult, DiscountCurve, FactorLattice, OptionKind, Portfolio,
    SupportMask, Tranche, TrancheLossOptionSpec, TransitionMatrix, LP_TOL, MARGINAL_TOL,
};

/// `K / d(t,T)` for the spec's exercise and maturity horizons.
pub fn discount_adjusted_strike(
    spec: &TrancheLossOptionSpec,
    lattice: &FactorLattice,
    curve: &DiscountCurve,
) -> f64 {
    let t = lattice.time(spec.exercise);
    let big_t = lattice.time(spec.tranche.maturity);
    spec.strike / curve.forward_df(t, big_t)
}

/// `E[max(TL - k, 0)]` under `dist`, computed as the expected loss of the
/// `(A + k(D-A), D)` tranche rescaled to the original tranche notional.
pub fn upper_bound_european(tranche: &Tranche, k_eff: f64, dist: &LossDistribution) -> f64 {
    if k_eff >= 1.0 {
        return 0.0;
    }
    let width = tranche.width();
    let shifted = tranche.attach + k_eff * width;
    expected_tranche_loss_ad(dist, shifted, tranche.detach) * (tranche.detach - shifted) / width
}

/// `max(ETL - k, 0)`.
pub fn naive_lower_bound(etl: f64, k_eff: f64) -> f64 {
    (etl - k_eff).max(0.0)
}

fn check_chain_inputs(chain: &TransitionMatrix, p: &[f64], v: &[f64]) -> Result<()> {
    if chain.rows() != p.len() || chain.cols() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "coupling is {}x{}, expected {}x{}",
            chain.rows(),
            chain.cols(),
            p.len(),
            v.len()
        )));
    }
    for (i, (s, e)) in chain.row_sums().iter().zip(p).enumerate() {
        if (s - e).abs() > MARGINAL_TOL {
            return Err(Error::DimensionMismatch(format!(
                "coupling row {i} sums to {s}, exercise-horizon marginal is {e}"
            )));
        }
    }
    Ok(())
}

/// `sum_i max(sum_j q_ij v_j - k p_i, 0)` with `p` the exercise-horizon marginal.
pub fn lower_bound_factor(chain: &TransitionMatrix, p: &[f64], v: &[f64], k_eff: f64) -> Result<f64> {
    check_chain_inputs(chain, p, v)?;
    Ok(lower_bound_on_chain(chain, v, k_eff))
}

/// The factor lower bound of a coupling, with `p` read off its row sums.
pub fn lower_bound_on_chain(chain: &TransitionMatrix, v: &[f64], k_eff: f64) -> f64 {
    (0..chain.rows())
        .map(|i| {
            let row = chain.row(i);
            let mass: f64 = row.iter().sum();
            let cond: f64 = row.iter().zip(v).map(|(q, v)| q * v).sum();
            (cond - k_eff * mass).max(0.0)
        })
        .sum()
}

/// `sum_ij q_ij max(v_j - k, 0)`: the exerciser also sees the terminal factor.
pub fn lower_bound_perfect_foresight(
    chain: &TransitionMatrix,
    p: &[f64],
    v: &[f64],
    k_eff: f64,
) -> Result<f64> {
    check_chain_inputs(chain, p, v)?;
    Ok((0..chain.rows())
        .map(|i| {
            chain
                .row(i)
                .iter()
                .zip(v)
                .map(|(q, v)| q * (v - k_eff).max(0.0))
                .sum::<f64>()
        })
        .sum())
}

/// Data for the lowest lower bound over all couplings of two marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct LlbInstance {
    pub p: Vec<f64>,
    pub r: Vec<f64>,
    /// Terminal value per target state, in `[0, 1]`.
    pub v: Vec<f64>,
    pub strike: f64,
    pub mask: SupportMask,
}

impl LlbInstance {
    fn check(&self) -> Result<()> {
        if self.v.len() != self.r.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} terminal values for {} target states",
                self.v.len(),
                self.r.len()
            )));
        }
        if let Some(j) = self.v.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput(format!(
                "terminal value {} at state {j} outside [0, 1]",
                self.v[j]
            )));
        }
        if !(self.strike >= 0.0) {
            return Err(Error::InvalidInput(format!("negative strike {}", self.strike)));
        }
        self.mask.check_shape(self.p.len(), self.r.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlbSolution {
    pub value: f64,
    pub coupling: TransitionMatrix,
}

/// Minimizes the factor lower bound over the coupling polytope.
///
/// Solved as the epigraph LP `min sum z_i` subject to
/// `z_i >= sum_j q_ij v_j - K p_i`, `z >= 0`, both marginal constraints, and
/// the support mask. The reported value is recomputed from the returned
/// coupling, which is validated at `lp_tol`.
pub fn llb(instance: &LlbInstance, lp_tol: f64, from: usize, to: usize) -> Result<LlbSolution> {
    instance.check()?;
    let (p, r, v, k) = (&instance.p, &instance.r, &instance.v, instance.strike);
    let (n, m) = (p.len(), r.len());
    let support = feasible_support(p, r, &instance.mask)?;

    let cells: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .filter(|&(i, j)| support[i * m + j])
        .collect();
    let rows: Vec<usize> = (0..n).filter(|&i| p[i] > 0.0).collect();
    let n_q = cells.len();
    let mut objective = vec![0.0; n_q + rows.len()];
    for z in &mut objective[n_q..] {
        *z = 1.0;
    }
    let mut lp = LinearProgram::new(objective);
    for (zi, &i) in rows.iter().enumerate() {
        let mut coeffs = vec![(n_q + zi, 1.0)];
        coeffs.extend(
            cells
                .iter()
                .enumerate()
                .filter(|(_, c)| c.0 == i && v[c.1] != 0.0)
                .map(|(c, &(_, j))| (c, -v[j])),
        );
        lp.add_row(coeffs, Relation::Ge, -k * p[i]);
    }
    for &i in &rows {
        let coeffs = cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.0 == i)
            .map(|(c, _)| (c, 1.0))
            .collect();
        lp.add_row(coeffs, Relation::Eq, p[i]);
    }
    for j in (0..m).filter(|&j| r[j] > 0.0) {
        let coeffs = cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.1 == j)
            .map(|(c, _)| (c, 1.0))
            .collect();
        lp.add_row(coeffs, Relation::Eq, r[j]);
    }
    let sol = lp.solve(lp_tol)?;

    let mut data = vec![0.0; n * m];
    for (c, &(i, j)) in cells.iter().enumerate() {
        data[i * m + j] = sol.x[c];
    }
    let coupling = TransitionMatrix::new(from, to, n, m, data, instance.mask.clone())?;
    let violations = validate_coupling(&coupling, p, r, &instance.mask, lp_tol);
    if !violations.is_empty() {
        return Err(Error::LinearProgram(format!(
            "optimal coupling fails validation: {}",
            violations[0]
        )));
    }
    let value = lower_bound_on_chain(&coupling, v, k);
    if (value - sol.objective).abs() > lp_tol {
        return Err(Error::LinearProgram(format!(
            "objective {} disagrees with the bound {value} of the returned coupling",
            sol.objective
        )));
    }
    Ok(LlbSolution { value, coupling })
}

/// `put = call - d(0,T) (ETL - K~)` applied to both bounds.
pub fn put_from_call(call: &BoundsResult, etl: f64, k_eff: f64, d0t: f64) -> BoundsResult {
    let forward = d0t * (etl - k_eff);
    BoundsResult {
        lower: call.lower - forward,
        upper: call.upper - forward,
        method: call.method.clone(),
        std_err_lower: call.std_err_lower,
        std_err_upper: call.std_err_upper,
        approximate: call.approximate,
    }
}

/// Every semi-analytic bound for one European spec, as present values.
#[derive(Debug, Clone, PartialEq)]
pub struct EuropeanBounds {
    pub kind: OptionKind,
    /// Undiscounted expected tranche loss at maturity.
    pub etl: f64,
    pub effective_strike: f64,
    /// `d(0,T)`.
    pub discount: f64,
    pub upper: f64,
    pub naive: f64,
    pub factor: f64,
    pub perfect_foresight: f64,
}

impl EuropeanBounds {
    pub fn factor_bounds(&self, method: &str) -> BoundsResult {
        BoundsResult::exact(self.factor, self.upper, method)
    }
}

/// Portfolio, lattice, path law, and discount curve with the conditional
/// loss laws of every horizon precomputed.
#[derive(Debug, Clone)]
pub struct PricingContext<'a> {
    engine: LossEngine<'a>,
    law: PathLaw,
    curve: DiscountCurve,
    sets: Vec<ConditionalLossSet>,
}

impl<'a> PricingContext<'a> {
    pub fn new(
        portfolio: &'a Portfolio,
        lattice: &'a FactorLattice,
        law: PathLaw,
        curve: DiscountCurve,
    ) -> Result<Self> {
        Self::with_engine(LossEngine::new(portfolio, lattice)?, law, curve)
    }

    pub fn with_engine(engine: LossEngine<'a>, law: PathLaw, curve: DiscountCurve) -> Result<Self> {
        let lattice = engine.lattice();
        for h in law.first_horizon()..=law.last_horizon() {
            if h >= lattice.n_horizons() || law.marginal(h).len() != lattice.n_states(h) {
                return Err(Error::DimensionMismatch(format!(
                    "path law does not match the lattice at horizon {h}"
                )));
            }
            let gap = law
                .marginal(h)
                .iter()
                .zip(lattice.marginal(h))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if gap > MARGINAL_TOL {
                return Err(Error::DimensionMismatch(format!(
                    "path law marginal at horizon {h} differs from the lattice by {gap:.3e}"
                )));
            }
        }
        let sets = (0..lattice.n_horizons())
            .map(|h| engine.conditional_set(h))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            engine,
            law,
            curve,
            sets,
        })
    }

    pub fn engine(&self) -> &LossEngine<'a> {
        &self.engine
    }

    pub fn lattice(&self) -> &FactorLattice {
        self.engine.lattice()
    }

    pub fn law(&self) -> &PathLaw {
        &self.law
    }

    pub fn curve(&self) -> &DiscountCurve {
        &self.curve
    }

    pub fn conditional_set(&self, h: usize) -> &ConditionalLossSet {
        &self.sets[h]
    }

    /// Joint factor law between two horizons.
    pub fn chain(&self, from: usize, to: usize) -> Result<TransitionMatrix> {
        self.law.joint(from, to)
    }

    /// Tranche loss expectation given each factor state at `h`.
    pub fn conditional_etl(&self, tranche: &Tranche, h: usize) -> Vec<f64> {
        self.sets[h]
            .dists
            .iter()
            .map(|d| expected_tranche_loss_ad(d, tranche.attach, tranche.detach).clamp(0.0, 1.0))
            .collect()
    }

    /// `E[max(TL - k, 0) | X_h = j]` for each state `j`.
    pub fn conditional_call(&self, tranche: &Tranche, h: usize, k_eff: f64) -> Vec<f64> {
        self.sets[h]
            .dists
            .iter()
            .map(|d| upper_bound_european(tranche, k_eff, d))
            .collect()
    }

    pub fn etl(&self, tranche: &Tranche, h: usize) -> f64 {
        dot(self.lattice().marginal(h), &self.conditional_etl(tranche, h))
    }

    /// Unconditional loss law at horizon `h`.
    pub fn loss_distribution(&self, h: usize) -> Result<LossDistribution> {
        crate::loss::mixture_loss_distribution(&self.sets[h], self.lattice().marginal(h))
    }

    /// Time-zero discount factor of a horizon and the forward factor between two.
    pub fn discounts(&self, t: usize, big_t: usize) -> (f64, f64) {
        let lattice = self.lattice();
        let (tt, tm) = (lattice.time(t), lattice.time(big_t));
        (self.curve.df(tm), self.curve.forward_df(tt, tm))
    }

    pub fn effective_strike(&self, spec: &TrancheLossOptionSpec) -> f64 {
        discount_adjusted_strike(spec, self.lattice(), &self.curve)
    }

    fn check_spec(&self, spec: &TrancheLossOptionSpec) -> Result<()> {
        spec.check_horizons(self.lattice())?;
        if !self.law.covers(spec.exercise) || !self.law.covers(spec.tranche.maturity) {
            return Err(Error::DimensionMismatch(format!(
                "no chain links exercise horizon {} to maturity {}",
                spec.exercise, spec.tranche.maturity
            )));
        }
        Ok(())
    }

    /// Upper, naive, factor, and perfect-foresight bounds for the spec's
    /// tranche and strike, ignoring its trigger.
    pub fn european(&self, spec: &TrancheLossOptionSpec) -> Result<EuropeanBounds> {
        self.check_spec(spec)?;
        let (t, big_t) = (spec.exercise, spec.tranche.maturity);
        let tranche = &spec.tranche;
        let k_eff = self.effective_strike(spec);
        let (d0t, _) = self.discounts(t, big_t);
        let chain = self.chain(t, big_t)?;
        let p = self.lattice().marginal(t);
        let r = self.lattice().marginal(big_t);
        let v = self.conditional_etl(tranche, big_t);
        let w = self.conditional_call(tranche, big_t, k_eff);

        let etl = dot(r, &v);
        let upper = dot(r, &w);
        let naive = naive_lower_bound(etl, k_eff);
        let factor = lower_bound_factor(&chain, p, &v, k_eff)?;
        let pf = lower_bound_perfect_foresight(&chain, p, &v, k_eff)?;

        let parity = match spec.kind {
            OptionKind::Call => 0.0,
            OptionKind::Put => d0t * (etl - k_eff),
        };
        Ok(EuropeanBounds {
            kind: spec.kind,
            etl,
            effective_strike: k_eff,
            discount: d0t,
            upper: d0t * upper - parity,
            naive: d0t * naive - parity,
            factor: d0t * factor - parity,
            perfect_foresight: d0t * pf - parity,
        })
    }

    /// The factor-state instance of the lowest lower bound for a spec.
    pub fn llb_instance(&self, spec: &TrancheLossOptionSpec, mask: SupportMask) -> LlbInstance {
        let (t, big_t) = (spec.exercise, spec.tranche.maturity);
        LlbInstance {
            p: self.lattice().marginal(t).to_vec(),
            r: self.lattice().marginal(big_t).to_vec(),
            v: self.conditional_etl(&spec.tranche, big_t),
            strike: self.effective_strike(spec),
            mask,
        }
    }

    /// Lowest lower bound as a present value, with its optimal coupling.
    pub fn llb(&self, spec: &TrancheLossOptionSpec, mask: SupportMask) -> Result<LlbSolution> {
        spec.check_horizons(self.lattice())?;
        let inst = self.llb_instance(spec, mask);
        let (t, big_t) = (spec.exercise, spec.tranche.maturity);
        let mut sol = llb(&inst, LP_TOL, t, big_t)?;
        let (d0t, _) = self.discounts(t, big_t);
        sol.value *= d0t;
        if spec.kind == OptionKind::Put {
            let etl = dot(&inst.r, &inst.v);
            sol.value -= d0t * (etl - inst.strike);
        }
        Ok(sol)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Top-down LLB instance on a loss grid: `v_j = tranche_loss(l_j)`.
pub fn loss_chain_instance(
    start: &LossDistribution,
    end: &LossDistribution,
    tranche: &Tranche,
    k_eff: f64,
) -> LlbInstance {
    let grid = end.grid();
    let mut allowed = Vec::with_capacity(start.grid().len() * grid.len());
    for &a in start.grid() {
        for &b in grid {
            allowed.push(b >= a);
        }
    }
    LlbInstance {
        p: start.probs().to_vec(),
        r: end.probs().to_vec(),
        v: grid
            .iter()
            .map(|&l| tranche_loss(l, tranche.attach, tranche.detach))
            .collect(),
        strike: k_eff,
        mask: SupportMask::Custom {
            rows: start.grid().len(),
            cols: grid.len(),
            allowed,
        },
    }
}
