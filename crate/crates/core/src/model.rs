//! Domain types shared by every pricing module: the reference portfolio, the
//! tranche, the factor lattice that carries the joint distribution of default
//! indicators, couplings between horizons, and deterministic discounting.
//!
//! All values are immutable once constructed. Validation of the model-level
//! invariants is reported as data through [`validate_lattice`] so that callers
//! can list every problem at once.

use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};

/// Tolerance for probability normalization of user inputs.
pub const INPUT_TOL: f64 = 1e-12;
/// Tolerance for coupling marginals (IPF stopping criterion and validation).
pub const MARGINAL_TOL: f64 = 1e-10;
/// Feasibility and optimality tolerance of the linear programs.
pub const LP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct NameCredit {
    pub id: String,
    pub notional: f64,
    pub recovery: f64,
}

impl NameCredit {
    pub fn new(id: impl Into<String>, notional: f64, recovery: f64) -> Result<Self> {
        let id = id.into();
        if !(notional > 0.0) || !notional.is_finite() {
            return Err(Error::InvalidInput(format!(
                "name {id}: notional must be positive, got {notional}"
            )));
        }
        if !(0.0..=1.0).contains(&recovery) {
            return Err(Error::InvalidInput(format!(
                "name {id}: recovery must lie in [0, 1], got {recovery}"
            )));
        }
        Ok(Self {
            id,
            notional,
            recovery,
        })
    }

    /// Loss given default in currency units.
    pub fn lgd(&self) -> f64 {
        self.notional * (1.0 - self.recovery)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio {
    names: Vec<NameCredit>,
    total_notional: f64,
}

impl Portfolio {
    pub fn new(names: Vec<NameCredit>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::InvalidInput("portfolio has no names".into()));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate name id {}", n.id)));
            }
        }
        let total_notional = names.iter().map(|n| n.notional).sum();
        Ok(Self {
            names,
            total_notional,
        })
    }

    /// `n` identical names with ids `N0`, `N1`, ...
    pub fn homogeneous(n: usize, notional: f64, recovery: f64) -> Result<Self> {
        let names = (0..n)
            .map(|k| NameCredit::new(format!("N{k}"), notional, recovery))
            .collect::<Result<Vec<_>>>()?;
        Self::new(names)
    }

    pub fn names(&self) -> &[NameCredit] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn total_notional(&self) -> f64 {
        self.total_notional
    }

    /// Per-name loss given default as a fraction of the total notional.
    pub fn lgd_fractions(&self) -> Vec<f64> {
        self.names
            .iter()
            .map(|n| n.lgd() / self.total_notional)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tranche {
    pub attach: f64,
    pub detach: f64,
    /// Index of the maturity horizon in the factor lattice.
    pub maturity: usize,
}

impl Tranche {
    pub fn new(attach: f64, detach: f64, maturity: usize) -> Result<Self> {
        if !(0.0 <= attach && attach < detach && detach <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "tranche requires 0 <= A < D <= 1, got A={attach} D={detach}"
            )));
        }
        Ok(Self {
            attach,
            detach,
            maturity,
        })
    }

    pub fn width(&self) -> f64 {
        self.detach - self.attach
    }

    /// Tranche loss for a portfolio loss fraction, normalized to tranche notional.
    pub fn loss(&self, portfolio_loss: f64) -> f64 {
        tranche_loss(portfolio_loss, self.attach, self.detach)
    }
}

/// `min(max(L - A, 0), D - A) / (D - A)`.
pub fn tranche_loss(loss: f64, attach: f64, detach: f64) -> f64 {
    let width = detach - attach;
    if width <= 0.0 {
        return 0.0;
    }
    (loss - attach).clamp(0.0, width) / width
}

/// Which entries of a coupling matrix may carry mass.
#[derive(Debug, Clone, PartialEq)]
pub enum SupportMask {
    Full,
    /// `q[i][j] = 0` whenever `j < i`: the state index never decreases.
    Monotone,
    Custom {
        rows: usize,
        cols: usize,
        allowed: Vec<bool>,
    },
}

impl SupportMask {
    pub fn custom(rows: usize, cols: usize, allowed: Vec<bool>) -> Result<Self> {
        if allowed.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "support mask has {} entries, expected {rows}x{cols}",
                allowed.len()
            )));
        }
        Ok(SupportMask::Custom {
            rows,
            cols,
            allowed,
        })
    }

    pub fn allows(&self, i: usize, j: usize) -> bool {
        match self {
            SupportMask::Full => true,
            SupportMask::Monotone => j >= i,
            SupportMask::Custom { cols, allowed, .. } => allowed[i * cols + j],
        }
    }

    pub fn check_shape(&self, rows: usize, cols: usize) -> Result<()> {
        if let SupportMask::Custom { rows: r, cols: c, .. } = self {
            if *r != rows || *c != cols {
                return Err(Error::DimensionMismatch(format!(
                    "support mask is {r}x{c}, coupling is {rows}x{cols}"
                )));
            }
        }
        Ok(())
    }
}

/// Joint law of the state at `from` and the state at `to`.
///
/// Entries are joint probabilities: row sums reproduce the source marginal and
/// column sums reproduce the target marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub from: usize,
    pub to: usize,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    mask: SupportMask,
}

impl TransitionMatrix {
    pub fn new(
        from: usize,
        to: usize,
        rows: usize,
        cols: usize,
        data: Vec<f64>,
        mask: SupportMask,
    ) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "coupling data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        mask.check_shape(rows, cols)?;
        Ok(Self {
            from,
            to,
            rows,
            cols,
            data,
            mask,
        })
    }

    pub fn from_rows(
        from: usize,
        to: usize,
        rows: &[Vec<f64>],
        mask: SupportMask,
    ) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::DimensionMismatch("ragged coupling rows".into()));
        }
        Self::new(from, to, n, m, rows.concat(), mask)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn mask(&self) -> &SupportMask {
        &self.mask
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(i)) {
                *o += v;
            }
        }
        out
    }

    /// Probability of the target state given source state `i`; zero row when
    /// the source state carries no mass.
    pub fn conditional_row(&self, i: usize) -> Vec<f64> {
        let row = self.row(i);
        let mass: f64 = row.iter().sum();
        if mass <= 0.0 {
            return vec![0.0; self.cols];
        }
        row.iter().map(|q| q / mass).collect()
    }

    /// Entries with strictly positive mass.
    pub fn positive_support(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.rows).flat_map(move |i| {
            (0..self.cols).filter_map(move |j| (self.get(i, j) > 0.0).then_some((i, j)))
        })
    }
}

/// Discrete one-factor model: the systemic factor takes ordered states at each
/// horizon, and names default independently given the factor state.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorLattice {
    horizons: Vec<f64>,
    marginals: Vec<Vec<f64>>,
    /// `[name][horizon][state]`: probability the name has defaulted by the
    /// horizon given the factor state there.
    cond_default: Vec<Vec<Vec<f64>>>,
}

impl FactorLattice {
    /// Checks shapes only; the probabilistic invariants are reported by
    /// [`validate_lattice`].
    pub fn new(
        horizons: Vec<f64>,
        marginals: Vec<Vec<f64>>,
        cond_default: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if horizons.is_empty() {
            return Err(Error::InvalidInput("lattice has no horizons".into()));
        }
        if marginals.len() != horizons.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} horizons but {} marginals",
                horizons.len(),
                marginals.len()
            )));
        }
        if let Some(h) = marginals.iter().position(|m| m.is_empty()) {
            return Err(Error::InvalidInput(format!("horizon {h} has no states")));
        }
        for (k, curve) in cond_default.iter().enumerate() {
            if curve.len() != horizons.len() {
                return Err(Error::DimensionMismatch(format!(
                    "name {k}: default curve covers {} horizons, lattice has {}",
                    curve.len(),
                    horizons.len()
                )));
            }
            for (h, row) in curve.iter().enumerate() {
                if row.len() != marginals[h].len() {
                    return Err(Error::DimensionMismatch(format!(
                        "name {k}, horizon {h}: {} conditional probabilities for {} states",
                        row.len(),
                        marginals[h].len()
                    )));
                }
            }
        }
        Ok(Self {
            horizons,
            marginals,
            cond_default,
        })
    }

    pub fn horizons(&self) -> &[f64] {
        &self.horizons
    }

    pub fn n_horizons(&self) -> usize {
        self.horizons.len()
    }

    pub fn time(&self, h: usize) -> f64 {
        self.horizons[h]
    }

    pub fn n_states(&self, h: usize) -> usize {
        self.marginals[h].len()
    }

    pub fn marginal(&self, h: usize) -> &[f64] {
        &self.marginals[h]
    }

    pub fn marginals(&self) -> &[Vec<f64>] {
        &self.marginals
    }

    pub fn n_names(&self) -> usize {
        self.cond_default.len()
    }

    pub fn q(&self, name: usize, h: usize, x: usize) -> f64 {
        self.cond_default[name][h][x]
    }

    /// Conditional default probabilities of every name at `(h, x)`.
    pub fn q_at(&self, h: usize, x: usize) -> Vec<f64> {
        self.cond_default.iter().map(|c| c[h][x]).collect()
    }

    pub fn curve(&self, name: usize) -> &[Vec<f64>] {
        &self.cond_default[name]
    }

    pub fn cond_default(&self) -> &[Vec<Vec<f64>>] {
        &self.cond_default
    }

    /// Unconditional default probability of a name by horizon `h`.
    pub fn default_probability(&self, name: usize, h: usize) -> f64 {
        self.marginals[h]
            .iter()
            .zip(&self.cond_default[name][h])
            .map(|(p, q)| p * q)
            .sum()
    }
}

/// Per-state conditional default probabilities of a credit outside the
/// portfolio, indexed `[horizon][state]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerCurve {
    q: Vec<Vec<f64>>,
}

impl TriggerCurve {
    pub fn new(q: Vec<Vec<f64>>) -> Self {
        Self { q }
    }

    /// The same default probability `c` in every state at every horizon.
    pub fn flat(lattice: &FactorLattice, c: f64) -> Self {
        Self {
            q: lattice.marginals.iter().map(|m| vec![c; m.len()]).collect(),
        }
    }

    pub fn at(&self, h: usize, x: usize) -> f64 {
        self.q[h][x]
    }

    pub fn horizon(&self, h: usize) -> &[f64] {
        &self.q[h]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.q
    }

    pub fn check_shape(&self, lattice: &FactorLattice) -> Result<()> {
        if self.q.len() != lattice.n_horizons()
            || self
                .q
                .iter()
                .enumerate()
                .any(|(h, r)| r.len() != lattice.n_states(h))
        {
            return Err(Error::DimensionMismatch(
                "trigger curve does not match the lattice state layout".into(),
            ));
        }
        Ok(())
    }

    /// Same range and monotonicity rules as the portfolio curves.
    pub fn validate(&self, lattice: &FactorLattice, chains: &[TransitionMatrix]) -> Vec<Violation> {
        let mut out = Vec::new();
        if let Err(e) = self.check_shape(lattice) {
            out.push(Violation::Shape(e.to_string()));
            return out;
        }
        check_curve(&self.q, CurveOwner::Trigger, chains, &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscountCurve {
    /// `(t, d(0, t))` pillars, strictly increasing in `t`.
    pillars: Vec<(f64, f64)>,
}

impl DiscountCurve {
    pub fn new(pillars: Vec<(f64, f64)>) -> Result<Self> {
        let mut prev = (0.0, 1.0);
        for &(t, d) in &pillars {
            if !(t > prev.0) {
                return Err(Error::InvalidInput(format!(
                    "discount pillars must be strictly increasing in t > 0, got t={t}"
                )));
            }
            if !(d > 0.0 && d <= prev.1) {
                return Err(Error::InvalidInput(format!(
                    "discount factor at t={t} must lie in (0, {}], got {d}",
                    prev.1
                )));
            }
            prev = (t, d);
        }
        Ok(Self { pillars })
    }

    /// Zero rates everywhere.
    pub fn flat_zero() -> Self {
        Self {
            pillars: Vec::new(),
        }
    }

    /// Continuously compounded flat rate, pinned at the given times.
    pub fn flat_rate(rate: f64, times: &[f64]) -> Result<Self> {
        Self::new(times.iter().filter(|&&t| t > 0.0).map(|&t| (t, (-rate * t).exp())).collect())
    }

    pub fn pillars(&self) -> &[(f64, f64)] {
        &self.pillars
    }

    /// `d(0, t)`, log-linear between pillars and flat-forward beyond the last.
    pub fn df(&self, t: f64) -> f64 {
        if t <= 0.0 || self.pillars.is_empty() {
            return 1.0;
        }
        let mut prev: (f64, f64) = (0.0, 1.0);
        for &(ti, di) in &self.pillars {
            if t <= ti {
                let w = (t - prev.0) / (ti - prev.0);
                return (prev.1.ln() * (1.0 - w) + di.ln() * w).exp();
            }
            prev = (ti, di);
        }
        // extrapolate with the last segment's forward rate
        let n = self.pillars.len();
        let (t1, d1) = self.pillars[n - 1];
        let (t0, d0) = if n >= 2 { self.pillars[n - 2] } else { (0.0, 1.0) };
        let fwd = (d0.ln() - d1.ln()) / (t1 - t0);
        d1 * (-fwd * (t - t1)).exp()
    }

    /// `d(t, T) = d(0, T) / d(0, t)`.
    pub fn forward_df(&self, t: f64, maturity: f64) -> f64 {
        self.df(maturity) / self.df(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptionKind {
    Call,
    Put,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExerciseStyle {
    /// Exercisable at the exercise horizon if the trigger credit defaulted before it.
    AtMaturity,
    /// Exercised at the first observation date following the trigger default.
    AtTrigger,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TriggerSpec {
    AtTime,
    SingleNameDefault {
        curve: TriggerCurve,
        style: ExerciseStyle,
    },
    /// Fires when the portfolio loss at the exercise horizon reaches `alpha`.
    LossThreshold { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrancheLossOptionSpec {
    pub tranche: Tranche,
    pub exercise: usize,
    /// Amount paid at exercise, as a fraction of tranche notional.
    pub strike: f64,
    pub kind: OptionKind,
    pub trigger: TriggerSpec,
}

impl TrancheLossOptionSpec {
    pub fn new(
        tranche: Tranche,
        exercise: usize,
        strike: f64,
        kind: OptionKind,
        trigger: TriggerSpec,
    ) -> Result<Self> {
        if !(strike >= 0.0) || !strike.is_finite() {
            return Err(Error::InvalidInput(format!(
                "strike must be non-negative, got {strike}"
            )));
        }
        if exercise >= tranche.maturity {
            return Err(Error::InvalidInput(format!(
                "exercise horizon {exercise} must precede tranche maturity {}",
                tranche.maturity
            )));
        }
        if let TriggerSpec::LossThreshold { alpha } = trigger {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(Error::InvalidInput(format!(
                    "loss threshold must lie in [0, 1], got {alpha}"
                )));
            }
        }
        Ok(Self {
            tranche,
            exercise,
            strike,
            kind,
            trigger,
        })
    }

    /// A call exercisable at a fixed date.
    pub fn european(tranche: Tranche, exercise: usize, strike: f64) -> Result<Self> {
        Self::new(tranche, exercise, strike, OptionKind::Call, TriggerSpec::AtTime)
    }

    pub fn with_strike(&self, strike: f64) -> Result<Self> {
        Self::new(
            self.tranche,
            self.exercise,
            strike,
            self.kind,
            self.trigger.clone(),
        )
    }

    pub fn check_horizons(&self, lattice: &FactorLattice) -> Result<()> {
        if self.tranche.maturity >= lattice.n_horizons() {
            return Err(Error::DimensionMismatch(format!(
                "tranche maturity horizon {} outside lattice with {} horizons",
                self.tranche.maturity,
                lattice.n_horizons()
            )));
        }
        if let TriggerSpec::SingleNameDefault { curve, .. } = &self.trigger {
            curve.check_shape(lattice)?;
        }
        Ok(())
    }
}

/// Information available to the exerciser in a lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    /// Factor state at the exercise horizon.
    Factor,
    /// Factor state and realized portfolio loss at the exercise horizon.
    FactorAndLoss,
}

/// Price bounds normalized to tranche notional.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsResult {
    pub lower: f64,
    pub upper: f64,
    pub method: String,
    pub std_err_lower: Option<f64>,
    pub std_err_upper: Option<f64>,
    /// Set when the bounds rest on a first-order approximation of the payoff.
    pub approximate: bool,
}

impl BoundsResult {
    pub fn exact(lower: f64, upper: f64, method: impl Into<String>) -> Self {
        Self {
            lower,
            upper,
            method: method.into(),
            std_err_lower: None,
            std_err_upper: None,
            approximate: false,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            lower: self.lower * factor,
            upper: self.upper * factor,
            method: self.method.clone(),
            std_err_lower: self.std_err_lower.map(|s| s * factor.abs()),
            std_err_upper: self.std_err_upper.map(|s| s * factor.abs()),
            approximate: self.approximate,
        }
    }

    /// Slack allowed when checking `lower <= upper`: `tol` plus three
    /// combined standard errors for Monte Carlo results.
    pub fn ordering_slack(&self, tol: f64) -> f64 {
        let sl = self.std_err_lower.unwrap_or(0.0);
        let su = self.std_err_upper.unwrap_or(0.0);
        tol + 3.0 * (sl * sl + su * su).sqrt()
    }

    pub fn is_ordered(&self, tol: f64) -> bool {
        self.lower <= self.upper + self.ordering_slack(tol)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CurveOwner {
    Name(usize),
    Trigger,
}

impl fmt::Display for CurveOwner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurveOwner::Name(k) => write!(f, "name {k}"),
            CurveOwner::Trigger => write!(f, "trigger credit"),
        }
    }
}

/// One broken model invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Shape(String),
    MarginalNormalization { horizon: usize, sum: f64 },
    NegativeProbability { horizon: usize, state: usize, value: f64 },
    DefaultProbabilityRange { owner: CurveOwner, horizon: usize, state: usize, value: f64 },
    StateMonotonicity { owner: CurveOwner, horizon: usize, state: usize },
    CrossHorizon {
        owner: CurveOwner,
        from: (usize, usize),
        to: (usize, usize),
        before: f64,
        after: f64,
    },
    ChainLinkage(String),
    ChainNegative { chain: usize, row: usize, col: usize, value: f64 },
    ChainSupport { chain: usize, row: usize, col: usize, value: f64 },
    ChainMarginal {
        chain: usize,
        side: &'static str,
        state: usize,
        expected: f64,
        actual: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape(s) => write!(f, "{s}"),
            Violation::MarginalNormalization { horizon, sum } => {
                write!(f, "horizon {horizon}: factor marginal sums to {sum}, expected 1")
            }
            Violation::NegativeProbability {
                horizon,
                state,
                value,
            } => write!(
                f,
                "horizon {horizon}, state {state}: negative marginal probability {value}"
            ),
            Violation::DefaultProbabilityRange {
                owner,
                horizon,
                state,
                value,
            } => write!(
                f,
                "{owner}, horizon {horizon}, state {state}: conditional default probability {value} outside [0, 1]"
            ),
            Violation::StateMonotonicity {
                owner,
                horizon,
                state,
            } => write!(
                f,
                "{owner}, horizon {horizon}: conditional default probability decreases at state {state}"
            ),
            Violation::CrossHorizon {
                owner,
                from,
                to,
                before,
                after,
            } => write!(
                f,
                "{owner}: default probability falls from {before} at (horizon {}, state {}) to {after} at (horizon {}, state {}) along an admissible transition",
                from.0, from.1, to.0, to.1
            ),
            Violation::ChainLinkage(s) => write!(f, "{s}"),
            Violation::ChainNegative {
                chain,
                row,
                col,
                value,
            } => write!(f, "chain {chain}: negative entry {value} at ({row}, {col})"),
            Violation::ChainSupport {
                chain,
                row,
                col,
                value,
            } => write!(
                f,
                "chain {chain}: entry ({row}, {col}) = {value} lies outside the support mask"
            ),
            Violation::ChainMarginal {
                chain,
                side,
                state,
                expected,
                actual,
            } => write!(
                f,
                "chain {chain}: {side} marginal at state {state} is {actual}, expected {expected} (coupling constraint sum_j q_ij = p_i(t), sum_i q_ij = p_j(T))"
            ),
        }
    }
}

/// Lists every broken invariant of the lattice and of the chains linking its
/// horizons. An empty result means the model is coherent.
pub fn validate_lattice(lattice: &FactorLattice, chains: &[TransitionMatrix]) -> Vec<Violation> {
    let mut out = Vec::new();
    for (h, m) in lattice.marginals.iter().enumerate() {
        for (x, &p) in m.iter().enumerate() {
            if p < 0.0 || !p.is_finite() {
                out.push(Violation::NegativeProbability {
                    horizon: h,
                    state: x,
                    value: p,
                });
            }
        }
        let sum: f64 = m.iter().sum();
        if (sum - 1.0).abs() > INPUT_TOL {
            out.push(Violation::MarginalNormalization { horizon: h, sum });
        }
    }

    for (k, chain) in chains.iter().enumerate() {
        if chain.to != chain.from + 1 || chain.to >= lattice.n_horizons() {
            out.push(Violation::ChainLinkage(format!(
                "chain {k} links horizons {} -> {}, expected consecutive horizons inside the lattice",
                chain.from, chain.to
            )));
            continue;
        }
        if chain.rows() != lattice.n_states(chain.from) || chain.cols() != lattice.n_states(chain.to)
        {
            out.push(Violation::ChainLinkage(format!(
                "chain {k} is {}x{}, lattice has {} and {} states",
                chain.rows(),
                chain.cols(),
                lattice.n_states(chain.from),
                lattice.n_states(chain.to)
            )));
            continue;
        }
        check_chain_entries(k, chain, &mut out);
        let rows = chain.row_sums();
        for (i, (&actual, &expected)) in rows.iter().zip(lattice.marginal(chain.from)).enumerate() {
            if (actual - expected).abs() > MARGINAL_TOL {
                out.push(Violation::ChainMarginal {
                    chain: k,
                    side: "source",
                    state: i,
                    expected,
                    actual,
                });
            }
        }
        let cols = chain.col_sums();
        for (j, (&actual, &expected)) in cols.iter().zip(lattice.marginal(chain.to)).enumerate() {
            if (actual - expected).abs() > MARGINAL_TOL {
                out.push(Violation::ChainMarginal {
                    chain: k,
                    side: "target",
                    state: j,
                    expected,
                    actual,
                });
            }
        }
    }

    let linked: Vec<&TransitionMatrix> = chains
        .iter()
        .filter(|c| {
            c.to == c.from + 1
                && c.to < lattice.n_horizons()
                && c.rows() == lattice.n_states(c.from)
                && c.cols() == lattice.n_states(c.to)
        })
        .collect();
    for (k, curve) in lattice.cond_default.iter().enumerate() {
        check_curve_refs(curve, CurveOwner::Name(k), &linked, &mut out);
    }
    out
}

fn check_chain_entries(k: usize, chain: &TransitionMatrix, out: &mut Vec<Violation>) {
    for i in 0..chain.rows() {
        for j in 0..chain.cols() {
            let v = chain.get(i, j);
            if v < 0.0 || !v.is_finite() {
                out.push(Violation::ChainNegative {
                    chain: k,
                    row: i,
                    col: j,
                    value: v,
                });
            } else if v != 0.0 && !chain.mask().allows(i, j) {
                out.push(Violation::ChainSupport {
                    chain: k,
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
    }
}

fn check_curve(
    curve: &[Vec<f64>],
    owner: CurveOwner,
    chains: &[TransitionMatrix],
    out: &mut Vec<Violation>,
) {
    let refs: Vec<&TransitionMatrix> = chains
        .iter()
        .filter(|c| {
            c.to < curve.len() && c.rows() == curve[c.from].len() && c.cols() == curve[c.to].len()
        })
        .collect();
    check_curve_refs(curve, owner, &refs, out);
}

fn check_curve_refs(
    curve: &[Vec<f64>],
    owner: CurveOwner,
    chains: &[&TransitionMatrix],
    out: &mut Vec<Violation>,
) {
    for (h, row) in curve.iter().enumerate() {
        for (x, &q) in row.iter().enumerate() {
            if !(0.0..=1.0).contains(&q) {
                out.push(Violation::DefaultProbabilityRange {
                    owner: owner.clone(),
                    horizon: h,
                    state: x,
                    value: q,
                });
            }
            if x > 0 && q < row[x - 1] {
                out.push(Violation::StateMonotonicity {
                    owner: owner.clone(),
                    horizon: h,
                    state: x,
                });
            }
        }
    }
    for chain in chains {
        for (i, j) in chain.positive_support() {
            let before = curve[chain.from][i];
            let after = curve[chain.to][j];
            if after < before {
                out.push(Violation::CrossHorizon {
                    owner: owner.clone(),
                    from: (chain.from, i),
                    to: (chain.to, j),
                    before,
                    after,
                });
            }
        }
    }
}
