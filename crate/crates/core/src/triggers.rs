//! Bounds for options that can only be exercised after a trigger event, and
//! the payoff adapters built on them.

use crate::bounds::{dot, PricingContext};
use crate::error::{Error, Result};
use crate::mc::{mc_generic_trigger_bounds, McOption, PathSet, DEFAULT_SPLIT};
use crate::model::{
    tranche_loss, BoundsResult, Conditioning, ExerciseStyle, OptionKind, Tranche,
    TrancheLossOptionSpec, TransitionMatrix, TriggerCurve, TriggerSpec, INPUT_TOL,
};

/// Lower and upper bound of a triggered call whose trigger probability given
/// the exercise-horizon state `i` is `weight[i]`.
///
/// `lower = sum_i weight_i max(sum_j q_ij v_j - k p_i, 0)` and
/// `upper = sum_i weight_i sum_j q_ij w_j`, undiscounted.
pub fn trigger_weighted_bounds(
    chain: &TransitionMatrix,
    weight: &[f64],
    v: &[f64],
    w: &[f64],
    k_eff: f64,
) -> (f64, f64) {
    let mut lower = 0.0;
    let mut upper = 0.0;
    for (i, &c) in weight.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let row = chain.row(i);
        let mass: f64 = row.iter().sum();
        lower += c * (dot(row, v) - k_eff * mass).max(0.0);
        upper += c * dot(row, w);
    }
    (lower, upper)
}

/// `sum_i weight_i (sum_j q_ij v_j - k p_i)`: the triggered forward used in
/// put-call parity.
fn trigger_weighted_forward(chain: &TransitionMatrix, weight: &[f64], v: &[f64], k_eff: f64) -> f64 {
    weight
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let row = chain.row(i);
            let mass: f64 = row.iter().sum();
            c * (dot(row, v) - k_eff * mass)
        })
        .sum()
}

fn trigger_curve(spec: &TrancheLossOptionSpec) -> Result<(&TriggerCurve, ExerciseStyle)> {
    match &spec.trigger {
        TriggerSpec::SingleNameDefault { curve, style } => Ok((curve, *style)),
        other => Err(Error::InvalidInput(format!(
            "expected a single-name default trigger, got {other:?}"
        ))),
    }
}

/// Bounds for an option exercisable only if an external trigger credit has
/// defaulted. Exercise-at-trigger specs are routed to
/// [`exercise_at_trigger_bounds`].
pub fn single_default_trigger_bounds(
    ctx: &PricingContext,
    spec: &TrancheLossOptionSpec,
) -> Result<BoundsResult> {
    let (curve, style) = trigger_curve(spec)?;
    if style == ExerciseStyle::AtTrigger {
        return exercise_at_trigger_bounds(ctx, spec);
    }
    spec.check_horizons(ctx.lattice())?;
    let (t, big_t) = (spec.exercise, spec.tranche.maturity);
    let k_eff = ctx.effective_strike(spec);
    let (d0t, _) = ctx.discounts(t, big_t);
    let chain = ctx.chain(t, big_t)?;
    let v = ctx.conditional_etl(&spec.tranche, big_t);
    let w = ctx.conditional_call(&spec.tranche, big_t, k_eff);
    let weight = curve.horizon(t);
    let (lo, up) = trigger_weighted_bounds(&chain, weight, &v, &w, k_eff);
    let parity = match spec.kind {
        OptionKind::Call => 0.0,
        OptionKind::Put => trigger_weighted_forward(&chain, weight, &v, k_eff),
    };
    Ok(BoundsResult::exact(
        d0t * (lo - parity),
        d0t * (up - parity),
        "single-default",
    ))
}

/// Exercise at the first observation date after the trigger default, as a
/// series of exercise-at-date options over every horizon up to the spec's
/// exercise horizon.
pub fn exercise_at_trigger_bounds(
    ctx: &PricingContext,
    spec: &TrancheLossOptionSpec,
) -> Result<BoundsResult> {
    let (curve, _) = trigger_curve(spec)?;
    spec.check_horizons(ctx.lattice())?;
    let law = ctx.law();
    if law.first_horizon() != 0 || !law.covers(spec.tranche.maturity) {
        return Err(Error::DimensionMismatch(format!(
            "exercise at trigger needs chains over horizons 0..={}, path law covers {}..={}",
            spec.tranche.maturity,
            law.first_horizon(),
            law.last_horizon()
        )));
    }
    let lattice = ctx.lattice();
    let big_t = spec.tranche.maturity;
    let t_mat = lattice.time(big_t);
    let d0t = ctx.curve().df(t_mat);
    let v = ctx.conditional_etl(&spec.tranche, big_t);

    let mut lower = 0.0;
    let mut upper = 0.0;
    for h in 0..=spec.exercise {
        let weight = interval_default_probability(ctx, curve, h)?;
        let k_h = spec.strike / ctx.curve().forward_df(lattice.time(h), t_mat);
        let chain = ctx.chain(h, big_t)?;
        let w = ctx.conditional_call(&spec.tranche, big_t, k_h);
        let (lo, up) = trigger_weighted_bounds(&chain, &weight, &v, &w, k_h);
        let parity = match spec.kind {
            OptionKind::Call => 0.0,
            OptionKind::Put => trigger_weighted_forward(&chain, &weight, &v, k_h),
        };
        lower += lo - parity;
        upper += up - parity;
    }
    Ok(BoundsResult::exact(
        d0t * lower,
        d0t * upper,
        "exercise-at-trigger",
    ))
}

/// Probability that the trigger credit defaults in `(t_{h-1}, t_h]` given
/// `X_h = i`, for each state `i`.
pub fn interval_default_probability(
    ctx: &PricingContext,
    curve: &TriggerCurve,
    h: usize,
) -> Result<Vec<f64>> {
    let p = ctx.lattice().marginal(h);
    let mut mass: Vec<f64> = p.iter().zip(curve.horizon(h)).map(|(p, q)| p * q).collect();
    if h > 0 {
        let prev = ctx.chain(h - 1, h)?;
        let q_prev = curve.horizon(h - 1);
        for (i, m) in mass.iter_mut().enumerate() {
            *m -= (0..prev.rows()).map(|k| prev.get(k, i) * q_prev[k]).sum::<f64>();
        }
    }
    mass.iter()
        .zip(p)
        .enumerate()
        .map(|(i, (&m, &pi))| {
            if m < -INPUT_TOL {
                return Err(Error::Inadmissible(format!(
                    "trigger default probability falls into horizon {h}, state {i}"
                )));
            }
            Ok(if pi > 0.0 { m.max(0.0) / pi } else { 0.0 })
        })
        .collect()
}

/// The counterparty's default-and-walk-away call: `(1 - R)` times the
/// zero-strike triggered bounds.
pub fn cva_option_value(bounds: &BoundsResult, recovery: f64) -> Result<BoundsResult> {
    if !(0.0..=1.0).contains(&recovery) {
        return Err(Error::InvalidInput(format!(
            "counterparty recovery must lie in [0, 1], got {recovery}"
        )));
    }
    let mut out = bounds.scaled(1.0 - recovery);
    out.method = "cva".into();
    Ok(out)
}

/// [`cva_option_value`] of the spec's single-default bounds with the strike
/// forced to zero.
pub fn cva_bounds(
    ctx: &PricingContext,
    spec: &TrancheLossOptionSpec,
    recovery: f64,
) -> Result<BoundsResult> {
    let mut zero = spec.with_strike(0.0)?;
    zero.kind = OptionKind::Call;
    cva_option_value(&single_default_trigger_bounds(ctx, &zero)?, recovery)
}

/// Per exercise-state, per realized-loss accumulations over the terminal
/// law: mass, tranche loss, and call payoff.
struct ThresholdCells {
    /// `[i][a]` entries, `a` in grid units of the exercise-horizon loss
    mass: Vec<Vec<f64>>,
    loss: Vec<Vec<f64>>,
    call: Vec<Vec<f64>>,
    first_triggered: usize,
}

fn threshold_cells(
    ctx: &PricingContext,
    tranche: &Tranche,
    t: usize,
    alpha: f64,
    k_eff: f64,
) -> Result<ThresholdCells> {
    let big_t = tranche.maturity;
    let chain = ctx.chain(t, big_t)?;
    let engine = ctx.engine();
    let n = engine.grid().n_points();
    let unit = engine.grid().unit();
    let first_triggered = (0..n)
        .find(|&a| a as f64 * unit >= alpha - INPUT_TOL)
        .unwrap_or(n);
    let tl: Vec<f64> = (0..n)
        .map(|b| tranche_loss(b as f64 * unit, tranche.attach, tranche.detach))
        .collect();
    let payoff: Vec<f64> = tl.iter().map(|x| (x - k_eff).max(0.0)).collect();

    let mut cells = ThresholdCells {
        mass: vec![vec![0.0; n]; chain.rows()],
        loss: vec![vec![0.0; n]; chain.rows()],
        call: vec![vec![0.0; n]; chain.rows()],
        first_triggered,
    };
    for (i, j) in chain.positive_support().collect::<Vec<_>>() {
        let q = chain.get(i, j);
        let joint = engine.joint((t, i), (big_t, j))?;
        for a in first_triggered..n {
            let (mut m, mut l, mut c) = (0.0, 0.0, 0.0);
            for b in a..n {
                let pr = joint.prob(a, b);
                if pr != 0.0 {
                    m += pr;
                    l += pr * tl[b];
                    c += pr * payoff[b];
                }
            }
            cells.mass[i][a] += q * m;
            cells.loss[i][a] += q * l;
            cells.call[i][a] += q * c;
        }
    }
    Ok(cells)
}

fn threshold_alpha(spec: &TrancheLossOptionSpec) -> Result<f64> {
    match spec.trigger {
        TriggerSpec::LossThreshold { alpha } => Ok(alpha),
        ref other => Err(Error::InvalidInput(format!(
            "expected a loss-threshold trigger, got {other:?}"
        ))),
    }
}

/// Exact bounds for an option exercisable when the portfolio loss at the
/// exercise horizon reaches `alpha`.
///
/// The upper bound sees the terminal loss. The lower bound's exerciser sees
/// the factor state and whether the trigger fired, or the factor state and
/// the realized loss.
pub fn loss_threshold_bounds(
    ctx: &PricingContext,
    spec: &TrancheLossOptionSpec,
    conditioning: Conditioning,
) -> Result<BoundsResult> {
    let alpha = threshold_alpha(spec)?;
    spec.check_horizons(ctx.lattice())?;
    let (t, big_t) = (spec.exercise, spec.tranche.maturity);
    let k_eff = ctx.effective_strike(spec);
    let (d0t, _) = ctx.discounts(t, big_t);
    let cells = threshold_cells(ctx, &spec.tranche, t, alpha, k_eff)?;
    let a0 = cells.first_triggered;

    let mut upper = 0.0;
    let mut lower = 0.0;
    let mut forward = 0.0;
    for i in 0..cells.mass.len() {
        let mass = &cells.mass[i][a0..];
        let loss = &cells.loss[i][a0..];
        upper += cells.call[i][a0..].iter().sum::<f64>();
        let fwd: f64 = loss.iter().zip(mass).map(|(l, m)| l - k_eff * m).sum();
        forward += fwd;
        lower += match conditioning {
            Conditioning::Factor => fwd.max(0.0),
            Conditioning::FactorAndLoss => loss
                .iter()
                .zip(mass)
                .map(|(l, m)| (l - k_eff * m).max(0.0))
                .sum(),
        };
    }
    let parity = match spec.kind {
        OptionKind::Call => 0.0,
        OptionKind::Put => forward,
    };
    let method = match conditioning {
        Conditioning::Factor => "loss-threshold",
        Conditioning::FactorAndLoss => "loss-threshold (X_t, L_t)",
    };
    Ok(BoundsResult::exact(
        d0t * (lower - parity),
        d0t * (upper - parity),
        method,
    ))
}

/// Probability that the portfolio loss at horizon `t` reaches `alpha`.
pub fn threshold_probability(ctx: &PricingContext, t: usize, alpha: f64) -> Result<f64> {
    let dist = ctx.loss_distribution(t)?;
    Ok(dist
        .iter()
        .filter(|&(l, _)| l >= alpha - INPUT_TOL)
        .map(|(_, p)| p)
        .sum())
}

/// A levered super senior trade: the client sells protection on `tranche`
/// against collateral `collateral` and may walk away when the portfolio loss
/// at `exercise` reaches `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct LssSpec {
    pub tranche: Tranche,
    pub exercise: usize,
    pub alpha: f64,
    /// Fraction of tranche notional.
    pub collateral: f64,
    /// `(horizon, amount)` coupon cashflows, as fractions of tranche notional.
    pub coupons: Vec<(usize, f64)>,
}

impl LssSpec {
    pub fn new(
        tranche: Tranche,
        exercise: usize,
        alpha: f64,
        collateral: f64,
        coupons: Vec<(usize, f64)>,
    ) -> Result<Self> {
        if alpha >= tranche.attach {
            return Err(Error::InvalidInput(format!(
                "trigger level {alpha} must sit below the tranche attachment {}",
                tranche.attach
            )));
        }
        if !(collateral >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "collateral must be non-negative, got {collateral}"
            )));
        }
        if let Some(&(h, _)) = coupons.iter().find(|(h, _)| *h > tranche.maturity) {
            return Err(Error::InvalidInput(format!(
                "coupon at horizon {h} falls after maturity {}",
                tranche.maturity
            )));
        }
        let spec = Self {
            tranche,
            exercise,
            alpha,
            collateral,
            coupons,
        };
        spec.call_spec()?;
        Ok(spec)
    }

    /// The client's walk-away call: strike `C_0`, fired by the loss trigger.
    pub fn call_spec(&self) -> Result<TrancheLossOptionSpec> {
        TrancheLossOptionSpec::new(
            self.tranche,
            self.exercise,
            self.collateral,
            OptionKind::Call,
            TriggerSpec::LossThreshold { alpha: self.alpha },
        )
    }
}

/// Coupons paid before the trigger plus the tranche value delivered at the
/// trigger, as a present value.
pub fn lss_non_option_leg(ctx: &PricingContext, lss: &LssSpec) -> Result<f64> {
    let lattice = ctx.lattice();
    let (t, big_t) = (lss.exercise, lss.tranche.maturity);
    let p_trig = threshold_probability(ctx, t, lss.alpha)?;
    let coupons: f64 = lss
        .coupons
        .iter()
        .map(|&(h, c)| {
            let alive = if h < t { 1.0 } else { 1.0 - p_trig };
            ctx.curve().df(lattice.time(h)) * c * alive
        })
        .sum();
    let cells = threshold_cells(ctx, &lss.tranche, t, lss.alpha, 0.0)?;
    let triggered_loss: f64 = cells
        .loss
        .iter()
        .map(|row| row[cells.first_triggered..].iter().sum::<f64>())
        .sum();
    let (d0t, _) = ctx.discounts(t, big_t);
    Ok(coupons + d0t * triggered_loss)
}

/// LSS bounds from bounds on the embedded call: the subtraction swaps which
/// call bound feeds which LSS bound.
pub fn lss_value_bounds(
    ctx: &PricingContext,
    lss: &LssSpec,
    call: &BoundsResult,
) -> Result<BoundsResult> {
    let leg = lss_non_option_leg(ctx, lss)?;
    Ok(BoundsResult {
        lower: leg - call.upper,
        upper: leg - call.lower,
        method: format!("lss ({})", call.method),
        std_err_lower: call.std_err_upper,
        std_err_upper: call.std_err_lower,
        approximate: call.approximate,
    })
}

/// Option to buy back protection when the loss trigger fires, priced by
/// simulation. Without an explicit strike the buy-back price is the
/// time-zero expected tranche loss at maturity.
pub fn callable_tranche_bounds(
    ctx: &PricingContext,
    spec: &TrancheLossOptionSpec,
    strike: Option<f64>,
    paths: &PathSet,
    conditioning: Conditioning,
) -> Result<BoundsResult> {
    threshold_alpha(spec)?;
    let k = match strike {
        Some(k) => k,
        None => ctx.etl(&spec.tranche, spec.tranche.maturity),
    };
    let spec = spec.with_strike(k)?;
    let option = McOption::from_spec(&spec, ctx.lattice(), ctx.curve())?;
    let mut out = mc_generic_trigger_bounds(&option, paths, conditioning, DEFAULT_SPLIT)?;
    out.method = format!("callable {}", out.method);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{comonotonic_coupling, compose_chain};
    use crate::model::{DiscountCurve, FactorLattice, Portfolio};

    fn two_state() -> (Portfolio, FactorLattice) {
        let portfolio = Portfolio::homogeneous(4, 1.0, 0.0).unwrap();
        let q0 = [0.05, 0.2];
        let q1 = [0.1, 0.5];
        let curves = (0..4)
            .map(|_| vec![q0.to_vec(), q1.to_vec()])
            .collect();
        let lattice =
            FactorLattice::new(vec![1.0, 2.0], vec![vec![0.6, 0.4], vec![0.5, 0.5]], curves).unwrap();
        (portfolio, lattice)
    }

    fn context<'a>(p: &'a Portfolio, l: &'a FactorLattice) -> PricingContext<'a> {
        let c = comonotonic_coupling(l.marginal(0), l.marginal(1), 0, 1).unwrap();
        let law = compose_chain(&[c]).unwrap();
        PricingContext::new(p, l, law, DiscountCurve::flat_rate(0.03, &[1.0, 2.0]).unwrap()).unwrap()
    }

    fn triggered(curve: TriggerCurve, strike: f64) -> TrancheLossOptionSpec {
        TrancheLossOptionSpec::new(
            Tranche::new(0.0, 0.5, 1).unwrap(),
            0,
            strike,
            OptionKind::Call,
            TriggerSpec::SingleNameDefault {
                curve,
                style: ExerciseStyle::AtMaturity,
            },
        )
        .unwrap()
    }

    #[test]
    fn certain_trigger_is_european() {
        let (p, l) = two_state();
        let ctx = context(&p, &l);
        let spec = triggered(TriggerCurve::flat(&l, 1.0), 0.1);
        let b = single_default_trigger_bounds(&ctx, &spec).unwrap();
        let e = ctx.european(&spec).unwrap();
        assert!((b.lower - e.factor).abs() < 1e-15);
        assert!((b.upper - e.upper).abs() < 1e-15);
    }

    #[test]
    fn flat_trigger_scales() {
        let (p, l) = two_state();
        let ctx = context(&p, &l);
        let spec = triggered(TriggerCurve::flat(&l, 0.3), 0.1);
        let b = single_default_trigger_bounds(&ctx, &spec).unwrap();
        let e = ctx.european(&spec).unwrap();
        assert!((b.lower - 0.3 * e.factor).abs() < 1e-15);
        assert!((b.upper - 0.3 * e.upper).abs() < 1e-15);
    }

    #[test]
    fn wrong_way_trigger_is_worth_more() {
        let (p, l) = two_state();
        let ctx = context(&p, &l);
        // same average at the exercise horizon: 0.6 * a + 0.4 * b = 0.2
        let up = TriggerCurve::new(vec![vec![0.1, 0.35], vec![0.2, 0.5]]);
        let down = TriggerCurve::new(vec![vec![0.3, 0.05], vec![0.4, 0.1]]);
        let bu = single_default_trigger_bounds(&ctx, &triggered(up, 0.05)).unwrap();
        let bd = single_default_trigger_bounds(&ctx, &triggered(down, 0.05)).unwrap();
        assert!(bu.lower > bd.lower && bu.upper > bd.upper);
    }

    #[test]
    fn cva_scaling() {
        let b = BoundsResult::exact(0.1, 0.2, "x");
        let full = cva_option_value(&b, 1.0).unwrap();
        assert_eq!((full.lower, full.upper), (0.0, 0.0));
        let none = cva_option_value(&b, 0.0).unwrap();
        assert_eq!((none.lower, none.upper), (0.1, 0.2));
        let part = cva_option_value(&b, 0.4).unwrap();
        assert!((part.lower - 0.06).abs() < 1e-15 && (part.upper - 0.12).abs() < 1e-15);
        assert!(cva_option_value(&b, 1.5).is_err());
    }

    #[test]
    fn exercise_at_trigger_reduces_to_single_date() {
        let (p, l) = two_state();
        let ctx = context(&p, &l);
        let curve = TriggerCurve::new(vec![vec![0.1, 0.3], vec![0.2, 0.5]]);
        let at_mat = triggered(curve.clone(), 0.1);
        let mut at_trig = at_mat.clone();
        at_trig.trigger = TriggerSpec::SingleNameDefault {
            curve,
            style: ExerciseStyle::AtTrigger,
        };
        let a = single_default_trigger_bounds(&ctx, &at_mat).unwrap();
        let b = exercise_at_trigger_bounds(&ctx, &at_trig).unwrap();
        assert!((a.lower - b.lower).abs() < 1e-15 && (a.upper - b.upper).abs() < 1e-15);

        let zero = TriggerSpec::SingleNameDefault {
            curve: TriggerCurve::flat(&l, 0.0),
            style: ExerciseStyle::AtTrigger,
        };
        at_trig.trigger = zero;
        let z = exercise_at_trigger_bounds(&ctx, &at_trig).unwrap();
        assert_eq!((z.lower, z.upper), (0.0, 0.0));
    }

    #[test]
    fn threshold_extremes() {
        let (p, l) = two_state();
        let ctx = context(&p, &l);
        let tr = Tranche::new(0.0, 0.5, 1).unwrap();
        let never = TrancheLossOptionSpec::new(
            tr,
            0,
            0.1,
            OptionKind::Call,
            TriggerSpec::LossThreshold { alpha: 1.0 + 1e-9 },
        );
        assert!(never.is_err());
        let always = TrancheLossOptionSpec::new(
            tr,
            0,
            0.1,
            OptionKind::Call,
            TriggerSpec::LossThreshold { alpha: 0.0 },
        )
        .unwrap();
        let b = loss_threshold_bounds(&ctx, &always, Conditioning::Factor).unwrap();
        let e = ctx.european(&always).unwrap();
        assert!((b.lower - e.factor).abs() < 1e-14);
        assert!((b.upper - e.upper).abs() < 1e-14);
        let fine = loss_threshold_bounds(&ctx, &always, Conditioning::FactorAndLoss).unwrap();
        assert!(fine.lower >= b.lower - 1e-15 && fine.lower <= b.upper + 1e-15);
    }

    #[test]
    fn lss_limits() {
        let (p, l) = two_state();
        let ctx = context(&p, &l);
        let tr = Tranche::new(0.3, 1.0, 1).unwrap();
        let coupons = vec![(0, 0.01), (1, 0.01)];
        assert!(LssSpec::new(tr, 0, 0.3, 0.1, coupons.clone()).is_err());

        let zero = LssSpec::new(tr, 0, 0.25, 0.0, coupons.clone()).unwrap();
        let call = loss_threshold_bounds(&ctx, &zero.call_spec().unwrap(), Conditioning::Factor)
            .unwrap();
        let b = lss_value_bounds(&ctx, &zero, &call).unwrap();
        // with no collateral the client always walks: only coupons remain
        let p_trig = threshold_probability(&ctx, 0, 0.25).unwrap();
        let curve = ctx.curve();
        let coupons_only = curve.df(1.0) * 0.01 * (1.0 - p_trig) + curve.df(2.0) * 0.01 * (1.0 - p_trig);
        assert!((b.lower - coupons_only).abs() < 1e-14, "{b:?} vs {coupons_only}");
        assert!((b.upper - coupons_only).abs() < 1e-14);

        let full = LssSpec::new(tr, 0, 0.25, 2.0, coupons).unwrap();
        let call = loss_threshold_bounds(&ctx, &full.call_spec().unwrap(), Conditioning::Factor)
            .unwrap();
        assert_eq!((call.lower, call.upper), (0.0, 0.0));
    }
}
