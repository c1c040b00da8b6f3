//! Options on the mark-to-market of a coupon-bearing tranche, mapped onto
//! tranche loss options through a linear approximation of the MTM in the
//! expected terminal tranche loss.
//!
//! The expected-loss term structure is scaled by `lambda` and capped at one;
//! both legs are valued at the exercise horizon.

use crate::bounds::PricingContext;
use crate::error::{Error, Result};
use crate::model::{BoundsResult, Tranche};

/// Finite-difference step in the loss scale.
pub const LAMBDA_STEP: f64 = 1e-4;

/// When protection payments are settled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Settlement {
    /// All protection is paid at maturity on the terminal tranche loss.
    AtMaturity,
    /// Loss accrued by each horizon is paid at that horizon.
    AtHorizon,
}

/// Expected tranche loss and discounting on the horizons from exercise to
/// maturity.
#[derive(Debug, Clone, PartialEq)]
pub struct LegProfile {
    /// `EL(u)` for `u = t, ..., T`
    el: Vec<f64>,
    /// `d(t, u)` for `u = t, ..., T`
    df: Vec<f64>,
    /// accrual fraction of the period ending at `u`; zero at `u = t`
    accrual: Vec<f64>,
    settlement: Settlement,
}

impl LegProfile {
    pub fn new(el: Vec<f64>, df: Vec<f64>, accrual: Vec<f64>, settlement: Settlement) -> Result<Self> {
        if el.len() < 2 || df.len() != el.len() || accrual.len() != el.len() {
            return Err(Error::DimensionMismatch(
                "leg profile needs matching term structures over at least two horizons".into(),
            ));
        }
        if el.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(Error::InvalidInput(
                "expected tranche losses must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            el,
            df,
            accrual,
            settlement,
        })
    }

    pub fn expected_losses(&self) -> &[f64] {
        &self.el
    }

    pub fn terminal_el(&self) -> f64 {
        *self.el.last().unwrap()
    }

    fn scaled(&self, lambda: f64) -> Vec<f64> {
        self.el.iter().map(|e| (lambda * e).min(1.0)).collect()
    }

    fn is_capped(&self, lambda: f64) -> bool {
        self.el.iter().any(|e| lambda * e > 1.0)
    }

    /// Protection-leg coefficient on each `EL(u)`.
    fn prot_weights(&self) -> Vec<f64> {
        let n = self.el.len();
        match self.settlement {
            Settlement::AtMaturity => {
                let mut w = vec![0.0; n];
                w[n - 1] = self.df[n - 1];
                w
            }
            // EL(t) + sum_u d(t,u) (EL(u) - EL(u-1))
            Settlement::AtHorizon => (0..n)
                .map(|k| {
                    let own = if k == 0 { 1.0 } else { self.df[k] };
                    let next = if k + 1 < n { self.df[k + 1] } else { 0.0 };
                    own - next
                })
                .collect(),
        }
    }

    pub fn prot(&self, lambda: f64) -> f64 {
        let el = self.scaled(lambda);
        self.prot_weights().iter().zip(&el).map(|(w, e)| w * e).sum()
    }

    pub fn pv01(&self, lambda: f64) -> f64 {
        let el = self.scaled(lambda);
        (1..el.len())
            .map(|k| self.df[k] * self.accrual[k] * (1.0 - el[k]))
            .sum()
    }

    /// Protection-buyer MTM `PROT - s PV01`.
    pub fn value(&self, lambda: f64, coupon: f64) -> f64 {
        self.prot(lambda) - coupon * self.pv01(lambda)
    }

    /// `V(l1) - V(l2)` evaluated term by term on the loss differences.
    fn value_difference(&self, l1: f64, l2: f64, coupon: f64) -> f64 {
        let prot = self.prot_weights();
        self.el
            .iter()
            .enumerate()
            .map(|(k, &e)| {
                let d = if l1 * e <= 1.0 && l2 * e <= 1.0 {
                    (l1 - l2) * e
                } else {
                    (l1 * e).min(1.0) - (l2 * e).min(1.0)
                };
                let annuity = if k == 0 { 0.0 } else { self.df[k] * self.accrual[k] };
                (prot[k] + coupon * annuity) * d
            })
            .sum()
    }
}

/// Leg profile of `tranche` seen from the exercise horizon.
pub fn leg_profiles(
    ctx: &PricingContext,
    tranche: &Tranche,
    exercise: usize,
    settlement: Settlement,
) -> Result<LegProfile> {
    let lattice = ctx.lattice();
    if exercise >= tranche.maturity || tranche.maturity >= lattice.n_horizons() {
        return Err(Error::DimensionMismatch(format!(
            "exercise {exercise} and maturity {} do not fit the lattice",
            tranche.maturity
        )));
    }
    let t = lattice.time(exercise);
    let hs = exercise..=tranche.maturity;
    let el = hs.clone().map(|h| ctx.etl(tranche, h).clamp(0.0, 1.0)).collect();
    let df = hs.clone().map(|h| ctx.curve().forward_df(t, lattice.time(h))).collect();
    let accrual = hs
        .map(|h| if h == exercise { 0.0 } else { lattice.time(h) - lattice.time(h - 1) })
        .collect();
    LegProfile::new(el, df, accrual, settlement)
}

/// `V(l) ~ a + b l` around the time-zero terminal expected loss `l0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linearization {
    pub a: f64,
    pub b: f64,
    pub l0: f64,
}

impl Linearization {
    /// Loss-option strike equivalent to an MTM strike `k`.
    pub fn loss_strike(&self, k: f64) -> f64 {
        (k - self.a) / self.b
    }
}

/// Central difference in the loss scale at `lambda = 1`, one-sided when the
/// upward step would hit the cap.
pub fn linearize(legs: &LegProfile, coupon: f64) -> Result<Linearization> {
    let l0 = legs.terminal_el();
    if l0 <= 0.0 {
        return Err(Error::InvalidInput(
            "terminal expected loss is zero; the MTM has no loss sensitivity".into(),
        ));
    }
    let h = LAMBDA_STEP;
    let (hi, lo) = if legs.is_capped(1.0 + h) {
        (1.0, 1.0 - h)
    } else {
        (1.0 + h, 1.0 - h)
    };
    let b = legs.value_difference(hi, lo, coupon) / ((hi - lo) * l0);
    let a = legs.value(1.0, coupon) - b * l0;
    Ok(Linearization { a, b, l0 })
}

/// `d(0,t) b` times the loss-option bounds at strike `(K - a) / b`.
///
/// `engine` maps an effective loss strike to undiscounted `(lower, upper)`
/// loss-option bounds. The result is flagged as approximate.
pub fn pv_option_bounds(
    strike: f64,
    lin: &Linearization,
    d0_exercise: f64,
    engine: impl Fn(f64) -> Result<(f64, f64)>,
) -> Result<BoundsResult> {
    if !(lin.b > 0.0) {
        return Err(Error::InvalidInput(format!(
            "linearization slope b = {} is not positive",
            lin.b
        )));
    }
    let k = lin.loss_strike(strike);
    // below zero the option is always exercised: value is the forward
    let (lo, up) = if k < 0.0 {
        let (lo, up) = engine(0.0)?;
        (lo - k, up - k)
    } else {
        engine(k)?
    };
    let scale = d0_exercise * lin.b;
    Ok(BoundsResult {
        lower: scale * lo,
        upper: scale * up,
        method: "pv-linear".into(),
        std_err_lower: None,
        std_err_upper: None,
        approximate: true,
    })
}

/// Option to enter the protection-buyer side of a coupon-bearing tranche.
#[derive(Debug, Clone, PartialEq)]
pub struct PvOptionSpec {
    pub tranche: Tranche,
    pub exercise: usize,
    pub coupon: f64,
    /// MTM strike, fraction of tranche notional.
    pub strike: f64,
    pub settlement: Settlement,
}

/// PV-option bounds with the factor lower bound and the perfect-foresight
/// upper bound as the loss-option engine.
pub fn tranche_pv_option_bounds(ctx: &PricingContext, spec: &PvOptionSpec) -> Result<(Linearization, BoundsResult)> {
    let legs = leg_profiles(ctx, &spec.tranche, spec.exercise, spec.settlement)?;
    let lin = linearize(&legs, spec.coupon)?;
    let (t, big_t) = (spec.exercise, spec.tranche.maturity);
    let chain = ctx.chain(t, big_t)?;
    let v = ctx.conditional_etl(&spec.tranche, big_t);
    let r = ctx.lattice().marginal(big_t);
    let engine = |k: f64| -> Result<(f64, f64)> {
        let w = ctx.conditional_call(&spec.tranche, big_t, k);
        let upper = crate::bounds::dot(r, &w);
        let lower = crate::bounds::lower_bound_on_chain(&chain, &v, k);
        Ok((lower, upper))
    };
    let d0_exercise = ctx.curve().df(ctx.lattice().time(t));
    let out = pv_option_bounds(spec.strike, &lin, d0_exercise, engine)?;
    Ok((lin, out))
}
