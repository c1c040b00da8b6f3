//! Pricing jobs behind each CLI command.

use tranche_bounds::bounds::PricingContext;
use tranche_bounds::coupling::{compose_chain, PathLaw};
use tranche_bounds::mc::{mc_generic_trigger_bounds, simulate_paths, McOption};
use tranche_bounds::model::{
    Conditioning, ExerciseStyle, OptionKind, SupportMask, Tranche, TrancheLossOptionSpec,
    TriggerCurve, TriggerSpec, LP_TOL,
};
use tranche_bounds::pv::{tranche_pv_option_bounds, PvOptionSpec, Settlement};
use tranche_bounds::triggers::{loss_threshold_bounds, single_default_trigger_bounds};

use crate::error::{CliError, Result};
use crate::io::{
    build_model, violation_messages, ChainDoc, ConditioningDoc, JobSpec, KindDoc, Model,
    SettlementDoc, StrikeDoc, StyleDoc, TriggerDoc,
};
use crate::report::{Cell, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    /// Expected tranche loss by tranche and horizon.
    Etl,
    /// Upper, naive, factor and perfect-foresight bounds.
    Bounds,
    /// Lowest lower bound over all admissible couplings.
    Llb,
    /// Semi-analytic bounds under a single-default or loss-threshold trigger.
    Trigger,
    /// Monte Carlo bounds with standard errors.
    Mc,
    /// Bounds on options on a coupon-bearing tranche's mark-to-market.
    Pvopt,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Etl => "etl",
            Command::Bounds => "bounds",
            Command::Llb => "llb",
            Command::Trigger => "trigger",
            Command::Mc => "mc",
            Command::Pvopt => "pvopt",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct JobOptions {
    pub seed: Option<u64>,
    pub paths: usize,
    pub tol: f64,
    pub strike: Option<StrikeDoc>,
}

pub const DEFAULT_PATHS: usize = 100_000;

struct Strike {
    label: String,
    /// Amount paid at exercise.
    value: f64,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(vec![msg.into()])
}

fn tranches(spec: &JobSpec, maturity: usize) -> Result<Vec<Tranche>> {
    spec.tranches
        .iter()
        .enumerate()
        .map(|(k, t)| Tranche::new(t.attach, t.detach, maturity).map_err(|e| invalid(format!("tranches[{k}]: {e}"))))
        .collect()
}

fn horizons(spec: &JobSpec, model: &Model) -> Result<(usize, usize)> {
    let n = model.lattice.n_horizons();
    if spec.maturity >= n {
        return Err(invalid(format!("maturity horizon {} outside the model's {n} horizons", spec.maturity)));
    }
    if spec.exercise >= spec.maturity {
        return Err(invalid(format!(
            "exercise horizon {} must precede maturity horizon {}",
            spec.exercise, spec.maturity
        )));
    }
    Ok((spec.exercise, spec.maturity))
}

fn strikes(spec: &JobSpec, opts: &JobOptions) -> Vec<StrikeDoc> {
    match opts.strike {
        Some(s) => vec![s],
        None => spec.strikes.clone(),
    }
}

/// Moneyness labels set the discount-adjusted strike to a multiple of the
/// expected tranche loss at maturity.
fn resolve_strikes(ctx: &PricingContext, spec: &JobSpec, opts: &JobOptions, tr: &Tranche, t: usize) -> Vec<Strike> {
    let (_, dtt) = ctx.discounts(t, tr.maturity);
    let etl = ctx.etl(tr, tr.maturity);
    strikes(spec, opts)
        .into_iter()
        .map(|s| match s {
            StrikeDoc::Value(v) => Strike { label: "value".into(), value: v },
            StrikeDoc::Label(m) => Strike {
                label: m.label().into(),
                value: m.multiple() * etl * dtt,
            },
        })
        .collect()
}

fn kind(spec: &JobSpec) -> OptionKind {
    match spec.kind {
        KindDoc::Call => OptionKind::Call,
        KindDoc::Put => OptionKind::Put,
    }
}

fn conditioning(spec: &JobSpec) -> Conditioning {
    match spec.conditioning {
        ConditioningDoc::Factor => Conditioning::Factor,
        ConditioningDoc::FactorAndLoss => Conditioning::FactorAndLoss,
    }
}

fn trigger(spec: &JobSpec, model: &Model) -> Result<TriggerSpec> {
    match &spec.trigger {
        TriggerDoc::AtTime => Ok(TriggerSpec::AtTime),
        TriggerDoc::LossThreshold { alpha } => Ok(TriggerSpec::LossThreshold { alpha: *alpha }),
        TriggerDoc::SingleDefault { curve, name, style } => {
            let rows = match (curve, name) {
                (Some(c), None) => c.clone(),
                (None, Some(id)) => {
                    let k = model
                        .portfolio
                        .names()
                        .iter()
                        .position(|n| &n.id == id)
                        .ok_or_else(|| invalid(format!("trigger.name: no portfolio name {id:?}")))?;
                    model.lattice.curve(k).to_vec()
                }
                _ => return Err(invalid("trigger: give exactly one of curve or name")),
            };
            let curve = TriggerCurve::new(rows);
            let v = curve.validate(&model.lattice, &model.chains);
            if !v.is_empty() {
                return Err(CliError::Validation(violation_messages(&v)));
            }
            let style = match style {
                StyleDoc::AtMaturity => ExerciseStyle::AtMaturity,
                StyleDoc::AtTrigger => ExerciseStyle::AtTrigger,
            };
            Ok(TriggerSpec::SingleNameDefault { curve, style })
        }
    }
}

fn option_spec(tr: Tranche, t: usize, k: f64, kind: OptionKind, trigger: TriggerSpec) -> Result<TrancheLossOptionSpec> {
    Ok(TrancheLossOptionSpec::new(tr, t, k, kind, trigger)?)
}

/// The model's lattice re-coupled with one chain type at every step.
fn law_with(model: &Model, chain: ChainDoc, tol: f64) -> Result<PathLaw> {
    let mut doc = model.doc.clone();
    doc.chains = vec![chain; doc.chains.len()];
    let m = build_model(doc, tol)?;
    Ok(compose_chain(&m.chains)?)
}

fn check_order(tr: &Tranche, strike: &Strike, lower: f64, upper: f64, slack: f64) -> Result<()> {
    if lower > upper + slack {
        return Err(CliError::Numerical(format!(
            "tranche {}-{} strike {}: lower bound {lower} exceeds upper bound {upper}",
            tr.attach, tr.detach, strike.value
        )));
    }
    Ok(())
}

fn base_report(command: Command, model: &Model, opts: &JobOptions) -> Report {
    let mut r = Report::new(command.name());
    let chains: Vec<&str> = model.doc.chains.iter().map(|c| c.label()).collect();
    r.meta("chains", chains.join(","));
    r.meta("marginal_tol", format!("{:e}", opts.tol));
    r.meta("lp_tol", format!("{LP_TOL:e}"));
    r.meta("seed", opts.seed.map_or("none".into(), |s| s.to_string()));
    r
}

pub fn run_job(command: Command, model: &Model, spec: &JobSpec, opts: &JobOptions) -> Result<Report> {
    let ctx = PricingContext::new(&model.portfolio, &model.lattice, model.law.clone(), model.curve.clone())?;
    let mut report = base_report(command, model, opts);
    match command {
        Command::Etl => etl(&ctx, model, spec, &mut report)?,
        Command::Bounds => bounds(&ctx, model, spec, opts, &mut report)?,
        Command::Llb => llb(&ctx, model, spec, opts, &mut report)?,
        Command::Trigger => trigger_bounds(&ctx, model, spec, opts, &mut report)?,
        Command::Mc => mc(&ctx, model, spec, opts, &mut report)?,
        Command::Pvopt => pvopt(&ctx, model, spec, opts, &mut report)?,
    }
    Ok(report)
}

fn etl(ctx: &PricingContext, model: &Model, spec: &JobSpec, report: &mut Report) -> Result<()> {
    report.columns(&["attach", "detach", "horizon", "time", "etl"]);
    for tr in tranches(spec, 0)? {
        for h in 0..model.lattice.n_horizons() {
            report.row(vec![
                Cell::Num(tr.attach),
                Cell::Num(tr.detach),
                Cell::Int(h as u64),
                Cell::Num(model.lattice.time(h)),
                Cell::Num(ctx.etl(&tr, h)),
            ]);
        }
    }
    Ok(())
}

fn bounds(ctx: &PricingContext, model: &Model, spec: &JobSpec, opts: &JobOptions, report: &mut Report) -> Result<()> {
    let (t, big_t) = horizons(spec, model)?;
    let como = PricingContext::new(&model.portfolio, &model.lattice, law_with(model, ChainDoc::Comonotonic, opts.tol)?, model.curve.clone())?;
    let maxent = PricingContext::new(&model.portfolio, &model.lattice, law_with(model, ChainDoc::Maxentropy, opts.tol)?, model.curve.clone())?;
    report.meta("kind", format!("{:?}", kind(spec)).to_lowercase());
    report.columns(&[
        "attach", "detach", "strike_label", "strike", "effective_strike", "etl", "upper", "naive",
        "factor_comonotonic", "factor_maxentropy", "factor", "perfect_foresight",
    ]);
    for tr in tranches(spec, big_t)? {
        for s in resolve_strikes(ctx, spec, opts, &tr, t) {
            let o = option_spec(tr, t, s.value, kind(spec), TriggerSpec::AtTime)?;
            let b = ctx.european(&o)?;
            let c = como.european(&o)?.factor;
            let m = maxent.european(&o)?.factor;
            for lower in [b.naive, b.factor, b.perfect_foresight, c, m] {
                check_order(&tr, &s, lower, b.upper, 1e-12)?;
            }
            report.row(vec![
                Cell::Num(tr.attach),
                Cell::Num(tr.detach),
                Cell::Text(s.label),
                Cell::Num(s.value),
                Cell::Num(b.effective_strike),
                Cell::Num(b.etl),
                Cell::Num(b.upper),
                Cell::Num(b.naive),
                Cell::Num(c),
                Cell::Num(m),
                Cell::Num(b.factor),
                Cell::Num(b.perfect_foresight),
            ]);
        }
    }
    Ok(())
}

fn llb(ctx: &PricingContext, model: &Model, spec: &JobSpec, opts: &JobOptions, report: &mut Report) -> Result<()> {
    let (t, big_t) = horizons(spec, model)?;
    if spec.kind == KindDoc::Put {
        return Err(invalid("llb: only calls are supported"));
    }
    report.columns(&["attach", "detach", "strike_label", "strike", "effective_strike", "llb", "factor", "upper"]);
    for tr in tranches(spec, big_t)? {
        for s in resolve_strikes(ctx, spec, opts, &tr, t) {
            let o = option_spec(tr, t, s.value, OptionKind::Call, TriggerSpec::AtTime)?;
            let b = ctx.european(&o)?;
            let low = ctx.llb(&o, SupportMask::Monotone)?.value;
            check_order(&tr, &s, low, b.factor, LP_TOL)?;
            check_order(&tr, &s, low, b.upper, LP_TOL)?;
            report.row(vec![
                Cell::Num(tr.attach),
                Cell::Num(tr.detach),
                Cell::Text(s.label),
                Cell::Num(s.value),
                Cell::Num(b.effective_strike),
                Cell::Num(low),
                Cell::Num(b.factor),
                Cell::Num(b.upper),
            ]);
        }
    }
    Ok(())
}

fn trigger_bounds(ctx: &PricingContext, model: &Model, spec: &JobSpec, opts: &JobOptions, report: &mut Report) -> Result<()> {
    let (t, big_t) = horizons(spec, model)?;
    let trig = trigger(spec, model)?;
    report.columns(&["attach", "detach", "strike_label", "strike", "method", "lower", "upper"]);
    for tr in tranches(spec, big_t)? {
        for s in resolve_strikes(ctx, spec, opts, &tr, t) {
            let o = option_spec(tr, t, s.value, kind(spec), trig.clone())?;
            let b = match &trig {
                TriggerSpec::SingleNameDefault { .. } => single_default_trigger_bounds(ctx, &o)?,
                TriggerSpec::LossThreshold { .. } => loss_threshold_bounds(ctx, &o, conditioning(spec))?,
                TriggerSpec::AtTime => return Err(invalid("trigger: spec needs a single_default or loss_threshold trigger")),
            };
            check_order(&tr, &s, b.lower, b.upper, 1e-12)?;
            report.row(vec![
                Cell::Num(tr.attach),
                Cell::Num(tr.detach),
                Cell::Text(s.label),
                Cell::Num(s.value),
                Cell::Text(b.method),
                Cell::Num(b.lower),
                Cell::Num(b.upper),
            ]);
        }
    }
    Ok(())
}

fn mc(ctx: &PricingContext, model: &Model, spec: &JobSpec, opts: &JobOptions, report: &mut Report) -> Result<()> {
    let seed = opts.seed.ok_or_else(|| invalid("mc: --seed is required"))?;
    let (t, big_t) = horizons(spec, model)?;
    let trig = trigger(spec, model)?;
    let paths = simulate_paths(&model.portfolio, &model.lattice, &model.law, opts.paths, seed)?;
    report.meta("paths", opts.paths.to_string());
    report.meta("split", spec.split.to_string());
    report.columns(&["attach", "detach", "strike_label", "strike", "method", "lower", "se_lower", "upper", "se_upper"]);
    for tr in tranches(spec, big_t)? {
        for s in resolve_strikes(ctx, spec, opts, &tr, t) {
            let o = option_spec(tr, t, s.value, kind(spec), trig.clone())?;
            let opt = McOption::from_spec(&o, &model.lattice, &model.curve)?;
            let b = mc_generic_trigger_bounds(&opt, &paths, conditioning(spec), spec.split)?;
            let (sl, su) = (b.std_err_lower.unwrap_or(0.0), b.std_err_upper.unwrap_or(0.0));
            check_order(&tr, &s, b.lower, b.upper, 3.0 * sl.hypot(su))?;
            report.row(vec![
                Cell::Num(tr.attach),
                Cell::Num(tr.detach),
                Cell::Text(s.label),
                Cell::Num(s.value),
                Cell::Text(b.method),
                Cell::Num(b.lower),
                Cell::Num(sl),
                Cell::Num(b.upper),
                Cell::Num(su),
            ]);
        }
    }
    Ok(())
}

fn pvopt(ctx: &PricingContext, model: &Model, spec: &JobSpec, opts: &JobOptions, report: &mut Report) -> Result<()> {
    let (t, big_t) = horizons(spec, model)?;
    let settlement = match spec.settlement {
        SettlementDoc::Maturity => Settlement::AtMaturity,
        SettlementDoc::Horizon => Settlement::AtHorizon,
    };
    report.meta("approximation", "linear in expected terminal tranche loss");
    report.columns(&["attach", "detach", "strike_label", "strike", "coupon", "a", "b", "loss_strike", "lower", "upper"]);
    for tr in tranches(spec, big_t)? {
        for s in strikes(spec, opts) {
            let mut pv = PvOptionSpec {
                tranche: tr,
                exercise: t,
                coupon: spec.coupon,
                strike: 0.0,
                settlement,
            };
            // the linearization does not depend on the strike
            let (lin, _) = tranche_pv_option_bounds(ctx, &pv)?;
            let (label, k) = match s {
                StrikeDoc::Value(v) => ("value".to_string(), v),
                StrikeDoc::Label(m) => (m.label().to_string(), lin.a + lin.b * m.multiple() * lin.l0),
            };
            pv.strike = k;
            let (lin, b) = tranche_pv_option_bounds(ctx, &pv)?;
            let strike = Strike { label: label.clone(), value: k };
            check_order(&tr, &strike, b.lower, b.upper, 1e-12)?;
            report.row(vec![
                Cell::Num(tr.attach),
                Cell::Num(tr.detach),
                Cell::Text(label),
                Cell::Num(k),
                Cell::Num(spec.coupon),
                Cell::Num(lin.a),
                Cell::Num(lin.b),
                Cell::Num(lin.loss_strike(k)),
                Cell::Num(b.lower),
                Cell::Num(b.upper),
            ]);
        }
    }
    Ok(())
}
