//! JSON documents for models and job specs.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tranche_bounds::coupling::{comonotonic_coupling, compose_chain, max_entropy_coupling, PathLaw, IPF_MAX_ITER};
use tranche_bounds::model::{
    validate_lattice, CurveOwner, DiscountCurve, FactorLattice, NameCredit, Portfolio, SupportMask,
    TransitionMatrix, Violation,
};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NameDoc {
    pub id: String,
    pub notional: f64,
    pub recovery: f64,
    /// `[horizon][state]` probability of default by the horizon.
    pub default_probabilities: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeDoc {
    pub times: Vec<f64>,
    pub marginals: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ChainDoc {
    Comonotonic,
    Maxentropy,
    Explicit { matrix: Vec<Vec<f64>> },
}

impl ChainDoc {
    pub fn label(&self) -> &'static str {
        match self {
            ChainDoc::Comonotonic => "comonotonic",
            ChainDoc::Maxentropy => "maxentropy",
            ChainDoc::Explicit { .. } => "explicit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiscountDoc {
    /// `(time, discount factor)` pairs.
    Pillars { pillars: Vec<(f64, f64)> },
    FlatRate { rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub names: Vec<NameDoc>,
    pub lattice: LatticeDoc,
    /// One entry per consecutive pair of horizons.
    pub chains: Vec<ChainDoc>,
    pub discount: DiscountDoc,
}

/// A validated model.
#[derive(Debug, Clone)]
pub struct Model {
    pub doc: ModelDoc,
    pub portfolio: Portfolio,
    pub lattice: FactorLattice,
    pub chains: Vec<TransitionMatrix>,
    pub law: PathLaw,
    pub curve: DiscountCurve,
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_json(&text, &path.display().to_string())
}

pub fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, origin: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| CliError::Parse {
        origin: origin.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

pub fn load_model(path: &Path, tol: f64) -> Result<Model> {
    build_model(read_json(path)?, tol)
}

pub fn save_model(doc: &ModelDoc, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(doc).expect("model documents serialize");
    fs::write(path, text + "\n").map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn field_error(field: String, e: tranche_bounds::Error) -> CliError {
    CliError::Validation(vec![format!("{field}: {e}")])
}

/// Field path in the model document that a violation points at.
fn violation_field(v: &Violation) -> String {
    let curve = |owner: &CurveOwner| match owner {
        CurveOwner::Name(k) => format!("names[{k}].default_probabilities"),
        CurveOwner::Trigger => "trigger.curve".to_string(),
    };
    match v {
        Violation::Shape(_) | Violation::ChainLinkage(_) => "chains".into(),
        Violation::MarginalNormalization { horizon, .. } => format!("lattice.marginals[{horizon}]"),
        Violation::NegativeProbability { horizon, state, .. } => format!("lattice.marginals[{horizon}][{state}]"),
        Violation::DefaultProbabilityRange { owner, horizon, state, .. } => format!("{}[{horizon}][{state}]", curve(owner)),
        Violation::StateMonotonicity { owner, horizon, .. } => format!("{}[{horizon}]", curve(owner)),
        Violation::CrossHorizon { owner, .. } => curve(owner),
        Violation::ChainNegative { chain, row, col, .. } | Violation::ChainSupport { chain, row, col, .. } => {
            format!("chains[{chain}].matrix[{row}][{col}]")
        }
        Violation::ChainMarginal { chain, .. } => format!("chains[{chain}].matrix"),
    }
}

pub fn violation_messages(violations: &[Violation]) -> Vec<String> {
    violations.iter().map(|v| format!("{}: {v}", violation_field(v))).collect()
}

/// Builds and validates every model object; all lattice and chain violations
/// are reported together.
pub fn build_model(doc: ModelDoc, tol: f64) -> Result<Model> {
    let names = doc
        .names
        .iter()
        .enumerate()
        .map(|(k, n)| NameCredit::new(n.id.clone(), n.notional, n.recovery).map_err(|e| field_error(format!("names[{k}]"), e)))
        .collect::<Result<Vec<_>>>()?;
    let portfolio = Portfolio::new(names).map_err(|e| field_error("names".into(), e))?;
    let curves = doc.names.iter().map(|n| n.default_probabilities.clone()).collect();
    let lattice = FactorLattice::new(doc.lattice.times.clone(), doc.lattice.marginals.clone(), curves)
        .map_err(|e| field_error("lattice".into(), e))?;

    // marginal and curve problems first: couplings need coherent marginals
    let own = validate_lattice(&lattice, &[]);
    if !own.is_empty() {
        return Err(CliError::Validation(violation_messages(&own)));
    }
    let n_h = lattice.n_horizons();
    if doc.chains.len() + 1 != n_h {
        return Err(CliError::Validation(vec![format!(
            "chains: {} chains given, {} horizons need {}",
            doc.chains.len(),
            n_h,
            n_h - 1
        )]));
    }
    let chains = doc
        .chains
        .iter()
        .enumerate()
        .map(|(h, c)| {
            let (p, r) = (lattice.marginal(h), lattice.marginal(h + 1));
            let field = format!("chains[{h}]");
            match c {
                ChainDoc::Comonotonic => comonotonic_coupling(p, r, h, h + 1),
                ChainDoc::Maxentropy => max_entropy_coupling(p, r, &SupportMask::Monotone, tol, IPF_MAX_ITER, h, h + 1),
                ChainDoc::Explicit { matrix } => TransitionMatrix::from_rows(h, h + 1, matrix, SupportMask::Monotone),
            }
            .map_err(|e| {
                if e.is_validation() {
                    field_error(field, e)
                } else {
                    CliError::Numerical(format!("{field}: {e}"))
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let violations = validate_lattice(&lattice, &chains);
    if !violations.is_empty() {
        return Err(CliError::Validation(violation_messages(&violations)));
    }
    let law = compose_chain(&chains).map_err(|e| field_error("chains".into(), e))?;
    let curve = match &doc.discount {
        DiscountDoc::Pillars { pillars } => DiscountCurve::new(pillars.clone()),
        DiscountDoc::FlatRate { rate } => DiscountCurve::flat_rate(*rate, lattice.horizons()),
    }
    .map_err(|e| field_error("discount".into(), e))?;
    Ok(Model {
        doc,
        portfolio,
        lattice,
        chains,
        law,
        curve,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrancheDoc {
    pub attach: f64,
    pub detach: f64,
}

/// A strike given as a number or as a moneyness label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StrikeDoc {
    Value(f64),
    Label(Moneyness),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Moneyness {
    Itm,
    Atm,
    Otm,
}

impl Moneyness {
    /// Multiple of the expected tranche loss.
    pub fn multiple(self) -> f64 {
        match self {
            Moneyness::Itm => 0.5,
            Moneyness::Atm => 1.0,
            Moneyness::Otm => 2.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Moneyness::Itm => "itm",
            Moneyness::Atm => "atm",
            Moneyness::Otm => "otm",
        }
    }
}

impl std::str::FromStr for StrikeDoc {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "itm" => Ok(StrikeDoc::Label(Moneyness::Itm)),
            "atm" => Ok(StrikeDoc::Label(Moneyness::Atm)),
            "otm" => Ok(StrikeDoc::Label(Moneyness::Otm)),
            other => other
                .parse::<f64>()
                .map(StrikeDoc::Value)
                .map_err(|_| format!("strike must be a number or one of itm, atm, otm; got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KindDoc {
    #[default]
    Call,
    Put,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StyleDoc {
    #[default]
    AtMaturity,
    AtTrigger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TriggerDoc {
    AtTime,
    /// Either an explicit `[horizon][state]` curve or the curve of a
    /// portfolio name.
    SingleDefault {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        curve: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default)]
        style: StyleDoc,
    },
    LossThreshold { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningDoc {
    #[default]
    Factor,
    FactorAndLoss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SettlementDoc {
    #[default]
    Maturity,
    Horizon,
}

fn default_strikes() -> Vec<StrikeDoc> {
    [Moneyness::Itm, Moneyness::Atm, Moneyness::Otm].map(StrikeDoc::Label).to_vec()
}

fn default_trigger() -> TriggerDoc {
    TriggerDoc::AtTime
}

fn default_split() -> f64 {
    tranche_bounds::mc::DEFAULT_SPLIT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobSpec {
    pub tranches: Vec<TrancheDoc>,
    /// Exercise horizon index.
    pub exercise: usize,
    /// Tranche maturity horizon index.
    pub maturity: usize,
    #[serde(default = "default_strikes")]
    pub strikes: Vec<StrikeDoc>,
    #[serde(default)]
    pub kind: KindDoc,
    #[serde(default = "default_trigger")]
    pub trigger: TriggerDoc,
    #[serde(default)]
    pub conditioning: ConditioningDoc,
    #[serde(default = "default_split")]
    pub split: f64,
    /// Running coupon per year, for `pvopt`.
    #[serde(default)]
    pub coupon: f64,
    #[serde(default)]
    pub settlement: SettlementDoc,
}

pub fn load_spec(path: &Path) -> Result<JobSpec> {
    read_json(path)
}
