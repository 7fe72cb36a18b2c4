//! Income-generation model evaluation.
//!
//! Coefficient tables are inputs (no estimation happens here). Binary
//! outcomes are simulated with anchored uniforms so that the base-year state
//! is reproduced exactly, and continuous outcomes carry residuals that are
//! either recovered from observed values or drawn.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result, ValidationReport, Violation};
use crate::rng::KeyedRng;
use crate::table::Table;

pub const CONSTANT: &str = "_constant";
const META: &str = "_meta";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Logit,
    Multinomial,
    Linear,
}

impl ModelKind {
    fn parse(s: &str) -> Option<ModelKind> {
        match s {
            "logit" => Some(ModelKind::Logit),
            "multinomial" => Some(ModelKind::Multinomial),
            "linear" => Some(ModelKind::Linear),
            _ => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Logit => "logit",
            ModelKind::Multinomial => "multinomial",
            ModelKind::Linear => "linear",
        })
    }
}

/// One regression equation (or one set of multinomial equations).
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    pub name: String,
    pub kind: ModelKind,
    pub covariates: Vec<String>,
    /// Outcome labels. For multinomial models index 0 is the reference outcome.
    pub outcomes: Vec<String>,
    /// One intercept per equation (per non-reference outcome for multinomial).
    pub intercepts: Vec<f64>,
    /// One coefficient row per equation, aligned with `covariates`.
    pub coefficients: Vec<Vec<f64>>,
    /// Covariates that must be supplied; all others are dummies read as 0 when absent.
    pub continuous: BTreeSet<String>,
    /// Standard deviation of the normal disturbance; 0 disables stochastic residuals.
    pub residual_sd: f64,
}

/// Named covariate values for one unit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Covariates(BTreeMap<String, f64>);

impl Covariates {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.0.insert(name.to_string(), value);
        self
    }

    pub fn set(&mut self, name: &str, value: f64) {
        self.0.insert(name.to_string(), value);
    }

    /// Sets a dummy to 1 when `on`.
    pub fn flag(&mut self, name: &str, on: bool) {
        if on {
            self.set(name, 1.0);
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }
}

impl<const N: usize> From<[(&str, f64); N]> for Covariates {
    fn from(v: [(&str, f64); N]) -> Self {
        Covariates(v.iter().map(|(k, x)| (k.to_string(), *x)).collect())
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl CoefficientSet {
    pub fn logit(name: &str, intercept: f64, coefs: &[(&str, f64)]) -> Self {
        Self::single(name, ModelKind::Logit, intercept, coefs)
    }

    pub fn linear(name: &str, intercept: f64, coefs: &[(&str, f64)]) -> Self {
        Self::single(name, ModelKind::Linear, intercept, coefs)
    }

    fn single(name: &str, kind: ModelKind, intercept: f64, coefs: &[(&str, f64)]) -> Self {
        CoefficientSet {
            name: name.to_string(),
            kind,
            covariates: coefs.iter().map(|(c, _)| c.to_string()).collect(),
            outcomes: vec!["1".into()],
            intercepts: vec![intercept],
            coefficients: vec![coefs.iter().map(|(_, b)| *b).collect()],
            continuous: BTreeSet::new(),
            residual_sd: 0.0,
        }
    }

    /// Multinomial model; `equations` lists (outcome, intercept, coefficients) for
    /// each non-reference outcome over the shared `covariates`.
    pub fn multinomial(
        name: &str,
        reference: &str,
        covariates: &[&str],
        equations: &[(&str, f64, Vec<f64>)],
    ) -> Result<Self> {
        let set = CoefficientSet {
            name: name.to_string(),
            kind: ModelKind::Multinomial,
            covariates: covariates.iter().map(|c| c.to_string()).collect(),
            outcomes: std::iter::once(reference.to_string())
                .chain(equations.iter().map(|(o, _, _)| o.to_string()))
                .collect(),
            intercepts: equations.iter().map(|(_, a, _)| *a).collect(),
            coefficients: equations.iter().map(|(_, _, b)| b.clone()).collect(),
            continuous: BTreeSet::new(),
            residual_sd: 0.0,
        };
        set.check()?;
        Ok(set)
    }

    pub fn with_continuous(mut self, names: &[&str]) -> Self {
        self.continuous.extend(names.iter().map(|n| n.to_string()));
        self
    }

    pub fn with_residual_sd(mut self, sd: f64) -> Self {
        self.residual_sd = sd;
        self
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::model(&self.name, m));
        if self.coefficients.len() != self.intercepts.len() {
            return bad("one intercept per equation required".into());
        }
        for row in &self.coefficients {
            if row.len() != self.covariates.len() {
                return bad(format!(
                    "coefficient row has {} entries for {} covariates",
                    row.len(),
                    self.covariates.len()
                ));
            }
        }
        match self.kind {
            ModelKind::Multinomial if self.coefficients.is_empty() => {
                bad("multinomial model needs at least one non-reference outcome".into())
            }
            ModelKind::Multinomial if self.outcomes.len() != self.coefficients.len() + 1 => {
                bad("outcome labels do not match equations".into())
            }
            ModelKind::Logit | ModelKind::Linear if self.coefficients.len() != 1 => {
                bad(format!("{} model must have exactly one equation", self.kind))
            }
            _ if !(self.residual_sd.is_finite() && self.residual_sd >= 0.0) => {
                bad(format!("residual scale {} must be non-negative", self.residual_sd))
            }
            _ => Ok(()),
        }
    }

    fn expect(&self, kind: ModelKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::model(&self.name, format!("is a {} model, not {kind}", self.kind)));
        }
        Ok(())
    }

    /// Linear indices, one per equation.
    pub fn indices(&self, x: &Covariates) -> Result<Vec<f64>> {
        for name in x.names() {
            if !self.covariates.iter().any(|c| c == name) {
                return Err(Error::model(&self.name, format!("unknown covariate `{name}`")));
            }
        }
        let mut values = Vec::with_capacity(self.covariates.len());
        for c in &self.covariates {
            match x.get(c) {
                Some(v) => values.push(v),
                None if self.continuous.contains(c) => {
                    return Err(Error::model(&self.name, format!("missing continuous covariate `{c}`")))
                }
                None => values.push(0.0),
            }
        }
        let out: Vec<f64> = self
            .coefficients
            .iter()
            .zip(&self.intercepts)
            .map(|(row, a)| a + row.iter().zip(&values).map(|(b, v)| b * v).sum::<f64>())
            .collect();
        if let Some(bad) = out.iter().find(|v| !v.is_finite()) {
            return Err(Error::model(&self.name, format!("non-finite index {bad}")));
        }
        Ok(out)
    }

    pub fn logit_prob(&self, x: &Covariates) -> Result<f64> {
        self.expect(ModelKind::Logit)?;
        Ok(logistic(self.indices(x)?[0]))
    }

    /// Softmax over the reference outcome (index 0, index value 0) and the
    /// non-reference equations.
    pub fn multinomial_probs(&self, x: &Covariates) -> Result<Vec<f64>> {
        self.expect(ModelKind::Multinomial)?;
        let mut eta = vec![0.0];
        eta.extend(self.indices(x)?);
        Ok(softmax(&eta))
    }

    pub fn linear_predict(&self, x: &Covariates) -> Result<f64> {
        self.expect(ModelKind::Linear)?;
        Ok(self.indices(x)?[0])
    }
}

pub fn softmax(eta: &[f64]) -> Vec<f64> {
    let m = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = eta.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

// ---------------------------------------------------------------------------
// residuals and anchored draws
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Recovered,
    Stochastic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub value: f64,
    pub provenance: Provenance,
}

impl Residual {
    /// Prediction plus this residual.
    pub fn apply(&self, prediction: f64) -> f64 {
        prediction + self.value
    }
}

/// `ε = observed − prediction`, adjusted by at most a few ulps so that
/// `prediction + ε` reproduces `observed` bit-for-bit.
pub fn recover_residual(model: &CoefficientSet, x: &Covariates, observed: Option<f64>) -> Result<Residual> {
    let observed =
        observed.ok_or_else(|| Error::model(&model.name, "no observed outcome to recover a residual from"))?;
    if !observed.is_finite() {
        return Err(Error::model(&model.name, format!("observed value {observed} is not finite")));
    }
    let pred = model.linear_predict(x)?;
    Ok(Residual { value: exact_gap(pred, observed), provenance: Provenance::Recovered })
}

fn exact_gap(pred: f64, observed: f64) -> f64 {
    let mut e = observed - pred;
    for _ in 0..64 {
        let r = pred + e;
        if r == observed {
            break;
        }
        e = if r < observed { e.next_up() } else { e.next_down() };
    }
    e
}

/// Normal draw with the model's residual scale, keyed by `(seed, person, model)`.
pub fn draw_residual(model: &CoefficientSet, rng: &KeyedRng, person_id: u64) -> Result<Residual> {
    let sd = model.residual_sd;
    if !(sd.is_finite() && sd >= 0.0) {
        return Err(Error::model(&model.name, format!("residual scale {sd} must be non-negative")));
    }
    let value = if sd == 0.0 {
        0.0
    } else {
        let z: f64 = StandardNormal.sample(&mut rng.stream(person_id, &format!("residual:{}", model.name)));
        z * sd
    };
    Ok(Residual { value, provenance: Provenance::Stochastic })
}

/// Per-person, per-model residuals with their provenance.
#[derive(Debug, Clone, Default)]
pub struct ResidualStore {
    entries: BTreeMap<(u64, String), Residual>,
}

impl ResidualStore {
    pub fn insert(&mut self, person_id: u64, model: &str, r: Residual) {
        self.entries.insert((person_id, model.to_string()), r);
    }

    pub fn get(&self, person_id: u64, model: &str) -> Option<Residual> {
        self.entries.get(&(person_id, model.to_string())).copied()
    }

    /// Recovered residual when an observed value exists, otherwise a stochastic draw.
    pub fn resolve(
        &mut self,
        model: &CoefficientSet,
        x: &Covariates,
        person_id: u64,
        observed: Option<f64>,
        rng: &KeyedRng,
    ) -> Result<Residual> {
        let r = match observed {
            Some(_) => recover_residual(model, x, observed)?,
            None => draw_residual(model, rng, person_id)?,
        };
        self.insert(person_id, &model.name, r);
        Ok(r)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A uniform consistent with the observed base-year outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchoredDraw {
    pub u: f64,
}

impl AnchoredDraw {
    /// Outcome under probability `p`: true iff `u < p`.
    pub fn outcome(&self, p: f64) -> bool {
        self.u < p
    }

    /// Latent logistic disturbance `−logit(u)`; `logit(p) + noise > 0` iff `u < p`.
    pub fn logistic_noise(&self) -> f64 {
        let u = self.u.max(f64::MIN_POSITIVE);
        -logit(u)
    }
}

/// Maps a raw uniform `u0 ∈ [0,1)` to `[0, p)` when observed, `[p, 1)` otherwise.
pub fn anchor_uniform(prob: f64, observed: bool, u0: f64) -> Result<AnchoredDraw> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::invalid(format!("anchored draw needs a probability in (0,1), got {prob}")));
    }
    let u = if observed {
        let u = u0 * prob;
        if u >= prob {
            prob.next_down()
        } else {
            u
        }
    } else {
        let u = prob + u0 * (1.0 - prob);
        if u >= 1.0 {
            1f64.next_down()
        } else {
            u.max(prob)
        }
    };
    Ok(AnchoredDraw { u })
}

pub fn simulate_binary_anchored(
    prob: f64,
    observed: bool,
    rng: &KeyedRng,
    person_id: u64,
    model: &str,
) -> Result<AnchoredDraw> {
    let u0 = rng.stream(person_id, &format!("anchor:{model}")).random::<f64>();
    anchor_uniform(prob, observed, u0)
}

// ---------------------------------------------------------------------------
// coefficient files
// ---------------------------------------------------------------------------

/// Coefficient sets by model name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelSet {
    models: BTreeMap<String, CoefficientSet>,
}

impl ModelSet {
    pub fn get(&self, name: &str) -> Result<&CoefficientSet> {
        self.models.get(name).ok_or_else(|| Error::model(name, "not present in the coefficient table"))
    }

    pub fn insert(&mut self, set: CoefficientSet) {
        self.models.insert(set.name.clone(), set);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.models.keys().map(String::as_str)
    }

    /// Parses a table with columns `model_name, kind, outcome, covariate, value`.
    ///
    /// Intercepts use covariate `_constant`. Rows with outcome `_meta` carry
    /// model settings: covariate `residual_sd` (value = scale),
    /// `continuous:<name>` (marks a covariate as continuous) and
    /// `reference:<label>` (names the multinomial reference outcome).
    pub fn parse(file: &str, text: &str) -> Result<ModelSet> {
        let t = Table::parse(file, text)?;
        let mut rep = ValidationReport::default();
        if !t.require_columns(&["model_name", "kind", "outcome", "covariate", "value"], &mut rep) {
            return Err(Error::Validation(rep));
        }
        struct Draft {
            kind: ModelKind,
            covariates: Vec<String>,
            outcomes: Vec<String>,
            reference: Option<String>,
            cells: BTreeMap<(String, String), f64>,
            continuous: BTreeSet<String>,
            residual_sd: f64,
        }
        let mut drafts: BTreeMap<String, Draft> = BTreeMap::new();
        for row in t.rows() {
            let name = row.raw("model_name").to_string();
            let Some(kind) = row.parse_with("kind", &mut rep, ModelKind::parse, "logit|multinomial|linear") else {
                continue;
            };
            let Some(value) = row.parse::<f64>("value", &mut rep) else { continue };
            let outcome = row.raw("outcome").to_string();
            let covariate = row.raw("covariate").to_string();
            if name.is_empty() || covariate.is_empty() {
                rep.push(row.violation("model_name", "model_name and covariate are required"));
                continue;
            }
            let d = drafts.entry(name.clone()).or_insert_with(|| Draft {
                kind,
                covariates: Vec::new(),
                outcomes: Vec::new(),
                reference: None,
                cells: BTreeMap::new(),
                continuous: BTreeSet::new(),
                residual_sd: 0.0,
            });
            if d.kind != kind {
                rep.push(row.violation("kind", format!("model `{name}` declared as both {} and {kind}", d.kind)));
                continue;
            }
            if outcome == META {
                if covariate == "residual_sd" {
                    d.residual_sd = value;
                } else if let Some(c) = covariate.strip_prefix("continuous:") {
                    d.continuous.insert(c.to_string());
                } else if let Some(r) = covariate.strip_prefix("reference:") {
                    d.reference = Some(r.to_string());
                } else {
                    rep.push(row.violation("covariate", format!("unknown model setting `{covariate}`")));
                }
                continue;
            }
            if !d.outcomes.contains(&outcome) {
                d.outcomes.push(outcome.clone());
            }
            if covariate != CONSTANT && !d.covariates.contains(&covariate) {
                d.covariates.push(covariate.clone());
            }
            if d.cells.insert((outcome, covariate.clone()), value).is_some() {
                rep.push(row.violation("covariate", format!("duplicate coefficient for `{covariate}`")));
            }
        }
        let mut set = ModelSet::default();
        for (name, d) in drafts {
            if d.kind != ModelKind::Multinomial && d.outcomes.len() != 1 {
                rep.push(Violation::new(file, format!("model `{name}`: {} model needs exactly one outcome", d.kind)));
                continue;
            }
            let mut outcomes = d.outcomes.clone();
            if d.kind == ModelKind::Multinomial {
                let reference = d.reference.clone().unwrap_or_else(|| "reference".into());
                outcomes.retain(|o| *o != reference);
                outcomes.insert(0, reference);
            }
            let equations: Vec<&String> = if d.kind == ModelKind::Multinomial {
                outcomes[1..].iter().collect()
            } else {
                outcomes.iter().collect()
            };
            let cs = CoefficientSet {
                name: name.clone(),
                kind: d.kind,
                intercepts: equations
                    .iter()
                    .map(|o| d.cells.get(&((*o).clone(), CONSTANT.to_string())).copied().unwrap_or(0.0))
                    .collect(),
                coefficients: equations
                    .iter()
                    .map(|o| {
                        d.covariates
                            .iter()
                            .map(|c| d.cells.get(&((*o).clone(), c.clone())).copied().unwrap_or(0.0))
                            .collect()
                    })
                    .collect(),
                covariates: d.covariates,
                outcomes,
                continuous: d.continuous,
                residual_sd: d.residual_sd,
            };
            match cs.check() {
                Ok(()) => set.insert(cs),
                Err(e) => rep.push(Violation::new(file, e.to_string())),
            }
        }
        rep.into_result(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRANSPORT: &str = "model_name,kind,outcome,covariate,value
public_transport,logit,public,_constant,-2.839
public_transport,logit,public,region_bmw,-1.457
public_transport,logit,public,university,0.242
";

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn reference_person_public_transport() {
        let m = ModelSet::parse("c.csv", TRANSPORT).unwrap();
        let pt = m.get("public_transport").unwrap();
        let p0 = pt.logit_prob(&Covariates::new()).unwrap();
        // logistic(-2.839) by hand: 1 / (1 + e^2.839)
        assert!(close(p0, 1.0 / (1.0 + 2.839f64.exp()), 1e-15));
        assert!(close(p0, 0.0552, 1e-4), "{p0}");
        let p1 = pt.logit_prob(&Covariates::from([("region_bmw", 1.0)])).unwrap();
        assert!(close(p1, 0.0134, 1e-4), "{p1}");
    }

    #[test]
    fn zero_model_gives_half() {
        let m = CoefficientSet::logit("z", 0.0, &[("a", 0.0)]);
        assert_eq!(m.logit_prob(&Covariates::from([("a", 5.0)])).unwrap(), 0.5);
    }

    #[test]
    fn unknown_and_missing_covariates() {
        let m = CoefficientSet::logit("m", 0.1, &[("dummy", 1.0), ("income", 0.01)]).with_continuous(&["income"]);
        assert!(m.logit_prob(&Covariates::from([("bogus", 1.0), ("income", 1.0)])).is_err());
        assert!(m.logit_prob(&Covariates::from([("dummy", 1.0)])).is_err());
        assert!(m.logit_prob(&Covariates::from([("income", 1.0)])).is_ok());
        assert!(m.logit_prob(&Covariates::from([("income", f64::INFINITY)])).is_err());
    }

    #[test]
    fn kind_mismatch_is_an_error() {
        let m = CoefficientSet::logit("m", 0.0, &[]);
        assert!(m.linear_predict(&Covariates::new()).is_err());
        assert!(m.multinomial_probs(&Covariates::new()).is_err());
    }

    #[test]
    fn multinomial_examples() {
        let zero =
            CoefficientSet::multinomial("m", "none", &["x"], &[("a", 0.0, vec![0.0]), ("b", 0.0, vec![0.0])]).unwrap();
        let p = zero.multinomial_probs(&Covariates::new()).unwrap();
        for v in &p {
            assert!(close(*v, 1.0 / 3.0, 1e-15));
        }
        let m = CoefficientSet::multinomial("m", "none", &[], &[("a", 2f64.ln(), vec![]), ("b", 3f64.ln(), vec![])])
            .unwrap();
        let p = m.multinomial_probs(&Covariates::new()).unwrap();
        // closed form: e^0, e^ln2, e^ln3 over 6
        for (v, e) in p.iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!(close(*v, e, 1e-15), "{p:?}");
        }
    }

    #[test]
    fn two_outcome_multinomial_matches_logit() {
        let lg = CoefficientSet::logit("l", -0.4, &[("x", 1.3)]);
        let mn = CoefficientSet::multinomial("m", "0", &["x"], &[("1", -0.4, vec![1.3])]).unwrap();
        for x in [-3.0, 0.0, 0.7, 4.0] {
            let c = Covariates::from([("x", x)]);
            assert!(close(lg.logit_prob(&c).unwrap(), mn.multinomial_probs(&c).unwrap()[1], 1e-15));
        }
    }

    #[test]
    fn multinomial_needs_an_equation() {
        assert!(CoefficientSet::multinomial("m", "r", &[], &[]).is_err());
    }

    #[test]
    fn childcare_expenditure_hand_sum() {
        let m = CoefficientSet::linear(
            "childcare_expenditure",
            -15.5,
            &[("n_children_0_4", 28.0), ("n_children", 0.0), ("equiv_income", 0.1), ("two_earner", 54.0)],
        );
        let x = Covariates::from([
            ("n_children_0_4", 1.0),
            ("n_children", 1.0),
            ("equiv_income", 0.0),
            ("two_earner", 1.0),
        ]);
        assert!(close(m.linear_predict(&x).unwrap(), 66.5, 1e-12));
        assert_eq!(m.linear_predict(&Covariates::new()).unwrap(), -15.5);
        let x2 = Covariates::from([("n_children_0_4", 2.0), ("n_children", 1.0), ("two_earner", 1.0)]);
        assert!(close(m.linear_predict(&x2).unwrap() - m.linear_predict(&x).unwrap(), 28.0, 1e-12));
    }

    #[test]
    fn residual_recovery() {
        let m = CoefficientSet::linear("w", 80.0, &[]);
        let r = recover_residual(&m, &Covariates::new(), Some(100.0)).unwrap();
        assert_eq!(r.value, 20.0);
        assert_eq!(r.provenance, Provenance::Recovered);
        assert_eq!(recover_residual(&m, &Covariates::new(), Some(80.0)).unwrap().value, 0.0);
        assert!(recover_residual(&m, &Covariates::new(), None).is_err());
        let m = CoefficientSet::linear("w", 0.3, &[]);
        let r = recover_residual(&m, &Covariates::new(), Some(0.1)).unwrap();
        assert_eq!(r.apply(0.3), 0.1);
    }

    #[test]
    fn residual_draws() {
        let rng = KeyedRng::new(11);
        let m0 = CoefficientSet::linear("w", 0.0, &[]);
        assert_eq!(draw_residual(&m0, &rng, 1).unwrap().value, 0.0);
        assert!(draw_residual(&m0.clone().with_residual_sd(-1.0), &rng, 1).is_err());
        let m1 = m0.with_residual_sd(1.0);
        assert_eq!(draw_residual(&m1, &rng, 9).unwrap(), draw_residual(&m1, &rng, 9).unwrap());
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|i| draw_residual(&m1, &rng, i).unwrap().value).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
        assert!(mean.abs() < 0.02, "{mean}");
        assert!((sd - 1.0).abs() < 0.02, "{sd}");
    }

    #[test]
    fn residual_store_prefers_observed() {
        let rng = KeyedRng::new(1);
        let m = CoefficientSet::linear("w", 5.0, &[]).with_residual_sd(2.0);
        let mut store = ResidualStore::default();
        let a = store.resolve(&m, &Covariates::new(), 1, Some(7.5), &rng).unwrap();
        let b = store.resolve(&m, &Covariates::new(), 2, None, &rng).unwrap();
        assert_eq!(a.provenance, Provenance::Recovered);
        assert_eq!(b.provenance, Provenance::Stochastic);
        assert_eq!(store.get(1, "w").unwrap().apply(5.0), 7.5);
        assert_eq!(store.len(), 2);
    }

    #[test]
    fn anchored_draw_contract() {
        let rng = KeyedRng::new(5);
        for id in 0..1000 {
            let t = simulate_binary_anchored(0.5, true, &rng, id, "m").unwrap();
            assert!(t.u >= 0.0 && t.u < 0.5);
            let f = simulate_binary_anchored(0.5, false, &rng, id, "m").unwrap();
            assert!(f.u >= 0.5 && f.u < 1.0);
            assert!(f.outcome(1.0));
        }
        assert!(simulate_binary_anchored(0.0, true, &rng, 1, "m").is_err());
        assert!(simulate_binary_anchored(1.0, true, &rng, 1, "m").is_err());
        // edge of the open interval
        assert!(anchor_uniform(0.5, true, 1f64.next_down()).unwrap().u < 0.5);
        assert!(anchor_uniform(0.3, false, 1f64.next_down()).unwrap().u < 1.0);
    }

    #[test]
    fn anchored_replay_reproduces_base_year() {
        // brute force: observed outcomes drawn at rate p, then replayed at p
        let rng = KeyedRng::new(99);
        let p = 0.37;
        let mut flips = 0;
        for id in 0..10_000u64 {
            let observed = rng.uniform(id, "observed") < p;
            let d = simulate_binary_anchored(p, observed, &rng, id, "emp").unwrap();
            if d.outcome(p) != observed {
                flips += 1;
            }
            assert_eq!(d.logistic_noise() + logit(p) > 0.0, observed);
        }
        assert_eq!(flips, 0);
    }

    #[test]
    fn coefficient_file_meta_rows() {
        let text = "model_name,kind,outcome,covariate,value
mode,multinomial,public,_constant,-2.8
mode,multinomial,private,_constant,-1.0
mode,multinomial,public,age,0.1
mode,multinomial,_meta,reference:neither,0
mode,multinomial,_meta,continuous:age,1
wage,linear,log_wage,_constant,10
wage,linear,_meta,residual_sd,0.5
";
        let m = ModelSet::parse("c.csv", text).unwrap();
        let mode = m.get("mode").unwrap();
        assert_eq!(mode.outcomes, vec!["neither", "public", "private"]);
        assert_eq!(mode.coefficients[1], vec![0.0]);
        assert!(mode.continuous.contains("age"));
        assert_eq!(m.get("wage").unwrap().residual_sd, 0.5);
        assert!(m.get("nope").is_err());
    }

    #[test]
    fn coefficient_file_errors() {
        let text = "model_name,kind,outcome,covariate,value
a,logit,1,_constant,x
b,probit,1,_constant,1
c,logit,1,_constant,1
c,linear,1,x,1
";
        match ModelSet::parse("c.csv", text).unwrap_err() {
            Error::Validation(r) => assert_eq!(r.0.len(), 3, "{r}"),
            e => panic!("{e}"),
        }
    }
}
