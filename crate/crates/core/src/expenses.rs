//! Housing (H), work-related (C) and capital-loss (Q) adjustments.

use std::collections::{BTreeMap, BTreeSet};

use crate::calibration::{align_scored, continuous_factor, Scored};
use crate::error::{Error, Result, ValidationReport, Violation};
use crate::igm::{anchor_uniform, draw_residual, logit, recover_residual, Covariates, ModelSet};
use crate::money::Cents;
use crate::population::{Education, Household, Person, Region, Sector, Tenure};
use crate::rng::KeyedRng;
use crate::table::Table;

pub const COMMUTE_FILE: &str = "commute.csv";
pub const CHILDCARE_FILE: &str = "childcare.csv";
pub const CAPITAL_PARTICIPATION_FILE: &str = "capital_participation.csv";
pub const CAPITAL_HOLDINGS_FILE: &str = "capital_holdings.csv";

// ---------------------------------------------------------------------------
// commuting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    Public,
    Private,
    None,
}

fn age_dummy(age: u32) -> Option<&'static str> {
    Some(match age {
        0..=19 => return None,
        20..=24 => "age_20_24",
        25..=29 => "age_25_29",
        30..=34 => "age_30_34",
        35..=39 => "age_35_39",
        40..=44 => "age_40_44",
        45..=49 => "age_45_49",
        50..=54 => "age_50_54",
        55..=59 => "age_55_59",
        60..=64 => "age_60_64",
        65..=69 => "age_65_69",
        70..=74 => "age_70_74",
        _ => "age_75_plus",
    })
}

fn industry_dummy(s: Sector) -> Option<&'static str> {
    use Sector::*;
    Some(match s {
        AgricultureMining => return None,
        Manufacturing | Utilities => "ind_manufacturing",
        Construction => "ind_construction",
        WholesaleRetail | AccommodationFood => "ind_commerce",
        TransportStorage | InformationCommunication => "ind_transport_communications",
        PublicAdministration => "ind_public_administration",
        Education | HealthSocialWork => "ind_education_health",
        FinancialInsurance
        | RealEstate
        | ProfessionalScientific
        | AdministrativeSupport
        | ArtsEntertainment
        | Other => "ind_other",
    })
}

/// Dummies of the transport-mode models.
pub fn transport_covariates(p: &Person) -> Covariates {
    let mut x = Covariates::new();
    if let Some(d) = p.industry.and_then(industry_dummy) {
        x.set(d, 1.0);
    }
    x.flag("region_bmw", p.region == Region::BorderMidlandWestern);
    if let Some(o @ 1..=8) = p.occupation {
        x.set(&format!("occupation_{o}"), 1.0);
    }
    if let Some(d) = age_dummy(p.age) {
        x.set(d, 1.0);
    }
    x.flag("university", p.education == Education::University);
    x
}

/// `(P(public), P(private))` for a worker; zeros otherwise.
pub fn commute_probs(models: &ModelSet, p: &Person) -> Result<(f64, f64)> {
    if !p.work_status.is_worker() {
        return Ok((0.0, 0.0));
    }
    let x = transport_covariates(p);
    Ok((models.get("public_transport")?.logit_prob(&x)?, models.get("private_transport")?.logit_prob(&x)?))
}

/// Public transport is tried first; a worker not taking it may drive.
pub fn commute_mode(models: &ModelSet, p: &Person, rng: &KeyedRng) -> Result<Mode> {
    if !p.work_status.is_worker() {
        return Ok(Mode::None);
    }
    let (pp, pv) = commute_probs(models, p)?;
    if rng.uniform(p.person_id, "mode:public") < pp {
        Ok(Mode::Public)
    } else if rng.uniform(p.person_id, "mode:private") < pv {
        Ok(Mode::Private)
    } else {
        Ok(Mode::None)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommuteCostTable {
    pub fuel_increase: [f64; 3],
    pub public_increase: [f64; 3],
    /// Weekly cost for 1, 2 and 3+ commuters.
    pub fuel: [Cents; 3],
    pub public: [Cents; 3],
    pub total: [Cents; 3],
}

impl CommuteCostTable {
    pub fn parse(file: &str, text: &str) -> Result<Self> {
        let t = Table::parse(file, text)?;
        let mut rep = ValidationReport::default();
        let cols = ["workers_1", "workers_2", "workers_3"];
        if !t.require_columns(&[&["item"][..], &cols].concat(), &mut rep) {
            return Err(Error::Validation(rep));
        }
        let mut money: BTreeMap<String, [Cents; 3]> = BTreeMap::new();
        let mut shares: BTreeMap<String, [f64; 3]> = BTreeMap::new();
        for row in t.rows() {
            let item = row.raw("item").to_string();
            match item.as_str() {
                "fuel_increase" | "public_increase" => {
                    let mut v = [0.0; 3];
                    for (i, c) in cols.iter().enumerate() {
                        v[i] = row.parse(c, &mut rep).unwrap_or(0.0);
                    }
                    shares.insert(item, v);
                }
                "fuel" | "public" | "total" => {
                    let mut v = [Cents::ZERO; 3];
                    for (i, c) in cols.iter().enumerate() {
                        v[i] = row.parse(c, &mut rep).unwrap_or(Cents::ZERO);
                        if v[i] < Cents::ZERO {
                            rep.push(row.violation(c, "costs must be non-negative"));
                        }
                    }
                    money.insert(item, v);
                }
                other => rep.push(row.violation("item", format!("unknown item `{other}`"))),
            }
        }
        let mut get = |k: &str| {
            money.get(k).copied().unwrap_or_else(|| {
                rep.push(Violation::new(file, format!("missing row `{k}`")));
                [Cents::ZERO; 3]
            })
        };
        let (fuel, public) = (get("fuel"), get("public"));
        let total =
            money.get("total").copied().unwrap_or([fuel[0] + public[0], fuel[1] + public[1], fuel[2] + public[2]]);
        for i in 0..3 {
            if (total[i] - fuel[i] - public[i]).0.abs() > 1 {
                rep.push(Violation::new(file, format!("total for {} workers is not fuel + public", i + 1)));
            }
        }
        rep.into_result(CommuteCostTable {
            fuel_increase: shares.get("fuel_increase").copied().unwrap_or_default(),
            public_increase: shares.get("public_increase").copied().unwrap_or_default(),
            fuel,
            public,
            total,
        })
    }

    /// Weekly household cost for `car` private and `public` public-transport commuters.
    pub fn commuting_cost(&self, car: usize, public: usize) -> Cents {
        let pick = |v: &[Cents; 3], n: usize| if n == 0 { Cents::ZERO } else { v[n.min(3) - 1] };
        pick(&self.fuel, car) + pick(&self.public, public)
    }
}

// ---------------------------------------------------------------------------
// childcare
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FamilyType {
    LoneParent,
    TwoAdults,
    OtherWithChildren,
}

impl FamilyType {
    pub const ALL: [FamilyType; 3] = [FamilyType::LoneParent, FamilyType::TwoAdults, FamilyType::OtherWithChildren];

    pub fn code(self) -> &'static str {
        match self {
            FamilyType::LoneParent => "lone_parent",
            FamilyType::TwoAdults => "two_adults_1_3_children",
            FamilyType::OtherWithChildren => "other_with_children",
        }
    }

    pub fn from_code(s: &str) -> Result<FamilyType> {
        FamilyType::ALL
            .into_iter()
            .find(|f| f.code() == s)
            .ok_or_else(|| Error::invalid(format!("unknown family type `{s}`")))
    }
}

pub const CHILD_AGE: u32 = 18;

/// Family type of a household, `None` without children.
pub fn family_type<'a>(members: impl IntoIterator<Item = &'a Person>) -> Option<FamilyType> {
    let (mut adults, mut children) = (0, 0);
    for p in members {
        if p.age < CHILD_AGE {
            children += 1;
        } else {
            adults += 1;
        }
    }
    match (adults, children) {
        (_, 0) => None,
        (1, _) => Some(FamilyType::LoneParent),
        (2, 1..=3) => Some(FamilyType::TwoAdults),
        _ => Some(FamilyType::OtherWithChildren),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChildcareCostGrid {
    /// € per week, `[family type][decile − 1]`.
    pub cells: [[f64; 10]; 3],
}

impl ChildcareCostGrid {
    pub fn parse(file: &str, text: &str) -> Result<Self> {
        let t = Table::parse(file, text)?;
        let mut rep = ValidationReport::default();
        let cols: Vec<String> = (1..=10).map(|d| format!("d{d}")).collect();
        let mut req = vec!["family_type"];
        req.extend(cols.iter().map(String::as_str));
        if !t.require_columns(&req, &mut rep) {
            return Err(Error::Validation(rep));
        }
        let mut cells = [[f64::NAN; 10]; 3];
        for row in t.rows() {
            let Some(ft) = row.parse_with("family_type", &mut rep, |s| FamilyType::from_code(s).ok(), "a family type")
            else {
                continue;
            };
            for (i, c) in cols.iter().enumerate() {
                let v: f64 = row.parse(c, &mut rep).unwrap_or(0.0);
                if v < 0.0 {
                    rep.push(row.violation(c, "cell must be non-negative"));
                }
                cells[ft as usize][i] = v;
            }
        }
        for ft in FamilyType::ALL {
            if cells[ft as usize][0].is_nan() {
                rep.push(Violation::new(file, format!("missing family type `{}`", ft.code())));
            }
        }
        rep.into_result(ChildcareCostGrid { cells })
    }

    pub fn mean(&self, family: FamilyType, decile: u8) -> Result<f64> {
        if !(1..=10).contains(&decile) {
            return Err(Error::invalid(format!("decile {decile} out of range 1..=10")));
        }
        Ok(self.cells[family as usize][decile as usize - 1])
    }
}

pub fn childcare_covariates(
    n_children_0_4: u32,
    n_children: u32,
    equiv_weekly_income: f64,
    working: bool,
) -> Covariates {
    let mut x = Covariates::new()
        .with("n_children_0_4", n_children_0_4 as f64)
        .with("n_children", n_children as f64)
        .with("equiv_disposable_income", equiv_weekly_income)
        .with("equiv_disposable_income_sq", equiv_weekly_income * equiv_weekly_income);
    x.flag("two_workers_or_lone_parent_working", working);
    x
}

/// Inputs for one household's childcare simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct ChildcareHousehold {
    pub household_id: u64,
    pub weight: f64,
    pub family: Option<FamilyType>,
    pub decile: u8,
    pub covariates: Covariates,
    pub observed_user: bool,
    /// € per week, when observed.
    pub observed_expenditure: Option<f64>,
}

/// Weekly childcare expenditure per household (input order), calibrated so
/// that each populated family-type × decile cell has the grid mean.
pub fn simulate_childcare(
    households: &[ChildcareHousehold],
    models: &ModelSet,
    grid: &ChildcareCostGrid,
    rng: &KeyedRng,
) -> Result<Vec<f64>> {
    let part = models.get("childcare_participation")?;
    let spend = models.get("childcare_expenditure")?;
    let mut out = Vec::with_capacity(households.len());
    for h in households {
        if h.family.is_none() {
            out.push(0.0);
            continue;
        }
        let p = part.logit_prob(&h.covariates)?.clamp(1e-12, 1.0 - 1e-12);
        let u0 = rng.uniform(h.household_id, "childcare:participation");
        if !anchor_uniform(p, h.observed_user, u0)?.outcome(p) {
            out.push(0.0);
            continue;
        }
        let mut xs = Covariates::new();
        for c in &spend.covariates {
            if let Some(v) = h.covariates.get(c) {
                xs.set(c, v);
            }
        }
        let pred = spend.linear_predict(&xs)?;
        let r = match h.observed_expenditure {
            Some(obs) if h.observed_user => recover_residual(spend, &xs, Some(obs))?,
            _ => draw_residual(spend, rng, h.household_id)?,
        };
        out.push(r.apply(pred).max(0.0));
    }
    let mut cells: BTreeMap<(FamilyType, u8), Vec<usize>> = BTreeMap::new();
    for (i, h) in households.iter().enumerate() {
        if let Some(f) = h.family {
            cells.entry((f, h.decile)).or_default().push(i);
        }
    }
    for ((family, decile), idx) in cells {
        let target = grid.mean(family, decile)?;
        let values: Vec<(u64, f64, f64)> =
            idx.iter().map(|&i| (households[i].household_id, out[i], households[i].weight)).collect();
        if values.iter().all(|v| v.1 == 0.0) {
            continue;
        }
        let f = continuous_factor(&values, target)?;
        for i in idx {
            out[i] *= f;
        }
    }
    Ok(out)
}

/// Weekly childcare cost at a date: nothing when support is granted or when
/// the household's earners are on pandemic payments or working from home.
pub fn childcare_cost(baseline_weekly: f64, support_on: bool, relieved: bool) -> Cents {
    if support_on || relieved {
        Cents::ZERO
    } else {
        Cents::from_euros(baseline_weekly)
    }
}

// ---------------------------------------------------------------------------
// housing
// ---------------------------------------------------------------------------

/// Monthly housing cost.
pub fn housing_cost(h: &Household, deferred: bool) -> Cents {
    match h.tenure {
        Tenure::OwnerOutright => Cents::ZERO,
        Tenure::Mortgage if deferred => Cents::ZERO,
        Tenure::Mortgage => Cents::from_euros(h.mortgage_payment),
        Tenure::Renter => Cents::from_euros(h.rent),
    }
}

// ---------------------------------------------------------------------------
// capital losses
// ---------------------------------------------------------------------------

pub const AGE_GROUPS: [&str; 5] = ["30", "40", "50", "60", "70"];

/// Age group index: under 35, 35–44, 45–54, 55–64, 65+.
pub fn age_group(age: u32) -> usize {
    match age {
        0..=34 => 0,
        35..=44 => 1,
        45..=54 => 2,
        55..=64 => 3,
        _ => 4,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapitalHoldingsGrid {
    /// `[age group][income quintile]`.
    pub participation: [[f64; 5]; 5],
    /// € thousand per person in the cell, holders and non-holders together.
    pub holdings: [[f64; 5]; 5],
}

fn parse_grid(file: &str, text: &str) -> Result<[[f64; 5]; 5]> {
    let t = Table::parse(file, text)?;
    let mut rep = ValidationReport::default();
    let cols = ["q1", "q2", "q3", "q4", "q5"];
    if !t.require_columns(&[&["age_group"][..], &cols].concat(), &mut rep) {
        return Err(Error::Validation(rep));
    }
    let mut g = [[f64::NAN; 5]; 5];
    for row in t.rows() {
        let Some(a) = AGE_GROUPS.iter().position(|x| *x == row.raw("age_group")) else {
            rep.push(row.violation("age_group", "expected one of 30, 40, 50, 60, 70"));
            continue;
        };
        for (j, c) in cols.iter().enumerate() {
            let v: f64 = row.parse(c, &mut rep).unwrap_or(0.0);
            if v < 0.0 {
                rep.push(row.violation(c, "value must be non-negative"));
            }
            g[a][j] = v;
        }
    }
    for (a, r) in g.iter().enumerate() {
        if r[0].is_nan() {
            rep.push(Violation::new(file, format!("missing age group {}", AGE_GROUPS[a])));
        }
    }
    rep.into_result(g)
}

impl CapitalHoldingsGrid {
    pub fn parse(participation: (&str, &str), holdings: (&str, &str)) -> Result<Self> {
        let g = CapitalHoldingsGrid {
            participation: parse_grid(participation.0, participation.1)?,
            holdings: parse_grid(holdings.0, holdings.1)?,
        };
        if g.participation.iter().flatten().any(|p| *p > 1.0) {
            return Err(Error::single(participation.0, "participation rates must lie in [0,1]"));
        }
        Ok(g)
    }

    fn check(age_group: usize, quintile: usize) -> Result<()> {
        if age_group >= 5 || quintile >= 5 {
            return Err(Error::invalid(format!("capital cell ({age_group}, {quintile}) outside the 5x5 grid")));
        }
        Ok(())
    }

    pub fn participation(&self, age_group: usize, quintile: usize) -> Result<f64> {
        Self::check(age_group, quintile)?;
        Ok(self.participation[age_group][quintile])
    }

    /// Expected one-off change in share value, €, per person in the cell.
    pub fn mean_change(&self, age_group: usize, quintile: usize, factor: f64) -> Result<f64> {
        Self::check(age_group, quintile)?;
        Ok(self.holdings[age_group][quintile] * 1000.0 * factor)
    }

    /// One-off change in share value, €, for a holder in the cell.
    pub fn holder_change(&self, age_group: usize, quintile: usize, factor: f64) -> Result<f64> {
        let p = self.participation(age_group, quintile)?;
        if p <= 0.0 {
            return Ok(0.0);
        }
        Ok(self.mean_change(age_group, quintile, factor)? / p)
    }
}

/// A person who may hold shares.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShareUnit {
    pub id: u64,
    pub age_group: usize,
    pub quintile: usize,
    pub weight: f64,
    /// Has capital income in the survey.
    pub observed: bool,
}

/// Share holders: within each age × income cell the holding weight is aligned
/// to the participation rate, observed capital-income recipients first.
pub fn assign_holders(grid: &CapitalHoldingsGrid, units: &[ShareUnit], rng: &KeyedRng) -> Result<BTreeSet<u64>> {
    let mut cells: BTreeMap<(usize, usize), Vec<&ShareUnit>> = BTreeMap::new();
    for u in units {
        cells.entry((u.age_group, u.quintile)).or_default().push(u);
    }
    let mut out = BTreeSet::new();
    for ((a, q), members) in cells {
        let p = grid.participation(a, q)?;
        if p <= 0.0 {
            continue;
        }
        if p >= 1.0 {
            out.extend(members.iter().map(|u| u.id));
            continue;
        }
        let mut scored = Vec::with_capacity(members.len());
        for u in &members {
            let a = anchor_uniform(p, u.observed, rng.uniform(u.id, "capital:participation"))?;
            scored.push(Scored { id: u.id, score: logit(p) - logit(a.u.max(f64::MIN_POSITIVE)), weight: u.weight });
        }
        let total: f64 = members.iter().map(|u| u.weight).sum();
        out.extend(align_scored(&scored, p * total)?);
    }
    Ok(out)
}

/// Monthly Q for one person: the loss (a positive cost) spread over twelve
/// months, or booked whole when `amortize` is false.
pub fn capital_loss(
    grid: &CapitalHoldingsGrid,
    age_group: usize,
    quintile: usize,
    holder: bool,
    factor: f64,
    amortize: bool,
) -> Result<Cents> {
    let change = grid.holder_change(age_group, quintile, factor)?;
    if !holder || factor == 0.0 {
        return Ok(Cents::ZERO);
    }
    Ok(Cents::from_euros(-change / if amortize { 12.0 } else { 1.0 }))
}
