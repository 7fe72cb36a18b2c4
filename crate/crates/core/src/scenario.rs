//! Scenarios: control totals, the baseline nowcast and dated shock waves.
//!
//! A run nowcasts the population to the baseline date, prepares the
//! wave-invariant pieces (commuting modes, childcare spend, share holdings,
//! alignment scores) once, and then evaluates every wave against them.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};

use crate::calibration::{align_continuous, align_scored, alignment_score, weighted_mean, Scored};
use crate::error::{Error, Result, ValidationReport, Violation};
use crate::expenses::{
    age_group, assign_holders, capital_loss, childcare_cost, childcare_covariates, commute_mode, family_type,
    housing_cost, simulate_childcare, CapitalHoldingsGrid, ChildcareCostGrid, ChildcareHousehold, CommuteCostTable,
    FamilyType, Mode, ShareUnit, CAPITAL_HOLDINGS_FILE, CAPITAL_PARTICIPATION_FILE, CHILDCARE_FILE, CHILD_AGE,
    COMMUTE_FILE,
};
use crate::igm::{draw_residual, logit, simulate_binary_anchored, CoefficientSet, Covariates, ModelSet};
use crate::kv::{parse_switch, KvFile};
use crate::metrics::{assign_deciles, assign_groups, summarize, DistributionSummary, EquivalenceScale, PersonIncomes};
use crate::money::Cents;
use crate::population::{CovidState, Education, Person, Population, Sector, Sex, Tenure, WorkStatus, ESSENTIAL_SHARE};
use crate::rng::KeyedRng;
use crate::table::Table;
use crate::taxben::{household_t_and_b, PersonState, Policy, PolicyState};

pub const CONTROLS_FILE: &str = "controls.csv";
pub const REFERENCE_FILE: &str = "national_reference.csv";
pub const SCENARIO_FILE: &str = "scenario.cfg";
pub const COEFFICIENTS_FILE: &str = "coefficients.csv";

pub const BASELINE_LABEL: &str = "Before Crisis";

/// Age bands of the case counts.
pub const CASE_BANDS: [&str; 9] = ["0", "1-4", "5-14", "15-24", "25-34", "35-44", "45-54", "55-64", "65+"];

pub fn case_band(age: u32) -> usize {
    match age {
        0 => 0,
        1..=4 => 1,
        5..=14 => 2,
        15..=24 => 3,
        25..=34 => 4,
        35..=44 => 5,
        45..=54 => 6,
        55..=64 => 7,
        _ => 8,
    }
}

/// Age bands of the employment-rate controls.
pub const EMPLOYMENT_BANDS: [&str; 6] = ["15-24", "25-34", "35-44", "45-54", "55-64", "65+"];

pub fn employment_band(age: u32) -> Option<usize> {
    (age >= 15).then(|| case_band(age) - 3)
}

// ---------------------------------------------------------------------------
// control totals
// ---------------------------------------------------------------------------

fn normalize_key(raw: &str) -> std::result::Result<String, String> {
    let raw = raw.trim();
    let (prefix, rest) = raw.split_once(':').ok_or_else(|| format!("malformed stratum key `{raw}`"))?;
    match prefix {
        "pup" | "ceib" | "subsidy" => Sector::lookup(rest)
            .map(|s| format!("{prefix}:{}", s.code()))
            .ok_or_else(|| format!("unknown sector `{rest}` in `{raw}`")),
        "cases" => match rest.split_once(':') {
            Some(("in_work" | "out_of_work", band)) if CASE_BANDS.contains(&band) => Ok(raw.to_string()),
            _ => Err(format!("bad case stratum `{raw}`")),
        },
        "employment_rate" if EMPLOYMENT_BANDS.contains(&rest) => Ok(raw.to_string()),
        "deferrals" | "index_change_factor" | "wage_index" if rest == "all" => Ok(raw.to_string()),
        _ => Err(format!("unknown stratum key `{raw}`")),
    }
}

fn check_target(key: &str, v: f64) -> std::result::Result<(), String> {
    let ok = v.is_finite()
        && match key.split(':').next() {
            Some("index_change_factor") => v >= -1.0,
            Some("employment_rate") => (0.0..=1.0).contains(&v),
            Some("wage_index") => v > 0.0,
            _ => v >= 0.0,
        };
    if ok {
        Ok(())
    } else {
        Err(format!("target {v} not allowed for `{key}`"))
    }
}

/// Dated targets by stratum.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ControlTotals {
    series: BTreeMap<String, Vec<(NaiveDate, f64)>>,
}

impl ControlTotals {
    pub fn shipped() -> ControlTotals {
        ControlTotals::parse(CONTROLS_FILE, crate::data::CONTROLS).expect("shipped controls")
    }

    /// Columns `stratum_key,date,target`. Sector strata accept codes or the
    /// published labels.
    pub fn parse(file: &str, text: &str) -> Result<ControlTotals> {
        let t = Table::parse(file, text)?;
        let mut rep = ValidationReport::default();
        if !t.require_columns(&["stratum_key", "date", "target"], &mut rep) {
            return rep.into_result(ControlTotals::default());
        }
        let mut out = ControlTotals::default();
        for row in t.rows() {
            let key = match normalize_key(row.raw("stratum_key")) {
                Ok(k) => k,
                Err(m) => {
                    rep.push(row.violation("stratum_key", m));
                    continue;
                }
            };
            let (Some(date), Some(v)) =
                (row.parse::<NaiveDate>("date", &mut rep), row.parse::<f64>("target", &mut rep))
            else {
                continue;
            };
            if let Err(m) = out.insert(&key, date, v) {
                rep.push(row.violation("target", m));
            }
        }
        rep.into_result(out)
    }

    pub fn insert(&mut self, key: &str, date: NaiveDate, target: f64) -> std::result::Result<(), String> {
        let key = normalize_key(key)?;
        check_target(&key, target)?;
        let s = self.series.entry(key.clone()).or_default();
        match s.binary_search_by_key(&date, |x| x.0) {
            Ok(_) => Err(format!("duplicate row for `{key}` at {date}")),
            Err(i) => {
                s.insert(i, (date, target));
                Ok(())
            }
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(|k| k.as_str())
    }

    pub fn series(&self, key: &str) -> &[(NaiveDate, f64)] {
        self.series.get(key).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Latest target dated on or before `date`.
    pub fn at(&self, key: &str, date: NaiveDate) -> Option<f64> {
        self.series(key).iter().rev().find(|x| x.0 <= date).map(|x| x.1)
    }

    /// Linear in calendar days between rows, flat beyond the ends.
    pub fn interpolate(&self, key: &str, date: NaiveDate) -> Option<f64> {
        let s = self.series(key);
        let first = s.first()?;
        let last = s.last()?;
        if date <= first.0 {
            return Some(first.1);
        }
        if date >= last.0 {
            return Some(last.1);
        }
        let i = s.iter().position(|x| x.0 > date)?;
        let (d0, v0) = s[i - 1];
        let (d1, v1) = s[i];
        let f = (date - d0).num_days() as f64 / (d1 - d0).num_days() as f64;
        Some(v0 + f * (v1 - v0))
    }
}

/// National totals that scale control counts to a population.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NationalReference {
    pub employment: BTreeMap<Sector, f64>,
    pub mortgage_holders: Option<f64>,
}

impl NationalReference {
    pub fn shipped() -> NationalReference {
        NationalReference::parse(REFERENCE_FILE, crate::data::NATIONAL_REFERENCE).expect("shipped reference")
    }

    /// Columns `key,value`; keys are `employment:<sector>` and `mortgage_holders`.
    pub fn parse(file: &str, text: &str) -> Result<NationalReference> {
        let t = Table::parse(file, text)?;
        let mut rep = ValidationReport::default();
        if !t.require_columns(&["key", "value"], &mut rep) {
            return rep.into_result(NationalReference::default());
        }
        let mut out = NationalReference::default();
        for row in t.rows() {
            let Some(v) = row.parse::<f64>("value", &mut rep) else { continue };
            if !(v.is_finite() && v > 0.0) {
                rep.push(row.violation("value", format!("reference total {v} must be positive")));
                continue;
            }
            let key = row.raw("key").trim();
            match key.split_once(':') {
                Some(("employment", s)) => match Sector::lookup(s) {
                    Some(s) if out.employment.insert(s, v).is_none() => {}
                    Some(_) => rep.push(row.violation("key", format!("duplicate `{key}`"))),
                    None => rep.push(row.violation("key", format!("unknown sector `{s}`"))),
                },
                None if key == "mortgage_holders" => out.mortgage_holders = Some(v),
                _ => rep.push(row.violation("key", format!("unknown reference key `{key}`"))),
            }
        }
        rep.into_result(out)
    }
}

// ---------------------------------------------------------------------------
// scenario file
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Switches {
    pub pup: bool,
    pub ceib: bool,
    pub wage_subsidy: bool,
    pub childcare_support: bool,
    pub deferrals: bool,
    pub home_working: bool,
}

impl Switches {
    pub const ALL_ON: Switches = Switches {
        pup: true,
        ceib: true,
        wage_subsidy: true,
        childcare_support: true,
        deferrals: true,
        home_working: true,
    };

    pub fn policy(&self) -> PolicyState {
        PolicyState { pup: self.pup, ceib: self.ceib, wage_subsidy: self.wage_subsidy }
    }

    /// Same labour-market shock with the income supports switched off.
    pub fn instruments_off(self) -> Switches {
        Switches { pup: false, ceib: false, wage_subsidy: false, childcare_support: false, deferrals: false, ..self }
    }

    const NAMES: [&'static str; 6] = ["pup", "ceib", "wage_subsidy", "childcare_support", "deferrals", "home_working"];

    fn slot(&mut self, name: &str) -> Option<&mut bool> {
        Some(match name {
            "pup" => &mut self.pup,
            "ceib" => &mut self.ceib,
            "wage_subsidy" => &mut self.wage_subsidy,
            "childcare_support" => &mut self.childcare_support,
            "deferrals" => &mut self.deferrals,
            "home_working" => &mut self.home_working,
            _ => return None,
        })
    }

    fn get(&self, name: &str) -> bool {
        let mut c = *self;
        c.slot(name).map(|b| *b).unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveSpec {
    pub date: NaiveDate,
    pub label: String,
    pub switches: Switches,
}

impl WaveSpec {
    pub fn new(date: NaiveDate, switches: Switches) -> WaveSpec {
        WaveSpec { date, label: wave_label(date), switches }
    }
}

const MONTHS: [&str; 12] = [
    "January",
    "February",
    "March",
    "April",
    "May",
    "June",
    "July",
    "August",
    "September",
    "October",
    "November",
    "December",
];

/// "May 5th", "December 22nd".
pub fn wave_label(d: NaiveDate) -> String {
    let day = d.day();
    let suffix = match (day % 10, day % 100) {
        (1, x) if x != 11 => "st",
        (2, x) if x != 12 => "nd",
        (3, x) if x != 13 => "rd",
        _ => "th",
    };
    format!("{} {day}{suffix}", MONTHS[d.month0() as usize])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub controls: ControlTotals,
    pub controls_source: String,
    pub reference: NationalReference,
    pub reference_source: String,
    pub baseline_date: NaiveDate,
    pub nowcast: bool,
    pub amortize_capital: bool,
    pub waves: Vec<WaveSpec>,
}

fn load_or_shipped<T>(
    value: &str,
    base: Option<&Path>,
    shipped: impl FnOnce() -> T,
    parse: impl FnOnce(&str, &str) -> Result<T>,
) -> Result<(T, String)> {
    if value == "shipped" {
        return Ok((shipped(), "shipped".into()));
    }
    let p = match base {
        Some(b) if Path::new(value).is_relative() => b.join(value),
        _ => PathBuf::from(value),
    };
    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    Ok((parse(&p.display().to_string(), &text)?, p.display().to_string()))
}

impl Scenario {
    pub fn shipped() -> Scenario {
        Scenario::parse(SCENARIO_FILE, crate::data::SCENARIO, None).expect("shipped scenario")
    }

    /// Parses a scenario file. `controls` and `reference` name files
    /// relative to `base`, or `shipped`.
    pub fn parse(file: &str, text: &str, base: Option<&Path>) -> Result<Scenario> {
        let kv = KvFile::parse(file, text)?;
        let mut rep = ValidationReport::default();
        let root = kv.root();
        for e in &root.entries {
            if !["seed", "controls", "reference", "capital_loss"].contains(&e.key.as_str()) {
                rep.push(Violation::new(file, format!("unknown key `{}`", e.key)).row(e.line));
            }
        }
        let seed = root.parse_or(file, "seed", 0u64, &mut rep);
        let amortize_capital = match root.get("capital_loss").map(|e| (e.value.as_str(), e.line)) {
            None | Some(("amortized", _)) => true,
            Some(("once", _)) => false,
            Some((v, line)) => {
                rep.push(
                    Violation::new(file, format!("capital_loss must be `amortized` or `once`, got `{v}`")).row(line),
                );
                true
            }
        };
        let mut baseline_date = NaiveDate::from_ymd_opt(2019, 12, 31).expect("valid date");
        let mut nowcast = true;
        let mut waves: Vec<WaveSpec> = Vec::new();
        for sec in kv.sections.iter().filter(|s| !s.name.is_empty()) {
            if sec.name == "baseline" {
                for e in &sec.entries {
                    match e.key.as_str() {
                        "date" => match e.value.parse() {
                            Ok(d) => baseline_date = d,
                            Err(_) => rep.push(Violation::new(file, format!("bad date `{}`", e.value)).row(e.line)),
                        },
                        "nowcast" => match parse_switch(&e.value) {
                            Some(b) => nowcast = b,
                            None => rep.push(Violation::new(file, format!("bad switch `{}`", e.value)).row(e.line)),
                        },
                        k => rep.push(Violation::new(file, format!("unknown key `{k}` in [baseline]")).row(e.line)),
                    }
                }
                continue;
            }
            let Some(date) = sec.name.strip_prefix("wave ").and_then(|d| d.trim().parse::<NaiveDate>().ok()) else {
                rep.push(Violation::new(file, format!("unknown section [{}]", sec.name)).row(sec.line));
                continue;
            };
            let mut w = WaveSpec::new(date, Switches::default());
            for e in &sec.entries {
                if e.key == "label" {
                    w.label = e.value.clone();
                    continue;
                }
                match (w.switches.slot(&e.key), parse_switch(&e.value)) {
                    (Some(slot), Some(b)) => *slot = b,
                    (Some(_), None) => {
                        rep.push(Violation::new(file, format!("bad switch `{}` for `{}`", e.value, e.key)).row(e.line))
                    }
                    (None, _) => {
                        rep.push(Violation::new(file, format!("unknown key `{}` in [{}]", e.key, sec.name)).row(e.line))
                    }
                }
            }
            if let Some(prev) = waves.last() {
                if prev.date >= date {
                    rep.push(
                        Violation::new(file, format!("wave {date} is not after wave {}", prev.date)).row(sec.line),
                    );
                }
            }
            waves.push(w);
        }
        if let Some(first) = waves.first() {
            if first.date <= baseline_date {
                rep.push(Violation::new(
                    file,
                    format!("wave {} is not after the baseline {baseline_date}", first.date),
                ));
            }
        }
        let mut labels = BTreeSet::from([BASELINE_LABEL.to_string()]);
        for w in &waves {
            if !labels.insert(w.label.clone()) {
                rep.push(Violation::new(file, format!("duplicate wave label `{}`", w.label)));
            }
        }
        rep.into_result(())?;
        let value = |k: &str| root.get(k).map(|e| e.value.clone()).unwrap_or_else(|| "shipped".into());
        let (controls, controls_source) =
            load_or_shipped(&value("controls"), base, ControlTotals::shipped, ControlTotals::parse)?;
        let (reference, reference_source) =
            load_or_shipped(&value("reference"), base, NationalReference::shipped, NationalReference::parse)?;
        Ok(Scenario {
            seed,
            controls,
            controls_source,
            reference,
            reference_source,
            baseline_date,
            nowcast,
            amortize_capital,
            waves,
        })
    }

    /// The resolved configuration in scenario-file syntax.
    pub fn to_config(&self) -> String {
        let mut s = format!(
            "seed = {}\ncontrols = {}\nreference = {}\ncapital_loss = {}\n\n[baseline]\ndate = {}\nnowcast = {}\n",
            self.seed,
            self.controls_source,
            self.reference_source,
            if self.amortize_capital { "amortized" } else { "once" },
            self.baseline_date,
            if self.nowcast { "on" } else { "off" },
        );
        for w in &self.waves {
            s.push_str(&format!("\n[wave {}]\nlabel = {}\n", w.date, w.label));
            for name in Switches::NAMES {
                s.push_str(&format!("{name} = {}\n", if w.switches.get(name) { "on" } else { "off" }));
            }
        }
        s
    }
}

// ---------------------------------------------------------------------------
// model data
// ---------------------------------------------------------------------------

/// Coefficients, cost grids and the tax-benefit policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelData {
    pub models: ModelSet,
    pub policy: Policy,
    pub commute: CommuteCostTable,
    pub childcare: ChildcareCostGrid,
    pub capital: CapitalHoldingsGrid,
}

impl ModelData {
    pub fn shipped() -> ModelData {
        ModelData::load(None, None).expect("shipped model data")
    }

    /// Files found in `data_dir` / `policy_dir` replace the shipped ones.
    pub fn load(data_dir: Option<&Path>, policy_dir: Option<&Path>) -> Result<ModelData> {
        if let Some(d) = data_dir.filter(|d| !d.is_dir()) {
            return Err(Error::io(d, std::io::Error::new(std::io::ErrorKind::NotFound, "data directory not found")));
        }
        let read = |name: &str, fallback: &'static str| -> Result<String> {
            match data_dir.map(|d| d.join(name)).filter(|p| p.exists()) {
                Some(p) => std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e)),
                None => Ok(fallback.to_string()),
            }
        };
        use crate::data as d;
        let models = ModelSet::parse(COEFFICIENTS_FILE, &read(COEFFICIENTS_FILE, d::COEFFICIENTS)?)?;
        for name in REQUIRED_MODELS {
            models.get(name)?;
        }
        Ok(ModelData {
            models,
            policy: match policy_dir {
                Some(p) => Policy::load(p)?,
                None => Policy::shipped(),
            },
            commute: CommuteCostTable::parse(COMMUTE_FILE, &read(COMMUTE_FILE, d::COMMUTE)?)?,
            childcare: ChildcareCostGrid::parse(CHILDCARE_FILE, &read(CHILDCARE_FILE, d::CHILDCARE)?)?,
            capital: CapitalHoldingsGrid::parse(
                (CAPITAL_PARTICIPATION_FILE, &read(CAPITAL_PARTICIPATION_FILE, d::CAPITAL_PARTICIPATION)?),
                (CAPITAL_HOLDINGS_FILE, &read(CAPITAL_HOLDINGS_FILE, d::CAPITAL_HOLDINGS)?),
            )?,
        })
    }

    /// Parses every file independently and returns all failures.
    pub fn check(data_dir: Option<&Path>, policy_dir: Option<&Path>) -> Vec<Error> {
        let mut errors = Vec::new();
        if let Some(d) = data_dir.filter(|d| !d.is_dir()) {
            errors.push(Error::io(d, std::io::Error::new(std::io::ErrorKind::NotFound, "data directory not found")));
            return errors;
        }
        let read = |name: &str, fallback: &'static str| -> Result<String> {
            match data_dir.map(|d| d.join(name)).filter(|p| p.exists()) {
                Some(p) => std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e)),
                None => Ok(fallback.to_string()),
            }
        };
        use crate::data as d;
        let results: [Result<()>; 5] = [
            read(COEFFICIENTS_FILE, d::COEFFICIENTS).and_then(|t| {
                let m = ModelSet::parse(COEFFICIENTS_FILE, &t)?;
                for name in REQUIRED_MODELS {
                    m.get(name)?;
                }
                Ok(())
            }),
            read(COMMUTE_FILE, d::COMMUTE).and_then(|t| CommuteCostTable::parse(COMMUTE_FILE, &t).map(drop)),
            read(CHILDCARE_FILE, d::CHILDCARE).and_then(|t| ChildcareCostGrid::parse(CHILDCARE_FILE, &t).map(drop)),
            read(CAPITAL_PARTICIPATION_FILE, d::CAPITAL_PARTICIPATION).and_then(|p| {
                let h = read(CAPITAL_HOLDINGS_FILE, d::CAPITAL_HOLDINGS)?;
                CapitalHoldingsGrid::parse((CAPITAL_PARTICIPATION_FILE, &p), (CAPITAL_HOLDINGS_FILE, &h)).map(drop)
            }),
            policy_dir.map_or(Ok(()), |p| Policy::load(p).map(drop)),
        ];
        errors.extend(results.into_iter().filter_map(|r| r.err()));
        errors
    }
}

const REQUIRED_MODELS: [&str; 8] = [
    "employment",
    "log_wage",
    "job_loss",
    "wage_subsidy",
    "public_transport",
    "private_transport",
    "childcare_participation",
    "childcare_expenditure",
];

// ---------------------------------------------------------------------------
// baseline nowcast
// ---------------------------------------------------------------------------

fn person_weights(pop: &Population) -> Vec<f64> {
    pop.persons().iter().map(|p| pop.households()[pop.household_position_of(p)].weight).collect()
}

fn restrict(x: &Covariates, m: &CoefficientSet) -> Covariates {
    let mut out = Covariates::new();
    for c in &m.covariates {
        if let Some(v) = x.get(c) {
            out.set(c, v);
        }
    }
    out
}

pub fn employment_covariates(p: &Person) -> Covariates {
    let mut x = Covariates::new();
    x.flag("university", p.education == Education::University);
    x.flag("secondary", p.education == Education::Secondary);
    x.flag("female", p.sex == Sex::Female);
    x.flag("age_16_24", (16..=24).contains(&p.age));
    x.flag("age_55_64", (55..=64).contains(&p.age));
    x.flag("age_65_plus", p.age >= 65);
    x
}

fn log_weekly_earnings(p: &Person) -> f64 {
    (p.earnings() / 52.0).max(1.0).ln()
}

/// Covariates of the job-loss and wage-subsidy selection models.
pub fn shock_covariates(p: &Person) -> Covariates {
    let mut x = Covariates::new().with("log_weekly_earnings", log_weekly_earnings(p));
    x.flag("essential", p.essential_worker);
    x.flag("home_work_capable", p.home_work_capable);
    x.flag("age_16_24", (16..=24).contains(&p.age));
    x.flag("self_employed", p.work_status == WorkStatus::SelfEmployed);
    x
}

const OCCUPATION_MIX: [(u8, f64); 9] =
    [(1, 0.10), (2, 0.18), (3, 0.12), (4, 0.11), (5, 0.14), (6, 0.08), (7, 0.08), (8, 0.08), (9, 0.11)];

fn pick_by<T: Copy>(u: f64, items: &[(T, f64)]) -> T {
    let total: f64 = items.iter().map(|x| x.1).sum();
    let mut u = u * total;
    for &(x, w) in items {
        if u < w {
            return x;
        }
        u -= w;
    }
    items.last().expect("non-empty").0
}

fn leave_work(p: &mut Person) {
    p.work_status = if p.age >= 66 { WorkStatus::Retired } else { WorkStatus::Unemployed };
    p.employment_income = 0.0;
    p.self_employment_income = 0.0;
    p.industry = None;
    p.occupation = None;
    p.essential_worker = false;
    p.home_work_capable = false;
}

fn join_work(p: &mut Person, data: &ModelData, reference: &NationalReference, rng: &KeyedRng) -> Result<()> {
    let shares: Vec<(Sector, f64)> = reference.employment.iter().map(|(&s, &v)| (s, v)).collect();
    if shares.is_empty() {
        return Err(Error::invalid("the employment nowcast needs national sector employment"));
    }
    let sector = pick_by(rng.uniform(p.person_id, "nowcast:sector"), &shares);
    let occupation = pick_by(rng.uniform(p.person_id, "nowcast:occupation"), &OCCUPATION_MIX);
    let lw = data.models.get("log_wage")?;
    let x = restrict(&employment_covariates(p), lw);
    let log_wage = draw_residual(lw, rng, p.person_id)?.apply(lw.linear_predict(&x)?);
    let essential = ESSENTIAL_SHARE.iter().find(|x| x.0 == sector).map_or(0.0, |x| x.1);
    let remote = match occupation {
        1..=3 => 0.70,
        4 => 0.60,
        _ => 0.10,
    };
    p.work_status = WorkStatus::Employee;
    p.industry = Some(sector);
    p.occupation = Some(occupation);
    p.employment_income = (log_wage.exp() * 100.0).round().max(100.0) / 100.0;
    p.self_employment_income = 0.0;
    p.essential_worker = rng.uniform(p.person_id, "nowcast:essential") < essential;
    p.home_work_capable = rng.uniform(p.person_id, "nowcast:home") < remote;
    Ok(())
}

/// Aligns employment to the baseline employment rates by age band, keeping
/// observed workers first in line, then uprates wages by the wage index.
/// Bands without a control row are left alone.
pub fn nowcast_baseline(pop: &Population, scenario: &Scenario, data: &ModelData, rng: &KeyedRng) -> Result<Population> {
    let date = scenario.baseline_date;
    let controls = &scenario.controls;
    let mut persons = pop.persons().to_vec();
    let weights = person_weights(pop);
    let emp = data.models.get("employment")?;
    for (b, band) in EMPLOYMENT_BANDS.iter().enumerate() {
        let Some(rate) = controls.at(&format!("employment_rate:{band}"), date) else { continue };
        let members: Vec<usize> = (0..persons.len()).filter(|&i| employment_band(persons[i].age) == Some(b)).collect();
        let total: f64 = members.iter().map(|&i| weights[i]).sum();
        let mut pool = Vec::new();
        let mut pos = Vec::new();
        for &i in members.iter().filter(|&&i| persons[i].age >= 16) {
            let p = &persons[i];
            let prob = emp.logit_prob(&restrict(&employment_covariates(p), emp))?.clamp(1e-9, 1.0 - 1e-9);
            let u = simulate_binary_anchored(prob, p.work_status.is_worker(), rng, p.person_id, "employment")?.u;
            pool.push(Scored {
                id: p.person_id,
                score: logit(prob) - logit(u.max(f64::MIN_POSITIVE)),
                weight: weights[i],
            });
            pos.push(i);
        }
        let chosen =
            align_scored(&pool, rate * total).map_err(|e| context(e, &format!("employment rate for ages {band}")))?;
        for (u, &i) in pool.iter().zip(&pos) {
            match (persons[i].work_status.is_worker(), chosen.contains(&u.id)) {
                (true, false) => leave_work(&mut persons[i]),
                (false, true) => join_work(&mut persons[i], data, &scenario.reference, rng)?,
                _ => {}
            }
        }
    }
    if let Some(k) = controls.at("wage_index:all", date) {
        let idx: Vec<usize> = (0..persons.len()).filter(|&i| persons[i].employment_income > 0.0).collect();
        let values: Vec<(u64, f64, f64)> =
            idx.iter().map(|&i| (persons[i].person_id, persons[i].employment_income, weights[i])).collect();
        if k != 1.0 && !values.is_empty() {
            let scaled = align_continuous(&values, weighted_mean(&values)? * k)?;
            for (&i, v) in idx.iter().zip(scaled) {
                persons[i].employment_income = (v * 100.0).round() / 100.0;
            }
        }
    }
    pop.with_persons(persons)
}

fn context(e: Error, what: &str) -> Error {
    match e {
        Error::Infeasible(m) => Error::Infeasible(format!("{what}: {m}")),
        other => other,
    }
}

// ---------------------------------------------------------------------------
// results
// ---------------------------------------------------------------------------

/// Monthly household amounts at one date.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HouseholdIncome {
    pub household_id: u64,
    pub market: Cents,
    pub taxes: Cents,
    pub benefits: Cents,
    pub covid_benefits: Cents,
    pub housing: Cents,
    pub capital_loss: Cents,
    pub work: Cents,
}

impl HouseholdIncome {
    pub fn gross(&self) -> Cents {
        self.market + self.benefits
    }

    pub fn disposable(&self) -> Cents {
        self.gross() - self.taxes
    }

    pub fn adjusted(&self) -> Cents {
        self.disposable() - self.housing - self.capital_loss - self.work
    }

    pub fn definitions(&self) -> [Cents; 4] {
        [self.market, self.gross(), self.disposable(), self.adjusted()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveResult {
    pub label: String,
    pub date: NaiveDate,
    pub households: Vec<HouseholdIncome>,
    /// Equivalised incomes, one row per person in population order.
    pub persons: Vec<PersonIncomes>,
}

/// Change of a counterfactual against a base, under fixed deciles.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionDelta {
    pub means: [f64; 4],
    pub gini: [f64; 4],
    pub deciles: Vec<[f64; 4]>,
}

pub fn compare(base: &WaveResult, counterfactual: &WaveResult, deciles: &[u8]) -> Result<DistributionDelta> {
    let same = base.persons.len() == counterfactual.persons.len()
        && base.persons.iter().zip(&counterfactual.persons).all(|(a, b)| a.person_id == b.person_id);
    if !same {
        return Err(Error::invalid("compared results cover different persons"));
    }
    let a = summarize(&base.persons, deciles)?;
    let b = summarize(&counterfactual.persons, deciles)?;
    let diff = |x: &[f64; 4], y: &[f64; 4]| [y[0] - x[0], y[1] - x[1], y[2] - x[2], y[3] - x[3]];
    Ok(DistributionDelta {
        means: diff(&a.means, &b.means),
        gini: diff(&a.gini, &b.gini),
        deciles: a.deciles.iter().zip(&b.deciles).map(|(x, y)| diff(x, y)).collect(),
    })
}

// ---------------------------------------------------------------------------
// engine
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct BasePerson {
    state: PersonState,
    weight: f64,
    worker: bool,
    employee: bool,
    sector: Option<Sector>,
    essential: bool,
    home_capable: bool,
    mode: Mode,
    holder: bool,
    age_group: usize,
    quintile: usize,
    pup_score: f64,
    ceib_score: f64,
    subsidy_score: f64,
}

/// Situation at one date, before incomes are computed.
#[derive(Debug, Clone, PartialEq)]
pub struct Shock {
    pub covid: Vec<CovidState>,
    /// Weekly wage subsidy, per person.
    pub subsidy: Vec<Cents>,
    pub home: Vec<bool>,
    /// Per household.
    pub deferred: Vec<bool>,
    pub factor: f64,
    pub switches: Switches,
}

impl Shock {
    pub fn none(persons: usize, households: usize) -> Shock {
        Shock {
            covid: vec![CovidState::None; persons],
            subsidy: vec![Cents::ZERO; persons],
            home: vec![false; persons],
            deferred: vec![false; households],
            factor: 0.0,
            switches: Switches::default(),
        }
    }
}

#[cfg(feature = "parallel")]
fn par_map<R: Send>(n: usize, f: impl Fn(usize) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<R: Send>(n: usize, f: impl Fn(usize) -> R + Sync + Send) -> Vec<R> {
    (0..n).map(f).collect()
}

/// Wave-invariant state of a nowcast population.
pub struct Engine<'a> {
    pop: Population,
    data: &'a ModelData,
    scenario: &'a Scenario,
    people: Vec<BasePerson>,
    childcare: Vec<f64>,
    deferral_scores: Vec<f64>,
    worker_weight: BTreeMap<Sector, f64>,
    baseline: WaveResult,
}

impl<'a> Engine<'a> {
    /// `pop` should already be nowcast to the baseline.
    pub fn new(pop: Population, data: &'a ModelData, scenario: &'a Scenario) -> Result<Engine<'a>> {
        let rng = KeyedRng::new(scenario.seed);
        let weights = person_weights(&pop);
        let job_loss = data.models.get("job_loss")?;
        let subsidy = data.models.get("wage_subsidy")?;
        let mut people = Vec::with_capacity(pop.persons().len());
        let mut worker_weight = BTreeMap::new();
        for (p, &weight) in pop.persons().iter().zip(&weights) {
            let worker = p.work_status.is_worker();
            let (mut pup_score, mut subsidy_score) = (0.0, 0.0);
            if worker {
                let x = shock_covariates(p);
                let pj = job_loss.logit_prob(&restrict(&x, job_loss))?.clamp(1e-12, 1.0 - 1e-12);
                let ps = subsidy.logit_prob(&restrict(&x, subsidy))?.clamp(1e-12, 1.0 - 1e-12);
                pup_score = alignment_score(pj, &rng, p.person_id, "align:pup");
                subsidy_score = alignment_score(ps, &rng, p.person_id, "align:subsidy");
                if let Some(s) = p.industry {
                    *worker_weight.entry(s).or_insert(0.0) += weight;
                }
            }
            people.push(BasePerson {
                state: PersonState {
                    person_id: p.person_id,
                    age: p.age,
                    status: p.work_status,
                    covid: CovidState::None,
                    sick: false,
                    employment: Cents::from_euros(p.employment_income),
                    self_employment: Cents::from_euros(p.self_employment_income),
                    capital: Cents::from_euros(p.capital_income),
                    private_pension: Cents::from_euros(p.private_pension),
                    prev_weekly_earnings: Cents::from_euros(p.earnings()).annual_to_weekly(),
                    wage_subsidy: Cents::ZERO,
                },
                weight,
                worker,
                employee: p.work_status == WorkStatus::Employee,
                sector: p.industry,
                essential: p.essential_worker,
                home_capable: p.home_work_capable,
                mode: commute_mode(&data.models, p, &rng)?,
                holder: false,
                age_group: age_group(p.age),
                quintile: 0,
                pup_score,
                ceib_score: alignment_score(0.5, &rng, p.person_id, "align:ceib"),
                subsidy_score,
            });
        }
        let deferral_scores =
            pop.households().iter().map(|h| alignment_score(0.5, &rng, h.household_id, "align:deferral")).collect();
        let n_households = pop.households().len();
        let mut engine = Engine {
            pop,
            data,
            scenario,
            people,
            childcare: vec![0.0; n_households],
            deferral_scores,
            worker_weight,
            baseline: WaveResult {
                label: String::new(),
                date: scenario.baseline_date,
                households: vec![],
                persons: vec![],
            },
        };

        // disposable income does not depend on C or Q, so a first pass ranks households
        let none = Shock::none(engine.people.len(), n_households);
        let pre = engine.evaluate(BASELINE_LABEL, scenario.baseline_date, &none)?;
        let units: Vec<(u64, f64, f64)> = pre.persons.iter().map(|r| (r.person_id, r.incomes[2], r.weight)).collect();
        let deciles = assign_deciles(&units);
        let quintiles = assign_groups(&units, 5);
        let mut units = Vec::new();
        for (i, p) in engine.pop.persons().iter().enumerate() {
            let b = &mut engine.people[i];
            b.quintile = quintiles[i] as usize - 1;
            if p.age >= 18 {
                units.push(ShareUnit {
                    id: p.person_id,
                    age_group: b.age_group,
                    quintile: b.quintile,
                    weight: b.weight,
                    observed: p.capital_income > 0.0,
                });
            }
        }
        let holders = assign_holders(&data.capital, &units, &rng)?;
        for b in engine.people.iter_mut() {
            b.holder = holders.contains(&b.state.person_id);
        }
        let scale = EquivalenceScale::default();
        let mut care = Vec::with_capacity(n_households);
        for (h, hh) in engine.pop.households().iter().enumerate() {
            let pos = engine.pop.member_positions(h);
            let members: Vec<&Person> = pos.iter().map(|&i| &engine.pop.persons()[i]).collect();
            let family = family_type(members.iter().copied());
            let workers = members.iter().filter(|p| p.work_status.is_worker()).count();
            let ages: Vec<u32> = members.iter().map(|p| p.age).collect();
            let equiv_weekly = scale.equivalize(pre.households[h].disposable().to_euros(), &ages)? * 12.0 / 52.0;
            let first = pos.iter().copied().min_by_key(|&i| engine.pop.persons()[i].person_id).expect("members");
            care.push(ChildcareHousehold {
                household_id: hh.household_id,
                weight: hh.weight,
                family,
                decile: deciles[first],
                covariates: childcare_covariates(
                    hh.n_children_0_4,
                    members.iter().filter(|p| p.age < CHILD_AGE).count() as u32,
                    equiv_weekly,
                    workers >= 2 || (family == Some(FamilyType::LoneParent) && workers >= 1),
                ),
                observed_user: hh.childcare_user,
                observed_expenditure: hh.childcare_user.then_some(hh.childcare_expenditure),
            });
        }
        engine.childcare = simulate_childcare(&care, &data.models, &data.childcare, &rng)?;
        engine.baseline = engine.evaluate(BASELINE_LABEL, scenario.baseline_date, &none)?;
        Ok(engine)
    }

    pub fn population(&self) -> &Population {
        &self.pop
    }

    pub fn baseline(&self) -> &WaveResult {
        &self.baseline
    }

    /// Baseline weekly childcare spend per household.
    pub fn childcare(&self) -> &[f64] {
        &self.childcare
    }

    fn sector_scale(&self, s: Sector) -> Result<f64> {
        let national = self.scenario.reference.employment.get(&s).ok_or_else(|| {
            Error::invalid(format!("sector `{}` has control totals but no national employment reference", s.code()))
        })?;
        Ok(self.worker_weight.get(&s).copied().unwrap_or(0.0) / national)
    }

    fn all_scale(&self) -> Result<f64> {
        let national: f64 = self.scenario.reference.employment.values().sum();
        if national <= 0.0 {
            return Err(Error::invalid("national employment reference is empty"));
        }
        Ok(self.worker_weight.values().sum::<f64>() / national)
    }

    fn select(&self, pool: Vec<(usize, f64)>, target: f64, what: &str) -> Result<Vec<usize>> {
        let scored: Vec<Scored> = pool
            .iter()
            .map(|&(i, score)| Scored { id: self.people[i].state.person_id, score, weight: self.people[i].weight })
            .collect();
        let chosen = align_scored(&scored, target).map_err(|e| context(e, what))?;
        Ok(pool.into_iter().map(|x| x.0).filter(|&i| chosen.contains(&self.people[i].state.person_id)).collect())
    }

    /// Who is on which payment, working from home or deferring a mortgage.
    pub fn assign(&self, wave: &WaveSpec) -> Result<Shock> {
        let c = &self.scenario.controls;
        let d = wave.date;
        let mut shock = Shock::none(self.people.len(), self.pop.households().len());
        shock.switches = wave.switches;

        for &s in Sector::ALL {
            let count = c.at(&format!("pup:{}", s.code()), d).unwrap_or(0.0);
            if count <= 0.0 {
                continue;
            }
            let pool = (0..self.people.len())
                .filter(|&i| {
                    let b = &self.people[i];
                    b.worker && b.sector == Some(s) && (18..=66).contains(&b.state.age)
                })
                .map(|i| (i, self.people[i].pup_score))
                .collect();
            for i in self.select(pool, count * self.sector_scale(s)?, &format!("PUP in {}", s.code()))? {
                shock.covid[i] = CovidState::PupRecipient;
            }
        }

        let ceib: f64 = Sector::ALL.iter().filter_map(|s| c.at(&format!("ceib:{}", s.code()), d)).sum();
        if ceib > 0.0 {
            let total = ceib * self.all_scale()?;
            let shares: Vec<f64> =
                CASE_BANDS.iter().map(|b| c.at(&format!("cases:in_work:{b}"), d).unwrap_or(0.0)).collect();
            let sum: f64 = shares.iter().sum();
            let strata: Vec<(Option<usize>, f64)> = if sum > 0.0 {
                shares.iter().enumerate().filter(|x| *x.1 > 0.0).map(|(b, s)| (Some(b), total * s / sum)).collect()
            } else {
                vec![(None, total)]
            };
            for (band, target) in strata {
                let pool = (0..self.people.len())
                    .filter(|&i| {
                        let b = &self.people[i];
                        b.worker
                            && shock.covid[i] == CovidState::None
                            && band.is_none_or(|x| case_band(b.state.age) == x)
                    })
                    .map(|i| (i, self.people[i].ceib_score))
                    .collect();
                let what = format!("CEIB at ages {}", band.map_or("all", |b| CASE_BANDS[b]));
                for i in self.select(pool, target, &what)? {
                    shock.covid[i] = CovidState::CeibRecipient;
                }
            }
        }

        for &s in Sector::ALL {
            let count = c.at(&format!("subsidy:{}", s.code()), d).unwrap_or(0.0);
            if count <= 0.0 {
                continue;
            }
            let pool = (0..self.people.len())
                .filter(|&i| {
                    let b = &self.people[i];
                    b.employee && b.sector == Some(s) && shock.covid[i] == CovidState::None
                })
                .map(|i| (i, self.people[i].subsidy_score))
                .collect();
            for i in self.select(pool, count * self.sector_scale(s)?, &format!("wage subsidy in {}", s.code()))? {
                shock.covid[i] = CovidState::WageSubsidised;
                shock.subsidy[i] = self.data.policy.wage_subsidy(self.people[i].state.employment, d)?;
            }
        }

        if wave.switches.home_working {
            for (i, b) in self.people.iter().enumerate() {
                let c = shock.covid[i];
                if b.worker && !matches!(c, CovidState::PupRecipient | CovidState::CeibRecipient) {
                    shock.home[i] = !b.essential && (b.home_capable || c == CovidState::WageSubsidised);
                }
            }
        }

        if wave.switches.deferrals {
            if let Some(count) = c.interpolate("deferrals:all", d).filter(|&x| x > 0.0) {
                let national =
                    self.scenario.reference.mortgage_holders.ok_or_else(|| {
                        Error::invalid("deferral controls need a national mortgage_holders reference")
                    })?;
                let hh = self.pop.households();
                let pool: Vec<Scored> = hh
                    .iter()
                    .zip(&self.deferral_scores)
                    .filter(|(h, _)| h.tenure == Tenure::Mortgage)
                    .map(|(h, &score)| Scored { id: h.household_id, score, weight: h.weight })
                    .collect();
                let held: f64 = pool.iter().map(|u| u.weight).sum();
                let chosen =
                    align_scored(&pool, count * held / national).map_err(|e| context(e, "mortgage deferrals"))?;
                for (k, h) in hh.iter().enumerate() {
                    shock.deferred[k] = chosen.contains(&h.household_id);
                }
            }
        }

        shock.factor = c.at("index_change_factor:all", d).unwrap_or(0.0);
        Ok(shock)
    }

    fn household(&self, h: usize, date: NaiveDate, shock: &Shock) -> Result<(HouseholdIncome, Vec<u32>)> {
        let hh = &self.pop.households()[h];
        let pos = self.pop.member_positions(h);
        let mut states = Vec::with_capacity(pos.len());
        let mut ages = Vec::with_capacity(pos.len());
        let (mut car, mut public) = (0, 0);
        let mut relieved = false;
        let mut capital = Cents::ZERO;
        for &i in pos {
            let b = &self.people[i];
            let mut s = b.state.clone();
            s.covid = shock.covid[i];
            match s.covid {
                CovidState::PupRecipient => {
                    s.status = WorkStatus::Unemployed;
                    s.employment = Cents::ZERO;
                    s.self_employment = Cents::ZERO;
                }
                CovidState::CeibRecipient => {
                    s.sick = true;
                    s.employment = Cents::ZERO;
                    s.self_employment = Cents::ZERO;
                }
                CovidState::WageSubsidised => {
                    s.wage_subsidy = shock.subsidy[i];
                    s.employment = (s.employment - shock.subsidy[i].weekly_to_annual()).max(Cents::ZERO);
                }
                CovidState::None => {}
            }
            if b.worker {
                let away = matches!(s.covid, CovidState::PupRecipient | CovidState::CeibRecipient) || shock.home[i];
                relieved |= away;
                if !away {
                    match b.mode {
                        Mode::Public => public += 1,
                        Mode::Private => car += 1,
                        Mode::None => {}
                    }
                }
            }
            capital += capital_loss(
                &self.data.capital,
                b.age_group,
                b.quintile,
                b.holder,
                shock.factor,
                self.scenario.amortize_capital,
            )?;
            ages.push(s.age);
            states.push(s);
        }
        let tb = household_t_and_b(&states, date, shock.switches.policy(), &self.data.policy)?;
        let work = self.data.commute.commuting_cost(car, public).weekly_to_monthly()
            + childcare_cost(self.childcare[h], shock.switches.childcare_support, relieved).weekly_to_monthly();
        Ok((
            HouseholdIncome {
                household_id: hh.household_id,
                market: tb.market,
                taxes: tb.taxes,
                benefits: tb.benefits,
                covid_benefits: tb.covid_benefits,
                housing: housing_cost(hh, shock.deferred[h]),
                capital_loss: capital,
                work,
            },
            ages,
        ))
    }

    /// Household incomes and equivalised person incomes under a shock.
    pub fn evaluate(&self, label: &str, date: NaiveDate, shock: &Shock) -> Result<WaveResult> {
        let n = self.pop.households().len();
        if shock.covid.len() != self.people.len() || shock.deferred.len() != n {
            return Err(Error::invalid("shock does not match the population"));
        }
        let rows = par_map(n, |h| self.household(h, date, shock));
        let scale = EquivalenceScale::default();
        let mut households = Vec::with_capacity(n);
        let mut persons = vec![None; self.people.len()];
        for (h, row) in rows.into_iter().enumerate() {
            let (inc, ages) = row?;
            let f = scale.factor(&ages)?;
            let eq = inc.definitions().map(|c| c.to_euros() / f);
            for &i in self.pop.member_positions(h) {
                persons[i] = Some(PersonIncomes {
                    person_id: self.people[i].state.person_id,
                    weight: self.people[i].weight,
                    incomes: eq,
                });
            }
            households.push(inc);
        }
        Ok(WaveResult {
            label: label.to_string(),
            date,
            households,
            persons: persons.into_iter().map(|p| p.expect("every person belongs to a household")).collect(),
        })
    }

    pub fn apply_wave(&self, wave: &WaveSpec) -> Result<WaveResult> {
        self.evaluate(&wave.label, wave.date, &self.assign(wave)?)
    }

    /// Baseline deciles of adjusted disposable income, per person.
    pub fn deciles(&self) -> Vec<u8> {
        let units: Vec<(u64, f64, f64)> =
            self.baseline.persons.iter().map(|r| (r.person_id, r.incomes[3], r.weight)).collect();
        assign_deciles(&units)
    }
}

// ---------------------------------------------------------------------------
// runs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct WaveOutput {
    pub result: WaveResult,
    pub summary: DistributionSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    /// Baseline first, then the scenario waves in date order.
    pub waves: Vec<WaveOutput>,
    pub deciles: Vec<u8>,
}

pub const TABLE_FILES: [&str; 4] = ["table8.csv", "table9.csv", "table10.csv", "table_e1.csv"];

impl RunOutput {
    pub fn labelled(&self) -> Vec<(String, DistributionSummary)> {
        self.waves.iter().map(|w| (w.result.label.clone(), w.summary.clone())).collect()
    }

    pub fn tables(&self) -> Vec<(&'static str, String)> {
        use crate::metrics::{table10, table8, table9, table_e1};
        let l = self.labelled();
        TABLE_FILES.into_iter().zip([table8(&l), table9(&l), table10(&l), table_e1(&l)]).collect()
    }

    /// Every output file: the four tables and one summary per wave.
    pub fn files(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = self.tables().into_iter().map(|(n, b)| (n.to_string(), b)).collect();
        for (k, w) in self.waves.iter().enumerate() {
            let name = if k == 0 { "summary_before.csv".to_string() } else { format!("summary_{}.csv", w.result.date) };
            out.push((name, crate::metrics::summary_csv(&w.summary)));
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut out = Vec::new();
        for (name, body) in self.files() {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
            out.push(p);
        }
        Ok(out)
    }
}

/// Nowcast, prepare and evaluate every wave of a scenario.
pub fn run(pop: &Population, scenario: &Scenario, data: &ModelData) -> Result<RunOutput> {
    let rng = KeyedRng::new(scenario.seed);
    let base = if scenario.nowcast { nowcast_baseline(pop, scenario, data, &rng)? } else { pop.clone() };
    let engine = Engine::new(base, data, scenario)?;
    let deciles = engine.deciles();
    let results = par_map(scenario.waves.len(), |k| engine.apply_wave(&scenario.waves[k]));
    let mut waves = Vec::with_capacity(results.len() + 1);
    for result in std::iter::once(Ok(engine.baseline().clone())).chain(results) {
        let result = result?;
        let summary = summarize(&result.persons, &deciles)?;
        waves.push(WaveOutput { result, summary });
    }
    Ok(RunOutput { waves, deciles })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::population::{generate_synthetic, SynthConfig};

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn small_pop(n: i64) -> Population {
        let cfg = SynthConfig { households: n, ..SynthConfig::default() };
        generate_synthetic(&cfg, 7).unwrap()
    }

    #[test]
    fn controls_lookup_and_interpolation() {
        let c = ControlTotals::shipped();
        assert_eq!(c.at("pup:accommodation_food", d("2020-05-05")), Some(128500.0));
        assert_eq!(c.at("pup:accommodation_food", d("2020-05-04")), None);
        assert_eq!(c.at("ceib:manufacturing", d("2020-11-15")), Some(7800.0));
        assert_eq!(c.interpolate("deferrals:all", d("2020-03-01")), Some(28000.0));
        assert_eq!(c.interpolate("deferrals:all", d("2021-01-26")), Some(90539.0));
        let mid = c.interpolate("deferrals:all", d("2020-04-05")).unwrap();
        assert!((mid - (28000.0 + 8.0 / 15.0 * 17000.0)).abs() < 1e-9);
    }

    #[test]
    fn controls_accept_labels_and_reject_unknown_keys() {
        let ok = "stratum_key,date,target\n\"pup:Accommodation and food service activities\",2020-05-05,10\n";
        let c = ControlTotals::parse("c.csv", ok).unwrap();
        assert_eq!(c.at("pup:accommodation_food", d("2020-06-01")), Some(10.0));
        for bad in [
            "stratum_key,date,target\npup:Hospitality,2020-05-05,10\n",
            "stratum_key,date,target\npup:other,2020-05-05,-1\n",
            "stratum_key,date,target\nfoo:all,2020-05-05,1\n",
            "stratum_key,date,target\npup:other,2020-05-05,1\npup:other,2020-05-05,2\n",
        ] {
            assert!(matches!(ControlTotals::parse("c.csv", bad), Err(Error::Validation(_))), "{bad}");
        }
    }

    #[test]
    fn labels() {
        assert_eq!(wave_label(d("2020-05-05")), "May 5th");
        assert_eq!(wave_label(d("2020-12-22")), "December 22nd");
        assert_eq!(wave_label(d("2020-08-01")), "August 1st");
        assert_eq!(wave_label(d("2020-08-11")), "August 11th");
        let s = Scenario::shipped();
        let labels: Vec<&str> = s.waves.iter().map(|w| w.label.as_str()).collect();
        assert_eq!(labels, ["May 5th", "June 6th", "August 28th", "November 15th", "December 22nd", "January 26th"]);
    }

    #[test]
    fn scenario_errors() {
        let bad = [
            "seed = 1\n[wave 2020-05-05]\npup = maybe\n",
            "seed = 1\n[wave 2020-06-05]\n[wave 2020-05-05]\n",
            "seed = 1\n[wave 2020-05-05]\nlabel = Before Crisis\n",
            "seed = 1\n[weird]\n",
            "seed = 1\ncapital_loss = sometimes\n",
            "seed = 1\n[wave 2019-01-01]\n",
        ];
        for text in bad {
            assert!(Scenario::parse("s.cfg", text, None).is_err(), "{text}");
        }
        let s = Scenario::shipped();
        let again = Scenario::parse("s.cfg", &s.to_config(), None).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn nowcast_at_observed_rates_changes_nothing() {
        let pop = small_pop(300);
        let w = person_weights(&pop);
        let mut s = Scenario::shipped();
        let mut c = ControlTotals::default();
        for (b, band) in EMPLOYMENT_BANDS.iter().enumerate() {
            let (mut emp, mut all) = (0.0, 0.0);
            for (p, &wt) in pop.persons().iter().zip(&w) {
                if employment_band(p.age) == Some(b) {
                    all += wt;
                    if p.work_status.is_worker() {
                        emp += wt;
                    }
                }
            }
            c.insert(&format!("employment_rate:{band}"), s.baseline_date, emp / all).unwrap();
        }
        s.controls = c;
        let out = nowcast_baseline(&pop, &s, &ModelData::shipped(), &KeyedRng::new(3)).unwrap();
        assert_eq!(out.persons(), pop.persons());
    }

    #[test]
    fn wage_index_scales_mean_employee_income() {
        let pop = small_pop(200);
        let mut s = Scenario::shipped();
        let mut c = ControlTotals::default();
        c.insert("wage_index:all", s.baseline_date, 1.02).unwrap();
        s.controls = c;
        let out = nowcast_baseline(&pop, &s, &ModelData::shipped(), &KeyedRng::new(3)).unwrap();
        let mean = |p: &Population| {
            let w = person_weights(p);
            let v: Vec<(u64, f64, f64)> = p
                .persons()
                .iter()
                .zip(&w)
                .filter(|x| x.0.employment_income > 0.0)
                .map(|(q, &wt)| (q.person_id, q.employment_income, wt))
                .collect();
            weighted_mean(&v).unwrap()
        };
        assert!((mean(&out) / mean(&pop) - 1.02).abs() < 1e-5);
    }

    #[test]
    fn null_shock_reproduces_the_baseline() {
        let pop = small_pop(150);
        let data = ModelData::shipped();
        let mut s = Scenario::shipped();
        s.controls = ControlTotals::default();
        let engine = Engine::new(pop, &data, &s).unwrap();
        let wave = WaveSpec::new(d("2020-05-05"), Switches::default());
        let r = engine.apply_wave(&wave).unwrap();
        assert_eq!(r.households, engine.baseline().households);
        assert_eq!(r.persons, engine.baseline().persons);
    }
}
