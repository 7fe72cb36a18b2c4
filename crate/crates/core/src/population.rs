//! Microdata schema, validation, file I/O and the synthetic generator.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use crate::error::{Error, Result, ValidationReport, Violation};
use crate::kv::KvFile;
use crate::rng::KeyedRng;
use crate::table::Table;

macro_rules! code_enum {
    ($(#[$m:meta])* $name:ident { $($var:ident => $code:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name { $($var),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$var),+];

            pub fn code(self) -> &'static str {
                match self { $($name::$var => $code),+ }
            }

            pub fn from_code(s: &str) -> Option<Self> {
                match s { $($code => Some($name::$var),)+ _ => None }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.code())
            }
        }

        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                Self::from_code(s).ok_or_else(|| {
                    let allowed: Vec<&str> = Self::ALL.iter().map(|v| v.code()).collect();
                    Error::invalid(format!("`{s}` is not one of {}", allowed.join("|")))
                })
            }
        }
    };
}

code_enum!(Sex { Male => "male", Female => "female" });

code_enum!(Education { Primary => "primary", Secondary => "secondary", University => "university" });

code_enum!(Region {
    BorderMidlandWestern => "border_midland_western",
    SouthernEastern => "southern_eastern",
});

code_enum!(WorkStatus {
    Employee => "employee",
    SelfEmployed => "self-employed",
    Unemployed => "unemployed",
    Retired => "retired",
    Inactive => "inactive",
    Student => "student",
    Child => "child",
});

code_enum!(CovidState {
    None => "none",
    PupRecipient => "pup_recipient",
    CeibRecipient => "ceib_recipient",
    WageSubsidised => "wage_subsidised",
});

code_enum!(Tenure { OwnerOutright => "owner_outright", Mortgage => "mortgage", Renter => "renter" });

code_enum!(
    /// The seventeen sectors used for pandemic unemployment control totals.
    Sector {
        AgricultureMining => "agriculture_mining",
        Manufacturing => "manufacturing",
        Utilities => "utilities",
        Construction => "construction",
        WholesaleRetail => "wholesale_retail",
        TransportStorage => "transport_storage",
        AccommodationFood => "accommodation_food",
        InformationCommunication => "information_communication",
        FinancialInsurance => "financial_insurance",
        RealEstate => "real_estate",
        ProfessionalScientific => "professional_scientific",
        AdministrativeSupport => "administrative_support",
        PublicAdministration => "public_administration",
        Education => "education",
        HealthSocialWork => "health_social_work",
        ArtsEntertainment => "arts_entertainment",
        Other => "other",
    }
);

impl WorkStatus {
    pub fn is_worker(self) -> bool {
        matches!(self, WorkStatus::Employee | WorkStatus::SelfEmployed)
    }
}

impl Sector {
    /// Published sector label.
    pub fn label(self) -> &'static str {
        match self {
            Sector::AgricultureMining => "Agriculture, Forestry and Fishing; Mining and Quarrying",
            Sector::Manufacturing => "Manufacturing",
            Sector::Utilities => "Electricity, gas supply; Water supply, sewerage and waste management",
            Sector::Construction => "Construction",
            Sector::WholesaleRetail => "Wholesale and Retail Trade; Repair of Motor Vehicles and motorcycles",
            Sector::TransportStorage => "Transportation and storage",
            Sector::AccommodationFood => "Accommodation and food service activities",
            Sector::InformationCommunication => "Information and communication activities",
            Sector::FinancialInsurance => "Financial and insurance activities",
            Sector::RealEstate => "Real Estate activities",
            Sector::ProfessionalScientific => "Professional, Scientific and Technical activities",
            Sector::AdministrativeSupport => "Administrative and support service activities",
            Sector::PublicAdministration => "Public Administration And Defence; Compulsory Social Security",
            Sector::Education => "Education",
            Sector::HealthSocialWork => "Human Health And Social Work activities",
            Sector::ArtsEntertainment => "Arts, entertainment and recreation",
            Sector::Other => "Other Sectors",
        }
    }

    /// Accepts either the snake_case code or the exact published label.
    pub fn lookup(s: &str) -> Option<Sector> {
        Sector::from_code(s).or_else(|| Sector::ALL.iter().copied().find(|x| x.label() == s))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Person {
    pub person_id: u64,
    pub household_id: u64,
    pub age: u32,
    pub sex: Sex,
    pub education: Education,
    /// Occupation group 1..=9; group 9 is the reference category of the commuting models.
    pub occupation: Option<u8>,
    pub industry: Option<Sector>,
    pub region: Region,
    pub work_status: WorkStatus,
    /// € per year.
    pub employment_income: f64,
    pub self_employment_income: f64,
    pub capital_income: f64,
    pub private_pension: f64,
    pub essential_worker: bool,
    pub home_work_capable: bool,
    pub covid_state: CovidState,
}

impl Person {
    /// Employment plus positive self-employment income, € per year.
    pub fn earnings(&self) -> f64 {
        self.employment_income + self.self_employment_income.max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Household {
    pub household_id: u64,
    pub weight: f64,
    pub member_ids: Vec<u64>,
    pub tenure: Tenure,
    /// € per month.
    pub mortgage_payment: f64,
    /// € per month.
    pub rent: f64,
    pub childcare_user: bool,
    /// € per week.
    pub childcare_expenditure: f64,
    pub n_children_0_4: u32,
    pub n_children_under14: u32,
}

/// Validated microdata. Construct through [`Population::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    households: Vec<Household>,
    persons: Vec<Person>,
    base_period: NaiveDate,
    person_index: HashMap<u64, usize>,
    household_index: HashMap<u64, usize>,
    members: Vec<Vec<usize>>,
}

pub const HOUSEHOLD_COLUMNS: &[&str] = &[
    "household_id",
    "weight",
    "member_ids",
    "tenure",
    "mortgage_payment",
    "rent",
    "childcare_user",
    "childcare_expenditure",
    "n_children_0_4",
    "n_children_under14",
];

pub const PERSON_COLUMNS: &[&str] = &[
    "person_id",
    "household_id",
    "age",
    "sex",
    "education",
    "occupation",
    "industry",
    "region",
    "work_status",
    "employment_income",
    "self_employment_income",
    "capital_income",
    "private_pension",
    "essential_worker",
    "home_work_capable",
    "covid_state",
];

pub fn validate_person(p: &Person, file: &str, row: usize, report: &mut ValidationReport) {
    let v = |col: &str, msg: String| Violation::new(file, format!("person {}: {msg}", p.person_id)).at(row, col);
    let money = [
        ("employment_income", p.employment_income),
        ("self_employment_income", p.self_employment_income),
        ("capital_income", p.capital_income),
        ("private_pension", p.private_pension),
    ];
    for (col, x) in money {
        if !x.is_finite() {
            report.push(v(col, "not a finite amount".into()));
        }
    }
    for (col, x) in [money[0], money[2], money[3]] {
        if x < 0.0 {
            report.push(v(col, format!("{x} is negative")));
        }
    }
    if p.employment_income > 0.0 && p.work_status != WorkStatus::Employee {
        report.push(v("work_status", format!("has employment income but work_status is {}", p.work_status)));
    }
    if p.work_status.is_worker() && p.industry.is_none() {
        report.push(v("industry", format!("industry required for work_status {}", p.work_status)));
    }
    if let Some(o) = p.occupation {
        if !(1..=9).contains(&o) {
            report.push(v("occupation", format!("occupation {o} outside 1..9")));
        }
    }
    if p.covid_state == CovidState::PupRecipient && !(18..=66).contains(&p.age) {
        report.push(v("covid_state", format!("pup_recipient aged {} outside 18-66", p.age)));
    }
}

pub fn validate_household(h: &Household, file: &str, row: usize, report: &mut ValidationReport) {
    let v = |col: &str, msg: String| Violation::new(file, format!("household {}: {msg}", h.household_id)).at(row, col);
    if !(h.weight.is_finite() && h.weight > 0.0) {
        report.push(v("weight", format!("weight {} must be positive", h.weight)));
    }
    for (col, x) in
        [("mortgage_payment", h.mortgage_payment), ("rent", h.rent), ("childcare_expenditure", h.childcare_expenditure)]
    {
        if !x.is_finite() || x < 0.0 {
            report.push(v(col, format!("{x} must be a non-negative amount")));
        }
    }
    if (h.mortgage_payment > 0.0) != (h.tenure == Tenure::Mortgage) {
        report.push(v(
            "mortgage_payment",
            format!("mortgage_payment {} inconsistent with tenure {}", h.mortgage_payment, h.tenure),
        ));
    }
    if h.childcare_expenditure > 0.0 && !h.childcare_user {
        report.push(v("childcare_user", "childcare expenditure without childcare_user".into()));
    }
    if h.member_ids.is_empty() {
        report.push(v("member_ids", "household has no members".into()));
    }
}

impl Population {
    pub fn new(households: Vec<Household>, persons: Vec<Person>, base_period: NaiveDate) -> Result<Self> {
        let mut report = ValidationReport::default();
        for (i, h) in households.iter().enumerate() {
            validate_household(h, "households", i + 1, &mut report);
        }
        for (i, p) in persons.iter().enumerate() {
            validate_person(p, "persons", i + 1, &mut report);
        }
        let links = check_links(&households, &persons, "households", "persons", &mut report);
        let (person_index, household_index, members) = match (report.is_empty(), links) {
            (true, Some(l)) => l,
            _ => return Err(Error::Validation(report)),
        };
        Ok(Population { households, persons, base_period, person_index, household_index, members })
    }

    pub fn households(&self) -> &[Household] {
        &self.households
    }

    pub fn persons(&self) -> &[Person] {
        &self.persons
    }

    pub fn base_period(&self) -> NaiveDate {
        self.base_period
    }

    pub fn person(&self, id: u64) -> Option<&Person> {
        self.person_index.get(&id).map(|&i| &self.persons[i])
    }

    pub fn person_position(&self, id: u64) -> Option<usize> {
        self.person_index.get(&id).copied()
    }

    pub fn household(&self, id: u64) -> Option<&Household> {
        self.household_index.get(&id).map(|&i| &self.households[i])
    }

    /// Indices into [`Population::persons`] of household `h`'s members, in `member_ids` order.
    pub fn member_positions(&self, h: usize) -> &[usize] {
        &self.members[h]
    }

    pub fn members(&self, h: usize) -> impl Iterator<Item = &Person> {
        self.members[h].iter().map(move |&i| &self.persons[i])
    }

    /// Position of the household a person belongs to.
    pub fn household_position_of(&self, person: &Person) -> usize {
        self.household_index[&person.household_id]
    }

    pub fn into_parts(self) -> (Vec<Household>, Vec<Person>, NaiveDate) {
        (self.households, self.persons, self.base_period)
    }

    /// Replaces person records (same ids, same households) and revalidates.
    pub fn with_persons(&self, persons: Vec<Person>) -> Result<Population> {
        Population::new(self.households.clone(), persons, self.base_period)
    }
}

type Links = (HashMap<u64, usize>, HashMap<u64, usize>, Vec<Vec<usize>>);

fn check_links(
    households: &[Household],
    persons: &[Person],
    hfile: &str,
    pfile: &str,
    report: &mut ValidationReport,
) -> Option<Links> {
    let before = report.0.len();
    let mut person_index = HashMap::with_capacity(persons.len());
    for (i, p) in persons.iter().enumerate() {
        if person_index.insert(p.person_id, i).is_some() {
            report.push(Violation::new(pfile, format!("duplicate person_id {}", p.person_id)).at(i + 1, "person_id"));
        }
    }
    let mut household_index = HashMap::with_capacity(households.len());
    for (i, h) in households.iter().enumerate() {
        if household_index.insert(h.household_id, i).is_some() {
            report.push(
                Violation::new(hfile, format!("duplicate household_id {}", h.household_id)).at(i + 1, "household_id"),
            );
        }
    }
    for (i, p) in persons.iter().enumerate() {
        if !household_index.contains_key(&p.household_id) {
            report.push(
                Violation::new(
                    pfile,
                    format!("person {} references household_id {} which does not exist", p.person_id, p.household_id),
                )
                .at(i + 1, "household_id"),
            );
        }
    }
    let mut claimed: HashSet<u64> = HashSet::new();
    let mut members = Vec::with_capacity(households.len());
    for (i, h) in households.iter().enumerate() {
        let mut m = Vec::with_capacity(h.member_ids.len());
        for &id in &h.member_ids {
            match person_index.get(&id) {
                None => report.push(
                    Violation::new(hfile, format!("household {} lists unknown member {id}", h.household_id))
                        .at(i + 1, "member_ids"),
                ),
                Some(&pi) => {
                    if !claimed.insert(id) {
                        report.push(
                            Violation::new(hfile, format!("person {id} listed in more than one household"))
                                .at(i + 1, "member_ids"),
                        );
                    }
                    if persons[pi].household_id != h.household_id {
                        report.push(
                            Violation::new(
                                hfile,
                                format!(
                                    "household {} lists person {id} whose household_id is {}",
                                    h.household_id, persons[pi].household_id
                                ),
                            )
                            .at(i + 1, "member_ids"),
                        );
                    }
                    m.push(pi);
                }
            }
        }
        members.push(m);
    }
    for (i, p) in persons.iter().enumerate() {
        if household_index.contains_key(&p.household_id) && !claimed.contains(&p.person_id) {
            report.push(
                Violation::new(pfile, format!("person {} is not listed in household {}", p.person_id, p.household_id))
                    .at(i + 1, "household_id"),
            );
        }
    }
    (report.0.len() == before).then_some((person_index, household_index, members))
}

// ---------------------------------------------------------------------------
// file I/O
// ---------------------------------------------------------------------------

const DEFAULT_BASE_PERIOD: (i32, u32, u32) = (2016, 12, 31);

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "1" => Some(true),
        "false" | "0" => Some(false),
        _ => None,
    }
}

fn fmt_money(x: f64) -> String {
    format!("{x}")
}

/// Parses both files and returns every violation found, not just the first.
pub fn parse_population(households_csv: &str, persons_csv: &str, base_period: Option<NaiveDate>) -> Result<Population> {
    const HF: &str = "households.csv";
    const PF: &str = "persons.csv";
    let mut report = ValidationReport::default();
    let htab = Table::parse(HF, households_csv);
    let ptab = Table::parse(PF, persons_csv);
    let (htab, ptab) = match (htab, ptab) {
        (Ok(h), Ok(p)) => (h, p),
        (h, p) => {
            for e in [h.err(), p.err()].into_iter().flatten() {
                match e {
                    Error::Validation(r) => report.0.extend(r.0),
                    other => return Err(other),
                }
            }
            return Err(Error::Validation(report));
        }
    };
    let hcols = htab.require_columns(HOUSEHOLD_COLUMNS, &mut report);
    let pcols = ptab.require_columns(PERSON_COLUMNS, &mut report);
    for (t, cols) in [(&htab, HOUSEHOLD_COLUMNS), (&ptab, PERSON_COLUMNS)] {
        for h in &t.headers {
            if !cols.contains(&h.as_str()) {
                report.push(Violation::new(&t.file, format!("unexpected column `{h}`")));
            }
        }
    }
    if !(hcols && pcols) {
        return Err(Error::Validation(report));
    }

    let mut households = Vec::with_capacity(htab.len());
    for row in htab.rows() {
        let r = &mut report;
        let members = row.parse_with(
            "member_ids",
            r,
            |s| {
                s.split(';')
                    .map(str::trim)
                    .filter(|x| !x.is_empty())
                    .map(|x| x.parse::<u64>().ok())
                    .collect::<Option<Vec<u64>>>()
            },
            "`;`-separated person ids",
        );
        let h = (|| {
            Some(Household {
                household_id: row.parse("household_id", r)?,
                weight: row.parse("weight", r)?,
                member_ids: members?,
                tenure: row.parse("tenure", r)?,
                mortgage_payment: row.parse("mortgage_payment", r)?,
                rent: row.parse("rent", r)?,
                childcare_user: row.parse_with("childcare_user", r, parse_bool, "true|false")?,
                childcare_expenditure: row.parse("childcare_expenditure", r)?,
                n_children_0_4: row.parse("n_children_0_4", r)?,
                n_children_under14: row.parse("n_children_under14", r)?,
            })
        })();
        if let Some(h) = h {
            validate_household(&h, HF, row.number, r);
            households.push(h);
        }
    }

    let mut persons = Vec::with_capacity(ptab.len());
    for row in ptab.rows() {
        let r = &mut report;
        let p = (|| {
            Some(Person {
                person_id: row.parse("person_id", r)?,
                household_id: row.parse("household_id", r)?,
                age: row.parse("age", r)?,
                sex: row.parse("sex", r)?,
                education: row.parse("education", r)?,
                occupation: row.parse_opt("occupation", r)?,
                industry: row.parse_with(
                    "industry",
                    r,
                    |s| if s.is_empty() { Some(None) } else { Sector::lookup(s).map(Some) },
                    "a sector code or empty",
                )?,
                region: row.parse("region", r)?,
                work_status: row.parse("work_status", r)?,
                employment_income: row.parse("employment_income", r)?,
                self_employment_income: row.parse("self_employment_income", r)?,
                capital_income: row.parse("capital_income", r)?,
                private_pension: row.parse("private_pension", r)?,
                essential_worker: row.parse_with("essential_worker", r, parse_bool, "true|false")?,
                home_work_capable: row.parse_with("home_work_capable", r, parse_bool, "true|false")?,
                covid_state: row.parse("covid_state", r)?,
            })
        })();
        if let Some(p) = p {
            validate_person(&p, PF, row.number, r);
            persons.push(p);
        }
    }

    let links = check_links(&households, &persons, HF, PF, &mut report);
    let base_period = base_period.unwrap_or_else(|| {
        let (y, m, d) = DEFAULT_BASE_PERIOD;
        NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
    });
    match (report.is_empty(), links) {
        (true, Some((person_index, household_index, members))) => {
            Ok(Population { households, persons, base_period, person_index, household_index, members })
        }
        _ => Err(Error::Validation(report)),
    }
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads `households.csv`, `persons.csv` and the optional `population.cfg`
/// (`base_period = YYYY-MM-DD`) from a directory.
pub fn load_population(dir: impl AsRef<Path>) -> Result<Population> {
    let dir = dir.as_ref();
    let h = read_file(&dir.join("households.csv"))?;
    let p = read_file(&dir.join("persons.csv"))?;
    let cfg = dir.join("population.cfg");
    let base = if cfg.exists() {
        let kv = KvFile::parse("population.cfg", &read_file(&cfg)?)?;
        let mut rep = ValidationReport::default();
        let d = kv.root().parse_opt::<NaiveDate>("population.cfg", "base_period", &mut rep);
        rep.into_result(d)?
    } else {
        None
    };
    parse_population(&h, &p, base)
}

pub fn households_csv(pop: &Population) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HOUSEHOLD_COLUMNS).expect("in-memory write");
    for h in &pop.households {
        let members: Vec<String> = h.member_ids.iter().map(|m| m.to_string()).collect();
        w.write_record([
            h.household_id.to_string(),
            format!("{}", h.weight),
            members.join(";"),
            h.tenure.code().to_string(),
            fmt_money(h.mortgage_payment),
            fmt_money(h.rent),
            h.childcare_user.to_string(),
            fmt_money(h.childcare_expenditure),
            h.n_children_0_4.to_string(),
            h.n_children_under14.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

pub fn persons_csv(pop: &Population) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(PERSON_COLUMNS).expect("in-memory write");
    for p in &pop.persons {
        w.write_record([
            p.person_id.to_string(),
            p.household_id.to_string(),
            p.age.to_string(),
            p.sex.code().to_string(),
            p.education.code().to_string(),
            p.occupation.map(|o| o.to_string()).unwrap_or_default(),
            p.industry.map(|s| s.code().to_string()).unwrap_or_default(),
            p.region.code().to_string(),
            p.work_status.code().to_string(),
            fmt_money(p.employment_income),
            fmt_money(p.self_employment_income),
            fmt_money(p.capital_income),
            fmt_money(p.private_pension),
            p.essential_worker.to_string(),
            p.home_work_capable.to_string(),
            p.covid_state.code().to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

pub fn save_population(pop: &Population, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: String| {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(path, e))
    };
    write("households.csv", households_csv(pop))?;
    write("persons.csv", persons_csv(pop))?;
    write("population.cfg", format!("base_period = {}\n", pop.base_period))
}

// ---------------------------------------------------------------------------
// synthetic generator
// ---------------------------------------------------------------------------

/// Parameters of the synthetic population generator (`synth.cfg`).
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub households: i64,
    pub base_period: NaiveDate,
    /// Share of workers per sector; sums to 1.
    pub sector_shares: BTreeMap<Sector, f64>,
    /// Probability that a person aged 16-65 not in education works.
    pub employment_rate: f64,
    pub self_employed_share: f64,
    /// Log-normal location of annual employee income (log €).
    pub income_mu: f64,
    pub income_sigma: f64,
    /// Additive shift of the log-income location per sector.
    pub sector_income_shift: BTreeMap<Sector, f64>,
    pub essential_share: BTreeMap<Sector, f64>,
    /// Draw household weights uniformly in [0.5, 1.5] instead of 1.
    pub perturb_weights: bool,
}

/// Approximate national employment by sector (thousands); shares seed the generator.
pub const NATIONAL_SECTOR_EMPLOYMENT: [(Sector, f64); 17] = [
    (Sector::AgricultureMining, 113.6),
    (Sector::Manufacturing, 265.5),
    (Sector::Utilities, 26.3),
    (Sector::Construction, 147.2),
    (Sector::WholesaleRetail, 307.4),
    (Sector::TransportStorage, 104.1),
    (Sector::AccommodationFood, 179.5),
    (Sector::InformationCommunication, 129.0),
    (Sector::FinancialInsurance, 117.8),
    (Sector::RealEstate, 14.9),
    (Sector::ProfessionalScientific, 148.0),
    (Sector::AdministrativeSupport, 84.4),
    (Sector::PublicAdministration, 109.6),
    (Sector::Education, 187.3),
    (Sector::HealthSocialWork, 291.5),
    (Sector::ArtsEntertainment, 39.6),
    (Sector::Other, 92.7),
];

const SECTOR_INCOME_SHIFT: [(Sector, f64); 17] = [
    (Sector::AgricultureMining, -0.20),
    (Sector::Manufacturing, 0.10),
    (Sector::Utilities, 0.30),
    (Sector::Construction, 0.0),
    (Sector::WholesaleRetail, -0.20),
    (Sector::TransportStorage, 0.0),
    (Sector::AccommodationFood, -0.45),
    (Sector::InformationCommunication, 0.35),
    (Sector::FinancialInsurance, 0.35),
    (Sector::RealEstate, 0.10),
    (Sector::ProfessionalScientific, 0.20),
    (Sector::AdministrativeSupport, -0.20),
    (Sector::PublicAdministration, 0.15),
    (Sector::Education, 0.10),
    (Sector::HealthSocialWork, 0.0),
    (Sector::ArtsEntertainment, -0.30),
    (Sector::Other, -0.25),
];

/// Share of workers in each sector who kept working on site during closures.
pub const ESSENTIAL_SHARE: [(Sector, f64); 17] = [
    (Sector::AgricultureMining, 0.90),
    (Sector::Manufacturing, 0.50),
    (Sector::Utilities, 0.90),
    (Sector::Construction, 0.20),
    (Sector::WholesaleRetail, 0.45),
    (Sector::TransportStorage, 0.60),
    (Sector::AccommodationFood, 0.05),
    (Sector::InformationCommunication, 0.20),
    (Sector::FinancialInsurance, 0.30),
    (Sector::RealEstate, 0.10),
    (Sector::ProfessionalScientific, 0.15),
    (Sector::AdministrativeSupport, 0.20),
    (Sector::PublicAdministration, 0.80),
    (Sector::Education, 0.30),
    (Sector::HealthSocialWork, 0.95),
    (Sector::ArtsEntertainment, 0.05),
    (Sector::Other, 0.20),
];

impl Default for SynthConfig {
    fn default() -> Self {
        let total: f64 = NATIONAL_SECTOR_EMPLOYMENT.iter().map(|(_, n)| n).sum();
        SynthConfig {
            households: 1000,
            base_period: NaiveDate::from_ymd_opt(2016, 12, 31).expect("valid date"),
            sector_shares: NATIONAL_SECTOR_EMPLOYMENT.iter().map(|&(s, n)| (s, n / total)).collect(),
            employment_rate: 0.72,
            self_employed_share: 0.13,
            income_mu: (38_000f64).ln(),
            income_sigma: 0.6,
            sector_income_shift: SECTOR_INCOME_SHIFT.iter().copied().collect(),
            essential_share: ESSENTIAL_SHARE.iter().copied().collect(),
            perturb_weights: false,
        }
    }
}

impl SynthConfig {
    /// Parses `synth.cfg`. Unspecified sector shares are filled from the
    /// national mix, rescaled to the share left by the specified ones.
    pub fn parse(text: &str) -> Result<SynthConfig> {
        const F: &str = "synth.cfg";
        let kv = KvFile::parse(F, text)?;
        let root = kv.root();
        let mut rep = ValidationReport::default();
        let mut cfg = SynthConfig::default();
        cfg.households = root.parse_or(F, "households", cfg.households, &mut rep);
        cfg.base_period = root.parse_or(F, "base_period", cfg.base_period, &mut rep);
        cfg.employment_rate = root.parse_or(F, "employment_rate", cfg.employment_rate, &mut rep);
        cfg.self_employed_share = root.parse_or(F, "self_employed_share", cfg.self_employed_share, &mut rep);
        cfg.income_mu = root.parse_or(F, "income.mu", cfg.income_mu, &mut rep);
        cfg.income_sigma = root.parse_or(F, "income.sigma", cfg.income_sigma, &mut rep);
        if let Some(e) = root.get("perturb_weights") {
            match crate::kv::parse_switch(&e.value) {
                Some(b) => cfg.perturb_weights = b,
                None => rep.push(Violation::new(F, format!("bad switch `{}`", e.value)).row(e.line)),
            }
        }
        let mut explicit = BTreeMap::new();
        for e in &root.entries {
            let Some((prefix, rest)) = e.key.split_once('.') else { continue };
            let (sector_key, suffix) = match rest.rsplit_once('.') {
                Some((s, suf)) => (s, Some(suf)),
                None => (rest, None),
            };
            let known = ["share", "income", "essential"];
            if !known.contains(&prefix) || (prefix == "income" && matches!(rest, "mu" | "sigma")) {
                continue;
            }
            let Some(sector) = Sector::from_code(sector_key) else {
                rep.push(Violation::new(F, format!("unknown sector `{sector_key}` in `{}`", e.key)).row(e.line));
                continue;
            };
            let Ok(x) = e.value.parse::<f64>() else {
                rep.push(Violation::new(F, format!("bad number `{}`", e.value)).row(e.line));
                continue;
            };
            match (prefix, suffix) {
                ("share", None) => {
                    explicit.insert(sector, x);
                }
                ("income", Some("shift")) => {
                    cfg.sector_income_shift.insert(sector, x);
                }
                ("essential", None) => {
                    cfg.essential_share.insert(sector, x);
                }
                _ => rep.push(Violation::new(F, format!("unknown key `{}`", e.key)).row(e.line)),
            }
        }
        rep.into_result(())?;
        cfg.set_sector_shares(&explicit)?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Pins the given sector shares and rescales the rest of the current mix.
    pub fn set_sector_shares(&mut self, explicit: &BTreeMap<Sector, f64>) -> Result<()> {
        let fixed: f64 = explicit.values().sum();
        if explicit.values().any(|&x| !(0.0..=1.0).contains(&x)) || fixed > 1.0 + 1e-9 {
            return Err(Error::single("synth.cfg", "sector shares must lie in [0,1] and sum to at most 1"));
        }
        let rest: f64 = self.sector_shares.iter().filter(|(s, _)| !explicit.contains_key(s)).map(|(_, v)| v).sum();
        let remaining = (1.0 - fixed).max(0.0);
        for (s, v) in self.sector_shares.iter_mut() {
            *v = match explicit.get(s) {
                Some(&x) => x,
                None if rest > 0.0 => *v * remaining / rest,
                None => 0.0,
            };
        }
        Ok(())
    }

    fn check(&self) -> Result<()> {
        let mut rep = ValidationReport::default();
        let mut bad = |m: String| rep.push(Violation::new("synth.cfg", m));
        if self.households <= 0 {
            bad(format!("household count must be positive, got {}", self.households));
        }
        for (k, v) in [("employment_rate", self.employment_rate), ("self_employed_share", self.self_employed_share)] {
            if !(0.0..=1.0).contains(&v) {
                bad(format!("{k} {v} outside [0,1]"));
            }
        }
        if !(self.income_sigma.is_finite() && self.income_sigma >= 0.0) {
            bad(format!("income.sigma {} must be non-negative", self.income_sigma));
        }
        if self.essential_share.values().any(|v| !(0.0..=1.0).contains(v)) {
            bad("essential shares must lie in [0,1]".into());
        }
        let total: f64 = self.sector_shares.values().sum();
        if (total - 1.0).abs() > 1e-6 {
            bad(format!("sector shares sum to {total}, expected 1"));
        }
        rep.into_result(())
    }
}

fn round_cents(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, items: &[(T, f64)]) -> T {
    let total: f64 = items.iter().map(|(_, w)| w).sum();
    let mut u = rng.random::<f64>() * total;
    for &(x, w) in items {
        if u < w {
            return x;
        }
        u -= w;
    }
    items.last().expect("non-empty").0
}

/// Largest-remainder apportionment of `n` slots to shares.
fn apportion(n: usize, shares: &[(Sector, f64)]) -> Vec<(Sector, usize)> {
    let total: f64 = shares.iter().map(|(_, s)| s).sum();
    let mut out: Vec<(Sector, usize, f64)> = shares
        .iter()
        .map(|&(s, w)| {
            let exact = if total > 0.0 { n as f64 * w / total } else { 0.0 };
            (s, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = out.iter().map(|x| x.1).sum();
    let mut order: Vec<usize> = (0..out.len()).collect();
    order.sort_by(|&a, &b| out[b].2.total_cmp(&out[a].2).then(a.cmp(&b)));
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        out[i].1 += 1;
    }
    out.into_iter().map(|(s, c, _)| (s, c)).collect()
}

#[derive(Clone, Copy)]
enum HouseholdKind {
    Single,
    Couple,
    CoupleWithChildren,
    LoneParent,
    ThreeAdults,
}

/// Deterministic synthetic population: a pure function of `(config, seed)`.
pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<Population> {
    config.check()?;
    let mut rng = KeyedRng::new(seed).stream(0, "synthetic-population");
    let n = config.households as usize;
    let mut households = Vec::with_capacity(n);
    let mut persons: Vec<Person> = Vec::with_capacity(n * 3);
    let mut next_person = 1u64;

    for hi in 0..n {
        let household_id = hi as u64 + 1;
        let kind = pick(
            &mut rng,
            &[
                (HouseholdKind::Single, 0.24),
                (HouseholdKind::Couple, 0.26),
                (HouseholdKind::CoupleWithChildren, 0.30),
                (HouseholdKind::LoneParent, 0.07),
                (HouseholdKind::ThreeAdults, 0.13),
            ],
        );
        let region = if rng.random::<f64>() < 0.27 { Region::BorderMidlandWestern } else { Region::SouthernEastern };
        let (head_lo, head_hi) = match kind {
            HouseholdKind::Single => (20, 90),
            HouseholdKind::Couple => (22, 90),
            HouseholdKind::CoupleWithChildren | HouseholdKind::LoneParent => (22, 55),
            HouseholdKind::ThreeAdults => (42, 72),
        };
        let head_age: u32 = rng.random_range(head_lo..=head_hi);
        let mut ages = vec![head_age];
        match kind {
            HouseholdKind::Couple | HouseholdKind::CoupleWithChildren => {
                ages.push((head_age as i32 + rng.random_range(-4..=4)).clamp(18, 95) as u32)
            }
            HouseholdKind::ThreeAdults => {
                ages.push((head_age as i32 + rng.random_range(-4..=4)).clamp(18, 95) as u32);
                ages.push(rng.random_range(18..=(head_age - 20).clamp(18, 30)));
            }
            _ => {}
        }
        let n_adults = ages.len();
        let n_children = match kind {
            HouseholdKind::CoupleWithChildren | HouseholdKind::LoneParent => rng.random_range(1..=3),
            HouseholdKind::ThreeAdults => pick(&mut rng, &[(0, 0.7), (1, 0.2), (2, 0.1)]),
            _ => 0,
        };
        let max_child_age = head_age.saturating_sub(18).min(17);
        for _ in 0..n_children {
            ages.push(rng.random_range(0..=max_child_age));
        }

        let head_sex = if rng.random::<bool>() { Sex::Male } else { Sex::Female };
        let mut member_ids = Vec::with_capacity(ages.len());
        for (k, &age) in ages.iter().enumerate() {
            let person_id = next_person;
            next_person += 1;
            member_ids.push(person_id);
            let sex = match k {
                0 => head_sex,
                1 if n_adults >= 2 => {
                    if head_sex == Sex::Male {
                        Sex::Female
                    } else {
                        Sex::Male
                    }
                }
                _ => {
                    if rng.random::<bool>() {
                        Sex::Male
                    } else {
                        Sex::Female
                    }
                }
            };
            let is_adult = k < n_adults;
            let education = if !is_adult || age < 18 {
                Education::Primary
            } else {
                let uni = if age < 45 { 0.40 } else { 0.22 };
                pick(
                    &mut rng,
                    &[(Education::University, uni), (Education::Secondary, 0.55), (Education::Primary, 0.45 - uni)],
                )
            };
            let work_status = if age < 16 {
                WorkStatus::Child
            } else if age < 18 {
                WorkStatus::Student
            } else if age >= 66 {
                pick(
                    &mut rng,
                    &[(WorkStatus::Retired, 0.82), (WorkStatus::Inactive, 0.10), (WorkStatus::Employee, 0.08)],
                )
            } else if age < 23 && rng.random::<f64>() < 0.5 {
                WorkStatus::Student
            } else if rng.random::<f64>() < config.employment_rate {
                if rng.random::<f64>() < config.self_employed_share {
                    WorkStatus::SelfEmployed
                } else {
                    WorkStatus::Employee
                }
            } else if age >= 58 {
                pick(
                    &mut rng,
                    &[(WorkStatus::Retired, 0.5), (WorkStatus::Inactive, 0.3), (WorkStatus::Unemployed, 0.2)],
                )
            } else {
                pick(&mut rng, &[(WorkStatus::Unemployed, 0.35), (WorkStatus::Inactive, 0.65)])
            };
            persons.push(Person {
                person_id,
                household_id,
                age,
                sex,
                education,
                occupation: None,
                industry: None,
                region,
                work_status,
                employment_income: 0.0,
                self_employment_income: 0.0,
                capital_income: 0.0,
                private_pension: 0.0,
                essential_worker: false,
                home_work_capable: false,
                covid_state: CovidState::None,
            });
        }
        households.push(Household {
            household_id,
            weight: 1.0,
            member_ids,
            tenure: Tenure::Renter,
            mortgage_payment: 0.0,
            rent: 0.0,
            childcare_user: false,
            childcare_expenditure: 0.0,
            n_children_0_4: 0,
            n_children_under14: 0,
        });
    }

    // sectors by exact quota, then shuffled over workers
    let worker_idx: Vec<usize> = (0..persons.len()).filter(|&i| persons[i].work_status.is_worker()).collect();
    let shares: Vec<(Sector, f64)> = config.sector_shares.iter().map(|(&s, &v)| (s, v)).collect();
    let mut slots: Vec<Sector> =
        apportion(worker_idx.len(), &shares).into_iter().flat_map(|(s, c)| std::iter::repeat_n(s, c)).collect();
    slots.shuffle(&mut rng);

    for (&pi, &sector) in worker_idx.iter().zip(&slots) {
        let p = &mut persons[pi];
        p.industry = Some(sector);
        p.occupation = Some(pick(
            &mut rng,
            &[(1u8, 0.10), (2, 0.18), (3, 0.12), (4, 0.11), (5, 0.14), (6, 0.08), (7, 0.08), (8, 0.08), (9, 0.11)],
        ));
        let shift = config.sector_income_shift.get(&sector).copied().unwrap_or(0.0);
        let age_shift = if p.age < 25 {
            -0.5
        } else if p.age < 35 {
            -0.15
        } else {
            0.0
        };
        let uni_shift = if p.education == Education::University { 0.25 } else { 0.0 };
        let mu = config.income_mu + shift + age_shift + uni_shift;
        if p.work_status == WorkStatus::Employee {
            let d = LogNormal::new(mu, config.income_sigma).map_err(|e| Error::invalid(e.to_string()))?;
            p.employment_income = round_cents(d.sample(&mut rng).max(1.0));
        } else {
            let d = LogNormal::new(mu - 0.1, config.income_sigma + 0.2).map_err(|e| Error::invalid(e.to_string()))?;
            p.self_employment_income = round_cents(d.sample(&mut rng));
        }
        let essential = config.essential_share.get(&sector).copied().unwrap_or(0.0);
        p.essential_worker = rng.random::<f64>() < essential;
        let remote = match p.occupation {
            Some(1..=3) => 0.70,
            Some(4) => 0.60,
            _ => 0.10,
        };
        p.home_work_capable = rng.random::<f64>() < remote;
    }

    let cap = LogNormal::new((1_500f64).ln(), 1.0).expect("valid");
    let pension = LogNormal::new((12_000f64).ln(), 0.6).expect("valid");
    for p in persons.iter_mut().filter(|p| p.age >= 18) {
        let p_cap = 0.05 + if p.age >= 45 { 0.12 } else { 0.0 } + if p.earnings() > 50_000.0 { 0.10 } else { 0.0 };
        if rng.random::<f64>() < p_cap {
            p.capital_income = round_cents(cap.sample(&mut rng));
        }
        if p.work_status == WorkStatus::Retired && rng.random::<f64>() < 0.45 {
            p.private_pension = round_cents(pension.sample(&mut rng));
        }
    }

    let mortgage = LogNormal::new((1_000f64).ln(), 0.3).expect("valid");
    let rent = LogNormal::new((1_100f64).ln(), 0.3).expect("valid");
    let care_noise = LogNormal::new(0.0, 0.4).expect("valid");
    let person_pos: HashMap<u64, usize> = persons.iter().enumerate().map(|(i, p)| (p.person_id, i)).collect();
    for h in households.iter_mut() {
        let members: Vec<&Person> = h.member_ids.iter().map(|id| &persons[person_pos[id]]).collect();
        let head_age = members[0].age;
        let tenure_mix = if head_age < 35 {
            [(Tenure::Renter, 0.55), (Tenure::Mortgage, 0.35), (Tenure::OwnerOutright, 0.10)]
        } else if head_age < 55 {
            [(Tenure::Renter, 0.25), (Tenure::Mortgage, 0.55), (Tenure::OwnerOutright, 0.20)]
        } else {
            [(Tenure::Renter, 0.15), (Tenure::Mortgage, 0.15), (Tenure::OwnerOutright, 0.70)]
        };
        h.tenure = pick(&mut rng, &tenure_mix);
        match h.tenure {
            Tenure::Mortgage => h.mortgage_payment = round_cents(mortgage.sample(&mut rng)).max(0.01),
            Tenure::Renter => h.rent = round_cents(rent.sample(&mut rng)),
            Tenure::OwnerOutright => {}
        }
        h.n_children_0_4 = members.iter().filter(|p| p.age <= 4).count() as u32;
        h.n_children_under14 = members.iter().filter(|p| p.age < 14).count() as u32;
        let adults: Vec<&&Person> = members.iter().filter(|p| p.age >= 18).collect();
        let all_adults_work = !adults.is_empty() && adults.iter().all(|p| p.work_status.is_worker());
        if h.n_children_under14 > 0 {
            let p_use = match (all_adults_work, h.n_children_0_4 > 0) {
                (true, true) => 0.60,
                (true, false) => 0.35,
                (false, _) => 0.05,
            };
            if rng.random::<f64>() < p_use {
                h.childcare_user = true;
                let base =
                    35.0 + 60.0 * h.n_children_0_4 as f64 + 20.0 * (h.n_children_under14 - h.n_children_0_4) as f64;
                h.childcare_expenditure = round_cents(base * care_noise.sample(&mut rng));
            }
        }
        if config.perturb_weights {
            h.weight = rng.random_range(0.5..1.5);
        }
    }

    Population::new(households, persons, config.base_period)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn person(id: u64, hh: u64) -> Person {
        Person {
            person_id: id,
            household_id: hh,
            age: 40,
            sex: Sex::Female,
            education: Education::University,
            occupation: Some(2),
            industry: Some(Sector::Education),
            region: Region::SouthernEastern,
            work_status: WorkStatus::Employee,
            employment_income: 41_000.5,
            self_employment_income: 0.0,
            capital_income: 0.0,
            private_pension: 0.0,
            essential_worker: false,
            home_work_capable: true,
            covid_state: CovidState::None,
        }
    }

    fn household(id: u64, members: Vec<u64>) -> Household {
        Household {
            household_id: id,
            weight: 1.0,
            member_ids: members,
            tenure: Tenure::Renter,
            mortgage_payment: 0.0,
            rent: 950.0,
            childcare_user: false,
            childcare_expenditure: 0.0,
            n_children_0_4: 0,
            n_children_under14: 0,
        }
    }

    fn date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2016, 12, 31).unwrap()
    }

    #[test]
    fn one_household_two_persons_round_trip() {
        let mut p2 = person(2, 1);
        p2.work_status = WorkStatus::Retired;
        p2.employment_income = 0.0;
        p2.industry = None;
        p2.occupation = None;
        p2.age = 70;
        let pop = Population::new(vec![household(1, vec![1, 2])], vec![person(1, 1), p2], date()).unwrap();
        let back = parse_population(&households_csv(&pop), &persons_csv(&pop), Some(date())).unwrap();
        assert_eq!(back.households().len(), 1);
        assert_eq!(back.persons().len(), 2);
        assert_eq!(back, pop);
    }

    #[test]
    fn orphan_person_names_ids() {
        let h = "household_id,weight,member_ids,tenure,mortgage_payment,rent,childcare_user,childcare_expenditure,n_children_0_4,n_children_under14\n1,1,1,renter,0,900,false,0,0,0\n";
        let pop = Population::new(vec![household(1, vec![1])], vec![person(1, 1)], date()).unwrap();
        let mut persons = persons_csv(&pop);
        persons.push_str("7,99,30,male,secondary,,,southern_eastern,inactive,0,0,0,0,false,false,none\n");
        let err = parse_population(h, &persons, None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("person 7") && msg.contains("99"), "{msg}");
    }

    #[test]
    fn zero_weight_rejected() {
        let mut h = household(1, vec![1]);
        h.weight = 0.0;
        let err = Population::new(vec![h], vec![person(1, 1)], date()).unwrap_err();
        assert!(err.to_string().contains("weight"), "{err}");
    }

    #[test]
    fn every_violation_reported() {
        let mut h = household(1, vec![1]);
        h.weight = 0.0;
        h.tenure = Tenure::Mortgage;
        let mut p = person(1, 1);
        p.work_status = WorkStatus::Unemployed;
        match Population::new(vec![h], vec![p], date()).unwrap_err() {
            Error::Validation(r) => assert_eq!(r.0.len(), 3, "{r}"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn missing_column_and_bad_enum_named() {
        let h = "household_id,weight,member_ids,tenure,mortgage_payment,rent,childcare_user,childcare_expenditure,n_children_0_4\n";
        let err = parse_population(
            h,
            &persons_csv(&Population::new(vec![household(1, vec![1])], vec![person(1, 1)], date()).unwrap()),
            None,
        )
        .unwrap_err();
        assert!(err.to_string().contains("n_children_under14"));

        let pop = Population::new(vec![household(1, vec![1])], vec![person(1, 1)], date()).unwrap();
        let persons = persons_csv(&pop).replace("employee", "astronaut");
        let err = parse_population(&households_csv(&pop), &persons, None).unwrap_err().to_string();
        assert!(err.contains("row 1") && err.contains("work_status"), "{err}");
    }

    #[test]
    fn pup_age_rule() {
        let mut p = person(1, 1);
        p.age = 17;
        p.covid_state = CovidState::PupRecipient;
        assert!(Population::new(vec![household(1, vec![1])], vec![p], date()).is_err());
    }

    #[test]
    fn synthetic_is_deterministic() {
        let cfg = SynthConfig::default();
        let a = generate_synthetic(&cfg, 42).unwrap();
        let b = generate_synthetic(&cfg, 42).unwrap();
        assert_eq!(persons_csv(&a), persons_csv(&b));
        assert_eq!(households_csv(&a), households_csv(&b));
        let c = generate_synthetic(&cfg, 43).unwrap();
        assert_ne!(persons_csv(&a), persons_csv(&c));
    }

    #[test]
    fn construction_share_is_respected() {
        let cfg = SynthConfig::parse("households = 1000\nshare.construction = 0.10\n").unwrap();
        let pop = generate_synthetic(&cfg, 42).unwrap();
        let workers: Vec<&Person> = pop.persons().iter().filter(|p| p.work_status.is_worker()).collect();
        let cons = workers.iter().filter(|p| p.industry == Some(Sector::Construction)).count();
        let share = cons as f64 / workers.len() as f64;
        assert!((0.09..=0.11).contains(&share), "{share}");
    }

    #[test]
    fn zero_households_rejected() {
        assert!(SynthConfig::parse("households = 0\n").is_err());
        let cfg = SynthConfig { households: 0, ..SynthConfig::default() };
        assert!(generate_synthetic(&cfg, 1).is_err());
    }

    #[test]
    fn generated_invariants() {
        let cfg = SynthConfig { perturb_weights: true, ..SynthConfig::default() };
        let pop = generate_synthetic(&cfg, 3).unwrap();
        for p in pop.persons() {
            if p.work_status == WorkStatus::Employee {
                assert!(p.industry.is_some() && p.occupation.is_some());
            }
            if p.age < 16 {
                assert_eq!(p.work_status, WorkStatus::Child);
            }
        }
        assert!(pop.households().iter().all(|h| (0.5..1.5).contains(&h.weight)));
    }

    #[test]
    fn sector_labels_resolve() {
        for s in Sector::ALL {
            assert_eq!(Sector::lookup(s.label()), Some(*s));
            assert_eq!(Sector::lookup(s.code()), Some(*s));
        }
        assert_eq!(Sector::ALL.len(), 17);
    }
}
