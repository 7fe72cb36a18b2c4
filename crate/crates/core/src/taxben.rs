//! Taxes, baseline benefits and the dated pandemic instruments.
//!
//! Schedules are data: `schedules.csv` holds every regime of the PUP, TWSS
//! and EWSS, `tax_system.cfg` the simplified tax and benefit parameters.

use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result, ValidationReport, Violation};
use crate::kv::KvFile;
use crate::money::Cents;
use crate::population::{CovidState, WorkStatus};
use crate::table::Table;

pub const SCHEDULES_FILE: &str = "schedules.csv";
pub const TAX_SYSTEM_FILE: &str = "tax_system.cfg";

const PPM: i64 = 1_000_000;

/// Decimal fraction in parts per million, e.g. `0.85` → 850000.
fn parse_fraction(s: &str) -> Option<i64> {
    let s = s.trim();
    if s.starts_with('-') {
        return None;
    }
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if int.is_empty() && frac.is_empty() || frac.len() > 6 || !frac.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let whole: i64 = if int.is_empty() { 0 } else { int.parse().ok()? };
    if whole < 0 {
        return None;
    }
    let f: i64 = if frac.is_empty() { 0 } else { format!("{frac:0<6}").parse().ok()? };
    Some(whole * PPM + f)
}

fn scale_ppm(x: Cents, ppm: i64) -> Cents {
    x.mul_div(ppm, PPM)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    Pay(Cents),
    /// `rate × pay`, optionally capped.
    Rate {
        ppm: i64,
        cap: Option<Cents>,
    },
    /// Linear from `amount` at `from` down to zero at `to`.
    Taper {
        amount: Cents,
        from: Cents,
        to: Cents,
    },
    Nothing,
}

impl Rule {
    fn parse(s: &str) -> Option<Rule> {
        let s = s.trim();
        if s == "none" {
            return Some(Rule::Nothing);
        }
        if let Some(v) = s.strip_prefix("flat:") {
            return v.parse().ok().map(Rule::Pay);
        }
        if let Some(v) = s.strip_prefix("rate:") {
            let (rate, cap) = match v.split_once(';') {
                Some((r, c)) => (r, Some(c.strip_prefix("cap:")?.parse().ok()?)),
                None => (v, None),
            };
            return Some(Rule::Rate { ppm: parse_fraction(rate)?, cap });
        }
        if let Some(v) = s.strip_prefix("taper:") {
            let parts: Vec<&str> = v.split(';').collect();
            if parts.len() != 3 {
                return None;
            }
            let amount = parts[0].parse().ok()?;
            let from: Cents = parts[1].parse().ok()?;
            let to: Cents = parts[2].parse().ok()?;
            return (to > from).then_some(Rule::Taper { amount, from, to });
        }
        s.parse().ok().map(Rule::Pay)
    }

    pub fn apply(&self, pay: Cents) -> Cents {
        match *self {
            Rule::Pay(a) => a,
            Rule::Rate { ppm, cap } => {
                let v = scale_ppm(pay, ppm);
                cap.map_or(v, |c| v.min(c))
            }
            Rule::Taper { amount, from, to } => {
                if pay >= to {
                    Cents::ZERO
                } else if pay <= from {
                    amount
                } else {
                    amount.mul_div((to - pay).0, (to - from).0)
                }
            }
            Rule::Nothing => Cents::ZERO,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub lower: Cents,
    pub rule: Rule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Regime {
    pub effective_from: NaiveDate,
    pub bands: Vec<Band>,
}

impl Regime {
    pub fn band_for(&self, x: Cents) -> &Band {
        let i = self.bands.partition_point(|b| b.lower <= x);
        &self.bands[i.saturating_sub(1)]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scheme {
    pub regimes: Vec<Regime>,
    /// First date the scheme no longer applies.
    pub end: Option<NaiveDate>,
}

impl Scheme {
    pub fn start(&self) -> Option<NaiveDate> {
        self.regimes.first().map(|r| r.effective_from)
    }

    pub fn in_force(&self, date: NaiveDate) -> bool {
        self.start().is_some_and(|s| s <= date) && self.end.is_none_or(|e| date < e)
    }

    pub fn regime_at(&self, scheme: &'static str, date: NaiveDate) -> Result<&Regime> {
        if !self.in_force(date) {
            return Err(Error::OutOfSchedule { scheme, date });
        }
        let i = self.regimes.partition_point(|r| r.effective_from <= date);
        Ok(&self.regimes[i - 1])
    }
}

/// All pandemic payment schedules.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedules {
    pub pup: Scheme,
    pub twss: Scheme,
    pub ewss: Scheme,
}

impl Schedules {
    pub fn parse(file: &str, text: &str) -> Result<Schedules> {
        let t = Table::parse(file, text)?;
        let mut rep = ValidationReport::default();
        if !t.require_columns(&["scheme", "effective_from", "band_lower", "value"], &mut rep) {
            return Err(Error::Validation(rep));
        }
        let mut out = Schedules { pup: Scheme::default(), twss: Scheme::default(), ewss: Scheme::default() };
        for row in t.rows() {
            let scheme = match row.raw("scheme") {
                "pup" => &mut out.pup,
                "twss" => &mut out.twss,
                "ewss" => &mut out.ewss,
                other => {
                    rep.push(row.violation("scheme", format!("unknown scheme `{other}`, expected pup|twss|ewss")));
                    continue;
                }
            };
            let Some(date) = row.parse_with("effective_from", &mut rep, |s| s.parse::<NaiveDate>().ok(), "YYYY-MM-DD")
            else {
                continue;
            };
            if row.raw("value") == "end" {
                if scheme.end.replace(date).is_some() {
                    rep.push(row.violation("value", "scheme closed twice"));
                }
                continue;
            }
            let Some(lower) = row.parse::<Cents>("band_lower", &mut rep) else { continue };
            let Some(rule) = row.parse_with("value", &mut rep, Rule::parse, "an amount, none, flat:, rate: or taper:")
            else {
                continue;
            };
            if row.raw("scheme") == "pup" && !matches!(rule, Rule::Pay(a) if a.is_positive()) {
                rep.push(row.violation("value", "PUP bands must pay a positive flat amount"));
            }
            if row.raw("scheme") == "ewss" && !matches!(rule, Rule::Pay(_) | Rule::Nothing) {
                rep.push(row.violation("value", "EWSS bands pay a flat amount or none"));
            }
            match scheme.regimes.last_mut() {
                Some(r) if r.effective_from == date => {
                    if lower <= r.bands.last().expect("non-empty regime").lower {
                        rep.push(row.violation("band_lower", "band lower bounds must be strictly increasing"));
                    }
                    r.bands.push(Band { lower, rule });
                }
                Some(r) if r.effective_from > date => {
                    rep.push(row.violation("effective_from", "regimes must be listed in date order"));
                }
                _ => {
                    if lower != Cents::ZERO {
                        rep.push(row.violation("band_lower", "the first band of a regime must start at 0"));
                    }
                    scheme.regimes.push(Regime { effective_from: date, bands: vec![Band { lower, rule }] });
                }
            }
        }
        for (name, s) in [("pup", &out.pup), ("twss", &out.twss), ("ewss", &out.ewss)] {
            if s.regimes.is_empty() {
                rep.push(Violation::new(file, format!("scheme `{name}` has no regimes")));
            }
            if let (Some(end), Some(last)) = (s.end, s.regimes.last()) {
                if end <= last.effective_from {
                    rep.push(Violation::new(file, format!("scheme `{name}` ends before its last regime starts")));
                }
            }
        }
        rep.into_result(out)
    }

    pub fn pup_rate(&self, prev_weekly_earnings: Cents, date: NaiveDate) -> Result<Cents> {
        if prev_weekly_earnings < Cents::ZERO {
            return Err(Error::invalid("previous earnings must be non-negative"));
        }
        Ok(self.pup.regime_at("pup", date)?.band_for(prev_weekly_earnings).rule.apply(prev_weekly_earnings))
    }

    /// Highest PUP payment in force at `date`.
    pub fn ceib_rate(&self, date: NaiveDate) -> Result<Cents> {
        let r = self.pup.regime_at("pup", date)?;
        Ok(r.bands.iter().map(|b| b.rule.apply(b.lower)).max().unwrap_or(Cents::ZERO))
    }

    /// Banded rate when previous earnings are known, else the top band.
    pub fn ceib_rate_for(&self, prev_weekly_earnings: Option<Cents>, date: NaiveDate) -> Result<Cents> {
        match prev_weekly_earnings {
            Some(e) => self.pup_rate(e, date),
            None => self.ceib_rate(date),
        }
    }

    pub fn twss_subsidy(&self, avg_take_home: Cents, date: NaiveDate) -> Result<Cents> {
        let pay = avg_take_home.max(Cents::ZERO);
        Ok(self.twss.regime_at("twss", date)?.band_for(pay).rule.apply(pay))
    }

    pub fn ewss_subsidy(&self, gross_weekly: Cents, date: NaiveDate) -> Result<Cents> {
        let pay = gross_weekly.max(Cents::ZERO);
        Ok(self.ewss.regime_at("ewss", date)?.band_for(pay).rule.apply(pay))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaxSystem {
    /// (threshold, marginal rate in ppm), thresholds increasing from 0.
    pub bands: Vec<(Cents, i64)>,
    pub credits: Cents,
    pub si_rate: i64,
    pub si_floor: Cents,
    pub unemployment: Cents,
    pub illness: Cents,
    pub state_pension: Cents,
    pub pension_age: u32,
    pub unemployment_min_age: u32,
    pub child_benefit: Cents,
    pub child_age_limit: u32,
}

impl TaxSystem {
    /// Tax-only system with no benefits.
    pub fn simple(bands: &[(f64, f64)], credits: f64, si_rate: f64, si_floor: f64) -> Result<TaxSystem> {
        let to_ppm = |r: f64| (r * PPM as f64).round() as i64;
        let t = TaxSystem {
            bands: bands.iter().map(|(th, r)| (Cents::from_euros(*th), to_ppm(*r))).collect(),
            credits: Cents::from_euros(credits),
            si_rate: to_ppm(si_rate),
            si_floor: Cents::from_euros(si_floor),
            unemployment: Cents::ZERO,
            illness: Cents::ZERO,
            state_pension: Cents::ZERO,
            pension_age: 66,
            unemployment_min_age: 18,
            child_benefit: Cents::ZERO,
            child_age_limit: 18,
        };
        t.check().map_err(Error::invalid)?;
        Ok(t)
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.bands.first().is_none_or(|b| b.0 != Cents::ZERO) {
            return Err("income tax bands must start at threshold 0".into());
        }
        if self.bands.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err("income tax thresholds must be strictly increasing".into());
        }
        if self.bands.iter().map(|b| b.1).chain([self.si_rate]).any(|r| !(0..=PPM).contains(&r)) {
            return Err("rates must lie in [0,1]".into());
        }
        if self.credits < Cents::ZERO || self.si_floor < Cents::ZERO {
            return Err("credits and floors must be non-negative".into());
        }
        Ok(())
    }

    pub fn parse(file: &str, text: &str) -> Result<TaxSystem> {
        let kv = KvFile::parse(file, text)?;
        let mut rep = ValidationReport::default();
        let empty = crate::kv::Section { name: String::new(), line: 0, entries: Vec::new() };
        let it = kv.section("income_tax").unwrap_or(&empty);
        let si = kv.section("social_insurance").unwrap_or(&empty);
        let ben = kv.section("benefits").unwrap_or(&empty);
        let mut bands = Vec::new();
        for e in &it.entries {
            if let Some(th) = e.key.strip_prefix("band.") {
                match (th.parse::<Cents>(), parse_fraction(&e.value)) {
                    (Ok(t), Some(r)) => bands.push((t, r)),
                    _ => rep.push(
                        Violation::new(file, format!("bad income tax band `{} = {}`", e.key, e.value)).row(e.line),
                    ),
                }
            } else if e.key != "credits" {
                rep.push(Violation::new(file, format!("unknown key `{}`", e.key)).row(e.line));
            }
        }
        bands.sort();
        let rate = |s: &crate::kv::Section, k: &str, rep: &mut ValidationReport| -> i64 {
            match s.get(k) {
                None => 0,
                Some(e) => parse_fraction(&e.value).unwrap_or_else(|| {
                    rep.push(Violation::new(file, format!("bad rate `{}` for `{k}`", e.value)).row(e.line));
                    0
                }),
            }
        };
        let t = TaxSystem {
            credits: it.parse_or(file, "credits", Cents::ZERO, &mut rep),
            si_rate: rate(si, "rate", &mut rep),
            si_floor: si.parse_or(file, "floor", Cents::ZERO, &mut rep),
            unemployment: ben.parse_or(file, "unemployment", Cents::ZERO, &mut rep),
            illness: ben.parse_or(file, "illness", Cents::ZERO, &mut rep),
            state_pension: ben.parse_or(file, "state_pension", Cents::ZERO, &mut rep),
            pension_age: ben.parse_or(file, "pension_age", 66, &mut rep),
            unemployment_min_age: ben.parse_or(file, "unemployment_min_age", 18, &mut rep),
            child_benefit: ben.parse_or(file, "child_benefit", Cents::ZERO, &mut rep),
            child_age_limit: ben.parse_or(file, "child_age_limit", 18, &mut rep),
            bands,
        };
        if rep.is_empty() {
            if let Err(m) = t.check() {
                rep.push(Violation::new(file, m));
            }
        }
        rep.into_result(t)
    }

    pub fn top_rate(&self) -> i64 {
        self.bands.iter().map(|b| b.1).max().unwrap_or(0)
    }

    /// Annual tax: band tax less credits (floored at 0) plus social insurance above the floor.
    pub fn income_tax(&self, taxable: Cents) -> Cents {
        let x = taxable.max(Cents::ZERO);
        let mut band_tax = Cents::ZERO;
        for (i, (th, r)) in self.bands.iter().enumerate() {
            if x <= *th {
                break;
            }
            let upper = self.bands.get(i + 1).map_or(x, |b| b.0.min(x));
            band_tax += scale_ppm(upper - *th, *r);
        }
        let si = scale_ppm((x - self.si_floor).max(Cents::ZERO), self.si_rate);
        (band_tax - self.credits).max(Cents::ZERO) + si
    }
}

/// Tax system plus schedules; the contents of a policy directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub schedules: Schedules,
    pub tax: TaxSystem,
}

impl Policy {
    pub fn shipped() -> Policy {
        Policy {
            schedules: Schedules::parse(SCHEDULES_FILE, crate::data::SCHEDULES).expect("shipped schedules"),
            tax: TaxSystem::parse(TAX_SYSTEM_FILE, crate::data::TAX_SYSTEM).expect("shipped tax system"),
        }
    }

    /// Reads `schedules.csv` and `tax_system.cfg`; either may be absent, in
    /// which case the shipped file is used.
    pub fn load(dir: &Path) -> Result<Policy> {
        let read = |name: &str, fallback: &'static str| -> Result<String> {
            let p = dir.join(name);
            if p.exists() {
                std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
            } else {
                Ok(fallback.to_string())
            }
        };
        if !dir.is_dir() {
            return Err(Error::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "policy directory not found"),
            ));
        }
        Ok(Policy {
            schedules: Schedules::parse(SCHEDULES_FILE, &read(SCHEDULES_FILE, crate::data::SCHEDULES)?)?,
            tax: TaxSystem::parse(TAX_SYSTEM_FILE, &read(TAX_SYSTEM_FILE, crate::data::TAX_SYSTEM)?)?,
        })
    }

    /// Weekly wage subsidy for an employee with the given pre-crisis annual
    /// earnings: TWSS on average take-home pay while it runs, EWSS on gross
    /// weekly pay after.
    pub fn wage_subsidy(&self, annual_earnings: Cents, date: NaiveDate) -> Result<Cents> {
        if self.schedules.twss.in_force(date) {
            let take_home = (annual_earnings - self.tax.income_tax(annual_earnings)).annual_to_weekly();
            self.schedules.twss_subsidy(take_home, date)
        } else {
            self.schedules.ewss_subsidy(annual_earnings.annual_to_weekly(), date)
        }
    }
}

/// Which pandemic instruments are paid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PolicyState {
    pub pup: bool,
    pub ceib: bool,
    pub wage_subsidy: bool,
}

impl PolicyState {
    pub const OFF: PolicyState = PolicyState { pup: false, ceib: false, wage_subsidy: false };
    pub const ON: PolicyState = PolicyState { pup: true, ceib: true, wage_subsidy: true };
}

/// One person's situation at a date. Market amounts are annual.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonState {
    pub person_id: u64,
    pub age: u32,
    pub status: WorkStatus,
    pub covid: CovidState,
    pub sick: bool,
    pub employment: Cents,
    pub self_employment: Cents,
    pub capital: Cents,
    pub private_pension: Cents,
    /// Pre-crisis weekly earnings, for banded payments.
    pub prev_weekly_earnings: Cents,
    /// Weekly wage subsidy entitlement at the date.
    pub wage_subsidy: Cents,
}

impl PersonState {
    pub fn market_annual(&self) -> Cents {
        self.employment + self.self_employment + self.capital + self.private_pension
    }
}

/// Monthly household totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TaxBen {
    pub market: Cents,
    pub taxes: Cents,
    pub benefits: Cents,
    /// Part of `benefits` paid by pandemic instruments.
    pub covid_benefits: Cents,
}

pub fn household_t_and_b(
    persons: &[PersonState],
    date: NaiveDate,
    state: PolicyState,
    policy: &Policy,
) -> Result<TaxBen> {
    let tax = &policy.tax;
    let mut out = TaxBen::default();
    let mut children = 0;
    for p in persons {
        let mut weekly = Cents::ZERO;
        let mut covid_weekly = Cents::ZERO;
        let mut taxable = p.market_annual();
        let on_pup = p.covid == CovidState::PupRecipient && state.pup;
        let on_ceib = p.covid == CovidState::CeibRecipient && state.ceib;
        if on_pup {
            covid_weekly += policy.schedules.pup_rate(p.prev_weekly_earnings, date)?;
        }
        if on_ceib {
            let prev = p.prev_weekly_earnings.is_positive().then_some(p.prev_weekly_earnings);
            covid_weekly += policy.schedules.ceib_rate_for(prev, date)?;
        }
        if p.covid == CovidState::WageSubsidised && state.wage_subsidy {
            covid_weekly += p.wage_subsidy;
            taxable += p.wage_subsidy.weekly_to_annual();
        }
        if p.status == WorkStatus::Unemployed && !on_pup && p.age >= tax.unemployment_min_age && p.age < tax.pension_age
        {
            weekly += tax.unemployment;
        }
        if p.sick && !on_ceib {
            weekly += tax.illness;
        }
        if p.age >= tax.pension_age {
            weekly += tax.state_pension;
        }
        if p.age < tax.child_age_limit {
            children += 1;
        }
        out.market += p.market_annual().annual_to_monthly();
        out.taxes += tax.income_tax(taxable).annual_to_monthly();
        out.benefits += (weekly + covid_weekly).weekly_to_monthly();
        out.covid_benefits += covid_weekly.weekly_to_monthly();
    }
    out.benefits += Cents(tax.child_benefit.0 * children);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn e(x: f64) -> Cents {
        Cents::from_euros(x)
    }

    fn sched() -> Schedules {
        Schedules::parse(SCHEDULES_FILE, crate::data::SCHEDULES).unwrap()
    }

    #[test]
    fn pup_examples() {
        let s = sched();
        assert_eq!(s.pup_rate(e(150.0), d("2020-03-15")).unwrap(), e(203.0));
        assert_eq!(s.pup_rate(e(900.0), d("2020-03-15")).unwrap(), e(203.0));
        assert_eq!(s.pup_rate(e(150.0), d("2020-05-05")).unwrap(), e(350.0));
        assert_eq!(s.pup_rate(e(450.0), d("2020-11-15")).unwrap(), e(350.0));
        assert_eq!(s.pup_rate(e(150.0), d("2021-02-15")).unwrap(), e(203.0));
        assert_eq!(s.pup_rate(e(300.0), d("2021-02-15")).unwrap(), e(203.0));
        assert_eq!(s.pup_rate(e(300.01), d("2021-02-15")).unwrap(), e(250.0));
        assert_eq!(s.pup_rate(e(350.0), d("2020-10-20")).unwrap(), e(300.0));
        assert!(matches!(s.pup_rate(e(100.0), d("2020-03-12")), Err(Error::OutOfSchedule { .. })));
        assert!(s.pup_rate(e(-1.0), d("2020-05-05")).is_err());
    }

    #[test]
    fn ceib_examples() {
        let s = sched();
        assert_eq!(s.ceib_rate(d("2020-05-05")).unwrap(), e(350.0));
        assert_eq!(s.ceib_rate(d("2020-03-15")).unwrap(), e(203.0));
        assert_eq!(s.ceib_rate(d("2020-11-15")).unwrap(), e(350.0));
        assert_eq!(s.ceib_rate_for(Some(e(250.0)), d("2020-11-15")).unwrap(), e(250.0));
        assert_eq!(s.ceib_rate_for(None, d("2020-11-15")).unwrap(), e(350.0));
    }

    #[test]
    fn twss_examples() {
        let s = sched();
        assert_eq!(s.twss_subsidy(e(500.0), d("2020-04-01")).unwrap(), e(350.0));
        assert_eq!(s.twss_subsidy(e(1000.0), d("2020-04-01")).unwrap(), e(0.0));
        assert_eq!(s.twss_subsidy(e(400.0), d("2020-05-01")).unwrap(), e(340.0));
        assert_eq!(s.twss_subsidy(e(586.0), d("2020-04-01")).unwrap(), e(410.0));
        assert_eq!(s.twss_subsidy(e(700.0), d("2020-04-01")).unwrap(), e(350.0));
        assert_eq!(s.twss_subsidy(e(800.0), d("2020-03-20")).unwrap(), e(203.0));
        assert_eq!(s.twss_subsidy(e(450.0), d("2020-05-01")).unwrap(), e(350.0));
        assert_eq!(s.twss_subsidy(e(1211.0), d("2020-05-01")).unwrap(), e(175.0));
        assert!(s.twss_subsidy(e(400.0), d("2020-09-01")).is_err());
        assert!(s.twss_subsidy(e(400.0), d("2020-03-01")).is_err());
    }

    #[test]
    fn ewss_examples() {
        let s = sched();
        assert_eq!(s.ewss_subsidy(e(180.0), d("2020-08-01")).unwrap(), e(151.5));
        assert_eq!(s.ewss_subsidy(e(180.0), d("2020-11-01")).unwrap(), e(203.0));
        for date in ["2020-08-01", "2020-11-01"] {
            assert_eq!(s.ewss_subsidy(e(2000.0), d(date)).unwrap(), e(0.0));
            assert_eq!(s.ewss_subsidy(e(100.0), d(date)).unwrap(), e(0.0));
            assert_eq!(
                s.ewss_subsidy(e(1462.0), d(date)).unwrap(),
                e(if date == "2020-08-01" { 203.0 } else { 350.0 })
            );
        }
    }

    #[test]
    fn pup_steps_non_decreasing_from_june() {
        let s = sched();
        for r in s.pup.regimes.iter().filter(|r| r.effective_from >= d("2020-06-29")) {
            let pays: Vec<Cents> = r.bands.iter().map(|b| b.rule.apply(b.lower)).collect();
            assert!(pays.windows(2).all(|w| w[0] <= w[1]), "{pays:?}");
        }
    }

    #[test]
    fn schedule_errors_are_collected() {
        let text = "scheme,effective_from,band_lower,value
pup,2020-03-13,10.00,203.00
pup,2020-03-14,0.00,abc
foo,2020-03-14,0.00,1
ewss,2020-07-01,0.00,rate:0.5
twss,2020-07-01,0.00,none
";
        match Schedules::parse("s.csv", text).unwrap_err() {
            Error::Validation(r) => assert!(r.0.len() >= 4, "{r}"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn income_tax_examples() {
        let t = TaxSystem::simple(&[(0.0, 0.2)], 0.0, 0.0, 0.0).unwrap();
        assert_eq!(t.income_tax(Cents::ZERO), Cents::ZERO);
        assert_eq!(t.income_tax(e(100.0)), e(20.0));
        let two = TaxSystem::simple(&[(0.0, 0.2), (100.0, 0.4)], 10.0, 0.0, 0.0).unwrap();
        assert_eq!(two.income_tax(e(150.0)), e(20.0 + 20.0 - 10.0));
        assert_eq!(two.income_tax(e(20.0)), Cents::ZERO);
        assert!(TaxSystem::simple(&[(5.0, 0.2)], 0.0, 0.0, 0.0).is_err());
        assert!(TaxSystem::simple(&[(0.0, 1.2)], 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn shipped_tax_system() {
        let t = TaxSystem::parse(TAX_SYSTEM_FILE, crate::data::TAX_SYSTEM).unwrap();
        assert_eq!(t.bands.len(), 2);
        assert_eq!(t.top_rate(), 400_000);
        // 20% of 35300 + 40% of 4700 − 3300 + 4% of (40000 − 18304)
        assert_eq!(t.income_tax(e(40000.0)), e(7060.0 + 1880.0 - 3300.0 + 867.84));
        assert!(TaxSystem::parse("t.cfg", "[income_tax]\nband.0 = x\n").is_err());
    }

    fn person(id: u64, age: u32, status: WorkStatus, covid: CovidState) -> PersonState {
        PersonState {
            person_id: id,
            age,
            status,
            covid,
            sick: false,
            employment: Cents::ZERO,
            self_employment: Cents::ZERO,
            capital: Cents::ZERO,
            private_pension: Cents::ZERO,
            prev_weekly_earnings: e(500.0),
            wage_subsidy: Cents::ZERO,
        }
    }

    #[test]
    fn household_examples() {
        let p = Policy::shipped();
        let date = d("2020-05-05");
        let h = [person(1, 40, WorkStatus::Unemployed, CovidState::PupRecipient)];
        let tb = household_t_and_b(&h, date, PolicyState::ON, &p).unwrap();
        assert_eq!(tb.benefits, e(350.0).weekly_to_monthly());
        assert_eq!(tb.taxes, Cents::ZERO);
        let off = household_t_and_b(&h, date, PolicyState::OFF, &p).unwrap();
        assert_eq!(off.benefits, e(203.0).weekly_to_monthly());

        let empty = [person(2, 30, WorkStatus::Inactive, CovidState::None)];
        assert_eq!(household_t_and_b(&empty, date, PolicyState::ON, &p).unwrap().taxes, Cents::ZERO);
    }

    #[test]
    fn switch_off_identity() {
        let p = Policy::shipped();
        let mut w = person(1, 45, WorkStatus::Employee, CovidState::WageSubsidised);
        w.employment = e(30000.0);
        w.wage_subsidy = e(350.0);
        let mut c = person(2, 12, WorkStatus::Child, CovidState::None);
        c.capital = e(10.0);
        let mut s = person(3, 50, WorkStatus::Employee, CovidState::CeibRecipient);
        s.sick = true;
        let h = vec![w, c, s];
        let baseline: Vec<PersonState> = h
            .iter()
            .cloned()
            .map(|mut x| {
                x.covid = CovidState::None;
                x
            })
            .collect();
        let a = household_t_and_b(&h, d("2020-06-06"), PolicyState::OFF, &p).unwrap();
        let b = household_t_and_b(&baseline, d("2019-12-31"), PolicyState::ON, &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.covid_benefits, Cents::ZERO);
    }

    #[test]
    fn wage_subsidy_switches_scheme() {
        let p = Policy::shipped();
        assert_eq!(p.wage_subsidy(e(52.0 * 180.0), d("2020-10-01")).unwrap(), e(151.5));
        assert!(p.wage_subsidy(e(30000.0), d("2020-05-05")).unwrap().is_positive());
    }

    #[test]
    fn fractions() {
        assert_eq!(parse_fraction("0.85"), Some(850_000));
        assert_eq!(parse_fraction("1"), Some(PPM));
        assert_eq!(parse_fraction(".5"), Some(500_000));
        assert_eq!(parse_fraction("-0.1"), None);
        assert_eq!(parse_fraction("0.1234567"), None);
    }
}
