use chrono::NaiveDate;

use nowcast_core::population::{generate_synthetic, CovidState, Population, SynthConfig};
use nowcast_core::rng::KeyedRng;
use nowcast_core::scenario::{
    compare, employment_band, nowcast_baseline, run, ControlTotals, Engine, ModelData, Scenario, EMPLOYMENT_BANDS,
};
use nowcast_core::{data, Cents, Error};

fn d(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

fn population(households: i64, seed: u64) -> Population {
    let cfg = SynthConfig { households, ..SynthConfig::parse(data::SYNTH).unwrap() };
    generate_synthetic(&cfg, seed).unwrap()
}

fn employed_weight(pop: &Population, band: usize) -> (f64, f64) {
    let mut workers = 0.0;
    let mut all = 0.0;
    for (h, hh) in pop.households().iter().enumerate() {
        for p in pop.members(h) {
            if employment_band(p.age) == Some(band) {
                all += hh.weight;
                if p.work_status.is_worker() {
                    workers += hh.weight;
                }
            }
        }
    }
    (workers, all)
}

#[test]
fn pup_counts_match_scaled_targets() {
    let pop = population(4000, 3);
    let scenario = Scenario::shipped();
    let model = ModelData::shipped();
    let base = nowcast_baseline(&pop, &scenario, &model, &KeyedRng::new(scenario.seed)).unwrap();
    let engine = Engine::new(base, &model, &scenario).unwrap();
    let wave = &scenario.waves[0];
    let shock = engine.assign(wave).unwrap();
    let pop = engine.population();
    for (&sector, &national) in &scenario.reference.employment {
        let Some(count) = scenario.controls.at(&format!("pup:{}", sector.code()), wave.date) else { continue };
        let mut workers = 0.0;
        let mut chosen = 0.0;
        let mut max_w: f64 = 0.0;
        for (i, p) in pop.persons().iter().enumerate() {
            if p.work_status.is_worker() && p.industry == Some(sector) {
                let w = pop.household(p.household_id).unwrap().weight;
                workers += w;
                max_w = max_w.max(w);
                if shock.covid[i] == CovidState::PupRecipient {
                    chosen += w;
                }
            }
        }
        let target = count * workers / national;
        assert!((chosen - target).abs() <= max_w + 1e-9, "{}: {chosen} vs {target}", sector.code());
    }
}

#[test]
fn pup_payments_follow_the_schedule() {
    let pop = population(1500, 4);
    let scenario = Scenario::shipped();
    let model = ModelData::shipped();
    let base = nowcast_baseline(&pop, &scenario, &model, &KeyedRng::new(scenario.seed)).unwrap();
    let engine = Engine::new(base, &model, &scenario).unwrap();
    let on = scenario.waves.iter().find(|w| w.date == d("2020-11-15")).unwrap();
    let mut shock = engine.assign(on).unwrap();
    shock.switches.ceib = false;
    shock.switches.wage_subsidy = false;
    let r = engine.evaluate(&on.label, on.date, &shock).unwrap();
    let pop = engine.population();
    for (h, inc) in r.households.iter().enumerate() {
        let mut want = Cents::ZERO;
        for &i in pop.member_positions(h) {
            if shock.covid[i] == CovidState::PupRecipient {
                let p = &pop.persons()[i];
                let weekly = Cents::from_euros(p.earnings()).annual_to_weekly();
                want += model.policy.schedules.pup_rate(weekly, on.date).unwrap().weekly_to_monthly();
            }
        }
        assert_eq!(inc.covid_benefits, want, "household {}", inc.household_id);
    }
}

#[test]
fn a_result_compared_with_itself_is_zero() {
    let pop = population(800, 5);
    let out = run(&pop, &Scenario::shipped(), &ModelData::shipped()).unwrap();
    let w = &out.waves[1].result;
    let delta = compare(w, w, &out.deciles).unwrap();
    assert_eq!(delta.means, [0.0; 4]);
    assert_eq!(delta.gini, [0.0; 4]);
    assert!(delta.deciles.iter().all(|x| *x == [0.0; 4]));
}

#[test]
fn nowcast_hits_employment_targets() {
    let pop = population(3000, 6);
    let model = ModelData::shipped();
    let mut scenario = Scenario::shipped();
    let rates: Vec<f64> = (0..EMPLOYMENT_BANDS.len())
        .map(|b| {
            let (w, all) = employed_weight(&pop, b);
            (w / all + 0.05).min(1.0)
        })
        .collect();
    let mut controls = ControlTotals::default();
    for (b, r) in rates.iter().enumerate() {
        controls.insert(&format!("employment_rate:{}", EMPLOYMENT_BANDS[b]), scenario.baseline_date, *r).unwrap();
    }
    scenario.controls = controls;
    let now = nowcast_baseline(&pop, &scenario, &model, &KeyedRng::new(11)).unwrap();
    let max_w = now.households().iter().map(|h| h.weight).fold(0.0, f64::max);
    for (b, r) in rates.iter().enumerate() {
        let (w, all) = employed_weight(&now, b);
        assert!((w - r * all).abs() <= max_w + 1e-9, "band {}: {w} vs {}", EMPLOYMENT_BANDS[b], r * all);
    }
}

#[test]
fn unknown_sector_is_rejected() {
    let text = "stratum_key,date,target\npup:space_mining,2020-05-05,100\n";
    match ControlTotals::parse("controls.csv", text) {
        Err(Error::Validation(report)) => {
            assert!(report.0.iter().any(|v| v.to_string().contains("space_mining")), "{report:?}");
        }
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn scenario_config_round_trips() {
    let s = Scenario::shipped();
    let again = Scenario::parse("scenario.cfg", &s.to_config(), None).unwrap();
    assert_eq!(s, again);
}
