use std::collections::BTreeSet;

use chrono::{Days, NaiveDate};
use proptest::prelude::*;

use nowcast_core::calibration::{align_binary, ipf, SeedMatrix, Unit, IPF_MAX_ITER, IPF_TOL};
use nowcast_core::metrics::{assign_deciles, weighted_gini};
use nowcast_core::population::{generate_synthetic, SynthConfig};
use nowcast_core::rng::KeyedRng;
use nowcast_core::scenario::{nowcast_baseline, ControlTotals, Engine, ModelData, Scenario};
use nowcast_core::taxben::Policy;
use nowcast_core::{data, Cents};

fn day(offset: u64) -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 3, 13).unwrap() + Days::new(offset)
}

proptest! {
    #[test]
    fn cents_round_trip(c in -1_000_000_000i64..1_000_000_000) {
        prop_assert_eq!(Cents::from_euros(Cents(c).to_euros()), Cents(c));
    }

    #[test]
    fn period_conversions_are_monotone(a in 0i64..100_000_000, b in 0i64..100_000_000) {
        let (lo, hi) = (Cents(a.min(b)), Cents(a.max(b)));
        prop_assert!(lo.weekly_to_monthly() <= hi.weekly_to_monthly());
        prop_assert!(lo.annual_to_monthly() <= hi.annual_to_monthly());
        prop_assert!((Cents(a).weekly_to_monthly().0 as f64 - a as f64 * 52.0 / 12.0).abs() <= 0.5);
    }

    #[test]
    fn gini_is_a_proportion(rows in prop::collection::vec((0.0f64..1e6, 0.01f64..10.0), 1..60)) {
        let x: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let w: Vec<f64> = rows.iter().map(|r| r.1).collect();
        if x.iter().any(|v| *v > 0.0) {
            let g = weighted_gini(&x, &w).unwrap();
            prop_assert!((0.0..1.0).contains(&g), "gini {}", g);
        }
    }

    #[test]
    fn deciles_rank_incomes(rows in prop::collection::vec((-1e4f64..1e5, 0.1f64..5.0), 1..200)) {
        let units: Vec<(u64, f64, f64)> = rows.iter().enumerate().map(|(i, r)| (i as u64, r.0, r.1)).collect();
        let dec = assign_deciles(&units);
        prop_assert!(dec.iter().all(|d| (1..=10).contains(d)));
        for i in 0..units.len() {
            for j in 0..units.len() {
                if units[i].1 < units[j].1 {
                    prop_assert!(dec[i] <= dec[j]);
                }
            }
        }
    }

    #[test]
    fn alignment_stays_within_one_unit(
        rows in prop::collection::vec((0.001f64..0.999, 0.1f64..5.0), 1..80),
        share in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let units: Vec<Unit> = rows.iter().enumerate().map(|(i, r)| Unit { id: i as u64, prob: r.0, weight: r.1 }).collect();
        let total: f64 = units.iter().map(|u| u.weight).sum();
        let max_w = units.iter().map(|u| u.weight).fold(0.0, f64::max);
        let chosen: BTreeSet<u64> = align_binary(&units, share * total, &KeyedRng::new(seed), "p").unwrap();
        let got: f64 = units.iter().filter(|u| chosen.contains(&u.id)).map(|u| u.weight).sum();
        prop_assert!((got - share * total).abs() <= max_w + 1e-9);
    }

    #[test]
    fn ipf_reaches_feasible_marginals(
        truth in prop::collection::vec(prop::collection::vec(0.1f64..50.0, 4), 3),
        seed in prop::collection::vec(prop::collection::vec(0.1f64..5.0, 4), 3),
    ) {
        let t = SeedMatrix::new(truth);
        let fit = ipf(&SeedMatrix::new(seed), &t.row_sums(), &t.col_sums(), IPF_TOL, IPF_MAX_ITER).unwrap();
        for (a, b) in fit.matrix.row_sums().iter().zip(t.row_sums()) {
            prop_assert!((a - b).abs() <= 1e-8);
        }
        for (a, b) in fit.matrix.col_sums().iter().zip(t.col_sums()) {
            prop_assert!((a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn pup_is_defined_and_nondecreasing(a in 0i64..300_000, b in 0i64..300_000, offset in 0u64..500) {
        let s = &Policy::shipped().schedules;
        let date = day(offset);
        let lo = s.pup_rate(Cents(a.min(b)), date).unwrap();
        let hi = s.pup_rate(Cents(a.max(b)), date).unwrap();
        prop_assert!(lo <= hi);
        prop_assert!(lo >= Cents::euros(203) && hi <= Cents::euros(350));
    }

    #[test]
    fn wage_subsidies_are_defined_in_their_lives(x in 0i64..300_000, offset in 0u64..400) {
        let s = &Policy::shipped().schedules;
        let date = day(offset);
        let twss = s.twss_subsidy(Cents(x), date);
        let ewss = s.ewss_subsidy(Cents(x), date);
        prop_assert_eq!(twss.is_ok(), date < NaiveDate::from_ymd_opt(2020, 9, 1).unwrap());
        prop_assert_eq!(ewss.is_ok(), date >= NaiveDate::from_ymd_opt(2020, 7, 1).unwrap());
        for v in [twss, ewss].into_iter().flatten() {
            prop_assert!(v >= Cents::ZERO && v <= Cents::euros(410));
        }
    }

    #[test]
    fn tax_is_monotone_and_bounded(a in 0i64..50_000_000, b in 0i64..50_000_000) {
        let tax = &Policy::shipped().tax;
        let (lo, hi) = (Cents(a.min(b)), Cents(a.max(b)));
        let (tl, th) = (tax.income_tax(lo), tax.income_tax(hi));
        prop_assert!(tl <= th);
        prop_assert!(th - tl <= hi - lo);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn more_pup_recipients_cost_more(shrink in 0.2f64..0.95, seed in 0u64..1000) {
        let cfg = SynthConfig { households: 1500, ..SynthConfig::parse(data::SYNTH).unwrap() };
        let pop = generate_synthetic(&cfg, seed).unwrap();
        let model = ModelData::shipped();
        let base = Scenario::shipped();
        let wave = base.waves[0].clone();
        let mut smaller = base.clone();
        let mut controls = ControlTotals::default();
        for key in base.controls.keys() {
            for &(d, v) in base.controls.series(key) {
                let v = if key.starts_with("pup:") { v * shrink } else { v };
                controls.insert(key, d, v).unwrap();
            }
        }
        smaller.controls = controls;
        let cost = |s: &Scenario| -> Option<f64> {
            let now = nowcast_baseline(&pop, s, &model, &KeyedRng::new(s.seed)).unwrap();
            let engine = Engine::new(now, &model, s).unwrap();
            let mut shock = engine.assign(&wave).ok()?;
            shock.switches.ceib = false;
            shock.switches.wage_subsidy = false;
            let r = engine.evaluate(&wave.label, wave.date, &shock).unwrap();
            Some(r.households.iter().zip(engine.population().households()).map(|(x, h)| x.covid_benefits.to_euros() * h.weight).sum())
        };
        let full = cost(&base);
        prop_assume!(full.is_some());
        prop_assert!(full >= cost(&smaller));
    }
}
