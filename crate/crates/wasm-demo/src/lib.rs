//! Browser bindings: schedule lookups and a one-wave run on a synthetic population.

use chrono::NaiveDate;
use serde_json::json;
use wasm_bindgen::prelude::*;

use nowcast_core::metrics::{summarize, DEFINITIONS};
use nowcast_core::population::{generate_synthetic, Population, SynthConfig};
use nowcast_core::rng::KeyedRng;
use nowcast_core::scenario::{nowcast_baseline, Engine, ModelData, Scenario, WaveSpec};
use nowcast_core::taxben::Policy;
use nowcast_core::{data, Cents};

fn date(s: &str) -> Result<NaiveDate, String> {
    s.parse().map_err(|_| format!("`{s}` is not a date (YYYY-MM-DD)"))
}

/// Weekly rate in euro for `pup`, `ceib`, `twss` or `ewss`.
pub fn schedule_rate(instrument: &str, weekly: f64, on: &str) -> Result<f64, String> {
    let policy = Policy::shipped();
    let s = &policy.schedules;
    let (x, d) = (Cents::from_euros(weekly), date(on)?);
    let r = match instrument {
        "pup" => s.pup_rate(x, d),
        "ceib" => s.ceib_rate_for(Some(x), d),
        "twss" => s.twss_subsidy(x, d),
        "ewss" => s.ewss_subsidy(x, d),
        other => return Err(format!("unknown instrument `{other}`")),
    };
    r.map(Cents::to_euros).map_err(|e| e.to_string())
}

pub struct Model {
    pop: Population,
    data: ModelData,
    scenario: Scenario,
}

impl Model {
    pub fn build(households: u32, seed: u64) -> Result<Model, String> {
        let cfg = SynthConfig {
            households: households as i64,
            ..SynthConfig::parse(data::SYNTH).map_err(|e| e.to_string())?
        };
        let raw = generate_synthetic(&cfg, seed).map_err(|e| e.to_string())?;
        let mut scenario = Scenario::shipped();
        scenario.seed = seed;
        let data = ModelData::shipped();
        let pop = nowcast_baseline(&raw, &scenario, &data, &KeyedRng::new(seed)).map_err(|e| e.to_string())?;
        Ok(Model { pop, data, scenario })
    }

    pub fn wave_labels(&self) -> Vec<String> {
        self.scenario.waves.iter().map(|w| w.label.clone()).collect()
    }

    /// Gini and mean of each income definition before and at one wave.
    pub fn compare(&self, wave: usize, instruments: bool) -> Result<serde_json::Value, String> {
        let w = self.scenario.waves.get(wave).ok_or_else(|| format!("no wave {wave}"))?;
        let w = if instruments { w.clone() } else { WaveSpec { switches: w.switches.instruments_off(), ..w.clone() } };
        let engine = Engine::new(self.pop.clone(), &self.data, &self.scenario).map_err(|e| e.to_string())?;
        let deciles = engine.deciles();
        let before = summarize(&engine.baseline().persons, &deciles).map_err(|e| e.to_string())?;
        let after = engine.apply_wave(&w).map_err(|e| e.to_string())?;
        let after = summarize(&after.persons, &deciles).map_err(|e| e.to_string())?;
        let rows: Vec<_> = DEFINITIONS
            .iter()
            .enumerate()
            .map(|(k, name)| {
                json!({
                    "definition": name,
                    "gini_before": before.gini[k],
                    "gini_after": after.gini[k],
                    "mean_before": before.means[k],
                    "mean_after": after.means[k],
                })
            })
            .collect();
        Ok(json!({ "wave": w.label, "date": w.date.to_string(), "instruments": instruments, "rows": rows }))
    }
}

#[wasm_bindgen(js_name = scheduleRate)]
pub fn schedule_rate_js(instrument: &str, weekly: f64, on: &str) -> Result<f64, JsError> {
    schedule_rate(instrument, weekly, on).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub struct Demo {
    model: Model,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(households: u32, seed: u64) -> Result<Demo, JsError> {
        Model::build(households, seed).map(|model| Demo { model }).map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen(js_name = waveLabels)]
    pub fn wave_labels(&self) -> Vec<String> {
        self.model.wave_labels()
    }

    /// JSON with one row per income definition.
    pub fn compare(&self, wave: usize, instruments: bool) -> Result<String, JsError> {
        self.model.compare(wave, instruments).map(|v| v.to_string()).map_err(|e| JsError::new(&e))
    }
}
