//! Run manifest: everything that can change a number in the output.

use std::path::Path;

use sha2::{Digest, Sha256};

use nowcast_core::expenses::{CAPITAL_HOLDINGS_FILE, CAPITAL_PARTICIPATION_FILE, CHILDCARE_FILE, COMMUTE_FILE};
use nowcast_core::scenario::{Scenario, COEFFICIENTS_FILE, CONTROLS_FILE, REFERENCE_FILE};
use nowcast_core::taxben::{SCHEDULES_FILE, TAX_SYSTEM_FILE};
use nowcast_core::{data, Error};

use crate::PopulationSource;

pub struct Manifest {
    entries: Vec<(String, String)>,
}

fn digest(parts: &[(&str, &str)]) -> String {
    let mut h = Sha256::new();
    for (name, body) in parts {
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        h.update((body.len() as u64).to_le_bytes());
        h.update(body.as_bytes());
    }
    hex::encode(h.finalize())
}

/// The file that is actually read: the override if present, else the shipped copy.
fn effective(dir: Option<&Path>, name: &str, shipped: &str) -> Result<String, Error> {
    match dir.map(|d| d.join(name)).filter(|p| p.exists()) {
        Some(p) => std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e)),
        None => Ok(shipped.to_string()),
    }
}

fn source_text(source: &str, shipped: &str) -> Result<String, Error> {
    if source == "shipped" {
        Ok(shipped.to_string())
    } else {
        let p = Path::new(source);
        std::fs::read_to_string(p).map_err(|e| Error::io(p, e))
    }
}

impl Manifest {
    pub fn build(
        scenario: &Scenario,
        population: &PopulationSource,
        data_dir: Option<&Path>,
        policy_dir: Option<&Path>,
    ) -> Result<Manifest, Error> {
        let mut entries = vec![
            ("version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("seed".to_string(), scenario.seed.to_string()),
            ("scenario".to_string(), digest(&[("scenario", &scenario.to_config())])),
        ];
        let controls = source_text(&scenario.controls_source, data::CONTROLS)?;
        let reference = source_text(&scenario.reference_source, data::NATIONAL_REFERENCE)?;
        entries.push((CONTROLS_FILE.into(), digest(&[(CONTROLS_FILE, &controls)])));
        entries.push((REFERENCE_FILE.into(), digest(&[(REFERENCE_FILE, &reference)])));

        match population {
            PopulationSource::Directory(dir) => {
                for name in ["households.csv", "persons.csv", "population.cfg"] {
                    let p = dir.join(name);
                    let body = if p.exists() {
                        std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?
                    } else {
                        String::new()
                    };
                    entries.push((format!("population/{name}"), digest(&[(name, &body)])));
                }
            }
            PopulationSource::Synthetic { config, .. } => {
                entries.push(("population/synth.cfg".into(), digest(&[("synth.cfg", config)])));
            }
        }

        let files: [(&str, &str); 5] = [
            (COEFFICIENTS_FILE, data::COEFFICIENTS),
            (COMMUTE_FILE, data::COMMUTE),
            (CHILDCARE_FILE, data::CHILDCARE),
            (CAPITAL_PARTICIPATION_FILE, data::CAPITAL_PARTICIPATION),
            (CAPITAL_HOLDINGS_FILE, data::CAPITAL_HOLDINGS),
        ];
        for (name, shipped) in files {
            let body = effective(data_dir, name, shipped)?;
            entries.push((format!("data/{name}"), digest(&[(name, &body)])));
        }

        let schedules = effective(policy_dir, SCHEDULES_FILE, data::SCHEDULES)?;
        let tax = effective(policy_dir, TAX_SYSTEM_FILE, data::TAX_SYSTEM)?;
        entries.push(("policy".into(), digest(&[(SCHEDULES_FILE, &schedules), (TAX_SYSTEM_FILE, &tax)])));

        for w in &scenario.waves {
            let s = w.switches;
            let on: Vec<&str> = [
                ("pup", s.pup),
                ("ceib", s.ceib),
                ("wage_subsidy", s.wage_subsidy),
                ("childcare_support", s.childcare_support),
                ("deferrals", s.deferrals),
                ("home_working", s.home_working),
            ]
            .into_iter()
            .filter(|x| x.1)
            .map(|x| x.0)
            .collect();
            entries.push((format!("wave {}", w.date), format!("{}; {}", w.label, on.join(","))));
        }
        Ok(Manifest { entries })
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
