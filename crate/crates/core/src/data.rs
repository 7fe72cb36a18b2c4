//! Shipped input files.

pub const SCHEDULES: &str = include_str!("../data/schedules.csv");
pub const TAX_SYSTEM: &str = include_str!("../data/tax_system.cfg");
pub const COEFFICIENTS: &str = include_str!("../data/coefficients.csv");
pub const COMMUTE: &str = include_str!("../data/commute.csv");
pub const CHILDCARE: &str = include_str!("../data/childcare.csv");
pub const CAPITAL_PARTICIPATION: &str = include_str!("../data/capital_participation.csv");
pub const CAPITAL_HOLDINGS: &str = include_str!("../data/capital_holdings.csv");
pub const CONTROLS: &str = include_str!("../data/controls.csv");
pub const NATIONAL_REFERENCE: &str = include_str!("../data/national_reference.csv");
pub const SCENARIO: &str = include_str!("../data/scenario.cfg");
pub const SYNTH: &str = include_str!("../data/synth.cfg");
